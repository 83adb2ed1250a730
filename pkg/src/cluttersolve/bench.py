"""Benchmark suites: generate scenes, run planner variants, score against the oracle, report."""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .direction import propose_directions
from .dynamics import GeometricPredictor, OracleBackedPredictor
from .generator import GenerationOverflow, generate_clutter, get_preset, scene_rng
from .graph import transitive_closure
from .observation import CameraConfig, observe
from .physics import DEFAULT_SIM, execute_retrieval, oracle_movement, oracle_support_graph, removal_movement
from .scene import SceneState
from .solver import VARIANTS, SolverConfig, run_episode

METRICS = (
    "retrieval_success_rate",
    "relation_prediction_success_rate",
    "retrieval_direction_success_rate",
    "accumulated_displacement_mean",
    "retrieval_steps_mean",
    "query_count_mean",
)
DEFAULT_N_RANGE = (8, 15)


@dataclass(frozen=True)
class Stat:
    mean: float
    stderr: float
    n: int

    @classmethod
    def of(cls, values: Iterable[float]) -> "Stat":
        v = np.asarray([x for x in values if not math.isnan(x)], dtype=float)
        if len(v) == 0:
            return cls(math.nan, math.nan, 0)
        se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        return cls(float(v.mean()), se, int(len(v)))


@dataclass
class MetricSet:
    retrieval_success_rate: Stat
    relation_prediction_success_rate: Stat
    retrieval_direction_success_rate: Stat
    accumulated_displacement_mean: Stat
    retrieval_steps_mean: Stat
    query_count_mean: Stat

    def get(self, name: str) -> Stat:
        return getattr(self, name)


@dataclass
class EpisodeScore:
    """What the suite keeps from one episode (small and picklable)."""
    preset: str
    index: int
    variant: str
    scene_digest: str
    success: bool
    accumulated_displacement: float
    steps: int
    queries: int
    expanded_degree_sum: int
    relation_rate: float
    direction_rate: float
    failure: str = ""


@dataclass
class SuiteResult:
    metrics: Dict[Tuple[str, str], MetricSet]
    episodes: List[EpisodeScore] = field(default_factory=list)
    presets: List[str] = field(default_factory=list)
    variants: List[str] = field(default_factory=list)


class _Audit:
    """Scores each planned step against the simulator before it is executed."""

    def __init__(self, th_move: float, dir_cfg, direction_metric: bool):
        self.th = th_move
        self.dirs = propose_directions(dir_cfg)
        self.tie_tol = dir_cfg.tie_tol
        self.direction_metric = direction_metric
        self.rel_ok = 0
        self.rel_n = 0
        self.dir_ok = 0
        self.dir_n = 0

    def __call__(self, scene: SceneState, cand: int, d, queries) -> None:
        cache: Dict[int, Dict[int, float]] = {}
        for q in queries:
            if q.mover not in cache:
                cache[q.mover] = removal_movement(scene, q.mover)
            truth = cache[q.mover].get(q.neighbor, 0.0) > self.th
            self.rel_n += 1
            self.rel_ok += int(truth == q.moves)
        if self.direction_metric:
            totals = [sum(oracle_movement(scene, cand, v).values()) for v in self.dirs]
            chosen = sum(oracle_movement(scene, cand, d).values())
            self.dir_n += 1
            self.dir_ok += int(chosen <= min(totals) * (1.0 + self.tie_tol) + 1e-12)

    def rates(self) -> Tuple[float, float]:
        rel = self.rel_ok / self.rel_n if self.rel_n else math.nan
        dr = self.dir_ok / self.dir_n if self.dir_n else math.nan
        return rel, dr


def scene_seed(seed: int, preset: str, index: int) -> int:
    return int(seed) * 1_000_003 + index * 7_919 + sum(map(ord, preset))


def suite_scene(preset: str, seed: int, index: int, n_range: Tuple[int, int] = DEFAULT_N_RANGE) -> SceneState:
    """Deterministic scene for slot ``index`` of a suite.

    Other seeds are tried on generation overflow or when the target is not
    visible from the default camera (nothing to plan from).
    """
    base = scene_seed(seed, preset, index)
    for attempt in range(16):
        s = base + attempt * 104_729
        n = int(scene_rng(preset, 0, s).integers(n_range[0], n_range[1] + 1))
        try:
            scene = generate_clutter(get_preset(preset), n, s)
        except GenerationOverflow:
            continue
        if scene.target_id in observe(scene, CameraConfig()).ids:
            return scene
    raise GenerationOverflow(f"generation overflow: suite slot {preset}/{index} (seed={seed})")


@dataclass(frozen=True)
class SuiteSpec:
    seed: int = 0
    predictor: str = "geometric"
    full_observation: bool = False
    n_range: Tuple[int, int] = DEFAULT_N_RANGE
    direction_metric: bool = True
    relation_metric: bool = True
    solver: SolverConfig = SolverConfig()
    camera: CameraConfig = CameraConfig()


def _run_slot(args) -> List[EpisodeScore]:
    preset, index, variants, spec = args
    scene = suite_scene(preset, spec.seed, index, spec.n_range)
    out = []
    for v in variants:
        cfg = replace(spec.solver, variant=v, full_observation=spec.full_observation)
        if spec.predictor == "oracle":
            pred = OracleBackedPredictor(scene, cfg.sim)
        else:
            pred = GeometricPredictor(th_move=cfg.th_move, h=scene.h)
        audit = _Audit(cfg.th_move, cfg.direction, spec.direction_metric) \
            if (spec.direction_metric or spec.relation_metric) else None
        rep = run_episode(scene, spec.camera, cfg, pred, audit)
        rel, dr = audit.rates() if audit else (math.nan, math.nan)
        if not spec.relation_metric:
            rel = math.nan
        out.append(EpisodeScore(preset, index, v, rep.scene_digest, rep.success, rep.accumulated_displacement,
                                rep.n_steps, rep.total_queries, rep.expanded_degree_sum, rel, dr, rep.failure))
    return out


def run_suite(presets: Sequence[str], scenes_per_preset: int, seed: int, variants: Sequence[str],
              spec: Optional[SuiteSpec] = None, workers: int = 1) -> SuiteResult:
    if not variants:
        raise ValueError("no variants")
    if not presets:
        raise ValueError("no presets")
    if scenes_per_preset < 1:
        raise ValueError("scenes_per_preset must be >= 1")
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    for p in presets:
        get_preset(p)
    spec = replace(spec or SuiteSpec(), seed=seed)
    tasks = [(p, k, tuple(variants), spec) for p in presets for k in range(scenes_per_preset)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(_run_slot, tasks))
    else:
        chunks = [_run_slot(t) for t in tasks]
    episodes = sorted((e for c in chunks for e in c), key=lambda e: (e.preset, e.index, variants.index(e.variant)))
    return SuiteResult(aggregate(episodes, presets, variants), episodes, list(presets), list(variants))


def aggregate(episodes: List[EpisodeScore], presets: Sequence[str], variants: Sequence[str]) -> Dict[Tuple[str, str], MetricSet]:
    """Per (preset, variant) metrics; step counts only over scenes every variant solved."""
    out = {}
    for p in presets:
        eps = [e for e in episodes if e.preset == p]
        solved_all = {k for k in {e.index for e in eps}
                      if all(e.success for e in eps if e.index == k)}
        for v in variants:
            ev = sorted((e for e in eps if e.variant == v), key=lambda e: e.index)
            out[(p, v)] = MetricSet(
                Stat.of(float(e.success) for e in ev),
                Stat.of(e.relation_rate for e in ev),
                Stat.of(e.direction_rate for e in ev),
                Stat.of(e.accumulated_displacement for e in ev),
                Stat.of(float(e.steps) for e in ev if e.index in solved_all),
                Stat.of(float(e.queries) for e in ev),
            )
    return out


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def report_csv(result: SuiteResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["preset", "variant", "metric", "mean", "stderr", "n"])
    for p in result.presets:
        for v in result.variants:
            ms = result.metrics[(p, v)]
            for m in METRICS:
                s = ms.get(m)
                w.writerow([p, v, m, _num(s.mean), _num(s.stderr), s.n])
    return buf.getvalue()


def report_table(result: SuiteResult) -> str:
    short = {"retrieval_success_rate": "success", "relation_prediction_success_rate": "relation",
             "retrieval_direction_success_rate": "direction", "accumulated_displacement_mean": "disp",
             "retrieval_steps_mean": "steps", "query_count_mean": "queries"}
    head = f"{'preset':<10}{'variant':<12}" + "".join(f"{short[m]:>18}" for m in METRICS)
    lines = [head, "-" * len(head)]
    for p in result.presets:
        for v in result.variants:
            ms = result.metrics[(p, v)]
            cells = []
            for m in METRICS:
                s = ms.get(m)
                cells.append(f"{_num(s.mean):>9}+-{_num(s.stderr)[:7]:<7}")
            lines.append(f"{p:<10}{v:<12}" + "".join(f"{c:>18}" for c in cells))
    return "\n".join(lines) + "\n"


def variant_ordering(result: SuiteResult) -> str:
    rates = {v: float(np.nanmean([result.metrics[(p, v)].retrieval_success_rate.mean for p in result.presets]))
             for v in result.variants}
    ranked = sorted(result.variants, key=lambda v: (-rates[v], result.variants.index(v)))
    return " > ".join(f"{v} ({rates[v]:.3f})" for v in ranked)


def emit_report(result: SuiteResult, path) -> Tuple[str, str]:
    """Write ``path`` (CSV) and a sibling ``.txt`` table; returns both paths."""
    if not result.metrics or not result.variants:
        raise ValueError("no variants")
    path = os.fspath(path)
    txt = os.path.splitext(path)[0] + ".txt"
    with open(path, "w", newline="") as fh:
        fh.write(report_csv(result))
    with open(txt, "w") as fh:
        fh.write(report_table(result))
    return path, txt


def oracle_closure(scene: SceneState) -> set:
    g = oracle_support_graph(scene)
    return transitive_closure(g.edges, scene.target_id)


def is_solvable(scene: SceneState, dir_cfg=None, disp_tol: float = DEFAULT_SIM.th_move, max_steps: int = 64) -> bool:
    """Brute-force planner with full knowledge: true iff some safe removal order exists greedily.

    At every step a member of the target's oracle support closure that
    supports nothing inside it is removed along any candidate direction that
    disturbs nothing; the scene is unsolvable if no such move exists.
    """
    from .direction import DirectionConfig

    dirs = propose_directions(dir_cfg or DirectionConfig())
    s = scene.clone()
    for _ in range(max_steps):
        if s.target_id in s.removed:
            return True
        g = oracle_support_graph(s)
        members = transitive_closure(g.edges, s.target_id) | {s.target_id}
        free = sorted(n for n in members if not any(i == n and j in members for i, j in g.edges))
        moved = False
        for n in free:
            for d in dirs:
                if max(oracle_movement(s, n, d).values(), default=0.0) < disp_tol:
                    s, _ = execute_retrieval(s, n, d)
                    moved = True
                    break
            if moved:
                break
        if not moved:
            return False
    return s.target_id in s.removed
