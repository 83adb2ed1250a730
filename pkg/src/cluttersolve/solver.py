"""Support Graph construction by recursive broadcasting, Graph Adjustment and the episode loop."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Set, Tuple

import numpy as np

from .affordance import Action, AffordanceConfig, UnreachableError, select_grasp
from .direction import UP, DirectionConfig, best_direction, disturbance
from .dynamics import DEFAULT_R, DynamicsPredictor, GeometricPredictor, make_query
from .geometry import clip_convex, convex_hull_2d, polygon_area
from .graph import MutualSupportError, SupportGraph
from .observation import CameraConfig, Observation, adjacency, observe, observe_full
from .physics import DEFAULT_SIM, SimParams, execute_retrieval
from .scene import MovementRecord, SceneState, _fmt

log = logging.getLogger(__name__)

VARIANTS = ("full", "no_dp", "no_ga", "no_rb", "greedy_top")
LOW_VISIBILITY = 0.1


@dataclass(frozen=True)
class SolverConfig:
    th_move: float = DEFAULT_SIM.th_move
    eps_adj: float = 0.03
    max_nodes: int = 256
    direction: DirectionConfig = DirectionConfig()
    r: int = DEFAULT_R
    disp_tol: float = DEFAULT_SIM.th_move
    variant: str = "full"
    affordance: AffordanceConfig = AffordanceConfig()
    full_observation: bool = False
    seed: int = 0
    debug: bool = False
    sim: SimParams = DEFAULT_SIM

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.th_move <= 0 or self.eps_adj <= 0 or self.disp_tol <= 0:
            raise ValueError("thresholds must be positive")
        if self.r < 1 or self.max_nodes < 1:
            raise ValueError("r and max_nodes must be >= 1")

    @property
    def uses_dp(self) -> bool:
        return self.variant != "no_dp"

    @property
    def uses_ga(self) -> bool:
        return self.variant not in ("no_ga", "no_rb", "greedy_top")


@dataclass
class QueryRecord:
    mover: int
    neighbor: int
    direction: Tuple[float, float, float]
    moves: bool
    magnitude: float


@dataclass
class StepRecord:
    object_id: int
    action: Optional[Action]
    movements: List[MovementRecord]
    graph_digest: str
    queries: int
    adjust_event: bool
    dot: str = ""
    low_visibility: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def max_displacement(self) -> float:
        return max((m.displacement for m in self.movements), default=0.0)

    @property
    def displacement(self) -> float:
        return float(sum(m.displacement for m in self.movements))

    def to_json(self, step: int) -> dict:
        return {
            "step": step,
            "object_id": self.object_id,
            "action": self.action.to_json() if self.action else None,
            "graph_digest": self.graph_digest,
            "queries": self.queries,
            "graph_adjust_event": self.adjust_event,
            "max_displacement": _fmt(self.max_displacement),
            "movements": {str(m.object_id): _fmt(m.displacement) for m in self.movements if m.displacement > 0},
            "low_visibility_adjacency": [list(p) for p in self.low_visibility],
        }


@dataclass
class EpisodeReport:
    target_id: int
    variant: str
    steps: List[StepRecord] = field(default_factory=list)
    success: bool = False
    failure: str = ""
    total_queries: int = 0
    expanded_degree_sum: int = 0
    graph_adjust_events: int = 0
    union_edges: Set[Tuple[int, int]] = field(default_factory=set)
    scene_digest: str = ""

    @property
    def accumulated_displacement(self) -> float:
        return float(sum(s.displacement for s in self.steps))

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def order(self) -> List[int]:
        return [s.object_id for s in self.steps]

    def log_lines(self) -> str:
        lines = [json.dumps(s.to_json(k), sort_keys=True) for k, s in enumerate(self.steps)]
        lines.append(json.dumps(self.summary(), sort_keys=True))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "summary": True,
            "target_id": self.target_id,
            "variant": self.variant,
            "success": self.success,
            "failure": self.failure,
            "steps": self.n_steps,
            "order": self.order,
            "accumulated_displacement": _fmt(self.accumulated_displacement),
            "total_queries": self.total_queries,
            "expanded_degree_sum": self.expanded_degree_sum,
            "graph_adjust_events": self.graph_adjust_events,
            "scene_digest": self.scene_digest,
        }


class _Session:
    """Per-episode planner state: the graph plus bookkeeping for logs and audits."""

    def __init__(self, cfg: SolverConfig, predictor: DynamicsPredictor):
        self.cfg = cfg
        self.predictor = predictor
        self.queries: List[QueryRecord] = []
        self.union: Set[Tuple[int, int]] = set()
        self.low_vis: List[Tuple[int, int]] = []


def _direction(obs: Observation, oid: int, cfg: SolverConfig, predictor: DynamicsPredictor):
    if not cfg.uses_dp:
        total = disturbance(obs, oid, UP[None, :], predictor, cfg.eps_adj, cfg.r)[0]
        return UP.copy(), 1.0 / (1.0 + float(total))
    return best_direction(obs, oid, cfg.direction, predictor, cfg.eps_adj, cfg.r)


def _broadcast(obs: Observation, start: int, graph: SupportGraph, cfg: SolverConfig,
               predictor: DynamicsPredictor, session: Optional[_Session] = None) -> List[int]:
    """One broadcast from ``start``; returns the ids newly added as nodes."""
    d, safety = _direction(obs, start, cfg, predictor)
    graph.direction_cache[start] = (d, safety)
    adj = adjacency(obs, start, cfg.eps_adj)
    graph.expanded_degree_sum += len(adj)
    parents = set(graph.parents(start))
    new: List[int] = []
    for j in sorted(adj - parents):
        q = make_query(obs, start, j, d, cfg.r, cfg.eps_adj)
        pred = predictor.predict(q)
        graph.query_count += 1
        if session is not None:
            session.queries.append(QueryRecord(start, j, tuple(float(x) for x in d), pred.moves, pred.magnitude))
            for k in (start, j):
                if obs.objects[k].visibility_ratio < LOW_VISIBILITY:
                    session.low_vis.append((start, j))
                    break
        if pred.magnitude > cfg.th_move:
            if len(graph.nodes) >= cfg.max_nodes and j not in graph.nodes:
                raise RuntimeError("support graph exceeds max_nodes")
            added = graph.add_node(j)
            graph.add_edge(start, j)
            if session is not None:
                session.union.add((start, j))
            if added:
                new.append(j)
    if cfg.debug and not graph.is_acyclic():
        raise AssertionError("support graph lost acyclicity")
    return new


def broadcast_from(obs: Observation, start_id: int, graph: SupportGraph, cfg: SolverConfig,
                   predictor: DynamicsPredictor) -> SupportGraph:
    obs.get(start_id)
    graph.add_node(start_id)
    _broadcast(obs, start_id, graph, cfg, predictor)
    return graph


def _expand(obs, frontier: List[int], graph, cfg, predictor, session=None, done: Optional[Set[int]] = None):
    done = set() if done is None else done
    queue = list(frontier)
    while queue:
        n = queue.pop(0)
        if n in done or n not in obs:
            continue
        done.add(n)
        queue.extend(_broadcast(obs, n, graph, cfg, predictor, session))
    return done


def build_support_graph(obs: Observation, target_id: int, cfg: SolverConfig,
                        predictor: DynamicsPredictor, session: Optional[_Session] = None) -> SupportGraph:
    """Worklist fixpoint of broadcasts starting from the target."""
    obs.get(target_id)
    graph = SupportGraph.rooted(target_id)
    _expand(obs, [target_id], graph, cfg, predictor, session)
    _update_heights(graph, obs)
    return graph


def graph_adjust(obs: Observation, graph: SupportGraph, candidate_id: int, cfg: SolverConfig,
                 predictor: DynamicsPredictor, session: Optional[_Session] = None) -> List[int]:
    """Re-broadcast from the candidate; expand only from nodes that are new.  Returns them."""
    if candidate_id not in obs:
        return []
    before = set(graph.nodes)
    new = _broadcast(obs, candidate_id, graph, cfg, predictor, session)
    _expand(obs, new, graph, cfg, predictor, session, done={candidate_id})
    _update_heights(graph, obs)
    return sorted(graph.nodes - before)


def _update_heights(graph: SupportGraph, obs: Observation) -> None:
    for n in graph.nodes:
        if n in obs:
            graph.com_z[n] = obs.objects[n].com_z


def next_retrievable(graph: SupportGraph) -> int:
    """Zero-outdegree node with the highest centre (ties: smaller id); the target if it is free."""
    if not graph.nodes:
        raise ValueError("empty support graph")
    free = graph.zero_outdegree()
    if graph.target in free:
        return graph.target
    if not free:
        raise MutualSupportError(-1, -1)
    return min(free, key=lambda n: (-graph.com_z.get(n, -np.inf), n))


def _all_pairs_graph(obs: Observation, target: int, cfg: SolverConfig, predictor: DynamicsPredictor,
                     session: _Session) -> SupportGraph:
    """Direct pairwise inference: every ordered pair classified, no adjacency, no recursion.

    Each pair gets the predictor's direction-free support answer (the analog
    of a relation classifier); retrieval directions are still chosen per node.
    """
    graph = SupportGraph.rooted(target)
    ids = obs.ids
    dirs = {i: _direction(obs, i, cfg, predictor) for i in ids}
    moves: Dict[Tuple[int, int], bool] = {}
    for i in ids:
        graph.direction_cache[i] = dirs[i]
        graph.expanded_degree_sum += len(ids) - 1
        for j in ids:
            if i == j:
                continue
            pred = predictor.support(make_query(obs, i, j, dirs[i][0], cfg.r, cfg.eps_adj, check_adjacent=False))
            graph.query_count += 1
            session.queries.append(QueryRecord(i, j, tuple(float(x) for x in dirs[i][0]), pred.moves, pred.magnitude))
            moves[(i, j)] = pred.magnitude > cfg.th_move
    members = [target] + [j for j in ids if j != target and moves[(target, j)]]
    for i in members:
        for j in members:
            if i != j and moves[(i, j)] and j != target:
                try:
                    graph.add_edge(i, j)
                    session.union.add((i, j))
                except MutualSupportError:
                    pass  # pairwise answers can disagree; keep the first-seen direction
    graph.nodes.update(members)
    _update_heights(graph, obs)
    return graph


def _greedy_pick(obs: Observation, target: int, h: float) -> int:
    """Highest visible object resting over the target's footprint, else the target."""
    tp = obs.points(target)
    t_fp = convex_hull_2d(tp[:, :2])
    t_top = float(tp[:, 2].max())
    best, best_z = target, -np.inf
    for j in obs.ids:
        if j == target:
            continue
        pj = obs.points(j)
        if pj[:, 2].min() < t_top + h / 2:
            continue
        fp = convex_hull_2d(pj[:, :2])
        if len(fp) < 3 or len(t_fp) < 3 or polygon_area(clip_convex(fp, t_fp)) <= 0.0:
            continue
        z = obs.objects[j].com_z
        if z > best_z or (z == best_z and j < best):
            best, best_z = j, z
    return best


def run_episode(scene: SceneState, cam: Optional[CameraConfig] = None, cfg: SolverConfig = SolverConfig(),
                predictor: Optional[DynamicsPredictor] = None,
                audit: Optional[Callable] = None) -> EpisodeReport:
    """Plan and execute retrievals until the target is out or the episode fails.

    ``audit(scene, candidate, direction, queries)`` is called before each
    retrieval with the world state the step was planned on; the benchmark uses
    it to score predictions against the oracle.
    """
    cam = cam or CameraConfig()
    predictor = predictor or GeometricPredictor(th_move=cfg.th_move, h=scene.h)
    scene = scene.clone()
    target = scene.target_id
    rep = EpisodeReport(target, cfg.variant, scene_digest=scene.digest())
    session = _Session(cfg, predictor)

    def look(step):
        return observe_full(scene, step) if cfg.full_observation else observe(scene, cam, step)

    max_steps = len(scene.active_ids) + 1
    graph: Optional[SupportGraph] = None
    rebuilt_degree = 0
    fresh: Dict[int, int] = {}  # node -> step its cached direction was computed at
    try:
        for step in range(max_steps):
            obs = look(step)
            predictor.bind(scene)
            if target not in obs:
                rep.failure = "target not visible"
                break
            q0 = len(session.queries)
            event = False
            if cfg.variant == "greedy_top":
                cand = _greedy_pick(obs, target, scene.h)
                d = UP.copy()
                graph = SupportGraph.rooted(target)
            elif cfg.variant == "no_rb":
                graph = _all_pairs_graph(obs, target, cfg, predictor, session)
                rebuilt_degree += graph.expanded_degree_sum
                cand = next_retrievable(graph)
                d = graph.direction_cache[cand][0]
            else:
                if graph is None:
                    graph = build_support_graph(obs, target, cfg, predictor, session)
                    fresh = {n: step for n in graph.direction_cache}
                _update_heights(graph, obs)
                cand = next_retrievable(graph)
                if cfg.uses_ga:
                    for _ in range(cfg.max_nodes):
                        added = graph_adjust(obs, graph, cand, cfg, predictor, session)
                        fresh[cand] = step
                        if added:
                            event = True
                        if not added and graph.outdegree(cand) == 0:
                            break
                        cand = next_retrievable(graph)
                if fresh.get(cand) != step:
                    # direction only, no re-broadcast: the graph stays as built
                    if cand not in obs:
                        raise UnreachableError("object unreachable")
                    graph.direction_cache[cand] = _direction(obs, cand, cfg, predictor)
                    fresh[cand] = step
                d = graph.direction_cache[cand][0]
            if event:
                rep.graph_adjust_events += 1
            if cand not in obs:
                raise UnreachableError("object unreachable")
            action = select_grasp(obs, cand, d, cfg.affordance, cfg.seed)
            if audit is not None:
                audit(scene, cand, d, session.queries[q0:])
            digest, dot = graph.digest(), graph.to_dot()
            scene, recs = execute_retrieval(scene, cand, d, cfg.sim)
            rec = StepRecord(cand, action, recs, digest, len(session.queries) - q0, event, dot,
                             sorted(set(session.low_vis)))
            session.low_vis.clear()
            rep.steps.append(rec)
            graph.remove_node(cand)
            if rec.max_displacement >= cfg.disp_tol:
                rep.failure = f"displacement {rec.max_displacement:.6f} at step {step}"
                break
            if cand == target:
                break
        else:
            rep.failure = "step limit"
    except MutualSupportError as e:
        rep.failure = str(e)
    except UnreachableError as e:
        rep.failure = str(e)
    if cfg.variant == "no_rb":
        rep.expanded_degree_sum = rebuilt_degree
    elif graph is not None:
        rep.expanded_degree_sum = graph.expanded_degree_sum
    rep.total_queries = len(session.queries)
    rep.union_edges = set(session.union)
    retrieved = target in scene.removed
    rep.success = retrieved and not rep.failure and all(s.max_displacement < cfg.disp_tol for s in rep.steps)
    return rep


def variant_config(base: SolverConfig, variant: str) -> SolverConfig:
    return replace(base, variant=variant)
