"""Command line: generate scenes, solve one episode with logs, run benchmark suites, inspect artifacts.

Exit codes: 0 success, 1 usage or I/O error, 2 failed episode.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

from .affordance import AffordanceConfig, dump_affordance
from .bench import DEFAULT_N_RANGE, SuiteSpec, emit_report, run_suite, variant_ordering
from .direction import DirectionConfig
from .dynamics import GeometricPredictor, OracleBackedPredictor
from .fixtures import BUILDERS, load_fixture
from .generator import PRESETS, GenerationOverflow, generate_clutter
from .observation import CameraConfig, observe, observe_full
from .physics import oracle_support_graph
from .scene import SceneError, SceneState
from .solver import VARIANTS, SolverConfig, run_episode

OUT_ENV = "CLUTTERSOLVE_OUT"
EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2

log = logging.getLogger("cluttersolve")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for failed episodes here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _vec3(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    return tuple(float(p) for p in parts)


def _default_out() -> str:
    return os.environ.get(OUT_ENV, "cluttersolve_out")


def _add_overrides(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("module parameters")
    g.add_argument("--th-move", type=_positive_float, help="movement threshold for support edges (m)")
    g.add_argument("--eps-adj", type=_positive_float, help="adjacency radius (m)")
    g.add_argument("--disp-tol", type=_positive_float, help="per-step displacement that fails an episode (m)")
    g.add_argument("--q", type=_positive_int, help="number of candidate retrieval directions")
    g.add_argument("--eps-x", type=_positive_float, help="affordance influence radius (m)")
    g.add_argument("--r", type=_positive_int, help="points kept by farthest-point sampling")
    g.add_argument("--camera", type=_vec3, metavar="X,Y,Z", help="camera position")
    g.add_argument("--look-at", type=_vec3, metavar="X,Y,Z", help="camera target point")
    g.add_argument("--full-observation", action="store_true", help="observe every particle instead of rendering")
    g.add_argument("--predictor", choices=("geometric", "oracle"), default="geometric")


def _configs(args) -> tuple:
    """Solver and camera configs from flags; raises UsageError on invalid values."""
    try:
        cfg = SolverConfig(seed=args.seed, full_observation=args.full_observation)
        if args.th_move is not None:
            cfg = replace(cfg, th_move=args.th_move)
        cfg = replace(cfg, disp_tol=args.disp_tol if args.disp_tol is not None else cfg.th_move)
        if args.eps_adj is not None:
            cfg = replace(cfg, eps_adj=args.eps_adj)
        if args.q is not None:
            cfg = replace(cfg, direction=replace(DirectionConfig(), q=args.q))
        if args.eps_x is not None:
            cfg = replace(cfg, affordance=AffordanceConfig(eps_x=args.eps_x))
        if args.r is not None:
            cfg = replace(cfg, r=args.r)
        cam = CameraConfig()
        if args.camera is not None:
            cam = replace(cam, position=args.camera)
        if args.look_at is not None:
            cam = replace(cam, look_at=args.look_at)
    except ValueError as e:
        raise UsageError(str(e)) from None
    return cfg, cam


def _load_scene(ref: str) -> SceneState:
    if not os.path.exists(ref) and ref in BUILDERS:
        return load_fixture(ref)
    return SceneState.load(ref)


def cmd_gen(args) -> int:
    scene = generate_clutter(args.preset, args.n, args.seed)
    out = args.out or os.path.join(_default_out(), f"{args.preset}_{args.n}_{args.seed}.json")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    digest = scene.save(out)
    print(f"{digest}  {out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    scene = _load_scene(args.scene)
    cfg, cam = _configs(args)
    cfg = replace(cfg, variant=args.variant)
    if args.predictor == "oracle":
        pred = OracleBackedPredictor(scene, cfg.sim)
    else:
        pred = GeometricPredictor(th_move=cfg.th_move, h=scene.h)
    rep = run_episode(scene, cam, cfg, pred)
    out = args.out or _default_out()
    os.makedirs(os.path.join(out, "graphs"), exist_ok=True)
    with open(os.path.join(out, "steps.jsonl"), "w") as fh:
        fh.write(rep.log_lines())
    for k, s in enumerate(rep.steps):
        with open(os.path.join(out, "graphs", f"step_{k:03d}.dot"), "w") as fh:
            fh.write(s.dot)
    with open(os.path.join(out, "report.json"), "w") as fh:
        fh.write(json.dumps(rep.summary(), sort_keys=True, indent=1) + "\n")
    status = "success" if rep.success else f"failed ({rep.failure})"
    print(f"{rep.variant}: {status}; order {rep.order}; queries {rep.total_queries}; "
          f"graph adjust events {rep.graph_adjust_events}")
    return EXIT_OK if rep.success else EXIT_FAILED


def cmd_bench(args) -> int:
    cfg, cam = _configs(args)
    lo, hi = args.n_min, args.n_max
    if lo > hi:
        raise UsageError("--n-min must not exceed --n-max")
    spec = SuiteSpec(seed=args.seed, predictor=args.predictor, full_observation=args.full_observation,
                     n_range=(lo, hi), direction_metric=not args.no_direction_metric,
                     solver=cfg, camera=cam)
    try:
        result = run_suite(args.presets, args.scenes, args.seed, args.variants, spec, workers=args.workers)
    except ValueError as e:
        raise UsageError(str(e)) from None
    out = args.out or _default_out()
    os.makedirs(out, exist_ok=True)
    csv_path, txt_path = emit_report(result, os.path.join(out, "report.csv"))
    print(f"wrote {csv_path} and {txt_path}")
    print(variant_ordering(result))
    return EXIT_OK


def cmd_inspect(args) -> int:
    scene = _load_scene(args.scene)
    _, cam = _configs(args)
    obs = observe_full(scene) if args.full_observation else observe(scene, cam)
    g = oracle_support_graph(scene)
    print(f"scene {scene.digest()}")
    print(f"preset {scene.preset}, {len(scene.active_ids)} objects, target {scene.target_id}")
    for o in scene.active():
        flag = scene.borderline.get(o.id, "")
        seen = len(obs.points(o.id)) if o.id in obs else 0
        print(f"  {o.id:3d} {o.category:<9} bottom {o.bottom_z:.4f} top {o.top_z:.4f} "
              f"visible {seen:4d} {flag}".rstrip())
    print(f"oracle support edges: {sorted(g.edges)}")
    if args.export:
        os.makedirs(args.export, exist_ok=True)
        with open(os.path.join(args.export, "observation.json"), "w") as fh:
            fh.write(obs.dumps())
        with open(os.path.join(args.export, "affordance.json"), "w") as fh:
            fh.write(dump_affordance(obs))
        with open(os.path.join(args.export, "oracle_graph.dot"), "w") as fh:
            fh.write(g.to_dot("oracle"))
        print(f"exported to {args.export}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cluttersolve", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a cluttered scene file")
    g.add_argument("--preset", choices=sorted(PRESETS), required=True)
    g.add_argument("--n", type=_positive_int, required=True, help="number of objects")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help=f"scene file (default under ${OUT_ENV})")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run one retrieval episode and write its logs")
    s.add_argument("scene", help=f"scene file or fixture name ({', '.join(BUILDERS)})")
    s.add_argument("--variant", choices=VARIANTS, default="full")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help=f"output directory (default ${OUT_ENV})")
    _add_overrides(s)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run a benchmark suite and write the CSV report")
    b.add_argument("--presets", nargs="+", choices=sorted(PRESETS), default=list(PRESETS))
    b.add_argument("--variants", nargs="+", choices=VARIANTS, default=list(VARIANTS))
    b.add_argument("--scenes", type=_positive_int, default=100, help="scenes per preset")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--n-min", type=_positive_int, default=DEFAULT_N_RANGE[0])
    b.add_argument("--n-max", type=_positive_int, default=DEFAULT_N_RANGE[1])
    b.add_argument("--workers", type=_positive_int, default=1)
    b.add_argument("--no-direction-metric", action="store_true", help="skip the 64-sweep oracle direction audit")
    b.add_argument("--out", help=f"output directory (default ${OUT_ENV})")
    _add_overrides(b)
    b.set_defaults(func=cmd_bench)

    i = sub.add_parser("inspect", help="summarise a scene and export observation, affordance and oracle graph")
    i.add_argument("scene", help="scene file or fixture name")
    i.add_argument("--export", metavar="DIR", help="write observation/affordance/graph files here")
    i.add_argument("--seed", type=int, default=0)
    _add_overrides(i)
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # --help, or a usage error already printed
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, SceneError, GenerationOverflow, OSError) as e:
        print(f"cluttersolve: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
