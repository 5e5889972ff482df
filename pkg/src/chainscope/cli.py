"""Command-line front end.

Every analysis command takes either ``--graph FILE`` or the build flags
(``--flow``, ``--n``, ...), and prints or writes a JSON report carrying the
run configuration and the graph fingerprint. Exit codes: 0 success, 2 invalid
input, 3 mathematical precondition failed (e.g. a class is not
quasi-Lyapunov), 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import boxgraph, flowsys, homcone, lyapunov, quasilyap, raster, recurrence
from .cohomology import CohomologyClass

EXIT_OK, EXIT_USAGE, EXIT_MATH, EXIT_IO = 0, 2, 3, 4


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    flow: str | None
    n: int | None
    T: float
    epsilon: float | None
    step: float | None
    exact: bool
    out: str | None
    graph: str | None

    def validate(self) -> None:
        if self.graph is None and self.flow is None:
            raise UsageError("give --graph or --flow")
        if self.graph is None and (self.n is None or self.n < 2):
            raise UsageError("--n must be an integer >= 2")
        if self.T <= 0:
            raise UsageError("--t must be positive")
        if self.epsilon is not None and self.epsilon <= 0:
            raise UsageError("--epsilon must be positive")
        if self.step is not None and self.step <= 0:
            raise UsageError("--step must be positive")


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (set, frozenset)):
        return sorted(_jsonable(v) for v in x)
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _config(args) -> RunConfig:
    cfg = RunConfig(getattr(args, "flow", None), getattr(args, "n", None), getattr(args, "t", 1.0),
                    getattr(args, "epsilon", None), getattr(args, "step", None),
                    bool(getattr(args, "exact", False)), getattr(args, "out", None),
                    getattr(args, "graph", None))
    cfg.validate()
    return cfg


def _field(cfg: RunConfig):
    return flowsys.parse_flow(cfg.flow) if cfg.flow else None


def _cache_path(cfg: RunConfig, fld) -> Path | None:
    root = os.environ.get("CHAINSCOPE_CACHE")
    if not root:
        return None
    key = json.dumps({"field": fld.fingerprint().hex(), "n": cfg.n, "T": cfg.T,
                      "epsilon": cfg.epsilon, "step": cfg.step}, sort_keys=True)
    return Path(root) / (hashlib.sha256(key.encode()).hexdigest()[:24] + ".csgr")


def _graph(cfg: RunConfig):
    fld = _field(cfg)
    if cfg.graph:
        return boxgraph.load_any(cfg.graph, fld), fld
    cache = _cache_path(cfg, fld)
    if cache is not None and cache.exists():
        return boxgraph.load(cache, fld), fld
    graph = boxgraph.build_transition_graph(fld, cfg.n, cfg.T, cfg.epsilon, step=cfg.step)
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        boxgraph.save(graph, cache)
    return graph, fld


def _alpha(text: str, cfg: RunConfig, graph) -> CohomologyClass:
    try:
        alpha = CohomologyClass.parse(text, exact=cfg.exact)
    except ValueError as err:
        raise UsageError(str(err)) from None
    if alpha.dimension != graph.dimension:
        raise UsageError(f"class {text!r} has dimension {alpha.dimension}, graph has {graph.dimension}")
    return alpha


def _emit(args, cfg: RunConfig, graph, results: dict, started: float, inputs: dict | None = None) -> None:
    report = {"command": args.command, "config": asdict(cfg), "inputs": inputs or {},
              "results": results, "wall_time": round(time.perf_counter() - started, 6),
              "fingerprint": graph.fingerprint.hex() if graph is not None else None}
    text = json.dumps(_jsonable(report), indent=1, sort_keys=True)
    if cfg.out:
        Path(cfg.out).write_text(text + "\n")
    else:
        print(text)


def _raster(args, graph, layers) -> None:
    if not getattr(args, "raster", None):
        return
    if graph.grid is None or graph.dimension != 2:
        raise UsageError("--raster needs a 2-torus grid graph")
    raster.write_ppm(args.raster, graph.grid, layers)


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


# -- commands -----------------------------------------------------------------------


def cmd_build(args) -> int:
    cfg = _config(args)
    if cfg.flow is None:
        raise UsageError("build needs --flow")
    fld = _field(cfg)
    graph = boxgraph.build_transition_graph(fld, cfg.n, cfg.T, cfg.epsilon, step=cfg.step)
    out = cfg.out or "graph.csgr"
    if out.endswith(".json"):
        boxgraph.save_json(graph, out)
    else:
        boxgraph.save(graph, out)
    print(f"nodes {graph.num_nodes} edges {graph.num_edges} -> {out}")
    return EXIT_OK


def cmd_refine(args) -> int:
    cfg = _config(args)
    if cfg.graph is None or cfg.flow is None:
        raise UsageError("refine needs --graph and --flow")
    fld = _field(cfg)
    graph = boxgraph.refine(fld, boxgraph.load_any(cfg.graph, fld))
    out = cfg.out or "refined.csgr"
    boxgraph.save(graph, out)
    print(f"nodes {graph.num_nodes} edges {graph.num_edges} epsilon {graph.epsilon} -> {out}")
    return EXIT_OK


def cmd_rec(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    graph, _ = _graph(cfg)
    dec = recurrence.chain_decompose(graph)
    res = recurrence.decomposition_json(dec)
    res["recurrent_nodes"] = int(dec.recurrent.sum())
    _raster(args, graph, [(np.flatnonzero(dec.recurrent), raster.PALETTE[0])])
    _emit(args, cfg, graph, res, started)
    return EXIT_OK


def cmd_qltest(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    graph, _ = _graph(cfg)
    alpha = _alpha(args.alpha, cfg, graph)
    cert = quasilyap.is_quasi_lyapunov(graph, alpha)
    _say(f"{cert.verdict} at epsilon={graph.epsilon} for alpha=({alpha})"
         + ("" if cert.is_ql else f"; cycle of {len(cert.cycle)} edges"))
    _emit(args, cfg, graph, cert.to_json(), started, {"alpha": args.alpha})
    return EXIT_OK


def cmd_arec(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    graph, _ = _graph(cfg)
    alpha = _alpha(args.alpha, cfg, graph)
    rec = quasilyap.alpha_recurrent(graph, alpha)
    _raster(args, graph, [(rec.nodes, raster.PALETTE[0])])
    _say(f"Rec_alpha: {len(rec.nodes)} nodes in {len(rec.chains)} chains")
    _emit(args, cfg, graph, {"nodes": sorted(rec.nodes), "chains": rec.chains}, started, {"alpha": args.alpha})
    return EXIT_OK


def cmd_cone(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    graph, _ = _graph(cfg)
    cone = homcone.direction_cone(graph, random_probes=args.probes)
    res = cone.to_json()
    res["diameter"] = cone.diameter()
    res["probes"] = cone.probes
    _emit(args, cfg, graph, res, started)
    return EXIT_OK


def cmd_faces(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    graph, _ = _graph(cfg)
    classes = [_alpha(a, cfg, graph) for a in args.alpha]
    cone = homcone.direction_cone(graph, random_probes=args.probes) if graph.intra.any() else None
    faces = [quasilyap.open_face(graph, a, cone) for a in classes]
    report = quasilyap.face_rec_map(graph, faces, cone)
    res = {"cone": cone.to_json() if cone else None, "faces": [f.to_json() for f in faces], **report}
    layers = [(set(r), raster.PALETTE[i % len(raster.PALETTE)]) for i, r in enumerate(report["rec"])]
    _raster(args, graph, sorted(layers, key=lambda L: -len(L[0])))
    _emit(args, cfg, graph, res, started, {"alpha": args.alpha})
    return EXIT_OK if not report["problems"] else EXIT_MATH


def cmd_lyap(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    graph, _ = _graph(cfg)
    alpha = _alpha(args.alpha, cfg, graph)
    pot = lyapunov.lyapunov_potential(graph, alpha) if alpha.exact else lyapunov.real_alpha_potential(graph, alpha)
    check = lyapunov.verify_potential(graph, alpha, pot.values)
    res = pot.to_json()
    res["verified"] = check.kind
    res["min_chain_gap"] = check.min_gap
    _emit(args, cfg, graph, res, started, {"alpha": args.alpha})
    return EXIT_OK


def _parse_assignment(text: str) -> dict[int, Fraction]:
    out = {}
    try:
        for part in filter(None, (p.strip() for p in text.split(","))):
            k, v = part.split(":")
            out[int(k)] = Fraction(v)
    except ValueError:
        raise UsageError(f"cannot parse prescription {text!r}; expected chain:value,...") from None
    return out


def cmd_prescribe(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    graph, _ = _graph(cfg)
    alpha = _alpha(args.alpha, cfg, graph)
    pres = lyapunov.PrescribedValues(_parse_assignment(args.values))
    try:
        pot = lyapunov.prescribed_pre_lyapunov(graph, alpha, pres)
    except lyapunov.InfeasiblePrescription as err:
        _emit(args, cfg, graph, {"feasible": False, "witness_path": err.path, "message": str(err)}, started,
              {"alpha": args.alpha, "values": args.values})
        return EXIT_MATH
    res = pot.to_json()
    res["feasible"] = True
    _emit(args, cfg, graph, res, started, {"alpha": args.alpha, "values": args.values})
    return EXIT_OK


def cmd_reduce(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    graph, _ = _graph(cfg)
    try:
        walk = [int(e) for e in json.loads(Path(args.walk).read_text())]
    except (json.JSONDecodeError, TypeError, ValueError):
        raise UsageError(f"{args.walk}: expected a JSON list of edge ids") from None
    if not walk or min(walk) < 0 or max(walk) >= graph.num_edges:
        raise UsageError("walk is empty or has edge ids out of range")
    closed = bool(graph.dst[walk[-1]] == graph.src[walk[0]])
    if closed:
        pieces, path = homcone.eulerian_reduce(graph, walk), None
    else:
        path, pieces = homcone.open_walk_reduce(graph, walk)
    total = graph.walk_displacement(walk)
    parts = [homcone.cycle_class(graph, c) for c in pieces]
    summed = sum((np.array(p.h) for p in parts), np.zeros(graph.dimension, dtype=np.int64))
    if path:
        summed = summed + graph.walk_displacement(path)
    res = {"closed": closed, "path": path, "cycles": pieces,
           "cycle_classes": [list(p.h) for p in parts],
           "walk_class": total.tolist(), "sum_class": summed.tolist(),
           "walk_edges": len(walk), "sum_edges": sum(len(c) for c in pieces) + len(path or [])}
    _emit(args, cfg, graph, res, started, {"walk": args.walk})
    return EXIT_OK


def cmd_verify_appendix(args) -> int:
    started = time.perf_counter()
    cfg = _config(args)
    graph, fld = _graph(cfg)
    rep = homcone.cone_equivalence_check(graph, trials=args.trials, fld=fld)
    _say(f"{len(rep['violations'])} violations over {rep['trials']} directions")
    _emit(args, cfg, graph, rep, started, {"trials": args.trials})
    return EXIT_OK if not rep["violations"] else EXIT_MATH


# -- parser --------------------------------------------------------------------------


def _nonnegative_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chainscope", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--flow", help="linear:a,b | circle | figure1 | expression JSON file")
    common.add_argument("--n", type=int, help="boxes per axis")
    common.add_argument("--t", type=float, default=1.0, help="flow time per edge")
    common.add_argument("--epsilon", type=float, help="jump radius (default 1/n)")
    common.add_argument("--step", type=float, help="integration step (default T/64)")
    common.add_argument("--exact", action="store_true", help="read decimal classes as exact rationals")
    common.add_argument("--out", help="output file (default: stdout for reports)")
    common.add_argument("--graph", help="graph file (.csgr or .json)")
    common.add_argument("--raster", help="PPM file painting the node sets (2-torus only)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    add("build", cmd_build, "build and save a transition graph")
    add("refine", cmd_refine, "rebuild a graph at double resolution")
    add("rec", cmd_rec, "chain decomposition and Conley order")
    add("qltest", cmd_qltest, "quasi-Lyapunov test with certificate").add_argument("--alpha", required=True)
    add("arec", cmd_arec, "alpha-recurrent set").add_argument("--alpha", required=True)
    add("cone", cmd_cone, "direction cone vertices").add_argument("--probes", type=_nonnegative_int, default=64)
    p = add("faces", cmd_faces, "open faces and their recurrent sets")
    p.add_argument("--alpha", action="append", required=True)
    p.add_argument("--probes", type=_nonnegative_int, default=64)
    add("lyap", cmd_lyap, "strong equivariant Lyapunov potential").add_argument("--alpha", required=True)
    p = add("prescribe", cmd_prescribe, "potential with prescribed chain values")
    p.add_argument("--alpha", required=True)
    p.add_argument("--values", required=True, help="chain:value,... (values may be fractions)")
    add("reduce", cmd_reduce, "reduce a walk into simple cycles").add_argument("--walk", required=True)
    add("verify-appendix", cmd_verify_appendix, "circulation support vs max cycle ratio").add_argument(
        "--trials", type=_nonnegative_int, default=32)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (UsageError, flowsys.FieldError) as err:
        _say(f"error: {err}")
        return EXIT_USAGE
    except (recurrence.PreconditionError, homcone.AcyclicGraphError) as err:
        _say(f"precondition failed: {err}")
        return EXIT_MATH
    except (OSError, boxgraph.GraphFormatError) as err:
        _say(f"I/O error: {err}")
        return EXIT_IO
    except (ValueError, homcone.WalkError) as err:
        _say(f"error: {err}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
