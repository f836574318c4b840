"""Command-line front end.

Every subcommand loads a cg-spec (a JSON path or ``builtin:NAME``) and writes
either a trajectory CSV or a JSON report. Exit status: 0 when the verdict is
PASS, 1 on FAIL or a numerical abort, 2 on usage, I/O or schema errors.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .congestion import CongestionEvaluation, path_label
from .dynamics import DynamicsKind, integrate, write_trajectory_csv
from .equilibrium import (
    TOL,
    check_concavity,
    check_dissipative,
    check_potential,
    equilibrium_representations,
    maximize_potential,
    sne_check,
    solve_vi,
)
from .errors import GameError, SpecError
from .lyapunov import ANCHORED, PAIRED, LyapunovKind, make_lyapunov, monotonicity_report
from .specfile import load_spec

REPORT_SCHEMA = "compgame-report v1"
EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_atomic(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CG_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"CG_SEED must be an integer, got {env!r}") from None


def initial_profile(game, spec: str, rng) -> np.ndarray:
    """uniform | dirichlet | vertex:<i> or vertex:<i,j,...> | explicit:<comma-separated shares>."""
    if spec == "uniform":
        return game.uniform()
    if spec == "dirichlet":
        return game.random_profile(rng)
    kind, _, rest = spec.partition(":")
    if kind == "vertex":
        try:
            idx = [int(v) for v in rest.split(",")]
        except ValueError:
            raise UsageError(f"bad vertex spec {spec!r}") from None
        if len(idx) == 1:
            idx = idx * game.n
        if len(idx) != game.n or any(not 0 <= c < k for c, k in zip(idx, game.sizes)):
            raise UsageError(f"vertex {idx} does not fit choice set sizes {list(game.sizes)}")
        return game.vertex(idx)
    if kind == "explicit":
        try:
            vals = np.array([float(v) for v in rest.split(",")])
        except ValueError:
            raise UsageError(f"bad explicit profile {spec!r}") from None
        try:
            return game.profile(vals).flat
        except GameError as exc:
            raise UsageError(f"explicit profile: {exc}") from None
    raise UsageError(f"unknown --init {spec!r}")


def _report(args, loaded, seed, command, result, passed, tolerances, config=None) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "engine_version": __version__,
        "command": command,
        "spec": {"source": loaded.source, "hash": loaded.digest, "name": loaded.game.name},
        "seed": seed,
        "tolerances": tolerances,
        "config": config or {},
        "result": result,
        "verdict": "PASS" if passed else "FAIL",
    }


def _emit(args, report):
    write_atomic(args.out, json.dumps(_clean(report), indent=2, sort_keys=True) + "\n")


def _anchor(game, rng):
    """An equilibrium to anchor the distance-type Lyapunov candidates."""
    if game.potential is not None:
        best = maximize_potential(game, rng=rng)
        if best.vi_residual is not None and best.vi_residual <= 1e-6:
            return best.x
    return solve_vi(game).x


def cmd_simulate(args, loaded, seed, rng):
    game = loaded.game
    kind = DynamicsKind(args.dynamics)
    x0 = initial_profile(game, args.init, rng)
    lyap_kind = None
    if args.lyapunov == "auto":
        lyap_kind = LyapunovKind.POTENTIAL if game.potential is not None else PAIRED[kind]
        if lyap_kind in ANCHORED:
            lyap_kind = None
    elif args.lyapunov != "none":
        lyap_kind = LyapunovKind(args.lyapunov)
    H = None
    if lyap_kind is not None:
        anchor = _anchor(game, rng) if lyap_kind in ANCHORED else None
        H = make_lyapunov(lyap_kind, game, anchor)
    traj = integrate(kind, game, x0, dt=args.dt, t_end=args.t_end, lyapunov=H)
    text = write_trajectory_csv(traj, game)
    write_atomic(args.out, text)
    meta = _report(
        args, loaded, seed, "simulate",
        {
            "status": traj.status,
            "message": traj.message,
            "steps": len(traj) - 1,
            "final_profile": traj.final,
            "final_vi_residual": traj.vi_residual[-1],
            "final_field_norm": traj.field_norm[-1],
            "lyapunov": lyap_kind.value if lyap_kind else None,
            "columns": ["t", *game.column_labels(), "vi_residual", "field_norm", "lyapunov"],
            "note": "terminal field norm is a heuristic for the omega-limit, not a proof of convergence",
        },
        traj.status != "aborted",
        {"rest_tol": 1e-9},
        {"dynamics": kind.value, "dt": args.dt, "t_end": args.t_end, "init": args.init},
    )
    if args.out and args.out != "-":
        write_atomic(args.out + ".meta.json", json.dumps(_clean(meta), indent=2, sort_keys=True) + "\n")
    if traj.status == "aborted":
        sys.stderr.write(f"aborted: {traj.message}\nlast valid state at t={traj.times[-1]!r}: {traj.final.tolist()}\n")
        return EXIT_FAIL
    return EXIT_PASS


def cmd_equilibrium(args, loaded, seed, rng):
    game = loaded.game
    tol = args.tol if args.tol is not None else TOL
    solver = None
    if args.init.startswith("explicit:"):
        x = initial_profile(game, args.init, rng)
        solver = {"method": "given"}
    elif game.potential is not None:
        best = maximize_potential(game, rng=rng)
        x = best.x
        solver = {"method": "potential ascent", "converged": best.converged, "value": best.value, "degenerate": best.degenerate}
        # the ascent stops at a projected-gradient norm of 1e-8; polish with extragradient steps
        polished = solve_vi(game, x, max_iters=2000)
        if polished.vi_residual < (best.vi_residual if best.vi_residual is not None else np.inf):
            x = polished.x
            solver["polished"] = True
    else:
        sol = solve_vi(game, initial_profile(game, args.init, rng))
        x = sol.x
        solver = {"method": "extragradient", "converged": sol.converged, "iterations": sol.iterations}
    rep = equilibrium_representations(game, x, tol)
    sne = sne_check(game, x, samples=args.samples, rng=rng, tol=tol)
    result = {
        "profile": {pid: x[sl] for pid, sl in zip(game.ids, game.slices)},
        "residuals": rep.as_dict(),
        "sne": {"passed": sne.passed, "worst": sne.worst, "checked": sne.checked},
        "solver": solver,
    }
    passed = bool(rep.verdict)
    emit = _report(args, loaded, seed, "equilibrium", result, passed, {"tol": tol}, {"init": args.init, "samples": args.samples})
    _emit(args, emit)
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_verify_potential(args, loaded, seed, rng):
    game = loaded.game
    tol = args.tol if args.tol is not None else 1e-5
    if game.potential is None:
        raise UsageError(f"spec {loaded.source!r} has no potential block")
    rep = check_potential(game, args.samples, rng=rng, tol=tol, jobs=args.jobs)
    conc = check_concavity(game, segments=args.samples, rng=rng)
    result = {
        "potential": rep.as_dict(),
        "concavity": {"passed": conc.passed, "worst_violation": conc.worst_violation, "segments": conc.segments, "tol": conc.tol},
    }
    _emit(args, _report(args, loaded, seed, "verify-potential", result, rep.passed, {"defect_tol": tol, "concavity_tol": conc.tol}, {"samples": args.samples}))
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_verify_dissipative(args, loaded, seed, rng):
    game = loaded.game
    tol = args.tol if args.tol is not None else 1e-8
    rep = check_dissipative(game, pairs=args.samples, rng=rng, tol=tol, jobs=args.jobs)
    _emit(args, _report(args, loaded, seed, "verify-dissipative", rep.as_dict(), rep.dissipative, {"tol": tol, "eig_tol": 1e-6, "margin": 1e-8}, {"pairs": args.samples}))
    return EXIT_PASS if rep.dissipative else EXIT_FAIL


def cmd_lyapunov(args, loaded, seed, rng):
    game = loaded.game
    kind = DynamicsKind(args.dynamics)
    lkind = LyapunovKind(args.kind) if args.kind else PAIRED[kind]
    x0 = initial_profile(game, args.init, rng)
    anchor = _anchor(game, rng) if lkind in ANCHORED else None
    H = make_lyapunov(lkind, game, anchor)
    traj = integrate(kind, game, x0, dt=args.dt, t_end=args.t_end, lyapunov=H)
    rep = monotonicity_report(lkind, traj, game, anchor, values=traj.lyapunov)
    result = rep.as_dict()
    result.update({"trajectory_status": traj.status, "t_end": traj.times[-1]})
    passed = rep.passed and traj.status != "aborted"
    _emit(args, _report(args, loaded, seed, "lyapunov", result, passed, {"lyap_tol": rep.tol},
                        {"dynamics": kind.value, "dt": args.dt, "t_end": args.t_end, "init": args.init}))
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_paths(args, loaded, seed, rng):
    game = loaded.game
    if not isinstance(game.evaluation, CongestionEvaluation):
        raise UsageError(f"spec {loaded.source!r} does not describe a network")
    model = game.evaluation.model
    result = {
        d.id: {
            "origin": d.origin,
            "destination": d.destination,
            "paths": [path_label(model.network, p) for p in paths],
            "arc_indices": [list(p) for p in paths],
        }
        for d, paths in zip(model.demands, model.paths)
    }
    _emit(args, _report(args, loaded, seed, "paths", result, True, {}))
    return EXIT_PASS


COMMANDS = {
    "simulate": cmd_simulate,
    "equilibrium": cmd_equilibrium,
    "verify-potential": cmd_verify_potential,
    "verify-dissipative": cmd_verify_dissipative,
    "lyapunov": cmd_lyapunov,
    "paths": cmd_paths,
}


def _positive(text):
    v = float(text)
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", required=True, help="cg-spec JSON file or builtin:NAME")
    common.add_argument("--seed", type=int, default=None, help="random seed (default: $CG_SEED, else 0)")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--tol", type=_positive, default=None, help="override the verdict tolerance")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for independent samples")
    common.add_argument("--init", default="uniform", help="uniform | dirichlet | vertex:<i>[,<j>...] | explicit:<shares>")

    dyn = argparse.ArgumentParser(add_help=False)
    dyn.add_argument("--dynamics", default="smith", choices=[k.value for k in DynamicsKind])
    dyn.add_argument("--dt", type=_positive, default=1e-2)
    dyn.add_argument("--t-end", type=_positive, default=10.0)

    samples = argparse.ArgumentParser(add_help=False)
    samples.add_argument("--samples", type=int, default=100)

    parser = argparse.ArgumentParser(prog="compgame", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common, dyn], help="integrate a dynamics and write a CSV trajectory")
    p.add_argument("--lyapunov", default="auto", choices=["auto", "none", *[k.value for k in LyapunovKind]])
    sub.add_parser("equilibrium", parents=[common, samples], help="find or check an equilibrium")
    sub.add_parser("verify-potential", parents=[common, samples], help="check the potential condition")
    sub.add_parser("verify-dissipative", parents=[common, samples], help="sampled dissipativity check")
    p = sub.add_parser("lyapunov", parents=[common, dyn], help="monotonicity of a Lyapunov candidate along a trajectory")
    p.add_argument("--kind", default=None, choices=[k.value for k in LyapunovKind])
    sub.add_parser("paths", parents=[common], help="list the admissible paths of a network spec")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_PASS
    try:
        if getattr(args, "dt", None) is not None and args.t_end < args.dt:
            raise UsageError("--t-end must be at least --dt")
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        seed = _seed(args)
        loaded = load_spec(args.spec)
        rng = np.random.default_rng(seed)
        return COMMANDS[args.command](args, loaded, seed, rng)
    except SpecError as exc:
        sys.stderr.write(f"spec error: {exc}\n")
        return EXIT_USAGE
    except (UsageError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except GameError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
