"""Command-line front end for solving, simulating and bounding reputation games.

Exit codes: 0 success, 1 domain violation, 2 usage or parse error,
3 numerical non-convergence.  Every command writes ``manifest.json`` into its
output directory; ``repgame replay manifest.json`` reruns it.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import best_lower_bound, bounds_report, payoff_gap_epsilon, upper_bound
from .errors import InvalidSpec, ReputationError
from .game import BUILTINS, GameSpec, load_spec, rank_monitoring, validate
from .grid import BeliefGrid
from .simulate import SELF, FixedMixed, MimicType, SimConfig, run_batch
from .solver import value_iteration

USAGE, DOMAIN = 2, 1


class UsageError(Exception):
    pass


# -- argument helpers ---------------------------------------------------------

def _deltas(text: str) -> list:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad delta list {text!r}") from e
    return vals


def _spec_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--spec", help="game spec JSON file")
    src.add_argument("--builtin", choices=sorted(BUILTINS), help="built-in game")
    p.add_argument("--mu-commit", type=float, help="builtin prior on the commitment type")
    p.add_argument("--delta", type=float, help="discount factor override")
    p.add_argument("--p", type=float, help="consultant public signal accuracy")
    p.add_argument("--q", type=float, help="consultant private signal accuracy after B")
    p.add_argument("--r", type=float, help="consultant private signal accuracy after N")
    p.add_argument("--out", default=".", help="output directory")
    return p


def _sim_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--horizon", type=int, default=200)
    p.add_argument("--conjecture", default=None,
                   help="Player 2's model of the normal type: an action label, or 'self' "
                        "(default: stage-Nash action)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repgame", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    spec, sim = _spec_parent(), _sim_parent()

    sub.add_parser("validate", parents=[spec], help="check a game spec")

    p = sub.add_parser("solve", parents=[spec], help="value iteration on a belief grid")
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--eta", type=float, default=1e-9)
    p.add_argument("--conjecture", default=None)
    p.add_argument("--mixture-step", type=int, default=None,
                   help="also consider mixed actions on a 1/k lattice")

    p = sub.add_parser("simulate", parents=[spec, sim], help="Monte Carlo play")
    p.add_argument("--strategy", default="nash",
                   help="normal type's play: nash, mimic:<type> or action:<label>")
    p.add_argument("--true-type", default=None, help="fix Player 1's type instead of drawing it")
    p.add_argument("--eta", type=float, default=1e-9)
    p.add_argument("--trace", type=int, default=1, help="number of replications exported as CSV")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("bounds", parents=[spec, sim], help="reputation bounds report")
    p.add_argument("--deltas", type=_deltas, default=[0.9, 0.99, 0.999])

    p = sub.add_parser("check", parents=[spec], help="assumption diagnostics")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--horizon", type=int, default=50)
    p.add_argument("--eta", type=float, default=1e-9)

    p = sub.add_parser("sweep", parents=[spec, sim], help="value and bounds across discount factors")
    p.add_argument("--deltas", type=_deltas, required=True)
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)

    p = sub.add_parser("replay", help="rerun a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="override the output directory")
    return parser


def _resolve_spec(args, **extra) -> GameSpec:
    if args.spec is None and args.builtin is None:
        raise UsageError("one of --spec or --builtin is required")
    try:
        if args.spec is not None:
            spec = load_spec(args.spec)
        else:
            spec = load_spec(builtin=args.builtin, mu_commit=args.mu_commit, p=args.p,
                             q=args.q, r=args.r, **extra)
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise UsageError(f"cannot read spec: {e}") from e
    if args.spec is not None and args.mu_commit is not None:
        raise UsageError("--mu-commit only applies to built-in games")
    if args.delta is not None:
        spec = spec.with_delta(args.delta)
    return spec


def _action_index(spec: GameSpec, label: str) -> int:
    if label not in spec.stage.a1_labels:
        raise UsageError(f"unknown action {label!r}; choose from {list(spec.stage.a1_labels)}")
    return spec.stage.a1_labels.index(label)


def _conjecture(spec: GameSpec, text):
    if text is None:
        return None
    if text == SELF:
        return SELF
    return FixedMixed(np.eye(spec.stage.n1)[_action_index(spec, text)])


def _strategy(spec: GameSpec, text: str):
    if text == "nash":
        return None
    kind, _, arg = text.partition(":")
    if kind == "mimic":
        spec.types.get(arg)
        return MimicType(arg)
    if kind == "action":
        return FixedMixed(np.eye(spec.stage.n1)[_action_index(spec, arg)])
    raise UsageError(f"unknown strategy {text!r}")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_manifest(out: Path, args, spec: GameSpec | None) -> None:
    params = {k: v for k, v in vars(args).items() if k not in ("command", "out")}
    manifest = {"command": args.command, "parameters": params, "output_directory": str(out),
                "tool_version": __version__,
                "spec_source": args.spec if args.spec is not None else args.builtin}
    if spec is not None:
        manifest["resolved_spec"] = spec.to_dict()
    _write_json(out / "manifest.json", manifest)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands -----------------------------------------------------------------

def cmd_validate(args) -> int:
    spec_src = args.spec
    if spec_src is None and args.builtin is None:
        raise UsageError("one of --spec or --builtin is required")
    try:
        if spec_src is not None:
            raw = json.loads(Path(spec_src).read_text(encoding="utf-8"))
            spec = GameSpec.from_dict(raw)
        else:
            spec = _resolve_spec(args)
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise UsageError(f"cannot read spec: {e}") from e
    violations = validate(spec)
    report = {"valid": not violations,
              "violations": [{"code": v.code, "message": v.message} for v in violations]}
    out = _outdir(args)
    _write_json(out / "validation.json", report)
    _write_manifest(out, args, None)
    print(json.dumps(report, indent=2))
    return 0 if not violations else DOMAIN


def cmd_solve(args) -> int:
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    if args.grid < 1:
        raise UsageError("--grid must be at least 1")
    spec = _resolve_spec(args)
    out = _outdir(args)
    from .solver import action_menu
    menu = action_menu(spec.stage.n1, args.mixture_step)
    grid = BeliefGrid(spec.M, args.grid)
    sol = value_iteration(spec, grid, tol=args.tol, conjecture=_conjecture(spec, args.conjecture),
                          menu=menu, eta=args.eta)
    sol.value.to_csv(out / "values.csv", spec)
    sol.policy.to_csv(out / "policy.csv", spec)
    with open(out / "residuals.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "residual"])
        for k, r in enumerate(sol.residuals, 1):
            w.writerow([k, repr(float(r))])
    summary = {"iterations": sol.iterations, "final_residual": float(sol.residuals[-1]),
               "contraction_violations": sol.contraction_violations(),
               "indifference_visits": sol.indifference_visits,
               "value_at_prior": float(sol.value.at(spec.mu0[None])[0]),
               "grid_points": len(grid)}
    _write_json(out / "solve.json", summary)
    _write_manifest(out, args, spec)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_simulate(args) -> int:
    spec = _resolve_spec(args)
    if args.true_type is not None:
        spec.types.index(args.true_type)
    out = _outdir(args)
    cfg = SimConfig(seed=args.seed, horizon=args.horizon, reps=args.reps,
                    p1_strategy=_strategy(spec, args.strategy),
                    conjecture=_conjecture(spec, args.conjecture),
                    true_type=args.true_type, eta=args.eta)
    batch = run_batch(spec, cfg, workers=args.workers)
    batch.write_summary(out / "summary.json")
    for i in range(min(args.trace, batch.reps)):
        batch.trace(i).to_csv(out / f"trace_{i}.csv")
    _write_manifest(out, args, spec)
    print(json.dumps(batch.payoff_estimate().to_dict(), indent=2))
    return 0


def cmd_bounds(args) -> int:
    if not args.deltas:
        raise UsageError("--deltas must not be empty")
    spec = _resolve_spec(args)
    out = _outdir(args)
    report, tails = bounds_report(spec, _conjecture(spec, args.conjecture), args.reps,
                                  args.seed, args.horizon, args.deltas)
    _write_json(out / "bounds.json", report)
    with open(out / "tail.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["type", "k", "survival"])
        for name, fit in tails.items():
            for k, s in enumerate(fit.survival):
                w.writerow([name, k, repr(float(s))])
    _write_manifest(out, args, spec)
    print(json.dumps(report, indent=2))
    for name, err in report["errors"].items():
        print(f"warning: {name}: {err['error']}: {err['message']}", file=sys.stderr)
    return max([e["exit_code"] for e in report["errors"].values()], default=0)


def cmd_check(args) -> int:
    extra = {"allow_uninformative": True} if args.builtin == "consultant" else {}
    spec = _resolve_spec(args, **extra)
    out = _outdir(args)
    report = {"monitoring": rank_monitoring(spec)}
    report["full_rank"] = report["monitoring"]["full_rank"]
    try:
        report["epsilon_gap"] = payoff_gap_epsilon(spec.stage)
    except ReputationError as e:
        report["epsilon_gap"] = None
        report["epsilon_error"] = f"{type(e).__name__}: {e}"
    probes = {}
    strategies = [("nash", None)] + [(f"mimic:{c.name}", MimicType(c.name))
                                     for c in spec.types.commitment_types]
    for name, strat in strategies:
        cfg = SimConfig(seed=args.seed, horizon=args.horizon, reps=args.reps,
                        p1_strategy=strat, eta=args.eta, record_private=False)
        batch = run_batch(spec, cfg)
        mask = batch.data["indiff"]
        kappa = batch.data["kappa"][mask]
        probes[name] = {"visits": int(mask.sum()), "rate": float(mask.mean()),
                        "forecasts_at_visits": np.unique(np.round(kappa, 9), axis=0).tolist()}
    report["indifference_visits"] = {"eta": args.eta, "reps": args.reps,
                                     "horizon": args.horizon, "probes": probes}
    _write_json(out / "check.json", report)
    _write_manifest(out, args, spec)
    print(json.dumps(report, indent=2))
    return 0


def cmd_sweep(args) -> int:
    if not args.deltas:
        raise UsageError("--deltas must not be empty")
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    base = _resolve_spec(args)
    out = _outdir(args)
    conj = _conjecture(base, args.conjecture)
    rows = []
    grid = BeliefGrid(base.M, args.grid)
    for d in args.deltas:
        spec = base.with_delta(d)
        sol = value_iteration(spec, grid, tol=args.tol, conjecture=conj)
        lb = best_lower_bound(spec, conj, args.reps, args.seed, args.horizon)
        rows.append({"delta": d, "V_normalized": float(sol.value.at(spec.mu0[None])[0]),
                     "L": lb.L_normalized, "L_ci_low": lb.ci[0], "L_ci_high": lb.ci[1],
                     "L_type": lb.type_name, "upper": upper_bound(spec)})
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    _write_manifest(out, args, base)
    for row in rows:
        print(f"delta={row['delta']}  V={row['V_normalized']:.6f}  L={row['L']:.6f}  "
              f"upper={row['upper']:.6f}")
    return 0


def cmd_replay(args) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        command = manifest["command"]
        params = dict(manifest["parameters"])
    except (OSError, ValueError, KeyError) as e:
        raise UsageError(f"cannot read manifest: {e}") from e
    if command == "replay":
        raise UsageError("refusing to replay a replay manifest")
    ns = argparse.Namespace(command=command, out=args.out or manifest["output_directory"],
                            **params)
    return COMMANDS[command](ns)


COMMANDS = {"validate": cmd_validate, "solve": cmd_solve, "simulate": cmd_simulate,
            "bounds": cmd_bounds, "check": cmd_check, "sweep": cmd_sweep, "replay": cmd_replay}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    except InvalidSpec as e:
        for v in e.violations:
            print(f"error: {v.code}: {v.message}", file=sys.stderr)
        return DOMAIN
    except ReputationError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
