"""Command-line front end: ``isobubble <command> SPEC.json [options]``.

A problem spec is a JSON object::

    {"density": {"family": "power", "p": 1}, "masses": [1, 2, 3], "options": {}}

Exit codes: 0 success, 1 a nonstandard layout won, 2 bad input,
3 numerical failure, 4 density hypotheses violated.
"""
import argparse
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .configuration import (Configuration, Interval, MassSpec, build_standard,
                            region_masses, standard_sides, stacks_for, total_perimeter)
from .density import Density, QuadratureSettings, check_flags
from .exceptions import (FlagViolation, HypothesisViolation, LogConcavityRequired,
                         MaxStepsExceeded, NonConvergence, StepFailure)
from .flow import (FlowSettings, FlowState, TimeReached, perimeter_rate, perimeter_rate2,
                   run_until)
from .moves import eliminate_alternating, merge_across_origin
from .optimizer import SignAssignment, bifurcation_search, inflation_experiment, verify_theorem

EXIT_OK, EXIT_NONSTANDARD, EXIT_INPUT, EXIT_NUMERIC, EXIT_HYPOTHESIS = 0, 1, 2, 3, 4

RANDOM_MASS_RANGE = (0.05, 20.0)


class InputError(Exception):
    pass


@dataclass
class ProblemSpec:
    density: Density
    masses: tuple
    options: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict):
            raise InputError("problem spec must be a JSON object")
        if "density" not in obj:
            raise InputError("problem spec needs a 'density' entry")
        density = Density.from_json(obj["density"])
        masses = obj.get("masses", obj.get("tail"))
        if not isinstance(masses, list) or not masses:
            raise InputError("'masses' must be a nonempty list")
        try:
            masses = tuple(float(m) for m in masses)
        except (TypeError, ValueError):
            raise InputError("masses must be numbers") from None
        if not all(math.isfinite(m) and m > 0 for m in masses):
            raise InputError("masses must be positive and finite")
        options = obj.get("options", {})
        if not isinstance(options, dict):
            raise InputError("'options' must be an object")
        return cls(density, masses, options)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from None
        return cls.from_json(obj)

    @property
    def mass_spec(self):
        return MassSpec.from_unsorted(self.masses)


def _emit(obj, out):
    out.write(json.dumps(obj, indent=2, allow_nan=False) + "\n")


def _quad(spec):
    tol = spec.options.get("quad_tol")
    return QuadratureSettings.from_env(**({"abs_tol": tol, "rel_tol": tol} if tol else {}))


def _flow_settings(spec):
    keys = ("dt_init", "error_tol", "origin_guard", "collision_tol", "max_steps")
    return FlowSettings(**{k: spec.options[k] for k in keys if k in spec.options})


def _config_json(c, q):
    return {
        "intervals": [iv.to_json() for iv in c.intervals],
        "endpoints": list(c.endpoints),
        "perimeter": total_perimeter(c),
        "region_masses": {str(r): m for r, m in region_masses(c, q).items()},
    }


# ---------------------------------------------------------------------------

def cmd_standard(args, out):
    spec = ProblemSpec.load(args.spec)
    q = _quad(spec)
    c = build_standard(spec.mass_spec, spec.density, args.orient, q)
    _emit({"density": spec.density.to_json(), "masses": list(spec.mass_spec.masses),
           **_config_json(c, q)}, out)
    return EXIT_OK


def _random_specs(n, count, seed):
    rng = np.random.default_rng(seed)
    lo, hi = np.log(RANDOM_MASS_RANGE[0]), np.log(RANDOM_MASS_RANGE[1])
    return [MassSpec.from_unsorted(np.exp(rng.uniform(lo, hi, n))) for _ in range(count)]


def cmd_verify(args, out):
    spec = ProblemSpec.load(args.spec)
    d, q = spec.density, _quad(spec)
    if not d.satisfies_theorem_hypotheses and not args.allow_invalid:
        raise HypothesisViolation(f"{d} does not satisfy the n-bubble hypotheses "
                                  "(use --allow-invalid to run anyway)")
    splits = args.splits if args.splits is not None else int(spec.options.get("split_depth", 0))
    if args.random:
        seed = args.seed if args.seed is not None else spec.options.get("seed", 0)
        n = args.n_regions or len(spec.masses)
        reports = [verify_theorem(m, d, splits, True, q) for m in _random_specs(n, args.random, seed)]
        failures = [r for r in reports if not r.winner_is_standard]
        gaps = [r.min_gap for r in reports if math.isfinite(r.min_gap)]
        _emit({"density": d.to_json(), "n_regions": n, "count": len(reports), "seed": seed,
               "all_standard": not failures, "min_gap": min(gaps) if gaps else None,
               "failures": [r.to_json() for r in failures]}, out)
        return EXIT_NONSTANDARD if failures else EXIT_OK
    rep = verify_theorem(spec.mass_spec, d, splits, True, q)
    _emit(rep.to_json(), out)
    return EXIT_OK if rep.winner_is_standard else EXIT_NONSTANDARD


def _alternating_scenario(spec, q):
    if len(spec.masses) != 4:
        raise InputError("the alternating scenario needs exactly four masses")
    m1, m2, m3, m4 = sorted(spec.masses)
    # region 1 is inner on the left and outer on the right; region 2 the reverse
    c = Configuration.from_stacks([(1, m1), (2, m3)], [(2, m2), (1, m4)], spec.density, q)
    return c, (1, 2)


def _merge_scenario(spec, q):
    ms = spec.mass_spec
    left, right = stacks_for(ms, standard_sides(ms.n))
    left = [(r, m) for r, m in left if r != 1]
    right = [(r, m) for r, m in right if r != 1]
    half = ms.masses[0] / 2
    c = Configuration.from_stacks([(1, half)] + left, [(1, half)] + right, spec.density, q)
    return c, 1


def _custom_scenario(spec):
    opts = spec.options
    try:
        ivs = [Interval(float(a), float(b), int(r)) for a, b, r in opts["intervals"]]
        moving = opts.get("moving", [])
        if isinstance(moving, dict):
            moving = list(moving.items())
        dirs = {float(x): int(s) for x, s in moving}
        t_end = float(opts.get("time", 0.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"custom flow needs options.intervals, options.moving, options.time ({exc})") from None
    return Configuration(ivs, spec.density), dirs, t_end


def cmd_flow(args, out):
    spec = ProblemSpec.load(args.spec)
    q, settings = _quad(spec), _flow_settings(spec)
    d = spec.density
    if not d.satisfies_theorem_hypotheses and not args.allow_invalid:
        raise HypothesisViolation(f"{d} does not satisfy the n-bubble hypotheses "
                                  "(use --allow-invalid to run anyway)")
    if args.scenario == "alternating":
        c, pair = _alternating_scenario(spec, q)
        _, rep = eliminate_alternating(c, pair, q, trajectory=True, settings=settings)
        traj = rep.trajectory
        result = {"scenario": "alternating", "report": rep.to_json(), **rep.detail}
    elif args.scenario == "merge":
        c, r = _merge_scenario(spec, q)
        _, rep = merge_across_origin(c, r, q, require_log_concave=not args.allow_invalid,
                                     trajectory=True, settings=settings)
        traj = rep.trajectory
        result = {"scenario": "merge", "report": rep.to_json(), **rep.detail}
    else:
        c, dirs, t_end = _custom_scenario(spec)
        if args.time is not None:
            t_end = args.time
        s0 = FlowState.from_configuration(c, dirs)
        s1, traj = run_until(s0, TimeReached(t_end), settings)
        m0, m1 = s0.region_masses(), s1.region_masses()
        result = {"scenario": "custom", "report": {
            "move": "flow", "before": s0.perimeter(), "after": s1.perimeter(),
            "mass_drift": max(abs(m0[r] - m1.get(r, 0.0)) for r in m0), "applied": True},
            "perimeter_rate": perimeter_rate(s0), "perimeter_rate2": perimeter_rate2(s0)}
    result.update({"stop_reason": traj.reason, "steps": traj.n_steps, "rows": len(traj)})
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            traj.to_csv(fh)
    _emit(result, out)
    return EXIT_OK


def _parse_grid(text):
    try:
        lo, hi, steps = text.split(":")
        return float(lo), float(hi), int(steps)
    except ValueError:
        raise InputError(f"grid must look like lo:hi:steps, got {text!r}") from None


def cmd_sweep(args, out):
    spec = ProblemSpec.load(args.spec)
    if args.vary != "M1":
        raise InputError("only --vary M1 is supported")
    grid_text = args.grid or spec.options.get("grid")
    if not grid_text:
        raise InputError("a grid is required (--grid lo:hi:steps)")
    grid = _parse_grid(grid_text)
    if grid[2] < 1 or not 0 < grid[0] <= grid[1]:
        raise InputError(f"invalid grid {grid_text!r}")
    rep = bifurcation_search(spec.masses, spec.density, grid, q=_quad(spec), n_jobs=args.n_jobs)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            rep.to_csv(fh)
        _emit(rep.to_json(), out)
    else:
        out.write(rep.to_csv())
    return EXIT_OK if rep.message.startswith("no bifurcation") else EXIT_NONSTANDARD


def cmd_inflate(args, out):
    spec = ProblemSpec.load(args.spec)
    try:
        deltas = [float(x) for x in args.deltas.split(",")] if args.deltas else \
            [float(x) for x in spec.options.get("deltas", [0.5])]
    except ValueError:
        raise InputError("deltas must be comma-separated numbers") from None
    comp = None
    if args.competitor:
        if set(args.competitor) - {"+", "-"}:
            raise InputError("competitor must be a string of + and - signs")
        comp = SignAssignment(tuple(1 if ch == "+" else -1 for ch in args.competitor))
    comp, rows = inflation_experiment(spec.mass_spec, spec.density, deltas,
                                      competitor=comp, q=_quad(spec))
    _emit({"density": spec.density.to_json(), "masses": list(spec.mass_spec.masses),
           "target": spec.mass_spec.n - 1, "competitor": str(comp),
           "rows": [r.to_json() for r in rows]}, out)
    return EXIT_OK


def cmd_check_density(args, out):
    spec_obj = None
    if args.spec:
        try:
            with open(args.spec, encoding="utf-8") as fh:
                spec_obj = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read {args.spec}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.spec}: malformed JSON ({exc.msg})") from None
        d = Density.from_json(spec_obj.get("density", spec_obj) if isinstance(spec_obj, dict) else spec_obj)
    else:
        d = Density.from_json({"family": args.family, "p": args.p, "q": args.q})
    report = check_flags(d, samples=args.samples, strict=False)
    _emit(report.to_json(), out)
    if not report.consistent:
        return EXIT_HYPOTHESIS
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="isobubble", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("standard", help="build the standard configuration")
    sp.add_argument("spec")
    sp.add_argument("--orient", choices=["largest_right", "largest_left"], default="largest_right")
    sp.set_defaults(func=cmd_standard)

    sp = sub.add_parser("verify", help="compare the standard layout against all competitors")
    sp.add_argument("spec")
    sp.add_argument("--splits", type=int, default=None, help="assignments to split-check")
    sp.add_argument("--allow-invalid", action="store_true")
    sp.add_argument("--random", type=int, default=0, metavar="N",
                    help="verify N random mass sets instead of the problem file's masses")
    sp.add_argument("--n-regions", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("flow", help="run a perimeter-reducing flow and log its trajectory")
    sp.add_argument("spec")
    sp.add_argument("--scenario", choices=["merge", "alternating", "custom"], required=True)
    sp.add_argument("--csv", metavar="PATH")
    sp.add_argument("--time", type=float, default=None, help="end time (custom scenario)")
    sp.add_argument("--allow-invalid", action="store_true")
    sp.set_defaults(func=cmd_flow)

    sp = sub.add_parser("sweep", help="sweep the smallest mass and tabulate gaps")
    sp.add_argument("spec")
    sp.add_argument("--vary", default="M1")
    sp.add_argument("--grid", metavar="LO:HI:STEPS")
    sp.add_argument("--csv", metavar="PATH")
    sp.add_argument("--n-jobs", type=int, default=None)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("inflate", help="inflate the second-largest mass in two layouts")
    sp.add_argument("spec")
    sp.add_argument("--deltas", help="comma-separated inflation amounts")
    sp.add_argument("--competitor", help="sign string such as --+")
    sp.set_defaults(func=cmd_inflate)

    sp = sub.add_parser("check-density", help="numerically confirm a density's declared flags")
    sp.add_argument("spec", nargs="?")
    sp.add_argument("--family", default="power")
    sp.add_argument("--p", type=float, default=1.0)
    sp.add_argument("--q", type=float, default=0.0)
    sp.add_argument("--samples", type=int, default=1000)
    sp.set_defaults(func=cmd_check_density)
    return p


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (HypothesisViolation, LogConcavityRequired, FlagViolation) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_HYPOTHESIS
    except (NonConvergence, StepFailure, MaxStepsExceeded, FloatingPointError,
            OverflowError) as exc:
        err.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except (InputError, ValueError, KeyError, TypeError) as exc:
        err.write(f"input error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
