"""Command-line interface.

Subcommands:

    eval            evaluate a model once and print the stage trace
    sweep           evaluate over a parameter/covariate grid, write CSV
    effect          contrast a target covariate at two levels (RR/SR/OR)
    marginalize     average the probability over a covariate distribution
    check-recovery  balance condition vs. marginal risk-ratio recovery
    orderings       partition flow orderings by observational agreement

Data goes to stdout (or --out); diagnostics go to stderr.  Exit codes:
0 success, 2 model parse error, 3 config/binding error, 4 invalid or
non-finite evaluation, 5 effect error, 6 marginalization error, 7 recovery
error, 8 orderings error.  Identical configs and flags produce byte-identical
output files.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
from dataclasses import dataclass

from .config import CONFIG_DIR_ENV, ConfigError, NameResolver, RunConfig, load_config
from .dsl import ModelSpec, ModelSyntaxError, parse
from .engine import BindingError, EvaluationError, evaluate
from .marginal import (
    CovariateDistribution,
    DistributionError,
    MarginalizationError,
    marginalize,
    recovery_condition,
    recovery_equivalence_suite,
)
from .measures import EffectQuery, Measure, effect
from .orderings import enumerate_orderings

__all__ = ["main", "SweepAxis", "SweepSpec"]


class CommandExit(Exception):
    """Terminate the command with a specific exit code and message."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class SweepAxis:
    """One varied name: its display form, resolution, and grid values."""

    display: str
    kind: str  # "param" or "covariate"
    target: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class SweepSpec:
    """Sweep axes plus the fixed bindings for everything else.

    Construction removes varied targets from the fixed bindings, so the two
    are disjoint by the time rows are generated.
    """

    axes: tuple[SweepAxis, ...]
    fixed_params: dict[str, float]
    fixed_covariates: dict[str, float]


def _emit(obj, out_path: str | None = None) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if out_path:
        _write_text(out_path, text)
    else:
        sys.stdout.write(text)


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    except OSError as exc:
        raise CommandExit(3, f"cannot write {path}: {exc}") from None


def _load_inputs(args) -> tuple[ModelSpec, dict[str, float], dict[str, float], RunConfig]:
    config = load_config(args.config) if args.config else RunConfig()
    model_text = args.model or config.model
    if not model_text:
        raise ConfigError("no model given: pass --model or a config with a \"model\" entry")
    spec = parse(model_text)
    resolver = NameResolver(spec, config.aliases)
    params = resolver.resolve_params(config.params)
    covariates = dict(config.covariates)
    resolver.apply_binds(params, covariates, args.bind or [])
    return spec, params, covariates, config


def _stage_records(result) -> list[dict]:
    return [
        {
            "position": stage.position,
            "kind": stage.kind.value,
            "eta": stage.eta,
            "probability": stage.probability,
            "valid": stage.valid,
        }
        for stage in result.stages
    ]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_eval(args) -> int:
    spec, params, covariates, _ = _load_inputs(args)
    result = evaluate(spec, params, covariates)
    _emit(
        {
            "probability": result.probability,
            "valid": result.valid,
            "stages": _stage_records(result),
        }
    )
    if not result.valid:
        flagged = [s.position for s in result.stages if not s.valid]
        print(f"invalid evaluation: stage(s) {flagged} left [0, 1]", file=sys.stderr)
        return 4
    return 0


def _parse_vary(text: str) -> tuple[str, float, float, float]:
    name, eq, rest = text.partition("=")
    parts = rest.split(":")
    if not eq or len(parts) != 3:
        raise CommandExit(3, f"bad --vary {text!r}: expected name=start:stop:step")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise CommandExit(3, f"bad --vary {text!r}: start:stop:step must be numbers") from None
    if not (math.isfinite(start) and math.isfinite(stop) and math.isfinite(step)):
        raise CommandExit(3, f"bad --vary {text!r}: values must be finite")
    if step <= 0:
        raise CommandExit(3, f"bad --vary {text!r}: step must be positive")
    if stop < start:
        raise CommandExit(3, f"bad --vary {text!r}: stop is below start (empty grid)")
    return name, start, stop, step


def _axis_values(start: float, stop: float, step: float) -> tuple[float, ...]:
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(start + i * step for i in range(count))


def build_sweep(
    spec: ModelSpec,
    resolver: NameResolver,
    params: dict[str, float],
    covariates: dict[str, float],
    vary: list[str],
) -> SweepSpec:
    axes: list[SweepAxis] = []
    for text in vary:
        name, start, stop, step = _parse_vary(text)
        canonical = resolver.param(name)
        if canonical is not None:
            axis = SweepAxis(name, "param", canonical, _axis_values(start, stop, step))
        elif resolver.is_covariate(name) or name in covariates:
            axis = SweepAxis(name, "covariate", name, _axis_values(start, stop, step))
        else:
            raise CommandExit(3, f"--vary name {name!r} is neither a parameter nor a covariate")
        axes.append(axis)
    displays = [a.display for a in axes]
    if len(set(displays)) != len(displays):
        raise CommandExit(3, f"duplicate --vary names: {displays}")
    targets = {(a.kind, a.target) for a in axes}
    fixed_params = {k: v for k, v in params.items() if ("param", k) not in targets}
    fixed_covariates = {k: v for k, v in covariates.items() if ("covariate", k) not in targets}
    return SweepSpec(axes=tuple(axes), fixed_params=fixed_params, fixed_covariates=fixed_covariates)


def run_sweep(spec: ModelSpec, sweep: SweepSpec):
    """Yield one row per grid point, last axis fastest (odometer order)."""
    for combo in itertools.product(*(axis.values for axis in sweep.axes)):
        params = dict(sweep.fixed_params)
        covariates = dict(sweep.fixed_covariates)
        for axis, value in zip(sweep.axes, combo):
            if axis.kind == "param":
                params[axis.target] = value
            else:
                covariates[axis.target] = value
        result = evaluate(spec, params, covariates)
        yield combo, result


def cmd_sweep(args) -> int:
    spec, params, covariates, config = _load_inputs(args)
    resolver = NameResolver(spec, config.aliases)
    sweep = build_sweep(spec, resolver, params, covariates, args.vary or [])
    if not args.out:
        raise CommandExit(3, "sweep requires --out")
    rows = []
    for combo, result in run_sweep(spec, sweep):
        rows.append(
            [f"{v:.17g}" for v in combo] + [f"{result.probability:.17g}", str(result.valid).lower()]
        )
    try:
        with open(args.out, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow([axis.display for axis in sweep.axes] + ["probability", "valid"])
            writer.writerows(rows)
    except OSError as exc:
        raise CommandExit(3, f"cannot write {args.out}: {exc}") from None
    print(f"wrote {len(rows)} rows to {args.out}", file=sys.stderr)
    return 0


def cmd_effect(args) -> int:
    spec, params, covariates, _ = _load_inputs(args)
    context = {k: v for k, v in covariates.items() if k != args.target}
    try:
        query = EffectQuery(
            target=args.target,
            context=context,
            low=args.low,
            high=args.high,
            measure=Measure(args.measure),
        )
    except ValueError as exc:
        raise CommandExit(5, f"bad effect query: {exc}") from None
    report = effect(spec, params, query)
    _emit(
        {
            "measure": query.measure.value,
            "target": query.target,
            "low": query.low,
            "high": query.high,
            "value": report.value,
            "valid": report.valid,
            "endpoint_probs": list(report.endpoint_probs),
        }
    )
    if not report.valid:
        print("effect is not valid (invalid endpoint or zero denominator)", file=sys.stderr)
        return 5
    return 0


def cmd_marginalize(args) -> int:
    spec, params, covariates, config = _load_inputs(args)
    rows = config.distributions.get(args.over)
    if rows is None:
        raise CommandExit(6, f"config has no distribution for covariate {args.over!r}")
    try:
        over = CovariateDistribution.from_table(args.over, rows)
    except DistributionError as exc:
        raise CommandExit(6, str(exc)) from None
    context = {k: v for k, v in covariates.items() if k != args.over}
    try:
        probability = marginalize(spec, params, over, context)
    except (DistributionError, MarginalizationError) as exc:
        raise CommandExit(6, str(exc)) from None
    _emit({"covariate": args.over, "probability": probability})
    return 0


def _derive_recovery_inputs(args) -> tuple[float, float, float, float, float]:
    flags = (args.eta1, args.beta, args.gamma, args.pi0, args.pi1)
    if all(v is not None for v in flags):
        return flags
    if not args.config:
        raise CommandExit(7, "check-recovery needs --eta1/--beta/--gamma/--pi0/--pi1 or a config")
    spec, params, covariates, config = _load_inputs(args)
    names = {"f1.intercept", "f1.age", "f2.trt1", "f3.trt2"}
    if not names <= set(params):
        missing = sorted(names - set(params))
        raise CommandExit(7, f"config params missing {', '.join(missing)}; cannot derive inputs")
    if args.eta1 is not None:
        eta1 = args.eta1
    else:
        if "age" not in covariates:
            raise CommandExit(7, "config covariates must bind age to derive eta1")
        eta1 = math.exp(params["f1.intercept"] + params["f1.age"] * covariates["age"])
    beta = args.beta if args.beta is not None else params["f2.trt1"]
    gamma = args.gamma if args.gamma is not None else params["f3.trt2"]
    pi0, pi1 = args.pi0, args.pi1
    if pi0 is None or pi1 is None:
        rows = config.distributions.get("trt2")
        if rows is None:
            raise CommandExit(7, "config has no trt2 distribution; pass --pi0/--pi1")
        found: dict[float, float] = {}
        for row in rows:
            context = {str(k): float(v) for k, v in dict(row.get("context", {})).items()}
            if float(row.get("value", math.nan)) == 1.0 and set(context) == {"trt1"}:
                found[context["trt1"]] = float(row["probability"])
        if not {0.0, 1.0} <= set(found):
            raise CommandExit(7, "trt2 distribution must give value 1 rows for trt1=0 and trt1=1")
        pi0 = found[0.0] if pi0 is None else pi0
        pi1 = found[1.0] if pi1 is None else pi1
    return eta1, beta, gamma, pi0, pi1


def cmd_check_recovery(args) -> int:
    if args.trials is not None:
        report = recovery_equivalence_suite(
            n_random=args.trials, n_constructed=args.constructed, seed=args.seed
        )
        _emit(
            {
                "n_random": report.n_random,
                "n_constructed": report.n_constructed,
                "n_agree": report.n_agree,
                "n_disagree": report.n_disagree,
                "all_agree": report.all_agree,
                "n_redrawn_invalid": report.n_redrawn_invalid,
                "n_redrawn_ambiguous": report.n_redrawn_ambiguous,
                "n_redrawn_infeasible": report.n_redrawn_infeasible,
                "seed": report.seed,
            }
        )
        return 0
    eta1, beta, gamma, pi0, pi1 = _derive_recovery_inputs(args)
    try:
        report = recovery_condition(eta1, beta, gamma, pi0, pi1)
    except (ValueError, MarginalizationError) as exc:
        raise CommandExit(7, str(exc)) from None
    _emit(
        {
            "eta1": eta1,
            "beta": beta,
            "gamma": gamma,
            "pi0": pi0,
            "pi1": pi1,
            "marginal_rr": report.lhs_rr,
            "target": report.target,
            "condition_value": report.condition_value,
            "condition_holds": report.condition_holds,
            "rr_matches": report.rr_matches,
            "marginal_low": report.marginal_low,
            "marginal_high": report.marginal_high,
        }
    )
    return 0


def cmd_orderings(args) -> int:
    spec, _, _, _ = _load_inputs(args)
    ranges: dict[str, tuple[float, float]] = {}
    for text in args.range or []:
        name, eq, rest = text.partition("=")
        parts = rest.split(":")
        if not eq or len(parts) != 2:
            raise CommandExit(8, f"bad --range {text!r}: expected name=lo:hi")
        try:
            ranges[name] = (float(parts[0]), float(parts[1]))
        except ValueError:
            raise CommandExit(8, f"bad --range {text!r}: lo and hi must be numbers") from None
    try:
        report = enumerate_orderings(
            spec,
            grid_size=args.grid_size,
            tolerance=args.tolerance,
            covariate_ranges=ranges,
        )
    except ValueError as exc:
        raise CommandExit(8, str(exc)) from None
    _emit(report.to_dict(), args.out)
    return 0


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowcalc",
        description="Evaluate and analyze sequentially composed binary-outcome flow models.",
        epilog=(
            "Exit codes: 0 ok, 2 model parse error, 3 config/binding error, "
            "4 invalid evaluation, 5 effect, 6 marginalization, 7 recovery, 8 orderings. "
            f"Relative config paths are also searched under ${CONFIG_DIR_ENV}."
        ),
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (model, params, covariates, ...)")
    common.add_argument("--model", help="model text; overrides the config's model")
    common.add_argument(
        "--bind",
        action="append",
        metavar="NAME=VALUE",
        help="override one parameter or covariate (repeatable)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="evaluate once, print the stage trace")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="evaluate over a grid, write CSV")
    p.add_argument(
        "--vary",
        action="append",
        metavar="NAME=START:STOP:STEP",
        help="vary one parameter or covariate (repeatable; last one cycles fastest)",
    )
    p.add_argument("--out", help="output CSV path (required)")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("effect", parents=[common], help="two-level contrast of a covariate")
    p.add_argument("--target", required=True, help="covariate to contrast")
    p.add_argument("--low", type=float, default=0.0)
    p.add_argument("--high", type=float, default=1.0)
    p.add_argument("--measure", choices=[m.value for m in Measure], default="RR")
    p.set_defaults(handler=cmd_effect)

    p = sub.add_parser("marginalize", parents=[common], help="average over a covariate distribution")
    p.add_argument("--over", required=True, help="covariate to marginalize (needs a config distribution)")
    p.set_defaults(handler=cmd_marginalize)

    p = sub.add_parser(
        "check-recovery",
        parents=[common],
        help="marginal risk-ratio recovery vs. the balance condition",
    )
    p.add_argument("--eta1", type=float, help="baseline odds scaler")
    p.add_argument("--beta", type=float, help="log risk coefficient of trt1")
    p.add_argument("--gamma", type=float, help="log survival coefficient of trt2")
    p.add_argument("--pi0", type=float, help="prevalence of trt2=1 given trt1=0")
    p.add_argument("--pi1", type=float, help="prevalence of trt2=1 given trt1=1")
    p.add_argument("--trials", type=int, help="run the randomized equivalence suite instead")
    p.add_argument("--constructed", type=int, default=1000, help="balance-constructed draws for --trials")
    p.add_argument("--seed", type=int, default=0, help="seed for --trials")
    p.set_defaults(handler=cmd_check_recovery)

    p = sub.add_parser("orderings", parents=[common], help="partition flow orderings by agreement")
    p.add_argument("--grid-size", type=int, default=8, help="values per parameter axis")
    p.add_argument("--tolerance", type=float, default=1e-10, help="class agreement tolerance")
    p.add_argument(
        "--range",
        action="append",
        metavar="NAME=LO:HI",
        help="treat covariate NAME as continuous over [LO, HI] (default: binary 0/1)",
    )
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(handler=cmd_orderings)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ModelSyntaxError as exc:
        print(f"model parse error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, BindingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except EvaluationError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return 4
    except CommandExit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
