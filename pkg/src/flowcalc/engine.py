"""Evaluation engine: turn a parsed model plus bindings into a probability.

Each flow first computes a strictly positive scaler

    eta = exp(intercept + sum(coefficient * covariate))

from its own parameters, then updates the running probability p:

    ScOdds   p -> p*eta / (p*eta + (1-p))     always stage-valid
    ScRisk1  p -> p*eta                        stage-valid iff result <= 1
    ScRisk0  p -> p + (1-p)*(1-eta)            stage-valid iff result >= 0

ScRisk0 is algebraically 1 - (1-p)*eta; the additive form is used so that
eta = 1 leaves p bit-identical.  Evaluation continues past an invalid stage,
carrying the raw value, so the stage trace is complete; overall validity is
the conjunction of the stage flags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .dsl import Flow, FlowKind, ModelSpec, covariate_names, parameter_names

__all__ = [
    "ParamEnv",
    "CovariateEnv",
    "StageRecord",
    "EvalResult",
    "BindingError",
    "EvaluationError",
    "eta",
    "apply_flow",
    "evaluate",
    "closed_form_model1",
    "closed_form_model2",
    "MODEL1_SPEC",
    "MODEL2_SPEC",
]

#: Reference three-flow models used throughout the docs and tests.  They are
#: built from the same components; the only difference is whether the
#: risk-scaling flow (ScRisk1) runs before or after the survival-scaling flow
#: (ScRisk0), which is enough to make them distinct models.
MODEL1_SPEC = "y = Ber(1/2) | ScOdds(1+age) | ScRisk1(0+trt1) | ScRisk0(0+trt2)"
MODEL2_SPEC = "y = Ber(1/2) | ScOdds(1+age) | ScRisk0(0+trt2) | ScRisk1(0+trt1)"

ParamEnv = Mapping[str, float]
CovariateEnv = Mapping[str, float]


class BindingError(ValueError):
    """A parameter or covariate is missing, unexpected, or non-finite."""


class EvaluationError(ArithmeticError):
    """A numeric stage produced a non-finite (or zero-scaler) result."""


@dataclass(frozen=True)
class StageRecord:
    """Trace entry for one flow: its scaler, the post-flow probability, and
    whether that single stage kept the value inside [0, 1]."""

    position: int
    kind: FlowKind
    eta: float
    probability: float
    valid: bool


@dataclass(frozen=True)
class EvalResult:
    """Final probability, overall validity, and the full stage trace."""

    probability: float
    valid: bool
    stages: tuple[StageRecord, ...]


def eta(flow: Flow, params: ParamEnv, covariates: CovariateEnv) -> float:
    """Scaler of one flow: exp of its linear predictor under the bindings.

    Raises BindingError for an unbound parameter or covariate and
    EvaluationError when exp overflows or underflows to zero (the scaler
    must stay strictly positive and finite).
    """
    lp = 0.0
    prefix = f"f{flow.position}."
    try:
        if flow.predictor.has_intercept:
            lp += params[prefix + "intercept"]
        for term in flow.predictor.terms:
            lp += params[prefix + term] * covariates[term]
    except KeyError as exc:
        raise BindingError(f"unbound name {exc.args[0]!r} for flow {flow.position}") from None
    try:
        value = math.exp(lp)
    except OverflowError:
        raise EvaluationError(f"flow {flow.position}: scaler overflow (exp({lp!r}))") from None
    if value == 0.0 or not math.isfinite(value):
        raise EvaluationError(f"flow {flow.position}: scaler {value!r} is not a positive real")
    return value


def apply_flow(p: float, flow: Flow, eta: float) -> tuple[float, bool]:
    """Apply one flow's update rule to probability p with scaler eta.

    Returns ``(new_p, stage_valid)``.  Expects p in [0, 1] and eta > 0;
    out-of-contract inputs are applied literally (the caller tracks validity).
    """
    if flow.kind is FlowKind.SC_ODDS:
        scaled = p * eta
        return scaled / (scaled + (1.0 - p)), True
    if flow.kind is FlowKind.SC_RISK1:
        scaled = p * eta
        return scaled, scaled <= 1.0
    scaled = p + (1.0 - p) * (1.0 - eta)
    return scaled, scaled >= 0.0


def _check_env(kind: str, env: Mapping[str, float], names: set[str] | list[str]) -> None:
    for name in names:
        value = env[name]
        if not math.isfinite(value):
            raise BindingError(f"{kind} {name!r} is not finite: {value!r}")


def evaluate(spec: ModelSpec, params: ParamEnv, covariates: CovariateEnv) -> EvalResult:
    """Fold the spec's flows over its base probability, left to right.

    Bindings are validated up front: every parameter name of the spec must be
    bound, extra parameter bindings are an error, and every referenced
    covariate must be bound (extra covariates are ignored).  Evaluation
    continues past stages that leave [0, 1] so the trace is complete; a
    non-finite intermediate raises EvaluationError instead.
    """
    required = parameter_names(spec)
    missing = sorted(set(required) - set(params))
    if missing:
        raise BindingError(f"unbound parameters: {', '.join(missing)}")
    extra = sorted(set(params) - set(required))
    if extra:
        raise BindingError(f"unexpected parameters: {', '.join(extra)}")
    referenced = covariate_names(spec)
    missing_cov = sorted(set(referenced) - set(covariates))
    if missing_cov:
        raise BindingError(f"unbound covariates: {', '.join(missing_cov)}")
    _check_env("parameter", params, required)
    _check_env("covariate", covariates, referenced)

    p = float(spec.base_prob)
    valid = True
    stages: list[StageRecord] = []
    for flow in spec.flows:
        scaler = eta(flow, params, covariates)
        try:
            p, stage_ok = apply_flow(p, flow, scaler)
        except ZeroDivisionError:
            raise EvaluationError(f"flow {flow.position}: division by zero") from None
        if not math.isfinite(p):
            raise EvaluationError(f"flow {flow.position}: non-finite probability {p!r}")
        valid = valid and stage_ok
        stages.append(
            StageRecord(position=flow.position, kind=flow.kind, eta=scaler, probability=p, valid=stage_ok)
        )
    return EvalResult(probability=p, valid=valid, stages=tuple(stages))


def _check_scalers(*etas: float) -> None:
    for i, value in enumerate(etas, start=1):
        if not (value > 0.0 and math.isfinite(value)):
            raise ValueError(f"scaler #{i} must be a positive finite real, got {value!r}")


def closed_form_model1(eta1: float, eta2: float, eta3: float) -> float:
    """Closed form of MODEL1_SPEC with base 1/2, as a function of the three
    stage scalers: 1 - (1 + eta1 - eta1*eta2) / (1 + eta1) * eta3."""
    _check_scalers(eta1, eta2, eta3)
    return 1.0 - (1.0 + eta1 - eta1 * eta2) / (1.0 + eta1) * eta3


def closed_form_model2(eta1: float, eta2: float, eta3: float) -> float:
    """Closed form of MODEL2_SPEC with base 1/2: (1 + eta1 - eta3) / (1 + eta1) * eta2.

    eta2 scales risk (the ScRisk1 flow) and eta3 scales survival (the ScRisk0
    flow), matching the parameter roles of closed_form_model1.
    """
    _check_scalers(eta1, eta2, eta3)
    return (1.0 + eta1 - eta3) / (1.0 + eta1) * eta2
