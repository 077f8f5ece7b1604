"""Marginalization over covariates and the treatment-effect recovery check.

``marginalize`` averages a model's probability over a finite-support
covariate distribution (optionally conditional on the remaining context),
by the law of total probability.  The rest of the module packages one
delicate consequence: when the model MODEL1_SPEC is marginalized over its
survival covariate trt2, the marginal risk ratio of trt1 equals exp(beta),
the conditional one, exactly when a balance condition between the two
conditional trt2 prevalences holds.  ``recovery_condition`` computes both
sides; ``recovery_equivalence_suite`` stress-tests that the two are the
same predicate over random and balance-constructed configurations.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from .dsl import covariate_names, parse
from .engine import MODEL1_SPEC, CovariateEnv, ParamEnv, evaluate

__all__ = [
    "DistributionError",
    "MarginalizationError",
    "CovariateDistribution",
    "marginalize",
    "expected_eta3",
    "RecoveryReport",
    "recovery_condition",
    "RecoverySuiteReport",
    "recovery_equivalence_suite",
]

_SUM_TOL = 1e-12


class DistributionError(ValueError):
    """A covariate distribution is malformed or does not sum to one."""


class MarginalizationError(ValueError):
    """Marginalization hit an invalid model evaluation or undefined ratio."""


@dataclass(frozen=True)
class CovariateDistribution:
    """Finite-support distribution of one covariate, possibly conditional.

    ``prob_fn(value, context)`` returns the probability of ``value`` given
    the conditioning context (the other covariates' bindings).  Support
    values are the only points with mass; probabilities must be nonnegative
    and sum to one for every context the distribution is used with.
    """

    covariate: str
    support: tuple[float, ...]
    prob_fn: Callable[[float, Mapping[str, float]], float]

    @classmethod
    def from_table(cls, covariate: str, rows: Iterable[Mapping]) -> "CovariateDistribution":
        """Build a distribution from rows of {context, value, probability}.

        Rows are grouped by their (exactly equal) context mappings; each
        group must cover the full support once and sum to one.  At lookup
        time a row group applies when all of its context bindings are
        present, with equal values, in the query context; exactly one group
        may apply.
        """
        groups: dict[tuple, dict[float, float]] = {}
        contexts: dict[tuple, dict[str, float]] = {}
        values: set[float] = set()
        for row in rows:
            try:
                ctx = {str(k): float(v) for k, v in dict(row.get("context", {})).items()}
                value = float(row["value"])
                prob = float(row["probability"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DistributionError(f"malformed distribution row {row!r}: {exc}") from None
            if not (math.isfinite(prob) and 0.0 <= prob <= 1.0):
                raise DistributionError(f"row probability {prob!r} outside [0, 1]")
            key = tuple(sorted(ctx.items()))
            group = groups.setdefault(key, {})
            if value in group:
                raise DistributionError(f"duplicate row for value {value} under context {ctx}")
            group[value] = prob
            contexts[key] = ctx
            values.add(value)
        if not groups:
            raise DistributionError("distribution table is empty")
        support = tuple(sorted(values))
        for key, group in groups.items():
            if set(group) != values:
                raise DistributionError(
                    f"context {dict(key)} does not cover the full support {support}"
                )
            total = sum(group.values())
            if abs(total - 1.0) > _SUM_TOL:
                raise DistributionError(f"context {dict(key)} sums to {total!r}, not 1")

        def prob_fn(value: float, context: Mapping[str, float]) -> float:
            matches = [
                key
                for key, ctx in contexts.items()
                if all(k in context and float(context[k]) == v for k, v in ctx.items())
            ]
            if not matches:
                raise DistributionError(f"no distribution rows match context {dict(context)}")
            if len(matches) > 1:
                raise DistributionError(
                    f"ambiguous distribution: {len(matches)} row groups match context {dict(context)}"
                )
            return groups[matches[0]].get(float(value), 0.0)

        return cls(covariate=covariate, support=support, prob_fn=prob_fn)

    def weights(self, context: Mapping[str, float]) -> list[float]:
        """Probabilities over the support under ``context``, validated."""
        probs = [self.prob_fn(v, context) for v in self.support]
        for v, p in zip(self.support, probs):
            if not (math.isfinite(p) and p >= 0.0):
                raise DistributionError(f"probability of {self.covariate}={v} is {p!r}")
        total = sum(probs)
        if abs(total - 1.0) > _SUM_TOL:
            raise DistributionError(
                f"distribution of {self.covariate} sums to {total!r} under context {dict(context)}"
            )
        return probs


def marginalize(
    spec, params: ParamEnv, over: CovariateDistribution, context: CovariateEnv
) -> float:
    """Average the model probability over ``over``, conditional on ``context``.

    Every support evaluation must be valid; an invalid one raises
    MarginalizationError.  If the spec never references the covariate the
    result is the plain evaluation under ``context``.
    """
    if over.covariate in context:
        raise ValueError(f"covariate {over.covariate!r} is both marginalized and fixed")
    weights = over.weights(context)
    if over.covariate not in covariate_names(spec):
        result = evaluate(spec, params, context)
        if not result.valid:
            raise MarginalizationError(f"invalid evaluation under context {dict(context)}")
        return result.probability
    total = 0.0
    for value, weight in zip(over.support, weights):
        result = evaluate(spec, params, {**context, over.covariate: value})
        if not result.valid:
            raise MarginalizationError(
                f"invalid evaluation at {over.covariate}={value} (probability {result.probability!r})"
            )
        total += weight * result.probability
    return total


def expected_eta3(gamma: float, pi: float) -> float:
    """Expected survival scaler of a binary covariate with coefficient gamma
    and prevalence pi: 1 + (exp(gamma) - 1) * pi."""
    if not 0.0 <= pi <= 1.0:
        raise ValueError(f"prevalence must be in [0, 1], got {pi!r}")
    return 1.0 + (math.exp(gamma) - 1.0) * pi


# ---------------------------------------------------------------------------
# Recovery of the conditional risk ratio after marginalizing over trt2
# ---------------------------------------------------------------------------

_MODEL1 = parse(MODEL1_SPEC)


@dataclass(frozen=True)
class RecoveryReport:
    """Marginal risk ratio of trt1 versus its conditional target exp(beta).

    ``condition_value`` is

        (exp(gamma) - 1) * (exp(beta)*pi0 - (1 - eta1*(exp(beta) - 1))*pi1)

    which is zero precisely when marginalizing over trt2 preserves the risk
    ratio; ``condition_holds`` tests it against the condition tolerance and
    ``rr_matches`` compares the marginal RR with exp(beta) in relative terms.
    """

    lhs_rr: float
    target: float
    condition_value: float
    condition_holds: bool
    rr_matches: bool
    marginal_low: float
    marginal_high: float


def recovery_condition(
    eta1: float,
    beta: float,
    gamma: float,
    pi0: float,
    pi1: float,
    condition_tol: float = 1e-12,
    rr_tol: float = 1e-9,
) -> RecoveryReport:
    """Check whether marginalizing MODEL1_SPEC over trt2 keeps RR(trt1) = exp(beta).

    ``pi0`` and ``pi1`` are the prevalences of trt2 = 1 given trt1 = 0 and
    trt1 = 1.  The marginal probabilities are computed through
    ``marginalize`` (so any invalid support evaluation raises), and the
    analytic balance condition is evaluated side by side.
    """
    if not (eta1 > 0.0 and math.isfinite(eta1)):
        raise ValueError(f"eta1 must be a positive finite real, got {eta1!r}")
    for name, pi in (("pi0", pi0), ("pi1", pi1)):
        if not 0.0 <= pi <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {pi!r}")
    exp_beta = math.exp(beta)
    condition_value = (math.exp(gamma) - 1.0) * (
        exp_beta * pi0 - (1.0 - eta1 * (exp_beta - 1.0)) * pi1
    )

    params = {
        "f1.intercept": math.log(eta1),
        "f1.age": 0.0,
        "f2.trt1": beta,
        "f3.trt2": gamma,
    }

    def prob_fn(value: float, context: Mapping[str, float]) -> float:
        pi = pi1 if context["trt1"] == 1.0 else pi0
        return pi if value == 1.0 else 1.0 - pi

    over = CovariateDistribution(covariate="trt2", support=(0.0, 1.0), prob_fn=prob_fn)
    marginal_low = marginalize(_MODEL1, params, over, {"age": 0.0, "trt1": 0.0})
    marginal_high = marginalize(_MODEL1, params, over, {"age": 0.0, "trt1": 1.0})
    if marginal_low == 0.0:
        raise MarginalizationError("marginal probability at trt1=0 is zero; risk ratio undefined")
    lhs_rr = marginal_high / marginal_low
    return RecoveryReport(
        lhs_rr=lhs_rr,
        target=exp_beta,
        condition_value=condition_value,
        condition_holds=abs(condition_value) <= condition_tol,
        rr_matches=abs(lhs_rr - exp_beta) <= rr_tol * exp_beta,
        marginal_low=marginal_low,
        marginal_high=marginal_high,
    )


@dataclass(frozen=True)
class RecoverySuiteReport:
    """Outcome of the randomized condition/RR equivalence check."""

    n_random: int
    n_constructed: int
    n_agree: int
    n_disagree: int
    all_agree: bool
    n_redrawn_invalid: int
    n_redrawn_ambiguous: int
    n_redrawn_infeasible: int
    seed: int
    condition_tol: float
    rr_tol: float
    ambiguous_band: float


def recovery_equivalence_suite(
    n_random: int = 10000,
    n_constructed: int = 1000,
    seed: int = 0,
    condition_tol: float = 1e-12,
    rr_tol: float = 1e-9,
    ambiguous_band: float = 1e-6,
) -> RecoverySuiteReport:
    """Stress-test that condition_holds and rr_matches are the same predicate.

    Random configurations draw log(eta1) uniform on [-2, 2], beta and gamma
    uniform on [-1, 1], and both prevalences uniform on [0.01, 0.99].  A draw
    is rejected and retaken when a support evaluation is invalid, or when the
    condition value lands in the open band (condition_tol, ambiguous_band):
    there the condition is genuinely violated but only by numerical dust, so
    the draw distinguishes rounding, not the predicate.  Outside the band the
    marginal RR provably misses its target by at least
    ambiguous_band / (1 + e^2), orders of magnitude beyond rr_tol.

    Constructed configurations instead solve the balance condition for pi1,
    rejecting draws whose pi1 leaves [0, 1] or whose marginal probabilities
    fall below 1e-4 (where the ratio is too ill-conditioned to certify at
    rr_tol).  All of them must report both condition_holds and rr_matches.
    """
    rng = random.Random(seed)
    n_agree = 0
    n_disagree = 0
    redrawn_invalid = 0
    redrawn_ambiguous = 0
    redrawn_infeasible = 0

    accepted = 0
    attempts = 0
    while accepted < n_random:
        attempts += 1
        if attempts > 100 * max(n_random, 1):
            raise RuntimeError("random draw rejection rate is implausibly high")
        eta1 = math.exp(rng.uniform(-2.0, 2.0))
        beta = rng.uniform(-1.0, 1.0)
        gamma = rng.uniform(-1.0, 1.0)
        pi0 = rng.uniform(0.01, 0.99)
        pi1 = rng.uniform(0.01, 0.99)
        exp_beta = math.exp(beta)
        condition_value = (math.exp(gamma) - 1.0) * (
            exp_beta * pi0 - (1.0 - eta1 * (exp_beta - 1.0)) * pi1
        )
        if condition_tol < abs(condition_value) < ambiguous_band:
            redrawn_ambiguous += 1
            continue
        try:
            report = recovery_condition(
                eta1, beta, gamma, pi0, pi1, condition_tol=condition_tol, rr_tol=rr_tol
            )
        except MarginalizationError:
            redrawn_invalid += 1
            continue
        accepted += 1
        if report.condition_holds == report.rr_matches:
            n_agree += 1
        else:
            n_disagree += 1

    accepted = 0
    attempts = 0
    while accepted < n_constructed:
        attempts += 1
        if attempts > 100 * max(n_constructed, 1):
            raise RuntimeError("constructed draw rejection rate is implausibly high")
        eta1 = math.exp(rng.uniform(-2.0, 2.0))
        beta = rng.uniform(-1.0, 1.0)
        gamma = rng.uniform(-1.0, 1.0)
        pi0 = rng.uniform(0.01, 0.99)
        exp_beta = math.exp(beta)
        balance = 1.0 - eta1 * (exp_beta - 1.0)
        if balance <= 0.0:
            redrawn_infeasible += 1
            continue
        pi1 = exp_beta * pi0 / balance
        if not 0.0 <= pi1 <= 1.0:
            redrawn_infeasible += 1
            continue
        try:
            report = recovery_condition(
                eta1, beta, gamma, pi0, pi1, condition_tol=condition_tol, rr_tol=rr_tol
            )
        except MarginalizationError:
            redrawn_invalid += 1
            continue
        if min(report.marginal_low, report.marginal_high) < 1e-4:
            redrawn_infeasible += 1
            continue
        accepted += 1
        if report.condition_holds and report.rr_matches:
            n_agree += 1
        else:
            n_disagree += 1

    return RecoverySuiteReport(
        n_random=n_random,
        n_constructed=n_constructed,
        n_agree=n_agree,
        n_disagree=n_disagree,
        all_agree=n_disagree == 0,
        n_redrawn_invalid=redrawn_invalid,
        n_redrawn_ambiguous=redrawn_ambiguous,
        n_redrawn_infeasible=redrawn_infeasible,
        seed=seed,
        condition_tol=condition_tol,
        rr_tol=rr_tol,
        ambiguous_band=ambiguous_band,
    )
