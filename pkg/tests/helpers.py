"""Shared test utilities: tolerance helpers, random spec/config generators."""

from __future__ import annotations

import math
import random
from fractions import Fraction

import numpy as np

from flowcalc.dsl import Flow, FlowKind, LinearPredictor, ModelSpec, parameter_names
from flowcalc.engine import evaluate

COVARIATE_POOL = ["age", "trt1", "trt2", "sex", "dose", "bmi", "x1", "x2"]
OUTCOME_POOL = ["y", "z", "event", "resp", "out"]


def close(a: float, b: float, rel: float = 1e-12, floor: float = 1e-14) -> bool:
    """Relative comparison with an absolute floor near zero."""
    return abs(a - b) <= max(rel * max(abs(a), abs(b)), floor)


def random_model_spec(rng: random.Random, max_flows: int = 5) -> ModelSpec:
    den = rng.randint(1, 20)
    base = Fraction(rng.randint(0, den), den)
    flows = []
    for position in range(1, rng.randint(0, max_flows) + 1):
        kind = rng.choice(list(FlowKind))
        has_intercept = rng.random() < 0.5
        terms = tuple(rng.sample(COVARIATE_POOL, rng.randint(0, 3)))
        flows.append(Flow(kind=kind, predictor=LinearPredictor(has_intercept, terms), position=position))
    return ModelSpec(outcome=rng.choice(OUTCOME_POOL), base_prob=base, flows=tuple(flows))


def model1_params(alpha0=0.0, alpha1=0.0, beta=0.0, gamma=0.0) -> dict[str, float]:
    """Canonical bindings for MODEL1_SPEC (odds, then risk, then survival)."""
    return {"f1.intercept": alpha0, "f1.age": alpha1, "f2.trt1": beta, "f3.trt2": gamma}


def model2_params(alpha0=0.0, alpha1=0.0, beta=0.0, gamma=0.0) -> dict[str, float]:
    """Canonical bindings for MODEL2_SPEC (odds, then survival, then risk)."""
    return {"f1.intercept": alpha0, "f1.age": alpha1, "f2.trt2": gamma, "f3.trt1": beta}


def random_bindings(spec: ModelSpec, rng: random.Random, param_scale: float = 1.0):
    from flowcalc.dsl import covariate_names

    params = {name: rng.uniform(-param_scale, param_scale) for name in parameter_names(spec)}
    covariates = {name: rng.uniform(0.0, 1.0) for name in covariate_names(spec)}
    return params, covariates


def mc_marginal(spec, params, over, context, n_draws: int, seed: int) -> float:
    """Monte Carlo oracle for marginalize: simulate the covariate, average.

    Draws the marginalized covariate from its distribution and averages the
    exactly evaluated conditional probabilities over the simulated sample.
    """
    rng = np.random.default_rng(seed)
    weights = np.asarray(over.weights(context))
    draws = rng.choice(len(over.support), size=n_draws, p=weights / weights.sum())
    counts = np.bincount(draws, minlength=len(over.support))
    conditionals = np.array(
        [
            evaluate(spec, params, {**context, over.covariate: value}).probability
            for value in over.support
        ]
    )
    return float(counts @ conditionals / n_draws)
