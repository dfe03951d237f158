"""Communication-rate prediction from the filter's per-step cache.

Two predictors for the probability that step k stays silent:

* one-step: conditions on everything up to k-1; the silence probability is
  already in the cache (``prob0``), so prediction is just its complement.
* two-step: conditions on everything up to k-2 by marginalizing over whether
  step k-1 transmitted.  Both branch covariances follow from the k-1 cache:
  the send branch propagates the send-branch posterior, the silent branch adds
  the fused ball correction before propagating, and the branch probabilities
  mix through the cached one-step silence probability of step k-1.

A bootstrap provides the expected rates at the first two steps, where no
filtering history exists yet; it is built purely from the model prior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .estimator import StepCache, prior_cache
from .model import LinearGaussianModel
from .numerics import ball_moments, symmetrize
from .trigger import TriggerConfig

__all__ = ["RatePrediction", "RateState", "bootstrap_rates", "rate_one_step", "rate_two_step"]


@dataclass(frozen=True)
class RatePrediction:
    gamma_hat: float
    prob0: float
    which: str


@dataclass(frozen=True)
class RateState:
    """Inputs for the two-step predictor of step k.

    ``cache_prev`` is the filter cache produced at step k-1 and ``prob0_prev``
    its one-step silence probability -- both are measurable with respect to the
    information available at k-2, which is the point of the predictor.
    """

    prob0_prev: float
    cache_prev: StepCache
    model: LinearGaussianModel
    trigger: TriggerConfig
    quad_tol: float = 1e-8


def rate_one_step(cache: StepCache) -> RatePrediction:
    """Expected transmission indicator for step k given information to k-1."""
    return RatePrediction(gamma_hat=1.0 - cache.prob0, prob0=cache.prob0, which="one-step")


def _silence_prob(
    model: LinearGaussianModel, trigger: TriggerConfig, state_cov: NDArray, tol: float
) -> float:
    """P(whitened innovation lands in the silence ball) for a given state covariance."""
    s = symmetrize(model.C @ state_cov @ model.C.T + model.R)
    n_z = symmetrize(trigger.phi @ s @ trigger.phi.T)
    return ball_moments(n_z, trigger.threshold, tol).prob


def rate_two_step(state: RateState) -> RatePrediction:
    """Expected transmission indicator for step k given information to k-2."""
    cache = state.cache_prev
    if cache.h < 1e-300:
        raise ValueError("cache has a degenerate silence mass; two-step prediction undefined")
    model = state.model
    a = model.A
    sent_cov = symmetrize(a @ cache.P_z @ a.T + model.Q)
    correction = cache.K @ (cache.Psi / cache.h) @ cache.K.T
    silent_cov = symmetrize(a @ (cache.P_z + correction) @ a.T + model.Q)
    p_sent = _silence_prob(model, state.trigger, sent_cov, state.quad_tol)
    p_silent = _silence_prob(model, state.trigger, silent_cov, state.quad_tol)
    prob0 = p_sent + state.prob0_prev * (p_silent - p_sent)
    return RatePrediction(gamma_hat=1.0 - prob0, prob0=prob0, which="two-step")


def bootstrap_rates(
    model: LinearGaussianModel, trigger: TriggerConfig, quad_tol: float = 1e-8
) -> tuple[float, float]:
    """Expected transmission rates at steps 0 and 1, before any data arrives.

    Step 0 uses the prior innovation covariance directly; step 1 is the
    two-step predictor seeded with the prior cache (there is nothing to
    condition on yet, so the prediction is unconditional).
    """
    cache0 = prior_cache(model, trigger, quad_tol=quad_tol)
    e0 = 1.0 - cache0.prob0
    e1 = rate_two_step(
        RateState(
            prob0_prev=cache0.prob0,
            cache_prev=cache0,
            model=model,
            trigger=trigger,
            quad_tol=quad_tol,
        )
    ).gamma_hat
    return e0, e1
