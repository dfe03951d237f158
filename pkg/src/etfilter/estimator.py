"""Recursive MMSE state estimator under the confidence-level trigger.

The sensor and the remote estimator run co-located: every step forms the
innovation against the estimator's own prediction, the trigger decides
whether the measurement would have been transmitted, and the update branches
on that decision.  Received steps perform the standard Kalman update; silent
steps keep the predicted mean but add a covariance correction equal to the
conditional second moment of the whitened innovation restricted to the
silence ball, mapped back through the whitened gain.

Every step also records the quantities the communication-rate predictors
need (``StepCache``); those are functions of the previous information set
only, never of the current measurement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .model import LinearGaussianModel
from .numerics import _ball_full, require_spd, symmetrize
from .trigger import TriggerConfig, decide

__all__ = [
    "EstimatorState",
    "EventTriggeredFilter",
    "FilterRun",
    "StepCache",
    "StepOutput",
    "prior_cache",
]

_MASS_FLOOR = 1e-300


@dataclass(frozen=True)
class StepCache:
    """Step-k byproducts consumed by the rate predictors.

    P_z   : posterior covariance of the send branch (measurement received)
    h     : raw mass of the silence ball under the whitened-innovation kernel
    K     : whitened gain (standard gain composed with the inverse whitener)
    Psi   : raw second moment of the silence ball
    N_z   : whitened innovation covariance
    prob0 : probability of silence at this step given the previous info set
    """

    P_z: NDArray
    h: float
    K: NDArray
    Psi: NDArray
    N_z: NDArray
    prob0: float


@dataclass(frozen=True)
class EstimatorState:
    k: int
    xhat: NDArray
    P: NDArray
    cache: StepCache


@dataclass(frozen=True)
class StepOutput:
    """Per-step result: decision, posterior, innovation, and the normalized
    first moment of the silence ball (a diagnostic that must sit at zero)."""

    gamma: int
    xhat: NDArray
    P: NDArray
    innovation: NDArray
    first_moment_diag: NDArray


@dataclass(frozen=True)
class FilterRun:
    gamma: NDArray
    xhat: NDArray
    P: NDArray
    innovation: NDArray
    prob0: NDArray
    silence_mass: NDArray
    first_moment_max: float


class EventTriggeredFilter:
    """Filter a measurement stream under a fixed model and trigger.

    Parameters
    ----------
    model : LinearGaussianModel
        System matrices; R must be strictly positive definite here because
        the innovation covariance is inverted every step.
    trigger : TriggerConfig
        Whitener, threshold, and dimension (must match the model's p).
    quad_tol : float
        Relative tolerance handed to the ball-moment quadrature.
    joseph : bool
        Use the Joseph-stabilized form for the send-branch covariance
        (default on; the plain subtraction form is algebraically identical).
    """

    def __init__(
        self,
        model: LinearGaussianModel,
        trigger: TriggerConfig,
        quad_tol: float = 1e-8,
        joseph: bool = True,
    ):
        if trigger.p != model.p:
            raise ValueError(
                f"trigger dimension {trigger.p} does not match measurement dimension {model.p}"
            )
        require_spd(model.R, "R")
        if not 0.0 < quad_tol < 1.0:
            raise ValueError(f"quad_tol must lie in (0, 1), got {quad_tol}")
        self.model = model
        self.trigger = trigger
        self.quad_tol = float(quad_tol)
        self.joseph = bool(joseph)
        self._eye_n = np.eye(model.n)

    # -- shared per-step geometry --------------------------------------------

    def _measurement_geometry(self, cov: NDArray):
        """Gain, whitened quantities, and send-branch covariance from a prior covariance."""
        m = self.model
        t = self.trigger
        cross = cov @ m.C.T
        s = symmetrize(m.C @ cross + m.R)
        gain = np.linalg.solve(s, cross.T).T
        n_z = symmetrize(t.phi @ s @ t.phi.T)
        k_w = gain @ t.phi_inv
        if self.joseph:
            a = self._eye_n - gain @ m.C
            p_z = symmetrize(a @ cov @ a.T + gain @ m.R @ gain.T)
        else:
            p_z = symmetrize(cov - gain @ cross.T)
        return gain, n_z, k_w, p_z

    def _silence_moments(self, n_z: NDArray):
        thr = self.trigger.threshold
        if thr <= 0.0:
            p = self.trigger.p
            zeros = np.zeros((p, p))
            return 0.0, 0.0, np.zeros(p), zeros, zeros
        bm, conditional = _ball_full(n_z, thr, self.quad_tol)
        return bm.mass, bm.prob, bm.m1, bm.m2, conditional

    def _build(self, prior_cov: NDArray):
        gain, n_z, k_w, p_z = self._measurement_geometry(prior_cov)
        mass, prob, m1, m2, conditional = self._silence_moments(n_z)
        cache = StepCache(P_z=p_z, h=mass, K=k_w, Psi=m2, N_z=n_z, prob0=prob)
        return gain, m1, conditional, cache

    def _corrected(self, cache: StepCache, conditional: NDArray) -> NDArray:
        # Silent branch: fused conditional second moment Psi/h, mapped through K.
        if not cache.h >= _MASS_FLOOR:
            raise ValueError(
                "silence-region mass underflowed (h < 1e-300): the trigger bound is "
                "degenerate (too tight or too loose) for this model"
            )
        return symmetrize(cache.P_z + cache.K @ conditional @ cache.K.T)

    # -- public recursion ------------------------------------------------------

    def init(self, y0) -> tuple[int, EstimatorState]:
        """Consume the time-0 measurement against the model prior."""
        m = self.model
        y0 = np.asarray(y0, dtype=float)
        innovation = y0 - m.C @ m.x0_mean
        decision = decide(self.trigger, innovation)
        gain, _, conditional, cache = self._build(m.x0_cov)
        if decision.gamma:
            xhat = m.x0_mean + gain @ innovation
            cov = cache.P_z
        else:
            xhat = m.x0_mean.copy()
            cov = self._corrected(cache, conditional)
        return decision.gamma, EstimatorState(k=0, xhat=xhat, P=cov, cache=cache)

    def predict(self, state: EstimatorState):
        """One-step-ahead state mean, state covariance, and measurement mean."""
        m = self.model
        xpred = m.A @ state.xhat
        cov_pred = symmetrize(m.A @ state.P @ m.A.T + m.Q)
        return xpred, cov_pred, m.C @ xpred

    def step(self, state: EstimatorState, y) -> tuple[StepOutput, EstimatorState]:
        """Advance one step with measurement ``y`` taken at time state.k + 1."""
        y = np.asarray(y, dtype=float)
        xpred, cov_pred, ypred = self.predict(state)
        innovation = y - ypred
        decision = decide(self.trigger, innovation)
        gain, m1, conditional, cache = self._build(cov_pred)
        if decision.gamma:
            xhat = xpred + gain @ innovation
            cov = cache.P_z
        else:
            xhat = xpred
            cov = self._corrected(cache, conditional)
        fmd = m1 / cache.h if cache.h >= _MASS_FLOOR else np.zeros(self.trigger.p)
        out = StepOutput(
            gamma=decision.gamma, xhat=xhat, P=cov, innovation=innovation, first_moment_diag=fmd
        )
        return out, EstimatorState(k=state.k + 1, xhat=xhat, P=cov, cache=cache)

    def run(self, measurements) -> FilterRun:
        """Filter a whole measurement array of shape (K+1, p)."""
        ys = np.atleast_2d(np.asarray(measurements, dtype=float))
        total = ys.shape[0]
        m = self.model
        gamma = np.zeros(total, dtype=np.int64)
        xhat = np.zeros((total, m.n))
        cov = np.zeros((total, m.n, m.n))
        innovation = np.zeros((total, m.p))
        prob0 = np.zeros(total)
        silence_mass = np.zeros(total)
        fm_max = 0.0

        g0, state = self.init(ys[0])
        gamma[0] = g0
        xhat[0] = state.xhat
        cov[0] = state.P
        innovation[0] = ys[0] - m.C @ m.x0_mean
        prob0[0] = state.cache.prob0
        silence_mass[0] = state.cache.h
        for k in range(1, total):
            out, state = self.step(state, ys[k])
            gamma[k] = out.gamma
            xhat[k] = out.xhat
            cov[k] = out.P
            innovation[k] = out.innovation
            prob0[k] = state.cache.prob0
            silence_mass[k] = state.cache.h
            fm_max = max(fm_max, float(np.abs(out.first_moment_diag * state.cache.h).max()))
        return FilterRun(
            gamma=gamma,
            xhat=xhat,
            P=cov,
            innovation=innovation,
            prob0=prob0,
            silence_mass=silence_mass,
            first_moment_max=fm_max,
        )


def prior_cache(
    model: LinearGaussianModel,
    trigger: TriggerConfig,
    quad_tol: float = 1e-8,
    joseph: bool = True,
) -> StepCache:
    """Time-0 cache (send-branch covariance, ball moments, whitened gain).

    Entirely data independent: it depends on the model prior and the trigger
    only, which is what lets the rate bootstrap run before any measurement.
    """
    filt = EventTriggeredFilter(model, trigger, quad_tol=quad_tol, joseph=joseph)
    _, _, _, cache = filt._build(model.x0_cov)
    return cache
