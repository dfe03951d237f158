"""Discrete-time linear Gaussian state-space model and the tracking benchmark preset."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .numerics import psd_sqrt, require_psd

__all__ = [
    "LinearGaussianModel",
    "TRUE_INITIAL_STATE",
    "Trajectory",
    "simulate",
    "tracking_preset",
]


@dataclass(frozen=True)
class LinearGaussianModel:
    """x_{k+1} = A x_k + w_k,  y_k = C x_k + v_k with w ~ N(0, Q), v ~ N(0, R).

    The initial state carries the prior N(x0_mean, x0_cov); x0_cov may be a
    singular PSD matrix (deterministic components are then pinned exactly).
    R only needs to be PSD here -- noise-free simulation is well defined -- but
    the filter additionally requires it to be strictly positive definite.
    """

    A: NDArray
    C: NDArray
    Q: NDArray
    R: NDArray
    x0_mean: NDArray
    x0_cov: NDArray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.A, dtype=float))
        c = np.atleast_2d(np.asarray(self.C, dtype=float))
        mean = np.atleast_1d(np.asarray(self.x0_mean, dtype=float))
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError(f"A must be square, got {a.shape}")
        if c.ndim != 2 or c.shape[1] != n:
            raise ValueError(f"C must have shape (p, {n}), got {c.shape}")
        if mean.shape != (n,):
            raise ValueError(f"x0_mean must have shape ({n},), got {mean.shape}")
        p = c.shape[0]
        q = require_psd(np.asarray(self.Q, dtype=float), "Q")
        r = require_psd(np.asarray(self.R, dtype=float), "R")
        cov0 = require_psd(np.asarray(self.x0_cov, dtype=float), "x0_cov")
        if q.shape != (n, n):
            raise ValueError(f"Q must have shape ({n}, {n}), got {q.shape}")
        if r.shape != (p, p):
            raise ValueError(f"R must have shape ({p}, {p}), got {r.shape}")
        if cov0.shape != (n, n):
            raise ValueError(f"x0_cov must have shape ({n}, {n}), got {cov0.shape}")
        for name, value in (
            ("A", a), ("C", c), ("Q", q), ("R", r), ("x0_mean", mean), ("x0_cov", cov0)
        ):
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """States x_0..x_K (shape (K+1, n)) and measurements y_0..y_K (shape (K+1, p))."""

    states: NDArray
    measurements: NDArray


def simulate(
    model: LinearGaussianModel,
    steps: int,
    rng: np.random.Generator,
    x0: NDArray | None = None,
) -> Trajectory:
    """Sample one trajectory with K = ``steps`` transitions (K+1 time points).

    The initial state is drawn from the model prior via an eigendecomposition
    square root (so singular x0_cov is exact), unless ``x0`` pins it.  All
    measurement noise is drawn first, then all process noise, so draw order is
    reproducible for a given generator state.
    """
    if steps < 0:
        raise ValueError(f"steps must be nonnegative, got {steps}")
    n, p = model.n, model.p
    meas_noise = rng.standard_normal((steps + 1, p)) @ psd_sqrt(model.R, "R").T
    proc_noise = rng.standard_normal((steps, n)) @ psd_sqrt(model.Q, "Q").T
    if x0 is None:
        x0 = model.x0_mean + psd_sqrt(model.x0_cov, "x0_cov") @ rng.standard_normal(n)
    else:
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (n,):
            raise ValueError(f"x0 must have shape ({n},), got {x0.shape}")

    states = np.empty((steps + 1, n))
    states[0] = x0
    for k in range(steps):
        states[k + 1] = model.A @ states[k] + proc_noise[k]
    measurements = states @ model.C.T + meas_noise
    return Trajectory(states=states, measurements=measurements)


# True initial target state used by the tracking benchmark: the simulated
# target always starts here while the filter prior stays at x0_mean.
TRUE_INITIAL_STATE = np.array([3410.0, 30.0, 0.0])
TRUE_INITIAL_STATE.setflags(write=False)


def tracking_preset(T: float = 1.0, a: float = 2.0, sigma_m2: float = 0.5) -> LinearGaussianModel:
    """Maneuvering-target benchmark: position/velocity/acceleration state,
    position+acceleration measurements.

    Parameters
    ----------
    T : float
        Sampling period in seconds.
    a : float
        Maneuver time-constant parameter of the acceleration model.
    sigma_m2 : float
        Maneuver acceleration variance.

    Notes
    -----
    The (0, 2) entry of the transition matrix is T**2 (not T**2/2): the
    benchmark is reproduced exactly as published, and the reference
    communication rates in ``harness.TABLE1_REFERENCE`` correspond to this
    transition matrix.
    """
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    A = np.array(
        [
            [1.0, T, T * T],
            [0.0, 1.0, T],
            [0.0, 0.0, 1.0],
        ]
    )
    scale = 2.0 * a * sigma_m2
    Q = scale * np.array(
        [
            [T**5 / 20.0, T**4 / 8.0, T**3 / 6.0],
            [T**4 / 8.0, T**3 / 3.0, T**2 / 2.0],
            [T**3 / 6.0, T**2 / 2.0, T],
        ]
    )
    C = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    R = np.array([[60.0, 0.0], [0.0, 10.0]])
    x0_mean = np.array([3500.0, 40.0, 0.0])
    x0_cov = np.array(
        [
            [3600.0, 3600.0 / T, 0.0],
            [3600.0 / T, 7200.0 / T**2, 0.0],
            [0.0, 0.0, 0.0],
        ]
    )
    return LinearGaussianModel(A=A, C=C, Q=Q, R=R, x0_mean=x0_mean, x0_cov=x0_cov)
