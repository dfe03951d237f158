"""Confidence-level send/no-send trigger on the whitened innovation norm.

The sensor transmits a measurement only when the squared whitened innovation
``||Phi @ innovation||^2`` exceeds the upper-alpha chi-square quantile, i.e.
when the innovation falls outside the confidence region defined by the
tolerable bound ``nbar``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .numerics import chi_square_quantile, factor_precision, require_spd, symmetrize

__all__ = ["Decision", "TriggerConfig", "decide", "make_config"]


@dataclass(frozen=True)
class TriggerConfig:
    """Frozen trigger parameters.

    ``phi`` is the upper-triangular whitener with phi.T @ phi = sigma = inv(nbar);
    ``threshold`` is the upper-alpha chi-square quantile with ``p`` degrees of
    freedom.  ``phi_inv`` is cached because the filter needs it every step.
    """

    nbar: NDArray
    sigma: NDArray
    phi: NDArray
    phi_inv: NDArray
    alpha: float
    threshold: float
    p: int


@dataclass(frozen=True)
class Decision:
    gamma: int
    phi_stat: float


def make_config(nbar, alpha: float = 0.05) -> TriggerConfig:
    """Build a trigger from the tolerable innovation bound ``nbar``.

    Raises if ``nbar`` is not SPD, alpha is outside (0, 1), or the whitener
    fails to reproduce the precision matrix to 1e-9 (ill-conditioned bound).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly inside (0, 1), got {alpha}")
    nb = require_spd(nbar, "nbar")
    p = nb.shape[0]
    phi = factor_precision(nb)
    sigma = symmetrize(phi.T @ phi)
    residual = float(np.abs(sigma @ nb - np.eye(p)).max())
    if residual > 1e-9:
        raise ValueError(
            f"nbar is too ill-conditioned to whiten reliably (|sigma@nbar - I| = {residual:.3e})"
        )
    return TriggerConfig(
        nbar=nb,
        sigma=sigma,
        phi=phi,
        phi_inv=np.linalg.inv(phi),
        alpha=float(alpha),
        threshold=chi_square_quantile(alpha, p),
        p=p,
    )


def decide(config: TriggerConfig, innovation) -> Decision:
    """Evaluate the trigger for one innovation vector.

    The statistic is computed as the squared norm of the whitened innovation,
    which equals innovation.T @ sigma @ innovation but stays nonnegative in
    floats.  Ties on the boundary stay silent (gamma = 0).
    """
    y = np.asarray(innovation, dtype=float)
    if y.shape != (config.p,):
        raise ValueError(f"innovation must have shape ({config.p},), got {y.shape}")
    z = config.phi @ y
    stat = float(z @ z)
    return Decision(gamma=1 if stat > config.threshold else 0, phi_stat=stat)
