"""Numerical kernels shared by the trigger, the filter, and the rate predictors.

The central object is the moment triple of a zero-mean Gaussian kernel
``exp(-0.5 * z.T inv(n) z)`` restricted to the centered ball ``z.T z <= radius2``:
its raw mass, its raw first and second moments, and the normalized probability
that a draw from ``N(0, n)`` lands inside the ball.  Everything is computed in
the eigenframe of ``n``; the ball is rotation invariant, so the second moment
is diagonal there and the first moment vanishes by symmetry.

All functions are pure.  The only module state is a cache of Gauss-Legendre
nodes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.special import erf, gammainc, ndtri

__all__ = [
    "BallMoments",
    "QuadratureError",
    "SpdMatrix",
    "ball_moments",
    "chi_square_quantile",
    "factor_precision",
    "monte_carlo_ball_moments",
    "psd_sqrt",
    "symmetrize",
    "truncated_second_moment",
]

# Validated dense symmetric positive (semi)definite matrix.
SpdMatrix = NDArray[np.float64]

# Per-eigendirection Gaussian tail clip, in standard deviations.  The discarded
# tail mass is below 8e-24 relative, far under every tolerance used here, and it
# keeps radius2 = inf exact in floats instead of producing inf - inf.
_TAIL_CLIP = 10.0

_MAX_ORDER = {1: 4096, 2: 4096, 3: 1024}


class QuadratureError(RuntimeError):
    """Raised when the moment quadrature cannot reach the requested tolerance."""

    def __init__(self, message: str, achieved: float = math.nan):
        super().__init__(message)
        self.achieved = achieved


def symmetrize(a: NDArray) -> NDArray:
    return 0.5 * (a + a.T)


def _as_square(a, name: str) -> NDArray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {m.shape}")
    return m


def _require_symmetric(m: NDArray, name: str) -> NDArray:
    scale = max(float(np.abs(m).max(initial=0.0)), 1.0)
    if float(np.abs(m - m.T).max(initial=0.0)) > 1e-12 * scale:
        raise ValueError(f"{name} is not symmetric within 1e-12 relative")
    return symmetrize(m)


def require_spd(a, name: str = "matrix") -> SpdMatrix:
    """Validate and return a strictly positive definite symmetric matrix."""
    m = _require_symmetric(_as_square(a, name), name)
    eigs = np.linalg.eigvalsh(m)
    if eigs[0] <= 0.0:
        raise ValueError(f"{name} is not positive definite (min eigenvalue {eigs[0]:.3e})")
    return m


def require_psd(a, name: str = "matrix") -> SpdMatrix:
    """Validate and return a positive semidefinite symmetric matrix.

    Eigenvalues down to -1e-10 * max|eig| are treated as roundoff and accepted.
    """
    m = _require_symmetric(_as_square(a, name), name)
    eigs = np.linalg.eigvalsh(m)
    tol = 1e-10 * max(float(np.abs(eigs).max(initial=0.0)), 1.0)
    if eigs[0] < -tol:
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {eigs[0]:.3e})")
    return m


def psd_sqrt(a, name: str = "covariance") -> NDArray:
    """Square-root factor S with S @ S.T = a for a PSD matrix.

    Built from the eigendecomposition with negative roundoff eigenvalues
    clamped to zero, so genuinely singular covariances are handled exactly.
    """
    m = require_psd(a, name)
    lam, vec = np.linalg.eigh(m)
    return vec * np.sqrt(np.clip(lam, 0.0, None))


def chi_square_quantile(alpha: float, dof: int) -> float:
    """Upper-tail chi-square quantile: the c with P(X > c) = alpha, X ~ chi2(dof).

    Newton iteration on the regularized incomplete gamma CDF, seeded by the
    Wilson-Hilferty cube approximation and safeguarded by a bracketing bisection
    step whenever Newton would leave the current bracket.
    """
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly inside (0, 1), got {alpha}")
    if int(dof) != dof or dof < 1:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    dof = int(dof)

    target = 1.0 - alpha
    half = 0.5 * dof
    z = float(ndtri(target))
    seed = dof * (1.0 - 2.0 / (9.0 * dof) + z * math.sqrt(2.0 / (9.0 * dof))) ** 3
    c = seed if seed > 0.0 else 0.5 * alpha * dof
    c = max(c, 1e-300)

    lo, hi = 0.0, max(c, float(dof))
    while gammainc(half, 0.5 * hi) < target:
        hi *= 2.0
    log_norm = half * math.log(2.0) + math.lgamma(half)
    for _ in range(200):
        f = float(gammainc(half, 0.5 * c)) - target
        if f >= 0.0:
            hi = min(hi, c)
        else:
            lo = max(lo, c)
        with np.errstate(over="ignore"):
            pdf = math.exp((half - 1.0) * math.log(c) - 0.5 * c - log_norm)
        if pdf > 0.0 and math.isfinite(pdf):
            nxt = c - f / pdf
            if not lo < nxt < hi:
                nxt = 0.5 * (lo + hi)
        else:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - c) <= 1e-14 * max(nxt, 1.0):
            return nxt
        c = nxt
    return c


def factor_precision(nbar) -> NDArray:
    """Whitening factor Phi with Phi.T @ Phi = inv(nbar), for SPD nbar.

    Phi is the transpose of the lower Cholesky factor of the precision matrix
    inv(nbar), i.e. upper triangular.
    """
    n = require_spd(nbar, "nbar")
    sigma = symmetrize(np.linalg.inv(n))
    return np.linalg.cholesky(sigma).T


@dataclass(frozen=True)
class BallMoments:
    """Raw moments of exp(-0.5 z' inv(n) z) over the ball z'z <= radius2.

    mass : raw zeroth moment (integral of the unnormalized kernel)
    prob : mass / ((2 pi)^(p/2) |n|^(1/2)), the N(0, n) ball probability
    m1   : raw first moment, zero by symmetry up to quadrature roundoff
    m2   : raw second moment matrix
    """

    mass: float
    prob: float
    m1: NDArray
    m2: NDArray


# -- Gauss-Legendre machinery -------------------------------------------------

_GL_CACHE: dict[int, tuple[NDArray, NDArray]] = {}


def _gl_nodes(order: int) -> tuple[NDArray, NDArray]:
    cached = _GL_CACHE.get(order)
    if cached is None:
        cached = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = cached
    return cached


def _sin_nodes(order: int, half_width) -> tuple[NDArray, NDArray]:
    """Nodes/weights for integrating over [-b, b] under x = b sin(phi).

    The substitution removes the sqrt-type endpoint behaviour the ball boundary
    induces, so Gauss-Legendre applied in phi converges geometrically.
    """
    t, w = _gl_nodes(order)
    phi = (0.5 * math.pi) * t
    x = half_width * np.sin(phi)
    wx = half_width * np.cos(phi) * (0.5 * math.pi) * w
    return x, wx


def _gauss_1d(x: NDArray, lam: float) -> NDArray:
    return np.exp(x * x / (-2.0 * lam)) / math.sqrt(2.0 * math.pi * lam)


def _inner_closed(c_sq: NDArray, lam: float) -> tuple[NDArray, NDArray]:
    """Innermost-dimension integrals in closed form.

    For half-width c = sqrt(c_sq) (entries may be inf), returns
    E0 = integral of the unit-normalized N(0, lam) density over [-c, c] and
    E2 = the matching second-moment integral.
    """
    cap = _TAIL_CLIP * math.sqrt(lam)
    c = np.minimum(np.sqrt(np.maximum(c_sq, 0.0)), cap)
    scaled = c / math.sqrt(2.0 * lam)
    e0 = erf(scaled)
    e2 = lam * e0 - c * math.sqrt(2.0 * lam / math.pi) * np.exp(-scaled * scaled)
    return e0, e2


def _kernel_p1(lam: NDArray, radius2: float, order: int):
    (l1,) = lam
    b1 = min(math.sqrt(radius2), _TAIL_CLIP * math.sqrt(l1))
    x, wx = _sin_nodes(order, b1)
    base = _gauss_1d(x, l1) * wx
    prob = float(base.sum())
    d = np.array([float((base * x * x).sum())])
    m1 = np.array([float((base * x).sum())])
    return prob, d, m1


def _kernel_p2(lam: NDArray, radius2: float, order: int):
    l1, l2 = lam
    b1 = min(math.sqrt(radius2), _TAIL_CLIP * math.sqrt(l1))
    x, wx = _sin_nodes(order, b1)
    base = _gauss_1d(x, l1) * wx
    e0, e2 = _inner_closed(radius2 - x * x, l2)
    f0 = base * e0
    prob = float(f0.sum())
    d = np.array([float((f0 * x * x).sum()), float((base * e2).sum())])
    m1 = np.array([float((f0 * x).sum()), 0.0])
    return prob, d, m1


def _kernel_p3(lam: NDArray, radius2: float, order: int):
    l1, l2, l3 = lam
    b1 = min(math.sqrt(radius2), _TAIL_CLIP * math.sqrt(l1))
    x, wx = _sin_nodes(order, b1)
    c1_sq = radius2 - x * x
    b2 = np.minimum(np.sqrt(np.maximum(c1_sq, 0.0)), _TAIL_CLIP * math.sqrt(l2))

    t, w = _gl_nodes(order)
    phi = (0.5 * math.pi) * t
    y = b2[:, None] * np.sin(phi)[None, :]
    wy = b2[:, None] * (np.cos(phi) * (0.5 * math.pi) * w)[None, :]

    base = (_gauss_1d(x, l1) * wx)[:, None] * (_gauss_1d(y, l2) * wy)
    e0, e2 = _inner_closed(c1_sq[:, None] - y * y, l3)
    f0 = base * e0
    prob = float(f0.sum())
    d = np.array(
        [
            float((f0 * (x * x)[:, None]).sum()),
            float((f0 * y * y).sum()),
            float((base * e2).sum()),
        ]
    )
    m1 = np.array([float((f0 * x[:, None]).sum()), float((f0 * y).sum()), 0.0])
    return prob, d, m1


_KERNELS = {1: _kernel_p1, 2: _kernel_p2, 3: _kernel_p3}


def _moments_diag(lam: NDArray, radius2: float, tol: float):
    """Normalized ball moments for a diagonal covariance, with order doubling.

    Returns (prob, diag second moments, first moments, achieved error), all
    normalized by the full Gaussian constant.  Error control compares
    consecutive Gauss-Legendre orders; the integrands are analytic after the
    sine substitution, so the comparison is a sound (conservative) estimate.
    """
    kernel = _KERNELS[lam.size]
    max_order = _MAX_ORDER[lam.size]
    prev = None
    err = math.inf
    order = 16
    while order <= max_order:
        cur = kernel(lam, radius2, order)
        if prev is not None:
            dp = abs(cur[0] - prev[0]) / max(abs(cur[0]), 1e-300)
            dd = float(np.max(np.abs(cur[1] - prev[1]) / np.maximum(np.abs(cur[1]), 1e-300)))
            err = max(dp, dd)
            if err <= tol:
                return cur + (err,)
        prev = cur
        order *= 2
    raise QuadratureError(
        f"ball moment quadrature stalled at order {max_order} with error "
        f"{err:.3e} > tol {tol:.3e}",
        achieved=err,
    )


def _moments_qmc(lam: NDArray, radius2: float, tol: float):
    """Randomized quasi-Monte-Carlo fallback for p > 3.

    Accuracy is sampling limited; if the replicate spread exceeds tol the
    achieved error is reported through a warning rather than an exception.
    """
    from scipy.stats import qmc

    p = lam.size
    root = np.sqrt(lam)
    probs, diags, firsts = [], [], []
    for rep in range(8):
        sob = qmc.Sobol(d=p, scramble=True, seed=1000 + rep)
        u = sob.random(2**15)
        z = ndtri(np.clip(u, 1e-15, 1.0 - 1e-15)) * root
        inside = (z * z).sum(axis=1) <= radius2
        probs.append(inside.mean())
        zin = z[inside]
        m = max(len(z), 1)
        diags.append((zin * zin).sum(axis=0) / m)
        firsts.append(zin.sum(axis=0) / m)
    prob = float(np.mean(probs))
    d = np.mean(diags, axis=0)
    m1 = np.mean(firsts, axis=0)
    err = 3.0 * float(np.std(probs)) / math.sqrt(len(probs))
    if err > tol:
        warnings.warn(
            f"QMC ball moments (p={p}) achieved error ~{err:.2e} above tol {tol:.2e}",
            RuntimeWarning,
            stacklevel=3,
        )
    return prob, d, m1, err


def _sym_eig2(m: NDArray) -> tuple[NDArray, NDArray]:
    """Closed-form ascending eigendecomposition of a symmetric 2x2 matrix."""
    a, b, c = m[0, 0], m[0, 1], m[1, 1]
    half = 0.5 * (a + c)
    disc = math.hypot(0.5 * (a - c), b)
    lam = np.array([half - disc, half + disc])
    if disc == 0.0:
        return lam, np.eye(2)
    # Eigenvector of the larger eigenvalue, from the numerically larger residual row.
    v_hi = (b, lam[1] - a)
    alt = (lam[1] - c, b)
    if alt[0] * alt[0] + alt[1] * alt[1] > v_hi[0] * v_hi[0] + v_hi[1] * v_hi[1]:
        v_hi = alt
    norm = math.hypot(*v_hi)
    vx, vy = v_hi[0] / norm, v_hi[1] / norm
    return lam, np.array([[-vy, vx], [vx, vy]])


def _sym_eig(m: NDArray) -> tuple[NDArray, NDArray]:
    if m.shape[0] == 1:
        return np.array([m[0, 0]]), np.eye(1)
    if m.shape[0] == 2:
        return _sym_eig2(m)
    return np.linalg.eigh(m)


def ball_moments(n, radius2: float, tol: float = 1e-8) -> BallMoments:
    """Moments of the Gaussian kernel of covariance ``n`` over a centered ball.

    Parameters
    ----------
    n : SPD matrix
        Kernel covariance (the quadrature runs in its eigenframe).
    radius2 : float
        Squared ball radius, > 0; inf is allowed and recovers the whole space.
    tol : float
        Relative tolerance for the mass and second-moment quadrature; the
        first moment is exactly zero by symmetry, so only cancellation
        roundoff remains there.

    Returns
    -------
    BallMoments
        Raw mass/m1/m2 plus the normalized ball probability.
    """
    bm, _ = _ball_full(n, radius2, tol)
    return bm


def _ball_full(n, radius2: float, tol: float) -> tuple[BallMoments, NDArray]:
    """Ball moments plus the fused conditional second moment m2/mass.

    The conditional moment is assembled from the normalized eigenframe
    quantities (d_i / prob), so it stays finite even when the raw mass
    over- or underflows double precision.
    """
    m = _require_symmetric(_as_square(n, "n"), "n")
    radius2 = float(radius2)
    if not radius2 > 0.0:
        raise ValueError(f"radius2 must be positive, got {radius2}")
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")

    lam, vec = _sym_eig(m)
    p = lam.size
    if float(lam[0]) <= 0.0:
        raise ValueError(f"n is not positive definite (min eigenvalue {lam[0]:.3e})")
    if p <= 3:
        prob, d, m1_diag, _ = _moments_diag(lam, radius2, tol)
    else:
        prob, d, m1_diag, _ = _moments_qmc(lam, radius2, tol)

    norm_const = (2.0 * math.pi) ** (0.5 * p) * math.sqrt(float(np.prod(lam)))
    prob = min(float(prob), 1.0)
    mass = prob * norm_const
    m2 = symmetrize((vec * (d * norm_const)) @ vec.T)
    m1 = vec @ (m1_diag * norm_const)
    conditional = symmetrize((vec * (d / max(prob, 1e-300))) @ vec.T)
    return BallMoments(mass=mass, prob=prob, m1=m1, m2=m2), conditional


def truncated_second_moment(n, radius2: float, tol: float = 1e-8) -> NDArray:
    """Conditional second moment E[z z' | z'z <= radius2] for z ~ N(0, n)."""
    bm, conditional = _ball_full(n, radius2, tol)
    if bm.prob <= 0.0:
        raise ValueError("ball probability underflowed; radius2 is degenerate for this covariance")
    n = np.asarray(n, dtype=float)
    if float(np.trace(conditional)) > float(np.trace(n)) + tol:
        raise RuntimeError(
            "truncated second moment exceeded the untruncated trace; quadrature is inconsistent"
        )
    return conditional


def monte_carlo_ball_moments(
    n, radius2: float, samples: int, rng: np.random.Generator
) -> tuple[float, NDArray, int]:
    """Sampling estimate of the ball probability and conditional second moment.

    Deliberately simple (rejection counting on exact Gaussian draws) so it can
    serve as an oracle for the quadrature path.  Returns (probability,
    conditional second moment, number of accepted samples).
    """
    root = psd_sqrt(n)
    p = root.shape[0]
    z = rng.standard_normal((int(samples), p)) @ root.T
    inside = (z * z).sum(axis=1) <= radius2
    count = int(inside.sum())
    prob = count / float(samples)
    if count == 0:
        return prob, np.zeros((p, p)), 0
    zin = z[inside]
    return prob, (zin.T @ zin) / count, count
