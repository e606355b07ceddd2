"""Discrete Gaussian primitives on Z^n.

Mass functions exp(-pi (x-c)^T Sigma^{-1} (x-c)), truncated sums with
certified tail bounds, an exact truncated sampler, and the handful of
lattice-Gaussian inequalities (Poisson summation, smoothing parameter,
shifted-center monotonicity, convolution domination) that the spectrum
and translation modules lean on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

__all__ = [
    "GaussianShape",
    "TruncationPolicy",
    "Box",
    "auto_box",
    "box_points",
    "RhoSum",
    "rho_sum",
    "gamma_normalizer",
    "gamma_pmf",
    "gamma_tail_bound",
    "sample_truncated",
    "PoissonCheck",
    "poisson_identity_check",
    "successive_minima",
    "smoothing_eta_bound",
    "InequalityCheck",
    "shifted_sum_maximizer_check",
    "multidim_upper_check",
    "DominationCheck",
    "gamma_conv_domination_check",
]

# Axis-aligned integer box: one inclusive (lo, hi) pair per coordinate.
Box = tuple[tuple[int, int], ...]

DEFAULT_TAIL_MASS = 1e-12


@dataclass(frozen=True)
class GaussianShape:
    """Gaussian mass function exp(-pi (x-c)^T Sigma^{-1} (x-c)).

    `sigma` is the shape matrix Sigma; the spherical case Sigma = R^2 I is
    what gamma_R uses, but the small-ball machinery needs genuinely
    ellipsoidal shapes, so both share this one type.
    """

    dimension: int
    sigma: np.ndarray
    center: np.ndarray

    def __post_init__(self) -> None:
        sigma = np.asarray(self.sigma, dtype=float)
        center = np.asarray(self.center, dtype=float).reshape(-1)
        if sigma.shape != (self.dimension, self.dimension):
            raise ValueError("shape matrix must be n x n")
        if center.shape != (self.dimension,):
            raise ValueError("center must be an n-vector")
        if not np.allclose(sigma, sigma.T, rtol=0.0, atol=1e-12):
            raise ValueError("shape matrix must be symmetric")
        if np.linalg.eigvalsh(sigma)[0] <= 0.0:
            raise ValueError("shape matrix must be positive definite")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "center", center)

    @classmethod
    def spherical(
        cls, dimension: int, radius: float, center: Sequence[float] | None = None
    ) -> "GaussianShape":
        if radius <= 0.0:
            raise ValueError("radius must be positive")
        c = np.zeros(dimension) if center is None else np.asarray(center, dtype=float)
        return cls(dimension, radius * radius * np.eye(dimension), c)

    @property
    def radius(self) -> float:
        """R with Sigma = R^2 I; rejects non-spherical shapes."""
        r2 = float(self.sigma[0, 0])
        if not np.array_equal(self.sigma, r2 * np.eye(self.dimension)):
            raise ValueError("shape is not spherical")
        return math.sqrt(r2)


@dataclass(frozen=True)
class TruncationPolicy:
    """Euclidean cutoff for gamma_R with tail mass certified below target.

    The radius is derived from the tail certificate
    (sqrt 2)^n exp(-pi u^2 / (2 R^2)) <= tail_mass_target.
    """

    dimension: int
    tail_mass_target: float
    radius: float

    @classmethod
    def for_gaussian(
        cls, dimension: int, radius: float, tail_mass_target: float = DEFAULT_TAIL_MASS
    ) -> "TruncationPolicy":
        if not 0.0 < tail_mass_target < 1.0:
            raise ValueError("tail mass target must lie in (0, 1)")
        if radius <= 0.0:
            raise ValueError("radius must be positive")
        u = radius * math.sqrt(
            (2.0 / math.pi)
            * math.log(math.sqrt(2.0) ** dimension / tail_mass_target)
        )
        return cls(dimension, tail_mass_target, u)

    def tail_bound(self, radius: float) -> float:
        """Certified gamma_radius mass beyond the cutoff."""
        return gamma_tail_bound(self.dimension, radius, self.radius)


def gamma_tail_bound(dimension: int, radius: float, cutoff: float) -> float:
    """(sqrt 2)^n exp(-pi u^2 / (2 R^2)), the gamma_R mass above ||x|| = u."""
    return math.sqrt(2.0) ** dimension * math.exp(
        -math.pi * cutoff * cutoff / (2.0 * radius * radius)
    )


def auto_box(
    dimension: int, radius: float, center: Sequence[float] | None = None
) -> Box:
    """Smallest axis box containing the Euclidean ball of the given radius."""
    c = np.zeros(dimension) if center is None else np.asarray(center, dtype=float)
    return tuple(
        (math.floor(c[i] - radius), math.ceil(c[i] + radius))
        for i in range(dimension)
    )


def _validated_box(box: Sequence[Sequence[int]], dimension: int) -> Box:
    out = tuple((int(lo), int(hi)) for lo, hi in box)
    if len(out) != dimension:
        raise ValueError("box dimension mismatch")
    if any(hi < lo for lo, hi in out):
        raise ValueError("empty box")
    return out


def box_points(box: Box) -> np.ndarray:
    """All integer points of the box, shape (count, n), row-major order."""
    axes = [np.arange(lo, hi + 1) for lo, hi in box]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=-1)


@dataclass(frozen=True)
class RhoSum:
    """Truncated Gaussian sum plus a certified bound on the omitted mass."""

    value: float
    tail_bound: float


def _axis_sum(scale2: float, center: float, lo: int, hi: int) -> float:
    xs = np.arange(lo, hi + 1, dtype=float) - center
    return math.fsum(np.exp(-math.pi * xs * xs / scale2))


def rho_sum(shape: GaussianShape, box: Sequence[Sequence[int]]) -> RhoSum:
    """Sum exp(-pi (x-c)^T Sigma^{-1} (x-c)) over the integer box.

    The tail bound covers every integer point outside the box: with
    r = sqrt(lambda_max(Sigma)) and u the guaranteed distance from c to
    the box complement, the omitted mass is at most
    exp(-pi u^2 / (2 r^2)) * rho_{sqrt2 r}(Z^n), and the centered sum
    dominates the shifted one.
    """
    bx = _validated_box(box, shape.dimension)
    diag = np.diag(np.diag(shape.sigma))
    if np.array_equal(shape.sigma, diag):
        value = 1.0
        for i, (lo, hi) in enumerate(bx):
            value *= _axis_sum(float(shape.sigma[i, i]), float(shape.center[i]), lo, hi)
    else:
        pts = box_points(bx)
        diff = pts - shape.center
        q = np.einsum("ij,jk,ik->i", diff, np.linalg.inv(shape.sigma), diff)
        value = math.fsum(np.exp(-math.pi * q))
    r_max = math.sqrt(float(np.linalg.eigvalsh(shape.sigma)[-1]))
    u = min(
        min(shape.center[i] - (lo - 1), (hi + 1) - shape.center[i])
        for i, (lo, hi) in enumerate(bx)
    )
    u = max(float(u), 0.0)
    tail = (1.0 + math.sqrt(2.0) * r_max) ** shape.dimension * math.exp(
        -math.pi * u * u / (2.0 * r_max * r_max)
    )
    return RhoSum(value, tail)


@lru_cache(maxsize=None)
def _normalizer_1d(radius: float, lo: int, hi: int) -> float:
    return _axis_sum(radius * radius, 0.0, lo, hi)


def gamma_normalizer(
    dimension: int, radius: float, box: Box | None = None
) -> float:
    """rho_R(Z^n) over a tail-certified box; product form per axis."""
    if box is None:
        box = auto_box(
            dimension,
            TruncationPolicy.for_gaussian(dimension, radius, 1e-15).radius,
        )
    value = 1.0
    for lo, hi in box:
        value *= _normalizer_1d(float(radius), int(lo), int(hi))
    return value


def gamma_pmf(
    radius: float, x: Sequence[int], box: Box | None = None
) -> float:
    """gamma_R(x) = exp(-pi ||x||^2 / R^2) / rho_R(Z^n).

    The normalizer is summed over `box` (auto-sized to tail certificate
    1e-15 when omitted, well under the 1e-12 requirement).
    """
    if radius < 1.0:
        raise ValueError("R must be at least 1")
    xv = np.asarray(x, dtype=float).reshape(-1)
    return math.exp(-math.pi * float(xv @ xv) / (radius * radius)) / gamma_normalizer(
        xv.size, radius, box
    )


def sample_truncated(
    radius: float,
    policy: TruncationPolicy,
    seed: int,
    count: int | None = None,
) -> np.ndarray:
    """Exact samples from gamma_R conditioned on ||x||_2 <= policy.radius.

    Coordinate-wise inverse CDF over the enumerated 1-D support, then
    rejection on the Euclidean ball. The accepted sequence is a pure
    function of the seed, so prefixes agree across different counts.
    """
    if policy.radius < radius:
        raise ValueError("truncation radius below R: ball too small")
    n = policy.dimension
    w = math.ceil(policy.radius)
    support = np.arange(-w, w + 1)
    weights = np.exp(-math.pi * support.astype(float) ** 2 / (radius * radius))
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    rng = np.random.default_rng(seed)
    want = 1 if count is None else int(count)
    rows: list[np.ndarray] = []
    have = 0
    drawn = 0
    r2 = policy.radius * policy.radius
    while have < want:
        batch = 1024
        idx = np.searchsorted(cdf, rng.random((batch, n)), side="right")
        cand = support[idx]
        keep = cand[np.einsum("ij,ij->i", cand, cand) <= r2]
        drawn += batch
        if keep.size:
            rows.append(keep)
            have += keep.shape[0]
        if drawn >= 1_000_000 and have < max(1, drawn * 1e-6):
            raise ValueError("acceptance probability below 1e-6: ball too small")
    out = np.concatenate(rows, axis=0)[:want]
    return out[0] if count is None else out


@dataclass(frozen=True)
class PoissonCheck:
    lhs: float
    rhs: float
    relative_error: float


def poisson_identity_check(
    M: np.ndarray, box: Sequence[Sequence[int]] | None = None
) -> PoissonCheck:
    """Poisson summation for Gaussians on Z^n:

    sum_x exp(-pi x^T M x) = det(M)^{-1/2} (1 + sum_{y != 0} exp(-pi y^T M^{-1} y)).

    Both sides are truncated sums over tail-certified boxes; the report
    carries |lhs - rhs| / rhs.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    eigs = np.linalg.eigvalsh(M)
    if eigs[0] <= 0.0:
        raise ValueError("M must be positive definite")
    Minv = np.linalg.inv(M)
    r_primal = math.sqrt(float(np.linalg.eigvalsh(Minv)[-1]))
    r_dual = math.sqrt(float(eigs[-1]))
    if box is None:
        box = auto_box(
            n, TruncationPolicy.for_gaussian(n, max(r_primal, 1.0), 1e-14).radius
        )
    dual_box = auto_box(
        n, TruncationPolicy.for_gaussian(n, max(r_dual, 1.0), 1e-14).radius
    )
    lhs = rho_sum(GaussianShape(n, Minv, np.zeros(n)), box).value
    dual_total = rho_sum(GaussianShape(n, M, np.zeros(n)), dual_box).value
    rhs = dual_total / math.sqrt(float(np.linalg.det(M)))
    return PoissonCheck(lhs, rhs, abs(lhs - rhs) / rhs)


def successive_minima(basis: np.ndarray) -> np.ndarray:
    """All n successive minima of the lattice with the given basis columns.

    Exhaustive enumeration inside the ball of radius max_i ||b_i||, which
    is guaranteed to contain witnesses for every lambda_k. n <= 4 only.
    """
    B = np.asarray(basis, dtype=float)
    n = B.shape[1]
    if B.shape[0] != n:
        raise ValueError("basis must be square (full-rank lattice)")
    if n > 4:
        raise ValueError("dimension capped at 4")
    if abs(np.linalg.det(B)) < 1e-12:
        raise ValueError("basis columns must be linearly independent")
    r = max(float(np.linalg.norm(B[:, i])) for i in range(n))
    Binv = np.linalg.inv(B)
    bounds = [int(math.floor(float(np.linalg.norm(Binv[i])) * r)) for i in range(n)]
    if np.prod([2 * b + 1 for b in bounds]) > 10**7:
        raise ValueError("enumeration too large for this basis")
    axes = [np.arange(-b, b + 1) for b in bounds]
    coeffs = np.stack(
        [g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1
    )
    coeffs = coeffs[np.any(coeffs != 0, axis=1)]
    vecs = coeffs @ B.T
    norms = np.linalg.norm(vecs, axis=1)
    inside = norms <= r + 1e-9
    vecs, norms = vecs[inside], norms[inside]
    order = np.argsort(norms, kind="stable")
    minima: list[float] = []
    chosen: list[np.ndarray] = []
    for i in order:
        cand = vecs[i]
        if chosen:
            Q = np.stack(chosen)
            resid = cand - Q.T @ np.linalg.lstsq(Q.T, cand, rcond=None)[0]
            if np.linalg.norm(resid) < 1e-9 * max(1.0, norms[i]):
                continue
        chosen.append(cand)
        minima.append(float(norms[i]))
        if len(minima) == n:
            break
    return np.asarray(minima)


def smoothing_eta_bound(basis: np.ndarray, eps: float = 1.0 / 3.0) -> float:
    """Upper bound sqrt(ln(2n(1 + 1/eps)) / pi) * lambda_n on the smoothing
    parameter eta_eps of the lattice."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    B = np.asarray(basis, dtype=float)
    n = B.shape[1]
    lam_n = float(successive_minima(B)[-1])
    return math.sqrt(math.log(2.0 * n * (1.0 + 1.0 / eps)) / math.pi) * lam_n


@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    passed: bool


def shifted_sum_maximizer_check(
    radius: float,
    center: Sequence[float],
    box: Sequence[Sequence[int]] | None = None,
) -> InequalityCheck:
    """rho_{R,c}(Z^n) <= rho_R(Z^n), checked on tail-certified boxes."""
    c = np.asarray(center, dtype=float).reshape(-1)
    n = c.size
    u = TruncationPolicy.for_gaussian(n, radius, 1e-14).radius
    box_l = _validated_box(box, n) if box is not None else auto_box(n, u, c)
    box_r = _validated_box(box, n) if box is not None else auto_box(n, u)
    lhs = rho_sum(GaussianShape.spherical(n, radius, c), box_l).value
    rhs = rho_sum(GaussianShape.spherical(n, radius), box_r).value
    return InequalityCheck(lhs, rhs, lhs <= rhs * (1.0 + 1e-12) + 1e-12)


def multidim_upper_check(
    M: np.ndarray,
    center: Sequence[float],
    box: Sequence[Sequence[int]] | None = None,
) -> InequalityCheck:
    """sum_z exp(-pi (z-c)^T M (z-c)) <= (1 + lambda_min(M)^{-1/2})^n."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    c = np.asarray(center, dtype=float).reshape(-1)
    eigs = np.linalg.eigvalsh(M)
    if eigs[0] <= 0.0:
        raise ValueError("M must be positive definite")
    r = math.sqrt(float(np.linalg.eigvalsh(np.linalg.inv(M))[-1]))
    bx = (
        _validated_box(box, n)
        if box is not None
        else auto_box(n, TruncationPolicy.for_gaussian(n, max(r, 1.0), 1e-14).radius, c)
    )
    lhs = rho_sum(GaussianShape(n, np.linalg.inv(M), c), bx).value
    rhs = (1.0 + 1.0 / math.sqrt(float(eigs[0]))) ** n
    return InequalityCheck(lhs, rhs, lhs <= rhs * (1.0 + 1e-12) + 1e-12)


@dataclass(frozen=True)
class DominationCheck:
    worst_ratio: float
    passed: bool


def gamma_conv_domination_check(
    radius: float, dimension: int, box: Sequence[Sequence[int]] | None = None
) -> DominationCheck:
    """Gamma_R = gamma_R * gamma_R satisfies Gamma_R(x) <= 4 gamma_{sqrt2 R}(x).

    Needs R >= sqrt((2/pi) ln(8n)). The convolution is exact per axis
    (spherical Gaussians factorize), so the n-dim worst ratio is the
    product of per-axis maxima over the box.
    """
    if radius < math.sqrt((2.0 / math.pi) * math.log(8.0 * dimension)):
        raise ValueError("R below the domination threshold sqrt((2/pi) ln 8n)")
    w = math.ceil(TruncationPolicy.for_gaussian(1, radius, 1e-15).radius)
    bx = (
        _validated_box(box, dimension)
        if box is not None
        else tuple((-2 * w, 2 * w) for _ in range(dimension))
    )
    if any(lo < -2 * w or hi > 2 * w for lo, hi in bx):
        raise ValueError("box exceeds the exact convolution support")
    support = np.arange(-w, w + 1, dtype=float)
    pmf1 = np.exp(-math.pi * support * support / (radius * radius))
    pmf1 /= _normalizer_1d(float(radius), -w, w)
    conv1 = np.convolve(pmf1, pmf1)  # support -2w .. 2w
    xs2 = np.arange(-2 * w, 2 * w + 1, dtype=float)
    r2 = math.sqrt(2.0) * radius
    g2 = np.exp(-math.pi * xs2 * xs2 / (r2 * r2)) / gamma_normalizer(1, r2)
    ratio1 = conv1 / g2
    worst = 1.0
    for lo, hi in bx:
        lo_i, hi_i = lo + 2 * w, hi + 2 * w
        worst *= float(np.max(ratio1[lo_i : hi_i + 1]))
    return DominationCheck(worst, worst <= 4.0)
