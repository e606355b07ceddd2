"""Additive-combinatorial structure of large spectra.

Dissociated sets and the coarse Rudin inequality, the exact-route chain
extractor producing a sketch lattice with exact rational generators and
congruence relations, the near-origin extractor producing a rational
span basis, small-ball probability checks, and the convolution route
that funnels products of dense pieces through symmetrization.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dgauss import TruncationPolicy, sample_truncated
from .measure import (
    ScanReport,
    SparseMeasure,
    TorusPoint,
    density_certificate,
    fourier_at,
    large_spectrum_scan,
    symmetrize,
)

__all__ = [
    "CertifiedBoundError",
    "DissociationCapError",
    "DissociationResult",
    "SketchLattice",
    "NearOriginBasis",
    "ExactRouteConfig",
    "NearOriginConfig",
    "is_kappa_dissociated",
    "signed_combinations",
    "torus_distance_to_set",
    "coarse_rudin_check",
    "RudinCheck",
    "greedy_dissociated_subset",
    "extract_exact_structure",
    "verify_span",
    "SpanCheck",
    "extract_near_origin_structure",
    "small_ball_check",
    "small_ball_exact_1d",
    "SmallBallCheck",
    "convolution_structure",
    "lattice_to_text",
    "lattice_from_text",
    "basis_to_text",
    "basis_from_text",
]

DISSOCIATION_CAP = 20
FIBER_BUDGET = 10**6


class CertifiedBoundError(RuntimeError):
    """A certified theorem bound failed; a test must see this, not a clamp."""


class DissociationCapError(ValueError):
    def __init__(self, message: str, partial: list | None = None) -> None:
        super().__init__(message)
        self.partial = partial or []


def _reduce_rows(arr: np.ndarray) -> np.ndarray:
    return arr - np.floor(arr + 0.5)


def _reduce_fraction(f: Fraction) -> Fraction:
    # representative of f mod 1 in [-1/2, 1/2)
    shift = (f + Fraction(1, 2)).numerator // (f + Fraction(1, 2)).denominator
    return f - shift


def _round_ties_to_zero(x: float) -> int:
    return math.ceil(x - 0.5) if x >= 0.0 else math.floor(x + 0.5)


def _as_rows(points: Sequence[TorusPoint] | np.ndarray) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return points.reshape(len(points), -1).astype(float)
    return np.array([p.array for p in points], dtype=float).reshape(len(points), -1)


@dataclass(frozen=True)
class DissociationResult:
    dissociated: bool
    witness: tuple[int, ...] | None


def is_kappa_dissociated(
    points: Sequence[TorusPoint] | np.ndarray,
    kappa: float,
    cap: int = DISSOCIATION_CAP,
) -> DissociationResult:
    """True iff every nonzero sign pattern eps in {-1,0,1}^m keeps
    ||sum eps_i xi_i||_{T^n} >= kappa; the first violating pattern (in
    base-3 order, digits 0,+1,-1, leftmost most significant) is the
    witness."""
    pts = _as_rows(points)
    m = pts.shape[0]
    if m == 0:
        return DissociationResult(True, None)
    if m > cap:
        raise DissociationCapError(f"dissociation enumeration capped at {cap}")
    total = 3**m
    powers = 3 ** np.arange(m - 1, -1, -1, dtype=np.int64)
    chunk = 1 << 16
    for start in range(1, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = (idx[:, None] // powers) % 3
        eps = np.where(digits == 2, -1, digits)
        sums = _reduce_rows(eps @ pts)
        norms2 = np.einsum("ij,ij->i", sums, sums)
        bad = np.nonzero(norms2 < kappa * kappa)[0]
        if bad.size:
            return DissociationResult(
                False, tuple(int(e) for e in eps[int(bad[0])])
            )
    return DissociationResult(True, None)


def signed_combinations(points: Sequence[TorusPoint] | np.ndarray) -> np.ndarray:
    """All torus points sum_i eps_i xi_i for eps in {-1,0,1}^m, reduced."""
    pts = _as_rows(points) if len(points) else np.zeros((0, 1))
    m = pts.shape[0]
    if m == 0:
        n = pts.shape[1] if pts.size else 1
        return np.zeros((1, n))
    if m > 12:
        raise DissociationCapError("signed-combination enumeration too large")
    eps = np.array(list(itertools.product((-1, 0, 1), repeat=m)))
    return _reduce_rows(eps @ pts)


def torus_distance_to_set(zeta: np.ndarray, combos: np.ndarray) -> float:
    d = _reduce_rows(np.asarray(zeta, dtype=float) - combos)
    return float(np.sqrt(np.einsum("ij,ij->i", d, d).min()))


@dataclass(frozen=True)
class RudinCheck:
    lhs: float
    rhs: float
    passed: bool


def coarse_rudin_check(
    nu: SparseMeasure,
    T: Sequence[TorusPoint],
    c: Sequence[complex],
    sigma: float,
    kappa: float,
    eta: float,
) -> RudinCheck:
    """E_nu exp(sigma F) <= exp(sigma^2 sum|c|^2 / 2) + eta exp(sigma sum|c|)
    for F(x) = Re sum_xi c(xi) e(<xi, x>), T kappa-dissociated and eta a
    bound on |nu_hat| at torus distance >= kappa from 0."""
    if T and not is_kappa_dissociated(T, kappa).dissociated:
        raise ValueError("frequency set is not kappa-dissociated")
    cs = np.asarray(c, dtype=complex)
    if len(T) != cs.size:
        raise ValueError("coefficient count must match frequency count")
    if T:
        phases = nu.points @ _as_rows(T).T
        F = (np.exp(2j * math.pi * phases) @ cs).real
    else:
        F = np.zeros(nu.support_size)
    lhs = float(np.exp(sigma * F) @ nu.masses)
    sum_sq = float(np.sum(np.abs(cs) ** 2))
    sum_abs = float(np.sum(np.abs(cs)))
    rhs = math.exp(sigma * sigma * sum_sq / 2.0) + eta * math.exp(sigma * sum_abs)
    return RudinCheck(lhs, rhs, lhs <= rhs + 1e-9)


def greedy_dissociated_subset(
    freqs: Sequence[TorusPoint],
    kappa: float,
    cap: int = DISSOCIATION_CAP,
) -> list[TorusPoint]:
    """Scan freqs in the given order, keeping each frequency whose
    addition preserves kappa-dissociation of the kept set."""
    kept: list[TorusPoint] = []
    for f in freqs:
        if len(kept) >= cap:
            raise DissociationCapError(
                f"dissociated subset exceeded the cap {cap}", partial=kept
            )
        if is_kappa_dissociated(kept + [f], kappa, cap=cap).dissociated:
            kept.append(f)
    return kept


@dataclass(frozen=True)
class SketchLattice:
    """Exact-route output: generators t_j with denominators k_j and exact
    congruences k_j t_j = sum_{i<j} c_i t_i (mod Z^n).

    Generators are exact rationals; every relation is verified to hold
    with an integer residue at construction.
    """

    dimension: int
    generators: tuple[tuple[Fraction, ...], ...]
    denominators: tuple[int, ...]
    relations: tuple[tuple[int, ...], ...]
    span_error: float
    fiber_bound: int
    s_certified: float
    kappa: float = 0.0
    q: int = 0
    ambient_radius: float = 0.0
    chain_length: int = 0
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        m = len(self.generators)
        if not (len(self.denominators) == len(self.relations) == m):
            raise ValueError("generator, denominator, relation counts differ")
        prod = 1
        for j, (t, k, rel) in enumerate(
            zip(self.generators, self.denominators, self.relations)
        ):
            if k < 1:
                raise ValueError("denominators must be >= 1")
            if len(rel) != j:
                raise ValueError("relation j must have j coefficients")
            if any(not 0 <= c < self.denominators[i] for i, c in enumerate(rel)):
                raise ValueError("relation coefficients must satisfy 0 <= c_i < k_i")
            residue = [
                k * t[d] - sum(c * self.generators[i][d] for i, c in enumerate(rel))
                for d in range(self.dimension)
            ]
            if any(r.denominator != 1 for r in residue):
                raise ValueError("congruence relation fails to close exactly")
            prod *= k
        if prod != self.fiber_bound:
            raise ValueError("fiber bound must equal the product of denominators")
        if self.s_certified > 0 and m > 14.0 * self.s_certified * (1.0 + 1e-9):
            raise CertifiedBoundError(
                f"lattice rank {m} exceeds 14 S = {14.0 * self.s_certified:.3f}"
            )

    @property
    def rank(self) -> int:
        return len(self.generators)

    def generator_points(self) -> list[TorusPoint]:
        return [
            TorusPoint.of([float(c) for c in t]) for t in self.generators
        ]

    def combination_points(self, budget: int = FIBER_BUDGET) -> np.ndarray:
        """All admissible combinations sum c_i t_i, 0 <= c_i < k_i, as
        reduced float rows (the full subgroup generated by the lattice)."""
        if self.fiber_bound > budget:
            raise ValueError("fiber enumeration exceeds the budget")
        if not self.generators:
            return np.zeros((1, self.dimension))
        gens = np.array(
            [[float(c) for c in t] for t in self.generators], dtype=float
        )
        coeffs = np.array(
            list(itertools.product(*(range(k) for k in self.denominators))),
            dtype=float,
        )
        return _reduce_rows(coeffs @ gens)


@dataclass(frozen=True)
class NearOriginBasis:
    """Mollified-route output: rational frequencies eta_j = w_j / Q with
    integer numerators w_j, |entries| <= Q/2; heavy near-origin
    frequencies lie within radius_bound of their real span."""

    dimension: int
    numerators: tuple[tuple[int, ...], ...]
    denominator: int
    radius_bound: float
    s_certified: float = 0.0
    B: float = 2.0
    kappa: float = 0.0
    rho: float = 0.0
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for w in self.numerators:
            if len(w) != self.dimension:
                raise ValueError("numerator dimension mismatch")
            if any(abs(c) > self.denominator / 2 for c in w):
                raise ValueError("numerator entries must be bounded by Q/2")
        if self.s_certified > 0:
            cap = 2.0 * self.s_certified / math.log2(2.0 * self.B)
            if self.ell > cap * (1.0 + 1e-9):
                raise CertifiedBoundError(
                    f"basis size {self.ell} exceeds 2S/log2(2B) = {cap:.3f}"
                )

    @property
    def ell(self) -> int:
        return len(self.numerators)

    def frequencies(self) -> list[TorusPoint]:
        return [
            TorusPoint.of(np.asarray(w, dtype=float) / self.denominator)
            for w in self.numerators
        ]

    def span_matrix(self) -> np.ndarray:
        """Real span directions, one row per basis frequency."""
        return np.array(self.numerators, dtype=float) / self.denominator


@dataclass(frozen=True)
class ExactRouteConfig:
    K: float
    Q: int
    q: int
    R: float
    kappa: float | None = None
    grid_exponent: int = 7
    refine: bool = True


@dataclass(frozen=True)
class NearOriginConfig:
    K: float
    kappa: float
    B: float
    Q: int
    R: float
    grid_exponent: int = 7
    refine: bool = True


def _scan_heavy(
    mu: SparseMeasure, K: float, grid_exponent: int, refine: bool
) -> tuple[ScanReport, list[str]]:
    scan = large_spectrum_scan(mu, K, grid_exponent, refine=refine)
    warnings = []
    if scan.margin_vacuous:
        warnings.append(
            "scan non-omission margin is vacuous at this grid resolution"
        )
    return scan, warnings


def _chain_witness(
    a: np.ndarray,
    r: int,
    q: int,
    flat: list[tuple[int, int, np.ndarray]],
    kappa: float,
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """First (eps, delta) in base-3 order with
    ||q^r a - sum_l eps_l q^l a - sum_w delta_w xi_w|| < kappa."""
    target = _reduce_rows((q**r * a)[None, :])[0]
    chain = np.stack([_reduce_rows((q**l * a)[None, :])[0] for l in range(r)])
    others = (
        np.stack([xi for _, _, xi in flat]) if flat else np.zeros((0, a.size))
    )
    w = others.shape[0]
    for assign in itertools.product((0, 1, -1), repeat=r + w):
        eps = np.asarray(assign[:r], dtype=float)
        delta = np.asarray(assign[r:], dtype=float)
        vec = target - eps @ chain
        if w:
            vec = vec - delta @ others
        vec = vec - np.floor(vec + 0.5)
        if float(np.linalg.norm(vec)) < kappa:
            return tuple(assign[:r]), tuple(assign[r:])
    raise RuntimeError("dissociation failed but no witness was found")


def _admissible_target(
    deltas: Sequence[int],
    flat_tags: Sequence[tuple[int, int]],
    q: int,
    denominators: list[int],
    relations: list[tuple[int, ...]],
    generators: list[tuple[Fraction, ...]],
    dimension: int,
) -> tuple[list[int], tuple[Fraction, ...]]:
    """Reduce a signed witness combination over chain elements to
    admissible coefficients 0 <= c_i < k_i via the exact relations,
    top index first."""
    rank = len(generators)
    d = [0] * rank
    for (i, l), delta in zip(flat_tags, deltas):
        d[i] += int(delta) * q**l
    for i in range(rank - 1, -1, -1):
        f, c = divmod(d[i], denominators[i])
        d[i] = c
        if f:
            for i2, coef in enumerate(relations[i]):
                d[i2] += f * coef
    target = tuple(
        sum((d[i] * generators[i][dim] for i in range(rank)), Fraction(0))
        for dim in range(dimension)
    )
    return d, target


def extract_exact_structure(
    mu: SparseMeasure, cfg: ExactRouteConfig
) -> SketchLattice:
    """Greedy chain construction over the scanned large spectrum.

    Repeatedly pick the strongest heavy frequency farther than kappa from
    every signed combination of the current chain set, grow its chain
    a, qa, ..., q^{r-1}a maximally under kappa-dissociation (r <= r*), and
    extract the denominator k_j from the dissociation witness (Case 1,
    r < r*) or set k_j = Q (Case 2, r = r*). Exact generators follow by
    per-coordinate nearest-branch rounding of the witness congruence.
    """
    if not 3 <= cfg.q <= cfg.K:
        raise ValueError("need 3 <= q <= K")
    n = mu.dimension
    cert = density_certificate(mu, cfg.R)
    S = cert.S
    warnings: list[str] = []
    if cfg.Q < cfg.R * cfg.K * math.sqrt(n) - 1e-6:
        warnings.append(
            f"Q={cfg.Q} below the recommended R K sqrt(n) = "
            f"{cfg.R * cfg.K * math.sqrt(n):.1f}"
        )
    kappa_paper = 5.0 * math.sqrt(S) / cfg.R
    kappa = cfg.kappa if cfg.kappa is not None else kappa_paper
    if kappa < kappa_paper:
        warnings.append(
            f"kappa={kappa:.4g} overrides the default 5 sqrt(S)/R = "
            f"{kappa_paper:.4g}"
        )
    scan, scan_warnings = _scan_heavy(mu, cfg.K, cfg.grid_exponent, cfg.refine)
    warnings.extend(scan_warnings)
    heavy = [h.zeta.array for h in scan.hits]
    r_star = max(1, int(math.floor(0.5 * math.log(cfg.K) / math.log(cfg.q))))

    flat: list[tuple[int, int, np.ndarray]] = []  # (chain index, power, point)
    generators: list[tuple[Fraction, ...]] = []
    denominators: list[int] = []
    relations: list[tuple[int, ...]] = []
    chain_budget = 14.0 * S * (1.0 + 1e-9)

    while True:
        combos = signed_combinations(
            np.stack([xi for _, _, xi in flat]) if flat else np.zeros((0, n))
        )
        pick: np.ndarray | None = None
        for z in heavy:
            if torus_distance_to_set(z, combos) > kappa:
                pick = z
                break
        if pick is None:
            break
        j = len(generators)
        base = [xi for _, _, xi in flat]
        r = 0
        for r_try in range(1, r_star + 1):
            trial = base + [
                _reduce_rows((cfg.q**l * pick)[None, :])[0] for l in range(r_try)
            ]
            if is_kappa_dissociated(np.stack(trial), kappa).dissociated:
                r = r_try
            else:
                break
        if r == 0:
            raise RuntimeError("uncovered frequency failed first-step dissociation")
        if len(flat) + r > chain_budget:
            raise CertifiedBoundError(
                "total chain length exceeds the 14 S dissociated-size bound"
            )
        if r == r_star:
            # Case 2: denominator Q, generator = nearest Q-grid point
            k_j = cfg.Q
            t_j = tuple(
                _reduce_fraction(Fraction(_round_ties_to_zero(cfg.Q * c), cfg.Q))
                for c in pick
            )
            c_list = [0] * j
        else:
            # Case 1: the failed extension by q^r a yields the witness
            eps, deltas = _chain_witness(pick, r, cfg.q, flat, kappa)
            k_j = cfg.q**r - sum(e * cfg.q**l for l, e in enumerate(eps))
            if not 1 <= k_j <= cfg.Q:
                raise RuntimeError(f"witness produced invalid denominator {k_j}")
            c_list, target = _admissible_target(
                deltas,
                [(i, l) for i, l, _ in flat],
                cfg.q,
                denominators,
                relations,
                generators,
                n,
            )
            t_j = tuple(
                _reduce_fraction(
                    (target[d] + _round_ties_to_zero(k_j * pick[d] - float(target[d])))
                    / k_j
                )
                for d in range(n)
            )
        for l in range(r):
            mag = abs(fourier_at(mu, _reduce_rows((cfg.q**l * pick)[None, :])[0]))
            floor_bound = 1.0 - cfg.q ** (2 * l) / cfg.K
            if mag < floor_bound - 1e-6:
                warnings.append(
                    f"chain element q^{l} a_{j} magnitude {mag:.6f} below "
                    f"{floor_bound:.6f}"
                )
            flat.append((j, l, _reduce_rows((cfg.q**l * pick)[None, :])[0]))
        generators.append(t_j)
        denominators.append(k_j)
        relations.append(tuple(c_list))

    fiber_bound = math.prod(denominators) if denominators else 1
    lattice = SketchLattice(
        dimension=n,
        generators=tuple(generators),
        denominators=tuple(denominators),
        relations=tuple(relations),
        span_error=0.0,
        fiber_bound=fiber_bound,
        s_certified=S,
        kappa=kappa,
        q=cfg.q,
        ambient_radius=cfg.R,
        chain_length=len(flat),
        warnings=tuple(warnings),
    )
    worst = 0.0
    if heavy:
        combos = lattice.combination_points()
        worst = max(torus_distance_to_set(z, combos) for z in heavy)
    return replace(lattice, span_error=worst)


@dataclass(frozen=True)
class SpanCheck:
    worst_distance: float
    bound: float
    passed: bool


def span_bound_default(lattice: SketchLattice) -> float:
    """5 lambda_q^{14 S} sqrt(S) / R with lambda_q = (q-1)/(q-2)."""
    lam = (lattice.q - 1.0) / (lattice.q - 2.0)
    return (
        5.0
        * lam ** (14.0 * lattice.s_certified)
        * math.sqrt(lattice.s_certified)
        / lattice.ambient_radius
    )


def verify_span(
    lattice: SketchLattice,
    heavy: Sequence[TorusPoint],
    bound: float | None = None,
    budget: int = FIBER_BUDGET,
) -> SpanCheck:
    """Worst torus distance from the heavy frequencies to the admissible
    combination set of the lattice, against the given (or default) bound."""
    combos = lattice.combination_points(budget)
    worst = max(
        (torus_distance_to_set(h.array, combos) for h in heavy), default=0.0
    )
    b = bound if bound is not None else span_bound_default(lattice)
    return SpanCheck(worst, b, worst <= b + 1e-12)


def extract_near_origin_structure(
    mu: SparseMeasure, cfg: NearOriginConfig
) -> NearOriginBasis:
    """Greedy rho-separated selection of near-origin heavy frequencies,
    orthonormalized and rounded to the Q-grid.

    Returns ell = 0 immediately when 2 rho >= kappa (the whole near-origin
    set is already within the radius bound of the trivial span).
    """
    n = mu.dimension
    cert = density_certificate(mu, cfg.R)
    S = cert.S
    warnings: list[str] = []
    lo = 3.0 * math.sqrt(S) / cfg.R
    hi = math.sqrt(2.0 * math.pi / (cfg.K * math.log(8.0 * n)))
    if not lo <= cfg.kappa <= hi:
        warnings.append(
            f"kappa={cfg.kappa:.4g} outside the window [{lo:.4g}, {hi:.4g}]"
        )
    rho = 100.0 * cfg.B * S**1.5 * cfg.kappa / math.sqrt(cfg.K)
    if rho > 0 and cfg.Q < 2.0 * math.sqrt(2.0 * n * S) * cfg.kappa / rho:
        warnings.append(
            f"Q={cfg.Q} below the recommended 2 sqrt(2nS) kappa / rho = "
            f"{2.0 * math.sqrt(2.0 * n * S) * cfg.kappa / rho:.1f}"
        )
    scan, scan_warnings = _scan_heavy(mu, cfg.K, cfg.grid_exponent, cfg.refine)
    warnings.extend(scan_warnings)
    near = [
        h.zeta.array for h in scan.hits if h.zeta.norm <= cfg.kappa + 1e-12
    ]
    if 2.0 * rho >= cfg.kappa:
        return NearOriginBasis(
            dimension=n,
            numerators=(),
            denominator=cfg.Q,
            radius_bound=2.0 * rho,
            s_certified=S,
            B=cfg.B,
            kappa=cfg.kappa,
            rho=rho,
            warnings=tuple(warnings),
        )
    selected: list[np.ndarray] = []
    for a in near:
        if not selected:
            dist = float(np.linalg.norm(a))
        else:
            Q_span = np.stack(selected).T
            coef, *_ = np.linalg.lstsq(Q_span, a, rcond=None)
            dist = float(np.linalg.norm(a - Q_span @ coef))
        if dist >= rho:
            selected.append(a)
    if selected:
        ortho, _ = np.linalg.qr(np.stack(selected).T)
        cols = []
        for i in range(ortho.shape[1]):
            u = ortho[:, i]
            lead = u[np.argmax(np.abs(u) > 1e-12)]
            cols.append(u if lead >= 0 else -u)
        numerators = tuple(
            tuple(
                _round_ties_to_zero(cfg.Q * c)
                - cfg.Q * math.floor((_round_ties_to_zero(cfg.Q * c)) / cfg.Q + 0.5)
                for c in u
            )
            for u in cols
        )
    else:
        numerators = ()
    basis = NearOriginBasis(
        dimension=n,
        numerators=numerators,
        denominator=cfg.Q,
        radius_bound=2.0 * rho,
        s_certified=S,
        B=cfg.B,
        kappa=cfg.kappa,
        rho=rho,
        warnings=tuple(warnings),
    )
    span = basis.span_matrix().T  # columns span the subspace
    for a in near:
        if span.size:
            coef, *_ = np.linalg.lstsq(span, a, rcond=None)
            dist = float(np.linalg.norm(a - span @ coef))
        else:
            dist = float(np.linalg.norm(a))
        if dist > 2.0 * rho + 1e-12:
            raise RuntimeError(
                "near-origin heavy frequency escapes the certified span radius"
            )
    return basis


def _gram_schmidt_increments(A: np.ndarray) -> list[float]:
    out = []
    basis: list[np.ndarray] = []
    for row in A:
        v = row.astype(float)
        for b in basis:
            v = v - (v @ b) * b
        norm = float(np.linalg.norm(v))
        out.append(norm)
        if norm > 1e-15:
            basis.append(v / norm)
    return out


@dataclass(frozen=True)
class SmallBallCheck:
    probability: float
    bound: float
    passed: bool
    trials: int
    hits: int
    stderr: float


def _small_ball_bound(A: np.ndarray, R: float, u: float, b: np.ndarray) -> float:
    ell = A.shape[0]
    rho = min(_gram_schmidt_increments(A))
    s_fac = ell * R * R / (2.0 * math.pi * u * u)
    M = np.eye(ell) + s_fac * (A @ A.T)
    quad = float(b @ np.linalg.solve(M, b))
    return (
        2.0
        * (5.0 * u / (rho * R)) ** ell
        * math.exp(-(ell / (2.0 * u * u)) * quad)
    )


def _small_ball_window_check(A: np.ndarray, R: float, u: float) -> None:
    ell, n = A.shape
    kappa0 = float(np.max(np.linalg.norm(A, axis=1)))
    window = 1.0 / (R * R) + ell * ell * kappa0 * kappa0 / (
        2.0 * math.pi * u * u
    )
    if window > math.pi / math.log(8.0 * n):
        raise ValueError(
            f"parameter window violated: {window:.4g} > "
            f"{math.pi / math.log(8.0 * n):.4g}"
        )
    if min(_gram_schmidt_increments(A)) <= 0.0:
        raise ValueError("rows must have positive Gram-Schmidt increments")


def small_ball_check(
    A: np.ndarray,
    R: float,
    u: float,
    b: Sequence[float],
    trials: int,
    seed: int,
) -> SmallBallCheck:
    """Monte-Carlo P(||A Y - b|| <= u) under Y ~ gamma_R (truncated; the
    truncation deficit is folded into the pass allowance) against the
    closed-form small-ball bound."""
    A = np.asarray(A, dtype=float)
    bv = np.asarray(b, dtype=float).reshape(-1)
    _small_ball_window_check(A, R, u)
    bound = _small_ball_bound(A, R, u, bv)
    policy = TruncationPolicy.for_gaussian(A.shape[1], R)
    samples = sample_truncated(R, policy, seed, count=trials)
    resid = samples @ A.T - bv
    hits = int(np.count_nonzero(np.einsum("ij,ij->i", resid, resid) <= u * u))
    p_hat = hits / trials
    stderr = math.sqrt(max(p_hat * (1.0 - p_hat), 1.0 / trials) / trials)
    allowance = 3.0 * stderr + policy.tail_mass_target
    return SmallBallCheck(
        p_hat, bound, p_hat <= bound + allowance, trials, hits, stderr
    )


def small_ball_exact_1d(
    a: float, R: float, u: float, b: float
) -> SmallBallCheck:
    """Exact summation of P(|a y - b| <= u) for y ~ gamma_R on Z."""
    A = np.array([[a]])
    _small_ball_window_check(A, R, u)
    bound = _small_ball_bound(A, R, u, np.array([b]))
    width = int(math.ceil(TruncationPolicy.for_gaussian(1, R, 1e-16).radius))
    ys = np.arange(-width, width + 1, dtype=float)
    weights = np.exp(-math.pi * ys * ys / (R * R))
    weights /= math.fsum(weights)
    mask = np.abs(a * ys - b) <= u
    prob = float(math.fsum(weights[mask]))
    return SmallBallCheck(prob, bound, prob <= bound + 1e-12, 0, -1, 0.0)


def product_heavy_frequencies(
    mus: Sequence[SparseMeasure],
    threshold: float,
    grid_exponent: int,
) -> list[TorusPoint]:
    """Grid frequencies where prod_i |mu_i_hat| >= threshold."""
    side = 2**grid_exponent
    n = mus[0].dimension
    prod = np.ones((side,) * n)
    for m in mus:
        arr = np.zeros((side,) * n)
        lo = m.points.min(axis=0)
        if int((m.points.max(axis=0) - lo).max()) + 1 > side:
            raise ValueError("grid smaller than support")
        np.add.at(arr, tuple(((m.points - lo) % side).T), m.masses)
        prod = prod * np.abs(np.fft.fftn(arr))
    out = []
    for raw in np.argwhere(prod >= threshold):
        k = tuple(int(c) for c in raw)
        out.append(TorusPoint.of(np.asarray(k, dtype=float) / side))
    return out


def convolution_structure(
    mus: Sequence[SparseMeasure],
    route: str,
    cfg: ExactRouteConfig | NearOriginConfig,
) -> SketchLattice | NearOriginBasis:
    """Structure of a product of dense pieces via symmetrization.

    Builds mu_sym = (1/M) sum mu_i * mu_i-reflected, delegates to the
    single-measure extractor with threshold K/4 and ambient radius
    sqrt(2) R, then certifies the result against the product-heavy set
    {zeta : prod |mu_i_hat(zeta)| >= e^{-M/K}}.
    """
    if not mus:
        raise ValueError("empty measure list")
    M = len(mus)
    sym = symmetrize(mus)
    ambient = math.sqrt(2.0) * cfg.R
    heavy_prod = product_heavy_frequencies(
        mus, math.exp(-M / cfg.K), cfg.grid_exponent
    )
    if route == "exact":
        assert isinstance(cfg, ExactRouteConfig)
        # mu_sym support spread doubles, so the scan grid doubles with it
        sub = ExactRouteConfig(
            K=cfg.K / 4.0,
            Q=cfg.Q,
            q=cfg.q,
            R=ambient,
            kappa=cfg.kappa,
            grid_exponent=cfg.grid_exponent + 1,
            refine=cfg.refine,
        )
        lattice = extract_exact_structure(sym, sub)
        combos = lattice.combination_points()
        worst = max(
            (torus_distance_to_set(h.array, combos) for h in heavy_prod),
            default=0.0,
        )
        return replace(lattice, span_error=max(lattice.span_error, worst))
    if route == "near_origin":
        assert isinstance(cfg, NearOriginConfig)
        sub = NearOriginConfig(
            K=cfg.K / 4.0,
            kappa=cfg.kappa,
            B=cfg.B,
            Q=cfg.Q,
            R=ambient,
            grid_exponent=cfg.grid_exponent + 1,
            refine=cfg.refine,
        )
        basis = extract_near_origin_structure(sym, sub)
        span = basis.span_matrix().T
        for h in heavy_prod:
            if h.norm > cfg.kappa:
                continue
            a = h.array
            if span.size:
                coef, *_ = np.linalg.lstsq(span, a, rcond=None)
                dist = float(np.linalg.norm(a - span @ coef))
            else:
                dist = float(np.linalg.norm(a))
            if dist > basis.radius_bound + 1e-12:
                raise RuntimeError(
                    "product-heavy near-origin frequency escapes the span radius"
                )
        return basis
    raise ValueError(f"unknown route {route!r}")


def lattice_to_text(lattice: SketchLattice) -> str:
    lines = [
        f"m={lattice.rank} n={lattice.dimension} "
        f"span_error={lattice.span_error:.17g}"
    ]
    for t in lattice.generators:
        lines.append(" ".join(str(c) for c in t))
    lines.append("k " + " ".join(str(k) for k in lattice.denominators))
    for rel in lattice.relations:
        lines.append("rel" + ("" if not rel else " " + " ".join(map(str, rel))))
    return "\n".join(lines) + "\n"


def lattice_from_text(text: str) -> SketchLattice:
    rows = [r for r in text.splitlines() if r.strip()]
    head = dict(kv.split("=", 1) for kv in rows[0].split())
    m, n = int(head["m"]), int(head["n"])
    gens = tuple(
        tuple(Fraction(c) for c in rows[1 + j].split()) for j in range(m)
    )
    ks = tuple(int(c) for c in rows[1 + m].split()[1:])
    rels = tuple(
        tuple(int(c) for c in rows[2 + m + j].split()[1:]) for j in range(m)
    )
    return SketchLattice(
        dimension=n,
        generators=gens,
        denominators=ks,
        relations=rels,
        span_error=float(head["span_error"]),
        fiber_bound=math.prod(ks) if ks else 1,
        s_certified=0.0,
    )


def basis_to_text(basis: NearOriginBasis) -> str:
    lines = [
        f"ell={basis.ell} n={basis.dimension} Q={basis.denominator} "
        f"radius_bound={basis.radius_bound:.17g}"
    ]
    for w in basis.numerators:
        lines.append(" ".join(str(c) for c in w))
    return "\n".join(lines) + "\n"


def basis_from_text(text: str) -> NearOriginBasis:
    rows = [r for r in text.splitlines() if r.strip()]
    head = dict(kv.split("=", 1) for kv in rows[0].split())
    ell, n = int(head["ell"]), int(head["n"])
    nums = tuple(tuple(int(c) for c in rows[1 + j].split()) for j in range(ell))
    return NearOriginBasis(
        dimension=n,
        numerators=nums,
        denominator=int(head["Q"]),
        radius_bound=float(head["radius_bound"]),
    )
