"""End-to-end reduction from a turnstile algorithm to a linear sketch.

Pipeline: pick a boundary-state sequence, condition the block laws on
it, extract the frequency structure of their convolution (exact chains
or the near-origin basis), read the sketch off the structure, and build
a fiberwise decoder from simulated landing blocks.  Every extraction
carries the translation-invariance certificates for the shifts that the
sketch cannot see.
"""

import ast
import math
from collections import Counter
from dataclasses import dataclass, fields, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dgauss import TruncationPolicy, sample_truncated
from .measure import (
    SparseMeasure,
    convolve_many_fft,
    density_certificate,
    gamma_truncated,
)
from .spectrum import (
    ExactRouteConfig,
    NearOriginBasis,
    NearOriginConfig,
    SketchLattice,
    convolution_structure,
    lattice_from_text,
    lattice_to_text,
)
from .streaming import (
    ProblemSpec,
    StateSequence,
    TurnstileAlgorithm,
    fold_block,
    posterior_laws,
    resample_convolution,
    select_state_sequence,
)
from .translation import (
    TranslationConfig,
    TranslationReport,
    translation_invariance_certify,
    tv_distance,
)

__all__ = [
    "DecoderConflict",
    "EvaluationResult",
    "ExtractedSketch",
    "ExtractionReport",
    "FiberCensus",
    "FiberConflict",
    "FiberDecoder",
    "SketchExtractionError",
    "SmoothnessCheck",
    "SmoothnessError",
    "TransferConfig",
    "UncoveredFiber",
    "evaluate_sketch",
    "extract_sketch",
    "extraction_from_text",
    "extraction_to_text",
    "fiber_census",
    "sketch_apply",
    "sketch_value_add",
    "verify_smoothness",
]

REPORT_VERSION = 1

EXACT_EVAL_CAP = 10_000

# the proof only forces same-fiber labels to agree when the algorithm
# actually succeeds on the fiber; this is the success level it uses
AGREEMENT_SUCCESS_FLOOR = 0.75


class SketchExtractionError(RuntimeError):
    pass


class SmoothnessError(SketchExtractionError):
    pass


class UncoveredFiber(SketchExtractionError):
    pass


@dataclass(frozen=True)
class TransferConfig:
    """Knobs for one extraction run.

    radius/blocks parameterize the stream model, diameter caps the
    support spread of the target distribution (and the shift-kernel
    enumeration), and the K/Q/q/kappa/B group is forwarded to the
    structure extractor.  Q doubles as the near-origin denominator on
    the mollified route.
    """

    radius: float = 8.0
    blocks: int = 8
    diameter: int = 4
    K: float = 512.0
    Q: int = 2048
    q: int = 3
    kappa: float | None = 0.25
    B: float = 2.0
    grid_exponent: int = 7
    refine: bool = True
    samples: int = 512
    selection_threshold: float | None = None
    selection_landings: int = 64
    decoder_landings: int = 256
    smoothness_trials: int = 2048
    tv_margin: float = 0.05
    label: str = "scenario"

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.blocks < 1:
            raise ValueError("need at least one conditioning block")
        if self.diameter < 1:
            raise ValueError("diameter must be positive")


@dataclass(frozen=True)
class ExtractedSketch:
    """Linear sketch read off the conditioned block structure.

    Exact route: generators t_j with denominators k_j; the sketch value
    of y is the tuple of residues <t_j, y> mod 1, and the image has at
    most prod k_j fibers.  Mollified route: an integer matrix with
    entries bounded by the denominator; the sketch value is the exact
    matrix-vector product.
    """

    route: str
    dimension: int
    sigma: StateSequence
    exact_lattice: SketchLattice | None = None
    integer_matrix: tuple[tuple[int, ...], ...] | None = None
    denominator: int = 0
    provenance: TransferConfig | None = None

    def __post_init__(self) -> None:
        if self.route not in ("exact", "mollified"):
            raise ValueError(f"unknown route {self.route!r}")
        if self.route == "exact":
            if self.exact_lattice is None or self.integer_matrix is not None:
                raise ValueError("exact route carries a lattice and no matrix")
            if self.exact_lattice.dimension != self.dimension:
                raise ValueError("lattice dimension mismatch")
        else:
            if self.integer_matrix is None or self.exact_lattice is not None:
                raise ValueError("mollified route carries a matrix and no lattice")
            if self.denominator < 1:
                raise ValueError("mollified route needs a positive denominator")
            for row in self.integer_matrix:
                if len(row) != self.dimension:
                    raise ValueError("matrix row dimension mismatch")
                if any(abs(c) > self.denominator for c in row):
                    raise ValueError("matrix entries must be bounded by the denominator")

    @property
    def rank(self) -> int:
        if self.route == "exact":
            return self.exact_lattice.rank
        return len(self.integer_matrix)

    @property
    def fiber_bound(self) -> int | None:
        """prod k_j for the exact route; unbounded on the mollified one."""
        if self.route == "exact":
            return self.exact_lattice.fiber_bound
        return None

    @property
    def entry_bound(self) -> int:
        if self.route == "exact":
            return 0
        return max((abs(c) for row in self.integer_matrix for c in row), default=0)


def sketch_apply(
    sketch: ExtractedSketch, y: Sequence[int]
) -> tuple[Fraction, ...] | tuple[int, ...]:
    """Exact sketch value of an integer vector."""
    if len(y) != sketch.dimension:
        raise ValueError("vector dimension mismatch")
    yy = [int(c) for c in y]
    if sketch.route == "exact":
        return tuple(
            sum((c * v for c, v in zip(t, yy)), Fraction(0)) % 1
            for t in sketch.exact_lattice.generators
        )
    return tuple(sum(c * v for c, v in zip(row, yy)) for row in sketch.integer_matrix)


def sketch_value_add(sketch: ExtractedSketch, a: tuple, b: tuple) -> tuple:
    """Group law on sketch values: residues add mod 1, matrix values add."""
    if sketch.route == "exact":
        return tuple((x + z) % 1 for x, z in zip(a, b))
    return tuple(x + z for x, z in zip(a, b))


# -- smoothness ---------------------------------------------------------------


@dataclass(frozen=True)
class SmoothnessCheck:
    """Empirical test that noise barely moves the problem's answers.

    failure_rate carries the truncation deficit of the noise sampler on
    the failure side, so passing is conservative.
    """

    epsilon: float
    delta: float
    trials: int
    failures: int
    deficit: float
    failure_rate: float
    stderr: float
    passed: bool


def _answers_compatible(problem: ProblemSpec, y: tuple, shifted: tuple) -> bool:
    if problem.kind == "metric-approximation":
        return problem.metric(problem.target(shifted), problem.target(y)) <= problem.epsilon
    if problem.kind == "promise":
        a, b = problem.label(y), problem.label(shifted)
        return a == "*" or b == "*" or a == b
    valid_y = [o for o in problem.outputs if problem.relation(y, o)]
    return any(problem.relation(shifted, o) for o in valid_y)


def verify_smoothness(
    problem: ProblemSpec,
    target: SparseMeasure,
    radius: float,
    trials: int,
    seed: int,
    policy: TruncationPolicy | None = None,
) -> SmoothnessCheck:
    """Estimate Pr[answers of Y and Y+Z are compatible] for Z ~ gamma noise."""
    if trials < 1:
        raise ValueError("need at least one trial")
    n = target.dimension
    pol = policy if policy is not None else TruncationPolicy.for_gaussian(n, radius)
    deficit = gamma_truncated(n, radius, pol).deficit
    rng = np.random.default_rng(seed)
    idx = rng.choice(target.masses.size, size=trials, p=target.masses / target.total_mass)
    noise = sample_truncated(radius, pol, int(rng.integers(2**63)), count=trials)
    failures = 0
    for i in range(trials):
        y = tuple(int(c) for c in target.points[idx[i]])
        shifted = tuple(a + int(b) for a, b in zip(y, noise[i]))
        failures += not _answers_compatible(problem, y, shifted)
    rate = failures / trials
    stderr = math.sqrt(max(rate * (1.0 - rate), 1.0 / trials) / trials)
    failure_rate = rate + deficit
    return SmoothnessCheck(
        epsilon=problem.epsilon,
        delta=problem.delta,
        trials=trials,
        failures=failures,
        deficit=deficit,
        failure_rate=failure_rate,
        stderr=stderr,
        passed=failure_rate <= problem.delta + 2.0 * stderr,
    )


# -- decoding -----------------------------------------------------------------


@dataclass(frozen=True)
class FiberConflict:
    """Same fiber, different promised bits; tv is the smallest landing-law
    distance among the disagreeing pairs."""

    value: tuple
    members: tuple[tuple[int, ...], ...]
    labels: tuple
    tv: float


@dataclass(frozen=True, eq=False)
class FiberDecoder:
    """Output table keyed by sketch value.

    Fibers never met during the build decode to `default`; `covers`
    distinguishes the two cases so evaluation can refuse to guess.
    """

    table: dict
    representative: dict
    default: object
    conflicts: tuple[FiberConflict, ...] = ()

    def covers(self, value: tuple) -> bool:
        return value in self.table

    def decode(self, value: tuple) -> object:
        return self.table.get(value, self.default)


class DecoderConflict(SketchExtractionError):
    def __init__(self, conflicts: Sequence[FiberConflict], success: float) -> None:
        worst = min(c.tv for c in conflicts)
        super().__init__(
            f"{len(conflicts)} fiber(s) carry conflicting promised bits at "
            f"landing tv {worst:.4f} despite success {success:.3f}"
        )
        self.conflicts = tuple(conflicts)


def _modal_output(outputs: list, problem: ProblemSpec, y: tuple) -> object:
    valid = [o for o in outputs if problem.valid(y, o)]
    pool = valid if valid else outputs
    counts = Counter(pool)
    return min(counts, key=lambda o: (-counts[o], repr(o)))


def _landing_law(
    laws: Sequence[SparseMeasure], route: str, dimension: int, radius: float
) -> SparseMeasure:
    factors = list(laws)
    if route == "mollified":
        factors.append(gamma_truncated(dimension, radius))
    return convolve_many_fft(factors)


def _build_decoder(
    alg: TurnstileAlgorithm,
    sketch: ExtractedSketch,
    target: SparseMeasure,
    problem: ProblemSpec,
    laws: Sequence[SparseMeasure],
    radius: float,
    policy: TruncationPolicy,
    landings: int,
    seed: int,
    landing_law: SparseMeasure,
) -> FiberDecoder:
    fibers: dict[tuple, list[tuple[int, ...]]] = {}
    for y in sorted(target.atoms):
        fibers.setdefault(sketch_apply(sketch, y), []).append(y)
    close_index = sketch.sigma.block_count
    last_state = sketch.sigma.states[-1]
    table: dict = {}
    representative: dict = {}
    conflicts: list[FiberConflict] = []
    for fiber_index, (value, members) in enumerate(fibers.items()):
        y_rep = members[0]
        rng = np.random.default_rng((seed, fiber_index))
        draws = resample_convolution(sketch.dimension, laws, landings, rng)
        deltas = np.asarray(y_rep, dtype=np.int64) - draws
        if sketch.route == "mollified":
            deltas = deltas + sample_truncated(
                radius, policy, int(rng.integers(2**63)), count=landings
            )
        outputs = [
            alg.output(fold_block(alg, close_index, last_state, tuple(int(c) for c in d)))
            for d in deltas
        ]
        table[value] = _modal_output(outputs, problem, y_rep)
        representative[value] = y_rep
        if problem.kind == "promise":
            labeled = [(y, problem.label(y)) for y in members]
            bits = {lab for _, lab in labeled if lab != "*"}
            if len(bits) > 1:
                worst = min(
                    tv_distance(landing_law, tuple(a - b for a, b in zip(y1, y2)))
                    for i, (y1, l1) in enumerate(labeled)
                    for y2, l2 in labeled[i + 1 :]
                    if "*" not in (l1, l2) and l1 != l2
                )
                conflicts.append(
                    FiberConflict(
                        value=value,
                        members=tuple(members),
                        labels=tuple(lab for _, lab in labeled),
                        tv=worst,
                    )
                )
    default = problem.outputs[0] if problem.outputs else None
    return FiberDecoder(
        table=table,
        representative=representative,
        default=default,
        conflicts=tuple(conflicts),
    )


# -- extraction ---------------------------------------------------------------


@dataclass(frozen=True)
class ExtractionReport:
    label: str
    route: str
    radius: float
    blocks: int
    dimension: int
    sigma: StateSequence
    rank: int
    fiber_bound: int | None
    entry_bound: int | None
    fibers_met: int
    laws: tuple[SparseMeasure, ...]
    smoothness: SmoothnessCheck | None
    translation: TranslationReport
    conflicts: tuple[FiberConflict, ...]
    warnings: tuple[str, ...]


def _support_diameter(target: SparseMeasure) -> float:
    pts = target.points
    if len(pts) < 2:
        return 0.0
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).max())


def extract_sketch(
    alg: TurnstileAlgorithm,
    target: SparseMeasure,
    problem: ProblemSpec,
    route: str,
    cfg: TransferConfig,
    seed: int,
) -> tuple[ExtractedSketch, FiberDecoder, ExtractionReport]:
    """Run the full reduction for one algorithm on one input distribution.

    Selection failures, certified-bound violations, failed smoothness
    checks, and in-theorem decoder conflicts all raise; the conflict
    gate only fires when the landing laws overlap (tv below 1/2 minus
    the margin) and the selected sequence actually succeeds, which is
    the regime where the reduction forces the labels to agree.
    """
    if route not in ("exact", "mollified"):
        raise ValueError(f"unknown route {route!r}")
    if target.dimension != alg.dimension:
        raise ValueError("target dimension mismatch")
    diameter = _support_diameter(target)
    if diameter > cfg.diameter:
        raise ValueError(
            f"target support diameter {diameter:.3f} exceeds the declared {cfg.diameter}"
        )
    n = alg.dimension
    policy = TruncationPolicy.for_gaussian(n, cfg.radius)
    smoothness = None
    if route == "mollified":
        smoothness = verify_smoothness(
            problem, target, cfg.radius, cfg.smoothness_trials, seed, policy
        )
        if not smoothness.passed:
            raise SmoothnessError(
                f"problem is not ({smoothness.epsilon}, {smoothness.delta})-smooth: "
                f"failure rate {smoothness.failure_rate:.4f} over "
                f"{smoothness.trials} trials"
            )
    sigma = select_state_sequence(
        alg,
        target,
        problem,
        cfg.radius,
        cfg.blocks,
        cfg.samples,
        seed,
        threshold=cfg.selection_threshold,
        landings=cfg.selection_landings,
        policy=policy,
    )
    laws = tuple(posterior_laws(alg, sigma, cfg.radius, cfg.blocks, policy))
    s_cert = max(density_certificate(law, cfg.radius).S for law in laws)
    kappa = cfg.kappa if cfg.kappa is not None else 3.0 * math.sqrt(s_cert) / cfg.radius
    if route == "exact":
        structure = convolution_structure(
            laws,
            "exact",
            ExactRouteConfig(
                K=cfg.K,
                Q=cfg.Q,
                q=cfg.q,
                R=cfg.radius,
                kappa=cfg.kappa,
                grid_exponent=cfg.grid_exponent,
                refine=cfg.refine,
            ),
        )
        sketch = ExtractedSketch(
            route=route,
            dimension=n,
            sigma=sigma,
            exact_lattice=structure,
            provenance=cfg,
        )
        warnings = structure.warnings
    else:
        structure = convolution_structure(
            laws,
            "near_origin",
            NearOriginConfig(
                K=cfg.K,
                kappa=kappa,
                B=cfg.B,
                Q=cfg.Q,
                R=cfg.radius,
                grid_exponent=cfg.grid_exponent,
                refine=cfg.refine,
            ),
        )
        sketch = ExtractedSketch(
            route=route,
            dimension=n,
            sigma=sigma,
            integer_matrix=structure.numerators,
            denominator=structure.denominator,
            provenance=cfg,
        )
        warnings = structure.warnings
    certify_cfg = TranslationConfig(
        D=max(1, math.ceil(diameter)),
        K=cfg.K,
        Q=cfg.Q,
        q=cfg.q,
        R=cfg.radius,
        kappa=cfg.kappa,
        B=cfg.B,
        grid_exponent=cfg.grid_exponent,
        refine=cfg.refine,
        max_kernel=64,
    )
    translation = translation_invariance_certify(
        laws, route, certify_cfg, scenario=cfg.label
    )
    landing_law = _landing_law(laws, route, n, cfg.radius)
    decoder = _build_decoder(
        alg,
        sketch,
        target,
        problem,
        laws,
        cfg.radius,
        policy,
        cfg.decoder_landings,
        seed,
        landing_law,
    )
    hard = [
        c
        for c in decoder.conflicts
        if c.tv < 0.5 - cfg.tv_margin
        and sigma.success_estimate >= AGREEMENT_SUCCESS_FLOOR
    ]
    if hard:
        raise DecoderConflict(hard, sigma.success_estimate)
    report = ExtractionReport(
        label=cfg.label,
        route=route,
        radius=cfg.radius,
        blocks=cfg.blocks,
        dimension=n,
        sigma=sigma,
        rank=sketch.rank,
        fiber_bound=sketch.fiber_bound,
        entry_bound=None if route == "exact" else sketch.entry_bound,
        fibers_met=len(decoder.table),
        laws=laws,
        smoothness=smoothness,
        translation=translation,
        conflicts=decoder.conflicts,
        warnings=tuple(dict.fromkeys(tuple(warnings) + translation.warnings)),
    )
    return sketch, decoder, report


# -- evaluation ---------------------------------------------------------------


@dataclass(frozen=True)
class EvaluationResult:
    success: float
    low: float
    high: float
    method: str
    trials: int
    tolerance: float | None


def _make_checker(sketch: ExtractedSketch, problem: ProblemSpec):
    if problem.kind == "metric-approximation":
        # the reduction degrades the tolerance: 3x exact, 6x mollified
        factor = 3.0 if sketch.route == "exact" else 6.0
        tol = factor * problem.epsilon
        return tol, lambda y, o: problem.metric(o, problem.target(y)) <= tol
    return None, problem.valid


def _decode_point(
    sketch: ExtractedSketch, decoder: FiberDecoder, y: tuple[int, ...]
) -> object:
    value = sketch_apply(sketch, y)
    if not decoder.covers(value):
        raise UncoveredFiber(f"input {y} lands in fiber {value} with no decoder entry")
    return decoder.decode(value)


def evaluate_sketch(
    sketch: ExtractedSketch,
    decoder: FiberDecoder,
    target: SparseMeasure,
    problem: ProblemSpec,
    trials: int = 4096,
    seed: int = 0,
) -> EvaluationResult:
    """Success probability of decode(sketch(Y)) against the problem.

    Exact expectation over the support when it is small enough,
    Monte Carlo otherwise; metric problems are scored at the degraded
    tolerance of the route.
    """
    tol, check = _make_checker(sketch, problem)
    if target.support_size <= EXACT_EVAL_CAP:
        good = math.fsum(
            mass / target.total_mass
            for y, mass in sorted(target.atoms.items())
            if check(y, _decode_point(sketch, decoder, y))
        )
        return EvaluationResult(
            success=good,
            low=good,
            high=good,
            method="exact",
            trials=0,
            tolerance=tol,
        )
    rng = np.random.default_rng(seed)
    idx = rng.choice(target.masses.size, size=trials, p=target.masses / target.total_mass)
    hits = 0
    for i in idx:
        y = tuple(int(c) for c in target.points[i])
        hits += bool(check(y, _decode_point(sketch, decoder, y)))
    rate = hits / trials
    half = 1.96 * math.sqrt(max(rate * (1.0 - rate), 1.0 / trials) / trials)
    return EvaluationResult(
        success=rate,
        low=max(0.0, rate - half),
        high=min(1.0, rate + half),
        method="monte-carlo",
        trials=trials,
        tolerance=tol,
    )


@dataclass(frozen=True, eq=False)
class FiberCensus:
    members: dict
    count: int
    bound: int | None

    @property
    def within_bound(self) -> bool:
        return self.bound is None or self.count <= self.bound


def fiber_census(sketch: ExtractedSketch, domain: Sequence[Sequence[int]]) -> FiberCensus:
    """Group a finite domain by sketch value."""
    members: dict = {}
    for y in domain:
        yy = tuple(int(c) for c in y)
        members.setdefault(sketch_apply(sketch, yy), []).append(yy)
    members = {v: tuple(ys) for v, ys in members.items()}
    return FiberCensus(members=members, count=len(members), bound=sketch.fiber_bound)


# -- serialization ------------------------------------------------------------


def _value_str(value: tuple) -> str:
    if not value:
        return "-"
    return ",".join(str(c) for c in value)


def _value_parse(text: str, route: str) -> tuple:
    if text == "-":
        return ()
    parts = text.split(",")
    if route == "exact":
        return tuple(Fraction(p) for p in parts)
    return tuple(int(p) for p in parts)


def extraction_to_text(
    sketch: ExtractedSketch, decoder: FiberDecoder, report: ExtractionReport
) -> str:
    """One-file report: sketch, decoder, and certificates, versioned."""
    lines = [f"sketch-report v{REPORT_VERSION}"]
    lines.append(f"label {report.label}")
    lines.append(f"route {sketch.route}")
    lines.append(f"n {sketch.dimension}")
    if sketch.provenance is not None:
        for f in fields(TransferConfig):
            lines.append(f"cfg {f.name} {getattr(sketch.provenance, f.name)!r}")
    sig = sketch.sigma
    lines.append("sigma " + " ".join(str(s) for s in sig.states))
    lines.append(f"sigma_probability {sig.probability:.17g}")
    lines.append(
        "sigma_densities " + " ".join(f"{b:.17g}" for b in sig.per_block_densities)
    )
    lines.append(f"sigma_success {sig.success_estimate:.17g}")
    if sketch.route == "exact":
        lines.append("begin lattice")
        lines.append(lattice_to_text(sketch.exact_lattice).rstrip("\n"))
        lines.append("end lattice")
        lines.append(f"lattice_s_certified {sketch.exact_lattice.s_certified:.17g}")
    else:
        lines.append(f"matrix_denominator {sketch.denominator}")
        for row in sketch.integer_matrix:
            lines.append("matrix_row " + " ".join(str(c) for c in row))
    lines.append(f"default {decoder.default!r}")
    for value in decoder.table:
        rep = decoder.representative[value]
        lines.append(
            f"fiber {_value_str(value)} rep "
            + " ".join(str(c) for c in rep)
            + f" out {decoder.table[value]!r}"
        )
    lines.append(f"# rank {report.rank}")
    lines.append(f"# fiber_bound {report.fiber_bound}")
    lines.append(f"# entry_bound {report.entry_bound}")
    lines.append(f"# fibers_met {report.fibers_met}")
    if report.smoothness is not None:
        sm = report.smoothness
        lines.append(
            f"# smoothness eps={sm.epsilon:.6g} delta={sm.delta:.6g} "
            f"failure_rate={sm.failure_rate:.6g} passed={sm.passed}"
        )
    for rec in report.translation.records:
        lines.append(
            f"# shift {rec.kind} v={','.join(str(c) for c in rec.vector)} "
            f"tv={rec.tv:.9g} bound={rec.bound:.9g} passed={rec.passed}"
        )
    for c in report.conflicts:
        lines.append(
            f"# conflict fiber={_value_str(c.value)} labels={c.labels!r} tv={c.tv:.6g}"
        )
    for w in report.warnings:
        lines.append(f"# warning {w}")
    return "\n".join(lines) + "\n"


def extraction_from_text(text: str) -> tuple[ExtractedSketch, FiberDecoder]:
    """Rebuild the functional core (sketch and decoder) from a report."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("sketch-report v"):
        raise ValueError("missing report header")
    if int(lines[0].split("v")[-1]) != REPORT_VERSION:
        raise ValueError("unsupported report version")
    route = ""
    n = 0
    cfg_kwargs: dict = {}
    sigma_states: tuple[int, ...] = ()
    sigma_prob = 0.0
    sigma_dens: tuple[float, ...] = ()
    sigma_succ = 0.0
    lattice: SketchLattice | None = None
    lattice_s = 0.0
    matrix: list[tuple[int, ...]] = []
    denom = 0
    default: object = None
    table: dict = {}
    representative: dict = {}
    it = iter(lines[1:])
    for line in it:
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "label":
            cfg_kwargs.setdefault("label", rest)
        elif key == "route":
            route = rest
        elif key == "n":
            n = int(rest)
        elif key == "cfg":
            name, _, value = rest.partition(" ")
            cfg_kwargs[name] = ast.literal_eval(value)
        elif key == "sigma":
            sigma_states = tuple(int(s) for s in rest.split())
        elif key == "sigma_probability":
            sigma_prob = float(rest)
        elif key == "sigma_densities":
            sigma_dens = tuple(float(b) for b in rest.split())
        elif key == "sigma_success":
            sigma_succ = float(rest)
        elif key == "begin":
            block = []
            for sub in it:
                if sub == "end lattice":
                    break
                block.append(sub)
            lattice = lattice_from_text("\n".join(block) + "\n")
        elif key == "lattice_s_certified":
            lattice_s = float(rest)
        elif key == "matrix_denominator":
            denom = int(rest)
        elif key == "matrix_row":
            matrix.append(tuple(int(c) for c in rest.split()))
        elif key == "default":
            default = ast.literal_eval(rest)
        elif key == "fiber":
            head, _, out_repr = rest.partition(" out ")
            value_text, _, rep_text = head.partition(" rep ")
            value = _value_parse(value_text, route)
            representative[value] = tuple(int(c) for c in rep_text.split())
            table[value] = ast.literal_eval(out_repr)
    sigma = StateSequence(sigma_states, sigma_prob, sigma_dens, sigma_succ)
    cfg = TransferConfig(**cfg_kwargs) if len(cfg_kwargs) > 1 else None
    if route == "exact":
        if lattice is None:
            raise ValueError("exact report carries no lattice block")
        lattice = replace(lattice, s_certified=lattice_s)
        sketch = ExtractedSketch(
            route=route,
            dimension=n,
            sigma=sigma,
            exact_lattice=lattice,
            provenance=cfg,
        )
    else:
        sketch = ExtractedSketch(
            route=route,
            dimension=n,
            sigma=sigma,
            integer_matrix=tuple(matrix),
            denominator=denom,
            provenance=cfg,
        )
    return sketch, FiberDecoder(
        table=table, representative=representative, default=default
    )
