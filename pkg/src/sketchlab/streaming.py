"""Unit-update turnstile streams and finite-state simulation.

Streams kept as blocks of signed unit updates, canonical realizations of
integer deltas, deterministic algorithms with optional per-block rule
changes, sampled stream models around a target distribution, posterior
block laws after conditioning on a boundary-state sequence, and the
empirical selection of a high-success sequence.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .dgauss import TruncationPolicy, sample_truncated
from .measure import SparseMeasure, density_certificate, gamma_truncated

__all__ = [
    "Update",
    "Stream",
    "StreamSample",
    "TurnstileAlgorithm",
    "StateSequence",
    "ProblemSpec",
    "ImpossibleSequence",
    "SelectionFailed",
    "canonical_realization",
    "run",
    "fold_block",
    "exact_stream_sample",
    "mollified_stream_sample",
    "posterior_laws",
    "conditioned_sequence",
    "select_state_sequence",
    "resample_convolution",
    "strict_padding",
    "minimal_strict_pad",
    "stream_to_text",
    "stream_from_text",
    "constant_algorithm",
    "parity_algorithm",
    "mod_counter_algorithm",
    "identity_box_algorithm",
    "alternating_algorithm",
    "zoo_algorithm",
    "ZOO",
]


@dataclass(frozen=True)
class Update:
    """One signed unit update: 0-based coordinate index and sign."""

    coordinate: int
    sign: int

    def __post_init__(self) -> None:
        if self.coordinate < 0:
            raise ValueError("coordinate must be nonnegative")
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")


def canonical_realization(v: Sequence[int]) -> tuple[Update, ...]:
    """The fixed unit-update block realizing net delta v.

    Coordinates are visited in ascending order; coordinate i contributes
    |v_i| updates of sign sgn(v_i).  The block length is ||v||_1.
    """
    out: list[Update] = []
    for i, c in enumerate(int(x) for x in v):
        s = 1 if c > 0 else -1
        out.extend(Update(i, s) for _ in range(abs(c)))
    return tuple(out)


@dataclass(frozen=True)
class Stream:
    """A unit-update turnstile stream, kept with its block structure.

    Blocks matter only to algorithms whose rules change between blocks;
    the frequency vector ignores the grouping.
    """

    dimension: int
    blocks: tuple[tuple[Update, ...], ...]

    def __post_init__(self) -> None:
        for block in self.blocks:
            for u in block:
                if u.coordinate >= self.dimension:
                    raise ValueError("update coordinate outside the dimension")

    @classmethod
    def from_deltas(
        cls, dimension: int, deltas: Sequence[Sequence[int]]
    ) -> "Stream":
        return cls(dimension, tuple(canonical_realization(d) for d in deltas))

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    @property
    def update_count(self) -> int:
        return sum(len(b) for b in self.blocks)

    def updates(self) -> Iterator[Update]:
        for block in self.blocks:
            yield from block

    def final_vector(self) -> np.ndarray:
        out = np.zeros(self.dimension, dtype=np.int64)
        for u in self.updates():
            out[u.coordinate] += u.sign
        return out

    def prefix_minimum(self) -> np.ndarray:
        """Per-coordinate minimum over every prefix frequency vector."""
        acc = np.zeros(self.dimension, dtype=np.int64)
        low = np.zeros(self.dimension, dtype=np.int64)
        for u in self.updates():
            acc[u.coordinate] += u.sign
            if acc[u.coordinate] < low[u.coordinate]:
                low[u.coordinate] = acc[u.coordinate]
        return low


# -- algorithms ----------------------------------------------------------------


@dataclass(frozen=True)
class TurnstileAlgorithm:
    """Deterministic unit-update algorithm on at most 2^state_bits states.

    The transition receives the block index first; uniform algorithms
    ignore it.  Non-uniform rule tables cover block indices below
    `horizon`, and running past that is an error.
    """

    name: str
    dimension: int
    state_bits: int
    initial_state: int
    transition: Callable[[int, int, Update], int]
    output: Callable[[int], object]
    uniform: bool = True
    horizon: int | None = None

    def __post_init__(self) -> None:
        if self.state_bits < 0:
            raise ValueError("state bits must be nonnegative")
        if not 0 <= self.initial_state < self.state_count:
            raise ValueError("initial state outside the declared state space")
        if not self.uniform and self.horizon is None:
            raise ValueError("non-uniform algorithms must declare a block horizon")

    @property
    def state_count(self) -> int:
        return 1 << self.state_bits

    def step(self, block_index: int, state: int, update: Update) -> int:
        nxt = int(self.transition(block_index, state, update))
        if not 0 <= nxt < self.state_count:
            raise RuntimeError(
                f"transition left the declared {self.state_bits}-bit state "
                f"space: {nxt}"
            )
        return nxt


def fold_block(
    alg: TurnstileAlgorithm,
    block_index: int,
    state: int,
    delta: Sequence[int],
) -> int:
    """State after processing the canonical block of `delta`."""
    s = int(state)
    for u in canonical_realization(delta):
        s = alg.step(block_index, s, u)
    return s


def run(
    alg: TurnstileAlgorithm, stream: Stream | Sequence[Update]
) -> tuple[int, object]:
    """Fold a stream through the algorithm and answer the final query.

    A bare update sequence counts as a single block.  Non-uniform
    algorithms refuse streams with more blocks than their rule horizon.
    """
    blocks = stream.blocks if isinstance(stream, Stream) else (tuple(stream),)
    if not alg.uniform and len(blocks) > alg.horizon:
        raise ValueError(
            f"stream has {len(blocks)} blocks but the non-uniform rule "
            f"table covers {alg.horizon}"
        )
    state = alg.initial_state
    for j, block in enumerate(blocks):
        for u in block:
            state = alg.step(j, state, u)
    return state, alg.output(state)


# -- problems ------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemSpec:
    """What the final answer must satisfy, in one of three shapes.

    metric-approximation: metric(output, target(y)) <= epsilon;
    promise: output equals target(y) unless the label is "*";
    relation: relation(y, output) holds, with `outputs` the candidates.
    """

    kind: str
    target: Callable[[tuple[int, ...]], object] | None = None
    metric: Callable[[object, object], float] | None = None
    relation: Callable[[tuple[int, ...], object], bool] | None = None
    outputs: tuple = ()
    epsilon: float = 0.0
    delta: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("metric-approximation", "promise", "relation"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.kind == "metric-approximation" and (
            self.target is None or self.metric is None
        ):
            raise ValueError("metric problems need a target map and a metric")
        if self.kind == "promise" and self.target is None:
            raise ValueError("promise problems need a label map")
        if self.kind == "relation" and self.relation is None:
            raise ValueError("relation problems need a requirement relation")

    @classmethod
    def promise(
        cls, target: Callable[[tuple[int, ...]], object], delta: float = 0.0
    ) -> "ProblemSpec":
        return cls(kind="promise", target=target, outputs=(0, 1), delta=delta)

    @classmethod
    def metric_approximation(
        cls,
        target: Callable[[tuple[int, ...]], object],
        metric: Callable[[object, object], float],
        outputs: tuple,
        epsilon: float,
        delta: float = 0.0,
    ) -> "ProblemSpec":
        return cls(
            kind="metric-approximation",
            target=target,
            metric=metric,
            outputs=outputs,
            epsilon=epsilon,
            delta=delta,
        )

    @classmethod
    def relation_problem(
        cls,
        relation: Callable[[tuple[int, ...], object], bool],
        outputs: tuple,
        delta: float = 0.0,
    ) -> "ProblemSpec":
        return cls(kind="relation", relation=relation, outputs=outputs, delta=delta)

    def label(self, y: tuple[int, ...]) -> object:
        lab = self.target(y)
        if lab not in (0, 1, "*"):
            raise ValueError("promise labels must be 0, 1, or *")
        return lab

    def valid(self, y: tuple[int, ...], output: object) -> bool:
        if self.kind == "metric-approximation":
            return self.metric(output, self.target(y)) <= self.epsilon
        if self.kind == "promise":
            lab = self.label(y)
            return lab == "*" or output == lab
        return bool(self.relation(y, output))

    def ensure_satisfiable(self, y: tuple[int, ...]) -> None:
        """Relation problems must admit a valid output on each input."""
        if self.kind == "relation" and not any(
            self.relation(y, o) for o in self.outputs
        ):
            raise ValueError(f"no valid output exists for input {y}")


# -- sampled stream models -------------------------------------------------------


@dataclass(frozen=True)
class StreamSample:
    """One draw from a stream model: the stream plus what produced it."""

    stream: Stream
    target: tuple[int, ...]
    deltas: tuple[tuple[int, ...], ...]
    noise: tuple[int, ...] | None = None


def _subseeds(seed: int, count: int) -> list[int]:
    rng = np.random.default_rng(seed)
    return [int(s) for s in rng.integers(0, 2**63, size=count)]


def _draw_target(mu: SparseMeasure, seed: int) -> tuple[int, ...]:
    if mu.deficit > 1e-9:
        raise ValueError("target distribution must carry no deficit")
    rng = np.random.default_rng(seed)
    idx = rng.choice(mu.masses.size, p=mu.masses / mu.total_mass)
    return tuple(int(c) for c in mu.points[idx])


def _resolve_policy(
    dimension: int, radius: float, policy: TruncationPolicy | None
) -> TruncationPolicy:
    pol = policy or TruncationPolicy.for_gaussian(dimension, radius)
    if pol.dimension != dimension:
        raise ValueError("policy dimension mismatch")
    return pol


def exact_stream_sample(
    target: SparseMeasure,
    radius: float,
    blocks: int,
    policy: TruncationPolicy | None = None,
    seed: int = 0,
) -> StreamSample:
    """Truncated-Gaussian prefix blocks closed by a block hitting the target.

    The last block realizes Y minus the prefix sum, so the replayed
    frequency vector equals Y exactly, for every seed.
    """
    n = target.dimension
    pol = _resolve_policy(n, radius, policy)
    sx, sy, _ = _subseeds(seed, 3)
    if blocks:
        xs = sample_truncated(radius, pol, sx, count=blocks)
    else:
        xs = np.zeros((0, n), dtype=np.int64)
    y = _draw_target(target, sy)
    closing = np.asarray(y, dtype=np.int64) - xs.sum(axis=0)
    deltas = [tuple(int(c) for c in row) for row in xs]
    deltas.append(tuple(int(c) for c in closing))
    return StreamSample(Stream.from_deltas(n, deltas), y, tuple(deltas))


def mollified_stream_sample(
    target: SparseMeasure,
    radius: float,
    blocks: int,
    policy: TruncationPolicy | None = None,
    seed: int = 0,
) -> StreamSample:
    """As the exact model, but the stream lands on Y plus Gaussian noise.

    The noise draw uses a seed stream disjoint from the prefix and target
    draws, so a seed whose noise is zero reproduces the exact model's
    stream bit for bit.
    """
    n = target.dimension
    pol = _resolve_policy(n, radius, policy)
    sx, sy, sz = _subseeds(seed, 3)
    if blocks:
        xs = sample_truncated(radius, pol, sx, count=blocks)
    else:
        xs = np.zeros((0, n), dtype=np.int64)
    y = _draw_target(target, sy)
    z = tuple(int(c) for c in sample_truncated(radius, pol, sz))
    closing = np.asarray(y, dtype=np.int64) + np.asarray(z) - xs.sum(axis=0)
    deltas = [tuple(int(c) for c in row) for row in xs]
    deltas.append(tuple(int(c) for c in closing))
    return StreamSample(Stream.from_deltas(n, deltas), y, tuple(deltas), z)


# -- conditioning on boundary states ---------------------------------------------


class ImpossibleSequence(ValueError):
    """A conditioning state pair admits no block delta at all."""


class SelectionFailed(RuntimeError):
    """No observed state sequence clears the probability threshold.

    Carries the observed census so the caller can lower the threshold
    and retry.
    """

    def __init__(
        self,
        threshold: float,
        samples: int,
        census: tuple[tuple[tuple[int, ...], int], ...],
    ) -> None:
        self.threshold = threshold
        self.samples = samples
        self.census = census
        best = max((c for _, c in census), default=0)
        super().__init__(
            f"no state sequence reaches probability {threshold:.6g}: best "
            f"empirical share {best}/{samples} over {len(census)} sequences"
        )


@dataclass(frozen=True)
class StateSequence:
    """States at block boundaries, with the law that produced them.

    `probability` is the chance of traversing exactly these states and
    must factor into the per-block conditional masses.
    """

    states: tuple[int, ...]
    probability: float
    per_block_densities: tuple[float, ...]
    success_estimate: float

    def __post_init__(self) -> None:
        if len(self.states) != len(self.per_block_densities) + 1:
            raise ValueError("need exactly one state per block boundary")
        prod = math.prod(self.per_block_densities)
        if abs(self.probability - prod) > 1e-10:
            raise ValueError("probability must factor into the block densities")

    @property
    def block_count(self) -> int:
        return len(self.per_block_densities)


class _FoldTable:
    """Memoized partition of the block-delta support by next state.

    Canonical blocks are built once per support point; uniform
    algorithms share partitions across block indices.
    """

    def __init__(self, alg: TurnstileAlgorithm, support: SparseMeasure) -> None:
        self.alg = alg
        self.support = support
        self.blocks = [canonical_realization(p) for p in support.points]
        self.cache: dict[tuple[int | None, int], np.ndarray] = {}

    def next_states(self, block_index: int, state: int) -> np.ndarray:
        key = (None if self.alg.uniform else block_index, state)
        hit = self.cache.get(key)
        if hit is None:
            alg = self.alg
            hit = np.empty(len(self.blocks), dtype=np.int64)
            for k, block in enumerate(self.blocks):
                s = state
                for u in block:
                    s = alg.step(block_index, s, u)
                hit[k] = s
            self.cache[key] = hit
        return hit


def _conditional_blocks(
    table: _FoldTable, states: Sequence[int], radius: float
) -> tuple[list[SparseMeasure], list[float]]:
    """Per-block restricted laws and their masses along a state path."""
    support = table.support
    laws: list[SparseMeasure] = []
    densities: list[float] = []
    for i in range(1, len(states)):
        nxt = table.next_states(i - 1, states[i - 1])
        mask = nxt == states[i]
        if not mask.any():
            raise ImpossibleSequence(
                f"no block delta moves state {states[i - 1]} to "
                f"{states[i]} in block {i - 1}"
            )
        beta = math.fsum(support.masses[mask])
        law = SparseMeasure(
            support.dimension,
            zip(
                support.points[mask].tolist(),
                (support.masses[mask] / beta).tolist(),
            ),
        )
        cert = density_certificate(law, radius)
        if cert.alpha < beta * (1.0 - 1e-6):
            raise RuntimeError(
                "posterior density certificate fell below its block mass"
            )
        laws.append(law)
        densities.append(beta)
    return laws, densities


def _check_states(
    alg: TurnstileAlgorithm,
    sigma: StateSequence | Sequence[int],
    blocks: int,
) -> tuple[int, ...]:
    raw = sigma.states if isinstance(sigma, StateSequence) else sigma
    states = tuple(int(s) for s in raw)
    if len(states) != blocks + 1:
        raise ValueError(f"need {blocks + 1} boundary states, got {len(states)}")
    if states[0] != alg.initial_state:
        raise ValueError("sequence must start at the initial state")
    if not alg.uniform and alg.horizon < blocks + 1:
        raise ValueError(
            f"non-uniform rule horizon {alg.horizon} cannot cover "
            f"{blocks + 1} blocks"
        )
    return states


def posterior_laws(
    alg: TurnstileAlgorithm,
    sigma: StateSequence | Sequence[int],
    radius: float,
    blocks: int,
    policy: TruncationPolicy | None = None,
) -> list[SparseMeasure]:
    """Conditional prefix-block laws given the boundary states.

    Block i is the truncated Gaussian restricted to the deltas whose
    canonical block moves state i to state i+1, renormalized.  The
    removed masses multiply to the probability of the sequence; a pair
    of states joined by no delta at all is an impossible sequence.
    """
    states = _check_states(alg, sigma, blocks)
    pol = _resolve_policy(alg.dimension, radius, policy)
    table = _FoldTable(alg, gamma_truncated(alg.dimension, radius, pol))
    laws, _ = _conditional_blocks(table, states, radius)
    return laws


def conditioned_sequence(
    alg: TurnstileAlgorithm,
    states: Sequence[int],
    radius: float,
    blocks: int,
    policy: TruncationPolicy | None = None,
) -> StateSequence:
    """Boundary states upgraded with their exact traversal probability."""
    path = _check_states(alg, states, blocks)
    pol = _resolve_policy(alg.dimension, radius, policy)
    table = _FoldTable(alg, gamma_truncated(alg.dimension, radius, pol))
    _, densities = _conditional_blocks(table, path, radius)
    return StateSequence(
        states=path,
        probability=math.prod(densities),
        per_block_densities=tuple(densities),
        success_estimate=float("nan"),
    )


def resample_convolution(
    dimension: int,
    laws: Sequence[SparseMeasure],
    count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Rows of X_1 + ... + X_k with independent X_i from the given laws."""
    out = np.zeros((count, dimension), dtype=np.int64)
    for law in laws:
        p = law.masses / law.masses.sum()
        idx = rng.choice(law.masses.size, size=count, p=p)
        out += law.points[idx]
    return out


def _success_estimate(
    alg: TurnstileAlgorithm,
    problem: ProblemSpec,
    target: SparseMeasure,
    laws: Sequence[SparseMeasure],
    states: tuple[int, ...],
    landings: int,
    rng: np.random.Generator,
) -> float:
    """Mass-weighted validity of the closing answer over resampled landings."""
    closing_index = len(states) - 1
    weight = target.total_mass
    total = 0.0
    for y, m in sorted(target.atoms.items()):
        draws = resample_convolution(alg.dimension, laws, landings, rng)
        deltas = np.asarray(y, dtype=np.int64) - draws
        ok = 0
        for row in deltas:
            state = fold_block(alg, closing_index, states[-1], row)
            ok += problem.valid(y, alg.output(state))
        total += (m / weight) * (ok / landings)
    return total


def select_state_sequence(
    alg: TurnstileAlgorithm,
    target: SparseMeasure,
    problem: ProblemSpec,
    radius: float,
    blocks: int,
    samples: int,
    seed: int,
    threshold: float | None = None,
    landings: int = 64,
    policy: TruncationPolicy | None = None,
) -> StateSequence:
    """Pick the observed boundary-state sequence with the best success.

    Streams are sampled and grouped by their states at block boundaries.
    Sequences whose empirical share falls below `threshold` are dropped;
    the default is half of 2^-blocks, the share each sequence would keep
    if every block branched two ways, so algorithms that branch more
    densely need a lower threshold.  Survivors get their success
    estimated from `landings` resampled closing blocks per target point,
    reseeded per candidate from its own states so the aggregation is
    order independent.  The best estimate wins; exact ties go to the
    lexicographically smallest states.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    if not alg.uniform and alg.horizon < blocks + 1:
        raise ValueError(
            f"non-uniform rule horizon {alg.horizon} cannot cover "
            f"{blocks + 1} blocks"
        )
    pol = _resolve_policy(alg.dimension, radius, policy)
    for y in target.atoms:
        problem.ensure_satisfiable(y)
    seed_rng = np.random.default_rng(seed)
    stream_seeds = seed_rng.integers(0, 2**63, size=samples)
    census: Counter[tuple[int, ...]] = Counter()
    for s in stream_seeds:
        smp = exact_stream_sample(target, radius, blocks, pol, int(s))
        state = alg.initial_state
        path = [state]
        for j, block in enumerate(smp.stream.blocks[:blocks]):
            for u in block:
                state = alg.step(j, state, u)
            path.append(state)
        census[tuple(path)] += 1
    cut = 0.5 * 0.5**blocks if threshold is None else threshold
    survivors = sorted(
        st for st, c in census.items() if c / samples >= cut
    )
    if not survivors:
        ranked = sorted(census.items(), key=lambda kv: (-kv[1], kv[0]))
        raise SelectionFailed(cut, samples, tuple(ranked))
    table = _FoldTable(alg, gamma_truncated(alg.dimension, radius, pol))
    best: StateSequence | None = None
    for states in survivors:
        laws, densities = _conditional_blocks(table, states, radius)
        q = _success_estimate(
            alg,
            problem,
            target,
            laws,
            states,
            landings,
            np.random.default_rng((seed, *states)),
        )
        candidate = StateSequence(
            states=states,
            probability=math.prod(densities),
            per_block_densities=tuple(densities),
            success_estimate=q,
        )
        if best is None or q > best.success_estimate:
            best = candidate
    return best


# -- strict streams ---------------------------------------------------------------


def minimal_strict_pad(stream: Stream) -> tuple[int, ...]:
    """Per-coordinate running deficit: the least pad keeping prefixes nonnegative."""
    return tuple(int(max(0, -c)) for c in stream.prefix_minimum())


def strict_padding(stream: Stream, pad: Sequence[int]) -> Stream:
    """Prepend +1 updates and certify every prefix stays nonnegative.

    An all-zero pad leaves the block structure untouched.  The padded
    stream is replayed in full, and the first prefix dipping below zero
    is named in the error.
    """
    pv = tuple(int(c) for c in pad)
    if len(pv) != stream.dimension:
        raise ValueError("pad dimension mismatch")
    if any(c < 0 for c in pv):
        raise ValueError("pad must be nonnegative")
    blocks = stream.blocks
    if any(pv):
        blocks = (canonical_realization(pv),) + blocks
    acc = [0] * stream.dimension
    t = 0
    for block in blocks:
        for u in block:
            t += 1
            acc[u.coordinate] += u.sign
            if acc[u.coordinate] < 0:
                raise ValueError(
                    f"prefix of length {t} drives coordinate "
                    f"{u.coordinate} to {acc[u.coordinate]}"
                )
    return Stream(stream.dimension, blocks)


# -- serialization -----------------------------------------------------------------


def stream_to_text(stream: Stream) -> str:
    lines = [f"# n={stream.dimension}"]
    for j, block in enumerate(stream.blocks):
        lines.append(f"# block {j}")
        lines.extend(f"{u.coordinate} {u.sign:+d}" for u in block)
    return "\n".join(lines) + "\n"


def stream_from_text(text: str) -> Stream:
    dimension: int | None = None
    blocks: list[list[Update]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("n="):
                dimension = int(body[2:])
            elif body.startswith("block"):
                blocks.append([])
            continue
        coord, sign = line.split()
        if not blocks:
            blocks.append([])
        blocks[-1].append(Update(int(coord), int(sign)))
    if dimension is None:
        dimension = 1 + max(
            (u.coordinate for b in blocks for u in b), default=-1
        )
    return Stream(dimension, tuple(tuple(b) for b in blocks))


# -- algorithm zoo -----------------------------------------------------------------


def constant_algorithm(dimension: int, value: object = 0) -> TurnstileAlgorithm:
    """Single-state algorithm answering `value` regardless of the stream."""
    return TurnstileAlgorithm(
        name="constant",
        dimension=dimension,
        state_bits=0,
        initial_state=0,
        transition=lambda j, s, u: 0,
        output=lambda s: value,
    )


def parity_algorithm(dimension: int) -> TurnstileAlgorithm:
    """Tracks the coordinate-sum parity of the frequency vector."""
    return TurnstileAlgorithm(
        name="parity",
        dimension=dimension,
        state_bits=1,
        initial_state=0,
        transition=lambda j, s, u: s ^ 1,
        output=lambda s: s,
    )


def mod_counter_algorithm(dimension: int, modulus: int = 3) -> TurnstileAlgorithm:
    """Tracks the first coordinate modulo `modulus`."""
    if modulus < 2:
        raise ValueError("modulus must be at least 2")
    return TurnstileAlgorithm(
        name=f"mod-{modulus}",
        dimension=dimension,
        state_bits=(modulus - 1).bit_length(),
        initial_state=0,
        transition=lambda j, s, u: (
            (s + u.sign) % modulus if u.coordinate == 0 else s
        ),
        output=lambda s: s,
    )


def identity_box_algorithm(dimension: int, box_radius: int) -> TurnstileAlgorithm:
    """Records the frequency vector exactly while it stays inside a box.

    States enumerate the box plus one absorbing overflow state with id 0;
    the output is the recorded vector, or None after overflow.
    """
    if box_radius < 1:
        raise ValueError("box radius must be positive")
    side = 2 * box_radius + 1
    count = side**dimension + 1

    def encode(x: Sequence[int]) -> int:
        code = 0
        for c in x:
            code = code * side + (c + box_radius)
        return code + 1

    def decode(state: int) -> list[int]:
        code = state - 1
        out = []
        for _ in range(dimension):
            out.append(code % side - box_radius)
            code //= side
        out.reverse()
        return out

    def transition(j: int, s: int, u: Update) -> int:
        if s == 0:
            return 0
        x = decode(s)
        x[u.coordinate] += u.sign
        if abs(x[u.coordinate]) > box_radius:
            return 0
        return encode(x)

    return TurnstileAlgorithm(
        name="identity-box",
        dimension=dimension,
        state_bits=(count - 1).bit_length(),
        initial_state=encode((0,) * dimension),
        transition=transition,
        output=lambda s: None if s == 0 else tuple(decode(s)),
    )


def alternating_algorithm(dimension: int, horizon: int) -> TurnstileAlgorithm:
    """Rule switch per block: even blocks flip the coordinate-sum parity,
    odd blocks advance the first coordinate's mod-3 counter.

    State id is parity * 3 + counter, so the per-block posteriors differ
    between neighboring blocks.
    """
    if horizon < 1:
        raise ValueError("horizon must be positive")

    def transition(j: int, s: int, u: Update) -> int:
        parity, counter = divmod(s, 3)
        if j % 2 == 0:
            parity ^= 1
        elif u.coordinate == 0:
            counter = (counter + u.sign) % 3
        return parity * 3 + counter

    return TurnstileAlgorithm(
        name="alternating",
        dimension=dimension,
        state_bits=3,
        initial_state=0,
        transition=transition,
        output=lambda s: s,
        uniform=False,
        horizon=horizon,
    )


ZOO: dict[str, Callable[..., TurnstileAlgorithm]] = {
    "constant": constant_algorithm,
    "parity": parity_algorithm,
    "mod-counter": mod_counter_algorithm,
    "identity-box": identity_box_algorithm,
    "alternating": alternating_algorithm,
}


def zoo_algorithm(name: str, dimension: int, **params) -> TurnstileAlgorithm:
    """Build a reference algorithm from its registry name."""
    try:
        build = ZOO[name]
    except KeyError:
        known = ", ".join(sorted(ZOO))
        raise ValueError(
            f"unknown algorithm {name!r}; the registry has {known}"
        ) from None
    return build(dimension, **params)
