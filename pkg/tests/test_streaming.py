"""Turnstile stream model tests.

Oracles: frequency accumulators for canonical blocks and replay,
restriction masses summed directly from the truncated Gaussian for the
posterior laws, a brute-force joint enumeration for the factorization
identity, a prefix-scan for strict padding, and the exact truncated
pmf behind the chi-square check of the noise marginal.
"""

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from sketchlab.dgauss import TruncationPolicy
from sketchlab.measure import SparseMeasure, density_certificate, gamma_truncated
from sketchlab.streaming import (
    ImpossibleSequence,
    ProblemSpec,
    SelectionFailed,
    StateSequence,
    Stream,
    TurnstileAlgorithm,
    Update,
    alternating_algorithm,
    canonical_realization,
    conditioned_sequence,
    constant_algorithm,
    exact_stream_sample,
    fold_block,
    identity_box_algorithm,
    minimal_strict_pad,
    mod_counter_algorithm,
    mollified_stream_sample,
    parity_algorithm,
    posterior_laws,
    resample_convolution,
    run,
    select_state_sequence,
    stream_from_text,
    stream_to_text,
    strict_padding,
    zoo_algorithm,
)

TARGET4 = SparseMeasure.uniform([(0, 0), (1, 0), (1, 1), (2, 1)])

PARITY_PROBLEM = ProblemSpec.promise(lambda y: sum(y) % 2)


def vectors(n: int, bound: int = 5):
    return st.lists(
        st.integers(-bound, bound), min_size=n, max_size=n
    ).map(tuple)


# -- canonical blocks ---------------------------------------------------------


def test_update_validation():
    with pytest.raises(ValueError):
        Update(0, 2)
    with pytest.raises(ValueError):
        Update(-1, 1)


def test_canonical_zero_is_empty():
    assert canonical_realization((0, 0, 0)) == ()


def test_canonical_unfolds_definition():
    block = canonical_realization((2, -1))
    assert [(u.coordinate, u.sign) for u in block] == [(0, 1), (0, 1), (1, -1)]


@given(vectors(3))
def test_canonical_net_delta_and_length(v):
    block = canonical_realization(v)
    acc = [0, 0, 0]
    for u in block:
        acc[u.coordinate] += u.sign
    assert tuple(acc) == v
    assert len(block) == sum(abs(c) for c in v)
    # ascending coordinate order is part of the contract
    coords = [u.coordinate for u in block]
    assert coords == sorted(coords)


# -- streams ------------------------------------------------------------------


def test_stream_rejects_out_of_range_coordinate():
    with pytest.raises(ValueError):
        Stream(1, ((Update(1, 1),),))


def test_stream_counts_and_final_vector():
    s = Stream.from_deltas(2, [(2, -1), (0, 3)])
    assert s.block_count == 2
    assert s.update_count == 6
    assert tuple(s.final_vector()) == (2, 2)


def test_prefix_minimum():
    s = Stream(2, (canonical_realization((-2, 1)), canonical_realization((3, -3))))
    assert tuple(s.prefix_minimum()) == (-2, -2)


# -- run ----------------------------------------------------------------------


def test_run_empty_stream_answers_at_initial_state():
    state, out = run(parity_algorithm(2), ())
    assert (state, out) == (0, 0)


def test_run_parity_even():
    state, out = run(parity_algorithm(2), canonical_realization((1, 1)))
    assert out == 0


def test_run_mod3_counter():
    state, out = run(mod_counter_algorithm(2, 3), canonical_realization((4, 0)))
    assert state == 1


def test_run_is_deterministic():
    alg = mod_counter_algorithm(2, 5)
    s = Stream.from_deltas(2, [(3, -1), (-2, 4)])
    assert run(alg, s) == run(alg, s)


def test_run_flat_updates_count_as_one_block():
    alt = alternating_algorithm(1, horizon=1)
    # block 0 uses the parity rule, so three updates land on parity 1
    state, _ = run(alt, canonical_realization((3,)))
    assert state == 3


def test_run_horizon_error():
    alt = alternating_algorithm(1, horizon=2)
    s = Stream.from_deltas(1, [(1,), (1,), (1,)])
    with pytest.raises(ValueError, match="covers 2"):
        run(alt, s)


def test_step_rejects_state_space_escape():
    bad = TurnstileAlgorithm(
        name="bad",
        dimension=1,
        state_bits=1,
        initial_state=0,
        transition=lambda j, s, u: 2,
        output=lambda s: s,
    )
    with pytest.raises(RuntimeError, match="state"):
        run(bad, canonical_realization((1,)))


# -- zoo ----------------------------------------------------------------------


def test_zoo_registry():
    assert zoo_algorithm("parity", 2).name == "parity"
    assert zoo_algorithm("mod-counter", 1, modulus=5).name == "mod-5"
    with pytest.raises(ValueError, match="registry"):
        zoo_algorithm("nonsense", 2)


def test_constant_algorithm_single_state():
    alg = constant_algorithm(2, value="ok")
    assert alg.state_count == 1
    assert run(alg, canonical_realization((5, -3))) == (0, "ok")


def test_mod_counter_validates_modulus():
    with pytest.raises(ValueError):
        mod_counter_algorithm(1, 1)


def test_identity_box_records_and_overflows():
    alg = identity_box_algorithm(2, 3)
    state, out = run(alg, canonical_realization((3, -2)))
    assert out == (3, -2)
    # one more step over the edge absorbs permanently
    state = alg.step(0, state, Update(0, 1))
    assert state == 0
    state = alg.step(0, state, Update(0, -1))
    assert state == 0
    assert alg.output(0) is None


# -- sampled stream models ----------------------------------------------------


def test_exact_sample_replays_to_target():
    for seed in range(50):
        smp = exact_stream_sample(TARGET4, 8.0, 3, seed=seed)
        assert tuple(smp.stream.final_vector()) == smp.target
        assert smp.stream.block_count == 4
        assert smp.noise is None


def test_exact_sample_m0_is_single_target_block():
    smp = exact_stream_sample(TARGET4, 8.0, 0, seed=9)
    assert smp.stream.block_count == 1
    assert smp.stream.blocks[0] == canonical_realization(smp.target)


def test_exact_sample_reports_additive_length():
    smp = exact_stream_sample(TARGET4, 8.0, 5, seed=21)
    lengths = [sum(abs(c) for c in d) for d in smp.deltas]
    assert smp.stream.update_count == sum(lengths)
    assert smp.stream.update_count <= 5 * max(lengths[:-1]) + lengths[-1]


def test_mollified_sample_replays_to_target_plus_noise():
    for seed in range(50):
        smp = mollified_stream_sample(TARGET4, 8.0, 3, seed=seed)
        want = tuple(a + b for a, b in zip(smp.target, smp.noise))
        assert tuple(smp.stream.final_vector()) == want


def test_mollified_zero_noise_seed_reduces_to_exact():
    target = SparseMeasure.point_mass((0,))
    seed = next(
        s
        for s in range(200)
        if mollified_stream_sample(target, 4.0, 0, seed=s).noise == (0,)
    )
    exact = exact_stream_sample(target, 4.0, 0, seed=seed)
    moll = mollified_stream_sample(target, 4.0, 0, seed=seed)
    assert moll.stream == exact.stream
    assert moll.target == exact.target


def test_mollified_noise_marginal_chi_square():
    # sampler oracle: the exact truncated pmf, pooled into bins with
    # expected count at least 5; seeds 0..99999 give p = 0.4055
    target = SparseMeasure.point_mass((0,))
    counts = Counter()
    trials = 100_000
    for seed in range(trials):
        counts[mollified_stream_sample(target, 4.0, 0, seed=seed).noise[0]] += 1
    law = gamma_truncated(1, 4.0)
    expected = {
        p[0]: trials * m / law.total_mass for p, m in law.atoms.items()
    }
    core = sorted(v for v, e in expected.items() if e >= 5.0)
    lo, hi = core[0], core[-1]
    obs = [sum(c for v, c in counts.items() if v < lo)]
    exp = [sum(e for v, e in expected.items() if v < lo)]
    for v in range(lo, hi + 1):
        obs.append(counts.get(v, 0))
        exp.append(expected.get(v, 0.0))
    obs.append(sum(c for v, c in counts.items() if v > hi))
    exp.append(sum(e for v, e in expected.items() if v > hi))
    expv = np.array(exp) * (sum(obs) / math.fsum(exp))
    chi2, p = stats.chisquare(np.array(obs, dtype=float), expv)
    assert p >= 0.01
    assert abs(p - 0.40554515864154267) < 1e-6


def test_target_deficit_rejected():
    lossy = gamma_truncated(2, 8.0, TruncationPolicy.for_gaussian(2, 8.0, 1e-3))
    with pytest.raises(ValueError, match="deficit"):
        exact_stream_sample(lossy, 8.0, 1, seed=0)


def test_policy_dimension_mismatch():
    pol = TruncationPolicy.for_gaussian(1, 8.0)
    with pytest.raises(ValueError, match="dimension"):
        exact_stream_sample(TARGET4, 8.0, 1, policy=pol, seed=0)


# -- posterior laws -----------------------------------------------------------


def test_constant_posteriors_are_unrestricted():
    laws = posterior_laws(constant_algorithm(2), (0, 0, 0), 8.0, 2)
    support = gamma_truncated(2, 8.0)
    assert len(laws) == 2
    for law in laws:
        assert law.support_size == support.support_size
        assert abs(law.total_mass - 1.0) < 1e-12


def test_parity_posteriors_match_restriction_masses():
    # oracle: class masses summed straight off the truncated Gaussian
    support = gamma_truncated(2, 8.0)
    p_odd = math.fsum(m for p, m in support.atoms.items() if sum(p) % 2 == 1)
    alg = parity_algorithm(2)
    seq = conditioned_sequence(alg, (0, 1, 0), 8.0, 2)
    assert abs(seq.per_block_densities[0] - p_odd) < 1e-15
    assert abs(seq.per_block_densities[1] - p_odd) < 1e-15
    assert abs(p_odd - 0.5) < 1e-9
    laws = posterior_laws(alg, seq, 8.0, 2)
    for law in laws:
        assert all(sum(p) % 2 == 1 for p in law.atoms)
    mixed = conditioned_sequence(alg, (0, 0, 1), 8.0, 2)
    assert abs(mixed.per_block_densities[0] - (1.0 - p_odd)) < 1e-12
    assert abs(mixed.per_block_densities[1] - p_odd) < 1e-15


def test_identity_posteriors_are_point_masses():
    alg = identity_box_algorithm(2, 40)
    support = gamma_truncated(2, 8.0)
    s0 = alg.initial_state
    s1 = fold_block(alg, 0, s0, (1, 0))
    s2 = fold_block(alg, 1, s1, (2, -1))
    laws = posterior_laws(alg, (s0, s1, s2), 8.0, 2)
    assert dict(laws[0].atoms) == {(1, 0): 1.0}
    assert dict(laws[1].atoms) == {(2, -1): 1.0}
    seq = conditioned_sequence(alg, (s0, s1, s2), 8.0, 2)
    assert seq.per_block_densities[0] == support.atoms[(1, 0)]
    assert seq.per_block_densities[1] == support.atoms[(2, -1)]


def test_posterior_certificates_cover_block_masses():
    alg = parity_algorithm(2)
    seq = conditioned_sequence(alg, (0, 1, 1), 8.0, 2)
    for law, beta in zip(posterior_laws(alg, seq, 8.0, 2), seq.per_block_densities):
        cert = density_certificate(law, 8.0)
        assert cert.alpha >= beta * (1.0 - 1e-6)


def test_impossible_sequence_error():
    # the overflow state needs a coordinate beyond the truncation ball
    alg = identity_box_algorithm(2, 40)
    with pytest.raises(ImpossibleSequence, match="block 0"):
        posterior_laws(alg, (alg.initial_state, 0, 0), 8.0, 2)


def test_posterior_state_validation():
    alg = parity_algorithm(2)
    with pytest.raises(ValueError, match="boundary states"):
        posterior_laws(alg, (0, 1), 8.0, 2)
    with pytest.raises(ValueError, match="initial state"):
        posterior_laws(alg, (1, 0, 1), 8.0, 2)


def test_factorization_against_joint_enumeration():
    # oracle: brute-force joint mass over all block-delta pairs
    alg = parity_algorithm(1)
    support = gamma_truncated(1, 4.0)
    states = (0, 1, 0)
    joint = 0.0
    for (x1,), m1 in support.atoms.items():
        if fold_block(alg, 0, 0, (x1,)) != states[1]:
            continue
        for (x2,), m2 in support.atoms.items():
            if fold_block(alg, 1, states[1], (x2,)) == states[2]:
                joint += m1 * m2
    seq = conditioned_sequence(alg, states, 4.0, 2)
    assert abs(seq.probability - joint) < 1e-14


def test_factorization_against_monte_carlo():
    alg = parity_algorithm(1)
    states = (0, 1, 0)
    seq = conditioned_sequence(alg, states, 4.0, 2)
    target = SparseMeasure.point_mass((0,))
    trials = 4096
    rng = np.random.default_rng(77)
    hits = 0
    for s in rng.integers(0, 2**63, size=trials):
        smp = exact_stream_sample(target, 4.0, 2, seed=int(s))
        state = 0
        path = [0]
        for j, block in enumerate(smp.stream.blocks[:2]):
            for u in block:
                state = alg.step(j, state, u)
            path.append(state)
        hits += tuple(path) == states
    stderr = math.sqrt(seq.probability * (1.0 - seq.probability) / trials)
    assert abs(hits / trials - seq.probability) <= 3.0 * stderr


def test_nonuniform_posteriors_differ_across_blocks():
    # regression: the rule switch must show up in the conditioned laws
    alg = alternating_algorithm(1, horizon=4)
    support = gamma_truncated(1, 8.0)
    q_odd = math.fsum(m for p, m in support.atoms.items() if p[0] % 2 == 1)
    q_mod1 = math.fsum(m for p, m in support.atoms.items() if p[0] % 3 == 1)
    seq = conditioned_sequence(alg, (0, 3, 4), 8.0, 2)
    assert abs(seq.per_block_densities[0] - q_odd) < 1e-15
    assert abs(seq.per_block_densities[1] - q_mod1) < 1e-15
    assert abs(seq.per_block_densities[0] - 0.5) < 1e-9
    assert abs(seq.per_block_densities[1] - 1.0 / 3.0) < 1e-9
    laws = posterior_laws(alg, seq, 8.0, 2)
    assert all(p[0] % 2 == 1 for p in laws[0].atoms)
    assert all(p[0] % 3 == 1 for p in laws[1].atoms)
    assert set(laws[0].atoms) != set(laws[1].atoms)


def test_resample_convolution_matches_laws():
    laws = posterior_laws(parity_algorithm(2), (0, 1, 0), 8.0, 2)
    rows = resample_convolution(2, laws, 256, np.random.default_rng(3))
    assert rows.shape == (256, 2)
    # both blocks have odd coordinate sums, so every row sums even
    assert all(int(r.sum()) % 2 == 0 for r in rows)


# -- state sequences ----------------------------------------------------------


def test_state_sequence_validation():
    with pytest.raises(ValueError, match="factor"):
        StateSequence((0, 1), 0.4, (0.5,), 1.0)
    with pytest.raises(ValueError, match="boundary"):
        StateSequence((0, 1), 0.25, (0.5, 0.5), 1.0)
    seq = StateSequence((0, 1, 0), 0.25, (0.5, 0.5), 1.0)
    assert seq.block_count == 2


def test_select_constant_unique_sequence():
    seq = select_state_sequence(
        constant_algorithm(2), TARGET4, ProblemSpec.promise(lambda y: 0),
        8.0, 2, samples=64, seed=3,
    )
    assert seq.states == (0, 0, 0)
    assert abs(seq.probability - 1.0) < 1e-9
    assert seq.success_estimate == 1.0


def test_select_parity_breaks_ties_lexicographically():
    # all four sequences answer perfectly, so the tie-break decides
    seq = select_state_sequence(
        parity_algorithm(2), TARGET4, PARITY_PROBLEM, 8.0, 2,
        samples=512, seed=11,
    )
    assert seq.states == (0, 0, 0)
    assert abs(seq.probability - 0.25) < 1e-9
    assert seq.success_estimate == 1.0
    assert all(abs(b - 0.5) < 1e-9 for b in seq.per_block_densities)


def test_select_identity_fails_at_small_budget():
    alg = identity_box_algorithm(2, 40)
    with pytest.raises(SelectionFailed) as err:
        select_state_sequence(
            alg, TARGET4, PARITY_PROBLEM, 8.0, 2, samples=128, seed=5
        )
    assert err.value.threshold == 0.125
    assert err.value.samples == 128
    assert max(c for _, c in err.value.census) * 8 < 128


def test_select_lowered_threshold_recovers():
    alg = identity_box_algorithm(2, 40)
    seq = select_state_sequence(
        alg, TARGET4, PARITY_PROBLEM, 8.0, 2,
        samples=16, seed=5, threshold=1.0 / 32.0,
    )
    assert len(seq.states) == 3
    assert 0.0 <= seq.success_estimate <= 1.0


def test_select_validates_inputs():
    with pytest.raises(ValueError, match="sample"):
        select_state_sequence(
            parity_algorithm(2), TARGET4, PARITY_PROBLEM, 8.0, 2,
            samples=0, seed=1,
        )
    alt = alternating_algorithm(2, horizon=2)
    with pytest.raises(ValueError, match="horizon"):
        select_state_sequence(
            alt, TARGET4, PARITY_PROBLEM, 8.0, 2, samples=8, seed=1
        )


def test_select_reruns_identically():
    args = (parity_algorithm(2), TARGET4, PARITY_PROBLEM, 8.0, 2)
    a = select_state_sequence(*args, samples=128, seed=42)
    b = select_state_sequence(*args, samples=128, seed=42)
    assert a == b


# -- problems -----------------------------------------------------------------


def test_problem_kind_validation():
    with pytest.raises(ValueError, match="kind"):
        ProblemSpec(kind="other")
    with pytest.raises(ValueError, match="metric"):
        ProblemSpec(kind="metric-approximation", target=lambda y: 0)
    with pytest.raises(ValueError, match="relation"):
        ProblemSpec(kind="relation")


def test_promise_labels_validated():
    prob = ProblemSpec.promise(lambda y: 2)
    with pytest.raises(ValueError, match="labels"):
        prob.valid((0,), 0)
    star = ProblemSpec.promise(lambda y: "*")
    assert star.valid((0,), 0) and star.valid((0,), 1)


def test_metric_problem_validity():
    prob = ProblemSpec.metric_approximation(
        target=lambda y: float(sum(y)),
        metric=lambda a, b: abs(a - b),
        outputs=(0.0, 1.0, 2.0),
        epsilon=0.5,
    )
    assert prob.valid((1, 0), 1.0)
    assert not prob.valid((2, 1), 1.0)


def test_relation_problem_satisfiability():
    prob = ProblemSpec.relation_problem(
        relation=lambda y, o: o == sum(y), outputs=(0, 1)
    )
    prob.ensure_satisfiable((1, 0))
    with pytest.raises(ValueError, match="no valid output"):
        prob.ensure_satisfiable((1, 1))


# -- strict padding -----------------------------------------------------------


def test_strict_pad_zero_keeps_nonnegative_stream():
    s = Stream.from_deltas(2, [(1, 2), (0, -1)])
    assert strict_padding(s, (0, 0)) == s


def test_strict_pad_zero_rejects_negative_stream():
    s = Stream.from_deltas(2, [(-1, 0)])
    with pytest.raises(ValueError, match="prefix of length 1"):
        strict_padding(s, (0, 0))


def test_strict_pad_single_unit():
    s = Stream(2, (canonical_realization((-1, 0)),))
    padded = strict_padding(s, (1, 0))
    assert padded.block_count == 2
    assert tuple(padded.final_vector()) == (0, 0)


@given(
    st.lists(
        st.tuples(st.integers(0, 2), st.sampled_from((-1, 1))),
        min_size=0,
        max_size=40,
    )
)
@settings(max_examples=60, deadline=None)
def test_minimal_pad_matches_prefix_scan(pairs):
    # oracle: running per-coordinate minimum over the flat update list
    updates = tuple(Update(c, s) for c, s in pairs)
    stream = Stream(3, (updates,))
    acc = [0, 0, 0]
    low = [0, 0, 0]
    for c, s in pairs:
        acc[c] += s
        low[c] = min(low[c], acc[c])
    want = tuple(-v for v in low)
    assert minimal_strict_pad(stream) == want
    padded = strict_padding(stream, want)
    assert tuple(padded.final_vector()) == tuple(
        a + b for a, b in zip(want, stream.final_vector())
    )
    for i in range(3):
        if want[i] == 0:
            continue
        short = list(want)
        short[i] -= 1
        with pytest.raises(ValueError, match="prefix"):
            strict_padding(stream, short)


def test_strict_pad_validates_pad():
    s = Stream.from_deltas(2, [(1, 1)])
    with pytest.raises(ValueError, match="dimension"):
        strict_padding(s, (1,))
    with pytest.raises(ValueError, match="nonnegative"):
        strict_padding(s, (-1, 0))


# -- serialization ------------------------------------------------------------


def test_stream_text_format():
    s = Stream.from_deltas(2, [(1, -1), (0, 0)])
    assert stream_to_text(s) == (
        "# n=2\n# block 0\n0 +1\n1 -1\n# block 1\n"
    )


@given(
    st.lists(vectors(2, bound=3), min_size=0, max_size=5)
)
@settings(max_examples=60, deadline=None)
def test_stream_text_roundtrip(deltas):
    s = Stream.from_deltas(2, deltas)
    assert stream_from_text(stream_to_text(s)) == s


def test_stream_from_text_infers_dimension():
    s = stream_from_text("0 +1\n2 -1\n")
    assert s.dimension == 3
    assert s.block_count == 1
    assert tuple(s.final_vector()) == (1, 0, -1)
