import math

import numpy as np
import pytest
from scipy.special import logsumexp

from editcrf import (
    BeamConfig,
    backward,
    build_model,
    constrained_log_partition,
    enumerate_alignments,
    expected_feature_counts,
    forward,
    log_partition,
    log_potential,
    posterior_match,
    viterbi,
)
from editcrf.engine import Batch, _predicate_mask_grid
from editcrf.errors import DegenerateInputError, NoPathError
from editcrf.features import eval_predicate
from conftest import oracle_terms


def with_same_substitute_weight(model, value=1.0):
    params = np.array(model.params)
    p_idx = model.predicates.index("same")
    for g in model.groups:
        if g.op == "substitute" and g.subset == 1:
            params[model.feature_id(g.index, p_idx)] = value
    return model.with_params(params)


def test_zero_weight_log_partition_counts_paths(ids_model):
    lat = forward(ids_model, "a", "b")
    assert log_partition(lat) == pytest.approx(math.log(6), abs=1e-12)
    assert constrained_log_partition(lat, 0) == pytest.approx(math.log(3), abs=1e-12)
    assert constrained_log_partition(lat, 1) == pytest.approx(math.log(3), abs=1e-12)


def test_enumeration_counts(ids_model):
    assert len(enumerate_alignments(ids_model, "a", "b")) == 6
    assert len(enumerate_alignments(ids_model, "a", "")) == 2
    assert len(enumerate_alignments(ids_model, "ab", "")) == 2


def test_both_empty_is_degenerate(ids_model):
    with pytest.raises(DegenerateInputError):
        forward(ids_model, "", "")
    with pytest.raises(DegenerateInputError):
        enumerate_alignments(ids_model, "", "")


def test_posterior_symmetric_model_is_half(ids_model):
    assert posterior_match(ids_model, "a", "b") == pytest.approx(0.5, abs=1e-12)
    assert posterior_match(ids_model, "abc", "a") == pytest.approx(0.5, abs=1e-12)


def test_posterior_weighted_example(ids_model):
    model = with_same_substitute_weight(ids_model)
    expected = (math.e + 2) / (math.e + 5)
    assert posterior_match(model, "a", "a") == pytest.approx(expected, rel=1e-12)


def test_posterior_normalization(ids_model):
    rng = np.random.default_rng(11)
    model = ids_model.with_params(rng.uniform(-1, 1, ids_model.n_features))
    for x, y in [("a", "b"), ("ab", "ba"), ("aab", "b")]:
        p1 = posterior_match(model, x, y)
        lat = forward(model, x, y)
        p0 = math.exp(constrained_log_partition(lat, 0) - log_partition(lat))
        assert p0 + p1 == pytest.approx(1.0, abs=1e-12)


def test_log_potential_zero_weights_and_linearity(ids_model):
    assert log_potential(ids_model, "a", "a", 0, 0, (1, 1), 0, "substitute", 2) == 0.0
    rng = np.random.default_rng(5)
    params = rng.uniform(-1, 1, ids_model.n_features)
    m1 = ids_model.with_params(params)
    base = log_potential(m1, "a", "a", 0, 0, (1, 1), 0, "substitute", 2)
    from editcrf.features import extract

    vec = extract(m1, "a", "a", 0, 0, (1, 1), 0, "substitute", 2)
    m2 = ids_model.with_params(params + 0.25)
    shifted = log_potential(m2, "a", "a", 0, 0, (1, 1), 0, "substitute", 2)
    assert shifted == pytest.approx(base + 0.25 * len(vec), rel=1e-12)


def test_log_potential_validates_landing(ids_model):
    with pytest.raises(ValueError):
        log_potential(ids_model, "a", "a", 0, 0, (2, 2), 0, "substitute", 2)


def test_backward_boundary_and_start_cut(ids_model):
    lat = backward(ids_model, "a", "b")
    for state in (1, 2):
        assert lat.beta_at(1, 1, state) == 0.0
    assert lat.alpha_at(0, 0, 0) == 0.0
    assert lat.beta_at(0, 0, 0) == pytest.approx(math.log(6), abs=1e-12)


def _cut_mass(lat, d):
    """Alpha+beta mass crossing anti-diagonal d: nodes on the diagonal
    plus edges that jump over it."""
    batch = lat.batch
    g = batch.graphs[0]
    terms = []
    for i in range(g.nx + 1):
        j = d - i
        if not 0 <= j <= g.ny:
            continue
        for state in ([0] if d == 0 else []) + list(batch.runtime.states):
            a = lat.alpha_at(i, j, state)
            b = lat.beta_at(i, j, state)
            if np.isfinite(a) and np.isfinite(b):
                terms.append(a + b)
    dst_cell = (batch.dst - 1) // g.n_states
    dst_diag = dst_cell // (g.ny + 1) + dst_cell % (g.ny + 1)
    spanning = np.flatnonzero((batch.src_diag < d) & (dst_diag > d))
    for k in spanning:
        a = lat.alpha[batch.src[k]]
        b = lat.beta[batch.dst[k]]
        if np.isfinite(a) and np.isfinite(b):
            terms.append(a + lat.w[k] + b)
    return logsumexp(terms)


def test_anti_diagonal_cuts_reproduce_log_z(ids_model):
    rng = np.random.default_rng(3)
    model = ids_model.with_params(rng.uniform(-1, 1, ids_model.n_features))
    for x, y in [("ab", "ba"), ("aab", "bb"), ("a", "bbb")]:
        lat = backward(model, x, y)
        lz = log_partition(lat)
        for d in range(len(x) + len(y) + 1):
            assert _cut_mass(lat, d) == pytest.approx(lz, abs=1e-9)


def test_expected_counts_match_oracle(ids_model):
    rng = np.random.default_rng(17)
    for x, y in [("a", "b"), ("ab", "ba"), ("aab", "ba")]:
        terms = oracle_terms(ids_model, x, y)
        for _ in range(3):
            model = ids_model.with_params(rng.uniform(-1, 1, ids_model.n_features))
            for constraint in ("all", 0, 1):
                got = expected_feature_counts(model, x, y, constraint)
                want = terms.expected_counts(model.params, constraint)
                np.testing.assert_allclose(got, want, atol=1e-9)


def test_expected_counts_symmetric_subsets(ids_model):
    counts = expected_feature_counts(ids_model, "a", "b", "all")
    by_label = {}
    for g in ids_model.groups:
        key = (g.op, g.label.endswith(":q0"))
        by_label.setdefault(key, {})[g.subset] = g.index
    bias = len(ids_model.predicates) - 1
    for key, sides in by_label.items():
        c0 = counts[ids_model.feature_id(sides[0], bias)]
        c1 = counts[ids_model.feature_id(sides[1], bias)]
        assert c0 == pytest.approx(c1, abs=1e-12)


def test_expected_counts_inactive_predicate_is_zero(ids_model):
    counts = expected_feature_counts(ids_model, "a", "b", "all")
    p_idx = ids_model.predicates.index("same-numeric")
    for g in ids_model.groups:
        assert counts[ids_model.feature_id(g.index, p_idx)] == 0.0


def test_viterbi_weighted_single_substitute(ids_model):
    model = with_same_substitute_weight(ids_model)
    best = viterbi(model, "a", "a", "all")
    assert best.edits == ("substitute",)
    assert best.states == (2,)
    assert best.score == pytest.approx(1.0, abs=1e-12)


def test_viterbi_zero_weight_tie_break(ids_model):
    best = viterbi(ids_model, "a", "b", "all")
    assert best.edits == ("substitute",)
    assert best.states == (1,)
    assert best.ix == (1,) and best.iy == (1,)


def test_viterbi_score_bounded_by_log_partition(ids_model):
    rng = np.random.default_rng(23)
    for _ in range(5):
        model = ids_model.with_params(rng.uniform(-1, 1, ids_model.n_features))
        lat = forward(model, "ab", "bba")
        assert viterbi(model, "ab", "bba").score <= log_partition(lat) + 1e-12


def test_viterbi_constrained_matches_oracle(ids_model):
    rng = np.random.default_rng(29)
    terms = oracle_terms(ids_model, "ab", "ba")
    for _ in range(5):
        model = ids_model.with_params(rng.uniform(-1, 1, ids_model.n_features))
        for z in (0, 1):
            got = viterbi(model, "ab", "ba", z).score
            assert got == pytest.approx(terms.viterbi_score(model.params, z), abs=1e-9)


def test_dp_matches_oracle_small_sweep(ids_model):
    rng = np.random.default_rng(41)
    strings = ["", "a", "b", "ab", "ba", "bb"]
    weights = [rng.uniform(-1, 1, ids_model.n_features) for _ in range(5)]
    for x in strings:
        for y in strings:
            if not x and not y:
                continue
            terms = oracle_terms(ids_model, x, y)
            for params in weights:
                model = ids_model.with_params(params)
                lat = forward(model, x, y)
                assert log_partition(lat) == pytest.approx(
                    terms.log_z(params), rel=1e-9
                )
                for z in (0, 1):
                    assert constrained_log_partition(lat, z) == pytest.approx(
                        terms.constrained_log_z(params, z), rel=1e-9
                    )
                assert posterior_match(model, x, y) == pytest.approx(
                    terms.posterior_match(params), rel=1e-9
                )
                assert viterbi(model, x, y).score == pytest.approx(
                    terms.viterbi_score(params), rel=1e-9
                )


def test_unlimited_beam_equals_wide_beam(ids_model):
    rng = np.random.default_rng(7)
    model = ids_model.with_params(rng.uniform(-1, 1, ids_model.n_features))
    exact = forward(model, "ab", "ba")
    wide = forward(model, "ab", "ba", beam=BeamConfig(width=10_000))
    np.testing.assert_array_equal(exact.alpha, wide.alpha)
    assert not wide.pruned


def test_narrow_beam_lower_bounds_mass(ids_model):
    lat = forward(ids_model, "ab", "ba", beam=1)
    lz0, lz1 = lat.batch.log_partitions(lat.alpha)
    exact = forward(ids_model, "ab", "ba")
    e0, e1 = exact.batch.log_partitions(exact.alpha)
    assert lz0[0] <= e0[0] + 1e-12
    assert lz1[0] <= e1[0] + 1e-12
    assert lat.pruned


def test_beam_width_validation():
    with pytest.raises(ValueError):
        BeamConfig(width=0)


def test_no_path_error_under_substitute_only():
    model = build_model(["substitute"])
    lat = forward(model, "ab", "b")
    with pytest.raises(NoPathError):
        log_partition(lat)


def test_mask_grid_matches_eval_predicate():
    model = build_model(["insert", "delete", "substitute"])
    x, y = "a1(b.", "B1 a."
    mask = _predicate_mask_grid(model.predicates, x, y)
    for i in range(len(x) + 1):
        for j in range(len(y) + 1):
            for bit, name in enumerate(model.predicates):
                assert (mask[i, j] >> bit) & 1 == eval_predicate(name, x, y, i, j)


def test_batch_of_many_matches_per_pair(ids_model):
    rng = np.random.default_rng(55)
    model = ids_model.with_params(rng.uniform(-1, 1, ids_model.n_features))
    pairs = [("a", "b"), ("ab", "ba"), ("b", "")]
    batch = Batch(model, pairs)
    w = batch.edge_weights(model.params)
    alpha, _ = batch.forward(w)
    lz0, lz1 = batch.log_partitions(alpha)
    for k, (x, y) in enumerate(pairs):
        lat = forward(model, x, y)
        assert constrained_log_partition(lat, 0) == lz0[k]
        assert constrained_log_partition(lat, 1) == lz1[k]


def test_second_order_matches_oracle():
    model0 = build_model(["insert", "delete", "substitute"], "second-order")
    rng = np.random.default_rng(61)
    terms = oracle_terms(model0, "ab", "b")
    for _ in range(3):
        model = model0.with_params(rng.uniform(-1, 1, model0.n_features))
        lat = forward(model, "ab", "b")
        assert log_partition(lat) == pytest.approx(terms.log_z(model.params), rel=1e-9)
        got = expected_feature_counts(model, "ab", "b", "all")
        np.testing.assert_allclose(got, terms.expected_counts(model.params), atol=1e-9)
