import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from tempered.errors import CapacityError, InvalidArgumentError
from tempered.seqspace import (
    LAYOUT, P_MAX, GrowthEnvelope, SeqBatch, TruncatedSeq, check_envelope, dual_maximizer,
    dual_norm, envelope_norm_bound, flat_index, load_coefficients, multi_indices, norm_p, pairing,
    save_coefficients, weights, zeta_const,
)


def brute_norm(a, p):
    return math.sqrt(math.fsum(math.prod((1.0 + float(k)) ** (2 * p) for k in n) * v * v
                               for n, v in zip(multi_indices(a.dim, a.order), a.values)))


seqs = st.tuples(st.integers(1, 2), st.integers(0, 8), st.integers(0, 2 ** 32 - 1)).map(
    lambda t: TruncatedSeq(t[0], t[1], np.random.default_rng(t[2]).standard_normal((t[1] + 1) ** t[0])))


def test_layout_is_lex_row_major():
    assert LAYOUT == "lex-row-major"
    assert multi_indices(2, 1).tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
    assert flat_index((1, 2), 3) == 6
    assert flat_index((2, 0, 1), 2) == 19


def test_indexing_and_resize():
    a = TruncatedSeq(2, 1, [1, 2, 3, 4])
    assert a[(1, 0)] == 3 and a[(5, 0)] == 0.0
    big = a.resize(3)
    assert big[(1, 1)] == 4 and big.order == 3 and norm_p(big, 0) == norm_p(a, 0)
    assert big.resize(1) == a
    assert a.resize(0).values.tolist() == [1.0]


def test_arithmetic_aligns_orders():
    a, b = TruncatedSeq.unit(2), TruncatedSeq.unit(0, 4)
    s = a + 2 * b
    assert s.order == 4 and s[0] == 2 and s[2] == 1
    assert (a - a) == TruncatedSeq.zeros(1, 2)
    assert (-a)[2] == -1
    with pytest.raises(InvalidArgumentError):
        a + TruncatedSeq.unit((0, 0))


def test_validation():
    with pytest.raises(InvalidArgumentError):
        TruncatedSeq(1, 2, [1.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        TruncatedSeq(1, 1, [1.0, np.inf])
    with pytest.raises(CapacityError):
        TruncatedSeq.zeros(4, 1)
    a = TruncatedSeq(1, 1, [1.0, 2.0])
    with pytest.raises(ValueError):
        a.values[0] = 3.0


def test_pairing_zero_extends():
    a = TruncatedSeq(1, 2, [1, 2, 3])
    b = TruncatedSeq(1, 4, [1, 1, 1, 9, 9])
    assert pairing(a, b) == 6 == pairing(b, a)


@given(seqs, st.integers(-4, 4))
def test_norm_matches_brute_force(a, p):
    assert norm_p(a, p) == pytest.approx(brute_norm(a, p), rel=1e-12)


def test_norm_log_space_path_stays_finite():
    a = TruncatedSeq(3, 40, np.ones(41 ** 3))
    big = norm_p(a, P_MAX)
    # leading term (41^3)^16 dominates: log ||a|| ~ 48 log 41
    assert math.isfinite(big)
    assert math.log(big) == pytest.approx(48 * math.log(41), rel=1e-2)
    small = norm_p(a, -P_MAX)
    assert small == pytest.approx(math.sqrt(float(mpmath.zeta(32)) ** 3), rel=1e-12)
    with pytest.raises(CapacityError):
        norm_p(a, P_MAX + 1)


@given(seqs, st.integers(0, 3))
def test_dual_norm_isometry(b, p):
    assert dual_norm(b, p) == pytest.approx(norm_p(b, -p), rel=1e-12, abs=0)
    a = dual_maximizer(b, p)
    if not np.any(b.values):
        assert a is None
        return
    assert norm_p(a, p) == pytest.approx(1.0, rel=1e-12)
    assert pairing(b, a) == pytest.approx(dual_norm(b, p), rel=1e-12)


@given(seqs, seqs, st.integers(0, 3))
def test_pairing_bounded_by_dual_norm(b, a, p):
    if a.dim != b.dim:
        return
    assert abs(pairing(b, a)) <= dual_norm(b, p) * norm_p(a, p) * (1 + 1e-12) + 1e-300


def test_dual_norm_rejects_negative_p():
    with pytest.raises(InvalidArgumentError):
        dual_norm(TruncatedSeq.unit(1), -1)


@pytest.mark.parametrize("s", [2, 3, 4, 6, 10])
def test_zeta_matches_mpmath(s):
    assert zeta_const(s) == pytest.approx(float(mpmath.zeta(s)), rel=1e-14)


def test_zeta_rejects_divergent():
    with pytest.raises(InvalidArgumentError):
        zeta_const(1)


def test_weights_closed_form():
    w = weights(2, 2, 2)
    assert w[flat_index((1, 2), 2)] == 4 * 9


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("p", [0, 1, 3])
def test_envelope_bound(d, p):
    env = GrowthEnvelope(p, 2.5)
    m = 10 if d < 3 else 5
    b = TruncatedSeq(d, m, env.c * weights(d, m, p))
    assert check_envelope(b, env)
    assert norm_p(b, -p - 1) <= envelope_norm_bound(env, d)
    assert envelope_norm_bound(env, d) == pytest.approx(2.5 * (math.pi ** 2 / 6) ** (d / 2), rel=1e-13)


def test_envelope_violation_and_zero_constant():
    env = GrowthEnvelope(1, 1.0)
    b = TruncatedSeq(1, 3, [1.0, 2.0, 3.5, 0.0])
    res = check_envelope(b, env)
    assert not res and res.first_violation == (2,) and res.prefix_only
    assert check_envelope(TruncatedSeq.zeros(1, 3), GrowthEnvelope(0, 0.0))
    with pytest.raises(InvalidArgumentError):
        GrowthEnvelope(1, -1.0)


def test_coefficient_file_round_trip(tmp_path):
    a = TruncatedSeq(2, 2, np.linspace(-1, 1, 9) / 3)
    save_coefficients(tmp_path / "a.json", a)
    assert load_coefficients(tmp_path / "a.json") == a
    data = json.loads((tmp_path / "a.json").read_text())
    assert data["layout"] == LAYOUT
    data["layout"] = "colex"
    (tmp_path / "b.json").write_text(json.dumps(data))
    with pytest.raises(InvalidArgumentError):
        load_coefficients(tmp_path / "b.json")


def test_batch_rows_and_resize():
    vals = np.arange(12.0).reshape(3, 4)
    batch = SeqBatch(1, 3, vals)
    assert len(batch) == 3 and batch[1] == TruncatedSeq(1, 3, [4, 5, 6, 7])
    assert batch.resize(1).values.tolist() == [[0, 1], [4, 5], [8, 9]]
