"""Dictionaries, atom selection, and the certified sup machinery."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from greedyopt.dictionaries import (
    Atom,
    FiniteDictionary,
    RankOneDictionary,
    SUP_ITERATION_BUDGET,
    UnsupportedDictionaryError,
    WeaknessCertificationError,
    power_top_singular,
    select_e_greedy,
    select_e_greedy_fixed,
    select_gradient_greedy,
    synthesis_l1,
)
from greedyopt.objectives import lr_norm, make_least_squares

from oracles import brute_force_sup, top_singular_svd


def canonical(n=2):
    return FiniteDictionary(np.eye(n))


# ---------------------------------------------------------------------------
# atoms


def test_atom_sign_validation():
    with pytest.raises(ValueError):
        Atom(0, 2)
    with pytest.raises(ValueError):
        Atom(0, 0)


def test_atom_flipped():
    a = Atom(3, 1)
    assert a.flipped() == Atom(3, -1)
    assert a.flipped().flipped() == a


def test_atom_equality_with_factors():
    u = np.array([1.0, 0.0])
    v = np.array([0.0, 1.0])
    a = Atom(-1, 1, (u, v))
    b = Atom(-1, 1, (u.copy(), v.copy()))
    c = Atom(-1, 1, (u, u))
    assert a == b
    assert a != c
    assert hash(a) == hash(b)
    assert a != Atom(-1, 1)


# ---------------------------------------------------------------------------
# finite dictionaries


def test_realize_canonical():
    dic = canonical()
    assert np.array_equal(dic.realize(Atom(0, 1)), [1.0, 0.0])
    assert np.array_equal(dic.realize(Atom(0, -1)), [-1.0, 0.0])
    with pytest.raises(IndexError):
        dic.realize(Atom(5, 1))


def test_from_matrix_normalizes():
    dic = FiniteDictionary.from_matrix(np.array([[3.0, 0.0], [4.0, 2.0]]))
    assert np.allclose(np.linalg.norm(dic.columns, axis=0), 1.0, atol=1e-15)
    with pytest.raises(ValueError):
        FiniteDictionary.from_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_constructor_rejects_unnormalized():
    with pytest.raises(ValueError):
        FiniteDictionary(np.array([[2.0], [0.0]]))


def test_custom_norm_columns():
    # columns unit in l4 (not in l2) are accepted with an explicit norm
    col = np.array([1.0, 1.0]) / 2.0**0.25
    dic = FiniteDictionary(col[:, None], norm=lambda v: lr_norm(v, 4.0))
    assert dic.size == 1


def test_from_csv_roundtrip(tmp_path):
    path = tmp_path / "dict.csv"
    path.write_text("3.0,0.0\n4.0,1.0\n")
    dic = FiniteDictionary.from_csv(path)
    assert dic.ambient_dim == 2 and dic.size == 2
    assert np.allclose(dic.columns[:, 0], [0.6, 0.8])


def test_columns_immutable():
    dic = canonical()
    with pytest.raises(ValueError):
        dic.columns[0, 0] = 5.0


def test_certified_sup_examples():
    dic = canonical()
    value, atom, upper, converged = dic.certified_sup(np.array([3.0, -4.0]))
    assert (value, atom, upper, converged) == (4.0, Atom(1, -1), 4.0, True)
    value, atom, _, _ = dic.certified_sup(np.zeros(2))
    assert (value, atom) == (0.0, Atom(0, 1))


def test_certified_sup_tie_breaks_low_index():
    value, atom, _, _ = canonical().certified_sup(np.array([1.0, 1.0]))
    assert (value, atom) == (1.0, Atom(0, 1))


@given(
    w=arrays(np.float64, (4,), elements=st.floats(-10, 10, allow_nan=False)),
    seed=st.integers(0, 50),
)
@settings(max_examples=60, deadline=None)
def test_certified_sup_matches_brute_force(w, seed):
    rng = np.random.default_rng(seed)
    cols = rng.standard_normal((4, 7))
    dic = FiniteDictionary.from_matrix(cols)
    value, atom, _, _ = dic.certified_sup(w)
    b_value, b_index, b_sign = brute_force_sup(dic.columns, w)
    assert value == b_value
    assert (atom.index, atom.sign) == (b_index, b_sign)


def test_sup_symmetry():
    rng = np.random.default_rng(7)
    dic = FiniteDictionary.from_matrix(rng.standard_normal((5, 9)))
    w = rng.standard_normal(5)
    v_pos, a_pos = dic.sup_inner_product(w)
    v_neg, a_neg = dic.sup_inner_product(-w)
    assert v_pos == v_neg
    assert (a_neg.index, a_neg.sign) == (a_pos.index, -a_pos.sign)


# ---------------------------------------------------------------------------
# power iteration


def test_power_diag_matrix():
    u, v, sigma, converged, _ = power_top_singular(np.diag([3.0, 1.0]))
    assert converged
    assert sigma == pytest.approx(3.0, rel=1e-10)
    assert abs(v[0]) == pytest.approx(1.0, abs=1e-8)
    assert abs(u[0]) == pytest.approx(1.0, abs=1e-8)


def test_power_two_block_matrix():
    w = np.zeros((3, 3))
    w[0, 1] = 5.0
    w[2, 2] = 1.0
    u, v, sigma, converged, _ = power_top_singular(w)
    assert converged
    assert sigma == pytest.approx(5.0, rel=1e-10)
    assert abs(u[0]) == pytest.approx(1.0, abs=1e-8)
    assert abs(v[1]) == pytest.approx(1.0, abs=1e-8)


def test_power_zero_matrix():
    u, v, sigma, converged, it = power_top_singular(np.zeros((3, 3)))
    assert (sigma, converged, it) == (0.0, True, 0)
    assert np.linalg.norm(u) == 1.0 and np.linalg.norm(v) == 1.0


def test_power_rayleigh_is_lower_bound():
    rng = np.random.default_rng(11)
    for _ in range(30):
        w = rng.standard_normal((6, 6))
        _, _, sigma_true = top_singular_svd(w)
        u, v, sigma, _, _ = power_top_singular(w)
        assert sigma <= sigma_true + 1e-12
        assert sigma >= 0.999 * sigma_true  # default budget contract
        # returned triple is self-consistent: u^T W v == sigma
        assert float(u @ (w @ v)) == pytest.approx(sigma, rel=1e-12)


def test_power_unconverged_flag_at_tiny_budget():
    rng = np.random.default_rng(12)
    w = rng.standard_normal((8, 8))
    _, _, sigma, converged, it = power_top_singular(w, max_iter=1)
    assert not converged
    assert it == 1
    assert sigma <= top_singular_svd(w)[2] + 1e-12


# ---------------------------------------------------------------------------
# rank-one dictionary


def test_rank_one_realize():
    dic = RankOneDictionary(2)
    atom = Atom(-1, 1, (np.array([1.0, 0.0]), np.array([0.0, 1.0])))
    assert np.array_equal(dic.realize(atom), [0.0, 1.0, 0.0, 0.0])
    assert np.array_equal(dic.realize(atom.flipped()), [0.0, -1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        dic.realize(Atom(-1, 1))


def test_rank_one_dimensions_and_budget():
    dic = RankOneDictionary(4)
    assert dic.ambient_dim == 16
    assert dic.max_iter == SUP_ITERATION_BUDGET
    assert RankOneDictionary(4, max_iter=7).max_iter == 7
    assert RankOneDictionary(1000).max_iter == 10_000
    with pytest.raises(ValueError):
        RankOneDictionary(0)


def test_rank_one_sup_zero():
    value, atom, upper, converged = RankOneDictionary(3).certified_sup(np.zeros(9))
    assert (value, upper, converged) == (0.0, 0.0, True)
    assert atom.factors is not None


def test_rank_one_sup_diag():
    value, atom, upper, converged = RankOneDictionary(2).certified_sup(
        np.diag([3.0, 1.0]).ravel()
    )
    assert converged
    assert value == pytest.approx(3.0, rel=1e-10)
    assert upper == pytest.approx(np.sqrt(10.0), rel=1e-12)  # Frobenius
    u, v = atom.factors
    assert abs(u[0]) == pytest.approx(1.0, abs=1e-8)
    assert abs(v[0]) == pytest.approx(1.0, abs=1e-8)


# ---------------------------------------------------------------------------
# gradient-greedy selection


def test_select_gradient_greedy_finite():
    cert = select_gradient_greedy(canonical(), np.array([1.0, 2.0]), 1.0)
    assert cert.atom == Atom(1, 1)
    assert cert.score == 2.0
    assert cert.reference == 2.0
    assert cert.ratio == 1.0
    assert cert.converged
    # exact selection dominates any weakness
    weak = select_gradient_greedy(canonical(), np.array([1.0, 2.0]), 0.4)
    assert weak.atom == cert.atom and weak.weakness == 0.4


def test_select_gradient_greedy_validates_weakness():
    for t in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            select_gradient_greedy(canonical(), np.ones(2), t)


def test_select_gradient_greedy_rank_one_two_block():
    w = np.zeros((3, 3))
    w[0, 1] = 5.0
    w[2, 2] = 1.0
    cert = select_gradient_greedy(RankOneDictionary(3), w.ravel(), 0.9)
    assert cert.score == pytest.approx(5.0, rel=1e-8)
    assert cert.converged and cert.ratio >= 0.9
    u, v = cert.atom.factors
    assert abs(u[0]) == pytest.approx(1.0, abs=1e-7)
    assert abs(v[1]) == pytest.approx(1.0, abs=1e-7)


def test_select_gradient_greedy_uncertifiable_fails_loudly():
    # zero power-iteration budget: the certificate falls back to the Frobenius
    # upper bound, which the identity's Rayleigh score cannot reach at t=1
    dic = RankOneDictionary(3, max_iter=0)
    with pytest.raises(WeaknessCertificationError):
        select_gradient_greedy(dic, np.eye(3).ravel(), 1.0)


# ---------------------------------------------------------------------------
# e-greedy selection


def test_select_e_greedy_exact_fit():
    obj = make_least_squares(np.array([1.0, 0.0]))
    atom, c = select_e_greedy(canonical(), obj, np.zeros(2))
    assert atom == Atom(0, 1)
    assert c == pytest.approx(1.0, abs=1e-8)


def test_select_e_greedy_zero_target():
    obj = make_least_squares(np.zeros(2))
    atom, c = select_e_greedy(canonical(), obj, np.zeros(2))
    assert atom == Atom(0, 1)
    assert c == 0.0


def test_select_e_greedy_three_atom_example():
    # columns e1, e2, (e1+e2)/sqrt(2); for y=(2,1) the line-searched residual
    # 0.5(||y||^2 - <y,g>^2) is minimized by the largest |<y,g>| = 3/sqrt(2)
    cols = np.column_stack([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0] / np.sqrt(2.0)])
    dic = FiniteDictionary(cols)
    obj = make_least_squares(np.array([2.0, 1.0]))
    atom, c = select_e_greedy(dic, obj, np.zeros(2))
    assert atom == Atom(2, 1)
    assert c == pytest.approx(3.0 / np.sqrt(2.0), abs=1e-8)


def test_select_e_greedy_sign_in_coefficient():
    obj = make_least_squares(np.array([-2.0, 0.5]))
    atom, c = select_e_greedy(canonical(), obj, np.zeros(2))
    assert atom == Atom(0, 1)  # positive-sign atom reported
    assert c == pytest.approx(-2.0, abs=1e-8)  # the sign rides on c


def test_select_e_greedy_rejects_rank_one():
    obj = make_least_squares(np.zeros(4))
    with pytest.raises(UnsupportedDictionaryError):
        select_e_greedy(RankOneDictionary(2), obj, np.zeros(4))


def test_select_e_greedy_fixed():
    obj = make_least_squares(np.array([2.0, 1.0]))
    assert select_e_greedy_fixed(canonical(), obj, np.zeros(2), 1.0) == Atom(0, 1)
    neg = make_least_squares(np.array([-2.0, 1.0]))
    assert select_e_greedy_fixed(canonical(), neg, np.zeros(2), 1.0) == Atom(0, -1)
    with pytest.raises(ValueError):
        select_e_greedy_fixed(canonical(), obj, np.zeros(2), 0.0)
    with pytest.raises(UnsupportedDictionaryError):
        select_e_greedy_fixed(
            RankOneDictionary(2), make_least_squares(np.zeros(4)), np.zeros(4), 1.0
        )


# ---------------------------------------------------------------------------
# synthesis mass


def test_synthesis_l1():
    assert synthesis_l1([0.3, -0.2]) == 0.5
    assert synthesis_l1([]) == 0.0
    assert synthesis_l1([1.0]) == 1.0
