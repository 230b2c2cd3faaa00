import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffusionrec.algorithms import REFERENCE_COEFFS, AlgorithmSpec, Kind, item_lambdas, per_item_lambda
from diffusionrec.diffusion import (USER_BLOCK, Propagator, recommend_all, score_all, score_user, top_l,
                                    transfer_matrix)
from diffusionrec.graph import build_graph
from diffusionrec.oracle import dense_transform_matrix

from conftest import random_graph


def specs_for(g):
    return [AlgorithmSpec.pbs(), AlgorithmSpec.hts(), AlgorithmSpec.hhp(0.3),
            AlgorithmSpec.ohhp(1.0, g), AlgorithmSpec.dcb(REFERENCE_COEFFS["movielens"], g)]


def test_toy_pbs_values(toy):
    f = score_user(toy, 0, AlgorithmSpec.pbs())
    np.testing.assert_allclose(f, [0.75, 1.0, 0.25], rtol=1e-15)
    rec = top_l(f, toy.items_of_user(0), 1)
    assert rec.items.tolist() == [2]


def test_toy_hts_values(toy):
    f = score_user(toy, 0, AlgorithmSpec.hts())
    np.testing.assert_allclose(f, [1.0, 0.75, 0.5], rtol=1e-15)


@pytest.mark.parametrize("make", [
    AlgorithmSpec.pbs, AlgorithmSpec.hts, lambda: AlgorithmSpec.hhp(0.5),
])
def test_toy_three_routes_agree(toy, make):
    spec = make()
    W = dense_transform_matrix(toy, spec)
    F = Propagator(toy, spec).scores([0, 1])
    for u in range(2):
        expected = W @ toy.dense()[u]
        np.testing.assert_allclose(score_user(toy, u, spec), expected, rtol=1e-12)
        np.testing.assert_allclose(F[u], expected, rtol=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_sparse_matrix_matches_oracle(seed):
    g = random_graph(seed)
    if g.positive_item_degree_bounds()[0] == g.positive_item_degree_bounds()[1]:
        pytest.skip("regular graph has no degree range for OHHP/DCB")
    for spec in specs_for(g):
        np.testing.assert_allclose(transfer_matrix(g, spec).toarray(),
                                   dense_transform_matrix(g, spec), rtol=1e-10, atol=1e-15)


def test_pbs_conserves_and_hts_averages():
    g = random_graph(11, 25, 25)
    F_pbs = score_all(g, AlgorithmSpec.pbs())
    np.testing.assert_allclose(F_pbs.sum(axis=1), g.user_degree, rtol=1e-12)
    W_hts = transfer_matrix(g, AlgorithmSpec.hts()).toarray()
    rows = W_hts.sum(axis=1)
    np.testing.assert_allclose(rows[g.item_degree > 0], 1.0, rtol=1e-12)


def test_zero_degree_user_scores_zero():
    g = build_graph([(0, 0), (0, 1)], 2, 2)
    assert not score_user(g, 1, AlgorithmSpec.pbs()).any()
    lists = recommend_all(g, AlgorithmSpec.pbs(), 5)
    assert len(lists[1]) == 0


@pytest.mark.parametrize("f, collected, L, expected", [
    ([0.2, 0.5, 0.5], [], 2, [1, 2]),
    ([0.2, 0.5, 0.5], [0, 1, 2], 3, []),
    ([0.0, 0.0, 0.0, 1.0], [3], 10, [0, 1, 2]),
    ([3.0, 1.0, 2.0], [0], 1, [2]),
])
def test_top_l(f, collected, L, expected):
    assert top_l(np.array(f), np.array(collected, dtype=int), L).items.tolist() == expected


def test_top_l_rejects_zero_length():
    with pytest.raises(ValueError):
        top_l(np.ones(3), [], 0)


@given(st.lists(st.sampled_from([0.0, 0.25, 0.5, 1.0]), min_size=1, max_size=25), st.integers(1, 30))
@settings(max_examples=80, deadline=None)
def test_top_l_order(scores, L):
    f = np.array(scores)
    rec = top_l(f, np.zeros(0, dtype=int), L)
    assert len(rec) == min(L, f.size)
    keys = [(-f[i], i) for i in rec.items]
    assert keys == sorted(keys)
    # nothing left out beats the last entry
    rest = set(range(f.size)) - set(rec.items.tolist())
    if rest and len(rec):
        assert all((-f[i], i) > keys[-1] for i in rest)


def test_recommend_all_independent_of_workers():
    rng = np.random.default_rng(4)
    links = np.column_stack([rng.integers(0, 3 * USER_BLOCK, 4000), rng.integers(0, 200, 4000)])
    g = build_graph(links, 3 * USER_BLOCK, 200)
    spec = AlgorithmSpec.dcb(REFERENCE_COEFFS["movielens"], g)
    one = recommend_all(g, spec, 20)
    many = recommend_all(g, spec, 20, workers=3)
    for a, b in zip(one, many):
        assert a.user == b.user
        assert a.items.tobytes() == b.items.tobytes()
        assert a.scores.tobytes() == b.scores.tobytes()


def test_user_subset_and_order_invariance():
    g = random_graph(5, 30, 30)
    spec = AlgorithmSpec.hhp(0.4)
    prop = Propagator(g, spec)
    full = prop.scores(np.arange(g.m))
    perm = np.random.default_rng(0).permutation(g.m)
    np.testing.assert_array_equal(prop.scores(perm), full[perm])


def test_quantized_lambda_close():
    g = random_graph(3, 30, 30)
    spec = AlgorithmSpec.dcb(REFERENCE_COEFFS["movielens"], g)
    exact = Propagator(g, spec).scores(np.arange(g.m))
    quant = Propagator(g, spec, quantize=True).scores(np.arange(g.m))
    scale = np.abs(exact).max()
    assert np.abs(quant - exact).max() <= 1e-3 * scale


# --- algorithm descriptors ---------------------------------------------------


def test_spec_parameter_validation(toy):
    with pytest.raises(ValueError):
        AlgorithmSpec(Kind.HHP)
    with pytest.raises(ValueError):
        AlgorithmSpec(Kind.PBS, lam=0.5)
    with pytest.raises(ValueError):
        AlgorithmSpec.hhp(1.5)
    with pytest.raises(ValueError):
        AlgorithmSpec(Kind.OHHP, gamma=-1.0, k_min=1, k_max=3)
    with pytest.raises(ValueError):
        AlgorithmSpec.dcb((1, 2, 3, 4), k_min=3, k_max=3)
    spec = AlgorithmSpec.ohhp(2.0, toy)
    assert AlgorithmSpec.from_dict(spec.to_dict()) == spec


def test_ohhp_hottest_item_is_pbs():
    spec = AlgorithmSpec(Kind.OHHP, gamma=1.7, k_min=1, k_max=40)
    assert per_item_lambda(spec, 40) == 1.0


@pytest.mark.parametrize("k, expected, tol", [(1, 0.03, 1e-6), (101, 0.984, 0.01)])
def test_dcb_reference_curve_endpoints(k, expected, tol):
    spec = AlgorithmSpec.dcb(REFERENCE_COEFFS["movielens"], k_min=1, k_max=101)
    assert per_item_lambda(spec, k) == pytest.approx(expected, abs=tol)


@given(st.floats(-5, 5), st.floats(-20, 20), st.floats(-5, 5), st.floats(-20, 20))
@settings(max_examples=60)
def test_item_lambdas_clamped(a, b, c, d):
    spec = AlgorithmSpec.dcb((a, b, c, d), k_min=1, k_max=50)
    lam = item_lambdas(spec, np.arange(0, 60))
    assert np.all((lam >= 0) & (lam <= 1))


def test_toy_half_lambda_matrix_by_hand(toy):
    r = 0.5 / np.sqrt(2)
    expected = np.array([[0.5, r, 0.0],
                         [r, 0.5, r],
                         [0.0, r, 0.5]])
    np.testing.assert_allclose(transfer_matrix(toy, AlgorithmSpec.hhp(0.5)).toarray(), expected, rtol=1e-15)


@given(st.integers(0, 5000), st.floats(0, 1))
@settings(max_examples=40, deadline=None)
def test_transfer_matrix_support_and_sign(seed, lam):
    g = random_graph(seed, 15, 15)
    W = transfer_matrix(g, AlgorithmSpec.hhp(lam)).toarray()
    shares_user = (g.dense().T @ g.dense()) > 0
    assert np.all(W >= 0)
    assert not W[~shares_user].any()
    cols = W.sum(axis=0)
    if lam == 1.0:
        np.testing.assert_allclose(cols[g.item_degree > 0], 1.0, rtol=1e-12)
