import numpy as np
import pytest

from oracles import nnls_on_support, reference_lloyd
from tractsparse.errors import (
    DegenerateAtom,
    EmptyCluster,
    ZeroDegreeRow,
)
from tractsparse.kernel import KernelMatrix
from tractsparse.metrics import adjusted_rand_index
from tractsparse.model import Labeling, SolverConfig
from tractsparse.solvers import (
    Assignment,
    Dictionary,
    FitResult,
    _nnkomp_column,
    default_lambda2,
    gksc_fit,
    hard_labels,
    init_dictionary_from_labels,
    kkm_assign,
    kkm_dictionary,
    kkm_fit,
    ksc_fit,
    mult_update_A,
    nnkomp,
    prune_dictionary,
    random_selection_init,
    reconstruction_cost,
    segment_with_dictionary,
    shrink_l1,
    shrink_l21,
    spectral_embedding,
    spectral_init,
)


def axis_blobs(rng, m=3, per=12, d=4, spread=10.0, sigma=0.5):
    """Clusters on coordinate axes; randomness only in the noise."""
    assert m <= d
    centers = spread * np.eye(d)[:m]
    pts = np.vstack(
        [centers[j] + sigma * rng.normal(size=(per, d)) for j in range(m)]
    )
    labels = np.repeat(np.arange(m), per)
    return pts, labels


def rbf_from_points(x, gamma=0.02):
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=-1)
    vals = np.exp(-gamma * d2)
    vals = (vals + vals.T) / 2.0
    return KernelMatrix(x.shape[0], gamma, 0.0, dense_values=vals)


def linear_kernel(x):
    vals = x @ x.T
    vals = (vals + vals.T) / 2.0
    return KernelMatrix(x.shape[0], 1.0, 0.0, dense_values=vals)


# --- container types -------------------------------------------------------

def test_dictionary_defaults_and_validation():
    d = Dictionary(np.ones((4, 2)))
    assert d.n == 4 and d.m == 2
    assert d.empty.dtype == bool and not d.empty.any()
    with pytest.raises(ValueError):
        Dictionary(np.ones(4))
    with pytest.raises(ValueError):
        Dictionary(np.full((3, 2), np.nan))
    with pytest.raises(ValueError):
        Dictionary(np.ones((3, 2)), empty=np.zeros(3, dtype=bool))


def test_assignment_validation():
    a = Assignment(np.zeros((2, 5)))
    assert a.m == 2 and a.n == 5
    with pytest.raises(ValueError):
        Assignment(np.ones(5))
    with pytest.raises(ValueError):
        Assignment(np.array([[np.inf, 0.0]]))


def test_containers_are_frozen():
    d = Dictionary(np.ones((3, 2)))
    with pytest.raises(ValueError):
        d.a[0, 0] = 5.0
    a = Assignment(np.ones((2, 3)))
    with pytest.raises(ValueError):
        a.w[0, 0] = 5.0


# --- reconstruction cost ---------------------------------------------------

def test_cost_matches_explicit_feature_residual():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(10, 4))
    k = linear_kernel(x)
    a = rng.normal(size=(10, 3))
    w = rng.normal(size=(3, 10))
    # cost is the squared residual of reconstructing the feature columns
    resid = x.T - x.T @ a @ w
    expected = float(np.sum(resid * resid))
    got = reconstruction_cost(k, a, w)
    assert got == pytest.approx(expected, rel=1e-10)


def test_cost_agrees_between_dense_and_factored_forms():
    rng = np.random.default_rng(4)
    g = rng.normal(size=(12, 5))
    dense = KernelMatrix(12, 1.0, 0.0, dense_values=(g @ g.T + (g @ g.T).T) / 2)
    fact = KernelMatrix(12, 1.0, 0.0, factor=g, landmarks=np.arange(5))
    a = np.abs(rng.normal(size=(12, 3)))
    w = np.abs(rng.normal(size=(3, 12)))
    assert reconstruction_cost(dense, a, w) == pytest.approx(
        reconstruction_cost(fact, a, w), rel=1e-10
    )


def test_cost_zero_for_perfect_reconstruction():
    k = KernelMatrix(4, 1.0, 0.0, dense_values=np.ones((4, 4)))
    a = np.zeros((4, 1))
    a[0, 0] = 1.0
    w = np.ones((1, 4))
    assert abs(reconstruction_cost(k, a, w)) < 1e-12


# --- spectral initialization -----------------------------------------------

def test_spectral_init_separates_disconnected_blocks():
    vals = np.zeros((8, 8))
    vals[:4, :4] = 1.0
    vals[4:, 4:] = 1.0
    k = KernelMatrix(8, 1.0, 0.0, dense_values=vals)
    lab = spectral_init(k, 2)
    assert len(set(np.asarray(lab.labels[:4]))) == 1
    assert len(set(np.asarray(lab.labels[4:]))) == 1
    assert lab.labels[0] != lab.labels[4]


def test_spectral_init_recovers_blobs():
    rng = np.random.default_rng(0)
    x, truth = axis_blobs(rng)
    lab = spectral_init(rbf_from_points(x), 3)
    assert adjusted_rand_index(truth, np.asarray(lab.labels)) == 1.0


def test_spectral_init_deterministic():
    rng = np.random.default_rng(1)
    x, _ = axis_blobs(rng)
    k = rbf_from_points(x)
    a = spectral_init(k, 3, seed=7)
    b = spectral_init(k, 3, seed=7)
    assert np.array_equal(a.labels, b.labels)


def test_spectral_init_single_cluster():
    k = KernelMatrix(5, 1.0, 0.0, dense_values=np.eye(5))
    lab = spectral_init(k, 1)
    assert np.array_equal(lab.labels, np.zeros(5))


def test_spectral_embedding_zero_degree_row():
    vals = np.eye(3)
    vals[2, 2] = 0.0
    k = KernelMatrix(3, 1.0, 0.0, dense_values=vals)
    with pytest.raises(ZeroDegreeRow):
        spectral_embedding(k)


def test_spectral_embedding_rows_unit_norm():
    rng = np.random.default_rng(2)
    x, _ = axis_blobs(rng)
    emb = spectral_embedding(rbf_from_points(x))
    assert np.allclose(np.linalg.norm(emb, axis=1), 1.0, atol=1e-12)


# --- dictionary initialization ---------------------------------------------

def test_medoid_init_matches_naive_feature_medoid():
    rng = np.random.default_rng(5)
    x, truth = axis_blobs(rng)
    k = linear_kernel(x)
    d = init_dictionary_from_labels(Labeling(truth, m=3), k)
    for j in range(3):
        members = np.flatnonzero(truth == j)
        sums = [
            sum(float(((x[i] - x[o]) ** 2).sum()) for o in members)
            for i in members
        ]
        expected = members[int(np.argmin(sums))]
        picked = int(np.flatnonzero(d.a[:, j])[0])
        assert picked == expected
        assert d.a[picked, j] == 1.0


def test_medoid_init_is_selection_matrix():
    rng = np.random.default_rng(6)
    x, truth = axis_blobs(rng)
    d = init_dictionary_from_labels(Labeling(truth, m=3), rbf_from_points(x))
    assert np.all((d.a == 0.0) | (d.a == 1.0))
    assert np.array_equal(d.a.sum(axis=0), np.ones(3))


def test_medoid_init_empty_cluster_raises():
    k = KernelMatrix(4, 1.0, 0.0, dense_values=np.eye(4))
    with pytest.raises(EmptyCluster):
        init_dictionary_from_labels(Labeling(np.zeros(4, dtype=int), m=2), k)


def test_random_selection_init():
    k = KernelMatrix(6, 1.0, 0.0, dense_values=np.eye(6))
    d = random_selection_init(k, 3, seed=0)
    assert np.array_equal(d.a, random_selection_init(k, 3, seed=0).a)
    assert np.array_equal(d.a.sum(axis=0), np.ones(3))
    assert np.all(d.a.sum(axis=1) <= 1.0)
    with pytest.raises(ValueError):
        random_selection_init(k, 7)


# --- kernel k-means --------------------------------------------------------

def _flip_some(labels, m, rng, flips=6):
    out = labels.copy()
    idx = rng.choice(labels.size, size=flips, replace=False)
    out[idx] = rng.integers(0, m, size=flips)
    for j in range(m):  # keep every cluster inhabited
        if not np.any(out == j):
            out[np.flatnonzero(labels == j)[0]] = j
    return out


@pytest.mark.parametrize("seed", range(5))
def test_kkm_matches_reference_lloyd(seed):
    rng = np.random.default_rng(seed)
    x, truth = axis_blobs(rng, m=3, per=10, d=6, spread=8.0)
    init = _flip_some(truth, 3, rng)
    res = kkm_fit(linear_kernel(x), SolverConfig(m=3), Labeling(init, m=3))
    expected = reference_lloyd(x, init, 3)
    assert np.array_equal(res.labels.labels, expected)


def test_kkm_cost_monotone_over_seeds():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x, truth = axis_blobs(rng)
        init = _flip_some(truth, 3, rng)
        res = kkm_fit(rbf_from_points(x), SolverConfig(m=3), Labeling(init, m=3))
        trace = np.asarray(res.cost_trace)
        diffs = np.diff(trace)
        assert np.all(diffs <= 1e-10 * np.abs(trace[:-1]))


def test_kkm_labels_are_fixed_point():
    rng = np.random.default_rng(11)
    x, truth = axis_blobs(rng)
    k = rbf_from_points(x)
    res = kkm_fit(k, SolverConfig(m=3), Labeling(_flip_some(truth, 3, rng), m=3))
    assert res.converged
    assert np.array_equal(kkm_assign(k, res.dictionary), res.labels.labels)
    assert not res.unassigned.any()


def test_kkm_scaling_leaves_labels_unchanged():
    rng = np.random.default_rng(12)
    x, truth = axis_blobs(rng)
    k = rbf_from_points(x)
    init = Labeling(_flip_some(truth, 3, rng), m=3)
    base = kkm_fit(k, SolverConfig(m=3), init)
    for c in (0.5, 2.0, 8.0):
        scaled = KernelMatrix(k.n, k.gamma, 0.0, dense_values=c * k.dense())
        res = kkm_fit(scaled, SolverConfig(m=3), init)
        assert np.array_equal(res.labels.labels, base.labels.labels)


def test_kkm_reseeds_empty_cluster():
    rng = np.random.default_rng(13)
    x, _ = axis_blobs(rng, m=2, per=10)
    x = np.vstack([x, 40.0 * np.ones((1, 4))])  # one far outlier
    init = np.r_[np.zeros(10, dtype=int), np.ones(10, dtype=int), 1]
    res = kkm_fit(
        rbf_from_points(x), SolverConfig(m=3), Labeling(init, m=3)
    )
    counts = np.bincount(np.asarray(res.labels.labels), minlength=3)
    assert counts.min() >= 1
    assert res.labels.labels[20] == 2  # outlier ends up owning the spare slot


def test_kkm_rejects_mismatched_init():
    k = KernelMatrix(4, 1.0, 0.0, dense_values=np.eye(4))
    with pytest.raises(ValueError):
        kkm_fit(k, SolverConfig(m=2), Labeling(np.zeros(3, dtype=int), m=2))
    with pytest.raises(ValueError):
        kkm_fit(k, SolverConfig(m=3), Labeling(np.zeros(4, dtype=int), m=2))


def test_kkm_dictionary_is_normalized_indicator():
    w = np.zeros((2, 5))
    w[0, :3] = 1.0
    w[1, 3:] = 1.0
    d = kkm_dictionary(w, ridge=1e-12)
    expected = np.zeros((5, 2))
    expected[:3, 0] = 1.0 / 3.0
    expected[3:, 1] = 1.0 / 2.0
    assert np.allclose(d.a, expected, atol=1e-9)


# --- greedy pursuit --------------------------------------------------------

def test_pursuit_single_atom_matches_nearest_prototype():
    # uniform kernel diagonal makes the ratio rule and the score rule agree
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x, truth = axis_blobs(rng)
        k = rbf_from_points(x)
        d = init_dictionary_from_labels(Labeling(truth, m=3), k)
        expected = kkm_assign(k, d)
        w = np.column_stack([nnkomp(k, d, i, 1) for i in range(k.n)])
        lab, unassigned = hard_labels(w)
        assert not unassigned.any()
        assert np.array_equal(lab.labels, expected)


def test_pursuit_single_atom_weight_formula():
    rng = np.random.default_rng(21)
    x, truth = axis_blobs(rng)
    k = rbf_from_points(x)
    d = init_dictionary_from_labels(Labeling(truth, m=3), k)
    atk = d.a.T @ k.dense()
    atka = atk @ d.a
    for i in (0, 5, 17, 30):
        w = nnkomp(k, d, i, 1)
        j = int(np.argmax(atk[:, i] / np.diagonal(atka)))
        assert np.count_nonzero(w) == 1
        assert w[j] == pytest.approx(
            max(0.0, atk[j, i] / atka[j, j]), rel=1e-12
        )


def test_pursuit_identity_gram_selects_top_entries():
    rng = np.random.default_rng(22)
    q, _ = np.linalg.qr(rng.normal(size=(8, 5)))
    k = KernelMatrix(8, 1.0, 0.0, dense_values=np.eye(8))
    b = q.T @ rng.normal(size=8)
    w = _nnkomp_column(b, q.T @ q, 3, np.zeros(5, dtype=bool))
    pos = np.flatnonzero(b > 0)
    expect_support = set(pos[np.argsort(b[pos])][-3:])
    assert set(np.flatnonzero(w)) == expect_support
    for j in expect_support:
        assert w[j] == pytest.approx(b[j], rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_pursuit_refit_matches_scipy_nnls(seed):
    rng = np.random.default_rng(seed)
    b_mat = rng.normal(size=(6, 3))
    gram = b_mat.T @ b_mat + 0.1 * np.eye(3)
    rhs = rng.normal(size=3)
    w = _nnkomp_column(rhs, gram, 2, np.zeros(3, dtype=bool))
    support = np.flatnonzero(w)
    assert support.size <= 2
    assert np.all(w >= 0.0)
    if support.size:
        expected = nnls_on_support(gram, rhs, support)
        assert np.allclose(w, expected, atol=1e-9)


def test_pursuit_widening_budget_never_hurts():
    rng = np.random.default_rng(23)
    for _ in range(10):
        b_mat = rng.normal(size=(8, 5))
        gram = b_mat.T @ b_mat + 0.1 * np.eye(5)
        rhs = np.abs(rng.normal(size=5))
        none = np.zeros(5, dtype=bool)
        objs = []
        for s in (1, 2, 3):
            w = _nnkomp_column(rhs, gram, s, none)
            objs.append(float(w @ gram @ w - 2.0 * rhs @ w))
        assert objs[1] <= objs[0] + 1e-12
        assert objs[2] <= objs[1] + 1e-12


def test_pursuit_no_positive_correlation_gives_zero():
    gram = np.eye(3)
    w = _nnkomp_column(np.array([-1.0, -0.5, 0.0]), gram, 2, np.zeros(3, bool))
    assert np.array_equal(w, np.zeros(3))


def test_pursuit_skips_excluded_atoms():
    gram = np.eye(3)
    rhs = np.array([5.0, 1.0, 0.5])
    excluded = np.array([True, False, False])
    w = _nnkomp_column(rhs, gram, 1, excluded)
    assert np.flatnonzero(w).tolist() == [1]


def test_pursuit_degenerate_atom_raises():
    gram = np.zeros((2, 2))
    with pytest.raises(DegenerateAtom):
        _nnkomp_column(np.array([1.0, 1.0]), gram, 1, np.zeros(2, bool))


def test_pursuit_rejects_bad_budget():
    k = KernelMatrix(2, 1.0, 0.0, dense_values=np.eye(2))
    with pytest.raises(ValueError):
        nnkomp(k, np.eye(2), 0, 0)


# --- multiplicative dictionary refinement ----------------------------------

def test_mult_update_stationary_at_least_squares_optimum():
    rng = np.random.default_rng(30)
    x, truth = axis_blobs(rng)
    k = rbf_from_points(x)
    w = np.zeros((3, k.n))
    w[truth, np.arange(k.n)] = 1.0
    a = kkm_dictionary(w, ridge=1e-12)
    before = reconstruction_cost(k, a.a, w)
    out = mult_update_A(k, w, a)
    after = reconstruction_cost(k, out.a, w)
    assert np.allclose(out.a, a.a, rtol=1e-6, atol=1e-12)
    assert after <= before + 1e-10 * abs(before)


def test_mult_update_cost_monotone_per_step():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x, _ = axis_blobs(rng, m=3, per=8)
        k = rbf_from_points(x)
        w = np.abs(rng.normal(size=(4, k.n)))
        a = Dictionary(np.abs(rng.normal(size=(k.n, 4))))
        costs = [reconstruction_cost(k, a.a, w)]
        for _ in range(12):
            a = mult_update_A(k, w, a, inner_tol=0.0, max_inner=1)
            costs.append(reconstruction_cost(k, a.a, w))
        diffs = np.diff(costs)
        assert np.all(diffs <= 1e-10 * np.maximum(np.abs(costs[:-1]), 1.0))


def test_mult_update_zeros_stay_zero():
    rng = np.random.default_rng(31)
    x, _ = axis_blobs(rng, m=2, per=6)
    k = rbf_from_points(x)
    a0 = np.abs(rng.normal(size=(k.n, 2)))
    a0[::2, 0] = 0.0
    w = np.abs(rng.normal(size=(2, k.n)))
    out = mult_update_A(k, w, Dictionary(a0), max_inner=10)
    assert np.all(out.a[::2, 0] == 0.0)


def test_mult_update_keeps_empty_flags():
    k = KernelMatrix(4, 1.0, 0.0, dense_values=np.eye(4))
    a = Dictionary(np.ones((4, 2)), empty=np.array([False, True]))
    out = mult_update_A(k, np.ones((2, 4)), a, max_inner=2)
    assert out.empty.tolist() == [False, True]


# --- pruning and hard labels -----------------------------------------------

def test_prune_zeroes_small_entries_only():
    a = np.array([[1.0, 0.3], [1e-9, 0.3], [5e-6, 0.0]])
    out = prune_dictionary(a, threshold_rel=1e-6)
    assert out.a[0, 0] == 1.0
    assert out.a[1, 0] == 0.0  # below 1e-6 of the column max
    assert out.a[2, 0] == 5e-6
    assert not out.empty.any()


def test_prune_flags_empty_columns_and_keeps_old_flags():
    a = Dictionary(
        np.array([[0.0, 1.0, 2.0], [0.0, 1.0, 0.5]]),
        empty=np.array([False, True, False]),
    )
    out = prune_dictionary(a)
    assert out.empty.tolist() == [True, True, False]


def test_hard_labels_one_hot_and_ties():
    w = np.array([[1.0, 0.2, 0.0], [0.0, 0.2, 0.0]])
    lab, unassigned = hard_labels(w)
    assert lab.labels.tolist() == [0, 0, 0]
    assert unassigned.tolist() == [False, False, True]


def test_hard_labels_respects_exclusions():
    w = np.array([[5.0, 5.0], [1.0, 1.0]])
    lab, unassigned = hard_labels(w, exclude=np.array([True, False]))
    assert lab.labels.tolist() == [1, 1]
    assert not unassigned.any()


# --- shrinkage operators ---------------------------------------------------

def test_shrink_l1_examples():
    assert shrink_l1(np.array([-3.0]), 1.0)[0] == 0.0
    assert shrink_l1(np.array([5.0]), 2.0)[0] == 3.0
    x = np.abs(np.random.default_rng(0).normal(size=(3, 4)))
    assert np.array_equal(shrink_l1(x, 0.0), x)
    with pytest.raises(ValueError):
        shrink_l1(x, -1.0)


def test_shrink_l21_row_norms():
    z = np.array([[3.0, 4.0], [0.1, 0.0], [0.0, 0.0]])
    out = shrink_l21(z, 2.0)
    assert np.allclose(out[0], [1.8, 2.4], atol=1e-12)  # norm 5 -> 3
    assert np.array_equal(out[1], [0.0, 0.0])  # norm below tau
    assert np.array_equal(out[2], [0.0, 0.0])  # zero row guarded
    assert np.array_equal(shrink_l21(z, 0.0), z)
    with pytest.raises(ValueError):
        shrink_l21(z, -0.5)


# --- sparse solver ---------------------------------------------------------

def test_ksc_recovers_separated_blobs():
    rng = np.random.default_rng(40)
    x, truth = axis_blobs(rng)
    k = rbf_from_points(x)
    cfg = SolverConfig(m=3, s_max=2)
    res = ksc_fit(k, cfg, spectral_init(k, 3))
    assert res.converged
    assert adjusted_rand_index(truth, np.asarray(res.labels.labels)) == 1.0
    w = res.assignment.w
    assert np.all(w >= 0.0)
    assert np.all((w != 0).sum(axis=0) <= cfg.s_max)
    assert not res.unassigned.any()


def test_ksc_identical_streamlines_reconstruct_exactly():
    n = 8
    k = KernelMatrix(n, 1.0, 0.0, dense_values=np.ones((n, n)))
    init = Labeling(np.arange(n) % 2, m=2)
    res = ksc_fit(k, SolverConfig(m=2, s_max=2), init)
    assert abs(res.cost_trace[-1]) < 1e-9
    assert len(set(np.asarray(res.labels.labels))) == 1
    assert not res.unassigned.any()


def test_ksc_bitwise_deterministic():
    rng = np.random.default_rng(41)
    x, _ = axis_blobs(rng)
    k = rbf_from_points(x)
    init = spectral_init(k, 3)
    r1 = ksc_fit(k, SolverConfig(m=3), init)
    r2 = ksc_fit(k, SolverConfig(m=3), init)
    assert np.array_equal(r1.assignment.w, r2.assignment.w)
    assert np.array_equal(r1.dictionary.a, r2.dictionary.a)
    assert r1.cost_trace == r2.cost_trace


# --- ADMM solver -----------------------------------------------------------

def _floor_kernel(x, gamma=0.02, floor=0.5):
    """RBF similarity mixed with a constant floor; entries stay >= floor."""
    base = rbf_from_points(x, gamma).dense()
    vals = floor + (1.0 - floor) * base
    return KernelMatrix(x.shape[0], gamma, 0.0, dense_values=(vals + vals.T) / 2)


def test_gksc_large_mu_matches_ridge_solution():
    rng = np.random.default_rng(50)
    x, truth = axis_blobs(rng, m=3, per=8)
    k = _floor_kernel(x)
    init = Labeling(truth, m=3)
    d = init_dictionary_from_labels(init, k)
    atk = d.a.T @ k.dense()
    atka = (atk @ d.a + (atk @ d.a).T) / 2
    mu = 50.0
    from tractsparse.linalg import ridge_solve

    w_ridge = ridge_solve(atka, atk, ridge=mu)
    assert np.all(w_ridge >= 0.0)  # precondition for the exact-match claim
    cfg = SolverConfig(m=3, lambda1=0.0, lambda2=0.0, mu=mu, t_outer=1)
    res = gksc_fit(k, cfg, init)
    assert res.primal_residual_trace[0] < cfg.eps_primal
    assert np.array_equal(res.assignment.w, w_ridge)


def test_gksc_final_assignment_nonnegative_and_traced():
    rng = np.random.default_rng(51)
    x, truth = axis_blobs(rng)
    k = rbf_from_points(x)
    res = gksc_fit(k, SolverConfig(m=3, t_outer=5), Labeling(truth, m=3))
    assert np.all(res.assignment.w >= 0.0)
    assert len(res.primal_residual_trace) == len(res.cost_trace)
    assert len(res.cost_trace) == res.iterations


def test_gksc_recovers_blobs_with_default_weights():
    rng = np.random.default_rng(52)
    x, truth = axis_blobs(rng)
    k = rbf_from_points(x)
    res = gksc_fit(k, SolverConfig(m=3), spectral_init(k, 3))
    got = np.asarray(res.labels.labels)[~res.unassigned]
    want = truth[~res.unassigned]
    assert res.unassigned.mean() < 0.1
    assert adjusted_rand_index(want, got) == 1.0


def test_gksc_huge_group_weight_dissolves_everything():
    rng = np.random.default_rng(53)
    x, truth = axis_blobs(rng, m=2, per=8)
    k = rbf_from_points(x)
    cfg = SolverConfig(m=2, lambda2=1e6, t_outer=3)
    res = gksc_fit(k, cfg, Labeling(truth, m=2))
    assert res.unassigned.all()
    assert np.all(res.assignment.w == 0.0)
    assert res.dictionary.empty.all()


def test_gksc_sparsity_increases_with_l1_weight():
    rng = np.random.default_rng(54)
    x, truth = axis_blobs(rng, m=3, per=10)
    k = rbf_from_points(x)
    init = Labeling(truth, m=3)
    mean_nnz = []
    for lam1 in (0.0, 0.001, 0.01, 0.1, 0.5):
        cfg = SolverConfig(m=3, lambda1=lam1, lambda2=0.0, t_outer=3)
        res = gksc_fit(k, cfg, init)
        mean_nnz.append((res.assignment.w != 0).sum(axis=0).mean())
    assert all(b <= a + 1e-12 for a, b in zip(mean_nnz, mean_nnz[1:]))


def test_gksc_bitwise_deterministic():
    rng = np.random.default_rng(55)
    x, truth = axis_blobs(rng)
    k = rbf_from_points(x)
    init = Labeling(truth, m=3)
    r1 = gksc_fit(k, SolverConfig(m=3, t_outer=4), init)
    r2 = gksc_fit(k, SolverConfig(m=3, t_outer=4), init)
    assert np.array_equal(r1.assignment.w, r2.assignment.w)
    assert np.array_equal(r1.dictionary.a, r2.dictionary.a)
    assert r1.cost_trace == r2.cost_trace
    assert r1.primal_residual_trace == r2.primal_residual_trace


def test_gksc_budget_exhaustion_is_not_fatal():
    rng = np.random.default_rng(56)
    x, truth = axis_blobs(rng, m=2, per=6)
    k = rbf_from_points(x)
    cfg = SolverConfig(m=2, t_outer=1, t_inner=1)
    res = gksc_fit(k, cfg, Labeling(truth, m=2))
    assert isinstance(res, FitResult)
    assert not res.converged


def test_default_group_weight_scales_with_row_length():
    assert default_lambda2(0.01, 400, 4) == pytest.approx(
        2.0 * default_lambda2(0.01, 100, 4)
    )
    assert default_lambda2(0.02, 100, 4) == pytest.approx(
        2.0 * default_lambda2(0.01, 100, 4)
    )


# --- ADMM solver, graph-smoothed variant -----------------------------------

def _chain_laplacian(n, groups):
    """Path-graph Laplacian within each index group."""
    adj = np.zeros((n, n))
    for g in groups:
        for a, b in zip(g, g[1:]):
            adj[a, b] = adj[b, a] = 1.0
    return np.diag(adj.sum(axis=1)) - adj


def test_gksc_manifold_recovers_blobs():
    rng = np.random.default_rng(60)
    x, truth = axis_blobs(rng, m=2, per=10)
    k = rbf_from_points(x)
    lap = _chain_laplacian(k.n, [range(10), range(10, 20)])
    cfg = SolverConfig(m=2, lambda_l=0.05)
    res = gksc_fit(k, cfg, Labeling(truth, m=2), laplacian=lap)
    got = np.asarray(res.labels.labels)[~res.unassigned]
    assert adjusted_rand_index(truth[~res.unassigned], got) == 1.0


def test_gksc_manifold_ignores_group_weight():
    rng = np.random.default_rng(61)
    x, truth = axis_blobs(rng, m=2, per=8)
    k = rbf_from_points(x)
    lap = _chain_laplacian(k.n, [range(8), range(8, 16)])
    cfg = SolverConfig(m=2, lambda_l=0.05, lambda2=1e9, t_outer=3)
    res = gksc_fit(k, cfg, Labeling(truth, m=2), laplacian=lap)
    assert not res.dictionary.empty.any()  # nothing dissolved
    assert not res.unassigned.all()


def test_gksc_manifold_requires_positive_weight():
    k = KernelMatrix(4, 1.0, 0.0, dense_values=np.eye(4) + 0.1)
    lap = _chain_laplacian(4, [range(4)])
    with pytest.raises(ValueError):
        gksc_fit(k, SolverConfig(m=2), Labeling(np.r_[0, 0, 1, 1], m=2), laplacian=lap)
    with pytest.raises(ValueError):
        gksc_fit(
            k,
            SolverConfig(m=2, lambda_l=0.1),
            Labeling(np.r_[0, 0, 1, 1], m=2),
            laplacian=np.eye(3),
        )


def test_gksc_manifold_bitwise_deterministic():
    rng = np.random.default_rng(62)
    x, truth = axis_blobs(rng, m=2, per=8)
    k = rbf_from_points(x)
    lap = _chain_laplacian(k.n, [range(8), range(8, 16)])
    cfg = SolverConfig(m=2, lambda_l=0.05, t_outer=3)
    r1 = gksc_fit(k, cfg, Labeling(truth, m=2), laplacian=lap)
    r2 = gksc_fit(k, cfg, Labeling(truth, m=2), laplacian=lap)
    assert np.array_equal(r1.assignment.w, r2.assignment.w)
    assert r1.cost_trace == r2.cost_trace


# --- segmentation against a fitted dictionary ------------------------------

def test_segment_training_columns_reproduces_training_labels():
    rng = np.random.default_rng(70)
    x, truth = axis_blobs(rng)
    k = rbf_from_points(x)
    res = ksc_fit(k, SolverConfig(m=3, s_max=2), spectral_init(k, 3))
    # unshifted cross-kernel of the training set against itself is just K
    _, lab, unassigned = segment_with_dictionary(
        k, res.dictionary, k.dense(), s_max=2
    )
    assert np.array_equal(lab.labels, res.labels.labels)
    assert np.array_equal(unassigned, res.unassigned)


def test_segment_medoid_column_gets_dominant_weight():
    rng = np.random.default_rng(71)
    x, truth = axis_blobs(rng)
    k = rbf_from_points(x)
    d = init_dictionary_from_labels(Labeling(truth, m=3), k)
    medoid = int(np.flatnonzero(d.a[:, 1])[0])
    w, lab, unassigned = segment_with_dictionary(
        k, d, k.dense()[:, [medoid]], s_max=3
    )
    assert lab.labels[0] == 1
    assert not unassigned[0]
    assert int(np.argmax(w.w[:, 0])) == 1


def test_segment_rejects_wrong_row_count():
    k = KernelMatrix(4, 1.0, 0.0, dense_values=np.eye(4) + 0.1)
    with pytest.raises(ValueError):
        segment_with_dictionary(k, np.ones((3, 2)), np.ones((4, 1)), 1)
