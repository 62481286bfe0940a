import numpy as np
import pytest

from lrhte.numerics import (
    LinearModel,
    RngStream,
    SingularSystemError,
    als_complete,
    mat_mul,
    ridge_fit,
    ridge_fit_multi,
    rng_draws,
    singular_values,
)


# ---------------------------------------------------------------------------
# random stream
# ---------------------------------------------------------------------------

def test_same_seed_same_sequence():
    for kind in ("std_normal", "uniform01", "bernoulli"):
        a = rng_draws(RngStream(7), kind, 50)
        b = rng_draws(RngStream(7), kind, 50)
        assert np.array_equal(a, b)


def test_draws_depend_on_call_order():
    s = RngStream(7)
    first = s.std_normal(10)
    second = s.std_normal(10)
    assert not np.array_equal(first, second)


def test_bernoulli_zero_prob_all_zero():
    assert np.array_equal(rng_draws(RngStream(1), "bernoulli", 10, p=0.0), np.zeros(10))


def test_bernoulli_half_concentrates():
    # binomial: sd of the mean at n=100000 is ~0.0016, so 0.01 is > 6 sigma
    mean = RngStream(3).bernoulli(0.5, 100000).mean()
    assert abs(mean - 0.5) < 0.01


def test_uniform_open_interval():
    u = RngStream(11).uniform01(100000)
    assert u.min() > 0.0 and u.max() < 1.0


def test_normal_moments():
    z = RngStream(5).std_normal(200000)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01


def test_child_streams_differ():
    root = RngStream(9)
    a = root.child(0).std_normal(20)
    b = root.child(1).std_normal(20)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, RngStream(9).child(0).std_normal(20))


def test_permutation_is_permutation():
    p = RngStream(2).permutation(500)
    assert np.array_equal(np.sort(p), np.arange(500))


# ---------------------------------------------------------------------------
# mat_mul
# ---------------------------------------------------------------------------

def test_mat_mul_identity():
    m = RngStream(1).std_normal(12).reshape(3, 4)
    assert np.array_equal(mat_mul(np.eye(3), m), m)


def test_mat_mul_zero():
    m = RngStream(2).std_normal(12).reshape(3, 4)
    assert np.array_equal(mat_mul(np.zeros((2, 3)), m), np.zeros((2, 4)))


def test_mat_mul_hand_case():
    # [[1,2],[3,4]] @ [[5],[6]]: rows are 1*5+2*6=17 and 3*5+4*6=39
    out = mat_mul([[1, 2], [3, 4]], [[5], [6]])
    assert np.array_equal(out, [[17], [39]])


def test_mat_mul_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        mat_mul(np.ones((2, 3)), np.ones((2, 3)))


def test_mat_mul_rejects_nonfinite():
    with pytest.raises(ValueError, match="finite"):
        mat_mul([[np.nan]], [[1.0]])


# ---------------------------------------------------------------------------
# ridge_fit
# ---------------------------------------------------------------------------

def test_ridge_exact_line():
    x = np.arange(1.0, 6.0)[:, None]
    fit = ridge_fit(x, 2.0 * x[:, 0], lam=0.0)
    assert abs(fit.coef[0] - 2.0) < 1e-12
    assert abs(fit.intercept) < 1e-12
    resid = fit.predict(x) - 2.0 * x[:, 0]
    assert np.max(np.abs(resid)) < 1e-9


def test_ridge_constant_target():
    x = RngStream(4).std_normal(40).reshape(10, 4)
    for lam in (0.0, 0.5, 10.0):
        fit = ridge_fit(x, np.full(10, 3.25), lam=lam)
        assert np.max(np.abs(fit.coef)) < 1e-8
        assert abs(fit.intercept - 3.25) < 1e-8


def test_ridge_matches_normal_equations_oracle():
    # direct (X'X + lam*I)^-1 X'y solve with an unpenalized intercept column
    s = RngStream(8)
    x = s.std_normal(9).reshape(3, 3)
    y = s.std_normal(3)
    lam = 0.1
    design = np.concatenate([x, np.ones((3, 1))], axis=1)
    penalty = np.diag([lam, lam, lam, 0.0])
    beta = np.linalg.inv(design.T @ design + penalty) @ design.T @ y
    fit = ridge_fit(x, y, lam=lam)
    assert np.allclose(fit.coef, beta[:3], atol=1e-10)
    assert abs(fit.intercept - beta[3]) < 1e-10


def test_ridge_singular_raises():
    x = np.ones((5, 3))  # collinear with the intercept
    with pytest.raises(SingularSystemError):
        ridge_fit(x, np.arange(5.0), lam=0.0)


def test_ridge_singular_ok_with_reg():
    fit = ridge_fit(np.ones((5, 3)), np.arange(5.0), lam=1e-6)
    assert np.all(np.isfinite(fit.coef))


def test_ridge_multi_matches_single():
    s = RngStream(15)
    x = s.std_normal(40).reshape(10, 4)
    y = s.std_normal(30).reshape(10, 3)
    coef, intercepts = ridge_fit_multi(x, y, lam=0.3)
    for c in range(3):
        single = ridge_fit(x, y[:, c], lam=0.3)
        assert np.allclose(coef[:, c], single.coef, atol=1e-12)
        assert abs(intercepts[c] - single.intercept) < 1e-12


def test_linear_model_predict_shapes():
    model = LinearModel(coef=np.array([1.0, -1.0]), intercept=0.5)
    assert model.predict(np.array([2.0, 1.0])) == pytest.approx(1.5)
    out = model.predict(np.array([[2.0, 1.0], [0.0, 0.0]]))
    assert np.allclose(out, [1.5, 0.5])


# ---------------------------------------------------------------------------
# singular values
# ---------------------------------------------------------------------------

def _jacobi_eigvals(sym, sweeps=50):
    # brute-force two-sided Jacobi eigensolver, independent of the
    # one-sided implementation under test
    a = sym.copy()
    n = a.shape[0]
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off = max(off, abs(a[p, q]))
                if abs(a[p, q]) < 1e-14:
                    continue
                theta = 0.5 * np.arctan2(2.0 * a[p, q], a[q, q] - a[p, p])
                c, s = np.cos(theta), np.sin(theta)
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
        if off < 1e-14:
            break
    return np.sort(np.diag(a))[::-1]


def test_singular_values_identity():
    assert np.allclose(singular_values(np.eye(3), 3), [1, 1, 1], atol=1e-12)


def test_singular_values_diagonal():
    assert np.allclose(singular_values(np.diag([3.0, 2.0, 1.0]), 2), [3, 2], atol=1e-12)


def test_singular_values_match_gram_eigen_oracle():
    m = RngStream(21).std_normal(24).reshape(6, 4)
    sv = singular_values(m, 4)
    oracle = np.sqrt(np.maximum(_jacobi_eigvals(m.T @ m), 0.0))
    assert np.max(np.abs(sv - oracle) / oracle) < 1e-8


def test_singular_values_permutation_invariant():
    s = RngStream(22)
    m = s.std_normal(35).reshape(7, 5)
    perm_r = RngStream(23).permutation(7)
    perm_c = RngStream(24).permutation(5)
    sv1 = singular_values(m, 5)
    sv2 = singular_values(m[perm_r][:, perm_c], 5)
    assert np.allclose(sv1, sv2, rtol=1e-10)


def test_singular_values_wide_matrix():
    m = RngStream(25).std_normal(40).reshape(4, 10)
    ref = np.linalg.svd(m, compute_uv=False)
    assert np.max(np.abs(singular_values(m, 4) - ref) / ref) < 1e-8


def test_singular_values_zero_matrix():
    assert np.array_equal(singular_values(np.zeros((4, 3)), 3), np.zeros(3))


def test_singular_values_k_out_of_range():
    with pytest.raises(ValueError, match="out of range"):
        singular_values(np.eye(3), 4)


# ---------------------------------------------------------------------------
# matrix completion
# ---------------------------------------------------------------------------

def test_als_full_rank_one():
    s = RngStream(31)
    m = np.outer(s.std_normal(30), s.std_normal(12))
    completed = als_complete(m, np.ones_like(m, dtype=bool), rank=1, stream=RngStream(1))
    assert np.linalg.norm(completed - m) / np.linalg.norm(m) < 1e-6


def test_als_recovers_masked_entries():
    s = RngStream(32)
    m = np.outer(s.std_normal(40), s.std_normal(25))
    mask = RngStream(33).uniform01(1000).reshape(40, 25) > 0.2
    completed = als_complete(m, mask, rank=1, reg=1e-8, iters=40, stream=RngStream(2))
    hidden = ~mask
    rel = np.linalg.norm((completed - m)[hidden]) / np.linalg.norm(m[hidden])
    assert rel < 1e-3


def test_als_zero_matrix():
    out = als_complete(np.zeros((6, 5)), np.ones((6, 5), dtype=bool), rank=2, stream=RngStream(3))
    assert np.allclose(out, 0.0, atol=1e-12)


def test_als_observed_loss_monotone():
    s = RngStream(34)
    low = s.std_normal(60).reshape(30, 2) @ s.std_normal(30).reshape(2, 15)
    noisy = low + 0.05 * s.std_normal(450).reshape(30, 15)
    mask = RngStream(35).uniform01(450).reshape(30, 15) > 0.3
    _, trace = als_complete(noisy, mask, rank=2, iters=25, stream=RngStream(4), with_trace=True)
    for prev, cur in zip(trace, trace[1:]):
        assert cur <= prev + 1e-12


def test_als_empty_row_rejected():
    m = np.ones((4, 4))
    mask = np.ones((4, 4), dtype=bool)
    mask[2, :] = False
    with pytest.raises(ValueError, match="row 2"):
        als_complete(m, mask, rank=1)


def test_als_empty_column_rejected():
    m = np.ones((4, 4))
    mask = np.ones((4, 4), dtype=bool)
    mask[:, 1] = False
    with pytest.raises(ValueError, match="column 1"):
        als_complete(m, mask, rank=1)


def test_als_deterministic():
    s = RngStream(36)
    m = np.outer(s.std_normal(20), s.std_normal(10)) + 0.1 * s.std_normal(200).reshape(20, 10)
    mask = RngStream(37).uniform01(200).reshape(20, 10) > 0.25
    a = als_complete(m, mask, rank=2, stream=RngStream(5))
    b = als_complete(m, mask, rank=2, stream=RngStream(5))
    assert np.array_equal(a, b)
