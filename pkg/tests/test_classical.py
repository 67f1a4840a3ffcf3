import warnings

import numpy as np
import pytest

from hacd import classical
from hacd.classical import (
    StatModel,
    ce_transform,
    detect_cc,
    detect_ce,
    detect_diff_rx,
    detect_sacd,
    detect_sdhacd,
    fit_statistics,
    hyperbolic_scores,
    mahalanobis,
    run_detector,
    usfa,
)
from hacd.errors import ConditioningError, ShapeError
from hacd.scene import SceneSpec, generate_scene

from oracles import two_pass_cov


def cubes(rng, h=12, w=12, c=4, mix=0.6):
    a = rng.standard_normal((h, w, c))
    b = mix * a + rng.standard_normal((h, w, c))
    return a, b


@pytest.fixture(scope="module")
def scene():
    return generate_scene(SceneSpec(seed=7))


# -- statistics

def test_statistics_match_two_pass_oracle(rng):
    a, b = cubes(rng, 16, 16, 3)
    st = fit_statistics(a, b)
    p1, p2 = a.reshape(-1, 3), b.reshape(-1, 3)
    m1, m2, c12 = two_pass_cov(p1, p2)
    _, _, c11 = two_pass_cov(p1, p1)
    _, _, c22 = two_pass_cov(p2, p2)
    _, _, cd = two_pass_cov(p2 - p1, p2 - p1)
    for got, want in [(st.mu1, m1), (st.mu2, m2), (st.C11, c11), (st.C22, c22), (st.C12, c12), (st.Cd, cd)]:
        np.testing.assert_allclose(got, want, atol=1e-10)
    cz = st.Cz
    np.testing.assert_array_equal(cz[:3, :3], st.C11)
    np.testing.assert_array_equal(cz[3:, 3:], st.C22)
    np.testing.assert_array_equal(cz[:3, 3:], st.C12)
    assert np.abs(cz - cz.T).max() < 1e-10
    assert st.pixel_count == 256


def test_identical_cubes_statistics(rng):
    a, _ = cubes(rng)
    st = fit_statistics(a, a.copy())
    np.testing.assert_allclose(st.C12, st.C11, atol=1e-14)
    assert np.abs(st.Cd).max() == 0.0


def test_two_pixel_one_band():
    x = np.array([0.0, 2.0]).reshape(1, 2, 1)
    st = fit_statistics(x, x)
    assert st.mu1[0] == 1.0
    assert st.C11[0, 0] == 1.0


def test_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        fit_statistics(rng.random((4, 4, 2)), rng.random((4, 5, 2)))


def test_few_pixels_warns(rng):
    a, b = cubes(rng, 2, 2, 6)
    with pytest.warns(RuntimeWarning):
        st = fit_statistics(a, b, reg_eps=0.0)
    assert st.reg_eps == 1e-3


def test_conditioning_error_reports_eigenvalue():
    with pytest.raises(ConditioningError, match="smallest eigenvalue"):
        mahalanobis(np.ones((1, 2)), np.array([[1.0, 0.0], [0.0, -1.0]]), 0.0, "toy")


# -- chronochrome

def test_cc_scalar_toy():
    st = StatModel(
        mu1=np.zeros(1), mu2=np.zeros(1),
        C11=np.eye(1), C22=np.eye(1), C12=np.full((1, 1), 0.5),
        Cd=np.eye(1), mud=np.zeros(1), reg_eps=0.0, pixel_count=2,
    )
    score = detect_cc(st, np.zeros((1, 1, 1)), np.ones((1, 1, 1)))
    assert score[0, 0] == pytest.approx(4.0 / 3.0, rel=1e-12)


def test_cc_exact_linear_relation(rng):
    a = rng.standard_normal((20, 20, 4))
    A = rng.standard_normal((4, 4)) + 3 * np.eye(4)
    b = a @ A.T + np.array([1.0, -2.0, 0.5, 3.0])
    st = fit_statistics(a, b, reg_eps=0.0)
    assert detect_cc(st, a, b).max() <= 1e-8


def test_cc_identical_is_zero(rng):
    a, _ = cubes(rng)
    assert np.abs(detect_cc(fit_statistics(a, a, 0.0), a, a)).max() < 1e-8


# -- covariance equalization

def test_ce_equalization_identity(rng):
    a, b = cubes(rng, 20, 20, 5)
    st = fit_statistics(a, b, reg_eps=0.0)
    L = ce_transform(st)
    err = np.linalg.norm(L @ st.C11 @ L.T - st.C22) / np.linalg.norm(st.C22)
    assert err < 1e-8


def test_ce_equal_covariances_is_identity(rng):
    a = rng.standard_normal((10, 10, 3))
    b = a[::-1, ::-1] + 2.0  # same covariance, shuffled pixels, shifted mean
    st = fit_statistics(a, b, reg_eps=0.0)
    np.testing.assert_allclose(st.C11, st.C22, atol=1e-12)
    np.testing.assert_allclose(ce_transform(st), np.eye(3), atol=1e-8)


def test_ce_identical_is_zero(rng):
    a, _ = cubes(rng)
    assert np.abs(detect_ce(fit_statistics(a, a, 0.0), a, a)).max() < 1e-8


# -- difference RX

def test_diff_rx_trace_identity(rng):
    a, b = cubes(rng)
    s = detect_diff_rx(fit_statistics(a, b, 0.0), a, b)
    assert s.mean() == pytest.approx(4.0, abs=1e-9)
    # against an explicit per-pixel solve
    d = (b - a).reshape(-1, 4)
    d = d - d.mean(axis=0)
    cd = d.T @ d / len(d)
    direct = np.array([v @ np.linalg.solve(cd, v) for v in d])
    np.testing.assert_allclose(s.ravel(), direct, rtol=1e-9)


def test_diff_rx_constant_shift(rng):
    a, _ = cubes(rng)
    b = a + np.array([0.5, -1.0, 2.0, 0.0])
    assert np.abs(detect_diff_rx(fit_statistics(a, b, 0.0), a, b)).max() < 1e-10


def test_diff_rx_two_pixels():
    a = np.zeros((1, 2, 1))
    b = np.array([-1.0, 1.0]).reshape(1, 2, 1)
    s = detect_diff_rx(fit_statistics(a, b, 0.0), a, b)
    np.testing.assert_allclose(s, 1.0, rtol=1e-12)


# -- straight detector

def test_sacd_trace_and_dense_oracle(rng):
    a, b = cubes(rng, 10, 10, 3)
    st = fit_statistics(a, b, 0.0)
    s = detect_sacd(st, a, b)
    assert s.mean() == pytest.approx(6.0, abs=1e-9)
    z = np.hstack([a.reshape(-1, 3) - st.mu1, b.reshape(-1, 3) - st.mu2])
    direct = np.einsum("ij,ij->i", z, np.linalg.solve(st.Cz, z.T).T)
    np.testing.assert_allclose(s.ravel(), direct, rtol=1e-9)


def test_sacd_constant_cubes():
    a = np.full((3, 3, 2), 4.0)
    st = fit_statistics(a, a + 1)
    assert np.abs(detect_sacd(st, a, a + 1)).max() == 0.0


def _independent_stats(rng, c=3):
    a, b = cubes(rng, 8, 8, c, mix=0.0)
    st = fit_statistics(a, b, 0.0)
    st.C12 = np.zeros((c, c))
    return st, a, b


def test_sacd_independent_times_sum_of_rx(rng):
    st, a, b = _independent_stats(rng)
    e1, e2 = a.reshape(-1, 3) - st.mu1, b.reshape(-1, 3) - st.mu2
    rx1 = mahalanobis(e1, st.C11, st.ridge(st.C11))
    rx2 = mahalanobis(e2, st.C22, st.ridge(st.C22))
    np.testing.assert_allclose(detect_sacd(st, a, b).ravel(), rx1 + rx2, rtol=1e-10)


# -- hyperbolic detector

def test_hyperbolic_zero_when_uncorrelated(rng):
    st, a, b = _independent_stats(rng)
    assert np.abs(hyperbolic_scores(st, a, b)).max() < 1e-9


def test_sdhacd_symmetric(rng):
    a, b = cubes(rng)
    s12 = detect_sdhacd(fit_statistics(a, b, 0.0), a, b)
    s21 = detect_sdhacd(fit_statistics(b, a, 0.0), b, a)
    np.testing.assert_allclose(s12, s21, rtol=1e-8, atol=1e-8)


def test_sdhacd_ranks_scene_anomalies(scene):
    t1, t2, mask = scene
    s = run_detector("sdhacd", t1, t2)
    background = s[mask == 0]
    assert np.median(s[mask == 1]) > np.percentile(background, 95)


# -- slow feature analysis

def test_usfa_b_orthonormal(rng):
    a, b = cubes(rng, 16, 16, 5)
    r = usfa(a, b, iterations=3)
    W = r.vectors
    assert np.linalg.norm(W.T @ r.B @ W - np.eye(5)) < 1e-8
    assert np.all(np.diff(r.eigenvalues) >= 0)


def test_usfa_identical_is_zero(rng):
    a, _ = cubes(rng)
    assert np.abs(classical.detect_usfa(a, a)).max() == 0.0


def test_usfa_separates_scene_anomalies(scene):
    t1, t2, mask = scene
    s = run_detector("usfa", t1, t2)
    assert np.median(s[mask == 1]) > np.median(s[mask == 0])


def test_usfa_bad_iterations(rng):
    a, b = cubes(rng)
    with pytest.raises(ValueError):
        usfa(a, b, iterations=0)


# -- properties over every detector

@pytest.mark.parametrize("name", ["diff_rx", "sacd"])
def test_affine_invariance(rng, name):
    a, b = cubes(rng, 12, 12, 4)
    T = rng.standard_normal((4, 4)) + 2 * np.eye(4)
    s = run_detector(name, a, b, reg_eps=0.0)
    st = run_detector(name, a @ T.T, b @ T.T, reg_eps=0.0)
    np.testing.assert_allclose(st, s, rtol=1e-8, atol=1e-8)


@pytest.mark.parametrize("name", ["cc", "ce", "diff_rx", "sacd", "usfa"])
def test_nonnegative(rng, name):
    a, b = cubes(rng)
    assert run_detector(name, a, b).min() >= -1e-10


@pytest.mark.parametrize("name", classical.METHODS)
def test_pixel_permutation(rng, name):
    a, b = cubes(rng, 9, 7, 3)
    perm = rng.permutation(63)
    pa = a.reshape(63, 3)[perm].reshape(9, 7, 3)
    pb = b.reshape(63, 3)[perm].reshape(9, 7, 3)
    s = run_detector(name, a, b).ravel()
    sp = run_detector(name, pa, pb).ravel()
    np.testing.assert_allclose(sp, s[perm], rtol=1e-8, atol=1e-10)


@pytest.mark.parametrize("name", classical.METHODS)
def test_deterministic(rng, name):
    a, b = cubes(rng)
    np.testing.assert_array_equal(run_detector(name, a, b), run_detector(name, a, b))


def test_unknown_detector(rng):
    a, b = cubes(rng)
    with pytest.raises(ValueError, match="diff_rx"):
        run_detector("nosuch", a, b)


def test_ridge_keeps_singular_data_usable(rng):
    # band 3 duplicates band 0: singular without the ridge
    a, b = cubes(rng, 10, 10, 3)
    a = np.concatenate([a, a[..., :1]], axis=-1)
    b = np.concatenate([b, b[..., :1]], axis=-1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for name in classical.METHODS:
            assert np.all(np.isfinite(run_detector(name, a, b)))
