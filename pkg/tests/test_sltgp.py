import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from oracles import gaussian_evidence_quadrature, slt_predictive_mean, slt_quadrature
from privileged_gp import (
    KernelSpec,
    conditional_log_marginal,
    fit_gpc,
    fit_slt,
    kernels,
    load_model,
    modified_prior_fit,
    predict_latent_slt,
    predict_prob_slt,
    save_model,
)
from privileged_gp.errors import RhoOutOfRange
from privileged_gp.gpc import predict_latent, predict_prob
from privileged_gp.sltgp import SoftLabelPrior, build_joint_prior, soft_label_log_marginal


def test_joint_prior_blocks(rng):
    K = kernels.gram(KernelSpec.rbf(), rng.normal(size=(4, 2)))
    j0 = build_joint_prior(K, 0.0).joint_cov
    assert np.all(j0[:4, 4:] == 0) and np.all(j0[4:, :4] == 0)
    j1 = build_joint_prior(K, 1.0).joint_cov
    for blk in (j1[:4, :4], j1[:4, 4:], j1[4:, :4], j1[4:, 4:]):
        np.testing.assert_array_equal(blk, K)
    jh = build_joint_prior(K, 0.3).joint_cov
    np.testing.assert_allclose(jh[:4, 4:], 0.3 * K, rtol=1e-15)


def test_joint_prior_hand_value():
    np.testing.assert_array_equal(build_joint_prior([[2.0]], 0.5).joint_cov, [[2.0, 1.0], [1.0, 2.0]])


@pytest.mark.parametrize("rho", [-0.01, 1.01, float("nan")])
def test_rho_out_of_range(rho):
    with pytest.raises(RhoOutOfRange):
        build_joint_prior([[1.0]], rho)
    with pytest.raises(RhoOutOfRange):
        fit_slt([[0.0]], [1.0], [0.0], KernelSpec.rbf(), rho)


def test_rho_zero_matches_gpc(rng):
    X, y, s, spec = random_instance(rng, 15)
    Xt = rng.normal(size=(30, 2))
    m = fit_slt(X, y, s, spec, 0.0)
    g = fit_gpc(X, y, spec)
    np.testing.assert_allclose(predict_prob_slt(m, Xt), predict_prob(g, Xt), atol=1e-6)
    mu_s, var_s = predict_latent_slt(m, Xt)
    mu_g, var_g = predict_latent(g, Xt)
    np.testing.assert_allclose(mu_s, mu_g, atol=1e-6)
    np.testing.assert_allclose(var_s, var_g, atol=1e-6)
    assert conditional_log_marginal(m) == pytest.approx(g.log_marginal, abs=1e-5)


def test_source_site_block(rng):
    X, y, s, spec = random_instance(rng, 10)
    m = fit_slt(X, y, s, spec, 0.6)
    np.testing.assert_array_equal(m.site_tau()[10:], 1.0)
    np.testing.assert_array_equal(m.site_nu()[10:], s)


def test_posterior_reproduced_from_factors(rng):
    X, y, s, spec = random_instance(rng, 10)
    m = fit_slt(X, y, s, spec, 0.6)
    K = m.prior.joint_cov
    sq = np.sqrt(m.site_tau())
    V = m.b_factor.solve_lower(sq[:, None] * K)
    np.testing.assert_allclose(K - V.T @ V, m.joint_cov_post, atol=1e-8)


def _oracle_instance():
    rng = np.random.default_rng(2024)
    X = rng.normal(size=(2, 2))
    y = np.array([1.0, -1.0])
    s = np.array([1.2, -0.4])
    spec = KernelSpec.rbf(1.0, 2.0)
    return X, y, s, spec


def test_quadrature_oracle_n2():
    X, y, s, spec = _oracle_instance()
    rho = 0.7
    K = kernels.gram(spec, X)
    ref_mean, ref_logz = slt_quadrature(K, y, s, rho)
    m = fit_slt(X, y, s, spec, rho)
    np.testing.assert_allclose(m.joint_mean[:2], ref_mean, atol=0.05)
    assert conditional_log_marginal(m) == pytest.approx(ref_logz, abs=1e-2)
    xt = np.array([0.3, -0.2])
    kt = kernels.cross(spec, X, xt[None, :])[:, 0]
    mu, _ = predict_latent_slt(m, xt)
    assert mu == pytest.approx(slt_predictive_mean(K, kt, s, rho, ref_mean), abs=0.05)


def test_prediction_far_away(rng):
    X, y, s, spec = random_instance(rng, 6)
    m = fit_slt(X, y, s, spec, 0.8)
    mu, var = predict_latent_slt(m, [1e6, 1e6])
    assert mu == pytest.approx(0.0, abs=1e-12)
    assert var == pytest.approx(spec.amplitude, rel=1e-12)


def test_probability_trio():
    X, y, s, spec = _oracle_instance()
    m = fit_slt(X, y, s, spec, 0.5)
    p = predict_prob_slt(m, np.array([[0.1, 0.2], [1e4, 1e4]]))
    assert 0 < p[0] < 1
    assert p[1] == pytest.approx(0.5, abs=1e-12)


def test_soft_label_marginal_hand_value():
    assert soft_label_log_marginal([[1.0]], [0.0]) == pytest.approx(-0.5 * math.log(4 * math.pi), abs=1e-12)
    assert soft_label_log_marginal([[1.0]], [0.0]) == pytest.approx(-1.2655, abs=1e-4)


def test_soft_label_marginal_max_at_zero(rng):
    K = kernels.gram(KernelSpec.rbf(), rng.normal(size=(5, 2)))
    base = soft_label_log_marginal(K, np.zeros(5))
    for _ in range(10):
        assert soft_label_log_marginal(K, rng.normal(size=5)) < base


def test_soft_label_marginal_quadrature(rng):
    K = kernels.gram(KernelSpec.rbf(0.8, 1.5), rng.normal(size=(2, 2)))
    s = np.array([0.7, -0.3])
    assert soft_label_log_marginal(K, s) == pytest.approx(gaussian_evidence_quadrature(K, s), abs=1e-3)


def test_conditional_marginal_upper_bound(rng):
    for rho in (0.0, 0.5, 1.0):
        X, y, s, spec = random_instance(rng, 12)
        assert conditional_log_marginal(fit_slt(X, y, s, spec, rho)) <= 0.05


@pytest.mark.parametrize("rho", [0.0, 0.3, 0.7, 1.0])
def test_path_equivalence(rng, rho):
    for _ in range(5):
        n = int(rng.integers(2, 21))
        X, y, s, spec = random_instance(rng, n)
        Xt = rng.normal(size=(25, 2))
        a = fit_slt(X, y, s, spec, rho)
        b = modified_prior_fit(X, y, s, spec, rho)
        np.testing.assert_allclose(predict_prob_slt(a, Xt), predict_prob(b, Xt), atol=1e-5)
        assert conditional_log_marginal(a) == pytest.approx(conditional_log_marginal(b), abs=1e-4)
        np.testing.assert_allclose(a.joint_mean[:n], b.mean, atol=1e-5)


def test_modified_prior_rho_zero_is_plain(rng):
    X, _, s, spec = random_instance(rng, 8)
    p = SoftLabelPrior(spec, X, s, 0.0)
    np.testing.assert_array_equal(p.train_mean(), 0.0)
    np.testing.assert_array_equal(p.train_cov(), kernels.gram(spec, X))


def test_noise_free_prior_interpolates_soft_labels(rng):
    X, _, s, _ = random_instance(rng, 6)
    spec = KernelSpec.rbf(0.3)
    p = SoftLabelPrior(spec, X, s, 1.0, source_noise=0.0)
    _, _, mean = p.test_terms(X)
    np.testing.assert_allclose(mean, s, atol=1e-8)


def test_aligned_soft_labels_sharpen(rng):
    wins = 0
    for _ in range(20):
        X, y, _, spec = random_instance(rng, 15)
        s = 5.0 * y
        sharp = np.abs(fit_slt(X, y, s, spec, 1.0).joint_mean[:15])
        base = np.abs(fit_slt(X, y, s, spec, 0.0).joint_mean[:15])
        wins += bool(sharp.mean() > base.mean())
    assert wins == 20


@settings(max_examples=15)
@given(st.floats(0.0, 1.0), st.integers(0, 10_000))
def test_variance_nonnegative(rho, seed):
    rng = np.random.default_rng(seed)
    X, y, s, spec = random_instance(rng, 8)
    m = fit_slt(X, y, s, spec, rho)
    _, var = predict_latent_slt(m, rng.normal(size=(20, 2)) * 3)
    assert np.all(var >= 0)
    p = predict_prob_slt(m, rng.normal(size=(20, 2)))
    assert np.all((p > 0) & (p < 1))


def test_save_load_round_trip(tmp_path, rng):
    X, y, s, spec = random_instance(rng, 12)
    m = fit_slt(X, y, s, spec, 0.45)
    path = tmp_path / "model.json"
    save_model(m, path)
    m2 = load_model(path)
    Xt = rng.normal(size=(10, 2))
    np.testing.assert_array_equal(predict_prob_slt(m, Xt), predict_prob_slt(m2, Xt))
    np.testing.assert_array_equal(m2.soft_labels, m.soft_labels)
    np.testing.assert_array_equal(m2.target_sites.nu_tilde, m.target_sites.nu_tilde)
    assert m2.rho == m.rho and m2.kernel == m.kernel
    assert conditional_log_marginal(m2) == conditional_log_marginal(m)


def test_load_rejects_foreign(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other", "version": 1}')
    with pytest.raises(ValueError):
        load_model(p)
