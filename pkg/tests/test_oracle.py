import numpy as np
import pytest
from hypothesis import given, strategies as st

from banditsgd.core import ConfigError, SeedSpec, StepSchedule, step_size
from banditsgd.engine import run_online
from banditsgd.experiments.environments import Environment, default_theta_star
from banditsgd.oracle import (BahadurBasis, LinearGaussianSpec, bahadur_decompose, eigen_c, g_curve, mc_G,
                              oracle_cov, q_weights, quantile_oracle_cov, truncated_second_moment, xi_star)
from banditsgd.policy import EpsilonSchedule, WeightScheme

VANILLA, IPW, SQRT = WeightScheme("vanilla"), WeightScheme("ipw"), WeightScheme("sqrt_ipw")


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


vecs = st.lists(st.floats(-1.5, 1.5), min_size=3, max_size=3).map(np.array)


def test_centered_half_identity():
    nu = _unit([1.0, -2.0, 0.5])
    for conv in ("exact", "printed"):
        np.testing.assert_allclose(truncated_second_moment(np.zeros(3), nu, "pos", conv), 0.5 * np.eye(3),
                                   atol=1e-14)


@given(mu=vecs, nu=vecs)
def test_sides_sum_to_second_moment(mu, nu):
    if np.linalg.norm(nu) < 1e-3:
        nu = np.array([1.0, 0, 0])
    nu = _unit(nu)
    tot = truncated_second_moment(mu, nu, "pos") + truncated_second_moment(mu, nu, "neg")
    np.testing.assert_allclose(tot, np.eye(3) + np.outer(mu, mu), atol=1e-10)


def test_rejects_non_unit_direction():
    with pytest.raises(ConfigError):
        truncated_second_moment(np.zeros(2), np.array([1.0, 1.0]))


def test_exact_moment_matches_monte_carlo_on_axis():
    mu = nu = np.array([1.0, 0.0])
    G1, _, (se1, _) = mc_G(mu, nu, 10 ** 7, seed=3)
    exact = truncated_second_moment(mu, nu, "pos")
    assert abs(G1[0, 0] - exact[0, 0]) <= 3 * se1[0, 0]


def test_exact_moment_matches_monte_carlo_off_axis():
    mu = np.array([0.5, -0.3, 0.8])
    nu = _unit([1.0, 0.4, -0.7])
    G1, G2, (se1, se2) = mc_G(mu, nu, 2 * 10 ** 6, seed=5)
    z1 = np.abs(G1 - truncated_second_moment(mu, nu, "pos")) / se1
    z2 = np.abs(G2 - truncated_second_moment(mu, nu, "neg")) / se2
    assert z1.max() < 4 and z2.max() < 4
    # the literal closed form does not survive the same check away from mu^T nu = 0
    zp = np.abs(G1 - truncated_second_moment(mu, nu, "pos", "printed")) / se1
    assert zp.max() > 10


def test_mc_G_centered_and_partition():
    nu = _unit([0.3, 1.0])
    G1, G2, (se1, _) = mc_G(np.zeros(2), nu, 200_000, seed=9, block=50_000)
    assert np.all(np.abs(G1 - 0.5 * np.eye(2)) <= 3 * se1)
    rng = np.random.default_rng(9)
    X = np.vstack([rng.standard_normal((50_000, 2)) for _ in range(4)])
    np.testing.assert_allclose(G1 + G2, X.T @ X / len(X), rtol=1e-12)
    with pytest.raises(ConfigError):
        mc_G(np.zeros(2), nu, 100)


@pytest.mark.parametrize("scheme,var,length", [(VANILLA, 0.02, 0.55), (SQRT, None, 0.72), (IPW, None, 2.79)])
def test_oracle_ci_lengths(scheme, var, length):
    orc = oracle_cov(LinearGaussianSpec.centered(10, scheme=scheme))
    lens = orc.ci_length()
    assert lens.shape == (20,)
    np.testing.assert_allclose(lens, length, atol=0.01)
    if var is not None:
        np.testing.assert_allclose(np.diag(orc.Sigma), var, rtol=1e-12)


def test_oracle_rejects_equal_arms():
    with pytest.raises(ConfigError):
        LinearGaussianSpec(np.zeros(2), np.ones(4))


def test_g_curve_examples():
    eps, b = 0.02, 0.3
    assert g_curve(0.0, eps, b) == pytest.approx(1 / ((1 - eps / 2) * b + eps / 2 * (1 - b)))
    ratio = g_curve(-1.0, 0.02, 0.5) / g_curve(0.0, 0.02, 0.5)
    orc_ratio = (oracle_cov(LinearGaussianSpec.centered(3, scheme=IPW)).ci_length()[0]
                 / oracle_cov(LinearGaussianSpec.centered(3)).ci_length()[0]) ** 2
    assert ratio == pytest.approx(orc_ratio, rel=1e-10)
    assert ratio == pytest.approx(25.5, rel=0.02)


@pytest.mark.parametrize("b", np.round(np.arange(0.1, 1.0, 0.1), 1))
def test_g_curve_minimum_at_zero(b):
    gam = np.round(np.arange(-1, 1.0001, 0.05), 10)
    g = g_curve(gam, 0.02, b)
    assert gam[np.argmin(g)] == 0.0


def test_g_curve_validation():
    with pytest.raises(ConfigError):
        g_curve(0.0, 0.02, 1.0)


@pytest.mark.parametrize("gamma", [-1.0, -0.5, 0.0, 0.5, 1.0])
def test_eigen_c_centered(gamma):
    spec = LinearGaussianSpec.centered(4, scheme=WeightScheme("power", gamma))
    c1, c2, c3, c4 = eigen_c(spec)
    assert c2 == pytest.approx(0, abs=1e-12) and c4 == pytest.approx(0, abs=1e-12)
    assert c1 == pytest.approx(g_curve(gamma, 0.02, 0.5)) and c3 == pytest.approx(c1)
    if gamma == 0.0:
        assert c1 == pytest.approx(2.0)


@pytest.mark.parametrize("scheme", [VANILLA, WeightScheme("power", -0.5), WeightScheme("power", 1.0)])
def test_eigen_c_against_dense_eigensolver(scheme):
    p = 4
    th = np.concatenate([[0.8, 0, 0, 0], [-0.4, 0, 0, 0]])  # nu = e1
    spec = LinearGaussianSpec(np.array([1.0, 0, 0, 0]), th, 0.3, 0.1, scheme)
    c1, c2, c3, c4 = eigen_c(spec)
    Sig = oracle_cov(spec).Sigma / 0.3 ** 2
    e0 = np.sort(np.linalg.eigvalsh(Sig[:p, :p]))
    e1 = np.sort(np.linalg.eigvalsh(Sig[p:, p:]))
    np.testing.assert_allclose(e0, np.sort([c1] * (p - 1) + [c1 + c2]), rtol=1e-10)
    np.testing.assert_allclose(e1, np.sort([c3] * (p - 1) + [c3 + c4]), rtol=1e-10)


def test_eigen_c_requires_parallel_mu():
    spec = LinearGaussianSpec(np.array([0.0, 1.0]), np.array([1.0, 0, 0, 0]))
    with pytest.raises(ConfigError):
        eigen_c(spec)
    c = eigen_c(spec, "printed")
    assert all(np.isfinite(c))


@given(mu=vecs, t0=vecs, t1=vecs, eps=st.sampled_from([0.02, 0.1, 0.3]))
def test_vanilla_dominance(mu, t0, t1, eps):
    if np.linalg.norm(t0 - t1) < 1e-3:
        t1 = t0 + 1.0
    th = np.concatenate([t0, t1])
    base = oracle_cov(LinearGaussianSpec(mu, th, 0.1, eps, VANILLA)).Sigma
    for g in (-1.0, -0.5, 0.5, 1.0):
        other = oracle_cov(LinearGaussianSpec(mu, th, 0.1, eps, WeightScheme("power", g))).Sigma
        assert np.linalg.eigvalsh(other - base).min() >= -1e-9


def test_ipw_blowup_is_inverse_eps():
    ratios = []
    for eps in (0.2, 0.02, 0.002):
        v = oracle_cov(LinearGaussianSpec.centered(3, eps=eps)).Sigma
        w = oracle_cov(LinearGaussianSpec.centered(3, eps=eps, scheme=IPW)).Sigma
        ratios.append(np.linalg.eigvalsh(w).max() / np.linalg.eigvalsh(v).max())
    growth = np.array(ratios[1:]) / np.array(ratios[:-1])
    assert np.all(growth >= 10 / 2) and np.all(growth <= 10 * 2)


def test_quantile_oracle_closed_form():
    tau, sigma = 0.75, 0.1
    env = Environment("quantile", default_theta_star(3), sigma=sigma, tau=tau)
    q0 = env.noise_density_at_zero()
    orc = quantile_oracle_cov(LinearGaussianSpec.centered(3, sigma=sigma), tau, q0)
    np.testing.assert_allclose(np.diag(orc.Sigma), tau * (1 - tau) * 2 / q0 ** 2, rtol=1e-12)
    with pytest.raises(ConfigError):
        quantile_oracle_cov(LinearGaussianSpec.centered(3), 1.5, q0)


def test_q_weights_degenerate_products():
    # eta_k * lam = 1 zeroes every product, so Q_i = eta_i I = I
    M = 1000
    sched = StepSchedule(M ** 0.8, 0.8, M)
    q, r0 = q_weights(sched, [1.0], 50)
    np.testing.assert_allclose(q, 1.0, rtol=1e-12)
    assert r0[0] == pytest.approx(1.0)


@given(lam=st.floats(0.01, 3.0), t=st.integers(2, 60), eta0=st.floats(0.05, 2.0))
def test_q_weights_match_direct_products(lam, t, eta0):
    sched = StepSchedule(eta0, 0.7, 3)
    q, r0 = q_weights(sched, [lam], t)
    eta = step_size(sched, np.arange(1, t + 1))

    def direct(i):
        total, prod = 0.0, 1.0
        for j in range(i, t):
            if j > i:
                prod *= 1 - eta[j - 1] * lam
            total += prod
        return total

    np.testing.assert_allclose(q[:, 0], [eta[i - 1] * direct(i) for i in range(1, t)], rtol=1e-9, atol=1e-12)
    prod, tot = 1.0, 1.0
    for j in range(1, t):
        prod *= 1 - eta[j - 1] * lam
        tot += prod
    assert r0[0] == pytest.approx(tot, rel=1e-9)


def test_basis_q_and_sigma_t_limit():
    spec = LinearGaussianSpec.centered(2, theta_star=default_theta_star(2))
    b = BahadurBasis.build(spec, StepSchedule(2.25), 20_000)
    H = b.oracle.H
    np.testing.assert_allclose(b.Q(5), b.Q(5).T, atol=1e-14)
    np.testing.assert_allclose(b.Q(b.t - 1), step_size(b.schedule, b.t - 1) * np.eye(4))
    # Sigma_t -> H^-1 S H^-1
    rel = np.linalg.norm(b.Sigma_t - b.oracle.Sigma) / np.linalg.norm(b.oracle.Sigma)
    assert rel < 0.1
    assert np.allclose(H, H.T)
    with pytest.raises(ConfigError):
        b.Q(0)


def test_xi_star_matches_gradient_at_truth():
    spec = LinearGaussianSpec.centered(3, theta_star=default_theta_star(3), scheme=IPW)
    env = Environment("linear", spec.theta_star)
    d = env.draw(SeedSpec(1).generators(3), 200)
    xi = xi_star(spec, d.X, d.Y, d.u_act)
    p0 = (0.98 * (d.X @ spec.theta_star[:3] > d.X @ spec.theta_star[3:]) + 0.01)
    for i in range(200):
        a = 0 if d.u_act[i] < p0[i] else 1
        pr = p0[i] if a == 0 else 1 - p0[i]
        g = np.zeros(6)
        g[3 * a:3 * a + 3] = -(d.Y[i, a] - d.X[i] @ spec.theta_star[3 * a:3 * a + 3]) * d.X[i] / (2 * pr)
        np.testing.assert_allclose(xi[i], g, atol=1e-14)


def _run_with_draws(spec, sched, t, seed, stride=0):
    env = Environment("linear", spec.theta_star, spec.mu, spec.sigma)
    blocks = []
    state, _, tr = run_online(env, env.loss_model(), spec.scheme, EpsilonSchedule.constant(spec.eps), sched, t,
                              SeedSpec(seed), accumulate=False, stride=stride,
                              hooks=[lambda dr, s: blocks.append(dr)])
    X = np.vstack([b.X for b in blocks]); Y = np.vstack([b.Y for b in blocks])
    U = np.concatenate([b.u_act for b in blocks])
    return state, tr, X, Y, U


def test_decomposition_identity_and_errors():
    spec = LinearGaussianSpec.centered(3, theta_star=default_theta_star(3))
    sched = StepSchedule(2.25)
    b = BahadurBasis.build(spec, sched, 3000)
    state, _, X, Y, U = _run_with_draws(spec, sched, 3000, 4)
    terms = bahadur_decompose(b, X, Y, U, state.theta_bar)
    np.testing.assert_allclose(terms.W + terms.R2 + terms.R3 + terms.residual, terms.scaled_error, atol=1e-12)
    np.testing.assert_array_equal(terms.R3, 0)
    with pytest.raises(ConfigError):
        bahadur_decompose(b, X[:100], Y[:100], U[:100], state.theta_bar)


def test_decomposition_with_shifted_covariates_needs_stride_one():
    p = 2
    spec = LinearGaussianSpec(np.full(p, 0.3), default_theta_star(p), 0.1, 0.1)
    sched = StepSchedule(1.0)
    b = BahadurBasis.build(spec, sched, 1500)
    state, tr, X, Y, U = _run_with_draws(spec, sched, 1500, 2, stride=1)
    with pytest.raises(ConfigError):
        bahadur_decompose(b, X, Y, U, state.theta_bar)
    _, thin, _, _, _ = _run_with_draws(spec, sched, 1500, 2, stride=2)
    with pytest.raises(ConfigError):
        bahadur_decompose(b, X, Y, U, state.theta_bar, trajectory=thin)
    terms = bahadur_decompose(b, X, Y, U, state.theta_bar, trajectory=tr)
    assert np.all(np.isfinite(terms.R3)) and np.any(terms.R3 != 0)
    np.testing.assert_allclose(terms.W + terms.R2 + terms.R3 + terms.residual, terms.scaled_error, atol=1e-12)
