"""Closed-form asymptotic covariance for two-arm linear regression with Gaussian covariates.

With ``X ~ N(mu, I_p)`` and epsilon-greedy at the true parameter, arm 0 is
greedy on the half-space ``X^T nu > 0`` where ``nu`` is the normalized
difference of the two arm parameters. Everything reduces to the truncated
second moments ``G1 = E[X X^T 1{X^T nu > 0}]`` and ``G2 = E[X X^T] - G1``.

Two conventions are available for ``G1``/``G2``:

``exact``
    The Gaussian moment identities, validated against :func:`mc_G`.
``printed``
    ``Phi(a) I + a exp(a^2/2) / sqrt(2 pi) nu nu^T`` with
    ``a = mu^T nu / sqrt(1 + (mu^T nu)^2)``, kept for comparison. It agrees
    with ``exact`` only when ``mu^T nu = 0``.

This module also holds the finite-sample (Bahadur) machinery: the
``Q_i^t`` matrices of the averaged recursion, the finite-``t`` covariance
``Sigma_t`` and the split of the scaled error into its leading term and
remainders.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .core import ConfigError, StepSchedule, arm_slice, step_size
from .inference import z_quantile
from .policy import WeightScheme

CONVENTIONS = ("exact", "printed")


def _unit(nu) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    if abs(np.linalg.norm(nu) - 1.0) > 1e-10:
        raise ConfigError(f"nu must be a unit vector, got norm {np.linalg.norm(nu)}")
    return nu


def truncated_second_moment(mu, nu, side: str = "pos", convention: str = "exact") -> np.ndarray:
    """``E[X X^T 1{+-X^T nu > 0}]`` for ``X ~ N(mu, I)``.

    Parameters
    ----------
    mu : array_like, shape (p,)
    nu : array_like, shape (p,)
        Unit direction of the half-space.
    side : {"pos", "neg"}
    convention : {"exact", "printed"}

    Notes
    -----
    Write ``m = mu^T nu`` and ``mu_perp = mu - m nu``. Along ``nu`` the
    covariate is ``N(m, 1)``, independent of the orthogonal part. The
    one-dimensional truncated moments ``E[Z 1{Z > -m}]`` and
    ``E[Z^2 1{Z > -m}]`` give

    ``G1 = Phi(m)(I + mu_perp mu_perp^T) + (m^2 Phi(m) + m phi(m)) nu nu^T
    + (m Phi(m) + phi(m))(nu mu_perp^T + mu_perp nu^T)``.
    """
    if side not in ("pos", "neg"):
        raise ConfigError(f"side must be 'pos' or 'neg', got {side!r}")
    if convention not in CONVENTIONS:
        raise ConfigError(f"unknown convention {convention!r}")
    mu = np.asarray(mu, dtype=float)
    nu = _unit(nu)
    if mu.shape != nu.shape:
        raise ConfigError("mu and nu must have the same length")
    p = mu.shape[0]
    if side == "neg":
        # the negative half-space of nu is the positive one of -nu
        if convention == "exact":
            return truncated_second_moment(mu, -nu, "pos", convention)
        return np.eye(p) - truncated_second_moment(mu, nu, "pos", convention)
    m = float(mu @ nu)
    nn = np.outer(nu, nu)
    if convention == "printed":
        a = m / np.sqrt(1.0 + m * m)
        return norm.cdf(a) * np.eye(p) + a * np.exp(a * a / 2.0) / np.sqrt(2.0 * np.pi) * nn
    Phi, phi = norm.cdf(m), norm.pdf(m)
    mp = mu - m * nu
    cross = np.outer(nu, mp)
    return (Phi * (np.eye(p) + np.outer(mp, mp)) + (m * m * Phi + m * phi) * nn
            + (m * Phi + phi) * (cross + cross.T))


def _apply_g1(mu, nus, V):
    """Row-wise ``G1(nu_i) @ v_i`` (exact convention) without forming matrices."""
    m = nus @ mu
    Phi, phi = norm.cdf(m), norm.pdf(m)
    mp = mu[None, :] - m[:, None] * nus
    nv = np.einsum("ij,ij->i", nus, V)
    pv = np.einsum("ij,ij->i", mp, V)
    c3 = m * Phi + phi
    return (Phi[:, None] * (V + mp * pv[:, None]) + ((m * m * Phi + m * phi) * nv)[:, None] * nus
            + c3[:, None] * (nus * pv[:, None] + mp * nv[:, None]))


def mc_G(mu, nu, n_samples: int, seed: int = 0, block: int = 1 << 18):
    """Monte-Carlo estimates of ``G1``, ``G2`` with elementwise standard errors.

    Returns
    -------
    G1_hat, G2_hat, (se1, se2)
        ``G1_hat + G2_hat`` is the sample second moment of the same draws.
    """
    if n_samples < 10_000:
        raise ConfigError("mc_G needs at least 1e4 samples")
    mu = np.asarray(mu, dtype=float)
    nu = _unit(nu)
    p = mu.shape[0]
    rng = np.random.default_rng(seed)
    s1 = np.zeros((p, p)); q1 = np.zeros((p, p))
    s2 = np.zeros((p, p)); q2 = np.zeros((p, p))
    done = 0
    while done < n_samples:
        k = min(block, n_samples - done)
        X = rng.standard_normal((k, p)) + mu
        pos = X @ nu > 0
        for mask, s, q in ((pos, s1, q1), (~pos, s2, q2)):
            Xm = X[mask]
            s += Xm.T @ Xm
            q += (Xm * Xm).T @ (Xm * Xm)
        done += k
    n = float(n_samples)
    G1, G2 = s1 / n, s2 / n
    se1 = np.sqrt(np.maximum(q1 / n - G1 ** 2, 0.0) / n)
    se2 = np.sqrt(np.maximum(q2 / n - G2 ** 2, 0.0) / n)
    return G1, G2, (se1, se2)


@dataclass
class LinearGaussianSpec:
    """Two-arm linear model with ``X ~ N(mu, I)``, noise sd ``sigma`` and constant ``eps``."""

    mu: np.ndarray
    theta_star: np.ndarray
    sigma: float = 0.1
    eps: float = 0.02
    scheme: WeightScheme = WeightScheme()

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        if self.theta_star.shape != (2 * self.mu.shape[0],):
            raise ConfigError("theta_star must have length 2p with p = len(mu)")
        if not 0.0 < self.eps < 1.0:
            raise ConfigError(f"eps must lie in (0, 1), got {self.eps}")
        if not self.sigma >= 0:
            raise ConfigError("sigma must be non-negative")
        diff = arm_slice(self.theta_star, 0) - arm_slice(self.theta_star, 1)
        if not np.linalg.norm(diff) > 0:
            raise ConfigError("degenerate theta_star: both arms are equal")

    @classmethod
    def centered(cls, p: int, sigma: float = 0.1, eps: float = 0.02,
                 scheme: WeightScheme = WeightScheme(), theta_star=None) -> "LinearGaussianSpec":
        """``mu = 0``; at this point the covariance does not depend on ``theta_star``."""
        if theta_star is None:
            theta_star = np.concatenate([np.ones(p), -np.ones(p)])
        return cls(np.zeros(p), theta_star, sigma, eps, scheme)

    @property
    def p(self) -> int:
        return self.mu.shape[0]

    @property
    def nu(self) -> np.ndarray:
        diff = arm_slice(self.theta_star, 0) - arm_slice(self.theta_star, 1)
        return diff / np.linalg.norm(diff)

    @property
    def m(self) -> float:
        return float(self.mu @ self.nu)


@dataclass
class OracleCovariance:
    H: np.ndarray
    S: np.ndarray
    Sigma: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    a: float
    nu: np.ndarray

    def ci_length(self, level: float = 0.95) -> np.ndarray:
        """Per-coordinate CI length for the sqrt(t)-scaled estimate."""
        return 2.0 * z_quantile(level) * np.sqrt(np.diag(self.Sigma))


def _assemble(G1, G2, eps, scheme: WeightScheme, h_scale: float, s_scale: float):
    u, v = 1.0 - eps / 2.0, eps / 2.0
    fu, fv = scheme.phi(u), scheme.phi(v)
    H1 = h_scale * (u * fu * G1 + v * fv * G2)
    H2 = h_scale * (v * fv * G1 + u * fu * G2)
    S1 = s_scale * (u * fu * fu * G1 + v * fv * fv * G2)
    S2 = s_scale * (v * fv * fv * G1 + u * fu * fu * G2)
    p = G1.shape[0]
    H = np.zeros((2 * p, 2 * p)); S = np.zeros_like(H); Sigma = np.zeros_like(H)
    for k, (Hb, Sb) in enumerate(((H1, S1), (H2, S2))):
        blk = slice(k * p, (k + 1) * p)
        Hinv = np.linalg.inv(Hb)
        Sig = Hinv @ Sb @ Hinv
        H[blk, blk], S[blk, blk], Sigma[blk, blk] = Hb, Sb, 0.5 * (Sig + Sig.T)
    return H, S, Sigma


def _moments(spec: LinearGaussianSpec, convention: str):
    nu = spec.nu
    G1 = truncated_second_moment(spec.mu, nu, "pos", convention)
    G2 = truncated_second_moment(spec.mu, nu, "neg", convention)
    m = spec.m
    a = m / np.sqrt(1.0 + m * m) if convention == "printed" else m
    return G1, G2, a, nu


def oracle_cov(spec: LinearGaussianSpec, convention: str = "exact") -> OracleCovariance:
    """Block-diagonal ``H``, ``S`` and ``Sigma = H^-1 S H^-1`` for the linear model.

    ``Sigma`` is the covariance of ``sqrt(t) (theta_bar_t - theta_star)`` in the limit.
    """
    G1, G2, a, nu = _moments(spec, convention)
    H, S, Sigma = _assemble(G1, G2, spec.eps, spec.scheme, 1.0, spec.sigma ** 2)
    return OracleCovariance(H, S, Sigma, G1, G2, float(a), nu)


def quantile_oracle_cov(spec: LinearGaussianSpec, tau: float, density0: float,
                        convention: str = "exact") -> OracleCovariance:
    """Oracle for the pinball loss under the same design.

    ``H`` carries the noise density at zero, ``density0``; ``S`` carries
    ``tau (1 - tau)`` in place of ``sigma^2``.
    """
    if not 0.0 < tau < 1.0:
        raise ConfigError("tau must lie in (0, 1)")
    if not density0 > 0:
        raise ConfigError("noise density at zero must be positive")
    G1, G2, a, nu = _moments(spec, convention)
    H, S, Sigma = _assemble(G1, G2, spec.eps, spec.scheme, density0, tau * (1.0 - tau))
    return OracleCovariance(H, S, Sigma, G1, G2, float(a), nu)


def g_curve(gamma, eps: float, b: float):
    """Relative eigenvalue of the covariance under power weights ``p ** gamma``.

    Vectorized over ``gamma``. Minimized at ``gamma = 0`` for every ``b``.
    """
    if not 0.0 < eps < 1.0:
        raise ConfigError("eps must lie in (0, 1)")
    if not 0.0 < b < 1.0:
        raise ConfigError("b must lie in (0, 1)")
    g = np.asarray(gamma, dtype=float)
    u, v = 1.0 - eps / 2.0, eps / 2.0
    out = (u ** (1 + 2 * g) * b + v ** (1 + 2 * g) * (1 - b)) / (u ** (1 + g) * b + v ** (1 + g) * (1 - b)) ** 2
    return float(out) if out.ndim == 0 else out


def _eig_ratio(g1, g2, eps, gamma):
    u, v = 1.0 - eps / 2.0, eps / 2.0
    return (u ** (1 + 2 * gamma) * g1 + v ** (1 + 2 * gamma) * g2) / (u ** (1 + gamma) * g1 + v ** (1 + gamma) * g2) ** 2


def eigen_c(spec: LinearGaussianSpec, convention: str = "exact") -> tuple[float, float, float, float]:
    """Coefficients with ``Sigma / sigma^2 = diag(c1 I + c2 nu nu^T, c3 I + c4 nu nu^T)``.

    The eigenvalues are ``c1`` (multiplicity ``p - 1``), ``c1 + c2``, ``c3``
    (multiplicity ``p - 1``) and ``c3 + c4``. Requires a power scheme
    (vanilla counts as ``gamma = 0``). Under the exact convention ``mu``
    must be zero or parallel to ``nu``; otherwise ``G1`` is not of the form
    ``b I + c nu nu^T``.
    """
    if spec.scheme.kind == "vanilla":
        gamma = 0.0
    elif spec.scheme.kind == "power":
        gamma = spec.scheme.gamma
    elif spec.scheme.kind == "ipw":
        gamma = -1.0
    else:
        gamma = -0.5
    m = spec.m
    if convention == "exact":
        if np.linalg.norm(spec.mu - m * spec.nu) > 1e-12 * max(1.0, np.linalg.norm(spec.mu)):
            raise ConfigError("exact eigen_c needs mu = 0 or mu parallel to nu")
        Phi, phi = norm.cdf(m), norm.pdf(m)
        g1_perp, g2_perp = Phi, 1.0 - Phi
        g1_par = (1.0 + m * m) * Phi + m * phi
        g2_par = (1.0 + m * m) * (1.0 - Phi) - m * phi
    elif convention == "printed":
        a = m / np.sqrt(1.0 + m * m)
        dens = a * np.exp(a * a / 2.0) / np.sqrt(2.0 * np.pi)
        g1_perp, g2_perp = norm.cdf(a), 1.0 - norm.cdf(a)
        g1_par, g2_par = g1_perp + dens, g2_perp - dens
    else:
        raise ConfigError(f"unknown convention {convention!r}")
    eps = spec.eps
    c1 = _eig_ratio(g1_perp, g2_perp, eps, gamma)
    c2 = _eig_ratio(g1_par, g2_par, eps, gamma) - c1
    c3 = _eig_ratio(g2_perp, g1_perp, eps, gamma)
    c4 = _eig_ratio(g2_par, g1_par, eps, gamma) - c3
    return float(c1), float(c2), float(c3), float(c4)


# ---------------------------------------------------------------------------
# Finite-sample decomposition
# ---------------------------------------------------------------------------

def q_weights(schedule: StepSchedule, lam, t: int):
    """Scalar ``q_i`` (``i = 1..t-1``) and ``r_0`` for each Hessian eigenvalue.

    ``Q_i^t = eta_i sum_{j=i}^{t-1} prod_{k=i+1}^{j} (I - eta_k H)`` acts as
    ``q_i(lam)`` on the eigenvector with eigenvalue ``lam``; ``r_0`` is the
    analogous weight of the initial error,
    ``sum_{j=0}^{t-1} prod_{k=1}^{j} (1 - eta_k lam)``.

    Returns
    -------
    q : ndarray, shape (t - 1, len(lam))
    r0 : ndarray, shape (len(lam),)
    """
    if t < 2:
        raise ConfigError("t must be >= 2")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    eta = step_size(schedule, np.arange(1, t + 1))          # eta[k-1] = eta_k
    c = 1.0 - eta[:, None] * lam[None, :]                   # c[k-1] = 1 - eta_k lam
    r = np.empty((t, lam.shape[0]))                          # r[i] for i = 0..t-1
    if np.all(c > 1e-300):
        # r_i = (1/P_i) sum_{j>=i} P_j with prefix products P_j = prod_{k<=j} c_k;
        # work in logs to keep the ratio stable.
        logP = np.concatenate([np.zeros((1, lam.shape[0])), np.cumsum(np.log(c[: t - 1]), axis=0)])
        top = logP.max(axis=0)
        P = np.exp(logP - top)
        tail = np.cumsum(P[::-1], axis=0)[::-1]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            r = tail / P
        bad = ~np.isfinite(r)
        if np.any(bad):
            r = _r_backward(c, t, lam.shape[0])
    else:
        r = _r_backward(c, t, lam.shape[0])
    q = eta[: t - 1, None] * r[1:t]
    return q, r[0]


def _r_backward(c, t, k):
    r = np.empty((t, k))
    r[t - 1] = 1.0
    for i in range(t - 2, -1, -1):
        r[i] = 1.0 + c[i] * r[i + 1]
    return r


def _inv_sqrt(M):
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    if np.min(w) <= 0:
        raise ConfigError("matrix is not positive definite")
    return (V / np.sqrt(w)) @ V.T


@dataclass
class BahadurBasis:
    """Everything in the decomposition that depends only on ``(spec, schedule, t)``."""

    spec: LinearGaussianSpec
    schedule: StepSchedule
    t: int
    oracle: OracleCovariance
    U: np.ndarray
    lam: np.ndarray
    q: np.ndarray
    r0: np.ndarray
    Sigma_t: np.ndarray
    Sigma_t_isqrt: np.ndarray
    Sigma_isqrt: np.ndarray

    @classmethod
    def build(cls, spec: LinearGaussianSpec, schedule: StepSchedule, t: int,
              convention: str = "exact") -> "BahadurBasis":
        orc = oracle_cov(spec, convention)
        lam, U = np.linalg.eigh(orc.H)
        q, r0 = q_weights(schedule, lam, t)
        S_eig = U.T @ orc.S @ U
        Sigma_t = U @ (S_eig * (q.T @ q) / t) @ U.T
        Sigma_t = 0.5 * (Sigma_t + Sigma_t.T)
        return cls(spec, schedule, t, orc, U, lam, q, r0, Sigma_t,
                   _inv_sqrt(Sigma_t), _inv_sqrt(orc.Sigma))

    def Q(self, i: int) -> np.ndarray:
        """Dense ``Q_i^t`` (for checks; the decomposition never forms it)."""
        if not 1 <= i <= self.t - 1:
            raise ConfigError("i must lie in 1..t-1")
        return (self.U * self.q[i - 1]) @ self.U.T

    def weighted_sum(self, V: np.ndarray) -> np.ndarray:
        """``sum_i Q_i^t v_i`` for rows ``v_1..v_{t-1}`` of ``V``."""
        Vt = V[: self.t - 1] @ self.U
        return self.U @ np.einsum("ij,ij->j", self.q, Vt)


def xi_star(spec: LinearGaussianSpec, X, Y, u_act) -> np.ndarray:
    """Weighted gradient noise at the truth, one row per round.

    The action is re-drawn from the true-parameter policy with the same
    uniform that drove the realized action (maximal coupling). With
    ``theta = theta_star`` the gradient of the chosen block is
    ``-(Y(A*) - x^T theta*_{A*}) x``.
    """
    X = np.asarray(X, dtype=float)
    p = spec.p
    th0, th1 = arm_slice(spec.theta_star, 0), arm_slice(spec.theta_star, 1)
    m0, m1 = X @ th0, X @ th1
    p0 = (1.0 - spec.eps) * (m0 > m1) + spec.eps / 2.0
    arm0 = np.asarray(u_act) < p0
    prob = np.where(arm0, p0, 1.0 - p0)
    w = spec.scheme.phi(prob)
    resid = np.where(arm0, Y[:, 0] - m0, Y[:, 1] - m1)
    g = -(w * resid)[:, None] * X
    out = np.zeros((X.shape[0], 2 * p))
    out[arm0, :p] = g[arm0]
    out[~arm0, p:] = g[~arm0]
    return out


@dataclass
class BahadurTerms:
    W: np.ndarray
    R2: np.ndarray
    R3: np.ndarray
    residual: np.ndarray
    scaled_error: np.ndarray


def bahadur_decompose(basis: BahadurBasis, X, Y, u_act, theta_bar_t, theta0=None,
                      trajectory=None) -> BahadurTerms:
    """Split ``sqrt(t) Sigma^-1/2 (theta_bar_t - theta*)`` into ``W + R2 + R3 + residual``.

    Parameters
    ----------
    basis
        Output of :meth:`BahadurBasis.build` for the same ``t``.
    X, Y, u_act
        The first ``t - 1`` (or more) rounds of draws that drove the run.
    theta_bar_t
        Averaged iterate after ``t`` steps.
    theta0
        Initial iterate; zero when omitted.
    trajectory
        Stride-1 trajectory of the run. Needed only when ``mu != 0``: with
        centered covariates the population Hessian does not depend on the
        policy and ``R3`` vanishes identically.

    Notes
    -----
    ``W`` carries a leading minus sign: the recursion subtracts the noise.
    Its distribution is symmetric, so the sign does not affect its law.
    """
    spec, t = basis.spec, basis.t
    d = 2 * spec.p
    theta0 = np.zeros(d) if theta0 is None else np.asarray(theta0, dtype=float)
    if np.asarray(X).shape[0] < t - 1:
        raise ConfigError(f"need at least t-1={t - 1} rounds of draws")
    X, Y, u_act = X[: t - 1], Y[: t - 1], u_act[: t - 1]
    xi = xi_star(spec, X, Y, u_act)
    sqt = np.sqrt(t)
    W = -basis.Sigma_t_isqrt @ basis.weighted_sum(xi) / sqt
    delta0 = theta0 - spec.theta_star
    R2 = basis.Sigma_isqrt @ (basis.U @ (basis.r0 * (basis.U.T @ delta0))) / sqt
    if np.allclose(spec.mu, 0.0):
        R3 = np.zeros(d)
    else:
        if trajectory is None or trajectory.stride != 1 or len(trajectory) < t - 2:
            raise ConfigError("R3 with mu != 0 needs a stride-1 trajectory covering t-2 steps")
        prev = np.vstack([theta0[None, :], trajectory.theta[: t - 2]])
        rho = _rho(basis, prev)
        R3 = -basis.Sigma_isqrt @ basis.weighted_sum(rho) / sqt
    scaled = sqt * basis.Sigma_isqrt @ (np.asarray(theta_bar_t, dtype=float) - spec.theta_star)
    return BahadurTerms(W, R2, R3, scaled - W - R2 - R3, scaled)


def _rho(basis: BahadurBasis, thetas: np.ndarray) -> np.ndarray:
    """``(H(theta) - H(theta*)) (theta - theta*)`` row-wise, exact convention."""
    spec = basis.spec
    p = spec.p
    mu = spec.mu
    diff = thetas[:, :p] - thetas[:, p:]
    norms = np.linalg.norm(diff, axis=1)
    nus = np.where(norms[:, None] > 0, diff / np.where(norms > 0, norms, 1.0)[:, None], spec.nu)
    delta = thetas - spec.theta_star
    eps = spec.eps
    u, v = 1.0 - eps / 2.0, eps / 2.0
    au, av = u * spec.scheme.phi(u), v * spec.scheme.phi(v)
    out = np.empty_like(delta)
    for k, (ca, cb) in enumerate(((au, av), (av, au))):
        D = delta[:, k * p:(k + 1) * p]
        # E[XX^T] v = v + mu (mu^T v); G2 v = E[XX^T] v - G1 v
        full = D + np.outer(D @ mu, mu)
        g1 = _apply_g1(mu, nus, D)
        out[:, k * p:(k + 1) * p] = ca * g1 + cb * (full - g1)
    return out - delta @ basis.oracle.H.T
