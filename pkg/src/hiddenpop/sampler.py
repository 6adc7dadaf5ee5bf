"""Data-augmented Gibbs sampler for the five-component spatial panel model.

The response decomposes as

    y_it = x_it' beta + alpha_i + v_i - eta_i+ - u_it+ + eps_it

with alpha_i ~ N(0, s2_alpha), eps_it ~ N(0, s2_eps), eta_i+ and u_it+
half-normal one-sided errors, and v an intrinsic CAR field. alpha is never
sampled: it is marginalised exactly through the compound symmetric panel
covariance Sigma = s2_eps I + s2_alpha 11'.

One sweep updates, in order:

    beta            K-variate normal (GLS form through Sigma^{-1})
    u+              truncated-MVN block, one coordinate at a time
    eta+            truncated normal per region
    v               sequential CAR sweep, each region seeing the latest
                    values of its neighbours
    (level)         joint (v, eta+) translation move, stabilized runs only
    s2_v            scaled chi-squared using the pairwise CAR quadratic form
    s2_u, s2_eta    inverse gamma
    s2_alpha, s2_eps  Metropolis-Hastings with median-centred chi2(1)
                    multiplicative proposals

All updates draw from exact full conditionals except the Metropolis moves.
Everything is deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2 as chi2_dist

from .data import PanelDataset
from .kernels import (
    CompoundSymmetricCov,
    NumericalError,
    make_rng,
    mh_scaled_chisq_step,
    sample_inverse_gamma,
    truncated_normal,
)
from .spatial import SpatialGraph, car_quadratic_form

VARIANCE_FLOOR = 1e-12


@dataclass
class PriorConfig:
    """Hyperparameters: vague normal slopes, scaled chi-squared scales for
    the two-sided variances, median-anchored inverse gamma for the
    one-sided variances (r_star is the prior median report rate)."""

    beta_mean: np.ndarray | None = None   # None -> zero vector
    beta_cov_scale: float = 1000.0
    qbar_eps: float = 1e-4
    qbar_alpha: float = 1e-4
    qbar_v: float = 1e-4
    nbar_eps: float = 1.0
    nbar_alpha: float = 1.0
    nbar_v: float = 1.0
    v0_u: float = 10.0
    v0_eta: float = 10.0
    r_star_u: float = 0.85
    r_star_eta: float = 0.70

    def __post_init__(self):
        for name in ("beta_cov_scale", "qbar_eps", "qbar_alpha", "qbar_v",
                     "nbar_eps", "nbar_alpha", "nbar_v", "v0_u", "v0_eta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("r_star_u", "r_star_eta"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")

    def beta_mean_vector(self, k: int) -> np.ndarray:
        if self.beta_mean is None:
            return np.zeros(k)
        mean = np.asarray(self.beta_mean, dtype=float)
        if mean.shape != (k,):
            raise ValueError(f"beta_mean must have length {k}")
        return mean

    def ig_scale_u(self) -> float:
        return self.v0_u * math.log(self.r_star_u) ** 2

    def ig_scale_eta(self) -> float:
        return self.v0_eta * math.log(self.r_star_eta) ** 2


@dataclass
class ChainConfig:
    """Chain settings.

    The error decomposition of this model is only weakly identified: the
    marginalised heterogeneity, the intrinsic spatial field and the
    permanent one-sided error all compete for region-level variation, and
    the transient one-sided error competes with the noise for cell-level
    variation. A finite chain can wander into degenerate allocations
    (spatial variance collapsing to zero while another channel absorbs
    everything). `stabilize` keeps the decomposition away from those
    corners with four switchable guards: a truncated-prior band on the
    heterogeneity variance and a truncated-prior floor on the spatial
    variance (both scaled to the between-region residual variance), a
    truncated-prior floor on the noise variance (within-region scale),
    and an extra Metropolis move along the level direction the likelihood
    cannot see (spatial level vs permanent one-sided level). Explicit
    cap/floor values override the derived ones.
    """

    n_iter: int = 20000
    burn_in: int = 10000
    thin: int = 5
    seed: int = 0
    mh_step_scale_alpha: float = 0.25
    mh_step_scale_eps: float = 0.4
    center_car: bool = False
    car_df: int | None = None   # None -> (N - 1) + nbar_v, the rank of the CAR precision
    stabilize: bool = True
    sigma2_alpha_floor: float | None = None
    sigma2_alpha_cap: float | None = None
    sigma2_eps_floor: float | None = None
    sigma2_v_floor: float | None = None

    def __post_init__(self):
        if self.burn_in >= self.n_iter:
            raise ValueError("burn_in must be smaller than n_iter")
        if self.burn_in < 0 or self.thin < 1:
            raise ValueError("burn_in must be >= 0 and thin >= 1")

    @property
    def n_stored(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin


@dataclass
class ParameterState:
    """One full draw of the augmented parameter vector."""

    beta: np.ndarray
    u_plus: np.ndarray     # (N, T), strictly positive
    eta_plus: np.ndarray   # (N,), strictly positive
    v: np.ndarray          # (N,)
    sigma2_alpha: float
    sigma2_eps: float
    sigma2_v: float
    sigma2_u: float
    sigma2_eta: float

    def validate(self) -> None:
        if np.any(self.u_plus <= 0) or np.any(self.eta_plus <= 0):
            raise ValueError("one-sided errors must be strictly positive")
        for name in ("sigma2_alpha", "sigma2_eps", "sigma2_v", "sigma2_u", "sigma2_eta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass
class PosteriorDraws:
    """Thinned post-burn-in chain plus the metadata needed downstream."""

    beta: np.ndarray          # (S, K)
    u_plus: np.ndarray        # (S, N, T)
    eta_plus: np.ndarray      # (S, N)
    v: np.ndarray             # (S, N)
    sigma2_alpha: np.ndarray  # (S,)
    sigma2_eps: np.ndarray
    sigma2_v: np.ndarray
    sigma2_u: np.ndarray
    sigma2_eta: np.ndarray
    seed: int
    n_iter: int
    burn_in: int
    thin: int
    avg_row_sum: float
    accept_rate_alpha: float
    accept_rate_eps: float
    floored_count: int
    chain_id: np.ndarray = field(default=None)  # (S,) chain index per draw

    def __post_init__(self):
        if self.chain_id is None:
            self.chain_id = np.zeros(self.beta.shape[0], dtype=np.int64)

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]

    @property
    def n_regions(self) -> int:
        return self.u_plus.shape[1]

    @property
    def n_periods(self) -> int:
        return self.u_plus.shape[2]


def _residual(data: PanelDataset, state: ParameterState, *, u=True, eta=True, v=True):
    """y - X beta minus the requested latent components, shape (N, T)."""
    r = data.y - np.einsum("ntk,k->nt", data.x, state.beta)
    if u:
        r = r - state.u_plus
    if v:
        r = r - state.v[:, None]
    if eta:
        r = r - state.eta_plus[:, None]
    return r


def beta_posterior_moments(state: ParameterState, data: PanelDataset, prior: PriorConfig):
    """Mean and covariance of the slope full conditional.

    Precision = sum_i X_i' Sigma^{-1} X_i + B0^{-1}; the Sigma^{-1} products
    use the rank-one form so the sum costs O(N T K^2).
    """
    n, t, k = data.x.shape
    cov = CompoundSymmetricCov(state.sigma2_eps, state.sigma2_alpha, t)
    a, c = cov.inverse_factors
    ytil = data.y - state.u_plus - state.v[:, None] - state.eta_plus[:, None]
    xs = data.x.sum(axis=1)                       # (N, K), X_i' 1
    gram = a * np.einsum("ntk,ntl->kl", data.x, data.x) - c * xs.T @ xs
    rhs = a * np.einsum("ntk,nt->k", data.x, ytil) - c * xs.T @ ytil.sum(axis=1)

    prec = gram + np.eye(k) / prior.beta_cov_scale
    rhs = rhs + prior.beta_mean_vector(k) / prior.beta_cov_scale
    try:
        chol = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "slope posterior precision is not positive definite", np.linalg.cond(prec)
        ) from exc
    mean = np.linalg.solve(prec, rhs)
    cov_beta = np.linalg.inv(prec)
    return mean, cov_beta, chol


def update_beta(state: ParameterState, data: PanelDataset, prior: PriorConfig,
                rng: np.random.Generator) -> np.ndarray:
    mean, _, chol = beta_posterior_moments(state, data, prior)
    z = rng.standard_normal(mean.size)
    # chol is the lower factor of the precision; solve L' x = z gives a
    # draw with covariance prec^{-1}.
    return mean + np.linalg.solve(chol.T, z)


def _omega_factors(state: ParameterState, t: int) -> tuple[float, float]:
    """(e, f) with Omega = (Sigma^{-1} + I/s2_u)^{-1} = e I + f 11'."""
    cov = CompoundSymmetricCov(state.sigma2_eps, state.sigma2_alpha, t)
    a, c = cov.inverse_factors
    p = a + 1.0 / state.sigma2_u
    e = 1.0 / p
    f = c / (p * (p - t * c))
    return e, f


def update_u_plus(state: ParameterState, data: PanelDataset,
                  rng: np.random.Generator) -> np.ndarray:
    """Gibbs sub-sweep over t = 1..T of the truncated-MVN block.

    The joint conditional of u_i+ is N(mu, Omega) restricted to the
    positive orthant with Omega = (Sigma^{-1} + I/s2_u)^{-1}. Because Omega
    is compound symmetric, the univariate conditional of coordinate t given
    the others has closed-form mean mu_t + k (sum_{s != t} (u_s - mu_s))
    and a variance shared by all coordinates; regions are conditionally
    independent, so each step draws all N coordinates at once.
    """
    n, t = data.y.shape
    cov = CompoundSymmetricCov(state.sigma2_eps, state.sigma2_alpha, t)
    a, c = cov.inverse_factors
    e, f = _omega_factors(state, t)

    r = _residual(data, state, u=False)
    row = r.sum(axis=1)
    # mu = Omega Sigma^{-1} r reduces to e*a*r + kappa * (1'r) per cell.
    kappa = f * (a - c * t) - e * c
    mu = e * a * r + kappa * row[:, None]

    coupling = f / (e + (t - 1) * f)
    cond_sd = math.sqrt(e * (e + t * f) / (e + (t - 1) * f))

    u = state.u_plus.copy()
    resid_sum = (u - mu).sum(axis=1)
    for s in range(t):
        dev = u[:, s] - mu[:, s]
        cond_mean = mu[:, s] + coupling * (resid_sum - dev)
        new = truncated_normal(cond_mean, cond_sd, 0.0, rng=rng)
        resid_sum += new - u[:, s]
        u[:, s] = new
    return u


def update_eta_plus(state: ParameterState, data: PanelDataset,
                    rng: np.random.Generator) -> np.ndarray:
    """Truncated normal N+(m_i, psi2) with psi2 = s2_eta / (1 + s2_eta 1'Sigma^{-1}1)."""
    n, t = data.y.shape
    denom = state.sigma2_eps + t * state.sigma2_alpha
    one_inv_one = t / denom
    psi2 = state.sigma2_eta / (1.0 + state.sigma2_eta * one_inv_one)
    r = _residual(data, state, eta=False)
    m = psi2 * r.sum(axis=1) / denom
    return truncated_normal(m, math.sqrt(psi2), 0.0, rng=rng)


def update_v(state: ParameterState, data: PanelDataset, graph: SpatialGraph,
             rng: np.random.Generator, center: bool = False) -> np.ndarray:
    """Sequential CAR sweep.

    Region i's full conditional is normal with precision
    1'Sigma^{-1}1 + row_sum_i / s2_v and mean proportional to the data
    pull plus the weighted sum of the *current* neighbour values, so the
    sweep must be sequential.
    """
    n, t = data.y.shape
    denom = state.sigma2_eps + t * state.sigma2_alpha
    one_inv_one = t / denom
    r = _residual(data, state, v=False)
    data_pull = r.sum(axis=1) / denom          # 1' Sigma^{-1} r_i

    v = state.v.copy()
    z = rng.standard_normal(n)
    inv_s2v = 1.0 / state.sigma2_v
    neighbors, weights, row_sums = graph.neighbors, graph.weights, graph.row_sums
    for i in range(n):
        prec = one_inv_one + row_sums[i] * inv_s2v
        var = 1.0 / prec
        mean = var * (data_pull[i] + inv_s2v * np.dot(weights[i], v[neighbors[i]]))
        v[i] = mean + math.sqrt(var) * z[i]
    if center:
        v -= v.mean()
    return v


def update_sigma2_v(state: ParameterState, graph: SpatialGraph, prior: PriorConfig,
                    rng: np.random.Generator, df: float | None = None,
                    floor: float = 0.0) -> float:
    """Scaled chi-squared draw: (qbar_v + v'(D_w - W)v) / chi2(df).

    The default df is (N - 1) + nbar_v: the quadratic form has rank N - 1
    on a connected graph, so this is the conditional implied by the
    intrinsic CAR joint law. Any other df (e.g. N*T + nbar_v) can be
    passed explicitly. A positive floor truncates the prior support below;
    the draw then comes from the truncated conditional via its inverse CDF.
    """
    quad = car_quadratic_form(graph, state.v)
    dof = (graph.n_regions - 1 + prior.nbar_v) if df is None else float(df)
    scale = prior.qbar_v + quad
    if floor <= 0.0:
        return scale / rng.chisquare(dof)
    # sigma2_v >= floor  <=>  chi2 draw <= scale / floor
    upper_mass = chi2_dist.cdf(scale / floor, dof)
    if upper_mass <= 0.0:
        return floor
    draw = chi2_dist.ppf(rng.uniform() * upper_mass, dof)
    return max(scale / draw, floor)


def update_sigma2_u(state: ParameterState, prior: PriorConfig,
                    rng: np.random.Generator) -> float:
    n_total = state.u_plus.size
    shape = 0.5 * (n_total + prior.v0_u)
    scale = 0.5 * (float(np.sum(state.u_plus**2)) + 2.0 * prior.ig_scale_u())
    return sample_inverse_gamma(shape, scale, rng)


def update_sigma2_eta(state: ParameterState, prior: PriorConfig,
                      rng: np.random.Generator) -> float:
    n = state.eta_plus.size
    shape = 0.5 * (n + prior.v0_eta)
    scale = 0.5 * (float(np.sum(state.eta_plus**2)) + 2.0 * prior.ig_scale_eta())
    return sample_inverse_gamma(shape, scale, rng)


def _marginal_loglik_terms(data: PanelDataset, state: ParameterState):
    """Sufficient statistics of the Sigma-marginalised Gaussian likelihood."""
    resid = _residual(data, state)
    ss = float(np.sum(resid * resid))
    rows = resid.sum(axis=1)
    ss_rows = float(np.sum(rows * rows))
    return ss, ss_rows


def _scaled_chisq_log_prior(s2, qbar: float, nbar: float):
    """Log density of s2 when qbar / s2 ~ chi2(nbar)."""
    s2 = np.asarray(s2, dtype=float)
    return -(0.5 * nbar + 1.0) * np.log(s2) - 0.5 * qbar / s2


def update_sigma2_alpha_eps_mh(state: ParameterState, data: PanelDataset,
                               prior: PriorConfig, rng: np.random.Generator,
                               step_scale_alpha: float = 1.0,
                               step_scale_eps: float = 1.0,
                               alpha_cap: float = math.inf,
                               alpha_floor: float = 0.0,
                               eps_floor: float = 0.0):
    """Two independent MH moves for the heterogeneity and noise variances.

    Both targets are the Sigma-marginalised Gaussian likelihood times a
    scaled chi-squared prior; neither conditional has a standard form
    because the parameter enters through both |Sigma| and Sigma^{-1}.
    alpha_cap / eps_floor truncate the respective prior supports; proposals
    outside are rejected, which is exact MH for the truncated-prior model.
    """
    n, t = data.y.shape
    ss, ss_rows = _marginal_loglik_terms(data, state)

    def loglik(s2_alpha: float, s2_eps: float) -> float:
        cov = CompoundSymmetricCov(s2_eps, s2_alpha, t)
        a, c = cov.inverse_factors
        return -0.5 * n * cov.logdet - 0.5 * (a * ss - c * ss_rows)

    s2_eps_cur = state.sigma2_eps

    def target_alpha(s2):
        s2 = float(s2)
        if s2 > alpha_cap or s2 < alpha_floor:
            return -math.inf
        return loglik(s2, s2_eps_cur) + float(
            _scaled_chisq_log_prior(s2, prior.qbar_alpha, prior.nbar_alpha)
        )

    new_alpha, acc_alpha = mh_scaled_chisq_step(
        target_alpha, state.sigma2_alpha, rng, step_scale_alpha
    )
    new_alpha = float(new_alpha)

    def target_eps(s2):
        s2 = float(s2)
        if s2 < eps_floor:
            return -math.inf
        return loglik(new_alpha, s2) + float(
            _scaled_chisq_log_prior(s2, prior.qbar_eps, prior.nbar_eps)
        )

    new_eps, acc_eps = mh_scaled_chisq_step(
        target_eps, state.sigma2_eps, rng, step_scale_eps
    )
    return new_alpha, float(new_eps), (bool(acc_alpha), bool(acc_eps))


def update_level(state: ParameterState, rng: np.random.Generator) -> bool:
    """Metropolis move along the level direction the likelihood cannot see.

    Shifting the spatial field and the permanent one-sided errors together
    leaves every residual unchanged (the fit depends on their difference)
    and leaves the CAR quadratic form unchanged, so the acceptance ratio
    involves only the half-normal prior of the permanent errors. Without
    this move the common level performs an unconstrained random walk.
    Operates on the mirrored-sign fields used inside the chain.
    """
    n = state.eta_plus.size
    scale = 0.5 * math.sqrt(state.sigma2_eta / n)
    delta = rng.normal(0.0, scale)
    eta_new = state.eta_plus - delta
    if eta_new.min() <= 0.0:
        return False
    log_ratio = 0.5 * (
        float(np.sum(state.eta_plus**2)) - float(np.sum(eta_new**2))
    ) / state.sigma2_eta
    if -rng.exponential() < log_ratio:
        state.eta_plus = eta_new
        state.v = state.v + delta
        return True
    return False


def residual_variance_split(data: PanelDataset) -> tuple[float, float, np.ndarray]:
    """(between_var, within_var, region_means) of pooled-OLS residuals."""
    n, t, k = data.x.shape
    xf = data.x.reshape(n * t, k)
    yf = data.y.reshape(n * t)
    beta, *_ = np.linalg.lstsq(xf, yf, rcond=None)
    resid = (yf - xf @ beta).reshape(n, t)
    region_means = resid.mean(axis=1)
    within_var = float(np.var(resid - region_means[:, None]))
    between_var = float(np.var(region_means))
    return between_var, within_var, region_means


def initial_state(data: PanelDataset, prior: PriorConfig) -> ParameterState:
    """Deterministic starting point.

    Pooled least squares for the slopes; the centred region means of the
    residuals seed the spatial field. Starting v at zero is a trap: the CAR
    quadratic form would be zero, the first s2_v draw would be near the
    prior scale qbar_v, and the field would be frozen flat for the rest of
    the run. Region-level variation is deliberately assigned to v rather
    than to the (marginalised) heterogeneity at the start, since the data
    alone cannot separate the two.
    """
    n, t, k = data.x.shape
    xf = data.x.reshape(n * t, k)
    yf = data.y.reshape(n * t)
    beta, *_ = np.linalg.lstsq(xf, yf, rcond=None)
    between_var, within_var, region_means = residual_variance_split(data)

    s2_u = prior.ig_scale_u() / max(0.5 * prior.v0_u - 1.0, 0.5)
    s2_eta = prior.ig_scale_eta() / max(0.5 * prior.v0_eta - 1.0, 0.5)
    return ParameterState(
        beta=beta,
        u_plus=np.full((n, t), math.sqrt(s2_u)),
        eta_plus=np.full(n, math.sqrt(s2_eta)),
        v=region_means - region_means.mean(),
        sigma2_alpha=max(1e-3 * between_var, 1e-6),
        sigma2_eps=max(within_var, 1e-4),
        sigma2_v=max(between_var, 1e-4),
        sigma2_u=s2_u,
        sigma2_eta=s2_eta,
    )


class SamplerError(RuntimeError):
    """Numerical failure inside the chain, annotated with the iteration."""


def run_chain(data: PanelDataset, graph: SpatialGraph,
              prior: PriorConfig | None = None,
              chain: ChainConfig | None = None,
              chain_id: int = 0,
              rng: np.random.Generator | None = None) -> PosteriorDraws:
    """Run one chain and return the thinned post-burn-in draws.

    Sweep order: beta, u+, eta+, v, s2_v, s2_u, s2_eta, then the two MH
    moves. Variances are floored at 1e-12 after each draw; floor events
    are counted and reported on the result.
    """
    prior = prior or PriorConfig()
    chain = chain or ChainConfig()
    if graph.n_regions != data.n_regions:
        raise ValueError(
            f"graph has {graph.n_regions} regions but panel has {data.n_regions}"
        )
    rng = rng if rng is not None else make_rng(chain.seed)

    # The one-sided components depress the observed response, while every
    # update below is written for the mirrored model in which they enter
    # positively. The chain therefore runs on the negated panel; beta and
    # the spatial field flip sign on output, everything else is invariant.
    work = PanelDataset(y=-data.y, x=data.x, regions=data.regions, times=data.times)

    n, t, k = work.x.shape
    state = initial_state(work, prior)
    n_stored = chain.n_stored

    alpha_cap = math.inf
    alpha_floor = 0.0
    eps_floor = 0.0
    v_floor = 0.0
    if chain.stabilize:
        between_var, within_var, _ = residual_variance_split(work)
        alpha_floor = 0.35 * between_var / t
        alpha_cap = 2.0 * between_var / t
        eps_floor = 0.05 * within_var
        v_floor = 0.1 * between_var
    if chain.sigma2_alpha_floor is not None:
        alpha_floor = chain.sigma2_alpha_floor
    if chain.sigma2_alpha_cap is not None:
        alpha_cap = chain.sigma2_alpha_cap
    if chain.sigma2_eps_floor is not None:
        eps_floor = chain.sigma2_eps_floor
    if chain.sigma2_v_floor is not None:
        v_floor = chain.sigma2_v_floor
    if math.isfinite(alpha_cap):
        state.sigma2_alpha = math.sqrt(max(alpha_floor, 1e-12) * alpha_cap) \
            if alpha_floor > 0 else min(state.sigma2_alpha, 0.5 * alpha_cap)
    state.sigma2_alpha = max(state.sigma2_alpha, alpha_floor)
    state.sigma2_eps = max(state.sigma2_eps, eps_floor)

    out = PosteriorDraws(
        beta=np.empty((n_stored, k)),
        u_plus=np.empty((n_stored, n, t)),
        eta_plus=np.empty((n_stored, n)),
        v=np.empty((n_stored, n)),
        sigma2_alpha=np.empty(n_stored),
        sigma2_eps=np.empty(n_stored),
        sigma2_v=np.empty(n_stored),
        sigma2_u=np.empty(n_stored),
        sigma2_eta=np.empty(n_stored),
        seed=chain.seed,
        n_iter=chain.n_iter,
        burn_in=chain.burn_in,
        thin=chain.thin,
        avg_row_sum=graph.average_degree,
        accept_rate_alpha=0.0,
        accept_rate_eps=0.0,
        floored_count=0,
        chain_id=np.full(n_stored, chain_id, dtype=np.int64),
    )

    floored = 0
    accepted_alpha = 0
    accepted_eps = 0
    stored = 0

    def floor_var(value: float) -> float:
        nonlocal floored
        if value < VARIANCE_FLOOR:
            floored += 1
            return VARIANCE_FLOOR
        return value

    for it in range(1, chain.n_iter + 1):
        try:
            state.beta = update_beta(state, work, prior, rng)
            state.u_plus = update_u_plus(state, work, rng)
            state.eta_plus = update_eta_plus(state, work, rng)
            state.v = update_v(state, work, graph, rng, center=chain.center_car)
            if chain.stabilize:
                update_level(state, rng)
            state.sigma2_v = floor_var(
                update_sigma2_v(state, graph, prior, rng, df=chain.car_df, floor=v_floor)
            )
            state.sigma2_u = floor_var(update_sigma2_u(state, prior, rng))
            state.sigma2_eta = floor_var(update_sigma2_eta(state, prior, rng))
            s2a, s2e, (acc_a, acc_e) = update_sigma2_alpha_eps_mh(
                state, work, prior, rng,
                chain.mh_step_scale_alpha, chain.mh_step_scale_eps,
                alpha_cap=alpha_cap, alpha_floor=alpha_floor, eps_floor=eps_floor,
            )
            state.sigma2_alpha = floor_var(s2a)
            state.sigma2_eps = floor_var(s2e)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            raise SamplerError(f"iteration {it}: {exc}") from exc
        accepted_alpha += acc_a
        accepted_eps += acc_e

        if it > chain.burn_in and (it - chain.burn_in) % chain.thin == 0:
            out.beta[stored] = -state.beta
            out.u_plus[stored] = state.u_plus
            out.eta_plus[stored] = state.eta_plus
            out.v[stored] = -state.v
            out.sigma2_alpha[stored] = state.sigma2_alpha
            out.sigma2_eps[stored] = state.sigma2_eps
            out.sigma2_v[stored] = state.sigma2_v
            out.sigma2_u[stored] = state.sigma2_u
            out.sigma2_eta[stored] = state.sigma2_eta
            stored += 1

    out.accept_rate_alpha = accepted_alpha / chain.n_iter
    out.accept_rate_eps = accepted_eps / chain.n_iter
    out.floored_count = floored
    return out


def run_chains(data: PanelDataset, graph: SpatialGraph,
               prior: PriorConfig | None = None,
               chain: ChainConfig | None = None,
               n_chains: int = 1,
               max_workers: int | None = None) -> PosteriorDraws:
    """Run n_chains independent chains with split seeds and stack the draws."""
    chain = chain or ChainConfig()
    if n_chains < 1:
        raise ValueError("n_chains must be >= 1")
    rngs = [np.random.default_rng(s)
            for s in np.random.SeedSequence(chain.seed).spawn(n_chains)]
    if n_chains == 1:
        return run_chain(data, graph, prior, chain, chain_id=0, rng=rngs[0])

    from concurrent.futures import ThreadPoolExecutor

    def worker(idx: int) -> PosteriorDraws:
        return run_chain(data, graph, prior, chain, chain_id=idx, rng=rngs[idx])

    with ThreadPoolExecutor(max_workers=max_workers or min(n_chains, 4)) as pool:
        results = list(pool.map(worker, range(n_chains)))
    return stack_draws(results)


def stack_draws(parts: list[PosteriorDraws]) -> PosteriorDraws:
    first = parts[0]
    cat = lambda name: np.concatenate([getattr(p, name) for p in parts], axis=0)
    return PosteriorDraws(
        beta=cat("beta"),
        u_plus=cat("u_plus"),
        eta_plus=cat("eta_plus"),
        v=cat("v"),
        sigma2_alpha=cat("sigma2_alpha"),
        sigma2_eps=cat("sigma2_eps"),
        sigma2_v=cat("sigma2_v"),
        sigma2_u=cat("sigma2_u"),
        sigma2_eta=cat("sigma2_eta"),
        seed=first.seed,
        n_iter=first.n_iter,
        burn_in=first.burn_in,
        thin=first.thin,
        avg_row_sum=first.avg_row_sum,
        accept_rate_alpha=float(np.mean([p.accept_rate_alpha for p in parts])),
        accept_rate_eps=float(np.mean([p.accept_rate_eps for p in parts])),
        floored_count=int(sum(p.floored_count for p in parts)),
        chain_id=cat("chain_id"),
    )
