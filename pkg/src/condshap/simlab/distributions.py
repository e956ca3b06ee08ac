"""Feature distributions for the simulation experiments.

Three families, each with exact conditional samplers and densities so the
oracles can compute reference Shapley values: equicorrelated Gaussian,
generalized hyperbolic (a normal mean-variance mixture with a generalized
inverse Gaussian mixing variable), and a two-component Gaussian mixture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import kve

from ..coalitions import Coalition
from ..errors import InvalidCovarianceError
from ..oracles import QuadratureComponent
from ..samplers import TrainingMatrix, conditional_moments


# ---------------------------------------------------------------------------
# Gaussian with equicorrelated covariance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EquicorrelatedCov:
    """Unit-variance covariance with a common off-diagonal correlation."""

    m: int
    rho: float

    def __post_init__(self):
        lo = -1.0 / (self.m - 1) if self.m > 1 else -1.0
        if not (lo < self.rho < 1.0):
            raise ValueError(
                f"rho={self.rho} outside the positive-definite range ({lo:.4f}, 1)"
            )

    def matrix(self) -> np.ndarray:
        cov = np.full((self.m, self.m), self.rho)
        np.fill_diagonal(cov, 1.0)
        return cov


def _gaussian_logpdf(points: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(points)
    d = points.shape[1]
    if d == 0:
        return np.zeros(points.shape[0])
    chol = np.linalg.cholesky(cov)
    diff = points - mean[None, :]
    white = np.linalg.solve(chol, diff.T)
    quad = np.sum(white ** 2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * math.log(2.0 * math.pi) + logdet + quad)


def _sample_gaussian(
    mean: np.ndarray, cov: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    d = mean.shape[0]
    if d == 0:
        return np.empty((n, 0))
    try:
        factor = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(cov)
        factor = vecs * np.sqrt(np.clip(vals, 0.0, None))[None, :]
    return mean[None, :] + rng.standard_normal((n, d)) @ factor.T


@dataclass
class GaussianFeatures:
    """Multivariate Gaussian feature distribution with exact conditionals."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, float).reshape(-1)
        self.cov = np.asarray(self.cov, float)
        if self.cov.shape != (self.dim, self.dim):
            raise InvalidCovarianceError("covariance shape does not match mean")

    @classmethod
    def equicorrelated(cls, m: int, rho: float) -> "GaussianFeatures":
        return cls(mean=np.zeros(m), cov=EquicorrelatedCov(m, rho).matrix())

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return _sample_gaussian(self.mean, self.cov, n, rng)

    def conditional_mean(self, s: Coalition, x_s: np.ndarray) -> np.ndarray:
        mu, _ = conditional_moments(self.mean, self.cov, s, x_s)
        return mu

    def conditional_sample(
        self, s: Coalition, x_s: np.ndarray, n: int, rng: np.random.Generator
    ) -> np.ndarray:
        mu, sig = conditional_moments(self.mean, self.cov, s, x_s)
        return _sample_gaussian(mu, sig, n, rng)

    def conditional_components(
        self, s: Coalition, x_s: np.ndarray
    ) -> list[QuadratureComponent]:
        mu, sig = conditional_moments(self.mean, self.cov, s, x_s)
        sd = np.sqrt(np.clip(np.diag(sig), 1e-300, None))
        return [
            QuadratureComponent(
                weight=1.0,
                center=mu,
                sd=sd,
                density=lambda pts, mu=mu, sig=sig: np.exp(
                    _gaussian_logpdf(pts, mu, sig)
                ),
            )
        ]


def sample_equicorrelated_gaussian(
    m: int, rho: float, n: int, rng_seed
) -> TrainingMatrix:
    """n i.i.d. draws from N(0, Sigma(rho)) packaged as a training matrix."""
    dist = GaussianFeatures.equicorrelated(m, rho)
    data = dist.sample(n, np.random.default_rng(rng_seed))
    return TrainingMatrix.from_data(data)


# ---------------------------------------------------------------------------
# Generalized inverse Gaussian mixing variable
# ---------------------------------------------------------------------------


def _check_gig_params(lam: float, chi: float, psi: float) -> None:
    if not (chi > 0 and psi > 0):
        raise ValueError(
            f"GIG parameters need chi > 0 and psi > 0, got chi={chi}, psi={psi}"
        )
    if not np.isfinite(lam):
        raise ValueError("GIG index must be finite")


def gig_moment(lam: float, chi: float, psi: float, order: int = 1) -> float:
    """E[W^order] of GIG(lam, chi, psi) via Bessel-function ratios."""
    _check_gig_params(lam, chi, psi)
    omega = math.sqrt(chi * psi)
    ratio = kve(lam + order, omega) / kve(lam, omega)
    return float((chi / psi) ** (order / 2.0) * ratio)


def gig_mean(lam: float, chi: float, psi: float) -> float:
    return gig_moment(lam, chi, psi, 1)


def gig_variance(lam: float, chi: float, psi: float) -> float:
    m1 = gig_moment(lam, chi, psi, 1)
    return gig_moment(lam, chi, psi, 2) - m1 * m1


def sample_gig(lam: float, chi: float, psi: float, n: int, rng_seed) -> np.ndarray:
    """Draws from GIG(lam, chi, psi), strictly positive.

    Uses the two-parameter generalized inverse Gaussian sampler after the
    scale reduction W = sqrt(chi/psi) V with V ~ GIG(lam, w, w), w=sqrt(chi psi).
    """
    _check_gig_params(lam, chi, psi)
    rng = np.random.default_rng(rng_seed)
    omega = math.sqrt(chi * psi)
    v = stats.geninvgauss.rvs(p=lam, b=omega, size=n, random_state=rng)
    return math.sqrt(chi / psi) * v


def gig_logpdf(w: np.ndarray, lam: float, chi: float, psi: float) -> np.ndarray:
    """Log density of GIG(lam, chi, psi) on w > 0."""
    _check_gig_params(lam, chi, psi)
    w = np.asarray(w, float)
    omega = math.sqrt(chi * psi)
    log_norm = (lam / 2.0) * (math.log(psi) - math.log(chi)) - math.log(
        2.0 * kve(lam, omega)
    ) + omega
    out = np.full(w.shape, -np.inf)
    pos = w > 0
    out[pos] = (
        log_norm + (lam - 1.0) * np.log(w[pos]) - 0.5 * (chi / w[pos] + psi * w[pos])
    )
    return out


# ---------------------------------------------------------------------------
# Generalized hyperbolic distribution
# ---------------------------------------------------------------------------


@dataclass
class GHParams:
    """Symmetric-concentration GH parameters: W ~ GIG(lam, omega, omega)."""

    lam: float
    omega: float
    mu: np.ndarray
    sigma: np.ndarray
    beta_skew: np.ndarray

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        self.mu = np.asarray(self.mu, float).reshape(-1)
        self.beta_skew = np.asarray(self.beta_skew, float).reshape(-1)
        self.sigma = np.asarray(self.sigma, float)
        d = self.mu.shape[0]
        if self.sigma.shape != (d, d) or self.beta_skew.shape[0] != d:
            raise ValueError("GH parameter dimensions disagree")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @classmethod
    def from_kappa(cls, m: int, kappa: float, lam: float = 1.0, omega: float = 0.5) -> "GHParams":
        """Skewness ladder used by the 3-D experiments: beta = (kappa/4) 1,
        location shifted so the distribution has mean zero."""
        beta = (kappa / 4.0) * np.ones(m)
        mean_w = gig_mean(lam, omega, omega)
        return cls(
            lam=lam,
            omega=omega,
            mu=-mean_w * beta,
            sigma=np.eye(m),
            beta_skew=beta,
        )


def gh_params_10d() -> GHParams:
    """The explicit ten-feature parameter block used by the moderate-dimension
    experiment with skewed, heavy-tailed features."""
    return GHParams(
        lam=1.0,
        omega=0.5,
        mu=3.0 * np.ones(10),
        sigma=np.diag([1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 3.0]),
        beta_skew=np.array([1, 1, 1, 1, 1, 0.5, 0.5, 0.5, 0.5, 0.5], float),
    )


@dataclass
class GHStarParams:
    """General (lam, chi, psi) parameterization, closed under conditioning."""

    lam: float
    chi: float
    psi: float
    mu: np.ndarray
    sigma: np.ndarray
    beta_skew: np.ndarray

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def mixing_moments(self) -> tuple[float, float]:
        return (
            gig_mean(self.lam, self.chi, self.psi),
            gig_variance(self.lam, self.chi, self.psi),
        )

    def mean(self) -> np.ndarray:
        return self.mu + self.mixing_moments()[0] * self.beta_skew

    def covariance(self) -> np.ndarray:
        ew, vw = self.mixing_moments()
        return ew * self.sigma + vw * np.outer(self.beta_skew, self.beta_skew)


def _as_star(params: GHParams) -> GHStarParams:
    return GHStarParams(
        lam=params.lam,
        chi=params.omega,
        psi=params.omega,
        mu=params.mu,
        sigma=params.sigma,
        beta_skew=params.beta_skew,
    )


def sample_gh(params: GHParams, n: int, rng_seed) -> TrainingMatrix:
    """Draws via the mixture representation X = mu + W beta + sqrt(W) U."""
    rng = np.random.default_rng(rng_seed)
    data = _sample_gh_star(_as_star(params), n, rng)
    return TrainingMatrix.from_data(data)


def _sample_gh_star(star: GHStarParams, n: int, rng: np.random.Generator) -> np.ndarray:
    omega = math.sqrt(star.chi * star.psi)
    v = stats.geninvgauss.rvs(p=star.lam, b=omega, size=n, random_state=rng)
    w = math.sqrt(star.chi / star.psi) * v
    u = _sample_gaussian(np.zeros(star.dim), star.sigma, n, rng)
    return star.mu[None, :] + w[:, None] * star.beta_skew[None, :] + np.sqrt(w)[:, None] * u


def gh_conditional(
    params: GHParams | GHStarParams,
    s: Coalition,
    x_s: np.ndarray,
    psi_form: str = "inverse",
) -> GHStarParams:
    """Conditional GH law of the complement features given x_s.

    ``psi_form`` selects the psi update: "inverse" (standard conditioning,
    beta_1' Sigma_11^{-1} beta_1; the default) or "printed" (no inverse).
    """
    if psi_form not in ("inverse", "printed"):
        raise ValueError(f"unknown psi_form {psi_form!r}")
    star = _as_star(params) if isinstance(params, GHParams) else params
    s = tuple(sorted(s))
    d = star.dim
    sbar = tuple(j for j in range(d) if j not in s)
    if not s:
        return star
    x_s = np.asarray(x_s, float).reshape(-1)
    s_idx, sbar_idx = list(s), list(sbar)
    sig11 = star.sigma[np.ix_(s_idx, s_idx)]
    sig12 = star.sigma[np.ix_(s_idx, sbar_idx)]
    sig22 = star.sigma[np.ix_(sbar_idx, sbar_idx)]
    mu1, mu2 = star.mu[s_idx], star.mu[sbar_idx]
    beta1, beta2 = star.beta_skew[s_idx], star.beta_skew[sbar_idx]
    try:
        solved = np.linalg.solve(sig11, np.column_stack([sig12, (x_s - mu1), beta1]))
    except np.linalg.LinAlgError:
        sig11 = sig11 + 1e-10 * np.trace(sig11) / len(s_idx) * np.eye(len(s_idx))
        solved = np.linalg.solve(sig11, np.column_stack([sig12, (x_s - mu1), beta1]))
    b = solved[:, : len(sbar_idx)]
    shift = solved[:, len(sbar_idx)]
    beta_solved = solved[:, len(sbar_idx) + 1]
    lam_c = star.lam - len(s) / 2.0
    chi_c = star.chi + float((x_s - mu1) @ shift)
    if psi_form == "inverse":
        psi_c = star.psi + float(beta1 @ beta_solved)
    else:
        psi_c = star.psi + float(beta1 @ sig11 @ beta1)
    mu_c = mu2 + sig12.T @ shift
    sigma_c = sig22 - sig12.T @ b
    sigma_c = 0.5 * (sigma_c + sigma_c.T)
    beta_c = beta2 - sig12.T @ beta_solved
    return GHStarParams(
        lam=lam_c, chi=chi_c, psi=psi_c, mu=mu_c, sigma=sigma_c, beta_skew=beta_c
    )


def gh_star_logpdf(points: np.ndarray, star: GHStarParams) -> np.ndarray:
    """Log density of the (lam, chi, psi) GH law at the given points."""
    pts = np.atleast_2d(np.asarray(points, float))
    d = star.dim
    chol = np.linalg.cholesky(star.sigma)
    diff = pts - star.mu[None, :]
    white = np.linalg.solve(chol, diff.T)
    delta = np.sum(white ** 2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    beta_white = np.linalg.solve(chol, star.beta_skew)
    q = float(beta_white @ beta_white)  # beta' Sigma^{-1} beta
    skew_term = diff @ np.linalg.solve(star.sigma, star.beta_skew)
    nu = star.lam - d / 2.0
    arg = np.sqrt((star.chi + delta) * (star.psi + q))
    log_k_nu = np.log(kve(nu, arg)) - arg
    omega = math.sqrt(star.chi * star.psi)
    log_k_lam = math.log(kve(star.lam, omega)) - omega
    return (
        (nu / 2.0) * (np.log(star.chi + delta) - math.log(star.psi + q))
        + (star.lam / 2.0) * (math.log(star.psi) - math.log(star.chi))
        + log_k_nu
        - (d / 2.0) * math.log(2.0 * math.pi)
        - 0.5 * logdet
        - log_k_lam
        + skew_term
    )


@dataclass
class GHFeatures:
    """GH feature distribution exposing the oracle handle protocol."""

    params: GHParams
    psi_form: str = "inverse"

    @property
    def dim(self) -> int:
        return self.params.dim

    def star(self) -> GHStarParams:
        return _as_star(self.params)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return _sample_gh_star(self.star(), n, rng)

    def conditional_sample(
        self, s: Coalition, x_s: np.ndarray, n: int, rng: np.random.Generator
    ) -> np.ndarray:
        cond = gh_conditional(self.params, s, x_s, psi_form=self.psi_form)
        return _sample_gh_star(cond, n, rng)

    def conditional_components(
        self, s: Coalition, x_s: np.ndarray
    ) -> list[QuadratureComponent]:
        if not s:
            # The unconditional law integrates poorly as one tensor grid (a
            # skewed ridge along the mixing direction); decompose it into
            # Gaussians over mixing-variable quadrature nodes instead.
            return _gh_mixing_components(self.star())
        cond = gh_conditional(self.params, s, x_s, psi_form=self.psi_form)
        center = cond.mean()
        sd = np.sqrt(np.clip(np.diag(cond.covariance()), 1e-300, None))
        lo, hi = _gh_quadrature_box(cond, center, sd)
        return [
            QuadratureComponent(
                weight=1.0,
                center=center,
                sd=sd,
                density=lambda pts, cond=cond: np.exp(gh_star_logpdf(pts, cond)),
                lo=lo,
                hi=hi,
            )
        ]


# ---------------------------------------------------------------------------
# Two-component Gaussian mixture
# ---------------------------------------------------------------------------


def _gh_mixing_components(
    star: GHStarParams, n_nodes: int = 48, tail_exponent: float = 25.0
) -> list[QuadratureComponent]:
    """Gaussian-mixture decomposition of a GH law over its mixing variable.

    X | W=w is N(mu + w beta, w Sigma); the mixing density is discretized by
    Gauss-Legendre in log w between the points where its left/right
    exponential tails reach ``tail_exponent``.  The weights sum to 1 up to
    the (tiny) truncation error, which the refinement check would surface.
    """
    lo = math.log(star.chi / (2.0 * tail_exponent))
    hi = math.log(2.0 * tail_exponent / star.psi)
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    t = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    glw = 0.5 * (hi - lo) * weights
    w = np.exp(t)
    mass = np.exp(gig_logpdf(w, star.lam, star.chi, star.psi)) * w * glw
    comps = []
    for wk, pk in zip(w, mass):
        mean = star.mu + wk * star.beta_skew
        cov = wk * star.sigma
        sd = np.sqrt(np.clip(np.diag(cov), 1e-300, None))
        comps.append(
            QuadratureComponent(
                weight=float(pk),
                center=mean,
                sd=sd,
                density=lambda pts, mean=mean, cov=cov: np.exp(
                    _gaussian_logpdf(pts, mean, cov)
                ),
            )
        )
    return comps


def _gh_quadrature_box(
    star: GHStarParams,
    center: np.ndarray,
    sd: np.ndarray,
    tail_exponent: float = 20.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Asymmetric integration bounds covering the semi-heavy GH tails.

    The marginal of coordinate i decays like exp(-a |z|) with
    a = sqrt((psi + beta_i^2/S_ii)/S_ii) -/+ beta_i/S_ii on the right/left;
    the box extends to where that exponent reaches ``tail_exponent``
    (relative mass ~ 2e-9), and never less than eight sds.
    """
    s_diag = np.clip(np.diag(star.sigma), 1e-12, None)
    beta = star.beta_skew
    root = np.sqrt((star.psi + beta**2 / s_diag) / s_diag)
    a_right = np.clip(root - beta / s_diag, 1e-9, None)
    a_left = np.clip(root + beta / s_diag, 1e-9, None)
    mu = star.mu
    hi = np.maximum(center + 8.0 * sd, mu + tail_exponent / a_right)
    lo = np.minimum(center - 8.0 * sd, mu - tail_exponent / a_left)
    return lo, hi


@dataclass
class MixtureParams:
    """Equal-weight two-component Gaussian mixture with opposite means."""

    gamma: float
    means: np.ndarray  # (2, m)
    cov: np.ndarray
    weights: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        self.means = np.asarray(self.means, float)
        self.cov = np.asarray(self.cov, float)
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")

    @classmethod
    def from_gamma(cls, gamma: float, m: int = 3, base_rho: float = 0.2) -> "MixtureParams":
        """Mode-separation parameterization: mu1 = gamma*(1,-0.5,1), mu2 = -mu1."""
        pattern = np.resize(np.array([1.0, -0.5, 1.0]), m)
        mu1 = gamma * pattern
        return cls(
            gamma=gamma,
            means=np.stack([mu1, -mu1]),
            cov=EquicorrelatedCov(m, base_rho).matrix(),
        )

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass
class MixtureFeatures:
    """Gaussian mixture with posterior-weighted exact conditionals."""

    params: MixtureParams

    @property
    def dim(self) -> int:
        return self.params.dim

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        p = self.params
        comp = rng.random(n) < p.weights[1]
        out = _sample_gaussian(np.zeros(self.dim), p.cov, n, rng)
        out += np.where(comp[:, None], p.means[1][None, :], p.means[0][None, :])
        return out

    def posterior_weights(self, s: Coalition, x_s: np.ndarray) -> np.ndarray:
        p = self.params
        if not s:
            return np.asarray(p.weights, float)
        x_s = np.asarray(x_s, float).reshape(1, -1)
        s_idx = list(s)
        logs = np.array(
            [
                math.log(p.weights[k])
                + _gaussian_logpdf(x_s, p.means[k][s_idx], p.cov[np.ix_(s_idx, s_idx)])[0]
                for k in range(2)
            ]
        )
        logs -= logs.max()
        w = np.exp(logs)
        return w / w.sum()

    def conditional_sample(
        self, s: Coalition, x_s: np.ndarray, n: int, rng: np.random.Generator
    ) -> np.ndarray:
        p = self.params
        post = self.posterior_weights(s, x_s)
        comp = rng.random(n) < post[1]
        out = np.empty((n, self.dim - len(s)))
        for k in range(2):
            mask = comp == bool(k)
            if not np.any(mask):
                continue
            mu, sig = conditional_moments(p.means[k], p.cov, s, x_s)
            out[mask] = _sample_gaussian(mu, sig, int(mask.sum()), rng)
        return out

    def conditional_components(
        self, s: Coalition, x_s: np.ndarray
    ) -> list[QuadratureComponent]:
        p = self.params
        post = self.posterior_weights(s, x_s)
        comps = []
        for k in range(2):
            mu, sig = conditional_moments(p.means[k], p.cov, s, x_s)
            sd = np.sqrt(np.clip(np.diag(sig), 1e-300, None))
            comps.append(
                QuadratureComponent(
                    weight=float(post[k]),
                    center=mu,
                    sd=sd,
                    density=lambda pts, mu=mu, sig=sig: np.exp(
                        _gaussian_logpdf(pts, mu, sig)
                    ),
                )
            )
        return comps

    def conditional_density(self, s: Coalition, x_s: np.ndarray):
        """Posterior-weighted mixture density over the complement features."""
        comps = self.conditional_components(s, x_s)

        def density(points: np.ndarray) -> np.ndarray:
            return sum(c.weight * c.density(points) for c in comps)

        return density


def sample_mixture(params: MixtureParams, n: int, rng_seed) -> TrainingMatrix:
    data = MixtureFeatures(params).sample(n, np.random.default_rng(rng_seed))
    return TrainingMatrix.from_data(data)
