"""Estimators of the contribution function v(S) = E[f(x) | x_S = x_S*].

Five strategies are provided: independence (the original kernel-weighted
approach), multivariate Gaussian conditioning, Gaussian copula with empirical
margins, an empirical conditional estimator driven by kernel weights on a
scaled Mahalanobis distance, and a combined scheme that uses the empirical
estimator for small conditioning sets and a parametric backend otherwise.

All estimators depend on the predictor only through the contract: a
deterministic vectorized map from an (n, m) float matrix to n reals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import DiagnosticWarning, InvalidCovarianceError, ModelProtocolError
from .coalitions import Coalition

Predictor = Callable[[np.ndarray], np.ndarray]

DEFAULT_AICC_GRID = (0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2)
DEFAULT_N_AICC = 400


class PredictorError(RuntimeError):
    """Predictor raised on a synthetic batch; the batch head is attached."""

    def __init__(self, message: str, rows: np.ndarray):
        super().__init__(message)
        self.rows = rows


def call_predictor(predictor: Predictor, rows: np.ndarray) -> np.ndarray:
    """Invoke the predictor, validating the output shape.

    Model-protocol errors carry their own context and propagate unwrapped;
    anything else is wrapped with the offending batch attached.
    """
    rows = np.atleast_2d(np.asarray(rows, float))
    try:
        out = np.asarray(predictor(rows), float)
    except ModelProtocolError:
        raise
    except Exception as exc:
        head = rows[0] if len(rows) else rows
        raise PredictorError(
            f"predictor failed on a synthetic batch of {len(rows)} rows "
            f"(first row {np.array2string(head, precision=6)})",
            rows,
        ) from exc
    out = out.reshape(-1)
    if out.shape[0] != rows.shape[0]:
        raise PredictorError(
            f"predictor returned {out.shape[0]} values for {rows.shape[0]} rows", rows
        )
    return out


@dataclass(frozen=True)
class TrainingMatrix:
    """Training data with its exact sample mean and covariance (1/(n-1))."""

    data: np.ndarray
    column_names: tuple[str, ...]
    mean: np.ndarray
    covariance: np.ndarray

    @classmethod
    def from_data(
        cls, data: np.ndarray, column_names: Sequence[str] | None = None
    ) -> "TrainingMatrix":
        data = np.ascontiguousarray(np.asarray(data, float))
        if data.ndim != 2:
            raise ValueError("training data must be a 2-D matrix")
        n, m = data.shape
        if column_names is None:
            column_names = tuple(f"x{j + 1}" for j in range(m))
        elif len(column_names) != m:
            raise ValueError("column_names length does not match feature count")
        mean = data.mean(axis=0)
        if n > 1:
            cov = np.cov(data, rowvar=False, ddof=1).reshape(m, m)
        else:
            cov = np.zeros((m, m))
        return cls(data=data, column_names=tuple(column_names), mean=mean, covariance=cov)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]


# ---------------------------------------------------------------------------
# Gaussian conditioning
# ---------------------------------------------------------------------------


@dataclass
class GaussianConditional:
    """Conditional mean and covariance of the complement block."""

    mu_cond: np.ndarray
    sigma_cond: np.ndarray
    s: Coalition
    sbar: Coalition


def _check_psd(cov: np.ndarray, label: str = "covariance") -> None:
    cov = np.asarray(cov, float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidCovarianceError(f"invalid {label}: not square")
    if not np.allclose(cov, cov.T, atol=1e-10 * max(1.0, np.abs(cov).max())):
        raise InvalidCovarianceError(f"invalid {label}: not symmetric")
    eigvals = np.linalg.eigvalsh(cov)
    if eigvals.size and eigvals[0] < -1e-8 * max(1.0, eigvals[-1]):
        raise InvalidCovarianceError(
            f"invalid {label}: negative eigenvalue {eigvals[0]:.3e}"
        )


def _regularize_block(block: np.ndarray, context: str) -> np.ndarray:
    """Ridge the diagonal when the block is near-singular (cond > 1e8)."""
    if block.size == 0:
        return block
    cond = np.linalg.cond(block)
    if np.isfinite(cond) and cond <= 1e8:
        return block
    d = block.shape[0]
    lam = max(1e-8 * float(np.trace(block)) / d, 1e-12)
    warnings.warn(
        f"near-singular covariance block in {context} "
        f"(cond {cond:.3e}); ridge {lam:.3e} added",
        DiagnosticWarning,
        stacklevel=3,
    )
    return block + lam * np.eye(d)


def conditional_moments(
    mean: np.ndarray,
    cov: np.ndarray,
    s: Iterable[int],
    x_s: np.ndarray,
    context: str = "gaussian conditional",
) -> tuple[np.ndarray, np.ndarray]:
    """Block conditional moments of a Gaussian given coordinates ``s``.

    mu_cond = mu_sbar + Sigma_{sbar,s} Sigma_{ss}^{-1} (x_s - mu_s)
    Sigma_cond = Sigma_{sbar,sbar} - Sigma_{sbar,s} Sigma_{ss}^{-1} Sigma_{s,sbar}
    """
    mean = np.asarray(mean, float)
    cov = np.asarray(cov, float)
    m = mean.shape[0]
    s = tuple(sorted(s))
    sbar = tuple(j for j in range(m) if j not in s)
    x_s = np.asarray(x_s, float).reshape(-1)
    if x_s.shape[0] != len(s):
        raise ValueError("conditioning values do not match coalition size")
    if not sbar:
        return np.empty(0), np.empty((0, 0))
    if not s:
        return mean[list(sbar)], cov[np.ix_(sbar, sbar)]
    sigma_ss = _regularize_block(cov[np.ix_(s, s)], context)
    cross = cov[np.ix_(s, sbar)]
    solved = np.linalg.solve(sigma_ss, np.column_stack([cross, x_s - mean[list(s)]]))
    b, shift = solved[:, :-1], solved[:, -1]
    mu_cond = mean[list(sbar)] + cross.T @ shift
    sigma_cond = cov[np.ix_(sbar, sbar)] - cross.T @ b
    sigma_cond = 0.5 * (sigma_cond + sigma_cond.T)
    return mu_cond, sigma_cond


def gaussian_conditional(
    train: TrainingMatrix, s: Iterable[int], x_star: np.ndarray
) -> GaussianConditional:
    """Conditional law of the unknown features under a fitted Gaussian."""
    _check_psd(train.covariance)
    s = tuple(sorted(s))
    sbar = tuple(j for j in range(train.m) if j not in s)
    x_star = np.asarray(x_star, float).reshape(-1)
    mu, sig = conditional_moments(train.mean, train.covariance, s, x_star[list(s)])
    return GaussianConditional(mu_cond=mu, sigma_cond=sig, s=s, sbar=sbar)


def sample_gaussian_conditional(
    cond: GaussianConditional, k: int, rng_seed
) -> np.ndarray:
    """Draw k rows from the conditional via a symmetric eigenfactorization."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(rng_seed)
    d = cond.mu_cond.shape[0]
    if d == 0:
        return np.empty((k, 0))
    try:
        vals, vecs = np.linalg.eigh(cond.sigma_cond)
    except np.linalg.LinAlgError as exc:
        raise InvalidCovarianceError(
            "conditional covariance factorization failed"
        ) from exc
    if not np.all(np.isfinite(vals)):
        raise InvalidCovarianceError("conditional covariance factorization failed")
    scale = max(1.0, float(vals[-1])) if vals.size else 1.0
    if vals.size and vals[0] < -1e-8 * scale:
        warnings.warn(
            f"conditional covariance clipped (min eigenvalue {vals[0]:.3e})",
            DiagnosticWarning,
            stacklevel=2,
        )
    vals = np.clip(vals, 0.0, None)
    factor = vecs * np.sqrt(vals)[None, :]
    z = rng.standard_normal((k, d))
    return cond.mu_cond[None, :] + z @ factor.T


# ---------------------------------------------------------------------------
# Independence estimator
# ---------------------------------------------------------------------------


def _splice(rows: np.ndarray, s: Coalition, x_star: np.ndarray) -> np.ndarray:
    out = np.array(rows, float, copy=True)
    if s:
        out[:, list(s)] = x_star[list(s)]
    return out


def estimate_v_independent(
    train: TrainingMatrix,
    predictor: Predictor,
    s: Iterable[int],
    x_star: np.ndarray,
    k: int,
    rng_seed,
) -> float:
    """Average f over k training rows with the known coordinates spliced in."""
    s = tuple(sorted(s))
    if not (0 < len(s) < train.m):
        raise ValueError("independence estimator needs a proper non-empty coalition")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(rng_seed)
    idx = rng.integers(0, train.n, size=k)
    x_star = np.asarray(x_star, float).reshape(-1)
    synth = _splice(train.data[idx], s, x_star)
    return float(call_predictor(predictor, synth).mean())


def estimate_v_independent_full(
    train: TrainingMatrix, predictor: Predictor, s: Iterable[int], x_star: np.ndarray
) -> float:
    """Deterministic variant: average over every training row exactly once."""
    s = tuple(sorted(s))
    x_star = np.asarray(x_star, float).reshape(-1)
    synth = _splice(train.data, s, x_star)
    return float(call_predictor(predictor, synth).mean())


def mean_training_prediction(train: TrainingMatrix, predictor: Predictor) -> float:
    """v(empty): the global mean prediction over the training rows."""
    return float(call_predictor(predictor, train.data).mean())


# ---------------------------------------------------------------------------
# Gaussian copula with empirical margins
# ---------------------------------------------------------------------------


@dataclass
class CopulaState:
    """Sorted per-feature samples and the latent Gaussian correlation."""

    sorted_columns: tuple[np.ndarray, ...]
    latent_correlation: np.ndarray
    degenerate: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return self.sorted_columns[0].shape[0]

    @property
    def m(self) -> int:
        return len(self.sorted_columns)

    def cdf(self, j: int, x: np.ndarray) -> np.ndarray:
        """Empirical CDF with the rank/(n+1) convention, never 0 or 1."""
        col = self.sorted_columns[j]
        n = col.shape[0]
        rank = np.searchsorted(col, np.asarray(x, float), side="right")
        return np.clip(rank, 1, n) / (n + 1)

    def quantile(self, j: int, u: np.ndarray) -> np.ndarray:
        """Left-continuous inverse: order-statistic lookup."""
        col = self.sorted_columns[j]
        n = col.shape[0]
        idx = np.clip(np.ceil(np.asarray(u, float) * (n + 1)).astype(int), 1, n) - 1
        return col[idx]


def fit_copula(train: TrainingMatrix) -> CopulaState:
    """Gaussianize each margin by its empirical CDF and correlate the result."""
    if train.n < 20:
        raise ValueError(f"copula fit needs n >= 20 training rows, got {train.n}")
    n, m = train.n, train.m
    latent = np.empty((n, m))
    degenerate = []
    for j in range(m):
        col = train.data[:, j]
        if np.ptp(col) == 0.0:
            degenerate.append(j)
            latent[:, j] = 0.0
            continue
        ranks = stats.rankdata(col, method="average")
        latent[:, j] = stats.norm.ppf(ranks / (n + 1))
    corr = np.eye(m)
    active = [j for j in range(m) if j not in degenerate]
    if len(active) >= 2:
        sub = np.corrcoef(latent[:, active], rowvar=False)
        corr[np.ix_(active, active)] = sub
    if degenerate:
        warnings.warn(
            f"degenerate marginal(s) {tuple(degenerate)}: constant column, "
            "latent correlation row set to identity",
            DiagnosticWarning,
            stacklevel=2,
        )
    sorted_cols = tuple(np.sort(train.data[:, j]) for j in range(m))
    return CopulaState(
        sorted_columns=sorted_cols,
        latent_correlation=corr,
        degenerate=tuple(degenerate),
    )


def sample_copula_conditional(
    state: CopulaState,
    s: Iterable[int],
    x_star: np.ndarray,
    k: int,
    rng_seed,
) -> np.ndarray:
    """Sample the complement features through the latent Gaussian copula.

    Returned values for each feature always lie inside that feature's
    training range (inverse empirical CDF lookup).
    """
    s = tuple(sorted(s))
    m = state.m
    sbar = tuple(j for j in range(m) if j not in s)
    x_star = np.asarray(x_star, float).reshape(-1)
    v_star = np.array(
        [stats.norm.ppf(state.cdf(j, x_star[j])) for j in s], float
    )
    mu, sig = conditional_moments(
        np.zeros(m), state.latent_correlation, s, v_star, context="copula conditional"
    )
    latent = sample_gaussian_conditional(
        GaussianConditional(mu_cond=mu, sigma_cond=sig, s=s, sbar=sbar), k, rng_seed
    )
    u = stats.norm.cdf(latent)
    out = np.empty_like(latent)
    for pos, j in enumerate(sbar):
        out[:, pos] = state.quantile(j, u[:, pos])
    return out


# ---------------------------------------------------------------------------
# Empirical conditional estimator
# ---------------------------------------------------------------------------


@dataclass
class EmpiricalWeights:
    """Scaled Mahalanobis distances and Gaussian kernel weights per row."""

    distances: np.ndarray
    weights: np.ndarray
    sigma: float
    order: np.ndarray  # permutation sorting weights non-increasing


def scaled_mahalanobis(
    train: TrainingMatrix, s: Iterable[int], x_star: np.ndarray
) -> np.ndarray:
    """sqrt((x_S* - x_S^i)^T Sigma_S^{-1} (x_S* - x_S^i) / |S|) per row."""
    s = tuple(sorted(s))
    if not s:
        raise ValueError("distance needs a non-empty conditioning set")
    x_star = np.asarray(x_star, float).reshape(-1)
    block = _regularize_block(
        train.covariance[np.ix_(s, s)], "empirical distance"
    )
    diff = train.data[:, list(s)] - x_star[list(s)][None, :]
    chol = np.linalg.cholesky(block)
    white = np.linalg.solve(chol, diff.T)
    d2 = np.sum(white ** 2, axis=0) / len(s)
    return np.sqrt(np.maximum(d2, 0.0))


def empirical_weights(
    train: TrainingMatrix, s: Iterable[int], x_star: np.ndarray, sigma: float
) -> EmpiricalWeights:
    """Gaussian kernel weights exp(-D^2 / (2 sigma^2)) over training rows."""
    if sigma <= 0:
        raise ValueError("bandwidth sigma must be positive")
    d = scaled_mahalanobis(train, s, x_star)
    w = np.exp(-(d ** 2) / (2.0 * sigma ** 2))
    order = np.argsort(-w, kind="stable")
    return EmpiricalWeights(distances=d, weights=w, sigma=float(sigma), order=order)


def select_k(weights: EmpiricalWeights, eta: float, k_cap: int) -> int:
    """Smallest K whose top-K weight share strictly exceeds eta, capped."""
    if not (0.0 < eta < 1.0):
        raise ValueError("eta must be in (0, 1)")
    if k_cap < 1:
        raise ValueError("k_cap must be >= 1")
    w = weights.weights[weights.order]
    total = float(w.sum())
    if total <= 0.0:
        return min(k_cap, w.shape[0])
    frac = np.cumsum(w) / total
    hits = np.nonzero(frac > eta)[0]
    k = int(hits[0]) + 1 if hits.size else w.shape[0]
    return min(k, k_cap, w.shape[0])


def estimate_v_empirical(
    train: TrainingMatrix,
    predictor: Predictor,
    s: Iterable[int],
    x_star: np.ndarray,
    sigma: float,
    eta: float = 0.9,
    k_cap: int = 5000,
) -> float:
    """Weight-normalized average of f over the top-K nearest training rows.

    Each training row is used at most once.  If every weight underflows to
    zero the estimator falls back to the unweighted full-training average
    (the sigma -> infinity limit) with a diagnostic.
    """
    s = tuple(sorted(s))
    if not (0 < len(s) < train.m):
        raise ValueError("empirical estimator needs a proper non-empty coalition")
    x_star = np.asarray(x_star, float).reshape(-1)
    ew = empirical_weights(train, s, x_star, sigma)
    if float(ew.weights.sum()) <= 0.0:
        warnings.warn(
            "all empirical weights underflowed to zero; falling back to the "
            "unweighted training average",
            DiagnosticWarning,
            stacklevel=2,
        )
        return estimate_v_independent_full(train, predictor, s, x_star)
    k = select_k(ew, eta, k_cap)
    top = ew.order[:k]
    w = ew.weights[top]
    synth = _splice(train.data[top], s, x_star)
    preds = call_predictor(predictor, synth)
    return float(np.dot(w, preds) / w.sum())


# ---------------------------------------------------------------------------
# AICc bandwidth selection
# ---------------------------------------------------------------------------


def aicc_components(
    weight_matrix: np.ndarray, responses: np.ndarray, phi_form: str = "corrected"
) -> tuple[float, float, float]:
    """(tau_sq, phi_h, trace) of the kernel smoother for one bandwidth.

    ``weight_matrix`` holds w(x^j, x^i) with rows indexed by i; the hat matrix
    normalizes each row.  ``phi_form`` selects the penalty denominator:
    "corrected" uses 1 - (tr(H)+2)/n, "printed" uses 1 - (tr(H)+2)/2.
    """
    if phi_form not in ("corrected", "printed"):
        raise ValueError(f"unknown phi_form {phi_form!r}")
    w = np.asarray(weight_matrix, float)
    n = w.shape[0]
    row_sums = w.sum(axis=1)
    if np.any(row_sums <= 0.0):
        return math.inf, math.inf, math.inf
    h = w / row_sums[:, None]
    fitted = h @ responses
    tau_sq = float(np.mean((responses - fitted) ** 2))
    trace = float(np.sum(np.diag(w) / row_sums))
    if phi_form == "corrected":
        denom = 1.0 - (trace + 2.0) / n
    else:
        denom = 1.0 - (trace + 2.0) / 2.0
    if denom <= 0.0:
        return tau_sq, math.inf, trace
    phi_h = (1.0 + trace / n) / denom
    return tau_sq, phi_h, trace


def _aicc_subsample(n: int, n_aicc: int) -> np.ndarray:
    """Evenly spaced deterministic row subsample (rows are i.i.d.)."""
    if n <= n_aicc:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, n_aicc)).astype(int))


def _aicc_criterion_for_coalition(
    train: TrainingMatrix,
    predictor: Predictor,
    s: Coalition,
    x_star: np.ndarray,
    sigma_grid: Sequence[float],
    n_aicc: int,
    phi_form: str,
) -> np.ndarray:
    idx = _aicc_subsample(train.n, n_aicc)
    sub = train.data[idx]
    x_star = np.asarray(x_star, float).reshape(-1)
    responses = call_predictor(predictor, _splice(sub, s, x_star))
    block = _regularize_block(train.covariance[np.ix_(s, s)], "aicc distance")
    diff = sub[:, list(s)]
    chol = np.linalg.cholesky(block)
    white = np.linalg.solve(chol, diff.T).T  # (n_sub, |s|)
    sq = np.sum(white ** 2, axis=1)
    d2 = (sq[:, None] + sq[None, :] - 2.0 * (white @ white.T)) / len(s)
    d2 = np.maximum(d2, 0.0)
    out = np.empty(len(sigma_grid))
    for g, sigma in enumerate(sigma_grid):
        w = np.exp(-d2 / (2.0 * sigma ** 2))
        tau_sq, phi_h, _ = aicc_components(w, responses, phi_form)
        if not np.isfinite(phi_h):
            out[g] = math.inf
        else:
            out[g] = math.log(max(tau_sq, 1e-300)) + phi_h
    return out


def aicc_bandwidth(
    train: TrainingMatrix,
    predictor: Predictor,
    s_or_size: Coalition | int,
    x_star: np.ndarray,
    sigma_grid: Sequence[float] = DEFAULT_AICC_GRID,
    n_aicc: int = DEFAULT_N_AICC,
    phi_form: str = "corrected",
) -> float:
    """Grid minimizer of log(tau^2) + Phi(H) for the kernel smoother.

    Passing a coalition selects the per-coalition ("exact") criterion;
    passing an integer size sums the criteria over every coalition of that
    size and shares one bandwidth across them ("approx").
    """
    sigma_grid = list(sigma_grid)
    if not sigma_grid or any(s <= 0 for s in sigma_grid):
        raise ValueError("sigma_grid must be non-empty and positive")
    if isinstance(s_or_size, (int, np.integer)):
        size = int(s_or_size)
        if not (0 < size < train.m):
            raise ValueError("coalition size must be proper")
        total = np.zeros(len(sigma_grid))
        for s in combinations(range(train.m), size):
            total += _aicc_criterion_for_coalition(
                train, predictor, s, x_star, sigma_grid, n_aicc, phi_form
            )
        criteria = total
    else:
        s = tuple(sorted(s_or_size))
        if not (0 < len(s) < train.m):
            raise ValueError("coalition must be proper and non-empty")
        criteria = _aicc_criterion_for_coalition(
            train, predictor, s, x_star, sigma_grid, n_aicc, phi_form
        )
    if not np.any(np.isfinite(criteria)):
        raise ValueError("AICc criterion infinite on the whole bandwidth grid")
    return float(sigma_grid[int(np.argmin(criteria))])


# ---------------------------------------------------------------------------
# Sampler specification and dispatch
# ---------------------------------------------------------------------------

KINDS = ("independence", "gaussian", "copula", "empirical", "combined")
BANDWIDTH_MODES = ("fixed", "aicc_exact", "aicc_approx")


@dataclass(frozen=True)
class SamplerSpec:
    """Declarative choice of contribution estimator.

    ``d_star`` and ``parametric_backend`` only apply to the combined kind;
    ``sigma``/``bandwidth_mode`` only to the empirical parts.
    """

    kind: str = "gaussian"
    bandwidth_mode: str = "fixed"
    sigma: float = 0.1
    d_star: int = 3
    parametric_backend: str = "gaussian"
    eta: float = 0.9
    k_cap: int = 5000
    aicc_grid: tuple[float, ...] = DEFAULT_AICC_GRID
    n_aicc: int = DEFAULT_N_AICC
    phi_form: str = "corrected"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.bandwidth_mode not in BANDWIDTH_MODES:
            raise ValueError(f"unknown bandwidth mode {self.bandwidth_mode!r}")
        if self.parametric_backend not in ("gaussian", "copula"):
            raise ValueError(f"unknown parametric backend {self.parametric_backend!r}")
        if self.d_star < 1:
            raise ValueError("d_star must be >= 1")
        if not (0.0 < self.eta < 1.0):
            raise ValueError("eta must be in (0, 1)")
        if self.k_cap < 1:
            raise ValueError("k_cap must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def label(self) -> str:
        if self.kind == "independence":
            return "original"
        if self.kind in ("gaussian", "copula"):
            return self.kind
        if self.bandwidth_mode == "fixed":
            emp = f"empirical-{self.sigma:g}"
        elif self.bandwidth_mode == "aicc_exact":
            emp = "empirical-aicc-exact"
        else:
            emp = "empirical-aicc-approx"
        if self.kind == "empirical":
            return emp
        return f"{emp}+{self.parametric_backend}"

    @classmethod
    def from_label(cls, label: str, **overrides) -> "SamplerSpec":
        """Parse labels like "original", "empirical-0.1+gaussian"."""
        text = label.strip().lower()
        backend = None
        if "+" in text:
            text, backend = text.rsplit("+", 1)
            if backend not in ("gaussian", "copula"):
                raise ValueError(f"unknown combined backend in {label!r}")
        fields: dict = {}
        if text in ("original", "independence"):
            fields["kind"] = "independence"
        elif text in ("gaussian", "copula"):
            fields["kind"] = text
        elif text == "empirical-aicc-exact":
            fields["kind"] = "empirical"
            fields["bandwidth_mode"] = "aicc_exact"
        elif text == "empirical-aicc-approx":
            fields["kind"] = "empirical"
            fields["bandwidth_mode"] = "aicc_approx"
        elif text.startswith("empirical-"):
            fields["kind"] = "empirical"
            fields["bandwidth_mode"] = "fixed"
            try:
                fields["sigma"] = float(text.removeprefix("empirical-"))
            except ValueError:
                raise ValueError(f"cannot parse estimator label {label!r}") from None
        else:
            raise ValueError(f"cannot parse estimator label {label!r}")
        if backend is not None:
            if fields["kind"] != "empirical":
                raise ValueError(f"combined label must start empirical-: {label!r}")
            fields["kind"] = "combined"
            fields["parametric_backend"] = backend
        fields.update(overrides)
        return cls(**fields)


class FittedSampler:
    """A sampler spec bound to training data, with per-coalition caches.

    Immutable after construction; contribution estimates for distinct
    coalitions or instances may run concurrently.
    """

    def __init__(self, spec: SamplerSpec, train: TrainingMatrix):
        self.spec = spec
        self.train = train
        self.copula: CopulaState | None = None
        if spec.kind == "copula" or (
            spec.kind == "combined" and spec.parametric_backend == "copula"
        ):
            self.copula = fit_copula(train)
        if spec.kind in ("gaussian",) or (
            spec.kind == "combined" and spec.parametric_backend == "gaussian"
        ):
            _check_psd(train.covariance)

    # -- bandwidth ---------------------------------------------------------

    def bandwidth_for(
        self, predictor: Predictor, s: Coalition, x_star: np.ndarray
    ) -> float:
        spec = self.spec
        if spec.bandwidth_mode == "fixed":
            return spec.sigma
        target: Coalition | int = s if spec.bandwidth_mode == "aicc_exact" else len(s)
        return aicc_bandwidth(
            self.train,
            predictor,
            target,
            x_star,
            sigma_grid=spec.aicc_grid,
            n_aicc=spec.n_aicc,
            phi_form=spec.phi_form,
        )

    # -- v(S) --------------------------------------------------------------

    def contribution(
        self,
        predictor: Predictor,
        s: Iterable[int],
        x_star: np.ndarray,
        k: int,
        rng_seed,
        sigma: float | None = None,
    ) -> float:
        """Estimate v(S); endpoints are exact for every spec."""
        s = tuple(sorted(s))
        x_star = np.asarray(x_star, float).reshape(-1)
        m = self.train.m
        if len(s) == 0:
            return mean_training_prediction(self.train, predictor)
        if len(s) == m:
            return float(call_predictor(predictor, x_star[None, :])[0])
        kind = self.spec.kind
        if kind == "combined":
            kind = "empirical" if len(s) <= self.spec.d_star else self.spec.parametric_backend
        if kind == "independence":
            return estimate_v_independent(self.train, predictor, s, x_star, k, rng_seed)
        if kind == "gaussian":
            cond = gaussian_conditional(self.train, s, x_star)
            draws = sample_gaussian_conditional(cond, k, rng_seed)
            synth = np.tile(x_star, (k, 1))
            synth[:, list(cond.sbar)] = draws
            return float(call_predictor(predictor, synth).mean())
        if kind == "copula":
            assert self.copula is not None
            sbar = tuple(j for j in range(m) if j not in s)
            draws = sample_copula_conditional(self.copula, s, x_star, k, rng_seed)
            synth = np.tile(x_star, (k, 1))
            synth[:, list(sbar)] = draws
            return float(call_predictor(predictor, synth).mean())
        # empirical
        if sigma is None:
            sigma = self.bandwidth_for(predictor, s, x_star)
        return estimate_v_empirical(
            self.train,
            predictor,
            s,
            x_star,
            sigma=sigma,
            eta=self.spec.eta,
            k_cap=min(self.spec.k_cap, k),
        )


def estimate_v(
    spec: SamplerSpec,
    train: TrainingMatrix,
    predictor: Predictor,
    s: Iterable[int],
    x_star: np.ndarray,
    k: int,
    rng_seed,
) -> float:
    """Pure functional entry point dispatching on the sampler spec."""
    return FittedSampler(spec, train).contribution(predictor, s, x_star, k, rng_seed)
