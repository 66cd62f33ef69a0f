"""Bayesian linear trend model for score series.

Model::

    y_i ~ Normal(alpha + beta * t_i, sigma)
    alpha ~ Normal(m_a, s_a),  beta ~ Normal(m_b, s_b),  sigma ~ HalfNormal(s_s)

Posterior draws come from an adaptive, per-coordinate random-walk Metropolis
sampler run on (alpha, beta, log sigma).  ``conjugate_posterior`` gives the
exact Gaussian posterior for known sigma and serves as the reference the
sampler is checked against.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateData, InsufficientDraws, NonFiniteInput, SingularPrecision

PARAM_NAMES = ("alpha", "beta", "sigma")
_LOG_2PI = math.log(2.0 * math.pi)
_STEP_BOUNDS = (1e-8, 1e3)
# Support of sigma used by the sampler.  The lower edge keeps the posterior
# proper when a line fits the data exactly (e.g. constant scores).
_LOG_SIGMA_BOUNDS = (math.log(1e-12), math.log(1e12))


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self) -> None:
        if not self.sd > 0:
            raise ValueError(f"Normal sd must be > 0, got {self.sd}")

    def logpdf(self, x):
        z = (x - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - 0.5 * _LOG_2PI


@dataclass(frozen=True)
class HalfNormal:
    sd: float

    def __post_init__(self) -> None:
        if not self.sd > 0:
            raise ValueError(f"HalfNormal sd must be > 0, got {self.sd}")

    def logpdf(self, x):
        z = x / self.sd
        return math.log(2.0) - 0.5 * z * z - math.log(self.sd) - 0.5 * _LOG_2PI


@dataclass(frozen=True)
class PriorConfig:
    alpha: Normal = Normal(0.5, 1.0)
    beta: Normal = Normal(0.0, 1.0)
    sigma: HalfNormal = HalfNormal(1.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": {"mean": self.alpha.mean, "sd": self.alpha.sd},
            "beta": {"mean": self.beta.mean, "sd": self.beta.sd},
            "sigma": {"sd": self.sigma.sd},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PriorConfig:
        default = cls()
        a = data.get("alpha", {})
        b = data.get("beta", {})
        s = data.get("sigma", {})
        return cls(
            alpha=Normal(a.get("mean", default.alpha.mean), a.get("sd", default.alpha.sd)),
            beta=Normal(b.get("mean", default.beta.mean), b.get("sd", default.beta.sd)),
            sigma=HalfNormal(s.get("sd", default.sigma.sd)),
        )


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    iterations: int = 5000
    warmup: int = 2500
    seed: int = 0
    initial_step: float = 0.1
    target_accept: float = 0.3
    init_jitter: float = 0.1

    def __post_init__(self) -> None:
        if self.chains < 2:
            raise ValueError("at least 2 chains are required")
        if not (0 <= self.warmup < self.iterations):
            raise ValueError("warmup must be in [0, iterations)")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be > 0")
        if not (0.0 < self.target_accept < 1.0):
            raise ValueError("target_accept must be in (0, 1)")

    def to_dict(self) -> dict[str, Any]:
        return {
            "chains": self.chains,
            "iterations": self.iterations,
            "warmup": self.warmup,
            "seed": self.seed,
            "initial_step": self.initial_step,
            "target_accept": self.target_accept,
            "init_jitter": self.init_jitter,
        }


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrendData:
    points: tuple[tuple[float, float], ...]
    candidate: str = ""
    kind: str = ""
    scope: str = "pooled"

    def __post_init__(self) -> None:
        pts = tuple((float(t), float(y)) for t, y in self.points)
        if not all(math.isfinite(t) and math.isfinite(y) for t, y in pts):
            raise NonFiniteInput("trend data contains non-finite values")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_arrays(cls, t: Iterable[float], y: Iterable[float], **kwargs: Any) -> TrendData:
        return cls(tuple(zip(t, y)), **kwargs)

    @property
    def t(self) -> np.ndarray:
        return np.array([p[0] for p in self.points], dtype=float)

    @property
    def y(self) -> np.ndarray:
        return np.array([p[1] for p in self.points], dtype=float)

    @property
    def n(self) -> int:
        return len(self.points)

    def require_identifiable(self) -> None:
        if self.n < 2 or len({t for t, _ in self.points}) < 2:
            raise DegenerateData(
                f"trend fit for {self.candidate}/{self.kind}/{self.scope} needs at least 2 distinct t values"
            )

    def shifted(self, c: float) -> TrendData:
        return TrendData(tuple((t, y + c) for t, y in self.points), self.candidate, self.kind, self.scope)


@dataclass(frozen=True)
class _Suff:
    """Centred sufficient statistics of (t, y)."""

    n: int
    t_bar: float
    y_bar: float
    stt: float
    sty: float
    syy: float

    @classmethod
    def of(cls, data: TrendData) -> _Suff:
        if data.n == 0:
            return cls(0, 0.0, 0.0, 0.0, 0.0, 0.0)
        t, y = data.t, data.y
        tb, yb = float(t.mean()), float(y.mean())
        dt, dy = t - tb, y - yb
        return cls(data.n, tb, yb, float(dt @ dt), float(dt @ dy), float(dy @ dy))

    def residual_ss(self, alpha, beta):
        d = alpha + beta * self.t_bar - self.y_bar
        ss = self.syy - 2.0 * beta * self.sty + beta * beta * self.stt + self.n * d * d
        return np.maximum(ss, 0.0)


def ols_fit(data: TrendData) -> tuple[float, float, float]:
    """Least-squares (alpha, beta) and the residual standard deviation."""
    data.require_identifiable()
    s = _Suff.of(data)
    beta = s.sty / s.stt
    alpha = s.y_bar - beta * s.t_bar
    ss = float(s.residual_ss(alpha, beta))
    dof = max(s.n - 2, 1)
    return alpha, beta, math.sqrt(ss / dof)


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------


def _check_finite(*values: float) -> None:
    if not all(math.isfinite(v) for v in values):
        raise NonFiniteInput(f"non-finite parameter value in {values}")


def log_likelihood(params: Sequence[float], data: TrendData) -> float:
    """Sum of Normal log densities of y given alpha + beta t and sigma."""
    alpha, beta, sigma = (float(v) for v in params)
    _check_finite(alpha, beta, sigma)
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    resid = data.y - (alpha + beta * data.t)
    return float(-0.5 * data.n * _LOG_2PI - data.n * math.log(sigma) - 0.5 * (resid @ resid) / (sigma * sigma))


def log_posterior(params: Sequence[float], data: TrendData, priors: PriorConfig = PriorConfig()) -> float:
    """Unnormalized log posterior density of (alpha, beta, log sigma) at the given (alpha, beta, sigma).

    Includes the log-Jacobian ``log sigma`` of the log transform, so it is
    the density the sampler targets.
    """
    alpha, beta, sigma = (float(v) for v in params)
    _check_finite(alpha, beta, sigma)
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    return (
        log_likelihood((alpha, beta, sigma), data)
        + priors.alpha.logpdf(alpha)
        + priors.beta.logpdf(beta)
        + priors.sigma.logpdf(sigma)
        + math.log(sigma)
    )


# ---------------------------------------------------------------------------
# conjugate reference
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


def conjugate_posterior(data: TrendData, known_sigma: float, priors: PriorConfig = PriorConfig()) -> GaussianPosterior:
    """Exact posterior of (alpha, beta) when sigma is known.

    precision = diag(1/s_a^2, 1/s_b^2) + X^T X / sigma^2
    mean      = precision^-1 (prior_precision m0 + X^T y / sigma^2)
    """
    if not known_sigma > 0:
        raise ValueError("known_sigma must be > 0")
    prior_mean = np.array([priors.alpha.mean, priors.beta.mean])
    prior_prec = np.diag([1.0 / priors.alpha.sd**2, 1.0 / priors.beta.sd**2])
    X = np.column_stack([np.ones(data.n), data.t]) if data.n else np.zeros((0, 2))
    y = data.y if data.n else np.zeros(0)
    precision = prior_prec + X.T @ X / known_sigma**2
    try:
        chol = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError as exc:
        raise SingularPrecision("posterior precision is not positive definite") from exc
    if np.min(np.diag(chol)) <= 1e-150 or np.linalg.cond(precision) > 1e15:
        raise SingularPrecision("posterior precision is numerically singular")
    cov = np.linalg.inv(precision)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (prior_prec @ prior_mean + X.T @ y / known_sigma**2)
    return GaussianPosterior(mean=mean, cov=cov)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    rhat: float
    ess: float

    def to_dict(self) -> dict[str, float]:
        return {"rhat": self.rhat, "ess": self.ess}


def _as_chains(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ValueError("expected an array of shape (chains, draws)")
    if arr.shape[0] < 2 or arr.shape[1] < 4:
        raise InsufficientDraws(f"need >= 2 chains with >= 4 draws, got shape {arr.shape}")
    return arr


def _split(arr: np.ndarray) -> np.ndarray:
    half = arr.shape[1] // 2
    return np.concatenate([arr[:, :half], arr[:, arr.shape[1] - half :]], axis=0)


def split_rhat(x) -> float:
    """Split-R-hat (Gelman et al., BDA3 sec. 11.4).

    Each chain is halved; with m half-chains of length n, W is the mean
    within-chain variance and B/n the variance of the chain means, and
    R-hat = sqrt(((n - 1)/n W + B/n) / W).  Constant draws give 1.
    """
    chains = _split(_as_chains(x))
    if np.ptp(chains) == 0:
        return 1.0
    n = chains.shape[1]
    within = float(np.mean(np.var(chains, axis=1, ddof=1)))
    between_over_n = float(np.var(np.mean(chains, axis=1), ddof=1))
    if within == 0.0:
        return 1.0 if between_over_n == 0.0 else math.inf
    var_plus = (n - 1) / n * within + between_over_n
    return math.sqrt(var_plus / within)


def _autocovariance(chains: np.ndarray) -> np.ndarray:
    n = chains.shape[1]
    centred = chains - chains.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(centred, n=size, axis=1)
    return np.fft.irfft(spec * np.conj(spec), n=size, axis=1)[:, :n] / n


def effective_sample_size(x) -> float:
    """Multi-chain ESS on split chains (Stan reference manual, "Effective sample size").

    Combined autocorrelations rho_t = 1 - (W - mean_chain acov_t) / var_plus
    are summed in consecutive pairs (Geyer's initial positive sequence),
    stopping at the first negative pair sum, with the monotone correction.
    ESS = m n / tau, tau = -1 + 2 sum rho_t.  Constant draws give m n.
    """
    chains = _split(_as_chains(x))
    m, n = chains.shape
    if np.ptp(chains) == 0.0:
        return float(m * n)
    acov = _autocovariance(chains)
    chain_var = acov[:, 0] * n / (n - 1)
    mean_var = float(np.mean(chain_var))
    var_plus = mean_var * (n - 1) / n + float(np.var(chains.mean(axis=1), ddof=1))
    total = m * n
    if var_plus <= 0.0:
        return float(total)
    rho_lag = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus

    rho = np.zeros(n)
    rho[0] = 1.0
    rho[1] = odd = rho_lag[1]
    even = 1.0
    t = 1
    while t < n - 3 and even + odd > 0.0:
        even, odd = rho_lag[t + 1], rho_lag[t + 2]
        if even + odd >= 0.0:
            rho[t + 1], rho[t + 2] = even, odd
        t += 2
    max_t = t - 2
    if even > 0.0:
        rho[max_t + 1] = even
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = rho[t + 2] = (rho[t - 1] + rho[t]) / 2.0
        t += 2
    tau = -1.0 + 2.0 * float(np.sum(rho[: max_t + 1])) + float(np.sum(rho[max_t + 1 : max_t + 2]))
    tau = max(tau, 1.0 / math.log10(total))
    return total / tau


def diagnostics(draws, names: Sequence[str] = PARAM_NAMES) -> dict[str, Diagnostic]:
    """R-hat and ESS per parameter for draws shaped (chains, draws[, params])."""
    arr = np.asarray(draws, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError("draws must have shape (chains, draws) or (chains, draws, params)")
    names = list(names)[: arr.shape[2]] if arr.shape[2] <= len(names) else [f"p{i}" for i in range(arr.shape[2])]
    return {
        name: Diagnostic(rhat=split_rhat(arr[:, :, i]), ess=effective_sample_size(arr[:, :, i]))
        for i, name in enumerate(names)
    }


# ---------------------------------------------------------------------------
# sampler
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PosteriorSamples:
    draws: np.ndarray  # (chains, kept draws, 3): alpha, beta, sigma
    diagnostics: Mapping[str, Diagnostic]
    acceptance_rate: float
    step_sizes: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    known_sigma: float | None = None

    @property
    def chains(self) -> int:
        return self.draws.shape[0]

    @property
    def draws_per_chain(self) -> int:
        return self.draws.shape[1]

    def param(self, name: str) -> np.ndarray:
        return self.draws[:, :, PARAM_NAMES.index(name)]

    def flat(self, name: str) -> np.ndarray:
        return self.param(name).reshape(-1)

    def mean(self, name: str) -> float:
        return float(self.flat(name).mean())

    def sd(self, name: str) -> float:
        return float(self.flat(name).std(ddof=1))

    def mcse_mean(self, name: str) -> float:
        return self.sd(name) / math.sqrt(self.diagnostics[name].ess)

    def mcse_sd(self, name: str) -> float:
        # Large-sample standard error of a standard deviation under near-normality.
        return self.sd(name) / math.sqrt(2.0 * self.diagnostics[name].ess)

    def converged(self, max_rhat: float = 1.05, min_ess: float = 200.0) -> bool:
        sampled = PARAM_NAMES[:2] if self.known_sigma is not None else PARAM_NAMES
        return all(
            self.diagnostics[p].rhat <= max_rhat and self.diagnostics[p].ess >= min_ess for p in sampled
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["chain", "iteration", "alpha", "beta", "sigma"])
        for c in range(self.chains):
            for i in range(self.draws_per_chain):
                a, b, s = self.draws[c, i]
                writer.writerow([c, i, repr(float(a)), repr(float(b)), repr(float(s))])
        return buf.getvalue()


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    """Independent random stream for one chain, derived from (seed, chain)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, chain]))


def sample_posterior(
    data: TrendData,
    priors: PriorConfig = PriorConfig(),
    config: SamplerConfig = SamplerConfig(),
    *,
    known_sigma: float | None = None,
) -> PosteriorSamples:
    """Draw from the posterior with adaptive per-coordinate random-walk Metropolis.

    The walk runs on standardized coordinates (u, v, log sigma) with

        alpha + beta * t_bar = y_bar + sigma * u / sqrt(n)
        beta                 = beta_ols + sigma * v / sqrt(S_tt)

    so that, given sigma, the likelihood in (u, v) is a unit Gaussian and
    the scale of the intercept and slope moves together with sigma.  The
    log-Jacobian of the map is added to the target; stored draws are
    (alpha, beta, sigma).

    Each iteration updates the three coordinates in turn with a Gaussian
    proposal.  During warmup a coordinate's step is multiplied by 1.1 after
    an acceptance and by 1.1 ** (-p / (1 - p)) after a rejection, which
    settles at acceptance rate p = ``target_accept``.  When warmup ends each
    step is frozen at its geometric mean over the second half of warmup.
    Chains start at the least-squares fit plus Gaussian jitter of
    ``init_jitter`` on alpha, beta and log sigma.  With ``known_sigma`` only
    u and v are sampled.

    Chains are advanced together as vectors, but each owns a random stream
    from ``chain_rng(seed, chain)``, so the output is bit-reproducible.
    """
    data.require_identifiable()
    if known_sigma is not None and not known_sigma > 0:
        raise ValueError("known_sigma must be > 0")
    suff = _Suff.of(data)
    sample_sigma = known_sigma is None
    dims = 3 if sample_sigma else 2
    C, iters, warm = config.chains, config.iterations, config.warmup
    keep = iters - warm

    a_ols, b_ols, s_ols = ols_fit(data)
    log_s0 = math.log(max(s_ols, 1e-3)) if sample_sigma else math.log(known_sigma)
    t_bar, y_bar = suff.t_bar, suff.y_bar
    root_n, root_stt = math.sqrt(suff.n), math.sqrt(suff.stt)

    def to_params(th: np.ndarray):
        sigma = np.exp(th[2])
        beta = b_ols + sigma * th[1] / root_stt
        alpha = y_bar + sigma * th[0] / root_n - beta * t_bar
        return alpha, beta

    sse = max(suff.syy - suff.sty**2 / suff.stt, 0.0)
    lo, hi = _LOG_SIGMA_BOUNDS

    def density(th: np.ndarray) -> np.ndarray:
        # residual sum of squares / sigma^2 = u^2 + v^2 + sse / sigma^2
        ls = np.clip(th[2], lo, hi) if sample_sigma else th[2]
        alpha, beta = to_params(np.stack([th[0], th[1], ls]))
        lp = -0.5 * (th[0] ** 2 + th[1] ** 2) + priors.alpha.logpdf(alpha) + priors.beta.logpdf(beta)
        if not sample_sigma:
            return lp
        lp = lp - suff.n * ls - 0.5 * sse * np.exp(-2.0 * ls)
        lp = lp + priors.sigma.logpdf(np.exp(ls)) + 3.0 * ls
        return np.where((th[2] < lo) | (th[2] > hi), -np.inf, lp)

    jitter = np.empty((C, 3))
    noise = np.empty((C, iters, dims))
    log_u = np.empty((C, iters, dims))
    for c in range(C):
        rng = chain_rng(config.seed, c)
        jitter[c] = rng.standard_normal(3) * config.init_jitter
        noise[c] = rng.standard_normal((iters, dims))
        log_u[c] = np.log(rng.random((iters, dims)))

    theta = np.empty((3, C))
    theta[2] = log_s0 + jitter[:, 2] if sample_sigma else log_s0
    alpha0, beta0 = a_ols + jitter[:, 0], b_ols + jitter[:, 1]
    sigma0 = np.exp(theta[2])
    theta[1] = (beta0 - b_ols) * root_stt / sigma0
    theta[0] = (alpha0 + beta0 * t_bar - y_bar) * root_n / sigma0

    lp = density(theta)
    steps = np.full((dims, C), float(config.initial_step))
    up = math.log(1.1)
    down = -up * config.target_accept / (1.0 - config.target_accept)
    log_step_sum = np.zeros((dims, C))
    averaged_from = warm // 2
    accepted = np.zeros((dims, C))
    kept = np.empty((keep, 3, C))

    for i in range(iters):
        adapting = i < warm
        if i == warm and warm > averaged_from:
            steps = np.exp(log_step_sum / (warm - averaged_from))
        for k in range(dims):
            proposal = theta.copy()
            proposal[k] += steps[k] * noise[:, i, k]
            lp_new = density(proposal)
            accept = log_u[:, i, k] < (lp_new - lp)  # NaN compares False
            theta[k] = np.where(accept, proposal[k], theta[k])
            lp = np.where(accept, lp_new, lp)
            if adapting:
                steps[k] = np.clip(steps[k] * np.exp(np.where(accept, up, down)), *_STEP_BOUNDS)
                if i >= averaged_from:
                    log_step_sum[k] += np.log(steps[k])
            else:
                accepted[k] += accept
        if not adapting:
            kept[i - warm] = theta

    alpha, beta = to_params(kept.transpose(1, 0, 2))
    sigma = np.exp(kept[:, 2, :]).T if sample_sigma else np.full((C, keep), float(known_sigma))
    out = np.stack([alpha.T, beta.T, sigma], axis=-1)
    out.setflags(write=False)
    rate = float(accepted.sum() / (dims * C * keep)) if keep else 0.0
    return PosteriorSamples(
        draws=out,
        diagnostics=diagnostics(out),
        acceptance_rate=rate,
        step_sizes=steps.T.copy(),
        known_sigma=known_sigma,
    )


# ---------------------------------------------------------------------------
# trend fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrendFit:
    data: TrendData
    posterior: PosteriorSamples
    alpha_mean: float
    beta_mean: float
    t_grid: tuple[float, ...]
    band_lower: tuple[float, ...]
    band_upper: tuple[float, ...]
    prob_beta_positive: float

    @property
    def scope(self) -> tuple[str, str, str]:
        return (self.data.candidate, self.data.kind, self.data.scope)

    def mean_line(self, t: float) -> float:
        return self.alpha_mean + self.beta_mean * t

    def summary(self) -> dict[str, Any]:
        p = self.posterior
        return {
            "candidate": self.data.candidate,
            "kind": self.data.kind,
            "scope": self.data.scope,
            "n": self.data.n,
            "alpha_mean": self.alpha_mean,
            "alpha_sd": p.sd("alpha"),
            "beta_mean": self.beta_mean,
            "beta_sd": p.sd("beta"),
            "sigma_mean": p.mean("sigma"),
            "prob_beta_positive": self.prob_beta_positive,
            "acceptance_rate": p.acceptance_rate,
            "converged": p.converged(),
            "diagnostics": {k: v.to_dict() for k, v in p.diagnostics.items()},
            "band": {
                "t": list(self.t_grid),
                "lower": list(self.band_lower),
                "upper": list(self.band_upper),
            },
        }


def fit_trend(
    data: TrendData,
    priors: PriorConfig = PriorConfig(),
    config: SamplerConfig = SamplerConfig(),
    *,
    t_grid: Sequence[float] | None = None,
    known_sigma: float | None = None,
    band: tuple[float, float] = (0.05, 0.95),
) -> TrendFit:
    """Sample the posterior and summarize the regression line.

    The credible band holds pointwise quantiles of alpha + beta t over the
    draws, by default at every integer t spanning the data.
    """
    posterior = sample_posterior(data, priors, config, known_sigma=known_sigma)
    alpha, beta = posterior.flat("alpha"), posterior.flat("beta")
    if t_grid is None:
        t = data.t
        t_grid = [float(v) for v in np.arange(math.floor(t.min()), math.ceil(t.max()) + 1)]
    lines = alpha[None, :] + beta[None, :] * np.asarray(t_grid, dtype=float)[:, None]
    lower = np.quantile(lines, band[0], axis=1)
    upper = np.quantile(lines, band[1], axis=1)
    return TrendFit(
        data=data,
        posterior=posterior,
        alpha_mean=float(alpha.mean()),
        beta_mean=float(beta.mean()),
        t_grid=tuple(float(v) for v in t_grid),
        band_lower=tuple(float(v) for v in lower),
        band_upper=tuple(float(v) for v in upper),
        prob_beta_positive=float(np.mean(beta > 0.0)),
    )
