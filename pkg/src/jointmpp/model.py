"""Joint occurrence-size model: data containers, submodels, priors, log posterior and gradients.

Counts live on pixels, sizes on individual landslides, and the two ICAR
vectors ``w1``/``w2`` on slope units::

    Y_i      ~ Poisson(e_i exp(eta_i))
    eta      ~ N(gamma1 + Z1 beta1 + A1 w1, 1/kappa_eta)
    A_j      ~ f_A(. ; median=exp(mu_j), theta)
    mu       ~ N(gamma2 + Z2 beta2 + beta A2 w1 + A2 w2, 1/kappa_mu)
    w_h      ~ ICAR(kappa_wh Q),  sum-to-zero per connected component

Absent iid effects are emulated by fixing the corresponding precision at a
large value (``ModelConfig.fixed_precision``).
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import special as sc

from . import marks
from .exceptions import DomainError
from .graph import Projection, SlopeUnitGraph, icar_quad_form

SUBMODELS = {
    # name: (iid_eta, iid_mu, beta_free)
    "M1": (True, True, True),
    "M2": (False, False, True),
    "M3": (True, False, True),
    "M4": (False, True, True),
    "M1_0": (True, True, False),
    "M2_0": (False, False, False),
    "M3_0": (True, False, False),
    "M4_0": (False, True, False),
}


def _design(Z, rows: int) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 2 and Z.shape[0] == rows:
        return Z
    if Z.size == 0:
        return np.zeros((rows, 0))
    return Z.reshape(rows, -1)


@dataclass
class Dataset:
    """Pixel counts, landslide sizes and the two design matrices.

    ``landslide_pixel[j]`` is the pixel of landslide ``j``; ``Z2`` has one row
    per landslide.  ``count_observed`` / ``size_observed`` mark which
    likelihood terms enter the posterior (held-out items are ``False``).
    """

    counts: np.ndarray
    landslide_pixel: np.ndarray
    sizes: np.ndarray
    Z1: np.ndarray
    Z2: np.ndarray
    exposure: np.ndarray | None = None
    z1_names: tuple[str, ...] | None = None
    z2_names: tuple[str, ...] | None = None
    count_observed: np.ndarray | None = None
    size_observed: np.ndarray | None = None
    multiplicity_check: bool = True

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.landslide_pixel = np.asarray(self.landslide_pixel, dtype=np.int64)
        self.sizes = np.asarray(self.sizes, dtype=float)
        n1, L = self.counts.size, self.sizes.size
        self.Z1 = _design(self.Z1, n1)
        self.Z2 = _design(self.Z2, L)
        self.exposure = np.ones(n1) if self.exposure is None else np.asarray(self.exposure, dtype=float)
        if np.any(self.counts < 0):
            raise DomainError("negative count")
        if self.landslide_pixel.shape != (L,):
            raise DomainError("landslide_pixel and sizes must have equal length")
        if L and (self.landslide_pixel.min() < 0 or self.landslide_pixel.max() >= n1):
            raise DomainError("landslide references an unknown pixel")
        if np.any(~np.isfinite(self.sizes)) or np.any(self.sizes <= 0):
            raise DomainError("landslide sizes must be positive")
        if self.exposure.shape != (n1,) or np.any(self.exposure <= 0):
            raise DomainError("exposure must be positive, one per pixel")
        if L and np.any(self.counts[self.landslide_pixel] == 0):
            raise DomainError("landslide located in a pixel with zero count")
        if self.multiplicity_check:
            per_pixel = np.bincount(self.landslide_pixel, minlength=n1)
            if np.any(per_pixel != self.counts):
                raise DomainError("pixel counts must equal the number of landslide records per pixel")
        if self.z1_names is None:
            self.z1_names = tuple(f"z1_{p}" for p in range(self.Z1.shape[1]))
        if self.z2_names is None:
            self.z2_names = tuple(f"z2_{q}" for q in range(self.Z2.shape[1]))
        self.count_observed = np.ones(n1, bool) if self.count_observed is None else np.asarray(self.count_observed, bool)
        self.size_observed = np.ones(L, bool) if self.size_observed is None else np.asarray(self.size_observed, bool)

    @property
    def n1(self) -> int:
        return self.counts.size

    @property
    def L(self) -> int:
        return self.sizes.size

    def with_heldout(self, count_observed=None, size_observed=None) -> "Dataset":
        return replace(
            self,
            count_observed=self.count_observed if count_observed is None else count_observed,
            size_observed=self.size_observed if size_observed is None else size_observed,
        )


def make_projection(su_index, dataset: Dataset, n_units: int) -> Projection:
    su = np.asarray(su_index, dtype=np.int64)
    return Projection(counts_index=su, sizes_index=su[dataset.landslide_pixel], n_units=n_units)


@dataclass(frozen=True)
class CovariateTransform:
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, Z):
        return (np.asarray(Z, dtype=float) - self.mean) / self.sd


def standardize(Z) -> tuple[np.ndarray, CovariateTransform]:
    """Centre and scale columns to mean 0, sd 1 (population sd; constant columns are only centred)."""
    Z = np.asarray(Z, dtype=float)
    mean = Z.mean(axis=0) if Z.size else np.zeros(Z.shape[1])
    sd = Z.std(axis=0) if Z.size else np.ones(Z.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    t = CovariateTransform(mean, sd)
    return t.apply(Z), t


@dataclass(frozen=True)
class ModelConfig:
    family: marks.MarkFamily = marks.MarkFamily.LOGNORMAL
    theta_init: tuple[float, ...] | None = None
    iid_eta: bool = True
    iid_mu: bool = True
    beta_free: bool = True
    fixed_precision: float = 1000.0
    coef_var: float = 100.0
    prec_shape: float = 0.25
    prec_rate: float = 3.0
    icar_rate_numerator: float = 3.0
    icar_sd_ratio: float = 0.7
    theta_shape: float = 0.25
    theta_rate: float = 0.25
    # test hooks: drop the size likelihood, or swap the Poisson count layer for Y ~ N(eta, 1)
    size_likelihood: bool = True
    count_likelihood: str = "poisson"

    def __post_init__(self):
        object.__setattr__(self, "family", marks.MarkFamily(self.family))
        if self.fixed_precision <= 0 or self.coef_var <= 0:
            raise DomainError("fixed_precision and coef_var must be positive")
        if self.count_likelihood not in ("poisson", "gaussian"):
            raise DomainError(f"unknown count likelihood {self.count_likelihood!r}")

    @classmethod
    def submodel(cls, name: str, **kw) -> "ModelConfig":
        try:
            iid_eta, iid_mu, beta_free = SUBMODELS[name]
        except KeyError:
            raise DomainError(f"unknown submodel {name!r}; expected one of {sorted(SUBMODELS)}") from None
        return cls(iid_eta=iid_eta, iid_mu=iid_mu, beta_free=beta_free, **kw)

    @property
    def submodel_name(self) -> str:
        key = (self.iid_eta, self.iid_mu, self.beta_free)
        return next(k for k, v in SUBMODELS.items() if v == key)

    def icar_rate(self, graph: SlopeUnitGraph) -> float:
        return self.icar_rate_numerator / (graph.mean_degree * self.icar_sd_ratio**2)

    def initial_theta(self) -> marks.MarkParams:
        if self.theta_init is None:
            return marks.default_params(self.family)
        return marks.MarkParams(self.family, tuple(self.theta_init))


@dataclass
class LatentState:
    eta: np.ndarray
    mu: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    gamma1: float
    gamma2: float
    beta1: np.ndarray
    beta2: np.ndarray
    beta: float
    kappa_eta: float
    kappa_mu: float
    kappa_w1: float
    kappa_w2: float
    theta: marks.MarkParams

    def copy(self) -> "LatentState":
        return copy.deepcopy(self)

    def validate(self, dataset: Dataset, graph: SlopeUnitGraph):
        if self.eta.shape != (dataset.n1,) or self.mu.shape != (dataset.L,):
            raise DomainError("eta/mu dimensions do not match the dataset")
        if self.w1.shape != (graph.n,) or self.w2.shape != (graph.n,):
            raise DomainError("w1/w2 dimensions do not match the graph")
        if self.beta1.shape != (dataset.Z1.shape[1],) or self.beta2.shape != (dataset.Z2.shape[1],):
            raise DomainError("coefficient dimensions do not match the design matrices")
        for name in ("kappa_eta", "kappa_mu", "kappa_w1", "kappa_w2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive, got {v}")


SCALAR_FIELDS = ("gamma1", "gamma2", "beta", "kappa_eta", "kappa_mu", "kappa_w1", "kappa_w2")
VECTOR_FIELDS = ("eta", "mu", "w1", "w2", "beta1", "beta2")


def initial_state(config: ModelConfig, dataset: Dataset, graph: SlopeUnitGraph) -> LatentState:
    """Data-informed starting point: eta = log((Y + 0.5)/e), mu = log(size), precisions at prior means.

    Under the Gaussian count hook eta starts at Y itself.
    """
    if config.count_likelihood == "gaussian":
        eta0 = np.asarray(dataset.counts, dtype=float).copy()
    else:
        eta0 = np.log((dataset.counts + 0.5) / dataset.exposure)
    prior_mean = config.prec_shape / config.prec_rate
    icar_mean = config.prec_shape / config.icar_rate(graph)
    return LatentState(
        eta=eta0,
        mu=np.log(dataset.sizes),
        w1=np.zeros(graph.n),
        w2=np.zeros(graph.n),
        gamma1=0.0,
        gamma2=0.0,
        beta1=np.zeros(dataset.Z1.shape[1]),
        beta2=np.zeros(dataset.Z2.shape[1]),
        beta=0.0,
        kappa_eta=prior_mean if config.iid_eta else config.fixed_precision,
        kappa_mu=prior_mean if config.iid_mu else config.fixed_precision,
        kappa_w1=icar_mean,
        kappa_w2=icar_mean,
        theta=config.initial_theta(),
    )


def linear_predictor_counts(state: LatentState, dataset: Dataset, proj: Projection) -> np.ndarray:
    """Mean of the eta layer: ``gamma1 + Z1 beta1 + A1 w1``."""
    if dataset.Z1.shape[1] != state.beta1.size or proj.counts_index.size != dataset.n1:
        raise DomainError("dimension mismatch in count predictor")
    return state.gamma1 + dataset.Z1 @ state.beta1 + state.w1[proj.counts_index]


def linear_predictor_sizes(state: LatentState, dataset: Dataset, proj: Projection) -> np.ndarray:
    """Mean of the mu layer: ``gamma2 + Z2 beta2 + beta A2 w1 + A2 w2``."""
    if dataset.Z2.shape[1] != state.beta2.size or proj.sizes_index.size != dataset.L:
        raise DomainError("dimension mismatch in size predictor")
    idx = proj.sizes_index
    return state.gamma2 + dataset.Z2 @ state.beta2 + state.beta * state.w1[idx] + state.w2[idx]


def loglik_counts(Y, eta, e, observed=None) -> float:
    """Poisson log likelihood including the ``log Y!`` constants."""
    Y = np.asarray(Y)
    if np.any(Y < 0):
        raise DomainError("negative count")
    eta = np.asarray(eta, dtype=float)
    e = np.asarray(e, dtype=float)
    terms = Y * (np.log(e) + eta) - e * np.exp(eta) - sc.gammaln(Y + 1.0)
    if observed is not None:
        terms = terms[observed]
    return float(np.sum(terms))


def loglik_sizes(sizes, mu, theta: marks.MarkParams, observed=None) -> float:
    sizes = np.asarray(sizes, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if sizes.size == 0:
        return 0.0
    if observed is not None:
        sizes, mu = sizes[observed], mu[observed]
        if sizes.size == 0:
            return 0.0
    return float(np.sum(marks.log_density(theta, sizes, np.exp(mu))))


def _count_loglik(config, dataset, eta):
    if config.count_likelihood == "gaussian":
        r = (dataset.counts - eta)[dataset.count_observed]
        return -0.5 * float(r @ r)
    return loglik_counts(dataset.counts, eta, dataset.exposure, dataset.count_observed)


def _gauss_layer(x, m, kappa):
    r = x - m
    return -0.5 * kappa * float(r @ r) + 0.5 * x.size * math.log(kappa)


def _normal_prior(x, var):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return -0.5 * float(x @ x) / var


def _gamma_prior(x, a, b):
    return (a - 1.0) * math.log(x) - b * x


def log_posterior_terms(state: LatentState, dataset: Dataset, graph: SlopeUnitGraph, proj: Projection, config: ModelConfig) -> dict[str, float]:
    """Individual log-posterior contributions (additive constants of the priors dropped)."""
    state.validate(dataset, graph)
    if state.theta.family is not config.family:
        raise DomainError("state theta family differs from config family")
    if not config.beta_free and state.beta != 0.0:
        raise DomainError("beta must be 0 when beta_free is False")
    m_eta = linear_predictor_counts(state, dataset, proj)
    m_mu = linear_predictor_sizes(state, dataset, proj)
    icar_rate = config.icar_rate(graph)
    t = {
        "counts": _count_loglik(config, dataset, state.eta),
        "sizes": loglik_sizes(dataset.sizes, state.mu, state.theta, dataset.size_observed) if config.size_likelihood else 0.0,
        "eta_layer": _gauss_layer(state.eta, m_eta, state.kappa_eta),
        "mu_layer": _gauss_layer(state.mu, m_mu, state.kappa_mu),
        "w1_icar": -0.5 * state.kappa_w1 * icar_quad_form(graph, state.w1) + 0.5 * graph.rank * math.log(state.kappa_w1),
        "w2_icar": -0.5 * state.kappa_w2 * icar_quad_form(graph, state.w2) + 0.5 * graph.rank * math.log(state.kappa_w2),
        "coef_counts": _normal_prior(np.r_[state.gamma1, state.beta1], config.coef_var),
        "coef_sizes": _normal_prior(np.r_[state.gamma2, state.beta2], config.coef_var),
        "beta": _normal_prior(state.beta, config.coef_var) if config.beta_free else 0.0,
        "kappa_eta": _gamma_prior(state.kappa_eta, config.prec_shape, config.prec_rate) if config.iid_eta else 0.0,
        "kappa_mu": _gamma_prior(state.kappa_mu, config.prec_shape, config.prec_rate) if config.iid_mu else 0.0,
        "kappa_w1": _gamma_prior(state.kappa_w1, config.prec_shape, icar_rate),
        "kappa_w2": _gamma_prior(state.kappa_w2, config.prec_shape, icar_rate),
        "theta": sum(_gamma_prior(v, config.theta_shape, config.theta_rate) for v in state.theta.values),
    }
    return t


def log_posterior(state, dataset, graph, proj, config) -> float:
    return float(sum(log_posterior_terms(state, dataset, graph, proj, config).values()))


def grad_eta(state: LatentState, dataset: Dataset, proj: Projection, config: ModelConfig, eta=None) -> np.ndarray:
    """Gradient of the eta full conditional: ``Y - e exp(eta) - kappa_eta (eta - m_eta)`` on observed pixels."""
    eta = state.eta if eta is None else eta
    if config.count_likelihood == "gaussian":
        lik = dataset.counts - eta
    else:
        lik = dataset.counts - dataset.exposure * np.exp(eta)
    lik = np.where(dataset.count_observed, lik, 0.0)
    return lik - state.kappa_eta * (eta - linear_predictor_counts(state, dataset, proj))


def grad_mu(state: LatentState, dataset: Dataset, proj: Projection, config: ModelConfig, mu=None) -> np.ndarray:
    mu = state.mu if mu is None else mu
    if dataset.L == 0:
        return np.zeros(0)
    g = -state.kappa_mu * (mu - linear_predictor_sizes(state, dataset, proj))
    if config.size_likelihood:
        lik = marks.grad_log_density_logmedian(state.theta, dataset.sizes, mu)
        g = g + np.where(dataset.size_observed, lik, 0.0)
    return g
