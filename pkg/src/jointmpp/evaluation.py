"""Simulation, posterior prediction, cross-validation folds, scoring and hazard products."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import marks
from .exceptions import DomainError
from .graph import PixelGrid, SlopeUnitGraph, build_graph, hard_center
from .model import Dataset, LatentState, ModelConfig, loglik_counts, make_projection, standardize

log = logging.getLogger(__name__)

HAZARD_QUANTILES = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0)
TRUTH_BETA1 = (0.2, 0.2, 0.2, -0.2, -0.2, -0.2, 0.15, 0.15, 0.15)
TRUTH_BETA2 = (0.15, 0.15, 0.15, -0.1, -0.1, -0.1, 0.2, 0.2, 0.2)
COVARIATE_NAMES = ("slope", "TWI", "VRM", "profCurv", "planCurv", "TPI", "LR", "s_height", "v_depth")


@dataclass
class TruthSpec:
    """Parameter values to simulate from; defaults are the simulation-study configuration."""

    gamma1: float = -0.5
    gamma2: float = 0.5
    beta1: tuple = TRUTH_BETA1
    beta2: tuple = TRUTH_BETA2
    beta: float = 1.0
    kappa_eta: float = 3.0
    kappa_mu: float = 3.0
    kappa_w1: float = 2.0
    kappa_w2: float = 2.0
    theta: marks.MarkParams = field(default_factory=lambda: marks.MarkParams("lognormal", (5.0,)))

    def __post_init__(self):
        for name in ("kappa_eta", "kappa_mu", "kappa_w1", "kappa_w2"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")


# ---------------------------------------------------------------------------
# synthetic landscapes and data


def synthetic_landscape(n_units: int, n_side: int, n_covariates: int, rng: np.random.Generator):
    """Square pixel grid partitioned into ``n_units`` Voronoi cells.

    Two units are neighbours when they share a pixel edge.  Covariates are
    spatially smooth random fields, standardised.  Returns
    ``(grid, graph, Z1)``.
    """
    seeds = rng.uniform(0, n_side, size=(n_units, 2))
    xs = np.arange(n_side) + 0.5
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    cent = np.column_stack([X.ravel(), Y.ravel()])
    d2 = ((cent[:, None, :] - seeds[None, :, :]) ** 2).sum(-1)
    su = d2.argmin(axis=1)
    # relabel so every unit id in [0, n) is used
    used, su = np.unique(su, return_inverse=True)
    lab = su.reshape(n_side, n_side)
    pairs = np.concatenate(
        [
            np.column_stack([lab[:-1, :].ravel(), lab[1:, :].ravel()]),
            np.column_stack([lab[:, :-1].ravel(), lab[:, 1:].ravel()]),
        ]
    )
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    graph = build_graph(pairs, n_units=used.size)
    grid = PixelGrid(su_index=su, centroids=cent)
    Z = np.empty((cent.shape[0], n_covariates))
    for p in range(n_covariates):
        centres = rng.uniform(0, n_side, size=(12, 2))
        amp = rng.normal(size=12)
        width = n_side / 6
        field_ = (amp * np.exp(-((cent[:, None, :] - centres[None]) ** 2).sum(-1) / (2 * width**2))).sum(1)
        Z[:, p] = field_ + 0.7 * rng.standard_normal(cent.shape[0])
    Z, _ = standardize(Z)
    return grid, graph, Z


def sample_icar(graph: SlopeUnitGraph, kappa: float, rng: np.random.Generator) -> np.ndarray:
    """Draw from the ICAR prior restricted to the sum-to-zero (per component) subspace."""
    lam, V = np.linalg.eigh(graph.Q.toarray())
    keep = lam > 1e-9 * max(1.0, lam.max())
    z = rng.standard_normal(int(keep.sum()))
    w = V[:, keep] @ (z / np.sqrt(kappa * lam[keep]))
    return hard_center(w, graph.labels)


def simulate_dataset(truth: TruthSpec, graph: SlopeUnitGraph, grid: PixelGrid, Z1, rng: np.random.Generator, Z2_fn=None, z1_names=None, z2_names=None):
    """Simulate counts and sizes from the joint model.

    ``Z2_fn(landslide_pixel) -> (L, P2)`` supplies size covariates; the
    default uses the count covariates of each landslide's pixel.  Returns
    ``(dataset, true_state)``.
    """
    Z1 = np.asarray(Z1, dtype=float).reshape(grid.n1, -1)
    beta1 = np.asarray(truth.beta1, dtype=float)
    beta2 = np.asarray(truth.beta2, dtype=float)
    w1 = sample_icar(graph, truth.kappa_w1, rng)
    w2 = sample_icar(graph, truth.kappa_w2, rng)
    su = grid.su_index
    m_eta = truth.gamma1 + Z1 @ beta1 + w1[su]
    eta = m_eta + rng.standard_normal(grid.n1) / math.sqrt(truth.kappa_eta)
    counts = rng.poisson(grid.exposure * np.exp(eta))
    lpix = np.repeat(np.arange(grid.n1), counts)
    Z2 = Z1[lpix] if Z2_fn is None else np.asarray(Z2_fn(lpix), dtype=float).reshape(lpix.size, -1)
    lsu = su[lpix]
    m_mu = truth.gamma2 + Z2 @ beta2 + truth.beta * w1[lsu] + w2[lsu]
    mu = m_mu + rng.standard_normal(lpix.size) / math.sqrt(truth.kappa_mu)
    sizes = marks.sample(truth.theta, np.exp(mu), rng) if lpix.size else np.zeros(0)
    if z2_names is None and Z2_fn is None:
        z2_names = z1_names
    ds = Dataset(counts=counts, landslide_pixel=lpix, sizes=sizes, Z1=Z1, Z2=Z2, exposure=grid.exposure, z1_names=z1_names, z2_names=z2_names)
    state = LatentState(
        eta=eta, mu=mu, w1=w1, w2=w2, gamma1=truth.gamma1, gamma2=truth.gamma2, beta1=beta1, beta2=beta2,
        beta=truth.beta, kappa_eta=truth.kappa_eta, kappa_mu=truth.kappa_mu, kappa_w1=truth.kappa_w1,
        kappa_w2=truth.kappa_w2, theta=truth.theta,
    )
    return ds, state


# ---------------------------------------------------------------------------
# prediction


def rebuild_eta(chain, dataset: Dataset, su_index, rng=None, items=None) -> np.ndarray:
    """eta draws reconstructed from (gamma1, beta1, w1[, kappa_eta]) draws; iid noise added when ``rng`` is given."""
    items = np.arange(dataset.n1) if items is None else np.asarray(items)
    d = chain.draws
    su = np.asarray(su_index)[items]
    m = d["gamma1"][:, None] + d["beta1"] @ dataset.Z1[items].T + d["w1"][:, su]
    if rng is not None:
        m = m + rng.standard_normal(m.shape) / np.sqrt(d["kappa_eta"])[:, None]
    return m


def rebuild_mu(chain, Z2, unit_index, rng=None) -> np.ndarray:
    """mu draws reconstructed from (gamma2, beta2, beta, w1, w2[, kappa_mu]) draws at arbitrary locations."""
    d = chain.draws
    Z2 = np.asarray(Z2, dtype=float).reshape(len(unit_index), -1)
    u = np.asarray(unit_index)
    m = d["gamma2"][:, None] + d["beta2"] @ Z2.T + d["beta"][:, None] * d["w1"][:, u] + d["w2"][:, u]
    if rng is not None:
        m = m + rng.standard_normal(m.shape) / np.sqrt(d["kappa_mu"])[:, None]
    return m


@dataclass
class Prediction:
    pixel_count: np.ndarray
    landslide_size: np.ndarray
    unit_count: np.ndarray
    unit_size_mean: np.ndarray  # nan for units without landslides
    count_draws: np.ndarray  # per-draw, per-unit expected counts
    size_draws: np.ndarray  # per-draw, per-landslide exp(mu)


def posterior_predict(chain, dataset: Dataset, su_index, n_units: int, rebuild_counts=None, rebuild_sizes=None, rng=None, count_scale: float = 1.0) -> Prediction:
    """Posterior predictive means: ``e exp(eta)`` for counts and ``exp(mu)`` for sizes.

    Pixels in ``rebuild_counts`` / landslides in ``rebuild_sizes`` (boolean
    masks) get their eta / mu rebuilt from the regression and spatial draws
    instead of the stored latent draws.  Unit values are sums over pixels
    (counts) and means over the unit's landslides (sizes).
    """
    if chain.n_draws == 0:
        raise DomainError("chain has no draws")
    su = np.asarray(su_index)
    eta = chain.draws["eta"].copy()
    mu = chain.draws["mu"].copy()
    if rebuild_counts is not None and np.any(rebuild_counts):
        items = np.flatnonzero(rebuild_counts)
        eta[:, items] = rebuild_eta(chain, dataset, su, rng, items)
    lunits = su[dataset.landslide_pixel]
    if rebuild_sizes is not None and np.any(rebuild_sizes):
        items = np.flatnonzero(rebuild_sizes)
        mu[:, items] = rebuild_mu(chain, dataset.Z2[items], lunits[items], rng)
    lam = count_scale * dataset.exposure * np.exp(eta)
    size = np.exp(mu)
    unit_draws = np.stack([np.bincount(su, weights=row, minlength=n_units) for row in lam]) if lam.size else np.zeros((lam.shape[0], n_units))
    unit_size = _unit_mean(size.mean(0), lunits, n_units)
    return Prediction(
        pixel_count=lam.mean(0),
        landslide_size=size.mean(0),
        unit_count=unit_draws.mean(0),
        unit_size_mean=unit_size,
        count_draws=unit_draws,
        size_draws=size,
    )


# ---------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldPlan:
    mode: str
    K: int
    labels: np.ndarray  # fold label in 1..K per item (units or landslides)
    seed: int

    def heldout(self, k: int) -> np.ndarray:
        return self.labels == k

    def sizes(self) -> list[int]:
        return [int(np.sum(self.labels == k)) for k in range(1, self.K + 1)]


def fold_from_uniform(u, K: int) -> np.ndarray:
    """Fold ``i`` in 1..K for ``u`` in ``[(i-1)/K, i/K)``; ``u == 1`` goes to fold K."""
    u = np.asarray(u, dtype=float)
    return np.minimum(np.floor(u * K).astype(np.int64) + 1, K)


def make_folds(mode: str, K: int, n_items: int, seed: int) -> FoldPlan:
    if K < 2:
        raise DomainError("K must be at least 2")
    if K > n_items:
        raise DomainError(f"K={K} exceeds the number of items ({n_items})")
    rng = np.random.default_rng(seed)
    if mode == "thinning":
        labels = fold_from_uniform(rng.uniform(size=n_items), K)
    elif mode == "slope-unit-kfold":
        labels = np.empty(n_items, dtype=np.int64)
        for k, part in enumerate(np.array_split(rng.permutation(n_items), K), start=1):
            labels[part] = k
    else:
        raise DomainError(f"unknown fold mode {mode!r}")
    return FoldPlan(mode=mode, K=K, labels=labels, seed=seed)


def thinning_adjust(x, K: int):
    """Rescale an intensity fitted on (K-1)/K of the points back to the full-data scale."""
    if K < 2:
        raise DomainError("K must be at least 2")
    return np.asarray(x, dtype=float) * (K / (K - 1))


def thin_dataset(dataset: Dataset, keep) -> Dataset:
    """Dataset with only the landslides in ``keep`` (boolean per landslide); pixel counts recomputed."""
    keep = np.asarray(keep, bool)
    lp = dataset.landslide_pixel[keep]
    counts = np.bincount(lp, minlength=dataset.n1)
    return Dataset(
        counts=counts, landslide_pixel=lp, sizes=dataset.sizes[keep], Z1=dataset.Z1, Z2=dataset.Z2[keep],
        exposure=dataset.exposure, z1_names=dataset.z1_names, z2_names=dataset.z2_names,
    )


# ---------------------------------------------------------------------------
# scores


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with midranks for ties; ``nan`` when only one class is present or scores are not finite."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if not np.all(np.isfinite(s)):
        log.info("AUC not applicable: non-finite scores")
        return math.nan
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        log.info("AUC not applicable: single-class labels")
        return math.nan
    r = stats.rankdata(s)
    return float((r[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def crps_ensemble(draws, observation):
    """Ensemble CRPS ``mean|X - y| - mean|X - X'|/2``; ``draws`` is (n,) or (n, m) with one column per observation."""
    x = np.asarray(draws, dtype=float)
    if x.shape[0] == 0:
        raise DomainError("empty ensemble")
    y = np.asarray(observation, dtype=float)
    n = x.shape[0]
    xs = np.sort(x, axis=0)
    w = (2.0 * np.arange(1, n + 1) - n - 1).reshape((n,) + (1,) * (x.ndim - 1))
    spread = 2.0 * (w * xs).sum(axis=0) / n**2
    out = np.abs(x - y).mean(axis=0) - 0.5 * spread
    return float(out) if np.ndim(out) == 0 else out


def dic(deviance_draws, deviance_at_mean: float) -> float:
    d = np.asarray(deviance_draws, dtype=float)
    if d.size == 0:
        raise DomainError("no deviance draws")
    if not np.all(np.isfinite(d)) or not math.isfinite(deviance_at_mean):
        raise DomainError("non-finite deviance")
    dbar = float(d.mean())
    return dbar + (dbar - deviance_at_mean)


def effective_parameters(deviance_draws, deviance_at_mean: float) -> float:
    return float(np.mean(deviance_draws)) - deviance_at_mean


def deviance(eta, mu, theta: marks.MarkParams, dataset: Dataset) -> float:
    """-2 x (count + size log likelihood) given the latent fields, observed items only."""
    ll = loglik_counts(dataset.counts, eta, dataset.exposure, dataset.count_observed)
    obs = dataset.size_observed
    if dataset.L and obs.any():
        ll += float(np.sum(marks.log_density(theta, dataset.sizes[obs], np.exp(mu[obs]))))
    return -2.0 * ll


def chain_dic(chain, dataset: Dataset) -> tuple[float, float]:
    """``(DIC, p_D)`` with the deviance conditional on the latent fields."""
    fam = marks.MarkFamily(chain.family)
    th = chain.draws["theta"]
    devs = np.array([deviance(chain.draws["eta"][k], chain.draws["mu"][k], marks.MarkParams(fam, tuple(th[k])), dataset) for k in range(chain.n_draws)])
    d_mean = deviance(chain.draws["eta"].mean(0), chain.draws["mu"].mean(0), marks.MarkParams(fam, tuple(th.mean(0))), dataset)
    return dic(devs, d_mean), effective_parameters(devs, d_mean)


# ---------------------------------------------------------------------------
# susceptibility and hazard


def susceptibility(eta_draws, exposure=None) -> np.ndarray:
    """Posterior mean probability of at least one event per pixel, ``1 - exp(-e exp(eta))``."""
    eta = np.atleast_2d(np.asarray(eta_draws, dtype=float))
    if eta.shape[0] == 0:
        raise DomainError("no draws")
    e = 1.0 if exposure is None else np.asarray(exposure, dtype=float)
    return (-np.expm1(-e * np.exp(eta))).mean(axis=0)


@dataclass
class HazardResult:
    pixel_mean: np.ndarray
    aggregate_draws: np.ndarray
    quantiles: dict[float, float]


def hazard(eta_draws, mu_draws, exposure=None, subset=None, quantiles=HAZARD_QUANTILES) -> HazardResult:
    """Pixel hazard ``e exp(eta) exp(2 mu)`` per draw, its posterior mean, and the subset total's quantiles."""
    eta = np.atleast_2d(np.asarray(eta_draws, dtype=float))
    mu = np.atleast_2d(np.asarray(mu_draws, dtype=float))
    if eta.shape != mu.shape:
        raise DomainError("eta and mu draws must be aligned (same draws x pixels shape)")
    e = 1.0 if exposure is None else np.asarray(exposure, dtype=float)
    h = e * np.exp(eta + 2.0 * mu)
    sub = np.arange(eta.shape[1]) if subset is None else np.asarray(subset)
    agg = h[:, sub].sum(axis=1)
    q = {float(p): float(v) for p, v in zip(quantiles, np.quantile(agg, quantiles))}
    return HazardResult(pixel_mean=h.mean(axis=0), aggregate_draws=agg, quantiles=q)


def pixel_mu_draws(chain, Z2_pixel, su_index, rng=None) -> np.ndarray:
    """Size log-medians at every pixel, rebuilt from the regression and spatial draws."""
    return rebuild_mu(chain, Z2_pixel, su_index, rng)


# ---------------------------------------------------------------------------
# cross-validation


def unit_scores(pred: Prediction, dataset: Dataset, su_index, n_units: int, units, size_threshold: float, count_threshold: float = 1.0, count_ensemble=None, size_ensemble=None) -> dict[str, float]:
    """AUC, mean absolute error (and CRPS when ensembles are given) over ``units``."""
    su = np.asarray(su_index)
    units = np.asarray(units)
    obs_count = np.bincount(su, weights=dataset.counts, minlength=n_units)
    lunits = su[dataset.landslide_pixel]
    nls = np.bincount(lunits, minlength=n_units)
    obs_size = np.full(n_units, np.nan)
    if dataset.L:
        s = np.bincount(lunits, weights=dataset.sizes, minlength=n_units)
        obs_size[nls > 0] = s[nls > 0] / nls[nls > 0]
    out = {
        "auc_counts": auc(pred.unit_count[units], obs_count[units] >= count_threshold),
        "abserr_counts": float(np.mean(np.abs(pred.unit_count[units] - obs_count[units]))),
    }
    su_units = units[nls[units] > 0]
    if su_units.size:
        out["auc_sizes"] = auc(pred.unit_size_mean[su_units], obs_size[su_units] >= size_threshold)
        out["abserr_sizes"] = float(np.mean(np.abs(pred.unit_size_mean[su_units] - obs_size[su_units])))
    else:
        out["auc_sizes"] = out["abserr_sizes"] = math.nan
    if count_ensemble is not None:
        out["crps_counts"] = float(np.mean(crps_ensemble(count_ensemble[:, units], obs_count[units])))
    if size_ensemble is not None and su_units.size:
        out["crps_sizes"] = float(np.mean(crps_ensemble(size_ensemble[:, su_units], obs_size[su_units])))
    return out


def predictive_ensembles(pred: Prediction, chain, dataset: Dataset, su_index, n_units: int, rng):
    """Predictive draws of unit counts (Poisson) and unit mean sizes (mark draws)."""
    counts = rng.poisson(pred.count_draws)
    lunits = np.asarray(su_index)[dataset.landslide_pixel]
    nls = np.bincount(lunits, minlength=n_units)
    fam = marks.MarkFamily(chain.family)
    sizes = np.full((chain.n_draws, n_units), np.nan)
    if dataset.L:
        for k in range(chain.n_draws):
            draw = marks.sample(marks.MarkParams(fam, tuple(chain.draws["theta"][k])), pred.size_draws[k], rng)
            s = np.bincount(lunits, weights=draw, minlength=n_units)
            sizes[k, nls > 0] = s[nls > 0] / nls[nls > 0]
    return counts, sizes


def _unit_mean(values, lunits, n_units):
    nls = np.bincount(lunits, minlength=n_units)
    out = np.full(n_units, np.nan)
    if values.size:
        s = np.bincount(lunits, weights=values, minlength=n_units)
        out[nls > 0] = s[nls > 0] / nls[nls > 0]
    return out


def crossval(config: ModelConfig, dataset: Dataset, graph: SlopeUnitGraph, su_index, plan: FoldPlan, settings, size_threshold: float | None = None, count_threshold: float = 1.0, on_fit=None, workers: int = 1) -> list[dict]:
    """Out-of-sample scores per fold.

    slope-unit-kfold: likelihood terms of held-out units are dropped and their
    latent eta / mu draws imputed by the sampler; scores cover the held-out units.

    thinning: held-out landslides are removed and the counts recomputed.  The
    intensity fitted on the rest is rescaled by K/(K-1) to the full-data scale,
    and its 1/K share is the prediction of the held-out counts.  Held-out sizes
    are predicted from mu rebuilt out of the regression and spatial draws.

    Folds are independent (own seeds), so ``workers > 1`` runs them in
    separate processes with identical results; ``on_fit(k, chain)`` is only
    called in the serial path.
    """
    size_threshold = float(np.mean(dataset.sizes)) if size_threshold is None else size_threshold
    args = [(config, dataset, graph, su_index, plan, k, settings, size_threshold, count_threshold) for k in range(1, plan.K + 1)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(workers, plan.K)) as ex:
            return [row for row, _ in ex.map(_fold_rows_only, args)]
    rows = []
    for a in args:
        row, chain = crossval_fold(*a)
        rows.append(row)
        if on_fit is not None:
            on_fit(a[5], chain)
    return rows


def _fold_rows_only(args):
    row, _ = crossval_fold(*args)
    return row, None


def crossval_fold(config, dataset, graph, su_index, plan: FoldPlan, k: int, settings, size_threshold: float, count_threshold: float = 1.0):
    """Fit without fold ``k`` and score it.  Returns ``(row, chain)``."""
    from .sampler import ChainSettings, Sampler

    su = np.asarray(su_index)
    lunits_all = su[dataset.landslide_pixel]
    held = plan.heldout(k)
    fold_settings = ChainSettings(**{**settings.__dict__, "seed": settings.seed + k})
    rng = np.random.default_rng([plan.seed, k])
    if plan.mode == "slope-unit-kfold":
        if held.size != graph.n:
            raise DomainError("slope-unit folds must label every unit")
        ds = dataset.with_heldout(count_observed=~held[su], size_observed=~held[lunits_all])
        chain = Sampler(config, ds, graph, make_projection(su, ds, graph.n), fold_settings).run()
        pred = posterior_predict(chain, ds, su, graph.n)
        eval_ds, units = dataset, np.flatnonzero(held)
    elif plan.mode == "thinning":
        if held.size != dataset.L:
            raise DomainError("thinning folds must label every landslide")
        train = thin_dataset(dataset, ~held)
        chain = Sampler(config, train, graph, make_projection(su, train, graph.n), fold_settings).run()
        eval_ds = thin_dataset(dataset, held)
        lam = dataset.exposure * np.exp(chain.draws["eta"])
        full = thinning_adjust(np.stack([np.bincount(su, weights=row, minlength=graph.n) for row in lam]), plan.K)
        count_draws = full / plan.K
        lunits = su[eval_ds.landslide_pixel]
        size_draws = np.exp(rebuild_mu(chain, eval_ds.Z2, lunits, rng))
        pred = Prediction(
            pixel_count=thinning_adjust(lam.mean(0), plan.K) / plan.K,
            landslide_size=size_draws.mean(0),
            unit_count=count_draws.mean(0),
            unit_size_mean=_unit_mean(size_draws.mean(0), lunits, graph.n),
            count_draws=count_draws,
            size_draws=size_draws,
        )
        units = np.arange(graph.n)
    else:
        raise DomainError(f"unknown fold mode {plan.mode!r}")
    count_ens, size_ens = predictive_ensembles(pred, chain, eval_ds, su, graph.n, rng)
    row = {"fold": k, "n_heldout": int(held.sum())}
    row.update(unit_scores(pred, eval_ds, su, graph.n, units, size_threshold, count_threshold, count_ens, size_ens))
    return row, chain


def pool_scores(rows: list[dict]) -> dict[str, float]:
    keys = [k for k in rows[0] if k not in ("fold", "n_heldout")]
    out = {}
    for k in keys:
        v = np.array([r.get(k, math.nan) for r in rows], dtype=float)
        out[k] = float(v[~np.isnan(v)].mean()) if np.any(~np.isnan(v)) else math.nan
    return out
