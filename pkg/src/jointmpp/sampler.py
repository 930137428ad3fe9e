"""Gibbs / MALA / Metropolis sampler for the joint count-size model.

One sweep updates, in order: eta (MALA), mu (MALA), (gamma1, beta1),
(gamma2, beta2, beta), w1, w2, the free precisions (all Gibbs) and the mark
parameters (componentwise log-scale random-walk Metropolis).  Step sizes are
adapted by Robbins-Monro during burn-in only.  MALA steps are tuned on a
dimensionless scale and divided by the block's current conditional precision
(see :func:`step_scale`), so the frozen step stays matched when the
hyperparameters wander after burn-in.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import lapack

from . import marks
from .exceptions import DomainError, NumericalError, UpdateError
from .graph import Projection, SlopeUnitGraph, hard_center, icar_quad_form
from .model import Dataset, LatentState, ModelConfig, initial_state, linear_predictor_counts, linear_predictor_sizes

CHECKPOINT_VERSION = 1
MALA_TARGET = 0.574
THETA_TARGET = 0.44
ADAPT_DECAY = 0.6


@dataclass
class MalaTuner:
    """Robbins-Monro tuner on the log step size: ``log h += t**-decay * (alpha - target)``."""

    h: float = 0.01
    target: float = MALA_TARGET
    decay: float = ADAPT_DECAY
    t: int = 0
    frozen: bool = False
    n_prop: int = 0
    n_acc: int = 0

    def adapt(self, alpha: float):
        if self.frozen:
            return
        self.t += 1
        self.h = math.exp(math.log(self.h) + self.t ** (-self.decay) * (alpha - self.target))

    def record(self, accepted: bool):
        self.n_prop += 1
        self.n_acc += int(accepted)

    @property
    def rate(self) -> float:
        return self.n_acc / self.n_prop if self.n_prop else math.nan

    def reset_counts(self):
        self.n_prop = self.n_acc = 0


@dataclass
class ChainSettings:
    n_iter: int = 100_000
    burn_in: int = 75_000
    thin: int = 1
    seed: int = 0
    eta_step: float = 0.1
    mu_step: float = 0.1
    theta_step: float = 0.1

    def __post_init__(self):
        if not (0 <= self.burn_in < self.n_iter):
            raise DomainError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise DomainError("thin must be >= 1")
        if (self.n_iter - self.burn_in) % self.thin:
            raise DomainError("(n_iter - burn_in) must be a multiple of thin")

    @property
    def n_saved(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin


class _Static:
    """Quantities that do not change during a run."""

    def __init__(self, dataset: Dataset, graph: SlopeUnitGraph, proj: Projection):
        self.X1 = np.column_stack([np.ones(dataset.n1), dataset.Z1])
        self.X1tX1 = self.X1.T @ self.X1
        self.X2 = np.column_stack([np.ones(dataset.L), dataset.Z2])
        self.X2tX2 = self.X2.T @ self.X2
        self.Q = graph.Q.toarray()
        self.C = graph.component_indicator()
        self.CCt = self.C @ self.C.T
        self.npix = proj.unit_counts("counts")
        self.nls = proj.unit_counts("sizes")
        self.idx1 = proj.counts_index
        self.idx2 = proj.sizes_index
        # None selects the cheaper global centring when the graph is connected
        self.labels = graph.labels if graph.n_components > 1 else None
        self.n_units = graph.n
        self.rank = graph.rank


# ---------------------------------------------------------------------------
# Gibbs pieces


def gibbs_precision(rss: float, n_eff: float, shape: float, rate: float, rng: np.random.Generator) -> float:
    """Draw from ``Gamma(shape + n_eff/2, rate + rss/2)`` (rate parametrisation)."""
    if shape <= 0 or rate <= 0:
        raise DomainError("invalid Gamma prior")
    if rss < 0 or n_eff <= 0:
        raise DomainError("need rss >= 0 and n_eff > 0")
    return float(rng.gamma(shape + 0.5 * n_eff, 1.0 / (rate + 0.5 * rss)))


def gaussian_conditional(X: np.ndarray, r: np.ndarray, noise_prec: float, prior_var: float, XtX=None):
    """Mean and Cholesky factor of the coefficient posterior for ``r ~ N(X b, 1/noise_prec)``, ``b ~ N(0, prior_var I)``."""
    XtX = X.T @ X if XtX is None else XtX
    P = noise_prec * XtX
    P.flat[:: X.shape[1] + 1] += 1.0 / prior_var
    L = _cholesky(P, "coefficient posterior precision")
    mean, _ = lapack.dpotrs(L, noise_prec * (X.T @ r), lower=1)
    return mean, L


def _cholesky(P, what):
    """Lower Cholesky factor via LAPACK (upper triangle left unreferenced)."""
    L, info = lapack.dpotrf(P, lower=1, clean=0)
    if info != 0:
        raise NumericalError(f"{what} is not positive definite (LAPACK info={info})")
    return L


def _draw_from_chol(mean, L, rng):
    """``mean + L^{-T} z``: a draw from ``N(mean, (L L')^{-1})``."""
    z, _ = lapack.dtrtrs(L, rng.standard_normal(mean.size), lower=1, trans=1)
    return mean + z


def gibbs_coefficients(side: str, state: LatentState, dataset: Dataset, proj: Projection, config: ModelConfig, rng, static: _Static | None = None):
    """Joint Gaussian draw of the regression block for one side; updates ``state`` in place.

    counts: (gamma1, beta1) regressing ``eta - A1 w1`` on ``[1, Z1]``.
    sizes: (gamma2, beta2[, beta]) regressing ``mu - A2 w2`` on ``[1, Z2, A2 w1]``.
    """
    if side == "counts":
        X = static.X1 if static is not None else np.column_stack([np.ones(dataset.n1), dataset.Z1])
        XtX = static.X1tX1 if static is not None else None
        r = state.eta - state.w1[proj.counts_index]
        mean, L = gaussian_conditional(X, r, state.kappa_eta, config.coef_var, XtX)
        b = _draw_from_chol(mean, L, rng)
        state.gamma1, state.beta1 = float(b[0]), b[1:]
    elif side == "sizes":
        if dataset.L == 0:
            return state
        idx = proj.sizes_index
        base = static.X2 if static is not None else np.column_stack([np.ones(dataset.L), dataset.Z2])
        r = state.mu - state.w2[idx]
        if config.beta_free:
            X = np.column_stack([base, state.w1[idx]])
            mean, L = gaussian_conditional(X, r, state.kappa_mu, config.coef_var)
        else:
            XtX = static.X2tX2 if static is not None else None
            mean, L = gaussian_conditional(base, r, state.kappa_mu, config.coef_var, XtX)
        b = _draw_from_chol(mean, L, rng)
        p2 = dataset.Z2.shape[1]
        state.gamma2, state.beta2 = float(b[0]), b[1 : 1 + p2]
        state.beta = float(b[-1]) if config.beta_free else 0.0
    else:
        raise ValueError(f"side must be 'counts' or 'sizes', got {side!r}")
    return state


def constrained_gaussian_draw(Q: np.ndarray, kappa: float, data_diag: np.ndarray, b: np.ndarray, C: np.ndarray, rng, CCt=None):
    """Draw ``w`` with density ``exp(-w'Pw/2 + b'w)``, ``P = kappa Q + diag(data_diag)``, on ``{C'w = 0}``.

    ``P`` may be singular along the null space of ``Q`` (units without data);
    adding ``C C'`` does not change the density on the constraint set and makes
    the precision positive definite.  The unconstrained draw is then
    conditioned on ``C'w = 0`` (kriging correction).
    """
    CCt = C @ C.T if CCt is None else CCt
    P = kappa * Q + CCt
    P.flat[:: P.shape[0] + 1] += data_diag
    try:
        L = _cholesky(P, "ICAR conditional precision")
    except NumericalError as e:
        bad = np.flatnonzero(np.diag(P) <= 0)
        raise NumericalError(f"{e}; non-positive diagonal at units {bad.tolist()}") from e
    k = C.shape[1]
    sol, _ = lapack.dpotrs(L, np.column_stack([b, C]), lower=1)
    x = _draw_from_chol(sol[:, 0], L, rng)
    V = sol[:, 1:]
    if k == 1:
        return x - V[:, 0] * (x.sum() / V.sum())
    return x - V @ np.linalg.solve(C.T @ V, C.T @ x)


def gibbs_icar(which: str, state: LatentState, dataset: Dataset, graph: SlopeUnitGraph, proj: Projection, config: ModelConfig, rng, static: _Static | None = None):
    """Draw w1 or w2 from its Gaussian full conditional on the sum-to-zero subspace, then hard-centre."""
    st = static or _Static(dataset, graph, proj)
    idx1, idx2 = st.idx1, st.idx2
    n = st.n_units
    if which == "w1":
        r1 = state.eta - state.gamma1 - dataset.Z1 @ state.beta1
        b = state.kappa_eta * np.bincount(idx1, weights=r1, minlength=n)
        diag = state.kappa_eta * st.npix
        if state.beta != 0.0 and dataset.L:
            r2 = state.mu - state.gamma2 - dataset.Z2 @ state.beta2 - state.w2[idx2]
            b = b + state.beta * state.kappa_mu * np.bincount(idx2, weights=r2, minlength=n)
            diag = diag + state.beta**2 * state.kappa_mu * st.nls
        w = constrained_gaussian_draw(st.Q, state.kappa_w1, diag, b, st.C, rng, st.CCt)
        state.w1 = hard_center(w, st.labels)
    elif which == "w2":
        if dataset.L:
            r2 = state.mu - state.gamma2 - dataset.Z2 @ state.beta2 - state.beta * state.w1[idx2]
            b = state.kappa_mu * np.bincount(idx2, weights=r2, minlength=n)
        else:
            b = np.zeros(n)
        diag = state.kappa_mu * st.nls
        w = constrained_gaussian_draw(st.Q, state.kappa_w2, diag, b, st.C, rng, st.CCt)
        state.w2 = hard_center(w, st.labels)
    else:
        raise ValueError(f"which must be 'w1' or 'w2', got {which!r}")
    return state


# ---------------------------------------------------------------------------
# MALA


def mala_step(x: np.ndarray, logpi_grad, h: float, rng):
    """One MALA proposal/accept step.  Returns ``(x_new, accepted, alpha)``.

    Proposal ``y = x + (h/2) g(x) + sqrt(h) z``; non-finite targets are rejected.
    """
    lp_x, g_x = logpi_grad(x)
    z = rng.standard_normal(x.size)
    y = x + 0.5 * h * g_x + math.sqrt(h) * z
    try:
        lp_y, g_y = logpi_grad(y)
    except (ArithmeticError, DomainError):
        return x, False, 0.0
    if not (math.isfinite(lp_y) and np.isfinite(g_y).all()):
        return x, False, 0.0
    back = x - y - 0.5 * h * g_y
    log_q_back = -float(back @ back) / (2.0 * h)
    log_q_fwd = -0.5 * float(z @ z)
    log_alpha = lp_y - lp_x + log_q_back - log_q_fwd
    if not math.isfinite(log_alpha):
        return x, False, 0.0
    alpha = math.exp(min(0.0, log_alpha))
    if rng.uniform() < alpha:
        return y, True, alpha
    return x, False, alpha


def eta_target(state: LatentState, dataset: Dataset, proj: Projection, config: ModelConfig):
    """Log density (up to a constant) and gradient of the eta full conditional."""
    m = linear_predictor_counts(state, dataset, proj)
    kappa = state.kappa_eta
    Y, e, obs = dataset.counts, dataset.exposure, dataset.count_observed
    all_obs = bool(obs.all())
    gaussian = config.count_likelihood == "gaussian"

    def f(x):
        d = x - m
        if gaussian:
            r = Y - x
            lik_g = r
            lik = -0.5 * r * r
        else:
            ex = e * np.exp(x)
            lik = Y * x - ex
            lik_g = Y - ex
        if not all_obs:
            lik = np.where(obs, lik, 0.0)
            lik_g = np.where(obs, lik_g, 0.0)
        return float(lik.sum()) - 0.5 * kappa * float(d @ d), lik_g - kappa * d

    return f


def mu_target(state: LatentState, dataset: Dataset, proj: Projection, config: ModelConfig):
    m = linear_predictor_sizes(state, dataset, proj)
    kappa = state.kappa_mu
    A, obs, theta = dataset.sizes, dataset.size_observed, state.theta
    all_obs = bool(obs.all())
    use_lik = config.size_likelihood

    def f(x):
        d = x - m
        lp = -0.5 * kappa * float(d @ d)
        g = -kappa * d
        if use_lik:
            ll, gl = marks._logpdf_grad_raw(theta, A, x)
            if not all_obs:
                ll = np.where(obs, ll, 0.0)
                gl = np.where(obs, gl, 0.0)
            lp += float(np.sum(ll))
            g = g + gl
        return lp, g

    return f


def step_scale(block: str, state: LatentState, dataset: Dataset, proj: Projection, config: ModelConfig) -> float:
    """Typical full-conditional precision of one coordinate of the block.

    The tuned MALA step is dimensionless; the proposal variance is
    ``h / step_scale``.  The scale depends only on the other blocks (layer
    precision plus the average likelihood curvature), so each MALA update is
    still an exact kernel for its full conditional.
    """
    if block == "eta":
        obs = dataset.count_observed
        if config.count_likelihood == "gaussian":
            curv = 1.0
        elif obs.any():
            m = linear_predictor_counts(state, dataset, proj)[obs]
            curv = float(np.mean(dataset.exposure[obs] * np.exp(m)))
        else:
            curv = 0.0
        scale = state.kappa_eta + curv
    else:
        info = marks.log_scale_information(state.theta) if config.size_likelihood and dataset.size_observed.any() else 0.0
        scale = state.kappa_mu + info
    return scale if math.isfinite(scale) and scale > 0 else 1.0


def mala_block(block: str, state: LatentState, dataset: Dataset, proj: Projection, config: ModelConfig, tuner: MalaTuner, rng):
    """MALA update of the eta or mu block; adapts ``tuner`` unless it is frozen."""
    if block == "eta":
        f, x = eta_target(state, dataset, proj, config), state.eta
    elif block == "mu":
        if dataset.L == 0:
            return state, False
        f, x = mu_target(state, dataset, proj, config), state.mu
    else:
        raise ValueError(f"block must be 'eta' or 'mu', got {block!r}")
    h = tuner.h / step_scale(block, state, dataset, proj, config)
    new, acc, alpha = mala_step(x, f, h, rng)
    tuner.record(acc)
    tuner.adapt(alpha)
    setattr(state, block, new)
    return state, acc


# ---------------------------------------------------------------------------
# Metropolis on the mark parameters


def _theta_logpost(theta: marks.MarkParams, state, dataset, config) -> float:
    lp = sum((config.theta_shape - 1.0) * math.log(v) - config.theta_rate * v for v in theta.values)
    if config.size_likelihood and dataset.L:
        obs = dataset.size_observed
        if obs.all():
            ll = marks._log_density_raw(theta, dataset.sizes, np.exp(state.mu))
        else:
            ll = marks._log_density_raw(theta, dataset.sizes[obs], np.exp(state.mu[obs]))
        lp += float(np.sum(ll))
    return lp


def metropolis_theta(state: LatentState, dataset: Dataset, config: ModelConfig, tuners: list[MalaTuner], rng):
    """Componentwise Gaussian random walk on ``log theta`` with Jacobian correction.

    ``tuners[k].h`` is the proposal sd of component ``k``; adapted toward 0.44
    acceptance while not frozen.
    """
    theta = state.theta
    current = _theta_logpost(theta, state, dataset, config)
    for k, tuner in enumerate(tuners):
        vals = list(theta.values)
        old = vals[k]
        if old == 0.0:
            tuner.record(False)
            continue
        step = tuner.h * rng.standard_normal()
        new = old * math.exp(step)
        vals[k] = new
        prop = None
        if 0.0 < new < math.inf:
            try:
                prop = theta._replace_trusted(tuple(vals))
                lp = _theta_logpost(prop, state, dataset, config)
            except (ArithmeticError, DomainError):
                lp = -math.inf
        else:
            lp = -math.inf
        log_alpha = lp - current + step
        alpha = math.exp(min(0.0, log_alpha)) if math.isfinite(log_alpha) else 0.0
        acc = rng.uniform() < alpha
        if acc:
            theta, current = prop, lp
        tuner.record(acc)
        tuner.adapt(alpha)
    state.theta = theta
    return state


# ---------------------------------------------------------------------------
# chain driver


@dataclass
class ChainOutput:
    """Thinned post-burn-in draws.  ``draws[name]`` has the draw index as its first axis."""

    draws: dict[str, np.ndarray]
    acceptance: dict[str, float]
    seed: int
    n_iter: int
    burn_in: int
    thin: int
    family: str
    theta_names: tuple[str, ...]
    submodel: str
    z1_names: tuple[str, ...] = ()
    z2_names: tuple[str, ...] = ()
    final_steps: dict[str, float] = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return len(self.draws["gamma1"])

    def scalar_draws(self) -> dict[str, np.ndarray]:
        """Every scalar parameter as a 1-d series, in summary order."""
        out = {}
        for k, name in enumerate(self.theta_names):
            out[name] = self.draws["theta"][:, k]
        for name in ("kappa_w1", "kappa_w2", "kappa_eta", "kappa_mu", "gamma1", "gamma2", "beta"):
            out[name] = self.draws[name]
        for k, name in enumerate(self.z1_names):
            out[f"beta1_{name}"] = self.draws["beta1"][:, k]
        for k, name in enumerate(self.z2_names):
            out[f"beta2_{name}"] = self.draws["beta2"][:, k]
        return out

    def summary(self) -> list[dict]:
        rows = []
        for name, x in self.scalar_draws().items():
            q = np.quantile(x, [0.025, 0.5, 0.975])
            rows.append({"parameter": name, "median": q[1], "sd": float(np.std(x, ddof=1)) if x.size > 1 else 0.0, "ci_lower": q[0], "ci_upper": q[2]})
        return rows

    def save(self, path, extra_meta: dict | None = None):
        """Write draws and metadata to ``.npz``; ``extra_meta`` (JSON-able) is stored alongside and ignored by :meth:`load`."""
        meta = {k: v for k, v in asdict(self).items() if k != "draws"}
        np.savez_compressed(path, __meta__=json.dumps(meta), __extra__=json.dumps(extra_meta or {}), **self.draws)

    @classmethod
    def load(cls, path) -> "ChainOutput":
        with np.load(path, allow_pickle=False) as f:
            meta = json.loads(str(f["__meta__"]))
            draws = {k: f[k] for k in f.files if k not in ("__meta__", "__extra__")}
        for k in ("theta_names", "z1_names", "z2_names"):
            meta[k] = tuple(meta[k])
        return cls(draws=draws, **meta)


BLOCKS = ("eta", "mu", "coef_counts", "coef_sizes", "w1", "w2", "precisions", "theta")


class Sampler:
    """Holds the chain state, tuners and RNG; one :meth:`sweep` is one full MCMC iteration."""

    def __init__(self, config: ModelConfig, dataset: Dataset, graph: SlopeUnitGraph, proj: Projection, settings: ChainSettings, state: LatentState | None = None):
        self.config, self.dataset, self.graph, self.proj, self.settings = config, dataset, graph, proj, settings
        self.state = state.copy() if state is not None else initial_state(config, dataset, graph)
        if not config.beta_free:
            self.state.beta = 0.0
        self.state.validate(dataset, graph)
        self.rng = np.random.default_rng(settings.seed)
        self.static = _Static(dataset, graph, proj)
        self.eta_tuner = MalaTuner(h=settings.eta_step)
        self.mu_tuner = MalaTuner(h=settings.mu_step)
        self.theta_tuners = [MalaTuner(h=settings.theta_step, target=THETA_TARGET) for _ in self.state.theta.values]
        self.icar_rate = config.icar_rate(graph)
        self.iteration = 0
        self._draws = None
        self._saved = 0

    @property
    def tuners(self) -> list[MalaTuner]:
        return [self.eta_tuner, self.mu_tuner, *self.theta_tuners]

    def _block(self, name, fn):
        try:
            fn()
        except UpdateError:
            raise
        except Exception as e:
            raise UpdateError(self.iteration, name, e) from e

    def _update_precisions(self):
        s, cfg, rng, st = self.state, self.config, self.rng, self.static
        if cfg.iid_eta:
            d = s.eta - linear_predictor_counts(s, self.dataset, self.proj)
            s.kappa_eta = gibbs_precision(float(d @ d), self.dataset.n1, cfg.prec_shape, cfg.prec_rate, rng)
        if cfg.iid_mu and self.dataset.L:
            d = s.mu - linear_predictor_sizes(s, self.dataset, self.proj)
            s.kappa_mu = gibbs_precision(float(d @ d), self.dataset.L, cfg.prec_shape, cfg.prec_rate, rng)
        if st.rank > 0:
            s.kappa_w1 = gibbs_precision(icar_quad_form(self.graph, s.w1), st.rank, cfg.prec_shape, self.icar_rate, rng)
            s.kappa_w2 = gibbs_precision(icar_quad_form(self.graph, s.w2), st.rank, cfg.prec_shape, self.icar_rate, rng)

    def sweep(self):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
            self._sweep()

    def _sweep(self):
        self.iteration += 1
        s, d, p, c, rng, st = self.state, self.dataset, self.proj, self.config, self.rng, self.static
        self._block("eta", lambda: mala_block("eta", s, d, p, c, self.eta_tuner, rng))
        self._block("mu", lambda: mala_block("mu", s, d, p, c, self.mu_tuner, rng))
        self._block("coef_counts", lambda: gibbs_coefficients("counts", s, d, p, c, rng, st))
        self._block("coef_sizes", lambda: gibbs_coefficients("sizes", s, d, p, c, rng, st))
        self._block("w1", lambda: gibbs_icar("w1", s, d, self.graph, p, c, rng, st))
        self._block("w2", lambda: gibbs_icar("w2", s, d, self.graph, p, c, rng, st))
        self._block("precisions", self._update_precisions)
        self._block("theta", lambda: metropolis_theta(s, d, c, self.theta_tuners, rng))

    def _alloc(self):
        n, s = self.settings.n_saved, self.state
        self._draws = {
            name: np.empty((n,) + np.shape(getattr(s, name)))
            for name in ("eta", "mu", "w1", "w2", "beta1", "beta2", "gamma1", "gamma2", "beta", "kappa_eta", "kappa_mu", "kappa_w1", "kappa_w2")
        }
        self._draws["theta"] = np.empty((n, len(s.theta.values)))

    def _record(self):
        k, s = self._saved, self.state
        for name, arr in self._draws.items():
            arr[k] = s.theta.values if name == "theta" else getattr(s, name)
        self._saved += 1

    def run(self, n_sweeps: int | None = None, callback=None) -> ChainOutput | None:
        """Run to completion (or ``n_sweeps`` more iterations).  Returns the output once the chain is finished."""
        cfg = self.settings
        if self._draws is None:
            self._alloc()
        stop = cfg.n_iter if n_sweeps is None else min(cfg.n_iter, self.iteration + n_sweeps)
        while self.iteration < stop:
            if self.iteration == cfg.burn_in and not self.eta_tuner.frozen:
                for tuner in self.tuners:
                    tuner.frozen = True
                    tuner.reset_counts()
            self.sweep()
            t = self.iteration
            if t > cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0:
                self._record()
            if callback is not None:
                callback(self)
        if self.iteration < cfg.n_iter:
            return None
        return self.output()

    def output(self) -> ChainOutput:
        acc = {"eta": self.eta_tuner.rate, "mu": self.mu_tuner.rate}
        steps = {"eta": self.eta_tuner.h, "mu": self.mu_tuner.h}
        for name, tuner in zip(self.state.theta.names, self.theta_tuners):
            acc[f"theta_{name}"] = tuner.rate
            steps[f"theta_{name}"] = tuner.h
        return ChainOutput(
            draws={k: v[: self._saved].copy() for k, v in self._draws.items()},
            acceptance=acc,
            seed=self.settings.seed,
            n_iter=self.settings.n_iter,
            burn_in=self.settings.burn_in,
            thin=self.settings.thin,
            family=self.config.family.value,
            theta_names=self.state.theta.names,
            submodel=self.config.submodel_name,
            z1_names=tuple(self.dataset.z1_names),
            z2_names=tuple(self.dataset.z2_names),
            final_steps=steps,
        )

    # -- checkpointing -----------------------------------------------------

    def save_checkpoint(self, path):
        """Write the full sampler state (latent state, tuners, RNG, partial draws) to an ``.npz`` file."""
        s = self.state
        meta = {
            "version": CHECKPOINT_VERSION,
            "iteration": self.iteration,
            "saved": self._saved,
            "settings": asdict(self.settings),
            "family": s.theta.family.value,
            "theta": list(s.theta.values),
            "scalars": {k: getattr(s, k) for k in ("gamma1", "gamma2", "beta", "kappa_eta", "kappa_mu", "kappa_w1", "kappa_w2")},
            "tuners": [asdict(t) for t in self.tuners],
            "rng": self.rng.bit_generator.state,
        }
        arrays = {f"state_{k}": getattr(s, k) for k in ("eta", "mu", "w1", "w2", "beta1", "beta2")}
        if self._draws is not None:
            arrays.update({f"draw_{k}": v for k, v in self._draws.items()})
        np.savez_compressed(path, __meta__=json.dumps(meta), **arrays)

    @classmethod
    def from_checkpoint(cls, path, config: ModelConfig, dataset: Dataset, graph: SlopeUnitGraph, proj: Projection) -> "Sampler":
        with np.load(path, allow_pickle=False) as f:
            meta = json.loads(str(f["__meta__"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise DomainError(f"unsupported checkpoint version {meta.get('version')}")
            arrays = {k: f[k] for k in f.files if k != "__meta__"}
        state = LatentState(
            **{k: arrays[f"state_{k}"] for k in ("eta", "mu", "w1", "w2", "beta1", "beta2")},
            **meta["scalars"],
            theta=marks.MarkParams(meta["family"], tuple(meta["theta"])),
        )
        sampler = cls(config, dataset, graph, proj, ChainSettings(**meta["settings"]), state)
        for tuner, saved in zip(sampler.tuners, meta["tuners"]):
            for k, v in saved.items():
                setattr(tuner, k, v)
        sampler.rng.bit_generator.state = meta["rng"]
        sampler.iteration = meta["iteration"]
        sampler._saved = meta["saved"]
        draws = {k[5:]: v for k, v in arrays.items() if k.startswith("draw_")}
        sampler._draws = draws or None
        return sampler


def run_chain(config: ModelConfig, dataset: Dataset, graph: SlopeUnitGraph, proj: Projection, n_iter: int, burn_in: int, thin: int = 1, seed: int = 0, state: LatentState | None = None, **step_kw) -> ChainOutput:
    settings = ChainSettings(n_iter=n_iter, burn_in=burn_in, thin=thin, seed=seed, **step_kw)
    return Sampler(config, dataset, graph, proj, settings, state).run()
