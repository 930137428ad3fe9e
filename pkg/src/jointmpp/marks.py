"""Median-parametrised mark (size) distributions.

Every family is reparametrised so that its median equals a caller supplied
value ``median = exp(mu)``.  Seven of the nine families are scale families,
``sigma = median / q0(theta)`` with ``q0`` the median at unit scale; the
log-Gamma scale is ``log1p(median) / g0(kappa)`` and the log-Normal location
is ``log(median)``.

All functions broadcast over ``x`` and ``median``.  Parameter violations raise
:class:`~jointmpp.exceptions.DomainError`; support violations (``x < 0``)
produce ``-inf`` log densities instead.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sc

from .exceptions import DomainError, NumericalError

LOG_2PI = math.log(2.0 * math.pi)
# Below this xi the extended GPD / GPD switch to the exponential branch.
XI_EXP_BRANCH = 1e-6
MEDIAN_TOL = 1e-12


class MarkFamily(str, enum.Enum):
    GENGAMMA = "gengamma"
    GAMMA = "gamma"
    WEIBULL = "weibull"
    LOGGAMMA = "loggamma"
    LOGNORMAL = "lognormal"
    BURR = "burr"
    EXTGPD = "extgpd"
    GPD = "gpd"
    GAMMAGAMMA = "gammagamma"


PARAM_NAMES: dict[MarkFamily, tuple[str, ...]] = {
    MarkFamily.GENGAMMA: ("kappa", "c"),
    MarkFamily.GAMMA: ("kappa",),
    MarkFamily.WEIBULL: ("kappa",),
    MarkFamily.LOGGAMMA: ("kappa",),
    MarkFamily.LOGNORMAL: ("kappa",),
    MarkFamily.BURR: ("kappa", "c"),
    MarkFamily.EXTGPD: ("kappa", "xi"),
    MarkFamily.GPD: ("xi",),
    MarkFamily.GAMMAGAMMA: ("c1", "c2"),
}

# parameters allowed to equal zero
_NONNEGATIVE = {"xi"}


@dataclass(frozen=True)
class MarkParams:
    """A mark family together with its shape parameters ``theta``.

    >>> MarkParams("burr", (1.0, 2.0)).named()
    {'kappa': 1.0, 'c': 2.0}
    """

    family: MarkFamily
    values: tuple[float, ...]

    def __post_init__(self):
        try:
            fam = MarkFamily(self.family)
        except ValueError:
            raise DomainError(f"unknown mark family {self.family!r}") from None
        vals = tuple(float(v) for v in np.atleast_1d(self.values))
        names = PARAM_NAMES[fam]
        if len(vals) != len(names):
            raise DomainError(f"{fam.value} takes {len(names)} parameters {names}, got {len(vals)}")
        for name, v in zip(names, vals):
            if not math.isfinite(v):
                raise DomainError(f"{fam.value}: {name}={v} is not finite")
            if name in _NONNEGATIVE:
                if v < 0:
                    raise DomainError(f"{fam.value}: {name} must be >= 0, got {v}")
            elif v <= 0:
                raise DomainError(f"{fam.value}: {name} must be > 0, got {v}")
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "values", vals)

    @property
    def names(self) -> tuple[str, ...]:
        return PARAM_NAMES[self.family]

    def named(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))

    def replace(self, values) -> "MarkParams":
        return MarkParams(self.family, tuple(values))

    def _replace_trusted(self, values: tuple) -> "MarkParams":
        """Copy with new float values that the caller has already validated."""
        out = object.__new__(MarkParams)
        object.__setattr__(out, "family", self.family)
        object.__setattr__(out, "values", values)
        return out


@dataclass(frozen=True)
class TailProfile:
    xi_lower: float
    xi_upper: float
    weibull_upper: float


def default_params(family) -> MarkParams:
    """Neutral starting values: every shape 1, ``xi = 0.1``."""
    fam = MarkFamily(family)
    return MarkParams(fam, tuple(0.1 if n == "xi" else 1.0 for n in PARAM_NAMES[fam]))


# ---------------------------------------------------------------------------
# unit-scale building blocks (sigma = 1)


def _std_logpdf(fam: MarkFamily, v: tuple, z):
    """Log density at unit scale for the scale families."""
    if fam in (MarkFamily.GENGAMMA, MarkFamily.GAMMA, MarkFamily.WEIBULL):
        k, c = _gengamma_shapes(fam, v)
        return math.log(c) - sc.gammaln(k / c) + sc.xlogy(k - 1.0, z) - z**c
    if fam is MarkFamily.BURR:
        k, c = v
        return math.log(c * k) + sc.xlogy(c - 1.0, z) - (k + 1.0) * np.log1p(z**c)
    if fam in (MarkFamily.EXTGPD, MarkFamily.GPD):
        k, xi = _extgpd_shapes(fam, v)
        if xi < XI_EXP_BRANCH:
            h = -np.expm1(-z)
            return math.log(k) + sc.xlogy(k - 1.0, h) - z
        lu = np.log1p(xi * z)
        h = -np.expm1(-lu / xi)
        return math.log(k) + sc.xlogy(k - 1.0, h) - (1.0 + 1.0 / xi) * lu
    if fam is MarkFamily.GAMMAGAMMA:
        c1, c2 = v
        return (
            0.5 * c1 * math.log(c1 / c2)
            - sc.betaln(0.5 * c1, 0.5 * c2)
            + sc.xlogy(0.5 * c1 - 1.0, z)
            - 0.5 * (c1 + c2) * np.log1p(c1 * z / c2)
        )
    raise DomainError(f"{fam.value} is not a scale family")


def _std_cdf(fam: MarkFamily, v: tuple, z):
    if fam in (MarkFamily.GENGAMMA, MarkFamily.GAMMA, MarkFamily.WEIBULL):
        k, c = _gengamma_shapes(fam, v)
        return sc.gammainc(k / c, z**c)
    if fam is MarkFamily.BURR:
        k, c = v
        return -np.expm1(-k * np.log1p(z**c))
    if fam in (MarkFamily.EXTGPD, MarkFamily.GPD):
        k, xi = _extgpd_shapes(fam, v)
        if xi < XI_EXP_BRANCH:
            h = -np.expm1(-z)
        else:
            h = -np.expm1(-np.log1p(xi * z) / xi)
        return h**k
    if fam is MarkFamily.GAMMAGAMMA:
        c1, c2 = v
        w = c1 * z
        return sc.betainc(0.5 * c1, 0.5 * c2, w / (w + c2))
    raise DomainError(f"{fam.value} is not a scale family")


def _std_dlogpdf_dlogscale(fam: MarkFamily, v: tuple, z):
    """d log f(x; sigma) / d log sigma for the scale families, at z = x / sigma."""
    if fam in (MarkFamily.GENGAMMA, MarkFamily.GAMMA, MarkFamily.WEIBULL):
        k, c = _gengamma_shapes(fam, v)
        return -k + c * z**c
    if fam is MarkFamily.BURR:
        k, c = v
        t = z**c
        return -c + (k + 1.0) * c * t / (1.0 + t)
    if fam in (MarkFamily.EXTGPD, MarkFamily.GPD):
        k, xi = _extgpd_shapes(fam, v)
        if xi < XI_EXP_BRANCH:
            first = 0.0 if k == 1.0 else -(k - 1.0) * z / np.expm1(z)
            return first - 1.0 + z
        u = 1.0 + xi * z
        lu = np.log1p(xi * z)
        if k == 1.0:
            first = 0.0
        else:
            # u^{-1/xi-1} / H written as 1 / (u * (u^{1/xi} - 1))
            first = -(k - 1.0) * z / (u * np.expm1(lu / xi))
        return first - 1.0 + (xi + 1.0) * z / u
    if fam is MarkFamily.GAMMAGAMMA:
        c1, c2 = v
        w = c1 * z / c2
        return -0.5 * c1 + 0.5 * (c1 + c2) * w / (1.0 + w)
    raise DomainError(f"{fam.value} is not a scale family")


def _gengamma_shapes(fam, v):
    if fam is MarkFamily.GAMMA:
        return v[0], 1.0
    if fam is MarkFamily.WEIBULL:
        return v[0], v[0]
    return v


def _extgpd_shapes(fam, v):
    if fam is MarkFamily.GPD:
        return 1.0, v[0]
    return v


def _initial_std_median(fam: MarkFamily, v: tuple) -> float:
    """Closed-form (or scipy special-function) unit-scale median, before polishing."""
    if fam in (MarkFamily.GENGAMMA, MarkFamily.GAMMA, MarkFamily.WEIBULL):
        k, c = _gengamma_shapes(fam, v)
        return float(sc.gammaincinv(k / c, 0.5)) ** (1.0 / c)
    if fam is MarkFamily.BURR:
        k, c = v
        return math.expm1(math.log(2.0) / k) ** (1.0 / c)
    if fam in (MarkFamily.EXTGPD, MarkFamily.GPD):
        k, xi = _extgpd_shapes(fam, v)
        # log(1 - 0.5^{1/k}), computed without cancellation
        log_tail = math.log(-math.expm1(-math.log(2.0) / k))
        if xi < XI_EXP_BRANCH:
            return -log_tail
        return math.expm1(-xi * log_tail) / xi
    if fam is MarkFamily.GAMMAGAMMA:
        c1, c2 = v
        b = float(sc.betaincinv(0.5 * c1, 0.5 * c2, 0.5))
        return c2 * b / (c1 * (1.0 - b))
    raise DomainError(f"{fam.value} is not a scale family")


def solve_cdf_root(cdf, logpdf, target: float, guess: float, tol: float = MEDIAN_TOL) -> float:
    """Solve ``cdf(q) = target`` for ``q > 0``.

    Bracketing by geometric expansion around ``guess``, then safeguarded
    Newton iterations (bisection whenever the Newton step leaves the bracket).
    """
    if not (math.isfinite(guess) and guess > 0):
        guess = 1.0
    lo, hi = guess, guess
    f_lo = float(cdf(lo)) - target
    f_hi = f_lo
    for _ in range(400):
        if f_lo <= 0.0:
            break
        lo *= 0.5
        f_lo = float(cdf(lo)) - target
    for _ in range(400):
        if f_hi >= 0.0:
            break
        hi *= 2.0
        f_hi = float(cdf(hi)) - target
    if not (f_lo <= 0.0 <= f_hi):
        raise NumericalError(f"could not bracket cdf root: F({lo})-p={f_lo}, F({hi})-p={f_hi}")
    q = min(max(guess, lo), hi)
    for _ in range(200):
        f = float(cdf(q)) - target
        if abs(f) < tol:
            return q
        if f < 0:
            lo = q
        else:
            hi = q
        lp = float(logpdf(q))
        # Newton only when the density is representable; otherwise bisect
        q_new = q - f / math.exp(lp) if -700.0 < lp < 700.0 else math.nan
        if not (lo < q_new < hi):
            q_new = 0.5 * (lo + hi) if hi / lo < 4.0 else math.sqrt(lo * hi)
        if q_new == q or hi - lo <= 4 * np.finfo(float).eps * hi:
            return q_new
        q = q_new
    raise NumericalError(f"median solver did not converge; bracket [{lo}, {hi}]")


@functools.lru_cache(maxsize=4096)
def _std_median(fam: MarkFamily, v: tuple) -> float:
    guess = _initial_std_median(fam, v)
    return solve_cdf_root(
        lambda z: _std_cdf(fam, v, z),
        lambda z: _std_logpdf(fam, v, z),
        0.5,
        guess,
    )


@functools.lru_cache(maxsize=4096)
def _gamma_median(shape: float) -> float:
    """Median of Gamma(shape, rate 1)."""
    return solve_cdf_root(
        lambda g: sc.gammainc(shape, g),
        lambda g: sc.xlogy(shape - 1.0, g) - g - sc.gammaln(shape),
        0.5,
        float(sc.gammaincinv(shape, 0.5)),
    )


def _check_median(median):
    m = np.asarray(median, dtype=float)
    if not np.all(np.isfinite(m)) or np.any(m <= 0):
        raise DomainError("median must be finite and positive")
    return m


def solve_scale(params: MarkParams, median):
    """Scale ``sigma`` for which the family's median equals ``median``.

    For the log-Normal family the returned value is the Gaussian location
    ``log(median)``; for the log-Gamma family it is the scale of the Gamma
    variable ``log(1 + x)``.
    """
    m = _check_median(median)
    fam, v = params.family, params.values
    if fam is MarkFamily.LOGNORMAL:
        out = np.log(m)
    elif fam is MarkFamily.LOGGAMMA:
        out = np.log1p(m) / _gamma_median(v[0])
    else:
        out = m / _std_median(fam, v)
    return float(out) if out.ndim == 0 else out


def _support(x):
    x = np.asarray(x, dtype=float)
    return x, x < 0


def log_density(params: MarkParams, x, median):
    """Log density of ``x`` given the median.  ``x < 0`` gives ``-inf``; ``x == 0`` gives the limit."""
    x, outside = _support(x)
    m = _check_median(median)
    xs = np.where(outside, 0.0, x)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = _log_density_raw(params, xs, m)
        if params.family is MarkFamily.LOGNORMAL:
            out = np.where(xs == 0, -np.inf, out)
    out = np.where(outside, -np.inf, out)
    return float(out) if out.ndim == 0 else out


def _log_density_raw(params: MarkParams, x, m):
    """Unchecked log density for ``x >= 0`` and positive medians (hot path of the sampler)."""
    fam, v = params.family, params.values
    if fam is MarkFamily.LOGNORMAL:
        k = v[0]
        lx = np.log(x)
        return 0.5 * math.log(k) - 0.5 * LOG_2PI - lx - 0.5 * k * (lx - np.log(m)) ** 2
    if fam is MarkFamily.LOGGAMMA:
        k = v[0]
        s = np.log1p(m) / _gamma_median(k)
        t = np.log1p(x)
        return -k * np.log(s) - sc.gammaln(k) + sc.xlogy(k - 1.0, t) - (1.0 + 1.0 / s) * t
    s = m / _std_median(fam, v)
    return _std_logpdf(fam, v, x / s) - np.log(s)


def cdf(params: MarkParams, x, median):
    x, outside = _support(x)
    m = _check_median(median)
    fam, v = params.family, params.values
    xs = np.where(outside, 0.0, x)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if fam is MarkFamily.LOGNORMAL:
            lx = np.log(xs)
            out = sc.ndtr(math.sqrt(v[0]) * (lx - np.log(m)))
        elif fam is MarkFamily.LOGGAMMA:
            s = np.log1p(m) / _gamma_median(v[0])
            out = sc.gammainc(v[0], np.log1p(xs) / s)
        else:
            s = m / _std_median(fam, v)
            out = _std_cdf(fam, v, xs / s)
    out = np.where(outside, 0.0, out)
    return float(out) if out.ndim == 0 else out


def sample(params: MarkParams, median, rng: np.random.Generator, size=None):
    """Draw marks by inverse-cdf or standard transformations."""
    m = _check_median(median)
    if size is None:
        size = m.shape
    fam, v = params.family, params.values
    if fam is MarkFamily.LOGNORMAL:
        return np.exp(np.log(m) + rng.standard_normal(size) / math.sqrt(v[0]))
    if fam is MarkFamily.LOGGAMMA:
        s = np.log1p(m) / _gamma_median(v[0])
        return np.expm1(s * rng.standard_gamma(v[0], size))
    s = m / _std_median(fam, v)
    if fam in (MarkFamily.GENGAMMA, MarkFamily.GAMMA, MarkFamily.WEIBULL):
        k, c = _gengamma_shapes(fam, v)
        z = rng.standard_gamma(k / c, size) ** (1.0 / c)
    elif fam is MarkFamily.BURR:
        k, c = v
        u = rng.uniform(size=size)
        z = np.expm1(-np.log(u) / k) ** (1.0 / c)
    elif fam in (MarkFamily.EXTGPD, MarkFamily.GPD):
        k, xi = _extgpd_shapes(fam, v)
        h = rng.uniform(size=size) ** (1.0 / k)
        lsurv = np.log1p(-h)
        z = -lsurv if xi < XI_EXP_BRANCH else np.expm1(-xi * lsurv) / xi
    else:
        c1, c2 = v
        g1 = rng.standard_gamma(0.5 * c1, size)
        g2 = rng.standard_gamma(0.5 * c2, size)
        z = (g1 / c1) / (g2 / c2)
    return s * z


def grad_log_density_logmedian(params: MarkParams, x, mu, method: str = "analytic"):
    """Derivative of ``log_density(x; exp(mu))`` with respect to ``mu``.

    ``method="fd"`` uses a central difference with step 1e-6 on ``mu``.
    """
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if method == "fd":
        h = 1e-6
        out = (log_density(params, x, np.exp(mu + h)) - log_density(params, x, np.exp(mu - h))) / (2 * h)
    elif method == "analytic":
        out = _grad_logmedian_raw(params, x, mu)
    else:
        raise ValueError(f"unknown method {method!r}")
    out = np.asarray(out, dtype=float)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite log-median gradient")
    return float(out) if out.ndim == 0 else out


def _grad_logmedian_raw(params: MarkParams, x, mu):
    fam, v = params.family, params.values
    m = np.exp(mu)
    if fam is MarkFamily.LOGNORMAL:
        return v[0] * (np.log(x) - mu)
    if fam is MarkFamily.LOGGAMMA:
        k = v[0]
        log1pm = np.log1p(m)
        s = log1pm / _gamma_median(k)
        dlogs_dmu = m / ((1.0 + m) * log1pm)
        return (-k + np.log1p(x) / s) * dlogs_dmu
    s = m / _std_median(fam, v)
    return _std_dlogpdf_dlogscale(fam, v, x / s)


def _logpdf_grad_raw(params: MarkParams, x, mu):
    """``(log f(x; exp(mu)), d/dmu log f)`` sharing the standardised argument."""
    fam = params.family
    if fam is MarkFamily.LOGNORMAL or fam is MarkFamily.LOGGAMMA:
        return _log_density_raw(params, x, np.exp(mu)), _grad_logmedian_raw(params, x, mu)
    v = params.values
    log_s = mu - math.log(_std_median(fam, v))
    z = x * np.exp(-log_s)
    return _std_logpdf(fam, v, z) - log_s, _std_dlogpdf_dlogscale(fam, v, z)


@functools.lru_cache(maxsize=256)
def _numeric_scale_information(fam: MarkFamily, v: tuple) -> float:
    """E[(d log f / d log sigma)^2] at unit scale by trapezoid quadrature in log z."""
    y = np.linspace(-200.0, 200.0, 20001)
    z = np.exp(y)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        w = np.exp(_std_logpdf(fam, v, z) + y) * _std_dlogpdf_dlogscale(fam, v, z) ** 2
    w = np.where(np.isfinite(w), w, 0.0)
    return float(np.sum(0.5 * (w[1:] + w[:-1])) * (y[1] - y[0]))


def log_scale_information(params: MarkParams, method: str = "closed") -> float:
    """Fisher information of the family's log-scale parameter (per observation).

    For the scale families this is the information about the log-median; for
    the log-Normal family it is the precision ``kappa``, and for the log-Gamma
    family the information about the log-scale of ``log(1 + x)``.  The sampler
    uses it to put the mu-block step size on a dimensionless scale.
    ``method="numeric"`` integrates the squared score instead of using the
    closed form (log-Normal and log-Gamma always use the closed form).
    """
    fam, v = params.family, params.values
    if fam in (MarkFamily.LOGNORMAL, MarkFamily.LOGGAMMA):
        return float(v[0])
    if method == "numeric" or fam is MarkFamily.EXTGPD:
        return _numeric_scale_information(fam, v)
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    if fam in (MarkFamily.GENGAMMA, MarkFamily.GAMMA, MarkFamily.WEIBULL):
        k, c = _gengamma_shapes(fam, v)
        return float(c * k)
    if fam is MarkFamily.BURR:
        k, c = v
        return c * c * k / (k + 2.0)
    if fam is MarkFamily.GPD:
        return 1.0 / (1.0 + 2.0 * v[0])
    # GammaGamma: beta-prime with shapes p = c1/2, q = c2/2
    p, q = 0.5 * v[0], 0.5 * v[1]
    return p * q / (p + q + 1.0)


def tail_profile(params: MarkParams, median: float | None = None) -> TailProfile:
    """Lower/upper tail indices and the upper-tail Weibull index.

    The log-Gamma upper tail index equals its scale, which depends on the
    median; ``median`` is required for that family only.
    """
    fam, v = params.family, params.values
    if fam is MarkFamily.GENGAMMA:
        k, c = v
        return TailProfile(-1.0 / k, 0.0, c)
    if fam is MarkFamily.GAMMA:
        return TailProfile(-1.0 / v[0], 0.0, 1.0)
    if fam is MarkFamily.WEIBULL:
        return TailProfile(-1.0 / v[0], 0.0, v[0])
    if fam is MarkFamily.LOGGAMMA:
        if median is None:
            raise DomainError("log-Gamma tail index depends on the median; pass median=")
        return TailProfile(-1.0 / v[0], float(solve_scale(params, median)), 0.0)
    if fam is MarkFamily.LOGNORMAL:
        return TailProfile(-math.inf, 0.0, 0.0)
    if fam is MarkFamily.BURR:
        k, c = v
        return TailProfile(-1.0 / c, 1.0 / (c * k), 0.0)
    if fam is MarkFamily.EXTGPD:
        k, xi = v
        return TailProfile(-1.0 / k, xi, 1.0 if xi == 0 else 0.0)
    if fam is MarkFamily.GPD:
        xi = v[0]
        return TailProfile(-1.0, xi, 1.0 if xi == 0 else 0.0)
    c1, c2 = v
    return TailProfile(-2.0 / c1, 2.0 / c2, 0.0)
