"""Brute-force posterior means of kappa_eta and gamma1 for the tiny base-model instance.

The instance: path graph 0-1-2, pixels in units [0, 1, 1, 2, 2, 2] with counts
[1, 0, 2, 0, 1, 0], unit exposure, no covariates, sharing coefficient fixed at
zero (so the count side is untouched by the sizes).

Reparametrise (gamma1, w) -> m_j = gamma1 + w_j for the three units; the
Jacobian is constant.  kappa_w1 is integrated analytically, each pixel's eta
by quadrature on a fixed fine grid, and (m0, m1, m2, log kappa_eta) on a
tensor grid.  This file uses only numpy/scipy and shares no code with the
package; run it to regenerate the constants frozen in the tests.

The m posterior has heavy tails at small kappa_eta, hence the grid that is
uniform in the core and grows geometrically out to [-400, 60].  Halving the
core step, or stretching the range to [-1000, 150], moves both means by less
than 5e-5.

    python3 scripts/conjugacy_oracle.py [--m-step 0.25] [--k-points 71]
"""
import argparse

import numpy as np
from scipy.special import gammaln, ndtr

SU = np.array([0, 1, 1, 2, 2, 2])
Y = np.array([1, 0, 2, 0, 1, 0])
EDGES = [(0, 1), (1, 2)]
A_PREC, B_PREC = 0.25, 3.0  # Gamma(shape, rate) on kappa_eta
COEF_VAR = 100.0
MEAN_DEGREE = 2.0 * len(EDGES) / 3
B_ICAR = 3.0 / (MEAN_DEGREE * 0.7**2)
RANK = 2


def pixel_marginal(m_grid, kappa, eta_grid, eta_w):
    """g_y(m) = E[Pois(y | exp(eta))], eta ~ N(m, 1/kappa), for y = 0, 1, 2.  Shape (3, len(m))."""
    sd = 1.0 / np.sqrt(kappa)
    lam = np.exp(eta_grid)
    f = np.exp(np.arange(3)[:, None] * eta_grid[None, :] - lam[None, :] - gammaln(np.arange(3) + 1.0)[:, None])
    z = (eta_grid[None, :] - m_grid[:, None]) / sd
    phi = np.exp(-0.5 * z * z) / (sd * np.sqrt(2 * np.pi))
    g = (phi * eta_w[None, :]) @ f.T  # (M, 3)
    # below the eta grid Pois(0) = 1 and Pois(y >= 1) = 0 to double precision
    g[:, 0] += ndtr((eta_grid[0] - m_grid) / sd)
    return g.T


def log_grid(core_lo, core_hi, step, lo, hi, growth):
    """Uniform grid on [core_lo, core_hi] extended by geometrically growing steps out to [lo, hi]."""
    core = np.arange(core_lo, core_hi + 1e-9, step)
    left, h, x = [], step, core_lo
    while x > lo:
        h *= growth
        x -= h
        left.append(x)
    right, h, x = [], step, core_hi
    while x < hi:
        h *= growth
        x += h
        right.append(x)
    return np.concatenate([left[::-1], core, right])


def trapezoid_weights(x):
    w = np.empty_like(x)
    w[1:-1] = 0.5 * (x[2:] - x[:-2])
    w[0] = 0.5 * (x[1] - x[0])
    w[-1] = 0.5 * (x[-1] - x[-2])
    return w


def posterior_means(m_step=0.25, m_lo=-400.0, m_hi=60.0, growth=1.04, k_lo=-16.0, k_hi=6.0, k_points=111, eta_step=0.005):
    m = log_grid(-15.0, 8.0, m_step, m_lo, m_hi, growth)
    mw = trapezoid_weights(m)
    eta = np.arange(-45.0, 7.0 + 1e-9, eta_step)  # Pois(y>=1 | e^eta) < 1e-19 outside
    ew = np.full(eta.size, eta_step)
    ew[[0, -1]] *= 0.5
    logk = np.linspace(k_lo, k_hi, k_points)
    kw = np.full(k_points, logk[1] - logk[0])
    kw[[0, -1]] *= 0.5

    # prior on (m0, m1, m2): gamma1 = mean(m) ~ N(0, 100); w = m - mean(m) with kappa_w1 integrated out
    M0, M1, M2 = np.meshgrid(m, m, m, indexing="ij", sparse=True)
    gam = (M0 + M1 + M2) / 3.0
    q = (M0 - M1) ** 2 + (M1 - M2) ** 2
    log_prior = -0.5 * gam**2 / COEF_VAR - (A_PREC + RANK / 2.0) * np.log(B_ICAR + 0.5 * q)
    prior = np.exp(log_prior - log_prior.max())
    prior_g = prior * gam
    prior_lo = prior * (gam < -3.0)
    prior_mid = prior * (gam < -1.0)
    del log_prior, q

    Z = Ek = Eg = Pk = Plo = Pmid = 0.0
    for lk, w in zip(logk, kw):
        k = np.exp(lk)
        g = pixel_marginal(m, k, eta, ew)
        G = [mw * np.prod([g[Y[i]] for i in np.flatnonzero(SU == j)], axis=0) for j in range(3)]
        # Gaussian layer normalising constant is inside g; kappa prior in log coordinates
        wk = w * np.exp(A_PREC * lk - B_PREC * k)
        s = G[0] @ ((prior @ G[2]) @ G[1])
        sg = G[0] @ ((prior_g @ G[2]) @ G[1])
        Z += wk * s
        Ek += wk * s * k
        Eg += wk * sg
        Pk += wk * s * (k < 0.1)
        Plo += wk * (G[0] @ ((prior_lo @ G[2]) @ G[1]))
        Pmid += wk * (G[0] @ ((prior_mid @ G[2]) @ G[1]))
    return {
        "kappa_eta": float(Ek / Z),
        "gamma1": float(Eg / Z),
        "P(kappa_eta<0.1)": float(Pk / Z),
        "P(gamma1<-3)": float(Plo / Z),
        "P(gamma1<-1)": float(Pmid / Z),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m-step", type=float, default=0.25)
    ap.add_argument("--m-lo", type=float, default=-400.0)
    ap.add_argument("--growth", type=float, default=1.04)
    ap.add_argument("--k-points", type=int, default=111)
    args = ap.parse_args()
    res = posterior_means(m_step=args.m_step, m_lo=args.m_lo, growth=args.growth, k_points=args.k_points)
    for k, v in res.items():
        print(f"{k} = {v!r}")


if __name__ == "__main__":
    main()
