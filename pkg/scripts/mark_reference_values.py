"""High-precision reference values for the mark families, printed as a Python literal.

Densities are written out directly in mpmath at 30 digits; the cdf is a
numerical integral of the density and the unit-scale median is found by a
root search on that integral.  Nothing here uses closed-form quantiles, scipy
or the package, so the table is an independent check of ``jointmpp.marks``.

    python3 scripts/mark_reference_values.py > /tmp/ref.txt
    python3 scripts/mark_reference_values.py --special
"""
import mpmath as mp

mp.mp.dps = 30


def pdf_factory(family, v):
    """Density at scale ``s`` (or log-location for lognormal)."""
    if family in ("gengamma", "gamma", "weibull"):
        k, c = {"gengamma": v, "gamma": (v[0], 1), "weibull": (v[0], v[0])}[family]
        return lambda x, s: (c / s**k) / mp.gamma(mp.mpf(k) / c) * x ** (k - 1) * mp.exp(-((x / s) ** c))
    if family == "loggamma":
        k = v[0]
        return lambda x, s: mp.log1p(x) ** (k - 1) / (s**k * mp.gamma(k) * (x + 1) ** (1 + 1 / s))
    if family == "lognormal":
        k = v[0]
        return lambda x, s: mp.sqrt(k) / (x * mp.sqrt(2 * mp.pi)) * mp.exp(-k / 2 * (mp.log(x) - s) ** 2)
    if family == "burr":
        k, c = v
        return lambda x, s: (c * k / s) * (x / s) ** (c - 1) / (1 + (x / s) ** c) ** (k + 1)
    if family in ("extgpd", "gpd"):
        k, xi = v if family == "extgpd" else (1, v[0])
        if xi == 0:
            return lambda x, s: k * (-mp.expm1(-x / s)) ** (k - 1) / (s * mp.exp(x / s))
        xi = mp.mpf(xi)
        # 1 - (1 + xi x/s)^(-1/xi) written with expm1/log1p to avoid cancellation near 0
        return lambda x, s: k * (-mp.expm1(-mp.log1p(xi * x / s) / xi)) ** (k - 1) / (s * (1 + xi * x / s) ** (1 + 1 / xi))
    if family == "gammagamma":
        c1, c2 = map(mp.mpf, v)
        # includes the 1/s Jacobian so that the density integrates to one
        return lambda x, s: (c1 / c2) ** (c1 / 2) / mp.beta(c1 / 2, c2 / 2) * (x / s) ** (c1 / 2 - 1) / (1 + c1 * x / (c2 * s)) ** ((c1 + c2) / 2) / s
    raise ValueError(family)


def cdf(f, x, s):
    # split the range at a few points so that peaked or singular integrands are resolved
    pts = [0] + [p for p in (mp.mpf("1e-6"), mp.mpf("0.01"), mp.mpf("0.5"), mp.mpf(1), mp.mpf(3)) if p < x] + [x]
    return mp.quad(lambda t: f(t, s), pts)


def median_param(family, v, median):
    """Scale (or log-location) that puts the median at ``median``, by root-finding on the quadrature cdf."""
    f = pdf_factory(family, v)
    m = mp.mpf(median)
    if family == "lognormal":
        return mp.log(m)
    g = lambda ls: cdf(f, m, mp.exp(ls)) - mp.mpf(1) / 2  # noqa: E731
    lo, hi = mp.log(m) - 8, mp.log(m) + 8
    ls = mp.findroot(g, (lo, hi), solver="illinois", tol=mp.mpf(10) ** -24)
    return mp.exp(ls)


CASES = [
    ("gengamma", (2.5, 1.7), (1.3, 40.0)),
    ("gengamma", (0.8, 0.6), (5.0,)),
    ("gamma", (0.7,), (2.0, 77.6)),
    ("gamma", (3.5,), (0.4,)),
    ("weibull", (1.8,), (3.0, 15.0)),
    ("weibull", (0.6,), (1.0,)),
    ("loggamma", (2.0,), (3.0,)),
    ("loggamma", (0.7,), (12.0, 0.5)),
    ("lognormal", (5.0,), (1.0, 77.6)),
    ("lognormal", (0.3,), (2.5,)),
    ("burr", (1.0, 1.0), (1.0,)),
    ("burr", (0.6, 3.2), (20.0, 2.0)),
    ("extgpd", (1.5, 0.3), (4.0, 60.0)),
    ("extgpd", (0.5, 0.0), (2.0,)),
    ("gpd", (0.25,), (10.0,)),
    ("gpd", (0.0,), (1.0, 3.0)),
    ("gammagamma", (4.0, 8.23), (2.0, 77.6)),
    ("gammagamma", (1.2, 3.0), (0.7,)),
]


SPECIAL_POINTS = {
    "gammaln": [(0.3,), (2.5,), (77.6,), (1e-3,)],
    "gammainc": [(0.7, 0.2), (2.5, 3.0), (40.0, 35.0), (0.05, 1e-4)],
    "gammaincinv": [(0.7, 0.5), (2.5, 0.5), (40.0, 0.5), (0.05, 0.5)],
    "betainc": [(0.5, 2.0, 0.3), (2.0, 4.115, 0.7), (0.6, 1.5, 0.01)],
    "betaincinv": [(0.5, 2.0, 0.5), (2.0, 4.115, 0.5), (0.6, 1.5, 0.5)],
    "ndtr": [(-3.0,), (0.0,), (1.7,), (-10.0,)],
}


def special_table():
    """Regularised incomplete gamma/beta, their inverses, log-gamma and the normal cdf at 30 digits."""
    out = []
    for name, pts in SPECIAL_POINTS.items():
        for args in pts:
            a = [mp.mpf(t) for t in args]
            if name == "gammaln":
                v = mp.loggamma(a[0])
            elif name == "gammainc":
                v = mp.gammainc(a[0], 0, a[1], regularized=True)
            elif name == "gammaincinv":
                lx = mp.findroot(lambda t: mp.gammainc(a[0], 0, mp.exp(t), regularized=True) - a[1], (mp.mpf(-300), mp.mpf(6)), solver="illinois", tol=mp.mpf(10) ** -25)
                v = mp.exp(lx)
            elif name == "betainc":
                v = mp.betainc(a[0], a[1], 0, a[2], regularized=True)
            elif name == "betaincinv":
                v = mp.findroot(lambda x: mp.betainc(a[0], a[1], 0, x, regularized=True) - a[2], (mp.mpf("1e-12"), 1 - mp.mpf("1e-12")), solver="illinois", tol=mp.mpf(10) ** -25)
            else:
                v = mp.ncdf(a[0])
            out.append((name, args, float(v)))
    return out


def gammagamma_scale(c1=2.0, c2=4.0, median=3.0):
    """Scale putting the GammaGamma median at ``median``, by bisection on the quadrature cdf."""
    f = pdf_factory("gammagamma", (c1, c2))
    lo, hi = mp.mpf("0.01"), mp.mpf(100)
    for _ in range(110):
        mid = (lo + hi) / 2
        if cdf(f, mp.mpf(median), mid) > 0.5:
            lo = mid  # median below target: scale too small
        else:
            hi = mid
    return float((lo + hi) / 2)


def main():
    import sys

    if "--special" in sys.argv:
        print("SPECIAL = [")
        for r in special_table():
            print(f"    {r!r},")
        print("]")
        print(f"GAMMAGAMMA_SCALE_2_4_3 = {gammagamma_scale()!r}")
        return
    rows = []
    for family, v, medians in CASES:
        f = pdf_factory(family, v)
        for m in medians:
            s = median_param(family, v, m)
            for frac in (0.3, 1.0, 2.7):
                x = mp.mpf(m) * mp.mpf(frac)
                rows.append((family, v, m, float(x), float(mp.log(f(x, s))), float(cdf(f, x, s))))
    print("REFERENCE = [")
    for r in rows:
        print(f"    {r!r},")
    print("]")


if __name__ == "__main__":
    main()
