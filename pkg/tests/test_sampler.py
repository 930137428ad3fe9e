import math

import numpy as np
import pytest
from scipy import integrate, special

from conftest import small_instance
from jointmpp import marks, sampler as S
from jointmpp.evaluation import TruthSpec, simulate_dataset, synthetic_landscape
from jointmpp.exceptions import DomainError, UpdateError
from jointmpp.graph import build_graph, hard_center
from jointmpp.marks import MarkParams
from jointmpp.model import Dataset, ModelConfig, initial_state, make_projection


def tiny_model(family="gamma", submodel="M1_0", **cfg_kw):
    graph = build_graph([(0, 1), (1, 2)])
    su = np.array([0, 1, 1, 2, 2, 2])
    counts = np.array([1, 0, 2, 0, 1, 0])
    ds = Dataset(counts=counts, landslide_pixel=np.repeat(np.arange(6), counts), sizes=np.array([1.5, 0.7, 2.2, 3.0]), Z1=np.zeros((6, 0)), Z2=np.zeros((4, 0)))
    return ModelConfig.submodel(submodel, family=family, **cfg_kw), ds, graph, make_projection(su, ds, 3)


def batch_se(x, n_batches=50):
    b = np.asarray(x)[: len(x) // n_batches * n_batches].reshape(n_batches, -1).mean(1)
    return b.std(ddof=1) / math.sqrt(n_batches)


# ---------------------------------------------------------------------------
# precisions


def test_gibbs_precision_conjugacy():
    rng = np.random.default_rng(0)
    draws = np.array([S.gibbs_precision(4.0, 4, 0.25, 3.0, rng) for _ in range(100_000)])
    # Gamma(0.25 + 4/2, 3 + 4/2) = Gamma(2.25, 5)
    assert abs(draws.mean() / (2.25 / 5) - 1) < 0.01
    assert draws.var() == pytest.approx(2.25 / 25, rel=0.03)


@pytest.mark.parametrize("args", [(1.0, 2, 0.0, 1.0), (1.0, 2, 1.0, -1.0), (-1.0, 2, 1.0, 1.0), (1.0, 0, 1.0, 1.0)])
def test_gibbs_precision_rejects_bad_input(args):
    with pytest.raises(DomainError):
        S.gibbs_precision(*args, np.random.default_rng(0))


def test_fixed_precisions_are_never_updated():
    cfg, ds, graph, proj = tiny_model(submodel="M2_0")
    out = S.run_chain(cfg, ds, graph, proj, n_iter=300, burn_in=100)
    assert np.all(out.draws["kappa_eta"] == 1000.0)
    assert np.all(out.draws["kappa_mu"] == 1000.0)


# ---------------------------------------------------------------------------
# coefficients


def test_scalar_coefficient_conditional():
    X = np.ones((2, 1))
    mean, L = S.gaussian_conditional(X, np.array([1.0, 1.0]), 1.0, 100.0)
    assert mean[0] == pytest.approx(2 / 2.01, rel=1e-14)
    assert 1 / L[0, 0] ** 2 == pytest.approx(1 / 2.01, rel=1e-14)


def test_scalar_coefficient_draws():
    ds = Dataset(counts=[0, 0], landslide_pixel=[], sizes=[], Z1=np.zeros((2, 0)), Z2=np.zeros((0, 0)))
    graph = build_graph([(0, 1)])
    proj = make_projection([0, 1], ds, 2)
    cfg = ModelConfig()
    state = initial_state(cfg, ds, graph)
    state.eta, state.kappa_eta = np.array([1.0, 1.0]), 1.0
    rng = np.random.default_rng(1)
    g = np.array([S.gibbs_coefficients("counts", state, ds, proj, cfg, rng).gamma1 for _ in range(40_000)])
    assert abs(g.mean() - 2 / 2.01) < 3 * math.sqrt(1 / 2.01 / g.size) + 1e-12
    assert g.var() == pytest.approx(1 / 2.01, rel=0.03)


def test_coefficient_conditional_matches_gaussian_completion():
    """Condition the joint Gaussian of (b, r) on r; compare with the precision form."""
    rng = np.random.default_rng(2)
    n, p, kappa, v = 9, 3, 2.5, 100.0
    X = rng.normal(size=(n, p))
    r = rng.normal(size=n)
    S_bb = v * np.eye(p)
    S_br = S_bb @ X.T
    S_rr = X @ S_bb @ X.T + np.eye(n) / kappa
    m_ref = S_br @ np.linalg.solve(S_rr, r)
    C_ref = S_bb - S_br @ np.linalg.solve(S_rr, S_br.T)
    mean, L = S.gaussian_conditional(X, r, kappa, v)
    Lt = np.tril(L)
    assert np.allclose(mean, m_ref, rtol=1e-10, atol=1e-12)
    assert np.allclose(np.linalg.inv(Lt @ Lt.T), C_ref, rtol=1e-9, atol=1e-12)


def test_sharing_coefficient_stays_zero_in_base_model():
    ds, graph, proj, su, s = small_instance(np.random.default_rng(3), beta=0.0)
    out = S.run_chain(ModelConfig.submodel("M1_0"), ds, graph, proj, n_iter=200, burn_in=50, state=s)
    assert np.all(out.draws["beta"] == 0.0)


# ---------------------------------------------------------------------------
# ICAR vectors


def test_constrained_draw_matches_conditioned_gaussian():
    rng = np.random.default_rng(4)
    graph = build_graph([(0, 1), (1, 2), (3, 4)])
    Q = graph.Q.toarray()
    C = graph.component_indicator()
    kappa, diag = 1.7, np.array([0.5, 0.0, 2.0, 1.0, 0.0])
    b = rng.normal(size=5)
    P = kappa * Q + np.diag(diag)
    Sig = np.linalg.inv(P)
    m = Sig @ b
    K = Sig @ C @ np.linalg.inv(C.T @ Sig @ C)
    m_ref, S_ref = m - K @ C.T @ m, Sig - K @ C.T @ Sig
    draws = np.array([S.constrained_gaussian_draw(Q, kappa, diag, b, C, rng) for _ in range(40_000)])
    assert np.abs(draws @ C).max() < 1e-12
    se = np.sqrt(np.diag(S_ref) / len(draws))
    assert np.all(np.abs(draws.mean(0) - m_ref) < 4 * se + 1e-12)
    assert np.allclose(np.cov(draws.T), S_ref, atol=0.03)


def _two_unit(kappa_eta, residuals):
    n0 = len(residuals)
    ds = Dataset(counts=np.zeros(n0, int), landslide_pixel=[], sizes=[], Z1=np.zeros((n0, 0)), Z2=np.zeros((0, 0)))
    graph = build_graph([(0, 1)])
    proj = make_projection(np.zeros(n0, int), ds, 2)
    cfg = ModelConfig()
    s = initial_state(cfg, ds, graph)
    s.eta, s.kappa_eta, s.kappa_w1, s.kappa_w2 = np.asarray(residuals, float), kappa_eta, 0.8, 0.8
    return cfg, ds, graph, proj, s


def test_icar_empty_units_reduce_to_centered_prior():
    # w2 has no data at all: w = (t, -t) with t ~ N(0, 1/(4 kappa_w2))
    cfg, ds, graph, proj, s = _two_unit(1.0, [0.3, 0.1])
    rng = np.random.default_rng(5)
    t = np.array([S.gibbs_icar("w2", s, ds, graph, proj, cfg, rng).w2[0] for _ in range(30_000)])
    assert abs(t.mean()) < 4 * math.sqrt(1 / 3.2 / t.size)
    assert t.var() == pytest.approx(1 / 3.2, rel=0.04)


@pytest.mark.parametrize("kappa_eta", [0.5, 5.0, 500.0])
def test_icar_one_unit_with_data_closed_form(kappa_eta):
    res = [0.9, 1.3, 1.1, 0.7]
    cfg, ds, graph, proj, s = _two_unit(kappa_eta, res)
    prec = 4 * s.kappa_w1 + kappa_eta * len(res)
    mean = kappa_eta * sum(res) / prec
    rng = np.random.default_rng(6)
    t = np.array([S.gibbs_icar("w1", s, ds, graph, proj, cfg, rng).w1[0] for _ in range(20_000)])
    assert abs(t.mean() - mean) < 4 * math.sqrt(1 / prec / t.size)
    assert t.var() == pytest.approx(1 / prec, rel=0.05)


def test_icar_shrinks_to_unit_mean_residual():
    res = [0.9, 1.3, 1.1, 0.7]
    rng = np.random.default_rng(13)
    gaps = []
    for kappa_eta in (0.5, 50.0, 1e4):
        cfg, ds, graph, proj, s = _two_unit(kappa_eta, res)
        t = np.mean([S.gibbs_icar("w1", s, ds, graph, proj, cfg, rng).w1[0] for _ in range(5000)])
        gaps.append(abs(t - np.mean(res)))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 5e-3


def test_icar_draws_centered_per_component():
    rng = np.random.default_rng(7)
    ds, _, _, su, s = small_instance(rng, N=6)
    with pytest.warns(UserWarning):
        graph = build_graph([(0, 1), (1, 2), (3, 4)], n_units=6)
    proj = make_projection(su, ds, 6)
    cfg = ModelConfig()
    s.w1, s.w2 = hard_center(s.w1[:5].tolist() + [0.0], graph.labels), np.zeros(6)
    for _ in range(50):
        for which in ("w1", "w2"):
            w = getattr(S.gibbs_icar(which, s, ds, graph, proj, cfg, rng), which)
            assert np.abs(np.bincount(graph.labels, weights=w)).max() < 1e-12


def test_gibbs_icar_bad_block():
    cfg, ds, graph, proj, s = _two_unit(1.0, [0.0])
    with pytest.raises(ValueError):
        S.gibbs_icar("w3", s, ds, graph, proj, cfg, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# MALA


def test_mala_proposal_mean_for_standard_gaussian():
    x, h = np.array([1.0, -2.0, 0.5]), 0.3
    seen = []

    def target(y):
        seen.append(y.copy())
        return -0.5 * float(y @ y), -y

    z = np.random.default_rng(8).standard_normal(3)
    S.mala_step(x, target, h, np.random.default_rng(8))
    assert np.allclose(seen[1], x * (1 - h / 2) + math.sqrt(h) * z, rtol=0, atol=1e-15)


@pytest.mark.parametrize("bad", ["inf", "nan_grad", "raise"])
def test_mala_rejects_non_finite_proposals(bad):
    x = np.zeros(2)

    def target(y):
        if y is x:
            return 0.0, np.zeros(2)
        if bad == "inf":
            return -math.inf, np.zeros(2)
        if bad == "nan_grad":
            return 0.0, np.array([np.nan, 0.0])
        raise OverflowError("boom")

    y, acc, alpha = S.mala_step(x, target, 0.1, np.random.default_rng(0))
    assert y is x and not acc and alpha == 0.0


def test_mala_chain_on_log_gamma_target():
    """x = log G with G ~ Gamma(a, b): moments by quadrature, chain by MALA."""
    a, b = 2.5, 1.5

    def target(x):
        return float(a * x[0] - b * math.exp(x[0])), np.array([a - b * math.exp(x[0])])

    dens = lambda t: math.exp(a * t - b * math.exp(t))  # noqa: E731
    Z = integrate.quad(dens, -30, 10)[0]
    m1 = integrate.quad(lambda t: t * dens(t), -30, 10)[0] / Z
    m2 = integrate.quad(lambda t: t * t * dens(t), -30, 10)[0] / Z
    assert m1 == pytest.approx(special.digamma(a) - math.log(b), rel=1e-8)
    rng = np.random.default_rng(9)
    x, h = np.array([0.0]), 1.0
    xs = np.empty(60_000)
    for i in range(xs.size):
        x, _, _ = S.mala_step(x, target, h, rng)
        xs[i] = x[0]
    xs = xs[1000:]
    assert abs(xs.mean() - m1) < 3 * batch_se(xs)
    assert abs((xs**2).mean() - m2) < 3 * batch_se(xs**2)


def test_tuner_moves_toward_target():
    t = S.MalaTuner(h=1.0)
    t.adapt(0.9)
    assert t.h > 1.0
    t.adapt(0.1)
    h = t.h
    t.frozen = True
    t.adapt(0.0)
    assert t.h == h


# ---------------------------------------------------------------------------
# mark parameters


def _fixed_mu_gamma(L=500, kappa=2.0, seed=10):
    rng = np.random.default_rng(seed)
    mu = rng.normal(1.0, 0.5, L)
    sizes = marks.sample(MarkParams("gamma", (kappa,)), np.exp(mu), rng)
    ds = Dataset(counts=np.ones(L, int), landslide_pixel=np.arange(L), sizes=sizes, Z1=np.zeros((L, 0)), Z2=np.zeros((L, 0)))
    graph = build_graph([(0, 1)])
    cfg = ModelConfig(family="gamma")
    s = initial_state(cfg, ds, graph)
    s.mu = mu
    return cfg, ds, s, rng


def test_theta_identical_proposal_is_accepted():
    cfg, ds, s, rng = _fixed_mu_gamma(L=20)
    tuner = S.MalaTuner(h=0.0, frozen=True)
    S.metropolis_theta(s, ds, cfg, [tuner], rng)
    assert tuner.n_acc == tuner.n_prop == 1


def test_theta_self_consistency_gamma_shape():
    cfg, ds, s, rng = _fixed_mu_gamma()
    tuners = [S.MalaTuner(h=0.1, target=S.THETA_TARGET)]
    draws = []
    for i in range(4000):
        S.metropolis_theta(s, ds, cfg, tuners, rng)
        if i >= 1000:
            draws.append(s.theta.values[0])
    assert abs(np.median(draws) / 2.0 - 1) < 0.15
    assert 0.3 < tuners[0].rate < 0.6


def test_gpd_xi_stays_nonnegative():
    rng = np.random.default_rng(11)
    ds, graph, proj, su, s = small_instance(rng, "gpd", L=15)
    out = S.run_chain(ModelConfig(family="gpd"), ds, graph, proj, n_iter=600, burn_in=100, state=s)
    assert np.all(out.draws["theta"] > 0)


# ---------------------------------------------------------------------------
# chain driver


def test_draw_count_and_determinism():
    cfg, ds, graph, proj = tiny_model("burr", "M1")
    a = S.run_chain(cfg, ds, graph, proj, n_iter=700, burn_in=100, thin=3, seed=5)
    b = S.run_chain(cfg, ds, graph, proj, n_iter=700, burn_in=100, thin=3, seed=5)
    assert a.n_draws == (700 - 100) // 3
    for k in a.draws:
        assert np.array_equal(a.draws[k], b.draws[k]), k
    assert a.acceptance == b.acceptance
    c = S.run_chain(cfg, ds, graph, proj, n_iter=700, burn_in=100, thin=3, seed=6)
    assert not np.array_equal(a.draws["gamma1"], c.draws["gamma1"])


def test_settings_validation():
    for kw in ({"n_iter": 10, "burn_in": 10}, {"n_iter": 10, "burn_in": 2, "thin": 0}, {"n_iter": 10, "burn_in": 1, "thin": 2}):
        with pytest.raises(DomainError):
            S.ChainSettings(**kw)


def test_adaptation_frozen_after_burn_in():
    cfg, ds, graph, proj = tiny_model("weibull", "M1")
    sampler = S.Sampler(cfg, ds, graph, proj, S.ChainSettings(n_iter=400, burn_in=150))
    steps = []
    sampler.run(callback=lambda smp: steps.append([t.h for t in smp.tuners]))
    steps = np.array(steps)
    assert np.all(steps[150:] == steps[150])
    assert np.any(steps[1:150] != steps[0])
    assert all(t.frozen for t in sampler.tuners)


def test_update_error_names_iteration_and_block(monkeypatch):
    cfg, ds, graph, proj = tiny_model()
    calls = {"n": 0}
    orig = S.gibbs_icar

    def flaky(which, *a, **k):
        calls["n"] += 1
        if calls["n"] == 7:
            raise FloatingPointError("injected")
        return orig(which, *a, **k)

    monkeypatch.setattr(S, "gibbs_icar", flaky)
    with pytest.raises(UpdateError) as ei:
        S.run_chain(cfg, ds, graph, proj, n_iter=20, burn_in=5)
    assert ei.value.iteration == 4 and ei.value.block == "w1"
    assert "injected" in str(ei.value)


def test_checkpoint_resume_is_exact(tmp_path):
    cfg, ds, graph, proj = tiny_model("extgpd", "M1")
    settings = S.ChainSettings(n_iter=500, burn_in=200, thin=2, seed=3)
    full = S.Sampler(cfg, ds, graph, proj, settings).run()
    for stop in (120, 333):
        part = S.Sampler(cfg, ds, graph, proj, settings)
        assert part.run(n_sweeps=stop) is None
        part.save_checkpoint(tmp_path / "ck.npz")
        resumed = S.Sampler.from_checkpoint(tmp_path / "ck.npz", cfg, ds, graph, proj).run()
        for k in full.draws:
            assert np.array_equal(full.draws[k], resumed.draws[k]), (stop, k)
        assert full.acceptance == resumed.acceptance


def test_chain_output_roundtrip(tmp_path):
    cfg, ds, graph, proj = tiny_model("gengamma", "M3")
    out = S.run_chain(cfg, ds, graph, proj, n_iter=200, burn_in=100)
    out.save(tmp_path / "c.npz", extra_meta={"note": 1})
    back = S.ChainOutput.load(tmp_path / "c.npz")
    assert back.theta_names == ("kappa", "c") and back.submodel == "M3"
    for k in out.draws:
        assert np.array_equal(out.draws[k], back.draws[k])
    names = [r["parameter"] for r in back.summary()]
    assert names[:2] == ["kappa", "c"] and "beta" in names


def test_conjugate_skeleton():
    """Gaussian counts, no size likelihood, fixed precisions: the posterior is an explicit Gaussian."""
    graph = build_graph([(0, 1), (1, 2)])
    su = np.array([0, 0, 1, 1, 2, 2])
    Y = np.array([2.0, 1.0, -0.5, 0.3, 1.2, 0.8])
    z = np.array([0.5, -1.0, 0.2, 1.4, -0.3, -0.8])
    ds = Dataset(counts=np.zeros(6, int), landslide_pixel=[], sizes=[], Z1=z[:, None], Z2=np.zeros((0, 1)))
    ds.counts = Y  # test hook: the Gaussian count layer reads real-valued "counts"
    kappa_eta, kappa_w = 2.0, 1.0
    big = 1e6
    cfg = ModelConfig.submodel(
        "M2_0", fixed_precision=kappa_eta, size_likelihood=False, count_likelihood="gaussian",
        prec_shape=big, icar_rate_numerator=big * graph.mean_degree * 0.49 / kappa_w,
    )
    proj = make_projection(su, ds, 3)
    # x = (eta[6], gamma1, beta1, w[3]); Y ~ N(eta, 1); eta ~ N(X c + A w, 1/kappa_eta)
    n = 6
    A = proj.matrix("counts").toarray()
    M = np.column_stack([np.ones(n), z, A])  # eta mean = M @ (gamma1, beta1, w)
    J = np.zeros((n + 5, n + 5))
    J[:n, :n] = np.eye(n) * (1 + kappa_eta)
    J[:n, n:] = -kappa_eta * M
    J[n:, :n] = -kappa_eta * M.T
    J[n:, n:] = kappa_eta * M.T @ M
    J[n : n + 2, n : n + 2] += np.eye(2) / 100.0
    J[n + 2 :, n + 2 :] += kappa_w * graph.Q.toarray()
    h = np.r_[Y, np.zeros(5)]
    # condition on sum(w) = 0 by working in a basis of the constraint set
    C = np.zeros((n + 5, 1))
    C[n + 2 :, 0] = 1.0
    B = np.linalg.svd(C.T)[2][1:].T
    Jr = B.T @ J @ B
    cov = B @ np.linalg.inv(Jr) @ B.T
    mean = B @ np.linalg.solve(Jr, B.T @ h)

    out = S.run_chain(cfg, ds, graph, proj, n_iter=25_000, burn_in=5_000, seed=1)
    est = np.column_stack([out.draws["eta"], out.draws["gamma1"], out.draws["beta1"][:, 0], out.draws["w1"]])
    for k in range(est.shape[1]):
        se = batch_se(est[:, k])
        assert abs(est[:, k].mean() - mean[k]) < 3.5 * se + 0.02 * math.sqrt(cov[k, k]), k
        assert est[:, k].var() == pytest.approx(cov[k, k], rel=0.12), k


def _rhat(chains):
    x = np.asarray(chains)
    m, n = x.shape
    W = x.var(axis=1, ddof=1).mean()
    B = n * x.mean(axis=1).var(ddof=1)
    return math.sqrt(((n - 1) / n * W + B / n) / W)


@pytest.mark.slow
def test_overdispersed_starts_agree():
    rng = np.random.default_rng(12)
    grid, graph, Z = synthetic_landscape(15, 16, 2, rng)
    ds, truth = simulate_dataset(TruthSpec(beta1=(0.3, -0.2), beta2=(0.2, 0.1)), graph, grid, Z, rng)
    proj = make_projection(grid.su_index, ds, graph.n)
    cfg = ModelConfig.submodel("M1", family="lognormal")
    chains = []
    for c in range(4):
        st = initial_state(cfg, ds, graph)
        if c % 2:
            st.gamma1, st.gamma2, st.beta = 3.0 * (-1) ** c, -3.0, -2.0
            st.w1 = hard_center(rng.normal(0, 3, graph.n))
        out = S.run_chain(cfg, ds, graph, proj, n_iter=20000, burn_in=5000, thin=5, seed=c, state=st)
        chains.append(out)
    for name in ("gamma1", "gamma2", "beta"):
        assert _rhat([c.draws[name] for c in chains]) < 1.05, name
    for k in range(2):
        assert _rhat([c.draws["beta1"][:, k] for c in chains]) < 1.05
