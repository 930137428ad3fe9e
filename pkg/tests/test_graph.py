import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from jointmpp.exceptions import DomainError
from jointmpp.graph import (
    PixelGrid,
    Projection,
    aggregate_to_areal,
    build_graph,
    exposure_from_area,
    hard_center,
    icar_quad_form,
    project,
)
from jointmpp.model import Dataset


def path3():
    return build_graph([(0, 1), (1, 2)])


def random_graph(rng, n, p=0.15):
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.uniform() < p]
    # a spanning path keeps the graph connected unless we want otherwise
    pairs += [(i, i + 1) for i in range(n - 1)]
    return build_graph(pairs, n_units=n)


def test_path_graph_structure():
    g = path3()
    assert np.array_equal(g.degree, [1, 2, 1])
    assert np.array_equal(g.Q.toarray(), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
    assert g.rank == 2
    assert g.mean_degree == pytest.approx(4 / 3)


def test_two_disjoint_edges():
    g = build_graph([(0, 1), (2, 3)])
    assert g.n_components == 2
    assert g.rank == 2
    assert np.linalg.matrix_rank(g.Q.toarray()) == 2


def test_duplicates_merged_and_self_loop_rejected():
    g = build_graph([(0, 1), (1, 0), (0, 1), (1, 2)])
    assert len(g.edges) == 2
    with pytest.raises(DomainError, match="self-loop"):
        build_graph([(0, 1), (2, 2)])
    with pytest.raises(DomainError):
        build_graph([(0, 5)], n_units=3)


def test_isolated_unit_warns():
    with pytest.warns(UserWarning, match="isolated"):
        g = build_graph([(0, 1)], n_units=3)
    assert g.isolated.tolist() == [2]
    assert g.n_components == 2


def test_q_invariants_random():
    rng = np.random.default_rng(0)
    for n in (2, 7, 20, 50):
        g = random_graph(rng, n)
        Q = g.Q.toarray()
        assert np.array_equal(Q, Q.T)
        assert np.all(Q.sum(axis=1) == 0)
        lam, V = np.linalg.eigh(Q)
        assert abs(lam[0]) < 1e-10
        v = V[:, 0] * np.sign(V[0, 0])
        assert np.allclose(v, 1 / np.sqrt(n), atol=1e-8)
        assert np.linalg.matrix_rank(Q) == g.rank == n - 1


def test_quad_form_examples():
    g = path3()
    assert icar_quad_form(g, [0.0, 1.0, 3.0]) == 5.0
    assert icar_quad_form(g, [2.5, 2.5, 2.5]) == 0.0
    with pytest.raises(DomainError):
        icar_quad_form(g, [1.0, 2.0])


def test_quad_form_matches_dense():
    rng = np.random.default_rng(1)
    for _ in range(20):
        g = random_graph(rng, int(rng.integers(3, 30)))
        w = rng.normal(size=g.n)
        assert icar_quad_form(g, w) == pytest.approx(w @ g.Q.toarray() @ w, rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(float, 6, elements=st.floats(-1e3, 1e3)))
def test_quad_form_nonnegative_zero_iff_constant_per_component(w):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g = build_graph([(0, 1), (1, 2), (3, 4)], n_units=6)
    q = icar_quad_form(g, w)
    assert q >= 0
    const = hard_center(w, g.labels)
    assert icar_quad_form(g, w - const) == pytest.approx(0.0, abs=1e-9)
    if q == 0:
        assert np.allclose(const, 0)


def test_hard_center_examples():
    assert np.array_equal(hard_center([1.0, 2.0, 3.0]), [-1.0, 0.0, 1.0])
    w = np.array([-2.0, 0.5, 1.5])
    assert np.array_equal(hard_center(w), w)


def test_hard_center_per_component():
    w = hard_center([1.0, 3.0, 10.0, 20.0], labels=[0, 0, 1, 1])
    assert np.array_equal(w, [-1.0, 1.0, -5.0, 5.0])


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(float, 12, elements=st.floats(-100, 100)))
def test_hard_center_keeps_quad_form(w):
    g = build_graph([(i, i + 1) for i in range(11)])
    c = hard_center(w)
    assert abs(c.sum()) < 1e-12 * max(1.0, np.abs(w).sum())
    assert icar_quad_form(g, c) == pytest.approx(icar_quad_form(g, w), rel=1e-12, abs=1e-9)


def test_projection_examples():
    P = Projection(counts_index=[0, 0, 1], sizes_index=[1], n_units=2)
    assert np.array_equal(project(P, [5.0, 7.0], "counts"), [5.0, 5.0, 7.0])
    assert np.array_equal(project(P, [0.0, 0.0], "counts"), [0.0, 0.0, 0.0])
    with pytest.raises(DomainError):
        Projection(counts_index=[0, 2], sizes_index=[], n_units=2)
    with pytest.raises(ValueError):
        P.index("pixels")


def test_projection_dense_oracle_and_adjoint():
    rng = np.random.default_rng(4)
    n = 9
    P = Projection(counts_index=rng.integers(0, n, 40), sizes_index=rng.integers(0, n, 13), n_units=n)
    for side in ("counts", "sizes"):
        A = P.matrix(side).toarray()
        assert np.all(A.sum(axis=1) == 1)
        w = rng.normal(size=n)
        r = rng.normal(size=A.shape[0])
        assert np.allclose(project(P, w, side), A @ w, rtol=0, atol=1e-15)
        assert np.allclose(P.adjoint(side, r), A.T @ r, atol=1e-12)
        assert np.array_equal(P.unit_counts(side), np.diag(A.T @ A))


def test_pixel_grid_validation_and_exposure():
    g = PixelGrid(su_index=[0, 1])
    assert np.array_equal(g.exposure, [1.0, 1.0])
    with pytest.raises(DomainError):
        PixelGrid(su_index=[0, 1], exposure=[1.0, 0.0])
    with pytest.raises(DomainError):
        PixelGrid(su_index=[-1])
    assert np.allclose(exposure_from_area([100.0, 100.0, 100.0]), 1.0)
    assert np.allclose(exposure_from_area([1.0, 3.0]), [0.5, 1.5])


def _pixel_dataset():
    # unit 0: pixels 0, 1, 2 with counts (2, 0, 1); unit 1: pixels 3, 4 with no landslides
    counts = np.array([2, 0, 1, 0, 0])
    lp = np.array([0, 0, 2])
    Z1 = np.array([[1.0], [3.0], [2.0], [1.0], [3.0]])
    ds = Dataset(counts=counts, landslide_pixel=lp, sizes=np.array([1.0, 2.0, 4.0]), Z1=Z1, Z2=np.array([[0.5], [1.5], [2.5]]))
    grid = PixelGrid(su_index=[0, 0, 0, 1, 1], exposure=[1.0, 1.0, 2.0, 1.0, 1.0])
    return ds, grid


def test_aggregate_to_areal():
    ds, grid = _pixel_dataset()
    areal, agrid = aggregate_to_areal(ds, grid)
    assert areal.counts.tolist() == [3, 0]
    assert areal.landslide_pixel.tolist() == [0]  # unit 1 has a missing size
    assert areal.sizes.tolist() == [7.0]
    assert np.allclose(areal.Z1[:, 0], [2.0, 2.0])
    assert areal.exposure.tolist() == [4.0, 2.0]
    assert np.array_equal(agrid.su_index, [0, 1])
    assert areal.counts.sum() == ds.counts.sum()
    assert areal.sizes.sum() == ds.sizes.sum()
    assert np.allclose(areal.Z2[:, 0], [1.5])


def test_aggregate_rejects_empty_unit():
    ds, _ = _pixel_dataset()
    with pytest.raises(DomainError):
        aggregate_to_areal(ds, PixelGrid(su_index=[0, 0, 0, 2, 2]))
