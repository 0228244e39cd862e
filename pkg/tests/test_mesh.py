import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uwtransport.mesh import (
    FILTER_GEOMETRY,
    NO_GEOMETRY,
    AlignmentError,
    Domain,
    FeFunction,
    Label,
    Segment,
    Space,
    build_mesh,
    composite_rule,
    dof_map,
    eval_basis,
    gauss_rule,
    interpolate,
    map_to_physical,
)


def count_labelled(n, side_x, lo, hi):
    """Oracle: enumerate the facets of one vertical side and test their midpoints."""
    mids = (np.arange(n) + 0.5) / n
    return int(np.sum((mids > lo) & (mids < hi)))


class TestBuildMesh:
    def test_filter_3x3_has_one_inflow_facet(self):
        mesh = build_mesh(3, 3, FILTER_GEOMETRY)
        inflow = mesh.facets(Label.IN)
        assert len(inflow) == 1
        f = inflow[0]
        assert mesh.facet_face[f] == 0
        assert mesh.cell_ij(mesh.facet_cell[f]) == (0, 2)

    def test_single_cell_without_segments_is_all_wall(self):
        mesh = build_mesh(1, 1, NO_GEOMETRY)
        assert mesh.nfacets == 4
        assert np.all(mesh.facet_label == Label.WALL)

    def test_grid_40_is_misaligned(self):
        with pytest.raises(AlignmentError, match="0.666"):
            build_mesh(40, 40, FILTER_GEOMETRY)

    @pytest.mark.parametrize("n", [3, 15, 39, 60])
    def test_label_counts_match_enumeration(self, n):
        mesh = build_mesh(n, n, FILTER_GEOMETRY)
        assert len(mesh.facets(Label.IN)) == count_labelled(n, 0, 2 / 3, 1)
        assert len(mesh.facets(Label.OUT)) == count_labelled(n, 1, 0, 1 / 3)

    def test_grid_39_counts(self):
        mesh = build_mesh(39, 39, FILTER_GEOMETRY)
        assert len(mesh.facets(Label.IN)) == 13
        assert len(mesh.facets(Label.OUT)) == 13

    def test_labels_sit_on_the_right_sides(self):
        mesh = build_mesh(15, 15, FILTER_GEOMETRY)
        for f in mesh.facets(Label.IN):
            i, j = mesh.cell_ij(mesh.facet_cell[f])
            assert mesh.facet_face[f] == 0 and i == 0 and (j + 0.5) / 15 > 2 / 3
        for f in mesh.facets(Label.OUT):
            i, j = mesh.cell_ij(mesh.facet_cell[f])
            assert mesh.facet_face[f] == 1 and i == 14 and (j + 0.5) / 15 < 1 / 3

    @pytest.mark.parametrize("n", [3, 15, 30])
    def test_facet_measure_per_label(self, n):
        mesh = build_mesh(n, n, FILTER_GEOMETRY)
        for label, length in ((Label.IN, 1 / 3), (Label.OUT, 1 / 3), (Label.WALL, 10 / 3)):
            total = mesh.facet_length(mesh.facets(label)).sum()
            assert abs(total - length) < 1e-13

    @pytest.mark.parametrize("nx,ny", [(1, 1), (3, 2), (5, 7)])
    def test_boundary_facet_count_and_cover(self, nx, ny):
        mesh = build_mesh(nx, ny)
        assert mesh.nfacets == 2 * (nx + ny)
        assert mesh.ncells == nx * ny
        centers = mesh.cell_centers()
        assert np.all((centers > 0) & (centers < 1))
        # cells tile the square: each cell center falls back into its own cell
        cells, _ = mesh.locate(centers[:, 0], centers[:, 1])
        assert np.array_equal(cells, np.arange(mesh.ncells))

    def test_overlapping_segments_rejected(self):
        geom = {Label.IN: (Segment("left", 0.0, 0.5),), Label.OUT: (Segment("left", 0.25, 1.0),)}
        with pytest.raises(ValueError, match="overlaps"):
            build_mesh(4, 4, geom)

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            build_mesh(0, 3)


class TestBasis:
    def test_q1_center(self):
        values, _ = eval_basis(1, [0.5, 0.5])
        np.testing.assert_allclose(values, [0.25] * 4)

    def test_q1_origin_node(self):
        values, _ = eval_basis(1, [0.0, 0.0])
        np.testing.assert_array_equal(values, [1, 0, 0, 0])

    @pytest.mark.parametrize("order", [1, 2])
    def test_nodal_property(self, order):
        t = np.linspace(0, 1, order + 1)
        nodes = np.stack(np.meshgrid(t, t), axis=-1).reshape(-1, 2)
        values, _ = eval_basis(order, nodes)
        np.testing.assert_allclose(values, np.eye(len(nodes)), atol=1e-15)

    @pytest.mark.parametrize("order", [1, 2])
    def test_partition_of_unity_million_points(self, order, rng):
        pts = rng.random((1_000_000, 2))
        values, grads = eval_basis(order, pts)
        assert np.abs(values.sum(axis=-1) - 1).max() < 1e-13
        assert np.abs(grads.sum(axis=-2)).max() < 1e-12

    @pytest.mark.parametrize("order", [1, 2])
    def test_gradients_match_finite_differences(self, order, rng):
        pts = 0.1 + 0.8 * rng.random((50, 2))
        eps = 1e-6
        _, grads = eval_basis(order, pts)
        for d in range(2):
            step = np.zeros(2)
            step[d] = eps
            fd = (eval_basis(order, pts + step)[0] - eval_basis(order, pts - step)[0]) / (2 * eps)
            np.testing.assert_allclose(grads[..., d], fd, atol=1e-8)


class TestMapping:
    def test_corner(self):
        mesh = build_mesh(2, 2)
        x, jac, det = map_to_physical(mesh, 0, [1.0, 1.0])
        np.testing.assert_allclose(x, [0.5, 0.5])

    def test_det_is_cell_area(self):
        mesh = build_mesh(5, 3)
        for cell in range(mesh.ncells):
            _, _, det = map_to_physical(mesh, cell, [0.3, 0.7])
            assert det == pytest.approx(1 / 15)

    def test_jacobian(self):
        mesh = build_mesh(4, 2)
        _, jac, _ = map_to_physical(mesh, 3, [0.2, 0.2])
        np.testing.assert_allclose(jac, np.diag([0.25, 0.5]))


class TestQuadrature:
    def test_midpoint(self):
        rule = gauss_rule(1, Domain.FACET)
        np.testing.assert_allclose(rule.points, [0.5])
        np.testing.assert_allclose(rule.weights, [1.0])

    def test_two_point_facet(self):
        rule = gauss_rule(2, "facet")
        np.testing.assert_allclose(np.sort(rule.points), [0.5 - 0.5 / np.sqrt(3), 0.5 + 0.5 / np.sqrt(3)])
        np.testing.assert_allclose(rule.weights, [0.5, 0.5])

    def test_cell_x3y3(self):
        rule = gauss_rule(2)
        value = np.sum(rule.weights * rule.points[:, 0] ** 3 * rule.points[:, 1] ** 3)
        assert value == pytest.approx(1 / 16, rel=1e-14)

    @pytest.mark.parametrize("q", range(1, 11))
    def test_monomial_exactness(self, q):
        rule = gauss_rule(q)
        x, y = rule.points.T
        for a in range(2 * q):
            for b in range(2 * q):
                exact = 1.0 / ((a + 1) * (b + 1))
                value = np.sum(rule.weights * x**a * y**b)
                assert abs(value - exact) / exact < 1e-13

    @pytest.mark.parametrize("q", [0, 11])
    def test_out_of_range(self, q):
        with pytest.raises(ValueError):
            gauss_rule(q)

    def test_weights_positive_and_sum_to_one(self):
        for q in range(1, 11):
            for dom in ("cell", "facet"):
                rule = gauss_rule(q, dom)
                assert np.all(rule.weights > 0)
                assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)

    def test_composite_rule(self):
        rule = composite_rule(2, 3)
        assert len(rule) == 36
        x, y = rule.points.T
        assert np.sum(rule.weights * x**3 * y**2) == pytest.approx(1 / 12, rel=1e-13)


class TestDofs:
    def test_continuous_q1_shares_interface(self):
        mesh = build_mesh(2, 1)
        space = Space(mesh, 1)
        dmap = dof_map(mesh, space)
        assert space.ndofs == 6
        assert len(np.unique(dmap)) == 6
        assert set(dmap[0]) & set(dmap[1]) == {1, 4}

    def test_discontinuous_q1_does_not_share(self):
        mesh = build_mesh(2, 1)
        space = Space(mesh, 1, continuous=False)
        dmap = dof_map(mesh, space)
        assert space.ndofs == 8
        assert len(np.unique(dmap)) == 8

    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_q2_count(self, n):
        space = Space(build_mesh(n, n), 2)
        assert space.ndofs == (2 * n + 1) ** 2
        assert len(np.unique(space.dof_map())) == space.ndofs

    @pytest.mark.parametrize("order", [1, 2])
    def test_discontinuous_count(self, order):
        mesh = build_mesh(3, 4)
        assert Space(mesh, order, continuous=False).ndofs == 12 * (order + 1) ** 2

    def test_continuous_dofs_single_valued_on_edges(self, rng):
        """A random continuous function has no jumps across interior edges."""
        mesh = build_mesh(4, 3)
        for order in (1, 2):
            space = Space(mesh, order)
            f = FeFunction(space, rng.standard_normal(space.ndofs))
            s = rng.random(7)
            left = f.evaluate(np.full(7, 1), np.stack([np.ones(7), s], -1))
            right = f.evaluate(np.full(7, 2), np.stack([np.zeros(7), s], -1))
            np.testing.assert_allclose(left, right, atol=1e-13)

    def test_order_zero_continuous_rejected(self):
        with pytest.raises(ValueError):
            Space(build_mesh(2, 2), 0)


@settings(max_examples=40, deadline=None)
@given(
    order=st.sampled_from([1, 2]),
    coef=st.lists(st.floats(-3, 3), min_size=9, max_size=9),
    nx=st.integers(1, 5),
    ny=st.integers(1, 5),
)
def test_interpolation_reproduces_polynomials(order, coef, nx, ny):
    c = np.array(coef)

    def poly(x, y):
        # tensor polynomial of degree <= order per axis
        terms = [x**a * y**b for b in range(order + 1) for a in range(order + 1)]
        return sum(ci * t for ci, t in zip(c, terms))

    space = Space(build_mesh(nx, ny), order)
    f = interpolate(space, poly)
    pts = np.random.default_rng(0).random((200, 2))
    np.testing.assert_allclose(f(pts[:, 0], pts[:, 1]), poly(pts[:, 0], pts[:, 1]), atol=1e-12)
