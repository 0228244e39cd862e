import numpy as np
import pytest

from uwtransport.coefficients import ConstantField, constant_velocity, reaction
from uwtransport.linalg import KrylovReport
from uwtransport.mesh import CHANNEL_GEOMETRY, FILTER_GEOMETRY, FeFunction, Label, Space, build_mesh
from uwtransport.reconstruct import (
    eval_u,
    eval_u_points,
    inflow_loading,
    l2_error_volume,
    outflow_trace,
    qoi_outflow_flux,
    trace_error,
    voxelize,
    x_error,
)
from uwtransport.ultraweak import UltraweakSolution, solve_ultraweak

from conftest import one_d_problem, pipeline

REPORT = KrylovReport(0, 0.0, True)


def make_solution(mesh, order, coeffs, b, c):
    space = Space(mesh, order)
    return UltraweakSolution(FeFunction(space, np.broadcast_to(coeffs, (space.ndofs,)).copy()), b, c, REPORT)


@pytest.fixture(scope="module")
def one_d():
    mesh, system = one_d_problem(4, 1)
    return solve_ultraweak(system, tol=1e-14)


class TestEvalU:
    def test_one_d_is_one(self, one_d, rng):
        cells = rng.integers(0, 4, 100)
        np.testing.assert_allclose(eval_u(one_d, cells, rng.random((100, 2))), 1.0, atol=1e-12)

    def test_constant_w_without_reaction(self, rng):
        mesh = build_mesh(6, 6, FILTER_GEOMETRY)
        sol = make_solution(mesh, 2, 3.0, constant_velocity(0.4, 0.9), ConstantField(0.0))
        np.testing.assert_allclose(eval_u_points(sol, *rng.random((2, 50))), 0.0, atol=1e-13)

    def test_unit_w_with_strip_reaction(self):
        mesh = build_mesh(15, 15, FILTER_GEOMETRY)
        sol = make_solution(mesh, 1, 1.0, constant_velocity(1.0, 0.0), reaction(0.5, mesh=mesh))
        u = eval_u_points(sol, np.array([0.5, 0.5, 0.5]), np.array([0.5, 0.2, 0.9]))
        np.testing.assert_allclose(u, [0.5, 0.0, 0.0], atol=1e-14)

    def test_bit_identical_repeat(self, filter_q2_30, rng):
        sol = filter_q2_30.sol
        cells = rng.integers(0, sol.mesh.ncells, 200)
        local = rng.random((200, 2))
        a = eval_u(sol, cells, local)
        b = eval_u(sol, cells, local)
        assert np.array_equal(a, b)


class TestVoxelize:
    def test_constant_field(self, one_d):
        vox = voxelize(one_d, 16, 4)
        assert vox.values.shape == (4, 16)
        np.testing.assert_allclose(vox.values, 1.0, atol=1e-12)

    def test_q1_is_midpoint(self, filter_q1_15):
        sol = filter_q1_15.sol
        vox = voxelize(sol, 30, 30, q=1)
        xc, yc = vox.centers()
        np.testing.assert_allclose(vox.values, eval_u_points(sol, xc, yc), atol=1e-14)

    def test_parent_is_mean_of_children(self, rng):
        mesh = build_mesh(3, 3, CHANNEL_GEOMETRY)
        sol = make_solution(mesh, 1, 0.0, constant_velocity(1.0, 0.5), ConstantField(0.3))
        sol.w.coeffs[:] = rng.standard_normal(sol.w.space.ndofs)
        coarse = voxelize(sol, 6, 6, q=2).values
        fine = voxelize(sol, 12, 12, q=2).values
        parents = fine.reshape(6, 2, 6, 2).mean(axis=(1, 3))
        np.testing.assert_allclose(coarse, parents, atol=1e-14)

    def test_quadrature_order_independent_for_polynomial_u(self, filter_q2_30):
        sol = filter_q2_30.sol
        a = voxelize(sol, 60, 60, q=4).values
        b = voxelize(sol, 60, 60, q=5).values
        np.testing.assert_allclose(a, b, atol=1e-13)

    def test_non_divisible(self, filter_q1_15):
        with pytest.raises(ValueError, match="refine"):
            voxelize(filter_q1_15.sol, 20, 30)


class TestTrace:
    def test_one_d_trace_is_one(self, one_d):
        tr = outflow_trace(one_d)
        np.testing.assert_allclose(tr.values, 1.0, atol=1e-12)
        assert qoi_outflow_flux(one_d) == pytest.approx(1.0, abs=1e-12)

    def test_zero_solution(self):
        mesh = build_mesh(15, 15, FILTER_GEOMETRY)
        sol = make_solution(mesh, 1, 0.0, constant_velocity(1.0, 0.0), ConstantField(0.0))
        assert np.all(outflow_trace(sol).values == 0.0)
        assert qoi_outflow_flux(sol) == 0.0

    def test_trace_equals_w_on_outflow(self, filter_q2_30):
        sol = filter_q2_30.sol
        tr = outflow_trace(sol)
        np.testing.assert_allclose(tr.values, sol.w(tr.x[..., 0], tr.x[..., 1]), rtol=0, atol=1e-15)
        assert np.all(sol.mesh.facet_label[tr.facets] == Label.OUT)

    def test_filter_trace_undershoot_small(self, filter_q2_30, capsys):
        tr = outflow_trace(filter_q2_30.sol)
        with capsys.disabled():
            print(f"\nfilter Q2 h=1/30 outflow trace minimum {tr.values.min():.3e}")
        assert tr.values.min() >= -0.05

    def test_conservation_without_reaction(self):
        p = pipeline(60, 1, c0=0.0)
        loading = inflow_loading(p.mesh, p.b, p.g)
        flux = qoi_outflow_flux(p.sol)
        assert abs(flux - loading) <= 0.02 * loading


class TestErrors:
    def test_identical_is_zero(self, one_d):
        assert l2_error_volume(one_d, lambda x, y: np.ones_like(x)) < 1e-12

    def test_unit_against_zero(self, one_d):
        assert l2_error_volume(one_d, lambda x, y: np.zeros_like(x)) == pytest.approx(1.0, abs=1e-12)

    def test_refined_quadrature_grid(self, one_d):
        assert l2_error_volume(one_d, lambda x, y: np.zeros_like(x), (16, 4)) == pytest.approx(1.0, abs=1e-12)
        with pytest.raises(ValueError):
            l2_error_volume(one_d, lambda x, y: x, (6, 1))

    def test_manufactured_error_decreases(self):
        errors = []
        for n in (8, 16, 32):
            mesh, system = one_d_problem(n, 1, c=1.0)
            sol = solve_ultraweak(system, tol=1e-13)
            errors.append(l2_error_volume(sol, lambda x, y: np.exp(-x), q=4))
        assert errors[0] > errors[1] > errors[2]

    def test_trial_norm_combines_parts(self, one_d):
        zero = lambda x, y: np.zeros_like(x)  # noqa: E731
        vol = l2_error_volume(one_d, zero)
        tr = trace_error(one_d, zero)
        assert tr == pytest.approx(1.0, abs=1e-12)
        assert x_error(one_d, zero) == pytest.approx(np.hypot(vol, tr))
