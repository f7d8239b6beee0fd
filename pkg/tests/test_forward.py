from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest

from crackscat import forward
from crackscat.core.errors import DimensionError, DomainError
from crackscat.dataset import sample_geometry_and_support
from crackscat.forward import (
    CrackGeometry,
    DensityVector,
    ExcitationParams,
    ObservationSet,
    QuadratureGrid,
    SupportInterval,
)
from crackscat.specfun import hankel1_0
from crackscat.spectral import leading_subspace

K = 1.5


def _unit(v):
    return v / np.linalg.norm(v)


@pytest.fixture
def straight():
    return CrackGeometry(0.0, 0.0), SupportInterval(0.0, 2.0)


@pytest.fixture
def tilted():
    return CrackGeometry(0.4, -0.3), SupportInterval(0.2, 1.8)


class TestGeometry:
    def test_crack_point_examples(self, straight):
        geom, support = straight
        np.testing.assert_allclose(forward.crack_point(geom, support, 0.0), [0.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(forward.crack_point(geom, support, math.pi / 2), [1.0, 0.0], atol=1e-15)
        turned = CrackGeometry(-math.pi / 2, 0.5)
        np.testing.assert_allclose(forward.crack_point(turned, support, math.pi / 2), [0.5, -1.0], atol=1e-15)

    def test_frame_is_orthonormal(self, tilted):
        geom, _ = tilted
        assert abs(geom.tau @ geom.normal) < 1e-15
        assert abs(np.linalg.norm(geom.tau) - 1) < 1e-15
        assert abs(np.linalg.norm(geom.normal) - 1) < 1e-15

    def test_admissibility(self):
        assert CrackGeometry(-math.pi / 2, 1.0).is_admissible()
        assert not CrackGeometry(math.pi / 2, 0.0).is_admissible()
        with pytest.raises(DomainError):
            CrackGeometry(0.0, 1.5).validate()
        with pytest.raises(DomainError):
            SupportInterval(0.0, 4.0).validate()

    def test_min_distance_straight(self, straight):
        geom, support = straight
        assert forward.min_distance_to_circle(geom, support, ObservationSet()) == pytest.approx(3.0)

    def test_min_distance_worst_case(self):
        d = forward.min_distance_to_circle(CrackGeometry(0.0, 1.0), SupportInterval(1.0, 3.0), ObservationSet())
        assert d >= 1.29
        assert d == pytest.approx(4.0 - math.sqrt(2.5**2 + 1.0))

    def test_min_distance_over_samples(self, rng):
        obs = ObservationSet()
        for _ in range(10_000):
            geom, support = sample_geometry_and_support(rng)
            assert forward.min_distance_to_circle(geom, support, obs) >= 1.29

    def test_observation_points_on_circle(self):
        obs = ObservationSet()
        np.testing.assert_allclose(np.linalg.norm(obs.points, axis=1), 4.0, rtol=1e-15)
        assert obs.angles[-1] == pytest.approx(2 * math.pi)


class TestQuadratureGrid:
    def test_trapezoid_integrates_constant(self):
        grid = QuadratureGrid(10)
        assert grid.weights[0] == grid.weights[-1] == 0.5
        assert grid.step * grid.weights.sum() == pytest.approx(math.pi)
        assert grid.nodes[0] == pytest.approx(-math.pi / 2)
        assert grid.nodes[-1] == pytest.approx(math.pi / 2)

    def test_midpoint_avoids_tips(self):
        grid = QuadratureGrid(64, "midpoint")
        assert grid.nodes.min() > -math.pi / 2
        assert grid.nodes.max() < math.pi / 2
        np.testing.assert_allclose(grid.nodes, -grid.nodes[::-1], atol=1e-15)

    def test_bad_grid(self):
        with pytest.raises(DomainError):
            QuadratureGrid(1)
        with pytest.raises(DomainError):
            QuadratureGrid(8, "simpson")  # type: ignore[arg-type]

    def test_density_length_checked(self):
        with pytest.raises(DimensionError):
            DensityVector(np.zeros(3, complex), QuadratureGrid(10))


class TestForwardMatrix:
    def test_default_shape(self, straight):
        A = forward.assemble_forward_matrix(*straight, QuadratureGrid(), ObservationSet())
        assert A.shape == (40, 10)

    def test_reflection_symmetry(self, straight):
        A = forward.assemble_forward_matrix(*straight, QuadratureGrid(), ObservationSet()).entries
        n = A.shape[0]
        # angle 2*pi*i/N mirrors to 2*pi*(N - i)/N
        for r in range(n - 1):
            np.testing.assert_allclose(A[r], A[n - 2 - r], rtol=0, atol=1e-14)

    def test_single_entry(self, tilted):
        geom, support = tilted
        grid, obs = QuadratureGrid(), ObservationSet()
        A = forward.assemble_forward_matrix(geom, support, grid, obs)
        y = forward.crack_point(geom, support, grid.nodes[4])
        r = float(np.linalg.norm(obs.points[0] - y))
        scale = 0.5 * support.l * math.pi / 9
        expected = grid.weights[4] * 0.25j * complex(mpmath.hankel1(0, K * r)) * scale
        assert abs(A.entries[0, 4] - expected) < 1e-12

    def test_scale_flag(self, tilted):
        grid, obs = QuadratureGrid(), ObservationSet()
        scaled = forward.assemble_forward_matrix(*tilted, grid, obs, include_scale=True).entries
        bare = forward.assemble_forward_matrix(*tilted, grid, obs, include_scale=False).entries
        np.testing.assert_allclose(scaled, bare * (0.5 * 1.8 * math.pi / 9), rtol=1e-14)

    def test_flip_invariance(self, tilted):
        geom, support = tilted
        grid, obs = QuadratureGrid(), ObservationSet()
        A = forward.assemble_forward_matrix(geom, support, grid, obs).entries
        B = forward.assemble_forward_matrix(geom.flipped(), support.reversed(), grid, obs).entries
        np.testing.assert_allclose(B[:, ::-1], A, rtol=0, atol=1e-14)


class TestForwardApply:
    def test_zero_and_one_hot(self, tilted):
        A = forward.assemble_forward_matrix(*tilted, QuadratureGrid(), ObservationSet())
        assert not np.any(forward.forward_apply(A, np.zeros(10, complex)))
        e = np.zeros(10, complex)
        e[3] = 1
        np.testing.assert_array_equal(forward.forward_apply(A, e), A.entries[:, 3])

    def test_linearity(self, tilted, rng):
        A = forward.assemble_forward_matrix(*tilted, QuadratureGrid(), ObservationSet())
        p1 = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        p2 = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        alpha = 0.7 - 1.3j
        lhs = forward.forward_apply(A, alpha * p1 + p2)
        rhs = alpha * forward.forward_apply(A, p1) + forward.forward_apply(A, p2)
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-14)

    def test_density_vector_accepted(self, tilted):
        grid = QuadratureGrid()
        A = forward.assemble_forward_matrix(*tilted, grid, ObservationSet())
        psi = DensityVector(np.ones(10, complex), grid)
        np.testing.assert_allclose(forward.forward_apply(A, psi), A.entries.sum(axis=1))

    def test_dimension_mismatch(self, tilted):
        A = forward.assemble_forward_matrix(*tilted, QuadratureGrid(), ObservationSet())
        with pytest.raises(DimensionError):
            forward.forward_apply(A, np.ones(9))
        with pytest.raises(DimensionError):
            forward.forward_apply(A, DensityVector(np.ones(12, complex), QuadratureGrid(12)))


def _fd_matrices(geom, support, grid, obs, h=1e-6):
    def A(theta, a):
        return forward.assemble_forward_matrix(CrackGeometry(theta, a), support, grid, obs).entries

    d_theta = (A(geom.theta + h, geom.a) - A(geom.theta - h, geom.a)) / (2 * h)
    d_a = (A(geom.theta, geom.a + h) - A(geom.theta, geom.a - h)) / (2 * h)
    return d_theta, d_a


class TestDerivatives:
    def _check(self, geom, support):
        grid, obs = QuadratureGrid(), ObservationSet()
        d_theta, d_a = forward.derivative_matrices(geom, support, grid, obs)
        fd_theta, fd_a = _fd_matrices(geom, support, grid, obs)
        for exact, approx in ((d_theta.entries, fd_theta), (d_a.entries, fd_a)):
            assert np.abs(exact - approx).max() <= 1e-6 * np.abs(exact).max()

    def test_against_finite_differences(self, tilted):
        self._check(*tilted)

    def test_zero_theta_column_at_centre(self):
        geom, support = CrackGeometry(0.3, 0.0), SupportInterval(0.0, 2.0)
        d_theta, d_a = forward.derivative_matrices(geom, support, QuadratureGrid(11), ObservationSet())
        # node 5 of 11 sits at t = 0, where dy/dtheta = n*t - a*tau vanishes
        assert np.abs(d_theta.entries[:, 5]).max() < 1e-12
        assert np.abs(d_a.entries[:, 5]).max() > 0

    def test_random_geometries(self, rng):
        for _ in range(20):
            self._check(*sample_geometry_and_support(rng))


class TestIncidentField:
    def test_plane_wave(self):
        params = ExcitationParams.plane_wave(0.0)
        assert forward.incident_field(params, [0.0, 0.0]) == 1.0
        assert abs(forward.incident_field(params, [2 * math.pi / K, 0.0]) - 1.0) < 1e-12

    def test_point_source(self):
        params = ExcitationParams.point_source((3.0, 0.0))
        assert params.case == forward.Excitation.NearSource
        value = forward.incident_field(params, [0.0, 0.0])
        assert value == 0.25j * hankel1_0(4.5)
        assert abs(value - 0.25j * complex(mpmath.hankel1(0, 4.5))) < 1e-12

    def test_far_source_case(self):
        assert ExcitationParams.point_source((6.0, 0.0)).case == forward.Excitation.FarSource

    def test_at_source_rejected(self):
        with pytest.raises(DomainError):
            forward.incident_field(ExcitationParams.point_source((3.0, 0.0)), [3.0, 0.0])

    def test_forcing_has_no_incident_field(self):
        assert not np.any(forward.incident_field(ExcitationParams.forcing(), np.ones((4, 2))))

    def test_source_range_checked(self):
        with pytest.raises(DomainError):
            ExcitationParams.point_source((4.0, 0.0), case=2).validate()
        with pytest.raises(DomainError):
            ExcitationParams(forward.Excitation.PlaneWave, direction=(2.0, 0.0)).validate()


class TestDensityHelpers:
    def test_upsample_reproduces_low_modes(self):
        grid = QuadratureGrid(16, "midpoint")
        f = lambda g: np.cos(2 * (math.pi / 2 - g.nodes)) + 0.5j * np.cos(5 * (math.pi / 2 - g.nodes))
        fine = forward.upsample_density(DensityVector(f(grid), grid), 4)
        assert fine.grid.count == 64
        np.testing.assert_allclose(fine.values, f(fine.grid), atol=1e-12)

    def test_upsample_needs_midpoint_grid(self):
        with pytest.raises(DomainError):
            forward.upsample_density(DensityVector(np.ones(10, complex), QuadratureGrid(10)), 2)

    def test_case4_density(self, straight):
        grid = QuadratureGrid(64, "midpoint")
        psi = forward.density_case4(*straight, grid)
        t = np.sin(grid.nodes)
        np.testing.assert_allclose(psi.values, (t - 1j) * np.cos(grid.nodes), atol=1e-15)


def _normalized(d):
    return d / np.linalg.norm(d)


class TestBie:
    def test_residual(self, tilted):
        geom, support = tilted
        params = ExcitationParams.plane_wave(0.3)
        psi = forward.solve_bie(geom, support, lambda p: -forward.incident_field(params, p), n_dense=256)
        assert psi.residual <= 1e-6
        assert psi.grid.count == 256

    def test_manufactured_solution(self, tilted):
        geom, support = tilted
        S, grid = forward.single_layer_matrix(geom, support, 128)
        phi = math.pi / 2 - grid.nodes
        exact = DensityVector(1.0 + 0.3 * np.cos(phi) - 0.4j * np.cos(2 * phi), grid)
        psi = forward.solve_bie(geom, support, S @ exact.values, n_dense=128)
        obs = ObservationSet()
        got = forward.scattered_field(geom, support, psi, obs.points)
        want = forward.scattered_field(geom, support, exact, obs.points)
        A = forward.assemble_forward_matrix(geom, support, QuadratureGrid(), obs, include_scale=False)
        left, _, _ = leading_subspace(A, 5)
        err = np.linalg.norm(left.conj().T @ (got - want)) / np.linalg.norm(left.conj().T @ want)
        assert err <= 5e-2

    def test_self_convergence(self, tilted):
        params = ExcitationParams.plane_wave(1.1)
        coarse = forward.forward_data_for_case(params, *tilted, n_dense=128)
        fine = forward.forward_data_for_case(params, *tilted, n_dense=256)
        assert np.abs(_normalized(coarse) - _normalized(fine)).max() <= 1e-3

    def test_boundary_condition(self, tilted):
        """Interior nodes only: the density is tip-singular, so 1e-3 off the ends the error grows to a few percent."""
        geom, support = tilted
        params = ExcitationParams.plane_wave(0.0)
        psi = forward.case_density(params, geom, support)
        nodes = psi.grid.nodes[64:193:16]
        on = forward.crack_point(geom, support, nodes)
        for side in (1.0, -1.0):
            pts = on + side * 1e-3 * geom.normal
            us = forward.scattered_field(geom, support, psi, pts)
            ui = forward.incident_field(params, pts)
            assert np.all(np.abs(us + ui) <= 0.01 * np.abs(ui))

    def test_rotation_equivariance(self, tilted):
        geom, support = tilted
        rho = 0.7
        base = forward.forward_data_for_case(ExcitationParams.plane_wave(0.2), geom, support)
        turned = forward.forward_data_for_case(
            ExcitationParams.plane_wave(0.2).rotated(rho), geom.rotated(rho), support, ObservationSet(rotation=rho)
        )
        assert np.abs(turned - base).max() <= 1e-6 * np.abs(base).max()

    def test_default_rule_is_panel(self, tilted):
        params = ExcitationParams.plane_wave(0.5)
        default = forward.forward_data_for_case(params, *tilted)
        panel = forward.forward_data_for_case(params, *tilted, log_rule="panel")
        np.testing.assert_allclose(default, panel, rtol=1e-12)
        S_default, _ = forward.single_layer_matrix(*tilted, 64)
        S_panel, _ = forward.single_layer_matrix(*tilted, 64, log_rule="panel")
        np.testing.assert_array_equal(S_default, S_panel)

    def test_product_rule_agrees(self, tilted):
        params = ExcitationParams.plane_wave(0.5)
        panel = forward.forward_data_for_case(params, *tilted)
        product = forward.forward_data_for_case(params, *tilted, log_rule="product")
        assert np.abs(_normalized(product) - _normalized(panel)).max() <= 5e-2

    def test_case4_data_is_forward_image(self, straight):
        data = forward.forward_data_for_case(ExcitationParams.forcing(), *straight, n_dense=128)
        psi = forward.density_case4(*straight, QuadratureGrid(128, "midpoint"))
        np.testing.assert_allclose(data, forward.scattered_field(*straight, psi, ObservationSet().points))

    def test_too_few_nodes(self, tilted):
        with pytest.raises(DomainError):
            forward.solve_bie(*tilted, np.ones(32), n_dense=32)

    def test_data_shape_checked(self, tilted):
        with pytest.raises(DimensionError):
            forward.solve_bie(*tilted, np.ones(100), n_dense=64)

    def test_unknown_log_rule(self, tilted):
        with pytest.raises(DomainError):
            forward.single_layer_matrix(*tilted, 64, log_rule="galerkin")  # type: ignore[arg-type]


class TestTotalField:
    def test_matches_observation_data(self, tilted):
        params = ExcitationParams.point_source((0.0, 6.0))
        obs = ObservationSet()
        data = forward.forward_data_for_case(params, *tilted, obs)
        total, inc, masked = forward.total_field_at(params, *tilted, obs.points)
        assert not masked.any()
        np.testing.assert_allclose(total - inc, data, rtol=1e-10, atol=1e-14)

    def test_near_crack_is_quiet(self, tilted):
        geom, support = tilted
        params = ExcitationParams.plane_wave(0.0)
        v = np.linspace(-1.0, 1.0, 7)
        pts = forward.crack_point(geom, support, v) + 5e-3 * geom.normal
        total, inc, masked = forward.total_field_at(params, geom, support, pts)
        assert not masked.any()
        assert np.abs(total).max() <= 5e-2 * np.abs(inc).max()

    def test_masking(self, straight):
        params = ExcitationParams.plane_wave(0.0)
        pts = np.array([[0.0, 0.0], [0.5, 5e-4], [-1.5, 0.0], [0.0, 2.0]])
        total, _, masked = forward.total_field_at(params, *straight, pts, n_dense=64)
        np.testing.assert_array_equal(masked, [True, True, False, False])
        assert np.isnan(total[:2]).all()
        assert np.isfinite(total[2:]).all()

    def test_scattered_field_nan_on_crack(self, straight):
        psi = forward.density_case4(*straight, QuadratureGrid(64, "midpoint"))
        assert np.isnan(forward.scattered_field(*straight, psi, [[0.2, 0.0]])[0])

    def test_decay_along_ray(self, straight):
        params = ExcitationParams.plane_wave(0.0)
        psi = forward.case_density(params, *straight)
        ray = _unit(np.array([math.cos(0.7), math.sin(0.7)]))
        us = forward.scattered_field(*straight, psi, np.outer([10.0, 20.0, 40.0], ray))
        mags = np.abs(us)
        assert mags[0] > mags[1] > mags[2]

    def test_grid(self, straight):
        field = forward.total_field_grid(ExcitationParams.point_source((6.0, 0.0)), *straight, extent=3.0, resolution=5, n_dense=64)
        assert field.total.shape == (5, 5)
        assert field.masked[2, 2]
        assert int(field.masked.sum()) == 1
        assert np.isfinite(field.total[~field.masked]).all()

    def test_grid_arguments(self, straight):
        with pytest.raises(DomainError):
            forward.total_field_grid(ExcitationParams.forcing(), *straight, resolution=1)
