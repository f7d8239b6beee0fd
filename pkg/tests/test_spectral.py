from __future__ import annotations

import logging
import math

import numpy as np
import pytest

from crackscat import spectral
from crackscat.core.errors import ConvergenceError, DimensionError, DomainError, ZeroDenominatorError
from crackscat.families import get_family
from crackscat.families.crack import CrackFamily
from crackscat.families.generic import BrokenFamily, Example1Family, Example2Family
from crackscat.forward import CrackGeometry, ObservationSet, QuadratureGrid, SupportInterval, assemble_forward_matrix
from crackscat.spectral import generic_example1, generic_example2, param_metric, svd


def _random_complex(rng, m, n):
    return rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))


def _check_svd(a):
    ss = svd(a)
    k = min(a.shape)
    assert ss.sigma.shape == (k,)
    assert np.all(np.diff(ss.sigma) <= 0)
    err = np.linalg.norm(a - ss.reconstruct()) / np.linalg.norm(a)
    assert err <= 1e-10
    np.testing.assert_allclose(ss.left.conj().T @ ss.left, np.eye(k), atol=1e-12)
    np.testing.assert_allclose(ss.right.conj().T @ ss.right, np.eye(k), atol=1e-12)
    return ss


def _projector(frame):
    return frame @ frame.conj().T


@pytest.fixture
def crack_matrix():
    A = assemble_forward_matrix(
        CrackGeometry(0.3, 0.2), SupportInterval(-0.4, 2.5), QuadratureGrid(), ObservationSet(), include_scale=False
    )
    return A


class TestSvd:
    def test_identity(self):
        ss = svd(np.eye(3))
        np.testing.assert_allclose(ss.sigma, [1, 1, 1], atol=1e-15)

    def test_padded_diagonal(self):
        a = np.zeros((5, 3))
        a[:3, :3] = np.diag([3.0, 2.0, 1.0])
        ss = svd(a)
        np.testing.assert_allclose(ss.sigma, [3, 2, 1], atol=1e-14)
        assert ss.rank == 3

    def test_unsorted_diagonal(self):
        ss = svd(np.diag([1.0, 5.0, 2.0]))
        np.testing.assert_allclose(ss.sigma, [5, 2, 1], atol=1e-14)

    @pytest.mark.parametrize("shape", [(40, 10), (10, 40), (64, 64), (256, 16), (7, 1), (1, 5)])
    def test_random(self, rng, shape):
        _check_svd(_random_complex(rng, *shape))

    def test_matches_lapack(self, rng):
        a = _random_complex(rng, 30, 12)
        np.testing.assert_allclose(svd(a).sigma, np.linalg.svd(a, compute_uv=False), rtol=1e-12)

    def test_rank_deficient(self, rng):
        a = np.outer(rng.standard_normal(8) + 1j, rng.standard_normal(4))
        ss = _check_svd(a)
        assert ss.rank == 1

    def test_zero_matrix(self):
        ss = svd(np.zeros((4, 3)))
        assert ss.rank == 0
        assert not np.any(ss.sigma)
        np.testing.assert_allclose(ss.left.conj().T @ ss.left, np.eye(3), atol=1e-15)

    def test_crack_matrix(self, crack_matrix):
        ss = _check_svd(crack_matrix.entries)
        # leading pair satisfies A r = sigma l
        np.testing.assert_allclose(
            crack_matrix.entries @ ss.right[:, 0], ss.sigma[0] * ss.left[:, 0], atol=1e-10 * ss.sigma[0]
        )

    def test_rejects_bad_input(self):
        with pytest.raises(DimensionError):
            svd(np.ones(3))
        with pytest.raises(DomainError):
            svd(np.array([[1.0, np.inf]]))

    def test_sweep_limit(self, rng, monkeypatch):
        monkeypatch.setattr(spectral, "MAX_SWEEPS", 1)
        with pytest.raises(ConvergenceError) as info:
            svd(_random_complex(rng, 6, 4))
        assert info.value.off_diagonal > 0

    def test_random_batch(self, rng):
        for _ in range(100):
            m, n = rng.integers(1, 257, size=2)
            _check_svd(_random_complex(rng, int(m), int(n)))


class TestLeadingSubspace:
    def test_full_rank_matches_svd(self, rng):
        a = _random_complex(rng, 12, 4)
        left, right, sigma = spectral.leading_subspace(a, 4)
        ss = svd(a)
        np.testing.assert_allclose(sigma, ss.sigma)
        np.testing.assert_allclose(_projector(left), _projector(ss.left), atol=1e-12)

    @pytest.mark.parametrize("scale", [0.5, 4.0, 1024.0])
    def test_scale_invariance(self, crack_matrix, scale):
        left, right, _ = spectral.leading_subspace(crack_matrix, 5)
        left2, right2, _ = spectral.leading_subspace(scale * crack_matrix.entries, 5)
        assert np.linalg.norm(_projector(left) - _projector(left2)) <= 1e-12
        assert np.linalg.norm(_projector(right) - _projector(right2)) <= 1e-12

    @pytest.mark.parametrize("scale", [1e-3, 3.7, 250.0])
    def test_scale_invariance_random(self, rng, scale):
        a = _random_complex(rng, 20, 8)
        left, right, _ = spectral.leading_subspace(a, 5)
        left2, right2, _ = spectral.leading_subspace(scale * a, 5)
        assert np.linalg.norm(_projector(left) - _projector(left2)) <= 1e-12
        assert np.linalg.norm(_projector(right) - _projector(right2)) <= 1e-12

    def test_spectrum_decays(self, crack_matrix):
        _, _, sigma = spectral.leading_subspace(crack_matrix, 6)
        assert sigma[4] / sigma[0] > 0
        assert sigma[5] / sigma[4] < 1

    def test_degenerate_gap_warns(self, caplog):
        with caplog.at_level(logging.WARNING, logger="crackscat.spectral"):
            spectral.leading_subspace(np.eye(3), 1)
        assert "Degenerate singular gap" in caplog.text

    def test_size_checked(self):
        with pytest.raises(DimensionError):
            spectral.leading_subspace(np.eye(3), 4)


class TestGenericExamples:
    def test_example1_single_column(self):
        np.testing.assert_array_equal(generic_example1((1.0, 1.0), 1), [[1.0], [1.0], [1.0]])

    def test_example1_layout(self):
        a = generic_example1((2.0, 1.0), 2)
        for j in range(2):
            assert a[j, j] == 2.0
            assert a[j + 2, j] == 1.0
            assert a[j + 4, j] == 1.0
        assert np.count_nonzero(a) == 6

    def test_example2_singular_values(self):
        m1, m2 = 1.3, 1.7
        sigma = svd(generic_example2((m1, m2), 50)).sigma
        expected = math.sqrt(m1**2 + m2**2 + m2**4) / np.arange(1, 51)
        np.testing.assert_allclose(sigma, expected, rtol=0, atol=1e-10)

    def test_bad_sizes(self):
        with pytest.raises(DimensionError):
            generic_example1((1.0, 1.0), 0)
        with pytest.raises(DimensionError):
            generic_example2((1.0, 1.0), 0)


class TestParamMetric:
    def test_examples(self):
        assert param_metric((0.0, 0.0), (0.0, 0.0)) == 0.0
        assert param_metric((0.0, 0.5), (math.pi / 4, 0.5)) == pytest.approx(math.sqrt(2))

    def test_periodic_in_theta(self):
        eps = 1e-6
        assert param_metric((-math.pi / 2 + eps, 0.0), (math.pi / 2 - eps, 0.0)) < 1e-5

    def test_offset_part_is_euclidean(self):
        assert param_metric((0.2, -0.5), (0.2, 0.25)) == pytest.approx(0.75)


class TestStabilityRatio:
    def test_zero_denominator(self):
        family = Example1Family()
        u = np.array([1, 0, 0, 0], complex)
        with pytest.raises(ZeroDenominatorError):
            spectral.stability_ratio(family, (1.5, 1.5), (1.5, 1.5), u, u)

    def test_same_parameter_lower_bound(self, rng):
        family = CrackFamily()
        m = np.array([0.3, 0.2])
        u = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        u /= np.linalg.norm(u)
        ratio = spectral.stability_ratio(family, m, m, u, np.zeros(5))
        sigma = svd(family.matrix(m)).sigma
        assert ratio >= sigma[4] - 1e-12

    def test_shape_checked(self):
        with pytest.raises(DimensionError):
            spectral.stability_ratio(Example1Family(), (1, 1), (2, 2), np.ones(2), np.ones(3))

    def test_custom_metric(self):
        family = Example1Family()
        u = np.array([1, 0, 0, 0], complex)
        v = np.array([0, 1, 0, 0], complex)
        base = spectral.stability_ratio(family, (1.0, 1.0), (1.0, 1.0), u, v)
        other = spectral.stability_ratio(family, (1.0, 1.0), (1.0, 1.0), u, v, metric=lambda a, b: 10.0)
        # m = m' so the metric term is multiplied by ||v|| = 1
        assert other < base


class TestEstimator:
    def test_example1_positive(self):
        report = spectral.estimate_stability_constant(Example1Family(), n=4, sample_count=2000, seed=3)
        assert report.min_ratio > 0
        assert report.sample_count == 2000
        assert len(report.ratios) == 2000
        assert report.ratios[report.argmin_index] == report.min_ratio
        assert set(report.argmin) == {"m", "m_prime", "u", "v"}

    def test_deterministic_across_threads(self):
        family = Example2Family(n_max=10)
        a = spectral.estimate_stability_constant(family, n=3, sample_count=300, seed=11, threads=1)
        b = spectral.estimate_stability_constant(family, n=3, sample_count=300, seed=11, threads=4)
        assert a.ratios == b.ratios
        assert a.model_dump() == b.model_dump()

    def test_crack_family_positive(self):
        report = spectral.estimate_stability_constant(CrackFamily(), n=5, sample_count=200, seed=0)
        assert report.min_ratio > 0
        assert report.metric == "delta"

    def test_sample_count_checked(self):
        with pytest.raises(DomainError):
            spectral.estimate_stability_constant(Example1Family(), sample_count=0)

    def test_sweep_non_increasing(self):
        rows = spectral.stability_sweep(Example1Family(), range(1, 5), sample_count=300, seed=2)
        assert [r["n"] for r in rows] == [1, 2, 3, 4]
        mins = [r["min_ratio"] for r in rows]
        assert all(a >= b for a, b in zip(mins, mins[1:]))
        assert all(r["raw_min_ratio"] >= r["min_ratio"] for r in rows)

    @pytest.mark.slow
    def test_crack_family_full(self):
        report = spectral.estimate_stability_constant(CrackFamily(), n=5, sample_count=10_000, seed=0, threads=4)
        assert report.min_ratio > 0
        rows = spectral.stability_sweep(CrackFamily(), range(1, 9), sample_count=2000, seed=0, threads=4)
        mins = [r["min_ratio"] for r in rows]
        assert all(a >= b for a, b in zip(mins, mins[1:]))


class TestU2:
    def test_example1(self):
        family = Example1Family()
        for m in ([1.0, 1.0], [1.5, 2.0], [2.0, 1.2]):
            assert spectral.u2_margin(family, m, [0.0, 1.0]) > 0
            assert spectral.u2_margin(family, m, [0.0, 1.0], n=2) > 0

    def test_broken_family(self):
        family = BrokenFamily()
        for q in ([1.0, 0.0], [0.0, 1.0], [0.6, 0.8]):
            assert spectral.u2_margin(family, [1.4, 1.1], q) <= 1e-10
            assert spectral.u2_margin(family, [1.4, 1.1], q, n=2) <= 1e-10

    def test_crack_endpoint_node_has_zero_velocity(self):
        # at a = 0 the support ends t = +-1 are quadrature nodes; along q = (1, 1)
        # one of them does not move, so the full block loses a column
        family = CrackFamily()
        q = [1.0, 1.0]
        assert spectral.u2_margin(family, [0.0, 0.0], q) <= 1e-10
        assert spectral.u2_margin(family, [0.0, 0.0], q, n=5) > 1e-9

    def test_crack_family_grid(self):
        low, rows = spectral.u2_sweep(CrackFamily(), per_axis=3, q_angles=4, n=5)
        assert len(rows) == 36
        assert low > 1e-9

    def test_crack_family_full_grid(self):
        low, rows = spectral.u2_sweep(CrackFamily(), per_axis=5, q_angles=8, threads=4, n=5)
        assert len(rows) == 200
        assert any(abs(r["m"][1]) < 1e-12 for r in rows)
        assert low > 1e-9

    def test_wide_block_is_zero(self):
        family = BrokenFamily(rows=3, cols=3)
        assert spectral.u2_margin(family, [1.0, 1.0], [1.0, 0.0]) == 0.0
        assert spectral.u2_margin(family, [1.0, 1.0], [1.0, 0.0], n=2) == 0.0

    def test_subspace_size_checked(self):
        with pytest.raises(DimensionError):
            spectral.u2_margin(Example1Family(), [1.0, 1.0], [0.0, 1.0], n=5)
        with pytest.raises(DimensionError):
            spectral.u2_margin(Example1Family(), [1.0, 1.0], [0.0, 1.0], n=0)

    def test_zero_direction(self):
        with pytest.raises(DomainError):
            spectral.u2_margin(Example1Family(), [1.0, 1.0], [0.0, 0.0])


class TestReports:
    def test_text_and_csv(self, tmp_path):
        report = spectral.estimate_stability_constant(get_family("example1"), n=2, sample_count=20, seed=0)
        text = spectral.report_to_text(report, ["command=verify-stability"])
        assert text.startswith("# command=verify-stability\n")
        assert "min_ratio=" in text
        assert "ratios=" not in text
        path = tmp_path / "ratios.csv"
        spectral.write_ratios_csv(report, str(path), ["seed=0"])
        lines = path.read_text().splitlines()
        assert lines[0] == "# seed=0"
        assert lines[1] == "sample,ratio"
        assert len(lines) == 22
