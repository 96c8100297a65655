from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import reference_scenario
from leorelay.distribution import Convention, conditional_contact_cdf, contact_angle_domain
from leorelay.errors import CertainOutageError, DomainError
from leorelay.geometry import cap_full_area, cap_slice_area, overlap_split_root_solve
from leorelay.montecarlo import (
    McConfig,
    McEstimate,
    chunk_rng,
    empirical_cdf,
    empirical_cdf_from_samples,
    joint_std_errors,
    ks_statistic,
    multi_hop_outage_frequency,
    outage_frequency,
    overlap_area_estimate,
    place_ground_nodes,
    pooled_z_score,
    sample_cap,
    sample_unit_sphere,
    slice_area_estimate,
    trial_contact_angle,
    trial_contact_angles,
)
from leorelay.outage import multi_relay_outage

R_S = 6921.0
SLICE_EXACT_PI4_PI8_6921 = 11454839.7520922000863  # true slab-slice area, 30-digit quadrature


def exact_lens_fraction(r1: float, r2: float, c: float) -> float:
    """Share of the unit sphere inside two caps of half-angles r1, r2 at separation c."""
    if c >= r1 + r2:
        return 0.0
    if c <= abs(r1 - r2):
        return (1.0 - math.cos(min(r1, r2))) / 2.0

    def width(t: float) -> float:
        cos_w = (math.cos(r2) - math.cos(t) * math.cos(c)) / (math.sin(t) * math.sin(c))
        return math.acos(min(1.0, max(-1.0, cos_w)))

    area, _ = integrate.quad(lambda t: 2.0 * width(t) * math.sin(t), max(0.0, c - r2), r1, limit=200, epsabs=1e-14)
    return area / (4.0 * math.pi)


def within_sigma(estimate: float, expected: float, se: float, k: float = 4.0) -> bool:
    return abs(estimate - expected) <= k * se


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs", [{"trials": 0}, {"trials": 1.5}, {"trials": 10, "chunk_size": 0}, {"trials": 10, "seed": -1}, {"trials": 10, "seed": 2**64}]
    )
    def test_validation(self, kwargs):
        with pytest.raises(DomainError):
            McConfig(**kwargs)

    def test_chunks_cover_trials(self):
        assert McConfig(25, chunk_size=10).chunks() == [(0, 10), (1, 10), (2, 5)]

    def test_streams_differ(self):
        a = chunk_rng(1, 0).random(4)
        assert not np.array_equal(a, chunk_rng(1, 1).random(4))
        assert not np.array_equal(a, chunk_rng(1, 0, stream=1).random(4))
        np.testing.assert_array_equal(a, chunk_rng(1, 0).random(4))


SPHERE_N = 1_000_000


@pytest.fixture(scope="module")
def points():
    return sample_unit_sphere(chunk_rng(11, 0), SPHERE_N)


class TestSphereSampling:
    N = SPHERE_N

    def test_unit_norm(self, points):
        assert np.max(np.abs(np.linalg.norm(points, axis=1) - 1.0)) < 1e-12

    def test_centred(self, points):
        sigma = math.sqrt(1.0 / 3.0 / self.N)
        assert np.all(np.abs(points.mean(axis=0)) < 4 * sigma)

    def test_second_moment(self, points):
        z2 = points[:, 2] ** 2
        sigma = z2.std() / math.sqrt(self.N)
        assert within_sigma(z2.mean(), 1.0 / 3.0, sigma)

    @pytest.mark.parametrize("alpha", [0.1, math.pi / 8, 1.0, 2.5])
    def test_cap_measure(self, points, alpha):
        p = (1.0 - math.cos(alpha)) / 2.0
        frac = np.mean(points[:, 2] >= math.cos(alpha))
        assert within_sigma(frac, p, math.sqrt(p * (1 - p) / self.N))


class TestCapSampling:
    def test_stays_inside_and_is_uniform(self):
        half = 0.6
        pts = sample_cap(chunk_rng(2, 0), 400_000, half, center_polar=0.9)
        centre = np.array([math.sin(0.9), 0.0, math.cos(0.9)])
        ang = np.arccos(np.clip(pts @ centre, -1, 1))
        assert np.all(ang <= half + 1e-12)
        # fraction within a smaller concentric cap follows the area ratio
        p = (1 - math.cos(0.3)) / (1 - math.cos(half))
        assert within_sigma(np.mean(ang <= 0.3), p, math.sqrt(p * (1 - p) / len(pts)))

    def test_whole_sphere(self):
        pts = sample_cap(chunk_rng(2, 1), 1000, math.pi)
        assert np.min(pts[:, 2]) < -0.9


class TestGroundNodes:
    @pytest.mark.parametrize("d,angle", [(0.0, 0.0), (3000.0, 0.475346338383796672560), (2 * 6371.0, math.pi)])
    def test_separation(self, d, angle):
        tx, rx = place_ground_nodes(reference_scenario(distance_km=d))
        got = math.atan2(np.linalg.norm(np.cross(tx, rx)), tx @ rx)
        assert got == pytest.approx(angle, abs=1e-12)

    def test_coincident(self):
        tx, rx = place_ground_nodes(reference_scenario(distance_km=0.0))
        np.testing.assert_array_equal(tx, rx)


class TestTrials:
    def test_full_visibility_is_unconditional_contact_law(self):
        sc = reference_scenario(theta_m1_rad=2 * math.pi, theta_m2_rad=2 * math.pi, distance_km=0.0, n_sat=50)
        samples = trial_contact_angles(sc, McConfig(20_000, seed=1))
        assert np.all(np.isfinite(samples))
        cdf = lambda t: 1 - (1 - (1 - np.cos(t)) / 2) ** 50  # noqa: E731
        assert stats.kstest(samples, cdf).pvalue > 1e-3

    def test_single_satellite_outage_is_lens_complement(self):
        sc = reference_scenario(theta_m1_rad=0.3, theta_m2_rad=0.3, distance_km=500.0, n_sat=1)
        est = outage_frequency(sc, McConfig(400_000, seed=2))
        p = 1.0 - exact_lens_fraction(0.15, 0.15, sc.separation_rad)
        assert within_sigma(est.estimate, p, math.sqrt(p * (1 - p) / est.trials))

    def test_outage_matches_exact_lens_law(self):
        sc = reference_scenario(n_sat=200)
        est = outage_frequency(sc, McConfig(100_000, seed=4))
        p = (1.0 - exact_lens_fraction(math.pi / 8, math.pi / 8, sc.separation_rad)) ** 200
        assert pooled_z_score(est, p) < 4

    def test_batch_sampler_matches_brute_force(self):
        sc = reference_scenario(n_sat=200)
        rng = np.random.default_rng(3)
        brute = np.array([trial_contact_angle(sc, rng) for _ in range(4000)])
        batch = trial_contact_angles(sc, McConfig(40_000, seed=3))
        finite = lambda a: np.where(np.isinf(a), 10.0, a)  # noqa: E731
        assert stats.ks_2samp(finite(brute), finite(batch)).pvalue > 1e-3

    def test_angles_lie_in_domain(self, scenario):
        samples = trial_contact_angles(scenario.replace(n_sat=100), McConfig(20_000, seed=5))
        dom = contact_angle_domain(scenario)
        finite = samples[np.isfinite(samples)]
        assert np.all((finite >= dom.lower_rad) & (finite <= dom.upper_rad))

    def test_disjoint_caps_always_outage(self):
        sc = reference_scenario(theta_m1_rad=0.2, theta_m2_rad=0.2)
        assert outage_frequency(sc, McConfig(1000)).estimate == 1.0

    def test_covering_caps_never_outage(self):
        sc = reference_scenario(theta_m1_rad=2 * math.pi, theta_m2_rad=2 * math.pi, n_sat=1)
        assert outage_frequency(sc, McConfig(1000)).estimate == 0.0

    def test_worker_count_does_not_matter(self, scenario):
        mc = McConfig(35_000, seed=9, chunk_size=4_000)
        one = trial_contact_angles(scenario, mc, workers=1)
        np.testing.assert_array_equal(one, trial_contact_angles(scenario, mc, workers=4))
        np.testing.assert_array_equal(one, trial_contact_angles(scenario, mc, workers=3))


class TestEmpiricalCdf:
    def test_single_trial_is_a_step(self, scenario):
        grid = contact_angle_domain(scenario).grid(50)
        curve = empirical_cdf(scenario, McConfig(1, seed=1), grid)
        assert set(np.unique(curve.probability)) <= {0.0, 1.0}
        assert curve.probability[-1] == 1.0

    def test_error_shrinks_with_root_n(self, scenario):
        th = np.array([0.12])
        small = empirical_cdf(scenario, McConfig(20_000, seed=1), th).std_error[0]
        large = empirical_cdf(scenario, McConfig(80_000, seed=1), th).std_error[0]
        assert large / small == pytest.approx(0.5, rel=0.05)

    def test_outages_never_count(self):
        samples = np.array([0.1, np.inf, 0.2, np.inf])
        d = empirical_cdf_from_samples(samples, [0.15, 1.0])
        n = empirical_cdf_from_samples(samples, [0.15, 1.0], convention=Convention.NORMALIZED)
        np.testing.assert_array_equal(d.probability, [0.25, 0.5])
        np.testing.assert_array_equal(n.probability, [0.5, 1.0])

    def test_normalized_needs_a_relay(self):
        with pytest.raises(CertainOutageError):
            empirical_cdf_from_samples(np.full(5, np.inf), [0.1], convention="normalized")

    def test_reproducible(self, scenario):
        grid = contact_angle_domain(scenario).grid(20)
        a = empirical_cdf(scenario, McConfig(5000, seed=3), grid)
        b = empirical_cdf(scenario, McConfig(5000, seed=3), grid, workers=2)
        np.testing.assert_array_equal(a.probability, b.probability)


class TestMultiHop:
    def test_one_hop_equals_single(self, scenario):
        mc = McConfig(20_000, seed=4)
        sc = scenario.replace(n_sat=100)
        assert multi_hop_outage_frequency(sc, 1, mc) == outage_frequency(sc, mc)

    @pytest.mark.parametrize("n_hops", [2, 3])
    def test_independent_hops_follow_product_form(self, n_hops):
        # exact per-hop lens in place of the projected one
        sc = reference_scenario(distance_km=6000.0, n_sat=60)
        route = multi_relay_outage(sc, n_hops)
        hop_c = sc.separation_rad / n_hops
        assert route.hop_distance_km == pytest.approx(2 * 6371 * math.sin(hop_c / 2))
        hop_out = (1 - exact_lens_fraction(math.pi / 8, math.pi / 8, hop_c)) ** 60
        expected = 1 - (1 - hop_out) ** n_hops
        est = multi_hop_outage_frequency(sc, n_hops, McConfig(100_000, seed=5))
        assert pooled_z_score(est, expected) < 4

    def test_shared_constellation_runs(self):
        sc = reference_scenario(distance_km=6000.0, n_sat=60)
        est = multi_hop_outage_frequency(sc, 3, McConfig(2000, seed=5), shared_constellation=True)
        assert 0.0 < est.estimate < 1.0

    def test_hop_count_validated(self, scenario):
        with pytest.raises(DomainError):
            multi_hop_outage_frequency(scenario, 0, McConfig(10))


class TestAreas:
    def test_zero_width_slice(self):
        assert slice_area_estimate(math.pi / 4, 0.0, R_S, McConfig(1000)).estimate == 0.0

    def test_whole_sphere(self):
        sc = reference_scenario(theta_m1_rad=2 * math.pi, theta_m2_rad=2 * math.pi)
        for trials in (1, 17, 1000):
            est = overlap_area_estimate(sc, math.pi, McConfig(trials))
            assert est.estimate == pytest.approx(4 * math.pi * R_S**2, rel=1e-15)
            assert est.std_error == 0.0

    def test_cap_is_unbiased_against_sphere_bound(self):
        mc = McConfig(1_000_000, seed=8)
        cap = slice_area_estimate(1.0, 0.4, 1.0, mc)
        sphere = slice_area_estimate(1.0, 0.4, 1.0, mc, bounding="sphere")
        assert abs(cap.estimate - sphere.estimate) < 4 * float(joint_std_errors([cap.std_error], [sphere.std_error])[0])

    def test_half_cap_against_exact_area(self):
        est = slice_area_estimate(math.pi / 4, math.pi / 8, R_S, McConfig(10_000_000, seed=1))
        assert within_sigma(est.estimate, SLICE_EXACT_PI4_PI8_6921, est.std_error)
        rel = cap_slice_area(math.pi / 4, math.pi / 8, R_S) / est.estimate - 1.0
        assert -0.02 < rel < -0.018

    def test_overlap_against_exact_lens(self, scenario):
        for th in (0.12, 0.2, 0.35):
            est = overlap_area_estimate(scenario, th, McConfig(200_000, seed=2))
            exact = exact_lens_fraction(th, math.pi / 8, scenario.separation_rad) * 4 * math.pi * R_S**2
            assert within_sigma(est.estimate, exact, est.std_error)

    @pytest.mark.parametrize("theta", [0.12, 0.2, 0.3])
    def test_radial_slices_partition_the_lens(self, scenario, theta):
        split = overlap_split_root_solve(2 * theta, math.pi / 4, scenario.separation_rad)
        o1, o2 = split.clamped_angles()
        lens = overlap_area_estimate(scenario, theta, McConfig(400_000, seed=5))
        a = slice_area_estimate(2 * theta, o1, R_S, McConfig(400_000, seed=6), cut="radial")
        b = slice_area_estimate(math.pi / 4, o2, R_S, McConfig(400_000, seed=7), cut="radial")
        se = float(joint_std_errors([lens.std_error], [math.hypot(a.std_error, b.std_error)])[0])
        assert abs(lens.estimate - a.estimate - b.estimate) <= 4 * se

    def test_bad_region_arguments(self):
        with pytest.raises(DomainError):
            slice_area_estimate(1.0, 1.5, 1.0, McConfig(10))
        with pytest.raises(DomainError):
            slice_area_estimate(1.0, 0.5, 1.0, McConfig(10), cut="diagonal")  # type: ignore[arg-type]
        with pytest.raises(DomainError):
            overlap_area_estimate(reference_scenario(), -0.1, McConfig(10))

    def test_full_width_slice_is_the_cap(self):
        est = slice_area_estimate(math.pi / 4, math.pi / 4, R_S, McConfig(1000))
        assert est.estimate == cap_full_area(math.pi / 4, R_S)


class TestStatistics:
    def test_ks_matches_scipy_for_proper_cdf(self):
        samples = chunk_rng(4, 0).uniform(size=500)
        ours = ks_statistic(samples, lambda x: x, normalized=True)
        assert ours == pytest.approx(stats.kstest(samples, "uniform").statistic, abs=1e-12)

    def test_defective_ks_counts_outage_mass(self):
        samples = np.array([0.5, np.inf])
        # model puts 0.5 mass on [0, 1] and the rest on outage
        stat = ks_statistic(samples, lambda x: 0.5 * x, cdf_sup=0.5)
        assert stat == pytest.approx(0.5 - 0.25)

    def test_ks_reference_config_small(self, scenario):
        samples = trial_contact_angles(scenario, McConfig(50_000, seed=3))
        top = conditional_contact_cdf(scenario, contact_angle_domain(scenario).upper_rad)
        stat = ks_statistic(samples, lambda x: conditional_contact_cdf(scenario, x), cdf_sup=top)
        assert stat < 0.05

    def test_pooled_z(self):
        assert pooled_z_score(McEstimate(0.0, 0.0, 100, 0), 0.0) == 0.0
        assert pooled_z_score(McEstimate(0.0, 0.0, 100, 0), 0.01) == pytest.approx(0.01 / math.sqrt(0.0099 / 100))
        assert pooled_z_score(McEstimate(1.0, 0.0, 100, 0), 0.0) == math.inf
