import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdharvest import geometry, harvest
from crowdharvest.errors import FitFailureError, InvalidParameterError
from crowdharvest.propagation import ShadowingSpec, free_space_model, winner_urban_nlos_model
from crowdharvest.rng import substream

REGION = geometry.Region(7745.966692414834, 7745.966692414834)
MACRO = harvest.RatProfile(
    name="macro",
    bandwidth_hz=20e6,
    transmit_power_w=40.0,
    density_range_per_km2=(0.5, 5.0),
    spatial_process=geometry.PoissonProcess(),
    carrier_frequency_hz=2.1e9,
    min_link_distance_m=50.0,
)
LOS = free_space_model(2.1e9)
NLOS = winner_urban_nlos_model(2.1e9)


def make_deployment(xs, ys):
    return geometry.Deployment(
        np.asarray(xs, float), np.asarray(ys, float), len(xs) / REGION.area_km2,
        REGION, geometry.PoissonProcess(),
    )


@pytest.mark.parametrize(
    "kwargs",
    [
        {"bandwidth_hz": 0.0},
        {"transmit_power_w": -1.0},
        {"density_range_per_km2": (5.0, 0.5)},
        {"density_range_per_km2": (0.0, 5.0)},
        {"min_link_distance_m": 0.0},
    ],
)
def test_rat_profile_invariants(kwargs):
    base = dict(
        name="x",
        bandwidth_hz=20e6,
        transmit_power_w=40.0,
        density_range_per_km2=(0.5, 5.0),
        spatial_process=geometry.PoissonProcess(),
        carrier_frequency_hz=2.1e9,
    )
    base.update(kwargs)
    with pytest.raises(InvalidParameterError):
        harvest.RatProfile(**base)


class TestAggregatePower:
    def test_empty_deployment(self):
        dep = make_deployment([], [])
        report = harvest.aggregate_power((0.0, 0.0), dep, MACRO, LOS)
        assert report.total_power_w == 0.0
        assert report.nearest_fraction == 0.0

    def test_single_transmitter_full_buffer(self):
        dep = make_deployment([500.0], [500.0])
        report = harvest.aggregate_power((0.0, 0.0), dep, MACRO, LOS)
        assert report.nearest_fraction == 1.0
        assert report.total_power_w == pytest.approx(report.per_transmitter_w[0])

    def test_totals_are_sums(self):
        dep = make_deployment([100.0, 400.0, 900.0], [0.0, 0.0, 0.0])
        report = harvest.aggregate_power((0.0, 0.0), dep, MACRO, LOS)
        assert report.total_power_w == pytest.approx(float(report.per_transmitter_w.sum()))
        assert report.power_density_w_per_hz == pytest.approx(
            report.total_power_w / MACRO.bandwidth_hz
        )

    def test_nearest_fraction_bounds(self):
        dep = geometry.sample_ppp(5.0, REGION, 7)
        report = harvest.aggregate_power((100.0, 100.0), dep, MACRO, NLOS)
        assert 1.0 / dep.count <= report.nearest_fraction <= 1.0

    def test_additive_over_disjoint_deployments(self):
        dep_a = make_deployment([100.0, 300.0], [0.0, 0.0])
        dep_b = make_deployment([700.0, 1500.0], [0.0, 0.0])
        both = make_deployment([100.0, 300.0, 700.0, 1500.0], [0.0] * 4)
        probe = (0.0, 0.0)
        t_a = harvest.aggregate_power(probe, dep_a, MACRO, LOS).total_power_w
        t_b = harvest.aggregate_power(probe, dep_b, MACRO, LOS).total_power_w
        t_ab = harvest.aggregate_power(probe, both, MACRO, LOS).total_power_w
        assert t_ab == pytest.approx(t_a + t_b, rel=1e-12)

    def test_full_buffer_dominates_weighted(self):
        dep = geometry.sample_ppp(5.0, REGION, 9)
        rng = substream(5, "util")
        loads = rng.random(dep.count)
        full = harvest.aggregate_power((50.0, 50.0), dep, MACRO, LOS, 1.0)
        weighted = harvest.aggregate_power((50.0, 50.0), dep, MACRO, LOS, loads)
        assert np.all(weighted.per_transmitter_w <= full.per_transmitter_w + 1e-18)
        assert weighted.total_power_w <= full.total_power_w

    def test_distance_floor_applies(self):
        dep = make_deployment([1.0], [0.0])  # closer than the 50 m floor
        at_floor = make_deployment([50.0], [0.0])
        a = harvest.aggregate_power((0.0, 0.0), dep, MACRO, LOS)
        b = harvest.aggregate_power((0.0, 0.0), at_floor, MACRO, LOS)
        assert a.total_power_w == pytest.approx(b.total_power_w)

    def test_sensitivity_floor_zeroes_weak_links(self):
        dep = make_deployment([100.0, 3000.0], [0.0, 0.0])
        report = harvest.aggregate_power(
            (0.0, 0.0), dep, MACRO, LOS, sensitivity_floor_w=1e-9
        )
        assert np.count_nonzero(report.per_transmitter_w) == 1


class TestSweep:
    def test_single_point_single_trial_matches_direct_call(self):
        curve = harvest.upper_bound_sweep(
            MACRO, [5.0], LOS, trials=1, seed=21, region=REGION
        )
        rng = substream(21, "sweep", 0, 0)
        dep = geometry.sample_process(
            MACRO.spatial_process, 5.0, REGION, int(rng.integers(0, 2**63 - 1))
        )
        probe = REGION.sample_probe(rng)
        direct = harvest.aggregate_power(
            probe, dep, MACRO, LOS, 1.0, seed=int(rng.integers(0, 2**63 - 1))
        )
        assert curve.points[0].mean_power_w == pytest.approx(direct.total_power_w, rel=1e-12)

    def test_doubling_power_doubles_every_point(self):
        from dataclasses import replace

        grid = np.geomspace(0.5, 5.0, 4)
        base = harvest.upper_bound_sweep(MACRO, grid, LOS, 40, 3, region=REGION)
        double = harvest.upper_bound_sweep(
            replace(MACRO, transmit_power_w=80.0), grid, LOS, 40, 3, region=REGION
        )
        for p1, p2 in zip(base.points, double.points):
            assert p2.mean_power_w == 2.0 * p1.mean_power_w
            assert p2.median_power_w == 2.0 * p1.median_power_w
            assert p2.std_power_w == 2.0 * p1.std_power_w

    def test_curve_monotone_in_density(self):
        grid = np.geomspace(0.5, 5.0, 5)
        curve = harvest.upper_bound_sweep(MACRO, grid, LOS, 400, 17, region=REGION)
        med = curve.values("median_power_w")
        assert np.all(np.diff(med) > 0)

    def test_workers_do_not_change_results(self):
        grid = [1.0, 3.0]
        seq = harvest.upper_bound_sweep(MACRO, grid, LOS, 30, 5, region=REGION, workers=1)
        par = harvest.upper_bound_sweep(MACRO, grid, LOS, 30, 5, region=REGION, workers=4)
        for p1, p2 in zip(seq.points, par.points):
            assert p1 == p2

    def test_empty_grid_rejected(self):
        with pytest.raises(InvalidParameterError):
            harvest.upper_bound_sweep(MACRO, [], LOS, 10, 0, region=REGION)

    def test_csv_schema(self):
        curve = harvest.upper_bound_sweep(MACRO, [1.0], LOS, 5, 1, region=REGION)
        text = harvest.sweep_to_csv(curve)
        assert text.splitlines()[0] == "lambda_per_km2,mean_power_w,mean_density_w_per_hz,stddev_w"
        assert len(text.splitlines()) == 2


class TestScalingExponent:
    def test_exact_power_law(self):
        lam = np.geomspace(1.0, 100.0, 6)
        points = tuple(
            harvest.SweepPoint(d, d**2, d**2 / 1e6, 0.0, d**2, d**2 / 1e6, 1) for d in lam
        )
        curve = harvest.SweepCurve("synthetic", "", points)
        assert harvest.scaling_exponent(curve) == pytest.approx(2.0, abs=1e-9)

    def test_needs_four_points_and_a_decade(self):
        lam = np.array([1.0, 2.0, 3.0])
        points = tuple(harvest.SweepPoint(d, d, d, 0.0, d, d, 1) for d in lam)
        with pytest.raises(FitFailureError):
            harvest.scaling_exponent(harvest.SweepCurve("x", "", points))
        lam = np.array([1.0, 2.0, 3.0, 4.0])
        points = tuple(harvest.SweepPoint(d, d, d, 0.0, d, d, 1) for d in lam)
        with pytest.raises(FitFailureError):
            harvest.scaling_exponent(harvest.SweepCurve("x", "", points))

    def test_los_slope_near_one(self):
        grid = np.geomspace(0.5, 5.0, 5)
        curve = harvest.upper_bound_sweep(
            MACRO, grid, LOS, 300, 31, region=REGION, k_nearest=20
        )
        assert harvest.scaling_exponent(curve) == pytest.approx(1.0, abs=0.1)

    def test_nlos_slope_near_half_exponent(self):
        grid = np.geomspace(0.5, 5.0, 5)
        curve = harvest.upper_bound_sweep(
            MACRO, grid, NLOS, 300, 37, region=REGION, k_nearest=20
        )
        assert harvest.scaling_exponent(curve) == pytest.approx(2.15, abs=0.2)


class TestTrafficModels:
    def test_full_buffer(self):
        assert harvest.sample_utilization(harvest.FullBuffer(), substream(1, "u")) == 1.0

    def test_two_state_off(self):
        assert harvest.sample_utilization(harvest.TwoState(0.0), substream(1, "u")) == 0.0

    def test_two_state_probability(self):
        rng = substream(2, "u")
        draws = harvest.sample_utilization(harvest.TwoState(0.3), rng, size=100_000)
        assert np.mean(draws) == pytest.approx(0.3, abs=0.01)

    def test_uniform_empirical_mean(self):
        rng = substream(3, "u")
        draws = harvest.sample_utilization(harvest.EmpiricalPdf.uniform(), rng, size=100_000)
        assert np.mean(draws) == pytest.approx(0.5, abs=0.01)

    def test_pdf_must_integrate_to_one(self):
        grid = np.linspace(0, 1, 11)
        with pytest.raises(InvalidParameterError):
            harvest.EmpiricalPdf(grid, np.full(11, 2.0))

    def test_on_prob_bounds(self):
        with pytest.raises(InvalidParameterError):
            harvest.TwoState(1.5)


class TestConvolution:
    def test_single_pdf_identity(self):
        u = harvest.EmpiricalPdf.uniform(1e-2)
        assert harvest.convolve_load_pdfs([u], 1e-2) is u

    def test_two_uniforms_triangular(self):
        u = harvest.EmpiricalPdf.uniform(1e-3)
        tri = harvest.convolve_load_pdfs([u, u], 1e-3)
        x = tri.loads
        expected = np.where(x <= 1.0, x, 2.0 - x)
        assert np.max(np.abs(tri.densities - expected)) < 1e-3
        peak = np.argmax(tri.densities)
        assert x[peak] == pytest.approx(1.0, abs=2e-3)
        assert tri.densities[peak] == pytest.approx(1.0, abs=1e-3)

    def test_integral_preserved(self):
        u = harvest.EmpiricalPdf.uniform(1e-3)
        conv = harvest.convolve_load_pdfs([u, u, u], 1e-3)
        assert float(np.trapezoid(conv.densities, conv.loads)) == pytest.approx(1.0, abs=1e-4)
        assert conv.loads[-1] == pytest.approx(3.0)

    def test_three_fold_matches_monte_carlo(self):
        u = harvest.EmpiricalPdf.uniform(1e-3)
        conv = harvest.convolve_load_pdfs([u, u, u], 1e-3)
        rng = substream(8, "mc")
        sums = rng.random((1_000_000, 3)).sum(axis=1)
        bins = np.linspace(0.0, 3.0, 61)
        emp, _ = np.histogram(sums, bins=bins)
        emp = emp / emp.sum()
        analytic = np.empty(60)
        for i in range(60):
            sel = (conv.loads >= bins[i] - 1e-12) & (conv.loads <= bins[i + 1] + 1e-12)
            analytic[i] = np.trapezoid(conv.densities[sel], conv.loads[sel])
        analytic /= analytic.sum()
        tv = 0.5 * float(np.abs(analytic - emp).sum())
        assert tv < 0.01

    def test_mismatched_grids_rejected(self):
        u1 = harvest.EmpiricalPdf.uniform(1e-2)
        u2 = harvest.EmpiricalPdf.uniform(2e-2)
        with pytest.raises(InvalidParameterError):
            harvest.convolve_load_pdfs([u1, u2], 1e-2)
        with pytest.raises(InvalidParameterError):
            harvest.convolve_load_pdfs([u1, u1], 3e-3)


def test_nearest_share_study_reports_both_statistics():
    share, mean_fraction = harvest.nearest_share_study(
        MACRO, 5.0, NLOS, 400, 3, region=REGION, shadowing=ShadowingSpec(8.0)
    )
    assert 0.0 < mean_fraction < share <= 1.0


@given(st.floats(0.0, 1.0), st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_two_state_draws_are_binary(p, seed):
    value = harvest.sample_utilization(harvest.TwoState(p), substream(seed, "x"))
    assert value in (0.0, 1.0)
