"""Orchestration: time grids, sweeps, validation report, noise knob."""

import numpy as np
import pytest

from rotecho.bath import LatticeSpec
from rotecho.dynamics import FieldConfig
from rotecho.errors import ValidationError
from rotecho.experiments import (
    TimeGridSpec,
    build_time_grid,
    run_field_sweep,
    run_rotation_sweep,
    run_simulation,
    run_validation,
)

SMALL_LATTICE = LatticeSpec(bath_radius_nm=1.6, exclusion_radius_nm=0.5)
COARSE_GRID = TimeGridSpec(dt_us=1.0, refine_dt_us=0.2)


class TestTimeGrid:
    def test_strictly_increasing_with_refinement(self):
        times = build_time_grid(TimeGridSpec(), revival_us=50.0)
        assert np.all(np.diff(times) > 0)
        assert times[0] == 0.0
        assert times[-1] >= 1.3 * 50.0
        # refined spacing inside the revival window
        window = (times >= 45.0) & (times <= 55.0)
        assert np.max(np.diff(times[window])) <= 0.05 + 1e-12

    def test_explicit_t_max(self):
        times = build_time_grid(TimeGridSpec(t_max_us=20.0, dt_us=0.5,
                                             refine_revivals=False), None)
        assert times[-1] == pytest.approx(20.0)
        np.testing.assert_allclose(np.diff(times), 0.5)

    def test_no_revival_needs_explicit_t_max(self):
        with pytest.raises(ValidationError, match="t_max"):
            build_time_grid(TimeGridSpec(), None)

    def test_multiple_revivals_refined(self):
        times = build_time_grid(TimeGridSpec(t_max_us=110.0), revival_us=50.0)
        for centre in (50.0, 100.0):
            window = (times >= centre * 0.95) & (times <= centre * 1.05)
            assert np.max(np.diff(times[window])) <= 0.05 + 1e-12

    def test_invalid_spacing(self):
        with pytest.raises(ValidationError):
            TimeGridSpec(dt_us=0.0)


class TestSimulation:
    def test_minimal_run(self):
        res = run_simulation(SMALL_LATTICE, FieldConfig(), COARSE_GRID,
                             n_real=1, base_seed=7)
        assert res.curve.values[0] == pytest.approx(1.0)
        assert res.revival_prediction_us == pytest.approx(50.447, abs=0.01)

    def test_deterministic(self):
        a = run_simulation(SMALL_LATTICE, FieldConfig(), COARSE_GRID, 3, 5)
        b = run_simulation(SMALL_LATTICE, FieldConfig(), COARSE_GRID, 3, 5)
        np.testing.assert_array_equal(a.curve.values, b.curve.values)

    def test_noise_is_seeded_and_scaled(self):
        a = run_simulation(SMALL_LATTICE, FieldConfig(), COARSE_GRID, 2, 5,
                           noise_sigma=0.05)
        b = run_simulation(SMALL_LATTICE, FieldConfig(), COARSE_GRID, 2, 5,
                           noise_sigma=0.05)
        clean = run_simulation(SMALL_LATTICE, FieldConfig(), COARSE_GRID, 2, 5)
        np.testing.assert_array_equal(a.curve.values, b.curve.values)
        resid = a.curve.values - clean.curve.values
        assert 0.02 < np.std(resid) < 0.10
        assert a.curve.metadata["noise_sigma"] == 0.05

    def test_jobs_identical(self):
        a = run_simulation(SMALL_LATTICE, FieldConfig(), COARSE_GRID, 6, 5,
                           jobs=1)
        b = run_simulation(SMALL_LATTICE, FieldConfig(), COARSE_GRID, 6, 5,
                           jobs=3)
        np.testing.assert_array_equal(a.curve.values, b.curve.values)


class TestRotationSweep:
    def test_duplicate_values_rejected(self):
        with pytest.raises(ValidationError, match="distinct"):
            run_rotation_sweep(SMALL_LATTICE, FieldConfig(), COARSE_GRID,
                               [0.0, 0.0], n_real=1, base_seed=1)

    def test_small_sweep_extracts_shift(self):
        res = run_rotation_sweep(SMALL_LATTICE, FieldConfig(), COARSE_GRID,
                                 [-4.0, 0.0, 4.0], n_real=20, base_seed=3)
        ok = [p for p in res.points if p.status == "ok"]
        assert len(ok) == 3
        assert res.line_fit is not None
        assert res.line_fit.params["slope"] == pytest.approx(1.0, abs=0.1)
        for p in ok:
            expected = abs(39.6455 + p.f_rot_khz)
            assert p.f13c_khz == pytest.approx(expected, rel=0.02)

    def test_points_parallel_identical(self):
        kwargs = dict(n_real=6, base_seed=3)
        a = run_rotation_sweep(SMALL_LATTICE, FieldConfig(), COARSE_GRID,
                               [-3.0, 3.0], jobs=1, **kwargs)
        b = run_rotation_sweep(SMALL_LATTICE, FieldConfig(), COARSE_GRID,
                               [-3.0, 3.0], jobs=2, **kwargs)
        for pa, pb in zip(a.points, b.points):
            np.testing.assert_array_equal(pa.curve.values, pb.curve.values)
            assert pa.f13c_khz == pb.f13c_khz

    def test_cancellation_point_recorded_missing(self):
        gamma = FieldConfig().gamma_n_khz_per_g
        cancel = 4.8 * gamma
        cfg = FieldConfig(b0_z_g=-4.8)
        res = run_rotation_sweep(SMALL_LATTICE, cfg,
                                 TimeGridSpec(t_max_us=60.0, dt_us=1.0),
                                 [cancel, cancel + 2.0], n_real=4, base_seed=1)
        statuses = {p.f_rot_khz: p.status for p in res.points}
        assert statuses[cancel] == "no_revival"


class TestFieldSweep:
    def test_needs_three_values(self):
        with pytest.raises(ValidationError):
            run_field_sweep(SMALL_LATTICE, FieldConfig(), COARSE_GRID,
                            [1.0, 2.0], n_real=1, base_seed=1)

    def test_identical_values_rejected(self):
        with pytest.raises(ValidationError, match="degenerate"):
            run_field_sweep(SMALL_LATTICE, FieldConfig(), COARSE_GRID,
                            [2.0, 2.0, 2.0], n_real=1, base_seed=1)

    def test_small_sweep_shapes(self):
        grid = TimeGridSpec(t_max_us=120.0, dt_us=1.0, refine_revivals=False)
        res = run_field_sweep(SMALL_LATTICE, FieldConfig(f_rot_khz=0.0), grid,
                              [2.0, 4.0, 8.0], n_real=12, base_seed=9,
                              collapse_fit_max_us=110.0)
        assert len(res.points) == 3
        for p in res.points:
            assert p.b0_z_g == pytest.approx(p.b_total_g)
            assert p.curve.values[0] == pytest.approx(1.0)

    def test_signed_field_range(self):
        # mixed-sign sweep spanning the cancellation: every point lands in
        # the table; unconverged collapse fits are flagged, not fatal
        grid = TimeGridSpec(t_max_us=110.0, dt_us=1.0, refine_revivals=False)
        res = run_field_sweep(SMALL_LATTICE, FieldConfig(f_rot_khz=0.0), grid,
                              [-1.34, 0.5, 2.0, 4.84], n_real=8, base_seed=4,
                              collapse_fit_max_us=100.0)
        assert [p.b_total_g for p in res.points] == [-1.34, 0.5, 2.0, 4.84]
        assert all(p.status in ("ok", "fit_failed") for p in res.points)

    def test_rotation_offset_shifts_static_field(self):
        grid = TimeGridSpec(t_max_us=60.0, dt_us=1.0, refine_revivals=False)
        cfg = FieldConfig(f_rot_khz=2.0)
        res = run_field_sweep(SMALL_LATTICE, cfg, grid, [3.0, 5.0, 7.0],
                              n_real=2, base_seed=9)
        for p in res.points:
            assert p.b0_z_g == pytest.approx(
                p.b_total_g - 2.0 / cfg.gamma_n_khz_per_g)


class TestValidation:
    def test_small_report_passes(self):
        report = run_validation(n_max=3, n_seeds=3, base_seed=11)
        assert report.passed
        assert report.product_max_dev < 1e-10
        assert report.cce_pair_max_dev < 1e-10
        assert set(report.per_size) == {0, 1, 2, 3}
        assert report.per_size[0] == 0.0

    def test_threshold_controls_pass(self):
        report = run_validation(n_max=1, n_seeds=1, base_seed=11,
                                threshold=1e-30)
        assert not report.passed
