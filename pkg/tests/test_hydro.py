import numpy as np
import pytest

from wecpark.errors import HydroDataError
from wecpark.hydro import (
    DeviceGeometry,
    SurrogateParams,
    check_no_overlap,
    excitation_force,
    excitation_forces,
    hydrostatic_stiffness,
    incident_amplitudes,
    load_hydro_db,
    synthetic_hydro,
    write_hydro_db,
)
from wecpark.waves import (
    DirectionSample,
    SpectrumParams,
    SpreadingParams,
    WaveClimate,
    build_spectral_grid,
)


def make_device(x=0.0, y=0.0, radius=2.5, draft=0.5):
    rho, g = 1025.0, 9.81
    mass = rho * np.pi * radius**2 * draft + 2560.0
    stiffness = hydrostatic_stiffness(radius, rho, g) + 4000.0
    return DeviceGeometry(x=x, y=y, radius=radius, draft=draft,
                          mass=mass, stiffness=stiffness)


def make_grid(n_bins=8):
    climate = WaveClimate(components=((SpectrumParams(hs=1.53, fp=1 / 5.83),
                                       SpreadingParams(theta0=0.0, beta=5.0)),),
                          depth=50.0)
    return build_spectral_grid(climate, n_bins=n_bins)


GRID = make_grid()


class TestHydrostaticStiffness:
    def test_reference_value(self):
        assert hydrostatic_stiffness(2.5, 1025.0, 9.81) == pytest.approx(1.974e5, rel=1e-3)

    def test_quadratic_in_radius(self):
        k1 = hydrostatic_stiffness(2.0, 1025.0, 9.81)
        k2 = hydrostatic_stiffness(4.0, 1025.0, 9.81)
        assert k2 == pytest.approx(4.0 * k1, rel=1e-14)

    def test_case1_combined_stiffness(self):
        k = hydrostatic_stiffness(2.5, 1025.0, 9.81) + 4000.0
        assert k == pytest.approx(2.014e5, rel=1e-3)


class TestGeometry:
    def test_rejects_overlap(self):
        devices = [make_device(0.0, 0.0), make_device(4.0, 0.0)]
        with pytest.raises(ValueError, match="overlap"):
            check_no_overlap(devices)

    def test_rejects_bad_dimensions(self):
        with pytest.raises(ValueError):
            make_device(radius=-1.0)
        with pytest.raises(ValueError):
            make_device(draft=0.0)


class TestSurrogate:
    def test_single_device_damping_positive(self):
        db = synthetic_hydro([make_device()], GRID)
        assert db.radiation_damping.shape == (GRID.n_freq, 1, 1)
        assert np.all(db.radiation_damping > 0)

    def test_damping_peak_location(self):
        dev = make_device()
        db = synthetic_hydro([dev], GRID, SurrogateParams(peak_omega=1.2,
                                                          damping_scale=5000.0))
        b = db.radiation_damping[:, 0, 0]
        # bell shape: below peak value everywhere, rises then falls around 1.2
        assert np.all(b <= 5000.0 + 1e-9)

    def test_far_devices_decouple(self):
        near = synthetic_hydro([make_device(0, 0), make_device(30, 0)], GRID)
        far = synthetic_hydro([make_device(0, 0), make_device(5000.0, 0)], GRID)
        assert np.max(np.abs(far.added_mass[:, 0, 1])) < \
            0.1 * np.max(np.abs(near.added_mass[:, 0, 1]))
        assert np.max(np.abs(far.radiation_damping[:, 0, 1])) < \
            0.1 * np.max(np.abs(near.radiation_damping[:, 0, 1]))

    def test_symmetry_and_psd(self):
        devices = [make_device(0, 0), make_device(20, 0), make_device(10, 15)]
        db = synthetic_hydro(devices, GRID)
        for q in range(GRID.n_freq):
            a, b = db.added_mass[q], db.radiation_damping[q]
            assert np.array_equal(a, a.T)
            assert np.array_equal(b, b.T)
            assert np.linalg.eigvalsh(b)[0] >= -1e-10 * np.linalg.norm(b)

    def test_arc_layout_clip_perturbation_small(self):
        # 15 devices on two concentric arcs; PSD clipping must stay a small
        # correction relative to the assembled damping matrix
        devices = []
        for i, ang in enumerate(np.linspace(-0.6, 0.6, 8)):
            devices.append(make_device(40 * np.cos(ang), 40 * np.sin(ang)))
        for ang in np.linspace(-0.5, 0.5, 7):
            devices.append(make_device(60 * np.cos(ang), 60 * np.sin(ang)))
        grid = make_grid(n_bins=12)
        xs = np.array([d.x for d in devices])
        ys = np.array([d.y for d in devices])
        dist = np.hypot(xs[:, None] - xs, ys[:, None] - ys)
        db = synthetic_hydro(devices, grid)
        from scipy.special import j0
        from wecpark.hydro import _diag_damping, _surrogate_scales
        a_inf, b0, w0, _ = _surrogate_scales(devices, SurrogateParams(),
                                             grid.density, grid.gravity)
        for q in range(grid.n_freq):
            bd = _diag_damping(grid.omega[q], b0, w0)
            raw = np.sqrt(np.outer(bd, bd)) * j0(grid.wavenumber[q] * dist)
            np.fill_diagonal(raw, bd)
            delta = np.linalg.norm(db.radiation_damping[q] - raw)
            assert delta < 0.05 * np.linalg.norm(raw)

    def test_reciprocity_shape_exact_for_isolated_device(self):
        db = synthetic_hydro([make_device()], GRID)
        f = np.abs(db.excitation_ref[:, 0])
        b = db.radiation_damping[:, 0, 0]
        ratio = f**2 * GRID.omega**2 / (b * GRID.gravity**2)
        assert np.max(np.abs(ratio - ratio[0])) < 1e-9 * ratio[0]

    def test_rejects_coincident_devices(self):
        with pytest.raises(ValueError):
            synthetic_hydro([make_device(0, 0), make_device(0, 0)], GRID)


class TestIncidentAmplitudes:
    def test_device_at_origin(self):
        eta = incident_amplitudes([make_device()], GRID,
                                  DirectionSample(angles=np.array([0.7])))
        assert np.allclose(eta[:, 0], GRID.amplitude)

    def test_unit_modulus_phase(self):
        devices = [make_device(10, -5), make_device(-20, 30)]
        eta = incident_amplitudes(devices, GRID,
                                  DirectionSample(angles=np.array([1.1])))
        assert np.allclose(np.abs(eta), GRID.amplitude[:, None])

    def test_translation_phase_identity(self):
        theta = 0.35
        d0 = [make_device(3.0, 7.0)]
        d1 = [make_device(3.0 + 12.0, 7.0)]
        s = DirectionSample(angles=np.array([theta]))
        eta0 = incident_amplitudes(d0, GRID, s)
        eta1 = incident_amplitudes(d1, GRID, s)
        shift = np.exp(1j * GRID.wavenumber * 12.0 * np.cos(theta))
        assert np.allclose(eta1[:, 0], eta0[:, 0] * shift)


class TestExcitation:
    def test_origin_phase_is_unity(self):
        dev = [make_device()]
        db = synthetic_hydro(dev, GRID)
        for theta in (0.0, 1.2, -2.0):
            f = excitation_forces(db, dev, GRID, DirectionSample(angles=np.array([theta])))
            assert np.allclose(f[:, 0], GRID.amplitude * db.excitation_ref[:, 0])

    def test_mirror_devices_same_force_at_zero_angle(self):
        devices = [make_device(5.0, 12.0), make_device(5.0, -12.0)]
        db = synthetic_hydro(devices, GRID)
        f = excitation_forces(db, devices, GRID, DirectionSample(angles=np.array([0.0])))
        assert np.allclose(f[:, 0], f[:, 1])

    def test_perpendicular_incidence_phase(self):
        y = 9.0
        devices = [make_device(0.0, y)]
        db = synthetic_hydro(devices, GRID)
        q = 3
        f = excitation_force(db, devices, GRID, q,
                             DirectionSample(angles=np.array([np.pi / 2])))
        expected = GRID.amplitude[q] * db.excitation_ref[q, 0] \
            * np.exp(1j * GRID.wavenumber[q] * y)
        assert f[0] == pytest.approx(expected, rel=1e-12)

    def test_rotation_equivariance(self):
        rot = 0.8
        devices = [make_device(10, 0), make_device(0, 14)]

        def rotated(dev, ang):
            c, s = np.cos(ang), np.sin(ang)
            return make_device(c * dev.x - s * dev.y, s * dev.x + c * dev.y)

        db = synthetic_hydro(devices, GRID)
        dev_r = [rotated(d, rot) for d in devices]
        db_r = synthetic_hydro(dev_r, GRID)
        f = excitation_forces(db, devices, GRID, DirectionSample(angles=np.array([0.3])))
        f_r = excitation_forces(db_r, dev_r, GRID,
                                DirectionSample(angles=np.array([0.3 + rot])))
        assert np.allclose(np.abs(f), np.abs(f_r))
        assert np.allclose(f, f_r, rtol=1e-9)


class TestHydroFile:
    def test_round_trip(self, tmp_path):
        devices = [make_device(0, 0), make_device(18, 4)]
        db = synthetic_hydro(devices, GRID)
        path = tmp_path / "coeffs.csv"
        write_hydro_db(db, devices, path)
        loaded = load_hydro_db(path, GRID, 2)
        assert np.allclose(loaded.added_mass, db.added_mass, atol=1e-12)
        assert np.allclose(loaded.radiation_damping, db.radiation_damping, atol=1e-12)
        assert np.allclose(loaded.excitation_ref, db.excitation_ref, atol=1e-10)

    def test_small_asymmetry_symmetrized(self, tmp_path):
        devices = [make_device(0, 0), make_device(18, 4)]
        db = synthetic_hydro(devices, GRID)
        a = db.added_mass.copy()
        a[:, 0, 1] *= 1.0 + 1e-7
        path = tmp_path / "coeffs.csv"
        write_hydro_db(
            db.__class__(omega=db.omega, added_mass=a,
                         radiation_damping=db.radiation_damping,
                         excitation_ref=db.excitation_ref),
            devices, path)
        loaded = load_hydro_db(path, GRID, 2)
        for q in range(GRID.n_freq):
            assert np.array_equal(loaded.added_mass[q], loaded.added_mass[q].T)

    def test_large_asymmetry_rejected(self, tmp_path):
        devices = [make_device(0, 0), make_device(18, 4)]
        db = synthetic_hydro(devices, GRID)
        a = db.added_mass.copy()
        a[:, 0, 1] *= 1.5
        path = tmp_path / "coeffs.csv"
        write_hydro_db(
            db.__class__(omega=db.omega, added_mass=a,
                         radiation_damping=db.radiation_damping,
                         excitation_ref=db.excitation_ref),
            devices, path)
        with pytest.raises(HydroDataError, match="asymmetric"):
            load_hydro_db(path, GRID, 2)

    def test_indefinite_damping_rejected(self, tmp_path):
        devices = [make_device(0, 0), make_device(18, 4)]
        db = synthetic_hydro(devices, GRID)
        b = db.radiation_damping.copy()
        b[:, 0, 0] = -0.01 * np.linalg.norm(b[0])
        path = tmp_path / "coeffs.csv"
        write_hydro_db(
            db.__class__(omega=db.omega, added_mass=db.added_mass,
                         radiation_damping=b, excitation_ref=db.excitation_ref),
            devices, path)
        with pytest.raises(HydroDataError, match="eigenvalue"):
            load_hydro_db(path, GRID, 2)

    def test_missing_frequency_rejected(self, tmp_path):
        devices = [make_device()]
        small = make_grid(n_bins=4)
        db = synthetic_hydro(devices, small)
        path = tmp_path / "coeffs.csv"
        write_hydro_db(db, devices, path)
        with pytest.raises(HydroDataError, match="no coefficient rows"):
            load_hydro_db(path, make_grid(n_bins=6), 1)


class TestTabulatedExcitation:
    def _write_table(self, path, db, grid, thetas, devices):
        import csv as _csv
        with open(path, "w", newline="") as fh:
            w = _csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", "omega", "device", "f_mag", "f_phase"])
            for t in thetas:
                f = excitation_forces(db, devices, grid,
                                      DirectionSample(angles=np.array([t])))
                unit = f / grid.amplitude[:, None]  # per meter of amplitude
                for q, om in enumerate(grid.omega):
                    for dev in range(len(devices)):
                        w.writerow([repr(float(t)), repr(float(om)), dev,
                                    repr(float(abs(unit[q, dev]))),
                                    repr(float(np.angle(unit[q, dev])))])

    def test_interpolation_matches_plane_wave_model(self, tmp_path):
        devices = [make_device(0, 0), make_device(12, 6)]
        db = synthetic_hydro(devices, GRID)
        coeff = tmp_path / "coeffs.csv"
        table = tmp_path / "table.csv"
        write_hydro_db(db, devices, coeff)
        thetas = np.linspace(-0.5, 0.5, 81)
        self._write_table(table, db, GRID, thetas, devices)
        loaded = load_hydro_db(coeff, GRID, 2, excitation_table_path=table)
        assert loaded.mode == "tabulated-by-angle"
        probe = DirectionSample(angles=np.array([0.173]))
        f_tab = excitation_forces(loaded, devices, GRID, probe)
        f_ref = excitation_forces(db, devices, GRID, probe)
        assert np.allclose(f_tab, f_ref, rtol=2e-3)

    def test_out_of_range_angle_rejected(self, tmp_path):
        devices = [make_device()]
        db = synthetic_hydro(devices, GRID)
        coeff = tmp_path / "coeffs.csv"
        table = tmp_path / "table.csv"
        write_hydro_db(db, devices, coeff)
        self._write_table(table, db, GRID, np.linspace(-0.3, 0.3, 21), devices)
        loaded = load_hydro_db(coeff, GRID, 1, excitation_table_path=table)
        with pytest.raises(ValueError, match="tabulated range"):
            excitation_forces(loaded, devices, GRID,
                              DirectionSample(angles=np.array([0.9])))
