"""Frequency-dependent hydrodynamic coefficients for the array: analytic
surrogate or ingestion of externally computed files, plus excitation forces
and incident-wave amplitudes at device centers."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import j0, y0

from .errors import HydroDataError
from .waves import DirectionSample, SpectralGrid

PLANE_WAVE_PHASE = "plane-wave-phase"
TABULATED_BY_ANGLE = "tabulated-by-angle"


@dataclass(frozen=True)
class DeviceGeometry:
    """A heaving cylindrical device: position, dimensions and mechanics.

    `mass` is the total oscillating mass (kg) and `stiffness` the combined
    hydrostatic + generator static stiffness (N/m).
    """

    x: float
    y: float
    radius: float
    draft: float
    mass: float
    stiffness: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        if self.draft <= 0:
            raise ValueError(f"draft must be > 0, got {self.draft}")
        if self.mass <= 0:
            raise ValueError(f"mass must be > 0, got {self.mass}")
        if self.stiffness <= 0:
            raise ValueError(f"stiffness must be > 0, got {self.stiffness}")


def check_no_overlap(devices: Sequence[DeviceGeometry]) -> None:
    for i in range(len(devices)):
        for j in range(i + 1, len(devices)):
            a, b = devices[i], devices[j]
            dist = np.hypot(a.x - b.x, a.y - b.y)
            if dist <= a.radius + b.radius:
                raise ValueError(
                    f"devices {i} and {j} overlap: center distance {dist:.3g} m "
                    f"<= radii sum {a.radius + b.radius:.3g} m"
                )


def hydrostatic_stiffness(radius: float, density: float, gravity: float) -> float:
    """Waterplane restoring stiffness rho g pi r^2 of a vertical cylinder."""
    if radius <= 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    return density * gravity * np.pi * radius**2


@dataclass(frozen=True)
class HydroDB:
    """Per-frequency added mass / radiation damping and the excitation model.

    added_mass, radiation_damping: arrays (n_freq, n_body, n_body).
    excitation_ref: complex reference amplitudes f_l(w) (n_freq, n_body), force
    per meter of incident wave amplitude, combined with the plane-wave phase at
    the device centers; or interpolated from an angle table in tabulated mode.
    """

    omega: np.ndarray
    added_mass: np.ndarray
    radiation_damping: np.ndarray
    excitation_ref: np.ndarray
    mode: str = PLANE_WAVE_PHASE
    table_theta: Optional[np.ndarray] = None
    table_mag: Optional[np.ndarray] = None  # (n_theta, n_freq, n_body)
    table_phase: Optional[np.ndarray] = None  # unwrapped along theta

    @property
    def n_body(self) -> int:
        return self.added_mass.shape[1]

    @property
    def n_freq(self) -> int:
        return self.omega.size


@dataclass(frozen=True)
class SurrogateParams:
    """Scales of the analytic coefficient model (per device or shared).

    added_mass_scale a_inf (kg), damping_scale b0 (kg/s) and damping-peak
    frequency peak_omega (rad/s); excitation_scale multiplies the calibrated
    excitation magnitude. Any None is filled from the device geometry.
    """

    added_mass_scale: Optional[float] = None
    damping_scale: Optional[float] = None
    peak_omega: Optional[float] = None
    excitation_scale: float = 1.0


def _surrogate_scales(devices: Sequence[DeviceGeometry], params: SurrogateParams,
                      density: float, gravity: float):
    n = len(devices)
    radius = np.array([d.radius for d in devices])
    draft = np.array([d.draft for d in devices])
    displaced = density * np.pi * radius**2 * draft
    a_inf = np.full(n, params.added_mass_scale) \
        if params.added_mass_scale is not None else 0.5 * displaced
    w0 = np.full(n, params.peak_omega) \
        if params.peak_omega is not None else np.sqrt(gravity / radius)
    b0 = np.full(n, params.damping_scale) \
        if params.damping_scale is not None else 0.25 * w0 * displaced
    # calibrated so |f(w0)| equals the hydrostatic force scale rho g pi r^2
    calib = params.excitation_scale * density * np.pi * radius**2 * w0 / np.sqrt(b0)
    return a_inf, b0, w0, calib


def _diag_added_mass(omega, a_inf, w0):
    x = omega / w0
    return a_inf * (1.0 + 1.0 / (1.0 + x**2))


def _diag_damping(omega, b0, w0):
    x = omega / w0
    return b0 * x**3 * np.exp(1.5 * (1.0 - x**2))


def synthetic_hydro(devices: Sequence[DeviceGeometry], grid: SpectralGrid,
                    params: SurrogateParams = SurrogateParams()) -> HydroDB:
    """Analytic stand-in for a radiation/diffraction solve.

    Diagonal terms are bell-shaped in frequency; cross terms follow the
    cylindrical-spreading pattern sqrt(B_ll B_mm) J0(k d) for damping and
    -sqrt(B_ll B_mm)/w Y0(k d) for added mass. Damping matrices are projected
    onto the PSD cone by eigenvalue clipping, which keeps every admissible
    impedance matrix invertible.
    """
    n = len(devices)
    check_no_overlap(devices)
    xs = np.array([d.x for d in devices])
    ys = np.array([d.y for d in devices])
    dist = np.hypot(xs[:, None] - xs[None, :], ys[:, None] - ys[None, :])
    if np.any(dist[~np.eye(n, dtype=bool)] < 1e-6):
        raise ValueError("device centers closer than 1e-6 m")

    a_inf, b0, w0, calib = _surrogate_scales(devices, params, grid.density,
                                             grid.gravity)
    nf = grid.n_freq
    added = np.zeros((nf, n, n))
    damping = np.zeros((nf, n, n))
    excitation = np.zeros((nf, n), dtype=complex)
    for q in range(nf):
        w = grid.omega[q]
        k = grid.wavenumber[q]
        ad = _diag_added_mass(w, a_inf, w0)
        bd = _diag_damping(w, b0, w0)
        sqrt_bb = np.sqrt(np.outer(bd, bd))
        off = ~np.eye(n, dtype=bool)
        b_mat = np.diag(bd)
        a_mat = np.diag(ad)
        if n > 1:
            b_mat[off] = (sqrt_bb * j0(k * np.where(off, dist, 1.0)))[off]
            a_mat[off] = (-sqrt_bb / w * y0(k * np.where(off, dist, 1.0)))[off]
        damping[q] = _clip_psd(b_mat)
        added[q] = 0.5 * (a_mat + a_mat.T)
        excitation[q] = calib * np.sqrt(bd) * grid.gravity / w
    return HydroDB(omega=grid.omega.copy(), added_mass=added,
                   radiation_damping=damping, excitation_ref=excitation)


def _clip_psd(mat: np.ndarray) -> np.ndarray:
    """Project a symmetric matrix onto the PSD cone by clipping eigenvalues."""
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    if vals[0] >= 0:
        return sym
    clipped = (vecs * np.maximum(vals, 0.0)) @ vecs.T
    return 0.5 * (clipped + clipped.T)


def _enforce_db_invariants(omega, added, damping) -> tuple[np.ndarray, np.ndarray]:
    """Symmetrize A (error above 1e-6 relative asymmetry) and validate B."""
    out_a = np.empty_like(added)
    out_b = np.empty_like(damping)
    for q in range(omega.size):
        a = added[q]
        scale = max(np.linalg.norm(a), 1e-300)
        if np.linalg.norm(a - a.T) > 1e-6 * scale:
            raise HydroDataError(
                f"added-mass matrix at omega={omega[q]:.6g} is asymmetric "
                f"beyond 1e-6 relative"
            )
        out_a[q] = 0.5 * (a + a.T)
        b = 0.5 * (damping[q] + damping[q].T)
        if np.linalg.norm(damping[q] - damping[q].T) > 1e-6 * max(np.linalg.norm(b), 1e-300):
            raise HydroDataError(
                f"radiation-damping matrix at omega={omega[q]:.6g} is asymmetric "
                f"beyond 1e-6 relative"
            )
        norm = np.linalg.norm(b)
        min_eig = np.linalg.eigvalsh(b)[0] if b.size else 0.0
        if min_eig < -1e-6 * max(norm, 1e-300):
            raise HydroDataError(
                f"radiation-damping matrix at omega={omega[q]:.6g} has eigenvalue "
                f"{min_eig:.3g} below the PSD tolerance (non-physical input)"
            )
        out_b[q] = _clip_psd(b) if min_eig < 0 else b
    return out_a, out_b


_MATRIX_FIELDS = ("omega", "row", "col", "A", "B")
_EXC_FIELDS = ("omega", "device", "f_mag", "f_phase")


def load_hydro_db(path, grid: SpectralGrid, n_devices: int,
                  excitation_table_path=None) -> HydroDB:
    """Read hydrodynamic coefficients from the columnar CSV interchange format.

    Matrix rows carry (omega, row, col, A, B); excitation rows carry
    (omega, device, f_mag, f_phase). File frequencies must match the scenario
    grid to 1e-9 relative. An optional second file tabulates the excitation
    against wave angle (adds a theta column) and switches the model to
    magnitude/unwrapped-phase interpolation.
    """
    entries_mat: dict[float, list] = {}
    entries_exc: dict[float, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise HydroDataError(f"{path}: empty coefficient file")
        for line_no, row in enumerate(reader, start=2):
            has_mat = all(row.get(k) not in (None, "") for k in ("row", "col", "A", "B"))
            has_exc = all(row.get(k) not in (None, "") for k in ("device", "f_mag", "f_phase"))
            if has_mat == has_exc:
                raise HydroDataError(
                    f"{path}:{line_no}: row must fill exactly one of the "
                    f"matrix fields {_MATRIX_FIELDS[1:]} or excitation fields "
                    f"{_EXC_FIELDS[1:]}"
                )
            w = float(row["omega"])
            if has_mat:
                entries_mat.setdefault(w, []).append(
                    (int(row["row"]), int(row["col"]), float(row["A"]), float(row["B"])))
            else:
                entries_exc.setdefault(w, []).append(
                    (int(row["device"]), float(row["f_mag"]), float(row["f_phase"])))

    def match(w_grid: float, table: dict) -> float:
        for w in table:
            if abs(w - w_grid) <= 1e-9 * max(abs(w_grid), 1.0):
                return w
        raise HydroDataError(
            f"{path}: no coefficient rows for grid frequency omega={w_grid!r}")

    nf, nb = grid.n_freq, n_devices
    added = np.zeros((nf, nb, nb))
    damping = np.zeros((nf, nb, nb))
    excitation = np.zeros((nf, nb), dtype=complex)
    exc_seen = np.zeros((nf, nb), dtype=bool)
    for q, w_grid in enumerate(grid.omega):
        w = match(w_grid, entries_mat)
        seen = np.zeros((nb, nb), dtype=bool)
        for i, j, a, b in entries_mat[w]:
            if not (0 <= i < nb and 0 <= j < nb):
                raise HydroDataError(f"{path}: matrix index ({i},{j}) out of range")
            added[q, i, j] = a
            damping[q, i, j] = b
            seen[i, j] = True
        if not seen.all():
            raise HydroDataError(
                f"{path}: incomplete matrix at omega={w!r} "
                f"({int(seen.sum())}/{nb * nb} entries)")
        if excitation_table_path is None:
            we = match(w_grid, entries_exc)
            for dev, mag, phase in entries_exc[we]:
                if not 0 <= dev < nb:
                    raise HydroDataError(f"{path}: device index {dev} out of range")
                excitation[q, dev] = mag * np.exp(1j * phase)
                exc_seen[q, dev] = True
    if excitation_table_path is None:
        if not exc_seen.all():
            raise HydroDataError(f"{path}: missing excitation reference rows")
        added, damping = _enforce_db_invariants(grid.omega, added, damping)
        return HydroDB(omega=grid.omega.copy(), added_mass=added,
                       radiation_damping=damping, excitation_ref=excitation)

    thetas, mag, phase = _load_excitation_table(excitation_table_path, grid, nb)
    added, damping = _enforce_db_invariants(grid.omega, added, damping)
    return HydroDB(omega=grid.omega.copy(), added_mass=added,
                   radiation_damping=damping, excitation_ref=excitation,
                   mode=TABULATED_BY_ANGLE, table_theta=thetas,
                   table_mag=mag, table_phase=phase)


def _load_excitation_table(path, grid: SpectralGrid, nb: int):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.DictReader(fh), start=2):
            try:
                rows.append((float(row["theta"]), float(row["omega"]),
                             int(row["device"]), float(row["f_mag"]),
                             float(row["f_phase"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise HydroDataError(f"{path}:{line_no}: bad excitation table row"
                                     ) from exc
    thetas = np.array(sorted({r[0] for r in rows}))
    if thetas.size < 2:
        raise HydroDataError(f"{path}: angle table needs at least two angles")
    mag = np.full((thetas.size, grid.n_freq, nb), np.nan)
    phase = np.full((thetas.size, grid.n_freq, nb), np.nan)
    w_index = {float(w): q for q, w in enumerate(grid.omega)}

    def q_of(w):
        for wg, q in w_index.items():
            if abs(w - wg) <= 1e-9 * max(abs(wg), 1.0):
                return q
        raise HydroDataError(f"{path}: omega={w!r} not on the scenario grid")

    t_index = {t: i for i, t in enumerate(thetas)}
    for t, w, dev, m, ph in rows:
        mag[t_index[t], q_of(w), dev] = m
        phase[t_index[t], q_of(w), dev] = ph
    if np.isnan(mag).any():
        raise HydroDataError(f"{path}: incomplete (theta, omega, device) table")
    phase = np.unwrap(phase, axis=0)
    return thetas, mag, phase


def write_hydro_db(db: HydroDB, devices: Sequence[DeviceGeometry], path) -> None:
    """Write a HydroDB in the CSV interchange format (round-trips load_hydro_db)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["omega", "row", "col", "A", "B", "device", "f_mag", "f_phase"])
        for q, w in enumerate(db.omega):
            for i in range(db.n_body):
                for j in range(db.n_body):
                    writer.writerow([repr(float(w)), i, j,
                                     repr(float(db.added_mass[q, i, j])),
                                     repr(float(db.radiation_damping[q, i, j])),
                                     "", "", ""])
            for dev in range(db.n_body):
                f = db.excitation_ref[q, dev]
                writer.writerow([repr(float(w)), "", "", "", "", dev,
                                 repr(float(abs(f))), repr(float(np.angle(f)))])


def incident_amplitudes(devices: Sequence[DeviceGeometry], grid: SpectralGrid,
                        direction: DirectionSample) -> np.ndarray:
    """Complex incident-wave elevation a_q e^{i k_q (x cos th + y sin th)} at
    every device center, shape (n_freq, n_body)."""
    th = direction.angle_per_harmonic(grid)
    xs = np.array([d.x for d in devices])
    ys = np.array([d.y for d in devices])
    phase = grid.wavenumber[:, None] * (np.cos(th)[:, None] * xs[None, :]
                                        + np.sin(th)[:, None] * ys[None, :])
    return grid.amplitude[:, None] * np.exp(1j * phase)


def excitation_forces(db: HydroDB, devices: Sequence[DeviceGeometry],
                      grid: SpectralGrid, direction: DirectionSample) -> np.ndarray:
    """Excitation force amplitudes for all harmonics, shape (n_freq, n_body)."""
    if db.mode == PLANE_WAVE_PHASE:
        return db.excitation_ref * incident_amplitudes(devices, grid, direction)
    th = direction.angle_per_harmonic(grid)
    lo, hi = db.table_theta[0], db.table_theta[-1]
    if np.any(th < lo) or np.any(th > hi):
        raise ValueError(
            f"wave angle outside the tabulated range [{lo:.4g}, {hi:.4g}]")
    out = np.empty((grid.n_freq, db.n_body), dtype=complex)
    for q in range(grid.n_freq):
        # interpolate magnitude and unwrapped phase, never real/imaginary parts
        for dev in range(db.n_body):
            m = np.interp(th[q], db.table_theta, db.table_mag[:, q, dev])
            p = np.interp(th[q], db.table_theta, db.table_phase[:, q, dev])
            out[q, dev] = m * np.exp(1j * p)
    return grid.amplitude[:, None] * out


def excitation_force(db: HydroDB, devices: Sequence[DeviceGeometry],
                     grid: SpectralGrid, q: int,
                     direction: DirectionSample) -> np.ndarray:
    """Excitation force vector at harmonic q (N per device)."""
    return excitation_forces(db, devices, grid, direction)[q]
