"""Stochastic sea state: Pierson-Moskowitz spectrum, equal-power discretization,
sech^2 directional spreading with inverse-transform sampling, dispersion relation
and time-domain realization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NumericalError

GRAVITY_DEFAULT = 9.81
DENSITY_DEFAULT = 1025.0


@dataclass(frozen=True)
class SpectrumParams:
    """Two-parameter Pierson-Moskowitz frequency spectrum.

    Parameters
    ----------
    hs : float
        Significant wave height (m), > 0.
    fp : float
        Peak frequency (Hz), > 0.
    """

    hs: float
    fp: float

    def __post_init__(self):
        if self.hs <= 0:
            raise ValueError(f"significant wave height must be > 0, got {self.hs}")
        if self.fp <= 0:
            raise ValueError(f"peak frequency must be > 0, got {self.fp}")

    @property
    def gamma2(self) -> float:
        return 1.25 * self.fp**4

    @property
    def gamma1(self) -> float:
        return self.gamma2 * self.hs**2 / 4.0

    @property
    def total_power(self) -> float:
        """Zeroth spectral moment, integral of the density over (0, inf)."""
        return self.hs**2 / 16.0


@dataclass(frozen=True)
class SpreadingParams:
    """Sech^2 (Donelan) directional spreading density.

    Parameters
    ----------
    theta0 : float
        Dominant wave direction (rad).
    beta : float
        Shape parameter, > 0; larger values concentrate the density.
    """

    theta0: float
    beta: float

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"spreading shape must be > 0, got {self.beta}")


@dataclass(frozen=True)
class WaveClimate:
    """One or more (spectrum, spreading) components plus water properties."""

    components: tuple[tuple[SpectrumParams, SpreadingParams], ...]
    depth: float
    gravity: float = GRAVITY_DEFAULT
    density: float = DENSITY_DEFAULT

    def __post_init__(self):
        if len(self.components) < 1:
            raise ValueError("wave climate needs at least one component")
        if self.depth <= 0:
            raise ValueError(f"water depth must be > 0, got {self.depth}")

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def spreadings(self) -> tuple[SpreadingParams, ...]:
        return tuple(sp for _, sp in self.components)


@dataclass(frozen=True)
class SpectralGrid:
    """Equal-power discretization of a climate, concatenated over components.

    Arrays are indexed by harmonic; ``component[q]`` says which climate
    component harmonic ``q`` belongs to.
    """

    frequency: np.ndarray
    omega: np.ndarray
    df: np.ndarray
    wavenumber: np.ndarray
    amplitude: np.ndarray
    component: np.ndarray
    n_components: int
    depth: float
    gravity: float
    density: float
    coverage: float

    @property
    def n_freq(self) -> int:
        return self.frequency.size


@dataclass(frozen=True)
class DirectionSample:
    """One wave direction per climate component, with the uniform seeds that
    produced it (empty for deterministic quadrature nodes)."""

    angles: np.ndarray
    xi: np.ndarray = field(default_factory=lambda: np.empty(0))

    def angle_per_harmonic(self, grid: SpectralGrid) -> np.ndarray:
        return np.asarray(self.angles)[grid.component]


def pm_density(f, params: SpectrumParams):
    """Pierson-Moskowitz spectral density S(f) = g1 f^-5 exp(-g2 f^-4) in m^2/Hz."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequency must be > 0")
    return params.gamma1 * f**-5 * np.exp(-params.gamma2 * f**-4)


def pm_cdf(f, params: SpectrumParams):
    """Fraction of total spectral power below frequency f."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequency must be > 0")
    return np.exp(-params.gamma2 * f**-4)


def pm_inverse_cdf(p_frac, params: SpectrumParams):
    """Frequency below which the given fraction of spectral power lies."""
    p_frac = np.asarray(p_frac, dtype=float)
    if np.any((p_frac <= 0) | (p_frac >= 1)):
        raise ValueError("power fraction must be in (0, 1)")
    return (-params.gamma2 / np.log(p_frac)) ** 0.25


def discretize_equal_power(params: SpectrumParams, n_bins: int, coverage: float = 0.999):
    """Split the covered part of the spectrum into bins of equal power.

    Tails are trimmed symmetrically: bin edges sit at power fractions
    (1-coverage)/2 + j*coverage/n_bins. The representative frequency of each
    bin is its mean-value point, i.e. the frequency where S(f_q) * df_q equals
    the exact bin power, so the discrete variance reproduces the covered power.

    Returns
    -------
    f_q, df_q, a_q : ndarray
        Representative frequencies (Hz), bin widths (Hz) and harmonic
        amplitudes a_q = H_q/2 with H_q = 2 sqrt(2 S(f_q) df_q).
    """
    if n_bins < 1:
        raise ValueError("need at least one bin")
    if not 0 < coverage < 1:
        raise ValueError("coverage must be in (0, 1)")
    lo = (1.0 - coverage) / 2.0
    edges = pm_inverse_cdf(lo + coverage * np.arange(n_bins + 1) / n_bins, params)
    df = np.diff(edges)
    bin_power = (coverage / n_bins) * params.total_power
    mids = np.array([
        _mean_value_frequency(params, edges[i], edges[i + 1], bin_power / df[i],
                              lo + coverage * (i + 0.5) / n_bins)
        for i in range(n_bins)
    ])
    a = np.sqrt(2.0 * pm_density(mids, params) * df)
    return mids, df, a


def _mean_value_frequency(params: SpectrumParams, f_lo: float, f_hi: float,
                          target: float, mid_fraction: float) -> float:
    """Frequency in [f_lo, f_hi] with S(f) equal to the bin's average density.

    The density is unimodal with its maximum at fp, so the root lies on the
    branch whose endpoint is the bin minimum; falls back to the midpoint
    power fraction if bracketing degenerates numerically.
    """
    from scipy.optimize import brentq

    fp = params.fp
    s_lo = float(pm_density(f_lo, params))
    s_hi = float(pm_density(f_hi, params))
    if f_lo < fp < f_hi:
        a, b = (f_lo, fp) if s_lo <= s_hi else (fp, f_hi)
    else:
        a, b = f_lo, f_hi
    try:
        return float(brentq(lambda f: float(pm_density(f, params)) - target,
                            a, b, xtol=1e-15, rtol=8.9e-16))
    except ValueError:
        return float(pm_inverse_cdf(mid_fraction, params))


def build_spectral_grid(climate: WaveClimate, n_bins: int = 30,
                        coverage: float = 0.999) -> SpectralGrid:
    """Discretize every climate component and concatenate the harmonics."""
    freqs, dfs, amps, comp = [], [], [], []
    for ci, (spec, _) in enumerate(climate.components):
        f_q, df_q, a_q = discretize_equal_power(spec, n_bins, coverage)
        freqs.append(f_q)
        dfs.append(df_q)
        amps.append(a_q)
        comp.append(np.full(f_q.size, ci))
    frequency = np.concatenate(freqs)
    omega = 2.0 * np.pi * frequency
    k = dispersion_solve(omega, climate.depth, climate.gravity)
    return SpectralGrid(
        frequency=frequency,
        omega=omega,
        df=np.concatenate(dfs),
        wavenumber=k,
        amplitude=np.concatenate(amps),
        component=np.concatenate(comp),
        n_components=climate.n_components,
        depth=climate.depth,
        gravity=climate.gravity,
        density=climate.density,
        coverage=coverage,
    )


def donelan_pdf(theta, sp: SpreadingParams):
    """Spreading density (beta/2) sech^2[beta (theta - theta0)]."""
    theta = np.asarray(theta, dtype=float)
    return 0.5 * sp.beta / np.cosh(sp.beta * (theta - sp.theta0)) ** 2


def donelan_cdf(theta, sp: SpreadingParams):
    theta = np.asarray(theta, dtype=float)
    return 0.5 * (np.tanh(sp.beta * (theta - sp.theta0)) + 1.0)


def donelan_inverse_cdf(xi, sp: SpreadingParams):
    xi = np.asarray(xi, dtype=float)
    if np.any((xi <= 0) | (xi >= 1)):
        raise ValueError("uniform seed must be in (0, 1)")
    return sp.theta0 + np.arctanh(2.0 * xi - 1.0) / sp.beta


def effective_interval(sp: SpreadingParams, tail: float) -> tuple[float, float]:
    """Symmetric interval around theta0 leaving probability `tail` in each tail."""
    if not 0 < tail < 0.5:
        raise ValueError("tail probability must be in (0, 1/2)")
    return (float(donelan_inverse_cdf(tail, sp)),
            float(donelan_inverse_cdf(1.0 - tail, sp)))


def sample_direction(rng: np.random.Generator,
                     spreadings: Sequence[SpreadingParams]) -> DirectionSample:
    """Draw one direction per climate component by inverse-transform sampling."""
    xi = rng.uniform(0.0, 1.0, size=len(spreadings))
    angles = np.array([float(donelan_inverse_cdf(x, sp))
                       for x, sp in zip(xi, spreadings)])
    return DirectionSample(angles=angles, xi=xi)


def dispersion_solve(omega, depth: float, gravity: float = GRAVITY_DEFAULT):
    """Solve omega^2 = g k tanh(k h) for the wave number k.

    Newton iteration from the deep-water guess k0 = omega^2/g, with a
    bisection fallback; relative residual below 1e-10.
    """
    omega_arr = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.any(omega_arr <= 0):
        raise ValueError("angular frequency must be > 0")
    if depth <= 0:
        raise ValueError("water depth must be > 0")
    g = gravity
    k = omega_arr**2 / g
    target = omega_arr**2
    for _ in range(100):
        kh = np.minimum(k * depth, 700.0)
        t = np.tanh(kh)
        resid = target - g * k * t
        if np.all(np.abs(resid) < 1e-10 * target):
            break
        # d/dk [g k tanh(kh)] = g [tanh(kh) + kh sech^2(kh)]
        deriv = g * (t + kh / np.cosh(kh) ** 2)
        k = k + resid / deriv
        k = np.maximum(k, 1e-14)
    else:
        k = np.array([_dispersion_bisect(w, depth, g) for w in omega_arr])
    kh = np.minimum(k * depth, 700.0)
    resid = np.abs(target - g * k * np.tanh(kh)) / target
    if np.any(resid > 1e-10):
        raise NumericalError("dispersion relation solve did not converge")
    return k if np.ndim(omega) else float(k[0])


def _dispersion_bisect(w: float, depth: float, g: float) -> float:
    lo, hi = 1e-12, 10.0 * w**2 / g + 10.0 / depth
    f = lambda k: w**2 - g * k * np.tanh(min(k * depth, 700.0))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def realize_timeseries(grid: SpectralGrid, direction: DirectionSample,
                       phases, position, times):
    """Reconstruct the surface elevation at a point from the discrete spectrum.

    eta(t) = sum_q a_q cos[k_q (x cos th + y sin th) - w_q t + phi_q], with the
    direction of each harmonic's component.
    """
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (grid.n_freq,):
        raise ValueError(f"need one phase per harmonic, got {phases.shape}")
    x, y = position
    th = direction.angle_per_harmonic(grid)
    arg = (grid.wavenumber * (x * np.cos(th) + y * np.sin(th)))[:, None] \
        - grid.omega[:, None] * np.asarray(times, dtype=float)[None, :] \
        + phases[:, None]
    return grid.amplitude @ np.cos(arg)


def subseed_rng(seed: int, *path: int) -> np.random.Generator:
    """Deterministic child generator for a named stochastic stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))
