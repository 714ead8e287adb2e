"""Sensor arrays, covariance operators, and baseline beamforming.

A spatial spectrum (a nonnegative mass vector on a grid of candidate
source locations) maps linearly to the array covariance matrix through
the outer products of steering vectors.  This module discretizes that map
as a real matrix acting on grid masses: Hermitian covariances are stored
as real vectors holding the upper-triangle real parts and the strict
upper-triangle imaginary parts, so a p-sensor array yields exactly p^2
real measurements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Grid

FARFIELD_ULA = "farfield_ula"
NEARFIELD = "nearfield"


@dataclass(frozen=True)
class SensorArray:
    """Sensor positions (meters), signal wavelength, and propagation model.

    ``farfield_ula`` treats grid points as arrival angles (radians) and uses
    plane-wave phases ``exp(2 pi i sin(theta) x_k / wavelength)``, with
    ``x_k`` the sensor coordinate along the array axis (first position
    component).  ``nearfield`` treats grid points as source locations and
    uses spherical wavefronts with the geometric amplitude decay
    ``1 / range^((d-1)/2)`` for d-dimensional space.
    """

    positions: np.ndarray
    wavelength: float
    model: str = FARFIELD_ULA

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[0] == 1 and pos.shape[1] > 3:
            pos = pos.T
        if pos.shape[1] > 3:
            raise ValueError("sensor positions must live in at most 3 dimensions")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if len({tuple(p) for p in pos}) != pos.shape[0]:
            raise ValueError("sensor positions must be distinct")
        if self.model not in (FARFIELD_ULA, NEARFIELD):
            raise ValueError(f"unknown array model {self.model!r}")
        object.__setattr__(self, "positions", pos)

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    def rotated(self, angle_deg: float, center=None) -> "SensorArray":
        """Copy with positions rotated in the x-y plane about ``center``."""
        pos = self.positions.copy()
        if pos.shape[1] < 2:
            raise ValueError("rotation needs at least 2-D sensor positions")
        c = pos[:, :2].mean(axis=0) if center is None else np.asarray(center, float)
        a = np.deg2rad(angle_deg)
        R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
        pos[:, :2] = (pos[:, :2] - c) @ R.T + c
        return SensorArray(pos, self.wavelength, self.model)


def ula(sensors: int, spacing: float, wavelength: float) -> SensorArray:
    """Uniform linear far-field array with the given sensor spacing (meters)."""
    x = np.arange(sensors)[:, None] * spacing
    return SensorArray(x, wavelength, FARFIELD_ULA)


def steering_vector(array: SensorArray, x) -> np.ndarray:
    """Complex array response to a source at ``x`` (angle or location)."""
    return steering_matrix(array, np.atleast_2d(np.asarray(x, dtype=float)))[:, 0]


def steering_matrix(array: SensorArray, points: np.ndarray) -> np.ndarray:
    """Steering vectors for many points at once, one column per point."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if array.model == FARFIELD_ULA:
        theta = points[:, 0]
        phase = 2.0 * np.pi / array.wavelength * np.outer(array.positions[:, 0],
                                                          np.sin(theta))
        return np.exp(1j * phase)
    d = points.shape[1]
    if array.positions.shape[1] != d:
        raise ValueError(
            f"points have dimension {d}, sensors have {array.positions.shape[1]}")
    ranges = np.linalg.norm(array.positions[:, None, :] - points[None, :, :], axis=2)
    if np.any(ranges == 0):
        raise ValueError("source point coincides with a sensor position")
    amp = ranges ** (-(d - 1) / 2.0)
    return amp * np.exp(-2j * np.pi * ranges / array.wavelength)


# ---------------------------------------------------------------------------
# real stacking of Hermitian matrices
# ---------------------------------------------------------------------------

def stack_hermitian(R: np.ndarray) -> np.ndarray:
    """Hermitian p x p matrix -> real vector of length p^2.

    Layout: real parts of the upper triangle including the diagonal
    (row-major), then imaginary parts of the strict upper triangle.
    """
    p = R.shape[0]
    iu = np.triu_indices(p)
    ius = np.triu_indices(p, 1)
    return np.concatenate([R[iu].real, R[ius].imag])


def unstack_hermitian(r: np.ndarray, p: int) -> np.ndarray:
    """Inverse of :func:`stack_hermitian`."""
    r = np.asarray(r, dtype=float)
    if r.shape != (p * p,):
        raise ValueError(f"stacked vector must have length {p * p}, got {r.shape}")
    iu = np.triu_indices(p)
    ius = np.triu_indices(p, 1)
    n_re = p * (p + 1) // 2
    R = np.zeros((p, p), dtype=complex)
    R[iu] = r[:n_re]
    R[ius] += 1j * r[n_re:]
    lower = np.tril_indices(p, -1)
    R[lower] = R.T[lower].conj()
    return R


@dataclass
class CovarianceMeasurement:
    """A Hermitian covariance with its deterministic real stacking."""

    R: np.ndarray
    r: np.ndarray
    snapshots: int

    @classmethod
    def from_matrix(cls, R: np.ndarray, snapshots: int = 0) -> "CovarianceMeasurement":
        R = np.asarray(R, dtype=complex)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ValueError("covariance must be square")
        herm = np.max(np.abs(R - R.conj().T))
        if herm > 1e-12 * max(1.0, float(np.max(np.abs(R)))):
            raise ValueError(f"covariance is not Hermitian (defect {herm:.3e})")
        return cls(R=R, r=stack_hermitian(R), snapshots=snapshots)

    @property
    def size(self) -> int:
        return self.R.shape[0]


# ---------------------------------------------------------------------------
# discretized covariance operator
# ---------------------------------------------------------------------------

def gamma_matrix(array: SensorArray, grid: Grid, push=None) -> np.ndarray:
    """Real matrix mapping grid masses to stacked covariances.

    Column k is the stacking of ``a(x_k) a(x_k)^H`` for grid point x_k, so
    the matrix has ``p^2`` rows.  When ``push`` (an observation-splatting
    matrix whose rows live on ``grid``) is given, the result is composed
    with it so the constraint acts on the underlying state grid.
    """
    A = steering_matrix(array, grid.points())
    p = array.size
    iu = np.triu_indices(p)
    ius = np.triu_indices(p, 1)
    outer = A[iu[0], :] * A[iu[1], :].conj()
    outer_s = A[ius[0], :] * A[ius[1], :].conj()
    G = np.vstack([outer.real, outer_s.imag])
    if push is not None:
        if push.shape[0] != grid.size:
            raise ValueError(
                f"push-forward has {push.shape[0]} rows, grid has {grid.size} points")
        G = np.asarray(G @ push)
    return G


# ---------------------------------------------------------------------------
# snapshot simulation and sample covariance
# ---------------------------------------------------------------------------

def simulate_snapshots(arrays, sources, snr_db: float, n_snap: int,
                       seed) -> list[np.ndarray]:
    """Simulated array snapshots for shared emitters, one matrix per array.

    Sources are (position, power) pairs emitting mutually independent
    circular complex Gaussian waveforms, shared across arrays within a
    snapshot; each array adds its own spatially white noise.  The noise
    power is ``mean(source powers) / 10^(snr_db / 10)`` (unit reference
    power with no sources).  Snapshots are deterministic given the seed.
    """
    if n_snap < 1:
        raise ValueError("need at least one snapshot")
    single = isinstance(arrays, SensorArray)
    arrays = [arrays] if single else list(arrays)
    rng = np.random.default_rng(seed)
    powers = np.array([float(p) for _, p in sources])
    ref = float(powers.mean()) if len(powers) else 1.0
    noise_power = ref / 10.0 ** (snr_db / 10.0)
    n_src = len(sources)
    if n_src:
        S = (rng.standard_normal((n_src, n_snap)) + 1j * rng.standard_normal((n_src, n_snap)))
        S *= np.sqrt(powers / 2.0)[:, None]
    out = []
    for arr in arrays:
        Y = np.zeros((arr.size, n_snap), dtype=complex)
        if n_src:
            A = steering_matrix(arr, np.atleast_2d([pos for pos, _ in sources]))
            Y = A @ S
        W = (rng.standard_normal((arr.size, n_snap))
             + 1j * rng.standard_normal((arr.size, n_snap)))
        Y = Y + np.sqrt(noise_power / 2.0) * W
        out.append(Y)
    return out[0] if single else out


def sample_covariance(snapshots: np.ndarray) -> CovarianceMeasurement:
    """Sample covariance ``(1/N) sum_k y_k y_k^H`` with its stacking."""
    Y = np.asarray(snapshots)
    if Y.ndim != 2 or Y.shape[1] < 1:
        raise ValueError("snapshots must be a (sensors, count) matrix")
    N = Y.shape[1]
    R = (Y @ Y.conj().T) / N
    R = 0.5 * (R + R.conj().T)
    return CovarianceMeasurement(R=R, r=stack_hermitian(R), snapshots=N)


# ---------------------------------------------------------------------------
# non-coherent MVDR baseline
# ---------------------------------------------------------------------------

def mvdr_spectrum(measurements, arrays, grid: Grid, diagonal_load: float | None = None
                  ) -> np.ndarray:
    """Minimum-variance power spectrum over the grid.

    Per array the spectrum is ``1 / (a(x)^H (R + delta I)^{-1} a(x))``; the
    default loading is ``1e-6 trace(R) / p``.  For several arrays the
    combination is non-coherent: the per-array spectra are normalized to
    unit maximum and summed.
    """
    single = isinstance(measurements, CovarianceMeasurement)
    ms = [measurements] if single else list(measurements)
    ars = [arrays] if isinstance(arrays, SensorArray) else list(arrays)
    if len(ms) != len(ars):
        raise ValueError(f"got {len(ms)} covariances for {len(ars)} arrays")
    spectra = []
    for meas, arr in zip(ms, ars):
        R = meas.R
        p = meas.size
        delta = (1e-6 * float(np.trace(R).real) / p if diagonal_load is None
                 else float(diagonal_load))
        Rl = R + delta * np.eye(p)
        A = steering_matrix(arr, grid.points())
        try:
            X = np.linalg.solve(Rl, A)
        except np.linalg.LinAlgError as err:
            raise ValueError(f"loaded covariance is singular: {err}") from err
        denom = np.einsum("pk,pk->k", A.conj(), X).real
        if np.any(denom <= 0):
            raise ValueError("loaded covariance is not positive definite")
        spectra.append(1.0 / denom)
    if single:
        return spectra[0]
    return sum(s / s.max() for s in spectra)
