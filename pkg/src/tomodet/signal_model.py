"""Acquisition geometry, steering vectors and synthetic pixel generation.

The observed pixel vector across a multibaseline SAR stack is modeled as a
superposition of a small number of coherent point scatterers plus circular
complex Gaussian noise.  Each scatterer lives in a parameter space of
elevation [m], deformation velocity [m/year] and (optionally) a thermal
dilation coefficient [m/degC]; the acquisition geometry maps those
parameters to per-image phase frequencies.

Internal units are SI: meters, years, m/year, m/degC, radians.  Epochs are
stored in years; file ingestion converts from days.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataFormatError, DegenerateGeometryError

DAYS_PER_YEAR = 365.25


@dataclass(frozen=True, eq=False)
class AcquisitionGeometry:
    """Per-acquisition baselines/epochs plus the radar system constants.

    Parameters
    ----------
    baselines_m : array_like, shape (N,)
        Perpendicular baselines of the N acquisitions [m].
    epochs_years : array_like, shape (N,)
        Acquisition epochs relative to the reference image [years].
    wavelength_m : float
        Radar wavelength [m].
    range_m : float
        Distance of the scene from the reference track [m].
    incidence_rad : float
        Incidence angle [rad], in (0, pi/2).
    temperatures_c : array_like, shape (N,), optional
        Temperatures at the acquisition epochs [degC]; required only when
        the thermal dimension is used.
    """

    baselines_m: np.ndarray
    epochs_years: np.ndarray
    wavelength_m: float
    range_m: float
    incidence_rad: float
    temperatures_c: np.ndarray | None = None

    def __post_init__(self):
        b = np.asarray(self.baselines_m, dtype=float)
        t = np.asarray(self.epochs_years, dtype=float)
        object.__setattr__(self, "baselines_m", b)
        object.__setattr__(self, "epochs_years", t)
        if b.ndim != 1 or b.size < 2:
            raise ConfigurationError("need at least 2 acquisitions")
        if t.shape != b.shape:
            raise ConfigurationError(
                f"epochs length {t.size} does not match baselines length {b.size}"
            )
        if self.temperatures_c is not None:
            temps = np.asarray(self.temperatures_c, dtype=float)
            if temps.shape != b.shape:
                raise ConfigurationError("temperatures length mismatch")
            object.__setattr__(self, "temperatures_c", temps)
        if not (self.wavelength_m > 0 and self.range_m > 0):
            raise ConfigurationError("wavelength and range must be positive")
        if not (0.0 < self.incidence_rad < math.pi / 2):
            raise ConfigurationError("incidence angle must lie in (0, pi/2)")

    @property
    def n_images(self) -> int:
        return self.baselines_m.size

    @property
    def has_temperatures(self) -> bool:
        return self.temperatures_c is not None


@dataclass(frozen=True)
class ScattererParams:
    """Position of a scatterer in (elevation, velocity, thermal) space."""

    elevation_m: float
    velocity_m_per_year: float = 0.0
    thermal_m_per_degc: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.elevation_m, self.velocity_m_per_year, self.thermal_m_per_degc]
        )


@dataclass(frozen=True)
class Scatterer:
    """A coherent scatterer: position in parameter space plus complex amplitude."""

    params: ScattererParams
    amplitude: complex = 1.0 + 0.0j


@dataclass(frozen=True, eq=False)
class PixelObservation:
    """Observed complex N-vector for one pixel, with the truth that built it."""

    data: np.ndarray
    scatterers: tuple = field(default_factory=tuple)
    noise_variance: float = 1.0

    def __post_init__(self):
        object.__setattr__(
            self, "data", np.asarray(self.data, dtype=np.complex128)
        )


def spatial_frequencies(geometry: AcquisitionGeometry) -> np.ndarray:
    """Per-acquisition frequency triples paired with (s, v, l).

    Row n holds (2 b_n / (lambda r0), 2 t_n / lambda, 2 T_n / lambda) so that
    the inner product with the scatterer parameters is dimensionless.
    The thermal column is zero when temperatures are absent.

    Returns
    -------
    ndarray, shape (N, 3)
    """
    lam = geometry.wavelength_m
    xi = 2.0 * geometry.baselines_m / (lam * geometry.range_m)
    eta = 2.0 * geometry.epochs_years / lam
    if geometry.has_temperatures:
        zeta = 2.0 * geometry.temperatures_c / lam
    else:
        zeta = np.zeros_like(xi)
    return np.column_stack([xi, eta, zeta])


def steering_vector(
    geometry: AcquisitionGeometry, params: ScattererParams
) -> np.ndarray:
    """Unit-norm complex response of the stack to a scatterer at ``params``.

    Entry n is exp(-j 2 pi freq_n . p) / sqrt(N); the Euclidean norm is 1 by
    construction.
    """
    if params.thermal_m_per_degc != 0.0 and not geometry.has_temperatures:
        raise ConfigurationError(
            "thermal coefficient requested but geometry has no temperatures"
        )
    freqs = spatial_frequencies(geometry)
    phase = freqs @ params.as_array()
    n = geometry.n_images
    return np.exp(-2j * np.pi * phase) / np.sqrt(n)


def rayleigh_resolutions(geometry: AcquisitionGeometry) -> tuple[float, float, float]:
    """Nominal Rayleigh resolutions (elevation, height, velocity).

    delta_s = lambda r0 / (2 DeltaB) with DeltaB the baseline span,
    delta_z = delta_s sin(theta), and delta_v = lambda / (2 Deltat) with
    Deltat the temporal span in years.

    Raises
    ------
    DegenerateGeometryError
        If the baseline or temporal span is zero.
    """
    span_b = float(np.ptp(geometry.baselines_m))
    span_t = float(np.ptp(geometry.epochs_years))
    if span_b <= 0.0 or span_t <= 0.0:
        raise DegenerateGeometryError(
            f"baseline span {span_b} m / temporal span {span_t} yr must be nonzero"
        )
    delta_s = geometry.wavelength_m * geometry.range_m / (2.0 * span_b)
    delta_z = delta_s * math.sin(geometry.incidence_rad)
    delta_v = geometry.wavelength_m / (2.0 * span_t)
    return delta_s, delta_z, delta_v


def synthesize_pixel(
    geometry: AcquisitionGeometry,
    scatterers,
    noise_variance: float,
    rng: np.random.Generator,
    kmax_hint: int | None = None,
) -> PixelObservation:
    """Draw one pixel: sum of scatterer responses plus complex white noise.

    Noise entries are independent circular complex Gaussians with total
    variance ``noise_variance`` each (real and imaginary parts at half the
    variance).  Deterministic for a given generator state.

    ``kmax_hint`` only triggers a warning when exceeded: the Monte-Carlo
    harness deliberately synthesizes model-mismatch cases.
    """
    if noise_variance <= 0:
        raise ConfigurationError("noise variance must be positive")
    scatterers = tuple(scatterers)
    if kmax_hint is not None and len(scatterers) > kmax_hint:
        import warnings

        warnings.warn(
            f"{len(scatterers)} scatterers exceed the configured maximum "
            f"{kmax_hint}; synthesizing anyway",
            stacklevel=2,
        )
    n = geometry.n_images
    sigma = math.sqrt(noise_variance / 2.0)
    noise = rng.normal(scale=sigma, size=n) + 1j * rng.normal(scale=sigma, size=n)
    x = noise.astype(np.complex128)
    for sc in scatterers:
        x = x + sc.amplitude * steering_vector(geometry, sc.params)
    return PixelObservation(x, scatterers, noise_variance)


def amplitude_for_snr(snr_db: float, noise_variance: float = 1.0) -> float:
    """Modulus of the backscattering coefficient giving the requested SNR.

    SNR is defined per scatterer as |g|^2 / sigma^2.
    """
    return math.sqrt(noise_variance) * 10.0 ** (snr_db / 20.0)


def load_geometry_csv(csv_path, metadata_path=None) -> AcquisitionGeometry:
    """Read a geometry table plus its sidecar metadata record.

    The CSV carries per-acquisition rows with header
    ``index,baseline_m,epoch_days,temperature_c``; the temperature column is
    optional.  Epochs are converted from days to years at ingestion.  The
    sidecar is a JSON document with keys ``wavelength_m``, ``range_m`` and
    ``incidence_deg``; it defaults to ``<csv stem>.meta.json`` next to the
    CSV.
    """
    csv_path = Path(csv_path)
    if metadata_path is None:
        metadata_path = csv_path.with_suffix(".meta.json")
    metadata_path = Path(metadata_path)
    try:
        meta = json.loads(metadata_path.read_text())
    except FileNotFoundError:
        raise DataFormatError(f"geometry metadata record not found: {metadata_path}")
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"bad geometry metadata JSON: {exc}")
    missing = {"wavelength_m", "range_m", "incidence_deg"} - meta.keys()
    if missing:
        raise DataFormatError(f"geometry metadata missing keys: {sorted(missing)}")

    baselines, epochs_days, temps = [], [], []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "baseline_m" not in reader.fieldnames:
            raise DataFormatError(f"{csv_path}: missing geometry CSV header")
        has_temp = "temperature_c" in reader.fieldnames
        for row in reader:
            try:
                baselines.append(float(row["baseline_m"]))
                epochs_days.append(float(row["epoch_days"]))
                if has_temp and row["temperature_c"] not in (None, ""):
                    temps.append(float(row["temperature_c"]))
            except (KeyError, ValueError) as exc:
                raise DataFormatError(f"{csv_path}: bad row {row}: {exc}")
    if temps and len(temps) != len(baselines):
        raise DataFormatError(f"{csv_path}: temperature column partially filled")
    return AcquisitionGeometry(
        baselines_m=np.array(baselines),
        epochs_years=np.array(epochs_days) / DAYS_PER_YEAR,
        wavelength_m=float(meta["wavelength_m"]),
        range_m=float(meta["range_m"]),
        incidence_rad=math.radians(float(meta["incidence_deg"])),
        temperatures_c=np.array(temps) if temps else None,
    )


def save_geometry_csv(geometry: AcquisitionGeometry, csv_path, metadata_path=None):
    """Write the geometry table and sidecar consumed by :func:`load_geometry_csv`."""
    csv_path = Path(csv_path)
    if metadata_path is None:
        metadata_path = csv_path.with_suffix(".meta.json")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["index", "baseline_m", "epoch_days"]
        if geometry.has_temperatures:
            header.append("temperature_c")
        writer.writerow(header)
        for i in range(geometry.n_images):
            row = [
                i,
                repr(float(geometry.baselines_m[i])),
                repr(float(geometry.epochs_years[i] * DAYS_PER_YEAR)),
            ]
            if geometry.has_temperatures:
                row.append(repr(float(geometry.temperatures_c[i])))
            writer.writerow(row)
    meta = {
        "wavelength_m": geometry.wavelength_m,
        "range_m": geometry.range_m,
        "incidence_deg": math.degrees(geometry.incidence_rad),
    }
    Path(metadata_path).write_text(json.dumps(meta, indent=2))
