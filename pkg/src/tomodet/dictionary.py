"""Parameter grids and the steering dictionary shared by estimator and detectors.

The dictionary stacks the steering vectors of every grid point into an
N x Kp complex matrix.  Enumeration order is fixed and documented: the
elevation index varies fastest, then velocity, then the thermal axis, so
column indices are portable across runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError
from .signal_model import (
    AcquisitionGeometry,
    ScattererParams,
    rayleigh_resolutions,
    spatial_frequencies,
)

# refuse to materialize dictionaries beyond this many complex entries
DEFAULT_SIZE_CAP = 50_000_000


def grid_axis(lo: float, hi: float, spacing: float) -> np.ndarray:
    """Points ``lo, lo+spacing, ...`` covering [lo, hi].

    The count is floor(span/spacing) + 1, so the upper endpoint is included
    exactly when the span is an integer multiple of the spacing.  A span
    smaller than the spacing yields a single point at ``lo``.
    """
    if spacing <= 0:
        raise ConfigurationError(f"grid spacing must be positive, got {spacing}")
    if hi < lo:
        raise ConfigurationError(f"empty grid range [{lo}, {hi}]")
    count = int(np.floor((hi - lo) / spacing + 1e-9)) + 1
    return lo + spacing * np.arange(count)


@dataclass(frozen=True, eq=False)
class ParameterGrid:
    """Cartesian search grid over (elevation, velocity[, thermal])."""

    elevations_m: np.ndarray
    velocities_m_per_year: np.ndarray
    thermals_m_per_degc: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "elevations_m", np.asarray(self.elevations_m, float))
        object.__setattr__(
            self, "velocities_m_per_year", np.asarray(self.velocities_m_per_year, float)
        )
        if self.thermals_m_per_degc is not None:
            object.__setattr__(
                self, "thermals_m_per_degc", np.asarray(self.thermals_m_per_degc, float)
            )
        if self.elevations_m.size == 0 or self.velocities_m_per_year.size == 0:
            raise ConfigurationError("grid axes must be nonempty")

    @property
    def n_points(self) -> int:
        n = self.elevations_m.size * self.velocities_m_per_year.size
        if self.thermals_m_per_degc is not None:
            n *= self.thermals_m_per_degc.size
        return n

    @property
    def axis_counts(self) -> tuple:
        counts = (self.elevations_m.size, self.velocities_m_per_year.size)
        if self.thermals_m_per_degc is not None:
            counts += (self.thermals_m_per_degc.size,)
        return counts

    def point(self, index: int) -> ScattererParams:
        """Grid point for a flat column index (elevation fastest)."""
        if not 0 <= index < self.n_points:
            raise IndexError(f"grid index {index} out of range [0, {self.n_points})")
        ns = self.elevations_m.size
        nv = self.velocities_m_per_year.size
        i_s = index % ns
        i_v = (index // ns) % nv
        i_l = index // (ns * nv)
        thermal = 0.0
        if self.thermals_m_per_degc is not None:
            thermal = float(self.thermals_m_per_degc[i_l])
        return ScattererParams(
            elevation_m=float(self.elevations_m[i_s]),
            velocity_m_per_year=float(self.velocities_m_per_year[i_v]),
            thermal_m_per_degc=thermal,
        )

    def index(self, params: ScattererParams) -> int:
        """Flat index of an exact grid point (inverse of :meth:`point`)."""
        i_s = int(np.argmin(np.abs(self.elevations_m - params.elevation_m)))
        i_v = int(
            np.argmin(np.abs(self.velocities_m_per_year - params.velocity_m_per_year))
        )
        idx = i_v * self.elevations_m.size + i_s
        if self.thermals_m_per_degc is not None:
            i_l = int(
                np.argmin(np.abs(self.thermals_m_per_degc - params.thermal_m_per_degc))
            )
            idx += i_l * self.elevations_m.size * self.velocities_m_per_year.size
        return idx

    def points_array(self) -> np.ndarray:
        """All grid points as an (n_points, 3) array in enumeration order."""
        ns = self.elevations_m.size
        nv = self.velocities_m_per_year.size
        nl = 1 if self.thermals_m_per_degc is None else self.thermals_m_per_degc.size
        pts = np.zeros((ns * nv * nl, 3))
        s_col = np.tile(self.elevations_m, nv * nl)
        v_col = np.tile(np.repeat(self.velocities_m_per_year, ns), nl)
        pts[:, 0] = s_col
        pts[:, 1] = v_col
        if self.thermals_m_per_degc is not None:
            pts[:, 2] = np.repeat(self.thermals_m_per_degc, ns * nv)
        return pts


def build_grid(
    elevation_range: tuple[float, float],
    velocity_range: tuple[float, float],
    elevation_spacing: float,
    velocity_spacing: float,
    thermal_range: tuple[float, float] | None = None,
    thermal_spacing: float | None = None,
) -> ParameterGrid:
    """Assemble a grid from per-axis ranges and spacings."""
    thermals = None
    if thermal_range is not None:
        if thermal_spacing is None:
            raise ConfigurationError("thermal range given without a spacing")
        thermals = grid_axis(*thermal_range, thermal_spacing)
    return ParameterGrid(
        elevations_m=grid_axis(*elevation_range, elevation_spacing),
        velocities_m_per_year=grid_axis(*velocity_range, velocity_spacing),
        thermals_m_per_degc=thermals,
    )


def half_rayleigh_grid(
    geometry: AcquisitionGeometry,
    elevation_range: tuple[float, float],
    velocity_range: tuple[float, float],
) -> ParameterGrid:
    """Grid sampled at half the nominal Rayleigh resolution on both axes."""
    delta_s, _, delta_v = rayleigh_resolutions(geometry)
    return build_grid(
        elevation_range, velocity_range, delta_s / 2.0, delta_v / 2.0
    )


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Steering matrix over a parameter grid, bound to its geometry."""

    matrix: np.ndarray  # complex, N x Kp
    grid: ParameterGrid
    geometry: AcquisitionGeometry

    @property
    def n_images(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.matrix.shape[1]

    @cached_property
    def conj_transpose(self) -> np.ndarray:
        return np.ascontiguousarray(self.matrix.conj().T)

    @cached_property
    def gram(self) -> np.ndarray:
        """Kp x Kp Gram matrix (cached; used by the exhaustive baseline)."""
        return self.conj_transpose @ self.matrix

    def column(self, index: int) -> np.ndarray:
        return self.matrix[:, index]

    def __getstate__(self):
        # drop cached derived matrices; workers recompute them locally
        return {k: self.__dict__[k] for k in ("matrix", "grid", "geometry")}

    def __setstate__(self, state):
        for key, value in state.items():
            object.__setattr__(self, key, value)


def build_dictionary(
    geometry: AcquisitionGeometry,
    grid: ParameterGrid,
    size_cap: int = DEFAULT_SIZE_CAP,
) -> Dictionary:
    """Evaluate the steering vector on every grid point.

    Columns follow the grid enumeration order and are unit-norm by
    construction.  Refuses to allocate more than ``size_cap`` complex
    entries.
    """
    n = geometry.n_images
    kp = grid.n_points
    if n * kp > size_cap:
        raise ConfigurationError(
            f"dictionary of {n} x {kp} = {n * kp} complex entries exceeds the "
            f"cap of {size_cap}; shrink the grid or raise size_cap"
        )
    if grid.thermals_m_per_degc is not None and not geometry.has_temperatures:
        raise ConfigurationError(
            "thermal grid axis requested but geometry has no temperatures"
        )
    freqs = spatial_frequencies(geometry)  # N x 3
    pts = grid.points_array()  # Kp x 3
    phase = freqs @ pts.T  # N x Kp
    matrix = np.exp(-2j * np.pi * phase) / np.sqrt(n)
    return Dictionary(matrix=matrix, grid=grid, geometry=geometry)


def grid_lookup(dictionary: Dictionary, column_index: int) -> ScattererParams:
    """Scatterer parameters of a dictionary column."""
    return dictionary.grid.point(int(column_index))


def refine_grid_around(
    grid: ParameterGrid, estimates, shrink: float = 0.25
) -> ParameterGrid:
    """Second-pass grid: same point counts, ranges restricted around estimates.

    ``estimates`` is a sequence of ScattererParams from a first pass; the new
    ranges span the estimates padded by ``shrink`` times the original span on
    each axis, clipped to the original ranges.  Off by default in all
    pipelines; exposed for zoom studies.
    """
    ests = list(estimates)
    if not ests:
        return grid
    s_vals = [e.elevation_m for e in ests]
    v_vals = [e.velocity_m_per_year for e in ests]

    def _axis(points: np.ndarray, lo_e: float, hi_e: float) -> np.ndarray:
        lo0, hi0 = float(points[0]), float(points[-1])
        pad = shrink * (hi0 - lo0)
        lo = max(lo0, lo_e - pad)
        hi = min(hi0, hi_e + pad)
        return np.linspace(lo, hi, points.size)

    return ParameterGrid(
        elevations_m=_axis(grid.elevations_m, min(s_vals), max(s_vals)),
        velocities_m_per_year=_axis(
            grid.velocities_m_per_year, min(v_vals), max(v_vals)
        ),
        thermals_m_per_degc=grid.thermals_m_per_degc,
    )
