"""Multibaseline SAR tomography detection toolkit.

Per-pixel detection of an unknown number of coherent scatterers from a
stack of coregistered, phase-calibrated SAR images: sparse estimation of
candidate scatterers over an (elevation, velocity) grid, a single-threshold
penalized-likelihood detector, an exhaustive sequential baseline, and the
Monte-Carlo machinery for threshold calibration and performance studies.
"""

from .dictionary import (
    Dictionary,
    ParameterGrid,
    build_dictionary,
    build_grid,
    grid_lookup,
    half_rayleigh_grid,
)
from .detection import (
    DetectionOutcome,
    DetectorConfig,
    backscatter_estimate,
    klic_detect,
    klic_statistic,
    noise_variance_estimate,
    penalty,
    projection_residual,
    supglrt_detect,
    supglrt_statistics,
)
from .errors import (
    CalibrationError,
    CalibrationProvenanceError,
    ConfigurationError,
    DataFormatError,
    DegenerateGeometryError,
    TomodetError,
)
from .signal_model import (
    AcquisitionGeometry,
    PixelObservation,
    Scatterer,
    ScattererParams,
    amplitude_for_snr,
    load_geometry_csv,
    rayleigh_resolutions,
    save_geometry_csv,
    spatial_frequencies,
    steering_vector,
    synthesize_pixel,
)
from .sparse_estimation import (
    CsConfig,
    SparseEstimate,
    cs_objective,
    estimate_alpha,
    initialize_g,
    iterate_g,
    run_cs,
    select_support,
)

__version__ = "0.1.0"
