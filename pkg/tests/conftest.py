import numpy as np
import pytest

from tomodet.dictionary import ParameterGrid, build_dictionary
from tomodet.signal_model import AcquisitionGeometry


@pytest.fixture(scope="session")
def geo6():
    """Small six-image geometry used by most unit tests."""
    return AcquisitionGeometry(
        baselines_m=np.array([-500.0, -300.0, -100.0, 100.0, 300.0, 500.0]),
        epochs_years=np.array([0.0, 200.0, 400.0, 600.0, 800.0, 971.0]) / 365.25,
        wavelength_m=0.031,
        range_m=745e3,
        incidence_rad=0.6,
    )


@pytest.fixture(scope="session")
def dict8(geo6):
    """Eight-column dictionary (elevation axis only)."""
    grid = ParameterGrid(
        elevations_m=np.linspace(-20.0, 20.0, 8),
        velocities_m_per_year=np.array([0.0]),
    )
    return build_dictionary(geo6, grid)


@pytest.fixture(scope="session")
def dict12(geo6):
    """Twelve-column dictionary over a 4 x 3 (elevation, velocity) grid."""
    grid = ParameterGrid(
        elevations_m=np.linspace(-18.0, 18.0, 4),
        velocities_m_per_year=np.linspace(-0.008, 0.008, 3),
    )
    return build_dictionary(geo6, grid)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def random_pixel(rng, dictionary, k=0, snr_db=10.0, sigma2=1.0):
    """Noise pixel plus k random on-grid scatterers at the given SNR."""
    n = dictionary.n_images
    x = (
        rng.normal(scale=np.sqrt(sigma2 / 2), size=n)
        + 1j * rng.normal(scale=np.sqrt(sigma2 / 2), size=n)
    )
    cols = rng.choice(dictionary.n_atoms, size=k, replace=False)
    amp = np.sqrt(sigma2) * 10 ** (snr_db / 20.0)
    for j in cols:
        phase = rng.uniform(0, 2 * np.pi)
        x = x + amp * np.exp(1j * phase) * dictionary.matrix[:, j]
    return x, cols
