import math

import numpy as np
import pytest

from tomodet.errors import (
    ConfigurationError,
    DataFormatError,
    DegenerateGeometryError,
)
from tomodet.signal_model import (
    AcquisitionGeometry,
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


def make_geometry(baselines, epochs_years, **kw):
    defaults = dict(wavelength_m=0.031, range_m=745e3, incidence_rad=0.6)
    defaults.update(kw)
    return AcquisitionGeometry(
        baselines_m=np.asarray(baselines, float),
        epochs_years=np.asarray(epochs_years, float),
        **defaults,
    )


class TestSpatialFrequencies:
    def test_zero_acquisition_gives_zero_frequencies(self):
        geo = make_geometry([0.0, 100.0], [0.0, 1.0])
        freqs = spatial_frequencies(geo)
        assert np.allclose(freqs[0], [0.0, 0.0, 0.0])

    def test_known_baseline_value(self):
        # 2 * 1050 / (0.031 * 745e3)
        geo = make_geometry([1050.0, -1050.0], [0.0, 1.0])
        freqs = spatial_frequencies(geo)
        expected = 2.0 * 1050.0 / (0.031 * 745e3)
        assert freqs[0, 0] == pytest.approx(expected, rel=1e-12)
        assert freqs[0, 0] == pytest.approx(9.093e-2, rel=1e-3)

    def test_doubling_baseline_doubles_elevation_frequency(self):
        geo1 = make_geometry([300.0, 0.0], [0.0, 1.0])
        geo2 = make_geometry([600.0, 0.0], [0.0, 1.0])
        f1 = spatial_frequencies(geo1)
        f2 = spatial_frequencies(geo2)
        assert f2[0, 0] == pytest.approx(2 * f1[0, 0], rel=1e-12)
        assert f2[0, 1] == f1[0, 1]

    def test_velocity_frequency_pairs_with_epoch(self):
        geo = make_geometry([0.0, 0.0], [0.0, 2.0])
        freqs = spatial_frequencies(geo)
        assert freqs[1, 1] == pytest.approx(2 * 2.0 / 0.031, rel=1e-12)


class TestSteeringVector:
    def test_zero_params_gives_constant_vector(self, geo6):
        a = steering_vector(geo6, ScattererParams(0.0, 0.0))
        assert np.allclose(a, 1.0 / np.sqrt(6))

    def test_unit_norm_for_random_params(self, geo6, rng):
        for _ in range(20):
            p = ScattererParams(rng.uniform(-50, 50), rng.uniform(-0.01, 0.01))
            a = steering_vector(geo6, p)
            assert abs(np.linalg.norm(a) - 1.0) < 1e-12
            assert np.allclose(np.abs(a), 1 / np.sqrt(6), atol=1e-12)

    def test_conjugate_equals_negated_params(self, geo6):
        p = ScattererParams(13.0, 0.004)
        m = ScattererParams(-13.0, -0.004)
        assert np.allclose(steering_vector(geo6, p).conj(), steering_vector(geo6, m))

    def test_entrywise_period_in_elevation(self, geo6):
        # adding 1/xi_n to the elevation leaves entry n unchanged
        freqs = spatial_frequencies(geo6)
        s0, v0 = 7.0, 0.002
        base = steering_vector(geo6, ScattererParams(s0, v0))
        for n in range(geo6.n_images):
            xi = freqs[n, 0]
            if xi == 0.0:
                continue
            shifted = steering_vector(geo6, ScattererParams(s0 + 1.0 / xi, v0))
            assert shifted[n] == pytest.approx(base[n], abs=1e-12)

    def test_thermal_requires_temperatures(self, geo6):
        with pytest.raises(ConfigurationError):
            steering_vector(geo6, ScattererParams(0.0, 0.0, thermal_m_per_degc=0.1))


class TestRayleighResolutions:
    def test_reference_system_values(self):
        # X-band stack: 2100 m baseline span, 971 day span, 34.4 deg incidence
        geo = make_geometry(
            [-1050.0, 0.0, 1050.0],
            np.array([0.0, 500.0, 971.0]) / 365.25,
            incidence_rad=math.radians(34.4),
        )
        delta_s, delta_z, delta_v = rayleigh_resolutions(geo)
        assert delta_s == pytest.approx(0.031 * 745e3 / (2 * 2100.0), rel=1e-12)
        assert delta_s == pytest.approx(5.45, rel=0.02)
        assert delta_z == pytest.approx(3.08, rel=0.02)
        assert delta_v * 100 == pytest.approx(0.59, rel=0.02)  # cm/year

    def test_halving_span_doubles_resolution(self):
        geo_full = make_geometry([-1050.0, 1050.0], [0.0, 2.0])
        geo_half = make_geometry([-525.0, 525.0], [0.0, 2.0])
        assert rayleigh_resolutions(geo_half)[0] == pytest.approx(
            2 * rayleigh_resolutions(geo_full)[0], rel=1e-12
        )

    def test_zero_span_raises(self):
        geo = make_geometry([100.0, 100.0], [0.0, 1.0])
        with pytest.raises(DegenerateGeometryError):
            rayleigh_resolutions(geo)


class TestSynthesizePixel:
    def test_noise_only_power(self, geo6):
        rng = np.random.default_rng(7)
        total = 0.0
        trials = 10_000
        for _ in range(trials):
            obs = synthesize_pixel(geo6, [], 1.0, rng)
            total += np.real(np.vdot(obs.data, obs.data))
        assert total / trials / geo6.n_images == pytest.approx(1.0, rel=0.02)

    def test_noiseless_limit_single_scatterer(self, geo6):
        rng = np.random.default_rng(3)
        p = ScattererParams(5.0, 0.001)
        obs = synthesize_pixel(geo6, [Scatterer(p, 4.0 - 1.0j)], 1e-30, rng)
        assert np.allclose(obs.data, (4.0 - 1.0j) * steering_vector(geo6, p), atol=1e-18)

    def test_snr_amplitude_convention(self):
        assert amplitude_for_snr(20.0) == pytest.approx(10.0)
        assert amplitude_for_snr(15.0) ** 2 == pytest.approx(10 ** 1.5)

    def test_reproducible_given_seed(self, geo6):
        p = ScattererParams(2.0, 0.0)
        a = synthesize_pixel(geo6, [Scatterer(p)], 1.0, np.random.default_rng(42))
        b = synthesize_pixel(geo6, [Scatterer(p)], 1.0, np.random.default_rng(42))
        assert np.array_equal(a.data, b.data)

    def test_kmax_hint_warns_but_synthesizes(self, geo6):
        scs = [Scatterer(ScattererParams(float(s), 0.0)) for s in (0, 5, 10)]
        with pytest.warns(UserWarning):
            obs = synthesize_pixel(geo6, scs, 1.0, np.random.default_rng(0), kmax_hint=2)
        assert obs.data.shape == (6,)

    def test_bad_noise_variance(self, geo6):
        with pytest.raises(ConfigurationError):
            synthesize_pixel(geo6, [], 0.0, np.random.default_rng(0))


class TestGeometryValidation:
    def test_too_few_images(self):
        with pytest.raises(ConfigurationError):
            make_geometry([1.0], [0.0])

    def test_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            make_geometry([1.0, 2.0], [0.0, 1.0, 2.0])

    def test_bad_incidence(self):
        with pytest.raises(ConfigurationError):
            make_geometry([0.0, 1.0], [0.0, 1.0], incidence_rad=2.0)


class TestGeometryFiles:
    def test_round_trip(self, tmp_path, geo6):
        path = tmp_path / "geom.csv"
        save_geometry_csv(geo6, path)
        loaded = load_geometry_csv(path)
        assert np.allclose(loaded.baselines_m, geo6.baselines_m)
        assert np.allclose(loaded.epochs_years, geo6.epochs_years)
        assert loaded.wavelength_m == pytest.approx(geo6.wavelength_m)
        assert loaded.incidence_rad == pytest.approx(geo6.incidence_rad)

    def test_temperatures_round_trip(self, tmp_path):
        geo = AcquisitionGeometry(
            baselines_m=np.array([0.0, 10.0]),
            epochs_years=np.array([0.0, 1.0]),
            wavelength_m=0.031,
            range_m=745e3,
            incidence_rad=0.6,
            temperatures_c=np.array([15.0, 25.0]),
        )
        path = tmp_path / "geom.csv"
        save_geometry_csv(geo, path)
        loaded = load_geometry_csv(path)
        assert np.allclose(loaded.temperatures_c, [15.0, 25.0])

    def test_missing_metadata(self, tmp_path, geo6):
        path = tmp_path / "geom.csv"
        save_geometry_csv(geo6, path)
        (tmp_path / "geom.meta.json").unlink()
        with pytest.raises(DataFormatError):
            load_geometry_csv(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "geom.csv"
        path.write_text("a,b\n1,2\n")
        (tmp_path / "geom.meta.json").write_text(
            '{"wavelength_m": 0.031, "range_m": 745000, "incidence_deg": 34.4}'
        )
        with pytest.raises(DataFormatError):
            load_geometry_csv(path)
