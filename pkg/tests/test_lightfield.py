
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from glare.errors import InvalidArgumentError
from glare.lightfield import (
    ImageBuffer,
    LightMap,
    LightSource,
    LightingConfig,
    RenderParams,
    illuminance_at,
    merge,
    pixel_centers,
    relight,
    render_light_map,
    translated,
)


def single(x, y, intensity, radius) -> LightingConfig:
    return LightingConfig((LightSource(x, y, intensity, radius),))


class TestLightSource:
    def test_zero_radius_rejected(self):
        with pytest.raises(InvalidArgumentError):
            LightSource(0, 0, 1.0, 0.0)

    def test_negative_intensity_rejected(self):
        with pytest.raises(InvalidArgumentError):
            LightSource(0, 0, -0.1, 5.0)

    def test_offscreen_coordinates_allowed(self):
        LightSource(-1e6, 1e6, 0.0, 1.0)


class TestVectorRoundTrip:
    def test_round_trip(self):
        cfg = LightingConfig(
            (LightSource(1, 2, 0.5, 10), LightSource(3, 4, 0.75, 20), LightSource(5, 6, 1.0, 30))
        )
        again = LightingConfig.from_vector(cfg.as_vector())
        assert again == cfg
        np.testing.assert_array_equal(again.as_vector(), cfg.as_vector())

    def test_bad_length(self):
        with pytest.raises(InvalidArgumentError):
            LightingConfig.from_vector([1.0, 2.0, 3.0])

    def test_bad_radius_in_vector(self):
        with pytest.raises(InvalidArgumentError):
            LightingConfig.from_vector([10, 10, 0.5, 0.0])


class TestIlluminance:
    def test_center_value(self):
        assert illuminance_at(single(10, 10, 0.8, 20), (10, 10)) == pytest.approx(0.8, abs=1e-12)

    def test_gaussian_falloff_at_one_radius(self):
        # distance 20 with radius 20: exp(-400 / 800) = exp(-1/2)
        val = illuminance_at(single(0, 0, 1.0, 20), (20, 0))
        assert val == pytest.approx(0.6065306597126334, abs=1e-9)

    def test_two_colocated_lights_add(self):
        cfg = LightingConfig((LightSource(5, 5, 0.8, 10), LightSource(5, 5, 0.8, 10)))
        assert illuminance_at(cfg, (5, 5)) == pytest.approx(1.6, abs=1e-12)

    def test_empty_config_is_dark(self):
        assert illuminance_at(LightingConfig(), (3, 4)) == 0.0

    def test_batch_matches_scalar(self, rng):
        cfg = LightingConfig(
            tuple(LightSource(*rng.uniform(0, 64, 2), rng.uniform(0.5, 1), rng.uniform(10, 50)) for _ in range(3))
        )
        pts = rng.uniform(-10, 70, size=(17, 2))
        batch = illuminance_at(cfg, pts)
        scalars = np.array([illuminance_at(cfg, p) for p in pts])
        np.testing.assert_array_equal(batch, scalars)

    @given(
        x=st.floats(-50, 120), y=st.floats(-50, 120),
        intensity=st.floats(0, 5), radius=st.floats(0.5, 80),
        zx=st.floats(-100, 200), zy=st.floats(-100, 200),
    )
    def test_nonnegative(self, x, y, intensity, radius, zx, zy):
        assert illuminance_at(single(x, y, intensity, radius), (zx, zy)) >= 0.0

    @given(k=st.floats(0, 10), zx=st.floats(-20, 80), zy=st.floats(-20, 80))
    def test_linear_intensity_scaling(self, k, zx, zy):
        base = LightingConfig((LightSource(10, 20, 0.5, 15), LightSource(40, 30, 1.0, 25)))
        scaled = LightingConfig(
            tuple(LightSource(s.x, s.y, s.intensity * k, s.radius) for s in base.sources)
        )
        f0 = illuminance_at(base, (zx, zy))
        f1 = illuminance_at(scaled, (zx, zy))
        assert f1 == pytest.approx(k * f0, rel=1e-12, abs=1e-300)

    def test_additivity_of_merged_configs(self, rng):
        a = LightingConfig(tuple(LightSource(*rng.uniform(0, 64, 2), 0.7, 20) for _ in range(2)))
        b = LightingConfig(tuple(LightSource(*rng.uniform(0, 64, 2), 0.9, 30) for _ in range(3)))
        for _ in range(50):
            z = rng.uniform(-10, 74, size=2)
            total = illuminance_at(merge([a, b]), z)
            assert total == pytest.approx(illuminance_at(a, z) + illuminance_at(b, z), abs=1e-12)

    @given(dx=st.floats(-30, 30), dy=st.floats(-30, 30))
    def test_translation_equivariance(self, dx, dy):
        cfg = LightingConfig((LightSource(12, 8, 0.9, 14), LightSource(30, 40, 0.6, 22)))
        z = np.array([17.0, 23.0])
        moved = translated(cfg, dx, dy)
        assert illuminance_at(moved, z + np.array([dx, dy])) == pytest.approx(
            illuminance_at(cfg, z), rel=1e-12
        )


class TestRenderLightMap:
    def test_zero_dimensions_rejected(self):
        with pytest.raises(InvalidArgumentError):
            render_light_map(LightingConfig(), 0, 4)

    def test_empty_config_all_zero(self):
        lmap = render_light_map(LightingConfig(), 4, 4)
        assert lmap.values.shape == (4, 4)
        assert np.all(lmap.values == 0.0)

    def test_matches_per_pixel_oracle_bitwise(self, rng):
        cfg = LightingConfig(
            tuple(LightSource(*rng.uniform(0, 8, 2), rng.uniform(0.5, 1), rng.uniform(2, 20)) for _ in range(3))
        )
        lmap = render_light_map(cfg, 8, 8)
        for v in range(8):
            for u in range(8):
                assert lmap.values[v, u] == illuminance_at(cfg, (u + 0.5, v + 0.5))

    def test_translated_sources_shift_the_map(self, rng):
        cfg = LightingConfig(
            tuple(LightSource(*rng.uniform(5, 20, 2), 0.8, 6) for _ in range(2))
        )
        base = render_light_map(cfg, 32, 32).values
        shifted = render_light_map(translated(cfg, 3, 3), 32, 32).values
        np.testing.assert_allclose(shifted[3:, 3:], base[:-3, :-3], rtol=0, atol=1e-12)

    def test_light_map_rejects_negative_values(self):
        with pytest.raises(InvalidArgumentError):
            LightMap(np.array([[0.5, -0.1], [0.0, 0.2]]))

    def test_pixel_centers_layout(self):
        grid = pixel_centers(3, 2)
        assert grid.shape == (2, 3, 2)
        np.testing.assert_array_equal(grid[0, 0], [0.5, 0.5])
        np.testing.assert_array_equal(grid[1, 2], [2.5, 1.5])


class TestRelight:
    def test_identity_with_unit_ambient_and_no_lights(self, checker_image):
        out = relight(checker_image, LightingConfig(), RenderParams(ambient_gain=1.0))
        np.testing.assert_array_equal(out.values, checker_image.values)

    def test_multiplicative_formula(self):
        img = ImageBuffer(np.full((1, 1, 3), 0.5))
        # F at the pixel center chosen to be 0.4: light exactly on the center.
        cfg = single(0.5, 0.5, 0.4, 25)
        out = relight(img, cfg, RenderParams(ambient_gain=0.6))
        np.testing.assert_allclose(out.values, 0.5, rtol=0, atol=1e-12)

    def test_clamp_engages(self):
        img = ImageBuffer(np.full((1, 1, 3), 0.9))
        cfg = LightingConfig((LightSource(0.5, 0.5, 0.8, 25), LightSource(0.5, 0.5, 0.8, 25)))
        out = relight(img, cfg, RenderParams(ambient_gain=0.6))
        np.testing.assert_array_equal(out.values, np.ones((1, 1, 3)))

    def test_output_in_range(self, rng, checker_image):
        for _ in range(10):
            cfg = LightingConfig(
                tuple(LightSource(*rng.uniform(0, 64, 2), rng.uniform(0.5, 1), rng.uniform(10, 50)) for _ in range(3))
            )
            out = relight(checker_image, cfg, RenderParams(rng.uniform(0, 2)))
            assert out.values.min() >= 0.0 and out.values.max() <= 1.0

    def test_preclamp_monotone_in_illuminance(self):
        img = ImageBuffer(np.full((1, 1, 3), 0.25))
        gains = []
        for intensity in (0.0, 0.3, 0.6, 0.9):
            cfg = single(0.5, 0.5, intensity, 10) if intensity else LightingConfig()
            gains.append(relight(img, cfg, RenderParams(0.5)).values[0, 0, 0])
        assert all(b >= a for a, b in zip(gains, gains[1:]))

    def test_dimensions_preserved(self, checker_image):
        out = relight(checker_image, single(10, 10, 1.0, 30), RenderParams())
        assert (out.height, out.width) == (checker_image.height, checker_image.width)


class TestImageBuffer:
    def test_rejects_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            ImageBuffer(np.full((2, 2, 3), 1.5))

    def test_rejects_wrong_shape(self):
        with pytest.raises(InvalidArgumentError):
            ImageBuffer(np.zeros((2, 2)))

    def test_values_read_only(self, checker_image):
        with pytest.raises(ValueError):
            checker_image.values[0, 0, 0] = 0.3

    def test_ambient_gain_bounds(self):
        with pytest.raises(InvalidArgumentError):
            RenderParams(ambient_gain=2.5)
