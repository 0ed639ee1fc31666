import math

import numpy as np
import pytest

from floresim.physics import TerrainError, export_csv, height_at, make_terrain


def test_flat_is_zero():
    t = make_terrain("flat", seed=3)
    assert not t.heights.any()
    assert height_at(t, 1.234, -5.6) == (0.0, False)


def test_stairs_height_past_first_riser():
    t = make_terrain("stairs", {"riser": 0.15, "tread": 0.3, "start": 1.0}, seed=1)
    assert height_at(t, 1.0 + 0.31, 0.0)[0] == pytest.approx(0.15)
    assert height_at(t, 0.9, 0.0)[0] == 0.0


def test_stairs_uniform_risers():
    t = make_terrain("stairs", {"riser": 0.1, "tread": 0.3, "start": 0.0, "steps": 5})
    levels = np.unique(np.round(t.heights, 12))
    np.testing.assert_allclose(np.diff(levels), 0.1)


def test_riser_limit():
    with pytest.raises(TerrainError):
        make_terrain("stairs", {"riser": 0.16})


def test_discrete_deterministic_and_bounded():
    a = make_terrain("discrete", {"max_block": 0.08}, seed=7)
    b = make_terrain("discrete", {"max_block": 0.08}, seed=7)
    assert np.array_equal(a.heights, b.heights)
    assert a.heights.min() >= 0 and a.heights.max() <= 0.08
    assert not np.array_equal(a.heights, make_terrain("discrete", seed=8).heights)


def test_friction_patch_range():
    t = make_terrain("friction-patch", seed=2)
    assert t.friction.min() >= 0.6 and t.friction.max() <= 2.0
    assert (t.friction > 0).all()


@pytest.mark.parametrize("d", [0.3, 1.7, 4.05])
def test_slope_plane(d):
    alpha = 12.0
    t = make_terrain("slope", {"angle_deg": alpha, "start": 0.0})
    # closed-form plane: h = d tan(alpha); bilinear interpolation is exact on a plane
    assert height_at(t, d, 0.37)[0] == pytest.approx(d * math.tan(math.radians(alpha)), abs=1e-9)


def test_cell_corners_exact():
    t = make_terrain("discrete", seed=4)
    for i, j in [(0, 0), (400, 420), (799, 3)]:
        x = t.x0 + i * t.resolution
        y = t.y0 + j * t.resolution
        assert height_at(t, x, y)[0] == pytest.approx(t.heights[i, j], abs=1e-12)


def test_outside_is_clamped_and_flagged():
    t = make_terrain("slope", {"angle_deg": 5.0, "start": 0.0})
    h, clamped = height_at(t, 100.0, 0.0)
    assert clamped
    assert h == pytest.approx(height_at(t, t.extent[1], 0.0)[0])


def test_unknown_kind():
    with pytest.raises(TerrainError):
        make_terrain("lava")


def test_export_csv(tmp_path):
    t = make_terrain("friction-patch", seed=0, half_size=1.0, resolution=0.5)
    path = export_csv(t, tmp_path / "t.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "x_index,y_index,height,friction"
    assert len(lines) == 1 + t.heights.size
