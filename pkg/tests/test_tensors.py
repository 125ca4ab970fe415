import numpy as np
import pytest

from deepir.tensors import (
    Axis,
    FeatureMap,
    Image,
    bilinear_resize,
    transpose_spatial,
)


def test_image_validation():
    with pytest.raises(ValueError):
        Image(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        Image(np.full((4, 4, 3), 300.0))
    with pytest.raises(ValueError):
        Image(np.full((4, 4, 3), np.nan))
    img = Image(np.zeros((2, 3, 3)))
    assert (img.height, img.width, img.channels) == (2, 3, 3)


def test_feature_map_validation():
    with pytest.raises(ValueError):
        FeatureMap(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        FeatureMap(np.array([[[np.inf]]]))
    f = FeatureMap(np.zeros((2, 3, 4)), layer=2)
    assert (f.height, f.width, f.channels, f.layer) == (2, 3, 4, 2)


def test_transpose_row_vector():
    f = FeatureMap(np.array([1.0, 2, 3, 4, 5]).reshape(1, 5, 1))
    t = transpose_spatial(f)
    assert t.data.shape == (5, 1, 1)
    assert np.array_equal(t.data.ravel(), [1, 2, 3, 4, 5])


def test_transpose_definition():
    rng = np.random.default_rng(0)
    f = FeatureMap(rng.standard_normal((2, 3, 2)))
    t = transpose_spatial(f)
    assert t.data[2, 0, 1] == f.data[0, 2, 1]


def test_transpose_involution_property():
    rng = np.random.default_rng(1)
    for _ in range(20):
        shape = (rng.integers(1, 7), rng.integers(1, 7), rng.integers(1, 5))
        f = FeatureMap(rng.standard_normal(shape))
        back = transpose_spatial(transpose_spatial(f))
        assert np.array_equal(back.data, f.data)
        assert back.layer == f.layer


def test_bilinear_degenerate_single_sample_is_corner_average():
    f = FeatureMap(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1))
    out = bilinear_resize(f, 1, 1)
    assert out.data.shape == (1, 1, 1)
    assert out.data[0, 0, 0] == pytest.approx(2.5)


def test_bilinear_identity_dims():
    rng = np.random.default_rng(2)
    f = FeatureMap(rng.standard_normal((4, 5, 3)))
    out = bilinear_resize(f, 4, 5)
    assert np.array_equal(out.data, f.data)


def test_bilinear_linear_ramp():
    f = FeatureMap(np.array([0.0, 1.0, 2.0]).reshape(1, 3, 1))
    out = bilinear_resize(f, 1, 5)
    assert np.allclose(out.data.ravel(), [0.0, 0.5, 1.0, 1.5, 2.0])


def test_bilinear_constant_invariance_property():
    rng = np.random.default_rng(3)
    f = FeatureMap(np.full((3, 4, 2), 7.25))
    for _ in range(10):
        h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        out = bilinear_resize(f, h, w)
        assert out.data.shape == (h, w, 2)
        assert np.allclose(out.data, 7.25)


def test_bilinear_rejects_bad_dims():
    f = FeatureMap(np.zeros((2, 2, 1)))
    with pytest.raises(ValueError):
        bilinear_resize(f, 0, 2)
    with pytest.raises(TypeError):
        bilinear_resize(np.zeros((2, 2, 1)), 1, 1)


def test_bilinear_image_kind_preserved():
    img = Image(np.full((4, 4, 3), 100.0))
    out = bilinear_resize(img, 2, 6)
    assert isinstance(out, Image)
    assert (out.height, out.width) == (2, 6)


def test_axis_enum_values():
    assert Axis("cols") is Axis.COLUMNS
    assert Axis("rows") is Axis.ROWS
