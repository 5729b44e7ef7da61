import numpy as np
import pytest

from anopipe.imaging import (
    CorruptStreamError,
    GeoTransform,
    ImageError,
    MissingFileError,
    UnsupportedFormatError,
    apply_transform,
    channel_histogram,
    histogram_distance,
    load_image,
    mean_channel_histogram,
    resize,
    save_image,
    validate_image,
)

ALL_TRANSFORMS = list(GeoTransform)


def rand_img(rng, h=11, w=7, c=3):
    return rng.random((h, w, c))


# ---------------------------------------------------------------- transforms

def test_vflip_of_column():
    img = np.array([[[0.1]], [[0.9]]])
    out = apply_transform(img, GeoTransform.VFLIP)
    assert np.array_equal(out, np.array([[[0.9]], [[0.1]]]))


def test_identity_is_bit_identical():
    rng = np.random.default_rng(0)
    img = rand_img(rng)
    out = apply_transform(img, GeoTransform.IDENTITY)
    assert np.array_equal(out, img)
    assert out is not img


def brute_force_remap(img, t):
    """Independent per-pixel index remapping oracle."""
    h, w, c = img.shape
    if t is GeoTransform.IDENTITY:
        return img.copy()
    if t is GeoTransform.VFLIP:
        coords = [(h - 1 - r, col) for r in range(h) for col in range(w)]
        out = np.empty((h, w, c))
    elif t is GeoTransform.HFLIP:
        coords = [(r, w - 1 - col) for r in range(h) for col in range(w)]
        out = np.empty((h, w, c))
    elif t is GeoTransform.ROT90:
        # out[r, col] takes img[col, w_out - 1 - r] where out is w x h
        out = np.empty((w, h, c))
        for r in range(w):
            for col in range(h):
                out[r, col] = img[col, w - 1 - r]
        return out
    elif t is GeoTransform.ROT180:
        coords = [(h - 1 - r, w - 1 - col) for r in range(h) for col in range(w)]
        out = np.empty((h, w, c))
    elif t is GeoTransform.ROT270:
        out = np.empty((w, h, c))
        for r in range(w):
            for col in range(h):
                out[r, col] = img[h - 1 - col, r]
        return out
    k = 0
    for r in range(out.shape[0]):
        for col in range(out.shape[1]):
            out[r, col] = img[coords[k]]
            k += 1
    return out


@pytest.mark.parametrize("t", ALL_TRANSFORMS)
def test_transform_matches_remap_oracle(t):
    rng = np.random.default_rng(3)
    img = rand_img(rng, 3, 5)
    assert np.array_equal(apply_transform(img, t), brute_force_remap(img, t))


def test_rot90_twice_equals_rot180():
    rng = np.random.default_rng(1)
    img = rand_img(rng, 3, 5)
    twice = apply_transform(apply_transform(img, GeoTransform.ROT90), GeoTransform.ROT90)
    assert np.array_equal(twice, apply_transform(img, GeoTransform.ROT180))


@pytest.mark.parametrize("t", ALL_TRANSFORMS)
def test_inverse_round_trip_bit_exact(t):
    rng = np.random.default_rng(2)
    for _ in range(5):
        img = rand_img(rng, int(rng.integers(2, 12)), int(rng.integers(2, 12)))
        back = apply_transform(apply_transform(img, t), t.inverse)
        assert np.array_equal(back, img)
        back2 = apply_transform(apply_transform(img, t.inverse), t)
        assert np.array_equal(back2, img)


def test_flip_involutions_and_rot90_order_four():
    rng = np.random.default_rng(4)
    img = rand_img(rng)
    for t in (GeoTransform.VFLIP, GeoTransform.HFLIP):
        assert np.array_equal(apply_transform(apply_transform(img, t), t), img)
    out = img
    for _ in range(4):
        out = apply_transform(out, GeoTransform.ROT90)
    assert np.array_equal(out, img)


def test_rot_swaps_dimensions():
    img = np.zeros((4, 9, 3))
    assert apply_transform(img, GeoTransform.ROT90).shape == (9, 4, 3)
    assert apply_transform(img, GeoTransform.ROT270).shape == (9, 4, 3)
    assert apply_transform(img, GeoTransform.ROT180).shape == (4, 9, 3)


# -------------------------------------------------------------------- resize

def scalar_bilinear(img, out_h, out_w):
    """Hand-rolled corner-aligned bilinear oracle, scalar loops only."""
    h, w, c = img.shape
    out = np.zeros((out_h, out_w, c))
    for i in range(out_h):
        for j in range(out_w):
            sy = i * (h - 1) / (out_h - 1) if out_h > 1 else 0.0
            sx = j * (w - 1) / (out_w - 1) if out_w > 1 else 0.0
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = sy - y0, sx - x0
            for k in range(c):
                out[i, j, k] = (
                    img[y0, x0, k] * (1 - fy) * (1 - fx)
                    + img[y0, x1, k] * (1 - fy) * fx
                    + img[y1, x0, k] * fy * (1 - fx)
                    + img[y1, x1, k] * fy * fx
                )
    return out


def test_resize_constant_stays_constant():
    img = np.full((10, 10, 3), 0.5)
    out = resize(img, 23, 17)
    assert out.shape == (23, 17, 3)
    assert np.allclose(out, 0.5, atol=1e-12)


def test_resize_identity_size():
    rng = np.random.default_rng(5)
    img = rand_img(rng, 9, 13)
    out = resize(img, 9, 13)
    assert np.max(np.abs(out - img)) <= 1e-6


def test_resize_checkerboard_matches_scalar_oracle():
    img = np.array([[0.0, 1.0], [1.0, 0.0]])[:, :, None]
    out = resize(img, 4, 4)
    expected = scalar_bilinear(img, 4, 4)
    assert np.allclose(out, expected, atol=1e-12)
    # spot value: interior sample at 1/3 between opposite corners
    assert out[1, 1, 0] == pytest.approx(4.0 / 9.0, abs=1e-12)


def test_resize_random_matches_scalar_oracle():
    rng = np.random.default_rng(6)
    img = rand_img(rng, 5, 7)
    assert np.allclose(resize(img, 11, 4), scalar_bilinear(img, 11, 4), atol=1e-12)


def test_resize_preserves_range():
    rng = np.random.default_rng(7)
    for _ in range(10):
        img = rand_img(rng, int(rng.integers(2, 16)), int(rng.integers(2, 16)))
        out = resize(img, int(rng.integers(1, 40)), int(rng.integers(1, 40)))
        assert out.min() >= img.min() - 1e-9
        assert out.max() <= img.max() + 1e-9


def test_resize_rejects_nonpositive():
    img = np.zeros((8, 8, 1))
    with pytest.raises(ImageError):
        resize(img, 0, 8)
    with pytest.raises(ImageError):
        resize(img, 8, -2)


# ---------------------------------------------------------------- histograms

def test_histogram_self_distance_zero():
    rng = np.random.default_rng(8)
    img = rand_img(rng, 16, 16)
    assert histogram_distance(img, channel_histogram(img, 32)) == 0.0
    assert histogram_distance(img, img) == 0.0


def test_histogram_distance_symmetric():
    rng = np.random.default_rng(9)
    a, b = rand_img(rng, 12, 12), rand_img(rng, 12, 12)
    assert histogram_distance(a, b) == pytest.approx(histogram_distance(b, a), abs=1e-15)


def test_histogram_black_vs_white_two_bins_maximal():
    black = np.zeros((8, 8, 3))
    white = np.ones((8, 8, 3))
    # hand oracle: p = (1, 0), q = (0, 1) per channel
    # 0.5 * (1/1 + 1/1) = 1, averaged over channels stays 1
    assert histogram_distance(black, white, bins=2) == pytest.approx(1.0, abs=1e-15)


def test_histogram_distance_nonnegative_and_bounded():
    rng = np.random.default_rng(10)
    for _ in range(10):
        a, b = rand_img(rng, 10, 10), rand_img(rng, 10, 10)
        d = histogram_distance(a, b, bins=8)
        assert 0.0 <= d <= 1.0


def test_histogram_rejects_bad_bins_and_empty():
    img = np.zeros((8, 8, 1))
    with pytest.raises(ImageError):
        channel_histogram(img, bins=1)
    with pytest.raises(ImageError):
        channel_histogram(np.zeros((0, 8, 1)))


def test_mean_channel_histogram_averages():
    black = np.zeros((8, 8, 1))
    white = np.ones((8, 8, 1))
    mean = mean_channel_histogram([black, white], bins=2)
    assert np.allclose(mean, [[0.5, 0.5]])


# ----------------------------------------------------------------------- i/o

def test_save_load_roundtrip_within_quantization(tmp_path):
    rng = np.random.default_rng(11)
    img = rng.random((16, 16, 3))
    path = tmp_path / "img.png"
    save_image(img, path)
    back = load_image(path)
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= 1.0 / 255.0


def test_save_load_grayscale(tmp_path):
    rng = np.random.default_rng(12)
    img = rng.random((16, 16, 1))
    save_image(img, tmp_path / "g.png")
    back = load_image(tmp_path / "g.png")
    assert back.shape == (16, 16, 1)
    assert np.max(np.abs(back - img)) <= 1.0 / 255.0


def test_load_missing_file(tmp_path):
    with pytest.raises(MissingFileError):
        load_image(tmp_path / "nope.png")


def test_load_truncated_png(tmp_path):
    rng = np.random.default_rng(13)
    save_image(rng.random((16, 16, 3)), tmp_path / "ok.png")
    data = (tmp_path / "ok.png").read_bytes()
    (tmp_path / "bad.png").write_bytes(data[: len(data) // 2])
    with pytest.raises(CorruptStreamError):
        load_image(tmp_path / "bad.png")


def test_load_rejects_16bit(tmp_path):
    from PIL import Image as PILImage

    arr = (np.arange(64, dtype=np.uint16) * 1024).reshape(8, 8)
    PILImage.fromarray(arr).save(tmp_path / "deep.png")
    with pytest.raises(UnsupportedFormatError):
        load_image(tmp_path / "deep.png")


def test_load_rejects_rgba(tmp_path):
    from PIL import Image as PILImage

    arr = np.zeros((8, 8, 4), dtype=np.uint8)
    PILImage.fromarray(arr, mode="RGBA").save(tmp_path / "a.png")
    with pytest.raises(UnsupportedFormatError):
        load_image(tmp_path / "a.png")


def test_load_rejects_non_png(tmp_path):
    from PIL import Image as PILImage

    arr = np.zeros((8, 8, 3), dtype=np.uint8)
    PILImage.fromarray(arr, mode="RGB").save(tmp_path / "img.bmp", format="BMP")
    with pytest.raises(UnsupportedFormatError):
        load_image(tmp_path / "img.bmp")


# ---------------------------------------------------------------- validation

def test_validate_image_contract():
    validate_image(np.zeros((8, 8, 3)))
    with pytest.raises(ImageError):
        validate_image(np.zeros((7, 8, 3)))
    with pytest.raises(ImageError):
        validate_image(np.zeros((8, 8, 2)))
    with pytest.raises(ImageError):
        validate_image(np.full((8, 8, 1), 1.5))
    with pytest.raises(ImageError):
        validate_image(np.full((8, 8, 1), np.nan))
