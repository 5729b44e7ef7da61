"""Core image representation, exact geometric transforms, resizing and I/O.

Images are numpy arrays of shape (H, W, C) with float values in [0, 1] and
C in {1, 3}. Pixels stay floating point everywhere; quantization to 8 bits
happens only inside :func:`save_image` / :func:`load_image`.

All functions here are pure: they never mutate their inputs and hold no
shared state, so they are safe to call concurrently.
"""

from __future__ import annotations

import enum
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

__all__ = [
    "MIN_SIDE",
    "ImageError",
    "MissingFileError",
    "UnsupportedFormatError",
    "CorruptStreamError",
    "GeoTransform",
    "validate_image",
    "apply_transform",
    "resize",
    "channel_histogram",
    "mean_channel_histogram",
    "histogram_distance",
    "load_image",
    "save_image",
]

MIN_SIDE = 8


class ImageError(Exception):
    """Base class for image validation and I/O failures."""


class MissingFileError(ImageError):
    """The requested image file does not exist."""


class UnsupportedFormatError(ImageError):
    """The file is a readable image but not an 8-bit 1- or 3-channel PNG."""


class CorruptStreamError(ImageError):
    """The file exists but its byte stream cannot be decoded."""


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check the (H, W, C) unit-interval contract and return the array.

    Raises:
        ImageError: wrong rank, channel count not in {1, 3}, a side below
            MIN_SIDE, non-finite values, or values outside [0, 1].
    """
    if not isinstance(img, np.ndarray) or img.ndim != 3:
        raise ImageError(f"expected (H, W, C) array, got shape {getattr(img, 'shape', None)}")
    h, w, c = img.shape
    if c not in (1, 3):
        raise ImageError(f"channel count must be 1 or 3, got {c}")
    if h < MIN_SIDE or w < MIN_SIDE:
        raise ImageError(f"image sides must be >= {MIN_SIDE}, got {h}x{w}")
    if not np.all(np.isfinite(img)):
        raise ImageError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ImageError(f"pixel values outside [0, 1]: min={img.min()}, max={img.max()}")
    return img


class GeoTransform(enum.Enum):
    """The six exact pixel permutations used by the translation model.

    Rotations are counterclockwise in the usual on-screen orientation
    (row 0 at the top). Every member has its inverse in the enumeration.
    """

    IDENTITY = "identity"
    VFLIP = "vflip"
    HFLIP = "hflip"
    ROT90 = "rot90"
    ROT180 = "rot180"
    ROT270 = "rot270"

    @property
    def inverse(self) -> "GeoTransform":
        return _INVERSE[self]

    @property
    def swaps_axes(self) -> bool:
        """True when the transform exchanges height and width."""
        return self in (GeoTransform.ROT90, GeoTransform.ROT270)


_INVERSE = {
    GeoTransform.IDENTITY: GeoTransform.IDENTITY,
    GeoTransform.VFLIP: GeoTransform.VFLIP,
    GeoTransform.HFLIP: GeoTransform.HFLIP,
    GeoTransform.ROT90: GeoTransform.ROT270,
    GeoTransform.ROT180: GeoTransform.ROT180,
    GeoTransform.ROT270: GeoTransform.ROT90,
}


def apply_transform(img: np.ndarray, t: GeoTransform) -> np.ndarray:
    """Apply a lossless pixel permutation to an (H, W, C) array.

    The result is always a fresh contiguous array, never a view, so
    round-tripping with the inverse reproduces the input bit-exactly.
    """
    if t is GeoTransform.IDENTITY:
        return img.copy()
    if t is GeoTransform.VFLIP:
        return img[::-1, :, :].copy()
    if t is GeoTransform.HFLIP:
        return img[:, ::-1, :].copy()
    if t is GeoTransform.ROT90:
        return np.ascontiguousarray(np.rot90(img, k=1, axes=(0, 1)))
    if t is GeoTransform.ROT180:
        return np.ascontiguousarray(np.rot90(img, k=2, axes=(0, 1)))
    if t is GeoTransform.ROT270:
        return np.ascontiguousarray(np.rot90(img, k=3, axes=(0, 1)))
    raise ValueError(f"unknown transform {t!r}")


def resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize without antialiasing.

    Uses the corner-aligned sampling convention: output pixel i along an
    axis of length n samples the source at i * (src - 1) / (n - 1), so the
    four image corners map exactly onto the source corners and resizing to
    the input size is the identity. Interpolated values are convex
    combinations of inputs, hence the output range never leaves the input
    range.

    Args:
        img: (H, W, C) array.
        out_h, out_w: positive target sides.
    """
    if out_h < 1 or out_w < 1:
        raise ImageError(f"target size must be positive, got {out_h}x{out_w}")
    h, w, _ = img.shape

    def _axis_coords(n_out: int, n_src: int) -> np.ndarray:
        if n_out == 1:
            return np.zeros(1)
        return np.arange(n_out) * ((n_src - 1) / (n_out - 1))

    ys = _axis_coords(out_h, h)
    xs = _axis_coords(out_w, w)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]

    top = img[y0][:, x0] * (1.0 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1.0 - fx) + img[y1][:, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return out.astype(img.dtype, copy=False)


def channel_histogram(img: np.ndarray, bins: int = 32) -> np.ndarray:
    """Normalized per-channel histogram over [0, 1].

    Returns:
        (C, bins) array; each row sums to 1.
    """
    if bins < 2:
        raise ImageError(f"bins must be >= 2, got {bins}")
    if img.size == 0:
        raise ImageError("cannot histogram an empty image")
    c = img.shape[2]
    hist = np.empty((c, bins))
    for k in range(c):
        counts, _ = np.histogram(img[:, :, k], bins=bins, range=(0.0, 1.0))
        hist[k] = counts / counts.sum()
    return hist


def mean_channel_histogram(imgs: Sequence[np.ndarray], bins: int = 32) -> np.ndarray:
    """Mean of per-image channel histograms, the reference stats of a pool."""
    if len(imgs) == 0:
        raise ImageError("cannot build reference histogram from an empty set")
    acc = channel_histogram(imgs[0], bins)
    for img in imgs[1:]:
        acc = acc + channel_histogram(img, bins)
    return acc / len(imgs)


def histogram_distance(a: np.ndarray, ref: np.ndarray, bins: int = 32) -> float:
    """Mean per-channel symmetric chi-square distance to reference histograms.

    For normalized histograms p, q the per-channel distance is
    0.5 * sum((p - q)^2 / (p + q)) with empty bin pairs contributing 0.
    It is symmetric, zero iff the histograms are equal, and at most 1
    (reached on disjoint supports). The result is the mean over channels.

    Args:
        a: (H, W, C) image.
        ref: either precomputed (C, bins) reference histograms or a second
            image to histogram with `bins`.
    """
    ha = channel_histogram(a, bins)
    if ref.ndim == 3:
        hb = channel_histogram(ref, bins)
    elif ref.ndim == 2:
        hb = ref
        if hb.shape != ha.shape:
            raise ImageError(f"reference histogram shape {hb.shape} does not match {ha.shape}")
    else:
        raise ImageError(f"reference must be an image or (C, bins) histogram, got ndim={ref.ndim}")
    num = (ha - hb) ** 2
    den = ha + hb
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(np.mean(0.5 * terms.sum(axis=1)))


def load_image(path: Union[str, Path]) -> np.ndarray:
    """Load an 8-bit grayscale or RGB PNG as a float (H, W, C) array in [0, 1].

    Raises:
        MissingFileError: the path does not exist.
        UnsupportedFormatError: not a PNG, or not 8-bit with 1 or 3 channels.
        CorruptStreamError: the stream exists but cannot be decoded.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"no such image file: {path}")
    try:
        with PILImage.open(path) as im:
            if im.format != "PNG":
                raise UnsupportedFormatError(f"{path}: expected PNG, got {im.format}")
            if im.mode not in ("L", "RGB"):
                raise UnsupportedFormatError(
                    f"{path}: expected 8-bit grayscale or RGB, got mode {im.mode}"
                )
            im.load()
            arr = np.asarray(im, dtype=np.float32) / 255.0
    except (UnsupportedFormatError, MissingFileError):
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise CorruptStreamError(f"{path}: cannot decode image stream ({exc})") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return validate_image(arr)


def save_image(img: np.ndarray, path: Union[str, Path]) -> None:
    """Write an image as an 8-bit PNG; values are rounded to 1/255 steps."""
    validate_image(img)
    path = Path(path)
    quant = np.round(img * 255.0).astype(np.uint8)
    if quant.shape[2] == 1:
        pil = PILImage.fromarray(quant[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(quant, mode="RGB")
    path.parent.mkdir(parents=True, exist_ok=True)
    pil.save(path, format="PNG")
