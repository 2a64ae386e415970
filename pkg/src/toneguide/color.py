"""sRGB <-> CIELAB colorspace math and the image raster container.

Conversions follow the sRGB standard (IEC 61966-2-1 transfer function,
D65 white point, 2 degree observer) and CIE 1976 L*a*b*.  Pixel-level
helpers operate on plain floats; the vectorized array forms are what the
rest of the pipeline uses.  Conversion arithmetic runs in float64, bulk
image storage stays float32.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from PIL import Image

from .errors import InvalidImage, UnsupportedConversion

# sRGB -> XYZ (D65) matrix and its inverse, IEC 61966-2-1.
_RGB2XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ],
    dtype=np.float64,
)
_XYZ2RGB = np.linalg.inv(_RGB2XYZ)

_WHITE = np.array([0.95047, 1.0, 1.08883], dtype=np.float64)  # D65, 2 deg
_DELTA = 6.0 / 29.0
_DELTA3 = _DELTA**3

L_MAX = 100.0
AB_LIMIT = 128.0


class Colorspace(Enum):
    SRGB = "srgb"
    LAB_NORMALIZED = "lab_normalized"


def _clamp(v: float, lo: float, hi: float) -> float:
    if not np.isfinite(v):
        raise InvalidImage(f"non-finite channel value {v!r}")
    return min(max(float(v), lo), hi)


@dataclass(frozen=True)
class RgbPixel:
    """Nonlinear sRGB triple, channels clamped to [0, 1]."""

    r: float
    g: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "r", _clamp(self.r, 0.0, 1.0))
        object.__setattr__(self, "g", _clamp(self.g, 0.0, 1.0))
        object.__setattr__(self, "b", _clamp(self.b, 0.0, 1.0))

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b], dtype=np.float64)


@dataclass(frozen=True)
class LabPixel:
    """CIELAB triple: L in [0, 100], a and b in [-128, 128]."""

    l: float
    a: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "l", _clamp(self.l, 0.0, L_MAX))
        object.__setattr__(self, "a", _clamp(self.a, -AB_LIMIT, AB_LIMIT))
        object.__setattr__(self, "b", _clamp(self.b, -AB_LIMIT, AB_LIMIT))

    def as_array(self) -> np.ndarray:
        return np.array([self.l, self.a, self.b], dtype=np.float64)


# --------------------------------------------------------------------------
# Array-level conversions.  Shape (..., 3), any float dtype; math is done in
# the input dtype so callers control precision (ImageBuffer paths use float64).
# --------------------------------------------------------------------------

def srgb_encode(linear: np.ndarray) -> np.ndarray:
    """Linear RGB -> nonlinear sRGB (the inverse EOTF)."""
    linear = np.asarray(linear)
    lo = 12.92 * linear
    # clip before the fractional power; negatives are handled by the mask
    hi = 1.055 * np.power(np.clip(linear, 0.0, None), 1.0 / 2.4) - 0.055
    return np.where(linear <= 0.0031308, lo, hi)


def srgb_decode(encoded: np.ndarray) -> np.ndarray:
    """Nonlinear sRGB -> linear RGB (the EOTF)."""
    encoded = np.asarray(encoded)
    lo = encoded / 12.92
    hi = np.power(np.clip((encoded + 0.055) / 1.055, 0.0, None), 2.4)
    return np.where(encoded <= 0.04045, lo, hi)


def srgb_array_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Vectorized sRGB -> CIELAB over the last axis."""
    rgb = np.clip(np.asarray(rgb), 0.0, 1.0)
    dtype = rgb.dtype if rgb.dtype in (np.float32, np.float64) else np.float64
    linear = srgb_decode(rgb.astype(dtype, copy=False))
    xyz = linear @ _RGB2XYZ.T.astype(dtype)
    t = xyz / _WHITE.astype(dtype)
    f = np.where(t > _DELTA3, np.cbrt(np.clip(t, 0.0, None)), t / (3 * _DELTA**2) + 4.0 / 29.0)
    out = np.empty_like(f)
    out[..., 0] = 116.0 * f[..., 1] - 16.0
    out[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    out[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return out


def lab_array_to_srgb(lab: np.ndarray, tape: dict | None = None) -> np.ndarray:
    """Vectorized CIELAB -> sRGB over the last axis.

    Out-of-gamut values are clamped in linear RGB before re-encoding.
    Pass a dict as ``tape`` to record the intermediates needed by
    :func:`lab_array_to_srgb_backward`.
    """
    lab = np.asarray(lab)
    dtype = lab.dtype if lab.dtype in (np.float32, np.float64) else np.float64
    lab = lab.astype(dtype, copy=False)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    finv = np.where(f > _DELTA, f**3, 3 * _DELTA**2 * (f - 4.0 / 29.0))
    xyz = finv * _WHITE.astype(dtype)
    linear = xyz @ _XYZ2RGB.T.astype(dtype)
    clamped = np.clip(linear, 0.0, 1.0)
    out = srgb_encode(clamped)
    if tape is not None:
        tape["f"] = f
        tape["linear"] = linear
        tape["clamped"] = clamped
        tape["dtype"] = dtype
    return out


def lab_array_to_srgb_backward(tape: dict, grad_out: np.ndarray) -> np.ndarray:
    """Gradient of :func:`lab_array_to_srgb` with respect to its Lab input.

    The clamp to [0, 1] in linear RGB contributes zero gradient outside the
    range, matching the forward exactly.
    """
    dtype = tape["dtype"]
    f, linear, clamped = tape["f"], tape["linear"], tape["clamped"]
    # d srgb / d linear(clamped)
    d_enc = np.where(clamped <= 0.0031308, 12.92,
                     (1.055 / 2.4) * np.power(np.clip(clamped, 1e-12, None), 1.0 / 2.4 - 1.0))
    g_lin = grad_out.astype(dtype, copy=False) * d_enc
    g_lin = np.where((linear >= 0.0) & (linear <= 1.0), g_lin, 0.0)
    g_xyz = g_lin @ _XYZ2RGB.astype(dtype)
    g_finv = g_xyz * _WHITE.astype(dtype)
    d_finv = np.where(f > _DELTA, 3.0 * f**2, 3 * _DELTA**2)
    g_f = g_finv * d_finv
    g_lab = np.empty_like(g_f)
    g_lab[..., 0] = (g_f[..., 0] + g_f[..., 1] + g_f[..., 2]) / 116.0
    g_lab[..., 1] = g_f[..., 0] / 500.0
    g_lab[..., 2] = -g_f[..., 2] / 200.0
    return g_lab


def lab_array_normalize(lab: np.ndarray) -> np.ndarray:
    """Affine map of each Lab axis into [0, 1]: L/100, (a+128)/256, (b+128)/256."""
    lab = np.asarray(lab)
    out = np.empty_like(lab)
    out[..., 0] = lab[..., 0] / L_MAX
    out[..., 1] = (lab[..., 1] + AB_LIMIT) / (2 * AB_LIMIT)
    out[..., 2] = (lab[..., 2] + AB_LIMIT) / (2 * AB_LIMIT)
    return out


def lab_array_denormalize(unit: np.ndarray) -> np.ndarray:
    unit = np.asarray(unit)
    out = np.empty_like(unit)
    out[..., 0] = unit[..., 0] * L_MAX
    out[..., 1] = unit[..., 1] * (2 * AB_LIMIT) - AB_LIMIT
    out[..., 2] = unit[..., 2] * (2 * AB_LIMIT) - AB_LIMIT
    return out


# --------------------------------------------------------------------------
# Pixel-level wrappers
# --------------------------------------------------------------------------

def srgb_to_lab(p: RgbPixel) -> LabPixel:
    l, a, b = srgb_array_to_lab(p.as_array())
    return LabPixel(float(l), float(a), float(b))


def lab_to_srgb(p: LabPixel) -> RgbPixel:
    r, g, b = lab_array_to_srgb(p.as_array())
    return RgbPixel(float(np.clip(r, 0, 1)), float(np.clip(g, 0, 1)), float(np.clip(b, 0, 1)))


def lab_normalize(p: LabPixel) -> tuple[float, float, float]:
    t = lab_array_normalize(p.as_array())
    return (float(t[0]), float(t[1]), float(t[2]))


def lab_denormalize(t) -> LabPixel:
    arr = lab_array_denormalize(np.asarray(t, dtype=np.float64))
    return LabPixel(float(arr[0]), float(arr[1]), float(arr[2]))


# --------------------------------------------------------------------------
# ImageBuffer
# --------------------------------------------------------------------------

@dataclass
class ImageBuffer:
    """H x W x 3 float32 raster tagged with its colorspace.

    SRGB data lives in [0, 1]; LAB_NORMALIZED stores each Lab axis affinely
    mapped to [0, 1].  Values are clamped on construction so every buffer
    satisfies its range invariant.
    """

    data: np.ndarray
    colorspace: Colorspace = Colorspace.SRGB

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidImage(f"expected H x W x 3 raster with positive dims, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise InvalidImage("image contains non-finite values")
        self.data = np.clip(arr, 0.0, 1.0).astype(np.float32)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def copy(self) -> "ImageBuffer":
        return ImageBuffer(self.data.copy(), self.colorspace)


def convert_image(img: ImageBuffer, target: Colorspace) -> ImageBuffer:
    """Per-pixel colorspace conversion between the two supported tags."""
    if not isinstance(target, Colorspace):
        raise UnsupportedConversion(f"unknown colorspace {target!r}")
    if img.colorspace == target:
        raise UnsupportedConversion(f"image is already in {target.value}")
    work = img.data.astype(np.float64)
    if img.colorspace == Colorspace.SRGB and target == Colorspace.LAB_NORMALIZED:
        out = lab_array_normalize(srgb_array_to_lab(work))
    elif img.colorspace == Colorspace.LAB_NORMALIZED and target == Colorspace.SRGB:
        out = np.clip(lab_array_to_srgb(lab_array_denormalize(work)), 0.0, 1.0)
    else:
        raise UnsupportedConversion(f"cannot convert {img.colorspace.value} -> {target.value}")
    return ImageBuffer(out, target)


# --------------------------------------------------------------------------
# PNG boundary: 8-bit values map to [0,1] by v/255 and back by round(v*255).
# --------------------------------------------------------------------------

def load_png(path) -> ImageBuffer:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise
    except (OSError, ValueError) as exc:
        # UnidentifiedImageError and truncated-stream errors both land here
        raise InvalidImage(f"cannot decode image: {exc}") from exc
    return ImageBuffer(arr, Colorspace.SRGB)


def save_png(img: ImageBuffer, path) -> None:
    if img.colorspace != Colorspace.SRGB:
        raise UnsupportedConversion("only SRGB buffers can be written to PNG")
    raw = np.clip(np.round(img.data.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(raw, mode="RGB").save(path, format="PNG")


def encode_png_bytes(img: ImageBuffer) -> bytes:
    import io

    buf = io.BytesIO()
    save_png(img, buf)
    return buf.getvalue()


def decode_png_bytes(data: bytes) -> ImageBuffer:
    import io

    return load_png(io.BytesIO(data))
