"""Single-transformation image augmentation over a fixed 14-op space.

The op table (name, magnitude range, magnitude-based flag) is:

    Identity      -              ShearX      [0.0, 0.99]
    ShearY        [0.0, 0.99]    TranslateX  [0.0, 32.0]  (pixels)
    TranslateY    [0.0, 32.0]    Rotate      [0.0, 135.0] (degrees)
    Brightness    [0.0, 0.99]    Color       [0.0, 0.99]
    Contrast      [0.0, 0.99]    Sharpness   [0.0, 0.99]
    Posterize     [2, 8] bits    Solarize    [255.0, 0.0] (threshold)
    AutoContrast  -              Equalize    -

The policy applies exactly one op per image: the op is drawn uniformly from
the 14, the magnitude uniformly from the op's range (integer-uniform for
Posterize), and a uniform sign for the geometric and enhancement ops, whose
table ranges list magnitudes only.  Solarize's inverted range means the
drawn magnitude *is* the threshold: 255 is near-identity, 0 inverts every
pixel.

Conventions, chosen once and kept bit-stable:

* geometric ops resample with bilinear interpolation about the image
  center, filling uncovered pixels with black; magnitude zero bypasses
  resampling entirely, so zero-magnitude identity is bytewise exact;
* enhancement ops blend a degenerate image with the original at factor
  ``1 + sign*magnitude`` (Brightness: black, Color: per-pixel luminance
  gray, Contrast: uniform mean-luminance gray, Sharpness: 3x3 smoothing
  with the 1/1/1;1/5/1;1/1/1 kernel, borders untouched), with luminance
  ``round(0.299 R + 0.587 G + 0.114 B)``;
* Equalize uses the cumulative-distribution method per channel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import (
    STREAM_AUGMENT,
    FileFormatError,
    ManifestEntry,
    SelectionManifest,
    ValidationError,
    rng_for,
)

__all__ = [
    "Image",
    "AugOp",
    "AppliedAug",
    "AUG_OPS",
    "OP_BY_NAME",
    "apply_op",
    "trivial_augment",
    "augment_selected",
    "read_ppm",
    "write_ppm",
    "read_img1",
    "write_img1",
]


@dataclass(frozen=True)
class Image:
    """8-bit RGB image, pixels shaped (height, width, 3) row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValidationError(f"pixels must be (h, w, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValidationError("zero-area image")
        px = np.array(px, copy=True)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class AugOp:
    name: str
    range: tuple[float, float] | None  # (near-identity end, max-effect end)
    magnitude_based: bool
    signed: bool
    integer: bool = False


AUG_OPS: tuple[AugOp, ...] = (
    AugOp("Identity", None, False, False),
    AugOp("ShearX", (0.0, 0.99), True, True),
    AugOp("ShearY", (0.0, 0.99), True, True),
    AugOp("TranslateX", (0.0, 32.0), True, True),
    AugOp("TranslateY", (0.0, 32.0), True, True),
    AugOp("Rotate", (0.0, 135.0), True, True),
    AugOp("Brightness", (0.0, 0.99), True, True),
    AugOp("Color", (0.0, 0.99), True, True),
    AugOp("Contrast", (0.0, 0.99), True, True),
    AugOp("Sharpness", (0.0, 0.99), True, True),
    AugOp("Posterize", (2, 8), True, False, integer=True),
    AugOp("Solarize", (255.0, 0.0), True, False),
    AugOp("AutoContrast", None, False, False),
    AugOp("Equalize", None, False, False),
)
OP_BY_NAME: dict[str, AugOp] = {op.name: op for op in AUG_OPS}


@dataclass(frozen=True)
class AppliedAug:
    """Record of the one transformation applied to one image."""

    op: str
    magnitude: float | None
    sign: int

    def __post_init__(self):
        if self.op not in OP_BY_NAME:
            raise ValidationError(f"unknown op {self.op!r}")
        spec = OP_BY_NAME[self.op]
        if self.sign not in (1, -1):
            raise ValidationError("sign must be +1 or -1")
        if not spec.signed and self.sign != 1:
            raise ValidationError(f"{self.op} does not admit a negative sign")
        if spec.magnitude_based:
            lo, hi = sorted(spec.range)
            if self.magnitude is None or not (lo <= self.magnitude <= hi):
                raise ValidationError(f"{self.op} magnitude {self.magnitude} outside [{lo}, {hi}]")


# ---- geometric resampling ---------------------------------------------------


def _affine_sample(pixels: np.ndarray, coeff: tuple[float, float, float, float, float, float]) -> np.ndarray:
    """Bilinear resampling under an output->input affine map, black fill.

    ``coeff = (a, b, c, d, e, f)`` maps output (x, y), measured from the
    image center, to source coordinates xs = a*x + b*y + c, ys = d*x + e*y + f
    (also center-relative).
    """
    h, w = pixels.shape[:2]
    a, b, c, d, e, f = coeff
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w]
    x_rel = xs - cx
    y_rel = ys - cy
    src_x = a * x_rel + b * y_rel + c + cx
    src_y = d * x_rel + e * y_rel + f + cy

    x0 = np.floor(src_x)
    y0 = np.floor(src_y)
    fx = src_x - x0
    fy = src_y - y0

    out = np.zeros((h, w, 3), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            gx = x0 + dx
            gy = y0 + dy
            weight = (fx if dx else (1.0 - fx)) * (fy if dy else (1.0 - fy))
            inside = (gx >= 0) & (gx < w) & (gy >= 0) & (gy < h)
            gxc = np.clip(gx, 0, w - 1).astype(np.intp)
            gyc = np.clip(gy, 0, h - 1).astype(np.intp)
            contrib = pixels[gyc, gxc].astype(np.float64) * (weight * inside)[..., None]
            out += contrib
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _shear_x(px: np.ndarray, s: float) -> np.ndarray:
    return _affine_sample(px, (1.0, s, 0.0, 0.0, 1.0, 0.0))


def _shear_y(px: np.ndarray, s: float) -> np.ndarray:
    return _affine_sample(px, (1.0, 0.0, 0.0, s, 1.0, 0.0))


def _translate_x(px: np.ndarray, t: float) -> np.ndarray:
    return _affine_sample(px, (1.0, 0.0, t, 0.0, 1.0, 0.0))


def _translate_y(px: np.ndarray, t: float) -> np.ndarray:
    return _affine_sample(px, (1.0, 0.0, 0.0, 0.0, 1.0, t))


def _rotate(px: np.ndarray, degrees: float) -> np.ndarray:
    rad = np.deg2rad(degrees)
    cos, sin = np.cos(rad), np.sin(rad)
    return _affine_sample(px, (cos, sin, 0.0, -sin, cos, 0.0))


# ---- enhancement ops --------------------------------------------------------


def _luminance_u8(px: np.ndarray) -> np.ndarray:
    lum = 0.299 * px[..., 0] + 0.587 * px[..., 1] + 0.114 * px[..., 2]
    return np.clip(np.rint(lum), 0, 255).astype(np.uint8)


def _blend(degenerate: np.ndarray, original: np.ndarray, factor: float) -> np.ndarray:
    out = degenerate.astype(np.float64) + factor * (
        original.astype(np.float64) - degenerate.astype(np.float64)
    )
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _brightness(px: np.ndarray, factor: float) -> np.ndarray:
    return _blend(np.zeros_like(px), px, factor)


def _color(px: np.ndarray, factor: float) -> np.ndarray:
    gray = np.repeat(_luminance_u8(px)[..., None], 3, axis=2)
    return _blend(gray, px, factor)


def _contrast(px: np.ndarray, factor: float) -> np.ndarray:
    level = int(np.floor(_luminance_u8(px).mean() + 0.5))
    return _blend(np.full_like(px, level), px, factor)


def _smooth(px: np.ndarray) -> np.ndarray:
    # 3x3 smoothing kernel (1 1 1; 1 5 1; 1 1 1)/13; border pixels untouched
    kernel = np.array([[1, 1, 1], [1, 5, 1], [1, 1, 1]], dtype=np.float64) / 13.0
    src = px.astype(np.float64)
    out = src.copy()
    if px.shape[0] >= 3 and px.shape[1] >= 3:
        acc = np.zeros_like(src[1:-1, 1:-1])
        for ky in range(3):
            for kx in range(3):
                acc += kernel[ky, kx] * src[ky : ky + px.shape[0] - 2, kx : kx + px.shape[1] - 2]
        out[1:-1, 1:-1] = acc
    return out


def _sharpness(px: np.ndarray, factor: float) -> np.ndarray:
    smooth = _smooth(px)
    out = smooth + factor * (px.astype(np.float64) - smooth)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


# ---- value ops --------------------------------------------------------------


def _posterize(px: np.ndarray, bits: int) -> np.ndarray:
    mask = np.uint8(0xFF & (0xFF << (8 - bits)))
    return px & mask


def _solarize(px: np.ndarray, threshold: float) -> np.ndarray:
    return np.where(px.astype(np.float64) >= threshold, 255 - px, px).astype(np.uint8)


def _autocontrast(px: np.ndarray) -> np.ndarray:
    out = px.copy()
    for ch in range(3):
        channel = px[..., ch]
        lo = int(channel.min())
        hi = int(channel.max())
        if hi > lo:
            lut = np.clip(
                np.rint((np.arange(256) - lo) * (255.0 / (hi - lo))), 0, 255
            ).astype(np.uint8)
            out[..., ch] = lut[channel]
    return out


def _equalize(px: np.ndarray) -> np.ndarray:
    out = px.copy()
    total = px.shape[0] * px.shape[1]
    for ch in range(3):
        channel = px[..., ch]
        hist = np.bincount(channel.ravel(), minlength=256)
        cdf = np.cumsum(hist)
        cdf_min = int(cdf[np.nonzero(hist)[0][0]])
        if total == cdf_min:
            continue  # constant channel
        lut = np.clip(
            np.rint((cdf - cdf_min) * (255.0 / (total - cdf_min))), 0, 255
        ).astype(np.uint8)
        out[..., ch] = lut[channel]
    return out


# ---- dispatch ---------------------------------------------------------------


def apply_op(image: Image, op: AugOp | str, magnitude: float | None = None, sign: int = 1) -> Image:
    """Apply one named transformation at the given magnitude and sign."""
    if isinstance(op, str):
        if op not in OP_BY_NAME:
            raise ValidationError(f"unknown op {op!r}")
        op = OP_BY_NAME[op]
    if sign not in (1, -1):
        raise ValidationError("sign must be +1 or -1")
    if op.magnitude_based:
        if magnitude is None:
            raise ValidationError(f"{op.name} requires a magnitude")
        lo, hi = sorted(op.range)
        if not (lo <= magnitude <= hi):
            raise ValidationError(f"{op.name} magnitude {magnitude} outside [{lo}, {hi}]")
        if op.integer and magnitude != int(magnitude):
            raise ValidationError(f"{op.name} magnitude must be an integer")

    px = image.pixels
    name = op.name
    if name == "Identity":
        return Image(px)
    if name in ("ShearX", "ShearY", "TranslateX", "TranslateY", "Rotate"):
        if magnitude == 0.0:
            return Image(px)  # exact identity, no resampling
        amount = sign * magnitude
        fn = {
            "ShearX": _shear_x,
            "ShearY": _shear_y,
            "TranslateX": _translate_x,
            "TranslateY": _translate_y,
            "Rotate": _rotate,
        }[name]
        return Image(fn(px, amount))
    if name in ("Brightness", "Color", "Contrast", "Sharpness"):
        factor = 1.0 + sign * magnitude
        if factor == 1.0:
            return Image(px)
        fn = {
            "Brightness": _brightness,
            "Color": _color,
            "Contrast": _contrast,
            "Sharpness": _sharpness,
        }[name]
        return Image(fn(px, factor))
    if name == "Posterize":
        return Image(_posterize(px, int(magnitude)))
    if name == "Solarize":
        return Image(_solarize(px, float(magnitude)))
    if name == "AutoContrast":
        return Image(_autocontrast(px))
    if name == "Equalize":
        return Image(_equalize(px))
    raise ValidationError(f"unhandled op {name!r}")


def trivial_augment(image: Image, rng: np.random.Generator) -> tuple[Image, AppliedAug]:
    """One uniformly chosen op at a uniformly chosen magnitude and sign.

    Draw order is fixed (op, then magnitude if the op takes one, then sign
    if the op is signed) so a given stream position always yields the same
    transformation.
    """
    op = AUG_OPS[int(rng.integers(len(AUG_OPS)))]
    magnitude: float | None = None
    sign = 1
    if op.magnitude_based:
        if op.integer:
            lo, hi = sorted(op.range)
            magnitude = float(rng.integers(int(lo), int(hi) + 1))
        else:
            lo, hi = sorted(op.range)
            magnitude = float(rng.uniform(lo, hi))
    if op.signed:
        sign = 1 if rng.random() < 0.5 else -1
    return apply_op(image, op, magnitude, sign), AppliedAug(op.name, magnitude, sign)


def augment_selected(
    images: Mapping[int, Image],
    manifest: SelectionManifest,
    seed: int,
) -> tuple[dict[int, Image], SelectionManifest]:
    """Augment every selected sample once, recording the op in the manifest.

    Each sample's draws come from the stream (seed, AUGMENT, manifest epoch,
    sample_id), so per-image work can be reordered or parallelized without
    changing any result, and re-selected samples draw fresh transformations
    each epoch.  Images outside the selection are untouched.
    """
    augmented: dict[int, Image] = {}
    entries: list[ManifestEntry] = []
    for entry in manifest.entries:
        if entry.sample_id not in images:
            raise ValidationError(f"no image for selected sample {entry.sample_id}")
        rng = rng_for(seed, STREAM_AUGMENT, manifest.epoch, entry.sample_id)
        out, applied = trivial_augment(images[entry.sample_id], rng)
        augmented[entry.sample_id] = out
        entries.append(
            ManifestEntry(
                sample_id=entry.sample_id,
                p_sel=entry.p_sel,
                op=applied.op,
                magnitude=applied.magnitude,
                sign=applied.sign,
            )
        )
    return augmented, SelectionManifest(
        epoch=manifest.epoch, budget=manifest.budget, seed=manifest.seed, entries=tuple(entries)
    )


# ---- image files ------------------------------------------------------------


def write_ppm(image: Image, path: str | Path) -> None:
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.pixels.tobytes())


def _read_ppm_tokens(blob: bytes, count: int, start: int) -> tuple[list[bytes], int]:
    """Read whitespace-separated header tokens, honoring # comments."""
    tokens: list[bytes] = []
    pos = start
    current = b""
    while len(tokens) < count and pos < len(blob):
        byte = blob[pos : pos + 1]
        if byte == b"#":
            while pos < len(blob) and blob[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if byte.isspace():
            if current:
                tokens.append(current)
                current = b""
            pos += 1
            continue
        current += byte
        pos += 1
    if current and len(tokens) < count:
        tokens.append(current)
    return tokens, pos


def read_ppm(path: str | Path) -> Image:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FileFormatError(f"cannot read image {path}: {exc}") from exc
    if blob[:2] != b"P6":
        raise FileFormatError(f"{path}: not a P6 PPM file")
    tokens, pos = _read_ppm_tokens(blob, 3, 2)
    if len(tokens) != 3:
        raise FileFormatError(f"{path}: truncated PPM header")
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FileFormatError(f"{path}: malformed PPM header") from None
    if maxval != 255:
        raise FileFormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    expected = width * height * 3
    payload = blob[pos : pos + expected]
    if len(payload) < expected:
        raise FileFormatError(f"{path}: truncated pixel payload")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return Image(pixels)


_IMG_MAGIC = b"IMG1"


def write_img1(image: Image, path: str | Path) -> None:
    header = _IMG_MAGIC + struct.pack("<II", image.width, image.height)
    Path(path).write_bytes(header + image.pixels.tobytes())


def read_img1(path: str | Path) -> Image:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != _IMG_MAGIC:
        raise FileFormatError(f"{path}: bad magic (expected IMG1)")
    if len(blob) < 12:
        raise FileFormatError(f"{path}: truncated header")
    width, height = struct.unpack("<II", blob[4:12])
    expected = width * height * 3
    payload = blob[12:]
    if len(payload) != expected:
        raise FileFormatError(f"{path}: payload size {len(payload)} != {expected}")
    return Image(np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3))
