"""Image containers, sub-pixel sampling, SSIM, and PNG/PFM file I/O."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage


class SamplingError(ValueError):
    """Continuous pixel coordinate outside the interpolatable region."""


@dataclass
class Image:
    """Float image, values in [0, 1], shape (height, width, channels)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim == 2:
            self.data = self.data[:, :, None]
        if self.data.ndim != 3:
            raise ValueError(f"image data must be (h, w, c), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image contains non-finite values")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]


def array_of(img):
    """Underlying (h, w, c) array of an Image or array-like."""
    data = img.data if isinstance(img, Image) else np.asarray(img)
    if data.ndim == 2:
        data = data[:, :, None]
    return data


def bilinear_sample_many(img, ps):
    """Bilinearly interpolate at continuous pixel coords ps, shape (n, 2).

    Coordinates must satisfy 0 <= u <= width-1 and 0 <= v <= height-1;
    integer coordinates reproduce stored pixel values exactly.
    """
    data = array_of(img)
    h, w = data.shape[:2]
    ps = np.atleast_2d(np.asarray(ps, dtype=np.float64))
    u, v = ps[:, 0], ps[:, 1]
    if np.any(u < 0) or np.any(u > w - 1) or np.any(v < 0) or np.any(v > h - 1):
        bad = ps[(u < 0) | (u > w - 1) | (v < 0) | (v > h - 1)][0]
        raise SamplingError(f"coordinate {tuple(bad)} outside [0, {w - 1}] x [0, {h - 1}]")
    x0 = np.minimum(np.floor(u), w - 2).astype(np.int64) if w > 1 else np.zeros(len(u), np.int64)
    y0 = np.minimum(np.floor(v), h - 2).astype(np.int64) if h > 1 else np.zeros(len(v), np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fu = (u - x0)[:, None]
    fv = (v - y0)[:, None]
    top = data[y0, x0] * (1 - fu) + data[y0, x1] * fu
    bot = data[y1, x0] * (1 - fu) + data[y1, x1] * fu
    return top * (1 - fv) + bot * fv


def bilinear_sample(img, p):
    """Single-point bilinear interpolation, returns a (channels,) color."""
    return bilinear_sample_many(img, np.asarray(p, dtype=np.float64)[None])[0]


@dataclass
class SubPixelPatch:
    """Square patch whose rays sit between pixel centers.

    coords lists (u, v) positions row-major; colors are the ground-truth
    image interpolated at those positions. origin is the integer anchor
    and offset the shared sub-pixel shift in [0, 1)^2.
    """

    origin: tuple
    size: int
    offset: tuple
    coords: np.ndarray  # (size*size, 2)
    colors: np.ndarray  # (size*size, channels)

    def grid(self, flat):
        """Reshape a flat per-pixel array back to (size, size, ...)."""
        arr = np.asarray(flat)
        return arr.reshape((self.size, self.size) + arr.shape[1:])


def sample_subpixel_patch(img, patch_size, rng):
    """Draw a random sub-pixel patch fully inside the image.

    The integer origin is uniform over placements that keep every jittered
    coordinate interpolatable; one offset is shared by all patch pixels.
    """
    data = array_of(img)
    h, w = data.shape[:2]
    if patch_size < 1 or w - patch_size < 1 or h - patch_size < 1:
        raise ValueError(f"patch size {patch_size} does not fit in {w}x{h}")
    ox = int(rng.integers(0, w - patch_size))
    oy = int(rng.integers(0, h - patch_size))
    du, dv = rng.uniform(0.0, 1.0, size=2)
    jj, ii = np.meshgrid(np.arange(patch_size), np.arange(patch_size), indexing="ij")
    coords = np.stack([ox + ii.ravel() + du, oy + jj.ravel() + dv], axis=1)
    colors = bilinear_sample_many(data, coords)
    return SubPixelPatch((ox, oy), patch_size, (du, dv), coords, colors)


def _box3(x):
    """Sum over 3x3 windows, valid region only: (h, w, ...) -> (h-2, w-2, ...)."""
    rows = x[:-2] + x[1:-1] + x[2:]
    return rows[:, :-2] + rows[:, 1:-1] + rows[:, 2:]


SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def ssim(a, b):
    """Mean SSIM over 3x3 uniform windows (valid region, population stats).

    Inputs are float images in [0, 1]; channels are averaged. Identical
    images score exactly 1.
    """
    a = array_of(a).astype(np.float64)
    b = array_of(b).astype(np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.shape[0] < 3 or a.shape[1] < 3:
        raise ValueError("ssim needs at least a 3x3 image")
    n = 9.0
    mu_a = _box3(a) / n
    mu_b = _box3(b) / n
    var_a = _box3(a * a) / n - mu_a ** 2
    var_b = _box3(b * b) / n - mu_b ** 2
    cov = _box3(a * b) / n - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def psnr(a, b):
    """Peak signal-to-noise ratio in dB for unit-range images."""
    a = array_of(a)
    b = array_of(b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return -10.0 * np.log10(mse)


def depth_smoothness(depth, image):
    """Edge-aware depth roughness: mean |forward difference| of depth,
    down-weighted by exp(-|image gradient|) (channel-mean), summed over
    the two axes. Matches the differentiable loss term exactly.
    """
    depth = np.asarray(depth, dtype=np.float64)
    img = array_of(image).astype(np.float64)
    dx_d = np.abs(depth[:, 1:] - depth[:, :-1])
    dy_d = np.abs(depth[1:, :] - depth[:-1, :])
    gx = np.mean(np.abs(img[:, 1:] - img[:, :-1]), axis=2)
    gy = np.mean(np.abs(img[1:, :] - img[:-1, :]), axis=2)
    return float(np.mean(dx_d * np.exp(-gx)) + np.mean(dy_d * np.exp(-gy)))


@dataclass(frozen=True)
class MaskRect:
    """Inclusive integer pixel rectangle, used to gate warp losses."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError(f"empty rectangle {self}")

    def contains(self, p):
        u, v = p
        return self.x_min <= u <= self.x_max and self.y_min <= v <= self.y_max

    def contains_many(self, ps):
        ps = np.atleast_2d(np.asarray(ps))
        return ((ps[:, 0] >= self.x_min) & (ps[:, 0] <= self.x_max)
                & (ps[:, 1] >= self.y_min) & (ps[:, 1] <= self.y_max))


def mask_rect_from_matches(pixels):
    """Smallest integer rectangle covering all matched feature pixels."""
    ps = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    if ps.shape[0] == 0:
        raise ValueError("cannot build a mask from zero matches")
    return MaskRect(
        int(np.floor(ps[:, 0].min())), int(np.floor(ps[:, 1].min())),
        int(np.ceil(ps[:, 0].max())), int(np.ceil(ps[:, 1].max())),
    )


# -- files ----------------------------------------------------------------


def write_png(path, img):
    """8-bit PNG; values are clipped to [0, 1] and rounded."""
    data = array_of(img)
    arr = np.round(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)
    if arr.shape[2] == 1:
        PILImage.fromarray(arr[:, :, 0], mode="L").save(path)
    else:
        PILImage.fromarray(arr, mode="RGB").save(path)


def read_png(path):
    """PNG as a float Image in [0, 1]."""
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB") if im.mode not in ("L", "RGB") else im)
    return Image(arr.astype(np.float64) / 255.0)


def write_pfm(path, data, scale=1.0):
    """PFM float map, little-endian, bottom row first per the format."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    if data.ndim == 2:
        header = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        header = b"PF"
    else:
        raise ValueError(f"pfm supports 1 or 3 channels, got shape {data.shape}")
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(header + b"\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(f"{-abs(scale):.6f}\n".encode("ascii"))  # negative: little-endian
        fh.write(np.flipud(data).astype("<f4").tobytes())


def _pfm_token(fh):
    tok = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise ValueError("truncated pfm header")
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_pfm(path):
    """PFM as a float64 array (h, w) or (h, w, 3), top row first."""
    with open(path, "rb") as fh:
        magic = _pfm_token(fh)
        if magic not in (b"Pf", b"PF"):
            raise ValueError(f"not a pfm file (magic {magic!r})")
        w = int(_pfm_token(fh))
        h = int(_pfm_token(fh))
        scale = float(_pfm_token(fh))
        count = w * h * (3 if magic == b"PF" else 1)
        raw = fh.read(count * 4)
        if len(raw) != count * 4:
            raise ValueError("truncated pfm payload")
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    shape = (h, w, 3) if magic == b"PF" else (h, w)
    return np.flipud(data.reshape(shape)).copy()
