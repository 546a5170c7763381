"""
Frame comparison primitives: perceptual hash, SSIM, NCC, block-matching flow
and the DCT frame embedding.

All functions are pure and operate on grayscale frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image
import scipy.fft
import scipy.ndimage


EMBEDDING_DIM = 64
SSIM_C1 = (0.01 * 255) ** 2
SSIM_C2 = (0.03 * 255) ** 2


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    width: int
    height: int
    pixels: np.ndarray = field(repr=False, compare=False)
    t: int = 0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"invalid frame size {self.width}x{self.height}")
        pixels = np.asarray(self.pixels)
        if pixels.shape != (self.height, self.width):
            raise ValueError(
                f"pixel grid {pixels.shape} does not match {self.height}x{self.width}")
        if pixels.size and (pixels.min() < 0 or pixels.max() > 255):
            raise ValueError("intensities must lie in [0, 255]")
        pixels = pixels.astype(np.uint8)
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @classmethod
    def from_array(cls, array, t=0):
        array = np.clip(np.rint(np.asarray(array, dtype=np.float64)), 0, 255)
        height, width = array.shape
        return cls(width, height, array.astype(np.uint8), t)

    def as_float(self) -> np.ndarray:
        return self.pixels.astype(np.float64)

    def same_pixels(self, other: "Frame") -> bool:
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))


def _check_same_size(a: Frame, b: Frame):
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(
            f"frames differ in size: {a.width}x{a.height} vs {b.width}x{b.height}")


def resize_bilinear(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resampling to (height, width) with pixel-center alignment.

    Downscaling first low-pass filters the image so that sparse bilinear taps
    do not alias.
    """
    image = np.asarray(image, dtype=np.float64)
    src_h, src_w = image.shape
    if (src_h, src_w) == (height, width):
        return image.copy()
    scale_y = src_h / height
    scale_x = src_w / width
    sigma = (max(0.0, (scale_y - 1) / 2), max(0.0, (scale_x - 1) / 2))
    if sigma[0] > 0 or sigma[1] > 0:
        image = scipy.ndimage.gaussian_filter(image, sigma=sigma, mode="nearest")
    rows = (np.arange(height) + 0.5) * scale_y - 0.5
    cols = (np.arange(width) + 0.5) * scale_x - 0.5
    grid_r, grid_c = np.meshgrid(
        np.clip(rows, 0, src_h - 1), np.clip(cols, 0, src_w - 1), indexing="ij")
    return scipy.ndimage.map_coordinates(image, [grid_r, grid_c], order=1, mode="nearest")


def _dct2(image: np.ndarray) -> np.ndarray:
    # Rounding removes floating-point residue so flat images give exact zeros.
    return np.round(scipy.fft.dctn(image, type=2, norm="ortho"), 6)


def phash64(frame: Frame) -> int:
    """64-bit DCT perceptual hash.

    Bit i is set iff AC coefficient i (rows 0-7, columns 1-8 of the 32x32
    DCT) exceeds the median of those 64 coefficients.
    """
    small = resize_bilinear(frame.as_float(), 32, 32)
    block = _dct2(small)[:8, 1:9].flatten()
    median = np.median(block)
    value = 0
    for i, coefficient in enumerate(block):
        if coefficient > median:
            value |= 1 << i
    return value


def hamming(a: int, b: int) -> int:
    return bin((a ^ b) & 0xFFFFFFFFFFFFFFFF).count("1")


def hash_to_hex(value: int) -> str:
    return format(value & 0xFFFFFFFFFFFFFFFF, "016x")


def hex_to_hash(text: str) -> int:
    if len(text) != 16:
        raise ValueError(f"expected 16 hex digits, got {text!r}")
    return int(text, 16)


def ssim(a: Frame, b: Frame, window=8, stride=4) -> float:
    """Mean SSIM over window x window patches taken every `stride` pixels."""
    _check_same_size(a, b)
    x = a.as_float()
    y = b.as_float()
    win_h = min(window, a.height)
    win_w = min(window, a.width)
    wx = sliding_window_view(x, (win_h, win_w))[::stride, ::stride]
    wy = sliding_window_view(y, (win_h, win_w))[::stride, ::stride]
    mu_x = wx.mean(axis=(2, 3))
    mu_y = wy.mean(axis=(2, 3))
    dx = wx - mu_x[..., None, None]
    dy = wy - mu_y[..., None, None]
    var_x = (dx * dx).mean(axis=(2, 3))
    var_y = (dy * dy).mean(axis=(2, 3))
    cov = (dx * dy).mean(axis=(2, 3))
    numerator = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
    denominator = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.clip((numerator / denominator).mean(), -1.0, 1.0))


def ncc_score(frame: Frame, template: Frame) -> float:
    """Zero-mean normalized cross-correlation after resizing frame to template."""
    x = resize_bilinear(frame.as_float(), template.height, template.width)
    y = template.as_float()
    x = x - x.mean()
    y = y - y.mean()
    norm = np.sqrt((x * x).sum() * (y * y).sum())
    if norm == 0:
        return 0.0
    return float(np.clip((x * y).sum() / norm, -1.0, 1.0))


def _displacements(radius):
    # Zero first, then by magnitude: strict "<" on SAD keeps the earliest on ties.
    offsets = [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    return sorted(offsets, key=lambda d: (d[0] ** 2 + d[1] ** 2, d[0], d[1]))


def _block_search(a, padded, pad, block, base_y, base_x, offsets):
    """Best offset per block of `a` in `padded`, starting from per-block base displacements."""
    blocks_y, blocks_x = base_y.shape
    tiles = a.reshape(blocks_y, block, blocks_x, block).transpose(0, 2, 1, 3)
    local = np.arange(block)
    rows = pad + (np.arange(blocks_y) * block)[:, None, None] + base_y[..., None] + local
    cols = pad + (np.arange(blocks_x) * block)[None, :, None] + base_x[..., None] + local
    best_sad = np.full((blocks_y, blocks_x), np.inf)
    best_y = base_y.copy()
    best_x = base_x.copy()
    for dy, dx in offsets:
        patch = padded[(rows + dy)[..., :, None], (cols + dx)[..., None, :]]
        sad = np.abs(tiles - patch).sum(axis=(2, 3))
        sad = np.where(np.isnan(sad), np.inf, sad)
        better = sad < best_sad
        best_sad = np.where(better, sad, best_sad)
        best_y = np.where(better, base_y + dy, best_y)
        best_x = np.where(better, base_x + dx, best_x)
    return best_y, best_x


def median_flow(prev: Frame, cur: Frame, scale=4, block=8, radius=4) -> float:
    """Median block displacement between two frames, in full-frame pixels.

    Each block x block tile of the frames downsampled by `scale` is searched
    exhaustively (SAD) within +-radius, then the match is refined at full
    resolution within +-(scale - 1) pixels.
    """
    _check_same_size(prev, cur)
    height = max(block, prev.height // scale)
    width = max(block, prev.width // scale)
    blocks_y = height // block
    blocks_x = width // block
    zero = np.zeros((blocks_y, blocks_x), dtype=int)

    a = resize_bilinear(prev.as_float(), height, width)[:blocks_y * block, :blocks_x * block]
    b = resize_bilinear(cur.as_float(), height, width)
    padded = np.pad(b, radius, mode="constant", constant_values=np.nan)
    coarse_y, coarse_x = _block_search(a, padded, radius, block, zero, zero, _displacements(radius))
    full_block = block * scale
    a = prev.as_float()[:blocks_y * full_block, :blocks_x * full_block]
    if a.shape != (blocks_y * full_block, blocks_x * full_block):
        return float(np.median(np.hypot(coarse_y, coarse_x)) * scale)
    pad = (radius + 1) * scale
    padded = np.pad(cur.as_float(), pad, mode="constant", constant_values=np.nan)
    fine_y, fine_x = _block_search(a, padded, pad, full_block, coarse_y * scale, coarse_x * scale,
                                   _displacements(scale - 1))
    return float(np.median(np.hypot(fine_y, fine_x)))


def embed(frame: Frame) -> np.ndarray:
    """Unit-norm 64-d embedding: 63 low-frequency AC terms plus mean intensity."""
    pixels = frame.as_float()
    small = resize_bilinear(pixels, 16, 16)
    coefficients = _dct2(small)[:8, :8].flatten()[1:]
    vector = np.concatenate([coefficients, [small.mean()]])
    norm = np.linalg.norm(vector)
    if norm == 0:
        unit = np.zeros(EMBEDDING_DIM)
        unit[0] = 1.0
        return unit
    return vector / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise DimensionMismatch(f"embedding dimensions differ: {a.shape} vs {b.shape}")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def write_pgm(frame: Frame, path):
    Image.fromarray(frame.pixels, mode="L").save(Path(path), format="PPM")


def read_pgm(path, t=0) -> Frame:
    with Image.open(Path(path)) as image:
        pixels = np.array(image.convert("L"), dtype=np.uint8)
    return Frame(pixels.shape[1], pixels.shape[0], pixels, t)
