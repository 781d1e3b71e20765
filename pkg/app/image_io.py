"""Load images as 8-bit grayscale and cut them into 256x256 analysis blocks."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

try:
    from .config import BLOCK_SIZE
    from .errors import DecodeError, ShapeError, TooSmall
except ImportError:
    from config import BLOCK_SIZE
    from errors import DecodeError, ShapeError, TooSmall

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff")


@dataclass(frozen=True)
class GrayImage:
    """Row-major 8-bit grayscale image, at least one block in each dimension."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.array(self.pixels)
        if pixels.ndim != 2:
            raise ShapeError(f"expected a 2-D pixel array, got shape {pixels.shape}")
        if pixels.dtype != np.uint8:
            raise ShapeError(f"expected uint8 pixels, got {pixels.dtype}")
        if pixels.shape[0] < BLOCK_SIZE or pixels.shape[1] < BLOCK_SIZE:
            raise TooSmall(
                f"image is {pixels.shape[1]}x{pixels.shape[0]}, "
                f"both sides must be >= {BLOCK_SIZE}"
            )
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @classmethod
    def from_array(cls, values) -> "GrayImage":
        """Round and clamp any real array into an 8-bit image."""
        arr = np.asarray(values, dtype=float)
        arr = np.clip(np.floor(arr + 0.5), 0, 255).astype(np.uint8)
        return cls(arr)


@dataclass(frozen=True)
class BlockSet:
    blocks: Tuple[np.ndarray, ...]
    origins: Tuple[Tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.blocks)


def luma_bt601(rgb: np.ndarray) -> np.ndarray:
    """0.299R + 0.587G + 0.114B rounded half-up, in integer arithmetic."""
    rgb = rgb.astype(np.int64)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return y.astype(np.uint8)


def _to_gray_array(img: Image.Image) -> np.ndarray:
    mode = img.mode
    if mode == "L":
        return np.asarray(img, dtype=np.uint8)
    if mode == "LA":
        return np.asarray(img, dtype=np.uint8)[..., 0]
    if mode in {"I;16", "I;16B", "I;16L", "I"}:
        # Wider integer gray scales are mapped linearly onto 0..255.
        values = np.asarray(img, dtype=np.int64)
        top = 65535 if mode.startswith("I;16") or values.max(initial=0) > 255 else 255
        return ((values * 255 * 2 + top) // (2 * top)).clip(0, 255).astype(np.uint8)
    if mode == "F":
        values = np.asarray(img, dtype=float)
        return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)
    if mode == "1":
        return np.asarray(img.convert("L"), dtype=np.uint8)
    return luma_bt601(np.asarray(img.convert("RGB"), dtype=np.uint8))


def load_gray(path) -> GrayImage:
    """Decode an image file and convert it to 8-bit grayscale."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            gray = _to_gray_array(img)
    except FileNotFoundError as exc:
        raise DecodeError(f"image not found: {path}") from exc
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc

    logger.debug("loaded %s as %dx%d gray", path, gray.shape[1], gray.shape[0])
    return GrayImage(gray)


def save_gray(img: GrayImage, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(img.pixels)).save(path)


def _anchors(length: int, size: int) -> List[int]:
    anchors = list(range(0, length - size + 1, size))
    if length % size:
        anchors.append(length - size)
    return anchors


def fragment(img: GrayImage, size: int = BLOCK_SIZE) -> BlockSet:
    """Tile the image on a size-grid; partial edges get one extra flush row/column."""
    rows = _anchors(img.height, size)
    cols = _anchors(img.width, size)
    origins = tuple((r, c) for r in rows for c in cols)
    blocks = tuple(img.pixels[r : r + size, c : c + size] for r, c in origins)
    return BlockSet(blocks=blocks, origins=origins)


def list_images(folder) -> List[Path]:
    """Image files of a directory in sorted (deterministic) order."""
    folder = Path(folder)
    return sorted(p for p in folder.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
