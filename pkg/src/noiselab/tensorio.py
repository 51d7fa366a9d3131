"""Tensor framing and image export.

Tensors are plain float64 numpy arrays, row-major. On disk they use a
small self-describing binary framing:

    8 bytes   magic "NFTENSOR"
    4 bytes   rank, little-endian uint32
    4*rank    dims, little-endian uint32 each
    8*n       data, little-endian float64, row-major

Images export as binary PGM (P5) after affine mapping [min, max] -> [0, 255];
a constant image maps to all zeros.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"NFTENSOR"


def assert_finite(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"{name} contains non-finite values")
    return x


def tensor_bytes(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    head = MAGIC + struct.pack("<I", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.astype("<f8").tobytes()


def tensor_from_bytes(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one framed tensor, returning (array, bytes consumed)."""
    if buf[offset:offset + 8] != MAGIC:
        raise ValueError("bad tensor magic")
    (rank,) = struct.unpack_from("<I", buf, offset + 8)
    dims = struct.unpack_from(f"<{rank}I", buf, offset + 12)
    n = int(np.prod(dims, dtype=np.int64)) if rank else 1
    start = offset + 12 + 4 * rank
    data = np.frombuffer(buf, dtype="<f8", count=n, offset=start)
    arr = data.astype(np.float64).reshape(dims)
    return arr, start + 8 * n - offset


def save_tensor(path, arr: np.ndarray) -> None:
    Path(path).write_bytes(tensor_bytes(arr))


def load_tensor(path) -> np.ndarray:
    arr, _ = tensor_from_bytes(Path(path).read_bytes())
    return arr


def to_pgm_bytes(img: np.ndarray) -> bytes:
    """Quantize one 2D image to 8 bits and frame it as binary PGM."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[0] == 1:
        img = img[0]
    if img.ndim != 2:
        raise ValueError(f"PGM export expects a 2D image, got shape {img.shape}")
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        q = np.rint((img - lo) * (255.0 / (hi - lo)))
    else:
        q = np.zeros_like(img)
    data = q.astype(np.uint8).tobytes()
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode() + data


def write_pgm(path, img: np.ndarray) -> None:
    Path(path).write_bytes(to_pgm_bytes(img))


def write_pgm_grid(path, images, cols: int = 8, pad: int = 1) -> None:
    """Tile single-channel images into one PGM, padding with the minimum value."""
    imgs = [np.asarray(im, dtype=np.float64) for im in images]
    imgs = [im[0] if im.ndim == 3 else im for im in imgs]
    h, w = imgs[0].shape
    cols = min(cols, len(imgs))
    rows = (len(imgs) + cols - 1) // cols
    fill = min(float(im.min()) for im in imgs)
    canvas = np.full((rows * (h + pad) - pad, cols * (w + pad) - pad), fill)
    for k, im in enumerate(imgs):
        r, c = divmod(k, cols)
        canvas[r * (h + pad):r * (h + pad) + h, c * (w + pad):c * (w + pad) + w] = im
    write_pgm(path, canvas)
