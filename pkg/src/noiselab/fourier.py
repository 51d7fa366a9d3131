"""Power-of-two 2D Fourier transform and radial band indexing.

The forward transform is the unnormalized DFT; the inverse carries the
1/(H*W) factor, so ifft2(fft2(x)) == x up to roundoff. Sizes are
restricted to powers of two (radix-2 butterflies); the default images
are 16x16.

Radial frequency is measured on the full centered spectrum and
normalized so the corner bin (Nyquist in both axes) has radius 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.intp)
    for i in range(n):
        r, x = 0, i
        for _ in range(bits):
            r = (r << 1) | (x & 1)
            x >>= 1
        rev[i] = r
    return rev


def _fft_last_axis(a: np.ndarray, inverse: bool) -> np.ndarray:
    """Iterative radix-2 transform along the last axis (length power of two)."""
    n = a.shape[-1]
    if n == 1:
        return a.astype(np.complex128, copy=True)
    y = np.ascontiguousarray(a[..., _bit_reversal(n)], dtype=np.complex128)
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        blocks = y.reshape(y.shape[:-1] + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        y = np.concatenate([even + odd, even - odd], axis=-1).reshape(y.shape[:-1] + (n,))
        size *= 2
    return y


@lru_cache(maxsize=None)
def radial_index(height: int, width: int) -> np.ndarray:
    """Normalized centered radius per bin, in natural (unshifted) DFT order."""
    fu = (np.arange(height) + height // 2) % height - height // 2
    fv = (np.arange(width) + width // 2) % width - width // 2
    r = np.sqrt(fu[:, None] ** 2.0 + fv[None, :] ** 2.0)
    r /= np.sqrt((height / 2) ** 2 + (width / 2) ** 2)
    r.flags.writeable = False
    return r


@dataclass
class FrequencySpectrum:
    height: int
    width: int
    real: np.ndarray  # (C, H, W)
    imag: np.ndarray  # (C, H, W)

    @property
    def complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)

    @property
    def radius(self) -> np.ndarray:
        return radial_index(self.height, self.width)

    def energy(self) -> float:
        """Total spectral energy, Parseval-normalized to match the spatial sum of squares."""
        return float(np.sum(self.real ** 2 + self.imag ** 2) / (self.height * self.width))


def _check_image(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"expected (C, H, W) or (H, W), got shape {x.shape}")
    _, h, w = x.shape
    if not (_is_pow2(h) and _is_pow2(w)):
        raise ValueError(f"image sides must be powers of two, got {h}x{w}")
    return x


def fft2(x: np.ndarray) -> FrequencySpectrum:
    x = _check_image(x)
    _, h, w = x.shape
    y = _fft_last_axis(x.astype(np.complex128), inverse=False)
    y = np.swapaxes(_fft_last_axis(np.swapaxes(y, -1, -2), inverse=False), -1, -2)
    return FrequencySpectrum(height=h, width=w, real=y.real.copy(), imag=y.imag.copy())


def ifft2(spec: FrequencySpectrum, imag_tol: float = 1e-9) -> np.ndarray:
    y = spec.complex
    y = _fft_last_axis(y, inverse=True)
    y = np.swapaxes(_fft_last_axis(np.swapaxes(y, -1, -2), inverse=True), -1, -2)
    y /= spec.height * spec.width
    residue = float(np.max(np.abs(y.imag))) if y.size else 0.0
    if residue > imag_tol:
        raise ValueError(f"inverse transform is not real: imaginary residue {residue:.3e}")
    return np.ascontiguousarray(y.real)


def band_mask(spec_shape: tuple[int, int], r_lo: float, r_hi: float) -> np.ndarray:
    """Bins whose centered radius lies in [r_lo, r_hi); r_hi=1 closes the top end."""
    h, w = spec_shape
    if not (0.0 <= r_lo < r_hi <= 1.0):
        raise ValueError(f"need 0 <= r_lo < r_hi <= 1, got ({r_lo}, {r_hi})")
    r = radial_index(h, w)
    upper = r <= 1.0 if r_hi >= 1.0 else r < r_hi
    return (r >= r_lo) & upper


def hermitian_symmetrize(spec: FrequencySpectrum) -> FrequencySpectrum:
    """Project onto the Hermitian subspace so the inverse transform is real."""
    c = spec.complex
    mirrored = c[:, ::-1, ::-1]
    mirrored = np.roll(mirrored, shift=(1, 1), axis=(-2, -1))  # re-align bin 0
    sym = 0.5 * (c + np.conj(mirrored))
    return FrequencySpectrum(spec.height, spec.width, sym.real.copy(), sym.imag.copy())
