"""Orthonormal periodized Daubechies-4 wavelet basis for square images.

Coefficients use the usual Mallat layout: after ``levels`` stages the coarsest
approximation occupies the top-left ``side / 2**levels`` block. Vectors are
row-major flattened images.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import hard_threshold

__all__ = ["DB4_LOWPASS", "WaveletBasis", "IdentityBasis", "analyze", "synthesize_coeffs",
           "sparsify_top_k"]

_S3 = np.sqrt(3.0)
DB4_LOWPASS = np.array([1 + _S3, 3 + _S3, 3 - _S3, 1 - _S3]) / (4 * np.sqrt(2.0))


def _highpass(h):
    return np.array([(-1) ** t * h[len(h) - 1 - t] for t in range(len(h))])


def _analysis_1d(x, h, g):
    # periodized filtering + downsampling along the last axis
    N = x.shape[-1]
    idx = (2 * np.arange(N // 2)[:, None] + np.arange(len(h))[None, :]) % N
    taps = x[..., idx]
    return taps @ h, taps @ g


def _synthesis_1d(a, d, h, g):
    half = a.shape[-1]
    N = 2 * half
    out = np.zeros(a.shape[:-1] + (N,))
    base = 2 * np.arange(half)
    for t in range(len(h)):
        # np.add.at is unnecessary: for fixed t the target indices are distinct
        out[..., (base + t) % N] += h[t] * a + g[t] * d
    return out


@dataclass(frozen=True)
class WaveletBasis:
    """Separable 2D periodized wavelet transform acting on ``side x side`` images."""

    side: int
    levels: int | None = None
    filter: np.ndarray = field(default_factory=lambda: DB4_LOWPASS.copy(), repr=False)

    def __post_init__(self):
        side = self.side
        if side < 2 or side & (side - 1):
            raise ValueError(f"side must be a power of two >= 2, got {side}")
        max_levels = int(np.log2(side))
        if self.levels is None:
            object.__setattr__(self, "levels", max(1, max_levels - 1))
        if not (1 <= self.levels <= max_levels):
            raise ValueError(f"levels must lie in [1, {max_levels}] for side {side}")

    @property
    def n(self) -> int:
        return self.side * self.side

    def _image(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}, got shape {v.shape}")
        return v.reshape(self.side, self.side)

    def analyze(self, image) -> np.ndarray:
        h = self.filter
        g = _highpass(h)
        c = self._image(image).copy()
        s = self.side
        for _ in range(self.levels):
            blk = c[:s, :s]
            a, d = _analysis_1d(blk, h, g)
            blk = np.concatenate([a, d], axis=1)
            a, d = _analysis_1d(blk.T, h, g)
            c[:s, :s] = np.concatenate([a, d], axis=1).T
            s //= 2
        return c.ravel()

    def synthesize(self, z) -> np.ndarray:
        h = self.filter
        g = _highpass(h)
        c = self._image(z).copy()
        s = self.side >> (self.levels - 1)
        for _ in range(self.levels):
            half = s // 2
            blk = c[:s, :s]
            cols = _synthesis_1d(blk[:half, :].T, blk[half:, :].T, h, g).T
            c[:s, :s] = _synthesis_1d(cols[:, :half], cols[:, half:], h, g)
            s *= 2
        return c.ravel()


class IdentityBasis:
    """Canonical basis; the solver default when no wavelet basis is given."""

    def analyze(self, v):
        return np.asarray(v, dtype=np.float64)

    def synthesize(self, z):
        return np.asarray(z, dtype=np.float64)


def analyze(basis: WaveletBasis, image) -> np.ndarray:
    return basis.analyze(image)


def synthesize_coeffs(basis: WaveletBasis, z) -> np.ndarray:
    return basis.synthesize(z)


def sparsify_top_k(basis: WaveletBasis, image, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Best ``k``-term approximation of ``image`` in ``basis``.

    Returns ``(sparse_image, coeffs)`` where ``coeffs`` has at most ``k`` nonzeros.
    """
    coeffs = hard_threshold(basis.analyze(image), k)
    return basis.synthesize(coeffs), coeffs
