"""Offset-table convolutions: dense reference loops and FFT fast paths.

The dense loops are the reference semantics (plain sequential accumulation in
ascending source order, so an independent double-loop oracle reproduces them
bit for bit).  The FFT paths compute the same zero-padded linear convolution
and must agree with the dense loops to 1e-12 per entry; plans precompute the
kernel spectrum once and are reused across timesteps.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy import fft as sfft

__all__ = ["dense_conv_1d", "dense_conv_2d", "FFTConv1D", "FFTConv2D"]

_WORKERS = 2


@njit(cache=True)
def _conv1(table, f, out):
    n = f.shape[0]
    for i in range(n):
        acc = 0.0
        base = i + n - 1
        for j in range(n):
            acc += table[base - j] * f[j]
        out[i] = acc


@njit(cache=True)
def _conv2(table, f, out):
    n1, n2 = f.shape
    for a in range(n1):
        for b in range(n2):
            acc = 0.0
            for k in range(n1):
                trow = table[a - k + n1 - 1]
                base = b + n2 - 1
                for l in range(n2):
                    acc += trow[base - l] * f[k, l]
            out[a, b] = acc


def dense_conv_1d(table: np.ndarray, f: np.ndarray) -> np.ndarray:
    """out[i] = sum_j table[i - j + n - 1] * f[j] for i, j in 0..n-1."""
    n = f.shape[0]
    if table.shape != (2 * n - 1,):
        raise ValueError(f"table length {table.shape[0]} does not fit field length {n}")
    out = np.empty(n)
    _conv1(table, f, out)
    return out


def dense_conv_2d(table: np.ndarray, f: np.ndarray) -> np.ndarray:
    """2D analogue of :func:`dense_conv_1d` on a (2*n1-1, 2*n2-1) table."""
    n1, n2 = f.shape
    if table.shape != (2 * n1 - 1, 2 * n2 - 1):
        raise ValueError(f"table shape {table.shape} does not fit field shape {f.shape}")
    out = np.empty((n1, n2))
    _conv2(table, f, out)
    return out


class FFTConv1D:
    """Zero-padded linear convolution with a fixed offset table."""

    def __init__(self, table: np.ndarray, field_len: int):
        n = field_len
        if table.shape != (2 * n - 1,):
            raise ValueError("table length does not fit field length")
        self.n = n
        self.size = sfft.next_fast_len(3 * n - 2, real=True)
        self.table_hat = sfft.rfft(table, self.size)

    def __call__(self, f: np.ndarray) -> np.ndarray:
        if f.shape != (self.n,):
            raise ValueError("field length does not match plan")
        fhat = sfft.rfft(f, self.size)
        full = sfft.irfft(fhat * self.table_hat, self.size)
        return full[self.n - 1:2 * self.n - 1]


class FFTConv2D:
    """2D zero-padded linear convolution with a fixed offset table."""

    def __init__(self, table: np.ndarray, field_shape: tuple[int, int]):
        n1, n2 = field_shape
        if table.shape != (2 * n1 - 1, 2 * n2 - 1):
            raise ValueError("table shape does not fit field shape")
        self.shape = (n1, n2)
        self.size = (sfft.next_fast_len(3 * n1 - 2, real=True),
                     sfft.next_fast_len(3 * n2 - 2, real=True))
        self.table_hat = sfft.rfft2(table, self.size, workers=_WORKERS)

    def __call__(self, f: np.ndarray) -> np.ndarray:
        if f.shape != self.shape:
            raise ValueError("field shape does not match plan")
        n1, n2 = self.shape
        fhat = sfft.rfft2(f, self.size, workers=_WORKERS)
        fhat *= self.table_hat
        full = sfft.irfft2(fhat, self.size, workers=_WORKERS)
        return np.ascontiguousarray(full[n1 - 1:2 * n1 - 1, n2 - 1:2 * n2 - 1])
