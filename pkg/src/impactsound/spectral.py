"""Discrete Fourier transforms and one-sided amplitude spectra."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBandError, EmptySignalError


@dataclass(frozen=True)
class Spectrum:
    freqs_hz: np.ndarray
    amps: np.ndarray
    sample_rate_hz: float
    n_fft: int

    def __post_init__(self):
        if len(self.freqs_hz) != len(self.amps) or len(self.amps) == 0:
            raise ValueError("spectrum needs equal-length, non-empty freqs and amps")

    def __len__(self):
        return len(self.amps)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("freq_hz,amp\n")
        for f, a in zip(self.freqs_hz, self.amps):
            out.write(f"{float(f)!r},{float(a)!r}\n")
        return out.getvalue()


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n) - 1).bit_length()


def dft_naive(samples) -> np.ndarray:
    """Direct O(N^2) evaluation of sum_n x(n) exp(-2j*pi*k*n/N). Test oracle."""
    x = np.asarray(samples, dtype=np.complex128)
    n = x.size
    if n == 0:
        raise EmptySignalError("DFT of an empty sequence")
    # exponent reduced mod N before the exp keeps the phase exact for large k*n
    twiddle = np.exp(-2j * np.pi * np.arange(n) / n)
    out = np.empty(n, dtype=np.complex128)
    rows = np.arange(n)
    step = max(1, (1 << 22) // n)
    for start in range(0, n, step):
        k = rows[start:start + step, None]
        out[start:start + step] = twiddle[(k * rows[None, :]) % n] @ x
    return out


def _bit_reverse_permutation(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(samples) -> np.ndarray:
    """Iterative radix-2 FFT; input is zero-padded to the next power of two."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise EmptySignalError("FFT of an empty sequence")
    n = next_pow2(x.size)
    a = np.zeros(n, dtype=np.complex128)
    a[:x.size] = x
    a = a[_bit_reverse_permutation(n)]
    size = 2
    while size <= n:
        half = size // 2
        w = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(-1, size)
        even = blocks[:, :half]
        odd = blocks[:, half:] * w
        a = np.concatenate([even + odd, even - odd], axis=1).reshape(n)
        size *= 2
    return a


def one_sided_spectrum(recording, include_dc=False, band=None, window=None) -> Spectrum:
    """Amplitude spectrum ``a_k = |S_k|`` at ``f_k = k * rate / N'``.

    ``k`` runs to N'/2 inclusive, starting at 0 only with ``include_dc``.
    ``band=(fmin, fmax)`` keeps bins inside the closed interval. ``window``
    may be ``None`` or ``"hann"``.
    """
    x = np.asarray(recording.samples, dtype=np.float64)
    if window == "hann":
        x = x * np.hanning(x.size)
    elif window not in (None, "none"):
        raise ValueError(f"unknown window {window!r}")
    spec = fft(x)
    n = spec.size
    rate = float(recording.sample_rate_hz)
    k = np.arange(0 if include_dc else 1, n // 2 + 1)
    freqs = k * rate / n
    amps = np.abs(spec[k])
    if band is not None:
        fmin, fmax = band
        keep = (freqs >= fmin) & (freqs <= fmax)
        if not keep.any():
            raise EmptyBandError(f"no spectral bins inside band [{fmin}, {fmax}] Hz")
        freqs, amps = freqs[keep], amps[keep]
    if freqs.size == 0:
        raise EmptyBandError("spectrum has no bins (single-sample recording without DC)")
    return Spectrum(freqs, amps, rate, n)
