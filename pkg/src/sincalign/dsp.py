"""Windowed-sinc delay kernels and centered one-dimensional convolution.

The kernel support is symmetric about zero: sample index n runs over
[-half_len, half_len - 1]. A delay of zero centers the main lobe, so a
positive delay shifts the lobe to the right and the convolution output
lags the input. Boundary handling is zero padding throughout, which keeps
the convolution linear; callers that care about edge effects can discard
the first and last ``half_len`` output samples.

All arithmetic is double precision. The gradient checks in the test suite
require it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SampledSignal",
    "SincKernel",
    "make_sinc_kernel",
    "sinc_kernel_grad_tau",
    "convolve_same",
    "apply_delay",
]


@dataclass
class SampledSignal:
    """One-dimensional real sequence with an explicit sampling frequency."""

    values: np.ndarray
    fs: float

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError("signal must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("signal values must all be finite")
        if not self.fs > 0:
            raise ValueError(f"sampling frequency must be positive, got {self.fs}")

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class SincKernel:
    """Parameters of a time-shifted, rectangular-windowed sinc filter.

    tau: delay in seconds applied by the kernel.
    fc: cutoff frequency in Hz; fc = fs/2 makes the kernel an interpolating
        delta and the filter a pure delay.
    fs: sampling frequency of the signals the kernel will convolve.
    half_len: half window length in samples; the discrete support is
        n in [-half_len, half_len - 1], so the stored vector has
        2 * half_len coefficients.
    """

    tau: float
    fc: float
    fs: float
    half_len: int

    def __post_init__(self) -> None:
        if not self.fs > 0:
            raise ValueError(f"fs must be positive, got {self.fs}")
        if not 0 < self.fc <= self.fs / 2:
            raise ValueError(
                f"cutoff must satisfy 0 < fc <= fs/2, got fc={self.fc} fs={self.fs}"
            )
        if int(self.half_len) != self.half_len or self.half_len < 1:
            raise ValueError(f"half_len must be a positive integer, got {self.half_len}")
        if not abs(self.tau) < self.half_len / self.fs:
            raise ValueError(
                f"delay {self.tau}s puts the main lobe outside the "
                f"{self.half_len / self.fs}s half window"
            )


def make_sinc_kernel(k: SincKernel) -> np.ndarray:
    """Coefficients (2*fc/fs) * sinc(2*fc*(n/fs - tau)) on the kernel support.

    sinc is the normalized form sin(pi t) / (pi t). The rectangular window
    is implicit: coefficients outside the support are simply absent.
    """
    n = np.arange(-k.half_len, k.half_len, dtype=np.float64)
    u = 2.0 * k.fc * (n / k.fs - k.tau)
    return (2.0 * k.fc / k.fs) * np.sinc(u)


def _sinc_deriv(u: np.ndarray) -> np.ndarray:
    # d/du of sin(pi u)/(pi u). The closed form (cos(pi u) - sinc(u))/u
    # cancels catastrophically near zero, so a Taylor series takes over
    # below |u| = 1e-3; both branches agree to ~1e-12 at the switch point.
    u = np.asarray(u, dtype=np.float64)
    small = np.abs(u) < 1e-3
    safe = np.where(small, 1.0, u)
    exact = (np.cos(np.pi * u) - np.sinc(u)) / safe
    p2 = (np.pi * u) ** 2
    series = u * (np.pi**2) * (-1.0 / 3.0 + p2 / 30.0 - p2 * p2 / 840.0)
    return np.where(small, series, exact)


def sinc_kernel_grad_tau(k: SincKernel) -> np.ndarray:
    """Element-wise derivative of the kernel coefficients with respect to tau."""
    n = np.arange(-k.half_len, k.half_len, dtype=np.float64)
    u = 2.0 * k.fc * (n / k.fs - k.tau)
    return (2.0 * k.fc / k.fs) * (-2.0 * k.fc) * _sinc_deriv(u)


def convolve_same(x: SampledSignal, h: np.ndarray, center_index: int) -> SampledSignal:
    """Zero-padded convolution returning a signal as long as the input.

    output[t] = sum_j x[t - (j - center_index)] * h[j], with x taken as zero
    outside its support. center_index selects which kernel tap is aligned
    with the current output sample.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1 or h.size == 0:
        raise ValueError("kernel must be a non-empty 1-D vector")
    if not 0 <= center_index < h.size:
        raise ValueError(
            f"center_index {center_index} outside kernel of length {h.size}"
        )
    out = _convolve_same_arr(x.values, h, center_index)
    return SampledSignal(out, x.fs)


def _convolve_same_arr(x: np.ndarray, h: np.ndarray, center_index: int) -> np.ndarray:
    # Full linear convolution, then the window of input length starting at
    # the center tap.
    full = np.convolve(x, h)
    return full[center_index : center_index + x.size]


def apply_delay(x: SampledSignal, tau: float, fc: float, half_len: int) -> SampledSignal:
    """Delay a signal by tau seconds through a windowed-sinc convolution.

    With fc = fs/2 and tau an integer number of sample periods this is an
    exact shift; otherwise it is a bandlimited fractional delay combined
    with a low-pass at fc.
    """
    k = SincKernel(tau=tau, fc=fc, fs=x.fs, half_len=half_len)
    return convolve_same(x, make_sinc_kernel(k), k.half_len)
