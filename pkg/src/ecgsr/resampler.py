"""Sampling-rate reduction and linear-interpolation baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_data import DataError

MODES = ("decimate", "linear_interp")


def integer_ratio(source_fs, target_fs):
    """``source_fs / target_fs`` as an int, or ``None`` when it is not integral."""
    q = source_fs / target_fs
    k = int(round(q))
    return k if k >= 1 and abs(q - k) < 1e-9 * max(1.0, q) else None


@dataclass(frozen=True)
class ResampleSpec:
    source_fs: float
    target_fs: float
    mode: str = "decimate"
    anti_alias: bool = False

    def __post_init__(self):
        if not (self.source_fs > 0 and self.target_fs > 0):
            raise DataError("sampling rates must be positive")
        if self.mode not in MODES:
            raise DataError(f"unknown resample mode {self.mode!r}")
        if self.target_fs > self.source_fs:
            raise DataError(f"target {self.target_fs} Hz exceeds source {self.source_fs} Hz")
        if self.mode == "decimate" and integer_ratio(self.source_fs, self.target_fs) is None:
            raise DataError(
                f"decimation needs an integer ratio; {self.source_fs}/{self.target_fs} is not one"
            )

    @classmethod
    def auto(cls, source_fs, target_fs, anti_alias=False):
        """Decimate when the ratio is integral, interpolate otherwise."""
        mode = "decimate" if integer_ratio(source_fs, target_fs) is not None else "linear_interp"
        return cls(source_fs, target_fs, mode, anti_alias)


def _interp(x, source_fs, target_fs, n_out):
    # positions in source-sample units; exact integers land exactly on source samples
    pos = np.arange(n_out) * source_fs / target_fs
    return np.interp(pos, np.arange(x.size), x)  # holds the last value past the end


def moving_average(x, width):
    """Boxcar FIR: ``out[i] = mean(x[i : i + width])``, shrinking at the tail."""
    c = np.concatenate([[0.0], np.cumsum(x)])
    hi = np.minimum(np.arange(x.size) + width, x.size)
    return (c[hi] - c[: x.size]) / (hi - np.arange(x.size))


def downsample(rec, spec):
    if abs(rec.fs - spec.source_fs) > 1e-9 * spec.source_fs:
        raise DataError(f"{rec.id}: recording is {rec.fs} Hz, spec expects {spec.source_fs} Hz")
    x = rec.samples
    k = integer_ratio(spec.source_fs, spec.target_fs)
    if spec.anti_alias:
        width = k if k is not None else int(np.ceil(spec.source_fs / spec.target_fs))
        x = moving_average(x, width)
    if spec.mode == "decimate":
        y = x[::k]
    else:
        n_out = int(round(x.size * spec.target_fs / spec.source_fs))
        y = _interp(x, spec.source_fs, spec.target_fs, max(n_out, 1))
    return rec.with_samples(y, fs=spec.target_fs)


def upsample_linear(rec, target_fs):
    if target_fs < rec.fs:
        raise DataError(f"upsample target {target_fs} Hz is below the recording's {rec.fs} Hz")
    n_out = int(round(rec.samples.size * target_fs / rec.fs))
    return rec.with_samples(_interp(rec.samples, rec.fs, target_fs, n_out), fs=target_fs)
