"""Periodic 1D grid with spectral calculus.

Fields are plain numpy arrays sampled at the grid nodes; the last axis is
the spatial one, so a stack of ``N`` fields with shape ``(N, M)`` goes
through every operator in one call.

Transform convention: forward FFT unnormalized, inverse carries ``1/M``
(numpy's default). Wavenumbers are stored in FFT order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform periodic grid on ``[-L, L)`` with ``M`` nodes."""

    L: float
    M: int
    h: float = field(init=False)
    x: np.ndarray = field(init=False, repr=False)
    k: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"half_length L must be positive, got {self.L!r}")
        if int(self.M) != self.M or not _is_power_of_two(int(self.M)):
            raise ValueError(f"points M must be a power of two, got {self.M!r}")
        if self.M < 16:
            raise ValueError(f"points M must be at least 16, got {self.M}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "M", int(self.M))
        h = 2.0 * self.L / self.M
        x = -self.L + h * np.arange(self.M)
        # k_m = pi m / L, m in [-M/2, M/2), laid out in FFT order
        m = np.fft.fftfreq(self.M, d=1.0 / self.M)
        k = np.pi * m / self.L
        x.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "k", k)

    def __eq__(self, other):
        return isinstance(other, Grid) and self.L == other.L and self.M == other.M

    def __hash__(self):
        return hash((self.L, self.M))

    @property
    def nyquist(self) -> int:
        """Index of the unpaired ``m = -M/2`` mode in FFT order."""
        return self.M // 2

    def _check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.shape[-1] != self.M:
            raise ValueError(f"field has {f.shape[-1]} samples, grid has {self.M}")
        return f

    def deriv(self, f, order: int = 1) -> np.ndarray:
        """Spectral derivative of ``f`` of the given order (1, 2 or 3).

        Odd orders zero the Nyquist mode so real input stays real.
        """
        if order not in (1, 2, 3):
            raise ValueError(f"derivative order must be 1, 2 or 3, got {order!r}")
        f = self._check(f)
        symbol = (1j * self.k) ** order
        if order % 2:
            symbol[self.nyquist] = 0.0
        out = np.fft.ifft(np.fft.fft(f, axis=-1) * symbol, axis=-1)
        return out if np.iscomplexobj(f) else out.real

    def integrate(self, f) -> float | np.ndarray:
        """Periodic trapezoid rule, ``h * sum(f)`` along the last axis."""
        f = self._check(f)
        return self.h * np.sum(f, axis=-1)

    def helmholtz_solve(self, f, s: float) -> np.ndarray:
        """Solve ``-g'' + s g = f`` by dividing Fourier modes by ``k^2 + s``."""
        if not s > 0:
            raise ValueError(f"helmholtz shift s must be positive, got {s!r}")
        f = self._check(f)
        out = np.fft.ifft(np.fft.fft(f, axis=-1) / (self.k**2 + s), axis=-1)
        return out if np.iscomplexobj(f) else out.real

    def shift(self, f, dx: float) -> np.ndarray:
        """Translate ``f`` by ``dx`` (``f(x - dx)``) through its trigonometric interpolant."""
        f = self._check(f)
        phase = np.exp(-1j * self.k * dx)
        phase[self.nyquist] = np.cos(self.k[self.nyquist] * dx)
        out = np.fft.ifft(np.fft.fft(f, axis=-1) * phase, axis=-1)
        return out if np.iscomplexobj(f) else out.real

    def interpolate_to(self, f, other: "Grid") -> np.ndarray:
        """Spectrally resample ``f`` onto ``other`` (same ``L``, any ``M``)."""
        if other.L != self.L:
            raise ValueError("spectral resampling needs equal half-lengths")
        f = self._check(f)
        fh = np.fft.fftshift(np.fft.fft(f, axis=-1), axes=-1)
        if other.M >= self.M:
            pad = (other.M - self.M) // 2
            widths = [(0, 0)] * (fh.ndim - 1) + [(pad, pad)]
            fh = np.pad(fh, widths)
            # split the old Nyquist mode symmetrically so real stays real
            if other.M > self.M:
                fh[..., pad] *= 0.5
                fh[..., pad + self.M] = fh[..., pad]
        else:
            cut = (self.M - other.M) // 2
            fh = fh[..., cut : cut + other.M].copy()
            fh[..., 0] = 0.0
        out = np.fft.ifft(np.fft.ifftshift(fh, axes=-1), axis=-1) * (other.M / self.M)
        return out if np.iscomplexobj(f) else out.real


def make_grid(L: float, M: int) -> Grid:
    return Grid(L, M)


def plancherel_sum(grid: Grid, f) -> float:
    """``integrate(|f|^2)`` evaluated from the unnormalized FFT coefficients."""
    fh = np.fft.fft(np.asarray(f), axis=-1)
    return grid.h / grid.M * np.sum(np.abs(fh) ** 2, axis=-1)


# -- field dump format -------------------------------------------------------
#
# One JSON header line {"M": ..., "L": ..., "kind": "real"|"complex"}, then
# little-endian float64 samples; complex samples are interleaved (re, im).
# Stacked fields add an optional "count" key and are stored row after row.


def write_field(path, grid: Grid, values) -> None:
    values = np.asarray(values)
    if values.shape[-1] != grid.M:
        raise ValueError(f"field has {values.shape[-1]} samples, grid has {grid.M}")
    if not np.all(np.isfinite(values)):
        raise ValueError("refusing to dump a field with non-finite values")
    kind = "complex" if np.iscomplexobj(values) else "real"
    header = {"M": grid.M, "L": grid.L, "kind": kind}
    if values.ndim == 2:
        header["count"] = values.shape[0]
    elif values.ndim != 1:
        raise ValueError("only single fields or 2D stacks can be dumped")
    if kind == "complex":
        raw = np.ascontiguousarray(values, dtype="<c16").view("<f8")
    else:
        raw = np.ascontiguousarray(values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(raw.tobytes())


def read_field(path) -> tuple[Grid, np.ndarray]:
    data = Path(path).read_bytes()
    newline = data.index(b"\n")
    header = json.loads(data[:newline])
    grid = Grid(header["L"], header["M"])
    raw = np.frombuffer(data[newline + 1 :], dtype="<f8")
    if header["kind"] == "complex":
        values = raw.view("<c16").astype(complex)
    elif header["kind"] == "real":
        values = raw.astype(float)
    else:
        raise ValueError(f"unknown field kind {header['kind']!r}")
    count = header.get("count")
    expected = grid.M * (count or 1)
    if values.size != expected:
        raise ValueError(f"{path}: expected {expected} samples, found {values.size}")
    if count is not None:
        values = values.reshape(count, grid.M)
    return grid, values
