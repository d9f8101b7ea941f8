"""OFDM 64-QAM baseband frames and the measurements taken on them.

A :class:`Waveform` holds dimensionless complex samples plus
``power_scale_mw``, the power in mW that a unit mean-square amplitude
represents, so ``power_dbm = 10 log10(power_scale_mw * mean|s|^2)`` exactly.
Generated frames have unit nominal mean-square amplitude and carry the
requested level in ``power_scale_mw``; demodulating with unit gain then
returns the transmitted constellation points.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .budget import NEG_INF

QAM64_LEVELS = np.array([-7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0])
QAM64_NORM = math.sqrt(42.0)


@dataclass(frozen=True)
class OfdmConfig:
    scs_hz: float = 120e3
    occupied_bw_hz: float = 400e6
    fft_size: int = 4096
    n_active_subcarriers: int = 3332
    cp_fraction: float = 1.0 / 16.0
    n_symbols: int = 14
    oversampling_factor: int = 2
    usable_fraction: float = 0.9

    def __post_init__(self):
        if self.fft_size <= 0 or self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")
        if self.n_active_subcarriers <= 0 or self.n_active_subcarriers % 2:
            raise ValueError("n_active_subcarriers must be a positive even count (split around DC)")
        if self.n_active_subcarriers > self.fft_size * self.usable_fraction:
            raise ValueError("n_active_subcarriers exceeds the usable part of the FFT")
        # the span includes the nulled DC slot
        if abs((self.n_active_subcarriers + 1) * self.scs_hz - self.occupied_bw_hz) > self.scs_hz:
            raise ValueError("active subcarriers must span occupied_bw_hz within one subcarrier")
        if self.n_symbols < 0:
            raise ValueError("n_symbols must be >= 0")
        if int(self.oversampling_factor) != self.oversampling_factor or self.oversampling_factor < 1:
            raise ValueError("oversampling_factor must be a positive integer")
        if not 0.0 <= self.cp_fraction < 1.0:
            raise ValueError("cp_fraction must lie in [0, 1)")
        if (self.nfft * self.cp_fraction) % 1:
            raise ValueError("cp_fraction * fft_size * oversampling_factor must be an integer")

    @property
    def nfft(self) -> int:
        """IFFT length including oversampling."""
        return self.fft_size * int(self.oversampling_factor)

    @property
    def cp_len(self) -> int:
        return int(round(self.nfft * self.cp_fraction))

    @property
    def symbol_len(self) -> int:
        return self.nfft + self.cp_len

    @property
    def frame_len(self) -> int:
        return self.symbol_len * self.n_symbols

    @property
    def sample_rate_hz(self) -> float:
        return self.fft_size * self.scs_hz * self.oversampling_factor

    @property
    def active_bw_hz(self) -> float:
        return self.n_active_subcarriers * self.scs_hz

    @property
    def band(self) -> tuple[float, float]:
        half = self.occupied_bw_hz / 2.0
        return (-half, half)

    def active_bins(self) -> np.ndarray:
        """FFT bin indices of the active subcarriers, lowest frequency first."""
        half = self.n_active_subcarriers // 2
        k = np.concatenate([np.arange(-half, 0), np.arange(1, half + 1)])
        return np.mod(k, self.nfft)


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: float
    power_scale_mw: float = 1.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.complex128)
        if s.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(s)):
            raise ValueError("waveform samples must be finite")
        if not (self.power_scale_mw > 0 and math.isfinite(self.power_scale_mw)):
            raise ValueError("power_scale_mw must be finite and > 0")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be > 0")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def mean_square(self) -> float:
        if len(self) == 0:
            return 0.0
        s = self.samples
        return float(np.mean(s.real * s.real + s.imag * s.imag))

    @property
    def power_dbm(self) -> float:
        ms = self.power_scale_mw * self.mean_square
        return NEG_INF if ms == 0 else 10.0 * math.log10(ms)

    def with_samples(self, samples: np.ndarray) -> "Waveform":
        return Waveform(samples, self.sample_rate_hz, self.power_scale_mw)

    def rescaled(self, power_scale_mw: float) -> "Waveform":
        """Same physical signal expressed against another power scale."""
        k = math.sqrt(self.power_scale_mw / power_scale_mw)
        return Waveform(self.samples * k, self.sample_rate_hz, power_scale_mw)

    def scaled_to_dbm(self, level_dbm: float) -> "Waveform":
        """Rescale the amplitude so the measured mean power is ``level_dbm``."""
        ms = self.mean_square
        if ms == 0:
            raise ValueError("cannot scale an all-zero waveform")
        target = 10.0 ** (level_dbm / 10.0) / self.power_scale_mw
        return self.with_samples(self.samples * math.sqrt(target / ms))

    def __add__(self, other: "Waveform") -> "Waveform":
        _check_compatible(self, other)
        other = other.rescaled(self.power_scale_mw)
        return self.with_samples(self.samples + other.samples)

    def __sub__(self, other: "Waveform") -> "Waveform":
        _check_compatible(self, other)
        other = other.rescaled(self.power_scale_mw)
        return self.with_samples(self.samples - other.samples)


def _check_compatible(a: Waveform, b: Waveform) -> None:
    if len(a) != len(b):
        raise ValueError(f"waveform lengths differ ({len(a)} vs {len(b)})")
    if a.sample_rate_hz != b.sample_rate_hz:
        raise ValueError("waveform sample rates differ")


def zeros_like(wf: Waveform) -> Waveform:
    return Waveform(np.zeros(len(wf), dtype=np.complex128), wf.sample_rate_hz, wf.power_scale_mw)


@dataclass(frozen=True, eq=False)
class SymbolFrame:
    """Constellation points, one row per OFDM symbol."""

    grid: np.ndarray
    constellation: str = "64qam"

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.complex128)
        if g.ndim != 2:
            raise ValueError("symbol grid must be two-dimensional (n_symbols x n_active)")
        object.__setattr__(self, "grid", g)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape


@dataclass(frozen=True)
class WaveformStats:
    avg_power_dbm: float
    papr_db: float
    occupied_bw_hz: float


# --------------------------------------------------------------------------
# Modulation
# --------------------------------------------------------------------------

def qam64_symbols(rng: np.random.Generator, shape) -> np.ndarray:
    i = rng.integers(0, 8, size=shape)
    q = rng.integers(0, 8, size=shape)
    return (QAM64_LEVELS[i] + 1j * QAM64_LEVELS[q]) / QAM64_NORM


def _check_config(config: OfdmConfig) -> OfdmConfig:
    if not isinstance(config, OfdmConfig):
        raise TypeError("config must be an OfdmConfig")
    return config


def modulate(grid: np.ndarray, config: OfdmConfig) -> np.ndarray:
    """Map a symbol grid onto unit-nominal-power time samples with CP."""
    n_sym = grid.shape[0]
    if n_sym == 0:
        return np.zeros(0, dtype=np.complex128)
    spec = np.zeros((n_sym, config.nfft), dtype=np.complex128)
    spec[:, config.active_bins()] = grid
    body = np.fft.ifft(spec, axis=1) * (config.nfft / math.sqrt(config.n_active_subcarriers))
    if config.cp_len:
        body = np.concatenate([body[:, -config.cp_len:], body], axis=1)
    return body.reshape(-1)


def generate_frame(config: OfdmConfig, seed: int, power_dbm: float = 0.0) -> tuple[SymbolFrame, Waveform]:
    """Random 64-QAM OFDM frame; bit-identical for a given seed."""
    config = _check_config(config)
    rng = np.random.default_rng(seed)
    grid = qam64_symbols(rng, (config.n_symbols, config.n_active_subcarriers))
    samples = modulate(grid, config)
    wf = Waveform(samples, config.sample_rate_hz, 10.0 ** (power_dbm / 10.0))
    return SymbolFrame(grid), wf


def demodulate_frame(wf: Waveform, config: OfdmConfig, reference_gain: complex = 1.0) -> SymbolFrame:
    """Strip CP, FFT each symbol, pick active bins, divide by ``reference_gain``.

    ``reference_gain`` is relative to the nominal amplitude implied by
    ``wf.power_scale_mw``: a generated frame demodulates with gain 1.
    """
    config = _check_config(config)
    if len(wf) != config.frame_len:
        raise ValueError(f"waveform has {len(wf)} samples, config expects {config.frame_len}")
    if reference_gain == 0:
        raise ValueError("reference_gain must be non-zero")
    if config.n_symbols == 0:
        return SymbolFrame(np.zeros((0, config.n_active_subcarriers), dtype=np.complex128))
    body = wf.samples.reshape(config.n_symbols, config.symbol_len)[:, config.cp_len:]
    spec = np.fft.fft(body, axis=1) * (math.sqrt(config.n_active_subcarriers) / config.nfft)
    return SymbolFrame(spec[:, config.active_bins()] / reference_gain)


def estimate_gain(rx: SymbolFrame, ref: SymbolFrame) -> complex:
    """Least-squares complex gain mapping ``ref`` onto ``rx``."""
    _check_dims(rx, ref)
    den = np.vdot(ref.grid, ref.grid)
    if den == 0:
        raise ValueError("reference frame has zero energy")
    return complex(np.vdot(ref.grid, rx.grid) / den)


# --------------------------------------------------------------------------
# Measurements
# --------------------------------------------------------------------------

def _check_dims(rx: SymbolFrame, ref: SymbolFrame) -> None:
    if rx.shape != ref.shape:
        raise ValueError(f"frame dimensions differ: {rx.shape} vs {ref.shape}")


def evm_sums(rx: SymbolFrame, ref: SymbolFrame) -> tuple[float, float]:
    """Error and reference energies; summed across frames for a pooled EVM."""
    _check_dims(rx, ref)
    err = rx.grid - ref.grid
    return float(np.vdot(err, err).real), float(np.vdot(ref.grid, ref.grid).real)


def measure_evm(rx: SymbolFrame, ref: SymbolFrame) -> float:
    """RMS EVM in percent."""
    e, r = evm_sums(rx, ref)
    if r == 0:
        raise ValueError("reference frame has zero energy")
    return 100.0 * math.sqrt(e / r)


def measure_papr(wf: Waveform, percentile: float = 100.0) -> float:
    """Ratio in dB of the given percentile of |s|^2 to its mean."""
    if len(wf) == 0:
        raise ValueError("cannot measure PAPR of an empty waveform")
    if not 0.0 < percentile <= 100.0:
        raise ValueError("percentile must lie in (0, 100]")
    p = np.abs(wf.samples) ** 2
    mean = p.mean()
    if mean == 0:
        raise ValueError("cannot measure PAPR of an all-zero waveform")
    return 10.0 * math.log10(np.percentile(p, percentile) / mean)


def power_spectrum(wf: Waveform) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin power in mW (sums to the mean power) and bin frequencies."""
    n = len(wf)
    spec = np.fft.fft(wf.samples)
    p = (spec.real ** 2 + spec.imag ** 2) * (wf.power_scale_mw / (n * n))
    return p, np.fft.fftfreq(n, d=1.0 / wf.sample_rate_hz)


def measure_channel_power(wf: Waveform, band: tuple[float, float] | None = None) -> float:
    """Integrated periodogram power in dBm over ``band`` = (f_lo, f_hi), edges included.

    ``None`` measures the full Nyquist band.
    """
    if len(wf) == 0:
        raise ValueError("cannot measure an empty waveform")
    nyq = wf.sample_rate_hz / 2.0
    if band is None:
        band = (-nyq, nyq)
    lo, hi = band
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi or lo < -nyq or hi > nyq:
        raise ValueError(f"band {band} must satisfy -fs/2 <= f_lo <= f_hi <= fs/2")
    p, f = power_spectrum(wf)
    sel = (f >= lo) & (f <= hi)
    total = float(p[sel].sum())
    return NEG_INF if total <= 0 else 10.0 * math.log10(total)


def waveform_stats(wf: Waveform, config: OfdmConfig | None = None, percentile: float = 99.9) -> WaveformStats:
    bw = config.active_bw_hz if config is not None else wf.sample_rate_hz
    return WaveformStats(wf.power_dbm, measure_papr(wf, percentile), bw)


# --------------------------------------------------------------------------
# Constellation dump
# --------------------------------------------------------------------------

CONSTELLATION_COLUMNS = ("symbol_index", "subcarrier_index", "I_ref", "Q_ref", "I_rx", "Q_rx")


def write_constellation_csv(path, ref: SymbolFrame, rx: SymbolFrame, subcarriers: Sequence[int] | None = None) -> None:
    """Dump reference and received points. ``subcarriers`` labels the columns
    of the grid (defaults to signed subcarrier offsets around DC)."""
    _check_dims(rx, ref)
    n_sym, n_sc = ref.shape
    if subcarriers is None:
        half = n_sc // 2
        subcarriers = list(range(-half, 0)) + list(range(1, half + 1))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONSTELLATION_COLUMNS)
        for i in range(n_sym):
            for j in range(n_sc):
                a, b = ref.grid[i, j], rx.grid[i, j]
                w.writerow((i, subcarriers[j], repr(float(a.real)), repr(float(a.imag)),
                            repr(float(b.real)), repr(float(b.imag))))


def read_constellation_csv(path) -> tuple[SymbolFrame, SymbolFrame]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != CONSTELLATION_COLUMNS:
            raise ValueError(f"unexpected constellation header {r.fieldnames}")
        rows = list(r)
    if not rows:
        empty = np.zeros((0, 0), dtype=np.complex128)
        return SymbolFrame(empty), SymbolFrame(empty)
    n_sym = max(int(x["symbol_index"]) for x in rows) + 1
    n_sc = len(rows) // n_sym
    ref = np.array([float(x["I_ref"]) + 1j * float(x["Q_ref"]) for x in rows]).reshape(n_sym, n_sc)
    rx = np.array([float(x["I_rx"]) + 1j * float(x["Q_rx"]) for x in rows]).reshape(n_sym, n_sc)
    return SymbolFrame(ref), SymbolFrame(rx)
