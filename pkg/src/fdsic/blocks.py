"""Behavioral sample-domain RF blocks.

All blocks are memoryless and deterministic given their inputs; only
:func:`add_awgn` draws random numbers, from an explicit seed. Powers in
specs are dBm and are translated to sample amplitudes through the input
waveform's ``power_scale_mw``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import _accel
from .budget import THERMAL_DENSITY_DBM_HZ
from .waveform import Waveform

ModelKind = Literal["polynomial", "saturating", "linear"]


@dataclass(frozen=True)
class AmpSpec:
    """Amplifier description.

    ``polynomial``: third-order memoryless model set by ``iip3_dbm``.
    ``saturating``: Rapp envelope model with output 1 dB compression point
    ``op1db_dbm`` and smoothness ``p``. ``linear``: gain only.
    """

    gain_db: float
    kind: ModelKind = "polynomial"
    iip3_dbm: float | None = None
    op1db_dbm: float | None = None
    p: float = 2.0

    def __post_init__(self):
        if not math.isfinite(self.gain_db):
            raise ValueError("gain_db must be finite")
        if self.kind == "polynomial":
            if self.iip3_dbm is None or not math.isfinite(self.iip3_dbm):
                raise ValueError("polynomial model needs a finite iip3_dbm")
        elif self.kind == "saturating":
            if self.op1db_dbm is None or not math.isfinite(self.op1db_dbm):
                raise ValueError("saturating model needs a finite op1db_dbm")
            if not self.p > 0:
                raise ValueError("smoothness p must be > 0")
        elif self.kind != "linear":
            raise ValueError(f"unknown amplifier model {self.kind!r}")

    @property
    def voltage_gain(self) -> float:
        return 10.0 ** (self.gain_db / 20.0)

    def linearized(self) -> "AmpSpec":
        return AmpSpec(self.gain_db, "linear")


@dataclass(frozen=True)
class CancellerSpec:
    """Cancellation depth in dB (``math.inf`` for perfect) and reference tap."""

    depth_db: float
    reference: Literal["pa_output", "ideal_tx_digital"] = "pa_output"

    def __post_init__(self):
        if math.isnan(self.depth_db) or self.depth_db < 0:
            raise ValueError("depth_db must be >= 0")
        if self.reference not in ("pa_output", "ideal_tx_digital"):
            raise ValueError(f"unknown reference tap {self.reference!r}")


@dataclass(frozen=True)
class AdcSpec:
    enob_bits: float
    full_scale_dbm: float

    def __post_init__(self):
        if not self.enob_bits >= 1:
            raise ValueError("enob_bits must be >= 1")
        if not math.isfinite(self.full_scale_dbm):
            raise ValueError("full_scale_dbm must be finite")


def _amplitude_sq(level_dbm: float, wf: Waveform) -> float:
    """Mean-square sample amplitude that represents ``level_dbm`` in ``wf``."""
    return 10.0 ** (level_dbm / 10.0) / wf.power_scale_mw


def _checked(wf: Waveform, samples: np.ndarray) -> Waveform:
    if not np.all(np.isfinite(samples)):
        raise ValueError("amplifier output is not finite")
    return wf.with_samples(samples)


# --------------------------------------------------------------------------
# Amplifiers
# --------------------------------------------------------------------------

def polynomial_coefficients(spec: AmpSpec, wf: Waveform) -> tuple[float, float]:
    """``(a1, a3)`` of y = a1 x + a3 |x|^2 x.

    In complex baseband the intercept amplitude satisfies A^2 = a1/|a3|,
    with A^2 the per-tone mean-square amplitude at the IIP3 level.
    """
    a1 = spec.voltage_gain
    a3 = -a1 / _amplitude_sq(spec.iip3_dbm, wf)
    return a1, a3


def polynomial_amp(wf: Waveform, spec: AmpSpec) -> Waveform:
    if spec.kind != "polynomial":
        raise ValueError("polynomial_amp needs a polynomial AmpSpec")
    a1, a3 = polynomial_coefficients(spec, wf)
    return _checked(wf, _accel.cubic(wf.samples, a1, a3))


def rapp_saturation_ratio(p: float) -> float:
    """|g x| / A_sat at which the Rapp gain has dropped by exactly 1 dB."""
    return (10.0 ** (p / 10.0) - 1.0) ** (1.0 / (2.0 * p))


def saturation_amplitude(spec: AmpSpec, wf: Waveform) -> float:
    r = rapp_saturation_ratio(spec.p)
    # output amplitude at 1 dB compression is r * A_sat * 10^(-1/20)
    a_out_1db = math.sqrt(_amplitude_sq(spec.op1db_dbm, wf))
    return a_out_1db / (r * 10.0 ** (-1.0 / 20.0))


def saturating_amp(wf: Waveform, spec: AmpSpec) -> Waveform:
    if spec.kind != "saturating":
        raise ValueError("saturating_amp needs a saturating AmpSpec")
    a_sat = saturation_amplitude(spec, wf)
    return _checked(wf, _accel.rapp(wf.samples, spec.voltage_gain, a_sat, spec.p))


def linear_amp(wf: Waveform, spec: AmpSpec) -> Waveform:
    return wf.with_samples(wf.samples * spec.voltage_gain)


def amplify(wf: Waveform, spec: AmpSpec) -> Waveform:
    if spec.kind == "polynomial":
        return polynomial_amp(wf, spec)
    if spec.kind == "saturating":
        return saturating_amp(wf, spec)
    return linear_amp(wf, spec)


# --------------------------------------------------------------------------
# Linear blocks
# --------------------------------------------------------------------------

def attenuate(wf: Waveform, loss_db: float) -> Waveform:
    return wf.with_samples(wf.samples * 10.0 ** (-loss_db / 20.0))


def noise_power_dbm(nf_db: float, bw_hz: float) -> float:
    return THERMAL_DENSITY_DBM_HZ + 10.0 * math.log10(bw_hz) + nf_db


def awgn(n: int, sample_rate_hz: float, nf_db: float, bw_hz: float, seed: int,
         power_scale_mw: float = 1.0) -> Waveform:
    """White circular Gaussian noise whose power within ``bw_hz`` is kTB*NF."""
    if not 0 < bw_hz <= sample_rate_hz:
        raise ValueError("noise bandwidth must lie in (0, sample_rate]")
    total_mw = 10.0 ** (noise_power_dbm(nf_db, bw_hz) / 10.0) * sample_rate_hz / bw_hz
    rng = np.random.default_rng(seed)
    sigma = math.sqrt(total_mw / power_scale_mw / 2.0)
    z = rng.standard_normal((2, n))
    return Waveform(sigma * (z[0] + 1j * z[1]), sample_rate_hz, power_scale_mw)


def add_awgn(wf: Waveform, nf_db: float, bw_hz: float, seed: int) -> Waveform:
    n = awgn(len(wf), wf.sample_rate_hz, nf_db, bw_hz, seed, wf.power_scale_mw)
    return wf + n


# --------------------------------------------------------------------------
# Cancellation
# --------------------------------------------------------------------------

def projection_coefficient(signal: Waveform, reference: Waveform) -> complex:
    """Least-squares k minimizing |signal - k * reference|^2 (common scale)."""
    if len(signal) != len(reference):
        raise ValueError(f"signal and reference lengths differ ({len(signal)} vs {len(reference)})")
    if signal.sample_rate_hz != reference.sample_rate_hz:
        raise ValueError("signal and reference sample rates differ")
    ref = reference.rescaled(signal.power_scale_mw).samples
    den = np.vdot(ref, ref).real
    if den == 0:
        raise ValueError("reference has zero power")
    return complex(np.vdot(ref, signal.samples) / den)


def cancel(signal: Waveform, reference: Waveform, spec: CancellerSpec, k_ls: complex | None = None) -> Waveform:
    """Suppress the reference-correlated part of ``signal`` by ``spec.depth_db``.

    ``k_ls`` pins the projection coefficient, e.g. to replay a run with a
    subset of sources while keeping the canceller identical.
    """
    if k_ls is None:
        k_ls = projection_coefficient(signal, reference)
    elif len(signal) != len(reference):
        raise ValueError("signal and reference lengths differ")
    residual = 0.0 if spec.depth_db == math.inf else 10.0 ** (-spec.depth_db / 20.0)
    k = (1.0 - residual) * k_ls
    ref = reference.rescaled(signal.power_scale_mw).samples
    return signal.with_samples(signal.samples - k * ref)


# --------------------------------------------------------------------------
# ADC
# --------------------------------------------------------------------------

def quantizer_step(spec: AdcSpec, wf: Waveform) -> tuple[float, float]:
    """(step, largest output level) in sample units for each I/Q rail.

    Full scale is the amplitude of a complex tone whose power is
    ``full_scale_dbm``; each rail spans +/- that amplitude with 2^ENOB
    mid-rise levels.
    """
    a_fs = math.sqrt(_amplitude_sq(spec.full_scale_dbm, wf))
    step = 2.0 * a_fs / 2.0 ** spec.enob_bits
    return step, a_fs - step / 2.0


def quantize(wf: Waveform, spec: AdcSpec) -> Waveform:
    step, top = quantizer_step(spec, wf)
    return wf.with_samples(_accel.quantize(wf.samples, step, top))


# --------------------------------------------------------------------------
# Two-tone characterization
# --------------------------------------------------------------------------

def two_tone(level_per_tone_dbm: float, n: int = 4096, bins: tuple[int, int] = (101, 117),
             sample_rate_hz: float = 1.0) -> Waveform:
    """Two equal complex tones on exact FFT bins; IM3 lands on 2*b1-b2 and 2*b2-b1."""
    t = np.arange(n)
    s = np.exp(2j * np.pi * bins[0] * t / n) + np.exp(2j * np.pi * bins[1] * t / n)
    a = math.sqrt(10.0 ** (level_per_tone_dbm / 10.0))
    return Waveform(a * s, sample_rate_hz, 1.0)


def _bin_power_dbm(wf: Waveform, k: int) -> float:
    n = len(wf)
    v = np.vdot(np.exp(2j * np.pi * k * np.arange(n) / n), wf.samples) / n
    p = (abs(v) ** 2) * wf.power_scale_mw
    return float("-inf") if p == 0 else 10.0 * math.log10(p)


def input_p1db_dbm(spec: AmpSpec) -> float:
    if spec.kind != "saturating":
        raise ValueError("input P1dB is defined here for the saturating model only")
    return spec.op1db_dbm - spec.gain_db + 1.0


def measure_two_tone_iip3(spec: AmpSpec, probe_dbm: float | None = None,
                          max_compression_db: float = 0.1) -> float:
    """Intercept extrapolated from one two-tone probe (per-tone level ``probe_dbm``).

    The default probe sits 30 dB below the nominal IIP3 (polynomial) or
    20 dB below the input P1dB (saturating). A probe whose fundamental gain
    is compressed by more than ``max_compression_db`` is rejected.
    """
    if spec.kind == "linear":
        raise ValueError("a linear amplifier has no intercept point")
    if probe_dbm is None:
        probe_dbm = spec.iip3_dbm - 30.0 if spec.kind == "polynomial" else input_p1db_dbm(spec) - 20.0
    b1, b2 = 101, 117
    x = two_tone(probe_dbm, bins=(b1, b2))
    y = amplify(x, spec)
    fund = _bin_power_dbm(y, b1)
    im3 = _bin_power_dbm(y, 2 * b1 - b2)
    compression = spec.gain_db - (fund - probe_dbm)
    if compression > max_compression_db:
        raise ValueError(
            f"probe at {probe_dbm:.1f} dBm compresses the gain by {compression:.2f} dB; lower the probe level"
        )
    if im3 == float("-inf"):
        return math.inf
    # fundamental and IM3 grow 1:3, so they meet (fund - im3)/2 above the probe
    return probe_dbm + (fund - im3) / 2.0

