import math

import numpy as np
import pytest
from scipy.optimize import brentq

from fdsic.blocks import (
    AdcSpec,
    AmpSpec,
    CancellerSpec,
    add_awgn,
    amplify,
    attenuate,
    awgn,
    cancel,
    input_p1db_dbm,
    measure_two_tone_iip3,
    polynomial_amp,
    projection_coefficient,
    quantize,
    quantizer_step,
    saturating_amp,
    two_tone,
    _bin_power_dbm,
)
from fdsic.chain import run_im3_correction_experiment
from fdsic.waveform import OfdmConfig, Waveform, generate_frame, measure_channel_power

LNA = AmpSpec(20.0, "polynomial", iip3_dbm=-7.0)
UE_PA = AmpSpec(13.5, "saturating", op1db_dbm=15.0, p=3.0)


def _tone(level_dbm, n=8192, f=0.0371):
    t = np.arange(n)
    return Waveform(math.sqrt(10 ** (level_dbm / 10)) * np.exp(2j * np.pi * f * t), 1.0)


def test_amp_spec_validation():
    with pytest.raises(ValueError):
        AmpSpec(math.inf)
    with pytest.raises(ValueError):
        AmpSpec(10, "polynomial")
    with pytest.raises(ValueError):
        AmpSpec(10, "saturating")
    with pytest.raises(ValueError):
        AmpSpec(10, "saturating", op1db_dbm=10, p=0)
    with pytest.raises(ValueError):
        AmpSpec(10, "tube")


def test_two_tone_im3_level():
    y = polynomial_amp(two_tone(-30.0), LNA)
    im3_in = _bin_power_dbm(y, 2 * 101 - 117) - 20.0
    assert im3_in == pytest.approx(3 * -30 - 2 * -7, abs=0.1)


def test_two_tone_slope():
    levels = np.arange(-50.0, -34.0, 2.0)
    im3 = [_bin_power_dbm(polynomial_amp(two_tone(p), LNA), 85) for p in levels]
    slope = np.polyfit(levels, im3, 1)[0]
    assert slope == pytest.approx(3.0, abs=0.05)


def test_weak_nonlinearity_limit():
    x = _tone(-37.0)
    y = polynomial_amp(x, LNA)
    assert abs(y.power_dbm - x.power_dbm - 20.0) < 0.05


def test_ofdm_residual_matches_correction(short_ofdm):
    # matched-gain linear/nonlinear pair driven at the reference operating point
    c = run_im3_correction_experiment(short_ofdm, LNA, [-47.4], seed=0)
    assert c.offset_db == pytest.approx(8.0, abs=2.0)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
def test_saturating_calibration(p):
    spec = AmpSpec(13.5, "saturating", op1db_dbm=15.0, p=p)
    p_in = input_p1db_dbm(spec)
    y = saturating_amp(_tone(p_in), spec)
    assert y.power_dbm == pytest.approx(15.0, abs=0.1)
    assert y.power_dbm - p_in == pytest.approx(13.5 - 1.0, abs=0.1)


def test_saturating_small_signal_gain():
    x = _tone(input_p1db_dbm(UE_PA) - 20.0)
    assert saturating_amp(x, UE_PA).power_dbm - x.power_dbm == pytest.approx(13.5, abs=0.05)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_ue_pa_distortion_at_operating_point(p):
    cfg = OfdmConfig(n_symbols=4)
    spec = AmpSpec(13.5, "saturating", op1db_dbm=15.0, p=p)
    _, x = generate_frame(cfg, 0)
    x = x.rescaled(1.0)
    p_in = brentq(lambda v: amplify(x.scaled_to_dbm(v), spec).power_dbm - 12.0, -20, 10)
    xin = x.scaled_to_dbm(p_in)
    residual = amplify(xin, spec) - amplify(xin, spec.linearized())
    level = measure_channel_power(residual)
    if p == 3.0:
        assert level == pytest.approx(0.0, abs=3.0)
    else:
        # smoothness 2 lands just below the +/-3 dB window
        assert -5.0 < level < -3.0


def test_amplifier_rejects_wrong_kind_and_overflow():
    with pytest.raises(ValueError):
        polynomial_amp(_tone(0), UE_PA)
    with pytest.raises(ValueError):
        saturating_amp(_tone(0), LNA)
    huge = Waveform(np.full(4, 1e200 + 0j), 1.0)
    with pytest.raises(ValueError):
        polynomial_amp(huge, LNA)


def test_attenuate_composition():
    x = _tone(-10.0)
    a = attenuate(attenuate(x, 7.5), 12.25)
    b = attenuate(x, 19.75)
    assert a.power_dbm == pytest.approx(b.power_dbm, abs=1e-9)
    assert b.power_dbm == pytest.approx(-29.75, abs=1e-9)


def test_awgn_level_and_determinism():
    fs = 983.04e6
    n = awgn(1 << 17, fs, 8.0, 400e6, seed=3)
    assert measure_channel_power(n, (-200e6, 200e6)) == pytest.approx(-79.98, abs=0.1)
    again = awgn(1 << 17, fs, 8.0, 400e6, seed=3)
    assert np.array_equal(n.samples, again.samples)
    with pytest.raises(ValueError):
        awgn(16, 1e6, 8.0, 2e6, seed=0)


def test_add_awgn_respects_power_scale():
    x = Waveform(np.zeros(1 << 16, dtype=complex), 1e6, power_scale_mw=1e-6)
    y = add_awgn(x, 0.0, 1e6, seed=1)
    assert y.power_dbm == pytest.approx(-174 + 60, abs=0.1)


def _mixture(seed=0, n=1 << 14):
    rng = np.random.default_rng(seed)
    ref = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    other = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    other -= np.vdot(ref, other) / np.vdot(ref, ref) * ref  # exactly orthogonal
    k = 3.0 - 2.0j
    return Waveform(ref, 1.0), Waveform(k * ref, 1.0), Waveform(other * 0.01, 1.0)


def test_cancel_depth_on_pure_si():
    ref, si, _ = _mixture()
    out = cancel(si, ref, CancellerSpec(40.0))
    assert out.power_dbm == pytest.approx(si.power_dbm - 40.0, abs=0.1)


def test_cancel_perfect_and_identity():
    ref, si, other = _mixture()
    total = si + other
    perfect = cancel(total, si, CancellerSpec(math.inf))
    assert np.allclose(perfect.samples, other.samples, atol=1e-12)
    same = cancel(total, ref, CancellerSpec(0.0))
    assert np.array_equal(same.samples, total.samples)


def test_cancel_leaves_orthogonal_part():
    ref, si, other = _mixture()
    out = cancel(si + other, ref, CancellerSpec(30.0))
    k = projection_coefficient(out, ref)
    residual_other = out.samples - k * ref.samples
    assert np.allclose(residual_other, other.samples, atol=1e-9)


def test_cancel_errors():
    ref, si, _ = _mixture()
    with pytest.raises(ValueError):
        cancel(si, Waveform(ref.samples[:-1], 1.0), CancellerSpec(10))
    with pytest.raises(ValueError):
        cancel(si, Waveform(np.zeros(len(ref)), 1.0), CancellerSpec(10))
    with pytest.raises(ValueError):
        CancellerSpec(-1.0)


def _sqnr(enob, n=1 << 16):
    x = _tone(0.0, n=n, f=0.1234567)
    q = quantize(x, AdcSpec(enob, 0.0))
    return 10 * math.log10(x.mean_square / (q - x).mean_square)


@pytest.mark.parametrize("enob", [6, 8, 10])
def test_quantizer_sqnr(enob):
    assert _sqnr(enob) == pytest.approx(6.02 * enob + 1.76, abs=0.5)


def test_quantizer_fine_limit_and_idempotence():
    x = _tone(-3.0)
    fine = quantize(x, AdcSpec(26, 0.0))
    assert np.max(np.abs(fine.samples - x.samples)) / np.max(np.abs(x.samples)) < 1e-6
    spec = AdcSpec(8, 0.0)
    q = quantize(x, spec)
    assert np.array_equal(quantize(q, spec).samples, q.samples)


def test_quantizer_clips_at_full_scale():
    spec = AdcSpec(8, 0.0)
    step, top = quantizer_step(spec, _tone(0.0))
    q = quantize(Waveform(np.array([10.0 + 10.0j, -10.0 - 10.0j]), 1.0), spec)
    assert np.allclose(np.abs(q.samples.real), top)


def test_quantizer_headroom_for_weak_signal():
    # a weak signal sharing the converter with a full-scale blocker
    n = 1 << 16
    t = np.arange(n)
    blocker = 0.49 * np.exp(2j * np.pi * 0.1234567 * t)  # just under full scale, no clipping
    weak = 10 ** (-36 / 20) * 0.5 * np.exp(2j * np.pi * 0.0123457 * t)
    x = Waveform(blocker + weak, 1.0)
    q = quantize(x, AdcSpec(8, 10 * math.log10(0.25)))
    err = q - x
    snr = 10 * math.log10(np.mean(np.abs(weak) ** 2) / err.mean_square)
    assert snr == pytest.approx(49.9 - 36, abs=2.0)


@pytest.mark.parametrize("iip3", [-7.0, -15.0])
def test_two_tone_iip3_self_consistency(iip3):
    assert measure_two_tone_iip3(AmpSpec(20, "polynomial", iip3_dbm=iip3)) == pytest.approx(iip3, abs=0.1)


def test_two_tone_probe_in_compression_rejected():
    with pytest.raises(ValueError):
        measure_two_tone_iip3(LNA, probe_dbm=-10.0)


def test_saturating_iip3_heuristic():
    # p = 1 is the Rapp member whose small-signal expansion is cubic
    spec = AmpSpec(13.5, "saturating", op1db_dbm=15.0, p=1.0)
    iip3 = measure_two_tone_iip3(spec)
    assert iip3 == pytest.approx(input_p1db_dbm(spec) + 9.6, abs=2.0)


def test_smoother_rapp_has_probe_dependent_intercept():
    # for p >= 2 the leading distortion is fifth order, so the extrapolated
    # intercept climbs as the probe level drops
    spec = AmpSpec(13.5, "saturating", op1db_dbm=15.0, p=2.0)
    p1 = input_p1db_dbm(spec)
    near = measure_two_tone_iip3(spec, p1 - 10.0, max_compression_db=1.0)
    far = measure_two_tone_iip3(spec, p1 - 20.0)
    assert far - near == pytest.approx(10.0, abs=1.0)


def test_linear_amp_has_no_intercept():
    with pytest.raises(ValueError):
        measure_two_tone_iip3(AmpSpec(10, "linear"))
