import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdsic import budget as bd
from fdsic.blocks import AdcSpec, AmpSpec, CancellerSpec, attenuate, cancel, measure_two_tone_iip3, quantize
from fdsic.waveform import OfdmConfig, Waveform, demodulate_frame, generate_frame, measure_evm

FAST = settings(max_examples=40, deadline=None)
SLOW = settings(max_examples=12, deadline=None)

snr = st.floats(-20.0, 80.0, allow_nan=False)
dbm = st.floats(-150.0, 40.0, allow_nan=False)
ONE_SYMBOL = OfdmConfig(n_symbols=1)


@FAST
@given(snr, st.floats(0.01, 30.0))
def test_combine_and_required_invert(total, gap):
    known = total + gap
    other = bd.required_component_snr(total, known)
    assert abs(bd.combine_snr([known, other]) - total) < 1e-9


@FAST
@given(st.lists(snr, min_size=1, max_size=6))
def test_combine_bounded_by_min(snrs):
    c = bd.combine_snr(snrs)
    assert c <= min(snrs) + 1e-12
    assert c == pytest.approx(bd.combine_snr(list(reversed(snrs))), abs=1e-12)


@FAST
@given(snr, snr, st.floats(0.1, 10.0))
def test_combine_monotone(a, b, up):
    assert bd.combine_snr([a + up, b]) >= bd.combine_snr([a, b])


@FAST
@given(st.lists(dbm, min_size=1, max_size=6), st.randoms(use_true_random=False))
def test_power_sum_permutation_and_absent_terms(terms, rnd):
    shuffled = list(terms)
    rnd.shuffle(shuffled)
    s = bd.power_sum_dbm(terms)
    assert s == pytest.approx(bd.power_sum_dbm(shuffled), abs=1e-9)
    assert bd.power_sum_dbm(terms + [bd.NEG_INF]) == s
    assert s >= max(terms) - 1e-12


@FAST
@given(st.floats(0, 20), st.floats(-60, -30), st.floats(10, 40), st.floats(-30, 10), st.floats(0, 10))
def test_sic1_slopes(p_pa, p_rx, snr_im3, iip3, corr):
    base = bd.sic1_requirement_db(p_pa, p_rx, snr_im3, iip3, corr)
    assert bd.sic1_requirement_db(p_pa, p_rx, snr_im3, iip3 + 3.0, corr) - base == pytest.approx(-2.0, abs=1e-9)
    assert bd.sic1_requirement_db(p_pa + 1.0, p_rx, snr_im3, iip3, corr) - base == pytest.approx(1.0, abs=1e-9)


@FAST
@given(st.floats(80, 110), st.floats(20, 50), st.floats(10, 30), st.floats(5, 20))
def test_sic4_closes_total(total, s1, s2, s3):
    s4 = bd.sic4_requirement_db(total, s1, s2, s3)
    assert s4 >= 0
    if s4 > 0:
        assert s1 + s2 + s3 + s4 == pytest.approx(total, abs=1e-9)


@FAST
@given(st.floats(0, 30), st.floats(-70, -30), st.floats(30, 60))
def test_sic_total_identity(p_pa, p_rx, snr_si):
    assert bd.sic_total_db(p_pa, p_rx, snr_si) == pytest.approx(p_pa - p_rx + snr_si, abs=1e-9)


@SLOW
@given(st.integers(0, 2**31 - 1), st.floats(-80, 20))
def test_ofdm_round_trip(seed, level):
    ref, wf = generate_frame(ONE_SYMBOL, seed, power_dbm=level)
    rx = demodulate_frame(wf, ONE_SYMBOL)
    assert np.max(np.abs(rx.grid - ref.grid)) / np.max(np.abs(ref.grid)) < 1e-9


@SLOW
@given(st.floats(10.0, 40.0), st.integers(0, 1000))
def test_evm_snr_identity(snr_db, seed):
    ref, wf = generate_frame(ONE_SYMBOL, seed)
    rng = np.random.default_rng(seed)
    var = 10 ** (-snr_db / 10) * ONE_SYMBOL.nfft / ONE_SYMBOL.n_active_subcarriers
    n = math.sqrt(var / 2) * (rng.standard_normal(len(wf)) + 1j * rng.standard_normal(len(wf)))
    rx = demodulate_frame(wf.with_samples(wf.samples + n), ONE_SYMBOL)
    assert measure_evm(rx, ref) == pytest.approx(100 * 10 ** (-snr_db / 20), rel=0.05)


@SLOW
@given(st.floats(-20.0, 5.0), st.floats(0.0, 30.0))
def test_two_tone_iip3_recovery(iip3, gain):
    assert measure_two_tone_iip3(AmpSpec(gain, "polynomial", iip3_dbm=iip3)) == pytest.approx(iip3, abs=0.1)


def _orthogonal_pair(seed, n=4096):
    rng = np.random.default_rng(seed)
    ref = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    other = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    other -= np.vdot(ref, other) / np.vdot(ref, ref) * ref
    return ref, other


@FAST
@given(st.floats(0.0, 80.0), st.integers(0, 1000), st.complex_numbers(min_magnitude=0.1, max_magnitude=100))
def test_canceller_depth_realized(depth, seed, k):
    ref, other = _orthogonal_pair(seed)
    si = Waveform(k * ref, 1.0)
    out = cancel(si + Waveform(other, 1.0), Waveform(ref, 1.0), CancellerSpec(depth))
    residual = out.samples - other
    realized = 10 * math.log10(si.mean_square / np.mean(np.abs(residual) ** 2))
    assert realized == pytest.approx(depth, abs=0.1)


@FAST
@given(st.floats(0, 60), st.floats(0, 60))
def test_attenuate_composes(a, b):
    x = Waveform(np.exp(1j * np.arange(64) * 0.3), 1.0)
    assert attenuate(attenuate(x, a), b).power_dbm == pytest.approx(attenuate(x, a + b).power_dbm, abs=1e-9)


@FAST
@given(st.integers(2, 14), st.floats(-30, 10), st.integers(0, 1000))
def test_quantizer_idempotent(enob, fs, seed):
    rng = np.random.default_rng(seed)
    x = Waveform(rng.standard_normal(256) + 1j * rng.standard_normal(256), 1.0)
    spec = AdcSpec(enob, fs)
    q = quantize(x, spec)
    assert np.array_equal(quantize(q, spec).samples, q.samples)


@pytest.mark.parametrize("enob", [6, 8, 10])
def test_quantizer_full_scale_sine(enob):
    n = 1 << 16
    t = np.arange(n)
    x = Waveform(np.exp(2j * np.pi * 0.1234567 * t), 1.0)
    q = quantize(x, AdcSpec(enob, 0.0))
    sqnr = 10 * math.log10(x.mean_square / (q - x).mean_square)
    assert sqnr == pytest.approx(6.02 * enob + 1.76, abs=0.5)


@SLOW
@given(st.integers(0, 1000), st.floats(0.01, 100), st.floats(0, 2 * math.pi))
def test_evm_invariant_to_known_complex_gain(seed, mag, phase):
    ref, wf = generate_frame(ONE_SYMBOL, seed)
    rng = np.random.default_rng(seed)
    noisy = wf.samples + 0.01 * (rng.standard_normal(len(wf)) + 1j * rng.standard_normal(len(wf)))
    g = mag * np.exp(1j * phase)
    plain = measure_evm(demodulate_frame(wf.with_samples(noisy), ONE_SYMBOL), ref)
    scaled = measure_evm(demodulate_frame(wf.with_samples(noisy * g), ONE_SYMBOL, reference_gain=g), ref)
    assert scaled == pytest.approx(plain, rel=1e-9)
