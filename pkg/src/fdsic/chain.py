"""End-to-end experiments: the IM3 correction sweep and the full-duplex UE link.

The UE receiver is simulated at equivalent baseband: mixer and baseband
amplifier are gain + cubic blocks without frequency translation, and every
waveform in the chain uses a 1 mW power scale (samples in sqrt(mW)).

Per-component node powers come from toggled re-runs of the receiver with
identical seeds:

* the UE PA output is split into its linear part (least-squares projection
  on the PA input) and the uncorrelated distortion;
* canceller coefficients are fitted once per frame on the SI alone (no
  desired signal or noise), so each stage removes exactly its configured
  depth of the SI present at its plane; the signal path fits through the
  nonlinear receiver, the bookkeeping passes through its linear twin; tap
  adaptation from the received mixture is not modelled;
* with those coefficients frozen, the linear receiver is re-run with one
  source at a time (desired, linear SI, PA distortion, noise), which yields
  those four columns exactly;
* ``rx_im3`` is the full nonlinear pass (ideal ADC) minus the all-source
  linear pass, so it holds every receiver-generated product including
  cross-modulation and canceller mismatch;
* ADC quantization error (full pass minus the ideal-ADC pass) is folded into
  the ``noise`` column from the ADC onwards.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import brentq

from .blocks import (
    AdcSpec,
    AmpSpec,
    CancellerSpec,
    amplify,
    attenuate,
    awgn,
    cancel,
    linear_amp,
    measure_two_tone_iip3,
    projection_coefficient,
    quantize,
    two_tone,
    _bin_power_dbm,
)
from .budget import (
    COMPONENTS,
    NEG_INF,
    NODES,
    NodePowerTable,
    StageAllocation,
    SystemParams,
    closure_status,
    node_power_track,
    solve_downlink,
)
from .waveform import (
    OfdmConfig,
    SymbolFrame,
    Waveform,
    demodulate_frame,
    estimate_gain,
    evm_sums,
    generate_frame,
    measure_channel_power,
    power_spectrum,
    zeros_like,
)

log = logging.getLogger(__name__)

BS_PA_BACKOFF_DB = 6.0  # OP1dB above the BS average output; lands the TX EVM at ~3.2 %
ADC_HEADROOM_DB = 20.0 * math.log10(4.0)  # full scale at 4x the RMS of the ADC input

ATTRIBUTION_RULE = (
    "toggled re-runs: desired, si_linear, pa_im3 and noise are measured on linear receiver passes with one "
    "source enabled and canceller coefficients fitted on the SI-only linear pass; "
    "si_linear/pa_im3 split the UE PA "
    "output into its least-squares linear part and the uncorrelated distortion; rx_im3 is the nonlinear "
    "pass minus the all-source linear pass (cross terms included); quantization error is added to noise "
    "from the ADC onwards"
)


# --------------------------------------------------------------------------
# IM3 correction experiment
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrectionCurve:
    p_in_dbm: tuple[float, ...]
    im3_simulated_dbm: tuple[float, ...]
    im3_predicted_dbm: tuple[float, ...]
    offset_db: float
    slope_db_per_db: float
    fit_mask: tuple[bool, ...]
    saturated: tuple[float, ...] = ()

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.p_in_dbm, self.im3_simulated_dbm, self.im3_predicted_dbm))


def _gain_compression_db(x: np.ndarray, y: np.ndarray, gain_db: float) -> float:
    k = np.vdot(x, y) / np.vdot(x, x)
    return gain_db - 20.0 * math.log10(abs(k))


def run_im3_correction_experiment(
    cfg: OfdmConfig,
    amp: AmpSpec,
    sweep: Sequence[float],
    seed: int = 0,
    source: Literal["ofdm", "two_tone"] = "ofdm",
    fit_max_compression_db: float = 0.5,
    saturation_compression_db: float = 1.0,
) -> CorrectionCurve:
    """Input-referred IM3 of ``amp`` versus input power, against the two-tone law.

    The nonlinear amplifier and an ideal amplifier with the same gain are
    driven by the same input; the difference of their outputs is the
    distortion. For OFDM its in-channel power is measured and compared with
    ``3 P_in - 2 IIP3`` evaluated at the average input power. For the
    ``two_tone`` source the input level is the per-tone power and the
    distortion is read at the 2f1-f2 bin, which is the intercept definition.
    """
    sweep = [float(p) for p in sweep]
    if not sweep:
        raise ValueError("sweep needs at least one input level")
    if amp.kind == "linear":
        raise ValueError("a linear amplifier produces no IM3")
    iip3 = amp.iip3_dbm if amp.kind == "polynomial" else measure_two_tone_iip3(amp)
    lin = amp.linearized()

    if source == "ofdm":
        _, base = generate_frame(cfg, seed, 0.0)
        base = base.rescaled(1.0)
    elif source != "two_tone":
        raise ValueError(f"unknown source {source!r}")

    sim, pred, comp = [], [], []
    for p in sweep:
        if source == "ofdm":
            x = base.scaled_to_dbm(p)
            y = amplify(x, amp)
            d = y - linear_amp(x, lin)
            out = measure_channel_power(d, cfg.band)
        else:
            b1, b2 = 101, 117
            x = two_tone(p, bins=(b1, b2))
            y = amplify(x, amp)
            d = y - linear_amp(x, lin)
            out = _bin_power_dbm(d, 2 * b1 - b2)
        sim.append(out - amp.gain_db)
        pred.append(3.0 * p - 2.0 * iip3)
        comp.append(_gain_compression_db(x.samples, y.samples, amp.gain_db))

    saturated = tuple(p for p, c in zip(sweep, comp) if c > saturation_compression_db)
    for p in saturated:
        log.warning("input level %.1f dBm drives %s into saturation", p, amp.kind)
    mask = [c <= fit_max_compression_db and math.isfinite(s) for c, s in zip(comp, sim)]
    if not any(mask):
        mask = [math.isfinite(s) for s in sim]
    xs = np.array([p for p, m in zip(sweep, mask) if m])
    diffs = np.array([s - q for s, q, m in zip(sim, pred, mask) if m])
    ys = np.array([s for s, m in zip(sim, mask) if m])
    offset = float(diffs.mean()) if len(diffs) else math.nan
    slope = float(np.polyfit(xs, ys, 1)[0]) if len(set(xs.tolist())) >= 2 else math.nan
    return CorrectionCurve(
        p_in_dbm=tuple(sweep),
        im3_simulated_dbm=tuple(sim),
        im3_predicted_dbm=tuple(pred),
        offset_db=offset,
        slope_db_per_db=slope,
        fit_mask=tuple(mask),
        saturated=saturated,
    )


# --------------------------------------------------------------------------
# Full link
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainConfig:
    params: SystemParams
    allocation: StageAllocation
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    n_frames: int = 10
    base_seed: int = 0
    ue_pa_smoothness: float = 3.0
    bs_pa_smoothness: float = 2.0
    bs_pa_backoff_db: float = BS_PA_BACKOFF_DB
    adc_headroom_db: float = ADC_HEADROOM_DB
    nonlinear: bool = True
    ue_tx_enabled: bool = True
    noise_enabled: bool = True

    def __post_init__(self):
        if self.allocation is None:
            raise ValueError("a complete stage allocation is required")
        if not isinstance(self.allocation, StageAllocation):
            object.__setattr__(self, "allocation", StageAllocation.from_mapping(self.allocation))
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.ofdm.n_symbols < 1:
            raise ValueError("the link simulation needs at least one OFDM symbol")
        if self.params.bw_dl_hz > self.ofdm.sample_rate_hz:
            raise ValueError("downlink bandwidth exceeds the simulation sample rate")

    def updated(self, **changes) -> "ChainConfig":
        return replace(self, **changes)

    # block specs derived from the system parameters
    def ue_pa(self) -> AmpSpec:
        p = self.params
        if not self.nonlinear:
            return AmpSpec(p.pa_gain_db, "linear")
        return AmpSpec(p.pa_gain_db, "saturating", op1db_dbm=p.op1db_pa_ue_dbm, p=self.ue_pa_smoothness)

    def bs_pa(self) -> AmpSpec:
        p = self.params
        if not self.nonlinear:
            return AmpSpec(0.0, "linear")
        return AmpSpec(0.0, "saturating", op1db_dbm=p.p_tx_bs_dbm + self.bs_pa_backoff_db, p=self.bs_pa_smoothness)

    def rx_amps(self) -> tuple[AmpSpec, AmpSpec, AmpSpec]:
        p = self.params
        amps = (
            AmpSpec(p.g_lna_db, "polynomial", iip3_dbm=p.iip3_lna_dbm),
            AmpSpec(p.g_mixer_db, "polynomial", iip3_dbm=p.iip3_mixer_dbm),
            AmpSpec(p.g_bbamp_db, "polynomial", iip3_dbm=p.iip3_bbamp_dbm),
        )
        return amps if self.nonlinear else tuple(a.linearized() for a in amps)


@dataclass
class LinkSimReport:
    evm_tx_percent: float
    evm_link_percent: float
    node_powers: NodePowerTable
    tx_constellation: tuple[SymbolFrame, SymbolFrame]
    link_constellation: tuple[SymbolFrame, SymbolFrame]
    frame_evm_link_percent: tuple[float, ...]
    pa_distortion_dbm: float
    adc_full_scale_dbm: float
    closure: dict
    n_frames: int
    base_seed: int
    attribution_rule: str = ATTRIBUTION_RULE

    def summary(self) -> dict:
        return {
            "evm_tx_percent": self.evm_tx_percent,
            "evm_link_percent": self.evm_link_percent,
            "frame_evm_link_percent": list(self.frame_evm_link_percent),
            "pa_distortion_in_channel_dbm": self.pa_distortion_dbm,
            "adc_full_scale_dbm": self.adc_full_scale_dbm,
            "closure": self.closure,
            "n_frames": self.n_frames,
            "base_seed": self.base_seed,
            "attribution_rule": self.attribution_rule,
            "node_powers_dbm": self.node_powers.as_dict(),
        }


def frame_seeds(base_seed: int, frame: int) -> tuple[int, int, int]:
    """Independent (BS data, UE data, noise) seeds for one frame."""
    state = np.random.SeedSequence([int(base_seed), int(frame)]).generate_state(3, dtype=np.uint32)
    return tuple(int(s) for s in state)


def _drive_to_output(x: Waveform, spec: AmpSpec, target_dbm: float) -> tuple[Waveform, Waveform]:
    """Scale ``x`` so that ``amplify(x, spec)`` averages ``target_dbm``."""
    if spec.kind == "linear":
        xin = x.scaled_to_dbm(target_dbm - spec.gain_db)
        return xin, amplify(xin, spec)

    def err(p_in):
        return amplify(x.scaled_to_dbm(p_in), spec).power_dbm - target_dbm

    lo = target_dbm - spec.gain_db - 10.0
    hi = target_dbm - spec.gain_db + 20.0
    if err(hi) < 0:
        raise ValueError(f"amplifier cannot deliver {target_dbm:.2f} dBm average")
    p_in = brentq(err, lo, hi, xtol=1e-9)
    xin = x.scaled_to_dbm(p_in)
    return xin, amplify(xin, spec)


@dataclass
class _Sources:
    desired: Waveform  # at the UE antenna
    si_linear: Waveform  # leak at the RX port, linear part
    pa_im3: Waveform  # leak at the RX port, PA distortion
    noise: Waveform  # referred to the RX input
    pa_lin: Waveform  # linear part of the UE PA output
    pa_dist: Waveform  # distortion part of the UE PA output
    ue_digital: Waveform  # reference for SIC4
    bs_ref: SymbolFrame
    bs_tx: Waveform  # BS PA output


def _make_sources(cfg: ChainConfig, frame: int) -> _Sources:
    p = cfg.params
    s_bs, s_ue, s_noise = frame_seeds(cfg.base_seed, frame)
    bs_ref, bs_wf = generate_frame(cfg.ofdm, s_bs, 0.0)
    _, bs_tx = _drive_to_output(bs_wf.rescaled(1.0), cfg.bs_pa(), p.p_tx_bs_dbm)
    desired = attenuate(bs_tx, p.path_loss_db - p.g_bs_db - p.g_ue_db)

    _, ue_wf = generate_frame(cfg.ofdm, s_ue, 0.0)
    ue_wf = ue_wf.rescaled(1.0)
    if cfg.ue_tx_enabled and p.p_pa_out_ue_dbm != NEG_INF:
        ue_in, pa_out = _drive_to_output(ue_wf, cfg.ue_pa(), p.p_pa_out_ue_dbm)
        k = projection_coefficient(pa_out, ue_in)
        lin_part = ue_in.with_samples(k * ue_in.samples)
        dist = pa_out - lin_part
        if not cfg.nonlinear:
            dist = zeros_like(dist)  # drop float residue of the linearized PA
    else:
        pa_out = zeros_like(ue_wf)
        lin_part = dist = pa_out
    if not cfg.ue_tx_enabled:
        ue_wf = zeros_like(ue_wf)
    si_linear = attenuate(lin_part, cfg.allocation.sic1_db)
    pa_im3 = attenuate(dist, cfg.allocation.sic1_db)

    if cfg.noise_enabled:
        noise = awgn(len(ue_wf), ue_wf.sample_rate_hz, p.nf_ue_db, p.bw_dl_hz, s_noise)
    else:
        noise = zeros_like(ue_wf)
    return _Sources(desired, si_linear, pa_im3, noise, lin_part, dist, ue_wf, bs_ref, bs_tx)


def _cancel_stage(x: Waveform, ref: Waveform, depth: float, key: str, coeffs: dict, frozen: dict | None):
    if ref.mean_square == 0:
        return x
    if frozen is not None:
        k = frozen[key]
    else:
        k = projection_coefficient(x, ref)
        coeffs[key] = k
    return cancel(x, ref, CancellerSpec(depth), k_ls=k)


def _receive(
    cfg: ChainConfig,
    rx_in: Waveform,
    pa_ref: Waveform,
    digital_ref: Waveform,
    *,
    linear: bool,
    quantized: bool,
    frozen: dict | None = None,
    full_scale_dbm: float | None = None,
) -> tuple[list[Waveform], dict, float | None]:
    """One receiver pass; returns node waveforms, canceller coefficients, ADC full scale."""
    alloc = cfg.allocation
    lna, mixer, bbamp = cfg.rx_amps()
    if linear:
        lna, mixer, bbamp = lna.linearized(), mixer.linearized(), bbamp.linearized()
    coeffs: dict = {}
    nodes = [rx_in, rx_in]
    x = amplify(rx_in, lna)
    nodes.append(x)
    x = _cancel_stage(x, pa_ref, alloc.sic2_db, "sic2", coeffs, frozen)
    nodes.append(x)
    x = amplify(x, mixer)
    nodes.append(x)
    x = amplify(x, bbamp)
    nodes.append(x)
    x = _cancel_stage(x, pa_ref, alloc.sic3_db, "sic3", coeffs, frozen)
    nodes.append(x)
    if quantized:
        if full_scale_dbm is None:
            full_scale_dbm = x.power_dbm + cfg.adc_headroom_db
        x = quantize(x, AdcSpec(cfg.params.enob_bits, full_scale_dbm))
    nodes.append(x)
    x = _cancel_stage(x, digital_ref, alloc.sic4_db, "sic4", coeffs, frozen)
    nodes.append(x)
    return nodes, coeffs, full_scale_dbm


def _in_band_mw(wf: Waveform, cfg: OfdmConfig) -> float:
    p, f = power_spectrum(wf)
    lo, hi = cfg.band
    return float(p[(f >= lo) & (f <= hi)].sum())


def _equalized(wf: Waveform, cfg: OfdmConfig, ref: SymbolFrame) -> SymbolFrame:
    rx = demodulate_frame(wf, cfg, 1.0)
    g = estimate_gain(rx, ref)
    return SymbolFrame(rx.grid / g)


@dataclass
class _FrameResult:
    powers_mw: np.ndarray  # nodes x components
    tx_err: float
    tx_ref: float
    link_err: float
    link_ref: float
    tx_rx: SymbolFrame
    link_rx: SymbolFrame
    bs_ref: SymbolFrame
    pa_dist_mw: float
    full_scale_dbm: float


def _simulate_frame(cfg: ChainConfig, frame: int) -> _FrameResult:
    src = _make_sources(cfg, frame)
    o = cfg.ofdm
    quantized = cfg.nonlinear
    total = src.desired + src.si_linear + src.pa_im3 + src.noise
    pa_out = src.pa_lin + src.pa_dist
    refs = (pa_out, src.ue_digital)

    # taps fitted on the SI alone: through the real receiver for the signal
    # path, through its linear twin for the bookkeeping passes
    coeffs = live = None
    si = src.si_linear + src.pa_im3
    if si.mean_square > 0:
        _, coeffs, _ = _receive(cfg, si, *refs, linear=True, quantized=False)
        live = coeffs
        if cfg.nonlinear:
            _, live, _ = _receive(cfg, si, *refs, linear=False, quantized=False)
    full, _, fs = _receive(cfg, total, *refs, linear=not cfg.nonlinear, quantized=quantized, frozen=live)
    ideal_adc, _, _ = _receive(cfg, total, *refs, linear=not cfg.nonlinear, quantized=False, frozen=live)
    lin_all, _, _ = _receive(cfg, total, *refs, linear=True, quantized=False, frozen=coeffs)

    # one source at a time; each carries only its own share of the reference taps
    zero = zeros_like(total)
    toggles = (
        ("desired", src.desired, zero, zero),
        ("si_linear", src.si_linear, src.pa_lin, src.ue_digital),
        ("pa_im3", src.pa_im3, src.pa_dist, zero),
        ("noise", src.noise, zero, zero),
    )
    comp_nodes = {}
    for name, wf, pa_ref, dig_ref in toggles:
        if wf.mean_square == 0:
            comp_nodes[name] = None
            continue
        comp_nodes[name], _, _ = _receive(cfg, wf, pa_ref, dig_ref, linear=True, quantized=False, frozen=coeffs)

    powers = np.zeros((len(NODES), len(COMPONENTS)))
    adc_at = NODES.index("post_adc")
    for i in range(len(NODES)):
        for j, comp in enumerate(COMPONENTS):
            if comp == "rx_im3":
                powers[i, j] = _in_band_mw(ideal_adc[i] - lin_all[i], o)
                continue
            nodes = comp_nodes[comp]
            powers[i, j] = 0.0 if nodes is None else _in_band_mw(nodes[i], o)
        if quantized and i >= adc_at:
            powers[i, COMPONENTS.index("noise")] += _in_band_mw(full[i] - ideal_adc[i], o)

    tx_rx = _equalized(src.bs_tx, o, src.bs_ref)
    link_rx = _equalized(full[-1], o, src.bs_ref)
    tx_e, tx_r = evm_sums(tx_rx, src.bs_ref)
    l_e, l_r = evm_sums(link_rx, src.bs_ref)
    pa_dist = _in_band_mw(src.pa_im3, o) * 10.0 ** (cfg.allocation.sic1_db / 10.0)
    return _FrameResult(powers, tx_e, tx_r, l_e, l_r, tx_rx, link_rx, src.bs_ref, pa_dist,
                        fs if fs is not None else math.nan)


def _db(mw: float) -> float:
    return NEG_INF if mw <= 0 else 10.0 * math.log10(mw)


def run_full_link(cfg: ChainConfig) -> LinkSimReport:
    """Monte-Carlo simulation of the UE receiver over ``cfg.n_frames`` frames."""
    results = [_simulate_frame(cfg, f) for f in range(cfg.n_frames)]
    powers = np.mean([r.powers_mw for r in results], axis=0)
    table = NodePowerTable(
        nodes=NODES,
        rows=tuple(tuple(_db(v) for v in row) for row in powers),
    )
    tx_e = math.fsum(r.tx_err for r in results)
    tx_r = math.fsum(r.tx_ref for r in results)
    l_e = math.fsum(r.link_err for r in results)
    l_r = math.fsum(r.link_ref for r in results)
    plan = solve_downlink(cfg.params)
    first = results[0]
    return LinkSimReport(
        evm_tx_percent=100.0 * math.sqrt(tx_e / tx_r),
        evm_link_percent=100.0 * math.sqrt(l_e / l_r),
        node_powers=table,
        tx_constellation=(first.bs_ref, first.tx_rx),
        link_constellation=(first.bs_ref, first.link_rx),
        frame_evm_link_percent=tuple(100.0 * math.sqrt(r.link_err / r.link_ref) for r in results),
        pa_distortion_dbm=_db(float(np.mean([r.pa_dist_mw for r in results]))),
        adc_full_scale_dbm=float(np.mean([r.full_scale_dbm for r in results])),
        closure=closure_status(plan, cfg.allocation),
        n_frames=cfg.n_frames,
        base_seed=cfg.base_seed,
    )


def measure_node_powers(cfg: ChainConfig) -> NodePowerTable:
    return run_full_link(cfg).node_powers


def analytic_node_powers(cfg: ChainConfig, report: LinkSimReport | None = None) -> NodePowerTable:
    """Budget-side node track for the same configuration.

    With a report, the PA distortion level and ADC full scale measured in the
    simulation replace the nominal ones so both sides describe the same
    hardware.
    """
    params = cfg.params
    fs = None
    if report is not None:
        params = params.updated(p_oim3_pa_dbm=report.pa_distortion_dbm)
        if cfg.nonlinear and math.isfinite(report.adc_full_scale_dbm):
            fs = report.adc_full_scale_dbm
    if not cfg.nonlinear or not cfg.ue_tx_enabled:
        params = params.updated(p_oim3_pa_dbm=NEG_INF) if not cfg.nonlinear else params
    if not cfg.ue_tx_enabled:
        params = params.updated(p_tx_ue_dbm=NEG_INF, p_oim3_pa_dbm=NEG_INF)
    return node_power_track(params, cfg.allocation, adc_full_scale_dbm=fs, receiver_im3=cfg.nonlinear)


# --------------------------------------------------------------------------
# Comparison
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CellDeviation:
    node: str
    component: str
    measured_dbm: float
    analytic_dbm: float
    deviation_db: float
    passed: bool


@dataclass(frozen=True)
class BudgetComparison:
    cells: tuple[CellDeviation, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cells)

    def max_deviation(self, component: str | None = None) -> float:
        ds = [c.deviation_db for c in self.cells if component is None or c.component == component]
        return max(ds) if ds else 0.0

    def failures(self) -> list[CellDeviation]:
        return [c for c in self.cells if not c.passed]


def compare_with_budget(
    measured: NodePowerTable,
    analytic: NodePowerTable,
    tol_db: float | dict[str, float],
    components: Sequence[str] | None = None,
) -> BudgetComparison:
    """Cellwise |measured - analytic|; two -inf cells compare as equal.

    ``tol_db`` may be a single tolerance or one per component; components
    missing from a dict are skipped.
    """
    if measured.nodes != analytic.nodes or measured.components != analytic.components:
        raise ValueError("node tables have different schemas")
    if components is None:
        components = list(tol_db) if isinstance(tol_db, dict) else list(measured.components)
    cells = []
    for node in measured.nodes:
        for comp in components:
            tol = tol_db[comp] if isinstance(tol_db, dict) else tol_db
            m, a = measured.get(node, comp), analytic.get(node, comp)
            if m == a:
                dev = 0.0
            elif math.isinf(m) or math.isinf(a):
                dev = math.inf
            else:
                dev = abs(m - a)
            cells.append(CellDeviation(node, comp, m, a, dev, dev <= tol))
    return BudgetComparison(tuple(cells))
