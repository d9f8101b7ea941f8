"""Closed-form link budget and SIC allocation for a full-duplex UE receiver.

Everything here is scalar dB/dBm arithmetic. Absent signals are carried as
the ``NEG_INF`` sentinel (``float('-inf')`` dBm) rather than as a numeric
underflow.

The downlink derivation runs in a fixed order: receiver SNR, LNA IM3 SNR,
residual-SI SNR, total SIC, then the four stage requirements and the ADC
dynamic-range check. Any intermediate can be pinned through an override map,
which is how rounded reference figures are reproduced next to the
unrounded formula results.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Iterable, Mapping

NEG_INF = float("-inf")
THERMAL_DENSITY_DBM_HZ = -174.0
SPEED_OF_LIGHT = 299_792_458.0

NODES = (
    "antenna",
    "post_sic1",
    "post_lna",
    "post_sic2",
    "post_mixer",
    "post_bbamp",
    "post_sic3",
    "post_adc",
    "post_sic4",
)
COMPONENTS = ("desired", "si_linear", "pa_im3", "rx_im3", "noise")


class InfeasibleError(ValueError):
    """A requirement cannot be met; ``step`` names the derivation step."""

    def __init__(self, step: str, message: str):
        super().__init__(f"{step}: {message}")
        self.step = step


# --------------------------------------------------------------------------
# Parameters and results
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemParams:
    """Block specifications and link constants.

    Defaults describe the 400 MHz OFDM 64-QAM mm-wave link the package was
    built around (28 GHz carrier, 90 m, 20 dBi antennas on both ends).
    ``snr_noise_dl_db`` and ``sic2_additive_db`` accept ``None`` to switch
    from the stated reference value to the value re-derived from the other
    parameters.
    """

    p_tx_bs_dbm: float = 15.0
    p_tx_ue_dbm: float = 8.0
    g_bs_db: float = 20.0
    g_ue_db: float = 20.0
    l_fs_db: float | None = 101.0
    distance_m: float = 90.0
    carrier_hz: float = 28e9
    nf_bs_db: float = 8.0
    nf_ue_db: float = 8.0
    bw_dl_hz: float = 400e6
    bw_ul_hz: float = 400e6
    snr_link_db: float = 21.0
    snr_tx_ue_db: float = 24.0
    snr_tx_bs_db: float = 30.0
    snr_noise_dl_db: float | None = 28.0
    ebd_tx_insertion_loss_db: float = 4.0
    g_lna_db: float = 20.0
    g_mixer_db: float = 0.0
    g_bbamp_db: float = 20.0
    iip3_lna_dbm: float = -7.0
    iip3_rrx_dbm: float = -15.0
    iip3_mixer_dbm: float = 0.0
    iip3_bbamp_dbm: float = 5.0
    op1db_pa_ue_dbm: float = 15.0
    pa_gain_db: float = 13.5
    p_oim3_pa_dbm: float = 0.0
    enob_bits: float = 8.0
    im3_correction_db: float = 8.0
    sic2_additive_db: float | None = 6.0
    margin_noise_db: float = 3.0
    margin_rrx_db: float = 18.0
    margin_pa_im3_db: float = 10.0
    si_neglect_factor: float = 0.01

    def __post_init__(self):
        for name in ("bw_dl_hz", "bw_ul_hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not self.enob_bits >= 1:
            raise ValueError("enob_bits must be >= 1")
        if not 0.0 < self.si_neglect_factor < 1.0:
            raise ValueError("si_neglect_factor must lie in (0, 1)")
        if self.l_fs_db is not None and not (math.isfinite(self.l_fs_db) and self.l_fs_db >= 0):
            raise ValueError("l_fs_db must be finite and >= 0 when supplied")
        if self.l_fs_db is None and not (self.distance_m > 0 and self.carrier_hz > 0):
            raise ValueError("distance_m and carrier_hz must be > 0 to derive l_fs_db")
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if f.name in ("p_tx_ue_dbm", "p_oim3_pa_dbm"):
                # -inf marks an absent source
                if math.isnan(v) or v == math.inf:
                    raise ValueError(f"{f.name} must be finite or -inf")
                continue
            if isinstance(v, float | int) and not math.isfinite(v):
                raise ValueError(f"{f.name} must be finite")

    @property
    def path_loss_db(self) -> float:
        if self.l_fs_db is not None:
            return self.l_fs_db
        return free_space_path_loss_db(self.distance_m, self.carrier_hz)

    @property
    def p_pa_out_ue_dbm(self) -> float:
        return self.p_tx_ue_dbm + self.ebd_tx_insertion_loss_db

    @property
    def oip3_lna_dbm(self) -> float:
        return self.g_lna_db + self.iip3_lna_dbm

    def updated(self, **changes) -> "SystemParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class UplinkReport:
    snr_rx_bs_db: float
    snr_noise_db: float
    p_rx_bs_min_dbm: float
    p_tx_ue_min_dbm: float
    p_pa_out_ue_min_dbm: float


@dataclass(frozen=True)
class StageAllocation:
    sic1_db: float
    sic2_db: float
    sic3_db: float
    sic4_db: float

    def __post_init__(self):
        for name in ("sic1_db", "sic2_db", "sic3_db", "sic4_db"):
            v = getattr(self, name)
            if v is None or math.isnan(v) or v < 0:
                raise ValueError(f"stage allocation {name} must be a depth >= 0, got {v!r}")

    @property
    def total_db(self) -> float:
        return self.sic1_db + self.sic2_db + self.sic3_db + self.sic4_db

    @classmethod
    def from_mapping(cls, m: Mapping[str, float]) -> "StageAllocation":
        missing = [k for k in ("sic1_db", "sic2_db", "sic3_db", "sic4_db") if k not in m]
        if missing:
            raise ValueError(f"stage allocation is missing {', '.join(missing)}")
        return cls(**{k: float(m[k]) for k in ("sic1_db", "sic2_db", "sic3_db", "sic4_db")})


@dataclass(frozen=True)
class Deviation:
    quantity: str
    computed: float
    reference: float
    question_id: str


@dataclass(frozen=True)
class SicPlan:
    snr_rx_ue_db: float
    snr_noise_db: float
    snr_im3_lna_db: float
    snr_si_db: float
    p_rx_ue_dbm: float
    p_pa_out_ue_dbm: float
    p_im3_lna_plus_noise_dbm: float
    sic_total_db: float
    sic1_db: float
    sic2_db: float
    sic3_db: float
    sic4_db: float
    adc_dr_db: float
    adc_feasible: bool
    overrides: Mapping[str, float] = field(default_factory=dict)
    deviations: tuple[Deviation, ...] = ()

    @property
    def feasible(self) -> bool:
        return self.adc_feasible

    @property
    def analog_residual_db(self) -> float:
        return self.sic_total_db - (self.sic1_db + self.sic2_db + self.sic3_db)

    def allocation(self) -> StageAllocation:
        return StageAllocation(self.sic1_db, self.sic2_db, self.sic3_db, self.sic4_db)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["overrides"] = dict(self.overrides)
        d["deviations"] = [asdict(x) for x in self.deviations]
        return d


# --------------------------------------------------------------------------
# dB plumbing
# --------------------------------------------------------------------------

def db_to_linear(x: float) -> float:
    if not math.isfinite(x):
        raise ValueError(f"db_to_linear needs a finite dB value, got {x!r}")
    return 10.0 ** (x / 10.0)


def linear_to_db(x: float) -> float:
    """Power ratio to dB. Zero maps to the ``NEG_INF`` sentinel."""
    if not math.isfinite(x) or x < 0:
        raise ValueError(f"linear_to_db needs a finite non-negative ratio, got {x!r}")
    if x == 0:
        return NEG_INF
    return 10.0 * math.log10(x)


def _lin(x_db: float) -> float:
    # sentinel-aware variant for internal sums
    if x_db == NEG_INF:
        return 0.0
    return db_to_linear(x_db)


def power_sum_dbm(terms: Iterable[float]) -> float:
    """Incoherent sum of powers given in dBm."""
    terms = list(terms)
    if not terms:
        raise ValueError("power_sum_dbm needs at least one term")
    return linear_to_db(math.fsum(_lin(t) for t in terms))


def combine_snr(snrs: Iterable[float]) -> float:
    """Combine independent impairment SNRs: 1/SNR = sum(1/SNR_i)."""
    snrs = list(snrs)
    if not snrs:
        raise ValueError("combine_snr needs at least one SNR")
    for s in snrs:
        if math.isnan(s) or s == NEG_INF:
            raise ValueError(f"combine_snr got a non-finite SNR {s!r}")
    inv = math.fsum(0.0 if s == math.inf else 10.0 ** (-s / 10.0) for s in snrs)
    if inv == 0.0:
        return math.inf
    return -10.0 * math.log10(inv)


def required_component_snr(snr_total_db: float, snr_known_db: float, step: str = "required_component_snr") -> float:
    """SNR a second impairment may have so that, combined with a known one,
    the total equals ``snr_total_db``."""
    if not snr_known_db > snr_total_db:
        raise InfeasibleError(
            step,
            f"known component {snr_known_db:.3f} dB alone does not exceed the total {snr_total_db:.3f} dB",
        )
    if snr_known_db == math.inf:
        return snr_total_db
    residual = 10.0 ** (-snr_total_db / 10.0) - 10.0 ** (-snr_known_db / 10.0)
    return -10.0 * math.log10(residual)


def noise_floor_dbm(bw_hz: float, nf_db: float) -> float:
    if not bw_hz > 0:
        raise ValueError("bandwidth must be > 0")
    return THERMAL_DENSITY_DBM_HZ + 10.0 * math.log10(bw_hz) + nf_db


def min_received_power_dbm(bw_hz: float, nf_db: float, snr_noise_db: float) -> float:
    return noise_floor_dbm(bw_hz, nf_db) + snr_noise_db


def friis_received_power_dbm(p_tx_dbm: float, g_tx_dbi: float, l_fs_db: float, g_rx_dbi: float) -> float:
    return p_tx_dbm + g_tx_dbi - l_fs_db + g_rx_dbi


def free_space_path_loss_db(distance_m: float, carrier_hz: float) -> float:
    if not (distance_m > 0 and carrier_hz > 0):
        raise ValueError("distance and carrier frequency must be > 0")
    return 20.0 * math.log10(4.0 * math.pi * distance_m * carrier_hz / SPEED_OF_LIGHT)


# --------------------------------------------------------------------------
# Uplink
# --------------------------------------------------------------------------

def solve_uplink(params: SystemParams, overrides: Mapping[str, float] | None = None) -> UplinkReport:
    ov = _check_overrides(overrides, UPLINK_OVERRIDES)
    snr_rx = ov.get("snr_rx_bs_db")
    if snr_rx is None:
        snr_rx = required_component_snr(params.snr_link_db, params.snr_tx_ue_db, step="uplink.snr_rx_bs")
    snr_noise = ov.get("snr_noise_db", snr_rx + params.margin_noise_db)
    p_rx_min = ov.get("p_rx_bs_min_dbm", min_received_power_dbm(params.bw_ul_hz, params.nf_bs_db, snr_noise))
    # invert the Friis sum for the transmit power
    p_tx_min = ov.get("p_tx_ue_min_dbm", p_rx_min - params.g_ue_db + params.path_loss_db - params.g_bs_db)
    return UplinkReport(
        snr_rx_bs_db=snr_rx,
        snr_noise_db=snr_noise,
        p_rx_bs_min_dbm=p_rx_min,
        p_tx_ue_min_dbm=p_tx_min,
        p_pa_out_ue_min_dbm=p_tx_min + params.ebd_tx_insertion_loss_db,
    )


# --------------------------------------------------------------------------
# Downlink stage requirements
# --------------------------------------------------------------------------

def im3_input_referred_dbm(p_in_dbm: float, iip3_dbm: float, correction_db: float = 0.0) -> float:
    if p_in_dbm == NEG_INF:
        return NEG_INF
    return 3.0 * p_in_dbm - 2.0 * iip3_dbm + correction_db


def snr_si_requirement_db(snr_noise_db: float, snr_im3_db: float, neglect_factor: float) -> float:
    if not 0.0 < neglect_factor <= 1.0:
        raise ValueError("neglect_factor must lie in (0, 1]")
    inv = neglect_factor * (10.0 ** (-snr_noise_db / 10.0) + 10.0 ** (-snr_im3_db / 10.0))
    return -linear_to_db(inv)


def sic_total_db(p_pa_out_ue_dbm: float, p_rx_ue_dbm: float, snr_si_db: float) -> float:
    return p_pa_out_ue_dbm - (p_rx_ue_dbm - snr_si_db)


def sic1_requirement_db(p_pa_out_ue_dbm, p_rx_ue_dbm, snr_im3_db, iip3_lna_dbm, correction_db) -> float:
    # largest SI at the LNA input that keeps the corrected IM3 at the target SNR
    p_si1_max = (p_rx_ue_dbm - snr_im3_db + 2.0 * iip3_lna_dbm - correction_db) / 3.0
    return p_pa_out_ue_dbm - p_si1_max


def sic2_requirement_db(oip3_lna_dbm: float, iip3_rrx_dbm: float, additive_term_db: float = 6.0) -> float:
    return (2.0 / 3.0) * (oip3_lna_dbm - iip3_rrx_dbm) + additive_term_db


def derived_sic2_additive_db(margin_rrx_db: float, correction_db: float) -> float:
    """Additive constant obtained by substituting the corrected IM3 law into
    the rest-of-receiver criterion."""
    return (margin_rrx_db - correction_db) / 3.0


def sic3_requirement_db(p_oim3_pa_dbm, p_im3_lna_plus_noise_dbm, sic1_db, sic2_db, margin_db) -> float:
    return p_oim3_pa_dbm - p_im3_lna_plus_noise_dbm - sic1_db - sic2_db + margin_db


def adc_dynamic_range_check(enob_bits, sic_total_db, sic1_db, sic2_db, sic3_db) -> tuple[float, bool]:
    if not enob_bits >= 1:
        raise ValueError("enob_bits must be >= 1")
    dr = 6.0 * (enob_bits - 2.0)
    return dr, dr > sic_total_db - (sic1_db + sic2_db + sic3_db)


def sic4_requirement_db(sic_total_db, sic1_db, sic2_db, sic3_db) -> float:
    return max(0.0, sic_total_db - (sic1_db + sic2_db + sic3_db))


# Rounded reference values and the open question explaining each gap.
REFERENCE_VALUES: dict[str, tuple[float, str]] = {
    "snr_noise_db": (28.0, "OQ1"),
    "snr_si_db": (44.0, "OQ2"),
    "sic_total_db": (102.0, "OQ2"),
    "sic2_db": (25.0, "OQ3"),
    "sic3_db": (16.0, "OQ4"),
    "sic4_db": (17.0, "OQ5"),
}
ROUNDING_TOLERANCE_DB = 0.5

OPEN_QUESTIONS: dict[str, str] = {
    "OQ1": "downlink noise SNR of 28 dB is stated; the noise-floor formula with NF 8 dB at -46 dBm gives ~34 dB",
    "OQ2": "residual-SI SNR of 44 dB is stated; the 1% neglect rule with 28/23 dB gives ~41.8 dB",
    "OQ3": "the RF-SIC additive constant is stated as +6 dB; substituting the IM3 laws gives +10/3 dB",
    "OQ4": "analog SIC of 16 dB is stated; the combined LNA-IM3-plus-noise level gives ~11.7 dB",
    "OQ5": "digital SIC of 17 dB is stated; subtracting the stage values gives 19 dB",
    "OQ6": "the simulated allocation 40/28/16/10 dB sums to 94 dB, short of the total requirement",
}

DOWNLINK_OVERRIDES = (
    "p_rx_ue_dbm",
    "p_pa_out_ue_dbm",
    "snr_rx_ue_db",
    "snr_noise_db",
    "snr_im3_lna_db",
    "snr_si_db",
    "sic_total_db",
    "sic1_db",
    "sic2_db",
    "p_im3_lna_plus_noise_dbm",
    "sic3_db",
    "adc_dr_db",
    "sic4_db",
)
UPLINK_OVERRIDES = ("snr_rx_bs_db", "snr_noise_db", "p_rx_bs_min_dbm", "p_tx_ue_min_dbm")


def _check_overrides(overrides, allowed) -> dict[str, float]:
    ov = dict(overrides or {})
    unknown = sorted(set(ov) - set(allowed))
    if unknown:
        raise KeyError(f"unknown override(s): {', '.join(unknown)}")
    return {k: float(v) for k, v in ov.items()}


def solve_downlink(params: SystemParams, overrides: Mapping[str, float] | None = None) -> SicPlan:
    """Derive the total and per-stage SIC requirements at the UE receiver."""
    ov = _check_overrides(overrides, DOWNLINK_OVERRIDES)

    def pick(name, compute):
        return ov[name] if name in ov else compute()

    p_rx = pick(
        "p_rx_ue_dbm",
        lambda: friis_received_power_dbm(params.p_tx_bs_dbm, params.g_bs_db, params.path_loss_db, params.g_ue_db),
    )
    p_pa = pick("p_pa_out_ue_dbm", lambda: params.p_pa_out_ue_dbm)
    snr_rx = pick(
        "snr_rx_ue_db",
        lambda: required_component_snr(params.snr_link_db, params.snr_tx_bs_db, step="downlink.snr_rx_ue"),
    )
    noise_in = noise_floor_dbm(params.bw_dl_hz, params.nf_ue_db)

    def default_snr_noise():
        if params.snr_noise_dl_db is not None:
            return params.snr_noise_dl_db
        return p_rx - noise_in

    snr_noise = pick("snr_noise_db", default_snr_noise)
    # residual SI neglected while apportioning the receiver SNR
    snr_im3 = pick("snr_im3_lna_db", lambda: required_component_snr(snr_rx, snr_noise, step="downlink.snr_im3_lna"))
    snr_si = pick("snr_si_db", lambda: snr_si_requirement_db(snr_noise, snr_im3, params.si_neglect_factor))

    if p_pa == NEG_INF:
        # nothing leaks, nothing to cancel
        dr, _ = adc_dynamic_range_check(params.enob_bits, 0.0, 0.0, 0.0, 0.0)
        return SicPlan(
            snr_rx_ue_db=snr_rx, snr_noise_db=snr_noise, snr_im3_lna_db=snr_im3, snr_si_db=snr_si,
            p_rx_ue_dbm=p_rx, p_pa_out_ue_dbm=p_pa, p_im3_lna_plus_noise_dbm=noise_in,
            sic_total_db=0.0, sic1_db=0.0, sic2_db=0.0, sic3_db=0.0, sic4_db=0.0,
            adc_dr_db=ov.get("adc_dr_db", dr), adc_feasible=ov.get("adc_dr_db", dr) > 0.0, overrides=ov,
        )

    total = pick("sic_total_db", lambda: sic_total_db(p_pa, p_rx, snr_si))
    sic1 = pick(
        "sic1_db",
        lambda: sic1_requirement_db(p_pa, p_rx, snr_im3, params.iip3_lna_dbm, params.im3_correction_db),
    )
    additive = params.sic2_additive_db
    if additive is None:
        additive = derived_sic2_additive_db(params.margin_rrx_db, params.im3_correction_db)
    sic2 = pick("sic2_db", lambda: sic2_requirement_db(params.oip3_lna_dbm, params.iip3_rrx_dbm, additive))

    def default_im3_plus_noise():
        im3 = im3_input_referred_dbm(p_pa - sic1, params.iip3_lna_dbm, params.im3_correction_db)
        return power_sum_dbm([noise_in, im3])

    im3_noise = pick("p_im3_lna_plus_noise_dbm", default_im3_plus_noise)
    sic3 = pick(
        "sic3_db",
        lambda: sic3_requirement_db(params.p_oim3_pa_dbm, im3_noise, sic1, sic2, params.margin_pa_im3_db),
    )
    dr, ok = adc_dynamic_range_check(params.enob_bits, total, sic1, sic2, sic3)
    if "adc_dr_db" in ov:
        dr = ov["adc_dr_db"]
        ok = dr > total - (sic1 + sic2 + sic3)
    sic4 = pick("sic4_db", lambda: sic4_requirement_db(total, sic1, sic2, sic3))

    values = {
        "snr_noise_db": snr_noise, "snr_si_db": snr_si, "sic_total_db": total,
        "sic2_db": sic2, "sic3_db": sic3, "sic4_db": sic4,
    }
    devs = tuple(
        Deviation(k, values[k], ref, qid)
        for k, (ref, qid) in REFERENCE_VALUES.items()
        if abs(values[k] - ref) > ROUNDING_TOLERANCE_DB
    )
    return SicPlan(
        snr_rx_ue_db=snr_rx, snr_noise_db=snr_noise, snr_im3_lna_db=snr_im3, snr_si_db=snr_si,
        p_rx_ue_dbm=p_rx, p_pa_out_ue_dbm=p_pa, p_im3_lna_plus_noise_dbm=im3_noise,
        sic_total_db=total, sic1_db=sic1, sic2_db=sic2, sic3_db=sic3, sic4_db=sic4,
        adc_dr_db=dr, adc_feasible=ok, overrides=ov, deviations=devs,
    )


def closure_status(plan: SicPlan, alloc: StageAllocation) -> dict:
    """Whether an allocation meets the total requirement, and by how much."""
    margin = alloc.total_db - plan.sic_total_db
    return {
        "allocated_db": alloc.total_db,
        "required_db": plan.sic_total_db,
        "margin_db": margin,
        "closes": margin >= 0.0,
    }


# --------------------------------------------------------------------------
# Analytic node power track
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NodePowerTable:
    """Per-node dBm of each tracked signal component."""

    nodes: tuple[str, ...]
    rows: tuple[tuple[float, ...], ...]
    components: tuple[str, ...] = COMPONENTS

    def __post_init__(self):
        if len(self.rows) != len(self.nodes):
            raise ValueError("one row per node is required")
        for r in self.rows:
            if len(r) != len(self.components):
                raise ValueError("each row needs one value per component")

    def get(self, node: str, component: str) -> float:
        return self.rows[self.nodes.index(node)][self.components.index(component)]

    def column(self, component: str) -> list[float]:
        j = self.components.index(component)
        return [r[j] for r in self.rows]

    def as_dict(self) -> dict[str, dict[str, float]]:
        return {n: dict(zip(self.components, r)) for n, r in zip(self.nodes, self.rows)}


def node_power_track(
    params: SystemParams,
    allocation: StageAllocation | SicPlan | Mapping[str, float],
    adc_full_scale_dbm: float | None = None,
    receiver_im3: bool = True,
) -> NodePowerTable:
    """Propagate every component through the UE receiver analytically.

    Gains add. SIC1..SIC3 take their reference from the PA output and so
    attenuate both the linear SI and the PA distortion; SIC4 is referenced to
    the ideal digital transmit waveform and attenuates only the linear SI.
    Receiver IM3 is injected at the LNA, mixer and baseband amplifier from
    the SI level at each block input. Noise is lumped at the receiver input.
    When ``adc_full_scale_dbm`` is given, quantization noise for a
    full-scale-referenced uniform quantizer is added at the ADC.
    ``receiver_im3=False`` models a perfectly linear receiver.
    """
    if isinstance(allocation, SicPlan):
        alloc = allocation.allocation()
    elif isinstance(allocation, StageAllocation):
        alloc = allocation
    elif allocation is None:
        raise ValueError("a complete stage allocation is required")
    else:
        alloc = StageAllocation.from_mapping(allocation)

    p_rx = friis_received_power_dbm(params.p_tx_bs_dbm, params.g_bs_db, params.path_loss_db, params.g_ue_db)
    p_pa = params.p_pa_out_ue_dbm
    corr = params.im3_correction_db

    desired = p_rx
    si = p_pa - alloc.sic1_db
    pa_im3 = params.p_oim3_pa_dbm - alloc.sic1_db if p_pa != NEG_INF else NEG_INF
    rx_im3 = NEG_INF
    noise = noise_floor_dbm(params.bw_dl_hz, params.nf_ue_db)

    rows = []

    def emit():
        rows.append((desired, si, pa_im3, rx_im3, noise))

    def amplify(gain_db, iip3_dbm):
        nonlocal desired, si, pa_im3, rx_im3, noise
        generated = im3_input_referred_dbm(si, iip3_dbm, corr) if receiver_im3 else NEG_INF
        desired += gain_db
        pa_im3 += gain_db
        noise += gain_db
        rx_im3 = power_sum_dbm([rx_im3 + gain_db, generated + gain_db])
        si += gain_db

    emit()  # antenna (EBD RX port)
    emit()  # post_sic1: the leak through the EBD already carries SIC1
    amplify(params.g_lna_db, params.iip3_lna_dbm)
    emit()
    si -= alloc.sic2_db
    pa_im3 -= alloc.sic2_db
    emit()
    amplify(params.g_mixer_db, params.iip3_mixer_dbm)
    emit()
    amplify(params.g_bbamp_db, params.iip3_bbamp_dbm)
    emit()
    si -= alloc.sic3_db
    pa_im3 -= alloc.sic3_db
    emit()
    if adc_full_scale_dbm is not None:
        q_noise = adc_full_scale_dbm - (6.02 * params.enob_bits + 1.76)
        noise = power_sum_dbm([noise, q_noise])
    emit()
    si -= alloc.sic4_db
    emit()
    return NodePowerTable(nodes=NODES, rows=tuple(rows))


def path_gain_db(params: SystemParams) -> float:
    return params.g_lna_db + params.g_mixer_db + params.g_bbamp_db
