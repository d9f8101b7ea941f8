"""Command-line front end: ``fdsic budget | simulate | im3-sweep``.

Scenarios are single JSON documents (see ``scenarios/paper_defaults.json``).
Exit codes: 0 success or feasible, 1 valid but infeasible, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import tempfile
from importlib import resources
from pathlib import Path

import numpy as np

from . import budget as bd
from .blocks import AmpSpec
from .chain import ChainConfig, analytic_node_powers, compare_with_budget, run_full_link, run_im3_correction_experiment
from .waveform import OfdmConfig, write_constellation_csv

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT = 0, 1, 2

UNIT_SUFFIXES = ("_db", "_dbm", "_hz", "_m", "_bits")
BUNDLED = "paper_defaults"


class ScenarioError(ValueError):
    """Invalid scenario file or flag; maps to exit code 2."""


# --------------------------------------------------------------------------
# Scenario schema
# --------------------------------------------------------------------------

def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


SIM_KEYS = {
    "n_frames", "base_seed", "ue_pa_smoothness", "bs_pa_smoothness",
    "bs_pa_backoff_db", "adc_headroom_db", "nonlinear", "ue_tx_enabled", "noise_enabled",
}

SECTIONS: dict[str, set[str]] = {
    "system": _field_names(bd.SystemParams),
    "downlink_overrides": set(bd.DOWNLINK_OVERRIDES),
    "uplink_overrides": set(bd.UPLINK_OVERRIDES),
    "allocation": {"sic1_db", "sic2_db", "sic3_db", "sic4_db"},
    "ofdm": _field_names(OfdmConfig),
    "simulation": SIM_KEYS,
    "im3_sweep": {"pin_start_dbm", "pin_stop_dbm", "pin_step_db", "n_symbols", "seed"},
    "output": {"dir"},
}
TOP_LEVEL_SCALARS = {"description"}
FLAGS = {"nonlinear", "ue_tx_enabled", "noise_enabled"}
TEXT = {"dir"}
NULLABLE = {"l_fs_db"}  # null means derive from distance and carrier

# dimensionless keys exempt from the unit-suffix rule
UNITLESS = {
    "si_neglect_factor", "fft_size", "n_active_subcarriers", "cp_fraction", "n_symbols",
    "oversampling_factor", "usable_fraction", "n_frames", "base_seed", "ue_pa_smoothness",
    "bs_pa_smoothness", "nonlinear", "ue_tx_enabled", "noise_enabled", "seed", "dir",
}


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def _where(text: str, path: str, key: str) -> str:
    line = _line_of(text, key)
    return f"{path} (line {line})" if line else path


def _key_error(text: str, section: str, key: str) -> ScenarioError:
    loc = _where(text, f"{section}.{key}" if section else key, key)
    if key not in UNITLESS and not key.endswith(UNIT_SUFFIXES):
        return ScenarioError(f"{loc}: key {key!r} lacks a unit suffix ({', '.join(UNIT_SUFFIXES)})")
    return ScenarioError(f"{loc}: unknown key {key!r}")


def validate_scenario(doc, text: str = "") -> dict:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    for top, body in doc.items():
        if top in TOP_LEVEL_SCALARS:
            continue
        if top not in SECTIONS:
            raise ScenarioError(f"{_where(text, top, top)}: unknown section {top!r}")
        if not isinstance(body, dict):
            raise ScenarioError(f"{top}: section must be an object")
        for key, value in body.items():
            if key not in SECTIONS[top]:
                raise _key_error(text, top, key)
            _check_type(text, top, key, value)
    return doc


def _check_type(text: str, section: str, key: str, value) -> None:
    if key in FLAGS:
        ok, want = isinstance(value, bool), "true or false"
    elif key in TEXT:
        ok, want = isinstance(value, str), "a string"
    else:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        ok = ok or (value is None and key in NULLABLE)
        want = "a number"
    if not ok:
        raise ScenarioError(f"{_where(text, f'{section}.{key}', key)}: expected {want}, got {value!r}")


def load_scenario(path: str | os.PathLike | None) -> dict:
    """Parse and validate a scenario. ``None`` or ``"paper_defaults"`` loads the bundled one."""
    if path is None or str(path) == BUNDLED:
        text = resources.files("fdsic.scenarios").joinpath(f"{BUNDLED}.json").read_text(encoding="utf-8")
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ScenarioError(f"cannot read scenario {path}: {e.strerror or e}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"scenario parse error at line {e.lineno}, column {e.colno}: {e.msg}") from None
    return validate_scenario(doc, text)


def parse_value(raw: str):
    s = raw.strip()
    low = s.lower()
    if low in ("inf", "+inf", "infinity"):
        return math.inf
    if low in ("-inf", "-infinity"):
        return -math.inf
    try:
        return json.loads(s)
    except json.JSONDecodeError:
        return s


def apply_overrides(doc: dict, assignments) -> dict:
    """Apply ``key=value`` strings. Keys are ``section.key`` or a bare key
    that belongs to exactly one section."""
    doc = json.loads(json.dumps(doc))
    for a in assignments or ():
        if "=" not in a:
            raise ScenarioError(f"override {a!r} is not of the form key=value")
        key, raw = a.split("=", 1)
        key = key.strip()
        if "." in key:
            section, name = key.split(".", 1)
            if section not in SECTIONS:
                raise ScenarioError(f"override {key!r}: unknown section {section!r}")
            if name not in SECTIONS[section]:
                raise _key_error("", section, name)
        else:
            owners = [s for s, keys in SECTIONS.items() if key in keys]
            if not owners:
                raise _key_error("", "", key)
            if len(owners) > 1:
                choices = ", ".join(f"{s}.{key}" for s in owners)
                raise ScenarioError(f"override {key!r} is ambiguous; use one of {choices}")
            section, name = owners[0], key
        value = parse_value(raw)
        _check_type("", section, name, value)
        doc.setdefault(section, {})[name] = value
    return doc


def _build(factory, section: str, values: dict):
    try:
        return factory(**values)
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"{section}: {e}") from None


def system_params(doc: dict) -> bd.SystemParams:
    return _build(bd.SystemParams, "system", doc.get("system", {}))


def ofdm_config(doc: dict, **changes) -> OfdmConfig:
    return _build(OfdmConfig, "ofdm", {**doc.get("ofdm", {}), **changes})


def allocation(doc: dict) -> bd.StageAllocation:
    if "allocation" not in doc:
        raise ScenarioError("allocation: section is required for this command")
    try:
        return bd.StageAllocation.from_mapping(doc["allocation"])
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"allocation: {e}") from None


def chain_config(doc: dict, frames: int | None = None, seed: int | None = None) -> ChainConfig:
    sim = dict(doc.get("simulation", {}))
    if frames is not None:
        sim["n_frames"] = frames
    if seed is not None:
        sim["base_seed"] = seed
    return _build(
        lambda **kw: ChainConfig(system_params(doc), allocation(doc), ofdm_config(doc), **kw),
        "simulation", sim,
    )


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------

def jsonable(x):
    """Plain JSON types; non-finite floats become "inf" / "-inf" / "nan"."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    if dataclasses.is_dataclass(x):
        return jsonable(dataclasses.asdict(x))
    return x


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def _atomic_write(path: Path, write) -> None:
    """Write through ``write(tmp_path)`` then rename into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        write(tmp)
        mask = os.umask(0)
        os.umask(mask)
        os.chmod(tmp, 0o666 & ~mask)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path: Path, text: str) -> None:
    def w(tmp):
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)

    _atomic_write(path, w)


def _num(v: float) -> str:
    return repr(float(v))


def node_table_csv(table: bd.NodePowerTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node"] + [f"{c}_dbm" for c in table.components])
    for node, row in zip(table.nodes, table.rows):
        w.writerow([node] + [_num(v) for v in row])
    return buf.getvalue()


def _fmt(v: float, nd: int = 2) -> str:
    return f"{v:.{nd}f}" if math.isfinite(v) else repr(float(v))


def _table(rows, header) -> str:
    cells = [list(header)] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def budget_report(doc: dict, use_overrides: bool = True) -> dict:
    params = system_params(doc)
    dl_ov = doc.get("downlink_overrides", {}) if use_overrides else {}
    ul_ov = doc.get("uplink_overrides", {}) if use_overrides else {}
    try:
        up = bd.solve_uplink(params, ul_ov)
        plan = bd.solve_downlink(params, dl_ov)
    except KeyError as e:
        raise ScenarioError(str(e.args[0])) from None
    report = {
        "uplink": dataclasses.asdict(up),
        "downlink": plan.as_dict(),
        "adc_check": {
            "dynamic_range_db": plan.adc_dr_db,
            "residual_after_analog_db": plan.analog_residual_db,
            "feasible": plan.adc_feasible,
        },
        "open_questions": {d.question_id: bd.OPEN_QUESTIONS[d.question_id] for d in plan.deviations},
        "feasible": plan.feasible,
    }
    if "allocation" in doc:
        report["allocation_closure"] = bd.closure_status(plan, allocation(doc))
    return report


def _budget_table(r: dict) -> str:
    up, dl, adc = r["uplink"], r["downlink"], r["adc_check"]
    out = ["Uplink"]
    out.append(_table([
        ("SNR_RX(BS)", _fmt(up["snr_rx_bs_db"]), "dB"),
        ("SNR_noise(BS)", _fmt(up["snr_noise_db"]), "dB"),
        ("P_RX,BS,min", _fmt(up["p_rx_bs_min_dbm"]), "dBm"),
        ("P_TX,UE,min", _fmt(up["p_tx_ue_min_dbm"]), "dBm"),
        ("P_PA-out,UE,min", _fmt(up["p_pa_out_ue_min_dbm"]), "dBm"),
    ], ("quantity", "value", "unit")))
    out.append("")
    out.append("Downlink SIC plan")
    out.append(_table([
        ("P_RX,UE", _fmt(dl["p_rx_ue_dbm"]), "dBm"),
        ("SNR_RX(UE)", _fmt(dl["snr_rx_ue_db"]), "dB"),
        ("SNR_noise", _fmt(dl["snr_noise_db"]), "dB"),
        ("SNR_IM3-LNA", _fmt(dl["snr_im3_lna_db"]), "dB"),
        ("SNR_SI", _fmt(dl["snr_si_db"]), "dB"),
        ("SIC_total", _fmt(dl["sic_total_db"]), "dB"),
        ("SIC1", _fmt(dl["sic1_db"]), "dB"),
        ("SIC2", _fmt(dl["sic2_db"]), "dB"),
        ("SIC3", _fmt(dl["sic3_db"]), "dB"),
        ("SIC4", _fmt(dl["sic4_db"]), "dB"),
    ], ("quantity", "value", "unit")))
    out.append("")
    verdict = "ok" if adc["feasible"] else "FAIL"
    out.append(f"ADC check: DR {_fmt(adc['dynamic_range_db'])} dB vs residual "
               f"{_fmt(adc['residual_after_analog_db'])} dB -> {verdict}")
    if dl["overrides"]:
        out.append("overrides: " + ", ".join(f"{k}={v:g}" for k, v in sorted(dl["overrides"].items())))
    for d in dl["deviations"]:
        out.append(f"deviation [{d['question_id']}] {d['quantity']}: computed {_fmt(d['computed'])}"
                   f" vs reference {_fmt(d['reference'])}; {bd.OPEN_QUESTIONS[d['question_id']]}")
    if "allocation_closure" in r:
        c = r["allocation_closure"]
        out.append(f"allocation {_fmt(c['allocated_db'])} dB vs required {_fmt(c['required_db'])} dB: "
                   f"{'closes' if c['closes'] else 'short by ' + _fmt(-c['margin_db'])}")
    return "\n".join(out)


def cmd_budget(args) -> int:
    doc = apply_overrides(load_scenario(args.scenario), args.override)
    r = budget_report(doc, use_overrides=not args.no_overrides)
    text = dumps(r) if args.format == "json" else _budget_table(r) + "\n"
    sys.stdout.write(text)
    if args.out:
        write_text(Path(args.out) / "budget.json", dumps(r))
    return EXIT_OK if r["feasible"] else EXIT_INFEASIBLE


def _out_dir(args, doc) -> Path:
    if args.out:
        return Path(args.out)
    return Path(doc.get("output", {}).get("dir", "fdsic_out"))


def cmd_simulate(args) -> int:
    doc = apply_overrides(load_scenario(args.scenario), args.override)
    cfg = chain_config(doc, args.frames, args.seed)
    out = _out_dir(args, doc)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ScenarioError(f"cannot create output directory {out}: {e.strerror or e}") from None

    rep = run_full_link(cfg)
    analytic = analytic_node_powers(cfg, rep)
    cmp_ = compare_with_budget(rep.node_powers, analytic, 1.5, components=("desired", "si_linear", "noise"))
    report = {
        "summary": rep.summary(),
        "analytic_node_powers_dbm": analytic.as_dict(),
        "max_node_deviation_db": {c: cmp_.max_deviation(c) for c in ("desired", "si_linear", "noise")},
        "config": {
            "system": dataclasses.asdict(cfg.params),
            "allocation": dataclasses.asdict(cfg.allocation),
            "ofdm": dataclasses.asdict(cfg.ofdm),
            "simulation": {k: getattr(cfg, k) for k in sorted(SIM_KEYS)},
        },
    }
    write_text(out / "report.json", dumps(report))
    write_text(out / "node_powers.csv", node_table_csv(rep.node_powers))
    for name, (ref, rx) in (("constellation_tx.csv", rep.tx_constellation),
                            ("constellation_link.csv", rep.link_constellation)):
        _atomic_write(out / name, lambda tmp, ref=ref, rx=rx: write_constellation_csv(tmp, ref, rx))

    print(f"EVM_tx = {rep.evm_tx_percent:.2f} %, EVM_link = {rep.evm_link_percent:.2f} % "
          f"over {rep.n_frames} frame(s), seed {rep.base_seed}")
    c = rep.closure
    print(f"allocation {_fmt(c['allocated_db'])} dB vs required {_fmt(c['required_db'])} dB")
    print(f"outputs written to {out}")
    return EXIT_OK


def _sweep_levels(start: float, stop: float, step: float) -> list[float]:
    if step == 0 or not math.isfinite(step):
        raise ScenarioError("--pin-step must be a finite non-zero number")
    if (stop - start) * step < 0:
        raise ScenarioError("--pin-step points away from --pin-stop")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(n)]


def cmd_im3_sweep(args) -> int:
    doc = apply_overrides(load_scenario(args.scenario), args.override)
    sw = doc.get("im3_sweep", {})
    start = args.pin_start if args.pin_start is not None else sw.get("pin_start_dbm", -62.0)
    stop = args.pin_stop if args.pin_stop is not None else sw.get("pin_stop_dbm", start)
    step = args.pin_step if args.pin_step is not None else sw.get("pin_step_db", 2.0)
    levels = _sweep_levels(float(start), float(stop), float(step))
    n_sym = sw.get("n_symbols")
    ofdm = ofdm_config(doc, **({"n_symbols": n_sym} if n_sym is not None else {}))
    p = system_params(doc)
    amp = _build(AmpSpec, "system", {"gain_db": p.g_lna_db, "kind": "polynomial", "iip3_dbm": p.iip3_lna_dbm})
    seed = args.seed if args.seed is not None else sw.get("seed", 0)
    curve = run_im3_correction_experiment(ofdm, amp, levels, seed=int(seed))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p_in_dbm", "im3_sim_dbm", "im3_pred_dbm"])
    for row in curve.points:
        w.writerow([_num(v) for v in row])
    out = _out_dir(args, doc)
    write_text(out / "im3_sweep.csv", buf.getvalue())

    for lvl in curve.saturated:
        print(f"warning: {lvl:.1f} dBm drives the amplifier into saturation", file=sys.stderr)
    print(f"fitted offset = {curve.offset_db:.2f} dB over {sum(curve.fit_mask)} point(s)")
    if math.isfinite(curve.slope_db_per_db):
        print(f"IM3 slope = {curve.slope_db_per_db:.3f} dB/dB")
    print(f"curve written to {out / 'im3_sweep.csv'}")
    return EXIT_OK


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fdsic", description="Full-duplex SIC budget solver and link simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", nargs="?", default=None,
                       help="scenario JSON (default: bundled paper_defaults)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a scenario value, e.g. enob_bits=5 or system.nf_ue_db=14")
        p.add_argument("--out", default=None, help="output directory")

    b = sub.add_parser("budget", help="solve the uplink and the SIC stage requirements")
    common(b)
    b.add_argument("--format", choices=("table", "json"), default="table")
    b.add_argument("--no-overrides", action="store_true", help="ignore the scenario's rounded override values")
    b.set_defaults(func=cmd_budget)

    s = sub.add_parser("simulate", help="Monte-Carlo simulation of the full link")
    common(s)
    s.add_argument("--frames", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("im3-sweep", help="OFDM IM3 versus two-tone prediction for the LNA")
    common(m)
    m.add_argument("--pin-start", type=float, default=None, help="first input level, dBm")
    m.add_argument("--pin-stop", type=float, default=None, help="last input level, dBm")
    m.add_argument("--pin-step", type=float, default=None, help="level step, dB")
    m.add_argument("--seed", type=int, default=None)
    m.set_defaults(func=cmd_im3_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        return args.func(args)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except bd.InfeasibleError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
