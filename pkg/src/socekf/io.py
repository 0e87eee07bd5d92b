"""Configuration and data file handling.

Cell parameters and filter tunings live in TOML files; drive cycles, traces,
and datasets are CSV.  Loaders validate eagerly and point at the offending
key (configs) or row/column (data files).  Writers format floats with
round-trip precision so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .cell import CellParameters, OcpCurve
from .errors import ConfigError, DataError
from .filters import FilterConfig, x0_from_soc
from .harness import CELSIUS_OFFSET, ComparisonReport, DriveCycle, \
    EstimateTrace, SyntheticDataset

_CELL_KEYS = {
    "alpha_p1", "alpha_n1", "d_p1", "d_n1", "r0_1",
    "e1", "e2", "e3", "e4", "e5",
    "c_min_p", "c_max_p", "c_min_n", "c_max_n",
    "q_p", "q_p_ah", "q_n", "q_n_ah", "q_cell", "q_cell_ah",
    "t_ref_k", "t_ref_c",
}

_FILTER_KEYS = {
    "q_x", "q_x_diag", "r_x", "q_theta", "r_theta",
    "x0", "init_soc", "p0_x", "p0_x_diag", "theta0", "p0_theta",
    "eps", "rebuild_delta_t", "gate_enabled", "gate_n_sigma", "jacobian",
}


def _read_toml(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}")


def _number(table: dict, key: str, section: str) -> float:
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError("expected a number", key=f"{section}.{key}")
    return float(v)


def _capacity(table: dict, base: str, section: str) -> float:
    """Read a capacity given in ampere-seconds (``base``) or ampere-hours
    (``base`` + "_ah"), exactly one of the two."""
    have_as = base in table
    have_ah = f"{base}_ah" in table
    if have_as == have_ah:
        raise ConfigError(
            f"give exactly one of {base} (A*s) or {base}_ah (Ah)",
            key=f"{section}.{base}")
    if have_as:
        return _number(table, base, section)
    return 3600.0 * _number(table, f"{base}_ah", section)


def _ocp_curve(doc: dict, section: str) -> OcpCurve:
    if section not in doc:
        raise ConfigError(f"missing [{section}] table", key=section)
    table = doc[section]
    for key in ("concentration", "potential"):
        if key not in table:
            raise ConfigError("missing breakpoint array",
                              key=f"{section}.{key}")
        if not isinstance(table[key], list):
            raise ConfigError("expected an array of numbers",
                              key=f"{section}.{key}")
    interpolation = table.get("interpolation", "pchip")
    unknown = set(table) - {"concentration", "potential", "interpolation"}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", key=section)
    try:
        return OcpCurve(np.asarray(table["concentration"], dtype=float),
                        np.asarray(table["potential"], dtype=float),
                        interpolation)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), key=section)


def load_cell_params(path) -> CellParameters:
    """Load and validate a cell-parameter TOML file.

    The [cell] table holds the scalar parameters (capacities accepted in
    A*s or Ah, reference temperature in kelvin via t_ref_k or Celsius via
    t_ref_c); [ocp_p] and [ocp_n] hold the electrode potential curves.
    """
    doc = _read_toml(path)
    if "cell" not in doc:
        raise ConfigError("missing [cell] table", key="cell")
    table = doc["cell"]
    unknown = set(table) - _CELL_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", key="cell")
    required = ["alpha_p1", "alpha_n1", "d_p1", "d_n1", "r0_1",
                "e1", "e2", "e3", "e4", "e5",
                "c_min_p", "c_max_p", "c_min_n", "c_max_n"]
    for key in required:
        if key not in table:
            raise ConfigError("missing required key", key=f"cell.{key}")
    if "t_ref_k" in table and "t_ref_c" in table:
        raise ConfigError("give at most one of t_ref_k or t_ref_c",
                          key="cell.t_ref_k")
    if "t_ref_k" in table:
        t_ref = _number(table, "t_ref_k", "cell")
    elif "t_ref_c" in table:
        t_ref = _number(table, "t_ref_c", "cell") + CELSIUS_OFFSET
    else:
        t_ref = 298.15
    kwargs = {key: _number(table, key, "cell") for key in required}
    kwargs["q_p"] = _capacity(table, "q_p", "cell")
    kwargs["q_n"] = _capacity(table, "q_n", "cell")
    kwargs["q_cell"] = _capacity(table, "q_cell", "cell")
    ocp_p = _ocp_curve(doc, "ocp_p")
    ocp_n = _ocp_curve(doc, "ocp_n")
    extra = set(doc) - {"cell", "ocp_p", "ocp_n"}
    if extra:
        raise ConfigError(f"unknown tables {sorted(extra)}")
    try:
        return CellParameters(ocp_p=ocp_p, ocp_n=ocp_n, t_ref=t_ref, **kwargs)
    except ValueError as exc:
        msg = str(exc)
        key, sep, rest = msg.partition(": ")
        if sep and " " not in key:
            raise ConfigError(rest, key=f"cell.{key.split('/')[0]}")
        raise ConfigError(msg, key="cell")


def _cov4(table: dict, base: str) -> np.ndarray:
    """Read a 4x4 covariance given as a full matrix (``base``) or a
    diagonal vector (``base`` + "_diag"), exactly one of the two."""
    have_full = base in table
    have_diag = f"{base}_diag" in table
    if have_full == have_diag:
        raise ConfigError(
            f"give exactly one of {base} (4x4) or {base}_diag (length 4)",
            key=f"filter.{base}")
    try:
        if have_diag:
            d = np.asarray(table[f"{base}_diag"], dtype=float)
            if d.shape != (4,):
                raise ValueError(f"expected 4 entries, got shape {d.shape}")
            return np.diag(d)
        m = np.asarray(table[base], dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
        return m
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), key=f"filter.{base}")


def load_filter_config(path, cell: CellParameters | None = None) -> FilterConfig:
    """Load and validate a filter-tuning TOML file.

    The [filter] table holds covariances (full matrices or ``*_diag``
    vectors), scalar variances, and the initial state as either an explicit
    ``x0`` 4-vector or an ``init_soc`` fraction; the latter requires the
    cell parameters to invert the SOC mapping for a relaxed cell.
    """
    doc = _read_toml(path)
    if "filter" not in doc:
        raise ConfigError("missing [filter] table", key="filter")
    table = doc["filter"]
    unknown = set(table) - _FILTER_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", key="filter")
    extra = set(doc) - {"filter"}
    if extra:
        raise ConfigError(f"unknown tables {sorted(extra)}")
    for key in ("r_x", "q_theta", "r_theta"):
        if key not in table:
            raise ConfigError("missing required key", key=f"filter.{key}")
    have_x0 = "x0" in table
    have_soc = "init_soc" in table
    if have_x0 == have_soc:
        raise ConfigError("give exactly one of x0 or init_soc",
                          key="filter.x0")
    if have_x0:
        x0 = np.asarray(table["x0"], dtype=float)
        if x0.shape != (4,):
            raise ConfigError("x0 must have 4 entries", key="filter.x0")
    else:
        if cell is None:
            raise ConfigError("init_soc requires cell parameters to resolve",
                              key="filter.init_soc")
        soc = _number(table, "init_soc", "filter")
        if not 0.0 <= soc <= 1.0:
            raise ConfigError("init_soc must be in [0, 1]",
                              key="filter.init_soc")
        x0 = x0_from_soc(soc, cell)
    kwargs = dict(
        q_x=_cov4(table, "q_x"),
        p0_x=_cov4(table, "p0_x"),
        r_x=_number(table, "r_x", "filter"),
        q_theta=_number(table, "q_theta", "filter"),
        r_theta=_number(table, "r_theta", "filter"),
        x0=x0,
    )
    for key in ("theta0", "p0_theta", "eps", "rebuild_delta_t",
                "gate_n_sigma"):
        if key in table:
            kwargs[key] = _number(table, key, "filter")
    if "gate_enabled" in table:
        v = table["gate_enabled"]
        if not isinstance(v, bool):
            raise ConfigError("expected a boolean", key="filter.gate_enabled")
        kwargs["gate_enabled"] = v
    if "jacobian" in table:
        v = table["jacobian"]
        if not isinstance(v, str):
            raise ConfigError("expected a string", key="filter.jacobian")
        kwargs["jacobian"] = v
    try:
        return FilterConfig(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        key = msg.split(" ", 1)[0]
        if key in _FILTER_KEYS:
            raise ConfigError(msg, key=f"filter.{key}")
        raise ConfigError(msg, key="filter")


_CYCLE_REQUIRED = ("time_s", "current_a", "temp_c")


def load_cycle(path, resample: float | None = None,
               require_voltage: bool = True) -> DriveCycle:
    """Load a drive-cycle CSV.

    Columns are header-named and order-free: time_s, current_a, temp_c are
    always required, voltage_v when ``require_voltage``, soc_ref optional.
    Temperatures convert Celsius to kelvin on load.  Row numbers in errors
    are 1-based counting the header line.

    Without ``resample`` the time base must already be uniform and gap-free
    (no spacing above twice the median); with it, every column is linearly
    interpolated onto a uniform grid with that spacing.
    """
    path = Path(path)
    required = _CYCLE_REQUIRED + (("voltage_v",) if require_voltage else ())
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"file not found: {path}")
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError("empty file", row=1)
        fields = [name.strip() for name in reader.fieldnames]
        for col in required:
            if col not in fields:
                raise DataError("missing required column", column=col)
        wanted = [col for col in
                  ("time_s", "current_a", "voltage_v", "temp_c", "soc_ref")
                  if col in fields]
        columns: dict[str, list[float]] = {col: [] for col in wanted}
        for i, row in enumerate(reader):
            row = {(k.strip() if k else k): v for k, v in row.items()}
            for col in wanted:
                raw = row.get(col)
                if raw is None or raw.strip() == "":
                    raise DataError("missing value", row=i + 2, column=col)
                try:
                    columns[col].append(float(raw))
                except ValueError:
                    raise DataError(f"unparseable value {raw.strip()!r}",
                                    row=i + 2, column=col)
    n = len(columns["time_s"])
    if n < 2:
        raise DataError(f"need at least 2 samples, got {n}")
    arrays = {col: np.asarray(vals) for col, vals in columns.items()}
    for col, a in arrays.items():
        if not np.all(np.isfinite(a)):
            bad = int(np.flatnonzero(~np.isfinite(a))[0])
            raise DataError("non-finite value", row=bad + 2, column=col)
    t = arrays["time_s"]
    d = np.diff(t)
    if np.any(d == 0):
        bad = int(np.flatnonzero(d == 0)[0])
        raise DataError("duplicated timestamp", row=bad + 3, column="time_s")
    if np.any(d < 0):
        bad = int(np.flatnonzero(d < 0)[0])
        raise DataError("time running backwards", row=bad + 3, column="time_s")
    if resample is None:
        med = float(np.median(d))
        if np.any(d > 2.0 * med):
            bad = int(np.flatnonzero(d > 2.0 * med)[0])
            raise DataError(
                f"sampling gap {d[bad]:.6g}s exceeds twice the median"
                f" {med:.6g}s; reject or pass a resample interval",
                row=bad + 3, column="time_s")
        if float(np.max(np.abs(d - d[0]))) > 1e-6 * d[0]:
            raise DataError("non-uniform sample spacing;"
                            " pass a resample interval")
    else:
        if resample <= 0:
            raise DataError(f"resample interval must be > 0, got {resample}")
        m = int(math.floor((t[-1] - t[0]) / resample)) + 1
        if m < 2:
            raise DataError("resample interval longer than the record")
        grid = t[0] + resample * np.arange(m)
        for col in wanted:
            if col != "time_s":
                arrays[col] = np.interp(grid, t, arrays[col])
        arrays["time_s"] = grid
    return DriveCycle(
        t=arrays["time_s"],
        current=arrays["current_a"],
        temperature=arrays["temp_c"] + CELSIUS_OFFSET,
        voltage=arrays.get("voltage_v"),
        soc_ref=arrays.get("soc_ref"),
    )


def _fmt(v) -> str:
    return repr(float(v))


def write_cycle(path, cycle: DriveCycle) -> None:
    """Write a cycle CSV (time_s, current_a, temp_c, plus voltage_v and
    soc_ref when the cycle carries them)."""
    header = ["time_s", "current_a", "temp_c"]
    cols = [cycle.t, cycle.current, cycle.temperature - CELSIUS_OFFSET]
    if cycle.voltage is not None:
        header.append("voltage_v")
        cols.append(cycle.voltage)
    if cycle.soc_ref is not None:
        header.append("soc_ref")
        cols.append(cycle.soc_ref)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(cycle.n):
            writer.writerow([_fmt(col[k]) for col in cols])


def write_dataset(path, ds: SyntheticDataset) -> None:
    """Write a simulated dataset as an estimation-ready cycle CSV with
    truth diagnostics (v_true_v, bias_v) appended."""
    cycle = ds.cycle
    header = ["time_s", "current_a", "voltage_v", "temp_c", "soc_ref",
              "v_true_v", "bias_v"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(cycle.n):
            writer.writerow([
                _fmt(cycle.t[k]), _fmt(cycle.current[k]), _fmt(ds.v_meas[k]),
                _fmt(cycle.temperature[k] - CELSIUS_OFFSET),
                _fmt(ds.soc_true[k]), _fmt(ds.v_true[k]),
                _fmt(ds.bias_profile[k]),
            ])


TRACE_HEADER = ["t", "I", "T", "V_meas", "V_spm", "theta_hat", "V_model",
                "soc_true", "soc_ekf", "soc_rbc", "err_soc_ekf",
                "err_soc_rbc", "err_v_model", "soc_clamped"]


def write_trace(path, cycle: DriveCycle,
                ekf: EstimateTrace | None = None,
                rbc: EstimateTrace | None = None,
                soc_true: np.ndarray | None = None) -> None:
    """Write the per-step trace CSV.

    V_spm, theta_hat, V_model, and soc_clamped come from the dual filter
    when it ran, otherwise from the baseline.  Unavailable cells (missing
    filter or missing ground truth) are left empty.  Temperatures are in
    kelvin; err_soc columns are estimate minus truth; err_v_model is the
    primary filter's V_model minus the measured voltage.
    """
    if ekf is None and rbc is None:
        raise ValueError("need at least one trace")
    primary = rbc if rbc is not None else ekf
    if soc_true is None:
        soc_true = cycle.soc_ref
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for k in range(cycle.n):
            soc_t = "" if soc_true is None else _fmt(soc_true[k])
            soc_e = "" if ekf is None else _fmt(ekf.soc_cell[k])
            soc_r = "" if rbc is None else _fmt(rbc.soc_cell[k])
            err_e = ("" if (ekf is None or soc_true is None)
                     else _fmt(ekf.soc_cell[k] - soc_true[k]))
            err_r = ("" if (rbc is None or soc_true is None)
                     else _fmt(rbc.soc_cell[k] - soc_true[k]))
            writer.writerow([
                _fmt(cycle.t[k]), _fmt(cycle.current[k]),
                _fmt(cycle.temperature[k]), _fmt(cycle.voltage[k]),
                _fmt(primary.v_spm[k]), _fmt(primary.theta_hat[k]),
                _fmt(primary.v_model[k]), soc_t, soc_e, soc_r, err_e, err_r,
                _fmt(primary.v_model[k] - cycle.voltage[k]),
                int(primary.soc_clamped[k]),
            ])


def report_text(report: ComparisonReport) -> str:
    """Fixed-width side-by-side accuracy table."""
    lines = []
    if report.failed is not None:
        lines.append(f"FAILED: {report.failed}")
    lines.append(f"{'':14}{'SOC RMSE (%)':>14}{'V RMSE (mV)':>14}"
                 f"{'max |SOC err| (%)':>20}")
    lines.append(f"{'EKF':14}{report.soc_rmse_ekf:>14.4f}"
                 f"{report.v_rmse_ekf:>14.4f}"
                 f"{report.max_abs_soc_err_ekf:>20.4f}")
    lines.append(f"{'RBC-DEKF':14}{report.soc_rmse_rbc:>14.4f}"
                 f"{report.v_rmse_rbc:>14.4f}"
                 f"{report.max_abs_soc_err_rbc:>20.4f}")
    lines.append(f"{'Improvement %':14}{report.improvement_soc:>14.1f}"
                 f"{report.improvement_v:>14.1f}")
    lines.append(f"samples: {report.n_samples}"
                 f"  skipped from metrics: {report.n_skipped}")
    return "\n".join(lines) + "\n"


def write_report(outdir, report: ComparisonReport) -> None:
    """Write report.txt (human table) and report.json (machine summary)."""
    outdir = Path(outdir)
    (outdir / "report.txt").write_text(report_text(report))
    payload = dataclasses.asdict(report)
    (outdir / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
