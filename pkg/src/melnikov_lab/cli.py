"""Batch scenario runner: JSON configuration in, report and data files out.

Five scenario kinds map onto the library modules:

    floquet-scan    discriminant trace and band-edge report for a potential
    soliton-demo    one-soliton annihilation trace under the source-coupled flow
    ba-verify       differential identities of the genus-zero eigenfunction engine
    evolve          pseudo-spectral runs (sourced, pure-KdV, or prescribed-source)
    verify-all      the full acceptance suite

Every run writes ``report.json`` (scenario echo, per-check measured value and
tolerance, calibration records, tool version) plus CSV data files and optional
SVG renderings of the same series.  ``report.json`` is byte-identical across
repeat runs of the same scenario and seed; anything wall-clock (timestamps,
elapsed seconds, runtime-budget checks) lives in the ``report_meta.json``
sidecar.  All files are written temp-then-rename.

``MELNIKOV_LAB_THREADS`` is validated and echoed in the sidecar.  The present
implementation computes sequentially; the variable reserves the interface.

Exit codes: 0 all checks pass, 1 at least one failed check, 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import __version__
from .acceptance import _sub, all_criteria
from .baker_akhiezer import (
    SpectralDataG0,
    TimePoint,
    eval_psi,
    eval_psi_star,
    potential_grid_csv,
    potential_u,
    solve_ba,
    verify_deltau1,
    verify_deromega,
    verify_dpsi,
    verify_tauder1,
)
from .floquet import (
    DegenerateEnergy,
    PeriodicPotential,
    discriminant_csv,
    find_band_edges,
    scan_discriminant,
)
from .grid import Field, PeriodicGrid
from .soliton import (
    FlowSetting,
    SolitonState,
    annihilation_time,
    c_trajectory,
    peak_position,
    potential,
    residue_flow_calibration,
    trajectory_csv,
)
from .solver import (
    BlowUp,
    BoxTooSmall,
    SolverConfig,
    SourceSpec,
    evolve,
    evolve_prescribed_source,
    invariants_csv,
    isospectrality_report,
    snapshots_csv,
)

KINDS = ("floquet-scan", "soliton-demo", "ba-verify", "evolve", "verify-all")
THREADS_ENV = "MELNIKOV_LAB_THREADS"

_MISSING = object()


class ScenarioError(ValueError):
    """Invalid scenario input; the CLI maps this to exit code 2."""


@dataclass(frozen=True)
class Scenario:
    """One batch run: a kind, its parameters, and where artifacts go."""

    kind: str
    parameters: Mapping[str, Any]
    out_dir: Path
    seed: int = 0
    svg: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScenarioError(f"kind must be one of {', '.join(KINDS)}")
        if not isinstance(self.parameters, Mapping):
            raise ScenarioError("parameters must be a JSON object")


@dataclass(frozen=True)
class Report:
    """What a run measured: checks with tolerances, derived data, artifacts."""

    scenario: Scenario
    checks: Mapping[str, Mapping[str, Any]]
    data: Mapping[str, Any] = field(default_factory=dict)
    artifacts: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return all(sub["passed"] for sub in self.checks.values())


# ---------------------------------------------------------------------------
# file plumbing


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _atomic_csv(writer: Callable[[Path], None], path: Path) -> None:
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


def emit_plot_data(series: Mapping[str, Sequence[float]], path,
                   svg: bool = False, stack_offset: float = 0.0) -> Path:
    """Write named columns as a CSV; optionally render an SVG line plot.

    The first column is the abscissa; the rest are traces.  ``stack_offset``
    shifts successive traces vertically in the SVG only (waterfall style);
    the CSV always holds the raw values.  Empty input (no columns, or any
    empty or ragged column) is an error and no file is written.
    """
    names = list(series)
    if not names:
        raise ValueError("empty series: nothing to emit")
    columns = [np.asarray(series[name], dtype=float) for name in names]
    if any(col.ndim != 1 or col.size == 0 for col in columns):
        raise ValueError("every series must be a nonempty one-dimensional sequence")
    if len({col.size for col in columns}) != 1:
        raise ValueError("series columns must all have the same length")
    path = Path(path)
    lines = [",".join(names)]
    for row in zip(*columns):
        lines.append(",".join("%.17g" % v for v in row))
    _atomic_write_text(path, "\n".join(lines) + "\n")
    if svg:
        _render_svg(names, columns, path.with_suffix(".svg"), stack_offset)
    return path


def _render_svg(names: list[str], columns: list[np.ndarray], path: Path,
                stack_offset: float) -> None:
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    xs = columns[0]
    if len(columns) == 1:
        ax.plot(np.arange(xs.size), xs, linewidth=1.0)
        ax.set_xlabel("index")
        ax.set_ylabel(names[0])
    else:
        for i, (name, col) in enumerate(zip(names[1:], columns[1:])):
            ax.plot(xs, col + i * stack_offset, linewidth=1.0, label=name)
        ax.set_xlabel(names[0])
        if len(names) <= 9:
            ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    tmp = path.with_name(path.name + ".tmp")
    fig.savefig(tmp, format="svg")
    plt.close(fig)
    os.replace(tmp, path)


def _jsonable(value):
    """Recursively coerce numpy/complex/path values into plain JSON types."""
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    if isinstance(value, (complex, np.complexfloating)):
        z = complex(value)
        return [z.real, z.imag]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    raise TypeError(f"cannot serialize {type(value).__name__} into a report")


# ---------------------------------------------------------------------------
# parameter schema helpers


def _check_keys(params: Mapping[str, Any], allowed: set[str], kind: str) -> None:
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise ScenarioError(
            f"unknown parameter(s) for {kind}: {', '.join(unknown)}; "
            f"allowed: {', '.join(sorted(allowed)) or '(none)'}")


def _param(params: Mapping[str, Any], key: str, kind: str, default=_MISSING):
    if key in params:
        return params[key]
    if default is _MISSING:
        raise ScenarioError(f"{kind} requires parameter '{key}'")
    return default


def _as_float(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"'{name}' must be a number, got {value!r}")
    return float(value)


def _as_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"'{name}' must be an integer, got {value!r}")
    return int(value)


def _as_bool(value, name: str) -> bool:
    if not isinstance(value, bool):
        raise ScenarioError(f"'{name}' must be true or false, got {value!r}")
    return value


def _as_complex(value, name: str) -> complex:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if (isinstance(value, (list, tuple)) and len(value) == 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                    for v in value)):
        return complex(value[0], value[1])
    raise ScenarioError(f"'{name}' must be a number or a [re, im] pair, got {value!r}")


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ScenarioError(
            f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ScenarioError(f"{THREADS_ENV} must be >= 1, got {value}")
    return value


# ---------------------------------------------------------------------------
# scenario runners; each returns (checks, data, artifacts, sidecar_extra)


def _run_floquet_scan(sc: Scenario):
    p = sc.parameters
    _check_keys(p, {"u", "T", "range", "amplitude", "samples"}, sc.kind)
    ukind = _param(p, "u", sc.kind, default="zero")
    if ukind not in ("zero", "cosine"):
        raise ScenarioError(f"'u' must be 'zero' or 'cosine', got {ukind!r}")
    period = _as_float(_param(p, "T", sc.kind), "T")
    if period <= 0.0:
        raise ScenarioError(f"'T' must be positive, got {period}")
    window = _param(p, "range", sc.kind)
    if not (isinstance(window, (list, tuple)) and len(window) == 2):
        raise ScenarioError("'range' must be a [lo, hi] pair")
    lo, hi = (_as_float(v, "range") for v in window)
    if not lo < hi:
        raise ScenarioError(f"'range' needs lo < hi, got [{lo}, {hi}]")
    amplitude = _as_float(_param(p, "amplitude", sc.kind, default=0.2), "amplitude")
    samples = _as_int(_param(p, "samples", sc.kind, default=241), "samples")
    if samples < 2:
        raise ScenarioError(f"'samples' must be >= 2, got {samples}")

    if ukind == "zero":
        pot = PeriodicPotential.zero(period)
    else:
        pot = PeriodicPotential.from_function(
            lambda x: amplitude * np.cos(2.0 * np.pi * x / period), period)

    energies = np.linspace(lo, hi, samples)
    scan = scan_discriminant(pot, energies)
    deltas = np.array([s.delta.real for s in scan])
    gaps = find_band_edges(pot, lo, hi)

    checks = {"finite_scan": _sub(float(np.sum(~np.isfinite(deltas))), 0.5)}
    if ukind == "zero":
        oracle = np.array(
            [(2.0 * np.cos(period * complex(np.sqrt(complex(e))))).real
             for e in energies])
        checks["free_discriminant_error"] = _sub(
            float(np.max(np.abs(deltas - oracle))), 1e-10)
        expected = []
        k = 1
        while (k * math.pi / period) ** 2 <= hi:
            loc = (k * math.pi / period) ** 2
            if loc >= lo:
                expected.append(loc)
            k += 1
        checks["closed_gap_count_error"] = _sub(
            float(abs(len(gaps.closed_gaps) - len(expected))), 0.5)
        if expected and gaps.closed_gaps:
            worst = max(min(abs(c - e) for e in expected)
                        for c in gaps.closed_gaps)
            checks["closed_gap_location_error"] = _sub(float(worst), 1e-6)

    _atomic_csv(lambda path: discriminant_csv(scan, path),
                sc.out_dir / "discriminant.csv")
    emit_plot_data({"energy": energies, "delta": deltas},
                   sc.out_dir / "discriminant_trace.csv", svg=sc.svg)

    data = {
        "band_edges": list(gaps.band_edges),
        "closed_gaps": list(gaps.closed_gaps),
        "open_gaps": [list(g) for g in gaps.open_gaps],
        "scan_spacing": gaps.scan_spacing,
        "notes": list(gaps.notes),
    }
    artifacts = ["discriminant.csv", "discriminant_trace.csv"]
    if sc.svg:
        artifacts.append("discriminant_trace.svg")
    return checks, data, artifacts, {}


def _run_soliton_demo(sc: Scenario):
    p = sc.parameters
    _check_keys(p, {"kappa", "c0", "trace_points"}, sc.kind)
    kappa = _as_float(_param(p, "kappa", sc.kind), "kappa")
    if kappa <= 0.0:
        raise ScenarioError(f"'kappa' must be positive, got {kappa}")
    c0 = _as_float(_param(p, "c0", sc.kind), "c0")
    rate = kappa**3
    if not 0.0 < c0 < 1.0 / rate:
        raise ScenarioError(
            "soliton-demo illustrates the annihilation regime and requires "
            f"0 < c0 < kappa^-3 = {1.0 / rate:.6g}, got c0 = {c0}")
    npts = _as_int(_param(p, "trace_points", sc.kind, default=257), "trace_points")
    if npts < 2:
        raise ScenarioError(f"'trace_points' must be >= 2, got {npts}")

    t_star = annihilation_time(kappa, c0)
    flow = FlowSetting("melnikov", c0, kappa)
    ts = np.linspace(0.0, t_star, npts)
    cs = np.asarray(c_trajectory(flow, ts))
    s0 = SolitonState(kappa, c0)
    x0 = peak_position(s0)

    checks = {
        "c_vanishes_at_t_star": _sub(abs(float(c_trajectory(flow, t_star))), 1e-12),
        "initial_peak_amplitude_error": _sub(
            abs(float(potential(s0, x0)) + 2.0 * kappa**2), 1e-10),
        "trace_strictly_decays": _sub(float(np.max(np.diff(cs))), 0.0),
    }

    _atomic_csv(lambda path: trajectory_csv(flow, ts, path),
                sc.out_dir / "trajectory.csv")
    emit_plot_data({"t": ts, "c": cs}, sc.out_dir / "c_trace.csv", svg=sc.svg)

    data = {
        "kappa": kappa,
        "c0": c0,
        "t_star": t_star,
        "fixed_point": 1.0 / rate,
        "initial_peak_position": x0,
    }
    artifacts = ["trajectory.csv", "c_trace.csv"]
    if sc.svg:
        artifacts.append("c_trace.svg")
    return checks, data, artifacts, {}


def _run_ba_verify(sc: Scenario):
    p = sc.parameters
    _check_keys(p, {"kappas", "taus", "x", "lambda_samples"}, sc.kind)
    raw_kappas = _param(p, "kappas", sc.kind, default=[1.0, 1.6])
    if not isinstance(raw_kappas, (list, tuple)) or not raw_kappas:
        raise ScenarioError("'kappas' must be a nonempty list of positive numbers")
    kappas = [_as_float(v, "kappas") for v in raw_kappas]
    if any(v <= 0.0 for v in kappas):
        raise ScenarioError("'kappas' must all be positive")
    default_taus = [-2.0 + 0.7 * j for j in range(len(kappas))]
    raw_taus = _param(p, "taus", sc.kind, default=default_taus)
    if not isinstance(raw_taus, (list, tuple)) or len(raw_taus) != len(kappas):
        raise ScenarioError("'taus' must be a list matching the length of 'kappas'")
    taus = tuple(_as_complex(v, "taus") for v in raw_taus)
    x = _as_float(_param(p, "x", sc.kind, default=0.25), "x")
    nlam = _as_int(_param(p, "lambda_samples", sc.kind, default=4), "lambda_samples")
    if not 1 <= nlam <= 32:
        raise ScenarioError(f"'lambda_samples' must be in 1..32, got {nlam}")

    try:
        data_obj = SpectralDataG0.kdv(kappas)
    except ValueError as exc:
        raise ScenarioError(f"invalid spectral data: {exc}") from None
    tp = TimePoint((x,), taus)
    kmax = max(kappas)

    # Evaluation points in the right half plane, at least 0.7 away from every
    # pole +-kappa_j; seeded so the report is reproducible.
    rng = np.random.default_rng(sc.seed)
    lams = [complex(kmax + 0.7 + 2.0 * rng.random(), -1.0 + 2.0 * rng.random())
            for _ in range(nlam)]
    mu = 0.4
    while min(min(abs(mu - k), abs(mu + k)) for k in kappas) < 0.06:
        mu += 0.13
    lam_omega = kmax + 1.9

    checks = {}
    xs = x + np.linspace(-0.75, 0.75, 5)
    for k in range(len(kappas)):
        checks[f"tauder1_residual_k{k}"] = _sub(
            verify_tauder1(data_obj, tp, k, xs), 1e-6)
    checks["dpsi_residual"] = _sub(verify_dpsi(data_obj, tp, 0, lams[0]), 1e-6)
    checks["deromega_residual"] = _sub(
        verify_deromega(data_obj, tp, lam_omega, mu), 1e-7)
    checks["deltau1_residual"] = _sub(verify_deltau1(data_obj, tp, 0, lams), 1e-6)
    refl = max(
        abs(eval_psi_star(data_obj, tp, lam) - eval_psi(data_obj, tp, -lam))
        / max(1.0, abs(eval_psi(data_obj, tp, -lam)))
        for lam in lams)
    checks["conjugate_reflection_error"] = _sub(float(refl), 1e-10)

    grid_xs = x + np.linspace(-2.0, 2.0, 41)
    grid_taus = taus[0].real + np.linspace(-1.5, 1.5, 7)
    _atomic_csv(
        lambda path: potential_grid_csv(data_obj, tp, 0, grid_xs, grid_taus, path),
        sc.out_dir / "u_grid.csv")
    profile_xs = x + np.linspace(-4.0, 4.0, 161)
    profile_u = [potential_u(data_obj, tp.with_x(float(xv))).real
                 for xv in profile_xs]
    emit_plot_data({"x": profile_xs, "u_re": profile_u},
                   sc.out_dir / "u_profile.csv", svg=sc.svg)

    data = {
        "kappas": kappas,
        "taus": list(taus),
        "x": x,
        "lambda_draws": lams,
        "deromega_point": {"lambda": lam_omega, "mu": mu},
        "condition_number": solve_ba(data_obj, tp).condition_number,
    }
    artifacts = ["u_grid.csv", "u_profile.csv"]
    if sc.svg:
        artifacts.append("u_profile.svg")
    return checks, data, artifacts, {}


_EVOLVE_TOLERANCES = {
    "mean_drift": 1e-12,
    "l2_drift": 1e-8,
    "delta_drift_pure": 1e-6,
    "delta_drift_sourced": 1e-5,
    "exact_error": 1e-4,
}


def _evolve_config(p: Mapping[str, Any], kind: str) -> SolverConfig:
    raw_grid = _param(p, "grid", kind)
    if not isinstance(raw_grid, Mapping):
        raise ScenarioError("'grid' must be an object with 'n' and 'length'")
    _check_keys(raw_grid, {"n", "length"}, "grid")
    n = _as_int(_param(raw_grid, "n", "grid"), "n")
    length = _as_float(_param(raw_grid, "length", "grid"), "length")
    dt = _as_float(_param(p, "dt", kind), "dt")
    t_end = _as_float(_param(p, "t_end", kind), "t_end")
    integrator = _param(p, "integrator", kind, default="if_rk4")
    dealias = _as_bool(_param(p, "dealias", kind, default=True), "dealias")
    snapshot_every = _param(p, "snapshot_every", kind, default=None)
    if snapshot_every is not None:
        snapshot_every = _as_int(snapshot_every, "snapshot_every")
    try:
        return SolverConfig(
            grid=PeriodicGrid(n, length), dt=dt, t_end=t_end,
            integrator=integrator, dealias=dealias,
            snapshot_every=snapshot_every)
    except ValueError as exc:
        raise ScenarioError(f"invalid solver configuration: {exc}") from None


def _evolve_artifacts(sc: Scenario, rep, probes) -> list[str]:
    _atomic_csv(lambda path: snapshots_csv(rep, path), sc.out_dir / "snapshots.csv")
    _atomic_csv(lambda path: invariants_csv(rep, path), sc.out_dir / "invariants.csv")
    artifacts = ["snapshots.csv", "invariants.csv"]

    xs = rep.final.grid.nodes
    waterfall = {"x": xs}
    for t, f in rep.snapshots:
        waterfall[f"u_t{t:.6g}"] = f.real_values
    spans = [float(np.ptp(f.real_values)) for _, f in rep.snapshots]
    offset = 1.2 * max(spans) if max(spans) > 0.0 else 1.0
    emit_plot_data(waterfall, sc.out_dir / "waterfall.csv",
                   svg=sc.svg, stack_offset=offset)
    artifacts.append("waterfall.csv")
    if sc.svg:
        artifacts.append("waterfall.svg")

    if probes:
        trace = {"t": list(rep.times)}
        for i, series in enumerate(rep.delta_series):
            trace[f"delta_probe_{i + 1}"] = [v.real for v in series]
        emit_plot_data(trace, sc.out_dir / "delta_trace.csv", svg=sc.svg)
        artifacts.append("delta_trace.csv")
        if sc.svg:
            artifacts.append("delta_trace.svg")
    return artifacts


def _run_evolve(sc: Scenario):
    p = sc.parameters
    _check_keys(p, {"grid", "dt", "t_end", "integrator", "dealias",
                    "snapshot_every", "refresh_every", "u0", "prescribed",
                    "sources", "probes", "tolerances"}, sc.kind)
    tol = dict(_EVOLVE_TOLERANCES)
    raw_tol = _param(p, "tolerances", sc.kind, default={})
    if not isinstance(raw_tol, Mapping):
        raise ScenarioError("'tolerances' must be an object")
    _check_keys(raw_tol, set(tol), "tolerances")
    for key, value in raw_tol.items():
        tol[key] = _as_float(value, key)
    if ("prescribed" in p) == ("u0" in p):
        raise ScenarioError("evolve requires exactly one of 'u0' or 'prescribed'")
    cfg = _evolve_config(p, sc.kind)

    if "prescribed" in p:
        for key in ("sources", "probes", "refresh_every"):
            if key in p:
                raise ScenarioError(f"'{key}' does not apply to a prescribed run")
        raw = p["prescribed"]
        if not isinstance(raw, Mapping):
            raise ScenarioError("'prescribed' must be an object")
        _check_keys(raw, {"kappa", "c0"}, "prescribed")
        kappa = _as_float(_param(raw, "kappa", "prescribed"), "kappa")
        if kappa <= 0.0:
            raise ScenarioError(f"'kappa' must be positive, got {kappa}")
        c0 = _as_float(_param(raw, "c0", "prescribed"), "c0")
        try:
            rep = evolve_prescribed_source(kappa, c0, cfg)
        except (BoxTooSmall, ValueError) as exc:
            raise ScenarioError(f"prescribed run rejected: {exc}") from None
        mean_drift = max(abs(v - rep.mean_series[0]) for v in rep.mean_series)
        checks = {
            "exact_error": _sub(rep.exact_error, tol["exact_error"]),
            "mean_drift": _sub(mean_drift, tol["mean_drift"]),
        }
        artifacts = _evolve_artifacts(sc, rep, probes=())
        data = {
            "mode": "prescribed",
            "kappa": kappa,
            "c0": c0,
            "steps": cfg.steps,
            "final_sup": float(np.max(np.abs(rep.final.real_values))),
        }
        return checks, data, artifacts, {}

    raw_u0 = p["u0"]
    if not isinstance(raw_u0, Mapping):
        raise ScenarioError("'u0' must be an object")
    _check_keys(raw_u0, {"kind", "amplitude", "mode"}, "u0")
    u0kind = _param(raw_u0, "kind", "u0")
    if u0kind not in ("zero", "cosine"):
        raise ScenarioError(f"u0 kind must be 'zero' or 'cosine', got {u0kind!r}")
    amplitude = _as_float(_param(raw_u0, "amplitude", "u0", default=0.2), "amplitude")
    mode = _as_int(_param(raw_u0, "mode", "u0", default=1), "mode")
    if mode < 1:
        raise ScenarioError(f"u0 mode must be >= 1, got {mode}")

    raw_sources = _param(p, "sources", sc.kind, default=[])
    if not isinstance(raw_sources, (list, tuple)):
        raise ScenarioError("'sources' must be a list of [E, g] pairs")
    entries = []
    for item in raw_sources:
        if not (isinstance(item, (list, tuple)) and len(item) == 2):
            raise ScenarioError("each source must be an [E, g] pair")
        entries.append((_as_float(item[0], "E"), _as_float(item[1], "g")))
    refresh_every = _as_int(_param(p, "refresh_every", sc.kind, default=1),
                            "refresh_every")
    raw_probes = _param(p, "probes", sc.kind, default=[])
    if not isinstance(raw_probes, (list, tuple)):
        raise ScenarioError("'probes' must be a list of energies")
    probes = tuple(_as_float(v, "probes") for v in raw_probes)
    try:
        spec = SourceSpec(entries=tuple(entries), refresh_every=refresh_every)
    except ValueError as exc:
        raise ScenarioError(f"invalid sources: {exc}") from None

    grid = cfg.grid
    if u0kind == "zero":
        u0 = Field.from_samples(grid, np.zeros(grid.n))
    else:
        u0 = Field.from_samples(
            grid, amplitude * np.cos(2.0 * np.pi * mode * grid.nodes / grid.length))

    try:
        rep = evolve(u0, spec, cfg, probes=probes)
    except (DegenerateEnergy, BlowUp) as exc:
        checks = {"run_completed": _sub(1.0, 0.5)}
        data = {"mode": "sourced" if entries else "pure",
                "abort_type": type(exc).__name__,
                "abort_reason": str(exc)}
        return checks, data, [], {}

    checks = {"run_completed": _sub(0.0, 0.5)}
    mean_drift = max(abs(v - rep.mean_series[0]) for v in rep.mean_series)
    checks["mean_drift"] = _sub(mean_drift, tol["mean_drift"])
    data = {
        "mode": "sourced" if entries else "pure",
        "steps": cfg.steps,
        "final_sup": float(np.max(np.abs(rep.final.real_values))),
        "probes": list(probes),
    }
    if not entries:
        l2_drift = max(abs(v - rep.l2_series[0]) for v in rep.l2_series)
        checks["l2_drift"] = _sub(l2_drift, tol["l2_drift"])
    if probes:
        summary = isospectrality_report(rep, probes)
        key = "delta_drift_sourced" if entries else "delta_drift_pure"
        checks[key] = _sub(summary.max_delta_drift, tol[key])
        data["delta_drifts"] = list(summary.delta_drifts)
    artifacts = _evolve_artifacts(sc, rep, probes)
    return checks, data, artifacts, {}


def _run_verify_all(sc: Scenario):
    _check_keys(sc.parameters, set(), sc.kind)
    checks = {}
    runtime_checks = {}
    elapsed = {}
    for result in all_criteria():
        elapsed[result.name] = result.elapsed_s
        for name, sub in result.subchecks.items():
            if name == "runtime_s":
                runtime_checks[result.name] = dict(sub)
            else:
                checks[f"{result.name}.{name}"] = dict(sub)
    data = {"criteria": sorted(elapsed)}
    extra = {"criteria_elapsed_s": elapsed, "runtime_checks": runtime_checks}
    return checks, data, [], extra


_RUNNERS = {
    "floquet-scan": _run_floquet_scan,
    "soliton-demo": _run_soliton_demo,
    "ba-verify": _run_ba_verify,
    "evolve": _run_evolve,
    "verify-all": _run_verify_all,
}


# ---------------------------------------------------------------------------
# orchestration


def run(scenario: Scenario) -> Report:
    """Execute one scenario and write report.json plus its sidecar."""
    threads = _thread_count()
    start = time.perf_counter()
    scenario.out_dir.mkdir(parents=True, exist_ok=True)
    checks, data, artifacts, extra = _RUNNERS[scenario.kind](scenario)
    elapsed = time.perf_counter() - start
    report = Report(scenario=scenario, checks=checks, data=data,
                    artifacts=tuple(sorted(artifacts)))
    _write_report(report, elapsed, threads, extra)
    return report


def _write_report(report: Report, elapsed: float, threads: int,
                  extra: Mapping[str, Any]) -> None:
    sc = report.scenario
    payload = {
        "version": __version__,
        "scenario": {
            "kind": sc.kind,
            "parameters": sc.parameters,
            "out": str(sc.out_dir),
            "seed": sc.seed,
            "svg": sc.svg,
        },
        "passed": report.passed,
        "checks": report.checks,
        "tolerances": {name: {"tolerance": sub["tolerance"],
                              "comparator": sub["comparator"]}
                       for name, sub in report.checks.items()},
        "calibration": {"residue_flow": residue_flow_calibration()},
        "data": report.data,
        "artifacts": list(report.artifacts),
    }
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    _atomic_write_text(sc.out_dir / "report.json", text)

    meta = {
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "elapsed_s": elapsed,
        "threads": threads,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    meta.update(extra)
    meta_text = json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n"
    _atomic_write_text(sc.out_dir / "report_meta.json", meta_text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="melnikov-lab",
        description="Batch verification and experiment runner for periodic "
                    "KdV flows with self-consistent sources.")
    parser.add_argument("kind", choices=KINDS, help="scenario kind to run")
    parser.add_argument("--config", metavar="PATH",
                        help="JSON parameter file (kind-specific schema)")
    parser.add_argument("--out", metavar="DIR", required=True,
                        help="output directory for report.json and data files")
    parser.add_argument("--seed", type=int, default=0, metavar="N",
                        help="seed for any randomized evaluation points")
    parser.add_argument("--svg", action="store_true",
                        help="also render SVG line plots of emitted series")
    return parser


def _load_parameters(path_str: str | None) -> dict:
    if path_str is None:
        return {}
    path = Path(path_str)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read config: {exc}") from None
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"config is not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ScenarioError("config must be a JSON object")
    return payload


def main(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        scenario = Scenario(
            kind=ns.kind,
            parameters=_load_parameters(ns.config),
            out_dir=Path(ns.out),
            seed=ns.seed,
            svg=ns.svg,
        )
        report = run(scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name in sorted(report.checks):
        sub = report.checks[name]
        if not sub["passed"]:
            print(f"FAIL {name}: measured {sub['measured']:.6g} vs "
                  f"{sub['comparator']} {sub['tolerance']:.6g}")
    n_pass = sum(1 for sub in report.checks.values() if sub["passed"])
    status = "PASS" if report.passed else "FAIL"
    print(f"{ns.kind}: {status} ({n_pass}/{len(report.checks)} checks) "
          f"-> {scenario.out_dir / 'report.json'}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
