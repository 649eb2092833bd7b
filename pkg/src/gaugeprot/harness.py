"""Experiment configuration, validation and orchestration.

A run is described by one JSON document (see ``configs/``). Every run writes
its CSV/JSON products plus ``run_manifest.json`` into the output directory.
"""
from __future__ import annotations

import copy
import csv
import json
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .circuit import (
    CircuitScanner,
    UnsupportedConfiguration,
    collapse_scan,
    locate_v_ideal,
    v_ideal,
    write_circuit_csv,
    write_collapse_csv,
)
from .core import SpinBasis
from .evolve import infinite_time_violation, run_trajectory, zeno_residual
from .gauge import (
    PAPER_COMPLIANT_L6,
    PAPER_NONCOMPLIANT_L6,
    ProtectionSequence,
    build_superlattice_sequence,
    check_compliance,
    degeneracy_split_check,
    find_compliant_sequence,
    minimal_degenerate_sectors,
    sector_map,
    staggered_unit,
    uniform_unit,
)
from .model import ModelParams, build_h1, gauss_values, particle_state_index, staggered_vacuum_index
from .norms import decompose, default_kappa_grid, estimate_vmin

SCHEMA_VERSION = 1
EXPERIMENTS = ("trajectory", "v_scan", "circuit", "circuit_collapse", "sequence_search", "norm_estimate", "zeno_scan")
SUBCOMMANDS = {
    "trajectory": "trajectory",
    "vscan": "v_scan",
    "circuit": "circuit",
    "collapse": "circuit_collapse",
    "sequence": "sequence_search",
    "norms": "norm_estimate",
    "zeno": "zeno_scan",
}
DEFAULT_V_GRID = {"logspace": [1e-2, 1e4, 40]}
CI_L = 4
CI_TIME_POINTS = 40
CI_V_POINTS = 8
SEARCH_MAX_DENOMINATOR = 64


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every violated field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


_GRID = {
    "oneOf": [
        {"type": "array", "items": {"type": "number"}, "minItems": 1},
        {
            "type": "object",
            "properties": {"logspace": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}},
            "required": ["logspace"],
            "additionalProperties": False,
        },
    ]
}
_SEQUENCE = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "preset": {
                    "enum": [
                        "paper_compliant_L6",
                        "paper_noncompliant_L6",
                        "staggered_unit",
                        "uniform_unit",
                        "searched_compliant",
                    ]
                },
                "variant": {"enum": ["nonstaggered", "swapped"]},
            },
            "required": ["preset"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "preset": {"const": "superlattice"},
                "Delta": {"type": "number"},
                "U": {"type": "number"},
                "delta": {"type": "number"},
            },
            "required": ["preset", "Delta", "U", "delta"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "numerators": {"type": "array", "items": {"type": "integer"}, "minItems": 2},
                "denominator": {"type": "integer", "minimum": 1},
                "variant": {"enum": ["nonstaggered", "swapped"]},
            },
            "required": ["numerators", "denominator"],
            "additionalProperties": False,
        },
        {"type": "null"},
    ]
}
SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {"enum": list(EXPERIMENTS)},
        "label": {"type": "string"},
        "model": {
            "type": "object",
            "properties": {
                "L": {"type": "integer", "minimum": 2},
                "mu": {"type": "number"},
                "lam": {"type": "number"},
                "V": {"type": "number"},
                "error_kind": {"enum": ["local", "extreme", "none"]},
                "protection_kind": {"enum": ["linear", "quadratic", "none"]},
            },
            "required": ["L"],
            "additionalProperties": False,
        },
        "sequence": _SEQUENCE,
        "initial_state": {
            "oneOf": [
                {"enum": ["staggered_vacuum", "staggered_vacuum_mirrored", "two_particle_14"]},
                {
                    "type": "object",
                    "properties": {"bitstring": {"type": "string", "pattern": "^[01]+$"}},
                    "required": ["bitstring"],
                    "additionalProperties": False,
                },
            ]
        },
        "allow_gauge_violating_state": {"type": "boolean"},
        "grids": {
            "type": "object",
            "properties": {"times": _GRID, "V": _GRID, "dt": _GRID, "V_dt": _GRID},
            "additionalProperties": False,
        },
        "options": {
            "type": "object",
            "properties": {
                "average": {"enum": ["exact", "trapezoid"]},
                "mode": {"enum": ["sample_at_1e10", "diagonal_ensemble"]},
                "columns": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "properties": {
                            "name": {"type": "string", "pattern": "^[A-Za-z0-9_]+$"},
                            "protection": {"enum": ["linear", "quadratic"]},
                            "sequence": _SEQUENCE,
                        },
                        "required": ["name", "protection"],
                        "additionalProperties": False,
                    },
                },
                "t_f": {"type": "number", "exclusiveMinimum": 0},
                "xi": {"type": "number"},
                "locate_v_ideal": {"type": "boolean"},
                "statistic": {"enum": ["mean", "final"]},
                "max_denominator": {"type": "integer", "minimum": 1},
                "product_norm": {"enum": ["projector", "literal"]},
                "diag_support": {"enum": ["S", "S+"]},
                "rule": {"enum": ["window_edge", "infimum", "asymptotic"]},
                "kappa_points": {"type": "integer", "minimum": 2},
                "t": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "output_path": {"type": "string"},
    },
    "required": ["schema_version", "experiment", "model"],
    "additionalProperties": False,
}


@dataclass
class ExperimentConfig:
    experiment: str
    params: ModelParams
    sequence: ProtectionSequence | None
    psi0: np.ndarray | None
    grids: dict
    options: dict
    raw: dict = field(repr=False)
    label: str = ""
    output_path: str | None = None
    ci_scale: bool = False


# ---------------------------------------------------------------- expansion helpers

def expand_grid(spec) -> np.ndarray:
    if isinstance(spec, dict):
        lo, hi, n = spec["logspace"]
        return np.geomspace(lo, hi, int(n))
    return np.asarray(spec, dtype=float)


@lru_cache(maxsize=None)
def searched_compliant(L: int) -> ProtectionSequence:
    seq = find_compliant_sequence(L, SEARCH_MAX_DENOMINATOR)
    if seq is None:
        raise RuntimeError(f"no compliant sequence with denominator <= {SEARCH_MAX_DENOMINATOR} at L={L}")
    return ProtectionSequence(seq.numerators, seq.denominator, label=f"searched_compliant_L{L}")


def _variant(seq: ProtectionSequence, variant: str | None) -> ProtectionSequence:
    if variant is None:
        return seq
    nums = list(seq.numerators)
    if variant == "nonstaggered":
        nums = [abs(n) for n in nums]
    else:
        # exchange the magnitudes on sites L-2 and L-1, keeping the signs
        a, b = len(nums) - 3, len(nums) - 2
        sa, sb = np.sign(nums[a]), np.sign(nums[b])
        nums[a], nums[b] = int(sa * abs(nums[b])), int(sb * abs(nums[a]))
    return ProtectionSequence(tuple(nums), seq.denominator, label=f"{seq.label}_{variant}")


def resolve_sequence(spec, L: int) -> ProtectionSequence | None:
    if spec is None:
        return None
    if "numerators" in spec:
        seq = ProtectionSequence(tuple(spec["numerators"]), spec["denominator"], label="explicit")
        return _variant(seq, spec.get("variant"))
    name = spec["preset"]
    if name == "superlattice":
        return build_superlattice_sequence(L, spec["Delta"], spec["U"], spec["delta"])
    base = {
        "paper_compliant_L6": lambda: PAPER_COMPLIANT_L6,
        "paper_noncompliant_L6": lambda: PAPER_NONCOMPLIANT_L6,
        "staggered_unit": lambda: staggered_unit(L),
        "uniform_unit": lambda: uniform_unit(L),
        "searched_compliant": lambda: searched_compliant(L),
    }[name]()
    return _variant(base, spec.get("variant"))


def resolve_state(spec, basis: SpinBasis) -> tuple[np.ndarray, str]:
    if isinstance(spec, dict):
        bits = spec["bitstring"]
        if len(bits) != basis.n_qubits:
            raise ConfigError([f"initial_state.bitstring: need {basis.n_qubits} bits, got {len(bits)}"])
        idx, name = basis.index_of(bits), f"bitstring {bits}"
    elif spec == "two_particle_14":
        idx, name = particle_state_index(basis, (1, 4)), spec
    else:
        idx = staggered_vacuum_index(basis, "up" if spec == "staggered_vacuum_mirrored" else "down")
        name = spec
    psi = np.zeros(basis.dim, dtype=complex)
    psi[idx] = 1.0
    return psi, name


def ci_scale_raw(raw: dict) -> dict:
    """Reduced grids: L=4, 40 time points, 8 V points, L=6-only presets mapped to L=4 analogues."""
    raw = copy.deepcopy(raw)
    raw["model"]["L"] = min(raw["model"]["L"], CI_L)
    L = raw["model"]["L"]

    def shrink_seq(spec):
        if not spec or "preset" not in spec:
            if spec and "numerators" in spec and len(spec["numerators"]) != L:
                return {"preset": "searched_compliant"}
            return spec
        if spec["preset"] == "paper_compliant_L6":
            return {"preset": "searched_compliant"}
        if spec["preset"] == "paper_noncompliant_L6":
            return {"preset": "searched_compliant", "variant": "swapped"}
        return spec

    if "sequence" in raw:
        raw["sequence"] = shrink_seq(raw["sequence"])
    for col in raw.get("options", {}).get("columns", []):
        if "sequence" in col:
            col["sequence"] = shrink_seq(col["sequence"])
    grids = raw.get("grids", {})
    for key, n in (("times", CI_TIME_POINTS), ("V", CI_V_POINTS)):
        g = grids.get(key)
        if isinstance(g, dict):
            g["logspace"][2] = min(int(g["logspace"][2]), n)
        elif isinstance(g, list) and len(g) > n:
            grids[key] = [g[i] for i in np.linspace(0, len(g) - 1, n).round().astype(int)]
    if raw["experiment"] == "v_scan" and "V" not in grids:
        grids["V"] = {"logspace": [1e-2, 1e4, CI_V_POINTS]}
    raw["grids"] = grids
    opts = raw.get("options", {})
    if "t_f" in opts:
        opts["t_f"] = min(opts["t_f"], 10.0)
    return raw


def validate(raw: dict, ci_scale: bool = False) -> ExperimentConfig:
    """Schema and physics checks; raises ConfigError listing every problem."""
    validator = jsonschema.Draft7Validator(SCHEMA)
    problems = [
        f"{'.'.join(str(p) for p in err.absolute_path) or '<root>'}: {err.message}"
        for err in sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))
    ]
    if problems:
        raise ConfigError(problems)
    if raw["experiment"] == "v_scan" and "columns" not in raw.get("options", {}):
        raw = copy.deepcopy(raw)
        raw.setdefault("options", {})["columns"] = default_columns()
    if ci_scale:
        raw = ci_scale_raw(raw)

    m = raw["model"]
    try:
        params = ModelParams(**m)
    except ValueError as exc:
        raise ConfigError([f"model: {exc}"]) from None
    basis = params.basis

    exp = raw["experiment"]
    seq_spec = raw.get("sequence")
    needs_sequence = params.protection_kind == "linear" and exp not in ("v_scan",)
    if needs_sequence and seq_spec is None and exp != "norm_estimate":
        problems.append("sequence: linear protection needs a coefficient sequence")
    sequence = None
    try:
        sequence = resolve_sequence(seq_spec, params.L)
    except (ValueError, KeyError) as exc:
        problems.append(f"sequence: {exc}")
    if sequence is not None and sequence.L != params.L:
        problems.append(f"sequence: length {sequence.L} does not match model.L = {params.L}")

    options = raw.get("options", {})
    for col in options.get("columns", []):
        if col["protection"] == "linear":
            if "sequence" not in col or col["sequence"] is None:
                problems.append(f"options.columns.{col['name']}: linear protection needs a sequence")
                continue
            s = resolve_sequence(col["sequence"], params.L)
            if s.L != params.L:
                problems.append(f"options.columns.{col['name']}: sequence length {s.L} does not match L = {params.L}")

    psi0 = None
    if exp in ("trajectory", "v_scan", "circuit", "circuit_collapse", "zeno_scan"):
        try:
            psi0, name = resolve_state(raw.get("initial_state", "staggered_vacuum"), basis)
        except ConfigError as exc:
            problems.extend(exc.problems)
        else:
            g = gauss_values(basis)[:, int(np.argmax(np.abs(psi0)))]
            if np.any(g != 0) and not raw.get("allow_gauge_violating_state", False):
                problems.append(f"initial_state: {name} is not in g = 0; <G_j> = {g.tolist()}")

    grids = raw.get("grids", {})
    for key, g in grids.items():
        arr = expand_grid(g)
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            problems.append(f"grids.{key}: values must be finite and positive")
        elif key == "times" and np.any(np.diff(arr) <= 0):
            problems.append("grids.times: must be strictly increasing")
    if exp in ("circuit", "circuit_collapse"):
        if params.error_kind == "extreme":
            problems.append("model.error_kind: circuits support only 'local' or 'none'")
        if params.protection_kind == "quadratic":
            problems.append("model.protection_kind: circuits support only 'linear' or 'none'")
        if "dt" not in grids:
            problems.append("grids.dt: required for circuit experiments")
    if exp == "circuit_collapse" and "V_dt" not in grids:
        problems.append("grids.V_dt: required for circuit_collapse")
    if exp == "zeno_scan" and "V" not in grids:
        problems.append("grids.V: required for zeno_scan")
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        exp, params, sequence, psi0, grids, options, raw, raw.get("label", exp), raw.get("output_path"), ci_scale
    )


def load_config(path, ci_scale: bool = False) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<file>: not valid JSON ({exc})"]) from None
    return validate(raw, ci_scale)


# ---------------------------------------------------------------- runners

def _pool_map(fn, items, threads: int):
    items = list(items)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _fmt(x) -> str:
    return f"{x:.17g}"


def _run_trajectory(cfg: ExperimentConfig, out: Path, threads: int) -> list[Path]:
    times = expand_grid(cfg.grids.get("times", {"logspace": [1e-2, 1e10, 200]}))
    Vs = expand_grid(cfg.grids.get("V", [cfg.params.V]))
    average = cfg.options.get("average", "exact")
    table = sector_map(cfg.params.basis)

    def one(V):
        return V, run_trajectory(cfg.params.with_(V=float(V)), cfg.sequence, cfg.psi0, times, average, table=table)

    paths = []
    for V, traj in sorted(_pool_map(one, Vs, threads), key=lambda r: r[0]):
        p = out / f"trajectory_V{V:g}.csv"
        traj.to_csv(p)
        paths.append(p)
    return paths


def default_columns() -> list[dict]:
    return [
        {"name": "quadratic", "protection": "quadratic"},
        {"name": "compliant", "protection": "linear", "sequence": {"preset": "paper_compliant_L6"}},
        {"name": "noncompliant", "protection": "linear", "sequence": {"preset": "paper_noncompliant_L6"}},
    ]


def _run_vscan(cfg: ExperimentConfig, out: Path, threads: int) -> list[Path]:
    Vs = np.sort(expand_grid(cfg.grids.get("V", DEFAULT_V_GRID)))
    cols = cfg.options["columns"]
    mode = cfg.options.get("mode", "sample_at_1e10")
    table = sector_map(cfg.params.basis)
    resolved = [(c["name"], c["protection"], resolve_sequence(c.get("sequence"), cfg.params.L)) for c in cols]
    tasks = [(i, k) for i in range(len(Vs)) for k in range(len(resolved))]

    def one(task):
        i, k = task
        _, prot, seq = resolved[k]
        p = cfg.params.with_(V=float(Vs[i]), protection_kind=prot)
        return task, infinite_time_violation(p, seq, cfg.psi0, mode=mode, table=table)

    results = dict(_pool_map(one, tasks, threads))
    path = out / "vscan.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["J_over_V"] + [f"eps_inf_{name}" for name, _, _ in resolved])
        # ascending J/V
        for i in reversed(range(len(Vs))):
            w.writerow([_fmt(cfg.params.J / Vs[i])] + [_fmt(results[(i, k)]) for k in range(len(resolved))])
    return [path]


def _run_circuit(cfg: ExperimentConfig, out: Path, threads: int) -> list[Path]:
    dts = expand_grid(cfg.grids["dt"])
    t_f = cfg.options.get("t_f", 20.0)
    xi = cfg.options.get("xi", 0.58)
    Vs = expand_grid(cfg.grids.get("V", [cfg.params.V]))
    paths, summary = [], []
    for dt in dts:
        scanner = CircuitScanner(cfg.params, cfg.sequence, float(dt), t_f, cfg.psi0, cfg.options.get("statistic", "mean"))
        for V in Vs:
            p = out / f"circuit_dt{dt:g}_V{V:g}.csv"
            write_circuit_csv(scanner.trajectory(V), p)
            paths.append(p)
        if cfg.options.get("locate_v_ideal") and cfg.sequence is not None:
            c_bar = cfg.sequence.mean_abs
            formula = v_ideal(float(dt), c_bar, xi)
            grid = np.geomspace(0.5 * formula, 2.0 * formula, 15)
            found = locate_v_ideal(scanner, grid)
            summary.append({"dt": float(dt), "c_bar": c_bar, "xi": xi, "V_ideal_formula": formula,
                            "V_ideal_numeric": found, "relative_deviation": abs(found - formula) / formula})
    if summary:
        p = out / "v_ideal.json"
        p.write_text(json.dumps(summary, indent=2))
        paths.append(p)
    return paths


def _run_collapse(cfg: ExperimentConfig, out: Path, threads: int) -> list[Path]:
    dts = [float(x) for x in expand_grid(cfg.grids["dt"])]
    vdt = expand_grid(cfg.grids["V_dt"])
    t_f = cfg.options.get("t_f", 20.0)

    def one(dt):
        return dt, collapse_scan(cfg.params, cfg.sequence, cfg.psi0, [dt], [vdt / dt], t_f)

    rows = [r for _, rs in sorted(_pool_map(one, dts, threads), key=lambda x: x[0]) for r in rs]
    path = out / "collapse.csv"
    write_collapse_csv(rows, path)
    minima = {}
    for dt in dts:
        sub = [r for r in rows if r.dt == dt]
        best = min(sub, key=lambda r: r.eps_avg)
        minima[f"{dt:g}"] = best.V_dt
    vals = np.array(list(minima.values()))
    spread = float((vals.max() - vals.min()) / vals.mean())
    sp = out / "collapse_minima.json"
    sp.write_text(json.dumps({"V_dt_at_minimum": minima, "relative_spread": spread}, indent=2))
    return [path, sp]


def _run_sequence(cfg: ExperimentConfig, out: Path, threads: int) -> list[Path]:
    basis = cfg.params.basis
    table = sector_map(basis)
    report = {"L": cfg.params.L}
    if cfg.sequence is not None:
        rep = check_compliance(cfg.sequence, table)
        report["given"] = {"sequence": cfg.sequence.to_dict(), "compliance": rep.to_dict()}
        report["given"]["minimal_degenerate_sectors"] = minimal_degenerate_sectors(cfg.sequence, table).tolist()
        if cfg.params.error_kind != "none":
            h1 = build_h1(cfg.params.error_kind, basis)
            report["given"]["degeneracy_split"] = degeneracy_split_check(cfg.sequence, h1, table)
    max_den = cfg.options.get("max_denominator")
    if max_den:
        found = find_compliant_sequence(cfg.params.L, max_den, table)
        report["search"] = {"max_denominator": max_den, "found": None}
        if found is not None:
            report["search"]["found"] = {"sequence": found.to_dict(), "compliance": check_compliance(found, table).to_dict()}
    path = out / "sequence_report.json"
    path.write_text(json.dumps(report, indent=2))
    return [path]


def _run_norms(cfg: ExperimentConfig, out: Path, threads: int) -> list[Path]:
    pot = decompose(
        cfg.params,
        cfg.sequence,
        product_norm=cfg.options.get("product_norm", "projector"),
        diag_support=cfg.options.get("diag_support", "S"),
    )
    est = estimate_vmin(pot, default_kappa_grid(cfg.options.get("kappa_points", 64)), cfg.options.get("rule", "window_edge"))
    path = out / "norm_estimate.json"
    path.write_text(est.to_json())
    print(est.report())
    return [path]


def _run_zeno(cfg: ExperimentConfig, out: Path, threads: int) -> list[Path]:
    Vs = np.sort(expand_grid(cfg.grids["V"]))
    t = cfg.options.get("t", 1.0)
    res = zeno_residual(cfg.params, cfg.sequence, cfg.psi0, t, Vs)
    path = out / "zeno.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["V", "residual"])
        for V, r in zip(Vs, res):
            w.writerow([_fmt(V), _fmt(r)])
    return [path]


RUNNERS = {
    "trajectory": _run_trajectory,
    "v_scan": _run_vscan,
    "circuit": _run_circuit,
    "circuit_collapse": _run_collapse,
    "sequence_search": _run_sequence,
    "norm_estimate": _run_norms,
    "zeno_scan": _run_zeno,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> list[Path]:
    """Run one experiment; returns the written paths (manifest last)."""
    out = Path(out_dir or cfg.output_path or f"out/{cfg.label}")
    out.mkdir(parents=True, exist_ok=True)
    try:
        paths = RUNNERS[cfg.experiment](cfg, out, max(1, int(threads)))
    except UnsupportedConfiguration as exc:
        raise ConfigError([str(exc)]) from None
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "experiment": cfg.experiment,
        "label": cfg.label,
        "ci_scale": cfg.ci_scale,
        "config": cfg.raw,
        "resolved_sequence": cfg.sequence.to_dict() if cfg.sequence is not None else None,
        "outputs": sorted(p.name for p in paths),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    mp = out / "run_manifest.json"
    mp.write_text(json.dumps(manifest, indent=2, default=_json_default))
    return paths + [mp]


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x) if math.isfinite(x) else None
    raise TypeError(f"not serializable: {type(x)}")
