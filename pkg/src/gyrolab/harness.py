"""Scenario orchestration: matched quantum/drift runs over a field sweep,
metric tables, and reproducible reports."""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import Truncation, make_scaling
from .drift import deposit, drift_advance, drift_dt_cap, sample_from_density
from .grids import BoxSpec
from .coherent import TruncationInsufficientError
from .hartree import (HartreeEngine, LatticeSpec, density_of, dt_cap,
                      initial_state, observables, save_checkpoint)
from .husimi import cutoff_schedule, husimi_field, level_capture, semiclassical_density
from .metrics import (TestFunction, dobrushin_bound, drift_residual, slope_fit,
                      wasserstein1_auto)
from .potentials import PotentialSpec

__all__ = ["ScenarioConfig", "ConfigError", "RunReport", "run_scenario", "sweep",
           "default_config", "resolve_geometry"]


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "b_list": {"type": "array", "minItems": 1,
                   "items": {"type": "number", "exclusiveMinimum": 0}},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "bumps": {"type": "array", "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["amplitude", "center", "width"],
                    "properties": {
                        "amplitude": {"type": "number"},
                        "center": {"type": "array", "minItems": 2, "maxItems": 2,
                                   "items": {"type": "number"}},
                        "width": {"type": "number", "exclusiveMinimum": 0},
                    }}},
                "w_amplitude": {"type": "number"},
                "w_width": {"type": "number", "exclusiveMinimum": 0},
            }},
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "spacing_in_lb": {"type": "number", "exclusiveMinimum": 0},
                "tail_tol": {"type": "number", "exclusiveMinimum": 0},
                "k_override": {"type": ["object", "null"]},
            }},
        "numerics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_max": {"type": "integer", "minimum": 8},
                "n_cells": {"type": "integer", "minimum": 256},
                "marker_count": {"type": "integer", "minimum": 100},
                "n_checkpoints": {"type": "integer", "minimum": 4},
                "dt_safety": {"type": "number", "exclusiveMinimum": 0, "maximum": 1.0},
                "m_ang_margin": {"type": "number", "minimum": 0},
                "excursion_factor": {"type": "number", "minimum": 0},
            }},
        "w1": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "support_cap": {"type": "integer", "minimum": 4},
                "pair_cap": {"type": "number", "exclusiveMinimum": 0},
                "backend": {"type": "string", "enum": ["simplex", "scipy"]},
                "times": {"type": "array", "items": {"type": "number"}},
            }},
        "test_functions": {"type": "array", "items": {
            "type": "object",
            "additionalProperties": False,
            "required": ["amplitude", "center", "width"],
            "properties": {
                "amplitude": {"type": "number"},
                "center": {"type": "array", "minItems": 2, "maxItems": 2,
                           "items": {"type": "number"}},
                "width": {"type": "number", "exclusiveMinimum": 0},
                "tilt": {"type": "array", "minItems": 2, "maxItems": 2,
                         "items": {"type": "number"}},
            }}},
        "density_export_times": {"type": "array", "items": {"type": "number"}},
        "husimi_export_times": {"type": "array", "items": {"type": "number"}},
        "save_state_checkpoint": {"type": "boolean"},
        "synthetic_injection": {"type": ["object", "null"],
                                "additionalProperties": False,
                                "properties": {
                                    "prefactor": {"type": "number"},
                                    "exponent": {"type": "number"},
                                    "noise": {"type": "number"},
                                }},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer"},
    },
}


def default_config() -> dict:
    """Desk-scale standard bump scenario (all defaults materialized)."""
    return {
        "b_list": [4.0, 8.0, 16.0],
        "horizon": 1.0,
        "potential": {
            "bumps": [
                {"amplitude": 0.35, "center": [0.4, 0.0], "width": 0.65},
                {"amplitude": -0.28, "center": [-0.3, 0.25], "width": 0.6},
            ],
            "w_amplitude": 0.28,
            "w_width": 0.7,
        },
        "initial": {"spacing_in_lb": 2.6, "tail_tol": 1e-9, "k_override": None},
        "numerics": {
            "n_max": 8,
            "n_cells": 256,
            "marker_count": 40000,
            "n_checkpoints": 16,
            "dt_safety": 1.0,
            "m_ang_margin": 8.0,
            "excursion_factor": 0.4,
        },
        "w1": {"support_cap": 20000, "pair_cap": 4.0e7, "backend": "simplex",
               "times": [0.0, 0.5, 1.0]},
        "test_functions": [
            {"amplitude": 1.0, "center": [0.2, 0.1], "width": 0.5, "tilt": [0.0, 0.0]},
            {"amplitude": 0.8, "center": [-0.25, 0.2], "width": 0.45,
             "tilt": [0.4, -0.3]},
        ],
        "density_export_times": [0.0, 0.5, 1.0],
        "husimi_export_times": [1.0],
        "save_state_checkpoint": False,
        "synthetic_injection": None,
        "output_dir": "gyrolab_out",
        "seed": 20260809,
    }


@dataclass
class ScenarioConfig:
    raw: dict

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        import jsonschema
        try:
            jsonschema.validate(d, _SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"invalid config: {exc.message} at "
                              f"{'/'.join(str(p) for p in exc.absolute_path)}") from exc
        merged = default_config()
        for key, val in d.items():
            if isinstance(val, dict) and isinstance(merged.get(key), dict):
                merged[key].update(val)
            else:
                merged[key] = val
        cfg = cls(merged)
        cfg.validate_physics()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def validate_physics(self):
        for b in self.raw["b_list"]:
            s = make_scaling(b)
            K = self.k_for(b)
            if 1.0 / K > s.pauli_cap * (1 + 1e-12):
                raise ConfigError(
                    f"b={b}: K={K} violates Pauli feasibility K >= 1/(2 pi l_b^2)")
        times = self.raw["w1"]["times"]
        T = self.raw["horizon"]
        if any(t < 0 or t > T + 1e-12 for t in times):
            raise ConfigError("w1 times must lie in [0, horizon]")

    # -- derived quantities ---------------------------------------------
    def potential(self) -> PotentialSpec:
        return PotentialSpec.from_dict(self.raw["potential"])

    def k_for(self, b: float) -> int:
        over = self.raw["initial"].get("k_override") or {}
        key = str(b) if str(b) in over else repr(float(b))
        if key in over:
            return int(over[key])
        return int(np.ceil(1.0 / make_scaling(b).pauli_cap - 1e-12))

    def test_functions(self):
        out = []
        for d in self.raw["test_functions"]:
            out.append(TestFunction(d["amplitude"], tuple(d["center"]), d["width"],
                                    tilt=tuple(d.get("tilt", (0.0, 0.0)))))
        return out


def resolve_geometry(cfg: ScenarioConfig, b: float) -> dict:
    """Per-b truncation, box, cut-off and step sizes from the sizing rules."""
    s = make_scaling(b)
    pot = cfg.potential()
    num = cfg.raw["numerics"]
    K = cfg.k_for(b)
    from .hartree import triangular_lattice_points
    pts = triangular_lattice_points(K, cfg.raw["initial"]["spacing_in_lb"] * s.l_b)
    r_init = float(np.hypot(pts[:, 0], pts[:, 1]).max()) + s.l_b
    excursion = (num["excursion_factor"] * cfg.raw["horizon"]
                 * (pot.V_norm(1) + pot.w_norm(1)))
    r_sys = r_init + excursion
    lam = (r_sys / s.l_b) ** 2 / 2.0
    m_ang = int(np.ceil(lam + num["m_ang_margin"] * np.sqrt(lam)))
    n_max = num["n_max"]
    L = r_sys + 8.0 * s.l_b * np.sqrt(n_max + 1.0)
    n_cells = num["n_cells"]
    T = cfg.raw["horizon"]
    n_ck = num["n_checkpoints"]
    cap = dt_cap(pot, s) * num["dt_safety"]
    steps_per = int(np.ceil((T / n_ck) / cap))
    dt = (T / n_ck) / steps_per
    M = cutoff_schedule(s, n_max)
    r_phys = r_sys + 1.0 * s.l_b * np.sqrt(2.0 * n_max + 1.0)
    return {
        "b": b, "l_b": s.l_b, "K": K, "r_init": r_init, "r_sys": r_sys, "r_phys": r_phys,
        "truncation": Truncation(n_max, m_ang), "box": BoxSpec(L, n_cells),
        "dt": dt, "steps_per_checkpoint": steps_per, "n_checkpoints": n_ck,
        "cutoff_M": M,
    }


@dataclass
class RunReport:
    b: float
    geometry: dict
    observable_log: list
    metric_rows: list
    residuals: dict
    wallclock: float
    complete: bool = True
    error: str = ""
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        geo = {k: (v if not hasattr(v, "n_max") and not hasattr(v, "half_width")
                   else (dict(n_max=v.n_max, m_ang=v.m_ang) if hasattr(v, "n_max")
                         else dict(half_width=v.half_width, n_cells=v.n_cells)))
               for k, v in self.geometry.items()}
        return {
            "b": self.b, "geometry": geo, "observables": self.observable_log,
            "metrics": self.metric_rows, "residuals": self.residuals,
            "wallclock_seconds": self.wallclock, "complete": self.complete,
            "error": self.error, "extras": self.extras,
        }


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _export_density(path, rho):
    ax = rho.box.axis
    rows = []
    for i, x1 in enumerate(ax):
        for j, x2 in enumerate(ax):
            rows.append((x1, x2, rho.values[i, j]))
    _write_csv(path, ["x1", "x2", "value"], rows)


def run_scenario(cfg: ScenarioConfig, b: float, out_dir=None,
                 progress=None) -> RunReport:
    """Quantum run -> deposited initial data -> drift run -> metrics."""
    t_start = time.time()
    geo = resolve_geometry(cfg, b)
    s = make_scaling(b)
    pot = cfg.potential()
    trunc = geo["truncation"]
    box = geo["box"]
    T = cfg.raw["horizon"]
    n_ck = geo["n_checkpoints"]
    dt = geo["dt"]
    steps_per = geo["steps_per_checkpoint"]
    M = geo["cutoff_M"]
    rng = np.random.default_rng(cfg.raw["seed"] + int(round(b * 1000)))

    lattice = LatticeSpec(spacing_in_lb=cfg.raw["initial"]["spacing_in_lb"],
                          tail_tol=cfg.raw["initial"]["tail_tol"])
    gamma = initial_state(geo["K"], lattice, s, trunc)
    engine = HartreeEngine(trunc, s, pot, box, r_phys=geo["r_phys"])

    ck_times = np.linspace(0.0, T, n_ck + 1)
    densities = []
    obs_log = []
    gammas_kept = {}

    m1 = trunc.m_ang + 1

    def checkpoint(idx, g):
        rho = density_of(g, box)
        densities.append((float(ck_times[idx]), rho))
        rec = observables(g, pot, box, engine=engine)
        rec["t"] = float(ck_times[idx])
        rec["level_capture_M"] = level_capture(g, M)
        # guard: occupancy of the top angular band must stay negligible,
        # otherwise the excursion estimate under-sized m_ang
        w = np.abs(g.orbitals.reshape(trunc.n_max + 1, m1, -1)[:, m1 - 4:, :]) ** 2
        rec["top_m_occupancy"] = float(np.einsum("nmk,k->", w, g.occupations))
        if rec["top_m_occupancy"] > 1e-6:
            raise TruncationInsufficientError(
                f"top angular band occupancy {rec['top_m_occupancy']:.2e} at "
                f"t={rec['t']:.3f}: increase m_ang margin or excursion factor")
        obs_log.append(rec)

    checkpoint(0, gamma)
    gammas_kept[0.0] = gamma
    for idx in range(1, n_ck + 1):
        for _ in range(steps_per):
            gamma = engine.step(gamma, dt)
        checkpoint(idx, gamma)
        if progress:
            progress(b, idx, n_ck)
    gammas_kept[T] = gamma

    # drift run from the deposited quantum initial density
    markers = sample_from_density(densities[0][1], cfg.raw["numerics"]["marker_count"],
                                  rng)
    drift_densities = {0.0: deposit(markers, box)}
    ddt_cap = drift_dt_cap(pot)
    for idx in range(1, n_ck + 1):
        seg = ck_times[idx] - ck_times[idx - 1]
        nst = int(np.ceil(seg / ddt_cap))
        ddt = seg / nst
        for _ in range(nst):
            markers = drift_advance(markers, pot, box, ddt)
        drift_densities[float(ck_times[idx])] = deposit(markers, box)

    # metrics
    w1_cfg = cfg.raw["w1"]
    metric_rows = []
    w1_of_t = {}
    for t_rel in w1_cfg["times"]:
        # w1 times are absolute within [0, T]; snapped to checkpoints
        idx = int(np.argmin(np.abs(ck_times - float(t_rel))))
        t_snap = float(ck_times[idx])
        w1, agg = wasserstein1_auto(densities[idx][1], drift_densities[t_snap],
                                    support_cap=w1_cfg["support_cap"],
                                    pair_cap=w1_cfg["pair_cap"],
                                    backend=w1_cfg["backend"])
        w1_of_t[t_snap] = w1
        metric_rows.append({"t": t_snap, "w1_quantum_vs_drift": w1,
                            "w1_aggregation": agg})

    residuals = {}
    for kphi, phi in enumerate(cfg.test_functions()):
        residuals[f"phi_{kphi}"] = drift_residual(densities, pot, phi, T)

    w1_0 = w1_of_t.get(0.0, 0.0)
    for row in metric_rows:
        row["dobrushin_rhs"] = dobrushin_bound(w1_0, 0.0, row["t"], pot)

    wallclock = time.time() - t_start
    report = RunReport(b=b, geometry=geo, observable_log=obs_log,
                       metric_rows=metric_rows, residuals=residuals,
                       wallclock=wallclock)
    report.extras["final_level_capture"] = level_capture(gamma, M)
    report.extras["cutoff_M"] = M

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w") as fh:
            json.dump({"config": cfg.raw, "run": report.to_dict()}, fh, indent=1,
                      sort_keys=True)
        phi_keys = sorted(residuals)
        header = (["b", "l_b", "M", "t", "w1_quantum_vs_drift"]
                  + [f"residual_{k}" for k in phi_keys]
                  + ["dobrushin_rhs", "wallclock"])
        rows = []
        final_t = max(r["t"] for r in metric_rows)
        for r in metric_rows:
            is_final = r["t"] == final_t
            res_cols = [residuals[k] if is_final else "" for k in phi_keys]
            rows.append(tuple([b, s.l_b, M, r["t"], r["w1_quantum_vs_drift"]]
                              + res_cols + [r["dobrushin_rhs"], wallclock]))
        _write_csv(out / "metrics.csv", header, rows)
        for t_exp in cfg.raw["density_export_times"]:
            idx = int(np.argmin(np.abs(ck_times - t_exp)))
            _export_density(out / f"density_t{ck_times[idx]:.4f}.csv",
                            densities[idx][1])
        for t_exp in cfg.raw["husimi_export_times"]:
            idx = int(np.argmin(np.abs(ck_times - t_exp)))
            g_exp = gammas_kept.get(float(ck_times[idx]))
            if g_exp is not None:
                fld = husimi_field(g_exp, box, M)
                _write_csv(out / f"husimi_t{ck_times[idx]:.4f}.csv",
                           ["z1", "z2", "n", "value"], list(fld.rows()))
        if cfg.raw["save_state_checkpoint"]:
            save_checkpoint(gamma, out / "state_final.json",
                            observables_record=obs_log[-1])
        # keep the final semiclassical density on record for diagnostics
        rho_b = semiclassical_density(gammas_kept[T], M, box, normalized=True)
        _export_density(out / f"density_sc_t{T:.4f}.csv", rho_b)

    return report


def _synthetic_rows(cfg: ScenarioConfig):
    """Fabricated l_b^exponent metric rows driven through the same fit path."""
    syn = cfg.raw["synthetic_injection"]
    rng = np.random.default_rng(cfg.raw["seed"])
    rows = []
    for b in cfg.raw["b_list"]:
        lb = make_scaling(b).l_b
        noise = 1.0 + syn.get("noise", 0.0) * rng.standard_normal()
        value = syn["prefactor"] * lb ** syn["exponent"] * noise
        rows.append({"b": b, "l_b": lb, "residual": value, "w1_final": value,
                     "wallclock": 0.0})
    return rows


def sweep(cfg: ScenarioConfig, out_dir=None, progress=None) -> dict:
    """Run every b, aggregate (l_b, residual) and (l_b, W1(T)), fit slopes."""
    t0 = time.time()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    rows = []
    failures = {}
    reports = {}
    if cfg.raw["synthetic_injection"] is not None:
        rows = _synthetic_rows(cfg)
    else:
        for b in cfg.raw["b_list"]:
            sub = out / f"b{b:g}" if out is not None else None
            try:
                rep = run_scenario(cfg, b, out_dir=sub, progress=progress)
                reports[b] = rep
                final_t = max(r["t"] for r in rep.metric_rows)
                w1_final = next(r["w1_quantum_vs_drift"] for r in rep.metric_rows
                                if r["t"] == final_t)
                residual_mag = max(abs(v) for v in rep.residuals.values())
                rows.append({"b": b, "l_b": rep.geometry["l_b"],
                             "residual": residual_mag, "w1_final": w1_final,
                             "wallclock": rep.wallclock})
            except Exception as exc:  # survivors still get a fit
                failures[b] = f"{type(exc).__name__}: {exc}"

    fits = {}
    for key in ("residual", "w1_final"):
        pairs = [(r["l_b"], r[key]) for r in rows if r[key] > 0]
        if len(pairs) >= 3:
            fits[key] = slope_fit(pairs)
        else:
            fits[key] = {"exponent": float("nan"), "intercept": float("nan"),
                         "residual": float("nan"), "degenerate": True}

    result = {
        "rows": rows,
        "fits": fits,
        "failures": failures,
        "wallclock_seconds": time.time() - t0,
        "config": cfg.raw,
    }
    if out is not None:
        with open(out / "sweep.json", "w") as fh:
            json.dump(result, fh, indent=1, sort_keys=True)
        header = ["b", "l_b", "residual", "w1_final", "wallclock"]
        _write_csv(out / "sweep.csv", header,
                   [(r["b"], r["l_b"], r["residual"], r["w1_final"], r["wallclock"])
                    for r in rows])
    return result
