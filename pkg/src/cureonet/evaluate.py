"""Metrics against the reference solver, disk-cached reference solutions,
and the matched-budget ablation harnesses (decoder kind, curriculum,
temporal domain decomposition)."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from . import __version__ as code_version
from .design import DesignPoint, DesignSpace
from .losses import CollocationConfig, LossWeights
from .operator import (OperatorConfig, OperatorTriplet, init_triplet,
                       predict_field)
from .process import MaterialSet, air_temperature
from .solver import FieldSolution, Grid1D, exotherm, probe, solve
from .trainer import TrainPlan, train


@dataclass(frozen=True)
class Metrics:
    """Per-output comparison against the reference solver, averaged over
    the evaluated designs."""

    rel_l2: float
    mae: float
    max_abs_err: float
    exotherm_err: float | None = None

    def as_dict(self) -> dict:
        return {"rel_l2": self.rel_l2, "mae": self.mae,
                "max_abs_err": self.max_abs_err,
                "exotherm_err": self.exotherm_err}


def _cache_name(design: DesignPoint, grid: Grid1D, bc_scale: float,
                cooldown: bool) -> str:
    payload = json.dumps({
        "design": list(design.as_array()),
        "grid": [grid.n_tool, grid.n_part, grid.dt, grid.t_end],
        "bc_scale": bc_scale,
        "cooldown": cooldown,
    }, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def reference_solution(design: DesignPoint, props: MaterialSet, grid: Grid1D,
                       cache_dir=None, bc_scale: float = 1.0,
                       cooldown: bool = False) -> FieldSolution:
    """Reference solve, cached on disk keyed by design + grid; the entry
    carries the property hash and solver version, and is recomputed with a
    warning when either no longer matches."""
    if cache_dir is None:
        return solve(design, props, grid, bc_scale=bc_scale,
                     cooldown=cooldown)
    stamp = f"{props.content_hash()}:{code_version}"
    path = os.path.join(cache_dir,
                        f"ref_{_cache_name(design, grid, bc_scale, cooldown)}.npz")
    if os.path.exists(path):
        with np.load(path) as data:
            if str(data["stamp"]) == stamp:
                return FieldSolution(
                    times=data["times"], t_tool=data["t_tool"],
                    t_part=data["t_part"], alpha=data["alpha"],
                    design=design, bc_scale=bc_scale)
        warnings.warn(f"reference cache entry {path} has a stale property "
                      "hash or solver version; recomputing", RuntimeWarning)
    sol = solve(design, props, grid, bc_scale=bc_scale, cooldown=cooldown)
    os.makedirs(cache_dir, exist_ok=True)
    np.savez(path, stamp=stamp, times=sol.times, t_tool=sol.t_tool,
             t_part=sol.t_part, alpha=sol.alpha)
    return sol


def _thin_indices(n: int, n_keep: int) -> np.ndarray:
    if n_keep >= n:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, n_keep)).astype(int))


def solution_metrics(pred: FieldSolution, ref: FieldSolution) -> dict:
    """Per-output comparison of two field solutions on identical grids."""
    pairs = {
        "part_temperature": (pred.t_part, ref.t_part),
        "tool_temperature": (pred.t_tool, ref.t_tool),
        "degree_of_cure": (pred.alpha, ref.alpha),
    }
    out = {}
    for name, (p, r) in pairs.items():
        if p.shape != r.shape:
            raise ValueError(f"{name}: shape mismatch {p.shape} vs {r.shape}")
        err = p - r
        exo = None
        if name == "part_temperature":
            exo = abs(exotherm(pred)[0] - exotherm(ref)[0])
        out[name] = Metrics(
            rel_l2=float(np.linalg.norm(err)
                         / max(np.linalg.norm(r), 1e-30)),
            mae=float(np.mean(np.abs(err))),
            max_abs_err=float(np.max(np.abs(err))),
            exotherm_err=exo)
    return out


def evaluate(triplet: OperatorTriplet, test_designs, props: MaterialSet,
             grid: Grid1D | None = None, n_times: int = 201,
             cache_dir=None) -> dict:
    """Metrics per output (part_temperature, tool_temperature,
    degree_of_cure) averaged over the test designs."""
    if not test_designs:
        raise ValueError("need at least one test design")
    if grid is None:
        grid = Grid1D()
    acc: dict = {}
    for design in test_designs:
        ref = reference_solution(design, props, grid, cache_dir=cache_dir,
                                 cooldown=triplet.cooldown)
        rows = _thin_indices(len(ref.times), n_times)
        thinned = FieldSolution(times=ref.times[rows],
                                t_tool=ref.t_tool[rows],
                                t_part=ref.t_part[rows],
                                alpha=ref.alpha[rows], design=design)
        pred = predict_field(triplet, design, thinned.times,
                             n_tool=grid.n_tool, n_part=grid.n_part)
        for name, m in solution_metrics(pred, thinned).items():
            acc.setdefault(name, []).append(m)

    out = {}
    for name, metrics in acc.items():
        out[name] = Metrics(
            rel_l2=float(np.mean([m.rel_l2 for m in metrics])),
            mae=float(np.mean([m.mae for m in metrics])),
            max_abs_err=float(np.mean([m.max_abs_err for m in metrics])),
            exotherm_err=(float(np.mean([m.exotherm_err for m in metrics]))
                          if metrics[0].exotherm_err is not None else None))
    return out


def midpoint_trace_rel_l2(triplet: OperatorTriplet, design: DesignPoint,
                          props: MaterialSet, grid: Grid1D,
                          n_times: int = 201, cache_dir=None,
                          field_name: str = "part_temperature") -> float:
    """Relative L2 error of the predicted part mid-point trace against the
    reference solver."""
    ref = reference_solution(design, props, grid, cache_dir=cache_dir,
                             cooldown=triplet.cooldown)
    times = np.linspace(0.0, ref.times[-1], n_times)
    ref_trace = probe(ref, 0.5, times, field_name)
    pred = predict_field(triplet, design, times, n_tool=3, n_part=3)
    data = {"part_temperature": pred.t_part, "tool_temperature": pred.t_tool,
            "alpha": pred.alpha}[field_name]
    pred_trace = data[:, 1]  # x = 0.5 is the middle of the 3-node grid
    return float(np.linalg.norm(pred_trace - ref_trace)
                 / max(np.linalg.norm(ref_trace), 1e-30))


def exotherm_window_max_error(triplet: OperatorTriplet, design: DesignPoint,
                              props: MaterialSet, grid: Grid1D,
                              window_s: float = 900.0, n_times: int = 121,
                              cache_dir=None) -> float:
    """Max absolute part-temperature error inside a time window around the
    reference exotherm."""
    ref = reference_solution(design, props, grid, cache_dir=cache_dir,
                             cooldown=triplet.cooldown)
    _t_max, t_at, _x = exotherm(ref)
    lo = max(0.0, t_at - window_s)
    hi = min(ref.times[-1], t_at + window_s)
    times = np.linspace(lo, hi, n_times)
    pred = predict_field(triplet, design, times, n_tool=grid.n_tool,
                         n_part=grid.n_part)
    ref_window = np.stack([
        [probe(ref, x, t, "part_temperature") for x in pred.x_part]
        for t in times])
    return float(np.max(np.abs(pred.t_part - ref_window)))


# -- ablation harnesses ---------------------------------------------------------


@dataclass
class AblationSetup:
    """Shared context for matched-budget ablation comparisons."""

    space: DesignSpace
    designs: list
    test_designs: list
    props: MaterialSet
    plan: TrainPlan
    config: OperatorConfig
    seed: int
    loss_config: CollocationConfig | None = None
    weights: LossWeights = LossWeights()
    grid: Grid1D | None = None
    cache_dir: str | None = None
    nd_list: tuple = (1, 5, 7)


def _train_variant(setup: AblationSetup, config: OperatorConfig,
                   plan: TrainPlan, seed: int):
    triplet = init_triplet(config, setup.space, seed=seed)
    triplet, history = train(triplet, setup.designs, plan, setup.props,
                             seed=seed, loss_config=setup.loss_config,
                             weights=setup.weights)
    return triplet, history


def _variant_report(setup: AblationSetup, name: str, triplet,
                    history) -> dict:
    grid = setup.grid or Grid1D()
    rel = float(np.mean([
        midpoint_trace_rel_l2(triplet, d, setup.props, grid,
                              cache_dir=setup.cache_dir)
        for d in setup.test_designs]))
    return {
        "name": name,
        "final_total": history.records[-1].total if history.records else None,
        "loss_history": [r.total for r in history.records],
        "midpoint_rel_l2": rel,
    }


def ablation_run(kind: str, setup: AblationSetup, out_dir=None) -> dict:
    """Train matched-budget variants and report paired loss histories and
    metrics. Kinds: decoder (nonlinear vs linear), curriculum (on vs off),
    domain_decomp (subdomain counts)."""
    variants = []
    if kind == "decoder":
        for name, dec in (("nonlinear", "nonlinear"), ("linear", "linear")):
            config = dataclasses.replace(setup.config, decoder=dec)
            triplet, history = _train_variant(setup, config, setup.plan,
                                              setup.seed)
            variants.append(_variant_report(setup, name, triplet, history))
    elif kind == "curriculum":
        for name, flag in (("curriculum", True), ("regular", False)):
            plan = dataclasses.replace(setup.plan, curriculum=flag)
            triplet, history = _train_variant(setup, setup.config, plan,
                                              setup.seed)
            variants.append(_variant_report(setup, name, triplet, history))
    elif kind == "domain_decomp":
        grid = setup.grid or Grid1D()
        for n_d in setup.nd_list:
            config = dataclasses.replace(setup.config, n_subdomains=n_d,
                                         boundaries=None)
            triplet, history = _train_variant(setup, config, setup.plan,
                                              setup.seed)
            rep = _variant_report(setup, f"nd{n_d}", triplet, history)
            rep["exotherm_window_max_err"] = float(np.mean([
                exotherm_window_max_error(triplet, d, setup.props, grid,
                                          cache_dir=setup.cache_dir)
                for d in setup.test_designs]))
            variants.append(rep)
    else:
        raise ValueError(f"unknown ablation kind {kind!r}")

    report = {"kind": kind, "seed": setup.seed, "variants": variants}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f"ablation_{kind}.json"), "w") as f:
            json.dump(report, f, indent=2, sort_keys=True)
            f.write("\n")
    return report


def export_plot_data(triplet: OperatorTriplet, design: DesignPoint,
                     props: MaterialSet, grid: Grid1D, path,
                     n_times: int = 201, cache_dir=None) -> None:
    """Mid-point trace comparison CSV: (time_s, T_air_C, T_mid_pred_C,
    T_mid_ref_C, alpha_mid_pred, alpha_mid_ref)."""
    ref = reference_solution(design, props, grid, cache_dir=cache_dir,
                             cooldown=triplet.cooldown)
    times = np.linspace(0.0, ref.times[-1], n_times)
    cycle = design.cycle(t0=triplet.t0, cooldown=triplet.cooldown)
    t_air = air_temperature(cycle, times)
    pred = predict_field(triplet, design, times, n_tool=3, n_part=3)
    t_ref = probe(ref, 0.5, times, "part_temperature")
    a_ref = probe(ref, 0.5, times, "alpha")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["time_s", "T_air_C", "T_mid_pred_C", "T_mid_ref_C",
                         "alpha_mid_pred", "alpha_mid_ref"])
        for i, t in enumerate(times):
            writer.writerow([repr(float(t)), repr(float(t_air[i])),
                             repr(float(pred.t_part[i, 1])),
                             repr(float(t_ref[i])),
                             repr(float(pred.alpha[i, 1])),
                             repr(float(a_ref[i]))])
