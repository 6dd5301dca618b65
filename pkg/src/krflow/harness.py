"""Single runs and strain-rate sweeps with CSV, key=value and JSON outputs."""

import csv
import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .boxmotion import default_automorphisms, min_replica_distance, unwrapped_cell
from .config import config_dict, format_config
from .dynamics import initialize, kinetic_temperature
from .errors import ConfigError, KrflowError
from .lattice import shortest_vector
from .observables import (CHANNEL_DEFINITIONS, DEFAULT_BLOCKS, UndefinedObservableError,
                          channel_projectors, generalized_viscosity, window_average, virial_stress)

DEFAULT_RATES = tuple(float(x) for x in np.geomspace(0.05, 1.2, 10))
SIGMA_KEYS = ("xx", "yy", "zz", "xy", "xz", "yz")
_SIGMA_IDX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def fmt(x):
    """Shortest round-trip decimal form used in every CSV."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        out.writerows([fmt(v) for v in row] for row in rows)


@dataclass
class RunReport:
    """Summary of one run; every number traces to a CSV row or a config field."""

    config: object
    stats: dict
    remaps: int
    replica_floor: float
    min_self_image: float
    max_remap_stress_diff: float
    max_temperature_rel_dev: float
    max_momentum_norm: float
    steps: int
    samples: int
    wall_time: float
    metadata: dict
    remap_events: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)

    def flat(self):
        """Ordered ``(key, value)`` pairs for the key=value report."""
        out = [("status", "ok"), ("version", __version__)]
        out += [(f"config.{k}", v) for k, v in config_dict(self.config).items()]
        out += [(f"metadata.{k}", v) for k, v in self.metadata.items()]
        out += [("steps", self.steps), ("samples", self.samples), ("remaps", self.remaps),
                ("replica_floor", self.replica_floor),
                ("replica_floor_over_a", self.replica_floor / self.config.a),
                ("min_self_image_at_remaps", self.min_self_image),
                ("max_remap_stress_diff", self.max_remap_stress_diff),
                ("max_temperature_rel_dev", self.max_temperature_rel_dev),
                ("max_momentum_norm", self.max_momentum_norm)]
        for name, st in self.stats.items():
            out += [(f"window.{name}.mean", st.mean), (f"window.{name}.se", st.se), (f"window.{name}.n", st.n)]
        out.append(("wall_time_s", round(self.wall_time, 3)))
        return out

    def to_text(self):
        return "".join(f"{k}={fmt(v) if not isinstance(v, str) else v}\n" for k, v in self.flat())

    def to_json(self):
        doc = {
            "status": "ok",
            "version": __version__,
            "config": config_dict(self.config),
            "metadata": self.metadata,
            "steps": self.steps,
            "samples": self.samples,
            "remaps": self.remaps,
            "replica_floor": self.replica_floor,
            "min_self_image_at_remaps": _finite_or_none(self.min_self_image),
            "max_remap_stress_diff": self.max_remap_stress_diff,
            "max_temperature_rel_dev": self.max_temperature_rel_dev,
            "max_momentum_norm": self.max_momentum_norm,
            "window": {k: {"mean": v.mean, "se": v.se, "n": v.n} for k, v in self.stats.items()},
            "remap_events": [{"t": t, "self_image": d, "stress_diff": s} for t, d, s in self.remap_events],
            "wall_time_s": self.wall_time,
            "outputs": self.outputs,
        }
        return json.dumps(doc, indent=2, allow_nan=False, default=_json_default) + "\n"


def _finite_or_none(x):
    return x if math.isfinite(x) else None


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serialisable: {type(x)}")


def run(config, out_dir=None, plots=True, basis=None):
    """Initialize, integrate to ``t_max`` and average over ``[t_decorrelate, t_max]``.

    With ``out_dir`` set, writes ``timeseries.csv``, ``stretch.csv``,
    ``report.txt`` and ``report.json`` (plus ``stretch.png`` unless
    ``plots`` is false).
    """
    config.validate()
    start = time.perf_counter()
    basis = basis or default_automorphisms()
    sys, box, integ = initialize(config, basis)
    dec = box.frame.dec
    A = integ.A
    floor = min_replica_distance(dec, basis, config.a)
    pe, pc = channel_projectors(A)
    try:
        generalized_viscosity(np.eye(3), A)
        has_eta = True
    except UndefinedObservableError:
        has_eta = False

    n_steps = int(round(config.t_max / config.dt))
    every = config.sample_every
    ts_rows, st_rows, events = [], [], []
    max_tdev = 0.0
    max_mom = 0.0

    def invariants():
        nonlocal max_tdev, max_mom
        T = kinetic_temperature(sys.p)
        mom = float(np.linalg.norm(sys.p.sum(axis=0)))
        max_tdev = max(max_tdev, abs(T - config.T) / config.T)
        max_mom = max(max_mom, mom)
        return T, mom

    def sample(k):
        t = k * config.dt
        sigma = virial_stress(sys, box.cell, pair_virial=sys.virial)
        P = -sigma
        T, mom = invariants()
        row = [t, T] + [sigma[i, j] for i, j in _SIGMA_IDX]
        row += [float(np.sum(pe * P)), float(np.sum(pc * P)), float(np.trace(P)) / 3.0]
        if has_eta:
            row.append(generalized_viscosity(sigma, A))
        row += [sys.energy, mom]
        ts_rows.append(row)
        st_rows.append([t, box.theta[0], box.theta[1], *box.eps_tilde])

    sample(0)
    for k in range(1, n_steps + 1):
        prev = box
        box = integ.step(sys, box)
        if box.remaps != prev.remaps:
            s_pre = virial_stress(sys, unwrapped_cell(prev, config.dt))
            s_post = virial_stress(sys, box.cell, pair_virial=sys.virial)
            events.append((k * config.dt, shortest_vector(box.cell)[0],
                           float(np.abs(s_pre - s_post).max())))
        if k % every == 0:
            sample(k)
        else:
            invariants()

    ts_header = ["t", "T_inst"] + [f"sigma_{c}" for c in SIGMA_KEYS] + ["P_ext", "P_con", "P_iso"]
    ts_header += (["eta"] if has_eta else []) + ["potential_energy", "momentum_norm"]
    arr = np.array(ts_rows)
    chans = {"t": arr[:, 0]}
    for name in ("T_inst", "P_ext", "P_con", "P_iso") + (("eta",) if has_eta else ()):
        chans[name] = arr[:, ts_header.index(name)]
    for c in SIGMA_KEYS:
        chans[f"P_{c}"] = -arr[:, ts_header.index(f"sigma_{c}")]
    stats = window_average(chans, config.t_decorrelate, config.t_max + 0.5 * config.dt, DEFAULT_BLOCKS)

    metadata = {
        "integrator": integ.name,
        "dof": "3N-3",
        "channels": CHANNEL_DEFINITIONS,
        "box_mode": box.frame.mode.value,
        "flow_class": dec.kind.value,
        "a": config.a,
        "blocks": DEFAULT_BLOCKS,
        "eta": "present" if has_eta else "absent (A + A^T = 0)",
    }
    report = RunReport(
        config=config, stats=stats, remaps=box.remaps, replica_floor=floor,
        min_self_image=min((d for _, d, _ in events), default=float("nan")),
        max_remap_stress_diff=max((s for _, _, s in events), default=0.0),
        max_temperature_rel_dev=max_tdev, max_momentum_norm=max_mom, steps=n_steps,
        samples=len(ts_rows), wall_time=time.perf_counter() - start, metadata=metadata,
        remap_events=events)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        paths = {"timeseries": os.path.join(out_dir, "timeseries.csv"),
                 "stretch": os.path.join(out_dir, "stretch.csv"),
                 "report_txt": os.path.join(out_dir, "report.txt"),
                 "report_json": os.path.join(out_dir, "report.json"),
                 "config": os.path.join(out_dir, "config.txt")}
        write_csv(paths["timeseries"], ts_header, ts_rows)
        write_csv(paths["stretch"], ["t", "theta1", "theta2", "eps1", "eps2", "eps3"], st_rows)
        with open(paths["config"], "w", encoding="utf-8") as fh:
            fh.write(format_config(config))
        if plots:
            from .plotting import plot_stretch_trace
            paths["stretch_plot"] = os.path.join(out_dir, "stretch.png")
            plot_stretch_trace(np.array(st_rows)[:, 3:], basis.omega1, basis.omega2, paths["stretch_plot"],
                               title=f"{config.kind.upper()} rate {config.rate:g}")
        report.outputs = {k: os.path.basename(v) for k, v in paths.items()}
        with open(paths["report_txt"], "w", encoding="utf-8") as fh:
            fh.write(report.to_text())
        with open(paths["report_json"], "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    return report


# -- sweeps --------------------------------------------------------------------

RUN_COLUMNS = ("kind", "eps", "seed", "status", "P_ext", "P_ext_SE", "P_con", "P_con_SE", "P_iso",
               "P_iso_SE", "eta", "eta_SE", "remaps", "message")
SUMMARY_COLUMNS = ("kind", "eps", "sqrt_eps", "P_ext", "P_ext_SE", "P_con", "P_con_SE", "eta", "eta_SE",
                   "n_runs", "note")


def _sweep_task(cfg):
    try:
        rep = run(cfg)
    except KrflowError as exc:
        return {"kind": cfg.kind, "eps": cfg.rate, "seed": cfg.seed, "status": "failed", "message": str(exc)}
    row = {"kind": cfg.kind, "eps": cfg.rate, "seed": cfg.seed, "status": "ok", "message": "",
           "remaps": rep.remaps}
    for name in ("P_ext", "P_con", "P_iso", "eta"):
        st = rep.stats.get(name)
        row[name] = st.mean if st else float("nan")
        row[name + "_SE"] = st.se if st else float("nan")
    return row


@dataclass
class SweepResult:
    summary: list
    runs: list

    @property
    def failures(self):
        return [r for r in self.runs if r["status"] != "ok"]


def _mean_se(xs):
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0 or np.all(np.isnan(xs)):
        return float("nan"), float("nan")
    if xs.size == 1:
        return float(xs[0]), 0.0
    return float(xs.mean()), float(xs.std(ddof=1) / math.sqrt(xs.size))


def sweep_tasks(base, kinds, rates, seeds, equilibrium=True):
    if not kinds or not rates or seeds < 1:
        raise ConfigError("sweep: kinds, rates and seeds must be nonempty")
    tasks = []
    for kind in kinds:
        for rate in rates:
            for s in range(seeds):
                tasks.append(dataclasses.replace(base, kind=kind.lower(), rate=float(rate), seed=base.seed + s))
    if equilibrium:
        tasks += [dataclasses.replace(base, kind="eq", rate=0.0, seed=base.seed + s) for s in range(seeds)]
    for cfg in tasks:
        cfg.validate()
    return tasks


def summarize(runs):
    """One row per (kind, rate): mean and standard error across seeds."""
    groups = {}
    for r in runs:
        if r["status"] == "ok":
            groups.setdefault((r["kind"], r["eps"]), []).append(r)
    rows = []
    for (kind, eps), rs in sorted(groups.items(), key=lambda kv: (kv[0][0] == "eq", kv[0][0], kv[0][1])):
        row = {"kind": kind, "eps": eps, "sqrt_eps": math.sqrt(eps)}
        for name in ("P_ext", "P_con", "eta"):
            src = "P_iso" if kind == "eq" and name != "eta" else name
            row[name], row[name + "_SE"] = _mean_se([r[src] for r in rs])
        row["n_runs"] = len(rs)
        row["note"] = "single-sample" if len(rs) == 1 else ""
        rows.append(row)
    return rows


def sweep(base, kinds, rates, seeds, jobs=1, out_dir=None, equilibrium=True, plots=True):
    """Run every (kind, rate, seed) combination and summarise across seeds."""
    tasks = sweep_tasks(base, kinds, rates, seeds, equilibrium)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_sweep_task, tasks))
    else:
        runs = [_sweep_task(cfg) for cfg in tasks]
    runs.sort(key=lambda r: (r["kind"], r["eps"], r["seed"]))
    result = SweepResult(summarize(runs), runs)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, "summary.csv"), SUMMARY_COLUMNS,
                  [[r[c] for c in SUMMARY_COLUMNS] for r in result.summary])
        write_csv(os.path.join(out_dir, "runs.csv"), RUN_COLUMNS,
                  [[r.get(c, float("nan")) for c in RUN_COLUMNS] for r in runs])
        with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as fh:
            fh.write(format_config(base))
        if plots and result.summary:
            from .plotting import plot_pressures, plot_viscosity
            plot_pressures(result.summary, os.path.join(out_dir, "pressures.png"))
            plot_viscosity(result.summary, os.path.join(out_dir, "viscosity.png"))
    return result
