"""Config-driven experiment runner.

A single JSON file with a flat key set describes one experiment; running it
writes plot-ready CSVs, snapshots and a metadata echo into the output
directory.  Everything stochastic is derived from the master seed through
per-replica streams, so a rerun with the same config reproduces every output
byte regardless of the thread count (threads only schedule replicas).

``metadata.json`` contains the full config echo, code version and output
manifest; wall-clock timing goes to ``run_info.txt``, which is the one file
excluded from reproducibility comparisons.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._rng import replica_rng
from .dynamics import QVoterParams, RateTable, run, set_product_measure
from .duality import check_duality
from .equilibrium import coalescence_fates, sample_nu_u
from .greens import expected_hitting_time, simulate_hitting
from .lattice import Configuration, build_torus, write_snapshot, \
    NN6_OFFSETS, E3_OFFSETS
from .ode import compare_particle_ode
from .reaction import perturbation_rates, phi_from_fates
from .statistics import box_sums, extinction_ensemble, variance_exponent

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "ConfigError",
    "validate_config",
    "run_experiment",
    "snapshot_cross_section",
    "EXPERIMENT_KINDS",
]

EXPERIMENT_KINDS = (
    "persistence", "extinction", "duality-check", "reaction-term",
    "ode-compare", "box-clt", "greens", "snapshot",
)

# key -> (type coercion, default); keys marked per-kind below
_COMMON_KEYS = {
    "experiment": (str, None),
    "seed": (int, 0),
    "out": (str, "qvoter-out"),
    "threads": (int, 1),
    "replicates": (int, 20),
    "L": (None, 16),              # int or list of ints
    "offsets": (None, "nn6"),     # "nn6" | "e3" | list of 3-vectors
    "u0": (float, 0.5),
    "q": (float, None),
    "epsilon": (float, None),
    "regime": (str, None),
    "rates": (None, None),
    "t_max": (float, 100.0),
    "sample_dt": (float, None),
}
_KIND_KEYS = {
    "persistence": {"band": (float, 0.1)},
    "extinction": {"t_max_factor": (float, 50.0)},
    "duality-check": {
        "t_values": (None, (1.0,)),
        "a_sites": (None, None),
        "b_sites": (None, None),
    },
    "reaction-term": {"k": (int, 3), "t_trunc": (float, 1.0e4)},
    "ode-compare": {"t0": (float, 2.0), "ode_dt": (float, 0.01),
                    "fates_replicates": (int, 200_000),
                    "fates_t_trunc": (float, 1.0e3)},
    "box-clt": {
        "r_values": (None, (4, 8, 16)),
        "burn_time": (float, None),
        "lam": (float, None),
    },
    "greens": {"x": (int, 10), "z": (int, 100), "rate": (str, "linear"),
               "compare": (bool, True)},
    "snapshot": {"axis": (str, "z"), "level": (int, None)},
}


class ConfigError(ValueError):
    """Raised with the full list of config problems."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    experiment: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key)

    def lattice_sides(self) -> list:
        L = self.values["L"]
        return [int(v) for v in L] if isinstance(L, (list, tuple)) else [int(L)]

    def offset_vectors(self):
        o = self.values["offsets"]
        if o == "nn6":
            return NN6_OFFSETS
        if o == "e3":
            return E3_OFFSETS
        return tuple(tuple(int(c) for c in v) for v in o)

    def params(self, k: int) -> QVoterParams:
        q = self.values.get("q")
        eps = self.values.get("epsilon")
        if q is not None and eps is None:
            return QVoterParams.direct(q)
        if eps is not None:
            rates = self.values.get("rates")
            if rates is not None:
                table = RateTable(k=k, values=tuple(float(v) for v in rates))
            else:
                table = perturbation_rates(k, self.values.get("regime") or "q<1")
            return QVoterParams.perturbed(eps, table)
        return QVoterParams.direct(1.0)

    def echo(self) -> dict:
        """Config echo for metadata: everything that determines the numbers.
        Execution context (out, threads) is excluded by design; threads only
        schedule replicas and must never change an output."""
        vals = {k: v for k, v in self.values.items() if k not in ("out", "threads")}
        return {"experiment": self.experiment, **vals}


def validate_config(raw: str | dict) -> ExperimentConfig:
    """Parse a JSON config, applying defaults; raises ConfigError listing
    every problem found at once."""
    errors = []
    if isinstance(raw, str):
        if not raw.strip():
            raise ConfigError(["empty config: missing experiment kind"])
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ConfigError([f"invalid JSON: {e}"])
    else:
        data = dict(raw)
    if not isinstance(data, dict):
        raise ConfigError(["config must be a JSON object"])
    kind = data.get("experiment")
    if kind is None:
        errors.append("missing experiment kind")
    elif kind not in EXPERIMENT_KINDS:
        errors.append(f"unknown experiment kind {kind!r}; "
                      f"choose from {', '.join(EXPERIMENT_KINDS)}")
    if errors:
        raise ConfigError(errors)
    allowed = dict(_COMMON_KEYS)
    allowed.update(_KIND_KEYS.get(kind, {}))
    values = {}
    for key, val in data.items():
        if key == "experiment":
            continue
        if key not in allowed:
            errors.append(f"unknown key {key!r}")
            continue
        coerce, _ = allowed[key]
        if coerce is not None and val is not None:
            try:
                val = coerce(val)
            except (TypeError, ValueError):
                errors.append(f"key {key!r}: cannot interpret {val!r}")
                continue
        values[key] = val
    for key, (_, default) in allowed.items():
        if key == "experiment":
            continue
        values.setdefault(key, default)

    cfg = ExperimentConfig(experiment=kind, values=values)
    _validate_constraints(cfg, errors)
    if errors:
        raise ConfigError(errors)
    return cfg


def _validate_constraints(cfg: ExperimentConfig, errors: list) -> None:
    v = cfg.values
    for L in cfg.lattice_sides():
        if L < 2:
            errors.append(f"L must be >= 2, got {L}")
    if not 0.0 <= v["u0"] <= 1.0:
        errors.append(f"u0 must lie in [0,1], got {v['u0']}")
    if v["replicates"] < 1:
        errors.append("replicates must be >= 1")
    if v["threads"] < 1:
        errors.append("threads must be >= 1")
    if cfg.experiment == "box-clt":
        for L in cfg.lattice_sides():
            for r in v["r_values"]:
                if L % int(r) != 0:
                    errors.append(f"r must divide L: r={r}, L={L}")
    if cfg.experiment == "greens":
        if not 0 < v["x"] < v["z"]:
            errors.append(f"need 0 < x < z, got x={v['x']}, z={v['z']}")
    if cfg.experiment == "snapshot":
        if v["axis"] not in ("x", "y", "z"):
            errors.append(f"axis must be one of x,y,z, got {v['axis']!r}")
        level = v["level"]
        if level is not None and not 0 <= level < cfg.lattice_sides()[0]:
            errors.append(f"level must lie in [0, L), got {level}")
    if cfg.experiment in ("reaction-term", "ode-compare"):
        k = v.get("k", len(cfg.offset_vectors()))
        if v["offsets"] == "nn6" and k == 3:
            v["offsets"] = "e3"  # match the default k
        if len(cfg.offset_vectors()) != k and cfg.experiment == "reaction-term":
            errors.append(f"offsets give k={len(cfg.offset_vectors())}, "
                          f"but k={k} requested")
    try:
        cfg.params(len(cfg.offset_vectors()))
    except (ValueError, TypeError) as e:
        errors.append(f"model parameters: {e}")


@dataclass
class RunRecord:
    config: dict
    outputs: list
    wall_clock: float
    version: str = __version__


def _map_replicas(fn, n: int, threads: int) -> list:
    """Run fn(i) for i in range(n); results in replica order regardless of
    scheduling."""
    if threads <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def _fmt(x) -> str:
    return f"{float(x):.17g}"


class _Writer:
    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.files: list[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def open(self, name: str):
        self.files.append(name)
        return open(os.path.join(self.out_dir, name), "w")

    def path(self, name: str) -> str:
        self.files.append(name)
        return os.path.join(self.out_dir, name)


def run_experiment(config: ExperimentConfig | dict | str) -> RunRecord:
    """Dispatch an experiment and write its outputs; returns the record."""
    if not isinstance(config, ExperimentConfig):
        config = validate_config(config)
    t_start = time.monotonic()
    w = _Writer(config.values["out"])
    runner = {
        "persistence": _run_persistence,
        "extinction": _run_extinction,
        "duality-check": _run_duality_check,
        "reaction-term": _run_reaction_term,
        "ode-compare": _run_ode_compare,
        "box-clt": _run_box_clt,
        "greens": _run_greens,
        "snapshot": _run_snapshot,
    }[config.experiment]
    summary = runner(config, w)
    wall = time.monotonic() - t_start
    meta = {
        "config": config.echo(),
        "version": __version__,
        "outputs": sorted(w.files),
        "summary": summary,
    }
    with w.open("metadata.json") as f:
        json.dump(meta, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    with open(os.path.join(w.out_dir, "run_info.txt"), "w") as f:
        f.write(f"wall_clock_seconds={wall:.3f}\n")
        f.write(f"threads={config.values['threads']}\n")
        f.write(f"out={config.values['out']}\n")
    return RunRecord(config=config.echo(), outputs=sorted(w.files),
                     wall_clock=wall)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


# -- experiment bodies -------------------------------------------------------


def band_occupancy(traj_times, traj_densities, band: float,
                   center: float = 0.5) -> tuple[float, float]:
    """(entry_time, occupancy): first time the density enters the band around
    the center, and the fraction of post-entry samples inside the band.
    Returns (inf, 0.0) for trajectories that never enter."""
    inside = np.abs(np.asarray(traj_densities) - center) <= band
    idx = np.nonzero(inside)[0]
    if len(idx) == 0:
        return float("inf"), 0.0
    first = idx[0]
    return float(traj_times[first]), float(inside[first:].mean())


def _run_persistence(cfg: ExperimentConfig, w: _Writer) -> dict:
    v = cfg.values
    offs = cfg.offset_vectors()
    sample_dt = v["sample_dt"] or v["t_max"] / 500.0
    summary = {}
    with w.open("persistence.csv") as f:
        f.write("L,replicate,entry_time,occupancy,final_density\n")
        for L in cfg.lattice_sides():
            lat = build_torus(L, offs)
            params = cfg.params(lat.k)

            def one(i, lat=lat, params=params):
                rng = replica_rng(v["seed"], _replica_tag(L, i))
                config = Configuration(lat)
                set_product_measure(config, v["u0"], rng)
                traj = run(config, params, v["t_max"], rng,
                           sample_dt=sample_dt, keep_final=False)
                entry, occ = band_occupancy(traj.times, traj.densities, v["band"])
                return entry, occ, traj.densities[-1]

            rows = _map_replicas(one, v["replicates"], v["threads"])
            for i, (entry, occ, dens) in enumerate(rows):
                f.write(f"{L},{i},{_fmt(entry)},{_fmt(occ)},{_fmt(dens)}\n")
            summary[str(L)] = {
                "mean_occupancy": float(np.mean([r[1] for r in rows])),
                "entered": int(sum(math.isfinite(r[0]) for r in rows)),
            }
    return summary


def _replica_tag(L: int, i: int) -> int:
    # distinct stream per (lattice size, replica)
    return (L << 20) + i


def _run_extinction(cfg: ExperimentConfig, w: _Writer) -> dict:
    v = cfg.values
    offs = cfg.offset_vectors()
    summary = {}
    with w.open("extinction.csv") as f:
        f.write("L,replicate,time,censored,fixated_at_one\n")
        for L in cfg.lattice_sides():
            lat = build_torus(L, offs)
            params = cfg.params(lat.k)
            ens = extinction_ensemble(lat, params, v["u0"], v["replicates"],
                                      master_seed=v["seed"] + L,
                                      t_max=v["t_max_factor"] * lat.n)
            for i in range(v["replicates"]):
                f.write(f"{L},{i},{_fmt(ens.times[i])},{int(ens.censored[i])},"
                        f"{int(ens.fixated_at_one[i])}\n")
            summary[str(L)] = {
                "mean_time": float(ens.times.mean()),
                "censored": int(ens.censored.sum()),
                "fixated_at_one": int(ens.fixated_at_one.sum()),
            }
    ls = cfg.lattice_sides()
    if len(ls) >= 2:
        logn = np.log([float(L)**3 for L in ls])
        means = np.array([summary[str(L)]["mean_time"] for L in ls])
        slope = float(np.polyfit(logn, means, 1)[0])
        summary["log_n_slope"] = slope
    return summary


def _run_duality_check(cfg: ExperimentConfig, w: _Writer) -> dict:
    v = cfg.values
    L = cfg.lattice_sides()[0]
    lat = build_torus(L, cfg.offset_vectors())
    A = v["a_sites"] if v["a_sites"] is not None else [0]
    B = v["b_sites"] if v["b_sites"] is not None else [lat.n // 2]
    summary = {}
    with w.open("duality.csv") as f:
        f.write("t,p_forward,se_forward,p_dual,se_dual,gap,combined_se\n")
        for j, t in enumerate(v["t_values"]):
            rng = replica_rng(v["seed"], j)
            est = check_duality(lat, A, B, float(t), v["replicates"], rng)
            f.write(f"{_fmt(t)},{_fmt(est.p_forward)},{_fmt(est.se_forward)},"
                    f"{_fmt(est.p_dual)},{_fmt(est.se_dual)},{_fmt(est.gap)},"
                    f"{_fmt(est.combined_se)}\n")
            summary[str(t)] = {"gap": est.gap, "combined_se": est.combined_se}
    return summary


def _run_reaction_term(cfg: ExperimentConfig, w: _Writer) -> dict:
    v = cfg.values
    k = v["k"]
    offs = cfg.offset_vectors()
    rng = replica_rng(v["seed"], 0)
    fates = coalescence_fates(k, offs, v["t_trunc"], v["replicates"], rng)
    fates.to_csv(w.path("fates.csv"))
    rates = perturbation_rates(k, v["regime"] or "q<1")
    term = phi_from_fates(fates, rates)
    term.to_csv(w.path("reaction_term.csv"))
    return {"factored": term.factored_str(), "sign": term.sign,
            "c_k": float(term.c_k), "positive_on_grid": term.positive_on_grid}


def _run_ode_compare(cfg: ExperimentConfig, w: _Writer) -> dict:
    v = cfg.values
    if v["epsilon"] is None:
        raise ConfigError(["ode-compare requires 'epsilon'"])
    offs = cfg.offset_vectors()
    k = len(offs)
    rates = None
    if v["rates"] is not None:
        rates = RateTable(k=k, values=tuple(float(x) for x in v["rates"]))
    else:
        rates = perturbation_rates(k, v["regime"] or "q<1")
    rng = replica_rng(v["seed"], 10**6)
    fates = coalescence_fates(k, offs, v["fates_t_trunc"],
                              v["fates_replicates"], rng)
    term = phi_from_fates(fates, rates)
    summary = {"reaction": term.factored_str()}
    ode_written = False
    with w.open("ode_compare.csv") as f:
        f.write("L,replicate,sup_deviation\n")
        for L in cfg.lattice_sides():
            lat = build_torus(L, offs)
            params = cfg.params(lat.k)
            comp = compare_particle_ode(
                lat, params, term.phi, v["u0"], v["t0"],
                time_scale=v["epsilon"], replicates=v["replicates"],
                master_seed=v["seed"] + L, ode_dt=v["ode_dt"])
            if not ode_written:
                comp.ode.to_csv(w.path("ode_solution.csv"))
                ode_written = True
            for i, d in enumerate(comp.deviations):
                f.write(f"{L},{i},{_fmt(d)}\n")
            summary[str(L)] = {"mean_sup_deviation": comp.mean_deviation}
    return summary


def _run_box_clt(cfg: ExperimentConfig, w: _Writer) -> dict:
    v = cfg.values
    L = cfg.lattice_sides()[0]
    lat = build_torus(L, cfg.offset_vectors())
    rs = [int(r) for r in v["r_values"]]
    rows = []
    control_rows = []

    def one(i):
        rng = replica_rng(v["seed"], i)
        config = sample_nu_u(lat, v["u0"], v["burn_time"], rng)
        lam = v["lam"] or config.density
        lam = min(max(lam, 1e-9), 1 - 1e-9)
        equil = [box_sums(config, r, lam) for r in rs]
        set_product_measure(config, v["u0"], rng)
        control = [box_sums(config, r, v["u0"]) for r in rs]
        return equil, control

    results = _map_replicas(one, v["replicates"], v["threads"])
    with w.open("box_sums.csv") as f:
        f.write("kind,config,r,cube_index,value\n")
        for i, (equil, control) in enumerate(results):
            for s in equil:
                rows.append(s)
                for ci, val in enumerate(s.values):
                    f.write(f"equilibrated,{i},{s.r},{ci},{_fmt(val)}\n")
            for s in control:
                control_rows.append(s)
                for ci, val in enumerate(s.values):
                    f.write(f"product,{i},{s.r},{ci},{_fmt(val)}\n")
    slope, se, variances = variance_exponent(rows)
    cslope, cse, cvar = variance_exponent(control_rows)
    with w.open("box_variance.csv") as f:
        f.write("kind,r,variance\n")
        for r in rs:
            f.write(f"equilibrated,{r},{_fmt(variances[r])}\n")
        for r in rs:
            f.write(f"product,{r},{_fmt(cvar[r])}\n")
    return {"slope": slope, "slope_se": se,
            "control_slope": cslope, "control_slope_se": cse}


def _run_greens(cfg: ExperimentConfig, w: _Writer) -> dict:
    v = cfg.values
    exact = expected_hitting_time(v["x"], v["z"], v["rate"])
    summary = {"exact": exact}
    with w.open("greens.csv") as f:
        f.write("x,z,rate,exact,sim_mean,sim_se,frac_top,frac_top_se\n")
        if v["compare"]:
            rng = replica_rng(v["seed"], 0)
            est = simulate_hitting(v["x"], v["z"], v["rate"],
                                   v["replicates"], rng)
            f.write(f"{v['x']},{v['z']},{v['rate']},{_fmt(exact)},"
                    f"{_fmt(est.mean_time)},{_fmt(est.se_time)},"
                    f"{_fmt(est.frac_top)},{_fmt(est.se_top)}\n")
            summary.update({"sim_mean": est.mean_time, "sim_se": est.se_time,
                            "frac_top": est.frac_top})
        else:
            f.write(f"{v['x']},{v['z']},{v['rate']},{_fmt(exact)},,,,\n")
    return summary


def _run_snapshot(cfg: ExperimentConfig, w: _Writer) -> dict:
    v = cfg.values
    L = cfg.lattice_sides()[0]
    lat = build_torus(L, cfg.offset_vectors())
    params = cfg.params(lat.k)
    rng = replica_rng(v["seed"], 0)
    config = Configuration(lat)
    set_product_measure(config, v["u0"], rng)
    traj = run(config, params, v["t_max"], rng,
               sample_dt=v["sample_dt"] or v["t_max"] / 200.0)
    traj.to_csv(w.path("trajectory.csv"))
    if v["q"] is not None:
        q_label = v["q"]
    elif v["epsilon"] is not None:
        q_label = f"eps={v['epsilon']}"
    else:
        q_label = 1.0
    write_snapshot(config, w.path("final.snapshot"), t=traj.final_time,
                   q=q_label, seed=v["seed"])
    level = v["level"] if v["level"] is not None else L // 2
    grid = snapshot_cross_section(config, v["axis"], level)
    with w.open("cross_section.txt") as f:
        f.write("\n".join(grid) + "\n")
    ones_share = sum(row.count("1") for row in grid) / (L * L)
    return {"final_density": config.density,
            "slice_ones_share": ones_share,
            "absorbed": traj.absorbed}


def snapshot_cross_section(config: Configuration, axis: str, level: int) -> list:
    """L x L text slice of the configuration normal to the given axis."""
    L = config.lattice.side
    if axis not in ("x", "y", "z"):
        raise ValueError(f"axis must be x, y or z, got {axis!r}")
    if not 0 <= level < L:
        raise ValueError(f"level must lie in [0, {L}), got {level}")
    grid = config.bits.reshape(L, L, L)  # [z, y, x]
    if axis == "z":
        plane = grid[level]          # rows y, cols x
    elif axis == "y":
        plane = grid[:, level, :]    # rows z, cols x
    else:
        plane = grid[:, :, level]    # rows z, cols y
    return ["".join("1" if v else "0" for v in row) for row in plane]
