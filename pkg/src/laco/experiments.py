"""Experiment presets, INI config files and replicated runs with file output."""
from __future__ import annotations

import configparser
import dataclasses
import io
import itertools
import json
import math
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import SliceSpec, Sinusoid, SystemConfig, enumerate_arms
from .engine import LearnerConfig, run_experiment, stationary_arm_means, trace_to_csv
from .policies import POLICIES
from .regret import empirical_regret, regret_upper_bound

# offset between replication seeds and the seed of the stationary-mean replays
ORACLE_SEED_OFFSET = 10**6

SWEEP_KEYS = ("chunk_prbs", "capacity_prbs", "num_slices", "alpha", "beta", "rayleigh_scale", "traffic_mean")

DOCUMENTED_DEFAULTS = {
    "mcs_table": "embedded 15-row table (SNR threshold dB, MCS index, bits per PRB per TTI) in laco/data/mcs_table.csv",
    "snr_mapping": "Rayleigh amplitude mapped affinely in dB so the 1st/99th percentiles of the reference scale "
                   "hit [snr_min_db, snr_max_db]; channel level = equal-width bin of that range",
    "channel_levels": "4 levels; latent levels default to the same count",
    "epoch_ttis": "1000 TTIs of 1 ms (1 s decision interval); a 15 s interval is epoch_ttis = 15000",
    "traffic": "Normal(mu, nu) Mb/s per TTI, rounded and clamped at zero (slight upward mean bias)",
    "drop_policy": "strict drop once a packet waits longer than the latency tolerance; serve_late keeps it until "
                   "twice the tolerance and counts the bits as late",
    "delay_flag": "a TTI is flagged when bits expire or late bits are served in it",
    "em": "level-wise mixture EM, max 500 iterations, tolerance 1e-6, refit after every play of an arm",
    "psi_weights": "posterior responsibility of each latent level given the arm's transition counts",
    "model_reward": "mean over slices of (steady-state latency-ok mass) ** eta",
    "classic_reward": "sum over slices of (PRBs x bits/PRB - demand / latency tolerance) per TTI, mapped to [0, 1] "
                      "by the min/max over arms at nominal load and clipped",
    "bandit_update": "running mean of rewards; reward_update = overwrite keeps only the latest reward",
    "ts_family": "Gaussian with variance ts_prior_variance / (plays + 1)",
    "initial_sweep": "laco, ucb and ts play every arm once in index order before using their index",
    "ties": "lowest arm index",
    "arm_order": "lexicographic order of PRB allocation tuples",
    "regret_oracle": f"per-arm means from replays of independent epochs, seed = seed_base + {ORACLE_SEED_OFFSET}",
    "replication_seed": "seed_base + replication index",
    "convergence_epoch": "first epoch after which the selected arm never changes for the rest of the run",
}


class ConfigError(ValueError):
    pass


class UnknownPresetError(KeyError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    system: SystemConfig
    slices: tuple
    policies: tuple = ("laco",)
    reps: int = 1
    seed_base: int = 0
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    sweeps: list = field(default_factory=list)  # list of {key: tuple of values}; each expands as a product
    oracle_epochs: int = 20
    chunk_fraction: float | None = None  # chunk = fraction x capacity when capacity is swept
    learner_overrides: dict = field(default_factory=dict)  # policy -> {LearnerConfig field: value}

    def __post_init__(self):
        self.slices = tuple(self.slices)
        for policy, kw in self.learner_overrides.items():
            if policy not in POLICIES:
                raise ConfigError(f"learner override for unknown policy {policy!r}")
            self.learner_for(policy)
        self.policies = tuple(self.policies)
        if not self.slices:
            raise ConfigError("at least one slice is required")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        for p in self.policies:
            if p not in POLICIES:
                raise ConfigError(f"unknown policy {p!r}; choose from {POLICIES}")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.oracle_epochs < 1:
            raise ConfigError("oracle_epochs must be >= 1")
        if self.chunk_fraction is not None and not 0 < self.chunk_fraction <= 1:
            raise ConfigError("chunk_fraction must lie in (0, 1]")
        for sweep in self.sweeps:
            for k, vals in sweep.items():
                if k not in SWEEP_KEYS:
                    raise ConfigError(f"unknown sweep key {k!r}; choose from {SWEEP_KEYS}")
                if len(vals) == 0:
                    raise ConfigError(f"sweep {k!r} has no values")
        ids = [s.id for s in self.slices]
        if len(set(ids)) != len(ids):
            raise ConfigError("slice ids must be unique")


    def learner_for(self, policy: str) -> LearnerConfig:
        try:
            return replace(self.learner, **self.learner_overrides.get(policy, {}))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class Variant:
    label: str
    params: dict
    system: SystemConfig
    slices: tuple


# ---------------------------------------------------------------- presets

def _counterphase() -> ExperimentConfig:
    system = SystemConfig(horizon=500, snr_min_db=20, snr_max_db=36)
    std = math.sqrt(10.0)
    slices = (SliceSpec(0, 20, 24, std, modulation=Sinusoid(8, 40, 200, 0.0)),
              SliceSpec(1, 20, 24, std, modulation=Sinusoid(8, 40, 200, math.pi)))
    # non-stationary load: LACO keeps only the latest model reward per arm
    return ExperimentConfig("counterphase", system, slices, ("laco", "ts", "ucb"),
                            learner_overrides={"laco": {"reward_update": "overwrite"}})


def _chunk_size() -> ExperimentConfig:
    # deterministic static channel: a vanishing Rayleigh scale pins the SNR near 20 dB
    system = SystemConfig(horizon=300, snr_min_db=21.5, snr_max_db=51.5)
    slices = tuple(SliceSpec(i, 20, 17.5, 0.0, rayleigh_scale=1e-6) for i in range(2))
    return ExperimentConfig("chunk_size", system, slices, ("laco",), sweeps=[{"chunk_prbs": (2, 5, 10)}])


def _heatmap() -> ExperimentConfig:
    system = SystemConfig(horizon=500, snr_min_db=20, snr_max_db=36)
    std = math.sqrt(10.0)
    slices = (SliceSpec(0, 10, 10, std), SliceSpec(1, 20, 10, std))
    return ExperimentConfig("heatmap", system, slices, ("laco",),
                            sweeps=[{"alpha": (1, 2, 3, 4, 5), "beta": (1, 2, 3, 4, 5)}])


def _regret_vs_slices() -> ExperimentConfig:
    system = SystemConfig(horizon=2000, chunk_prbs=25, snr_min_db=20, snr_max_db=36)
    slices = (SliceSpec(0, 20, 8, 0.8),)
    return ExperimentConfig("regret_vs_slices", system, slices, ("laco", "ts"),
                            sweeps=[{"num_slices": (2, 3, 4)}])


def _convergence() -> ExperimentConfig:
    system = SystemConfig(horizon=1000, snr_min_db=20, snr_max_db=36)
    # unequal loads and tolerances favour a single best allocation
    slices = (SliceSpec(0, 10, 9, 0.9), SliceSpec(1, 20, 5, 0.5), SliceSpec(2, 30, 3, 0.3), SliceSpec(3, 15, 6, 0.6))
    return ExperimentConfig("convergence", system, slices, ("laco", "ts", "ucb"), chunk_fraction=0.1,
                            sweeps=[{"num_slices": (2, 3, 4), "capacity_prbs": (50, 100)},
                                    {"num_slices": (3,), "rayleigh_scale": (0.1, 0.2, 0.3, 0.4)}])


PRESETS = {
    "counterphase": _counterphase,
    "chunk_size": _chunk_size,
    "heatmap": _heatmap,
    "regret_vs_slices": _regret_vs_slices,
    "convergence": _convergence,
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise UnknownPresetError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# ---------------------------------------------------------------- sweeps

def _apply(system: SystemConfig, slices: tuple, params: dict, chunk_fraction):
    sys_kw = {}
    if "capacity_prbs" in params:
        sys_kw["capacity_prbs"] = int(params["capacity_prbs"])
        if chunk_fraction is not None and "chunk_prbs" not in params:
            sys_kw["chunk_prbs"] = max(1, int(round(chunk_fraction * params["capacity_prbs"])))
    if "chunk_prbs" in params:
        sys_kw["chunk_prbs"] = int(params["chunk_prbs"])
    system = replace(system, **sys_kw)
    if "num_slices" in params:
        n = int(params["num_slices"])
        slices = tuple(replace(slices[k % len(slices)], id=k) for k in range(n))
    slices = list(slices)
    if "alpha" in params:
        slices[0] = replace(slices[0], traffic_mean=10.0 * params["alpha"])
    if "beta" in params:
        slices[0] = replace(slices[0], latency_ms=10.0 * params["beta"])
    if "rayleigh_scale" in params:
        slices = [replace(s, rayleigh_scale=float(params["rayleigh_scale"])) for s in slices]
    if "traffic_mean" in params:
        slices = [replace(s, traffic_mean=float(params["traffic_mean"])) for s in slices]
    return system, tuple(slices)


def _label(params: dict) -> str:
    if not params:
        return "base"
    return "_".join(f"{k}={_fmt(v)}" for k, v in params.items())


def _fmt(v) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def expand(cfg: ExperimentConfig) -> list[Variant]:
    if not cfg.sweeps:
        return [Variant("base", {}, cfg.system, cfg.slices)]
    out, seen = [], set()
    for sweep in cfg.sweeps:
        keys = list(sweep)
        for combo in itertools.product(*(sweep[k] for k in keys)):
            params = dict(zip(keys, combo))
            label = _label(params)
            if label in seen:
                continue
            seen.add(label)
            system, slices = _apply(cfg.system, cfg.slices, params, cfg.chunk_fraction)
            out.append(Variant(label, params, system, slices))
    return out


# ---------------------------------------------------------------- INI round trip

def _parse_value(text: str, type_name: str):
    """Parse one INI value according to a dataclass field annotation such as 'int | None'."""
    text = text.strip()
    kinds = [t.strip() for t in str(type_name).split("|")]
    if "None" in kinds and text.lower() in ("none", ""):
        return None
    base = next(t for t in kinds if t != "None")
    if base == "bool":
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if base == "int":
        v = float(text)
        if not v.is_integer():
            raise ConfigError(f"expected an integer, got {text!r}")
        return int(v)
    if base == "float":
        return float(text)
    return text


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _dataclass_from_section(cls, section, base=None, skip=()):
    kw = {}
    defaults = base if base is not None else cls()
    types = {f.name: f.type for f in dataclasses.fields(cls) if f.init}
    for key, raw in section.items():
        if key not in types or key in skip:
            raise ConfigError(f"unknown key {key!r} in [{section.name}]")
        try:
            kw[key] = _parse_value(raw, types[key])
        except ValueError as exc:
            raise ConfigError(f"[{section.name}] {key}: {exc}") from None
    return replace(defaults, **kw)


def _parse_list(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _number(text: str):
    v = float(text)
    return int(v) if v.is_integer() and "." not in text and "e" not in text.lower() else v


_SLICE_KEYS = ("latency_ms", "traffic_mean", "traffic_std", "throughput_sla", "rayleigh_scale", "modulation")


def _slice_from_section(sid: int, section, base: SliceSpec | None) -> SliceSpec:
    kw = {} if base is None else {k: getattr(base, k) for k in _SLICE_KEYS}
    for key, raw in section.items():
        if key not in _SLICE_KEYS:
            raise ConfigError(f"unknown key {key!r} in [{section.name}]")
        if key == "modulation":
            parts = _parse_list(raw)
            if len(parts) == 0 or parts[0].lower() == "none":
                kw[key] = None
            elif len(parts) in (3, 4):
                kw[key] = Sinusoid(*(float(p) for p in parts))
            else:
                raise ConfigError("modulation takes low, high, period_epochs[, phase]")
        else:
            kw[key] = float(raw)
    missing = [k for k in ("latency_ms", "traffic_mean") if k not in kw]
    if missing:
        raise ConfigError(f"[{section.name}] is missing {', '.join(missing)}")
    return SliceSpec(sid, **kw)


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Build a config from INI text, overlaying it on base when given."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    known = {"experiment", "system", "learner"}
    for sec in cp.sections():
        if sec not in known and not sec.startswith(("slice.", "sweep.", "learner.")):
            raise ConfigError(f"unknown section [{sec}]")
    try:
        system = _dataclass_from_section(SystemConfig, cp["system"], base.system if base else None) \
            if cp.has_section("system") else (base.system if base else SystemConfig())
        learner = _dataclass_from_section(LearnerConfig, cp["learner"], base.learner if base else None) \
            if cp.has_section("learner") else (base.learner if base else LearnerConfig())

        overrides = {k: dict(v) for k, v in base.learner_overrides.items()} if base else {}
        types = {f.name: f.type for f in dataclasses.fields(LearnerConfig) if f.init}
        for sec in cp.sections():
            if sec.startswith("learner."):
                policy = sec.split(".", 1)[1]
                kw = overrides.setdefault(policy, {})
                for key, raw in cp[sec].items():
                    if key not in types:
                        raise ConfigError(f"unknown key {key!r} in [{sec}]")
                    kw[key] = _parse_value(raw, types[key])

        slices = {s.id: s for s in base.slices} if base else {}
        for sec in cp.sections():
            if sec.startswith("slice."):
                sid = int(sec.split(".", 1)[1])
                slices[sid] = _slice_from_section(sid, cp[sec], slices.get(sid))
        sweep_secs = sorted((s for s in cp.sections() if s.startswith("sweep.")), key=lambda s: int(s.split(".")[1]))
        if sweep_secs:
            sweeps = [{k: tuple(_number(v) for v in _parse_list(raw)) for k, raw in cp[s].items()} for s in sweep_secs]
        else:
            sweeps = list(base.sweeps) if base else []

        exp = dict(cp["experiment"]) if cp.has_section("experiment") else {}
        allowed = {"name", "policies", "reps", "seed_base", "oracle_epochs", "chunk_fraction"}
        for k in exp:
            if k not in allowed:
                raise ConfigError(f"unknown key {k!r} in [experiment]")
        name = exp.get("name", base.name if base else "custom").strip()
        policies = _parse_list(exp["policies"]) if "policies" in exp else (base.policies if base else ("laco",))
        reps = int(exp["reps"]) if "reps" in exp else (base.reps if base else 1)
        seed_base = int(exp["seed_base"]) if "seed_base" in exp else (base.seed_base if base else 0)
        oracle_epochs = int(exp["oracle_epochs"]) if "oracle_epochs" in exp else (base.oracle_epochs if base else 20)
        if "chunk_fraction" in exp:
            chunk_fraction = _parse_value(exp["chunk_fraction"], "float | None")
        else:
            chunk_fraction = base.chunk_fraction if base else None
        ordered = tuple(slices[k] for k in sorted(slices))
        return ExperimentConfig(name, system, ordered, policies, reps, seed_base, learner, sweeps,
                                oracle_epochs, chunk_fraction, overrides)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def format_config(cfg: ExperimentConfig) -> str:
    lines = ["[experiment]", f"name = {cfg.name}", f"policies = {', '.join(cfg.policies)}", f"reps = {cfg.reps}",
             f"seed_base = {cfg.seed_base}", f"oracle_epochs = {cfg.oracle_epochs}",
             f"chunk_fraction = {_format_value(cfg.chunk_fraction)}", ""]
    for title, obj in (("system", cfg.system), ("learner", cfg.learner)):
        lines.append(f"[{title}]")
        for f in dataclasses.fields(obj):
            if f.init:
                v = getattr(obj, f.name)
                if v is not None and str(f.type).split("|")[0].strip() == "float":
                    v = float(v)
                lines.append(f"{f.name} = {_format_value(v)}")
        lines.append("")
    for policy, kw in cfg.learner_overrides.items():
        lines.append(f"[learner.{policy}]")
        for k, v in kw.items():
            lines.append(f"{k} = {_format_value(v)}")
        lines.append("")
    for s in cfg.slices:
        lines.append(f"[slice.{s.id}]")
        for k in _SLICE_KEYS:
            v = getattr(s, k)
            if k == "modulation":
                v = "none" if v is None else ", ".join(repr(float(x)) for x in
                                                       (v.low, v.high, v.period_epochs, v.phase))
            else:
                v = repr(float(v))
            lines.append(f"{k} = {v}")
        lines.append("")
    for i, sweep in enumerate(cfg.sweeps):
        lines.append(f"[sweep.{i}]")
        for k, vals in sweep.items():
            lines.append(f"{k} = {', '.join(_format_value(v) for v in vals)}")
        lines.append("")
    return "\n".join(lines)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), base)


def config_dict(cfg: ExperimentConfig) -> dict:
    return {
        "name": cfg.name, "policies": list(cfg.policies), "reps": cfg.reps, "seed_base": cfg.seed_base,
        "oracle_epochs": cfg.oracle_epochs, "chunk_fraction": cfg.chunk_fraction,
        "system": dataclasses.asdict(cfg.system), "learner": dataclasses.asdict(cfg.learner),
        "learner_overrides": cfg.learner_overrides,
        "slices": [dataclasses.asdict(s) for s in cfg.slices],
        "sweeps": [{k: list(v) for k, v in s.items()} for s in cfg.sweeps],
    }


# ---------------------------------------------------------------- runs

def convergence_epoch(arms) -> int:
    """First epoch from which the selected arm stays fixed until the end."""
    a = np.asarray(arms)
    changes = np.nonzero(a[1:] != a[:-1])[0]
    return 0 if len(changes) == 0 else int(changes[-1] + 1)


def regret_bound_check(regret_final: float, means: np.ndarray, horizon: int):
    gaps = means.max() - means
    gaps = gaps[gaps > 1e-9]
    if len(gaps) == 0:
        return None, None
    bound = regret_upper_bound(gaps, horizon)
    return bound, bool(regret_final <= bound)


def _run_task(task):
    variant, policy, learner, rep, seed, means = task
    trace = run_experiment(variant.system, variant.slices, policy, learner=learner, seed=seed)
    totals = trace.totals()
    arms = trace.arms
    N = len(trace.records)
    entry = {
        "variant": variant.label, "policy": policy, "rep": rep, "seed": seed,
        "file": f"{variant.label}__{policy}__rep{rep}.csv",
        **{k: [int(x) for x in v] for k, v in totals.items()},
        "mean_delay_ms": trace.mean_delay_ms(),
        "mean_reward": float(np.mean([r.reward for r in trace.records])),
        "mean_true_reward": float(np.mean([r.true_reward for r in trace.records])),
    }
    if policy != "rr":
        regret = empirical_regret(arms, means)
        bound, ok = regret_bound_check(float(regret[-1]), means, N)
        final = trace.allocations[arms[-1]]
        # the exploited arm is the most played one; a tail window shorter than one
        # re-exploration sweep would pick an arbitrary arm when arms are many
        modal = int(np.bincount(arms).argmax())
        rewards = np.array([r.reward for r in trace.records])
        entry.update({
            "converged_arm": modal,
            "converged_allocation": [int(x) for x in trace.allocations[modal]],
            "converged_reward": float(rewards[arms == modal].mean()),
            "converged_arm_mean": float(means[modal]),
            "regret_at_n": float(regret[-1]), "regret_bound": bound, "bound_ok": ok,
            "regret_curve": [round(float(x), 6) for x in regret],
            "convergence_epoch": convergence_epoch(arms),
            "final_allocation": [int(x) for x in final],
            "final_arm_mean": float(means[arms[-1]]),
        })
    return entry, trace_to_csv(trace)


def _aggregate(runs: list[dict]) -> dict:
    out = {}
    for policy in dict.fromkeys(r["policy"] for r in runs):
        rs = [r for r in runs if r["policy"] == policy]
        agg = {
            "runs": len(rs),
            "dropped_bits": float(np.mean([sum(r["dropped"]) for r in rs])),
            "offered_bits": float(np.mean([sum(r["offered"]) for r in rs])),
            "served_bits": float(np.mean([sum(r["served"]) for r in rs])),
            "mean_delay_ms": float(np.mean([r["mean_delay_ms"] for r in rs])),
            "mean_true_reward": float(np.mean([r["mean_true_reward"] for r in rs])),
        }
        if "regret_at_n" in rs[0]:
            agg["regret_at_n"] = float(np.mean([r["regret_at_n"] for r in rs]))
            agg["convergence_epoch"] = float(np.mean([r["convergence_epoch"] for r in rs]))
            checks = [r["bound_ok"] for r in rs if r["bound_ok"] is not None]
            agg["bound_checks_passed"] = f"{sum(checks)}/{len(checks)}"
        out[policy] = agg
    return out


def run_config(cfg: ExperimentConfig, workers: int = 1):
    """Execute every (variant, policy, replication); returns (summary dict, {filename: csv text})."""
    variants = expand(cfg)
    tasks, variant_info = [], []
    for v in variants:
        means = stationary_arm_means(v.system, v.slices, cfg.seed_base + ORACLE_SEED_OFFSET, cfg.oracle_epochs)
        srt = np.sort(means)[::-1]
        variant_info.append({
            "label": v.label, "params": v.params, "num_arms": len(enumerate_arms(len(v.slices), v.system)),
            "chunk_prbs": v.system.chunk_prbs, "capacity_prbs": v.system.capacity_prbs,
            "num_slices": len(v.slices), "best_arm_mean": float(srt[0]),
            "optimum_margin": float(srt[0] - srt[1]) if len(srt) > 1 else None,
            "best_allocation": [int(x) for x in
                                enumerate_arms(len(v.slices), v.system)[int(np.argmax(means))].allocation],
        })
        for policy in cfg.policies:
            for rep in range(cfg.reps):
                tasks.append((v, policy, cfg.learner_for(policy), rep, cfg.seed_base + rep, means))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    files = {entry["file"]: text for entry, text in results}
    runs = [entry for entry, _ in results]
    for info in variant_info:
        mine = [r for r in runs if r["variant"] == info["label"]]
        info["runs"] = mine
        info["aggregate"] = _aggregate(mine)
    summary = {"config": config_dict(cfg), "documented_defaults": DOCUMENTED_DEFAULTS, "variants": variant_info}
    return summary, files


def report(summary: dict) -> str:
    cfg = summary["config"]
    buf = io.StringIO()
    buf.write(f"experiment {cfg['name']}: {cfg['reps']} replication(s), seeds {cfg['seed_base']}.."
              f"{cfg['seed_base'] + cfg['reps'] - 1}, horizon {cfg['system']['horizon']}\n")
    for v in summary["variants"]:
        buf.write(f"\n[{v['label']}] slices={v['num_slices']} arms={v['num_arms']} chunk={v['chunk_prbs']} "
                  f"best={v['best_allocation']} ({v['best_arm_mean']:.3f})\n")
        buf.write(f"  {'policy':8s} {'dropped Mb':>11s} {'served Mb':>10s} {'delay ms':>9s} {'regret@N':>9s} "
                  f"{'conv ep':>8s} {'bound':>7s}\n")
        for policy, a in v["aggregate"].items():
            regret = f"{a['regret_at_n']:9.1f}" if "regret_at_n" in a else f"{'-':>9s}"
            conv = f"{a['convergence_epoch']:8.1f}" if "convergence_epoch" in a else f"{'-':>8s}"
            bound = a.get("bound_checks_passed", "-")
            buf.write(f"  {policy:8s} {a['dropped_bits'] / 1e6:11.2f} {a['served_bits'] / 1e6:10.1f} "
                      f"{a['mean_delay_ms']:9.3f} {regret} {conv} {bound:>7s}\n")
    return buf.getvalue()


def write_outputs(out_dir, summary: dict, files: dict) -> list[Path]:
    """Stage every file next to the target and rename into place; nothing is left behind on failure."""
    out = Path(out_dir)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory {out} does not exist")
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        payload = dict(files)
        payload["summary.json"] = json.dumps(summary, indent=2, default=_json_default)
        payload["report.txt"] = report(summary)
        for name, text in payload.items():
            (staging / name).write_text(text)
        written = []
        for name in payload:
            os.replace(staging / name, out / name)
            written.append(out / name)
        return written
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")
