"""Experiment orchestration over (environment roster x agent x replication).

Each (environment, replication) cell runs every configured agent plus one
never-treat companion on a shared environment-noise stream, so deltas are
paired. Seeds derive only from (master seed, environment index, replication,
purpose, agent name digest); adding or removing agents never changes another
agent's trajectories.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .agents import AgentConfig, make_agent
from .causal_env import (EnvParams, VariantSpec, ZeroPolicy,
                         default_interaction_coeffs, load_env, make_variant,
                         rollout)

PURPOSE_ENV_NOISE = 0
PURPOSE_AGENT_STREAM = 1

ZERO_LABEL = "zero_policy"

CSV_HEADER = "agent,env,replication,total_reward,delta_vs_zero"


def _name_digest(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "big")


@dataclass(frozen=True)
class ExperimentConfig:
    env_paths: tuple[str, ...]
    agents: tuple[AgentConfig, ...]
    variant: VariantSpec | None = None
    horizon_D: int = 252
    replications: int = 100
    master_seed: int = 0
    output_dir: str | None = None
    plot: bool = False
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "env_paths", tuple(str(p) for p in self.env_paths))
        object.__setattr__(self, "agents", tuple(self.agents))
        if not self.env_paths:
            raise ValueError("at least one environment file is required")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        max_warmup = max(a.warmup_L for a in self.agents) if self.agents else 1
        if self.horizon_D < max_warmup:
            raise ValueError("horizon must cover the warm-up period")
        names = [a.display_name for a in self.agents]
        if len(set(names)) != len(names):
            raise ValueError(f"agent names must be unique, got {names}")
        if ZERO_LABEL in names:
            raise ValueError(f"{ZERO_LABEL!r} is reserved")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        payload = json.loads(path.read_text())
        known = {"envs", "agents", "variant", "horizon_D", "replications",
                 "master_seed", "output_dir", "plot", "workers"}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        env_paths = [str((path.parent / p).resolve()) if not os.path.isabs(p) else p
                     for p in payload["envs"]]
        agents = tuple(AgentConfig.from_dict(a) for a in payload["agents"])
        variant = VariantSpec.from_dict(payload["variant"]) \
            if payload.get("variant") else None
        return cls(env_paths=env_paths, agents=agents, variant=variant,
                   horizon_D=int(payload.get("horizon_D", 252)),
                   replications=int(payload.get("replications", 100)),
                   master_seed=int(payload.get("master_seed", 0)),
                   output_dir=payload.get("output_dir"),
                   plot=bool(payload.get("plot", False)),
                   workers=int(payload.get("workers", 1)))


@dataclass(frozen=True)
class CellResult:
    agent: str
    env: str
    replication: int
    total_reward: float
    delta_vs_zero: float


@dataclass(frozen=True)
class CellError:
    env: str
    replication: int
    message: str


@dataclass
class ResultsTable:
    rows: list[CellResult] = field(default_factory=list)
    daily: dict[str, np.ndarray] = field(default_factory=dict)  # agent -> (reps, D)
    errors: list[CellError] = field(default_factory=list)
    agent_names: tuple[str, ...] = ()
    env_names: tuple[str, ...] = ()
    replications: int = 0

    def delta_by_replication(self, agent: str) -> np.ndarray:
        """Replication vector of roster-averaged deltas for one agent."""
        out = np.full((self.replications, len(self.env_names)), np.nan)
        env_idx = {e: i for i, e in enumerate(self.env_names)}
        for row in self.rows:
            if row.agent == agent:
                out[row.replication, env_idx[row.env]] = row.delta_vs_zero
        if np.any(np.isnan(out)):
            raise ValueError(f"missing cells for agent {agent!r}")
        return out.mean(axis=1)


def _env_labels(paths) -> list[str]:
    stems = [Path(p).stem for p in paths]
    seen: dict[str, int] = {}
    labels = []
    for stem in stems:
        if stems.count(stem) > 1:
            seen[stem] = seen.get(stem, -1) + 1
            labels.append(f"{stem}_{seen[stem]}")
        else:
            labels.append(stem)
    return labels


def _resolve_env(config: ExperimentConfig, env_idx: int) -> EnvParams:
    params = load_env(config.env_paths[env_idx])
    spec = config.variant
    if spec is None:
        return params
    if spec.kind == "interaction_MA" and spec.coeffs is None:
        if spec.xi == 0:
            raise ValueError("interaction_MA needs coefficients or a nonzero xi")
        spec = replace(spec, coeffs={"theta_M":
                                     default_interaction_coeffs(params, spec.xi)})
    return make_variant(params, spec)


def _run_cell(config: ExperimentConfig, env_idx: int, rep: int):
    """One (environment, replication): the zero companion plus every agent,
    all on the same environment-noise stream."""
    params = _resolve_env(config, env_idx)
    master = config.master_seed

    def env_rng() -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence((master, env_idx, rep, PURPOSE_ENV_NOISE)))

    zero_traj = rollout(params, ZeroPolicy(), config.horizon_D, env_rng())
    zero_total = zero_traj.total_reward()
    results = {}
    for acfg in config.agents:
        name = acfg.display_name
        agent = make_agent(acfg, params.K)
        agent.reseed(np.random.SeedSequence(
            (master, env_idx, rep, PURPOSE_AGENT_STREAM, _name_digest(name))))
        traj = rollout(params, agent, config.horizon_D, env_rng())
        results[name] = (traj.total_reward(), traj.R - zero_traj.R)
    return env_idx, rep, zero_total, results


def _run_cell_task(args):
    config, env_idx, rep = args
    try:
        return _run_cell(config, env_idx, rep), None
    except Exception as exc:  # noqa: BLE001 - cell failures are recorded
        return None, (env_idx, rep, f"{type(exc).__name__}: {exc}")


def run_experiment(config: ExperimentConfig) -> ResultsTable:
    labels = _env_labels(config.env_paths)
    agent_names = tuple(a.display_name for a in config.agents)
    table = ResultsTable(agent_names=agent_names, env_names=tuple(labels),
                         replications=config.replications)
    tasks = [(config, e, r) for e in range(len(config.env_paths))
             for r in range(config.replications)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_run_cell_task, tasks, chunksize=1))
    else:
        outcomes = [_run_cell_task(t) for t in tasks]

    daily_cells: dict[str, np.ndarray] = {
        name: np.full((config.replications, len(labels), config.horizon_D), np.nan)
        for name in agent_names
    }
    for outcome, error in outcomes:
        if error is not None:
            env_idx, rep, message = error
            table.errors.append(CellError(env=labels[env_idx], replication=rep,
                                          message=message))
            continue
        env_idx, rep, zero_total, results = outcome
        for name, (total, daily_delta) in results.items():
            table.rows.append(CellResult(agent=name, env=labels[env_idx],
                                         replication=rep, total_reward=total,
                                         delta_vs_zero=total - zero_total))
            daily_cells[name][rep, env_idx] = daily_delta
    table.rows.sort(key=lambda r: (r.agent, r.env, r.replication))
    if not table.errors:
        for name in agent_names:
            table.daily[name] = np.cumsum(daily_cells[name].mean(axis=1), axis=1)
    return table


@dataclass(frozen=True)
class AgentSummary:
    mean: float
    se: float
    ci_low: float
    ci_high: float
    n: int


def summarize(results: ResultsTable) -> dict[str, AgentSummary]:
    """Normal-approximation summaries of roster-averaged deltas."""
    out = {}
    for name in results.agent_names:
        deltas = results.delta_by_replication(name)
        n = deltas.shape[0]
        if n < 2:
            raise ValueError("confidence intervals need at least 2 replications")
        mean = float(deltas.mean())
        se = float(deltas.std(ddof=1) / np.sqrt(n))
        out[name] = AgentSummary(mean=mean, se=se, ci_low=mean - 1.96 * se,
                                 ci_high=mean + 1.96 * se, n=n)
    return out


def paired_one_sided_p(results: ResultsTable, better: str, worse: str) -> float:
    """P-value for mean delta(better) > mean delta(worse), paired by replication."""
    a = results.delta_by_replication(better)
    b = results.delta_by_replication(worse)
    stat = stats.ttest_rel(a, b, alternative="greater")
    return float(stat.pvalue)


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_outputs(results: ResultsTable, out_dir, plot: bool = False) -> dict[str, Path]:
    """Write results.csv, summary.json, daily.npz and optional plots."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}

    csv_path = out_dir / "results.csv"
    lines = [CSV_HEADER]
    for row in results.rows:
        lines.append(",".join([row.agent, row.env, str(row.replication),
                               _fmt(row.total_reward), _fmt(row.delta_vs_zero)]))
    csv_path.write_text("\n".join(lines) + "\n")
    written["results"] = csv_path

    summary_path = out_dir / "summary.json"
    if results.rows:
        summary = {name: {"mean": s.mean, "se": s.se,
                          "ci": [s.ci_low, s.ci_high], "n": s.n}
                   for name, s in summarize(results).items()}
    else:
        summary = {}
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written["summary"] = summary_path

    if results.daily:
        daily_path = out_dir / "daily.npz"
        np.savez(daily_path, **results.daily)
        written["daily"] = daily_path

    if results.errors:
        err_path = out_dir / "errors.json"
        err_path.write_text(json.dumps(
            [{"env": e.env, "replication": e.replication, "message": e.message}
             for e in results.errors], indent=2) + "\n")
        written["errors"] = err_path

    if plot and results.daily:
        written["plot"] = plot_daily(results.daily, out_dir / "comparison.png")
    return written


def plot_daily(daily: dict[str, np.ndarray], out_path) -> Path:
    """Mean cumulative delta per agent with a 95% band over replications."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for name in sorted(daily):
        series = daily[name]
        days = np.arange(1, series.shape[1] + 1)
        mean = series.mean(axis=0)
        se = series.std(axis=0, ddof=1) / np.sqrt(series.shape[0])
        ax.plot(days, mean, label=name)
        ax.fill_between(days, mean - 1.96 * se, mean + 1.96 * se, alpha=0.2)
    ax.set_xlabel("day")
    ax.set_ylabel("cumulative reward minus never-treat")
    ax.legend()
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_from_csv(csv_path, out_path=None) -> Path:
    """Plot from emitted artifacts: daily curves when daily.npz sits next to
    the CSV, otherwise a per-agent summary with error bars."""
    csv_path = Path(csv_path)
    out_path = Path(out_path) if out_path else csv_path.with_name("comparison.png")
    daily_path = csv_path.with_name("daily.npz")
    if daily_path.exists():
        with np.load(daily_path) as data:
            return plot_daily({k: data[k] for k in data.files}, out_path)

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    per_agent: dict[str, list[float]] = {}
    lines = csv_path.read_text().strip().splitlines()
    if lines[0] != CSV_HEADER:
        raise ValueError("unrecognized results file")
    for line in lines[1:]:
        agent, _env, _rep, _total, delta = line.split(",")
        per_agent.setdefault(agent, []).append(float(delta))
    names = sorted(per_agent)
    means = [float(np.mean(per_agent[n])) for n in names]
    ses = [float(np.std(per_agent[n], ddof=1) / np.sqrt(len(per_agent[n])))
           for n in names]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(names, means, yerr=[1.96 * s for s in ses], capsize=4)
    ax.set_ylabel("total reward minus never-treat")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def compare_states_config(config: ExperimentConfig, xi: float = 0.6) -> ExperimentConfig:
    """Swap the agent list for the three state-construction learners and force
    the mediator-interaction variant (deriving default interaction
    coefficients per environment when none are configured)."""
    agents = tuple(AgentConfig(kind="brlsvi", state_kind=sk)
                   for sk in ("S_prime", "S_doubleprime", "S_tripleprime"))
    variant = config.variant
    if variant is None or variant.kind != "interaction_MA":
        variant = VariantSpec(kind="interaction_MA", xi=xi)
    return replace(config, agents=agents, variant=variant)
