"""``expograph`` command line: one subcommand per experiment, CSV/DOT/JSONL artifacts."""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import analysis, dissemination, envlab, losses, runtime, topology
from .config import ConfigError, ExperimentConfig, derive_seed, parse_config, parse_overrides

SUBCOMMANDS = ("topology", "analyze", "disseminate", "gossip", "losses-selfcheck", "train", "evaluate", "transfer")
OUT_ENV = "EXPOGRAPH_OUT"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    if v is None:
        return ""
    return str(v)


class Run:
    def __init__(self, cfg: ExperimentConfig, out: Path, jobs: int = 1):
        self.cfg = cfg
        self.out = out
        self.jobs = jobs
        self.digest = cfg.digest()
        self.written: list[Path] = []

    def wants(self, fmt: str) -> bool:
        return fmt in self.cfg.output.formats

    def _emit(self, name: str, text: str, summary: str, comment: str | None = "#") -> Path:
        """Write an artifact; ``comment`` prefixes the digest header line (None: no header)."""
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        header = f"{comment} config_sha256={self.digest}\n" if comment else ""
        path.write_text(header + text)
        self.written.append(path)
        print(f"wrote {path}: {summary}")
        return path

    def csv(self, name: str, header, rows, notes=()) -> Path:
        buf = io.StringIO()
        for note in notes:
            buf.write(f"# {note}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        rows = list(rows)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        return self._emit(name, buf.getvalue(), f"{len(rows)} rows")

    def text(self, name: str, body: str, summary: str, comment: str | None = "#") -> Path:
        return self._emit(name, body, summary, comment)

    def jsonl(self, name: str, records, summary: str) -> Path:
        header = json.dumps({"config_sha256": self.digest}) + "\n"
        return self._emit(name, header + runtime.dumps_jsonl(records), summary, comment=None)

    def seed(self, module: str, index: int = 0) -> int:
        return derive_seed(self.cfg.experiment.seed, module, index)

    def pmap(self, fn, items):
        items = list(items)
        if self.jobs <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ProcessPoolExecutor(max_workers=self.jobs) as pool:
            return list(pool.map(fn, items))


def schedule_from_config(cfg: ExperimentConfig, n: int | None = None) -> topology.TopologySchedule:
    t = cfg.topology
    n = t.n if n is None else n
    params = {}
    if t.kind == "er_k_in_regular":
        params = dict(k=t.k, seed=t.seed, er_mode=t.er_mode)
    elif t.kind == "distance_top_k":
        params = dict(k=t.k, position_seed=t.position_seed)
    return topology.make_schedule(t.kind, n, **params)


def _horizon(cfg: ExperimentConfig, n: int) -> int:
    return cfg.runtime.horizon or envlab.default_horizon(n)


def _steps_to_show(sched, cfg) -> int:
    return sched.period if sched.period else _horizon(cfg, sched.n)


def cmd_topology(run: Run) -> None:
    sched = schedule_from_config(run.cfg)
    steps = _steps_to_show(sched, run.cfg)
    if run.wants("dot"):
        body = "".join(topology.to_dot(sched.at(t), name=f"t{t}") for t in range(steps))
        run.text("topology.dot", body, f"{steps} digraph(s), n={sched.n}", comment="//")
    if run.wants("adjlist"):
        body = "".join(f"# t={t}\n" + topology.to_adjacency_list(sched.at(t)) for t in range(steps))
        run.text("topology.adj", body, f"{steps} timestep(s)")


def cmd_analyze(run: Run) -> None:
    cfg = run.cfg
    sched = schedule_from_config(cfg)
    horizon = _horizon(cfg, sched.n)
    rows = []
    for t0 in range(_steps_to_show(sched, cfg)):
        adj = sched.at(t0)
        if sched.period == 1:
            value = analysis.diameter(adj)
        else:
            try:
                value = analysis.time_to_full_reach(sched, t0)
            except analysis.NotReached:
                value = None
        rows.append((sched.kind, sched.n, cfg.topology.k, t0, "unreachable" if value is None else value, analysis.graph_size(adj)))
    run.csv("metrics.csv", ("topology", "n", "k", "t0", "diameter_or_ttfr", "size"), rows)

    per_step = [runtime.budget_per_step(sched, t) for t in range(horizon)]
    size_note = analysis.static_size_report(sched.n)
    notes = [
        f"static exponential n={sched.n}: generated size {size_note['generated']} non-self edges per step; "
        f"closed form N*floor(log2(N-1)) gives {size_note['stated']}"
    ]
    run.csv(
        "budget.csv",
        ("topology", "n", "horizon", "budget", "per_step_min", "per_step_max"),
        [(sched.kind, sched.n, horizon, sum(per_step), min(per_step), max(per_step))],
        notes=notes,
    )


def _spread_seed(args):
    spread_cfg, seed = args
    return dissemination.fig2_experiment(
        dissemination.SpreadConfig(spread_cfg.n, spread_cfg.budgets, spread_cfg.families, (seed,), spread_cfg.sources, spread_cfg.max_t, spread_cfg.er_mode)
    )


def cmd_disseminate(run: Run) -> None:
    d, t = run.cfg.dissemination, run.cfg.topology
    seeds = tuple(run.seed("dissemination", i) for i in range(d.seeds))
    spread_cfg = dissemination.SpreadConfig(
        n=d.n,
        budgets=tuple(d.budgets) if d.budgets else None,
        families=tuple(d.families),
        seeds=seeds,
        sources=d.sources,
        max_t=d.max_t,
        er_mode=t.er_mode,
    ).resolved()
    order = {s: i for i, s in enumerate(seeds)}
    rows = [r for part in run.pmap(_spread_seed, [(spread_cfg, s) for s in seeds]) for r in part]
    rows.sort(key=lambda r: (-r[2], r[0], order[r[3]], r[4], r[5]))
    run.csv("dissemination.csv", dissemination.SPREAD_COLUMNS, rows)
    if d.frames:
        frame_rows = []
        for k in spread_cfg.budgets:
            for fam in spread_cfg.families:
                sched = topology.budget_class_schedule(fam, d.n, k, seeds[0], er_mode=t.er_mode)
                trace = dissemination.simulate_spread(sched, 0, spread_cfg.max_t, frames=True)
                for step, covered in enumerate(trace.frames):
                    frame_rows += [(sched.kind, k, seeds[0], 0, step, j, bool(c)) for j, c in enumerate(covered)]
        run.csv("frames.csv", ("topology", "k", "seed", "source", "t", "agent", "covered"), frame_rows)


def cmd_gossip(run: Run) -> None:
    cfg = run.cfg
    sched = schedule_from_config(cfg)
    steps = cfg.gossip.steps if cfg.gossip.steps is not None else analysis.ceil_log2(sched.n)
    rows = []
    for i in range(cfg.gossip.seeds):
        seed = run.seed("gossip", i)
        x0 = np.random.default_rng(seed).standard_normal(sched.n)
        trace = analysis.gossip_consensus(sched, x0, steps)
        rows += [(sched.kind, sched.n, seed, t, err) for t, err in enumerate(trace.consensus_error)]
    run.csv("gossip.csv", ("topology", "n", "seed", "t", "consensus_error"), rows)


def losses_selfcheck(cfg: ExperimentConfig, seed: int = 0, points: int = 100) -> list[tuple[str, bool, str]]:
    """Invariant suite for the loss kernels: ``(check, passed, detail)`` rows."""
    lc = cfg.loss_config()
    rng = np.random.default_rng(seed)
    m, d = lc.m_negatives, cfg.runtime.message_dim
    out = []
    same = np.ones(d) / np.sqrt(d)
    uniform = losses.infonce_loss(losses.ContrastiveBatch(same, same, np.tile(same, (m, 1))), lc.tau)
    out.append(("infonce uniform = ln(M+1)", abs(uniform - np.log(m + 1)) <= 1e-9, f"{uniform:.12g} vs {np.log(m + 1):.12g}"))
    worst_scale = worst_grad = worst_aux = 0.0
    for _ in range(points):
        x = rng.standard_normal((m + 2) * d)
        batch = losses.ContrastiveBatch(x[:d], x[d : 2 * d], x[2 * d :].reshape(m, d))
        scaled = losses.ContrastiveBatch(batch.anchor * 10, batch.positive * 0.3, batch.negatives * rng.uniform(0.1, 10, (m, 1)))
        worst_scale = max(worst_scale, abs(losses.infonce_loss(batch, lc.tau) - losses.infonce_loss(scaled, lc.tau)))
        f, g = losses.infonce_flat((m, d), lc.tau)
        worst_grad = max(worst_grad, losses.finite_diff_check(f, g, x, 1e-5))
        s, p = rng.standard_normal((4, d)), rng.standard_normal((4, d))
        worst_aux = max(
            worst_aux,
            losses.finite_diff_check(lambda q: losses.aux_pred_loss(s, q.reshape(4, d)), lambda q: losses.aux_pred_loss_grad(s, q.reshape(4, d)).ravel(), p.ravel(), 1e-5),
        )
    out.append(("infonce scale invariance", worst_scale <= 1e-9, f"max |dL| = {worst_scale:.3g}"))
    out.append(("infonce gradient vs central differences", worst_grad <= 1e-5, f"max rel err = {worst_grad:.3g}"))
    out.append(("aux_pred gradient vs central differences", worst_aux <= 1e-5, f"max rel err = {worst_aux:.3g}"))
    out.append(("total loss td + alpha*aux", abs(losses.total_loss(1.0, 2.0, lc.alpha) - (1.0 + 2.0 * lc.alpha)) < 1e-15, f"alpha={lc.alpha}"))
    return out


def cmd_losses_selfcheck(run: Run) -> None:
    report = losses_selfcheck(run.cfg, run.seed("losses"))
    lines = [f"{'PASS' if ok else 'FAIL'}  {name}: {detail}" for name, ok, detail in report]
    for line in lines:
        print(line)
    run.text("losses_selfcheck.txt", "\n".join(lines) + "\n", f"{sum(ok for _, ok, _ in report)}/{len(report)} checks passed")
    if not all(ok for _, ok, _ in report):
        raise RuntimeError("loss self-check failed")


def _train_config(cfg: ExperimentConfig) -> envlab.TrainConfig:
    tr = cfg.training
    return envlab.TrainConfig(
        loss=cfg.loss_config(),
        episodes=tr.episodes,
        lr=tr.lr,
        eps_start=tr.eps_start,
        eps_end=tr.eps_end,
        eps_anneal=tr.eps_anneal,
        target_interval=tr.target_interval,
        eval_episodes=tr.eval_episodes,
        checkpoints=tr.checkpoints,
        buckets=tr.buckets,
        mode=tr.features,
        shared=tr.shared,
    )


def _train_one(args):
    cfg, seed = args
    sched = schedule_from_config(cfg)
    return envlab.train_iql(envlab.EnvConfig(sched.n, cfg.runtime.horizon), sched, _train_config(cfg), seed)


def policy_to_json(policy: envlab.TabularPolicy, digest: str | None = None) -> str:
    table = [[list(k), [float(v) for v in q]] for k, q in sorted(policy.q.items())]
    data = {"buckets": policy.buckets, "mode": policy.mode, "shared": policy.shared, "q": table}
    if digest:
        data["config_sha256"] = digest
    return json.dumps(data, sort_keys=True) + "\n"


def policy_from_json(text: str) -> envlab.TabularPolicy:
    data = json.loads(text)
    q = {tuple(k): np.array(v, dtype=float) for k, v in data["q"]}
    return envlab.TabularPolicy(data["buckets"], data["mode"], data["shared"], q)


def cmd_train(run: Run) -> None:
    cfg = run.cfg
    results = run.pmap(_train_one, [(cfg, run.seed("train", r)) for r in range(cfg.training.runs)])
    rows = []
    for r, (policy, curve) in enumerate(results):
        rows += [(r, p.episode, p.eval_reward, p.td_loss, p.aux_loss, p.epsilon) for p in curve]
        run.text(f"policy_run{r}.json", policy_to_json(policy, run.digest), f"{len(policy.q)} table entries", comment=None)
    run.csv("training.csv", ("run_id", "episode", "eval_reward", "td_loss", "aux_loss", "epsilon"), rows)


def _make_policy(name: str, path: str | None = None):
    if name == "scripted":
        return envlab.ScriptedCountPolicy()
    if name == "own_bit":
        return envlab.OwnBitPolicy()
    if name == "random":
        return envlab.RandomPolicy()
    return policy_from_json(Path(path).read_text())


def cmd_evaluate(run: Run) -> None:
    cfg = run.cfg
    sched = schedule_from_config(cfg)
    env_cfg = envlab.EnvConfig(sched.n, cfg.runtime.horizon)
    policy = _make_policy(cfg.evaluate.policy, cfg.evaluate.policy_path)
    seed = run.seed("evaluate")
    res = envlab.evaluate(policy, env_cfg, sched, episodes=cfg.evaluate.episodes, seed=seed)
    run.csv(
        "evaluation.csv",
        ("policy", "topology", "n", "horizon", "episodes", "mean_reward", "stderr"),
        [(cfg.evaluate.policy, sched.kind, sched.n, env_cfg.T, res.episodes, res.mean, res.stderr)],
    )
    if run.wants("jsonl"):
        env = envlab.MajorityBitEnv(sched.n, env_cfg.T)
        agg = envlab.majority_aggregator(sched.n)
        buffer, budget = runtime.run_episode(env, policy.bind(sched.n, env_cfg.T, sched), sched, agg, env_cfg.T, [seed, 0])
        records = runtime.episode_trace_records(buffer, budget, sched.n, agg.coverage)
        run.jsonl("trace.jsonl", records, f"{len(records)} steps")


def cmd_transfer(run: Run) -> None:
    cfg = run.cfg
    from_n = cfg.topology.n
    seed = run.seed("transfer")
    rows = []
    for name in cfg.transfer.policies:
        if name == "tabular":
            policy, _ = _train_one((cfg, run.seed("train", 0)))
        else:
            policy = envlab.ScriptedCountPolicy()
        for to_n in cfg.transfer.to_n:
            schedule_params = {}
            if cfg.topology.kind == "er_k_in_regular":
                schedule_params = dict(k=min(cfg.topology.k, to_n - 1), seed=cfg.topology.seed, er_mode=cfg.topology.er_mode)
            elif cfg.topology.kind == "distance_top_k":
                schedule_params = dict(k=min(cfg.topology.k, to_n - 1), position_seed=cfg.topology.position_seed)
            res = envlab.zero_shot_transfer(policy, from_n, to_n, cfg.topology.kind, cfg.transfer.episodes, seed, **schedule_params)
            rows.append((res.from_n, res.to_n, res.topology, res.reward, name))
    run.csv("transfer.csv", ("from_n", "to_n", "topology", "reward", "policy"), rows)


COMMANDS = {
    "topology": cmd_topology,
    "analyze": cmd_analyze,
    "disseminate": cmd_disseminate,
    "gossip": cmd_gossip,
    "losses-selfcheck": cmd_losses_selfcheck,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "transfer": cmd_transfer,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="expograph", description="Exponential-graph communication laboratory.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, help="global base seed")
    p.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else output.directory)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    return p


def dispatch(subcommand: str, cfg: ExperimentConfig, out: Path, jobs: int = 1) -> Run:
    run = Run(cfg, out, jobs)
    run.text("config.resolved.yaml", yaml.safe_dump(cfg.to_dict(), sort_keys=True), "resolved config")
    COMMANDS[subcommand](run)
    return run


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = parse_overrides(args.overrides)
        if args.seed is not None:
            overrides.append(("experiment.seed", args.seed))
        cfg = parse_config(args.config, overrides)
        out = Path(args.out or os.environ.get(OUT_ENV) or cfg.output.directory)
        if args.jobs < 1:
            raise ConfigError("--jobs", "must be >= 1")
        dispatch(args.subcommand, cfg, out, args.jobs)
    except Exception as exc:  # every failure becomes one machine-readable record
        record = {"error": type(exc).__name__, "message": str(exc), "subcommand": args.subcommand}
        if isinstance(exc, ConfigError):
            record["key"] = exc.key
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
