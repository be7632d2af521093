"""Scenario execution front-end: train, evaluate, compare and gen-demand.

Every run writes a manifest first (resolved config, seed, version,
planned outputs) and finalizes it with the wall-clock duration at exit,
so results are reproducible from the manifest alone. Failures exit
nonzero with a single machine-parsable `error:<category>: message` line.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from fleetpool import __version__
from fleetpool.config import (ConfigError, ScenarioConfig, default_scenario, load_config,
                              VARIANTS)
from fleetpool.demand import DemandError, GoodsWorkloadConfig, PassengerWorkloadConfig, \
    GoodsGenerator, PassengerGenerator, write_requests_csv
from fleetpool.dispatch import QFunction, DispatchError
from fleetpool.sim import Engine, run_baseline_matrix
from fleetpool.city import build_grid, GridConfig
from fleetpool.config import STREAMS


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


# ---------------------------------------------------------------------------
# checkpoint io
# ---------------------------------------------------------------------------

def save_checkpoint(path: str, q: QFunction, encoder_layout: dict, n_actions: int) -> None:
    meta = {"format_version": 1, "layout": encoder_layout, "n_actions": n_actions,
            "hidden": list(q.hidden), "package_version": __version__}
    arrays = q.to_arrays()
    np.savez(path, meta=json.dumps(meta), **arrays)


def load_checkpoint(path: str, encoder_layout: dict, n_actions: int, lr: float) -> QFunction:
    try:
        data = np.load(path, allow_pickle=False)
    except OSError as exc:
        raise CliError("checkpoint", f"cannot read checkpoint {path}: {exc}")
    meta = json.loads(str(data["meta"]))
    stored = meta["layout"]
    if stored != encoder_layout or meta["n_actions"] != n_actions:
        raise CliError(
            "checkpoint",
            f"checkpoint layout {stored} (actions={meta['n_actions']}) does not match "
            f"scenario layout {encoder_layout} (actions={n_actions})")
    n_features = 4 + 2 * stored["horizon"] * stored["width"] * stored["height"]
    q = QFunction(n_features, n_actions, hidden=tuple(meta["hidden"]), lr=lr)
    q.load_arrays({k: data[k] for k in data.files if k != "meta"})
    return q


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

class Manifest:
    def __init__(self, out_dir: Path, cfg: ScenarioConfig, command: str):
        self.path = out_dir / "manifest.json"
        self.data = {
            "command": command,
            "version": __version__,
            "seed": cfg.sim.seed,
            "config": cfg.to_dict(),
            "outputs": {},
            "wall_clock_sec": None,
        }
        self._t0 = time.time()
        self.write()

    def add_output(self, name: str, path: Path) -> None:
        self.data["outputs"][name] = str(path)

    def write(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, default=float)

    def finalize(self) -> None:
        self.data["wall_clock_sec"] = time.time() - self._t0
        self.write()
        for name, p in self.data["outputs"].items():
            if not Path(p).exists():
                raise CliError("io", f"declared output {name} missing at {p}")


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _load_scenario(args) -> ScenarioConfig:
    try:
        cfg = load_config(args.config) if args.config else default_scenario()
    except FileNotFoundError as exc:
        raise CliError("io", str(exc))
    except ConfigError as exc:
        raise CliError("config", str(exc))
    if args.seed is not None:
        cfg.sim.seed = args.seed
    if args.days is not None:
        cfg.sim.days = args.days
    if getattr(args, "fleet_size", None) is not None:
        cfg.fleet.size = args.fleet_size
    if getattr(args, "variant", None) is not None:
        cfg.sim.variant = args.variant
    try:
        cfg.validate()
    except ConfigError as exc:
        raise CliError("config", str(exc))
    return cfg


def _parse_policy(spec: str) -> tuple[str, str | None]:
    if spec.startswith("dqn:"):
        return "dqn", spec.split(":", 1)[1]
    if spec in ("dqn", "random", "nearest-demand"):
        return spec, None
    raise CliError("usage", f"unknown policy {spec!r} "
                            "(expected dqn:<checkpoint>, random or nearest-demand)")


def _jsonl_sink(path: Path):
    fh = open(path, "w", encoding="utf-8")

    def sink(event: dict) -> None:
        fh.write(json.dumps(event, default=float) + "\n")

    return sink, fh


def _build_policy_q(cfg: ScenarioConfig, policy_name: str, ckpt: str | None):
    if policy_name != "dqn":
        return None
    if ckpt is None:
        raise CliError("usage", "dqn policy needs a checkpoint: use --policy dqn:<path>")
    engine_probe = Engine(cfg, policy_name="nearest-demand")
    layout = engine_probe.encoder.layout()
    return load_checkpoint(ckpt, layout, engine_probe.action_grid.n_actions, cfg.dispatch.lr)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _load_scenario(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir, cfg, "train")
    engine = Engine(cfg, policy_name="dqn", training=True)
    print(f"[train] seed={cfg.sim.seed} days={cfg.sim.days} fleet={cfg.fleet.size} "
          f"steps={cfg.sim.total_steps}")
    engine.run()
    ckpt = out_dir / "checkpoint.npz"
    save_checkpoint(str(ckpt), engine.q, engine.encoder.layout(),
                    engine.action_grid.n_actions)
    loss_csv = out_dir / "td_loss.csv"
    with open(loss_csv, "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for step, loss in engine.loss_log:
            fh.write(f"{step},{loss!r}\n")
    manifest.add_output("checkpoint", ckpt)
    manifest.add_output("td_loss", loss_csv)
    manifest.finalize()
    n = len(engine.loss_log)
    if n:
        q1 = np.mean([l for _, l in engine.loss_log[:max(1, n // 4)]])
        q4 = np.mean([l for _, l in engine.loss_log[-max(1, n // 4):]])
        print(f"[train] {n} updates, first-quarter loss {q1:.4f}, last-quarter {q4:.4f}")
    print(f"[train] checkpoint -> {ckpt}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_scenario(args)
    policy_name, ckpt = _parse_policy(args.policy)
    q = _build_policy_q(cfg, policy_name, ckpt)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir, cfg, "evaluate")
    events_path = out_dir / "events.jsonl"
    sink, fh = _jsonl_sink(events_path)
    engine = Engine(cfg, policy_name=policy_name, q=q, event_sink=sink)
    print(f"[evaluate] policy={policy_name} seed={cfg.sim.seed} days={cfg.sim.days}")
    report = engine.run()
    fh.close()
    metrics_path = out_dir / "metrics.csv"
    report.to_csv(str(metrics_path))
    manifest.add_output("metrics", metrics_path)
    manifest.add_output("events", events_path)
    manifest.finalize()
    s = report.summary()
    print(f"[evaluate] accepted={s['accepted']} rejected={s['rejected']} "
          f"occupancy={s['occupancy_rate']:.3f} profit/veh/day="
          f"{s['avg_daily_profit_per_vehicle']:.2f}")
    return 0


SUMMARY_COLS = ["accepted", "rejected", "profit", "avg_daily_profit_per_vehicle",
                "cruising_min", "occupancy_rate"]


def cmd_compare(args) -> int:
    cfg = _load_scenario(args)
    policy_name, ckpt = _parse_policy(args.policy)
    q = _build_policy_q(cfg, policy_name, ckpt)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir, cfg, "compare")
    print(f"[compare] 4 variants, policy={policy_name} seed={cfg.sim.seed} "
          f"days={cfg.sim.days}")
    reports = run_baseline_matrix(cfg, policy_name=policy_name, q=q)
    table_path = out_dir / "summary.csv"
    with open(table_path, "w", encoding="utf-8") as fh:
        hop_keys = sorted({k for r in reports.values() for k in r.hop_histogram})
        fh.write("variant," + ",".join(SUMMARY_COLS)
                 + "," + ",".join(f"hops_{h}" for h in hop_keys) + "\n")
        for variant in VARIANTS:
            rep = reports[variant]
            s = rep.summary()
            csv_path = out_dir / f"metrics_{variant}.csv"
            rep.to_csv(str(csv_path))
            manifest.add_output(f"metrics_{variant}", csv_path)
            cells = [f"{s[c]!r}" for c in SUMMARY_COLS]
            cells += [str(rep.hop_histogram.get(h, 0)) for h in hop_keys]
            fh.write(variant + "," + ",".join(cells) + "\n")
            print(f"[compare] {variant:16s} accepted={s['accepted']:6d} "
                  f"profit/veh/day={s['avg_daily_profit_per_vehicle']:8.2f} "
                  f"occupancy={s['occupancy_rate']:.3f}")
    manifest.add_output("summary", table_path)
    manifest.finalize()
    return 0


def cmd_gen_demand(args) -> int:
    cfg = _load_scenario(args)
    grid, graph = build_grid(GridConfig(cfg.grid.width, cfg.grid.height, cfg.grid.cell_km,
                                        tuple(cfg.grid.weight_jitter) if cfg.grid.weight_jitter
                                        else None, cfg.grid.seed))
    rng = np.random.default_rng(np.random.SeedSequence(cfg.sim.seed,
                                                       spawn_key=(STREAMS["demand"],)))
    goods = GoodsGenerator(GoodsWorkloadConfig(rates=dict(cfg.demand.goods_rates),
                                               radius_km=cfg.demand.goods_radius_km),
                           graph, rng, id_start=1_000_000)
    passengers = PassengerGenerator(PassengerWorkloadConfig(rates=dict(cfg.demand.passenger_rates)),
                                    grid.n_zones, rng, id_start=2_000_000)
    requests = []
    for tau in range(cfg.sim.total_steps):
        now = tau * cfg.sim.dt_min
        requests.extend(goods.step(tau, now))
        requests.extend(passengers.step(tau, now))
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    try:
        write_requests_csv(str(out_path), requests, grid)
    except OSError as exc:
        raise CliError("io", str(exc))
    print(f"[gen-demand] {len(requests)} requests -> {out_path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, with_fleet: bool = True) -> None:
    p.add_argument("--config", help="scenario YAML (defaults to the built-in desk scenario)")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--days", type=float, help="simulated days override")
    if with_fleet:
        p.add_argument("--fleet-size", type=int, dest="fleet_size")
    p.add_argument("--out-dir", default="out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fleetpool",
                                     description="joint passenger/goods fleet simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the dispatch Q-network")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run one scenario with a fixed policy")
    _add_common(p)
    p.add_argument("--policy", default="nearest-demand",
                   help="dqn:<checkpoint>, random, or nearest-demand")
    p.add_argument("--variant", choices=VARIANTS)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="run the 4-variant baseline matrix")
    _add_common(p)
    p.add_argument("--policy", default="nearest-demand")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-demand", help="materialize a synthetic request CSV")
    _add_common(p, with_fleet=False)
    p.add_argument("--out", default="requests.csv", help="output CSV path")
    p.set_defaults(func=cmd_gen_demand)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, DemandError, DispatchError) as exc:
        print(f"error:config: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
