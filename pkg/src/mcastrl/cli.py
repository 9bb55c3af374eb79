"""Command line front door: ``mcastrl <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .agent import Hyperparams
from .env import RewardWeights
from .errors import McastError
from .harness import ALGORITHMS, KMB_ALGOS, evaluate
from .multicast import MulticastRequest
from .topology import load_topology, save_topology
from .traffic import TrafficProfile, gen_snapshots, gen_topology, load_snapshots, save_snapshots
from .trainer import MadrlPolicy, PretrainedWeights, pretrain_unicast, train_madrl, write_run

log = logging.getLogger("mcastrl")

DEFAULT_CONFIG = {
    "topology": {"nodes": 14, "path": None},
    "traffic": {"snapshots": 48, "noise": 0.1, "hourly": None, "dir": None},
    "reward": {"beta": [0.7, 0.3, 0.1, 0.1, 0.1, 0.1, 0.1], "r_hell": -0.7, "r_loop": -0.5},
    "hyper": {"actor_lr": 1e-3, "critic_lr": 3e-3, "gamma": 0.9, "batch_size": 32,
              "update_time": 10, "episodes": 1000, "n_agents": 3, "step_cap_mult": 4,
              "pretrain_episodes": 1000},
    "request": {"src": 3, "dst": [6, 7, 8, 9, 11, 13]},
}


class CliError(McastError):
    pass


def load_config(path: str | None) -> dict:
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {path}: {exc}") from exc
        for section, values in user.items():
            if section not in cfg or not isinstance(values, dict):
                raise CliError(f"unknown config section {section!r}")
            cfg[section].update(values)
    return cfg


def _hyper(cfg, args) -> Hyperparams:
    h = cfg["hyper"]
    return Hyperparams(actor_lr=h["actor_lr"], critic_lr=h["critic_lr"], gamma=h["gamma"],
                       batch_size=h["batch_size"], update_time=h["update_time"],
                       episodes=args.episodes if getattr(args, "episodes", None) else h["episodes"],
                       seed=args.seed)


def _weights(cfg) -> RewardWeights:
    r = cfg["reward"]
    return RewardWeights(tuple(r["beta"]), r["r_hell"], r["r_loop"])


def _request(cfg, args) -> MulticastRequest:
    src = args.src if getattr(args, "src", None) is not None else cfg["request"]["src"]
    dst = args.dst if getattr(args, "dst", None) else cfg["request"]["dst"]
    return MulticastRequest(src, dst)


def _topology(cfg, args):
    path = getattr(args, "topology", None) or cfg["topology"].get("path")
    if not path:
        raise CliError("missing input: a topology file (--topology or topology.path in --config)")
    if not Path(path).exists():
        raise CliError(f"missing input: topology file {path} does not exist")
    return load_topology(path)


def _snapshots(cfg, args, topo):
    path = getattr(args, "traffic", None) or cfg["traffic"].get("dir")
    if path:
        _, snaps = load_snapshots(path)
        return snaps
    return gen_snapshots(topo, _profile(cfg, args), cfg["traffic"]["snapshots"], args.seed)


def _profile(cfg, args) -> TrafficProfile:
    t = cfg["traffic"]
    kw = {"noise": t["noise"], "seed": args.seed}
    if t.get("hourly"):
        kw["hourly"] = list(t["hourly"])
    return TrafficProfile(**kw)


def _out(args, default: str) -> Path:
    return Path(args.out or default)


def cmd_gen_topo(cfg, args):
    n = args.nodes or cfg["topology"]["nodes"]
    out = _out(args, "topology.json")
    save_topology(gen_topology(n, args.seed), out)
    print(f"wrote {out}")


def cmd_gen_traffic(cfg, args):
    topo = _topology(cfg, args)
    count = args.snapshots or cfg["traffic"]["snapshots"]
    snaps = gen_snapshots(topo, _profile(cfg, args), count, args.seed)
    out = _out(args, "traffic")
    save_snapshots(topo, snaps, out)
    print(f"wrote {len(snaps)} snapshots to {out}")


def cmd_pretrain(cfg, args):
    topo = _topology(cfg, args)
    snaps = _snapshots(cfg, args, topo)
    episodes = args.episodes or cfg["hyper"]["pretrain_episodes"]
    pw = pretrain_unicast(topo, snaps, _hyper(cfg, args), _weights(cfg), episodes,
                          cfg["hyper"]["step_cap_mult"])
    out = _out(args, "pretrained.npz")
    pw.save(out)
    print(f"wrote {out}")


def cmd_train(cfg, args):
    topo = _topology(cfg, args)
    snaps = _snapshots(cfg, args, topo)
    warm = PretrainedWeights.load(args.warm) if args.warm else None
    run = train_madrl(topo, snaps, _request(cfg, args), _hyper(cfg, args), _weights(cfg), warm,
                      n_agents=args.agents or cfg["hyper"]["n_agents"],
                      step_cap_mult=cfg["hyper"]["step_cap_mult"], parallel=args.parallel)
    out = write_run(run, _out(args, "run"))
    print(f"wrote run to {out}; tree edges {sorted(run.tree.edges)}")


def cmd_eval(cfg, args):
    topo = _topology(cfg, args)
    snaps = _snapshots(cfg, args, topo)
    if not args.run:
        raise CliError("missing input: a trained run directory (--run)")
    policy = MadrlPolicy.load(args.run)
    report = evaluate(topo, snaps, _request(cfg, args), ALGORITHMS, policy=policy)
    out = _out(args, "report.csv")
    report.to_csv(out)
    print(f"wrote {out}")


def cmd_baseline(cfg, args):
    topo = _topology(cfg, args)
    snaps = _snapshots(cfg, args, topo)
    report = evaluate(topo, snaps, _request(cfg, args), tuple(KMB_ALGOS))
    out = _out(args, "baseline.csv")
    report.to_csv(out)
    print(f"wrote {out}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--out", help="output file or directory")

    p = argparse.ArgumentParser(prog="mcastrl", parents=[common],
                                description="Multi-agent multicast routing lab")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("gen-topo", cmd_gen_topo, "generate a random wireless topology")
    sp.add_argument("--nodes", type=int)

    for name, fn, help_ in (("gen-traffic", cmd_gen_traffic, "synthesize link-state snapshots"),
                            ("pretrain", cmd_pretrain, "pretrain a unicast agent"),
                            ("train", cmd_train, "train the multi-agent router"),
                            ("eval", cmd_eval, "compare the trained router with KMB"),
                            ("baseline", cmd_baseline, "KMB baselines only")):
        sp = add(name, fn, help_)
        sp.add_argument("--topology", help="topology JSON file")
        if name == "gen-traffic":
            sp.add_argument("--snapshots", type=int)
            continue
        sp.add_argument("--traffic", help="snapshot directory (generated on the fly if omitted)")
        if name == "pretrain":
            sp.add_argument("--episodes", type=int)
            continue
        sp.add_argument("--src", type=int)
        sp.add_argument("--dst", type=int, nargs="+")
        if name == "train":
            sp.add_argument("--episodes", type=int)
            sp.add_argument("--agents", type=int)
            sp.add_argument("--warm", help="pretrained checkpoint for a warm start")
            sp.add_argument("--parallel", action="store_true")
        if name == "eval":
            sp.add_argument("--run", help="run directory written by `train`")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        args.fn(cfg, args)
    except (McastError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
