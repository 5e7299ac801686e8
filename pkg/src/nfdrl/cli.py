"""Command-line entry point: train / props / export / eval subcommands.

Configs are flat JSON documents whose keys match the hyperparameter table
names verbatim; any field can be overridden on the command line with
``--key value``.  CSV outputs use '.' decimals, ',' separators, LF line
endings and 17-significant-digit floats so fixtures are byte-stable; files
are written atomically (temp + rename).
"""

import argparse
import dataclasses
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import agent, envs, network, props

log = logging.getLogger("nfdrl")

ENV_IDS = ("mdp1", "mdp2", "mdp3", "bernoulli", "frozenlake")


class ConfigError(ValueError):
    pass


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_csv(path: str, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    atomic_write(path, "\n".join(lines) + "\n")


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(agent.TrainConfig)}


def _coerce(key: str, value):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config field: {key}")
    t = _FIELD_TYPES[key]
    if key == "loss_kind":
        return str(value)
    # annotations may be live types or strings depending on import mode
    if t in (int, "int"):
        return int(value)
    if t in (float, "float") or "float" in str(t):
        return float(value)
    return value


def load_config(config_path: str | None, overrides: dict) -> tuple[agent.TrainConfig, dict]:
    doc = {}
    if config_path is not None:
        if not os.path.exists(config_path):
            raise ConfigError(f"config file not found: {config_path}")
        with open(config_path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    extra = {}
    merged = {}
    for key, value in {**doc, **overrides}.items():
        if key in ("env", "out"):
            extra[key] = value
            continue
        merged[key] = _coerce(key, value)
    try:
        cfg = agent.TrainConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, extra


def _parse_overrides(pairs: list[str]) -> dict:
    overrides = {}
    i = 0
    while i < len(pairs):
        key = pairs[i]
        if not key.startswith("--") or i + 1 >= len(pairs):
            raise ConfigError(f"expected --key value pairs, got {pairs[i:]}")
        overrides[key[2:].replace("-", "_")] = pairs[i + 1]
        i += 2
    return overrides


def _metrics_rows(metrics):
    return [
        (r.step, r.loss, r.eval_cramer_mean, r.greedy_return_mean, r.epsilon)
        for r in metrics
    ]


def _distribution_rows(net, n_states: int, n_actions: int, grid_size: int = 512):
    rows = []
    for s in range(n_states):
        for a in range(n_actions):
            support, density = agent.export_distribution(net, s, a, grid_size)
            rows += [(s, a, float(x), float(d)) for x, d in zip(support, density)]
    return rows


def cmd_train(args, overrides: dict) -> int:
    config, extra = load_config(args.config, overrides)
    env_id = args.env or extra.get("env")
    out = args.out or extra.get("out")
    if env_id not in ENV_IDS:
        raise ConfigError(f"env must be one of {ENV_IDS}, got {env_id!r}")
    if not out:
        raise ConfigError("an output directory is required (--out)")
    mdp = envs.make_env(env_id, final_reward_std=config.final_reward_std)
    config = config.resolved(mdp)
    log.info("training on %s for %d steps (loss=%s, seed=%d)",
             env_id, config.total_timesteps, config.loss_kind, config.seed)
    result = agent.train(mdp, config)
    os.makedirs(out, exist_ok=True)
    echo = {**config.to_dict(), "env": env_id, "out": out}
    atomic_write(os.path.join(out, "config.json"), json.dumps(echo, indent=2) + "\n")
    write_csv(os.path.join(out, "metrics.csv"),
              ["step", "loss", "eval_cramer_mean", "greedy_return_mean", "epsilon"],
              _metrics_rows(result.metrics))
    network.save_checkpoint(os.path.join(out, "checkpoint.json"),
                            result.net, result.adam, echo)
    write_csv(os.path.join(out, "distributions.csv"),
              ["state", "action", "support", "density"],
              _distribution_rows(result.net, mdp.n_states, mdp.n_actions))
    log.info("outputs written to %s", out)
    return 0


def cmd_props(args, overrides: dict) -> int:
    if args.trials < 1:
        raise ConfigError("trials must be >= 1")
    reports = props.run_all_checks(args.trials, seed=args.seed or 0)
    rng = np.random.default_rng((args.seed or 0) + 1)
    rows = props.measure_bellman_scaling([0.5, 0.9, 0.99], max(args.trials, 10), rng)
    worst = max(ex - g ** 0.5 for g, _sur, ex in rows)
    reports.append(props.PropertyReport(
        "exact_bellman_contraction", len(rows), worst, worst <= 1e-9))
    for g, sur, ex in rows:
        log.info("bellman pushforward gamma=%.2f surrogate_ratio=%.4f exact_ratio=%.6f",
                 g, sur, ex)
    text = "\n".join(r.to_json_line() for r in reports) + "\n"
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    for r in reports:
        log.info("%s: trials=%d max_violation=%.3e passed=%s",
                 r.name, r.trials, r.max_violation, r.passed)
    return 0 if all(r.passed for r in reports) else 1


def _load_checkpoint_or_exit(path: str):
    if not os.path.exists(path):
        raise ConfigError(f"checkpoint not found: {path}")
    try:
        return network.load_checkpoint(path)
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"checkpoint schema mismatch: {exc}") from exc


def cmd_export(args, overrides: dict) -> int:
    net, _adam, _cfg = _load_checkpoint_or_exit(args.checkpoint)
    if args.env not in ENV_IDS:
        raise ConfigError(f"env must be one of {ENV_IDS}, got {args.env!r}")
    mdp = envs.make_env(args.env)
    write_csv(args.out, ["state", "action", "support", "density"],
              _distribution_rows(net, mdp.n_states, mdp.n_actions))
    return 0


def cmd_eval(args, overrides: dict) -> int:
    net, _adam, cfg_doc = _load_checkpoint_or_exit(args.checkpoint)
    env_id = args.env or cfg_doc.get("env")
    if env_id not in ENV_IDS:
        raise ConfigError(f"env must be one of {ENV_IDS}, got {env_id!r}")
    std = cfg_doc.get("final_reward_variance", 0.1)
    mdp = envs.make_env(env_id, final_reward_std=std)
    seed = args.seed if args.seed is not None else int(cfg_doc.get("seed", 0))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(int(cfg_doc.get("n_samples", 100)))
    ret = agent.greedy_return(net, mdp, z, n_episodes=args.episodes, rng=rng)
    rows = [(env_id, args.episodes, ret)]
    if args.out:
        write_csv(args.out, ["env", "episodes", "greedy_return_mean"], rows)
    else:
        print(f"greedy_return_mean={_fmt(ret)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nfdrl")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the training loop")
    p_train.add_argument("--config", default=None)
    p_train.add_argument("--env", default=None, choices=ENV_IDS)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--out", default=None)
    p_train.add_argument("--loss", default=None, choices=("exact", "surrogate"))

    p_props = sub.add_parser("props", help="run the property-oracle suite")
    p_props.add_argument("--trials", type=int, default=1000)
    p_props.add_argument("--seed", type=int, default=0)
    p_props.add_argument("--out", default=None)

    p_export = sub.add_parser("export", help="export learned distributions to CSV")
    p_export.add_argument("--checkpoint", required=True)
    p_export.add_argument("--env", required=True, choices=ENV_IDS)
    p_export.add_argument("--out", required=True)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint's greedy policy")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--env", default=None, choices=ENV_IDS)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--episodes", type=int, default=100)
    p_eval.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("NFDRL_LOG", "info").upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    try:
        overrides = _parse_overrides(rest)
        if args.command == "train":
            if args.seed is not None:
                overrides["seed"] = args.seed
            if args.loss is not None:
                overrides["loss_kind"] = args.loss
            return cmd_train(args, overrides)
        if args.command == "props":
            return cmd_props(args, overrides)
        if args.command == "export":
            return cmd_export(args, overrides)
        return cmd_eval(args, overrides)
    except ConfigError as exc:
        log.error("%s", exc)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.error("run failed: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
