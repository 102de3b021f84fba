"""``ecoplatoon`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, build_config, load_config, parse_value
from .graph import GraphError, build_nested_graph
from .graph_io import read_dump, write_dump
from .metrics import (
    compare,
    default_window,
    export_energy_ledger,
    export_spacetime,
    export_speed_traces,
    read_summary,
    summary,
    write_summary,
    write_summary_csv,
)
from .nn import ShapeMismatchError
from .rl.encoder import Ablation
from .rl.train import load_agent, rollout, train
from .sim import ConfigError, build_scenario
from .spectral import analyze, cycle_graph, spectral_entropy, two_triangles, wl_indistinguishable

log = logging.getLogger("ecoplatoon")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
MANIFEST = "manifest.json"
PENETRATIONS = (0.05, 0.10, 0.20)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# helpers ---------------------------------------------------------------------


def _overrides(args) -> dict:
    out = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, text = item.split("=", 1)
        out[key.strip()] = parse_value(text.strip())
    if getattr(args, "seed", None) is not None:
        out["train.seed"] = args.seed
    if getattr(args, "ablation", None) is not None:
        out["train.ablation"] = args.ablation
    if getattr(args, "mode", None) is not None:
        out["st.mode"] = args.mode
    return out


def _config(args) -> RunConfig:
    return load_config(args.config, overrides=_overrides(args))


def _prepare_dir(path: Path, force: bool) -> Path:
    if path.exists() and any(path.iterdir()):
        if not force:
            raise UsageError(f"{path} already exists; pass --force to overwrite")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest(cfg: RunConfig, **extra) -> dict:
    return {
        "version": __version__,
        "run_id": cfg.run_id,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "ablation": cfg.ablation.value,
        "config": cfg.flat,
        **extra,
    }


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, default=str))


def _evaluate(cfg: RunConfig, agent, source: str, out: Path, tag: str) -> dict:
    """Noise-free rollout behind trajectory ``source``; writes exports, returns the summary row."""
    runlog, stats = rollout(cfg.setup, cfg.trajectory(source), agent)
    window = default_window(runlog, cfg.metrics.warmup)
    row = summary(runlog, cfg.setup.scenario.safety, x_star=cfg.metrics.x_star, window=window)
    write_summary(row, out / f"summary_{tag}.json")
    export_spacetime(runlog, out / f"spacetime_{tag}.csv")
    export_speed_traces(runlog, out / f"speeds_{tag}.csv")
    export_energy_ledger(runlog, out / f"energy_{tag}.csv")
    log.info("%s: mean reward %.4f over %d steps", tag, stats["mean_reward"], stats["steps"])
    return row


def _tag(source: str) -> str:
    return Path(source).stem if source.endswith(".csv") else source


def _train_run(cfg: RunConfig, run_dir: Path) -> dict:
    manifest = _manifest(cfg)
    _write_json(run_dir / MANIFEST, manifest)
    result = train(
        cfg.setup,
        cfg.trajectory(),
        run_dir=run_dir,
        manifest=manifest,
        progress=lambda e: log.info("episode %d: mean reward %.4f", e.episode, e.mean_reward),
    )
    manifest["checkpoints"] = [p.name for p in result.checkpoints]
    manifest["encoder_counters"] = dict(result.agent.encoder.counters)
    _write_json(run_dir / MANIFEST, manifest)
    return {"agent": result.agent, "manifest": manifest}


# commands --------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _config(args)
    run_dir = _prepare_dir(Path(args.out) / cfg.run_id, args.force)
    _train_run(cfg, run_dir)
    print(run_dir)
    return EXIT_OK


def _config_for_checkpoint(args, ckpt: Path) -> RunConfig:
    manifest = ckpt.parent / MANIFEST
    if args.config is None and manifest.is_file():
        flat = json.loads(manifest.read_text())["config"]
        flat.update(_overrides(args))
        return build_config(flat)
    return _config(args)


def cmd_eval(args) -> int:
    if (args.checkpoint is None) == (args.baseline is None):
        raise UsageError("eval needs exactly one of --checkpoint or --baseline idm")
    if args.checkpoint is not None:
        ckpt = Path(args.checkpoint)
        if not ckpt.is_file():
            raise UsageError(f"checkpoint not found: {ckpt}")
        cfg = _config_for_checkpoint(args, ckpt)
        world = build_scenario(cfg.setup.scenario)
        try:
            agent = load_agent(cfg.setup, ckpt, world)
        except ShapeMismatchError as exc:
            raise ConfigError(f"checkpoint does not match the configuration: {exc}") from exc
        name = f"{cfg.ablation.value}"
    else:
        cfg = _config(args)
        agent = None
        name = "IDM"
    out = _prepare_dir(Path(args.out), args.force)
    sources = args.trajectory or cfg.run.eval_trajectories
    rows = {}
    for source in sources:
        rows[_tag(source)] = _evaluate(cfg, agent, source, out, _tag(source))
    _write_json(out / "summary.json", {"name": name, "config_hash": cfg.config_hash(), "summaries": rows})
    for tag, row in rows.items():
        print(f"{tag}: " + ", ".join(f"{k}={v:.4g}" for k, v in row.items()))
    return EXIT_OK


def _load_summaries(path: Path) -> tuple[str, dict]:
    f = path / "summary.json" if path.is_dir() else path
    if not f.is_file():
        raise ConfigError(f"no summary.json in {path}")
    data = json.loads(f.read_text())
    if "summaries" in data:
        return data.get("name", path.name), data["summaries"]
    return path.name, {"default": read_summary(f)}


def cmd_compare(args) -> int:
    if len(args.runs) < 2:
        raise UsageError("compare needs at least two run directories")
    loaded = {}
    for r in args.runs:
        name, rows = _load_summaries(Path(r))
        key = name if name not in loaded else f"{name} ({r})"
        loaded[key] = rows
    tags = sorted(set.intersection(*(set(v) for v in loaded.values())))
    if not tags:
        raise ConfigError("the runs share no evaluated trajectory")
    for tag in tags:
        try:
            table = compare({name: rows[tag] for name, rows in loaded.items()})
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        print(f"[{tag}]")
        print(table)
    return EXIT_OK


def _print_report(rep: dict) -> None:
    for i, h in enumerate(rep["platoon_entropy"]):
        print(f"platoon {i} entropy: {h:.6f}")
    print(f"F-F entropy: {rep['ff_entropy']:.6f}")
    print(f"nested entropy: {rep['nested_entropy']:.6f}")
    print(f"intra intensity: {rep['intra_intensity']:.6f}")
    print(f"inter intensity: {rep['inter_intensity']:.6f}")
    print(f"total intensity: {rep['total_intensity']:.6f}")


def cmd_analyze_graph(args) -> int:
    if args.demo is not None:
        g1, g2 = two_triangles(), cycle_graph(6)
        h1, h2 = spectral_entropy(g1), spectral_entropy(g2)
        print(f"G1 two triangles: nested entropy {h1:.6f}")
        print(f"G2 hexagon:       nested entropy {h2:.6f}")
        print(f"1-WL colour multisets identical: {wl_indistinguishable(g1, g2)}")
        return EXIT_OK
    if args.dump is not None:
        g = read_dump(args.dump)
    else:
        cfg = _config(args)
        world = build_scenario(cfg.setup.scenario, initial_speed=float(cfg.trajectory().speeds[0]))
        g = build_nested_graph(world, cfg.setup.st, norm=cfg.setup.normalization())
        if args.write_dump:
            write_dump(g, args.write_dump, cfg.setup.normalization())
    _print_report(analyze(g))
    return EXIT_OK


def cmd_export(args) -> int:
    """Space-time, speed and energy exports of one rollout (checkpoint or IDM)."""
    if args.checkpoint is not None:
        ckpt = Path(args.checkpoint)
        if not ckpt.is_file():
            raise UsageError(f"checkpoint not found: {ckpt}")
        cfg = _config_for_checkpoint(args, ckpt)
        try:
            agent = load_agent(cfg.setup, ckpt, build_scenario(cfg.setup.scenario))
        except ShapeMismatchError as exc:
            raise ConfigError(f"checkpoint does not match the configuration: {exc}") from exc
    else:
        cfg, agent = _config(args), None
    out = _prepare_dir(Path(args.out), args.force)
    source = args.trajectory[0] if args.trajectory else cfg.run.trajectory
    runlog, _ = rollout(cfg.setup, cfg.trajectory(source), agent)
    for fn, name in ((export_spacetime, "spacetime"), (export_speed_traces, "speeds"), (export_energy_ledger, "energy")):
        print(fn(runlog, out / f"{name}_{_tag(source)}.csv"))
    world = build_scenario(cfg.setup.scenario, initial_speed=float(cfg.trajectory(source).speeds[0]))
    print(write_dump(build_nested_graph(world, cfg.setup.st, norm=cfg.setup.normalization()), out / "graph_t0.txt", cfg.setup.normalization()))
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.dimension not in ("ablation", "penetration"):
        raise UsageError(f"unknown sweep dimension {args.dimension!r}; use ablation or penetration")
    base = _config(args)
    root = _prepare_dir(Path(args.out), args.force)
    if args.dimension == "ablation":
        points = [("IDM", None)] + [(a.value, {"train.ablation": a.value}) for a in Ablation]
    else:
        points = [(f"pen{round(p * 100)}", {"run.penetration": p, "train.ablation": base.ablation.value}) for p in PENETRATIONS]
    rows, failures = {}, {}
    source = base.run.trajectory
    for name, over in points:
        run_dir = root / name
        run_dir.mkdir()
        try:
            cfg = base.with_overrides(**(over or {}), **{"run.id": name})
            if over is None:
                _write_json(run_dir / MANIFEST, _manifest(cfg, baseline="idm"))
                agent = None
            else:
                agent = _train_run(cfg, run_dir)["agent"]
            row = _evaluate(cfg, agent, source, run_dir, _tag(source))
            _write_json(run_dir / "summary.json", {"name": name, "config_hash": cfg.config_hash(), "summaries": {_tag(source): row}})
            rows[name] = row
        except Exception as exc:  # isolate per-run failures
            log.error("sweep run %s failed: %s", name, exc)
            failures[name] = str(exc)
            (run_dir / "FAILED").write_text(f"{type(exc).__name__}: {exc}\n")
    report = [f"sweep over {args.dimension}: {len(rows)} ok, {len(failures)} failed"]
    if len(rows) >= 2:
        report.append(compare(rows))
        write_summary_csv(rows, root / "rollup.csv")
    report += [f"FAILED {k}: {v}" for k, v in failures.items()]
    text = "\n".join(report)
    (root / "rollup.txt").write_text(text + "\n")
    print(text)
    return EXIT_RUNTIME if failures else EXIT_OK


# parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ecoplatoon", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, out=True):
        sp.add_argument("--config", help="TOML run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--ablation", choices=[a.value for a in Ablation])
        sp.add_argument("--mode", choices=["as-written", "prose"])
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        if out:
            sp.add_argument("--out", default="runs")
            sp.add_argument("--force", action="store_true")

    sp = sub.add_parser("train", help="train a policy")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="zero-noise evaluation of a checkpoint or the IDM baseline")
    common(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--baseline", choices=["idm"])
    sp.add_argument("--trajectory", action="append", help="profile name or t,v CSV (repeatable)")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("compare", help="side-by-side summary table")
    sp.add_argument("runs", nargs="*")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("analyze-graph", help="spectral entropy and information intensity")
    common(sp, out=False)
    sp.add_argument("dump", nargs="?")
    sp.add_argument("--demo", choices=["triangles-hexagon"])
    sp.add_argument("--write-dump", help="also save the scenario snapshot graph")
    sp.set_defaults(func=cmd_analyze_graph)

    sp = sub.add_parser("sweep", help="algorithm ladder or penetration sweep")
    common(sp)
    sp.add_argument("--dimension", required=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("export", help="space-time, speed, energy and graph exports")
    common(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--baseline", choices=["idm"])
    sp.add_argument("--trajectory", action="append")
    sp.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing command")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, GraphError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
