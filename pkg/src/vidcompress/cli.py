"""Command-line entry point: ``python -m vidcompress <subcommand> [--config run.json]``.

A JSON run config is the source of truth; ``--out`` and ``--seed`` override
its top-level keys. Every output directory receives ``config.json`` (the
resolved config), ``artifacts.json`` (seed and file digests) and an
append-only ``run.log``, the only file carrying timestamps.

Exit codes: 0 ok, 1 runtime failure, 2 config error. Failures print a JSON
object to stderr.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import gumbel
from .codec import Codec, pretrain_codec
from .distill import DistillConfig, DistilledDataset, budget_from_ratio, distill
from .evaluate import (EvalConfig, EvalReport, batched_scores, matrix_csv, redundancy_matrices, roundtrip,
                       write_report)
from .experiment import (TestViews, evaluate_distilled, evaluate_random_uniform, evaluate_selector,
                         full_data_reference, scorer_from_dataset)
from .microcheck import stage2_grad_check
from .synth import GeneratorConfig, generate_dataset, load_manifest, load_split
from .tensorio import save_tensor

SCHEMA_VERSION = 1
OUT_ENV = "VIDCOMPRESS_OUT"
DEFAULT_OUT = "runs"
LOG_NAME = "run.log"

CODEC_DEFAULTS = {"epochs": 20, "corpus_frames": 4096, "lr": 3e-3, "batch_size": 64}
EXPERIMENT_DEFAULTS = {"seeds": [0, 1, 2, 3, 4], "ratio": None, "full_data_k": 16, "full_data": True}
ANALYZE_DEFAULTS = {"videos_per_class": 10, "logit_videos": 8}


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def _dataclass_defaults(cls, skip=("seed",)) -> dict:
    return {f.name: f.default for f in fields(cls) if f.name not in skip}


def default_config() -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": 0,
        "out_dir": None,
        "workers": 1,
        "generator": _dataclass_defaults(GeneratorConfig),
        "codec": dict(CODEC_DEFAULTS),
        "distill": _dataclass_defaults(DistillConfig),
        "eval": _dataclass_defaults(EvalConfig),
        "experiment": copy.deepcopy(EXPERIMENT_DEFAULTS),
        "analyze": dict(ANALYZE_DEFAULTS),
    }


def resolve_config(user: dict) -> dict:
    """Merge ``user`` over the defaults; unknown keys are a config error."""
    if not isinstance(user, dict):
        raise ConfigError("config must be a JSON object")
    cfg = default_config()
    for key, value in user.items():
        if key not in cfg:
            raise ConfigError(f"unknown config key {key!r}", key)
        if isinstance(cfg[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{key!r} must be an object", key)
            for sub, v in value.items():
                if sub not in cfg[key]:
                    raise ConfigError(f"unknown config key {key + '.' + sub!r}", f"{key}.{sub}")
                cfg[key][sub] = v
        else:
            cfg[key] = value
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {cfg['schema_version']!r}", "schema_version")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        raise ConfigError("seed must be an integer", "seed")
    try:
        generator_config(cfg).validate()
        distill_config(cfg, cfg["seed"]).validate(cfg["generator"]["frames"])
        eval_config(cfg, cfg["seed"]).validate()
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    return cfg


def generator_config(cfg: dict) -> GeneratorConfig:
    return GeneratorConfig(**cfg["generator"], seed=cfg["seed"])


def distill_config(cfg: dict, seed: int) -> DistillConfig:
    return DistillConfig(**cfg["distill"], seed=seed)


def eval_config(cfg: dict, seed: int) -> EvalConfig:
    return EvalConfig(**cfg["eval"], seed=seed)


# ---------------------------------------------------------------- output plumbing

def config_echo(cfg: dict) -> str:
    """The resolved config as written next to outputs.

    The output location is left out (it goes to the log) so that identical
    runs in different directories produce identical bytes.
    """
    return json.dumps({k: v for k, v in cfg.items() if k != "out_dir"}, indent=2, sort_keys=True) + "\n"


class RunDir:
    """An output directory with a config echo, a digest list and a timestamped log."""

    def __init__(self, path: Path, cfg: dict, command: str):
        self.path = path
        self.cfg = cfg
        self.command = command
        path.mkdir(parents=True, exist_ok=True)
        (path / "config.json").write_text(config_echo(cfg), encoding="utf-8")
        self.log(f"start {command} in {path}")

    def log(self, message: str) -> None:
        with open(self.path / LOG_NAME, "a", encoding="utf-8") as fh:
            fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {message}\n")

    def finish(self) -> None:
        digests = {}
        for p in sorted(self.path.rglob("*")):
            if p.is_file() and p.name not in (LOG_NAME, "artifacts.json"):
                digests[str(p.relative_to(self.path))] = hashlib.sha256(p.read_bytes()).hexdigest()
        meta = {"command": self.command, "seed": self.cfg["seed"], "files": digests}
        (self.path / "artifacts.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self.log(f"done {self.command}")


def out_root(cfg: dict) -> Path:
    return Path(cfg["out_dir"] or os.environ.get(OUT_ENV, DEFAULT_OUT))


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing {what}: {path} (run the producing subcommand first)")
    return path


def _load_data(root: Path):
    manifest = load_manifest(_require(root / "data" / "manifest.json", "dataset"))
    return load_split(manifest, "train"), load_split(manifest, "test")


def _load_codec(root: Path) -> Codec:
    _require(root / "codec" / "codec.json", "codec")
    codec = Codec.load(root / "codec" / "codec")
    codec.require_frozen()
    return codec


def _seeds(cfg: dict) -> list[int]:
    return [int(s) for s in cfg["experiment"]["seeds"]]


def _per_class(cfg: dict, train) -> list[int] | None:
    ratio = cfg["experiment"]["ratio"]
    if ratio is None:
        return None
    return budget_from_ratio(float(ratio), len(train), int(train.labels.max()) + 1)


def _ratio(cfg: dict, train) -> float:
    per = _per_class(cfg, train) or [cfg["distill"]["budget_per_class"]] * (int(train.labels.max()) + 1)
    return sum(per) / len(train)


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- subcommands

def cmd_gen_data(cfg: dict) -> Path:
    run = RunDir(out_root(cfg) / "data", cfg, "gen-data")
    generate_dataset(generator_config(cfg), run.path)
    run.finish()
    return run.path


def cmd_pretrain_codec(cfg: dict) -> Path:
    root = out_root(cfg)
    train, _ = _load_data(root)
    run = RunDir(root / "codec", cfg, "pretrain-codec")
    c = cfg["codec"]
    rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 1]))
    flat = train.frames.reshape((-1,) + train.frames.shape[2:])
    n = min(int(c["corpus_frames"]), len(flat))
    corpus = flat[np.sort(rng.choice(len(flat), n, replace=False))]
    codec, mse = pretrain_codec(corpus, int(c["epochs"]), rng, batch_size=int(c["batch_size"]), lr=float(c["lr"]),
                                seed=cfg["seed"])
    codec.freeze()
    codec.save(run.path / "codec")
    run.log(f"train mse {mse:.6f}")
    run.finish()
    return run.path


def _distill_one(root: Path, cfg: dict, seed: int, synthesize: bool = True) -> Path:
    train, _ = _load_data(root)
    codec = _load_codec(root)
    digest = codec.frozen_digest
    name = f"seed-{seed}" if synthesize else f"fixed-seed-{seed}"
    run = RunDir(root / "distill" / name, cfg, "distill")
    dcfg = distill_config(cfg, seed)
    if not synthesize:
        dcfg = DistillConfig(**{**asdict(dcfg), "synthesize": False})
    res = distill(train, codec, dcfg, _per_class(cfg, train))
    if codec.digest() != digest:
        raise RuntimeError("codec changed during distillation")
    res.dataset.save(run.path)
    (run.path / "training_log.csv").write_text(res.log.to_csv(), encoding="utf-8")
    save_tensor(run.path / "classifier.vct", res.classifier.flat())
    run.log(f"final loss {res.log.loss[-1] if res.log.loss else float('nan'):.6f}")
    run.finish()
    return run.path


def cmd_distill(cfg: dict) -> Path:
    return _distill_one(out_root(cfg), cfg, cfg["seed"])


def _eval_seed(root: Path, cfg: dict, seed: int) -> dict:
    """All per-seed accuracies: pipeline, random coreset, and decoupled selectors."""
    train, test = _load_data(root)
    codec = _load_codec(root)
    views = TestViews.build(test, codec)
    classes = int(train.labels.max()) + 1
    ecfg = eval_config(cfg, seed)
    k = cfg["distill"]["k"]
    out = {}
    ds_dir = root / "distill" / f"seed-{seed}"
    if not (ds_dir / "distilled.json").exists():
        _distill_one(root, cfg, seed)
    out["videocompressa"] = evaluate_distilled(DistilledDataset.load(ds_dir), codec, views, ecfg, classes)
    budget = _per_class(cfg, train) or cfg["distill"]["budget_per_class"]
    out["random-uniform"] = evaluate_random_uniform(train, budget, k, views, ecfg, classes, seed)
    fixed_dir = root / "distill" / f"fixed-seed-{seed}"
    if not (fixed_dir / "distilled.json").exists():
        _distill_one(root, cfg, seed, synthesize=False)
    fixed = DistilledDataset.load(fixed_dir)
    out["gumbel-fixed-latents"] = evaluate_distilled(fixed, codec, views, ecfg, classes)
    sources = train.subset(np.searchsorted(train.ids, fixed.source_ids))
    for rule in ("uniform", "pixel-diff"):
        out[f"{rule}-fixed-latents"] = evaluate_selector(sources, rule, k, codec, views, ecfg, classes)
    return out


def _run_seeds(root: Path, cfg: dict) -> dict:
    seeds = _seeds(cfg)
    workers = max(1, int(cfg["workers"]))
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
            results = list(pool.map(_eval_seed, [root] * len(seeds), [cfg] * len(seeds), seeds))
    else:
        results = [_eval_seed(root, cfg, s) for s in seeds]
    return dict(zip(seeds, results))


def _reports(per_seed: dict, ratio: float, cfg: dict, reference: float | None) -> tuple[list[EvalReport], list[int]]:
    seeds = list(per_seed)
    methods = list(next(iter(per_seed.values())))
    reports, run_seeds = [], []
    for m in methods:
        accs, rs = [], []
        for s in seeds:
            accs.extend(per_seed[s][m])
            rs.extend([s] * len(per_seed[s][m]))
        reports.append(EvalReport(m, accs, ratio, {"eval": cfg["eval"], "seeds": seeds}, reference))
        run_seeds = rs
    return reports, run_seeds


def cmd_eval(cfg: dict) -> Path:
    root = out_root(cfg)
    train, _ = _load_data(root)
    per_seed = _run_seeds(root, cfg)
    run = RunDir(root / "eval", cfg, "eval")
    reports, run_seeds = _reports(per_seed, _ratio(cfg, train), cfg, _stored_reference(root))
    write_report(reports, run.path, run_seeds)
    run.finish()
    return run.path


def _stored_reference(root: Path) -> float | None:
    path = root / "baseline" / "summary.json"
    if not path.exists():
        return None
    summary = json.loads(path.read_text(encoding="utf-8"))
    return summary.get("full-data", {}).get("mean")


def cmd_baseline(cfg: dict) -> Path:
    """Random coreset (uniform frames) per seed, plus the full-data reference."""
    root = out_root(cfg)
    train, test = _load_data(root)
    codec = _load_codec(root)
    views = TestViews.build(test, codec)
    classes = int(train.labels.max()) + 1
    k = cfg["distill"]["k"]
    budget = _per_class(cfg, train) or cfg["distill"]["budget_per_class"]
    run = RunDir(root / "baseline", cfg, "baseline")
    accs, seeds = [], []
    for s in _seeds(cfg):
        a = evaluate_random_uniform(train, budget, k, views, eval_config(cfg, s), classes, s)
        accs.extend(a)
        seeds.extend([s] * len(a))
    reports = [EvalReport("random-uniform", accs, _ratio(cfg, train), {"eval": cfg["eval"]})]
    run_seeds = list(seeds)
    if cfg["experiment"]["full_data"]:
        fk = int(cfg["experiment"]["full_data_k"])
        ref = full_data_reference(train, test, fk, eval_config(cfg, cfg["seed"]), classes)
        reports.append(EvalReport("full-data", ref, 1.0, {"eval": cfg["eval"], "k": fk}))
        run_seeds += [cfg["seed"]] * len(ref)
    write_report(reports, run.path, run_seeds)
    run.finish()
    return run.path


def cmd_analyze(cfg: dict) -> Path:
    """Redundancy matrices per class, plus scorer logits for a few test videos when available."""
    root = out_root(cfg)
    train, test = _load_data(root)
    run = RunDir(root / "analysis", cfg, "analyze")
    n = int(cfg["analyze"]["videos_per_class"])
    rows = []
    for c in range(int(train.labels.max()) + 1):
        videos = train.frames[train.labels == c][:n]
        red = redundancy_matrices(videos)
        (run.path / f"inter_class{c}.csv").write_text(matrix_csv(red.inter), encoding="utf-8")
        (run.path / f"intra_class{c}_video0.csv").write_text(matrix_csv(red.intra[0]), encoding="utf-8")
        rows.append([c, f"{red.mean_adjacent_intra:.6f}", f"{red.mean_inter:.6f}", red.flagged])
    _write_csv(run.path / "redundancy_summary.csv", ["class", "mean_adjacent_intra", "mean_inter", "flagged"], rows)
    ds_dir = root / "distill" / f"seed-{cfg['seed']}"
    if (ds_dir / "distilled.json").exists():
        scorer = scorer_from_dataset(DistilledDataset.load(ds_dir))
        codec = _load_codec(root)
        m = int(cfg["analyze"]["logit_videos"])
        q = batched_scores(roundtrip(test.frames[:m], codec), scorer)
        t_len = q.shape[1]
        _write_csv(run.path / "scorer_logits.csv", ["video_id", "label", "event_start", "event_stop"]
                   + [f"q{t}" for t in range(t_len)],
                   [[int(test.ids[i]), int(test.labels[i]), int(test.windows[i, 0]), int(test.windows[i, 1])]
                    + [f"{v:.6f}" for v in q[i]] for i in range(len(q))])
    run.finish()
    return run.path


def cmd_gumbel_check(cfg: dict) -> Path:
    run = RunDir(out_root(cfg) / "gumbel", cfg, "gumbel-check")
    rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 2]))
    rows, worst = [], 0.0
    for v in range(5):
        q = rng.uniform(-2, 2, 8)
        freq = gumbel.gumbel_max_frequency(q, 100_000, rng)
        p = gumbel.softmax_np(q)
        for i in range(len(q)):
            worst = max(worst, abs(freq[i] - p[i]))
            rows.append([v, i, f"{q[i]:.6f}", f"{p[i]:.6f}", f"{freq[i]:.6f}", f"{abs(freq[i] - p[i]):.6f}"])
    _write_csv(run.path / "frequency.csv", ["vector", "category", "logit", "softmax", "empirical", "abs_dev"], rows)
    gaps = gumbel.gap_vs_tau((1.0, 0.5, 0.25), seed=cfg["seed"])
    _write_csv(run.path / "gap_vs_tau.csv", ["tau", "mean_gap"], [[t, f"{g:.6f}"] for t, g in gaps.items()])
    run.log(f"max abs deviation {worst:.6f}")
    run.finish()
    return run.path


def cmd_grad_check(cfg: dict) -> Path:
    run = RunDir(out_root(cfg) / "gradcheck", cfg, "grad-check")
    report = stage2_grad_check(cfg["seed"])
    summary = {name: {"max_rel_error": r.max_rel_error, "n_checked": r.n_checked, "ok": r.ok}
               for name, r in report.items()}
    (run.path / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    run.finish()
    if not all(r.ok for r in report.values()):
        raise RuntimeError("gradient check failed: " + json.dumps(summary, sort_keys=True))
    return run.path


def cmd_reproduce(cfg: dict) -> Path:
    """gen-data -> pretrain-codec -> baseline -> distill + eval for every seed -> summary."""
    root = out_root(cfg)
    cmd_gen_data(cfg)
    cmd_pretrain_codec(cfg)
    cmd_baseline(cfg)
    cmd_eval(cfg)
    ev = json.loads((root / "eval" / "summary.json").read_text(encoding="utf-8"))
    base = json.loads((root / "baseline" / "summary.json").read_text(encoding="utf-8"))
    summary = {m: {"mean": r["mean"], "std": r["std"], "accuracies": r["accuracies"]} for m, r in ev.items()}
    if "full-data" in base:
        summary["full-data"] = {k: base["full-data"][k] for k in ("mean", "std", "accuracies")}
    (root / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (root / "config.json").write_text(config_echo(cfg), encoding="utf-8")
    return root


COMMANDS = {
    "gen-data": cmd_gen_data,
    "pretrain-codec": cmd_pretrain_codec,
    "distill": cmd_distill,
    "eval": cmd_eval,
    "baseline": cmd_baseline,
    "analyze": cmd_analyze,
    "gumbel-check": cmd_gumbel_check,
    "grad-check": cmd_grad_check,
    "reproduce": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vidcompress", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON run config (defaults apply to missing keys)")
    parser.add_argument("--out", help="output root; overrides out_dir and $" + OUT_ENV)
    parser.add_argument("--seed", type=int, help="overrides the top-level seed")
    return parser


def _fail(code: int, payload: dict) -> int:
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        user = {}
        if args.config:
            try:
                user = json.loads(Path(args.config).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError(f"cannot read config {args.config}: {e}") from None
        if args.out is not None:
            user = {**user, "out_dir": args.out}
        if args.seed is not None:
            user = {**user, "seed": args.seed}
        cfg = resolve_config(user)
    except ConfigError as e:
        return _fail(2, {"error": "config", "key": e.key, "message": str(e)})
    try:
        path = COMMANDS[args.command](cfg)
    except Exception as e:  # noqa: BLE001 - reported as structured failure
        return _fail(1, {"error": "runtime", "type": type(e).__name__, "message": str(e)})
    print(json.dumps({"command": args.command, "out": str(path)}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
