"""Command-line entry point wiring the pipeline stages together.

Subcommands: synth, ingest, build-graph, train, eval, predict, viz.
Configuration comes from a flat key=value file (unknown keys rejected);
command-line flags override file values. Every run writes a reproducibility
stamp (config echo, seed, input-file hashes) next to its outputs. Exit
codes: 0 success, 1 validation or usage error, 2 unexpected failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import ConfigError, WebdetectError

_TRAIN_KEYS = {
    "lr", "batch_pages", "weight_decay", "max_epochs", "bg_sample_frac",
    "early_stop_patience", "seed", "k", "use_positional", "use_context", "bg_sampling",
}
_MODEL_KEYS = {
    "backbone", "pretrained_backbone", "freeze_backbone", "input_size", "proj_dim",
    "pos_dim", "backbone_channels", "dropout", "head_hidden", "use_extra_features",
    "leaky_slope", "num_classes",
}
_SYNTH_KEYS = {"n_pages", "n_domains", "elements_per_page", "n_decoy_prices", "seed", "context_gap"}


def _coerce(raw: str):
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw.strip()


def parse_config_file(path: str | Path) -> dict:
    """Flat `key = value` lines; # starts a comment; blank lines ignored."""
    out: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line.strip()!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = _coerce(value)
    return out


def _check_keys(cfg: dict, allowed: set[str], context: str) -> None:
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(f"unknown {context} keys: {', '.join(unknown)}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_stamp(out_dir: Path, command: str, config: dict, inputs: Sequence[Path], seed: Optional[int]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = {
        "command": command,
        "seed": seed,
        "config": {k: config[k] for k in sorted(config)},
        "inputs": {str(p): _sha256(p) for p in inputs},
    }
    (out_dir / "run_stamp.json").write_text(json.dumps(stamp, indent=2, sort_keys=True))


def _resolve(workdir: Optional[str], value: Optional[str]) -> Optional[Path]:
    if value is None:
        return None
    p = Path(value)
    if workdir and not p.is_absolute():
        return Path(workdir) / p
    return p


def _load_config(args) -> dict:
    cfg = parse_config_file(_resolve(args.workdir, args.config)) if args.config else {}
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def _cmd_synth(args) -> int:
    from .synth import SynthSpec, generate

    cfg = _load_config(args)
    if args.spec:
        file_cfg = parse_config_file(_resolve(args.workdir, args.spec))
        file_cfg.update(cfg)
        cfg = file_cfg
    _check_keys(cfg, _SYNTH_KEYS, "synth")
    spec = SynthSpec(**cfg)
    out = _resolve(args.workdir, args.out)
    dataset = generate(spec, out)
    _write_stamp(out, "synth", dataclasses.asdict(spec), [], spec.seed)
    print(f"wrote {len(dataset.layouts)} pages to {out}")
    return 0


def _load_pages(args, need_labels: bool):
    from .ingest import load_dataset

    manifest = _resolve(args.workdir, args.data)
    labels = _resolve(args.workdir, getattr(args, "labels", None))
    if need_labels and labels is None:
        raise ConfigError("this command needs --labels")
    pages = load_dataset(manifest, labels)
    inputs = [manifest] + ([labels] if labels else [])
    return pages, inputs


def _cmd_ingest(args) -> int:
    from .ingest import label_counts

    pages, inputs = _load_pages(args, need_labels=False)
    detail = [
        {"page_id": p.page_id, "domain": p.domain, "n_elements": len(p.elements), "fully_labeled": p.fully_labeled}
        for p in pages
    ]
    totals: dict[str, int] = {}
    for p in pages:
        for label, n in label_counts(p).items():
            totals[label.name.lower()] = totals.get(label.name.lower(), 0) + n
    report = {"pages": len(pages), "elements": sum(d["n_elements"] for d in detail), "label_totals": totals, "detail": detail}
    out = _resolve(args.workdir, args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True))
    _write_stamp(out.parent, "ingest", {}, inputs, None)
    print(f"validated {len(pages)} pages, {report['elements']} elements")
    return 0


def _cmd_build_graph(args) -> int:
    from .graph import build_graph

    pages, inputs = _load_pages(args, need_labels=False)
    graphs = {p.page_id: build_graph(p, args.k).to_json_dict() for p in pages}
    out = _resolve(args.workdir, args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(graphs, indent=2, sort_keys=True))
    _write_stamp(out.parent, "build-graph", {"k": args.k}, inputs, None)
    print(f"wrote {len(graphs)} graphs (k={args.k}) to {out}")
    return 0


def _split_train_config(cfg: dict):
    from .model import ModelConfig
    from .train import TrainConfig

    _check_keys(cfg, _TRAIN_KEYS | _MODEL_KEYS, "train")
    train_kw = {k: v for k, v in cfg.items() if k in _TRAIN_KEYS}
    model_kw = {k: v for k, v in cfg.items() if k in _MODEL_KEYS}
    return TrainConfig(**train_kw), ModelConfig(**model_kw)


def _fold_pages(pages, n_folds: int, fold: int, seed: int):
    from .evaluate import make_folds, split_pages

    folds = make_folds([(p.page_id, p.domain) for p in pages], n_folds=n_folds, seed=seed)
    if not 0 <= fold < len(folds):
        raise ConfigError(f"fold must be in [0, {len(folds)})")
    return folds[fold], split_pages(pages, folds[fold])


def _cmd_train(args) -> int:
    from .model import save_checkpoint
    from .train import train

    cfg = _load_config(args)
    train_cfg, model_cfg = _split_train_config(cfg)
    pages, inputs = _load_pages(args, need_labels=True)
    fold, (train_pages, val_pages, _) = _fold_pages(pages, args.n_folds, args.fold, train_cfg.seed)
    out = _resolve(args.workdir, args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, reports = train(train_pages, val_pages, model_cfg, train_cfg, log_path=out / "epochs.jsonl")
    save_checkpoint(out / "model.pt", model)
    best = max(reports, key=lambda r: r.mean_val_acc)
    summary = {
        "epochs_run": len(reports),
        "best_epoch": best.epoch,
        "val_price_acc": best.val_price_acc,
        "val_title_acc": best.val_title_acc,
        "val_image_acc": best.val_image_acc,
        "mean_val_acc": best.mean_val_acc,
        "fold": fold.fold_id,
        "train_pages": len(train_pages),
        "val_pages": len(val_pages),
    }
    (out / "train_report.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    _write_stamp(out, "train", {**cfg, "n_folds": args.n_folds, "fold": args.fold}, inputs, train_cfg.seed)
    print(f"trained {len(reports)} epochs; best mean val accuracy {best.mean_val_acc:.4f}")
    return 0


def _cmd_eval(args) -> int:
    import numpy as np

    from .evaluate import accuracy_report, make_folds, predict_pages, split_pages
    from .model import load_checkpoint

    pages, inputs = _load_pages(args, need_labels=True)
    ckpt = _resolve(args.workdir, args.ckpt)
    model = load_checkpoint(ckpt)
    folds = make_folds([(p.page_id, p.domain) for p in pages], n_folds=args.n_folds, seed=args.seed or 0)
    per_fold = []
    for fold in folds:
        _, _, test_pages = split_pages(pages, fold)
        preds = predict_pages(model, test_pages, args.k)
        acc = accuracy_report(preds, test_pages, k=args.topk)
        per_fold.append({"fold": fold.fold_id, "test_pages": len(test_pages), **acc})
    report = {
        "folds": per_fold,
        "mean": {c: float(np.mean([f[c] for f in per_fold])) for c in ("price", "title", "image")},
        "std": {c: float(np.std([f[c] for f in per_fold])) for c in ("price", "title", "image")},
        "k": args.k,
        "topk": args.topk,
    }
    out = _resolve(args.workdir, args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True))
    _write_stamp(out.parent, "eval", {"k": args.k, "topk": args.topk, "n_folds": args.n_folds}, inputs + [ckpt], args.seed)
    print(json.dumps(report["mean"], sort_keys=True))
    return 0


def _cmd_predict(args) -> int:
    from .evaluate import predict_pages
    from .model import load_checkpoint

    pages, inputs = _load_pages(args, need_labels=False)
    ckpt = _resolve(args.workdir, args.ckpt)
    model = load_checkpoint(ckpt)
    preds = predict_pages(model, pages, args.k)
    payload = {
        p.page_id: {"price_id": p.price_id, "title_id": p.title_id, "image_id": p.image_id} for p in preds
    }
    out = _resolve(args.workdir, args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2, sort_keys=True))
    _write_stamp(out.parent, "predict", {"k": args.k}, inputs + [ckpt], None)
    print(f"predicted {len(preds)} pages")
    return 0


def _cmd_viz(args) -> int:
    from .graph import build_graph
    from .model import forward_page, load_checkpoint
    from .viz import save_attention

    pages, inputs = _load_pages(args, need_labels=False)
    by_id = {p.page_id: p for p in pages}
    if args.page not in by_id:
        raise ConfigError(f"page {args.page!r} not in dataset")
    page = by_id[args.page]
    model = load_checkpoint(_resolve(args.workdir, args.ckpt))
    graph = build_graph(page, args.k)
    _, attn = forward_page(model, page, graph)
    out = _resolve(args.workdir, args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{args.page}_el{args.element}"
    payload = save_attention(
        page, args.element, attn[args.element],
        out / f"{stem}.png", out / f"{stem}.json", threshold=args.threshold,
    )
    _write_stamp(out, "viz", {"page": args.page, "element": args.element, "threshold": args.threshold}, inputs, None)
    print(f"activated {len(payload['activated'])} of {len(payload['scores'])} neighbors")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="webdetect", description="Context-aware webpage element detection pipeline")
    parser.add_argument("--workdir", help="base directory for relative paths")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, labels=True, seed=True, config=True):
        p.add_argument("--workdir", help="base directory for relative paths")
        if data:
            p.add_argument("--data", required=True, help="dataset manifest CSV")
        if labels:
            p.add_argument("--labels", help="label manifest CSV")
        if seed:
            p.add_argument("--seed", type=int, help="override config seed")
        if config:
            p.add_argument("--config", help="flat key=value config file")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--workdir")
    p.add_argument("--spec", help="key=value file of generator settings")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="alias for --spec, overriding it")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="validate a dataset and report element counts")
    common(p, seed=False, config=False)
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("build-graph", help="emit neighbor graphs as JSON")
    common(p, seed=False, config=False)
    p.add_argument("--k", type=int, default=24)
    p.add_argument("--out", required=True, help="graphs JSON path")
    p.set_defaults(func=_cmd_build_graph)

    p = sub.add_parser("train", help="train a detector")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-folds", type=int, default=5)
    p.add_argument("--fold", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="cross-domain accuracy per fold")
    common(p, config=False)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--k", type=int, default=24)
    p.add_argument("--topk", type=int, default=1)
    p.add_argument("--n-folds", type=int, default=5)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", help="emit per-page winners")
    common(p, seed=False, config=False)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=24)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("viz", help="attention overlay for one element")
    common(p, seed=False, config=False)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--page", required=True)
    p.add_argument("--element", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--k", type=int, default=24)
    p.add_argument("--threshold", type=float, default=0.05)
    p.set_defaults(func=_cmd_viz)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except WebdetectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # genuinely unexpected
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
