"""Command line interface: gen-data, train, eval, ablate.

Config files are flat `key = value` text. Keys mirror TrainConfig and
AugmentConfig field names; generator settings carry a gen_ prefix; an
experiment additionally names out_dir, exactly one dataset source
(data_csv or a gen_* block), and the ablation toggles. Unknown keys
are rejected. The resolved snapshot written next to the run artifacts
spells out every value, defaults included, and can be fed back to
`train --config` to reproduce the run.

Exit codes: 0 on success, 2 for configuration or validation problems,
3 for numeric failures during training.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .data import AugmentConfig, Dataset, GenConfig, gen_synthetic, load_csv, save_csv
from .errors import ConfigError, DimensionError, GenerationError, MetricError, NumericError, ParseError
from .evaluation import evaluate_params, export_histogram, write_metrics
from .model import load_checkpoint, save_checkpoint
from .trainer import TrainConfig, TrainHistory, train

TOGGLE_KEYS = ("disable_socr", "disable_em", "disable_fixmatch", "socr_on_closed_head")
AUGMENT_KEYS = tuple(f.name for f in fields(AugmentConfig))
TRAIN_KEYS = ("b", "mu", "lam_em", "lam_oc", "lam_fm", "tau", "e_fix", "e_max", "i_max",
              "lr", "momentum", "seed", "hidden", "eval_every") + AUGMENT_KEYS
GEN_KEYS = tuple(f"gen_{f.name}" for f in fields(GenConfig)) + ("gen_seed",)


@dataclass
class ExperimentSpec:
    train: TrainConfig
    out_dir: str
    data_csv: str | None
    gen: GenConfig | None
    gen_seed: int
    disable_socr: bool = False
    disable_em: bool = False
    disable_fixmatch: bool = False
    socr_on_closed_head: bool = False

    def effective_train_config(self) -> TrainConfig:
        """Apply ablation toggles. Toggles never touch each other's
        settings; each one only zeroes its own weight or reroutes the
        consistency head."""
        cfg = self.train
        if self.disable_socr:
            cfg = replace(cfg, lam_oc=0.0)
        if self.disable_em:
            cfg = replace(cfg, lam_em=0.0)
        if self.disable_fixmatch:
            cfg = replace(cfg, lam_fm=0.0)
        if self.socr_on_closed_head:
            cfg = replace(cfg, socr_head="closed")
        return cfg


def parse_kv_file(path) -> dict[str, str]:
    """Read `key = value` lines; blank lines and #-comments are skipped."""
    result: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ParseError(f"cannot read config {path}: {e}") from e
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ParseError(f"{path}:{lineno}: empty key")
        if key in result:
            raise ParseError(f"{path}:{lineno}: duplicate key {key!r}")
        result[key] = value.strip()
    return result


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError as e:
        raise ParseError(f"key {key}: expected an integer, got {value!r}") from e


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError as e:
        raise ParseError(f"key {key}: expected a number, got {value!r}") from e


def _parse_bool(key: str, value: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ParseError(f"key {key}: expected true/false, got {value!r}")


def _parse_hidden(value: str) -> tuple[int, ...]:
    if not value:
        return ()
    try:
        return tuple(int(part.strip()) for part in value.split(","))
    except ValueError as e:
        raise ParseError(f"key hidden: expected comma-separated integers, got {value!r}") from e


def _build_train_config(kv: dict[str, str]) -> TrainConfig:
    cfg = TrainConfig()
    ints = {"b", "mu", "e_fix", "e_max", "i_max", "seed", "eval_every"}
    floats = {"lam_em", "lam_oc", "lam_fm", "tau", "lr", "momentum"}
    updates: dict = {}
    aug_updates: dict = {}
    for key, value in kv.items():
        if key in ints:
            updates[key] = _parse_int(key, value)
        elif key in floats:
            updates[key] = _parse_float(key, value)
        elif key == "hidden":
            updates[key] = _parse_hidden(value)
        elif key in AUGMENT_KEYS:
            aug_updates[key] = _parse_float(key, value)
    if aug_updates:
        updates["augment"] = replace(cfg.augment, **aug_updates)
    return replace(cfg, **updates)


def _build_gen_config(kv: dict[str, str]) -> GenConfig:
    cfg = GenConfig()
    updates: dict = {}
    for f in fields(GenConfig):
        key = f"gen_{f.name}"
        if key not in kv:
            continue
        if f.type == "float":
            updates[f.name] = _parse_float(key, kv[key])
        else:
            updates[f.name] = _parse_int(key, kv[key])
    return replace(cfg, **updates)


def resolve_spec(path, seed_override: int | None = None, out_override: str | None = None) -> ExperimentSpec:
    """Load an experiment file, fill in defaults, and validate."""
    kv = parse_kv_file(path)
    known = set(TRAIN_KEYS) | set(GEN_KEYS) | set(TOGGLE_KEYS) | {"out_dir", "data_csv"}
    unknown = sorted(set(kv) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    base = Path(path).resolve().parent
    gen_keys_present = [k for k in kv if k in GEN_KEYS]
    data_csv = kv.get("data_csv")
    if data_csv and gen_keys_present:
        raise ConfigError("specify exactly one dataset source: data_csv or gen_* keys, not both")
    if not data_csv and not gen_keys_present:
        raise ConfigError("specify a dataset source: data_csv or gen_* keys")
    out_dir = out_override if out_override is not None else kv.get("out_dir")
    if not out_dir:
        raise ConfigError("out_dir is required (in the config or via --out)")

    train_cfg = _build_train_config({k: v for k, v in kv.items() if k in TRAIN_KEYS})
    if seed_override is not None:
        train_cfg = replace(train_cfg, seed=seed_override)
    train_cfg.validate()

    gen_cfg = None
    gen_seed = _parse_int("gen_seed", kv["gen_seed"]) if "gen_seed" in kv else 0
    if gen_keys_present:
        gen_cfg = _build_gen_config(kv)
        gen_cfg.validate()

    spec = ExperimentSpec(
        train=train_cfg,
        out_dir=str(out_dir),
        data_csv=str((base / data_csv).resolve()) if data_csv else None,
        gen=gen_cfg,
        gen_seed=gen_seed,
        disable_socr=_parse_bool("disable_socr", kv["disable_socr"]) if "disable_socr" in kv else False,
        disable_em=_parse_bool("disable_em", kv["disable_em"]) if "disable_em" in kv else False,
        disable_fixmatch=_parse_bool("disable_fixmatch", kv["disable_fixmatch"]) if "disable_fixmatch" in kv else False,
        socr_on_closed_head=_parse_bool("socr_on_closed_head", kv["socr_on_closed_head"])
        if "socr_on_closed_head" in kv
        else False,
    )
    return spec


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def snapshot_text(spec: ExperimentSpec) -> str:
    """Every setting the run used, defaults spelled out."""
    lines = [f"out_dir = {spec.out_dir}"]
    if spec.data_csv is not None:
        lines.append(f"data_csv = {spec.data_csv}")
    else:
        for f in fields(GenConfig):
            lines.append(f"gen_{f.name} = {_format_value(getattr(spec.gen, f.name))}")
        lines.append(f"gen_seed = {spec.gen_seed}")
    t = spec.train
    for key in ("b", "mu", "lam_em", "lam_oc", "lam_fm", "tau", "e_fix", "e_max", "i_max",
                "lr", "momentum", "seed", "hidden", "eval_every"):
        lines.append(f"{key} = {_format_value(getattr(t, key))}")
    for key in AUGMENT_KEYS:
        lines.append(f"{key} = {_format_value(getattr(t.augment, key))}")
    for key in TOGGLE_KEYS:
        lines.append(f"{key} = {_format_value(getattr(spec, key))}")
    return "\n".join(lines) + "\n"


def load_spec_dataset(spec: ExperimentSpec) -> Dataset:
    if spec.data_csv is not None:
        return load_csv(spec.data_csv)
    return gen_synthetic(spec.gen, spec.gen_seed)


def _train_and_save(spec: ExperimentSpec, dataset: Dataset, out_dir: Path) -> TrainHistory:
    out_dir.mkdir(parents=True, exist_ok=True)
    history = train(dataset, spec.effective_train_config())
    snapshot = snapshot_text(replace(spec, out_dir=str(out_dir)))
    (out_dir / "resolved.spec").write_text(snapshot)
    save_checkpoint(out_dir / "checkpoint.npz", history.final_params, config=parse_kv_text_inline(snapshot))
    write_metrics(out_dir / "metrics.txt", history.records)
    return history


def parse_kv_text_inline(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in text.splitlines():
        if line.strip() and "=" in line:
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def cmd_gen_data(args) -> int:
    kv = parse_kv_file(args.config)
    unknown = sorted(set(kv) - set(GEN_KEYS))
    if unknown:
        raise ConfigError(f"unknown generator keys: {', '.join(unknown)}")
    cfg = _build_gen_config(kv)
    cfg.validate()
    seed = args.seed if args.seed is not None else (_parse_int("gen_seed", kv["gen_seed"]) if "gen_seed" in kv else 0)
    ds = gen_synthetic(cfg, seed)
    save_csv(ds, args.out)
    print(f"wrote {args.out}: labeled={len(ds.labeled)} unlabeled={len(ds.unlabeled)} test={len(ds.test)}")
    return 0


def cmd_train(args) -> int:
    spec = resolve_spec(args.config, seed_override=args.seed, out_override=args.out)
    dataset = load_spec_dataset(spec)
    history = _train_and_save(spec, dataset, Path(spec.out_dir))
    final = history.records[-1]
    print(f"trained {history.steps} steps; final: err_inlier={final.err_inlier:.4f} "
          f"auroc_seen={_fmt_opt(final.auroc_seen)} auroc_unseen={_fmt_opt(final.auroc_unseen)}")
    print(f"artifacts in {spec.out_dir}: checkpoint.npz metrics.txt resolved.spec")
    return 0


def _fmt_opt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def cmd_eval(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    dataset = load_csv(args.data)
    if dataset.d_in != params.d_in:
        raise ConfigError(f"dimension mismatch: checkpoint expects d_in={params.d_in}, data has {dataset.d_in}")
    if dataset.k_classes != params.k_classes:
        raise ConfigError(
            f"class count mismatch: checkpoint expects k={params.k_classes}, data has {dataset.k_classes}"
        )
    result = evaluate_params(params, dataset.test)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    parts = [f"err_inlier={repr(result.err_inlier)}"]
    if result.auroc_seen is not None:
        parts.append(f"auroc_seen={repr(result.auroc_seen)}")
    if result.auroc_unseen is not None:
        parts.append(f"auroc_unseen={repr(result.auroc_unseen)}")
    line = " ".join(parts)
    (out_dir / "eval.txt").write_text(line + "\n")
    export_histogram(result.scores, result.is_outlier, args.bins, out_dir / "histogram.csv")
    print(line)
    return 0


def cmd_ablate(args) -> int:
    """Train the consistency term on and off under one seed, pseudo-label
    loss disabled in both runs, and report the AUROC pair."""
    spec = resolve_spec(args.config, seed_override=args.seed, out_override=args.out)
    dataset = load_spec_dataset(spec)
    out_dir = Path(spec.out_dir)
    rows = []
    for name, disable in (("with_socr", False), ("without_socr", True)):
        variant = replace(spec, disable_socr=disable, disable_fixmatch=True)
        history = _train_and_save(variant, dataset, out_dir / name)
        final = history.records[-1]
        if final.auroc_seen is None:
            raise MetricError("ablation needs seen outliers in the test split")
        rows.append((name, spec.train.seed, variant.effective_train_config().lam_oc, final.auroc_seen))
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "ablation.csv", "w") as fh:
        fh.write("variant,seed,lam_oc,auroc_seen\n")
        for name, seed, lam_oc, score in rows:
            fh.write(f"{name},{seed},{repr(lam_oc)},{repr(score)}\n")
    for name, seed, lam_oc, score in rows:
        print(f"{name}: seed={seed} lam_oc={lam_oc} auroc_seen={score:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="openset-ssl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    p.add_argument("--config", required=True, help="generator config (gen_* keys)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=None, help="override gen_seed")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model from an experiment spec")
    p.add_argument("--config", required=True, help="experiment spec file")
    p.add_argument("--out", default=None, help="override out_dir")
    p.add_argument("--seed", type=int, default=None, help="override the training seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset CSV with a test split")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--bins", type=int, default=20, help="histogram bin count")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="compare training with and without the consistency term")
    p.add_argument("--config", required=True, help="experiment spec file")
    p.add_argument("--out", default=None, help="override out_dir")
    p.add_argument("--seed", type=int, default=None, help="override the training seed")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except (ConfigError, GenerationError, DimensionError, MetricError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))
