"""Command-line entry point: generate / train / lodo / analyze / export.

Every subcommand reads one JSON config (mirroring RunConfig), writes only into
--out, and emits an append-only report named {subcommand}-{seed}-{timestamp}.json
whose payload embeds the fully resolved config for reproducibility.  Report
payloads contain no wall-clock data, so identical config + seed gives
byte-identical report content.

Exit codes: 0 ok, 2 usage/config error, 3 data/IO error, 4 numeric abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import estimator as est
from .analysis import pairwise_otdd, pca_project
from .autodiff import NumericError
from .data import ConfigError, DataError, save_csv, save_jsonl, split_leave_one_out
from .director import direction_masks
from .model import load_checkpoint, save_checkpoint
from .trainer import (
    RunConfig,
    evaluate,
    load_run_dataset,
    lodo_run,
    model_from_nets,
    model_to_nets,
    train,
)

SCHEMA_VERSION = 1
SUBCOMMANDS = (
    "generate",
    "train",
    "lodo",
    "analyze-otdd",
    "analyze-directions",
    "export-projection",
)


@dataclass
class CommandSpec:
    subcommand: str
    config: Path | None
    out: Path
    seed: int | None
    quiet: bool


def parse_args(argv=None) -> CommandSpec:
    parser = argparse.ArgumentParser(
        prog="domaug",
        description="Feature-space augmentation for domain generalization: "
        "data generation, training, LODO evaluation, and analysis exports.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument(
            "--config",
            type=Path,
            required=(name != "generate"),
            help="JSON run config; generate falls back to defaults",
        )
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
    ns = parser.parse_args(argv)
    return CommandSpec(
        subcommand=ns.subcommand, config=ns.config, out=ns.out, seed=ns.seed, quiet=ns.quiet
    )


def load_config(spec: CommandSpec) -> RunConfig:
    if spec.config is None:
        cfg = RunConfig()
    else:
        try:
            raw = Path(spec.config).read_text()
        except OSError as exc:
            raise DataError(f"cannot read config {spec.config}: {exc}") from exc
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DataError(f"{spec.config}: invalid JSON: {exc}") from exc
        cfg = RunConfig.from_dict(obj)
    if spec.seed is not None:
        # a single knob for sweeps: rebinds the run seed and the generator seed
        cfg.seed = spec.seed
        cfg.generator = replace(cfg.generator, seed=spec.seed)
    cfg.validate()
    return cfg


def write_report(spec: CommandSpec, cfg: RunConfig, payload: dict) -> Path:
    body = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": spec.subcommand,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
    }
    body.update(payload)
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%f")
    path = spec.out / f"{spec.subcommand}-{cfg.seed}-{stamp}.json"
    n = 0
    while path.exists():  # append-only: never clobber an existing report
        n += 1
        path = spec.out / f"{spec.subcommand}-{cfg.seed}-{stamp}-{n}.json"
    path.write_text(json.dumps(body, indent=2) + "\n")
    if not spec.quiet:
        print(f"wrote {path}")
    return path


def _resolve_held_out(cfg: RunConfig, ds) -> int:
    if cfg.held_out is not None:
        return int(cfg.held_out)
    return int(ds.domain_ids.max())


def _load_model(cfg: RunConfig):
    nets, extra = load_checkpoint(cfg.checkpoint)
    return model_from_nets(nets), extra


def _featurized(cfg: RunConfig, ds) -> np.ndarray:
    """Dataset features, mapped through the checkpoint featurizer when given."""
    if cfg.checkpoint is None:
        return ds.features
    model, _ = _load_model(cfg)
    return model.featurizer.featurize(ds.features).data


def cmd_generate(spec: CommandSpec, cfg: RunConfig) -> None:
    ds = load_run_dataset(cfg)
    csv_path = spec.out / f"dataset-{cfg.generator.seed}.csv"
    jsonl_path = spec.out / f"dataset-{cfg.generator.seed}.jsonl"
    save_csv(ds, csv_path)
    save_jsonl(ds, jsonl_path)
    if not spec.quiet:
        print(f"wrote {csv_path}")
        print(f"wrote {jsonl_path}")
    write_report(
        spec,
        cfg,
        {
            "files": [csv_path.name, jsonl_path.name],
            "n_rows": ds.n,
            "n_features": ds.n_features,
            "domains": ds.domain_ids.tolist(),
            "classes": ds.class_ids.tolist(),
        },
    )


def cmd_train(spec: CommandSpec, cfg: RunConfig) -> None:
    ds = load_run_dataset(cfg)
    held = _resolve_held_out(cfg, ds)
    split = split_leave_one_out(ds, held)
    model, history = train(cfg, split)
    test_row = evaluate(model, split.test)
    ckpt_path = spec.out / f"checkpoint-{held}-{cfg.seed}.json"
    save_checkpoint(
        ckpt_path, model_to_nets(model), extra={"config": cfg.to_dict(), "held_out": held}
    )
    if not spec.quiet:
        print(f"wrote {ckpt_path}")
        print(f"held-out domain {held}: {test_row.as_dict()}")
    write_report(
        spec,
        cfg,
        {
            "held_out": held,
            "metrics": test_row.as_dict(),
            "history": history.as_dict(),
            "checkpoint": ckpt_path.name,
        },
    )


def cmd_lodo(spec: CommandSpec, cfg: RunConfig) -> None:
    result = lodo_run(cfg)
    if not spec.quiet:
        print(f"average: {result.report.average.as_dict()}")
    write_report(spec, cfg, result.as_dict())


def cmd_analyze_otdd(spec: CommandSpec, cfg: RunConfig) -> None:
    ds = load_run_dataset(cfg)
    feats = _featurized(cfg, ds)
    ids, matrix = pairwise_otdd(feats, ds.labels, ds.domains)
    write_report(
        spec,
        cfg,
        {"domain_ids": ids.tolist(), "matrix": matrix.tolist(), "featurized": cfg.checkpoint},
    )


def cmd_analyze_directions(spec: CommandSpec, cfg: RunConfig) -> None:
    ds = load_run_dataset(cfg)
    feats = _featurized(cfg, ds)
    dm = direction_masks(
        feats,
        ds.domains,
        mode=cfg.director_mode,
        score_kind=cfg.score_kind,
        cov_score_variant=cfg.cov_score_variant,
    )
    write_report(
        spec,
        cfg,
        {
            "domain_ids": dm.domain_ids.tolist(),
            "scores": dm.scores.tolist(),
            "masks": dm.masks.tolist(),
            "mode": dm.mode,
            "score_kind": cfg.score_kind,
            "planted_dims": ds.meta.get("planted_dims"),
            "featurized": cfg.checkpoint,
        },
    )


def cmd_export_projection(spec: CommandSpec, cfg: RunConfig) -> None:
    ds = load_run_dataset(cfg)
    if cfg.checkpoint is not None:
        model, _ = _load_model(cfg)
    else:
        model, _ = train(cfg, split_leave_one_out(ds, _resolve_held_out(cfg, ds)))
    z = model.featurizer.featurize(ds.features)
    if model.estimator is not None:
        dm = direction_masks(
            z.data,
            ds.domains,
            mode=cfg.director_mode,
            score_kind=cfg.score_kind,
            cov_score_variant=cfg.cov_score_variant,
        )
        row_masks = np.empty_like(z.data)
        for i, e in enumerate(dm.domain_ids):
            row_masks[ds.domains == e] = dm.masks[i]
        dist = est.predict(model.estimator, z)
        xi = est.sample_xi(dist, np.random.default_rng(cfg.seed))
        z_tilde = est.augment(z, row_masks, xi).data
    else:  # no estimator in the model: identity augmentation, zero-length arrows
        z_tilde = z.data
    proj = pca_project(z.data, k=2)
    xy = proj.coordinates
    xy_aug = proj.transform(z_tilde)

    csv_path = spec.out / f"projection-{cfg.seed}.csv"
    with csv_path.open("w") as fh:
        fh.write("x,y,x_aug,y_aug,dx,dy,label,domain\n")
        for i in range(ds.n):
            dx, dy = (float(v) for v in xy_aug[i] - xy[i])
            fh.write(
                f"{float(xy[i, 0])!r},{float(xy[i, 1])!r},"
                f"{float(xy_aug[i, 0])!r},{float(xy_aug[i, 1])!r},"
                f"{dx!r},{dy!r},{int(ds.labels[i])},{int(ds.domains[i])}\n"
            )
    if not spec.quiet:
        print(f"wrote {csv_path}")
    write_report(
        spec,
        cfg,
        {
            "projection": csv_path.name,
            "explained_variance_ratio": proj.explained_variance_ratio.tolist(),
        },
    )


DISPATCH = {
    "generate": cmd_generate,
    "train": cmd_train,
    "lodo": cmd_lodo,
    "analyze-otdd": cmd_analyze_otdd,
    "analyze-directions": cmd_analyze_directions,
    "export-projection": cmd_export_projection,
}


def run(spec: CommandSpec) -> int:
    cfg = load_config(spec)
    spec.out.mkdir(parents=True, exist_ok=True)
    DISPATCH[spec.subcommand](spec, cfg)
    return 0


def main(argv=None) -> int:
    try:
        spec = parse_args(argv)
    except SystemExit as exc:  # argparse printed usage; 2 on error, 0 on --help
        return int(exc.code or 0)
    try:
        return run(spec)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:  # malformed data reaching a module contract
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
