#!/usr/bin/env python3
"""Produce the file inputs the plotting package consumes.

Runs the analysis subcommands of the main CLI on a small benchmark instance
and leaves three artifacts in --out: a pairwise transport-distance report, a
direction-score report, and a 2-d projection CSV with augmentation arrows.

Usage:
    python3 scripts/make_figure_inputs.py --out figures/inputs/
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from domaug.cli import main as domaug_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--full", action="store_true", help="use the full-size benchmark and schedule"
    )
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    cfg = {
        "method": "ours",
        "seed": args.seed,
        "generator": {"seed": args.seed},
    }
    if not args.full:
        cfg.update(
            {
                "epochs": 5,
                "batch_size": 60,
                "hidden": [16],
                "feature_dim": 8,
                "estimator_hidden": 16,
            }
        )
        cfg["generator"].update({"n_per_class_per_domain": 50})
    cfg_path = args.out / "config.json"
    cfg_path.write_text(json.dumps(cfg, indent=2) + "\n")

    for sub in ("analyze-otdd", "analyze-directions", "export-projection"):
        code = domaug_main([sub, "--config", str(cfg_path), "--out", str(args.out)])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
