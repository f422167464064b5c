"""Figure rendering and the `render` command-line entry point.

Three figure kinds, each reading one exported file:

- otdd-heatmap: annotated heatmap of the pairwise domain transport-distance
  matrix from an analyze-otdd report JSON.
- scatter-directions: 2-d feature scatter colored by domain with arrows from
  clean to augmented coordinates, from a projection CSV.
- kde-overlap: per-domain KDE contours on a shared grid with the mean
  pairwise overlap statistic in the title, from a projection CSV.

Rendering is deterministic for identical inputs and style options, and the
output image is the only side effect.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import PlotsError, load_otdd_report, load_projection
from .kde import GRID_SIZE, density_contours, mean_pairwise_overlap

KINDS = ("otdd-heatmap", "scatter-directions", "kde-overlap")


@dataclass
class FigureJob:
    kind: str
    input_path: Path
    output_path: Path
    title: str | None = None
    dpi: int = 150
    gridsize: int = GRID_SIZE

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise PlotsError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if self.dpi < 10 or self.gridsize < 10:
            raise PlotsError("dpi and gridsize must be at least 10")


def _domain_color(index: int):
    return plt.get_cmap("tab10")(index % 10)


def _render_otdd_heatmap(job: FigureJob, ax) -> None:
    report = load_otdd_report(job.input_path)
    image = ax.imshow(report.matrix, cmap="viridis")
    ax.figure.colorbar(image, ax=ax, shrink=0.85)
    ticks = np.arange(len(report.domain_ids))
    ax.set_xticks(ticks, [str(e) for e in report.domain_ids])
    ax.set_yticks(ticks, [str(e) for e in report.domain_ids])
    ax.set_xlabel("domain")
    ax.set_ylabel("domain")
    threshold = report.matrix.max() / 2.0 if report.matrix.size else 0.0
    for i in ticks:
        for j in ticks:
            value = report.matrix[i, j]
            ax.text(
                j,
                i,
                f"{value:.3g}",
                ha="center",
                va="center",
                fontsize=8,
                color="white" if value < threshold else "black",
            )
    ax.set_title(job.title or "pairwise domain transport distance")


def _render_scatter_directions(job: FigureJob, ax) -> None:
    table = load_projection(job.input_path)
    for index, domain in enumerate(np.unique(table.domains)):
        rows = table.domains == domain
        color = _domain_color(index)
        ax.scatter(
            table.xy[rows, 0],
            table.xy[rows, 1],
            s=12,
            alpha=0.6,
            color=color,
            label=f"domain {domain}",
        )
        ax.quiver(
            table.xy[rows, 0],
            table.xy[rows, 1],
            table.arrows[rows, 0],
            table.arrows[rows, 1],
            angles="xy",
            scale_units="xy",
            scale=1.0,
            width=0.0025,
            color=color,
            alpha=0.8,
        )
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(job.title or "projected features with augmentation directions")


def _render_kde_overlap(job: FigureJob, ax) -> None:
    table = load_projection(job.input_path)
    groups = {
        int(domain): table.xy[table.domains == domain]
        for domain in np.unique(table.domains)
    }
    if len(groups) < 2:
        raise PlotsError("kde-overlap needs at least two domains in the projection")
    xs, ys, densities = density_contours(groups, job.gridsize)
    for index, (domain, density) in enumerate(sorted(densities.items())):
        color = _domain_color(index)
        ax.contour(xs, ys, density, levels=5, colors=[color], linewidths=1.0)
        ax.plot([], [], color=color, label=f"domain {domain}")
    overlap = mean_pairwise_overlap(groups, job.gridsize)
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(job.title or f"domain density overlap = {overlap:.3f}")


_RENDERERS = {
    "otdd-heatmap": _render_otdd_heatmap,
    "scatter-directions": _render_scatter_directions,
    "kde-overlap": _render_kde_overlap,
}


def render(job: FigureJob) -> Path:
    """Render one figure; returns the written image path."""
    job.validate()
    fig, ax = plt.subplots(figsize=(6.0, 5.0), constrained_layout=True)
    try:
        _RENDERERS[job.kind](job, ax)
        fig.savefig(job.output_path, dpi=job.dpi, metadata={"Software": "domaug-plots"})
    finally:
        plt.close(fig)
    return Path(job.output_path)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render", description="Render benchmark figures from exported files."
    )
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="input_path", type=Path, required=True)
    parser.add_argument("--out", dest="output_path", type=Path, required=True)
    parser.add_argument("--title", default=None)
    parser.add_argument("--dpi", type=int, default=150)
    parser.add_argument("--gridsize", type=int, default=GRID_SIZE)
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    job = FigureJob(
        kind=ns.kind,
        input_path=ns.input_path,
        output_path=ns.output_path,
        title=ns.title,
        dpi=ns.dpi,
        gridsize=ns.gridsize,
    )
    try:
        path = render(job)
    except PlotsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
