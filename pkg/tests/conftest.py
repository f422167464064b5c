"""Shared fixtures.

The full method sweep is expensive (100 training runs), so it is computed once
per session and shared between the trainer tests and the acceptance tests.
"""

from __future__ import annotations

import time

import pytest

from domaug.data import GeneratorConfig, generate
from domaug.trainer import METHODS, RunConfig, lodo_run


@pytest.fixture(scope="session")
def default_dataset():
    """The default benchmark: 4 domains, 3 classes, planted shift at scale 2."""
    return generate(GeneratorConfig(seed=0))


@pytest.fixture(scope="session")
def ordering_sweep(default_dataset):
    """Desk-scale sweep over all methods, held-out domains and 5 train seeds.

    Returns per-cell held-out accuracies, the trained erm/ours models of the
    first fold (reused for featurizer-space transport distances), and the
    wall-clock time of the whole sweep.
    """
    t0 = time.perf_counter()
    first_fold = int(default_dataset.domain_ids[0])
    accs: dict[tuple[str, int, int], float] = {}
    models = {}
    for method in METHODS:
        for seed in range(5):
            cfg = RunConfig.desk(method=method, seed=seed)
            result = lodo_run(cfg, ds=default_dataset)
            for held_out, row in result.report.rows.items():
                accs[(method, held_out, seed)] = row.acc
            if method in ("erm", "ours"):
                models[(method, seed)] = result.models[first_fold]
    elapsed = time.perf_counter() - t0
    return {"accs": accs, "models": models, "elapsed": elapsed}
