"""Synthetic multi-domain datasets with planted shifts, file IO, LODO splits.

The generator plants the domain shift in a known subset of feature dimensions
so the direction selector can be validated against ground truth: invariant
dimensions carry the same class signal in every domain, spurious dimensions
carry a per-domain offset plus a class correlation that is re-randomized in
each domain (so it never transfers to a held-out domain).

The spurious block is deliberately attractive in-domain: it is painted from
the observed (possibly noise-flipped) label with a per-domain agreement
probability, so inside a training domain it predicts the target better than
the invariant block, whose usefulness is capped by the label noise.  Per-
domain agreement and noise scale both vary across domains, which gives
risk-variance penalties and covariance-deviation scores something to grip.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    n_domains: int = 4
    n_classes: int = 3
    n_per_class_per_domain: int = 200
    invariant_dims: int = 8
    spurious_dims: int = 8
    class_separation: float = 1.2
    domain_shift_scale: float = 2.0
    label_noise: float = 0.1
    correlation_scale: float = 1.0  # spurious class-correlation amplitude, x shift
    agreement_low: float = 0.75  # per-domain label/spurious agreement prob range
    agreement_high: float = 0.95
    spurious_noise: float = 0.3  # base noise sd on spurious dims
    noise_heterogeneity: float = 1.0  # per-domain noise-scale spread, x shift
    seed: int = 0

    def validate(self) -> None:
        if self.n_domains < 1 or self.n_classes < 2:
            raise ConfigError("need n_domains >= 1 and n_classes >= 2")
        if self.n_per_class_per_domain < 1:
            raise ConfigError("n_per_class_per_domain must be positive")
        if self.invariant_dims < 1 or self.spurious_dims < 0:
            raise ConfigError("invariant_dims >= 1 and spurious_dims >= 0 required")
        if self.class_separation <= 0:
            raise ConfigError("class_separation must be > 0")
        if self.domain_shift_scale < 0:
            raise ConfigError("domain_shift_scale must be >= 0")
        if not 0.0 <= self.label_noise < 0.5:
            raise ConfigError("label_noise must be in [0, 0.5)")
        if self.correlation_scale < 0:
            raise ConfigError("correlation_scale must be >= 0")
        if not 0.0 <= self.agreement_low <= self.agreement_high <= 1.0:
            raise ConfigError("need 0 <= agreement_low <= agreement_high <= 1")
        if self.spurious_noise <= 0:
            raise ConfigError("spurious_noise must be > 0")
        if self.noise_heterogeneity < 0:
            raise ConfigError("noise_heterogeneity must be >= 0")

    @property
    def n_features(self) -> int:
        return self.invariant_dims + self.spurious_dims


@dataclass
class MultiDomainDataset:
    features: np.ndarray  # (N, F) float64
    labels: np.ndarray  # (N,) int
    domains: np.ndarray  # (N,) int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.intp)
        self.domains = np.asarray(self.domains, dtype=np.intp)
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.domains.shape != (n,):
            raise DataError(
                f"misaligned lengths: features {n}, labels {self.labels.shape}, "
                f"domains {self.domains.shape}"
            )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def domain_ids(self) -> np.ndarray:
        return np.unique(self.domains)

    @property
    def class_ids(self) -> np.ndarray:
        return np.unique(self.labels)

    def restrict(self, mask: np.ndarray) -> "MultiDomainDataset":
        return MultiDomainDataset(
            self.features[mask], self.labels[mask], self.domains[mask], dict(self.meta)
        )


@dataclass
class LodoSplit:
    train: MultiDomainDataset
    test: MultiDomainDataset
    held_out_id: int


def generate(config: GeneratorConfig) -> MultiDomainDataset:
    """Deterministic planted-shift sampler; a pure function of the config."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    e_dom, c_cls = config.n_domains, config.n_classes
    f_inv, f_sp = config.invariant_dims, config.spurious_dims
    n_pc = config.n_per_class_per_domain
    shift = config.domain_shift_scale

    # class signal shared by all domains; drawn once
    mu_inv = config.class_separation * rng.standard_normal((c_cls, f_inv))
    # per-domain structure; everything that separates the domains vanishes at
    # shift 0: the offsets, the class correlations and the noise-scale spread
    delta = shift * rng.standard_normal((e_dom, f_sp))
    nu = config.correlation_scale * shift * rng.standard_normal((e_dom, c_cls, f_sp))
    agreement = config.agreement_low + (
        config.agreement_high - config.agreement_low
    ) * rng.random(e_dom)
    noise_scale = config.spurious_noise * (
        1.0 + config.noise_heterogeneity * shift * rng.random(e_dom)
    )

    blocks, labels, domains = [], [], []
    for e in range(e_dom):
        for c in range(c_cls):
            # observed labels: flipped uniformly to another class w.p. label_noise
            y = np.full(n_pc, c, dtype=np.intp)
            if config.label_noise > 0.0:
                flip = rng.random(n_pc) < config.label_noise
                offsets = rng.integers(1, c_cls, size=n_pc)
                y = np.where(flip, (y + offsets) % c_cls, y)
            # the spurious block tracks the observed label w.p. agreement[e],
            # otherwise a uniformly random class
            agree = rng.random(n_pc) < agreement[e]
            painted = np.where(agree, y, rng.integers(0, c_cls, size=n_pc))
            inv = mu_inv[c] + rng.standard_normal((n_pc, f_inv))
            sp = delta[e] + nu[e, painted] + noise_scale[e] * rng.standard_normal((n_pc, f_sp))
            blocks.append(np.concatenate([inv, sp], axis=1))
            labels.append(y)
            domains.append(np.full(n_pc, e, dtype=np.intp))
    features = np.concatenate(blocks, axis=0)
    labels = np.concatenate(labels)
    domains = np.concatenate(domains)

    meta = {
        "generator": config.__dict__.copy(),
        "planted_dims": list(range(f_inv, f_inv + f_sp)),
        "domain_agreements": agreement.tolist(),
        "domain_noise_scales": noise_scale.tolist(),
        "seed": config.seed,
    }
    return MultiDomainDataset(features, labels, domains, meta)


def split_leave_one_out(ds: MultiDomainDataset, held_out: int) -> LodoSplit:
    present = ds.domain_ids
    if held_out not in present:
        raise DataError(f"held-out domain {held_out} not in dataset domains {present.tolist()}")
    test_mask = ds.domains == held_out
    return LodoSplit(ds.restrict(~test_mask), ds.restrict(test_mask), int(held_out))


def stratified_holdout(
    ds: MultiDomainDataset, fraction: float, seed: int
) -> tuple[MultiDomainDataset, MultiDomainDataset]:
    """Split off ``fraction`` of each (domain, class) cell for validation."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError("holdout fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    val_mask = np.zeros(ds.n, dtype=bool)
    for e in ds.domain_ids:
        for c in ds.class_ids:
            idx = np.flatnonzero((ds.domains == e) & (ds.labels == c))
            if idx.size == 0:
                continue
            k = max(1, int(round(fraction * idx.size)))
            picked = rng.permutation(idx)[:k]
            val_mask[picked] = True
    return ds.restrict(~val_mask), ds.restrict(val_mask)


# ---------------------------------------------------------------------------
# file formats: CSV header f0..f{F-1},label,domain; JSONL objects per row


def save_csv(ds: MultiDomainDataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(ds.n_features)] + ["label", "domain"])
        for i in range(ds.n):
            writer.writerow(
                [repr(float(v)) for v in ds.features[i]]
                + [int(ds.labels[i]), int(ds.domains[i])]
            )


def save_jsonl(ds: MultiDomainDataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for i in range(ds.n):
            fh.write(
                json.dumps(
                    {
                        "features": ds.features[i].tolist(),
                        "label": int(ds.labels[i]),
                        "domain": int(ds.domains[i]),
                    }
                )
                + "\n"
            )


def _densify(values: np.ndarray, what: str) -> tuple[np.ndarray, dict[int, int]]:
    uniq = np.unique(values)
    mapping = {int(v): i for i, v in enumerate(uniq)}
    dense = np.array([mapping[int(v)] for v in values], dtype=np.intp)
    return dense, mapping


def load_features(path: str | Path, format: str | None = None) -> MultiDomainDataset:
    """Load a feature file; labels/domains are re-indexed densely from 0.

    The original-id -> dense-id mappings are recorded in ``meta``.
    """
    path = Path(path)
    if format is None:
        format = "jsonl" if path.suffix == ".jsonl" else "csv"
    if format == "csv":
        feats, labels, domains = _load_csv(path)
    elif format == "jsonl":
        feats, labels, domains = _load_jsonl(path)
    else:
        raise DataError(f"unknown format {format!r} (expected csv or jsonl)")
    if len(feats) == 0:
        raise DataError(f"{path}: no data rows")
    labels, label_map = _densify(np.asarray(labels), "label")
    domains, domain_map = _densify(np.asarray(domains), "domain")
    meta = {"source": str(path), "label_map": label_map, "domain_map": domain_map}
    return MultiDomainDataset(np.asarray(feats, dtype=np.float64), labels, domains, meta)


def _load_csv(path: Path):
    feats, labels, domains = [], [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 3 or header[-2:] != ["label", "domain"]:
            raise DataError(f"{path}: header must be f0,...,f{{F-1}},label,domain")
        n_feat = len(header) - 2
        expected = [f"f{i}" for i in range(n_feat)]
        if header[:-2] != expected:
            raise DataError(f"{path}: feature columns must be named f0..f{n_feat - 1}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != n_feat + 2:
                raise DataError(f"{path}:{lineno}: expected {n_feat + 2} columns, got {len(row)}")
            try:
                feats.append([float(v) for v in row[:n_feat]])
            except ValueError:
                bad = next(i for i, v in enumerate(row[:n_feat]) if not _is_float(v))
                raise DataError(
                    f"{path}:{lineno}: non-numeric feature in column f{bad}: {row[bad]!r}"
                ) from None
            try:
                labels.append(int(row[n_feat]))
                domains.append(int(row[n_feat + 1]))
            except ValueError:
                raise DataError(f"{path}:{lineno}: label/domain must be integers") from None
    return feats, labels, domains


def _is_float(v: str) -> bool:
    try:
        float(v)
        return True
    except ValueError:
        return False


def _load_jsonl(path: Path):
    feats, labels, domains = [], [], []
    width = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            missing = {"features", "label", "domain"} - set(obj)
            if missing:
                raise DataError(f"{path}:{lineno}: missing fields {sorted(missing)}")
            row = obj["features"]
            if not isinstance(row, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in row
            ):
                raise DataError(f"{path}:{lineno}: features must be a numeric array")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataError(f"{path}:{lineno}: ragged row, expected {width} features, got {len(row)}")
            feats.append(row)
            labels.append(int(obj["label"]))
            domains.append(int(obj["domain"]))
    return feats, labels, domains
