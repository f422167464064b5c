"""Augmentation direction selection from inter-domain covariance deviations.

Per training domain, the covariance of its features is compared against the
mean covariance across domains; dimensions whose covariance rows deviate most
are the ones that differ between domains and therefore the ones worth
perturbing.  Soft masks rescale the raw scores to [0, 1], hard masks threshold
them at their mean.  An MMD variant scores dimensions by squared mean
differences instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import instrumentation


@dataclass
class DomainCovariance:
    domain_ids: np.ndarray  # (E,)
    covariances: np.ndarray  # (E, H, H), 1/(n_e - 1) normalization
    mean_covariance: np.ndarray  # (H, H), unweighted mean over domains
    deviations: np.ndarray  # (E, H, H), C_e - mean
    counts: np.ndarray  # (E,)


@dataclass
class DirectionMask:
    domain_ids: np.ndarray  # (E,)
    scores: np.ndarray  # (E, H) raw per-dimension scores
    masks: np.ndarray  # (E, H) in [0,1] (soft) or {0,1} (hard)
    mode: str

    def for_domain(self, domain_id: int) -> np.ndarray:
        (pos,) = np.nonzero(self.domain_ids == domain_id)
        if pos.size == 0:
            raise KeyError(f"no mask for domain {domain_id}")
        return self.masks[pos[0]]


def domain_covariance(features: np.ndarray, domains: np.ndarray) -> DomainCovariance:
    """Per-domain sample covariances and their deviations from the domain mean."""
    instrumentation.bump("director.domain_covariance")
    features = np.asarray(features, dtype=np.float64)
    domains = np.asarray(domains)
    ids = np.unique(domains)
    covs, counts = [], []
    for e in ids:
        rows = features[domains == e]
        if rows.shape[0] < 2:
            raise ValueError(
                f"domain {e} has {rows.shape[0]} sample(s); covariance needs >= 2 "
                "(use domain-balanced batches)"
            )
        covs.append(np.cov(rows, rowvar=False, ddof=1).reshape(rows.shape[1], rows.shape[1]))
        counts.append(rows.shape[0])
    covs = np.stack(covs)
    # deviations as the mean of pairwise differences: equals C_e - mean(C) and
    # is exactly antisymmetric for two domains
    deviations = (covs[:, None] - covs[None, :]).mean(axis=1)
    return DomainCovariance(
        domain_ids=ids,
        covariances=covs,
        mean_covariance=covs.mean(axis=0),
        deviations=deviations,
        counts=np.array(counts),
    )


def covariance_scores(dc: DomainCovariance, kind: str = "row") -> np.ndarray:
    """Per-domain, per-dimension deviation scores (E, H).

    ``row``: L2 norm of the dimension's deviation row (any covariance involving
    the dimension counts).  ``diag``: absolute diagonal deviation only.
    """
    if kind == "row":
        return np.sqrt((dc.deviations**2).sum(axis=2))
    if kind == "diag":
        return np.abs(np.diagonal(dc.deviations, axis1=1, axis2=2))
    raise ValueError(f"unknown covariance score kind {kind!r}")


def select_direction(scores: np.ndarray, mode: str) -> np.ndarray:
    """Mask a single domain's score vector: hard indicator or min-max rescale.

    The hard threshold is the mean over dimensions that vary at all: a constant
    dimension (a relu unit that never fires, say) scores exactly zero and is no
    direction to perturb, and counting it would drag the bar low enough to
    select everything else.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)) or np.any(scores < 0):
        raise ValueError("scores must be finite and non-negative")
    if mode == "hard":
        active = scores > 0
        if not active.any() or np.all(scores == scores[0]):
            return np.zeros_like(scores)
        mask = (scores > scores[active].mean()).astype(np.float64)
        if not mask.any():  # positives all tie: keep the maximum selected
            mask = (scores == scores.max()).astype(np.float64)
        return mask
    if mode == "soft":
        lo, hi = scores.min(), scores.max()
        if hi == lo:
            return np.zeros_like(scores)
        return (scores - lo) / (hi - lo)
    raise ValueError(f"unknown direction mode {mode!r} (expected soft or hard)")


def mmd_scores(features: np.ndarray, domains: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension squared mean gap between each domain and its complement."""
    features = np.asarray(features, dtype=np.float64)
    domains = np.asarray(domains)
    ids = np.unique(domains)
    if ids.size < 2:
        raise ValueError("mmd scores need at least two domains")
    out = []
    for e in ids:
        own = features[domains == e].mean(axis=0)
        rest = features[domains != e].mean(axis=0)
        out.append((own - rest) ** 2)
    return ids, np.stack(out)


def direction_masks(
    features: np.ndarray,
    domains: np.ndarray,
    mode: str = "hard",
    score_kind: str = "cov",
    cov_score_variant: str = "row",
) -> DirectionMask:
    """Full director pass: scores per domain, then per-domain masks."""
    if score_kind == "cov":
        dc = domain_covariance(features, domains)
        ids, scores = dc.domain_ids, covariance_scores(dc, kind=cov_score_variant)
    elif score_kind == "mmd":
        ids, scores = mmd_scores(features, domains)
    else:
        raise ValueError(f"unknown score kind {score_kind!r} (expected cov or mmd)")
    masks = np.stack([select_direction(s, mode) for s in scores])
    return DirectionMask(domain_ids=ids, scores=scores, masks=masks, mode=mode)


class EmaScores:
    """Optional exponential smoothing of director scores across batches."""

    def __init__(self, decay: float = 0.9):
        if not 0.0 <= decay < 1.0:
            raise ValueError("decay must be in [0, 1)")
        self.decay = decay
        self._state: dict[int, np.ndarray] = {}

    def update(self, domain_ids: np.ndarray, scores: np.ndarray) -> np.ndarray:
        smoothed = np.empty_like(scores)
        for i, e in enumerate(domain_ids):
            prev = self._state.get(int(e))
            cur = scores[i] if prev is None else self.decay * prev + (1 - self.decay) * scores[i]
            self._state[int(e)] = cur
            smoothed[i] = cur
        return smoothed
