"""Per-domain risks and invariance penalties (ERM / gradient penalty / VREx)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    Tensor,
    add,
    mul,
    softmax,
    softmax_cross_entropy,
    square,
    stack,
    sub,
    take_rows,
    tmean,
    tsum,
    variance,
)

PENALTY_KINDS = ("erm", "irmv1", "vrex")


@dataclass
class RiskVector:
    domain_ids: np.ndarray  # (E_tr,)
    risks: list[Tensor]  # scalar mean cross-entropy per domain

    def as_vector(self) -> Tensor:
        return stack(self.risks)

    def mean(self) -> Tensor:
        return tmean(self.as_vector())

    def values(self) -> np.ndarray:
        return np.array([r.data for r in self.risks])


@dataclass
class LossConfig:
    alpha: float = 1.0  # weight of the estimator loss
    vrex_lambda: float = 10.0  # weight of the risk-variance penalty
    penalty: str = "vrex"  # one of PENALTY_KINDS
    augment_risks: bool = True  # risks on augmented features (vs clean)

    def validate(self) -> None:
        if self.alpha < 0 or self.vrex_lambda < 0:
            raise ValueError("alpha and vrex_lambda must be >= 0")
        if self.penalty not in PENALTY_KINDS:
            raise ValueError(f"penalty must be one of {PENALTY_KINDS}, got {self.penalty!r}")


def domain_risks(logits: Tensor, labels: np.ndarray, domains: np.ndarray) -> RiskVector:
    """Mean cross-entropy per domain present in the batch."""
    labels = np.asarray(labels)
    domains = np.asarray(domains)
    if logits.data.shape[0] == 0:
        raise ValueError("domain_risks: empty batch")
    if logits.data.shape[0] != labels.shape[0] or labels.shape[0] != domains.shape[0]:
        raise ValueError(
            f"domain_risks: misaligned lengths logits={logits.data.shape[0]} "
            f"labels={labels.shape[0]} domains={domains.shape[0]}"
        )
    ids = np.unique(domains)
    risks = []
    for e in ids:
        idx = np.flatnonzero(domains == e)
        risks.append(softmax_cross_entropy(take_rows(logits, idx), labels[idx]))
    return RiskVector(domain_ids=ids, risks=risks)


def vrex_penalty(risks: RiskVector) -> Tensor:
    """Population variance of the per-domain risks; 0 for a single domain."""
    if len(risks.risks) == 1:
        return Tensor(0.0)
    return variance(risks.as_vector())


def irmv1_penalty(logits: Tensor, labels: np.ndarray, domains: np.ndarray) -> Tensor:
    """Squared gradient of each domain's risk wrt a dummy logit scale at 1.

    d/ds [mean_i CE(s * logits_i, y_i)] at s=1 has the closed form
    mean_i <softmax(logits_i) - onehot(y_i), logits_i>, which keeps the
    penalty differentiable wrt the logits without second-order autodiff.
    """
    labels = np.asarray(labels)
    domains = np.asarray(domains)
    ids = np.unique(domains)
    total = Tensor(0.0)
    n_classes = logits.data.shape[1]
    for e in ids:
        idx = np.flatnonzero(domains == e)
        le = take_rows(logits, idx)
        onehot = np.zeros((idx.size, n_classes))
        onehot[np.arange(idx.size), labels[idx]] = 1.0
        grad_s = tmean(tsum(mul(sub(softmax(le), Tensor(onehot)), le), axis=1))
        total = add(total, square(grad_s))
    return total


def total_loss(
    risks: RiskVector,
    l_phi: Tensor | float,
    cfg: LossConfig,
    irm_penalty: Tensor | None = None,
) -> Tensor:
    """mean risk + lambda * invariance penalty + alpha * estimator loss."""
    cfg.validate()
    l_phi = l_phi if isinstance(l_phi, Tensor) else Tensor(float(l_phi))
    loss = risks.mean()
    if cfg.penalty == "vrex":
        loss = add(loss, mul(Tensor(cfg.vrex_lambda), vrex_penalty(risks)))
    elif cfg.penalty == "irmv1":
        if irm_penalty is None:
            raise ValueError("total_loss: penalty 'irmv1' requires the irm_penalty term")
        loss = add(loss, mul(Tensor(cfg.vrex_lambda), irm_penalty))
    if cfg.alpha > 0:
        loss = add(loss, mul(Tensor(cfg.alpha), l_phi))
    return loss
