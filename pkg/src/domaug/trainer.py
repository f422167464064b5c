"""Joint training of featurizer, classifier and estimator; LODO evaluation.

Method registry:
  erm          pooled cross-entropy, no penalty, no augmentation
  irmv1        per-domain gradient penalty, no augmentation
  vrex         risk-variance penalty, no augmentation
  virm_random  vrex + estimator, direction mask replaced by a random binary
               mask of the same per-batch density (director ablation control)
  ours         vrex + estimator + covariance-guided direction masks
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import director, estimator as est
from .autodiff import NumericError, Tensor, backward
from .data import (
    ConfigError,
    GeneratorConfig,
    LodoSplit,
    MultiDomainDataset,
    generate,
    load_features,
    split_leave_one_out,
    stratified_holdout,
)
from .estimator import EstimatorParams
from .metrics import MetricsReport, MetricsRow, evaluate_scores
from .model import Classifier, Featurizer
from .risk import LossConfig, domain_risks, irmv1_penalty, total_loss, vrex_penalty

METHODS = ("erm", "irmv1", "vrex", "virm_random", "ours")
AUGMENTED_METHODS = ("virm_random", "ours")


@dataclass
class RunConfig:
    # defaults for the optimizer block mirror the reference protocol:
    # lr 1e-4, batch 256, weight decay 1e-5, 100 epochs, x0.1 at 50 and 75
    method: str = "ours"
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    dataset_path: str | None = None
    loss: LossConfig = field(default_factory=LossConfig)
    director_mode: str = "hard"
    score_kind: str = "cov"
    cov_score_variant: str = "row"
    director_ema: float | None = None
    decode_from_clean: bool = False
    learning_rate: float = 1e-4
    batch_size: int = 256
    epochs: int = 100
    milestones: tuple[int, ...] = (50, 75)
    lr_decay: float = 0.1
    weight_decay: float = 1e-5
    penalty_warmup_epochs: int = 0  # epochs with the penalty weight capped at 1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden: tuple[int, ...] = (64, 64)
    feature_dim: int = 32
    estimator_hidden: int = 64
    val_fraction: float = 0.2
    seed: int = 0
    held_out: int | None = None  # domain for single-split subcommands; None = last
    checkpoint: str | None = None  # reuse a trained model in analysis subcommands

    @classmethod
    def desk(cls, **overrides) -> "RunConfig":
        """Minute-scale preset: shorter schedule, lr raised to converge in it."""
        base = dict(epochs=60, milestones=(30, 45), learning_rate=3e-3)
        base.update(overrides)
        return cls(**base)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.dataset_path is None:
            self.generator.validate()
        self.loss.validate()
        if self.learning_rate < 0 or self.weight_decay < 0 or not 0 < self.lr_decay <= 1:
            raise ConfigError("bad optimizer settings")
        if self.batch_size < 2 or self.epochs < 1:
            raise ConfigError("batch_size >= 2 and epochs >= 1 required")
        if self.director_mode not in ("soft", "hard"):
            raise ConfigError(f"director_mode must be soft or hard, got {self.director_mode!r}")
        if self.score_kind not in ("cov", "mmd"):
            raise ConfigError(f"score_kind must be cov or mmd, got {self.score_kind!r}")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction must be in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["milestones"] = list(self.milestones)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        obj = dict(obj)
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "generator" in obj and obj["generator"] is not None:
            gen = dict(obj["generator"])
            gen_known = {f.name for f in fields(GeneratorConfig)}
            bad = set(gen) - gen_known
            if bad:
                raise ConfigError(f"unknown generator keys: {sorted(bad)}")
            obj["generator"] = GeneratorConfig(**gen)
        if "loss" in obj and obj["loss"] is not None:
            loss = dict(obj["loss"])
            loss_known = {f.name for f in fields(LossConfig)}
            bad = set(loss) - loss_known
            if bad:
                raise ConfigError(f"unknown loss keys: {sorted(bad)}")
            obj["loss"] = LossConfig(**loss)
        if "milestones" in obj:
            obj["milestones"] = tuple(obj["milestones"])
        if "hidden" in obj:
            obj["hidden"] = tuple(obj["hidden"])
        return cls(**obj)


@dataclass
class TrainHistory:
    total_loss: list[float] = field(default_factory=list)
    mean_risk: list[float] = field(default_factory=list)
    vrex_penalty: list[float] = field(default_factory=list)
    l_phi: list[float] = field(default_factory=list)
    val_auc: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    val_f1: list[float] = field(default_factory=list)
    best_epoch: int = 0  # 1-based epoch whose validation AUC was kept

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainedModel:
    featurizer: Featurizer
    classifier: Classifier
    estimator: EstimatorParams | None

    def scores(self, x: np.ndarray) -> np.ndarray:
        """Softmax class scores on clean features; no augmentation at test time."""
        logits = self.classifier.classify(self.featurizer.featurize(x)).data
        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)


class Adam:
    """Bias-corrected adaptive optimizer with decoupled weight decay."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1**self.t)
            v_hat = self.v[i] / (1 - b2**self.t)
            p.data = p.data - self.lr * (
                m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p.data
            )


def _balanced_batches(domains: np.ndarray, batch_size: int, rng: np.random.Generator):
    """Index batches with an equal per-domain quota, reshuffled per epoch."""
    ids = np.unique(domains)
    quota = batch_size // ids.size
    if quota < 2:
        raise ConfigError(
            f"batch_size {batch_size} too small for {ids.size} domains (quota must be >= 2)"
        )
    pools = []
    for e in ids:
        idx = np.flatnonzero(domains == e)
        if idx.size < quota:  # tiny domain: sample up to quota with replacement
            idx = rng.choice(idx, size=quota, replace=True)
        pools.append(rng.permutation(idx))
    steps = max(1, min(pool.size // quota for pool in pools))
    for s in range(steps):
        yield np.concatenate([pool[s * quota : (s + 1) * quota] for pool in pools])


def _batch_masks(
    cfg: RunConfig,
    z_data: np.ndarray,
    domains: np.ndarray,
    ema: director.EmaScores | None,
    mask_rng: np.random.Generator,
) -> np.ndarray:
    """Per-row direction masks (n, H); constants wrt the loss graph."""
    dm = director.direction_masks(
        z_data, domains, mode=cfg.director_mode,
        score_kind=cfg.score_kind, cov_score_variant=cfg.cov_score_variant,
    )
    if ema is not None:
        smoothed = ema.update(dm.domain_ids, dm.scores)
        masks = np.stack([director.select_direction(s, cfg.director_mode) for s in smoothed])
        dm = director.DirectionMask(dm.domain_ids, smoothed, masks, dm.mode)
    if cfg.method == "virm_random":
        # density-matched random binary masks isolate the director's effect
        hard = np.stack([director.select_direction(s, "hard") for s in dm.scores])
        masks = (mask_rng.random(hard.shape) < hard.mean(axis=1, keepdims=True)).astype(
            np.float64
        )
        dm = director.DirectionMask(dm.domain_ids, dm.scores, masks, "hard")
    row_masks = np.empty_like(z_data)
    for i, e in enumerate(dm.domain_ids):
        row_masks[domains == e] = dm.masks[i]
    return row_masks


def effective_loss_config(cfg: RunConfig) -> LossConfig:
    """The method id pins the penalty kind and whether the estimator runs."""
    loss = replace(cfg.loss)
    if cfg.method == "erm":
        loss = replace(loss, penalty="erm", alpha=0.0)
    elif cfg.method == "irmv1":
        loss = replace(loss, penalty="irmv1", alpha=0.0)
    elif cfg.method == "vrex":
        loss = replace(loss, penalty="vrex", alpha=0.0)
    else:  # augmented methods keep the configured alpha, force vrex
        loss = replace(loss, penalty="vrex")
    return loss


def train(cfg: RunConfig, split: LodoSplit) -> tuple[TrainedModel, TrainHistory]:
    cfg.validate()
    augmenting = cfg.method in AUGMENTED_METHODS
    loss_cfg = effective_loss_config(cfg)

    ss = np.random.SeedSequence([cfg.seed, split.held_out_id])
    child = ss.spawn(5)
    holdout_seed = int(child[0].generate_state(1)[0])
    init_rng = np.random.default_rng(child[1])
    sampler_rng = np.random.default_rng(child[2])
    noise_rng = np.random.default_rng(child[3])
    mask_rng = np.random.default_rng(child[4])

    train_ds, val_ds = stratified_holdout(split.train, cfg.val_fraction, seed=holdout_seed)

    featurizer = Featurizer.init(
        init_rng, train_ds.n_features, list(cfg.hidden), cfg.feature_dim
    )
    n_classes = int(split.train.labels.max()) + 1
    classifier = Classifier.init(init_rng, cfg.feature_dim, n_classes)
    est_params = (
        EstimatorParams.init(init_rng, cfg.feature_dim, cfg.estimator_hidden)
        if augmenting
        else None
    )

    params = featurizer.parameters() + classifier.parameters()
    if est_params is not None:
        params += est_params.parameters()
    opt = Adam(
        params,
        lr=cfg.learning_rate,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.adam_eps,
        weight_decay=cfg.weight_decay,
    )
    ema = director.EmaScores(cfg.director_ema) if cfg.director_ema else None

    history = TrainHistory()
    best_auc, best_state = -np.inf, None
    for epoch in range(1, cfg.epochs + 1):
        opt.lr = cfg.learning_rate * cfg.lr_decay ** sum(epoch > m for m in cfg.milestones)
        epoch_loss_cfg = loss_cfg
        if epoch <= cfg.penalty_warmup_epochs:
            epoch_loss_cfg = replace(
                loss_cfg, vrex_lambda=min(loss_cfg.vrex_lambda, 1.0)
            )
        ep_loss, ep_risk, ep_vrex, ep_lphi, n_steps = 0.0, 0.0, 0.0, 0.0, 0
        for batch_idx in _balanced_batches(train_ds.domains, cfg.batch_size, sampler_rng):
            x = train_ds.features[batch_idx]
            y = train_ds.labels[batch_idx]
            dom = train_ds.domains[batch_idx]

            z = featurizer.featurize(x)
            l_phi = Tensor(0.0)
            z_for_risk = z
            if augmenting:
                row_masks = _batch_masks(cfg, z.data, dom, ema, mask_rng)
                dist = est.predict(est_params, z)
                xi = est.sample_xi(dist, noise_rng)
                z_tilde = est.augment(z, row_masks, xi)
                dist = est.decode(
                    est_params, dist, z, z_tilde=z_tilde, from_clean=cfg.decode_from_clean
                )
                l_phi = est.estimator_loss(dist, z)
                if loss_cfg.augment_risks:
                    z_for_risk = z_tilde
            logits = classifier.classify(z_for_risk)
            risks = domain_risks(logits, y, dom)
            irm_pen = (
                irmv1_penalty(logits, y, dom) if loss_cfg.penalty == "irmv1" else None
            )
            loss = total_loss(risks, l_phi, epoch_loss_cfg, irm_penalty=irm_pen)
            if not np.isfinite(loss.data):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, step {n_steps + 1}: {loss.data!r}"
                )
            opt.zero_grad()
            backward(loss)
            opt.step()

            ep_loss += float(loss.data)
            ep_risk += float(risks.values().mean())
            ep_vrex += float(vrex_penalty(risks).data)
            ep_lphi += float(l_phi.data)
            n_steps += 1

        model = TrainedModel(featurizer, classifier, est_params)
        val_row = evaluate_scores(model.scores(val_ds.features), val_ds.labels)
        history.total_loss.append(ep_loss / n_steps)
        history.mean_risk.append(ep_risk / n_steps)
        history.vrex_penalty.append(ep_vrex / n_steps)
        history.l_phi.append(ep_lphi / n_steps)
        history.val_auc.append(val_row.auc)
        history.val_acc.append(val_row.acc)
        history.val_f1.append(val_row.f1)
        if val_row.auc > best_auc:
            best_auc = val_row.auc
            best_state = [p.data.copy() for p in params]
            history.best_epoch = epoch

    if best_state is not None:
        for p, data in zip(params, best_state):
            p.data = data
    return TrainedModel(featurizer, classifier, est_params), history


def evaluate(model: TrainedModel, ds: MultiDomainDataset) -> MetricsRow:
    """Metrics on clean features; never touches director or estimator."""
    if ds.n_features != model.featurizer.net.in_dim:
        raise ValueError(
            f"evaluate: dataset width {ds.n_features} does not match model "
            f"input {model.featurizer.net.in_dim}"
        )
    return evaluate_scores(model.scores(ds.features), ds.labels)


def load_run_dataset(cfg: RunConfig) -> MultiDomainDataset:
    if cfg.dataset_path is not None:
        return load_features(cfg.dataset_path)
    return generate(cfg.generator)


@dataclass
class LodoResult:
    report: MetricsReport
    histories: dict[int, TrainHistory]
    models: dict[int, TrainedModel]

    def as_dict(self) -> dict:
        return {
            "metrics": self.report.as_dict(),
            "history": {str(k): h.as_dict() for k, h in sorted(self.histories.items())},
        }


def model_to_nets(model: TrainedModel) -> dict:
    """Flatten a trained model into named nets for the JSON checkpoint format."""
    nets = {"featurizer": model.featurizer.net, "classifier": model.classifier.net}
    if model.estimator is not None:
        nets["estimator_encoder"] = model.estimator.encoder
        nets["estimator_decoder"] = model.estimator.decoder
    return nets


def model_from_nets(nets: dict) -> TrainedModel:
    est_params = None
    if "estimator_encoder" in nets:
        est_params = EstimatorParams(nets["estimator_encoder"], nets["estimator_decoder"])
    return TrainedModel(
        featurizer=Featurizer(nets["featurizer"]),
        classifier=Classifier(nets["classifier"]),
        estimator=est_params,
    )


def lodo_run(cfg: RunConfig, ds: MultiDomainDataset | None = None) -> LodoResult:
    """Train one model per held-out domain and aggregate held-out metrics."""
    cfg.validate()
    if ds is None:
        ds = load_run_dataset(cfg)
    report = MetricsReport()
    histories: dict[int, TrainHistory] = {}
    models: dict[int, TrainedModel] = {}
    for held_out in ds.domain_ids:
        split = split_leave_one_out(ds, int(held_out))
        model, history = train(cfg, split)
        report.rows[int(held_out)] = evaluate(model, split.test)
        histories[int(held_out)] = history
        models[int(held_out)] = model
    return LodoResult(report=report, histories=histories, models=models)
