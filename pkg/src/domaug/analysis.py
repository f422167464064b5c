"""Dataset distance under a Gaussian class-conditional transport model, plus PCA.

The distance between two labeled feature sets is an optimal transport problem
over their class frequencies, where moving label i to label j costs the squared
2-Wasserstein distance between the class-conditional Gaussian fits.  The outer
problem is solved by entropically regularized scaling iterations in the log
domain, which stays stable at the small regularization used here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import NumericError

COV_EPS_SCALE = 1e-6  # ridge on class covariances, relative to mean variance
SINKHORN_REG_SCALE = 0.01  # regularization as a fraction of the mean cost
SINKHORN_MAX_ITER = 1000
SINKHORN_TOL = 1e-9  # max-abs marginal violation


@dataclass
class ClassConditionalGaussian:
    class_ids: np.ndarray  # (C,)
    means: np.ndarray  # (C, H)
    covariances: np.ndarray  # (C, H, H), ridge-regularized, positive definite
    counts: np.ndarray  # (C,)


@dataclass
class OtddResult:
    distance: float
    cost: np.ndarray  # (Ca, Cb) label-to-label squared W2
    plan: np.ndarray  # (Ca, Cb), marginals = class frequencies
    class_ids_a: np.ndarray
    class_ids_b: np.ndarray
    iterations: int
    marginal_error: float


def fit_class_gaussians(
    features: np.ndarray, labels: np.ndarray, eps_scale: float = COV_EPS_SCALE
) -> ClassConditionalGaussian:
    """Per-class empirical mean and covariance with a +eps*I ridge.

    eps = eps_scale * trace/H keeps the ridge proportional to the data scale;
    a zero-variance class (duplicated samples) falls back to eps_scale so the
    result stays strictly positive definite.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise ValueError(
            f"fit_class_gaussians: features {features.shape} misaligned with "
            f"labels {labels.shape}"
        )
    h = features.shape[1]
    ids = np.unique(labels)
    means, covs, counts = [], [], []
    for c in ids:
        rows = features[labels == c]
        if rows.shape[0] < 2:
            raise ValueError(
                f"class {c} has {rows.shape[0]} sample(s); covariance needs >= 2"
            )
        cov = np.cov(rows, rowvar=False, ddof=1).reshape(h, h)
        eps = eps_scale * np.trace(cov) / h
        if eps <= 0.0:
            eps = eps_scale
        means.append(rows.mean(axis=0))
        covs.append(cov + eps * np.eye(h))
        counts.append(rows.shape[0])
    return ClassConditionalGaussian(
        class_ids=ids,
        means=np.stack(means),
        covariances=np.stack(covs),
        counts=np.array(counts),
    )


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Square root of a symmetric PSD matrix; negative eigenvalues clamped to 0."""
    sym = 0.5 * (m + m.T)
    try:
        w, v = np.linalg.eigh(sym)
    except np.linalg.LinAlgError:
        ridge = 1e-12 * max(np.trace(sym) / sym.shape[0], 1.0)
        try:
            w, v = np.linalg.eigh(sym + ridge * np.eye(sym.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"matrix square root failed after ridge retry: {exc}") from exc
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def gaussian_w2(
    mean_a: np.ndarray, cov_a: np.ndarray, mean_b: np.ndarray, cov_b: np.ndarray
) -> float:
    """Squared 2-Wasserstein distance between two Gaussians.

    ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_b^1/2 S_a S_b^1/2)^1/2).  Arguments
    are put into a canonical order first, so the result is bitwise symmetric.
    """
    mean_a = np.asarray(mean_a, dtype=np.float64)
    mean_b = np.asarray(mean_b, dtype=np.float64)
    cov_a = np.asarray(cov_a, dtype=np.float64)
    cov_b = np.asarray(cov_b, dtype=np.float64)
    if mean_a.shape != mean_b.shape or cov_a.shape != cov_b.shape:
        raise ValueError(
            f"gaussian_w2: shapes disagree (means {mean_a.shape}/{mean_b.shape}, "
            f"covs {cov_a.shape}/{cov_b.shape})"
        )
    if mean_b.tobytes() + cov_b.tobytes() < mean_a.tobytes() + cov_a.tobytes():
        mean_a, mean_b = mean_b, mean_a
        cov_a, cov_b = cov_b, cov_a
    diff = mean_a - mean_b
    sqrt_b = _psd_sqrt(cov_b)
    cross = _psd_sqrt(sqrt_b @ cov_a @ sqrt_b)
    val = diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross)
    return float(max(val, 0.0))


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis=axis)


def _sinkhorn(
    cost: np.ndarray, p: np.ndarray, q: np.ndarray, reg: float, max_iter: int, tol: float
) -> tuple[np.ndarray, int, float]:
    """Log-domain scaling iterations; returns (plan, iterations, marginal error).

    The potentials are warm-started through a decreasing sequence of
    regularizations (halving down to the target).  Cold-started scaling stalls
    when the cost spread is large relative to ``reg`` and the marginals are
    unequal: mass must then flow through kernel entries of order
    exp(-cost/reg), which the alternating updates only reach after potential
    shifts built up over impractically many iterations.  Annealing tracks the
    dual solution down the schedule instead.  Within a level, the residual
    decays along a single dominant geometric mode once the plan is nearly
    decoupled, so periodic Aitken extrapolation of the potentials (accepted
    only when it reduces the marginal violation) removes the remaining stall.
    The final level runs at ``reg``, so the returned plan solves the target
    problem; ``max_iter`` caps the scaling iterations of each level, and the
    returned count totals all levels.
    """
    log_p, log_q = np.log(p), np.log(q)
    # sqrt(2) steps near the target keep the last warm starts tight; the slow
    # regime is the tail, where the alternating projections barely interact
    levels = [reg, np.sqrt(2.0) * reg, 2.0 * reg, np.sqrt(8.0) * reg]
    while levels[-1] < cost.max():
        levels.append(2.0 * levels[-1])
    levels.reverse()
    f = np.zeros_like(p)
    g = np.zeros_like(q)
    err = np.inf
    total = 0
    for level, level_reg in enumerate(levels):
        if level > 0:  # keep the dual potentials reg*f, reg*g continuous
            f *= levels[level - 1] / level_reg
            g *= levels[level - 1] / level_reg
        mk = -cost / level_reg
        final = level == len(levels) - 1
        level_tol = tol if final else max(tol, 1e-6)

        def marginals(fv: np.ndarray, gv: np.ndarray) -> tuple[np.ndarray, float]:
            plan = np.exp(mk + fv[:, None] + gv[None, :])
            violation = max(
                np.abs(plan.sum(axis=1) - p).max(), np.abs(plan.sum(axis=0) - q).max()
            )
            return plan, float(violation)

        d_prev = None
        for step in range(max_iter):
            total += 1
            f_old, g_old = f, g
            f = log_p - _logsumexp(mk + g[None, :], axis=1)
            g = log_q - _logsumexp(mk + f[:, None], axis=0)
            plan, err = marginals(f, g)
            if err < level_tol:
                break
            d = np.concatenate([f - f_old, g - g_old])
            if d_prev is not None and step % 20 == 19:
                denom = float(d_prev @ d_prev)
                norm = float(np.linalg.norm(d) * np.linalg.norm(d_prev))
                rho = float(d @ d_prev) / denom if denom > 0.0 else 0.0
                align = float(d @ d_prev) / norm if norm > 0.0 else 0.0
                if 0.5 < rho < 0.999999 and align > 0.999:
                    gain = rho / (1.0 - rho)
                    f_try = f + gain * d[: f.size]
                    g_try = g + gain * d[f.size :]
                    plan_try, err_try = marginals(f_try, g_try)
                    if err_try < err:  # accept the jump only when it helps
                        f, g, plan, err = f_try, g_try, plan_try, err_try
                        d_prev = None
                        if err < level_tol:
                            break
                        continue
            d_prev = d
        if final and err < tol:
            return plan, total, float(err)
    raise NumericError(
        f"sinkhorn did not converge: {max_iter} iterations, marginal violation "
        f"{err:.3e} > tol {tol:.1e}, reg {reg:.3e}"
    )


def otdd(
    features_a: np.ndarray,
    labels_a: np.ndarray,
    features_b: np.ndarray,
    labels_b: np.ndarray,
    reg_scale: float = SINKHORN_REG_SCALE,
    max_iter: int = SINKHORN_MAX_ITER,
    tol: float = SINKHORN_TOL,
    eps_scale: float = COV_EPS_SCALE,
) -> OtddResult:
    """Transport distance between two labeled feature sets.

    The (A, B) and (B, A) problems are transposes; both are solved in one
    canonical orientation so the returned distance is bitwise symmetric.
    """
    ga = fit_class_gaussians(features_a, labels_a, eps_scale)
    gb = fit_class_gaussians(features_b, labels_b, eps_scale)
    cost = np.empty((ga.class_ids.size, gb.class_ids.size))
    for i in range(ga.class_ids.size):
        for j in range(gb.class_ids.size):
            cost[i, j] = gaussian_w2(
                ga.means[i], ga.covariances[i], gb.means[j], gb.covariances[j]
            )
    p = ga.counts / ga.counts.sum()
    q = gb.counts / gb.counts.sum()

    cost_t = np.ascontiguousarray(cost.T)
    flipped = (cost_t.tobytes(), q.tobytes(), p.tobytes()) < (
        cost.tobytes(),
        p.tobytes(),
        q.tobytes(),
    )
    oc, op, oq = (cost_t, q, p) if flipped else (cost, p, q)

    mean_cost = oc.mean()
    if mean_cost <= 0.0:  # all-zero costs: any feasible plan is optimal
        plan, iterations, err = np.outer(op, oq), 0, 0.0
    else:
        plan, iterations, err = _sinkhorn(oc, op, oq, reg_scale * mean_cost, max_iter, tol)
    distance = float(np.sum(plan * oc))
    if flipped:
        plan = plan.T
    return OtddResult(
        distance=distance,
        cost=cost,
        plan=plan,
        class_ids_a=ga.class_ids,
        class_ids_b=gb.class_ids,
        iterations=iterations,
        marginal_error=err,
    )


def pairwise_otdd(
    features: np.ndarray, labels: np.ndarray, domains: np.ndarray, **kwargs
) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric matrix of dataset distances between every pair of domains."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    domains = np.asarray(domains)
    ids = np.unique(domains)
    matrix = np.zeros((ids.size, ids.size))
    for i, a in enumerate(ids):
        ma = domains == a
        for j in range(i, ids.size):
            mb = domains == ids[j]
            d = otdd(features[ma], labels[ma], features[mb], labels[mb], **kwargs).distance
            matrix[i, j] = matrix[j, i] = d
    return ids, matrix


@dataclass
class PcaProjection:
    coordinates: np.ndarray  # (N, k)
    components: np.ndarray  # (k, H), orthonormal rows
    explained_variance_ratio: np.ndarray  # (k,)
    mean: np.ndarray  # (H,)

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) @ self.components.T


def pca_project(features: np.ndarray, k: int = 2) -> PcaProjection:
    """Top-k principal components via eigendecomposition of the covariance.

    Sign convention: each component's largest-magnitude loading is positive,
    making the projection deterministic.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError(f"pca_project needs a (N >= 2, H) matrix, got {x.shape}")
    h = x.shape[1]
    if not 1 <= k <= h:
        raise ValueError(f"k must be in [1, {h}], got {k}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = (centered.T @ centered) / (x.shape[0] - 1)
    w, v = np.linalg.eigh(cov)
    w = np.clip(w, 0.0, None)
    order = np.argsort(-w, kind="stable")[:k]
    components = v[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    total = w.sum()
    ratio = w[order] / total if total > 0 else np.zeros(k)
    proj = PcaProjection(
        coordinates=np.empty(0), components=components, explained_variance_ratio=ratio, mean=mean
    )
    proj.coordinates = proj.transform(x)
    return proj
