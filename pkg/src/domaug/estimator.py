"""Domain-shared estimator of the augmentation magnitude distribution.

An encoder MLP predicts per-sample, per-dimension log-variances for a
zero-mean Gaussian over the perturbation xi; a decoder MLP reconstructs the
clean feature from the augmented one, which keeps the perturbation
label-preserving.  A single parameter set is shared across all domains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import instrumentation
from .autodiff import Tensor, add, clamp, exp, mul, square, sub, tmean, tsum
from .model import Mlp

LOG_VAR_BOUND = 10.0  # |log sigma^2| clamp before exponentiation


@dataclass
class EstimatorParams:
    encoder: Mlp  # H -> hidden -> H log-variances
    decoder: Mlp  # H -> hidden -> H reconstruction

    @classmethod
    def init(cls, seed_or_rng, feature_dim: int, hidden: int = 64) -> "EstimatorParams":
        rng = (
            seed_or_rng
            if isinstance(seed_or_rng, np.random.Generator)
            else np.random.default_rng(seed_or_rng)
        )
        encoder = Mlp.init(rng, [feature_dim, hidden, feature_dim], relu_output=False)
        # zero output head: sigma starts at exactly 1 (zero KL), so early training
        # is not dominated by large random log-variances
        encoder.weights[-1].data[:] = 0.0
        decoder = Mlp.init(rng, [feature_dim, hidden, feature_dim], relu_output=False)
        return cls(encoder, decoder)

    @property
    def feature_dim(self) -> int:
        return self.encoder.in_dim

    def parameters(self) -> list[Tensor]:
        return self.encoder.parameters() + self.decoder.parameters()


@dataclass
class AugmentDistribution:
    log_var: Tensor  # (n, H), clamped
    sigma: Tensor  # (n, H), exp(log_var / 2) > 0
    z_hat: Tensor | None = None  # reconstruction, filled by decode()
    z_tilde: Tensor | None = None  # augmented feature the reconstruction used


def predict(params: EstimatorParams, z) -> AugmentDistribution:
    """Encode features into a per-dimension magnitude distribution."""
    instrumentation.bump("estimator.predict")
    z = z if isinstance(z, Tensor) else Tensor(z)
    if z.data.ndim != 2 or z.data.shape[1] != params.feature_dim:
        raise ValueError(
            f"estimator: feature width {z.data.shape} does not match {params.feature_dim}"
        )
    log_var = clamp(params.encoder.forward(z), -LOG_VAR_BOUND, LOG_VAR_BOUND)
    sigma = exp(mul(log_var, Tensor(0.5)))
    return AugmentDistribution(log_var=log_var, sigma=sigma)


def sample_xi(dist: AugmentDistribution, rng: np.random.Generator) -> Tensor:
    """Reparameterized draw xi = sigma * eps; eps is a constant wrt gradients."""
    instrumentation.bump("estimator.sample_xi")
    eps = rng.standard_normal(dist.sigma.data.shape)
    return mul(dist.sigma, Tensor(eps))


def augment(z, direction: np.ndarray, xi) -> Tensor:
    """z + d * xi; the direction mask is a constant, not a learned quantity."""
    z = z if isinstance(z, Tensor) else Tensor(z)
    xi = xi if isinstance(xi, Tensor) else Tensor(xi)
    direction = np.asarray(direction, dtype=np.float64)
    try:
        joint = np.broadcast_shapes(direction.shape, xi.data.shape)
    except ValueError:
        joint = None
    if joint != z.data.shape:
        raise ValueError(
            f"augment: shapes disagree (z {z.data.shape}, d {direction.shape}, xi {xi.data.shape})"
        )
    return add(z, mul(Tensor(direction), xi))


def decode(
    params: EstimatorParams,
    dist: AugmentDistribution,
    z,
    z_tilde=None,
    from_clean: bool = False,
) -> AugmentDistribution:
    """Fill the reconstruction; decodes the augmented feature unless ``from_clean``."""
    z = z if isinstance(z, Tensor) else Tensor(z)
    source = z if (from_clean or z_tilde is None) else z_tilde
    dist.z_tilde = z_tilde
    dist.z_hat = params.decoder.forward(source)
    return dist


def estimator_loss(dist: AugmentDistribution, z) -> Tensor:
    """KL-style magnitude term plus mean squared reconstruction error.

    First term, per sample: -1/2 * sum_dims(1 + log sigma^2 - sigma^2),
    averaged over the batch; uniquely minimized at sigma^2 = 1.  Second term:
    1/2 * mean over batch and dims of (z_hat - z)^2.  The sum can be negative
    only through the first term (it is 0 at its minimum).
    """
    if dist.z_hat is None:
        raise ValueError("estimator_loss: distribution has no reconstruction; call decode first")
    z = z if isinstance(z, Tensor) else Tensor(z)
    one = Tensor(np.ones_like(dist.log_var.data))
    kl_core = sub(add(one, dist.log_var), exp(dist.log_var))  # 1 + log s^2 - s^2
    kl = mul(tmean(tsum(kl_core, axis=1)), Tensor(-0.5))
    recon = mul(tmean(square(sub(dist.z_hat, z))), Tensor(0.5))
    return add(kl, recon)
