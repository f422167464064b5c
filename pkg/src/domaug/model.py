"""Feature extractor and classifier: small relu MLPs over the autodiff engine."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, add, matmul, relu


def init_linear(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[Tensor, Tensor]:
    """Uniform fan-in scaled weights, zero bias: W ~ U(+-sqrt(6/fan_in))."""
    bound = np.sqrt(6.0 / fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    return Tensor(w), Tensor(np.zeros(fan_out))


@dataclass
class Mlp:
    """Stack of linear layers; relu after every layer when ``relu_output``."""

    widths: list[int]
    weights: list[Tensor] = field(default_factory=list)
    biases: list[Tensor] = field(default_factory=list)
    relu_output: bool = True

    @classmethod
    def init(cls, seed_or_rng, widths: list[int], relu_output: bool = True) -> "Mlp":
        if any(w < 1 for w in widths):
            raise ValueError(f"widths must be positive, got {widths}")
        rng = (
            seed_or_rng
            if isinstance(seed_or_rng, np.random.Generator)
            else np.random.default_rng(seed_or_rng)
        )
        net = cls(widths=list(widths), relu_output=relu_output)
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            w, b = init_linear(rng, fan_in, fan_out)
            net.weights.append(w)
            net.biases.append(b)
        return net

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def parameters(self) -> list[Tensor]:
        return [t for pair in zip(self.weights, self.biases) for t in pair]

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[1] != self.in_dim:
            raise ValueError(
                f"mlp: input width {x.data.shape} does not match expected {self.in_dim}"
            )
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = add(matmul(h, w), b)
            if i < last or self.relu_output:
                h = relu(h)
        return h


@dataclass
class Featurizer:
    """Phi: input features -> H-dimensional representation (post-relu)."""

    net: Mlp

    @classmethod
    def init(cls, seed_or_rng, in_dim: int, hidden: list[int], feature_dim: int) -> "Featurizer":
        return cls(Mlp.init(seed_or_rng, [in_dim, *hidden, feature_dim], relu_output=True))

    @property
    def feature_dim(self) -> int:
        return self.net.out_dim

    def parameters(self) -> list[Tensor]:
        return self.net.parameters()

    def featurize(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        return self.net.forward(x)


@dataclass
class Classifier:
    """w: representation -> class logits (linear, with bias)."""

    net: Mlp

    @classmethod
    def init(cls, seed_or_rng, feature_dim: int, n_classes: int) -> "Classifier":
        return cls(Mlp.init(seed_or_rng, [feature_dim, n_classes], relu_output=False))

    @property
    def n_classes(self) -> int:
        return self.net.out_dim

    def parameters(self) -> list[Tensor]:
        return self.net.parameters()

    def classify(self, z) -> Tensor:
        z = z if isinstance(z, Tensor) else Tensor(z)
        return self.net.forward(z)


# ---------------------------------------------------------------------------
# checkpoints: JSON with flat weight arrays as decimal strings (repr round-trips
# float64 exactly)


def _encode(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "values": [repr(float(v)) for v in arr.reshape(-1)]}


def _decode(obj: dict) -> np.ndarray:
    return np.array([float(v) for v in obj["values"]], dtype=np.float64).reshape(obj["shape"])


def mlp_to_dict(net: Mlp) -> dict:
    return {
        "widths": net.widths,
        "relu_output": net.relu_output,
        "weights": [_encode(w.data) for w in net.weights],
        "biases": [_encode(b.data) for b in net.biases],
    }


def mlp_from_dict(obj: dict) -> Mlp:
    net = Mlp(widths=list(obj["widths"]), relu_output=bool(obj["relu_output"]))
    net.weights = [Tensor(_decode(w)) for w in obj["weights"]]
    net.biases = [Tensor(_decode(b)) for b in obj["biases"]]
    for w, width_in, width_out in zip(net.weights, net.widths[:-1], net.widths[1:]):
        if w.data.shape != (width_in, width_out):
            raise ValueError(f"checkpoint weight shape {w.data.shape} does not match widths")
    return net


def save_checkpoint(path: str | Path, nets: dict[str, Mlp], extra: dict | None = None) -> None:
    payload = {"nets": {name: mlp_to_dict(net) for name, net in nets.items()}}
    if extra:
        payload["extra"] = extra
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path: str | Path) -> tuple[dict[str, Mlp], dict]:
    payload = json.loads(Path(path).read_text())
    nets = {name: mlp_from_dict(obj) for name, obj in payload["nets"].items()}
    return nets, payload.get("extra", {})
