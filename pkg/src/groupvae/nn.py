"""Dense multilayer perceptrons with hand-derived backward passes.

Matrices are two-dimensional row-major float64 numpy arrays, one sample per
row. The layer zoo is fixed: linear map, optional ReLU, optional batch
normalization, optional inverted dropout, in that order (activation first,
then normalization, then dropout). Gradients are exact reverse-mode
derivatives of ``sum(output_grad * output)`` including the path through
batch statistics.

Public operations raise NumericError if they would emit non-finite values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError

BATCH_NORM_EPS = 1e-5
BATCH_NORM_MOMENTUM = 0.1


def as_matrix(x) -> np.ndarray:
    """Coerce to a 2-D float64 array, validating the shape."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


@dataclass
class BatchNorm:
    """Per-feature batch normalization state.

    Running statistics follow ``new = (1 - momentum) * old + momentum * batch``
    with the biased batch variance; normalization in train mode uses the
    current batch statistics, in eval mode the running ones.
    """

    scale: np.ndarray
    shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BATCH_NORM_MOMENTUM
    eps: float = BATCH_NORM_EPS

    @classmethod
    def identity(cls, width: int) -> "BatchNorm":
        return cls(
            scale=np.ones(width),
            shift=np.zeros(width),
            running_mean=np.zeros(width),
            running_var=np.ones(width),
        )


@dataclass
class DenseLayer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str = "linear"  # "relu" or "linear"
    batch_norm: BatchNorm | None = None
    dropout: float = 0.0

    def __post_init__(self):
        if self.activation not in ("relu", "linear"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[1]


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class Mlp:
    """A stack of DenseLayers with chained widths."""

    layers: list[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ValueError(
                    f"layer widths do not chain: {prev.fan_out} -> {nxt.fan_in}"
                )

    @property
    def in_width(self) -> int:
        return self.layers[0].fan_in

    @property
    def out_width(self) -> int:
        return self.layers[-1].fan_out

    def parameters(self) -> list[np.ndarray]:
        """Flat list of trainable arrays, layer by layer (weight, bias, then
        batch-norm scale and shift where present). Views, not copies."""
        params: list[np.ndarray] = []
        for layer in self.layers:
            params.append(layer.weight)
            params.append(layer.bias)
            if layer.batch_norm is not None:
                params.append(layer.batch_norm.scale)
                params.append(layer.batch_norm.shift)
        return params

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    def restore(self, snapshot: list[np.ndarray]) -> None:
        for p, s in zip(self.parameters(), snapshot, strict=True):
            p[...] = s

    def forward(
        self,
        batch,
        train: bool = False,
        rng: np.random.Generator | None = None,
        want_cache: bool = False,
    ):
        """Run the network over a batch.

        In eval mode dropout is the identity and batch norm uses running
        statistics, so the output is a pure function of (self, batch). In
        train mode dropout masks are drawn from ``rng`` and batch norm uses
        (and updates) batch statistics, which requires at least two rows.

        Returns ``output`` or ``(output, cache)`` when ``want_cache`` is set;
        the cache feeds :meth:`backward`.
        """
        x = as_matrix(batch)
        if x.shape[1] != self.in_width:
            raise ValueError(
                f"batch has {x.shape[1]} columns, network expects {self.in_width}"
            )
        if x.shape[0] < 1:
            raise ValueError("batch must contain at least one row")

        cache = []
        for layer in self.layers:
            entry = {"x": x}
            pre = x @ layer.weight + layer.bias
            if layer.activation == "relu":
                act = np.maximum(pre, 0.0)
                entry["relu_mask"] = pre > 0.0
            else:
                act = pre
            if layer.batch_norm is not None:
                bn = layer.batch_norm
                if train:
                    if act.shape[0] < 2:
                        raise ValueError(
                            "train-mode batch norm needs a batch of at least 2 rows"
                        )
                    mean = act.mean(axis=0)
                    var = act.var(axis=0)
                    std = np.sqrt(var + bn.eps)
                    normed = (act - mean) / std
                    bn.running_mean[...] = (
                        1.0 - bn.momentum
                    ) * bn.running_mean + bn.momentum * mean
                    bn.running_var[...] = (
                        1.0 - bn.momentum
                    ) * bn.running_var + bn.momentum * var
                    entry["bn_normed"] = normed
                    entry["bn_std"] = std
                else:
                    std = np.sqrt(bn.running_var + bn.eps)
                    normed = (act - bn.running_mean) / std
                act = bn.scale * normed + bn.shift
            if layer.dropout > 0.0 and train:
                if rng is None:
                    raise ValueError("train-mode dropout needs an rng")
                keep = rng.random(act.shape) >= layer.dropout
                act = act * keep / (1.0 - layer.dropout)
                entry["drop_mask"] = keep
            x = act
            cache.append(entry)

        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite values in network output")
        if want_cache:
            return x, cache
        return x

    def backward(self, cache, output_grad):
        """Gradients of ``sum(output_grad * output)`` from a train-mode cache.

        Returns ``(param_grads, input_grad)`` with param_grads matching
        :meth:`parameters` order.
        """
        g = as_matrix(output_grad)
        if len(cache) != len(self.layers):
            raise ValueError("cache does not match network depth")
        if g.shape != (cache[-1]["x"].shape[0], self.out_width):
            raise ValueError(
                f"output grad shape {g.shape} does not match network output"
            )

        grads_reversed: list[np.ndarray] = []
        for layer, entry in zip(reversed(self.layers), reversed(cache)):
            if layer.dropout > 0.0 and "drop_mask" in entry:
                g = g * entry["drop_mask"] / (1.0 - layer.dropout)
            layer_bn_grads = []
            if layer.batch_norm is not None:
                bn = layer.batch_norm
                normed = entry["bn_normed"]
                std = entry["bn_std"]
                d_scale = (g * normed).sum(axis=0)
                d_shift = g.sum(axis=0)
                gn = g * bn.scale
                # Differentiates through the batch mean/variance:
                # dx = (1/B)/std * (B*gn - sum(gn) - normed * sum(gn*normed))
                n_rows = g.shape[0]
                g = (
                    gn * n_rows - gn.sum(axis=0) - normed * (gn * normed).sum(axis=0)
                ) / (n_rows * std)
                layer_bn_grads = [d_scale, d_shift]
            if layer.activation == "relu":
                g = g * entry["relu_mask"]
            d_weight = entry["x"].T @ g
            d_bias = g.sum(axis=0)
            g = g @ layer.weight.T
            grads_reversed.append(layer_bn_grads)
            grads_reversed.append([d_weight, d_bias])

        param_grads: list[np.ndarray] = []
        for chunk in reversed(grads_reversed):
            param_grads.extend(chunk)
        return param_grads, g


def build_mlp(
    widths: list[int],
    rng: np.random.Generator,
    batch_norm: bool = True,
    dropout: float = 0.5,
) -> Mlp:
    """ReLU network with linear output layer.

    Hidden layers get ReLU, then batch norm and dropout when enabled; the
    final layer is a plain linear map. Weights are Glorot-uniform, biases
    zero.
    """
    if len(widths) < 2:
        raise ValueError("need at least an input and an output width")
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        last = i == len(widths) - 2
        layers.append(
            DenseLayer(
                weight=glorot_uniform(fan_in, fan_out, rng),
                bias=np.zeros(fan_out),
                activation="linear" if last else "relu",
                batch_norm=None if (last or not batch_norm) else BatchNorm.identity(fan_out),
                dropout=0.0 if last else dropout,
            )
        )
    return Mlp(layers)


def mlp_param_count(widths: list[int], batch_norm: bool = True) -> int:
    """Trainable parameter count of :func:`build_mlp` without building it."""
    total = 0
    for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        total += fan_in * fan_out + fan_out
        if batch_norm and i < len(widths) - 2:
            total += 2 * fan_out
    return total
