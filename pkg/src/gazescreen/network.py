"""Sequence classifier assembly: spec, parameters, forward/backward, IO.

Architecture: a stack of conv blocks, each ``conv -> ReLU -> batch norm ->
pool(2)``, then flatten, dropout, and a dense stack with ReLU between hidden
layers. The head is a single output unit whose activation is either sigmoid
(classification) or identity (regression); all forward/backward plumbing
works on the pre-activation logit so both heads share one code path.

Checkpoint file (``.ckpt``): magic ``CKPT1\\n``, an ASCII spec block
terminated by ``end\\n``, then per tensor one ASCII ``tensor <name> <dims>``
line followed by the little-endian float32 data. Tensor order is
deterministic: layer order, weights before biases before norm parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import layers

CKPT_MAGIC = b"CKPT1\n"

KERNEL_CHOICES = (3, 5, 7, 9, 11)
FILTER_CHOICES = (8, 16, 32, 64)
STRIDE_CHOICES = (1, 2, 3)

ModelParams = dict[str, np.ndarray]


@dataclass(frozen=True)
class ConvLayerSpec:
    kernel_size: int
    stride: int
    filters: int

    def __post_init__(self):
        if self.kernel_size not in KERNEL_CHOICES:
            raise ValueError(f"kernel_size must be one of {KERNEL_CHOICES}")
        if self.filters not in FILTER_CHOICES:
            raise ValueError(f"filters must be one of {FILTER_CHOICES}")
        if self.stride not in STRIDE_CHOICES:
            raise ValueError(f"stride must be one of {STRIDE_CHOICES}")


@dataclass(frozen=True)
class ModelSpec:
    conv_layers: tuple[ConvLayerSpec, ...]
    pool: str = "average"
    dense_layers: int = 2
    hidden_units: int = 32
    dropout_rate: float = 0.4
    head: str = "sigmoid"
    input_channels: int = 4
    input_length: int = 256

    def __post_init__(self):
        if not self.conv_layers:
            raise ValueError("at least one conv layer is required")
        if self.pool not in ("average", "max"):
            raise ValueError(f"pool must be 'average' or 'max', got {self.pool!r}")
        if self.dense_layers not in (1, 2, 3):
            raise ValueError("dense_layers must be 1, 2, or 3")
        if self.hidden_units <= 0:
            raise ValueError("hidden_units must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.head not in ("sigmoid", "linear"):
            raise ValueError(f"head must be 'sigmoid' or 'linear', got {self.head!r}")
        if self.input_channels <= 0 or self.input_length <= 0:
            raise ValueError("input dimensions must be positive")

    def conv_output_shapes(self) -> list[tuple[int, int]]:
        """(channels, time) after each conv block (conv + pool)."""
        shapes = []
        c, t = self.input_channels, self.input_length
        for layer in self.conv_layers:
            t = layers.conv1d_output_length(t, layer.kernel_size, layer.stride)
            t = t // 2  # pooling, size 2, floor truncation
            if t < 1:
                raise ValueError(
                    f"spec does not fit input length {self.input_length}: "
                    f"time axis collapses to zero after pooling"
                )
            c = layer.filters
            shapes.append((c, t))
        return shapes

    def flatten_dim(self) -> int:
        c, t = self.conv_output_shapes()[-1]
        return c * t

    def dense_dims(self) -> list[tuple[int, int]]:
        """(in_features, out_features) of every dense layer, head last."""
        dims = []
        d = self.flatten_dim()
        for _ in range(self.dense_layers - 1):
            dims.append((d, self.hidden_units))
            d = self.hidden_units
        dims.append((d, 1))
        return dims


def default_model_spec(
    head: str = "sigmoid", input_length: int = 256, input_channels: int = 4
) -> ModelSpec:
    """Shipped default architecture; satisfies all search-space constraints."""
    return ModelSpec(
        conv_layers=(
            ConvLayerSpec(9, 1, 16),
            ConvLayerSpec(7, 1, 32),
            ConvLayerSpec(5, 1, 32),
            ConvLayerSpec(3, 1, 64),
        ),
        pool="average",
        dense_layers=2,
        hidden_units=32,
        dropout_rate=0.4,
        head=head,
        input_channels=input_channels,
        input_length=input_length,
    )


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


def param_order(spec: ModelSpec) -> list[str]:
    names = []
    for i in range(len(spec.conv_layers)):
        names += [
            f"conv{i}.w",
            f"conv{i}.b",
            f"conv{i}.gamma",
            f"conv{i}.beta",
            f"conv{i}.running_mean",
            f"conv{i}.running_var",
        ]
    for i in range(spec.dense_layers):
        names += [f"dense{i}.w", f"dense{i}.b"]
    return names


def trainable_names(spec: ModelSpec) -> list[str]:
    return [n for n in param_order(spec) if "running_" not in n]


def init_params(spec: ModelSpec, rng: np.random.Generator) -> ModelParams:
    """He-style uniform fan-in initialization (ReLU-appropriate)."""
    params: ModelParams = {}
    c_in = spec.input_channels
    for i, layer in enumerate(spec.conv_layers):
        fan_in = c_in * layer.kernel_size
        limit = math.sqrt(6.0 / fan_in)
        params[f"conv{i}.w"] = rng.uniform(
            -limit, limit, size=(layer.filters, c_in, layer.kernel_size)
        )
        params[f"conv{i}.b"] = np.zeros(layer.filters)
        params[f"conv{i}.gamma"] = np.ones(layer.filters)
        params[f"conv{i}.beta"] = np.zeros(layer.filters)
        params[f"conv{i}.running_mean"] = np.zeros(layer.filters)
        params[f"conv{i}.running_var"] = np.ones(layer.filters)
        c_in = layer.filters
    for i, (d_in, d_out) in enumerate(spec.dense_dims()):
        limit = math.sqrt(6.0 / d_in)
        params[f"dense{i}.w"] = rng.uniform(-limit, limit, size=(d_out, d_in))
        params[f"dense{i}.b"] = np.zeros(d_out)
    return params


def clone_params(params: ModelParams) -> ModelParams:
    return {k: v.copy() for k, v in params.items()}


def check_shapes(spec: ModelSpec, params: ModelParams) -> None:
    """Raise listing every tensor whose shape disagrees with the spec."""
    reference = init_params(spec, np.random.default_rng(0))
    bad = []
    for name in param_order(spec):
        if name not in params:
            bad.append(f"{name} (missing)")
        elif params[name].shape != reference[name].shape:
            bad.append(
                f"{name} (got {params[name].shape}, expected {reference[name].shape})"
            )
    extra = set(params) - set(reference)
    bad += [f"{name} (unexpected)" for name in sorted(extra)]
    if bad:
        raise ValueError("parameter shapes do not match the spec: " + ", ".join(bad))


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def forward(
    spec: ModelSpec,
    params: ModelParams,
    x: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, list]:
    """Compute pre-head logits (N,) and the cache for :func:`backward`.

    In training mode, batch norm running statistics are updated in place and
    dropout is active (requires ``rng``).
    """
    if x.ndim != 3 or x.shape[1] != spec.input_channels or x.shape[2] != spec.input_length:
        raise ValueError(
            f"expected input (N, {spec.input_channels}, {spec.input_length}), "
            f"got {x.shape}"
        )
    cache: list = []
    h = x
    for i, layer in enumerate(spec.conv_layers):
        conv_in = h
        z = layers.conv1d_forward(h, params[f"conv{i}.w"], params[f"conv{i}.b"], layer.stride)
        a = layers.relu_forward(z)
        bn_out, bn_cache = layers.batchnorm_forward(
            a,
            params[f"conv{i}.gamma"],
            params[f"conv{i}.beta"],
            params[f"conv{i}.running_mean"],
            params[f"conv{i}.running_var"],
            training,
        )
        if spec.pool == "average":
            h = layers.avgpool_forward(bn_out)
            pool_cache = bn_out.shape
        else:
            h, second_wins = layers.maxpool_forward(bn_out)
            pool_cache = (bn_out.shape, second_wins)
        cache.append(("conv_block", i, conv_in, z, bn_cache, pool_cache))

    flat_in_shape = h.shape
    h = h.reshape(h.shape[0], -1)
    cache.append(("flatten", flat_in_shape))

    h, drop_mask = layers.dropout_forward(h, spec.dropout_rate, training, rng)
    cache.append(("dropout", drop_mask))

    n_dense = spec.dense_layers
    for i in range(n_dense):
        dense_in = h
        h = layers.dense_forward(h, params[f"dense{i}.w"], params[f"dense{i}.b"])
        if i < n_dense - 1:
            pre_relu = h
            h = layers.relu_forward(h)
            cache.append(("dense", i, dense_in, pre_relu))
        else:
            cache.append(("dense", i, dense_in, None))

    return h[:, 0], cache


def backward(
    spec: ModelSpec, params: ModelParams, cache: list, dlogit: np.ndarray
) -> tuple[ModelParams, np.ndarray]:
    """Backpropagate d(loss)/d(logit); returns (grads, dx)."""
    grads: ModelParams = {}
    d = dlogit[:, None]
    pos = len(cache) - 1

    for i in range(spec.dense_layers - 1, -1, -1):
        kind, idx, dense_in, pre_relu = cache[pos]
        assert kind == "dense" and idx == i
        pos -= 1
        if pre_relu is not None:
            d = layers.relu_backward(pre_relu, d)
        d, grads[f"dense{i}.w"], grads[f"dense{i}.b"] = layers.dense_backward(
            dense_in, params[f"dense{i}.w"], d
        )

    kind, drop_mask = cache[pos]
    assert kind == "dropout"
    pos -= 1
    d = layers.dropout_backward(drop_mask, spec.dropout_rate, d)

    kind, flat_in_shape = cache[pos]
    assert kind == "flatten"
    pos -= 1
    d = d.reshape(flat_in_shape)

    for i in range(len(spec.conv_layers) - 1, -1, -1):
        kind, idx, conv_in, z, bn_cache, pool_cache = cache[pos]
        assert kind == "conv_block" and idx == i
        pos -= 1
        if spec.pool == "average":
            d = layers.avgpool_backward(pool_cache, d)
        else:
            bn_shape, second_wins = pool_cache
            d = layers.maxpool_backward(bn_shape, second_wins, d)
        d, grads[f"conv{i}.gamma"], grads[f"conv{i}.beta"] = layers.batchnorm_backward(
            d, bn_cache
        )
        d = layers.relu_backward(z, d)
        d, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = layers.conv1d_backward(
            conv_in, params[f"conv{i}.w"], spec.conv_layers[i].stride, d
        )

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name}")
    return grads, d


def logits(spec: ModelSpec, params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Inference-mode pre-activation outputs."""
    out, _ = forward(spec, params, x, training=False)
    return out


def predict(spec: ModelSpec, params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Inference-mode head outputs: probabilities or regression values."""
    z = logits(spec, params, x)
    if spec.head == "sigmoid":
        return layers.sigmoid_forward(z)
    return z


# ---------------------------------------------------------------------------
# Transfer
# ---------------------------------------------------------------------------


def transfer_head(
    pretrained: ModelParams,
    spec: ModelSpec,
    head: str = "sigmoid",
    reinit_head: bool = False,
    rng: np.random.Generator | None = None,
    target_spec: ModelSpec | None = None,
) -> tuple[ModelSpec, ModelParams, dict[str, bool]]:
    """Swap the head activation, keeping all weights.

    The single output unit's weights persist by default (only the activation
    changes); pass ``reinit_head=True`` to re-draw the last dense layer.
    Returns the new spec, the new parameters, and a per-tensor equality
    report against the pretrained parameters.
    """
    new_spec = replace(spec, head=head)
    if target_spec is not None and target_spec != new_spec:
        diffs = [
            f
            for f in ("conv_layers", "pool", "dense_layers", "hidden_units",
                      "dropout_rate", "input_channels", "input_length")
            if getattr(target_spec, f) != getattr(new_spec, f)
        ]
        raise ValueError(
            f"target spec differs from the pretrained spec beyond the head: {diffs}"
        )
    check_shapes(spec, pretrained)
    params = clone_params(pretrained)
    if reinit_head:
        if rng is None:
            raise ValueError("reinit_head=True requires an rng")
        d_in, d_out = new_spec.dense_dims()[-1]
        limit = math.sqrt(6.0 / d_in)
        head_idx = new_spec.dense_layers - 1
        params[f"dense{head_idx}.w"] = rng.uniform(-limit, limit, size=(d_out, d_in))
        params[f"dense{head_idx}.b"] = np.zeros(d_out)
    report = {
        name: bool(np.array_equal(params[name], pretrained[name]))
        for name in param_order(new_spec)
    }
    return new_spec, params, report


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def spec_to_lines(spec: ModelSpec) -> list[str]:
    lines = [
        f"input_channels {spec.input_channels}",
        f"input_length {spec.input_length}",
    ]
    lines += [
        f"conv {layer.kernel_size} {layer.stride} {layer.filters}"
        for layer in spec.conv_layers
    ]
    lines += [
        f"pool {spec.pool}",
        f"dense_layers {spec.dense_layers}",
        f"hidden_units {spec.hidden_units}",
        f"dropout_rate {spec.dropout_rate!r}",
        f"head {spec.head}",
    ]
    return lines


def spec_from_lines(lines: list[str]) -> ModelSpec:
    fields: dict[str, str] = {}
    conv_layers: list[ConvLayerSpec] = []
    for line in lines:
        key, _, value = line.partition(" ")
        if key == "conv":
            k, s, f = (int(tok) for tok in value.split())
            conv_layers.append(ConvLayerSpec(k, s, f))
        else:
            fields[key] = value
    return ModelSpec(
        conv_layers=tuple(conv_layers),
        pool=fields["pool"],
        dense_layers=int(fields["dense_layers"]),
        hidden_units=int(fields["hidden_units"]),
        dropout_rate=float(fields["dropout_rate"]),
        head=fields["head"],
        input_channels=int(fields["input_channels"]),
        input_length=int(fields["input_length"]),
    )


def save_spec_text(path: str | Path, spec: ModelSpec) -> None:
    Path(path).write_text("\n".join(spec_to_lines(spec)) + "\n", encoding="ascii")


def load_spec_text(path: str | Path) -> ModelSpec:
    lines = [ln for ln in Path(path).read_text(encoding="ascii").splitlines() if ln.strip()]
    return spec_from_lines(lines)


def save_checkpoint(path: str | Path, spec: ModelSpec, params: ModelParams) -> None:
    check_shapes(spec, params)
    out = [CKPT_MAGIC]
    out += [f"{line}\n".encode("ascii") for line in spec_to_lines(spec)]
    out.append(b"end\n")
    for name in param_order(spec):
        tensor = params[name]
        dims = " ".join(str(d) for d in tensor.shape)
        out.append(f"tensor {name} {dims}\n".encode("ascii"))
        out.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(out))


def load_checkpoint(path: str | Path) -> tuple[ModelSpec, ModelParams]:
    path = Path(path)
    blob = path.read_bytes()
    if not blob.startswith(CKPT_MAGIC):
        raise ValueError(f"{path}: bad magic, not a CKPT1 checkpoint")
    pos = len(CKPT_MAGIC)

    spec_lines: list[str] = []
    while True:
        nl = blob.index(b"\n", pos)
        line = blob[pos:nl].decode("ascii")
        pos = nl + 1
        if line == "end":
            break
        spec_lines.append(line)
    spec = spec_from_lines(spec_lines)

    params: ModelParams = {}
    for expected in param_order(spec):
        nl = blob.index(b"\n", pos)
        tokens = blob[pos:nl].decode("ascii").split()
        pos = nl + 1
        if tokens[0] != "tensor" or tokens[1] != expected:
            raise ValueError(f"{path}: expected tensor {expected}, found {tokens[1:2]}")
        shape = tuple(int(d) for d in tokens[2:])
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(blob[pos : pos + 4 * count], dtype="<f4")
        if data.size != count:
            raise ValueError(f"{path}: truncated tensor {expected}")
        pos += 4 * count
        params[expected] = data.reshape(shape).astype(float)
    return spec, params
