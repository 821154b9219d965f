"""Constrained random sampling over the architecture search grid.

Sampling is constructive: the first conv layer is drawn freely, every later
layer only from the choices its predecessor leaves open, so a draw never
violates the constraints and never rejects forever. Constraints:

1. kernel sizes are non-increasing across conv layers;
2. filter counts are non-decreasing across conv layers;
3. stride is 1 when the kernel size is <= 5;
4. stride is at most 2 when the kernel size is 7.

Specs that cannot fit the requested input length (time axis collapsing to
zero) are redrawn up to a bounded number of attempts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ConvLayerSpec, ModelSpec

MAX_FIT_ATTEMPTS = 1000


@dataclass(frozen=True)
class HyperSearchSpace:
    conv_layer_counts: tuple[int, ...] = (3, 4, 5, 6, 7, 8, 9)
    kernel_sizes: tuple[int, ...] = (3, 5, 7, 9, 11)
    filter_counts: tuple[int, ...] = (8, 16, 32, 64)
    strides: tuple[int, ...] = (1, 2, 3)
    dense_layer_counts: tuple[int, ...] = (1, 2, 3)
    hidden_unit_counts: tuple[int, ...] = (8, 16, 32, 64)
    dropout_rates: tuple[float, ...] = (0.2, 0.3, 0.4, 0.5, 0.6)
    pool_types: tuple[str, ...] = ("max", "average")


def allowed_strides(kernel_size: int, space: HyperSearchSpace) -> tuple[int, ...]:
    if kernel_size <= 5:
        return (1,)
    if kernel_size == 7:
        return tuple(s for s in space.strides if s <= 2)
    return space.strides


def _pick(rng: np.random.Generator, choices: tuple) -> int | float | str:
    return choices[int(rng.integers(len(choices)))]


def sample_hyperconfig(
    space: HyperSearchSpace,
    rng: np.random.Generator,
    head: str = "sigmoid",
    input_channels: int = 4,
    input_length: int = 256,
) -> ModelSpec:
    """Draw one architecture satisfying all constraints and the input length."""
    for _ in range(MAX_FIT_ATTEMPTS):
        n_conv = _pick(rng, space.conv_layer_counts)
        conv_layers: list[ConvLayerSpec] = []
        max_kernel = max(space.kernel_sizes)
        min_filters = min(space.filter_counts)
        for _layer in range(n_conv):
            kernels = tuple(k for k in space.kernel_sizes if k <= max_kernel)
            filters = tuple(f for f in space.filter_counts if f >= min_filters)
            k = _pick(rng, kernels)
            f = _pick(rng, filters)
            s = _pick(rng, allowed_strides(k, space))
            conv_layers.append(ConvLayerSpec(kernel_size=k, stride=s, filters=f))
            max_kernel, min_filters = k, f

        spec = ModelSpec(
            conv_layers=tuple(conv_layers),
            pool=_pick(rng, space.pool_types),
            dense_layers=_pick(rng, space.dense_layer_counts),
            hidden_units=_pick(rng, space.hidden_unit_counts),
            dropout_rate=_pick(rng, space.dropout_rates),
            head=head,
            input_channels=input_channels,
            input_length=input_length,
        )
        try:
            spec.conv_output_shapes()
        except ValueError:
            continue  # too deep for this input length; redraw
        return spec
    raise RuntimeError(
        f"no architecture in the search space fits input length {input_length} "
        f"after {MAX_FIT_ATTEMPTS} attempts"
    )


def check_constraints(spec: ModelSpec) -> list[str]:
    """Return the list of violated constraints (empty when the spec is valid)."""
    violations = []
    prev_k = None
    prev_f = None
    for i, layer in enumerate(spec.conv_layers):
        if prev_k is not None and layer.kernel_size > prev_k:
            violations.append(f"layer {i}: kernel {layer.kernel_size} > previous {prev_k}")
        if prev_f is not None and layer.filters < prev_f:
            violations.append(f"layer {i}: filters {layer.filters} < previous {prev_f}")
        if layer.kernel_size <= 5 and layer.stride != 1:
            violations.append(f"layer {i}: stride {layer.stride} with kernel <= 5")
        if layer.kernel_size == 7 and layer.stride > 2:
            violations.append(f"layer {i}: stride {layer.stride} with kernel 7")
        prev_k, prev_f = layer.kernel_size, layer.filters
    return violations
