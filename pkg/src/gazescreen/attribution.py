"""DeepLIFT (Rescale rule) attributions over trained models.

The trained network is frozen into an inference op list with batch norm
folded into per-channel affine transforms (running statistics), then the
difference in pre-sigmoid output between the input and a reference input is
propagated back through the ops. Linear ops pass multipliers like
gradients; ReLU uses the Rescale slope ``delta_out / delta_in`` with a
derivative fallback when the input difference is tiny. The result satisfies
summation-to-delta: attributions sum to ``f(x) - f(ref)``. For max pooling
the pool winner at the input routes the multiplier, so summation-to-delta
is exact only when input and reference select the same winners; average
pooling (the default) is linear and always exact.

The reference input is all-zeros in normalized feature space, i.e. the
per-channel training mean.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace
from pathlib import Path

import numpy as np

from . import layers
from .features import CHANNEL_NAMES, N_CHANNELS
from .layers import BN_EPS
from .network import ModelParams, ModelSpec

#: Below this absolute input difference the Rescale slope falls back to the
#: pointwise derivative.
RESCALE_DELTA_FLOOR = 1e-7

SUM_TO_DELTA_RTOL = 1e-5


@dataclass(frozen=True)
class AttributionMap:
    """Per-cell relevance aligned with one model input."""

    subject_id: str
    video_id: str
    values: np.ndarray
    reference: np.ndarray
    output_delta: float
    true_length: int | None = None
    normalized: bool = False

    def __post_init__(self):
        if self.values.shape != self.reference.shape:
            raise ValueError("attribution and reference shapes differ")


# ---------------------------------------------------------------------------
# Inference op list
# ---------------------------------------------------------------------------


def fold_batchnorm(
    gamma: np.ndarray, beta: np.ndarray, running_mean: np.ndarray, running_var: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    scale = gamma / np.sqrt(running_var + BN_EPS)
    return scale, beta - running_mean * scale


def build_inference_ops(spec: ModelSpec, params: ModelParams) -> list[tuple]:
    """Flatten the model into primitive inference ops (dropout is identity)."""
    ops: list[tuple] = []
    for i, layer in enumerate(spec.conv_layers):
        ops.append(("conv", params[f"conv{i}.w"], params[f"conv{i}.b"], layer.stride))
        ops.append(("relu",))
        scale, shift = fold_batchnorm(
            params[f"conv{i}.gamma"],
            params[f"conv{i}.beta"],
            params[f"conv{i}.running_mean"],
            params[f"conv{i}.running_var"],
        )
        ops.append(("affine", scale, shift))
        ops.append(("avgpool",) if spec.pool == "average" else ("maxpool",))
    ops.append(("flatten",))
    for i in range(spec.dense_layers):
        ops.append(("dense", params[f"dense{i}.w"], params[f"dense{i}.b"]))
        if i < spec.dense_layers - 1:
            ops.append(("relu",))
    return ops


def run_ops(ops: list[tuple], x: np.ndarray) -> list[np.ndarray]:
    """Forward a batch through the op list; returns activations per stage.

    ``activations[0]`` is the input, ``activations[-1]`` the (N, 1) logits.
    """
    acts = [x]
    h = x
    for op in ops:
        kind = op[0]
        if kind == "conv":
            _, w, b, stride = op
            h = layers.conv1d_forward(h, w, b, stride)
        elif kind == "relu":
            h = layers.relu_forward(h)
        elif kind == "identity":
            h = h.copy()
        elif kind == "affine":
            _, scale, shift = op
            h = h * scale[None, :, None] + shift[None, :, None]
        elif kind == "avgpool":
            h = layers.avgpool_forward(h)
        elif kind == "maxpool":
            h, _ = layers.maxpool_forward(h)
        elif kind == "flatten":
            h = h.reshape(h.shape[0], -1)
        elif kind == "dense":
            _, w, b = op
            h = layers.dense_forward(h, w, b)
        else:
            raise ValueError(f"unknown op {kind!r}")
        acts.append(h)
    return acts


def _propagate_multiplier(
    op: tuple, m: np.ndarray, a_x: np.ndarray, a_ref: np.ndarray
) -> np.ndarray:
    """Push a multiplier through one op, from its output side to its input side.

    ``a_x`` / ``a_ref`` are the op's *inputs* under the actual and reference
    forward passes.
    """
    kind = op[0]
    if kind == "conv":
        _, w, _, stride = op
        dx, _, _ = layers.conv1d_backward(a_x, w, stride, m)
        return dx
    if kind == "relu":
        delta = a_x - a_ref
        slope = np.where(
            np.abs(delta) < RESCALE_DELTA_FLOOR,
            (a_x > 0).astype(float),
            (layers.relu_forward(a_x) - layers.relu_forward(a_ref)) / np.where(delta == 0, 1.0, delta),
        )
        return m * slope
    if kind == "identity":
        return m
    if kind == "affine":
        _, scale, _ = op
        return m * scale[None, :, None]
    if kind == "avgpool":
        return layers.avgpool_backward(a_x.shape, m)
    if kind == "maxpool":
        _, second_wins = layers.maxpool_forward(a_x)
        return layers.maxpool_backward(a_x.shape, second_wins, m)
    if kind == "flatten":
        return m.reshape(a_x.shape)
    if kind == "dense":
        _, w, _ = op
        return m @ w
    raise ValueError(f"unknown op {kind!r}")


def deeplift_on_ops(
    ops: list[tuple], x: np.ndarray, ref: np.ndarray
) -> tuple[np.ndarray, float]:
    """Rescale-rule attributions for a single instance against a reference.

    Returns ``(attributions, output_delta)`` where attributions has the
    input's shape and sums to the delta of the scalar output.
    """
    if x.shape != ref.shape:
        raise ValueError(f"input shape {x.shape} does not match reference {ref.shape}")
    xb = x[None, ...]
    rb = ref[None, ...]
    acts_x = run_ops(ops, xb)
    acts_ref = run_ops(ops, rb)
    delta = float(acts_x[-1][0, 0] - acts_ref[-1][0, 0])

    m = np.ones((1, 1))
    for i in range(len(ops) - 1, -1, -1):
        m = _propagate_multiplier(ops[i], m, acts_x[i], acts_ref[i])
    attr = (m * (xb - rb))[0]

    total = float(attr.sum())
    tol = SUM_TO_DELTA_RTOL * (abs(delta) + 1e-9)
    if abs(total - delta) > tol:
        raise AssertionError(
            f"summation-to-delta violated: attributions sum to {total:.6g} "
            f"but output delta is {delta:.6g}"
        )
    return attr, delta


def deeplift_attribute(
    spec: ModelSpec,
    params: ModelParams,
    x: np.ndarray,
    ref: np.ndarray | None = None,
    subject_id: str = "",
    video_id: str = "",
    true_length: int | None = None,
) -> AttributionMap:
    """Attribute the pre-sigmoid logit of one input to its cells.

    ``ref`` defaults to all zeros, the per-channel training mean in
    normalized feature space.
    """
    if ref is None:
        ref = np.zeros_like(x)
    ops = build_inference_ops(spec, params)
    values, delta = deeplift_on_ops(ops, x, ref)
    return AttributionMap(
        subject_id=subject_id,
        video_id=video_id,
        values=values,
        reference=ref,
        output_delta=delta,
        true_length=true_length,
    )


def normalize_instance(a: AttributionMap) -> AttributionMap:
    """Absolute values, min-max scaled to [0, 1]; constant maps become zeros."""
    v = np.abs(a.values)
    lo = float(v.min())
    hi = float(v.max())
    if hi == lo:
        v = np.zeros_like(v)
    else:
        v = (v - lo) / (hi - lo)
    return dc_replace(a, values=v, normalized=True)


# ---------------------------------------------------------------------------
# Aggregation (box-plot summaries per channel and video)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelSummary:
    video_id: str
    channel: str
    median: float
    mean: float
    q1: float
    q3: float
    lo_whisker: float
    hi_whisker: float


def _box_summary(video_id: str, channel: str, values: np.ndarray) -> ChannelSummary:
    q1, med, q3 = (float(q) for q in np.percentile(values, [25, 50, 75]))
    iqr = q3 - q1
    in_lo = values[values >= q1 - 1.5 * iqr]
    in_hi = values[values <= q3 + 1.5 * iqr]
    return ChannelSummary(
        video_id=video_id,
        channel=channel,
        median=med,
        mean=float(values.mean()),
        q1=q1,
        q3=q3,
        lo_whisker=float(in_lo.min()),
        hi_whisker=float(in_hi.max()),
    )


def aggregate_channel_relevance(maps: list[AttributionMap]) -> list[ChannelSummary]:
    """Pool normalized attributions per channel and video, excluding padding."""
    if not maps:
        raise ValueError("cannot aggregate an empty set of attribution maps")
    by_video: dict[str, list[AttributionMap]] = {}
    for a in maps:
        if not a.normalized:
            raise ValueError("aggregate expects normalized attribution maps")
        by_video.setdefault(a.video_id, []).append(a)

    summaries = []
    for video_id in sorted(by_video):
        group = by_video[video_id]
        for c in range(N_CHANNELS):
            pooled = np.concatenate(
                [
                    a.values[c, : (a.true_length if a.true_length is not None else a.values.shape[1])]
                    for a in group
                ]
            )
            summaries.append(_box_summary(video_id, CHANNEL_NAMES[c], pooled))
    return summaries


def save_summaries(path: str | Path, summaries: list[ChannelSummary]) -> None:
    lines = ["video,channel,median,mean,q1,q3,lo_whisker,hi_whisker"]
    for s in summaries:
        lines.append(
            f"{s.video_id},{s.channel},{s.median:.12g},{s.mean:.12g},"
            f"{s.q1:.12g},{s.q3:.12g},{s.lo_whisker:.12g},{s.hi_whisker:.12g}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_attribution(path: str | Path, a: AttributionMap) -> None:
    """Binary dump: feature-cache layout plus a delta header field."""
    header = (
        f"ATTR1\n{a.subject_id} {a.video_id} {a.values.shape[0]} "
        f"{a.values.shape[1]} {a.true_length if a.true_length is not None else -1} "
        f"{a.output_delta!r}\n"
    ).encode("ascii")
    Path(path).write_bytes(
        header + np.ascontiguousarray(a.values, dtype="<f4").tobytes()
    )
