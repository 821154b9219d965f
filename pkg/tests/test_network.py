import numpy as np
import pytest

from gazescreen import layers
from gazescreen.hyperparams import HyperSearchSpace, sample_hyperconfig
from gazescreen.network import (
    ConvLayerSpec,
    ModelSpec,
    check_shapes,
    clone_params,
    default_model_spec,
    forward,
    init_params,
    load_checkpoint,
    load_spec_text,
    logits,
    param_order,
    predict,
    save_checkpoint,
    save_spec_text,
    transfer_head,
)


def small_spec(head="sigmoid"):
    return ModelSpec(
        conv_layers=(ConvLayerSpec(5, 1, 8), ConvLayerSpec(3, 1, 16)),
        dense_layers=2,
        hidden_units=8,
        dropout_rate=0.25,
        head=head,
        input_channels=4,
        input_length=32,
    )


def test_spec_validation():
    with pytest.raises(ValueError):
        ConvLayerSpec(4, 1, 8)  # kernel not in the grid
    with pytest.raises(ValueError):
        ConvLayerSpec(3, 4, 8)
    with pytest.raises(ValueError):
        ModelSpec(conv_layers=(), input_length=32)
    with pytest.raises(ValueError):
        ModelSpec(conv_layers=(ConvLayerSpec(3, 1, 8),), pool="median")
    with pytest.raises(ValueError):
        ModelSpec(conv_layers=(ConvLayerSpec(3, 1, 8),), head="softmax")


def test_default_spec_shape_walkthrough():
    spec = default_model_spec()
    assert [c for c, _ in spec.conv_output_shapes()] == [16, 32, 32, 64]
    assert [t for _, t in spec.conv_output_shapes()] == [124, 59, 27, 12]
    assert spec.flatten_dim() == 64 * 12
    assert spec.dense_dims() == [(768, 32), (32, 1)]


def test_spec_too_deep_for_input_rejected():
    spec = ModelSpec(
        conv_layers=tuple(ConvLayerSpec(11, 3, 8) for _ in range(4)),
        input_length=64,
    )
    with pytest.raises(ValueError):
        spec.conv_output_shapes()


def test_forward_shape_matches_formula_for_sampled_specs(rng):
    space = HyperSearchSpace()
    for _ in range(200):
        spec = sample_hyperconfig(space, rng, input_length=64)
        params = init_params(spec, rng)
        x = rng.normal(size=(2, 4, 64))
        out, _ = forward(spec, params, x)
        assert out.shape == (2,)
        c, t = spec.conv_output_shapes()[-1]
        assert params[f"dense{0}.w"].shape[1] == c * t


def test_forward_validates_input_shape(rng):
    spec = small_spec()
    params = init_params(spec, rng)
    with pytest.raises(ValueError, match="expected input"):
        forward(spec, params, rng.normal(size=(2, 4, 31)))


def test_init_deterministic():
    spec = small_spec()
    a = init_params(spec, np.random.default_rng(7))
    b = init_params(spec, np.random.default_rng(7))
    for name in param_order(spec):
        np.testing.assert_array_equal(a[name], b[name])


def test_check_shapes_lists_offenders(rng):
    spec = small_spec()
    params = init_params(spec, rng)
    params["conv1.w"] = np.zeros((16, 8, 5))
    del params["dense0.b"]
    with pytest.raises(ValueError) as err:
        check_shapes(spec, params)
    assert "conv1.w" in str(err.value)
    assert "dense0.b" in str(err.value)


def test_sigmoid_head_output_in_unit_interval(rng):
    spec = small_spec()
    params = init_params(spec, rng)
    x = 100.0 * rng.normal(size=(8, 4, 32))
    p = predict(spec, params, x)
    assert np.all(p > 0.0) and np.all(p < 1.0)


def test_training_mode_needs_rng(rng):
    spec = small_spec()
    params = init_params(spec, rng)
    with pytest.raises(ValueError, match="rng"):
        forward(spec, params, rng.normal(size=(4, 4, 32)), training=True)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path, rng):
    spec = small_spec()
    params = init_params(spec, rng)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, spec, params)
    loaded_spec, loaded = load_checkpoint(path)
    assert loaded_spec == spec
    for name in param_order(spec):
        np.testing.assert_array_equal(
            loaded[name], params[name].astype(np.float32).astype(float)
        )


def test_checkpoint_bytes_deterministic(tmp_path, rng):
    spec = small_spec()
    params = init_params(spec, rng)
    save_checkpoint(tmp_path / "a.ckpt", spec, params)
    save_checkpoint(tmp_path / "b.ckpt", spec, params)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_spec_text_round_trip(tmp_path):
    spec = default_model_spec(head="linear", input_length=96)
    save_spec_text(tmp_path / "arch.txt", spec)
    assert load_spec_text(tmp_path / "arch.txt") == spec


# ---------------------------------------------------------------------------
# Transfer
# ---------------------------------------------------------------------------


def test_transfer_keeps_all_weights(rng):
    spec = small_spec(head="linear")
    params = init_params(spec, rng)
    new_spec, new_params, report = transfer_head(params, spec, head="sigmoid")
    assert new_spec.head == "sigmoid"
    assert all(report.values())
    for name in param_order(spec):
        np.testing.assert_array_equal(new_params[name], params[name])


def test_transfer_is_involutive(rng):
    spec = small_spec(head="linear")
    params = init_params(spec, rng)
    mid_spec, mid, _ = transfer_head(params, spec, head="sigmoid")
    back_spec, back, _ = transfer_head(mid, mid_spec, head="linear")
    assert back_spec == spec
    for name in param_order(spec):
        np.testing.assert_array_equal(back[name], params[name])


def test_transfer_with_reinit_touches_only_head(rng):
    spec = small_spec(head="linear")
    params = init_params(spec, rng)
    _, new_params, report = transfer_head(
        params, spec, head="sigmoid", reinit_head=True, rng=np.random.default_rng(3)
    )
    head = f"dense{spec.dense_layers - 1}"
    assert not report[f"{head}.w"]
    for name in param_order(spec):
        if not name.startswith(head):
            assert report[name]
            np.testing.assert_array_equal(new_params[name], params[name])


def test_transfer_rejects_mismatched_target(rng):
    spec = small_spec(head="linear")
    params = init_params(spec, rng)
    bad_target = ModelSpec(
        conv_layers=spec.conv_layers,
        dense_layers=2,
        hidden_units=16,  # differs
        dropout_rate=spec.dropout_rate,
        head="sigmoid",
        input_channels=4,
        input_length=32,
    )
    with pytest.raises(ValueError, match="hidden_units"):
        transfer_head(params, spec, head="sigmoid", target_spec=bad_target)


def test_transfer_activations_match_up_to_head(rng):
    # Pre-head activations must be bitwise identical; heads differ by sigmoid.
    spec = small_spec(head="linear")
    params = init_params(spec, rng)
    new_spec, new_params, _ = transfer_head(params, spec, head="sigmoid")
    x = rng.normal(size=(6, 4, 32))
    z_reg = logits(spec, params, x)
    z_cls = logits(new_spec, new_params, x)
    np.testing.assert_array_equal(z_reg, z_cls)
    np.testing.assert_array_equal(predict(new_spec, new_params, x), layers.sigmoid_forward(z_reg))


def test_params_clone_is_deep(rng):
    spec = small_spec()
    params = init_params(spec, rng)
    copy = clone_params(params)
    copy["conv0.w"][0, 0, 0] += 1.0
    assert params["conv0.w"][0, 0, 0] != copy["conv0.w"][0, 0, 0]
