import numpy as np

from gazescreen.hyperparams import HyperSearchSpace, allowed_strides, check_constraints, sample_hyperconfig


def audit_spec(spec):
    """Explicit independent audit of the four sampling constraints."""
    kernels = [c.kernel_size for c in spec.conv_layers]
    filters = [c.filters for c in spec.conv_layers]
    strides = [c.stride for c in spec.conv_layers]
    assert all(b <= a for a, b in zip(kernels, kernels[1:])), "kernels must not increase"
    assert all(b >= a for a, b in zip(filters, filters[1:])), "filters must not decrease"
    for k, s in zip(kernels, strides):
        if k <= 5:
            assert s == 1
        elif k == 7:
            assert s <= 2


def test_samples_respect_all_constraints():
    space = HyperSearchSpace()
    rng = np.random.default_rng(0)
    for _ in range(2000):
        spec = sample_hyperconfig(space, rng)
        audit_spec(spec)
        assert check_constraints(spec) == []
        assert len(spec.conv_layers) in space.conv_layer_counts
        assert spec.dense_layers in space.dense_layer_counts
        assert spec.hidden_units in space.hidden_unit_counts
        assert spec.dropout_rate in space.dropout_rates
        assert spec.pool in space.pool_types
        spec.conv_output_shapes()  # must fit the input length


def test_kernel7_stride_rule():
    space = HyperSearchSpace()
    assert allowed_strides(7, space) == (1, 2)
    assert allowed_strides(3, space) == (1,)
    assert allowed_strides(5, space) == (1,)
    assert set(allowed_strides(9, space)) == {1, 2, 3}
    rng = np.random.default_rng(1)
    seen_stride2_with_k7 = False
    for _ in range(3000):
        spec = sample_hyperconfig(space, rng)
        for layer in spec.conv_layers:
            if layer.kernel_size == 7:
                assert layer.stride in (1, 2)
                seen_stride2_with_k7 |= layer.stride == 2
    assert seen_stride2_with_k7  # both options actually occur


def test_non_increasing_kernel_sequence_is_valid():
    spec_kernels = (9, 5, 5, 3)
    rng = np.random.default_rng(2)
    space = HyperSearchSpace()
    # The sampler must be able to produce non-strictly-decreasing sequences.
    seen = set()
    for _ in range(4000):
        spec = sample_hyperconfig(space, rng)
        seen.add(tuple(c.kernel_size for c in spec.conv_layers))
    assert any(
        len(ks) == 4 and all(b <= a for a, b in zip(ks, ks[1:])) and len(set(ks)) < 4
        for ks in seen
    )
    assert all(b <= a for a, b in zip(spec_kernels, spec_kernels[1:]))


def test_sampling_deterministic_per_seed():
    space = HyperSearchSpace()
    a = sample_hyperconfig(space, np.random.default_rng(99))
    b = sample_hyperconfig(space, np.random.default_rng(99))
    assert a == b


def test_short_input_lengths_still_sampleable():
    space = HyperSearchSpace()
    rng = np.random.default_rng(3)
    for _ in range(200):
        spec = sample_hyperconfig(space, rng, input_length=48)
        audit_spec(spec)
        assert spec.conv_output_shapes()[-1][1] >= 1
