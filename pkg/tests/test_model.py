import numpy as np
import pytest

from seganet.errors import ConfigError, NumericError, ShapeError
from seganet.model import (
    ModelConfig,
    ModelParams,
    build_seganet,
    forward,
    layer_graph,
    parameter_layout,
    segment_stack,
)
from seganet.stacks import ImageStack
from seganet.training import dice_loss

SMALL = ModelConfig(encode_channels=(4, 8, 16, 32, 64))


def _conv_params(cin, cout, k):
    return cout * cin * k * k


def _expected_count(ch, cin=1, cout=1, k=3):
    # residual unit: two convs (no bias) + 2x(gamma, beta, slope) + optional 1x1 shortcut with bias
    def ru(i, o, strided):
        n = _conv_params(i, o, k) + _conv_params(o, o, k) + 6 * o
        if i != o or strided:
            n += i * o + o
        return n

    total, prev = 0, cin
    for c in ch[:-1]:
        total += ru(prev, c, True)
        prev = c
    total += ru(ch[-2], ch[-1], False)
    below = ch[-1]
    for i in reversed(range(len(ch) - 1)):
        total += ru(ch[i] + below, ch[i], False)
        up = ch[i - 1] if i > 0 else ch[0]
        total += ch[i] * up * k * k + 3 * up
        below = up
    return total + below * cout + cout


def test_default_channels():
    assert ModelConfig().encode_channels == (16, 32, 64, 128, 256)


def test_layer_graph_structure():
    layers = layer_graph(ModelConfig())
    enc = [l for l in layers if l.name.startswith("enc")]
    assert [l.out_channels for l in enc] == [16, 32, 64, 128]
    assert all(l.stride == 2 for l in enc)
    bottom = [l for l in layers if l.name == "bottom"]
    assert len(bottom) == 1 and bottom[0].out_channels == 256 and bottom[0].stride == 1
    ups = [l for l in layers if l.kind == "upsample"]
    assert len(ups) == 4 and all(l.stride == 2 for l in ups)
    assert layers[-1].kind == "head" and layers[-1].out_channels == 1


def test_parameter_count_closed_form():
    params, _ = build_seganet()
    assert params.count == _expected_count((16, 32, 64, 128, 256)) == 2_120_529
    assert build_seganet(SMALL)[0].count == _expected_count(SMALL.encode_channels)


def test_layout_partitions_vector():
    layout = parameter_layout(ModelConfig())
    offset = 0
    for _, off, shape in layout:
        assert off == offset
        offset += int(np.prod(shape))
    assert offset == build_seganet()[0].count


def test_same_seed_same_vector():
    a, _ = build_seganet(SMALL, seed=5)
    b, _ = build_seganet(SMALL, seed=5)
    c, _ = build_seganet(SMALL, seed=6)
    np.testing.assert_array_equal(a.vector, b.vector)
    assert not np.array_equal(a.vector, c.vector)


def test_initial_values():
    p, _ = build_seganet(SMALL)
    np.testing.assert_array_equal(p.array("enc0.act0.slope"), 0.25)
    np.testing.assert_array_equal(p.array("enc0.norm0.gamma"), 1.0)
    np.testing.assert_array_equal(p.array("head.bias"), 0.0)


def test_init_gains_scale_weight_std():
    p, _ = build_seganet(ModelConfig(), seed=0, normed_gain=1.0, shortcut_gain=1.0, head_gain=1.0)
    w = p.array("dec1.conv0.weight")
    fan_in = w.shape[1] * 9
    assert w.std() == pytest.approx(np.sqrt(2 / fan_in), rel=0.02)
    q, _ = build_seganet(ModelConfig(), seed=0, normed_gain=0.5, shortcut_gain=1.0, head_gain=1.0)
    np.testing.assert_allclose(q.array("dec1.conv0.weight"), 0.5 * w, rtol=1e-6)


@pytest.mark.parametrize("channels", [(8,), (), (16, 8), (0, 4)])
def test_bad_channels_rejected(channels):
    with pytest.raises(ConfigError):
        ModelConfig(encode_channels=channels)


def test_config_dict_round_trip():
    cfg = ModelConfig(encode_channels=(8, 16, 32), threshold=0.4)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"bogus": 1})


def test_params_vector_length_checked():
    with pytest.raises(ShapeError):
        ModelParams(SMALL, np.zeros(3, np.float32))


def test_leaves_are_views():
    p, _ = build_seganet(SMALL)
    leaves = p.leaves()
    p.vector[:] = 0
    assert not leaves["head.weight"].data.any()


def test_zero_weights_give_half():
    p, _ = build_seganet(SMALL)
    p.vector[:] = 0
    out = forward(p, np.random.default_rng(0).uniform(size=(2, 1, 32, 32)).astype(np.float32))
    np.testing.assert_array_equal(out.data, 0.5)


@pytest.mark.parametrize("size", [64, 70, 16, 33])
def test_output_dims_equal_input(size):
    p, _ = build_seganet(SMALL)
    out = forward(p, np.zeros((1, 1, size, size), np.float32) + 0.3)
    assert out.shape == (1, 1, size, size)


def test_padding_to_multiple_of_16(monkeypatch):
    import seganet.model as model

    seen = []
    real = model._residual_unit

    def spy(x, *args):
        seen.append(x.shape)
        return real(x, *args)

    monkeypatch.setattr(model, "_residual_unit", spy)
    p, _ = build_seganet(SMALL)
    forward(p, np.zeros((1, 1, 70, 70), np.float32))
    assert seen[0][2:] == (80, 80)


def test_output_strictly_inside_unit_interval():
    p, _ = build_seganet(SMALL, seed=1)
    p.array("head.weight")[:] *= 1e4
    out = forward(p, np.random.default_rng(1).uniform(size=(2, 1, 16, 16)).astype(np.float32))
    assert (out.data > 0).all() and (out.data < 1).all()


def test_forward_rejects_bad_input():
    p, _ = build_seganet(SMALL)
    with pytest.raises(ShapeError):
        forward(p, np.zeros((1, 2, 16, 16), np.float32))
    with pytest.raises(NumericError):
        forward(p, np.full((1, 1, 16, 16), np.nan, np.float32))


def test_forward_is_per_sample(rng):
    p, _ = build_seganet(SMALL, seed=2)
    x = rng.uniform(size=(3, 1, 32, 32)).astype(np.float32)
    full = forward(p, x).data
    np.testing.assert_array_equal(full[2:3], forward(p, x[2:3]).data)


def test_segment_stack_tie_rule_and_metadata():
    p, _ = build_seganet(SMALL)
    p.vector[:] = 0  # every probability exactly 0.5
    stack = ImageStack(np.zeros((2, 16, 16), np.float32), (1.25, 1.25, 10.0))
    masks = segment_stack(p, stack, threshold=0.5)
    assert not masks.mask.any()
    assert masks.spacing == stack.spacing


def test_segment_identical_slices_identical_masks(rng):
    p, _ = build_seganet(SMALL, seed=4)
    img = rng.uniform(size=(16, 16)).astype(np.float32)
    masks = segment_stack(p, ImageStack(np.stack([img, img, img]), (1, 1, 1)), threshold=0.45).mask
    np.testing.assert_array_equal(masks[0], masks[1])
    np.testing.assert_array_equal(masks[0], masks[2])


def test_end_to_end_gradient_spot_check_64bit():
    params, _ = build_seganet(SMALL, seed=0, dtype=np.float64)
    r = np.random.default_rng(0)
    x = r.uniform(0, 1, (2, 1, 16, 16))
    g = (r.uniform(size=x.shape) > 0.6).astype(float)
    leaves = params.leaves(True)
    dice_loss(forward(params, x, leaves), g).backward()
    grad = params.gather_grad(leaves)
    h = 1e-5
    for i in r.choice(params.count, 6, replace=False):
        orig = params.vector[i]
        params.vector[i] = orig + h
        plus = float(dice_loss(forward(params, x), g).data)
        params.vector[i] = orig - h
        minus = float(dice_loss(forward(params, x), g).data)
        params.vector[i] = orig
        numeric = (plus - minus) / (2 * h)
        assert abs(numeric - grad[i]) / max(abs(numeric), abs(grad[i]), 1e-12) <= 1e-5


def test_end_to_end_gradient_spot_check_32bit():
    p32, _ = build_seganet(SMALL, seed=1)
    p64 = p32.astype(np.float64)
    r = np.random.default_rng(1)
    x = r.uniform(0, 1, (2, 1, 16, 16)).astype(np.float32)
    g = (r.uniform(size=x.shape) > 0.6).astype(np.float32)
    leaves = p32.leaves(True)
    dice_loss(forward(p32, x, leaves), g).backward()
    grad = p32.gather_grad(leaves)
    h = 1e-5
    for i in r.choice(p32.count, 6, replace=False):
        orig = p64.vector[i]
        p64.vector[i] = orig + h
        plus = float(dice_loss(forward(p64, x), g).data)
        p64.vector[i] = orig - h
        minus = float(dice_loss(forward(p64, x), g).data)
        p64.vector[i] = orig
        numeric = (plus - minus) / (2 * h)
        assert abs(numeric - grad[i]) / max(abs(numeric), abs(grad[i]), 1e-12) <= 1e-3
