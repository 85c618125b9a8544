"""Residual U-Net for slice-wise left-atrium segmentation.

Layout for ``encode_channels = [c0, ..., cN]``:

* encode layer i (i < N): residual unit, stride 2, -> c_i
* bottom: one residual unit at c_N, same resolution as the last encode layer
* decode layer i (i = N-1 .. 0): concat(encode_i, below) -> residual unit
  -> c_i, then a stride-2 transposed convolution (+ norm + PReLU) that
  doubles the resolution and hands c_{i-1} channels (c_0 at the top) up
* head: 1x1 convolution to ``output_channels`` followed by a sigmoid

A residual unit is two conv -> instance norm -> PReLU sequences plus a
shortcut (identity, or a 1x1 convolution when channels or stride change).
"""
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .stacks import ImageStack, MaskStack
from .tensor import Tensor, add, concat_channels, conv2d, conv_transpose2d, crop2d, instance_norm, prelu, sigmoid


@dataclass(frozen=True)
class ModelConfig:
    encode_channels: tuple = (16, 32, 64, 128, 256)
    input_channels: int = 1
    output_channels: int = 1
    kernel_size: int = 3
    down_stride: int = 2
    norm_epsilon: float = 1e-5
    threshold: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "encode_channels", tuple(int(c) for c in self.encode_channels))
        self.validate()

    def validate(self):
        ch = self.encode_channels
        if len(ch) < 2:
            raise ConfigError("encode_channels needs at least two entries")
        if any(c <= 0 for c in ch) or any(b <= a for a, b in zip(ch, ch[1:])):
            raise ConfigError(f"encode_channels must be positive and strictly increasing: {ch}")
        if self.down_stride != 2:
            raise ConfigError("down_stride must be 2")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError("kernel_size must be a positive odd integer")
        if self.input_channels < 1 or self.output_channels < 1:
            raise ConfigError("channel counts must be positive")
        if not self.norm_epsilon > 0:
            raise ConfigError("norm_epsilon must be positive")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")

    @property
    def depth(self):
        return len(self.encode_channels) - 1

    @property
    def size_multiple(self):
        return self.down_stride**self.depth

    def to_dict(self):
        d = asdict(self)
        d["encode_channels"] = list(self.encode_channels)
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad model config: {exc}") from None


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str  # "residual", "upsample" or "head"
    in_channels: int
    out_channels: int
    stride: int
    scale: int  # input resolution divisor relative to the (padded) image


def layer_graph(config):
    """Ordered layer description; parameter order follows it."""
    ch = config.encode_channels
    s = config.down_stride
    layers = []
    cin = config.input_channels
    for i in range(config.depth):
        layers.append(LayerSpec(f"enc{i}", "residual", cin, ch[i], s, s**i))
        cin = ch[i]
    bottom_scale = s**config.depth
    layers.append(LayerSpec("bottom", "residual", ch[-2], ch[-1], 1, bottom_scale))
    below = ch[-1]
    for i in reversed(range(config.depth)):
        scale = s ** (i + 1)
        layers.append(LayerSpec(f"dec{i}", "residual", ch[i] + below, ch[i], 1, scale))
        up_out = ch[i - 1] if i > 0 else ch[0]
        layers.append(LayerSpec(f"up{i}", "upsample", ch[i], up_out, s, scale))
        below = up_out
    layers.append(LayerSpec("head", "head", below, config.output_channels, 1, 1))
    return tuple(layers)


def _layer_params(layer, k):
    """(suffix, shape, init kind, fan_in) for one layer, in canonical order."""
    cin, cout = layer.in_channels, layer.out_channels
    if layer.kind == "residual":
        out = [
            ("conv0.weight", (cout, cin, k, k), "normed", cin * k * k),
            ("norm0.gamma", (cout,), "ones", 0),
            ("norm0.beta", (cout,), "zeros", 0),
            ("act0.slope", (cout,), "slope", 0),
            ("conv1.weight", (cout, cout, k, k), "normed", cout * k * k),
            ("norm1.gamma", (cout,), "ones", 0),
            ("norm1.beta", (cout,), "zeros", 0),
            ("act1.slope", (cout,), "slope", 0),
        ]
        if cin != cout or layer.stride != 1:
            out += [
                ("shortcut.weight", (cout, cin, 1, 1), "he", cin),
                ("shortcut.bias", (cout,), "zeros", 0),
            ]
        return out
    if layer.kind == "upsample":
        return [
            ("weight", (cin, cout, k, k), "normed", cin * k * k),
            ("norm.gamma", (cout,), "ones", 0),
            ("norm.beta", (cout,), "zeros", 0),
            ("act.slope", (cout,), "slope", 0),
        ]
    return [("weight", (cout, cin, 1, 1), "head", cin), ("bias", (cout,), "zeros", 0)]


def parameter_layout(config):
    """List of (name, offset, shape) partitioning the flat parameter vector."""
    layout = []
    offset = 0
    for layer in layer_graph(config):
        for suffix, shape, _, _ in _layer_params(layer, config.kernel_size):
            layout.append((f"{layer.name}.{suffix}", offset, shape))
            offset += int(np.prod(shape))
    return layout


class ModelParams:
    """Flat parameter vector with a per-tensor offsets table.

    Per-parameter tensors are views into ``vector``, so in-place optimizer
    updates on the vector are visible to the next forward pass.
    """

    def __init__(self, config, vector):
        self.config = config
        self.layout = parameter_layout(config)
        self.count = self.layout[-1][1] + int(np.prod(self.layout[-1][2]))
        vector = np.asarray(vector)
        if vector.ndim != 1 or vector.size != self.count:
            raise ShapeError(f"parameter vector has {vector.size} values, config needs {self.count}")
        self.vector = vector
        self.offsets = {name: (off, shape) for name, off, shape in self.layout}

    @property
    def dtype(self):
        return self.vector.dtype

    def array(self, name):
        off, shape = self.offsets[name]
        return self.vector[off : off + int(np.prod(shape))].reshape(shape)

    def leaves(self, requires_grad=True):
        return {name: Tensor(self.array(name), requires_grad=requires_grad) for name in self.offsets}

    def gather_grad(self, leaves):
        """Flat gradient vector in canonical order (zeros where unused)."""
        grad = np.zeros_like(self.vector)
        for name, (off, shape) in self.offsets.items():
            g = leaves[name].grad
            if g is not None:
                grad[off : off + g.size] = g.reshape(-1)
        return grad

    def copy(self):
        return ModelParams(self.config, self.vector.copy())

    def astype(self, dtype):
        return ModelParams(self.config, self.vector.astype(dtype))


NORMED_GAIN = 0.2
SHORTCUT_GAIN = 1.0
HEAD_GAIN = 5.0


def build_seganet(config=None, seed=0, dtype=np.float32, normed_gain=None, shortcut_gain=None, head_gain=None):
    """Initialize parameters from ``seed``.

    Weights are fan-in normal, std = gain * sqrt(2 / fan_in). Convolutions
    feeding an instance norm are scale-invariant in the forward pass, so
    their gain only sets the effective Adam step (smaller weights move
    faster relative to their size); the unnormalized 1x1 head gain sets the
    initial logit spread. Norm gains start at 1, shifts and biases at 0,
    PReLU slopes at 0.25. Returns ``(params, layers)``.
    """
    gains = {
        "normed": NORMED_GAIN if normed_gain is None else normed_gain,
        "he": SHORTCUT_GAIN if shortcut_gain is None else shortcut_gain,
        "head": HEAD_GAIN if head_gain is None else head_gain,
    }
    config = ModelConfig() if config is None else config
    config.validate()
    rng = np.random.default_rng(seed)
    layers = layer_graph(config)
    chunks = []
    for layer in layers:
        for _, shape, kind, fan_in in _layer_params(layer, config.kernel_size):
            if kind in gains:
                chunks.append(rng.standard_normal(shape).ravel() * (gains[kind] * np.sqrt(2.0 / fan_in)))
            elif kind == "ones":
                chunks.append(np.ones(int(np.prod(shape))))
            elif kind == "slope":
                chunks.append(np.full(int(np.prod(shape)), 0.25))
            else:
                chunks.append(np.zeros(int(np.prod(shape))))
    vector = np.concatenate(chunks).astype(dtype)
    return ModelParams(config, vector), layers


def _residual_unit(x, p, name, stride, k, eps):
    pad = k // 2
    h = conv2d(x, p[f"{name}.conv0.weight"], stride=stride, padding=pad)
    h = prelu(instance_norm(h, p[f"{name}.norm0.gamma"], p[f"{name}.norm0.beta"], eps), p[f"{name}.act0.slope"])
    h = conv2d(h, p[f"{name}.conv1.weight"], stride=1, padding=pad)
    h = prelu(instance_norm(h, p[f"{name}.norm1.gamma"], p[f"{name}.norm1.beta"], eps), p[f"{name}.act1.slope"])
    if f"{name}.shortcut.weight" in p:
        shortcut = conv2d(x, p[f"{name}.shortcut.weight"], p[f"{name}.shortcut.bias"], stride=stride)
    else:
        shortcut = x
    return add(h, shortcut)


def _upsample(x, p, name, stride, k, eps):
    h = conv_transpose2d(x, p[f"{name}.weight"], stride=stride, padding=k // 2)
    h = instance_norm(h, p[f"{name}.norm.gamma"], p[f"{name}.norm.beta"], eps)
    return prelu(h, p[f"{name}.act.slope"])


def _padding(n, multiple):
    target = -(-n // multiple) * multiple
    target = max(target, 2 * multiple)  # the bottom needs >= 2x2 for instance norm
    total = target - n
    return total // 2, total - total // 2


def forward(params, batch, leaves=None):
    """Probability map [B, out, H, W] for a batch [B, in, H, W].

    Inputs whose spatial dims are not a multiple of ``2**depth`` are
    reflection-padded symmetrically and the output is cropped back.
    ``leaves`` (from :meth:`ModelParams.leaves`) lets the caller collect
    parameter gradients after ``backward``.
    """
    config = params.config
    data = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
    if data.ndim != 4 or data.shape[1] != config.input_channels:
        raise ShapeError(f"expected [B, {config.input_channels}, H, W], got {data.shape}")
    if not np.isfinite(data).all():
        raise NumericError("segmentation input contains non-finite values")
    data = data.astype(params.dtype, copy=False)
    h, w = data.shape[2:]
    (top, bottom), (left, right) = _padding(h, config.size_multiple), _padding(w, config.size_multiple)
    if top or bottom or left or right:
        if max(top, bottom) >= h or max(left, right) >= w:
            raise ShapeError(f"input {h}x{w} too small to reflection-pad")
        data = np.pad(data, ((0, 0), (0, 0), (top, bottom), (left, right)), mode="reflect")
    p = params.leaves(requires_grad=False) if leaves is None else leaves
    k, eps, s = config.kernel_size, config.norm_epsilon, config.down_stride

    x = Tensor(data)
    skips = []
    layers = iter(layer_graph(config))
    for _ in range(config.depth):
        spec = next(layers)
        x = _residual_unit(x, p, spec.name, spec.stride, k, eps)
        skips.append(x)
    spec = next(layers)
    x = _residual_unit(x, p, spec.name, 1, k, eps)
    for i in reversed(range(config.depth)):
        spec = next(layers)
        x = _residual_unit(concat_channels(skips[i], x), p, spec.name, 1, k, eps)
        spec = next(layers)
        x = _upsample(x, p, spec.name, s, k, eps)
    x = conv2d(x, p["head.weight"], p["head.bias"])
    out = sigmoid(x)
    if top or bottom or left or right:
        out = crop2d(out, top, left, h, w)
    return out


def segment_stack(params, stack, threshold=None, batch_size=16):
    """Binary mask for every slice of an :class:`ImageStack`.

    Slices are segmented independently; a voxel is foreground iff its
    probability exceeds ``threshold`` strictly.
    """
    threshold = params.config.threshold if threshold is None else threshold
    if not isinstance(stack, ImageStack):
        raise TypeError("segment_stack expects an ImageStack")
    images = stack.images
    masks = np.zeros(images.shape, dtype=bool)
    for start in range(0, images.shape[0], batch_size):
        chunk = images[start : start + batch_size, None]
        prob = forward(params, chunk).data[:, 0]
        masks[start : start + batch_size] = prob > threshold
    return MaskStack(masks, stack.spacing)
