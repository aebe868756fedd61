"""Layer kinds with manual forward/backward kernels.

Every kernel works on a leading batch axis. Per-sample shapes are
``(C, H, W)`` for feature maps and ``(D,)`` for vectors; all arithmetic is
float64.
"""

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError

Shape = tuple[int, ...]
Cache = dict[str, Any]


class LayerKind(Enum):
    """Kinds of layers a network graph can hold."""

    CONV2D = "conv2d"
    MAXPOOL2D = "maxpool2d"
    RELU = "relu"
    FC = "fully_connected"
    ELTWISE_SUM = "eltwise_sum"
    STRIPE_SPLIT = "stripe_split"
    CONCAT = "concat"


@dataclass(frozen=True)
class LayerSpec:
    """Kind plus the hyperparameters that kind reads."""

    kind: LayerKind
    filters: int = 0  # conv output channels
    kernel: int = 0  # conv / pool window size
    stride: int = 1
    padding: int = 0  # zero padding on every side (conv only)
    out_dim: int = 0  # fully-connected output size
    stripes: int = 0  # stripe-split count
    stripe: int = 0  # which stripe this node extracts
    axis: int = 0  # concat axis within the per-sample shape
    shares_parameters: bool = False

    def validate(self, name: str) -> None:
        """Check hyperparameters that do not depend on input shapes."""
        if self.kind in (LayerKind.CONV2D, LayerKind.MAXPOOL2D):
            if self.kernel <= 0:
                raise ConfigurationError(f"kernel size must be positive, got {self.kernel}", name)
            if self.stride <= 0:
                raise ConfigurationError(f"stride must be positive, got {self.stride}", name)
        if self.kind == LayerKind.CONV2D:
            if self.filters <= 0:
                raise ConfigurationError(f"filter count must be positive, got {self.filters}", name)
            if self.padding < 0:
                raise ConfigurationError(f"padding must be non-negative, got {self.padding}", name)
        if self.kind == LayerKind.FC and self.out_dim <= 0:
            raise ConfigurationError(f"output dim must be positive, got {self.out_dim}", name)
        if self.kind == LayerKind.STRIPE_SPLIT:
            if self.stripes <= 0:
                raise ConfigurationError(f"stripe count must be positive, got {self.stripes}", name)
            if not 0 <= self.stripe < self.stripes:
                raise ConfigurationError(
                    f"stripe index {self.stripe} outside [0, {self.stripes})", name
                )
        if self.shares_parameters:
            raise ConfigurationError("parameter sharing is not supported", name)

    def to_dict(self) -> dict:
        data = {k: v for k, v in asdict(self).items() if k != "kind"}
        return {"kind": self.kind.value, **data}

    @classmethod
    def from_dict(cls, data: dict) -> "LayerSpec":
        fields = dict(data)
        kind = LayerKind(fields.pop("kind"))
        return cls(kind=kind, **fields)


def conv(filters: int, kernel: int, stride: int = 1, padding: int = 0) -> LayerSpec:
    return LayerSpec(LayerKind.CONV2D, filters=filters, kernel=kernel, stride=stride, padding=padding)


def maxpool(kernel: int, stride: int) -> LayerSpec:
    return LayerSpec(LayerKind.MAXPOOL2D, kernel=kernel, stride=stride)


def relu() -> LayerSpec:
    return LayerSpec(LayerKind.RELU)


def fully_connected(out_dim: int) -> LayerSpec:
    return LayerSpec(LayerKind.FC, out_dim=out_dim)


def eltwise_sum() -> LayerSpec:
    return LayerSpec(LayerKind.ELTWISE_SUM)


def stripe_split(stripes: int, stripe: int) -> LayerSpec:
    return LayerSpec(LayerKind.STRIPE_SPLIT, stripes=stripes, stripe=stripe)


def concat(axis: int = 0) -> LayerSpec:
    return LayerSpec(LayerKind.CONCAT, axis=axis)


# ---------------------------------------------------------------------------
# Shape inference
# ---------------------------------------------------------------------------


def _window_extent(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


def _require_map(spec: LayerSpec, name: str, shape: Shape) -> None:
    if len(shape) != 3:
        raise ConfigurationError(
            f"{spec.kind.value} expects a (C, H, W) feature map, got shape {shape}", name
        )


def infer_shape(spec: LayerSpec, name: str, in_shapes: list[Shape]) -> Shape:
    """
    Compute the per-sample output shape of a layer.

    Raises:
        ConfigurationError: naming ``name`` when the inputs do not fit
    """
    kind = spec.kind
    if kind in (LayerKind.ELTWISE_SUM, LayerKind.CONCAT):
        if len(in_shapes) < 1:
            raise ConfigurationError("needs at least one input", name)
    elif len(in_shapes) != 1:
        raise ConfigurationError(f"expects exactly one input, got {len(in_shapes)}", name)

    if kind == LayerKind.CONV2D:
        shape = in_shapes[0]
        _require_map(spec, name, shape)
        _, h, w = shape
        hp, wp = h + 2 * spec.padding, w + 2 * spec.padding
        if hp < spec.kernel or wp < spec.kernel:
            raise ConfigurationError(
                f"kernel {spec.kernel}x{spec.kernel} does not fit input {hp}x{wp}", name
            )
        return (spec.filters, _window_extent(hp, spec.kernel, spec.stride),
                _window_extent(wp, spec.kernel, spec.stride))

    if kind == LayerKind.MAXPOOL2D:
        shape = in_shapes[0]
        _require_map(spec, name, shape)
        c, h, w = shape
        if h < spec.kernel or w < spec.kernel:
            raise ConfigurationError(
                f"pool window {spec.kernel}x{spec.kernel} does not fit input {h}x{w}", name
            )
        return (c, _window_extent(h, spec.kernel, spec.stride),
                _window_extent(w, spec.kernel, spec.stride))

    if kind == LayerKind.RELU:
        return in_shapes[0]

    if kind == LayerKind.FC:
        return (spec.out_dim,)

    if kind == LayerKind.ELTWISE_SUM:
        first = in_shapes[0]
        for other in in_shapes[1:]:
            if other != first:
                raise ConfigurationError(f"eltwise inputs differ in shape: {first} vs {other}", name)
        return first

    if kind == LayerKind.STRIPE_SPLIT:
        shape = in_shapes[0]
        _require_map(spec, name, shape)
        c, h, w = shape
        if h % spec.stripes != 0:
            raise ConfigurationError(
                f"input height {h} must be divisible by the stripe count {spec.stripes}", name
            )
        return (c, h // spec.stripes, w)

    # concat
    first = in_shapes[0]
    if not 0 <= spec.axis < len(first):
        raise ConfigurationError(f"concat axis {spec.axis} invalid for shape {first}", name)
    total = 0
    for shape in in_shapes:
        if len(shape) != len(first) or any(
            a != b for i, (a, b) in enumerate(zip(shape, first)) if i != spec.axis
        ):
            raise ConfigurationError(f"concat inputs disagree off-axis: {first} vs {shape}", name)
        total += shape[spec.axis]
    out = list(first)
    out[spec.axis] = total
    return tuple(out)


def param_shapes(spec: LayerSpec, in_shape: Shape) -> Optional[tuple[Shape, Shape]]:
    """Weight and bias shapes for parametric layers, ``None`` otherwise."""
    if spec.kind == LayerKind.CONV2D:
        return (spec.filters, in_shape[0], spec.kernel, spec.kernel), (spec.filters,)
    if spec.kind == LayerKind.FC:
        return (spec.out_dim, int(np.prod(in_shape))), (spec.out_dim,)
    return None


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def _conv_forward(spec: LayerSpec, x: np.ndarray, weight: np.ndarray,
                  bias: np.ndarray) -> tuple[np.ndarray, Cache]:
    p, k, s = spec.padding, spec.kernel, spec.stride
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    windows = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    b, c, ho, wo = windows.shape[:4]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * k * k)
    out = cols @ weight.reshape(spec.filters, -1).T + bias
    out = out.reshape(b, ho, wo, spec.filters).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), {"cols": cols, "padded_shape": xp.shape, "out_hw": (ho, wo)}


def _conv_backward(spec: LayerSpec, cache: Cache, weight: np.ndarray,
                   grad: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p, k, s = spec.padding, spec.kernel, spec.stride
    ho, wo = cache["out_hw"]
    g2 = grad.transpose(0, 2, 3, 1).reshape(-1, spec.filters)
    grad_w = (g2.T @ cache["cols"]).reshape(weight.shape)
    grad_b = g2.sum(axis=0)

    bsz, c, hp, wp = cache["padded_shape"]
    dcols = (g2 @ weight.reshape(spec.filters, -1)).reshape(bsz, ho, wo, c, k, k)
    dxp = np.zeros(cache["padded_shape"])
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, p:hp - p, p:wp - p] if p else dxp
    return dx, grad_w, grad_b


def _pool_forward(spec: LayerSpec, x: np.ndarray) -> tuple[np.ndarray, Cache]:
    k, s = spec.kernel, spec.stride
    windows = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    flat = windows.reshape(windows.shape[:4] + (k * k,))
    # argmax returns the first maximum, i.e. the lowest flat index on ties
    argmax = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]
    return out, {"argmax": argmax, "in_shape": x.shape}


def _pool_backward(spec: LayerSpec, cache: Cache, grad: np.ndarray) -> np.ndarray:
    k, s = spec.kernel, spec.stride
    argmax = cache["argmax"]
    ho, wo = argmax.shape[2:]
    dx = np.zeros(cache["in_shape"])
    for i in range(k):
        for j in range(k):
            routed = np.where(argmax == i * k + j, grad, 0.0)
            dx[:, :, i:i + s * ho:s, j:j + s * wo:s] += routed
    return dx


def forward(spec: LayerSpec, inputs: list[np.ndarray], weight: Optional[np.ndarray],
            bias: Optional[np.ndarray]) -> tuple[np.ndarray, Cache]:
    """
    Run one layer forward over a batch.

    Args:
        spec: Layer description
        inputs: Input arrays, each with a leading batch axis
        weight: Weight view for parametric layers
        bias: Bias view for parametric layers

    Returns:
        Tuple of (output, cache consumed by :func:`backward`)
    """
    kind = spec.kind
    if kind == LayerKind.CONV2D:
        assert weight is not None and bias is not None
        return _conv_forward(spec, inputs[0], weight, bias)
    if kind == LayerKind.MAXPOOL2D:
        return _pool_forward(spec, inputs[0])
    if kind == LayerKind.RELU:
        x = inputs[0]
        mask = x > 0
        return np.where(mask, x, 0.0), {"mask": mask}
    if kind == LayerKind.FC:
        assert weight is not None and bias is not None
        x = inputs[0]
        flat = x.reshape(x.shape[0], -1)
        return flat @ weight.T + bias, {"flat": flat, "in_shape": x.shape}
    if kind == LayerKind.ELTWISE_SUM:
        out = inputs[0].copy()
        for other in inputs[1:]:
            out += other
        return out, {"count": len(inputs)}
    if kind == LayerKind.STRIPE_SPLIT:
        x = inputs[0]
        height = x.shape[2] // spec.stripes
        lo = spec.stripe * height
        return x[:, :, lo:lo + height, :].copy(), {"in_shape": x.shape, "lo": lo, "height": height}
    # concat
    sizes = [a.shape[spec.axis + 1] for a in inputs]
    return np.concatenate(inputs, axis=spec.axis + 1), {"sizes": sizes}


def backward(spec: LayerSpec, cache: Cache, weight: Optional[np.ndarray],
             grad: np.ndarray) -> tuple[list[np.ndarray], Optional[np.ndarray], Optional[np.ndarray]]:
    """
    Run one layer backward.

    Returns:
        Tuple of (input gradients in input order, weight gradient, bias gradient)
    """
    kind = spec.kind
    if kind == LayerKind.CONV2D:
        assert weight is not None
        dx, gw, gb = _conv_backward(spec, cache, weight, grad)
        return [dx], gw, gb
    if kind == LayerKind.MAXPOOL2D:
        return [_pool_backward(spec, cache, grad)], None, None
    if kind == LayerKind.RELU:
        return [np.where(cache["mask"], grad, 0.0)], None, None
    if kind == LayerKind.FC:
        assert weight is not None
        gw = grad.T @ cache["flat"]
        gb = grad.sum(axis=0)
        dx = (grad @ weight).reshape(cache["in_shape"])
        return [dx], gw, gb
    if kind == LayerKind.ELTWISE_SUM:
        return [grad] * cache["count"], None, None
    if kind == LayerKind.STRIPE_SPLIT:
        dx = np.zeros(cache["in_shape"])
        lo, height = cache["lo"], cache["height"]
        dx[:, :, lo:lo + height, :] = grad
        return [dx], None, None
    # concat
    bounds = np.cumsum(cache["sizes"])[:-1]
    return list(np.split(grad, bounds, axis=spec.axis + 1)), None, None
