"""Layer graphs, the part-based network builder, and forward/backward passes."""

import itertools
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Union

import numpy as np

from ..errors import ConfigurationError, UsageError
from . import layers
from .layers import LayerKind, LayerSpec, Shape

INPUT = "input"

_tokens = itertools.count(1)


@dataclass(frozen=True)
class ScaleConfig:
    """
    Sizes of the part-based network.

    Defaults are the desk-scale network; :meth:`full` returns the
    full-size configuration.
    """

    input_channels: int = 1
    input_height: int = 24
    input_width: int = 8
    global_filters: int = 8
    global_kernel: int = 3
    global_padding: int = 0
    global_pool: int = 3
    global_pool_stride: int = 1
    stripes: int = 4
    local_filters: int = 4
    local_kernel: int = 3
    local_pool: int = 3
    local_pool_stride: int = 1
    d_fc: int = 8

    builder = "part"

    @classmethod
    def full(cls) -> "ScaleConfig":
        """Full-size network: 230x80x3 input, 800-dim embedding."""
        return cls(
            input_channels=3,
            input_height=230,
            input_width=80,
            global_filters=64,
            global_kernel=7,
            global_padding=3,
            global_pool=3,
            global_pool_stride=3,
            stripes=4,
            local_filters=32,
            local_kernel=3,
            local_pool=3,
            local_pool_stride=1,
            d_fc=100,
        )

    @property
    def input_shape(self) -> Shape:
        return (self.input_channels, self.input_height, self.input_width)

    @property
    def output_dim(self) -> int:
        return 2 * self.stripes * self.d_fc

    def to_dict(self) -> dict:
        return {"builder": self.builder, **asdict(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ScaleConfig":
        fields = {k: v for k, v in data.items() if k != "builder"}
        return cls(**fields)


@dataclass(frozen=True)
class SequentialConfig:
    """A plain chain of layers, e.g. a single linear map or a small test net."""

    input_shape: Shape
    layers: tuple[LayerSpec, ...]

    builder = "sequential"

    def to_dict(self) -> dict:
        return {
            "builder": self.builder,
            "input_shape": list(self.input_shape),
            "layers": [spec.to_dict() for spec in self.layers],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SequentialConfig":
        return cls(
            input_shape=tuple(data["input_shape"]),
            layers=tuple(LayerSpec.from_dict(d) for d in data["layers"]),
        )


Blueprint = Union[ScaleConfig, SequentialConfig]


def blueprint_from_dict(data: dict) -> Blueprint:
    """Rebuild a blueprint from its dictionary form."""
    builder = data.get("builder")
    if builder == ScaleConfig.builder:
        return ScaleConfig.from_dict(data)
    if builder == SequentialConfig.builder:
        return SequentialConfig.from_dict(data)
    raise ConfigurationError(f"unknown network builder: {builder!r}")


@dataclass(frozen=True)
class ParamSlice:
    """Location of one weight or bias tensor inside the flat parameter vector."""

    offset: int
    shape: Shape

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def stop(self) -> int:
        return self.offset + self.size


@dataclass(frozen=True)
class Node:
    """One layer in the graph."""

    name: str
    spec: LayerSpec
    inputs: tuple[str, ...]
    out_shape: Shape
    group: str  # sub-network this node belongs to, e.g. "global", "local2", "fusion"
    weight: Optional[ParamSlice] = None
    bias: Optional[ParamSlice] = None


@dataclass(frozen=True)
class TapeEntry:
    """Forward cache of one executed layer."""

    node: str
    cache: dict


@dataclass
class Tape:
    """Everything a backward pass needs from the forward pass that made it."""

    network_token: int
    batch_size: int
    single: bool
    entries: list[TapeEntry]
    consumed: bool = False

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True, eq=False)
class PartNetwork:
    """
    A layer DAG plus its flat parameter vector.

    Nodes are stored in topological order and parameters are laid out in
    the same order, weight before bias. Instances are immutable; parameter
    updates produce a new network via :meth:`with_params`.
    """

    nodes: tuple[Node, ...]
    params: np.ndarray
    blueprint: Blueprint
    input_shape: Shape
    output: str
    token: int = field(init=False, compare=False, default=0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "token", next(_tokens))

    @property
    def param_count(self) -> int:
        return int(self.params.size)

    @property
    def output_dim(self) -> int:
        return int(np.prod(self.node(self.output).out_shape))

    def node(self, name: str) -> Node:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def weight(self, name: str) -> np.ndarray:
        """Read-only view of a node's weights."""
        sl = self.node(name).weight
        if sl is None:
            raise KeyError(f"{name} has no weights")
        return self.params[sl.offset:sl.stop].reshape(sl.shape)

    def bias(self, name: str) -> np.ndarray:
        sl = self.node(name).bias
        if sl is None:
            raise KeyError(f"{name} has no bias")
        return self.params[sl.offset:sl.stop].reshape(sl.shape)

    def group_slices(self, group: str) -> list[ParamSlice]:
        """Every parameter slice owned by nodes of one sub-network."""
        out = []
        for n in self.nodes:
            if n.group == group:
                out.extend(s for s in (n.weight, n.bias) if s is not None)
        return out

    def with_params(self, params: np.ndarray) -> "PartNetwork":
        params = np.asarray(params, dtype=np.float64)
        if params.shape != self.params.shape:
            raise UsageError(
                f"parameter vector has length {params.size}, network needs {self.params.size}"
            )
        params = params.copy()
        params.flags.writeable = False
        return replace(self, params=params)

    def embed(self, samples: np.ndarray) -> np.ndarray:
        """Embed a batch of samples, shape (B, *input_shape) -> (B, D)."""
        embedding, _ = forward(self, samples)
        return embedding.reshape(-1, self.output_dim)


class _GraphBuilder:
    """Accumulates nodes, infers shapes, and assigns parameter slices."""

    def __init__(self, input_shape: Shape) -> None:
        if not input_shape or any(
            isinstance(d, bool) or not isinstance(d, int) or d <= 0 for d in input_shape
        ):
            raise ConfigurationError(
                f"input extents must be positive integers, got {tuple(input_shape)}", INPUT
            )
        self.shapes: dict[str, Shape] = {INPUT: tuple(input_shape)}
        self.nodes: list[Node] = []
        self.offset = 0

    def add(self, name: str, spec: LayerSpec, inputs: list[str], group: str) -> str:
        if name in self.shapes:
            raise ConfigurationError("duplicate node name", name)
        spec.validate(name)
        for src in inputs:
            if src not in self.shapes:
                raise ConfigurationError(f"unknown input node '{src}'", name)
        in_shapes = [self.shapes[src] for src in inputs]
        out_shape = layers.infer_shape(spec, name, in_shapes)

        weight = bias = None
        shapes = layers.param_shapes(spec, in_shapes[0])
        if shapes is not None:
            weight = ParamSlice(self.offset, shapes[0])
            bias = ParamSlice(weight.stop, shapes[1])
            self.offset = bias.stop

        self.nodes.append(Node(name, spec, tuple(inputs), out_shape, group, weight, bias))
        self.shapes[name] = out_shape
        return name

    def finish(self, blueprint: Blueprint, output: str) -> PartNetwork:
        params = np.zeros(self.offset)
        params.flags.writeable = False
        return PartNetwork(
            nodes=tuple(self.nodes),
            params=params,
            blueprint=blueprint,
            input_shape=self.shapes[INPUT],
            output=output,
        )


def build_part_network(scale: Optional[ScaleConfig] = None) -> PartNetwork:
    """
    Build the three-sub-network part-based architecture.

    Global: conv -> max-pool -> ReLU. Local, one unshared branch per stripe:
    conv1 -> conv2 (both "same"-padded), eltwise sum of the two, max-pool,
    ReLU. Fusion, per stripe: fc1 -> ReLU -> fc2; the fc1 outputs are
    concatenated and fused by one more FC layer, whose output is concatenated
    with the fc2 outputs to form the embedding of size 2 * stripes * d_fc.

    Parameters start at zero; call :func:`init_params` before training.

    Raises:
        ConfigurationError: when a layer does not fit its input, including a
            pooled height that is not divisible by the stripe count
    """
    scale = scale or ScaleConfig()
    g = _GraphBuilder(scale.input_shape)

    x = g.add("global_conv",
              layers.conv(scale.global_filters, scale.global_kernel, padding=scale.global_padding),
              [INPUT], "global")
    x = g.add("global_pool", layers.maxpool(scale.global_pool, scale.global_pool_stride), [x], "global")
    x = g.add("global_relu", layers.relu(), [x], "global")

    pooled_height = g.shapes[x][1]
    if pooled_height % scale.stripes != 0:
        raise ConfigurationError(
            f"height after global pooling is {pooled_height}, which must be divisible by "
            f"the stripe count {scale.stripes}",
            "stripe_split",
        )

    same = scale.local_kernel // 2
    fc1_outputs, fc2_outputs = [], []
    for i in range(scale.stripes):
        local, fusion = f"local{i}", f"fusion{i}"
        s = g.add(f"stripe{i}", layers.stripe_split(scale.stripes, i), [x], local)
        c1 = g.add(f"{local}_conv1", layers.conv(scale.local_filters, scale.local_kernel, padding=same),
                   [s], local)
        c2 = g.add(f"{local}_conv2", layers.conv(scale.local_filters, scale.local_kernel, padding=same),
                   [c1], local)
        h = g.add(f"{local}_sum", layers.eltwise_sum(), [c1, c2], local)
        h = g.add(f"{local}_pool", layers.maxpool(scale.local_pool, scale.local_pool_stride), [h], local)
        h = g.add(f"{local}_relu", layers.relu(), [h], local)

        f1 = g.add(f"{fusion}_fc1", layers.fully_connected(scale.d_fc), [h], fusion)
        r = g.add(f"{fusion}_relu", layers.relu(), [f1], fusion)
        f2 = g.add(f"{fusion}_fc2", layers.fully_connected(scale.d_fc), [r], fusion)
        fc1_outputs.append(f1)
        fc2_outputs.append(f2)

    joined = g.add("fusion_concat", layers.concat(0), fc1_outputs, "fusion")
    fused = g.add("fusion_fc", layers.fully_connected(scale.stripes * scale.d_fc), [joined], "fusion")
    out = g.add("embedding", layers.concat(0), [fused, *fc2_outputs], "fusion")
    return g.finish(scale, out)


def build_sequential_network(config: SequentialConfig) -> PartNetwork:
    """Build a plain chain of layers (linear maps, small verification nets)."""
    if not config.layers:
        raise ConfigurationError("a sequential network needs at least one layer")
    g = _GraphBuilder(config.input_shape)
    x = INPUT
    for k, spec in enumerate(config.layers):
        x = g.add(f"layer{k}_{spec.kind.value}", spec, [x], "sequential")
    return g.finish(config, x)


def build_linear_network(input_shape: Union[int, Shape], out_dim: int) -> PartNetwork:
    """A single fully-connected layer y = Wx + b over the flattened input."""
    shape = (input_shape,) if isinstance(input_shape, int) else tuple(input_shape)
    return build_sequential_network(SequentialConfig(shape, (layers.fully_connected(out_dim),)))


def build_network(blueprint: Blueprint) -> PartNetwork:
    """Build whichever network a blueprint describes."""
    if isinstance(blueprint, ScaleConfig):
        return build_part_network(blueprint)
    return build_sequential_network(blueprint)


def init_params(
    net: PartNetwork,
    seed: int,
    conv_std: float = 0.01,
    fc_std: float = 0.001,
) -> PartNetwork:
    """
    Draw fresh parameters: zero-mean Gaussian weights, zero biases.

    Convolution weights use ``conv_std`` and fully-connected weights use
    ``fc_std``. Slices are drawn in graph order from one generator, so the
    result is deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    params = np.zeros(net.param_count)
    for node in net.nodes:
        if node.weight is None:
            continue
        std = conv_std if node.spec.kind == LayerKind.CONV2D else fc_std
        params[node.weight.offset:node.weight.stop] = rng.normal(0.0, std, node.weight.size)
    return net.with_params(params)


def _promote(net: PartNetwork, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape == net.input_shape:
        return x[None], True
    if x.shape[1:] != net.input_shape:
        raise ConfigurationError(
            f"input shape {x.shape} does not match network input {net.input_shape}", INPUT
        )
    return x, False


def forward(net: PartNetwork, x: np.ndarray) -> tuple[np.ndarray, Tape]:
    """
    Run the network forward.

    Args:
        net: Network to evaluate
        x: One sample shaped like ``net.input_shape`` or a batch with a
           leading batch axis

    Returns:
        Tuple of (embedding, tape). The embedding is ``(D,)`` for a single
        sample and ``(B, D)`` for a batch.

    Raises:
        ConfigurationError: naming the input when its shape is wrong
    """
    batch, single = _promote(net, x)
    values: dict[str, np.ndarray] = {INPUT: batch}
    entries = []
    for node in net.nodes:
        weight = bias = None
        if node.weight is not None and node.bias is not None:
            weight = net.params[node.weight.offset:node.weight.stop].reshape(node.weight.shape)
            bias = net.params[node.bias.offset:node.bias.stop]
        out, cache = layers.forward(node.spec, [values[src] for src in node.inputs], weight, bias)
        values[node.name] = out
        entries.append(TapeEntry(node.name, cache))

    embedding = values[net.output].reshape(batch.shape[0], -1)
    tape = Tape(net.token, batch.shape[0], single, entries)
    return (embedding[0] if single else embedding), tape


def backward(net: PartNetwork, tape: Tape, grad_embedding: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Back-propagate an embedding gradient through a recorded forward pass.

    Returns:
        Tuple of (flat parameter gradient, input gradient)

    Raises:
        UsageError: if the tape belongs to another network, was already
            consumed, or the gradient shape differs from the embedding
    """
    if tape.network_token != net.token:
        raise UsageError("tape was recorded by a different network (or different parameters)")
    if tape.consumed:
        raise UsageError("tape has already been consumed by a backward pass")
    if len(tape.entries) != len(net.nodes):
        raise UsageError("tape does not cover every layer of the network")

    grad_embedding = np.asarray(grad_embedding, dtype=np.float64)
    expected = (net.output_dim,) if tape.single else (tape.batch_size, net.output_dim)
    if grad_embedding.shape != expected:
        raise UsageError(f"gradient shape {grad_embedding.shape} != embedding shape {expected}")
    tape.consumed = True

    out_shape = net.node(net.output).out_shape
    grads: dict[str, np.ndarray] = {
        net.output: grad_embedding.reshape((tape.batch_size,) + out_shape)
    }
    grad_params = np.zeros(net.param_count)

    for node, entry in zip(reversed(net.nodes), reversed(tape.entries)):
        if entry.node != node.name:
            raise UsageError(f"tape entry '{entry.node}' does not match layer '{node.name}'")
        grad = grads.pop(node.name, None)
        if grad is None:
            continue
        weight = None
        if node.weight is not None:
            weight = net.params[node.weight.offset:node.weight.stop].reshape(node.weight.shape)
        input_grads, gw, gb = layers.backward(node.spec, entry.cache, weight, grad)
        if node.weight is not None and node.bias is not None:
            grad_params[node.weight.offset:node.weight.stop] += gw.ravel()
            grad_params[node.bias.offset:node.bias.stop] += gb
        for src, g in zip(node.inputs, input_grads):
            if src in grads:
                grads[src] = grads[src] + g
            else:
                grads[src] = g

    grad_input = grads.get(INPUT, np.zeros((tape.batch_size,) + net.input_shape))
    return grad_params, (grad_input[0] if tape.single else grad_input)
