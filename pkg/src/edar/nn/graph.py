"""Static layer graphs: build, run forward, back-propagate, count FLOPs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functional as F


@dataclass
class Node:
    name: str
    kind: str
    inputs: tuple[str, ...]
    channels: int
    attrs: dict = field(default_factory=dict)
    params: tuple[str, ...] = ()


class GraphError(RuntimeError):
    pass


class LayerGraph:
    """An ordered, acyclic list of layers with a named parameter store.

    Nodes are appended in topological order by the builder methods, each of
    which returns the new node's name for use as a later input.
    """

    def __init__(self, name: str):
        self.name = name
        self.nodes: list[Node] = []
        self._by_name: dict[str, Node] = {}
        self.params: dict[str, np.ndarray] = {}
        self.output: str | None = None
        self.logits: str | None = None
        self.meta: dict[str, float] = {}
        self._cache: dict[str, np.ndarray] | None = None

    # -- construction -------------------------------------------------
    def _add(self, name, kind, inputs, channels, attrs=None, params=None) -> str:
        if name in self._by_name:
            raise GraphError(f"duplicate node name {name!r}")
        for i in inputs:
            if i not in self._by_name:
                raise GraphError(f"node {name!r} consumes unknown input {i!r}")
        node = Node(name, kind, tuple(inputs), channels, attrs or {}, tuple(params or {}))
        for pname, shape in (params or {}).items():
            if pname in self.params:
                raise GraphError(f"duplicate parameter {pname!r}")
            self.params[pname] = np.zeros(shape)
        self.nodes.append(node)
        self._by_name[name] = node
        self.output = name
        return name

    def node(self, name: str) -> Node:
        try:
            return self._by_name[name]
        except KeyError:
            raise GraphError(f"unknown node {name!r}") from None

    def input(self, name: str, channels: int, spatial: bool = True) -> str:
        return self._add(name, "input", (), channels, {"spatial": spatial})

    def conv(self, x: str, out_channels: int, kernel: int, name: str) -> str:
        cin = self.node(x).channels
        return self._add(name, "conv", (x,), out_channels, {"kernel": kernel},
                         {f"{name}.w": (out_channels, cin, kernel, kernel), f"{name}.b": (out_channels,)})

    def dwconv(self, x: str, name: str) -> str:
        c = self.node(x).channels
        return self._add(name, "dwconv", (x,), c, {}, {f"{name}.w": (c, 3, 3), f"{name}.b": (c,)})

    def fc(self, x: str, out_features: int, name: str) -> str:
        fin = self.node(x).channels
        return self._add(name, "fc", (x,), out_features, {},
                         {f"{name}.w": (out_features, fin), f"{name}.b": (out_features,)})

    def maxpool(self, x: str, name: str) -> str:
        return self._add(name, "maxpool", (x,), self.node(x).channels)

    def upsample(self, x: str, name: str) -> str:
        return self._add(name, "upsample", (x,), self.node(x).channels)

    def act(self, x: str, kind: str, name: str) -> str:
        if kind not in ("relu", "leaky_relu", "sigmoid", "softmax"):
            raise GraphError(f"unknown activation {kind!r}")
        return self._add(name, kind, (x,), self.node(x).channels)

    def concat(self, a: str, b: str, name: str) -> str:
        return self._add(name, "concat", (a, b), self.node(a).channels + self.node(b).channels)

    def add(self, a: str, b: str, name: str) -> str:
        if self.node(a).channels != self.node(b).channels:
            raise GraphError(f"add: channel mismatch between {a!r} and {b!r}")
        return self._add(name, "add", (a, b), self.node(a).channels)

    def flatten(self, x: str, features: int, name: str) -> str:
        """``features`` is the flattened size; it binds the graph to one input resolution."""
        return self._add(name, "flatten", (x,), features)

    @property
    def inputs(self) -> list[str]:
        return [n.name for n in self.nodes if n.kind == "input"]

    # -- parameters ---------------------------------------------------
    def initialize(self, seed: int = 0):
        """Kaiming-uniform weights (fan-in), zero biases; deterministic in ``seed``."""
        rng = np.random.default_rng(seed)
        for node in self.nodes:
            for pname in node.params:
                p = self.params[pname]
                if pname.endswith(".b"):
                    p[...] = 0.0
                    continue
                if node.kind == "dwconv":
                    fan_in = 9
                else:
                    fan_in = int(np.prod(p.shape[1:]))
                bound = np.sqrt(6.0 / fan_in)
                p[...] = rng.uniform(-bound, bound, size=p.shape)
        return self

    def zero_(self):
        for p in self.params.values():
            p[...] = 0.0
        return self

    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        if set(state) != set(self.params):
            missing = set(self.params) - set(state)
            extra = set(state) - set(self.params)
            raise GraphError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise GraphError(f"{k}: shape {v.shape} does not match {self.params[k].shape}")
            self.params[k][...] = v

    # -- execution ----------------------------------------------------
    def _feeds(self, feeds) -> dict[str, np.ndarray]:
        names = self.inputs
        if not isinstance(feeds, dict):
            if len(names) != 1:
                raise GraphError(f"graph has inputs {names}; pass a dict")
            feeds = {names[0]: feeds}
        missing = set(names) - set(feeds)
        if missing:
            raise GraphError(f"missing graph inputs {sorted(missing)}")
        return {k: np.asarray(v, dtype=np.float64) for k, v in feeds.items()}

    def forward(self, feeds) -> np.ndarray:
        feeds = self._feeds(feeds)
        P = self.params
        vals: dict[str, np.ndarray] = {}
        for n in self.nodes:
            xs = [vals[i] for i in n.inputs]
            k = n.kind
            if k == "input":
                v = feeds[n.name]
                want = 4 if n.attrs["spatial"] else 2
                if v.ndim != want or v.shape[1] != n.channels:
                    raise GraphError(f"input {n.name!r}: expected {n.channels} channels "
                                     f"in a {want}-D array, got shape {v.shape}")
            elif k == "conv":
                v = F.conv2d(xs[0], P[n.params[0]], P[n.params[1]])
            elif k == "dwconv":
                v = F.dwconv2d(xs[0], P[n.params[0]], P[n.params[1]])
            elif k == "fc":
                v = F.fully_connected(xs[0], P[n.params[0]], P[n.params[1]])
            elif k == "maxpool":
                v = F.maxpool2(xs[0])
            elif k == "upsample":
                v = F.upsample2(xs[0])
            elif k == "relu":
                v = F.relu(xs[0])
            elif k == "leaky_relu":
                v = F.leaky_relu(xs[0])
            elif k == "sigmoid":
                v = F.sigmoid(xs[0])
            elif k == "softmax":
                v = F.softmax_channels(xs[0])
            elif k == "concat":
                v = F.concat_channels(*xs)
            elif k == "add":
                v = F.add_skip(*xs)
            elif k == "flatten":
                v = xs[0].reshape(xs[0].shape[0], -1)
                if v.shape[1] != n.channels:
                    raise GraphError(f"{n.name}: flattened size {v.shape[1]} != {n.channels}; "
                                     "input resolution differs from the one the graph was built for")
            else:  # pragma: no cover
                raise GraphError(f"unknown node kind {k!r}")
            vals[n.name] = v
        self._cache = vals
        return vals[self.output]

    def value(self, name: str) -> np.ndarray:
        if self._cache is None:
            raise GraphError("no forward pass has been run")
        return self._cache[name]

    def backward(self, grad: np.ndarray, start: str | None = None) -> dict[str, np.ndarray]:
        """Reverse-mode gradients of a scalar loss.

        ``grad`` is dLoss/d(node ``start``) (default: the output). Returns
        parameter gradients keyed like ``params``; gradients with respect to
        graph inputs are left in ``self.input_grads``.
        """
        if self._cache is None:
            raise GraphError("backward called before forward")
        vals = self._cache
        start = start or self.output
        if grad.shape != vals[start].shape:
            raise GraphError(f"gradient shape {grad.shape} != {start!r} output {vals[start].shape}")
        P = self.params
        grads: dict[str, np.ndarray] = {}
        pgrads = {k: np.zeros_like(v) for k, v in P.items()}
        grads[start] = np.asarray(grad, dtype=np.float64)
        stop = next(i for i, n in enumerate(self.nodes) if n.name == start)
        self.input_grads = {}

        def acc(name, g):
            if name in grads:
                grads[name] = grads[name] + g
            else:
                grads[name] = g

        for n in reversed(self.nodes[:stop + 1]):
            g = grads.pop(n.name, None)
            if g is None:
                continue
            k = n.kind
            x = [vals[i] for i in n.inputs]
            if k == "input":
                self.input_grads[n.name] = g
            elif k == "conv":
                dx, dw, db = F.conv2d_backward(g, x[0], P[n.params[0]])
                pgrads[n.params[0]] += dw
                pgrads[n.params[1]] += db
                acc(n.inputs[0], dx)
            elif k == "dwconv":
                dx, dw, db = F.dwconv2d_backward(g, x[0], P[n.params[0]])
                pgrads[n.params[0]] += dw
                pgrads[n.params[1]] += db
                acc(n.inputs[0], dx)
            elif k == "fc":
                dx, dw, db = F.fully_connected_backward(g, x[0], P[n.params[0]])
                pgrads[n.params[0]] += dw
                pgrads[n.params[1]] += db
                acc(n.inputs[0], dx)
            elif k == "maxpool":
                acc(n.inputs[0], F.maxpool2_backward(g, x[0]))
            elif k == "upsample":
                acc(n.inputs[0], F.upsample2_backward(g))
            elif k == "relu":
                acc(n.inputs[0], F.relu_backward(g, x[0]))
            elif k == "leaky_relu":
                acc(n.inputs[0], F.leaky_relu_backward(g, x[0]))
            elif k == "sigmoid":
                acc(n.inputs[0], F.sigmoid_backward(g, vals[n.name]))
            elif k == "softmax":
                acc(n.inputs[0], F.softmax_channels_backward(g, vals[n.name]))
            elif k == "concat":
                ca = x[0].shape[1]
                acc(n.inputs[0], g[:, :ca])
                acc(n.inputs[1], g[:, ca:])
            elif k == "add":
                acc(n.inputs[0], g)
                acc(n.inputs[1], g)
            elif k == "flatten":
                acc(n.inputs[0], g.reshape(x[0].shape))
        return pgrads

    # -- accounting ---------------------------------------------------
    def shapes(self, input_shapes: dict[str, tuple[int, ...]]) -> dict[str, tuple[int, ...]]:
        """Per-node output shapes (without batch) from per-input shapes."""
        out: dict[str, tuple[int, ...]] = {}
        for n in self.nodes:
            s = [out[i] for i in n.inputs]
            k = n.kind
            if k == "input":
                out[n.name] = tuple(input_shapes[n.name])
            elif k in ("conv", "dwconv"):
                out[n.name] = (n.channels, *s[0][1:])
            elif k == "maxpool":
                out[n.name] = (n.channels, -(-s[0][1] // 2), -(-s[0][2] // 2))
            elif k == "upsample":
                out[n.name] = (n.channels, 2 * s[0][1], 2 * s[0][2])
            elif k in ("fc", "flatten"):
                out[n.name] = (n.channels,)
            elif k == "concat":
                out[n.name] = (n.channels, *s[0][1:])
            else:
                out[n.name] = s[0]
        return out

    def layer_flops(self, input_shapes) -> list[tuple[str, str, int]]:
        """FLOPs per multiply-accumulate layer (one MAC = 2 FLOPs; bias, activations,
        pooling, resampling and additions are not counted)."""
        sh = self.shapes(input_shapes)
        rows = []
        for n in self.nodes:
            k = n.kind
            if k == "conv":
                _, h, w = sh[n.name]
                cin = self.node(n.inputs[0]).channels
                f = 2 * n.attrs["kernel"] ** 2 * cin * n.channels * h * w
            elif k == "dwconv":
                _, h, w = sh[n.name]
                f = 2 * 9 * n.channels * h * w
            elif k == "fc":
                f = 2 * self.node(n.inputs[0]).channels * n.channels
            else:
                continue
            rows.append((n.name, k, int(f)))
        return rows


def flops(graph: LayerGraph, input_shapes) -> int:
    return sum(f for _, _, f in graph.layer_flops(input_shapes))


def param_count(graph: LayerGraph) -> int:
    return graph.param_count()
