"""Minimal float64 feedforward networks with analytic gradients and Adam.

Layers: 3x3 strided convolutions (relu), dense layers (relu or linear) and
flatten. The network's "tap" is the output of the last hidden layer, i.e. the
input to the final dense head; forward_with_tap exposes it for feature
extraction. backward() is a plain vector-Jacobian product: given d(loss)/d(output)
it returns d(loss)/d(theta) for every parameter, which makes it directly
checkable against central finite differences.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

WEIGHT_MAGIC = b"STNN"
WEIGHT_VERSION = 1


class ShapeError(ValueError):
    pass


class WeightFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Conv:
    in_ch: int
    out_ch: int
    kernel: int = 3
    stride: int = 2
    pad: int = 1
    activation: str = "relu"


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int
    activation: str = "relu"


@dataclass(frozen=True)
class Flatten:
    pass


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _layer_output_shape(spec, shape):
    if isinstance(spec, Conv):
        c, h, w = shape
        if c != spec.in_ch:
            raise ShapeError(f"conv expects {spec.in_ch} channels, got {c}")
        return (spec.out_ch,
                conv_output_size(h, spec.kernel, spec.stride, spec.pad),
                conv_output_size(w, spec.kernel, spec.stride, spec.pad))
    if isinstance(spec, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(spec, Dense):
        if shape != (spec.in_dim,):
            raise ShapeError(f"dense expects input dim {spec.in_dim}, got {shape}")
        return (spec.out_dim,)
    raise TypeError(f"unknown layer spec {spec!r}")


class Network:
    """Feedforward Q-network: ordered layer specs plus parameter arrays.

    The final layer must be a linear dense head with 9 outputs (one Q-value
    per action). Construct fresh seeded parameters with Network.initialize,
    or rebuild from a weight file with load().
    """

    def __init__(self, specs, input_shape, params):
        self.specs = tuple(specs)
        self.input_shape = tuple(input_shape)
        self.params = params  # list of [W, b] per trainable layer, None otherwise
        self._validate()

    @classmethod
    def initialize(cls, specs, input_shape, seed: int) -> "Network":
        rng = np.random.default_rng(seed)
        params = []
        for spec in specs:
            if isinstance(spec, Conv):
                fan_in = spec.in_ch * spec.kernel * spec.kernel
                fan_out = spec.out_ch * spec.kernel * spec.kernel
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-bound, bound,
                                size=(spec.out_ch, spec.in_ch, spec.kernel, spec.kernel))
                params.append([w, np.zeros(spec.out_ch)])
            elif isinstance(spec, Dense):
                bound = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
                w = rng.uniform(-bound, bound, size=(spec.in_dim, spec.out_dim))
                params.append([w, np.zeros(spec.out_dim)])
            else:
                params.append(None)
        return cls(specs, input_shape, params)

    def _validate(self):
        if not self.specs:
            raise ShapeError("network needs at least one layer")
        last = self.specs[-1]
        if not isinstance(last, Dense) or last.activation != "linear" or last.out_dim != 9:
            raise ShapeError("final layer must be Dense(..., 9, activation='linear')")
        shape = self.input_shape
        for i, spec in enumerate(self.specs):
            try:
                shape = _layer_output_shape(spec, shape)
            except ShapeError as exc:
                raise ShapeError(f"layer {i}: {exc}") from None
        self.output_shape = shape

    @property
    def tap_dim(self) -> int:
        """Width D of the last hidden layer (input to the Q head)."""
        if len(self.specs) < 2:
            raise ShapeError("a single-layer network has no hidden tap")
        return self.specs[-1].in_dim

    def layer_output_shapes(self):
        shapes = []
        shape = self.input_shape
        for spec in self.specs:
            shape = _layer_output_shape(spec, shape)
            shapes.append(shape)
        return shapes

    def parameters(self):
        out = []
        for p in self.params:
            if p is not None:
                out.extend(p)
        return out

    def clone(self) -> "Network":
        params = [None if p is None else [p[0].copy(), p[1].copy()] for p in self.params]
        return Network(self.specs, self.input_shape, params)

    def param_hash(self) -> str:
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(p.tobytes())
        return h.hexdigest()

    # -- forward / backward ---------------------------------------------------

    def forward(self, batch: np.ndarray) -> np.ndarray:
        q, _, _ = self._forward_cached(batch, keep_cache=False)
        return q

    def forward_with_tap(self, batch: np.ndarray):
        q, hidden, _ = self._forward_cached(batch, keep_cache=False)
        return q, hidden

    def backward(self, batch: np.ndarray, loss_grad: np.ndarray):
        """Gradients of sum(loss_grad * forward(batch)) w.r.t. every parameter."""
        q, _, caches = self._forward_cached(batch, keep_cache=True)
        if loss_grad.shape != q.shape:
            raise ShapeError(f"loss_grad shape {loss_grad.shape} != output {q.shape}")
        return self._backward_from_cache(caches, np.asarray(loss_grad, dtype=float))

    def _forward_cached(self, batch, keep_cache):
        a = np.asarray(batch, dtype=float)
        if a.shape[1:] != self.input_shape:
            raise ShapeError(f"input shape {a.shape[1:]} != expected {self.input_shape}")
        caches = [] if keep_cache else None
        hidden = None
        for i, spec in enumerate(self.specs):
            if i == len(self.specs) - 1:
                hidden = a
            if isinstance(spec, Conv):
                w, b = self.params[i]
                cols, out_hw = _im2col(a, spec)
                z = cols @ w.reshape(spec.out_ch, -1).T + b
                act = np.maximum(z, 0.0) if spec.activation == "relu" else z
                if keep_cache:
                    caches.append((cols, z, a.shape))
                n = a.shape[0]
                a = act.reshape(n, out_hw[0], out_hw[1], spec.out_ch).transpose(0, 3, 1, 2)
            elif isinstance(spec, Flatten):
                if keep_cache:
                    caches.append(a.shape)
                a = a.reshape(a.shape[0], -1)
            else:
                w, b = self.params[i]
                z = a @ w + b
                if keep_cache:
                    caches.append((a, z))
                a = np.maximum(z, 0.0) if spec.activation == "relu" else z
        return a, hidden, caches

    def _backward_from_cache(self, caches, g):
        grads = [None] * len(self.specs)
        for i in range(len(self.specs) - 1, -1, -1):
            spec = self.specs[i]
            if isinstance(spec, Dense):
                a_in, z = caches[i]
                if spec.activation == "relu":
                    g = g * (z > 0.0)
                grads[i] = [a_in.T @ g, g.sum(axis=0)]
                g = g @ self.params[i][0].T
            elif isinstance(spec, Flatten):
                g = g.reshape(caches[i])
            else:
                cols, z, in_shape = caches[i]
                n, _, oh, ow = g.shape
                gz = g.transpose(0, 2, 3, 1).reshape(-1, spec.out_ch)
                if spec.activation == "relu":
                    gz = gz * (z > 0.0)
                w = self.params[i][0]
                dw = (gz.T @ cols).reshape(w.shape)
                db = gz.sum(axis=0)
                grads[i] = [dw, db]
                dcols = gz @ w.reshape(spec.out_ch, -1)
                g = _col2im(dcols, in_shape, (oh, ow), spec)
        flat = []
        for gr in grads:
            if gr is not None:
                flat.extend(gr)
        return flat


def _im2col(x, spec: Conv):
    n, c, h, w = x.shape
    k, s, p = spec.kernel, spec.stride, spec.pad
    if p:
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    oh = conv_output_size(h, k, s, p)
    ow = conv_output_size(w, k, s, p)
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    windows = windows[:, :, ::s, ::s]  # (n, c, oh, ow, k, k)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
    return np.ascontiguousarray(cols), (oh, ow)


def _col2im(dcols, in_shape, out_hw, spec: Conv):
    n, c, h, w = in_shape
    k, s, p = spec.kernel, spec.stride, spec.pad
    oh, ow = out_hw
    dx = np.zeros((n, c, h + 2 * p, w + 2 * p))
    d6 = dcols.reshape(n, oh, ow, c, k, k).transpose(0, 3, 1, 2, 4, 5)
    for ki in range(k):
        for kj in range(k):
            dx[:, :, ki:ki + s * (oh - 1) + 1:s, kj:kj + s * (ow - 1) + 1:s] += d6[..., ki, kj]
    if p:
        dx = dx[:, :, p:p + h, p:p + w]
    return dx


# -- builders -----------------------------------------------------------------

def conv_q_net(image_size: int, channels=(8, 16, 32), hidden: int = 128,
               seed: int = 0) -> Network:
    """Q-network on 3xSxS images: three strided convs, flatten, dense, head."""
    specs = []
    in_ch = 3
    size = image_size
    for out_ch in channels:
        specs.append(Conv(in_ch, out_ch))
        in_ch = out_ch
        size = conv_output_size(size, 3, 2, 1)
    flat = in_ch * size * size
    specs.append(Flatten())
    specs.append(Dense(flat, hidden, "relu"))
    specs.append(Dense(hidden, 9, "linear"))
    return Network.initialize(specs, (3, image_size, image_size), seed)


def dense_q_net(in_dim: int, hidden: int = 128, seed: int = 0) -> Network:
    """Q-network on flat observations: one relu layer, linear head."""
    specs = [Dense(in_dim, hidden, "relu"), Dense(hidden, 9, "linear")]
    return Network.initialize(specs, (in_dim,), seed)


# -- Adam ---------------------------------------------------------------------

class AdamState:
    """Per-parameter first/second moments with bias correction."""

    def __init__(self, net: Network, learning_rate: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.parameters()]
        self.v = [np.zeros_like(p) for p in net.parameters()]


def adam_step(net: Network, adam: AdamState, gradients) -> Network:
    params = net.parameters()
    if len(gradients) != len(params):
        raise ShapeError("gradient count does not match parameter count")
    adam.t += 1
    b1, b2 = adam.beta1, adam.beta2
    bc1 = 1.0 - b1 ** adam.t
    bc2 = 1.0 - b2 ** adam.t
    for p, g, m, v in zip(params, gradients, adam.m, adam.v):
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= adam.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + adam.eps)
    return net


# -- serialization ------------------------------------------------------------

def _spec_to_dict(spec):
    if isinstance(spec, Conv):
        return {"kind": "conv", "in_ch": spec.in_ch, "out_ch": spec.out_ch,
                "kernel": spec.kernel, "stride": spec.stride, "pad": spec.pad,
                "activation": spec.activation}
    if isinstance(spec, Dense):
        return {"kind": "dense", "in_dim": spec.in_dim, "out_dim": spec.out_dim,
                "activation": spec.activation}
    return {"kind": "flatten"}


def _spec_from_dict(d):
    kind = d.get("kind")
    if kind == "conv":
        return Conv(d["in_ch"], d["out_ch"], d["kernel"], d["stride"], d["pad"],
                    d["activation"])
    if kind == "dense":
        return Dense(d["in_dim"], d["out_dim"], d["activation"])
    if kind == "flatten":
        return Flatten()
    raise WeightFormatError(f"unknown layer kind {kind!r}")


def save(net: Network, path):
    header = json.dumps({
        "input_shape": list(net.input_shape),
        "layers": [_spec_to_dict(s) for s in net.specs],
    }).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WEIGHT_MAGIC)
        fh.write(struct.pack("<I", WEIGHT_VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for p in net.parameters():
            fh.write(p.astype("<f8").tobytes())


def load(path) -> Network:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != WEIGHT_MAGIC:
        raise WeightFormatError("bad magic bytes, not a network weight file")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != WEIGHT_VERSION:
        raise WeightFormatError(f"unsupported weight format version {version}")
    (hlen,) = struct.unpack("<I", blob[8:12])
    try:
        header = json.loads(blob[12:12 + hlen].decode("utf-8"))
        specs = [_spec_from_dict(d) for d in header["layers"]]
        input_shape = tuple(header["input_shape"])
    except (ValueError, KeyError) as exc:
        raise WeightFormatError(f"corrupt header: {exc}") from None
    try:
        trial = Network.initialize(specs, input_shape, seed=0)
    except ShapeError as exc:
        raise WeightFormatError(f"inconsistent architecture: {exc}") from None
    offset = 12 + hlen
    params = []
    for p in trial.params:
        if p is None:
            params.append(None)
            continue
        pair = []
        for ref in p:
            nbytes = ref.size * 8
            if offset + nbytes > len(blob):
                raise WeightFormatError("truncated weight file")
            arr = np.frombuffer(blob[offset:offset + nbytes], dtype="<f8")
            pair.append(arr.reshape(ref.shape).astype(float))
            offset += nbytes
        params.append(pair)
    if offset != len(blob):
        raise WeightFormatError("trailing bytes after parameters")
    return Network(specs, input_shape, params)
