"""Minimal dense tensor core for small convolutional classifiers.

Tensors are plain numpy arrays in NHWC layout (float32 for training,
float64 for gradient checks and analysis probes). The layer set covers
exactly what the experiments need: square same/valid convolutions with
stride 1, 2x2/stride-2 max pooling, dense layers, inverted dropout,
elementwise activations, and a softmax head. Forward passes record the
intermediates reverse mode needs; the optimizer is SGD with momentum.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import activations
from .activations import ActivationSpec

MAGIC = b"PLNET1"

# opt-in finiteness assertions after every layer (slow; debugging aid)
DEBUG_FINITE = os.environ.get("POLUNET_DEBUG_FINITE", "") not in ("", "0")


def _debug_check_finite(what: str, arr: np.ndarray) -> None:
    if DEBUG_FINITE and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {what}")


class ShapeMismatch(ValueError):
    """A tensor does not fit where the network expects it."""


class InvalidStateError(RuntimeError):
    """A cache or optimizer state is used outside its contract."""


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int = 0
    units: int = 0
    kernel: int = 0
    padding: str = "same"
    drop_rate: float = 0.0
    activation: Optional[ActivationSpec] = None


def conv(filters: int, kernel: int, padding: str = "same") -> LayerSpec:
    if filters < 1 or kernel < 1:
        raise ValueError("conv needs positive filter count and kernel size")
    if padding not in ("same", "valid"):
        raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")
    return LayerSpec("conv", filters=filters, kernel=kernel, padding=padding)


def dense(units: int) -> LayerSpec:
    if units < 1:
        raise ValueError("dense needs a positive unit count")
    return LayerSpec("dense", units=units)


def maxpool() -> LayerSpec:
    return LayerSpec("maxpool")


def dropout(rate: float) -> LayerSpec:
    if not 0 <= rate < 1:
        raise ValueError(f"drop rate must lie in [0, 1), got {rate}")
    return LayerSpec("dropout", drop_rate=rate)


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


def activation(spec: ActivationSpec) -> LayerSpec:
    return LayerSpec("activation", activation=spec)


def softmax() -> LayerSpec:
    return LayerSpec("softmax")


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: Tuple[int, int, int]
    layers: Tuple[LayerSpec, ...]
    weight_decay: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.input_shape) != 3 or any(v < 1 for v in self.input_shape):
            raise ShapeMismatch(f"input shape must be (h, w, c), got {self.input_shape}")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Parameter names and shapes in layer order; validates the shape chain."""
        shapes: Dict[str, Tuple[int, ...]] = {}
        cur: Tuple[int, ...] = self.input_shape
        for i, layer in enumerate(self.layers):
            if layer.kind == "conv":
                if len(cur) != 3:
                    raise ShapeMismatch(f"layer {i}: conv needs a spatial input, got {cur}")
                h, w, cin = cur
                k = layer.kernel
                if layer.padding == "valid" and (h < k or w < k):
                    raise ShapeMismatch(f"layer {i}: kernel {k} too large for input {cur}")
                shapes[f"{i:02d}.conv.w"] = (k, k, cin, layer.filters)
                shapes[f"{i:02d}.conv.b"] = (layer.filters,)
                if layer.padding == "same":
                    cur = (h, w, layer.filters)
                else:
                    cur = (h - k + 1, w - k + 1, layer.filters)
            elif layer.kind == "maxpool":
                if len(cur) != 3:
                    raise ShapeMismatch(f"layer {i}: maxpool needs a spatial input, got {cur}")
                h, w, c = cur
                if h < 2 or w < 2:
                    raise ShapeMismatch(f"layer {i}: input {cur} too small to pool")
                cur = (h // 2, w // 2, c)
            elif layer.kind == "flatten":
                cur = (int(np.prod(cur)),)
            elif layer.kind == "dense":
                if len(cur) != 1:
                    raise ShapeMismatch(
                        f"layer {i}: dense needs a flat input (insert flatten), got {cur}"
                    )
                shapes[f"{i:02d}.dense.w"] = (cur[0], layer.units)
                shapes[f"{i:02d}.dense.b"] = (layer.units,)
                cur = (layer.units,)
            elif layer.kind == "softmax":
                if len(cur) != 1:
                    raise ShapeMismatch(f"layer {i}: softmax needs a flat input, got {cur}")
                if i != len(self.layers) - 1:
                    raise ShapeMismatch(f"layer {i}: softmax must be the final layer")
            elif layer.kind in ("dropout", "activation"):
                pass
            else:
                raise ValueError(f"layer {i}: unknown kind {layer.kind!r}")
        return shapes

    def output_shape(self) -> Tuple[int, ...]:
        cur: Tuple[int, ...] = self.input_shape
        for layer in self.layers:
            if layer.kind == "conv":
                h, w, _ = cur
                if layer.padding == "same":
                    cur = (h, w, layer.filters)
                else:
                    k = layer.kernel
                    cur = (h - k + 1, w - k + 1, layer.filters)
            elif layer.kind == "maxpool":
                cur = (cur[0] // 2, cur[1] // 2, cur[2])
            elif layer.kind == "flatten":
                cur = (int(np.prod(cur)),)
            elif layer.kind == "dense":
                cur = (layer.units,)
        return cur

    def class_count(self) -> int:
        out = self.output_shape()
        if len(out) != 1:
            raise ShapeMismatch(f"network output {out} is not a class vector")
        return out[0]

    def activation_layer_indices(self) -> List[int]:
        return [i for i, l in enumerate(self.layers) if l.kind == "activation"]


# ---------------------------------------------------------------------------
# Spec (de)serialization for sidecar files
# ---------------------------------------------------------------------------

def spec_to_dict(spec: NetworkSpec) -> dict:
    layers = []
    for l in spec.layers:
        entry: dict = {"kind": l.kind}
        if l.kind == "conv":
            entry.update(filters=l.filters, kernel=l.kernel, padding=l.padding)
        elif l.kind == "dense":
            entry["units"] = l.units
        elif l.kind == "dropout":
            entry["drop_rate"] = l.drop_rate
        elif l.kind == "activation":
            a = l.activation
            entry["activation"] = {"kind": a.kind, "n": a.n, "alpha": a.alpha, "leak": a.leak}
        layers.append(entry)
    return {
        "input_shape": list(spec.input_shape),
        "weight_decay": spec.weight_decay,
        "layers": layers,
    }


def spec_from_dict(data: dict) -> NetworkSpec:
    layers = []
    for entry in data["layers"]:
        kind = entry["kind"]
        if kind == "conv":
            layers.append(conv(int(entry["filters"]), int(entry["kernel"]),
                               entry.get("padding", "same")))
        elif kind == "dense":
            layers.append(dense(int(entry["units"])))
        elif kind == "dropout":
            layers.append(dropout(float(entry["drop_rate"])))
        elif kind == "activation":
            a = entry["activation"]
            layers.append(activation(ActivationSpec(
                a["kind"], n=float(a.get("n", 2.0)),
                alpha=float(a.get("alpha", 1.0)), leak=float(a.get("leak", 0.01)))))
        elif kind in ("maxpool", "flatten", "softmax"):
            layers.append(LayerSpec(kind))
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
    return NetworkSpec(
        input_shape=tuple(data["input_shape"]),
        layers=tuple(layers),
        weight_decay=float(data.get("weight_decay", 0.0)),
    )


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def init_parameters(spec: NetworkSpec, seed: int, dtype=np.float32) -> Dict[str, np.ndarray]:
    """He-style fan-in-scaled Gaussian weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    params: Dict[str, np.ndarray] = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype)
        else:
            fan_in = int(np.prod(shape[:-1]))
            std = np.sqrt(2.0 / fan_in)
            params[name] = (rng.standard_normal(shape) * std).astype(dtype)
    return params


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def _patches(xp: np.ndarray, k: int) -> np.ndarray:
    """Read-only [B, OH, OW, k, k, C] window view of a padded NHWC tensor."""
    b, h, w, c = xp.shape
    oh, ow = h - k + 1, w - k + 1
    sb, sh, sw, sc = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, (b, oh, ow, k, k, c), (sb, sh, sw, sh, sw, sc), writeable=False
    )
    return view


def _conv_pad(x: np.ndarray, k: int, padding: str) -> np.ndarray:
    if padding == "valid":
        return x
    before = (k - 1) // 2
    after = k - 1 - before
    return np.pad(x, ((0, 0), (before, after), (before, after), (0, 0)))


@dataclass
class Cache:
    spec: NetworkSpec
    params: Dict[str, np.ndarray]
    mode: str
    entries: List[tuple] = field(default_factory=list)


def _seed_path(seed) -> List[int]:
    if seed is None:
        return [0]
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(v) for v in seed]


def forward(spec: NetworkSpec, params: Dict[str, np.ndarray], batch: np.ndarray,
            mode: str = "infer", seed=0,
            record_activation_means: Optional[list] = None):
    """Run the network over a batch.

    mode "train" keeps dropout active and returns pre-softmax logits;
    "infer" disables dropout and applies the softmax head; "logits"
    disables dropout and skips the softmax (the analysis probe). Returns
    (output, cache); only a train-mode cache supports backward().
    """
    if mode not in ("train", "infer", "logits"):
        raise ValueError(f"unknown mode {mode!r}")
    batch = np.asarray(batch)
    if batch.ndim != 4 or batch.shape[1:] != spec.input_shape:
        raise ShapeMismatch(
            f"batch shape {batch.shape} does not match input {spec.input_shape}"
        )
    path = _seed_path(seed)
    cache = Cache(spec=spec, params=params, mode=mode)
    x = batch
    for i, layer in enumerate(spec.layers):
        if layer.kind == "conv":
            w = params[f"{i:02d}.conv.w"]
            b = params[f"{i:02d}.conv.b"]
            if x.ndim != 4 or x.shape[3] != w.shape[2]:
                raise ShapeMismatch(f"layer {i}: conv input {x.shape} vs kernel {w.shape}")
            k = layer.kernel
            xp = _conv_pad(x, k, layer.padding)
            bsz, oh, ow = xp.shape[0], xp.shape[1] - k + 1, xp.shape[2] - k + 1
            cols = _patches(xp, k).reshape(bsz * oh * ow, k * k * w.shape[2])
            out = cols @ w.reshape(-1, w.shape[3]) + b
            x = out.reshape(bsz, oh, ow, w.shape[3])
            # cols is kept for backward (for k = 1 it is a view of the input)
            cache.entries.append(("conv", i, cols, xp.shape))
        elif layer.kind == "dense":
            w = params[f"{i:02d}.dense.w"]
            b = params[f"{i:02d}.dense.b"]
            if x.ndim != 2 or x.shape[1] != w.shape[0]:
                raise ShapeMismatch(f"layer {i}: dense input {x.shape} vs weight {w.shape}")
            cache.entries.append(("dense", i, x))
            x = x @ w + b
        elif layer.kind == "maxpool":
            bsz, h, w_, c = x.shape
            h2, w2 = h // 2, w_ // 2
            win = (x[:, : 2 * h2, : 2 * w2, :]
                   .reshape(bsz, h2, 2, w2, 2, c)
                   .transpose(0, 1, 3, 5, 2, 4)
                   .reshape(bsz, h2, w2, c, 4))
            idx = win.argmax(axis=4)
            x = np.take_along_axis(win, idx[..., None], axis=4)[..., 0]
            cache.entries.append(("maxpool", i, idx, (bsz, h, w_, c)))
        elif layer.kind == "flatten":
            cache.entries.append(("flatten", i, x.shape))
            x = x.reshape(x.shape[0], -1)
        elif layer.kind == "dropout":
            if mode == "train" and layer.drop_rate > 0:
                rng = np.random.default_rng(path + [i])
                keep = 1.0 - layer.drop_rate
                mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
                x = x * mask
                cache.entries.append(("dropout", i, mask))
            else:
                cache.entries.append(("dropout", i, None))
        elif layer.kind == "activation":
            cache.entries.append(("activation", i, x))
            x = activations.forward_array(layer.activation, x)
            if record_activation_means is not None:
                record_activation_means.append(float(x.mean()))
        elif layer.kind == "softmax":
            if mode == "infer":
                z = x - x.max(axis=1, keepdims=True)
                e = np.exp(z)
                x = e / e.sum(axis=1, keepdims=True)
            cache.entries.append(("softmax", i))
        else:
            raise ValueError(f"layer {i}: unknown kind {layer.kind!r}")
        _debug_check_finite(f"layer {i} ({layer.kind}) output", x)
    return x, cache


def softmax_cross_entropy(logits: np.ndarray, labels) -> Tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    Uses max-subtraction so extreme logits cannot overflow; the gradient is
    (softmax - onehot) / batch.
    """
    logits = np.asarray(logits)
    if logits.ndim != 2:
        raise ShapeMismatch(f"logits must be [batch, classes], got {logits.shape}")
    labels = np.asarray(labels, np.int64)
    bsz, classes = logits.shape
    if labels.shape != (bsz,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {bsz}")
    if labels.min() < 0 or labels.max() >= classes:
        raise ValueError(f"labels must lie in [0, {classes})")
    z = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(bsz), labels].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(bsz), labels] -= 1.0
    dlogits /= bsz
    return loss, dlogits.astype(logits.dtype)


def backward(cache: Cache, dlogits: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradients for every parameter tensor, including the L2 decay term on weights."""
    if cache.mode != "train":
        raise InvalidStateError("backward requires a cache from a train-mode forward pass")
    spec, params = cache.spec, cache.params
    grads: Dict[str, np.ndarray] = {}
    dy = np.asarray(dlogits)
    for entry in reversed(cache.entries):
        kind = entry[0]
        if kind == "softmax":
            continue
        if kind == "activation":
            _, i, x = entry
            layer = spec.layers[i]
            dy = dy * activations.derivative_array(layer.activation, x)
        elif kind == "dropout":
            _, _, mask = entry
            if mask is not None:
                dy = dy * mask
        elif kind == "flatten":
            _, _, shape = entry
            dy = dy.reshape(shape)
        elif kind == "dense":
            _, i, x = entry
            w = params[f"{i:02d}.dense.w"]
            if dy.shape != (x.shape[0], w.shape[1]):
                raise InvalidStateError(f"layer {i}: gradient {dy.shape} does not match cache")
            grads[f"{i:02d}.dense.w"] = x.T @ dy
            grads[f"{i:02d}.dense.b"] = dy.sum(axis=0)
            dy = dy @ w.T
        elif kind == "maxpool":
            _, _, idx, xshape = entry
            bsz, h, w_, c = xshape
            h2, w2 = h // 2, w_ // 2
            dwin = np.zeros((bsz, h2, w2, c, 4), dy.dtype)
            np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=4)
            dx = np.zeros(xshape, dy.dtype)
            dx[:, : 2 * h2, : 2 * w2, :] = (
                dwin.reshape(bsz, h2, w2, c, 2, 2)
                .transpose(0, 1, 4, 2, 5, 3)
                .reshape(bsz, 2 * h2, 2 * w2, c)
            )
            dy = dx
        elif kind == "conv":
            _, i, cols, xp_shape = entry
            layer = spec.layers[i]
            w = params[f"{i:02d}.conv.w"]
            k = layer.kernel
            cin, f = w.shape[2], w.shape[3]
            bsz = xp_shape[0]
            oh, ow = xp_shape[1] - k + 1, xp_shape[2] - k + 1
            if dy.shape != (bsz, oh, ow, f):
                raise InvalidStateError(f"layer {i}: gradient {dy.shape} does not match cache")
            dy_mat = dy.reshape(bsz * oh * ow, f)
            grads[f"{i:02d}.conv.w"] = (cols.T @ dy_mat).reshape(k, k, cin, f)
            grads[f"{i:02d}.conv.b"] = dy_mat.sum(axis=0)
            dcols = (dy_mat @ w.reshape(-1, f).T).reshape(bsz, oh, ow, k, k, cin)
            dxp = np.zeros(xp_shape, dy.dtype)
            for r in range(k):
                for s in range(k):
                    dxp[:, r:r + oh, s:s + ow, :] += dcols[:, :, :, r, s, :]
            if layer.padding == "same":
                before = (k - 1) // 2
                after = k - 1 - before
                dy = dxp[:, before:xp_shape[1] - after, before:xp_shape[2] - after, :]
            else:
                dy = dxp
        else:
            raise InvalidStateError(f"unknown cache entry {kind!r}")
    if spec.weight_decay:
        wd = spec.weight_decay
        for name in grads:
            if name.endswith(".w"):
                grads[name] = grads[name] + wd * params[name]
    if DEBUG_FINITE:
        for name, g in grads.items():
            _debug_check_finite(f"gradient {name}", g)
    return grads


def loss_and_grads(spec: NetworkSpec, params: Dict[str, np.ndarray],
                   batch: np.ndarray, labels, seed=0) -> Tuple[float, Dict[str, np.ndarray]]:
    """One training step's data loss and parameter gradients (decay included)."""
    logits, cache = forward(spec, params, batch, mode="train", seed=seed)
    loss, dlogits = softmax_cross_entropy(logits, labels)
    return loss, backward(cache, dlogits)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

@dataclass
class SgdState:
    learning_rate: float
    momentum: float
    velocity: Dict[str, np.ndarray]


def make_sgd_state(params: Dict[str, np.ndarray], learning_rate: float,
                   momentum: float) -> SgdState:
    if learning_rate <= 0:
        raise ValueError("learning rate must be positive")
    if not 0 <= momentum < 1:
        raise ValueError("momentum must lie in [0, 1)")
    velocity = {name: np.zeros_like(t) for name, t in params.items()}
    return SgdState(learning_rate, momentum, velocity)


def sgd_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
             state: SgdState) -> None:
    """In-place momentum update: v <- m*v - lr*g; w <- w + v."""
    if set(params) != set(grads) or set(params) != set(state.velocity):
        raise ValueError("parameter, gradient, and velocity sets must share names")
    lr = state.learning_rate
    m = state.momentum
    for name, w in params.items():
        g = grads[name]
        v = state.velocity[name]
        if g.shape != w.shape or v.shape != w.shape:
            raise ValueError(f"shape mismatch on {name}: {w.shape} vs {g.shape}")
        v *= m
        v -= (lr * g).astype(v.dtype, copy=False)
        w += v.astype(w.dtype, copy=False)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GradCheckReport:
    tolerance: float
    per_tensor: Dict[str, float]
    max_rel_err: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "per_tensor": dict(self.per_tensor),
            "max_rel_err": self.max_rel_err,
            "passed": self.passed,
        }


def tiny_network(act: ActivationSpec, weight_decay: float = 1e-3) -> NetworkSpec:
    """A deliberately small classifier (under 1e3 parameters) for gradient checks."""
    return NetworkSpec(
        input_shape=(8, 8, 1),
        layers=(
            conv(4, 3, "same"),
            activation(act),
            maxpool(),
            flatten(),
            dense(10),
            softmax(),
        ),
        weight_decay=weight_decay,
    )


def grad_check(spec: NetworkSpec, seed: int = 0, tolerance: float = 1e-4,
               step: float = 1e-5, batch_size: int = 4) -> GradCheckReport:
    """Compare analytic parameter gradients to central finite differences.

    Runs entirely in float64 on a small random batch. The objective is the
    data loss plus the L2 decay term, matching what backward() produces.
    Failures are report content, not exceptions.
    """
    shapes = spec.param_shapes()
    count = sum(int(np.prod(s)) for s in shapes.values())
    if count > 10_000:
        raise ValueError(f"gradient check limited to 1e4 parameters, spec has {count}")

    params = init_parameters(spec, seed, dtype=np.float64)
    rng = np.random.default_rng([seed, 977])
    x = rng.standard_normal((batch_size,) + spec.input_shape)
    y = rng.integers(0, spec.class_count(), batch_size)

    def objective() -> float:
        logits, _ = forward(spec, params, x, mode="train", seed=seed)
        loss, _ = softmax_cross_entropy(logits, y)
        if spec.weight_decay:
            for name, t in params.items():
                if name.endswith(".w"):
                    loss += 0.5 * spec.weight_decay * float((t ** 2).sum())
        return loss

    logits, cache = forward(spec, params, x, mode="train", seed=seed)
    _, dlogits = softmax_cross_entropy(logits, y)
    analytic = backward(cache, dlogits)

    per_tensor: Dict[str, float] = {}
    for name, t in params.items():
        worst = 0.0
        flat = t.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            hi = objective()
            flat[j] = orig - step
            lo = objective()
            flat[j] = orig
            numeric = (hi - lo) / (2 * step)
            a = float(analytic[name].reshape(-1)[j])
            denom = max(abs(a), abs(numeric))
            err = abs(a - numeric) if denom < 1e-10 else abs(a - numeric) / denom
            worst = max(worst, err)
        per_tensor[name] = worst
    max_err = max(per_tensor.values())
    return GradCheckReport(tolerance=tolerance, per_tensor=per_tensor,
                           max_rel_err=max_err, passed=max_err < tolerance)


# ---------------------------------------------------------------------------
# Parameter container I/O
# ---------------------------------------------------------------------------

def save_params(params: Dict[str, np.ndarray], path) -> None:
    """Write parameters as the PLNET1 flat container (sorted by name, f32 payload)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name in sorted(params):
            t = np.ascontiguousarray(params[name], dtype="<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<Q", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<Q", t.ndim))
            for dim in t.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(t.tobytes())


def load_params(path) -> Dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a {MAGIC.decode()} container")
    pos = len(MAGIC)
    params: Dict[str, np.ndarray] = {}

    def take(nbytes: int) -> bytes:
        nonlocal pos
        if pos + nbytes > len(blob):
            raise ValueError(f"{path}: truncated at byte {pos}")
        chunk = blob[pos:pos + nbytes]
        pos += nbytes
        return chunk

    while pos < len(blob):
        (name_len,) = struct.unpack("<Q", take(8))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<Q", take(8))
        dims = tuple(struct.unpack("<Q", take(8))[0] for _ in range(rank))
        size = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims)
        params[name] = data.astype(np.float32)
    return params
