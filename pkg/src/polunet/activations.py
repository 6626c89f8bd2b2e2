"""Activation kernels and their analytic probes.

The power-linear unit (PoLU) is the identity for non-negative inputs and
``(1 - x)^-n - 1`` below zero: it keeps a unit slope on the positive side,
saturates to -1 as x -> -inf, and its slope at 0- equals the power ``n``,
so slope and asymptote can be tuned independently (unlike ELU, where the
``alpha`` scale moves both).

Scalar kernels work on 64-bit floats and are meant for analysis and tests;
the ``*_array`` variants apply the same formulas elementwise to numpy
arrays, preserving dtype, and are what the tensor layer uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

KINDS = ("polu", "relu", "lrelu", "elu")


@dataclass(frozen=True)
class ActivationSpec:
    """Tagged description of an activation function.

    kind: one of "polu", "relu", "lrelu", "elu".
    n: PoLU power (used when kind == "polu").
    alpha: ELU negative-part scale (used when kind == "elu").
    leak: LReLU negative slope (used when kind == "lrelu").
    """

    kind: str
    n: float = 2.0
    alpha: float = 1.0
    leak: float = 0.01

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind == "polu" and not (self.n > 0 and math.isfinite(self.n)):
            raise ValueError(f"polu power must be a positive finite real, got {self.n}")
        if self.kind == "elu" and not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"elu alpha must be a positive finite real, got {self.alpha}")
        if self.kind == "lrelu" and not (0 <= self.leak < 1):
            raise ValueError(f"lrelu leak must lie in [0, 1), got {self.leak}")

    def label(self) -> str:
        """Compact human/CLI label, e.g. "polu:n=2" or "relu"."""
        if self.kind == "polu":
            return f"polu:n={self.n:g}"
        if self.kind == "elu":
            return f"elu:a={self.alpha:g}"
        if self.kind == "lrelu":
            return f"lrelu:l={self.leak:g}"
        return self.kind


def parse_activation_spec(text: str) -> ActivationSpec:
    """Parse a CLI-style activation label.

    Accepted forms: ``relu``, ``lrelu``, ``lrelu:l=0.01``, ``elu``,
    ``elu:a=1``, ``polu``, ``polu:n=2``.
    """
    head, _, tail = text.strip().partition(":")
    kind = head.strip().lower()
    if kind not in KINDS:
        raise ValueError(f"unknown activation {head!r}")
    kwargs = {}
    if tail:
        for item in tail.split(","):
            key, sep, val = item.partition("=")
            if not sep:
                raise ValueError(f"malformed activation parameter {item!r}")
            key = key.strip().lower()
            name = {"n": "n", "a": "alpha", "alpha": "alpha", "l": "leak", "leak": "leak"}.get(key)
            if name is None:
                raise ValueError(f"unknown activation parameter {key!r}")
            kwargs[name] = float(val)
    return ActivationSpec(kind, **kwargs)


def _check_scalar(x: float, name: str = "x") -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x}")
    return x


def polu_forward(x: float, n: float = 2.0) -> float:
    """PoLU value: x for x >= 0, (1 - x)^-n - 1 for x < 0.

    Computed as expm1(-n * log1p(-x)) on the negative side, which is exact
    near 0 and underflows cleanly to -1 for very negative x.
    """
    x = _check_scalar(x)
    if not (n > 0 and math.isfinite(n)):
        raise ValueError(f"polu power must be a positive finite real, got {n}")
    if x >= 0:
        return x
    return math.expm1(-n * math.log1p(-x))


def polu_derivative(x: float, n: float = 2.0) -> float:
    """PoLU slope: 1 for x >= 0 (the kink takes the right branch), else n*(1-x)^-(n+1)."""
    x = _check_scalar(x)
    if not (n > 0 and math.isfinite(n)):
        raise ValueError(f"polu power must be a positive finite real, got {n}")
    if x >= 0:
        return 1.0
    return n * math.exp(-(n + 1.0) * math.log1p(-x))


def forward(spec: ActivationSpec, x: float) -> float:
    """Scalar activation value for any supported kind."""
    if spec.kind == "polu":
        return polu_forward(x, spec.n)
    x = _check_scalar(x)
    if spec.kind == "relu":
        return max(0.0, x)
    if spec.kind == "lrelu":
        return max(x, spec.leak * x)
    # elu
    return x if x >= 0 else spec.alpha * math.expm1(x)


def derivative(spec: ActivationSpec, x: float) -> float:
    """Scalar activation slope; at x = 0 every kind reports its x >= 0 branch."""
    if spec.kind == "polu":
        return polu_derivative(x, spec.n)
    x = _check_scalar(x)
    if x >= 0:
        return 1.0
    if spec.kind == "relu":
        return 0.0
    if spec.kind == "lrelu":
        return spec.leak
    return spec.alpha * math.exp(x)


def forward_array(spec: ActivationSpec, x: np.ndarray) -> np.ndarray:
    """Elementwise activation value, preserving the input dtype.

    Branches are fused numpy expressions (the negative side clamps its
    argument to keep both np.where branches in-domain), which keeps the
    pass count low on large training tensors.
    """
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    if spec.kind == "relu":
        return np.maximum(x, 0)
    if spec.kind == "lrelu":
        return np.maximum(x, spec.leak * x)
    xn = np.minimum(x, 0)
    if spec.kind == "polu":
        return np.where(x >= 0, x, np.expm1(-spec.n * np.log1p(-xn)))
    return np.where(x >= 0, x, spec.alpha * np.expm1(xn))  # elu


def derivative_array(spec: ActivationSpec, x: np.ndarray) -> np.ndarray:
    """Elementwise activation slope, preserving the input dtype."""
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    one = x.dtype.type(1)
    if spec.kind == "relu":
        return (x >= 0).astype(x.dtype)
    if spec.kind == "lrelu":
        return np.where(x >= 0, one, x.dtype.type(spec.leak))
    xn = np.minimum(x, 0)
    if spec.kind == "polu":
        return np.where(x >= 0, one,
                        spec.n * np.exp(-(spec.n + 1) * np.log1p(-xn)))
    return np.where(x >= 0, one, spec.alpha * np.exp(xn))  # elu


def negative_fixed_point(n: float, tol: float = 1e-12, max_iter: int = 200) -> Optional[float]:
    """Negative solution of polu(x, n) = x, or None when there is none.

    For n > 1 the curve crosses y = x exactly once in (-1, 0); the crossing
    is bracketed and bisected until |f(x) - x| < tol. For n <= 1 the
    residual f(x) - x is positive everywhere below zero, so None.
    """
    if not (n > 0 and math.isfinite(n)):
        raise ValueError(f"polu power must be a positive finite real, got {n}")
    if n <= 1:
        return None

    def residual(x: float) -> float:
        return polu_forward(x, n) - x

    lo, hi = -1.0 + 1e-9, -1e-9
    flo, fhi = residual(lo), residual(hi)
    if not (flo > 0 > fhi):
        # n barely above 1 can leave the upper end of the bracket at rounding
        # noise; widen toward zero until the sign shows.
        while fhi >= 0 and hi < -1e-300:
            hi /= 2
            fhi = residual(hi)
        if not (flo > 0 > fhi):
            return None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = residual(mid)
        if abs(fmid) < tol:
            return mid
        if fmid > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def saturation_value(spec: ActivationSpec) -> Optional[float]:
    """Saturation plateau as x -> -inf: -1 for PoLU, -alpha for ELU.

    The rectifier kinds do not saturate toward a negative plateau, so they
    report None.
    """
    if spec.kind == "polu":
        return -1.0
    if spec.kind == "elu":
        return -spec.alpha
    return None


def sample_curve(spec: ActivationSpec, lo: float, hi: float, count: int) -> np.ndarray:
    """Sample (x, f(x), f'(x)) on `count` equally spaced points including both ends.

    Returns a float64 array of shape (count, 3), ready for CSV emission.
    """
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"invalid sample range [{lo}, {hi}]")
    if count < 2:
        raise ValueError(f"count must be at least 2, got {count}")
    xs = np.linspace(float(lo), float(hi), int(count))
    fs = forward_array(spec, xs)
    dfs = derivative_array(spec, xs)
    return np.column_stack([xs, fs, dfs])


def curve_to_csv(rows: np.ndarray) -> str:
    """Serialize sample_curve output with header ``x,f,df`` at 17 significant digits."""
    lines = ["x,f,df"]
    for x, f, df in rows:
        lines.append(f"{x:.17g},{f:.17g},{df:.17g}")
    return "\n".join(lines) + "\n"


def standard_normal_response_mean(spec: ActivationSpec, samples: int = 20_000_000,
                                  seed: int = 0) -> float:
    """Monte Carlo mean of the activation over standard-normal inputs.

    This is the bias-shift statistic: rectifiers keep it well above zero,
    activations with a negative tail pull it toward zero. Draws are chunked
    so large sample counts stay memory-friendly.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    total = 0.0
    remaining = samples
    while remaining > 0:
        block = min(remaining, 2_000_000)
        z = rng.standard_normal(block)
        total += float(forward_array(spec, z).sum())
        remaining -= block
    return total / samples
