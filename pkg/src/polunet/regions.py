"""Response-region analysis for networks built on power-linear units.

A response region is a maximal connected subset of the domain on which a
function is differentiable and monotonic. This module provides

* exact integer lower bounds on the number of response regions a layered
  network of PoLUs can realize,
* the constructive machinery behind those bounds: even two-trough
  combinations of PoLU pairs, their affinely rescaled variants with a flat
  plateau, and positive sums of those engineered to have equal-depth
  minima,
* empirical region counting for arbitrary scalar functions and for trained
  networks restricted to a line through input space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import netcore
from .activations import ActivationSpec, forward_array, derivative_array


class ConstructionError(RuntimeError):
    """Requested construction cannot be realized with the given parameters."""


class ConvergenceError(RuntimeError):
    """Iterative coefficient solve did not reach the requested tolerance."""


# ---------------------------------------------------------------------------
# Exact lower bounds (arbitrary-precision integers)
# ---------------------------------------------------------------------------

def single_layer_region_bound(n0: int, n1: int) -> int:
    """Lower bound on response regions for one hidden layer of n1 units on n0 inputs.

    Equals sum_{j=0}^{n0} C(n1, j), evaluated exactly.
    """
    if n0 < 1 or n1 < 1:
        raise ValueError("layer sizes must be positive integers")
    return sum(math.comb(n1, j) for j in range(n0 + 1))


def deep_region_bound(n0: int, widths: Sequence[int]) -> int:
    """Lower bound for L hidden layers of PoLUs with widths[i] units each.

    Requires every width >= n0. Equals
    2^(n0*(L-1)) * prod_{i<L} floor(widths[i]/n0)^n0 * sum_{j<=n0} C(widths[-1], j)
    and reduces to the single-layer bound when L = 1.
    """
    widths = list(widths)
    if n0 < 1 or not widths:
        raise ValueError("need a positive input count and at least one hidden layer")
    for i, w in enumerate(widths):
        if w < n0:
            raise ValueError(f"layer {i + 1} has width {w} < n0 = {n0}")
    L = len(widths)
    bound = 2 ** (n0 * (L - 1))
    for w in widths[:-1]:
        bound *= (w // n0) ** n0
    return bound * single_layer_region_bound(n0, widths[-1])


def identified_regions_per_layer(n0: int, n1: int) -> int:
    """Regions one hidden layer of n1 PoLUs identifies across n0 inputs: 2^n0 * floor(n1/n0)^n0."""
    if n0 < 1:
        raise ValueError("input count must be positive")
    if n1 < n0:
        raise ValueError(f"layer width {n1} must be at least the input count {n0}")
    return 2 ** n0 * (n1 // n0) ** n0


def construction_pairs(n0: int, n1: int) -> int:
    """Number k of trough pairs one input's unit budget supports.

    Each of the n0 inputs receives p = 2k units where p is the largest even
    integer not above floor(n1/n0); leftover units are ignored.
    """
    if n0 < 1 or n1 < 1:
        raise ValueError("layer sizes must be positive integers")
    p = n1 // n0
    return (p - p % 2) // 2


# ---------------------------------------------------------------------------
# Scalar construction pieces
# ---------------------------------------------------------------------------

def _polu_vals(x: np.ndarray, n: float) -> np.ndarray:
    return forward_array(ActivationSpec("polu", n=n), np.asarray(x, np.float64))


def _polu_slopes(x: np.ndarray, n: float) -> np.ndarray:
    return derivative_array(ActivationSpec("polu", n=n), np.asarray(x, np.float64))


def _require_supra_unit_power(n: float) -> None:
    if not (n > 1 and math.isfinite(n)):
        raise ValueError(
            f"construction needs power n > 1 (the curve must cross y = x below zero), got {n}"
        )


def mirror_sum(n: float, x):
    """Value of f_n(x) + f_n(-x): an even function with two symmetric minima for n > 1.

    Accepts scalars or numpy arrays.
    """
    _require_supra_unit_power(n)
    xs = np.asarray(x, np.float64)
    out = _polu_vals(xs, n) + _polu_vals(-xs, n)
    return float(out) if out.ndim == 0 else out


def mirror_sum_trough_abscissa(n: float) -> float:
    """Positive minimizer of the mirror sum: n^(1/(n+1)) - 1."""
    _require_supra_unit_power(n)
    return n ** (1.0 / (n + 1.0)) - 1.0


def _trough_depth(n: float) -> float:
    """Minimum value of a trough relative to its plateau (negative)."""
    t = mirror_sum_trough_abscissa(n)
    return t + math.expm1(-n * math.log1p(t))


def _bisect(g: Callable[[float], float], lo: float, hi: float, iters: int = 200) -> float:
    glo, ghi = g(lo), g(hi)
    if not (glo < 0 < ghi):
        raise ValueError("bisection bracket does not straddle a sign change")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(f: Callable[[float], float], lo: float, hi: float,
                tol: float = 1e-12, max_iter: int = 200) -> Tuple[float, float]:
    """Golden-section minimum of a unimodal f on [lo, hi] to abscissa tolerance tol."""
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if hi - lo < tol:
            break
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = f(x2)
    xm = 0.5 * (lo + hi)
    return xm, f(xm)


@dataclass(frozen=True)
class TroughFunction:
    """One rescaled trough: f_n(a*x + b) + f_n(-a*x + b) with b = a*d.

    The function is even, equals the plateau value 2b on [-d, d], matches
    that plateau again at x = +-1, and has its two global minima at +-c.
    """

    n: float
    d: float
    a: float
    b: float
    c: float

    def value(self, x):
        xs = np.asarray(x, np.float64)
        out = _polu_vals(self.a * xs + self.b, self.n) + _polu_vals(-self.a * xs + self.b, self.n)
        return float(out) if out.ndim == 0 else out

    def derivative(self, x):
        xs = np.asarray(x, np.float64)
        out = self.a * (_polu_slopes(self.a * xs + self.b, self.n)
                        - _polu_slopes(-self.a * xs + self.b, self.n))
        return float(out) if out.ndim == 0 else out

    @property
    def plateau(self) -> float:
        return 2.0 * self.b

    def to_dict(self) -> dict:
        return {"n": self.n, "d": self.d, "a": self.a, "b": self.b, "c": self.c}


def solve_trough(n: float, d: float = 0.0) -> TroughFunction:
    """Solve the rescaling of a trough so its plateau has half-width d.

    The level condition value(-1) = value(0) = value(1) reduces, with
    s = a*(1-d), to the scalar root of s + (1+s)^-n = 1 on s > 0; the root
    is bisected to machine precision and rescaled back. The positive trough
    abscissa follows as c = d + (n^(1/(n+1)) - 1)/a.
    """
    _require_supra_unit_power(n)
    if not (0 <= d < 1):
        raise ValueError(f"plateau half-width d must lie in [0, 1), got {d}")

    def level_gap(s: float) -> float:
        return s + math.expm1(-n * math.log1p(s))

    s = _bisect(level_gap, 1e-300, 1.0)
    a = s / (1.0 - d)
    b = a * d
    c = d + mirror_sum_trough_abscissa(n) / a
    if c >= 1.0:
        raise ConstructionError(f"trough abscissa c = {c} falls outside (d, 1) for n={n}, d={d}")
    tf = TroughFunction(n=n, d=d, a=a, b=b, c=c)

    # spot checks on the defining conditions
    v0, v1, vm1 = tf.value(0.0), tf.value(1.0), tf.value(-1.0)
    if abs(v1 - v0) > 1e-10 or abs(vm1 - v0) > 1e-10:
        raise ConstructionError(f"level condition violated: value(0)={v0}, value(+-1)=({v1},{vm1})")
    if abs(tf.derivative(c)) > 1e-10:
        raise ConstructionError(f"trough abscissa is not stationary: slope {tf.derivative(c)}")
    return tf


@dataclass(frozen=True)
class TroughSum:
    """Positive combination of k interleaved troughs with 2k equal-depth minima.

    components[i] has plateau half-width d_i with
    d_1 = 0 < c_1 < d_2 < c_2 < ... < c_k < 1, and the coefficients are
    solved so the 2k local minima of the sum share one value. Between the
    matched minima and the interior maxima, any horizontal band strictly
    inside is swept by every one of the 4k monotonic pieces, so the sum
    identifies 4k intervals of its domain.
    """

    n: float
    k: int
    components: Tuple[TroughFunction, ...]
    coeffs: Tuple[float, ...]
    minima: Tuple[Tuple[float, float], ...]  # (abscissa, value), sorted by abscissa

    def value(self, x):
        xs = np.asarray(x, np.float64)
        out = np.zeros_like(xs, dtype=np.float64)
        for coef, tf in zip(self.coeffs, self.components):
            out = out + coef * tf.value(xs)
        return float(out) if out.ndim == 0 else out

    def derivative(self, x):
        xs = np.asarray(x, np.float64)
        out = np.zeros_like(xs, dtype=np.float64)
        for coef, tf in zip(self.coeffs, self.components):
            out = out + coef * tf.derivative(xs)
        return float(out) if out.ndim == 0 else out

    def interior_maxima(self) -> List[Tuple[float, float]]:
        """Local maxima strictly inside (-1, 1): x = 0 and +-d_i for i >= 2."""
        xs = [0.0]
        for tf in self.components[1:]:
            xs.extend([-tf.d, tf.d])
        xs.sort()
        return [(x, self.value(x)) for x in xs]

    def common_minimum(self) -> float:
        return max(v for _, v in self.minima)

    def default_band(self) -> Tuple[float, float]:
        """A band comfortably inside (common minimum, smallest interior maximum)."""
        lo = self.common_minimum()
        hi = min(v for _, v in self.interior_maxima())
        return lo + 0.25 * (hi - lo), lo + 0.75 * (hi - lo)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "components": [tf.to_dict() for tf in self.components],
            "coeffs": list(self.coeffs),
            "minima": [[x, v] for x, v in self.minima],
        }

    @staticmethod
    def from_dict(data: dict) -> "TroughSum":
        comps = tuple(TroughFunction(**c) for c in data["components"])
        return TroughSum(
            n=float(data["n"]),
            k=int(data["k"]),
            components=comps,
            coeffs=tuple(float(c) for c in data["coeffs"]),
            minima=tuple((float(x), float(v)) for x, v in data["minima"]),
        )


def build_equal_minima_sum(n: float, k: int, tol: float = 1e-6,
                           max_iter: int = 500, damping: float = 0.5) -> TroughSum:
    """Construct a TroughSum with 2k minima equalized to within tol.

    Plateau offsets are placed at midpoints, d_{i+1} = (c_i + 1)/2, which
    keeps the interleaving d_1 = 0 < c_1 < d_2 < ... < c_k < 1 strict. The
    first coefficient is pinned at 1; the rest start large enough that each
    trough survives the increasing tails of its predecessors and are then
    re-equalized with a damped multiplicative update driven by the gap
    between each trough's minimum and the first one's.
    """
    _require_supra_unit_power(n)
    if k < 1:
        raise ValueError(f"need at least one trough pair, got k = {k}")

    comps: List[TroughFunction] = []
    d = 0.0
    for i in range(k):
        comps.append(solve_trough(n, d))
        d = 0.5 * (comps[-1].c + 1.0)
        if i + 1 < k and 1.0 - d < 1e-6:
            raise ConstructionError(
                f"cannot interleave {k} troughs for n = {n}: offset {i + 2} would reach {d}"
            )

    depth = abs(_trough_depth(n))
    coeffs: List[float] = [1.0]
    for i in range(1, k):
        di = comps[i].d
        lead_slope = sum(c * comps[j].derivative(di) for j, c in enumerate(coeffs))
        coeffs.append(max(2.0 * lead_slope / (comps[i].a * (n - 1.0)), 0.1))

    # search interval for trough i: (d_i, d_{i+1}) with d_{k+1} = 1
    uppers = [comps[i + 1].d if i + 1 < k else 1.0 for i in range(k)]
    grid = np.linspace(0.0, 1.0, 100_001)

    def total(x):
        out = np.zeros_like(np.asarray(x, np.float64))
        for coef, tf in zip(coeffs, comps):
            out = out + coef * tf.value(x)
        return out

    spread = math.inf
    for _ in range(max_iter):
        gy = total(grid)
        xs_min: List[float] = []
        vals: List[float] = []
        missing = None
        for i in range(k):
            lo, hi = comps[i].d, uppers[i]
            sel = np.nonzero((grid > lo) & (grid < hi))[0]
            j = sel[np.argmin(gy[sel])]
            if j <= sel[0] + 1 or j >= sel[-1] - 1:
                missing = i
                break
            xm, vm = _golden_min(lambda x: float(total(x)), grid[j - 1], grid[j + 1])
            xs_min.append(xm)
            vals.append(vm)
        if missing is not None:
            coeffs[missing] *= 2.0
            continue

        spread = max(vals) - min(vals)
        if spread < tol:
            pairs = sorted(
                [(-x, v) for x, v in zip(xs_min, vals)] + list(zip(xs_min, vals))
            )
            return TroughSum(
                n=n, k=k, components=tuple(comps), coeffs=tuple(coeffs),
                minima=tuple(pairs),
            )
        for i in range(1, k):
            factor = 1.0 + damping * (vals[i] - vals[0]) / (coeffs[i] * depth)
            coeffs[i] *= min(max(factor, 0.5), 2.0)

    raise ConvergenceError(
        f"minima equalization stalled at spread {spread:.3e} (tol {tol}) for n={n}, k={k}"
    )


# ---------------------------------------------------------------------------
# Empirical region counting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionReport:
    """Monotonic-piece count over a scanned interval.

    count == len(breakpoints) + 1; breakpoints are sorted abscissae where
    monotonicity flips or the slope jumps.
    """

    count: int
    breakpoints: Tuple[float, ...]
    method: str  # "analytic" or "sampled"
    resolution: int

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "breakpoints": list(self.breakpoints),
            "method": self.method,
            "resolution": self.resolution,
        }

    @staticmethod
    def from_dict(data: dict) -> "RegionReport":
        return RegionReport(
            count=int(data["count"]),
            breakpoints=tuple(float(b) for b in data["breakpoints"]),
            method=str(data["method"]),
            resolution=int(data["resolution"]),
        )


def _detect_breakpoints(xs: np.ndarray, ys: np.ndarray,
                        dead_band: float, jump_factor: float) -> List[Tuple[int, str]]:
    """Breakpoint sample indices with kinds: "min", "max", or "kink"."""
    d = np.diff(ys)
    sgn = np.zeros(len(d), dtype=np.int8)
    sgn[d > dead_band] = 1
    sgn[d < -dead_band] = -1

    found: List[Tuple[int, str]] = []
    nz = np.nonzero(sgn)[0]
    for a_i, b_i in zip(nz[:-1], nz[1:]):
        if sgn[a_i] == sgn[b_i]:
            continue
        kind = "min" if sgn[a_i] < 0 else "max"
        gap = b_i - a_i - 1
        if gap >= 3:
            # wide flat shelf between opposite trends: its own piece,
            # delimited by the two shelf edges
            found.extend([(int(a_i) + 1, "kink"), (int(b_i), "kink")])
        else:
            found.append(((int(a_i) + 1 + int(b_i)) // 2, kind))

    # slope-jump splits (kinks that preserve monotonicity)
    h = xs[1] - xs[0]
    q = d / h
    jumps = np.abs(np.diff(q))
    if len(jumps) >= 1:
        qmax = float(np.max(np.abs(q)))
        floor = 1e-9 * max(qmax, 1e-30)
        padded = np.pad(jumps, 4, constant_values=0.0)
        neighborhood = np.maximum.reduce(
            [padded[:-8], padded[1:-7], padded[7:-1], padded[8:]]
        )
        flagged = np.nonzero(jumps > jump_factor * np.maximum(neighborhood, floor))[0]
        cluster: List[int] = []
        for j in flagged:
            if cluster and j - cluster[-1] > 2:
                best = max(cluster, key=lambda t: jumps[t])
                found.append((best + 1, "kink"))
                cluster = []
            cluster.append(int(j))
        if cluster:
            best = max(cluster, key=lambda t: jumps[t])
            found.append((best + 1, "kink"))

    # merge and dedupe breakpoints closer than 3 grid cells, preferring
    # extremum labels over kink labels at the same spot
    found.sort()
    kept: List[Tuple[int, str]] = []
    for idx, kind in found:
        if kept and idx - kept[-1][0] < 3:
            if kept[-1][1] == "kink" and kind in ("min", "max"):
                kept[-1] = (kept[-1][0], kind)
            continue
        kept.append((idx, kind))
    return kept


def count_from_samples(xs: np.ndarray, ys: np.ndarray,
                       dead_band: float = 1e-12,
                       jump_factor: float = 10.0) -> RegionReport:
    """Count maximal monotonic-and-smooth pieces of uniformly sampled data.

    First differences inside +-dead_band count as flat. Pieces split where
    the difference sign flips (a flat gap of three or more cells between
    opposite signs becomes its own piece) and where the difference quotient
    jumps by more than jump_factor times its nearby variation, which
    catches kinks that do not change monotonicity. Breakpoints are grid
    points, so their accuracy is the sample spacing.
    """
    xs = np.asarray(xs, np.float64)
    ys = np.asarray(ys, np.float64)
    if xs.ndim != 1 or xs.shape != ys.shape or len(xs) < 3:
        raise ValueError("need matching 1-D sample arrays with at least 3 points")
    kept = _detect_breakpoints(xs, ys, dead_band, jump_factor)
    bps = tuple(float(xs[i]) for i, _ in kept)
    return RegionReport(count=len(bps) + 1, breakpoints=bps,
                        method="sampled", resolution=len(xs))


def count_monotonic_regions(f: Callable, lo: float, hi: float,
                            resolution: int = 100_000) -> RegionReport:
    """Sample f uniformly on [lo, hi] and count its monotonic pieces.

    f may accept a numpy array or a scalar. Detected breakpoints are
    refined past the grid spacing: extrema by golden-section search inside
    their bracketing cells, kinks by re-scanning a narrow window at finer
    resolution. Under-resolution shows up as missed breakpoints, never as
    an error.
    """
    if resolution < 1000:
        raise ValueError(f"resolution must be at least 1000, got {resolution}")
    if not lo < hi:
        raise ValueError(f"invalid scan interval [{lo}, {hi}]")
    xs = np.linspace(float(lo), float(hi), int(resolution))

    def evaluate(grid: np.ndarray) -> np.ndarray:
        try:
            vals = np.asarray(f(grid), np.float64)
            if vals.shape != grid.shape:
                raise TypeError
            return vals
        except TypeError:
            return np.array([float(f(x)) for x in grid])

    ys = evaluate(xs)
    kept = _detect_breakpoints(xs, ys, 1e-12, 10.0)

    refined: List[float] = []
    for idx, kind in kept:
        w_lo = xs[max(idx - 3, 0)]
        w_hi = xs[min(idx + 3, len(xs) - 1)]
        if kind in ("min", "max"):
            sign = 1.0 if kind == "min" else -1.0
            x_star, _ = _golden_min(lambda x: sign * float(f(x)), w_lo, w_hi, tol=1e-11)
            refined.append(x_star)
        else:
            sub = np.linspace(w_lo, w_hi, 2001)
            sub_kept = _detect_breakpoints(sub, evaluate(sub), 1e-13, 10.0)
            if sub_kept:
                best = min((sub[i] for i, _ in sub_kept), key=lambda v: abs(v - xs[idx]))
                refined.append(float(best))
            else:
                refined.append(float(xs[idx]))
    return RegionReport(count=len(refined) + 1, breakpoints=tuple(refined),
                        method="sampled", resolution=int(resolution))


def count_identified_intervals(sc: TroughSum, band_lo: float, band_hi: float) -> int:
    """Count monotonic pieces of the sum that sweep the whole band [band_lo, band_hi].

    The band must sit strictly between the equalized minimum value and the
    smallest interior local maximum; each qualifying piece then contains a
    subset mapped exactly onto the band, so all counted pieces are

    identified with one another. Expected count: 4k.
    """
    if not band_lo < band_hi:
        raise ValueError(f"empty band [{band_lo}, {band_hi}]")
    vmin = sc.common_minimum()
    max_vals = [v for _, v in sc.interior_maxima()]
    ceiling = min(max_vals)
    if not (vmin < band_lo and band_hi < ceiling):
        raise ValueError(
            f"band [{band_lo}, {band_hi}] must lie strictly inside "
            f"({vmin}, {ceiling})"
        )

    crit = [x for x, _ in sc.minima]
    crit += [x for x, _ in sc.interior_maxima()]
    points = sorted([-1.0] + crit + [1.0])
    count = 0
    for left, right in zip(points[:-1], points[1:]):
        va, vb = sc.value(left), sc.value(right)
        if min(va, vb) <= band_lo and max(va, vb) >= band_hi:
            count += 1
    return count


def network_line_regions(spec, params, anchor, direction,
                         t_lo: float, t_hi: float,
                         resolution: int = 100_000) -> RegionReport:
    """Count monotonic pieces of logit 0 along the line anchor + t*direction.

    The network runs in float64 with dropout disabled and no softmax so the
    probe sees the raw pre-output response. Inputs are batched in chunks to
    bound memory.
    """
    anchor = np.asarray(anchor, np.float64)
    direction = np.asarray(direction, np.float64)
    if anchor.shape != tuple(spec.input_shape) or direction.shape != anchor.shape:
        raise ValueError(
            f"anchor/direction must have the input shape {tuple(spec.input_shape)}"
        )
    if not np.any(direction):
        raise ValueError("direction must be nonzero")
    if resolution < 1000:
        raise ValueError(f"resolution must be at least 1000, got {resolution}")

    params64 = {name: np.asarray(t, np.float64) for name, t in params.items()}
    ts = np.linspace(float(t_lo), float(t_hi), int(resolution))
    ys = np.empty(len(ts), np.float64)
    chunk = 8192
    for start in range(0, len(ts), chunk):
        tt = ts[start:start + chunk]
        batch = anchor[None] + tt.reshape((-1,) + (1,) * anchor.ndim) * direction[None]
        logits, _ = netcore.forward(spec, params64, batch, mode="logits")
        ys[start:start + len(tt)] = logits[:, 0]
    return count_from_samples(ts, ys)
