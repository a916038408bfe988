"""Elastic distance kernels for equal-length univariate time series.

All kernels are pure functions of two 1-D float64 arrays plus scalar
parameters, compiled with numba and safe to call from any number of
threads. Point costs are squared differences for the DTW/ERP family
(nearest-exemplar decisions are invariant under the square root, which
is therefore never taken).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

# Measure kinds, in a fixed order that the parameter sampler indexes into.
KIND_ED = 0
KIND_DTW = 1
KIND_DTW_R = 2
KIND_DDTW = 3
KIND_DDTW_R = 4
KIND_WDTW = 5
KIND_WDDTW = 6
KIND_LCSS = 7
KIND_ERP = 8
KIND_TWE = 9
KIND_MSM = 10

KIND_NAMES = (
    "ed", "dtw", "dtw_r", "ddtw", "ddtw_r",
    "wdtw", "wddtw", "lcss", "erp", "twe", "msm",
)
KIND_IDS = {name: i for i, name in enumerate(KIND_NAMES)}

# Kinds that operate on the derivative transform of the series.
DERIVATIVE_KINDS = frozenset({"ddtw", "ddtw_r", "wddtw"})

# Kinds carrying a warping-window parameter.
WINDOWED_KINDS = frozenset({"dtw_r", "ddtw_r", "lcss"})

# Base DP family each kind dispatches to (derivative kinds reuse the raw
# kernels on transformed inputs).
_BASE_ID = {
    "ed": KIND_ED,
    "dtw": KIND_DTW,
    "dtw_r": KIND_DTW,
    "ddtw": KIND_DTW,
    "ddtw_r": KIND_DTW,
    "wdtw": KIND_WDTW,
    "wddtw": KIND_WDTW,
    "lcss": KIND_LCSS,
    "erp": KIND_ERP,
    "twe": KIND_TWE,
    "msm": KIND_MSM,
}


@dataclass(frozen=True)
class MeasureParams:
    """A measure kind plus the concrete parameters sampled for it.

    Only the fields relevant to `kind` are set; the rest stay None.
    `window` is a Sakoe-Chiba band half-width (dtw_r, ddtw_r, lcss),
    `g` the wdtw/wddtw weight decay, `epsilon` the lcss/erp threshold
    (erp uses it as the gap penalty value), `nu`/`lam` the twe stiffness
    and edit penalty, `cost` the msm split/merge cost.
    """

    kind: str
    window: int | None = None
    g: float | None = None
    epsilon: float | None = None
    nu: float | None = None
    lam: float | None = None
    cost: float | None = None

    def __post_init__(self):
        if self.kind not in KIND_IDS:
            raise ValueError(f"unknown measure kind: {self.kind!r}")

    def packed(self, length: int) -> tuple[int, int, float, float]:
        """Flatten to (base_kind_id, window, p1, p2) for the numba dispatch."""
        kind = self.kind
        window = length  # full band unless the kind restricts it
        p1 = 0.0
        p2 = 0.0
        if kind in ("dtw_r", "ddtw_r"):
            window = self.window
        elif kind in ("wdtw", "wddtw"):
            p1 = self.g
        elif kind == "lcss":
            window = self.window
            p1 = self.epsilon
        elif kind == "erp":
            p1 = self.epsilon
        elif kind == "twe":
            p1 = self.nu
            p2 = self.lam
        elif kind == "msm":
            p1 = self.cost
        return _BASE_ID[kind], int(window), float(p1), float(p2)

    @property
    def uses_derivative(self) -> bool:
        return self.kind in DERIVATIVE_KINDS


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _sq_euclid(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        d = a[i] - b[i]
        s += d * d
    return s


@njit(cache=True, nogil=True)
def _dtw(a, b, w):
    # Sakoe-Chiba banded DTW over squared point costs; w >= len covers
    # the full matrix, w == 0 forces the diagonal.
    n = a.shape[0]
    m = b.shape[0]
    if w > n:
        w = n
    prev = np.empty(m + 1)
    curr = np.empty(m + 1)
    for j in range(m + 1):
        prev[j] = np.inf
        curr[j] = np.inf
    prev[0] = 0.0
    for i in range(1, n + 1):
        for j in range(m + 1):
            curr[j] = np.inf
        jlo = i - w
        if jlo < 1:
            jlo = 1
        jhi = i + w
        if jhi > m:
            jhi = m
        for j in range(jlo, jhi + 1):
            d = a[i - 1] - b[j - 1]
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if curr[j - 1] < best:
                best = curr[j - 1]
            curr[j] = d * d + best
        tmp = prev
        prev = curr
        curr = tmp
    return prev[m]


@njit(cache=True, nogil=True)
def _wdtw(a, b, g):
    # Full-window DTW with logistic weight on the index offset |i-j|,
    # midpoint at half the series length and maximum weight 1.
    n = a.shape[0]
    m = b.shape[0]
    half = n / 2.0
    weights = np.empty(n)
    for d in range(n):
        weights[d] = 1.0 / (1.0 + np.exp(-g * (d - half)))
    prev = np.empty(m + 1)
    curr = np.empty(m + 1)
    for j in range(m + 1):
        prev[j] = np.inf
        curr[j] = np.inf
    prev[0] = 0.0
    for i in range(1, n + 1):
        curr[0] = np.inf
        for j in range(1, m + 1):
            d = a[i - 1] - b[j - 1]
            off = i - j
            if off < 0:
                off = -off
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if curr[j - 1] < best:
                best = curr[j - 1]
            curr[j] = weights[off] * d * d + best
        tmp = prev
        prev = curr
        curr = tmp
    return prev[m]


@njit(cache=True, nogil=True)
def _lcss(a, b, epsilon, w):
    # Longest common subsequence where a match needs |a_i - b_j| <= epsilon
    # and |i - j| <= w; returns 1 - L/len as a distance in [0, 1].
    n = a.shape[0]
    m = b.shape[0]
    prev = np.zeros(m + 1, np.int64)
    curr = np.zeros(m + 1, np.int64)
    for i in range(1, n + 1):
        curr[0] = 0
        for j in range(1, m + 1):
            off = i - j
            if off < 0:
                off = -off
            best = prev[j]
            if curr[j - 1] > best:
                best = curr[j - 1]
            if off <= w and abs(a[i - 1] - b[j - 1]) <= epsilon:
                cand = prev[j - 1] + 1
                if cand > best:
                    best = cand
            curr[j] = best
        tmp = prev
        prev = curr
        curr = tmp
    return 1.0 - prev[m] / n


@njit(cache=True, nogil=True)
def _erp(a, b, gap):
    # Edit distance with real penalty: gaps cost the squared offset from
    # a fixed gap element, matches cost the squared difference.
    n = a.shape[0]
    m = b.shape[0]
    prev = np.empty(m + 1)
    curr = np.empty(m + 1)
    prev[0] = 0.0
    for j in range(1, m + 1):
        d = b[j - 1] - gap
        prev[j] = prev[j - 1] + d * d
    for i in range(1, n + 1):
        da = a[i - 1] - gap
        curr[0] = prev[0] + da * da
        for j in range(1, m + 1):
            d = a[i - 1] - b[j - 1]
            db = b[j - 1] - gap
            c_diag = prev[j - 1] + d * d
            c_up = prev[j] + da * da
            c_left = curr[j - 1] + db * db
            best = c_diag
            if c_up < best:
                best = c_up
            if c_left < best:
                best = c_left
            curr[j] = best
        tmp = prev
        prev = curr
        curr = tmp
    return prev[m]


@njit(cache=True, nogil=True)
def _twe(a, b, nu, lam):
    # Time warp edit distance with unit timestamps and absolute-value point
    # costs; both series carry a virtual leading 0 element.
    n = a.shape[0]
    m = b.shape[0]
    prev = np.empty(m + 1)
    curr = np.empty(m + 1)
    prev[0] = 0.0
    for j in range(1, m + 1):
        prev[j] = np.inf
    for i in range(1, n + 1):
        ai = a[i - 1]
        ap = a[i - 2] if i >= 2 else 0.0
        curr[0] = np.inf
        for j in range(1, m + 1):
            bj = b[j - 1]
            bp = b[j - 2] if j >= 2 else 0.0
            off = i - j
            if off < 0:
                off = -off
            match = prev[j - 1] + abs(ai - bj) + abs(ap - bp) + 2.0 * nu * off
            del_a = prev[j] + abs(ai - ap) + nu + lam
            del_b = curr[j - 1] + abs(bj - bp) + nu + lam
            best = match
            if del_a < best:
                best = del_a
            if del_b < best:
                best = del_b
            curr[j] = best
        tmp = prev
        prev = curr
        curr = tmp
    return prev[m]


@njit(cache=True, nogil=True)
def _msm_move_cost(x, y, z, c):
    # Split/merge cost: c alone when x lies between y and z, else c plus
    # the distance to the nearer of the two.
    if (y <= x <= z) or (z <= x <= y):
        return c
    d1 = abs(x - y)
    d2 = abs(x - z)
    return c + (d1 if d1 < d2 else d2)


@njit(cache=True, nogil=True)
def _msm(a, b, c):
    n = a.shape[0]
    m = b.shape[0]
    prev = np.empty(m)
    curr = np.empty(m)
    prev[0] = abs(a[0] - b[0])
    for j in range(1, m):
        prev[j] = prev[j - 1] + _msm_move_cost(b[j], a[0], b[j - 1], c)
    for i in range(1, n):
        curr[0] = prev[0] + _msm_move_cost(a[i], a[i - 1], b[0], c)
        for j in range(1, m):
            c_diag = prev[j - 1] + abs(a[i] - b[j])
            c_up = prev[j] + _msm_move_cost(a[i], a[i - 1], b[j], c)
            c_left = curr[j - 1] + _msm_move_cost(b[j], a[i], b[j - 1], c)
            best = c_diag
            if c_up < best:
                best = c_up
            if c_left < best:
                best = c_left
            curr[j] = best
        tmp = prev
        prev = curr
        curr = tmp
    return prev[m - 1]


@njit(cache=True, nogil=True)
def _derivative(a, out):
    # Slope estimate averaging the backward difference and the centred
    # half-difference; endpoints copy their adjacent interior value.
    n = a.shape[0]
    for i in range(1, n - 1):
        out[i] = ((a[i] - a[i - 1]) + (a[i + 1] - a[i - 1]) / 2.0) / 2.0
    out[0] = out[1]
    out[n - 1] = out[n - 2]


@njit(cache=True, nogil=True)
def _pair_dist(x, e, kind, w, p1, p2):
    if kind == KIND_ED:
        return _sq_euclid(x, e)
    elif kind == KIND_DTW:
        return _dtw(x, e, w)
    elif kind == KIND_WDTW:
        return _wdtw(x, e, p1)
    elif kind == KIND_LCSS:
        return _lcss(x, e, p1, w)
    elif kind == KIND_ERP:
        return _erp(x, e, p1)
    elif kind == KIND_TWE:
        return _twe(x, e, p1, p2)
    else:
        return _msm(x, e, p1)


@njit(cache=True, nogil=True)
def _block_dist(M, rows, E, kind, w, p1, p2, out):
    # Distances from selected rows of M to every row of E.
    for r in range(rows.shape[0]):
        x = M[rows[r]]
        for e in range(E.shape[0]):
            out[r, e] = _pair_dist(x, E[e], kind, w, p1, p2)


# ---------------------------------------------------------------------------
# public surface
# ---------------------------------------------------------------------------

def _as_series(a) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] == 0:
        raise ValueError("expected a non-empty 1-D series")
    return arr


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    x = _as_series(a)
    y = _as_series(b)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"series lengths differ: {x.shape[0]} != {y.shape[0]}")
    return x, y


def euclidean(a, b) -> float:
    """Sum of squared element-wise differences (rooted form never needed)."""
    x, y = _check_pair(a, b)
    return float(_sq_euclid(x, y))


def dtw(a, b, window: int | None = None) -> float:
    """Banded DTW cost over squared point differences.

    `window` is the Sakoe-Chiba band half-width; None or any value >= len
    means unconstrained, 0 degenerates to the squared euclidean cost.
    """
    x, y = _check_pair(a, b)
    w = x.shape[0] if window is None else int(window)
    if w < 0:
        raise ValueError("window must be >= 0")
    return float(_dtw(x, y, w))


def derivative_transform(a) -> np.ndarray:
    """Per-point slope estimate; same length as the input, needs len >= 3."""
    x = _as_series(a)
    if x.shape[0] < 3:
        raise ValueError("derivative transform needs at least 3 points")
    out = np.empty_like(x)
    _derivative(x, out)
    return out


def derivative_matrix(X: np.ndarray) -> np.ndarray:
    """Row-wise derivative transform of a (n, l) series matrix."""
    if X.shape[1] < 3:
        raise ValueError("derivative transform needs at least 3 points")
    out = np.empty_like(X)
    for i in range(X.shape[0]):
        _derivative(X[i], out[i])
    return out


def ddtw(a, b, window: int | None = None) -> float:
    """DTW over the derivative transform of both series."""
    x, y = _check_pair(a, b)
    return dtw(derivative_transform(x), derivative_transform(y), window)


def wdtw(a, b, g: float) -> float:
    """Weighted DTW: cell costs scaled by a logistic weight on |i-j|."""
    x, y = _check_pair(a, b)
    if not 0.0 < g < 1.0:
        raise ValueError("g must lie in (0, 1)")
    return float(_wdtw(x, y, g))


def wddtw(a, b, g: float) -> float:
    """Weighted DTW on the derivative transform of both series."""
    x, y = _check_pair(a, b)
    return wdtw(derivative_transform(x), derivative_transform(y), g)


def lcss(a, b, epsilon: float, window: int) -> float:
    """LCSS distance 1 - L/len with banded epsilon matching; in [0, 1]."""
    x, y = _check_pair(a, b)
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if window < 0:
        raise ValueError("window must be >= 0")
    return float(_lcss(x, y, float(epsilon), int(window)))


def erp(a, b, g_penalty: float) -> float:
    """Edit distance with real penalty, gap element `g_penalty`."""
    x, y = _check_pair(a, b)
    return float(_erp(x, y, float(g_penalty)))


def twe(a, b, nu: float, lam: float) -> float:
    """Time warp edit distance with stiffness `nu` and edit penalty `lam`."""
    x, y = _check_pair(a, b)
    if nu <= 0:
        raise ValueError("nu must be > 0")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return float(_twe(x, y, float(nu), float(lam)))


def msm(a, b, c_cost: float) -> float:
    """Move-split-merge distance with split/merge cost `c_cost`."""
    x, y = _check_pair(a, b)
    if c_cost <= 0:
        raise ValueError("c_cost must be > 0")
    return float(_msm(x, y, float(c_cost)))


def measure_distance(params: MeasureParams, a, b) -> float:
    """Distance between two series under a fully parameterized measure."""
    x, y = _check_pair(a, b)
    if params.uses_derivative:
        x = derivative_transform(x)
        y = derivative_transform(y)
    kind, w, p1, p2 = params.packed(x.shape[0])
    return float(_pair_dist(x, y, kind, w, p1, p2))


def block_distances(M: np.ndarray, rows: np.ndarray, E: np.ndarray,
                    params: MeasureParams, length: int) -> np.ndarray:
    """Distances from M[rows] to every exemplar row of E under `params`.

    M and E must already be in the measure's working space (raw series or
    derivative rows for the derivative kinds).
    """
    kind, w, p1, p2 = params.packed(length)
    out = np.empty((rows.shape[0], E.shape[0]))
    _block_dist(M, rows, E, kind, w, p1, p2, out)
    return out


def warmup() -> None:
    """Force JIT compilation of every kernel so timed runs stay clean."""
    a = np.array([0.0, 1.0, 2.0, 1.0])
    b = np.array([1.0, 0.0, 2.0, 2.0])
    _sq_euclid(a, b)
    _dtw(a, b, 4)
    _dtw(a, b, 1)
    _wdtw(a, b, 0.5)
    _lcss(a, b, 0.5, 1)
    _erp(a, b, 0.3)
    _twe(a, b, 0.001, 0.5)
    _msm(a, b, 0.1)
    out = np.empty_like(a)
    _derivative(a, out)
    rows = np.arange(2, dtype=np.int64)
    M = np.stack([a, b])
    buf = np.empty((2, 2))
    for kind in (KIND_ED, KIND_DTW, KIND_WDTW, KIND_LCSS, KIND_ERP, KIND_TWE, KIND_MSM):
        _block_dist(M, rows, M, kind, 2, 0.5, 0.5, buf)
