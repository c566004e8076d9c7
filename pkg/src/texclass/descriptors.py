"""Texture descriptors: LBP, rotation-invariant uniform LBP, VAR and WLD.

Per-pixel codes are computed from centre-relative neighbour differences
(see :func:`texclass.raster.sample_differences`), aggregated into window
histograms, and concatenated for multi-scale and ``*_VAR`` descriptors.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as K
from .raster import Raster, RasterError, cardinal_geometry, geometry, sample_differences

KINDS = ("LBP", "LBPRIU", "VAR", "WLD", "LBPRIU_VAR", "WLD_VAR")
MULTI_SCALE = ((8, 1), (16, 2), (24, 3))
MAX_LBP_P = 24

_COMPONENTS = {
    "LBP": ("LBP",),
    "LBPRIU": ("LBPRIU",),
    "VAR": ("VAR",),
    "WLD": ("WLD",),
    "LBPRIU_VAR": ("LBPRIU", "VAR"),
    "WLD_VAR": ("WLD", "VAR"),
}
_COMP_ID = {"LBP": K.LBP, "LBPRIU": K.LBPRIU, "VAR": K.VAR, "WLD": K.WLD}

INVALID = -1


class DegenerateDistributionError(ValueError):
    pass


class LayoutMismatchError(ValueError):
    pass


def default_workers() -> int:
    return os.cpu_count() or 1


def run_bands(fn, height: int, workers: int | None) -> None:
    """Call ``fn(y0, y1)`` over horizontal bands, possibly on several threads.

    ``fn`` must write disjoint rows only; results never depend on ``workers``.
    """
    workers = max(1, workers or 1)
    if workers == 1 or height < 2 * workers:
        fn(0, height)
        return
    edges = np.linspace(0, height, workers + 1).astype(int)
    with ThreadPoolExecutor(workers) as pool:
        futures = [pool.submit(fn, int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]
        for f in futures:
            f.result()


# ---------------------------------------------------------------------------
# configuration and bin layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DescriptorConfig:
    kind: str
    scales: tuple = ((8, 1),)
    var_bins: int = 16
    # one ascending threshold tuple per scale, learned at training time
    var_boundaries: tuple | None = None
    wld_T: int = 8
    wld_M: int = 6
    wld_S: int = 20

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in KINDS:
            raise ValueError(f"unknown descriptor kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        scales = tuple((int(p), _as_radius(r)) for p, r in self.scales)
        if not scales:
            raise ValueError("at least one (P, R) scale is required")
        for p, r in scales:
            if p < 4 or r < 1:
                raise ValueError(f"invalid scale P={p}, R={r}")
            if kind == "LBP" and p > MAX_LBP_P:
                raise ValueError(f"LBP codes need P <= {MAX_LBP_P}")
        object.__setattr__(self, "scales", scales)
        if self.var_bins < 2 or min(self.wld_T, self.wld_M, self.wld_S) < 1:
            raise ValueError("bin parameters must be positive")
        if self.var_boundaries is not None:
            vb = tuple(tuple(float(b) for b in s) for s in self.var_boundaries)
            if len(vb) != len(scales):
                raise ValueError("need one VAR boundary list per scale")
            for s in vb:
                if len(s) > self.var_bins - 1 or any(b >= a for b, a in zip(s, s[1:])) \
                        or not all(math.isfinite(b) for b in s):
                    raise ValueError("VAR boundaries must be finite, strictly ascending, "
                                     "and at most var_bins - 1 long")
            object.__setattr__(self, "var_boundaries", vb)

    @property
    def uses_var(self) -> bool:
        return "VAR" in _COMPONENTS[self.kind]

    @property
    def max_radius(self) -> float:
        return max(r for _, r in self.scales)

    @property
    def border(self) -> int:
        return int(math.ceil(self.max_radius))

    @property
    def layout_id(self) -> str:
        key = f"{self.kind}|{self.scales}|{self.var_bins}|{self.wld_T},{self.wld_M},{self.wld_S}"
        return hashlib.sha1(key.encode()).hexdigest()[:12]

    def with_boundaries(self, boundaries) -> "DescriptorConfig":
        return dataclasses.replace(self, var_boundaries=boundaries)


def _as_radius(r):
    r = float(r)
    return int(r) if r.is_integer() else r


@dataclass(frozen=True)
class Part:
    component: str
    P: int
    R: float
    scale_index: int
    nbins: int
    offset: int


def component_bins(component: str, P: int, config: DescriptorConfig) -> int:
    if component == "LBP":
        return 1 << P
    if component == "LBPRIU":
        return P + 2
    if component == "VAR":
        return config.var_bins
    if component == "WLD":
        return config.wld_T * config.wld_M * config.wld_S
    raise ValueError(component)


def parts(config: DescriptorConfig) -> list[Part]:
    out = []
    offset = 0
    for si, (p, r) in enumerate(config.scales):
        for comp in _COMPONENTS[config.kind]:
            n = component_bins(comp, p, config)
            out.append(Part(comp, p, r, si, n, offset))
            offset += n
    return out


def bin_count(config: DescriptorConfig) -> int:
    return sum(p.nbins for p in parts(config))


class PartTable:
    """Packed per-part sampling tables handed to the compiled kernels."""

    def __init__(self, config: DescriptorConfig, parts_: Sequence[Part] | None = None):
        ps = list(parts_) if parts_ is not None else parts(config)
        if any(p.component == "VAR" for p in ps) and config.var_boundaries is None:
            raise ValueError("VAR boundaries have not been trained for this configuration")
        n = len(ps)
        maxp = max(p.P for p in ps)
        maxb = max(1, config.var_bins - 1)
        self.parts = ps
        self.comps = np.array([_COMP_ID[p.component] for p in ps], np.int64)
        self.Ps = np.array([p.P for p in ps], np.int64)
        self.offsets = np.array([p.offset for p in ps], np.int64)
        # circle samples in rows [0, P), cardinal samples in the last four rows
        self.offs = np.zeros((n, maxp + 4, 2), np.int64)
        self.wts = np.zeros((n, maxp + 4, 4))
        self.bounds = np.zeros((n, maxb))
        self.nbounds = np.zeros(n, np.int64)
        for i, p in enumerate(ps):
            g = geometry(p.P, p.R)
            c = cardinal_geometry(p.R)
            self.offs[i, :p.P, 0], self.offs[i, :p.P, 1], self.wts[i, :p.P] = g.dy, g.dx, g.weights
            self.offs[i, maxp:, 0], self.offs[i, maxp:, 1], self.wts[i, maxp:] = c.dy, c.dx, c.weights
            if p.component == "VAR":
                b = config.var_boundaries[p.scale_index]
                self.bounds[i, :len(b)] = b
                self.nbounds[i] = len(b)
        self.T, self.M, self.S = config.wld_T, config.wld_M, config.wld_S

    def kernel_args(self):
        return (self.comps, self.Ps, self.offs, self.wts, self.bounds, self.nbounds,
                self.T, self.M, self.S)


# ---------------------------------------------------------------------------
# histograms
# ---------------------------------------------------------------------------


@dataclass
class Histogram:
    """Sparse bin vector: ``weight[i]`` is the value of bin ``index[i]``.

    Bins not listed are zero. Indices are strictly ascending.
    """

    index: np.ndarray
    weight: np.ndarray
    length: int
    layout_id: str | None = None

    def __post_init__(self):
        self.index = np.asarray(self.index, np.int64)
        self.weight = np.asarray(self.weight, np.float64)
        if self.index.shape != self.weight.shape or self.index.ndim != 1:
            raise ValueError("index and weight must be 1-D and equally long")
        if self.index.size and (self.index[0] < 0 or self.index[-1] >= self.length
                                or np.any(np.diff(self.index) <= 0)):
            raise ValueError("histogram indices must be ascending and inside [0, length)")
        if np.any(self.weight < 0) or not np.all(np.isfinite(self.weight)):
            raise ValueError("histogram weights must be finite and non-negative")

    @classmethod
    def from_dense(cls, bins, layout_id=None) -> "Histogram":
        bins = np.asarray(bins, np.float64)
        idx = np.flatnonzero(bins)
        return cls(idx, bins[idx], bins.size, layout_id)

    @classmethod
    def from_codes(cls, codes, length: int, layout_id=None) -> "Histogram":
        """Normalized histogram of integer codes."""
        codes = np.asarray(codes, np.int64).ravel()
        if codes.size == 0:
            raise ValueError("no codes to histogram")
        idx, cnt = np.unique(codes, return_counts=True)
        return cls(idx, cnt / codes.size, length, layout_id)

    @property
    def bins(self) -> np.ndarray:
        out = np.zeros(self.length)
        out[self.index] = self.weight
        return out

    def total(self) -> float:
        return float(self.weight.sum())

    def normalized(self) -> "Histogram":
        t = self.total()
        if t <= 0:
            raise ValueError("cannot normalize an all-zero histogram")
        return Histogram(self.index, self.weight / t, self.length, self.layout_id)

    def __eq__(self, other):
        if not isinstance(other, Histogram):
            return NotImplemented
        return (self.length == other.length and self.layout_id == other.layout_id
                and np.array_equal(self.index, other.index)
                and np.array_equal(self.weight, other.weight))


def concat(histograms: Sequence[Histogram], layout_id=None) -> Histogram:
    """Concatenate in order; every part is rescaled to total weight 1/n."""
    if not histograms:
        raise ValueError("nothing to concatenate")
    n = len(histograms)
    idx, w = [], []
    offset = 0
    for h in histograms:
        t = h.total()
        if t <= 0:
            raise ValueError("cannot concatenate an all-zero histogram")
        idx.append(h.index + offset)
        w.append(h.weight / t / n)
        offset += h.length
    return Histogram(np.concatenate(idx), np.concatenate(w), offset, layout_id)


# ---------------------------------------------------------------------------
# single-neighbourhood kernels
# ---------------------------------------------------------------------------


def _diffs(samples, center) -> np.ndarray:
    d = np.asarray(samples, np.float64) - float(center)
    if d.ndim != 1 or d.size == 0:
        raise ValueError("samples must be a non-empty 1-D sequence")
    return d


def lbp_code(samples, center) -> int:
    d = _diffs(samples, center)
    if d.size > MAX_LBP_P:
        raise ValueError(f"LBP codes need P <= {MAX_LBP_P}")
    return int(K.lbp_from_diffs(d, d.size))


def uniformity(samples, center) -> int:
    d = _diffs(samples, center)
    return int(K.uniformity_from_diffs(d, d.size))


def lbpriu_code(samples, center) -> int:
    d = _diffs(samples, center)
    return int(K.riu2_from_diffs(d, d.size))


def var_value(samples) -> float:
    s = np.asarray(samples, np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("samples must be a non-empty 1-D sequence")
    return float(K.var_from_diffs(s, s.size))


def wld_excitation(samples, center) -> float:
    """Differential excitation; a zero centre is treated as 1 DN."""
    d = _diffs(samples, center)
    return float(K.excitation_from_diffs(d, d.size, float(center)))


def wld_angle(raster: Raster, cx: int, cy: int, R: float = 1) -> float:
    """Gradient direction from the four cardinal samples at distance R."""
    e, s, w, n = sample_differences(raster, cx, cy, 4, R)
    return float(K.orientation_angle(e, s, w, n))


def wld_orientation(raster: Raster, cx: int, cy: int, R: float = 1, T: int = 8) -> int:
    e, s, w, n = sample_differences(raster, cx, cy, 4, R)
    return int(K.orientation_bin(e, s, w, n, T))


def wld_bin(xi: float, t: int, config: DescriptorConfig | None = None) -> int:
    cfg = config or DescriptorConfig("WLD")
    if not 0 <= t < cfg.wld_T:
        raise ValueError(f"orientation bin {t} outside [0, {cfg.wld_T})")
    return int(K.wld_bin(float(xi), int(t), cfg.wld_T, cfg.wld_M, cfg.wld_S))


def train_var_boundaries(var_values, B: int = 16) -> tuple:
    """Equal-frequency thresholds: the k-th is the sorted value at rank ceil(kN/B).

    Duplicate thresholds are merged, so heavily tied data yields fewer
    effective bins.
    """
    v = np.sort(np.asarray(var_values, np.float64).ravel())
    if v.size == 0 or v[0] == v[-1]:
        raise DegenerateDistributionError("need at least two distinct VAR values")
    n = v.size
    picks = [v[min(n - 1, -(-k * n // B))] for k in range(1, B)]
    return tuple(float(b) for b in sorted(set(picks)))


def quantize_var(v: float, boundaries) -> int:
    b = np.asarray(boundaries, np.float64).reshape(1, -1)
    return int(K.quantize(float(v), b, 0, b.size))


# ---------------------------------------------------------------------------
# planes
# ---------------------------------------------------------------------------


@dataclass
class CodePlane:
    """Per-pixel bin indices of one descriptor component at one scale.

    Pixels closer than ``border`` to the edge hold ``INVALID``.
    """

    codes: np.ndarray
    border: int
    nbins: int

    @property
    def width(self) -> int:
        return self.codes.shape[1]

    @property
    def height(self) -> int:
        return self.codes.shape[0]


def _image(raster: Raster) -> np.ndarray:
    return np.ascontiguousarray(raster.pixels, dtype=np.float64)


def _check_size(raster: Raster, border: int, extra: int = 0) -> None:
    need = 2 * border + 1 + extra
    if raster.width < need or raster.height < need:
        raise RasterError(f"raster {raster.width}x{raster.height} too small "
                          f"(needs at least {need}x{need})")


def part_planes(raster: Raster, table: PartTable, workers: int | None = 1) -> list[np.ndarray]:
    img = _image(raster)
    H, W = img.shape
    out = []
    args = table.kernel_args()
    for i, p in enumerate(table.parts):
        border = int(math.ceil(p.R))
        _check_size(raster, border)
        plane = np.full((H, W), INVALID, np.int64)
        run_bands(lambda y0, y1, i=i, b=border, pl=plane:
                  K.code_plane_rows(img, i, y0, y1, b, *args, pl), H, workers)
        out.append(plane)
    return out


def code_plane(raster: Raster, component: str, P: int, R: float,
               config: DescriptorConfig | None = None, scale_index: int = 0,
               workers: int | None = 1) -> CodePlane:
    """Code plane of a single component (LBP, LBPRIU, VAR or WLD) at one scale.

    For VAR the boundaries are taken from ``config.var_boundaries[scale_index]``.
    """
    component = component.upper()
    if component not in _COMP_ID:
        raise ValueError(f"not a single-component descriptor: {component}")
    cfg = config or DescriptorConfig(component, ((P, R),))
    border = int(math.ceil(R))
    _check_size(raster, border)
    part = Part(component, P, R, scale_index, component_bins(component, P, cfg), 0)
    table = PartTable(cfg, [part])
    (plane,) = part_planes(raster, table, workers)
    return CodePlane(plane, border, part.nbins)


def var_plane(raster: Raster, P: int, R: float, workers: int | None = 1) -> np.ndarray:
    """Raw (unquantized) VAR values; NaN on the border band."""
    border = int(math.ceil(R))
    _check_size(raster, border)
    img = _image(raster)
    g = geometry(P, R)
    out = np.full(img.shape, np.nan)
    offs = np.stack([g.dy, g.dx], axis=1)[None]
    wts = g.weights[None]
    run_bands(lambda y0, y1: K.var_plane_rows(img, y0, y1, border, offs, wts, P, out),
              img.shape[0], workers)
    return out


def window_bounds(W: int) -> tuple[int, int]:
    """Pixels before and after the centre covered by a W-wide window."""
    if W < 1:
        raise ValueError("window must be at least 1 pixel")
    return (W - 1) // 2, W // 2


def window_histogram(plane: CodePlane, cx: int, cy: int, W: int,
                     layout_id: str | None = None) -> Histogram:
    lo, hi = window_bounds(W)
    if cx - lo < 0 or cy - lo < 0 or cx + hi >= plane.width or cy + hi >= plane.height:
        raise RasterError("window leaves the code plane")
    codes = plane.codes[cy - lo:cy + hi + 1, cx - lo:cx + hi + 1]
    if np.any(codes == INVALID):
        raise RasterError("window touches the border band")
    return Histogram.from_codes(codes, plane.nbins, layout_id)
