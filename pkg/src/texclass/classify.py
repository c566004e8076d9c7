"""Minimum Bhattacharyya-distance pixel classification.

Class models are pooled descriptor histograms of training areas. An image is
classified by building the histogram of the window centred on each pixel and
picking the closest model. Two implementations produce identical masks:

* :func:`classify_image_naive` recomputes every descriptor code of every
  window from the raw pixels;
* :func:`classify_image_fast` computes each code plane once and slides the
  window along rows, updating the histogram and the per-class coefficients
  incrementally.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _kernels as K
from .descriptors import (
    INVALID,
    DescriptorConfig,
    Histogram,
    LayoutMismatchError,
    PartTable,
    bin_count,
    default_workers,
    parts,
    part_planes,
    run_bands,
    train_var_boundaries,
    var_plane,
    window_bounds,
    _check_size,
    _image,
)
from .raster import LabelMask, Raster, RasterError, Rect

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


class ModelVersionError(ModelFormatError):
    pass


@dataclass
class ClassModel:
    class_id: int
    name: str
    histogram: Histogram
    pixel_count: int

    def __post_init__(self):
        if self.pixel_count <= 0:
            raise ValueError(f"class {self.class_id} has no training pixels")


@dataclass
class ModelSet:
    config: DescriptorConfig
    window: int
    classes: list[ClassModel] = field(default_factory=list)

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be positive")
        ids = [c.class_id for c in self.classes]
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError(f"class ids must be 1..K in order, got {ids}")
        n = bin_count(self.config)
        for c in self.classes:
            if c.histogram.length != n:
                raise LayoutMismatchError(
                    f"class {c.class_id}: histogram has {c.histogram.length} bins, "
                    f"configuration needs {n}")
            if c.histogram.layout_id not in (None, self.config.layout_id):
                raise LayoutMismatchError(f"class {c.class_id}: foreign histogram layout")
        if self.config.uses_var and self.config.var_boundaries is None:
            raise ValueError("VAR configurations need trained boundaries")

    @property
    def var_boundaries(self):
        return self.config.var_boundaries

    def __eq__(self, other):
        if not isinstance(other, ModelSet):
            return NotImplemented
        return (self.config == other.config and self.window == other.window
                and self.classes == other.classes)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

Selection = Sequence[Rect] | np.ndarray


def _selected(planes: list[np.ndarray], selection: Selection, min_side: int) -> list[np.ndarray]:
    """Codes of every plane at the selected pixels valid in all planes."""
    H, W = planes[0].shape
    valid = np.ones((H, W), bool)
    for p in planes:
        valid &= p != INVALID
    chunks: list[list[np.ndarray]] = [[] for _ in planes]
    if isinstance(selection, np.ndarray):
        sel = selection.astype(bool) & valid
        for c, p in zip(chunks, planes):
            c.append(p[sel])
    else:
        if not selection:
            raise ValueError("no training rectangles")
        for r in selection:
            if not r.inside(W, H):
                raise RasterError(f"training rect {r} outside the {W}x{H} raster")
            if r.w < min_side or r.h < min_side:
                raise RasterError(f"training rect {r} smaller than {min_side}x{min_side}")
            sl = r.slices()
            ok = valid[sl]
            for c, p in zip(chunks, planes):
                c.append(p[sl][ok])
    return [np.concatenate(c) for c in chunks]


def _training_planes(raster: Raster, config: DescriptorConfig, workers):
    table = PartTable(config)
    planes = part_planes(raster, table, workers)
    # every part sees the same pixel set: the border of the widest scale
    b = config.border
    for p in planes:
        p[:b, :] = INVALID
        p[-b:, :] = INVALID
        p[:, :b] = INVALID
        p[:, -b:] = INVALID
    return planes


def _model_histogram(codes: list[np.ndarray], config: DescriptorConfig) -> Histogram:
    ps = parts(config)
    n = len(ps)
    idx, w = [], []
    for c, p in zip(codes, ps):
        u, cnt = np.unique(c, return_counts=True)
        idx.append(u + p.offset)
        w.append(cnt / (c.size * n))
    return Histogram(np.concatenate(idx), np.concatenate(w), bin_count(config),
                     config.layout_id)


def build_class_model(raster: Raster, rects: Selection, config: DescriptorConfig,
                      class_id: int, name: str | None = None, *, workers=1,
                      planes=None) -> ClassModel:
    """Pool the codes of all training pixels of one class into a histogram.

    Multi-part descriptors are pooled per part and then concatenated with
    equal weight. Pixels whose neighbourhood leaves the raster are skipped.
    """
    if planes is None:
        planes = _training_planes(raster, config, workers)
    codes = _selected(planes, rects, 2 * config.border + 1)
    if codes[0].size == 0:
        raise ValueError(f"class {class_id}: no usable training pixels")
    return ClassModel(class_id, name or f"class{class_id}", _model_histogram(codes, config),
                      int(codes[0].size))


def _selections(training) -> dict[int, Selection]:
    if isinstance(training, LabelMask):
        labels = training.labels
        return {k: labels == k for k in range(1, int(labels.max()) + 1)}
    if isinstance(training, Mapping):
        return {int(k): list(v) for k, v in training.items()}
    out: dict[int, list[Rect]] = {}
    for cid, r in training:
        out.setdefault(int(cid), []).append(r)
    return out


def train_var(raster: Raster, selections: Mapping[int, Selection],
              config: DescriptorConfig, workers=1) -> DescriptorConfig:
    """Learn per-scale VAR thresholds from the pooled training pixels of all classes."""
    b = config.border
    bounds = []
    for P, R in config.scales:
        vp = var_plane(raster, P, R, workers)
        vp[:b, :] = np.nan
        vp[-b:, :] = np.nan
        vp[:, :b] = np.nan
        vp[:, -b:] = np.nan
        pooled = []
        for sel in selections.values():
            if isinstance(sel, np.ndarray):
                pooled.append(vp[sel.astype(bool)])
            else:
                pooled.extend(vp[r.slices()].ravel() for r in sel
                              if r.inside(raster.width, raster.height))
        v = np.concatenate(pooled) if pooled else np.empty(0)
        bounds.append(train_var_boundaries(v[~np.isnan(v)], config.var_bins))
    return config.with_boundaries(tuple(bounds))


def train_models(raster: Raster, training, config: DescriptorConfig, window: int = 40,
                 names: Mapping[int, str] | None = None, workers=1) -> ModelSet:
    """Build a ModelSet from training areas.

    ``training`` is a ``{class_id: [Rect, ...]}`` mapping, a sequence of
    ``(class_id, Rect)`` pairs, or a LabelMask whose labelled pixels are used.
    VAR thresholds are learned first when the descriptor needs them.
    """
    sels = _selections(training)
    if not sels:
        raise ValueError("no training classes")
    ids = sorted(sels)
    if ids != list(range(1, len(ids) + 1)):
        raise ValueError(f"class ids must be contiguous from 1, got {ids}")
    if config.uses_var and config.var_boundaries is None:
        config = train_var(raster, sels, config, workers)
    planes = _training_planes(raster, config, workers)
    names = names or {}
    classes = [build_class_model(raster, sels[k], config, k, names.get(k), planes=planes)
               for k in ids]
    return ModelSet(config, window, classes)


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------


def _as_hist(h) -> Histogram:
    return h if isinstance(h, Histogram) else Histogram.from_dense(h)


def bhattacharyya_coefficient(h1, h2) -> float:
    a, b = _as_hist(h1), _as_hist(h2)
    if a.length != b.length:
        raise LayoutMismatchError(f"histogram lengths differ: {a.length} vs {b.length}")
    return float(K.bc_sparse(a.index, a.weight, b.index, b.weight))


def bhattacharyya(h1, h2) -> float:
    """-ln of the Bhattacharyya coefficient, floored at 1e-12 (cap ~27.63)."""
    return float(K.distance_from_coef(bhattacharyya_coefficient(h1, h2)))


def classify_pixel(h, models: ModelSet) -> tuple[int, float]:
    h = _as_hist(h)
    if h.length != bin_count(models.config) or h.layout_id not in (None, models.config.layout_id):
        raise LayoutMismatchError("histogram layout does not match the model set")
    best, best_d = 0, math.inf
    for c in models.classes:
        d = bhattacharyya(h, c.histogram)
        if d < best_d:
            best, best_d = c.class_id, d
    return best, best_d


# ---------------------------------------------------------------------------
# image classification
# ---------------------------------------------------------------------------


@dataclass
class _Prepared:
    support: np.ndarray   # ascending global bins used by any class
    models: np.ndarray    # K x S class weights on the support
    sqm: np.ndarray
    lo: int
    hi: int
    xlo: int
    xhi: int
    ylo: int
    yhi: int


def _prepare(raster: Raster, models: ModelSet) -> _Prepared:
    if not models.classes:
        raise ValueError("empty model set")
    support = np.unique(np.concatenate([c.histogram.index for c in models.classes]))
    dense = np.zeros((len(models.classes), support.size))
    for k, c in enumerate(models.classes):
        dense[k, np.searchsorted(support, c.histogram.index)] = c.histogram.weight
    lo, hi = window_bounds(models.window)
    b = models.config.border
    _check_size(raster, b)
    xlo, xhi = b + lo, raster.width - b - hi
    ylo, yhi = b + lo, raster.height - b - hi
    if xhi <= xlo or yhi <= ylo:
        raise RasterError(f"raster {raster.width}x{raster.height} too small for window "
                          f"{models.window} at radius {models.config.max_radius}")
    return _Prepared(support, dense, np.sqrt(dense), lo, hi, xlo, xhi, ylo, yhi)


# largest bin count for which the naive path uses a direct bin -> slot table
_DENSE_SLOT_LIMIT = 1 << 22


def classify_image_naive(raster: Raster, models: ModelSet, workers: int | None = 1) -> LabelMask:
    """Reference classifier: every window histogram is rebuilt from raw pixels."""
    prep = _prepare(raster, models)
    table = PartTable(models.config)
    img = _image(raster)
    out = np.zeros(img.shape, np.uint8)
    args = table.kernel_args()
    nbins = bin_count(models.config)
    slot_map = np.empty(0, np.int64)
    if nbins <= _DENSE_SLOT_LIMIT:
        slot_map = np.full(nbins, prep.support.size, np.int64)
        slot_map[prep.support] = np.arange(prep.support.size)

    def band(y0, y1):
        y0, y1 = max(y0, prep.ylo), min(y1, prep.yhi)
        if y0 < y1:
            K.classify_naive_rows(img, y0, y1, prep.xlo, prep.xhi, prep.lo, prep.hi,
                                  prep.support, slot_map, table.offsets, prep.models, *args,
                                  out)

    run_bands(band, img.shape[0], workers)
    return LabelMask(out)


def compact_planes(raster: Raster, models: ModelSet, prep: _Prepared,
                   workers: int | None = None) -> np.ndarray:
    """Code planes re-indexed onto the model support; other bins map to S."""
    table = PartTable(models.config)
    planes = part_planes(raster, table, workers)
    S = prep.support.size
    out = np.empty((len(planes),) + planes[0].shape, np.int64)
    for i, (p, off) in enumerate(zip(planes, table.offsets)):
        g = np.where(p == INVALID, -1, p + off)
        pos = np.searchsorted(prep.support, g)
        hit = (pos < S) & (prep.support[np.minimum(pos, S - 1)] == g)
        out[i] = np.where(hit, pos, S)
    return out


def classify_image_fast(raster: Raster, models: ModelSet, workers: int | None = None) -> LabelMask:
    """Cached classifier; output identical to :func:`classify_image_naive`."""
    workers = workers or default_workers()
    prep = _prepare(raster, models)
    cplanes = compact_planes(raster, models, prep, workers)
    out = np.zeros(cplanes.shape[1:], np.uint8)

    def band(y0, y1):
        y0, y1 = max(y0, prep.ylo), min(y1, prep.yhi)
        if y0 < y1:
            K.classify_fast_rows(cplanes, y0, y1, prep.xlo, prep.xhi, prep.lo, prep.hi,
                                 prep.models, prep.sqm, out)

    run_bands(band, out.shape[0], workers)
    return LabelMask(out)


def classify_image(raster: Raster, models, *, naive: bool = False,
                   workers: int | None = None) -> LabelMask:
    """Dispatch on the model type (histogram models or GLCM models)."""
    from .glcm import GlcmModelSet, glcm_classify
    if isinstance(models, GlcmModelSet):
        return glcm_classify(raster, models, workers=workers)
    if naive:
        return classify_image_naive(raster, models, workers)
    return classify_image_fast(raster, models, workers)


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------


def config_to_dict(cfg: DescriptorConfig) -> dict:
    return {
        "kind": cfg.kind,
        "scales": [[p, r] for p, r in cfg.scales],
        "var_bins": cfg.var_bins,
        "var_boundaries": None if cfg.var_boundaries is None
        else [list(b) for b in cfg.var_boundaries],
        "wld": {"T": cfg.wld_T, "M": cfg.wld_M, "S": cfg.wld_S},
    }


def config_from_dict(d: dict) -> DescriptorConfig:
    wld = d.get("wld", {})
    vb = d.get("var_boundaries")
    return DescriptorConfig(
        kind=d["kind"],
        scales=tuple(tuple(s) for s in d["scales"]),
        var_bins=int(d.get("var_bins", 16)),
        var_boundaries=None if vb is None else tuple(tuple(b) for b in vb),
        wld_T=int(wld.get("T", 8)), wld_M=int(wld.get("M", 6)), wld_S=int(wld.get("S", 20)),
    )


def _hist_to_dict(h: Histogram) -> dict:
    return {"length": h.length, "index": h.index.tolist(), "weight": h.weight.tolist()}


def modelset_to_dict(ms: ModelSet) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "descriptor": config_to_dict(ms.config),
        "window": ms.window,
        "classes": [{"id": c.class_id, "name": c.name, "pixel_count": c.pixel_count,
                     "histogram": _hist_to_dict(c.histogram)} for c in ms.classes],
    }


def modelset_from_dict(d: dict) -> ModelSet:
    cfg = config_from_dict(d["descriptor"])
    classes = []
    for c in d["classes"]:
        h = c["histogram"]
        hist = Histogram(np.array(h["index"], np.int64), np.array(h["weight"], np.float64),
                         int(h["length"]), cfg.layout_id)
        classes.append(ClassModel(int(c["id"]), str(c["name"]), hist, int(c["pixel_count"])))
    return ModelSet(cfg, int(d["window"]), classes)


def save_model(models, path) -> None:
    from .glcm import GlcmModelSet
    if isinstance(models, GlcmModelSet):
        doc = {"format_version": FORMAT_VERSION, "glcm": models.to_dict()}
    else:
        doc = modelset_to_dict(models)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, allow_nan=False)
        fh.write("\n")


def load_model(path):
    """Read a model file; returns a ModelSet or a GlcmModelSet."""
    from .glcm import GlcmModelSet
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt model file: {exc}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFormatError("missing format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model format_version {doc['format_version']!r} "
                                f"(this build reads {FORMAT_VERSION})")
    try:
        if "glcm" in doc:
            return GlcmModelSet.from_dict(doc["glcm"])
        return modelset_from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"invalid model file: {exc}") from exc
