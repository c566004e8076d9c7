"""Grey level co-occurrence matrix baseline classifier.

Each pixel gets the Haralick statistics of the symmetric GLCMs of its
``window x window`` neighbourhood, averaged over the 0/45/90/135 degree
offsets, one block per distance. Features are z-scored with training
statistics and assigned to the nearest class mean (Euclidean).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import _kernels as K
from .descriptors import default_workers, run_bands
from .raster import LabelMask, Raster, RasterError, Rect

STATS = ("entropy", "energy", "homogeneity", "dissimilarity", "variance", "shade",
         "correlation", "contrast")

# (dx, dy) unit steps for 0, 45, 90, 135 degrees; image y points down
ANGLES = ((1, 0), (1, -1), (0, -1), (-1, -1))


class GlcmConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GlcmConfig:
    window: int = 7
    levels: int = 32
    distances: tuple = (1, 2, 3)
    stats: tuple = STATS

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise GlcmConfigError("GLCM window must be odd and at least 3")
        if self.levels < 2:
            raise GlcmConfigError("need at least 2 grey levels")
        d = tuple(int(x) for x in self.distances)
        if not d or min(d) < 1 or max(d) >= self.window:
            raise GlcmConfigError("distances must be in [1, window)")
        object.__setattr__(self, "distances", d)
        s = tuple(self.stats)
        unknown = set(s) - set(STATS)
        if unknown or not s:
            raise GlcmConfigError(f"unknown statistics {sorted(unknown)}")
        object.__setattr__(self, "stats", s)

    @property
    def dim(self) -> int:
        return len(self.stats) * len(self.distances)


def quantize(pixels: np.ndarray, depth: int, levels: int) -> np.ndarray:
    """Uniform binning of the full ``depth``-bit range into ``levels`` bins."""
    return (np.asarray(pixels, np.int64) * levels) >> depth


def glcm_matrix(window: np.ndarray, offset: tuple[int, int], levels: int) -> np.ndarray:
    """Normalized symmetric co-occurrence matrix of an already-quantized window."""
    q = np.asarray(window, np.int64)
    dx, dy = offset
    h, w = q.shape
    if abs(dx) >= w or abs(dy) >= h:
        raise ValueError(f"offset {offset} does not fit in a {w}x{h} window")
    if q.min() < 0 or q.max() >= levels:
        raise ValueError("window values outside [0, levels)")
    ys, ye = max(0, -dy), min(h, h - dy)
    xs, xe = max(0, -dx), min(w, w - dx)
    a = q[ys:ye, xs:xe].ravel()
    b = q[ys + dy:ye + dy, xs + dx:xe + dx].ravel()
    m = np.zeros((levels, levels))
    np.add.at(m, (a, b), 1)
    np.add.at(m, (b, a), 1)
    return m / m.sum()


def glcm_features(matrix: np.ndarray) -> dict[str, float]:
    p = np.asarray(matrix, np.float64)
    g = p.shape[0]
    i, j = np.indices((g, g))
    px, py = p.sum(axis=1), p.sum(axis=0)
    lv = np.arange(g)
    mx, my = (lv * px).sum(), (lv * py).sum()
    sx = np.sqrt(((lv - mx) ** 2 * px).sum())
    sy = np.sqrt(((lv - my) ** 2 * py).sum())
    nz = p > 0
    corr = 0.0
    if sx > 0 and sy > 0:
        corr = float(((i - mx) * (j - my) * p).sum() / (sx * sy))
    return {
        "entropy": float(-(p[nz] * np.log(p[nz])).sum()),
        "energy": float((p ** 2).sum()),
        "homogeneity": float((p / (1.0 + (i - j) ** 2)).sum()),
        "dissimilarity": float((np.abs(i - j) * p).sum()),
        "variance": float(((i - mx) ** 2 * p).sum()),
        "shade": float(((i + j - mx - my) ** 3 * p).sum()),
        "correlation": corr,
        "contrast": float(((i - j) ** 2 * p).sum()),
    }


def feature_image(raster: Raster, config: GlcmConfig, workers: int | None = 1) -> np.ndarray:
    """Per-pixel feature vectors (H x W x dim); NaN where the window does not fit."""
    half = config.window // 2
    if raster.width < config.window or raster.height < config.window:
        raise RasterError(f"raster smaller than the {config.window}x{config.window} window")
    q = np.ascontiguousarray(quantize(raster.pixels, raster.depth, config.levels))
    out = np.full((raster.height, raster.width, config.dim), np.nan)
    dists = np.array(config.distances, np.int64)
    stat_idx = np.array([STATS.index(s) for s in config.stats], np.int64)
    run_bands(lambda y0, y1: K.glcm_feature_rows(q, y0, y1, half, config.levels, dists,
                                                 stat_idx, out), raster.height, workers)
    return out


@dataclass
class GlcmClassModel:
    class_id: int
    name: str
    mean: np.ndarray
    pixel_count: int


@dataclass
class GlcmModelSet:
    config: GlcmConfig
    depth: int
    feature_mean: np.ndarray
    feature_std: np.ndarray
    classes: list[GlcmClassModel] = field(default_factory=list)

    def __post_init__(self):
        ids = [c.class_id for c in self.classes]
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError(f"class ids must be 1..K in order, got {ids}")
        for arr in [self.feature_mean, self.feature_std] + [c.mean for c in self.classes]:
            if np.shape(arr) != (self.config.dim,):
                raise ValueError("feature vector length does not match the GLCM config")

    def to_dict(self) -> dict:
        return {
            "window": self.config.window,
            "levels": self.config.levels,
            "distances": list(self.config.distances),
            "stats": list(self.config.stats),
            "depth": self.depth,
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
            "classes": [{"id": c.class_id, "name": c.name, "pixel_count": c.pixel_count,
                         "mean": c.mean.tolist()} for c in self.classes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GlcmModelSet":
        cfg = GlcmConfig(int(d["window"]), int(d["levels"]), tuple(d["distances"]),
                         tuple(d["stats"]))
        classes = [GlcmClassModel(int(c["id"]), str(c["name"]), np.array(c["mean"], float),
                                  int(c["pixel_count"])) for c in d["classes"]]
        return cls(cfg, int(d["depth"]), np.array(d["feature_mean"], float),
                   np.array(d["feature_std"], float), classes)

    def __eq__(self, other):
        if not isinstance(other, GlcmModelSet):
            return NotImplemented
        return (self.config == other.config and self.depth == other.depth
                and np.array_equal(self.feature_mean, other.feature_mean)
                and np.array_equal(self.feature_std, other.feature_std)
                and len(self.classes) == len(other.classes)
                and all(a.class_id == b.class_id and a.name == b.name
                        and a.pixel_count == b.pixel_count and np.array_equal(a.mean, b.mean)
                        for a, b in zip(self.classes, other.classes)))


def glcm_train(raster: Raster, training: Mapping[int, list[Rect]], config: GlcmConfig,
               names: Mapping[int, str] | None = None, workers: int | None = 1) -> GlcmModelSet:
    feats = feature_image(raster, config, workers)
    ids = sorted(training)
    if ids != list(range(1, len(ids) + 1)):
        raise ValueError(f"class ids must be contiguous from 1, got {ids}")
    per_class = []
    for k in ids:
        rows = []
        for r in training[k]:
            if not r.inside(raster.width, raster.height):
                raise RasterError(f"training rect {r} outside the raster")
            f = feats[r.slices()].reshape(-1, config.dim)
            rows.append(f[~np.isnan(f).any(axis=1)])
        f = np.concatenate(rows)
        if f.size == 0:
            raise ValueError(f"class {k}: no usable training pixels")
        per_class.append(f)
    pooled = np.concatenate(per_class)
    mean = pooled.mean(axis=0)
    std = pooled.std(axis=0)
    std[std == 0] = 1.0
    names = names or {}
    classes = [GlcmClassModel(k, names.get(k, f"class{k}"), ((f - mean) / std).mean(axis=0),
                              len(f)) for k, f in zip(ids, per_class)]
    return GlcmModelSet(config, raster.depth, mean, std, classes)


def glcm_classify(raster: Raster, models: GlcmModelSet, config: GlcmConfig | None = None,
                  workers: int | None = None) -> LabelMask:
    """Nearest z-scored class mean; pixels whose window leaves the raster stay 0."""
    if config is not None and config != models.config:
        raise GlcmConfigError("requested GLCM configuration differs from the model's")
    if raster.depth != models.depth:
        raise GlcmConfigError(f"model trained on {models.depth}-bit data, "
                              f"raster is {raster.depth}-bit")
    workers = workers or default_workers()
    feats = feature_image(raster, models.config, workers)
    valid = ~np.isnan(feats).any(axis=2)
    centers = np.array([c.mean for c in models.classes])
    out = np.zeros(valid.shape, np.uint8)
    run_bands(lambda y0, y1: K.nearest_mean_rows(feats, valid, y0, y1, models.feature_mean,
                                                 models.feature_std, centers, out),
              raster.height, workers)
    return LabelMask(out)
