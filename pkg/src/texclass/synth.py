"""Deterministic synthetic texture mosaics with ground truth.

Random fields draw from PCG64 (the 128-bit LCG with the XSL-RR output
function) seeded through numpy's SeedSequence; uniforms are built from the
raw 64-bit outputs and normals by Box-Muller, so a corpus depends only on
the recipe and the seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .raster import LabelMask, Raster, Rect

GENERATORS = ("grating", "noise", "checkerboard", "ramp")


class MosaicLayoutError(ValueError):
    pass


class RecipeError(ValueError):
    pass


class Stream:
    """Uniform and normal variates from raw PCG64 output."""

    def __init__(self, *seed: int):
        self._bits = np.random.PCG64(np.random.SeedSequence([int(s) & (2**64 - 1) for s in seed]))

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(n).astype(np.uint64)

    def uniform(self, n: int) -> np.ndarray:
        """Doubles in (0, 1]."""
        return ((self.raw(n) >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53

    def normal(self, n: int) -> np.ndarray:
        m = (n + 1) // 2
        u1, u2 = self.uniform(m), self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return z[:n]


@dataclass
class TextureSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    inner: "TextureSpec | None" = None

    def __post_init__(self):
        if self.kind not in GENERATORS:
            raise RecipeError(f"unknown texture generator {self.kind!r}")
        if self.kind == "ramp" and self.inner is None:
            raise RecipeError("ramp wrapper needs an inner texture")

    @classmethod
    def from_dict(cls, d: dict) -> "TextureSpec":
        d = dict(d)
        kind = d.pop("kind")
        seed = int(d.pop("seed", 0))
        inner = d.pop("inner", None)
        return cls(kind, d, seed, cls.from_dict(inner) if inner else None)


def _field(spec: TextureSpec, h: int, w: int, stream: Stream) -> np.ndarray:
    p = spec.params
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    if spec.kind == "grating":
        theta = math.radians(p.get("orientation", 0.0))
        phase = p.get("phase", 0.0)
        f = p["frequency"]
        v = p["mean"] + p["amplitude"] * np.sin(
            2 * np.pi * f * (x * math.cos(theta) + y * math.sin(theta)) + phase)
    elif spec.kind == "checkerboard":
        cell = int(p["cell"])
        a, b = p["levels"]
        v = np.where(((x // cell) + (y // cell)) % 2 == 0, float(a), float(b))
    elif spec.kind == "noise":
        z = stream.normal(h * w).reshape(h, w)
        blur = int(p.get("blur", 0))
        if blur:
            z = uniform_filter(z, size=2 * blur + 1, mode="wrap")
            z = (z - z.mean()) / z.std()
        return p["mean"] + p["stddev"] * z
    else:
        inner = _field(spec.inner, h, w, stream)
        lo, hi = p["gain"]
        return inner * _gain_row(w, lo, hi)[None, :]
    sd = p.get("noise", 0.0)
    if sd:
        v = v + sd * stream.normal(h * w).reshape(h, w)
    return v


def _gain_row(width: int, lo: float, hi: float) -> np.ndarray:
    if width == 1:
        return np.array([float(lo)])
    return lo + (hi - lo) * np.arange(width) / (width - 1)


def _to_depth(v: np.ndarray, depth: int) -> np.ndarray:
    return np.clip(np.rint(v), 0, (1 << depth) - 1)


def render(spec: TextureSpec, h: int, w: int, depth: int = 8, *seed: int) -> np.ndarray:
    return _to_depth(_field(spec, h, w, Stream(spec.seed, *seed)), depth)


def generate_mosaic(specs: list[TextureSpec], tiles: list[tuple[Rect, int]],
                    size: tuple[int, int], depth: int = 8, seed: int = 0
                    ) -> tuple[Raster, LabelMask]:
    """Fill each tile with its texture; the mask holds 1-based texture indices.

    ``tiles`` pairs a rectangle with a 0-based index into ``specs``; together
    they must partition the ``(height, width)`` raster exactly.
    """
    height, width = size
    cover = np.zeros((height, width), np.int64)
    img = np.zeros((height, width))
    labels = np.zeros((height, width), np.uint8)
    for t, (r, k) in enumerate(tiles):
        if not r.inside(width, height):
            raise MosaicLayoutError(f"tile {r} leaves the {width}x{height} raster")
        if not 0 <= k < len(specs):
            raise MosaicLayoutError(f"tile {r} references unknown texture {k}")
        cover[r.slices()] += 1
        img[r.slices()] = render(specs[k], r.h, r.w, depth, seed, t)
        labels[r.slices()] = k + 1
    if np.any(cover > 1):
        raise MosaicLayoutError("tiles overlap")
    if np.any(cover == 0):
        raise MosaicLayoutError("tiles leave a gap")
    return Raster(img, depth), LabelMask(labels)


def apply_illumination_ramp(raster: Raster, gain_low: float, gain_high: float) -> Raster:
    """Scale column x by a gain interpolated linearly from left to right.

    Results are rounded half-to-even and clipped to the raster depth.
    """
    if gain_low <= 0 or gain_high <= 0:
        raise ValueError("gains must be positive")
    g = _gain_row(raster.width, gain_low, gain_high)
    return Raster(_to_depth(raster.pixels * g[None, :], raster.depth), raster.depth)


# ---------------------------------------------------------------------------
# recipes
# ---------------------------------------------------------------------------


@dataclass
class Corpus:
    raster: Raster
    mask: LabelMask
    training: list[tuple[int, Rect]]
    names: dict[int, str]


def recipe_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("texclass.recipes").iterdir()
                  if p.name.endswith(".json"))


def load_recipe(name_or_path) -> dict:
    path = Path(name_or_path)
    try:
        if path.suffix == ".json" or path.exists():
            text = path.read_text()
        else:
            text = resources.files("texclass.recipes").joinpath(f"{name_or_path}.json").read_text()
    except (FileNotFoundError, OSError):
        raise RecipeError(f"no such recipe: {name_or_path}") from None
    try:
        recipe = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RecipeError(f"corrupt recipe: {exc}") from None
    for key in ("classes", "grid"):
        if key not in recipe:
            raise RecipeError(f"recipe lacks {key!r}")
    return recipe


def grid_tiles(grid: list[list[int]], height: int, width: int) -> list[tuple[Rect, int]]:
    """Rows split the height evenly; each row splits the width evenly and
    merges runs of equal class ids into one tile."""
    tiles = []
    ys = np.linspace(0, height, len(grid) + 1).round().astype(int)
    for r, row in enumerate(grid):
        xs = np.linspace(0, width, len(row) + 1).round().astype(int)
        c = 0
        while c < len(row):
            e = c
            while e + 1 < len(row) and row[e + 1] == row[c]:
                e += 1
            tiles.append((Rect(int(xs[c]), int(ys[r]), int(xs[e + 1] - xs[c]),
                               int(ys[r + 1] - ys[r])), int(row[c]) - 1))
            c = e + 1
    return tiles


def training_rects(tiles: list[tuple[Rect, int]], nclasses: int, side: int,
                   per_class: int = 4) -> list[tuple[int, Rect]]:
    """Squares laid out on a regular grid inside each class's largest tile."""
    out = []
    for k in range(nclasses):
        mine = [r for r, t in tiles if t == k]
        if not mine:
            raise RecipeError(f"class {k + 1} has no tile")
        tile = max(mine, key=lambda r: r.w * r.h)
        cols = math.ceil(math.sqrt(per_class))
        rows = math.ceil(per_class / cols)
        if tile.w < cols * side or tile.h < rows * side:
            raise RecipeError(f"tile {tile} too small for {per_class} {side}px training areas")
        for n in range(per_class):
            i, j = divmod(n, cols)
            cx = tile.x + tile.w * (2 * j + 1) // (2 * cols)
            cy = tile.y + tile.h * (2 * i + 1) // (2 * rows)
            x = min(max(cx - side // 2, tile.x), tile.x + tile.w - side)
            y = min(max(cy - side // 2, tile.y), tile.y + tile.h - side)
            out.append((k + 1, Rect(x, y, side, side)))
    return out


def render_recipe(recipe: dict, seed: int | None = None, size: int | None = None
                  ) -> tuple[Raster, LabelMask, list[tuple[Rect, int]]]:
    """Mosaic, ground truth and tile layout of a recipe (no training areas)."""
    if seed is None:
        seed = recipe.get("seeds", [0])[0]
    height, width = (size, size) if size else tuple(recipe.get("size", (512, 512)))
    depth = int(recipe.get("depth", 8))
    specs = [TextureSpec.from_dict(c["texture"]) for c in recipe["classes"]]
    tiles = grid_tiles(recipe["grid"], height, width)
    raster, mask = generate_mosaic(specs, tiles, (height, width), depth, seed)
    if "ramp" in recipe:
        raster = apply_illumination_ramp(raster, *recipe["ramp"])
    return raster, mask, tiles


def build_corpus(recipe: dict, seed: int | None = None, size: int | None = None) -> Corpus:
    raster, mask, tiles = render_recipe(recipe, seed, size)
    classes = recipe["classes"]
    tr = recipe.get("training", {})
    rects = training_rects(tiles, len(classes), int(tr.get("size", 30)), int(tr.get("per_class", 4)))
    names = {k + 1: c.get("name", f"class{k + 1}") for k, c in enumerate(classes)}
    return Corpus(raster, mask, rects, names)
