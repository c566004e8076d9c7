"""Timing harness for the naive and cached classifiers.

Every condition is first checked for bit-exact agreement on a central crop;
only then are both paths timed on the full image. Times are medians of
``repetitions`` runs of the classification call alone, measured with the
monotonic performance counter.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .classify import ModelSet, classify_image_fast, classify_image_naive, train_models
from .descriptors import KINDS, DescriptorConfig
from .raster import LabelMask, Raster, Rect, crop
from .synth import build_corpus, load_recipe, render_recipe

CSV_COLUMNS = ("kind", "scales", "window", "size", "workers", "repetitions",
               "naive_s", "fast_s", "speedup", "equivalent", "detail")


class PlanError(ValueError):
    """Malformed benchmark plan."""


@dataclass(frozen=True)
class Condition:
    kind: str
    scales: tuple[tuple[int, float], ...] = ((8, 1),)
    window: int = 40
    size: int = 256

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlanError(f"unknown descriptor kind {self.kind!r}")
        if self.window < 1 or self.size < 1:
            raise PlanError("window and size must be positive")

    @property
    def scale_text(self) -> str:
        return ";".join(f"{p},{r:g}" for p, r in self.scales)


@dataclass
class BenchRow:
    condition: Condition
    workers: int
    repetitions: int
    equivalent: bool
    naive_s: float | None = None
    fast_s: float | None = None
    detail: str = ""

    @property
    def speedup(self) -> float | None:
        if self.naive_s is None or not self.fast_s:
            return None
        return self.naive_s / self.fast_s


@dataclass
class BenchPlan:
    conditions: list[Condition]
    repetitions: int = 3
    workers: int = 1
    recipe: str = "five_class"
    seed: int | None = None
    check_size: int = 96


Classifier = Callable[[Raster, ModelSet, int], LabelMask]


def _naive(raster, models, workers):
    return classify_image_naive(raster, models, workers=workers)


def _fast(raster, models, workers):
    return classify_image_fast(raster, models, workers=workers)


def first_difference(a: LabelMask, b: LabelMask) -> tuple[int, int, int, int] | None:
    """(x, y, label_a, label_b) of the first differing pixel in row-major order."""
    diff = np.flatnonzero(a.labels != b.labels)
    if diff.size == 0:
        return None
    y, x = divmod(int(diff[0]), a.width)
    return x, y, int(a.labels[y, x]), int(b.labels[y, x])


def _median_time(fn: Classifier, raster: Raster, models: ModelSet, workers: int,
                 repetitions: int) -> float:
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn(raster, models, workers)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _central(raster: Raster, side: int) -> tuple[Raster, Rect]:
    w, h = min(side, raster.width), min(side, raster.height)
    r = Rect((raster.width - w) // 2, (raster.height - h) // 2, w, h)
    return crop(raster, r), r


def run_benchmark(conditions: Sequence[Condition], repetitions: int = 3, workers: int = 1,
                  recipe: str | dict = "five_class", seed: int | None = None,
                  check_size: int = 96,
                  classifiers: dict[str, Classifier] | None = None,
                  progress: Callable[[str], None] | None = None) -> list[BenchRow]:
    """Time naive vs fast classification for each condition.

    Models are trained on the recipe's standard-size corpus; the timed image
    is the same recipe rendered at the condition's size. ``classifiers`` may
    replace the ``"naive"`` or ``"fast"`` callables (used to test the
    harness itself).
    """
    if repetitions < 3:
        raise PlanError("at least 3 repetitions are needed for a median")
    fns = {"naive": _naive, "fast": _fast}
    fns.update(classifiers or {})
    rec = load_recipe(recipe) if isinstance(recipe, str) else recipe
    train = build_corpus(rec, seed)
    rows = []
    for cond in conditions:
        config = DescriptorConfig(cond.kind, cond.scales)
        models = train_models(train.raster, train.training, config, cond.window, train.names)
        image = render_recipe(rec, seed, cond.size)[0]
        sub, where = _central(image, check_size)
        a = fns["naive"](sub, models, workers)
        b = fns["fast"](sub, models, workers)
        diff = first_difference(a, b)
        if diff is not None:
            x, y, la, lb = diff
            rows.append(BenchRow(cond, workers, repetitions, False,
                                 detail=f"first difference at ({where.x + x},{where.y + y}): "
                                        f"naive {la}, fast {lb}"))
            continue
        naive_s = _median_time(fns["naive"], image, models, workers, repetitions)
        fast_s = _median_time(fns["fast"], image, models, workers, repetitions)
        rows.append(BenchRow(cond, workers, repetitions, True, naive_s, fast_s))
        if progress:
            progress(f"{cond.kind} {cond.scale_text} W={cond.window} {cond.size}px: "
                     f"naive {naive_s:.3f}s fast {fast_s:.3f}s")
    return rows


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.3f}"


def report_csv(rows: Sequence[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        c = r.condition
        w.writerow([c.kind, c.scale_text, c.window, c.size, r.workers, r.repetitions,
                    _fmt(r.naive_s), _fmt(r.fast_s), _fmt(r.speedup),
                    "yes" if r.equivalent else "no", r.detail])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# plan files
# ---------------------------------------------------------------------------


def _condition(d: dict) -> Condition:
    if not isinstance(d, dict) or "kind" not in d:
        raise PlanError("each condition needs at least a 'kind'")
    unknown = set(d) - {"kind", "scales", "window", "size"}
    if unknown:
        raise PlanError(f"unknown condition keys {sorted(unknown)}")
    try:
        scales = tuple((int(p), float(r)) for p, r in d.get("scales", [[8, 1]]))
        return Condition(str(d["kind"]).upper(), scales, int(d.get("window", 40)),
                         int(d.get("size", 256)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PlanError):
            raise
        raise PlanError(f"bad condition {d}: {exc}") from None


def parse_plan(text: str) -> BenchPlan:
    """Parse a JSON plan: ``{"conditions": [...], "repetitions": 3, ...}``."""
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlanError(f"plan is not valid JSON: {exc}") from None
    if not isinstance(d, dict) or not isinstance(d.get("conditions"), list) \
            or not d["conditions"]:
        raise PlanError("plan needs a non-empty 'conditions' list")
    try:
        return BenchPlan(
            conditions=[_condition(c) for c in d["conditions"]],
            repetitions=int(d.get("repetitions", 3)),
            workers=int(d.get("workers", 1)),
            recipe=d.get("recipe", "five_class"),
            seed=None if d.get("seed") is None else int(d["seed"]),
            check_size=int(d.get("check_size", 96)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PlanError):
            raise
        raise PlanError(f"bad plan value: {exc}") from None


def load_plan(path) -> BenchPlan:
    with open(path) as fh:
        return parse_plan(fh.read())


def run_plan(plan: BenchPlan, progress=None) -> list[BenchRow]:
    return run_benchmark(plan.conditions, plan.repetitions, plan.workers, plan.recipe,
                         plan.seed, plan.check_size, progress=progress)
