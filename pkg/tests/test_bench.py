import csv
import io

import numpy as np
import pytest

from texclass.bench import (
    CSV_COLUMNS, BenchRow, Condition, PlanError, first_difference, parse_plan, report_csv,
    run_benchmark,
)
from texclass.classify import classify_image_fast
from texclass.raster import LabelMask


def corrupted_fast(raster, models, workers):
    lab = classify_image_fast(raster, models, workers=workers).labels.copy()
    ys, xs = np.nonzero(lab)
    y, x = ys[len(ys) // 2], xs[len(xs) // 2]
    lab[y, x] = lab[y, x] % len(models.classes) + 1
    return LabelMask(lab)


class TestRunBenchmark:
    def test_smoke(self):
        rows = run_benchmark([Condition("WLD", window=9, size=48)], recipe="two_class",
                             check_size=40)
        (r,) = rows
        assert r.equivalent and r.naive_s > 0 and r.fast_s > 0 and r.speedup > 0

    def test_corrupted_fast_path_is_reported(self):
        rows = run_benchmark([Condition("LBPRIU", window=9, size=48)], recipe="two_class",
                             check_size=40, classifiers={"fast": corrupted_fast})
        (r,) = rows
        assert not r.equivalent and r.naive_s is None
        assert r.detail.startswith("first difference at (")

    def test_repeated_condition(self):
        c = Condition("LBP", window=7, size=32)
        rows = run_benchmark([c, c], recipe="two_class", check_size=32)
        assert len(rows) == 2 and rows[0].equivalent == rows[1].equivalent

    def test_needs_three_repetitions(self):
        with pytest.raises(PlanError):
            run_benchmark([Condition("LBP")], repetitions=2)


class TestReport:
    def test_csv_columns_and_format(self):
        rows = [BenchRow(Condition("WLD", ((8, 1), (16, 2.5))), 1, 3, True, 2.0, 0.25),
                BenchRow(Condition("VAR"), 2, 3, False, detail="first difference at (1,2): naive 1, fast 2")]
        table = list(csv.reader(io.StringIO(report_csv(rows))))
        assert tuple(table[0]) == CSV_COLUMNS
        assert table[1] == ["WLD", "8,1;16,2.5", "40", "256", "1", "3", "2.000", "0.250",
                            "8.000", "yes", ""]
        assert table[2][6:10] == ["", "", "", "no"]

    def test_first_difference(self):
        a = LabelMask(np.array([[1, 1], [1, 2]]))
        b = LabelMask(np.array([[1, 1], [2, 1]]))
        assert first_difference(a, b) == (0, 1, 1, 2)
        assert first_difference(a, a) is None


class TestPlan:
    def test_parse(self):
        p = parse_plan('{"conditions": [{"kind": "wld", "scales": [[8, 1], [16, 2]], "window": 20}],'
                       ' "repetitions": 5, "recipe": "two_class"}')
        assert p.conditions == [Condition("WLD", ((8, 1.0), (16, 2.0)), 20, 256)]
        assert p.repetitions == 5 and p.recipe == "two_class"

    @pytest.mark.parametrize("text", ['', '{}', '{"conditions": []}', '{"conditions": [{}]}',
                                      '{"conditions": [{"kind": "SIFT"}]}',
                                      '{"conditions": [{"kind": "LBP", "colour": 1}]}',
                                      '{"conditions": [{"kind": "LBP", "window": "x"}]}'])
    def test_errors(self, text):
        with pytest.raises(PlanError):
            parse_plan(text)
