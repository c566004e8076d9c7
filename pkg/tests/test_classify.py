import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from texclass.classify import (
    FORMAT_VERSION, ClassModel, ModelFormatError, ModelSet, ModelVersionError, bhattacharyya,
    build_class_model, classify_image, classify_image_fast, classify_image_naive, classify_pixel,
    load_model, save_model, train_models,
)
from texclass.descriptors import (
    MULTI_SCALE, DescriptorConfig, Histogram, LayoutMismatchError, bin_count, code_plane,
)
from texclass.raster import LabelMask, Raster, RasterError, Rect, crop
from texclass.synth import build_corpus, load_recipe


def hist(bins):
    return Histogram.from_dense(np.asarray(bins, float))


def model_set(histograms, length=None):
    cfg = DescriptorConfig("LBPRIU")
    n = length or bin_count(cfg)
    classes = []
    for k, h in enumerate(histograms, 1):
        dense = np.zeros(n)
        dense[:len(h)] = h
        classes.append(ClassModel(k, f"c{k}", hist(dense / dense.sum()), 100))
    return ModelSet(cfg, 5, classes)


@pytest.fixture(scope="module")
def two_texture():
    """Checkerboard on the left, blurred noise on the right, 96x96."""
    c = build_corpus(load_recipe("two_class"), 31)
    return crop(c.raster, Rect(80, 80, 96, 96)), c


class TestTraining:
    def test_flat_area_is_a_delta(self):
        r = Raster(np.full((20, 20), 77))
        m = build_class_model(r, [Rect(2, 2, 10, 10)], DescriptorConfig("LBPRIU"), 1)
        assert m.histogram.index.tolist() == [8] and m.histogram.weight.tolist() == [1.0]
        assert m.pixel_count == 100

    def test_two_constant_code_areas(self):
        img = np.full((20, 30), 50)
        img[:, 15:] = np.arange(15, 30)          # horizontal ramp: riu2 code 5
        r = Raster(img)
        m = build_class_model(r, [Rect(2, 2, 8, 8), Rect(18, 2, 8, 8)], DescriptorConfig("LBPRIU"), 1)
        assert dict(zip(m.histogram.index.tolist(), m.histogram.weight.tolist())) == {5: 0.5, 8: 0.5}

    def test_pooling_matches_recount(self):
        rng = np.random.default_rng(1)
        r = Raster(rng.integers(0, 256, (40, 40)))
        rects = [Rect(0, 0, 12, 9), Rect(20, 15, 10, 20), Rect(5, 30, 30, 10)]
        for kind, scales in [("WLD", ((16, 2),)), ("LBPRIU", MULTI_SCALE)]:
            cfg = DescriptorConfig(kind, scales)
            got = build_class_model(r, rects, cfg, 1).histogram.bins
            b = cfg.border
            parts = []
            for P, R in scales:
                plane = code_plane(r, kind, P, R).codes
                counts = np.zeros(bin_count(DescriptorConfig(kind, ((P, R),))))
                for rect in rects:
                    for y in range(rect.y, rect.y + rect.h):
                        for x in range(rect.x, rect.x + rect.w):
                            if b <= x < 40 - b and b <= y < 40 - b:
                                counts[plane[y, x]] += 1
                parts.append(counts / counts.sum() / len(scales))
            assert np.allclose(got, np.concatenate(parts), rtol=0, atol=1e-15)

    def test_errors(self):
        r = Raster(np.zeros((20, 20)))
        cfg = DescriptorConfig("WLD", ((16, 2),))
        with pytest.raises(ValueError):
            build_class_model(r, [], cfg, 1)
        with pytest.raises(RasterError):
            build_class_model(r, [Rect(15, 15, 10, 10)], cfg, 1)
        with pytest.raises(RasterError):
            build_class_model(r, [Rect(5, 5, 4, 4)], cfg, 1)

    def test_var_boundaries_learned(self, two_texture):
        _, c = two_texture
        ms = train_models(c.raster, c.training, DescriptorConfig("WLD_VAR", ((8, 1), (16, 2))), 9)
        assert len(ms.var_boundaries) == 2
        assert all(len(b) <= 15 for b in ms.var_boundaries)
        assert ms.classes[0].histogram.length == 2 * (960 + 16)

    def test_mask_training_equals_rects(self, two_texture):
        _, c = two_texture
        labels = np.zeros(c.mask.labels.shape, np.uint8)
        for k, r in c.training:
            labels[r.slices()] = k
        cfg = DescriptorConfig("LBPRIU", ((8, 1),))
        assert train_models(c.raster, LabelMask(labels), cfg, 9) == \
            train_models(c.raster, c.training, cfg, 9)

    def test_class_ids_must_be_contiguous(self):
        r = Raster(np.zeros((20, 20)))
        with pytest.raises(ValueError):
            train_models(r, {1: [Rect(0, 0, 5, 5)], 3: [Rect(8, 8, 5, 5)]}, DescriptorConfig("LBP"))


class TestDistance:
    def test_examples(self):
        assert bhattacharyya([0.3, 0.7], [0.3, 0.7]) == 0
        assert abs(bhattacharyya([1, 0], [0, 1]) - 27.631021115928547) < 1e-12
        assert abs(bhattacharyya([1, 0], [0.5, 0.5]) - 0.34657) < 1e-5

    def test_length_mismatch(self):
        with pytest.raises(LayoutMismatchError):
            bhattacharyya([1, 0], [1, 0, 0])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=40))
    def test_symmetric_nonnegative_and_oracle(self, pairs):
        a = np.array([p[0] for p in pairs])
        b = np.array([p[1] for p in pairs])
        if a.sum() == 0 or b.sum() == 0:
            return
        a, b = a / a.sum(), b / b.sum()
        d = bhattacharyya(a, b)
        assert d == bhattacharyya(b, a)
        assert d >= 0 and bhattacharyya(a, a) <= 1e-12
        assert abs(d - oracles.bhattacharyya(a.tolist(), b.tolist())) < 1e-9

    def test_classify_pixel_exact_match(self):
        ms = model_set([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
        k, d = classify_pixel(ms.classes[1].histogram, ms)
        assert (k, d) == (2, 0.0)

    def test_tie_goes_to_lower_id(self):
        ms = model_set([[1, 0, 0], [0, 0, 1]])
        assert classify_pixel(hist([0.5, 0, 0.5] + [0] * 7), ms)[0] == 1

    def test_random_against_exhaustive_scan(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            models = rng.random((5, 10)) * (rng.random((5, 10)) < 0.6)
            models[:, 0] += 1e-3
            ms = model_set(models)
            h = rng.random(10)
            h /= h.sum()
            dists = [oracles.bhattacharyya(h.tolist(), (m / m.sum()).tolist()) for m in models]
            k, d = classify_pixel(hist(h), ms)
            assert k == int(np.argmin(dists)) + 1
            assert abs(d - min(dists)) < 1e-9

    def test_count_scaling_does_not_change_decisions(self):
        rng = np.random.default_rng(8)
        counts = rng.integers(0, 20, (4, 10)) + 1
        h = hist(rng.random(10))
        assert classify_pixel(h.normalized(), model_set(counts)) == \
            classify_pixel(h.normalized(), model_set(counts * 7))

    def test_layout_mismatch(self):
        with pytest.raises(LayoutMismatchError):
            classify_pixel(hist([1.0, 0.0]), model_set([[1, 0]]))


class TestImageClassification:
    def test_flat_image(self):
        r = Raster(np.full((30, 30), 90))
        ms = train_models(r, {1: [Rect(5, 5, 10, 10)]}, DescriptorConfig("WLD"), 7)
        for out in (classify_image_naive(r, ms), classify_image_fast(r, ms)):
            lab = out.labels
            assert np.all(lab[4:-4, 4:-4] == 1)
            assert np.all(lab[:4] == 0) and np.all(lab[:, -4:] == 0)

    def test_even_window_margins(self):
        r = Raster(np.full((30, 30), 90))
        ms = train_models(r, {1: [Rect(5, 5, 10, 10)]}, DescriptorConfig("LBP", ((16, 2),)), 8)
        lab = classify_image_fast(r, ms).labels
        # border 2, three pixels before the centre and four after
        rows = np.flatnonzero(lab[:, 15])
        assert (rows[0], rows[-1]) == (5, 30 - 2 - 4 - 1)

    def test_two_texture_mosaic(self, two_texture):
        sub, c = two_texture
        ms = train_models(c.raster, c.training, DescriptorConfig("WLD"), 15)
        out = classify_image_fast(sub, ms).labels
        # the seam is at x = 128 in the corpus, 48 in the crop; stay W away from it
        assert np.all(out[20:76, 8:33] == 1)
        assert np.all(out[20:76, 63:88] == 2)

    @pytest.mark.parametrize("kind", ["LBP", "LBPRIU", "VAR", "WLD", "LBPRIU_VAR", "WLD_VAR"])
    def test_naive_equals_fast(self, two_texture, kind):
        sub, c = two_texture
        ms = train_models(c.raster, c.training, DescriptorConfig(kind, ((8, 1), (16, 2))), 12)
        small = crop(sub, Rect(20, 20, 56, 56))
        a = classify_image_naive(small, ms)
        assert a == classify_image_fast(small, ms, workers=1)
        assert a == classify_image_fast(small, ms, workers=3)
        assert a == classify_image_naive(small, ms, workers=2)

    def test_deterministic(self, two_texture):
        sub, c = two_texture
        ms = train_models(c.raster, c.training, DescriptorConfig("LBPRIU"), 11)
        assert classify_image_fast(sub, ms) == classify_image_fast(sub, ms)

    def test_too_small(self):
        r = Raster(np.full((30, 30), 90))
        ms = train_models(r, {1: [Rect(5, 5, 10, 10)]}, DescriptorConfig("WLD"), 29)
        with pytest.raises(RasterError):
            classify_image_fast(Raster(np.zeros((20, 20))), ms)
        with pytest.raises(RasterError):
            classify_image_naive(Raster(np.zeros((20, 20))), ms)

    def test_monotonic_remap_of_whole_pipeline(self, two_texture):
        sub, c = two_texture
        cfg = DescriptorConfig("LBPRIU", ((8, 1),))
        remap = np.sort(np.random.default_rng(2).choice(1000, 256, replace=False))
        assert np.all(np.diff(remap) > 0)
        train_r = Raster(remap[c.raster.pixels], 16)
        test_r = Raster(remap[sub.pixels], 16)
        a = classify_image_fast(sub, train_models(c.raster, c.training, cfg, 11))
        b = classify_image_fast(test_r, train_models(train_r, c.training, cfg, 11))
        assert a == b

    def test_dispatch(self, two_texture):
        sub, c = two_texture
        ms = train_models(c.raster, c.training, DescriptorConfig("LBPRIU"), 11)
        small = crop(sub, Rect(30, 30, 30, 30))
        assert classify_image(small, ms, naive=True) == classify_image(small, ms)


class TestModelFile:
    @pytest.mark.parametrize("kind", ["LBP", "WLD_VAR", "LBPRIU_VAR"])
    def test_round_trip(self, tmp_path, two_texture, kind):
        _, c = two_texture
        ms = train_models(c.raster, c.training, DescriptorConfig(kind, ((8, 1), (16, 2.5))), 13,
                          names={1: "checker", 2: "smooth"})
        save_model(ms, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        assert back == ms
        for a, b in zip(back.classes, ms.classes):
            assert a.histogram.weight.tobytes() == b.histogram.weight.tobytes()

    def test_unknown_version(self, tmp_path, two_texture):
        _, c = two_texture
        save_model(train_models(c.raster, c.training, DescriptorConfig("LBP"), 9), tmp_path / "m.json")
        doc = json.loads((tmp_path / "m.json").read_text())
        doc["format_version"] = FORMAT_VERSION + 1
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.raises(ModelVersionError):
            load_model(tmp_path / "m.json")

    def test_inconsistent_length(self, tmp_path, two_texture):
        _, c = two_texture
        save_model(train_models(c.raster, c.training, DescriptorConfig("LBPRIU"), 9), tmp_path / "m.json")
        doc = json.loads((tmp_path / "m.json").read_text())
        doc["classes"][0]["histogram"]["length"] = 11
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / "m.json")

    def test_corrupt(self, tmp_path):
        (tmp_path / "m.json").write_text("{not json")
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / "m.json")
        (tmp_path / "m.json").write_text("[]")
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / "m.json")

    def test_model_set_validation(self):
        h = hist([1.0] + [0.0] * 9)
        with pytest.raises(ValueError):
            ModelSet(DescriptorConfig("LBPRIU"), 5, [ClassModel(2, "x", h, 1)])
        with pytest.raises(LayoutMismatchError):
            ModelSet(DescriptorConfig("LBPRIU", ((16, 2),)), 5, [ClassModel(1, "x", h, 1)])
        with pytest.raises(ValueError):
            ClassModel(1, "x", h, 0)
        with pytest.raises(ValueError):
            ModelSet(DescriptorConfig("VAR"), 5, [])
