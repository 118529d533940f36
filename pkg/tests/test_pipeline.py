import numpy as np
import pytest

from bifseg.errors import DataError, ScribbleConflictError
from bifseg.graphcut import EnergyConfig, label_update
from bifseg.grid import BoundingBox, Grid2D, LabelMap, ScribbleSet
from bifseg.model import init_model
from bifseg.pipeline import (RefineConfig, build_weight_map, final_labels,
                             init_segment, network_uncertainty, refine,
                             session_diagnostics)

from conftest import TINY_CONFIG


def quick_config(**kw):
    base = dict(outer_iters=2, inner_iters=4, energy=EnergyConfig(lam=1.0, sigma=0.3))
    base.update(kw)
    return RefineConfig(**base)


def make_image(rng, h=20, w=24):
    return Grid2D(rng.uniform(0, 1, (h, w)).astype(np.float32))


class TestInitSegment:
    def test_zero_head_all_background(self, rng):
        model = init_model(TINY_CONFIG, seed=0)
        model.norm_stats = (0.5, 0.25)
        sess = init_segment(model, make_image(rng), BoundingBox(2, 3, 14, 12))
        assert not sess.labels.labels.any()  # p == 0.5 ties to background
        assert sess.history[0]["phase"] == "initial"

    def test_whole_image_box(self, tiny_model, rng):
        img = make_image(rng, 10, 12)
        sess = init_segment(tiny_model, img, BoundingBox(0, 0, 11, 9))
        assert sess.crop_size == (12, 10)
        # min side 8 -> crop resized to 8x10 grid (h=8, w rounds from 12*0.8)
        assert sess.crop.height == 8

    def test_box_outside_image(self, tiny_model, rng):
        with pytest.raises(DataError, match="outside"):
            init_segment(tiny_model, make_image(rng), BoundingBox(0, 0, 30, 5))

    def test_degenerate_box(self, tiny_model, rng):
        with pytest.raises(DataError, match="degenerate"):
            init_segment(tiny_model, make_image(rng), BoundingBox(3, 3, 3, 3))

    def test_probability_consistent_with_labels(self, tiny_model, rng):
        sess = init_segment(tiny_model, make_image(rng), BoundingBox(1, 1, 16, 14))
        assert np.array_equal(sess.labels.labels, (sess.prob.plane() > 0.5).astype(np.uint8))


class TestNetworkUncertainty:
    def test_half_probability_all_uncertain(self):
        p = Grid2D(np.full((4, 5), 0.5))
        got = network_uncertainty(p, RefineConfig())
        assert got == frozenset((x, y) for y in range(4) for x in range(5))

    def test_boundaries_excluded(self):
        cfg = RefineConfig()
        assert network_uncertainty(Grid2D(np.full((3, 3), 0.7)), cfg) == frozenset()
        assert network_uncertainty(Grid2D(np.full((3, 3), 0.2)), cfg) == frozenset()
        assert network_uncertainty(Grid2D(np.zeros((3, 3))), cfg) == frozenset()

    def test_set_comprehension_oracle(self, rng):
        p = rng.uniform(0, 1, (7, 9))
        cfg = RefineConfig(t0=0.3, t1=0.6)
        got = network_uncertainty(Grid2D(p), cfg)
        p32 = p.astype(np.float32)
        want = {(x, y) for y in range(7) for x in range(9) if 0.3 < p32[y, x] < 0.6}
        assert got == frozenset(want)


class TestWeightMap:
    def test_precedence(self):
        cfg = RefineConfig(omega=5.0)
        scr = ScribbleSet(frozenset({(1, 1)}), frozenset({(2, 2)}))
        u_p = {(1, 1), (0, 0)}
        u_s = {(2, 2), (3, 0)}
        wm = build_weight_map(scr, u_p, u_s, cfg, (4, 4)).plane()
        assert wm[1, 1] == 5.0 and wm[2, 2] == 5.0  # scribbles beat uncertainty
        assert wm[0, 0] == 0.0 and wm[0, 3] == 0.0
        assert wm[3, 3] == 1.0

    def test_paper_defaults(self):
        wm = build_weight_map(ScribbleSet(frozenset({(0, 0)}), frozenset()),
                              set(), set(), RefineConfig(), (2, 2)).plane()
        assert wm[0, 0] == 5.0


class TestRefine:
    def test_degenerate_schedule_is_pure_graphcut(self, tiny_model, rng):
        sess = init_segment(tiny_model, make_image(rng), BoundingBox(0, 0, 17, 15))
        p0 = sess.prob
        crop = sess.crop
        cfg = quick_config(outer_iters=1, inner_iters=0)
        refine(sess, ScribbleSet(), cfg)
        want = label_update(p0, crop, ScribbleSet(), cfg.energy)
        assert np.array_equal(sess.labels.labels, want.labels)
        assert np.array_equal(sess.prob.data, p0.data)  # head untouched

    def test_unit_weight_ablation_matches_manual_path(self, tiny_model, rng):
        # BIFSeg(-w) is the same code path with w(i) = 1 forced everywhere
        from bifseg.model import apply_head_step, backprop_head, head_forward
        img = make_image(rng)
        box = BoundingBox(0, 0, 19, 17)
        cfg = quick_config(unit_weights=True, outer_iters=1, inner_iters=3)

        sess = init_segment(tiny_model, img, box)
        manual_head = sess.head.copy()
        labels = label_update(sess.prob, sess.crop, ScribbleSet(), cfg.energy)
        ones = np.ones((sess.crop.height, sess.crop.width))
        for _ in range(3):
            g = backprop_head(sess.cache, labels, ones, manual_head)
            apply_head_step(manual_head, g, cfg.finetune_lr)
        want = head_forward(manual_head, sess.cache)

        refine(sess, ScribbleSet(), cfg)
        assert np.array_equal(sess.labels.labels, labels.labels)
        assert np.array_equal(sess.prob.data, want.data)

    def test_weighted_and_unit_paths_agree_when_trivial(self, tiny_model, rng):
        # omega=1 and empty uncertainty sets make both paths identical;
        # an unattainable (t0, t1) band guarantees U_p is empty
        img = make_image(rng)
        box = BoundingBox(0, 0, 19, 17)
        base = init_segment(tiny_model, img, box)
        cfg_w = quick_config(outer_iters=1, inner_iters=2, omega=1.0,
                             t0=0.0, t1=1e-300)
        a = base.clone()
        refine(a, ScribbleSet(), cfg_w)
        cfg_u = quick_config(outer_iters=1, inner_iters=2, unit_weights=True)
        b = base.clone()
        refine(b, ScribbleSet(), cfg_u)
        assert np.array_equal(a.prob.data, b.prob.data)
        assert np.array_equal(a.labels.labels, b.labels.labels)

    def test_scribbles_respected_after_every_update(self, tiny_model, rng):
        img = make_image(rng)
        sess = init_segment(tiny_model, img, BoundingBox(1, 1, 18, 16))
        w, h = sess.crop.width, sess.crop.height
        scr = ScribbleSet(frozenset({(1, 1), (2, 1)}), frozenset({(w - 2, h - 2)}))
        refine(sess, scr, quick_config(outer_iters=3, inner_iters=2))
        assert sess.labels.labels[1, 1] == 1
        assert sess.labels.labels[1, 2] == 1
        assert sess.labels.labels[h - 2, w - 2] == 0

    def test_scribble_conflict_names_pixels(self, tiny_model, rng):
        sess = init_segment(tiny_model, make_image(rng), BoundingBox(0, 0, 15, 15))
        refine(sess, ScribbleSet(frozenset({(2, 2)}), frozenset()),
               quick_config(outer_iters=1, inner_iters=0))
        with pytest.raises(ScribbleConflictError, match=r"\(2, 2\)"):
            refine(sess, ScribbleSet(frozenset(), frozenset({(2, 2)})),
                   quick_config(outer_iters=1, inner_iters=0))

    def test_scribbles_accumulate(self, tiny_model, rng):
        sess = init_segment(tiny_model, make_image(rng), BoundingBox(0, 0, 15, 15))
        cfg = quick_config(outer_iters=1, inner_iters=0)
        refine(sess, ScribbleSet(frozenset({(0, 0)}), frozenset()), cfg)
        refine(sess, ScribbleSet(frozenset(), frozenset({(3, 3)})), cfg)
        assert sess.scribbles.pixels == {(0, 0), (3, 3)}
        assert sess.labels.labels[0, 0] == 1 and sess.labels.labels[3, 3] == 0

    def test_fixed_head_label_updates_idempotent(self, tiny_model, rng):
        sess = init_segment(tiny_model, make_image(rng), BoundingBox(0, 0, 17, 13))
        cfg = quick_config(outer_iters=1, inner_iters=0)
        refine(sess, ScribbleSet(), cfg)
        first = sess.labels.labels.copy()
        refine(sess, ScribbleSet(), cfg)
        assert np.array_equal(sess.labels.labels, first)

    def test_loss_decreases_within_network_update(self, tiny_model, rng):
        sess = init_segment(tiny_model, make_image(rng), BoundingBox(0, 0, 19, 17))
        refine(sess, ScribbleSet(), quick_config(outer_iters=2, inner_iters=10))
        for entry in sess.history[1:]:
            assert entry["loss_end"] < entry["loss_start"]

    def test_determinism(self, tiny_model, rng):
        img = make_image(rng)
        box = BoundingBox(0, 0, 19, 17)
        outs = []
        for _ in range(2):
            sess = init_segment(tiny_model, img, box)
            scr = ScribbleSet(frozenset({(2, 3)}), frozenset({(8, 7)}))
            refine(sess, scr, quick_config())
            outs.append(final_labels(sess).labels)
        assert np.array_equal(outs[0], outs[1])

    def test_reset_head_restores_trained_head(self, tiny_model, rng):
        img = make_image(rng)
        box = BoundingBox(0, 0, 19, 17)
        base = init_segment(tiny_model, img, box)
        a = base.clone()
        refine(a, ScribbleSet(), quick_config(outer_iters=1, inner_iters=5))
        drifted = a.head.weight.copy()
        refine(a, ScribbleSet(), quick_config(outer_iters=1, inner_iters=0, reset_head=True))
        assert np.array_equal(a.head.weight, base.head.weight)
        assert not np.array_equal(drifted, base.head.weight)

    def test_snapshots_grow_per_outer_iter(self, tiny_model, rng):
        sess = init_segment(tiny_model, make_image(rng), BoundingBox(0, 0, 15, 15))
        refine(sess, ScribbleSet(), quick_config(outer_iters=3, inner_iters=1))
        assert len(sess.snapshots) == 4  # initial + 3 outer iterations


class TestFinalLabels:
    def test_all_background(self, rng):
        model = init_model(TINY_CONFIG, seed=0)
        model.norm_stats = (0.5, 0.25)
        sess = init_segment(model, make_image(rng), BoundingBox(2, 2, 12, 12))
        out = final_labels(sess)
        assert out.width == 24 and out.height == 20 and not out.labels.any()

    def test_full_image_box_passthrough(self, tiny_model, rng):
        img = make_image(rng, 8, 8)  # min_side 8: no resizing
        sess = init_segment(tiny_model, img, BoundingBox(0, 0, 7, 7))
        out = final_labels(sess)
        assert np.array_equal(out.labels, sess.labels.labels)

    def test_offset_box_translates_foreground(self, tiny_model, rng):
        img = make_image(rng, 16, 16)
        box = BoundingBox(5, 3, 12, 10)  # 8x8 box: no resizing at min_side 8
        sess = init_segment(tiny_model, img, box)
        # plant a deterministic pattern and verify the paste coordinates
        pattern = np.zeros((8, 8), dtype=np.uint8)
        pattern[2, 4] = 1
        pattern[7, 0] = 1
        sess.labels = LabelMap(pattern)
        out = final_labels(sess).labels
        ys, xs = np.nonzero(out)
        assert set(zip(xs.tolist(), ys.tolist())) == {(5 + 4, 3 + 2), (5 + 0, 3 + 7)}

    def test_diagnostics_shape(self, tiny_model, rng):
        import json
        sess = init_segment(tiny_model, make_image(rng), BoundingBox(0, 0, 15, 15))
        refine(sess, ScribbleSet(), quick_config(outer_iters=2, inner_iters=1))
        diag = session_diagnostics(sess)
        assert len([h for h in diag["history"] if h["phase"] == "refine"]) == 2
        json.dumps(diag)  # JSON-serializable
