import numpy as np
import pytest

from bifseg.errors import DataError
from bifseg.geodesic import geodesic_distance, scribble_uncertainty
from bifseg.grid import Grid2D, LabelMap, ScribbleSet

from oracles import chamfer_oracle, dijkstra_oracle


class TestGeodesicDistance:
    def test_seed_pixel_zero(self, rng):
        img = Grid2D(rng.uniform(0, 1, (8, 8)))
        d = geodesic_distance(img, {(3, 4)})
        assert d.values[4, 3] == 0.0
        assert np.isfinite(d.values).all()

    def test_constant_image_is_chamfer(self):
        img = Grid2D(np.full((12, 15), 0.3, dtype=np.float32))
        d = geodesic_distance(img, {(2, 9), (14, 0)})
        want = chamfer_oracle((12, 15), {(2, 9), (14, 0)})
        assert np.abs(d.values - want).max() < 4e-15

    def test_matches_dijkstra_oracle(self, rng):
        for _ in range(5):
            img = rng.uniform(0, 1, (10, 10))
            seeds = {(int(rng.integers(10)), int(rng.integers(10))) for _ in range(3)}
            d = geodesic_distance(Grid2D(img), seeds).values
            want = dijkstra_oracle(img, seeds)
            assert np.abs(d - want).max() < 1e-6

    def test_empty_seeds(self, rng):
        with pytest.raises(DataError, match="no seeds"):
            geodesic_distance(Grid2D(rng.uniform(0, 1, (4, 4))), set())

    def test_seed_outside(self, rng):
        with pytest.raises(DataError):
            geodesic_distance(Grid2D(rng.uniform(0, 1, (4, 4))), {(4, 0)})

    def test_triangle_property_along_paths(self, rng):
        # any explicit path costs at least the reported distance
        img = rng.uniform(0, 1, (9, 9))
        d = geodesic_distance(Grid2D(img), {(0, 0)}).values
        a = (img - img.min()) / (img.max() - img.min())
        path = [(0, 0), (1, 1), (1, 2), (2, 3), (3, 3), (4, 4)]
        cost = 0.0
        for (x0, y0), (x1, y1) in zip(path, path[1:]):
            spatial = abs(x1 - x0) + abs(y1 - y0)
            cost += np.sqrt(float(spatial) + (a[y1, x1] - a[y0, x0]) ** 2)
            assert d[y1, x1] <= cost + 1e-12

    def test_monotone_in_seeds(self, rng):
        img = Grid2D(rng.uniform(0, 1, (10, 10)))
        d1 = geodesic_distance(img, {(1, 1)}).values
        d2 = geodesic_distance(img, {(1, 1), (8, 8)}).values
        assert (d2 <= d1 + 1e-12).all()

    def test_gamma_irrelevant_on_constant(self):
        img = Grid2D(np.full((7, 7), 0.9, dtype=np.float32))
        d1 = geodesic_distance(img, {(3, 3)}, gamma=1.0).values
        d2 = geodesic_distance(img, {(3, 3)}, gamma=2.0).values
        assert np.array_equal(d1, d2)


class TestScribbleUncertainty:
    def test_empty_scribbles(self, rng):
        lab = LabelMap(rng.integers(0, 2, (6, 6)).astype(np.uint8))
        img = Grid2D(rng.uniform(0, 1, (6, 6)))
        assert scribble_uncertainty(lab, ScribbleSet(), img, 0.2) == frozenset()

    def test_flat_region_definition(self):
        # foreground scribble on a background-labeled flat region: nearby
        # background pixels within epsilon are uncertain, scribbles excluded
        img = Grid2D(np.full((5, 5), 0.5, dtype=np.float32))
        lab = LabelMap(np.zeros((5, 5), dtype=np.uint8))
        scr = ScribbleSet(frozenset({(2, 2)}), frozenset())
        out = scribble_uncertainty(lab, scr, img, epsilon=1.5)
        # within chamfer distance < 1.5 of (2,2): the 4-neighbors (dist 1)
        # and diagonals (dist sqrt(2)), excluding the scribble itself
        want = {(1, 2), (3, 2), (2, 1), (2, 3), (1, 1), (1, 3), (3, 1), (3, 3)}
        assert out == frozenset(want)

    def test_correctly_labeled_pixels_excluded(self):
        img = Grid2D(np.full((5, 5), 0.5, dtype=np.float32))
        lab = LabelMap(np.ones((5, 5), dtype=np.uint8))  # all foreground
        scr = ScribbleSet(frozenset({(2, 2)}), frozenset())
        assert scribble_uncertainty(lab, scr, img, epsilon=2.0) == frozenset()

    def test_set_comprehension_oracle(self, rng):
        for _ in range(5):
            img = rng.uniform(0, 1, (8, 8))
            lab = rng.integers(0, 2, (8, 8)).astype(np.uint8)
            fg = {(int(rng.integers(8)), int(rng.integers(8)))}
            bg = set()
            while not bg:
                c = (int(rng.integers(8)), int(rng.integers(8)))
                if c not in fg:
                    bg.add(c)
            eps = float(rng.uniform(0.5, 3.0))
            scr = ScribbleSet(frozenset(fg), frozenset(bg))
            got = scribble_uncertainty(LabelMap(lab), scr, Grid2D(img), eps)
            gf = dijkstra_oracle(img, fg)
            gb = dijkstra_oracle(img, bg)
            s = fg | bg
            want = {(x, y) for y in range(8) for x in range(8)
                    if (x, y) not in s and gf[y, x] < eps and lab[y, x] == 0}
            want |= {(x, y) for y in range(8) for x in range(8)
                     if (x, y) not in s and gb[y, x] < eps and lab[y, x] == 1}
            assert got == frozenset(want)

    def test_never_contains_scribbles(self, rng):
        img = Grid2D(np.full((6, 6), 0.2, dtype=np.float32))
        lab = LabelMap(np.zeros((6, 6), dtype=np.uint8))
        scr = ScribbleSet(frozenset({(1, 1), (2, 1)}), frozenset({(4, 4)}))
        out = scribble_uncertainty(lab, scr, img, epsilon=10.0)
        assert not (out & scr.pixels)

    def test_bad_epsilon(self, rng):
        img = Grid2D(rng.uniform(0, 1, (4, 4)))
        lab = LabelMap(np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(DataError):
            scribble_uncertainty(lab, ScribbleSet(frozenset({(0, 0)}), frozenset()),
                                 img, epsilon=0.0)
