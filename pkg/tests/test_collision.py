import math

import numpy as np
import pytest

from riskplan.collision import Footprint, detect_collision, overlaps

from oracles import overlap_oracle

MARGIN = 0.05


def test_coincident():
    f = Footprint(1.0, 2.0, 0.3, 4.5, 1.8)
    assert overlaps(f, f)


def test_far_apart():
    assert not overlaps(Footprint(0, 0, 0, 4.5, 1.8), Footprint(100, 0, 1.0, 4.5, 1.8))


def test_corner_touch_counts():
    a = Footprint(0.0, 0.0, 0.0, 2.0, 2.0)
    b = Footprint(2.0, 2.0, 0.0, 2.0, 2.0)
    assert overlaps(a, b)
    assert not overlaps(a, Footprint(2.0 + 1e-6, 2.0, 0.0, 2.0, 2.0))


def test_edge_touch_rotated():
    a = Footprint(0.0, 0.0, 0.0, 2.0, 2.0)
    d = 1.0 + math.sqrt(2.0)  # diamond's vertex touches the square's right edge
    assert overlaps(a, Footprint(d, 0.0, math.pi / 4, 2.0, 2.0))
    assert not overlaps(a, Footprint(d + 1e-6, 0.0, math.pi / 4, 2.0, 2.0))


def test_corners():
    c = Footprint(0.0, 0.0, math.pi / 2, 4.0, 2.0).corners()
    assert np.allclose(sorted(map(tuple, np.round(c, 12))), sorted([(1, 2), (-1, 2), (-1, -2), (1, -2)]))


def test_detect_first_index():
    ego = Footprint(0, 0, 0, 4.5, 1.8)
    others = [Footprint(50, 0, 0, 4.5, 1.8), Footprint(3, 0.5, 0.2, 4.5, 1.8), Footprint(0, 0, 0, 1, 1)]
    assert detect_collision(ego, others) == (True, 1)
    assert detect_collision(ego, others[:1]) == (False, None)


def grown(r, m):
    x, y, h, L, W = r
    return (x, y, h, L + 2 * m, W + 2 * m)


def test_random_pairs_against_point_sampling():
    rng = np.random.default_rng(11)
    checked = agree = 0
    for _ in range(1000):
        a = (0.0, 0.0, rng.uniform(-math.pi, math.pi), rng.uniform(1.0, 5.0), rng.uniform(0.5, 2.5))
        b = (rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(-math.pi, math.pi),
             rng.uniform(1.0, 5.0), rng.uniform(0.5, 2.5))
        # shrunk overlap means a clear hit; no overlap even when grown means a clear miss
        deep = overlap_oracle(grown(a, -MARGIN), grown(b, -MARGIN), step=0.01)
        clear = not overlap_oracle(grown(a, MARGIN), grown(b, MARGIN), step=0.01)
        if not (deep or clear):
            continue
        checked += 1
        agree += overlaps(Footprint(*a), Footprint(*b)) == deep
    assert checked > 900
    assert agree == checked
