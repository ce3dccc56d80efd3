"""Smoke test for the compiled extension: python python/smoke_test.py"""
import math

import bayestensor as bt

truth, design = bt.generate([4, 4, 4], 2, 50, noise_sigma=0.1, seed=7)
assert truth.rank == 2 and truth.dims == [4, 4, 4]
assert len(design) == 50 and design.kind == "element_indicator"

post = bt.fit(design, sigma=0.1, d_max=4, radius=10.0, n_samples=200, seed=1)
assert post.n_kept == 200
assert sum(post.rank_histogram.values()) == 200
mean = post.mean
assert mean.dims == [4, 4, 4]

acc = bt.evaluate(mean, truth.compose(), design, 2)
assert math.isclose(acc["scaled_in"], acc["in_sample"] * 64 / (2 * 12), rel_tol=1e-12)
assert math.sqrt(acc["in_sample"]) < 0.5, acc

a = bt.tail_integral(1.0, 1.0, 2)
assert abs(a - 2 / math.e) < 1e-12

b1, b2 = bt.chi2_tail_bounds(5, 5.0)
assert abs(b2 - 1.0) < 1e-12 and 0 < b1 <= 1

bounds = bt.theorem_bounds([10, 10, 10], 1000, 4, 30.0, 2.0, radius=10.0)
assert bounds["t1"] > 0 and bounds["t3"] is not None

try:
    bt.fit(design, xi=1.5)
except ValueError:
    pass
else:
    raise AssertionError("xi outside (0, 1) must be rejected")

print("python smoke test ok:", {k: round(v, 4) for k, v in acc.items()}, "rank mode", post.rank_mode)
