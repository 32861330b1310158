"""AM4: value-preserving downsampling sized by the canvas.

A line chart cannot show more than its pixel columns; per column, the
rows attaining min/max of x and y bound every drawn pixel. AM4 finds them
in one grouped pass with arg_min/arg_max; M4, the two-pass reference,
aggregates then joins back. Same points, one scan fewer.
"""

import random
import time

from dashql import Am4Params, am4_native, m4_oracle

rng = random.Random(1)
N = 500_000
xs = [rng.uniform(0, 1000) for _ in range(N)]
ys = [rng.gauss(0, 25) for _ in range(N)]

# canvas 1000 px wide at a device pixel ratio of 2
params = Am4Params(width=2000, lb=0.0, ub=1000.0)

t0 = time.perf_counter()
reduced = am4_native(xs, ys, params)
t1 = time.perf_counter()
reference = m4_oracle(xs, ys, params)
t2 = time.perf_counter()

print(f"input rows:     {N}")
print(f"am4 output:     {reduced.row_count} rows in {(t1 - t0) * 1000:.1f} ms")
print(f"m4  output:     {reference.row_count} rows in {(t2 - t1) * 1000:.1f} ms")
print(f"bound:          4 * (width + 1) = {4 * (params.width + 1)}")

am4_points = set(zip(reduced.column("x"), reduced.column("y")))
m4_points = set(zip(reference.column("x"), reference.column("y")))
print(f"am4 subset of m4: {am4_points <= m4_points}")

# The constant-series hazard: min(y) == max(y) for every bin, yet AM4
# emits at most two points per bin instead of the whole input.
flat = am4_native([float(i) for i in range(100_000)], [42.0] * 100_000,
                  Am4Params(width=20, lb=0.0, ub=99_999.0))
print(f"constant series f(x)=42 over 100k rows -> {flat.row_count} points")
