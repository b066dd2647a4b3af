#!/usr/bin/env python3
"""Regenerates shapiro_reference.csv.

50 fixed random vectors (10 per sample size) from a mix of distributions,
with the W statistic computed by scipy.stats.shapiro. The CSV is committed;
this script only documents how it was produced.

Format: one line per vector:  name,n,W,v0,v1,...,v{n-1}
"""
import numpy as np
from scipy import stats

SIZES = [10, 50, 100, 500, 2000]

def generators(rng):
    return [
        ("normal", lambda n: rng.normal(0.0, 1.0, n)),
        ("normal_shifted", lambda n: rng.normal(5.0, 0.3, n)),
        ("uniform", lambda n: rng.uniform(-1.0, 1.0, n)),
        ("exponential", lambda n: rng.exponential(1.0, n)),
        ("lognormal", lambda n: rng.lognormal(0.0, 0.5, n)),
        ("bimodal", lambda n: np.concatenate([rng.normal(-1.0, 0.08, n // 2),
                                              rng.normal(1.0, 0.08, n - n // 2)])),
        ("heavy_tail", lambda n: rng.standard_t(3, n)),
        ("spiked", lambda n: np.concatenate([np.full(2 * n // 3, 0.5) + rng.normal(0, 1e-3, 2 * n // 3),
                                             np.full(n - 2 * n // 3, 3.0) + rng.normal(0, 1e-3, n - 2 * n // 3)])),
        ("normal_wide", lambda n: rng.normal(0.0, 25.0, n)),
        ("mixture", lambda n: np.where(rng.uniform(size=n) < 0.8,
                                       rng.normal(0, 1, n), rng.uniform(2, 6, n))),
    ]

def main():
    lines = []
    for size_idx, n in enumerate(SIZES):
        rng = np.random.default_rng(7000 + size_idx)
        for name, gen in generators(rng):
            v = np.asarray(gen(n), dtype=np.float64)
            w = float(stats.shapiro(v).statistic)
            vals = ",".join(repr(float(x)) for x in v)
            lines.append(f"{name}_{n},{n},{w!r},{vals}")
    with open("shapiro_reference.csv", "w") as f:
        f.write("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} vectors")

if __name__ == "__main__":
    main()
