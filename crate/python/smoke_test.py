"""Smoke test for the cellrobust_py extension module.

Uses an installed module when available, otherwise the library built by
`cargo build -p cellrobust-py` (release preferred over debug).
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import random
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import cellrobust_py

        return cellrobust_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        for name in ("libcellrobust_py.so", "libcellrobust_py.dylib", "cellrobust_py.dll"):
            path = ROOT / "target" / profile / name
            if path.exists():
                loader = importlib.machinery.ExtensionFileLoader("cellrobust_py", str(path))
                spec = importlib.util.spec_from_file_location("cellrobust_py", str(path), loader=loader)
                module = importlib.util.module_from_spec(spec)
                loader.exec_module(module)
                sys.modules["cellrobust_py"] = module
                return module
    sys.exit("cellrobust_py not found; run `cargo build -p cellrobust-py` first")


def main():
    cr = load()
    rng = random.Random(7)

    p = cr.contamination_probability(0.05, 15)
    assert abs(p - (1 - 0.95**15)) < 1e-12

    x = [[rng.gauss(0, 1) for _ in range(4)] for _ in range(200)]
    for j in range(4):
        x[3 + 40 * j][j] = 12.0
    x[10][2] = None
    flags = cr.detect_cells(x)
    assert all(flags["flags"][3 + 40 * j][j] for j in range(4))
    assert flags["stdres"][10][2] is None

    model = cr.estimate_cov(x, method="twostep")
    assert len(model.mu) == 4 and len(model.sigma) == 4
    assert model.mahalanobis_sq(model.mu) < 1e-12
    fit = model.regress(3)
    assert len(fit["beta"]) == 3

    ident = cr.CovModel([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])
    assert abs(ident.mahalanobis_sq([3.0, 4.0]) - 25.0) < 1e-12

    complete = [[rng.gauss(0, 1) for _ in range(3)] for _ in range(30)]
    m = cr.estimate_location(complete, "coordmedian")
    assert len(m) == 3
    attacked = cr.attack(complete, "location", c=1000.0)
    assert max(attacked["per_column_count"]) <= math.ceil(30 / 3)
    sm = cr.estimate_location([[v for v in row] for row in attacked["contaminated"]["values"]], "spatialmedian")
    assert abs(sum(sm) - 1000.0) < 1e-4

    curve = cr.breakdown_curve(n=20, d=2, value=50.0, reps=3, seed=1, estimators=["mean", "coord_median"])
    assert curve["k"][0] == 0 and len(curve["mean"]) == len(curve["k"])

    y = [0.0] * 400
    for t in range(3, 400):
        y[t] = 0.5 * y[t - 1] + 0.2 * y[t - 2] + 0.2 * y[t - 3] + rng.gauss(0, 1)
    ar = cr.arfit(y, 3)
    assert abs(ar["beta"][0] - 0.5) < 0.2

    counts = [[20, 5, 3], [4, 18, 6], [2, 7, 25], [10, 10, 10]]
    sol = cr.correspondence(counts, k=2)
    inertia = sum(g * g for g in sol["gamma"])
    n = sum(map(sum, counts))
    rows = [sum(r) for r in counts]
    cols = [sum(c) for c in zip(*counts)]
    chi2 = sum((counts[i][j] - rows[i] * cols[j] / n) ** 2 / (rows[i] * cols[j] / n) for i in range(4) for j in range(3))
    assert abs(inertia - chi2 / n) < 1e-9

    try:
        cr.detect_cells([[1.0, 2.0], [3.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("ragged input accepted")

    print("cellrobust_py smoke test passed")


if __name__ == "__main__":
    main()
