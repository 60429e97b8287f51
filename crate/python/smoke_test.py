"""Smoke test for the `gpa` extension module.

Build first:

    cargo build --release -p gpa-py --features extension-module

then run `python3 python/smoke_test.py`. The script copies the built library
into a temporary directory as `gpa.so` and imports it from there.
"""

import json
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def import_gpa():
    lib = os.path.join(ROOT, "target", "release", "libgpa.so")
    if not os.path.exists(lib):
        sys.exit(f"missing {lib}; build the gpa-py crate first")
    tmp = tempfile.mkdtemp()
    shutil.copy(lib, os.path.join(tmp, "gpa.so"))
    sys.path.insert(0, tmp)
    import gpa

    return gpa


def main():
    gpa = import_gpa()

    k = gpa.Kernel("epanechnikov")
    assert k(0.0) == 0.75 and k(1.5) == 0.0
    assert abs(k.moment(0) - 1.0) < 1e-10
    assert gpa.Kernel("fourth-order").order == 4

    x, y, mu = gpa.simulate("1", 10_000, seed=7)
    assert len(x) == len(y) == len(mu) == 10_000

    h = gpa.optimal_bandwidth("1", 10_000)
    assert abs(h - 0.22827 * 10_000 ** -0.2) < 1e-4, h
    assert gpa.grid_segments(10_000, h) == 61

    one = gpa.Cluster(x, y, machines=1)
    many = gpa.Cluster(x, y, machines=50, seed=7)
    m1, _ = one.fit_gpa(h)
    m50, train = many.fit_gpa(h)
    assert train["values_sent_to_coordinator"] == 50 * 2 * 62
    for a, b in zip(m1.values, m50.values):
        assert abs(a - b) <= 1e-12 * max(1.0, abs(a))

    queries = [(i + 0.5) / 200 for i in range(200)]
    exact = gpa.nw_estimate(x, y, queries, h)
    approx = m50.predict_batch(queries)
    worst = max(abs(a - b) for a, b in zip(exact, approx))
    assert worst < 0.05, worst

    glob, cost = many.predict("global", h, queries)
    assert cost["round_trips"] == len(queries)
    assert max(abs(a - b) for a, b in zip(glob, exact)) < 1e-12

    cubic = m50.with_order(3)
    assert cubic.order == 3 and cubic.predict(0.5) is not None

    doc = json.loads(m50.to_json())
    assert doc["version"] == 1 and doc["J"] == 61
    path = os.path.join(tempfile.mkdtemp(), "model.json")
    m50.save(path)
    again = gpa.GpaModel.load(path)
    assert again.predict_batch(queries) == approx

    h_os = many.select_bandwidth("oneshot")
    h_plt = many.select_bandwidth("pilot", pilot_size=1000, seed=1)
    assert 0.5 * h < h_os < 2 * h, (h_os, h)
    assert 0.3 * h < h_plt < 3 * h, (h_plt, h)
    assert math.isfinite(gpa.cv_score(x[:500], y[:500], 0.1))

    try:
        gpa.Kernel("gaussian")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown kernel accepted")

    print(f"ok: h={h:.5f} J={m50.segments} max|gpa-nw|={worst:.2e} h_os={h_os:.5f} h_plt={h_plt:.5f}")


if __name__ == "__main__":
    main()
