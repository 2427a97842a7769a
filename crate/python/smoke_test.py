"""Smoke test for the acdcplf extension module.

Build and install first:
    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml
"""

import math
import tempfile

import acdcplf

CASE = "bundled:three-terminal#s1"


def main():
    sol = acdcplf.solve(CASE)
    assert sol["iterations"] <= 20 and sol["max_mismatch"] < 1e-8
    assert abs(sol["vm"][1] - 1.05) < 1e-12
    assert all(0.85 < v < 1.1 for v in sol["vm"].values())

    cm = acdcplf.cumulant_plf(CASE, monitor=["U_ac[28]", "U_dc"])
    u = cm["U_ac[28]"]
    assert u["class"] == "U" and u["std"] > 0
    assert abs(u["mean"] - u["cumulants"][0]) < 1e-15
    assert abs(math.sqrt(u["cumulants"][1]) - u["std"]) < 1e-12
    assert abs(u["cdf"][-1] - 1.0) < 1e-3

    mc = acdcplf.monte_carlo(CASE, samples=2000, seed=1, monitor=["U_ac[28]"])
    m = mc["U_ac[28]"]
    assert abs(m["mean"] - u["mean"]) / m["mean"] < 0.02
    assert abs(m["std"] - u["std"]) / m["std"] < 0.1

    with tempfile.TemporaryDirectory() as out:
        files = acdcplf.run(CASE, method="cm", out=out)
        assert any(f.endswith("cm_summary.csv") for f in files)

    try:
        acdcplf.solve("bundled:three-terminal#missing")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown scenario accepted")

    print(f"ok: U_ac[28] mean {u['mean']:.5f} std {u['std']:.5f} (MCS {m['mean']:.5f} / {m['std']:.5f})")


if __name__ == "__main__":
    main()
