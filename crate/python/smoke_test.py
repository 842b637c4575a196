"""Smoke test for the growcoag_py extension.

Build first with `cargo build -p growcoag-py --release` (or install the crate
with maturin); the script falls back to the cargo artifact when the module is
not importable.
"""

import importlib
import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def load():
    try:
        return importlib.import_module("growcoag_py")
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libgrowcoag_py.so"
        if lib.exists():
            tmp = Path(tempfile.mkdtemp())
            shutil.copy(lib, tmp / "growcoag_py.so")
            sys.path.insert(0, str(tmp))
            return importlib.import_module("growcoag_py")
    sys.exit("growcoag_py not built; run cargo build -p growcoag-py --release")


def main():
    gc = load()

    k = gc.Kernel.smoluchowski()
    assert abs(k(1.0, 1.0) - 4.0) < 1e-12
    assert abs(k.sup_truncated(2) - (2 ** (-1 / 3) + 2 ** (1 / 3)) ** 2) < 1e-12
    ok, worst = k.verify_envelope()
    assert ok and worst <= 1.0

    g = gc.Growth.linear(0.5, 0.6)
    y, jac = g.flow(1.0, 0.0, 2.0)
    assert abs(y - 2.0 * math.exp(0.5)) < 1e-8 and abs(jac - math.exp(0.5)) < 1e-8

    grid = gc.Grid(1e-4, 1e2, 256)
    c0 = gc.Density.exponential(grid)
    assert len(c0.values) == grid.cells

    const = gc.Kernel.constant(1.0, 0.3)
    assert abs(gc.window_length(const, 50, 1.0) - 1 / 14) < 1e-14
    run = gc.simulate(const, gc.Growth.zero(), c0, n=50, t_final=0.5)
    m1 = run.moment_series("m1")
    assert abs(m1[-1] - m1[0]) < 1e-6 * m1[0]
    assert run.moment_series("m0")[-1] < run.moment_series("m0")[0]
    assert run.max_contraction_ratio <= 0.55
    assert run.outputs[-1].time == 0.5

    try:
        gc.Grid(1.0, 0.5, 10)
    except ValueError:
        pass
    else:
        raise AssertionError("bad grid accepted")

    print(f"smoke test ok: {run.windows} windows, M0(0.5) = {run.moment_series('m0')[-1]:.6f}")


if __name__ == "__main__":
    main()
