"""Smoke test for the swirl_rings_py extension.

Build first with `cargo build -p swirl-rings-py --release`, then run
`python3 python/smoke_test.py`. The script copies the shared library next to a
temporary module path so no install step is needed.
"""

import importlib
import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libswirl_rings_py.so"
        if lib.exists():
            tmp = Path(tempfile.mkdtemp())
            shutil.copy(lib, tmp / "swirl_rings_py.so")
            sys.path.insert(0, str(tmp))
            return importlib.import_module("swirl_rings_py")
    sys.exit("libswirl_rings_py.so not found; run `cargo build -p swirl-rings-py --release`")


def check(name, cond, detail=""):
    print(f"{'ok  ' if cond else 'FAIL'} {name} {detail}")
    return cond


def main():
    m = load_module()
    results = []

    g_quad = m.ring_green(1.0, 0.0, 1.2, 0.3)
    g_ell = m.ring_green(1.0, 0.0, 1.2, 0.3, backend="elliptic")
    results.append(check("kernel backends agree", abs(g_quad - g_ell) < 1e-10 * g_ell, f"{g_quad:.12e}"))
    results.append(check("sigma symmetric", m.sigma(1.0, 0.0, 1.2, 0.3) == m.sigma(1.2, 0.3, 1.0, 0.0)))

    w = 1.0 / (2.0 * math.pi)
    pred = m.predict("whole_space", w)
    results.append(check("whole-space r* = 1/(4 pi W)", abs(pred["r_star"] - 0.5) < 1e-12, f"{pred['r_star']}"))

    fit = m.fit_log_slope([(b, 3.0 * math.log(1.0 / b) + 1.0) for b in (1e-1, 1e-2, 1e-3)])
    results.append(check("log fit exact on a line", abs(fit[0] - 3.0) < 1e-12 and abs(fit[1] - 1.0) < 1e-12))

    ring = m.solve("whole_space", 2e-2, w)
    rec = ring.record()
    results.append(check("solve converges", ring.converged, repr(ring)))
    results.append(check("unit circulation", abs(ring.circulation - 1.0) < 1e-6))
    results.append(check("record has centroid", rec.get("X_r") is not None and rec["domain"] == "whole_space"))
    zeta = ring.zeta()
    results.append(check("field shape", len(zeta) == len(ring.r) and len(zeta[0]) == len(ring.z)))

    try:
        m.solve("whole_space", 1.5, w)
        results.append(check("invalid beta rejected", False))
    except m.SwirlRingsError as e:
        results.append(check("invalid beta rejected", "(0,1)" in str(e), str(e)))

    sys.exit(0 if all(results) else 1)


if __name__ == "__main__":
    main()
