"""Compiled vs pure-Python kernel timings.

Run from the repository root::

    python benchmarks/bench_kernels.py [--repeat 3]

Each kernel is run on both backends with identical inputs; outputs are
checked for equality before timings are reported.
"""
import argparse
import timeit

import numpy as np

from nekhoroshev.kernels import backends
from nekhoroshev.lattice import ModeTable
from nekhoroshev.polyalg import random_polynomial


def cases():
    table = ModeTable(1, 6)
    ids = np.arange(len(table))
    jv, sg, lookup, R = table.box_lookup(ids)
    yield "enumerate_closed 1d K=6 d=5", "enumerate_closed", (jv, sg, lookup, R, 5)
    t2 = ModeTable(2, 2)
    jv2, sg2, lk2, R2 = t2.box_lookup(np.arange(len(t2)))
    yield "enumerate_closed 2d K=2 d=4", "enumerate_closed", (jv2, sg2, lk2, R2, 4)
    P = random_polynomial(table, [3, 4, 5], np.random.default_rng(0))
    idx, deg, coeff = P.packed()
    rng = np.random.default_rng(1)
    u = rng.standard_normal(len(table)) + 1j * rng.standard_normal(len(table))
    yield f"poly_value {len(P)} terms", "poly_value", (idx, deg, coeff, u)
    yield f"poly_gradient {len(P)} terms", "poly_gradient", (idx, deg, coeff, u, None)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    impls = backends()
    if "cython" not in impls:
        print("compiled extension not built; only the Python backend is available")
    print(f"{'case':40s} " + " ".join(f"{n:>12s}" for n in impls) + "   speedup")
    for label, name, call in cases():
        times, outs = {}, {}
        for bname, mod in impls.items():
            fn = getattr(mod, name)

            def go(fn=fn, call=call):
                if name == "poly_gradient":
                    out = np.zeros(call[3].size, dtype=complex)
                    fn(*call[:4], out)
                    return out
                return fn(*call)

            outs[bname] = go()
            times[bname] = min(timeit.repeat(go, number=1, repeat=args.repeat))
        ref = outs["python"]
        for bname, o in outs.items():
            assert np.allclose(np.asarray(o), np.asarray(ref), rtol=1e-12, atol=0), f"{bname} disagrees on {label}"
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:40s} " + " ".join(f"{times[n]*1e3:10.2f}ms" for n in impls) + f"   {speed:6.1f}x")


if __name__ == "__main__":
    main()
