"""Compare the compiled GMP kernel with the pure-Python kernel.

Kernel operations are timed in process against both classes directly. The
end-to-end sweep rows run in a subprocess per backend, since the backend is
chosen once at import.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--rows 200]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit
from fractions import Fraction as F

from plrenorm._kernel import BACKEND, PyKMap

try:
    from plrenorm._kernel._ckernel import KMap as CKMap
except ImportError:
    CKMap = None

TWO_CORNER = ([F(0), F(2, 5), F(3, 5), F(1)], [F(0), F(37, 40), F(9, 10), F(0)])

ROW_SCRIPT = """
import json, sys, time
from fractions import Fraction as F
from plrenorm._kernel import BACKEND
from plrenorm.cli import sweep_row
n = int(sys.argv[1])
tasks = [((str(a), str(b)), [F(0), F(2, 5), F(3, 5), F(1)], [F(0), a, b, F(0)], "expansion", {"max_q": 12})
         for a in (F(9, 10) + F(k, 400) for k in range(20))
         for b in (F(1401, 1600) + F(k, 400) for k in range(max(1, n // 20)))]
t0 = time.perf_counter()
for t in tasks:
    sweep_row(t)
print(json.dumps({"backend": BACKEND, "rows": len(tasks), "seconds": time.perf_counter() - t0}))
"""


def kernel_cases(K):
    tent = K([F(0), F(1, 2), F(1)], [F(0), F(19, 32), F(0)])
    two = K(*TWO_CORNER)

    def iterate(k, n):
        g = k
        for _ in range(n - 1):
            g = k.compose(g, k.lo, k.hi, 10 ** 6)
        return g

    g12 = iterate(tent, 12)
    return {
        "compose tent^12": lambda: iterate(tent, 12),
        "compose twocorner^8": lambda: iterate(two, 8),
        "fixed points of tent^12": g12.fixed_points,
        "evaluate x1000": lambda: [two.evaluate(F(k, 1001)) for k in range(1000)],
        "hull cycle q=3": lambda: two.hull_cycle([0, 1, 2], [F(2, 5), F(3, 5)], 3, 64),
    }


def best(fn, repeat, number=1):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def rows_in(pure, n):
    env = {k: v for k, v in os.environ.items() if k != "PLRENORM_PURE_PYTHON"}
    if pure:
        env["PLRENORM_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", ROW_SCRIPT, str(n)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--rows", type=int, default=200, help="sweep rows per backend")
    args = ap.parse_args()
    if CKMap is None:
        print("compiled kernel not built; only the Python kernel is available")
    backends = [("python", PyKMap)] + ([("gmp", CKMap)] if CKMap else [])
    results = {name: {k: best(fn, args.repeat) for k, fn in kernel_cases(K).items()}
               for name, K in backends}
    print(f"{'operation':28s}" + "".join(f"{n:>12s}" for n, _ in backends) + "     speedup")
    for op in results["python"]:
        ts = [results[n][op] for n, _ in backends]
        speed = f"{ts[0] / ts[1]:10.1f}x" if len(ts) > 1 else ""
        print(f"{op:28s}" + "".join(f"{t * 1e3:10.2f}ms" for t in ts) + speed)
    py = rows_in(True, args.rows)
    line = f"{'sweep rows (' + str(py['rows']) + ')':28s}{py['seconds']:11.2f}s"
    if CKMap:
        c = rows_in(False, args.rows)
        line += f"{c['seconds']:11.2f}s{py['seconds'] / c['seconds']:10.1f}x"
    print(line)
    print(f"default backend: {BACKEND}")


if __name__ == "__main__":
    main()
