"""Gradient check of every component, with timing; exits non-zero on failure."""
import sys
import time

from specxnet.gradcheck import run_suite

t0 = time.perf_counter()
reports = run_suite("all", seed=int(sys.argv[1]) if len(sys.argv) > 1 else 0)
ok = True
for name, r in reports.items():
    ok &= r.passed()
    print(f"{name:8s} {r.max_rel_error:.2e}  worst={r.worst_param}  coords={r.n_coords}  kinks={r.n_kinks}")
print(f"total {time.perf_counter() - t0:.1f}s")
sys.exit(0 if ok else 1)
