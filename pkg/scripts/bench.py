"""Block timings (SFBlock vs. dense baseline) and spectral-branch scaling with successive ratios."""
import argparse

from specxnet.complexity import bench_table, compare_blocks, spectral_scaling
from specxnet.config import PRESETS

p = argparse.ArgumentParser()
p.add_argument("--preset", default="desk", choices=sorted(PRESETS))
p.add_argument("--repeats", type=int, default=20)
args = p.parse_args()

print(bench_table(compare_blocks(PRESETS[args.preset](), args.repeats)))
scaling = spectral_scaling(repeats=args.repeats)
print(bench_table(scaling))
for a, b in zip(scaling, scaling[1:]):
    print(f"t({b.shape[-1]})/t({a.shape[-1]}) = {b.median_ns / a.median_ns:.2f}")
