"""Accuracy at alpha in {0, 0.5} as the artifact amplitude shrinks; probes where the task stops being trivial.

Each amplitude gets its own small dataset; the output is one CSV row per (amp, alpha).
"""
import argparse
from pathlib import Path

from specxnet.config import TrainConfig, ablation_config
from specxnet.data import ArtifactSpec, DatasetManifest, generate_dataset
from specxnet.train import ablate_alpha

p = argparse.ArgumentParser()
p.add_argument("--out", default="runs/amp_sweep")
p.add_argument("--amps", default="0.15,0.03,0.015,0.01")
p.add_argument("--epochs", type=int, default=15)
p.add_argument("--per-class", type=int, default=500)
p.add_argument("--seed", type=int, default=7)
args = p.parse_args()

print("amp,alpha,accuracy")
for amp in (float(a) for a in args.amps.split(",")):
    d = Path(args.out) / f"amp_{amp:g}"
    if not (d / "manifest.csv").is_file():
        generate_dataset(args.per_class, ArtifactSpec("grid", 12, amp), args.seed, d, fractions=(0.8, 0.0, 0.2))
    for alpha, acc in ablate_alpha(ablation_config(seed=args.seed),
                                   TrainConfig(epochs=args.epochs, horizon=args.epochs, seed=args.seed),
                                   DatasetManifest.load(d / "manifest.csv"), [0.0, 0.5]):
        print(f"{amp:g},{alpha:g},{acc:.4f}", flush=True)
