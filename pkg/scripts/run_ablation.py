"""Alpha sweep on the grid-artifact dataset: generate (if needed), train one model per alpha, print a table.

    python3 scripts/run_ablation.py --out runs/ablation --alphas 0,0.25,0.5,0.75
"""
import argparse
import logging
from pathlib import Path

from specxnet.config import TrainConfig, ablation_config
from specxnet.data import ArtifactSpec, DatasetManifest, generate_dataset
from specxnet.train import ablate_alpha

p = argparse.ArgumentParser()
p.add_argument("--out", default="runs/ablation")
p.add_argument("--alphas", default="0,0.25,0.5,0.75")
p.add_argument("--epochs", type=int, default=30)
p.add_argument("--seed", type=int, default=7)
p.add_argument("--amp", type=float, default=0.15)
p.add_argument("--freq", type=int, default=12)
p.add_argument("--train-per-class", type=int, default=1000)
p.add_argument("--test-per-class", type=int, default=200)
args = p.parse_args()
logging.basicConfig(level=logging.INFO, format="%(message)s")

out = Path(args.out)
data = out / "data"
if not (data / "manifest.csv").is_file():
    n = args.train_per_class + args.test_per_class
    generate_dataset(n, ArtifactSpec("grid", args.freq, args.amp), args.seed, data,
                     split_counts=(args.train_per_class, 0, args.test_per_class))
rows = ablate_alpha(ablation_config(seed=args.seed), TrainConfig(epochs=args.epochs, horizon=args.epochs, seed=args.seed),
                    DatasetManifest.load(data / "manifest.csv"), [float(a) for a in args.alphas.split(",")], out)
text = "alpha,accuracy\n" + "".join(f"{a:g},{acc:.4f}\n" for a, acc in rows)
(out / "ablation.csv").write_text(text)
print(text, end="")
