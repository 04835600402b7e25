"""Analytic parameter/FLOP table next to the walked count of the implemented DDFC."""
import argparse

import numpy as np

from specxnet.complexity import analytic_flops, ddfc_table_params
from specxnet.ddfc import DDFC

p = argparse.ArgumentParser()
p.add_argument("--c1", type=int, default=64)
p.add_argument("--c2", type=int, default=64)
p.add_argument("--hw", type=int, default=56)
p.add_argument("--k", type=int, default=3)
p.add_argument("--alpha", type=float, default=0.5)
a = p.parse_args()

rep = analytic_flops(a.c1, a.c2, a.hw, a.hw, a.k, a.alpha)
print(rep.table())
walked = ddfc_table_params(DDFC(a.c1, a.c2, a.k, a.alpha, np.random.default_rng(0)))
print(f"walked DDFC weights: {walked}   analytic DDFC rows: {rep.ddfc_params()}")
