"""``specx`` command line: generate, train, eval, gradcheck, flops, spectrum, bench, ablate-alpha."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path


from . import complexity
from .config import PRESETS, ConfigError, TrainConfig, _replace, load_config
from .data import MODES, ArtifactSpec, DatasetManifest, encode_image, generate_dataset, load_image, load_split
from .fft import log_magnitude_spectrum
from .gradcheck import SUITE, run_suite
from .train import ablate_alpha, evaluate, load_model, train_from_manifest

MANIFEST = "manifest.csv"


class CliError(Exception):
    pass


def default_seed() -> int:
    raw = os.environ.get("SPECX_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"SPECX_SEED must be an integer, got {raw!r}") from None


def _manifest(data: str) -> DatasetManifest:
    path = Path(data)
    if path.is_dir():
        path = path / MANIFEST
    if not path.is_file():
        raise CliError(f"no dataset manifest at {path}")
    return DatasetManifest.load(path)


def _emit(rows: list[tuple[str, object]], fmt: str) -> str:
    if fmt == "csv":
        return ",".join(k for k, _ in rows) + "\n" + ",".join(_s(v) for _, v in rows)
    return "\n".join(f"{k:<10} {_s(v)}" for k, v in rows)


def _s(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def cmd_generate(a) -> int:
    spec = ArtifactSpec(mode=a.mode, freq=a.freq, amplitude=a.amp)
    counts = None
    if a.split_counts:
        counts = tuple(int(t) for t in a.split_counts.split(","))
        if len(counts) != 3:
            raise CliError("--split-counts needs three integers train,val,test")
    m = generate_dataset(a.n, spec, a.seed, a.out, size=(a.size, a.size), split_counts=counts)
    c = m.counts()
    print(f"wrote {len(m.entries)} images to {a.out} "
          + " ".join(f"{s}={c.get((s, 'real'), 0) + c.get((s, 'fake'), 0)}" for s in ("train", "val", "test")))
    return 0


def cmd_train(a) -> int:
    model_cfg, train_cfg = load_config(a.config)
    changes = {}
    if a.epochs is not None:
        changes["epochs"] = a.epochs
        changes["horizon"] = max(a.epochs, train_cfg.warmup_epochs + 1)
    if a.seed is not None:
        changes["seed"] = a.seed
        model_cfg = _replace(model_cfg, seed=a.seed)
    train_cfg = _replace(train_cfg, **changes)
    result = train_from_manifest(model_cfg, train_cfg, _manifest(a.data), a.out)
    last = result.rows[-1]
    msg = f"trained {train_cfg.epochs} epochs; final train acc {last['accuracy']:.4f}"
    if result.best_val is not None:
        msg += f"; best val acc {result.best_val['accuracy']:.4f} at epoch {result.best_epoch}"
    print(msg)
    return 0


def cmd_eval(a) -> int:
    model = load_model(a.checkpoint, a.config)
    x, y = load_split(_manifest(a.data), a.split, model.config.input_shape[0], model.config.np_dtype)
    if len(y) == 0:
        raise CliError(f"split {a.split!r} is empty")
    m = evaluate(model, x, y)
    print(_emit([("accuracy", m["accuracy"]), ("auc", m["auc"]), ("map", m["map"]), ("n", len(y))], a.format))
    return 0


def cmd_gradcheck(a) -> int:
    reports = run_suite(a.module, a.seed)
    ok = True
    for name, r in reports.items():
        passed = r.passed(a.tol)
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: max rel error {r.max_rel_error:.3e} "
              f"({r.worst_param}) over {r.n_coords} coords, {r.n_kinks} kinks skipped")
    return 0 if ok else 1


def cmd_flops(a) -> int:
    rep = complexity.analytic_flops(a.c1, a.c2, a.h, a.w, a.k, a.alpha)
    print(rep.table(a.format))
    g_out = int(rep.alpha * a.c2)
    fft = complexity.spectral_fft_flops(g_out, a.h, a.w) if g_out else 0.0
    print(f"fft,{fft:.0f}" if a.format == "csv" else f"# FFT estimate (5 HW log2 HW per transform): {fft:.0f}")
    return 0


def cmd_spectrum(a) -> int:
    img = load_image(a.input)
    spec = log_magnitude_spectrum(img).data
    Path(a.out).write_bytes(encode_image(spec))
    print(f"wrote {spec.shape[-2]}x{spec.shape[-1]} log-magnitude spectrum to {a.out}")
    return 0


def cmd_bench(a) -> int:
    cfg = PRESETS[a.preset](seed=a.seed)
    results = complexity.compare_blocks(cfg, a.repeats, seed=a.seed)
    results += complexity.spectral_scaling(repeats=a.repeats, seed=a.seed)
    print(complexity.bench_table(results, a.format))
    return 0


def cmd_ablate(a) -> int:
    if a.config:
        model_cfg, train_cfg = load_config(a.config)
    else:
        model_cfg, train_cfg = PRESETS["ablation"](), TrainConfig()
    train_cfg = _replace(train_cfg, epochs=a.epochs, horizon=max(a.epochs, train_cfg.warmup_epochs + 1),
                         seed=a.seed)
    model_cfg = _replace(model_cfg, seed=a.seed)
    try:
        alphas = [float(t) for t in a.alphas.split(",") if t.strip()]
    except ValueError:
        raise CliError(f"--alphas must be comma-separated numbers, got {a.alphas!r}") from None
    rows = ablate_alpha(model_cfg, train_cfg, _manifest(a.data), alphas, a.out)
    text = "alpha,accuracy\n" + "".join(f"{al:g},{acc:.4f}\n" for al, acc in rows)
    if a.out:
        Path(a.out).mkdir(parents=True, exist_ok=True)
        (Path(a.out) / "ablation.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="specx", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    seed = default_seed()

    g = sub.add_parser("generate", help="write a synthetic real/fake dataset")
    g.add_argument("--n", type=int, required=True, help="images per class")
    g.add_argument("--mode", choices=MODES, default="grid")
    g.add_argument("--freq", type=int, default=12)
    g.add_argument("--amp", type=float, default=0.15)
    g.add_argument("--seed", type=int, default=seed)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--split-counts", help="exact per-class train,val,test sizes")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="train from a config file and dataset")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int, default=None)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="accuracy / AUC / mAP of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", help="defaults to config.cfg beside the checkpoint")
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=("train", "val", "test"), default="test")
    e.add_argument("--format", choices=("text", "csv"), default="text")
    e.set_defaults(fn=cmd_eval)

    gc = sub.add_parser("gradcheck", help="central-difference gradient checks")
    gc.add_argument("--module", choices=("all", "backbone") + SUITE, default="all")
    gc.add_argument("--seed", type=int, default=seed)
    gc.add_argument("--tol", type=float, default=1e-4)
    gc.set_defaults(fn=cmd_gradcheck)

    f = sub.add_parser("flops", help="analytic parameter / FLOP table")
    for name in ("c1", "c2", "h", "w", "k"):
        f.add_argument(f"--{name}", type=int, required=True)
    f.add_argument("--alpha", type=float, required=True)
    f.add_argument("--format", choices=("text", "csv"), default="text")
    f.set_defaults(fn=cmd_flops)

    s = sub.add_parser("spectrum", help="log-magnitude spectrum of a PGM/PPM as a PGM")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_spectrum)

    b = sub.add_parser("bench", help="SFBlock vs. dense block timing")
    b.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    b.add_argument("--repeats", type=int, default=20)
    b.add_argument("--seed", type=int, default=seed)
    b.add_argument("--format", choices=("text", "csv"), default="text")
    b.set_defaults(fn=cmd_bench)

    ab = sub.add_parser("ablate-alpha", help="test accuracy per split ratio alpha")
    ab.add_argument("--data", required=True)
    ab.add_argument("--alphas", default="0,0.25,0.5,0.75")
    ab.add_argument("--epochs", type=int, default=30)
    ab.add_argument("--seed", type=int, default=seed)
    ab.add_argument("--config", help="model/training config; defaults to the ablation preset")
    ab.add_argument("--out", help="directory for per-alpha runs and ablation.csv")
    ab.set_defaults(fn=cmd_ablate)
    return p


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
    except CliError as err:
        print(f"specx: error: {err}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.fn(args)
    except (CliError, ConfigError, ValueError, OSError, KeyError) as err:
        msg = str(err).splitlines()[0] if str(err) else type(err).__name__
        print(f"specx: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
