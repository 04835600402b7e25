"""PGM/PPM image IO, the synthetic spectral-artifact dataset, and CSV manifests."""
from __future__ import annotations

import csv
import hashlib
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fft import fft2_array, ifft2_array

LABELS = ("real", "fake")
SPLITS = ("train", "val", "test")
MODES = ("grid", "radial-peaks", "checkerboard-upsample")


class ImageFormatError(ValueError):
    pass


# -- netpbm ----------------------------------------------------------------------------

def _read_header(buf: bytes) -> tuple[str, int, int, int, int]:
    """Parse magic, width, height, maxval; return them with the payload byte offset."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(buf):
            raise ImageFormatError(f"truncated header at byte {pos}")
        ch = buf[pos:pos + 1]
        if ch == b"#":
            end = buf.find(b"\n", pos)
            if end < 0:
                raise ImageFormatError(f"unterminated comment at byte {pos}")
            pos = end + 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(buf) and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
                pos += 1
            tokens.append(buf[start:pos])
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise ImageFormatError(f"missing whitespace after header at byte {pos}")
    pos += 1
    magic = tokens[0].decode("ascii", "replace")
    if magic not in ("P5", "P6"):
        raise ImageFormatError(f"unsupported magic {magic!r} at byte 0 (expected P5 or P6)")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise ImageFormatError(f"non-integer header field before byte {pos}") from e
    if w <= 0 or h <= 0 or not 0 < maxval < 256:
        raise ImageFormatError(f"invalid header values w={w} h={h} maxval={maxval} (8-bit only)")
    return magic, w, h, maxval, pos


def load_image(path: str | os.PathLike, channels: int | None = None) -> np.ndarray:
    """Read an 8-bit PGM/PPM into ``[C, H, W]`` floats in [0, 1].

    Grayscale is replicated to ``channels`` when given.
    """
    buf = Path(path).read_bytes()
    magic, w, h, maxval, offset = _read_header(buf)
    c = 1 if magic == "P5" else 3
    need = w * h * c
    payload = buf[offset:offset + need]
    if len(payload) < need:
        raise ImageFormatError(f"truncated payload: expected {need} bytes from byte {offset}, "
                               f"file ends at byte {len(buf)}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, c).transpose(2, 0, 1)
    img = arr.astype(np.float64) / 255.0 if maxval == 255 else arr.astype(np.float64) / maxval
    if channels is not None and channels != c:
        if c != 1:
            raise ImageFormatError(f"cannot convert {c}-channel image to {channels} channels")
        img = np.repeat(img, channels, axis=0)
    return img


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def encode_image(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[None]
    c, h, w = img.shape
    if c not in (1, 3):
        raise ImageFormatError(f"can only encode 1 or 3 channels, got {c}")
    magic = b"P5" if c == 1 else b"P6"
    header = magic + f"\n{w} {h}\n255\n".encode("ascii")
    return header + to_uint8(img).transpose(1, 2, 0).tobytes()


def save_image(path: str | os.PathLike, img: np.ndarray) -> None:
    Path(path).write_bytes(encode_image(img))


# -- synthesis -----------------------------------------------------------------------------

@dataclass
class ArtifactSpec:
    mode: str = "grid"
    freq: int = 12
    amplitude: float = 0.15
    phase_jitter: float = np.pi

    def validate(self, h: int, w: int) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown artifact mode {self.mode!r}; choose from {MODES}")
        if not 0 < self.freq < min(h, w) / 2:
            raise ValueError(f"artifact frequency {self.freq} must lie in (0, {min(h, w) / 2})")
        if self.amplitude < 0:
            raise ValueError(f"artifact amplitude must be non-negative, got {self.amplitude}")


@dataclass
class FieldSpec:
    """Background statistics shared by both classes.

    The spectrum is ``1/(1 + f/f0)^slope`` shaped noise (a fixed low-pass kernel applied
    in the frequency domain), plus a weaker ``f^-texture_slope`` texture component whose
    level varies per image so high-frequency energy alone does not separate the classes.
    """

    corner: float = 2.0
    slope: float = 1.0
    contrast: tuple[float, float] = (0.10, 0.20)
    texture: tuple[float, float] = (0.0, 0.0)
    texture_slope: float = 0.5


def _radius(h: int, w: int) -> np.ndarray:
    fy = np.fft.fftfreq(h) * h
    fx = np.fft.fftfreq(w) * w
    return np.hypot(fy[:, None], fx[None, :])


def lowpass_kernel(h: int, w: int, spec: FieldSpec) -> np.ndarray:
    return 1.0 / (1.0 + _radius(h, w) / spec.corner) ** spec.slope


def synthesize_field(rng: np.random.Generator, h: int, w: int, spec: FieldSpec) -> np.ndarray:
    noise = rng.standard_normal((h, w))
    field = ifft2_array(fft2_array(noise) * lowpass_kernel(h, w, spec)).real
    field = field / (field.std() + 1e-12) * rng.uniform(*spec.contrast)
    lo, hi = spec.texture
    if hi > 0:
        r = _radius(h, w)
        shape = np.where(r > 0, 1.0 / np.maximum(r, 1.0) ** spec.texture_slope, 0.0)
        tex = ifft2_array(fft2_array(rng.standard_normal((h, w))) * shape).real
        field = field + tex / (tex.std() + 1e-12) * rng.uniform(lo, hi)
    return 0.5 + field


def artifact_bins(spec: ArtifactSpec) -> list[tuple[int, int]]:
    """Positive-half frequency bins (row, col) the artifact occupies; conjugates are implied."""
    k = spec.freq
    if spec.mode == "grid":
        return [(k, 0), (0, k)]
    if spec.mode == "checkerboard-upsample":
        return [(k, k), (k, -k)]
    d = int(round(k / np.sqrt(2)))
    return [(k, 0), (0, k), (d, d), (d, -d)]


def inject_artifact(img: np.ndarray, spec: ArtifactSpec, rng: np.random.Generator) -> np.ndarray:
    """Add the periodic pattern in the frequency domain; each bin pair yields a cosine of peak ``amplitude``."""
    h, w = img.shape[-2:]
    f = fft2_array(img)
    for u, v in artifact_bins(spec):
        phase = rng.uniform(-spec.phase_jitter, spec.phase_jitter) if spec.phase_jitter else 0.0
        coef = spec.amplitude * h * w / 2 * np.exp(1j * phase)
        f[..., u % h, v % w] += coef
        f[..., -u % h, -v % w] += np.conj(coef)
    return ifft2_array(f).real


def _image_seed(seed: int, index: int) -> int:
    digest = hashlib.sha256(f"specx:{seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def synthesize_image(image_seed: int, label: str, size: tuple[int, int], spec: ArtifactSpec,
                     field: FieldSpec | None = None) -> np.ndarray:
    """Single-channel ``[1, H, W]`` image in [0, 1]. Same seed gives the same background for both labels."""
    h, w = size
    field = field or FieldSpec()
    rng = np.random.default_rng(image_seed)
    img = synthesize_field(rng, h, w, field)
    if label == "fake" and spec.amplitude > 0:
        img = inject_artifact(img, spec, np.random.default_rng([image_seed, 1]))
    elif label not in LABELS:
        raise ValueError(f"label must be one of {LABELS}, got {label!r}")
    return np.clip(img, 0.0, 1.0)[None]


def _split_key(seed: int, index: int) -> float:
    digest = hashlib.sha256(f"split:{seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") / 2.0 ** 64


def assign_splits(n: int, seed: int, fractions=(0.7, 0.15, 0.15), counts=None) -> list[str]:
    """Hash each index to [0, 1) and threshold by ``fractions``.

    With explicit ``counts`` the lowest hash keys go to train, then val, then test, so
    per-split sizes are exact.
    """
    keys = [_split_key(seed, i) for i in range(n)]
    if counts is not None:
        if sum(counts) != n:
            raise ValueError(f"split counts {counts} do not sum to {n}")
        order = sorted(range(n), key=lambda i: keys[i])
        out = [""] * n
        bounds = np.cumsum([0, *counts])
        for s, lo, hi in zip(SPLITS, bounds[:-1], bounds[1:]):
            for i in order[lo:hi]:
                out[i] = s
        return out
    edges = np.cumsum(fractions)
    if not np.isclose(edges[-1], 1.0):
        raise ValueError(f"split fractions {fractions} must sum to 1")
    return [SPLITS[min(int(np.searchsorted(edges, k, side="right")), 2)] for k in keys]


# -- manifest ----------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    root: Path
    entries: list[tuple[str, str, str]] = field(default_factory=list)
    seed: int | None = None

    def counts(self) -> dict[tuple[str, str], int]:
        out: dict[tuple[str, str], int] = {}
        for _, label, split in self.entries:
            out[(split, label)] = out.get((split, label), 0) + 1
        return out

    def split(self, name: str) -> list[tuple[str, str]]:
        return [(p, label) for p, label, s in self.entries if s == name]

    def validate(self, check_files: bool = True) -> None:
        paths = [p for p, _, _ in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("manifest contains duplicate paths")
        for p, label, split in self.entries:
            if label not in LABELS or split not in SPLITS:
                raise ValueError(f"bad manifest row {p},{label},{split}")
            if check_files and not (self.root / p).is_file():
                raise FileNotFoundError(f"manifest references missing file {self.root / p}")
        train_labels = {label for _, label, s in self.entries if s == "train"}
        if train_labels and train_labels != set(LABELS):
            raise ValueError(f"train split must contain both classes, has {sorted(train_labels)}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["path", "label", "split"])
        writer.writerows(self.entries)
        return buf.getvalue()

    def save(self, path: str | os.PathLike | None = None) -> Path:
        path = Path(path) if path is not None else self.root / "manifest.csv"
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(self.to_csv())
        return path

    @classmethod
    def load(cls, path: str | os.PathLike, check_files: bool = True) -> DatasetManifest:
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.csv"
        if not path.is_file():
            raise FileNotFoundError(f"manifest not found: {path}")
        with open(path, encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
        if not rows or rows[0] != ["path", "label", "split"]:
            raise ValueError(f"{path}: expected header 'path,label,split'")
        m = cls(path.parent, [tuple(r) for r in rows[1:]])
        m.validate(check_files)
        return m


def generate_dataset(n_per_class: int, spec: ArtifactSpec, seed: int, out_dir: str | os.PathLike, *,
                     size: tuple[int, int] = (64, 64), field: FieldSpec | None = None,
                     fractions=(0.7, 0.15, 0.15), split_counts=None) -> DatasetManifest:
    """Write ``2 * n_per_class`` PGMs and ``manifest.csv``.

    Image ``i`` is real for even ``i`` and fake for odd ``i``; backgrounds are seeded per index.
    ``split_counts`` gives exact per-class (train, val, test) sizes.
    """
    if n_per_class < 2:
        raise ValueError(f"need at least 2 images per class, got {n_per_class}")
    spec.validate(*size)
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e}") from e
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")

    splits = {}
    for c, label in enumerate(LABELS):
        splits[label] = assign_splits(n_per_class, seed * 2 + c, fractions,
                                      split_counts)
    entries = []
    for i in range(2 * n_per_class):
        label = LABELS[i % 2]
        img = synthesize_image(_image_seed(seed, i), label, size, spec, field)
        rel = f"images/{i:06d}_{label}.pgm"
        save_image(out / rel, img)
        entries.append((rel, label, splits[label][i // 2]))
    manifest = DatasetManifest(out, entries, seed)
    manifest.save()
    return manifest


def load_split(manifest: DatasetManifest, split: str, channels: int = 3,
               dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    rows = manifest.split(split)
    if not rows:
        return np.zeros((0, channels, 0, 0), dtype=dtype), np.zeros(0, dtype=np.int64)
    images = np.stack([load_image(manifest.root / p, channels) for p, _ in rows]).astype(dtype)
    labels = np.array([LABELS.index(label) for _, label in rows], dtype=np.int64)
    return images, labels


def radial_power(img: np.ndarray, n_bins: int = 16) -> np.ndarray:
    """Mean power per radial frequency ring (DC excluded), rings spanning up to Nyquist."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img.mean(axis=0)
    h, w = img.shape
    power = np.abs(fft2_array(img - img.mean())) ** 2
    r = _radius(h, w)
    edges = np.linspace(0.5, min(h, w) / 2, n_bins + 1)
    return np.array([power[(r >= lo) & (r < hi)].mean() for lo, hi in zip(edges[:-1], edges[1:])])
