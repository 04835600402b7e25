import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from specxnet.data import (ArtifactSpec, DatasetManifest, ImageFormatError, assign_splits, encode_image,
                           generate_dataset, load_image, load_split, radial_power, save_image, synthesize_image)
from specxnet.fft import dft2_direct


def test_p5_scaling(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    img = load_image(p)
    np.testing.assert_array_equal(img[0], [[0, 1.0], [128 / 255, 64 / 255]])
    assert load_image(p, channels=3).shape == (3, 2, 2)


def test_p6_interleave(tmp_path):
    p = tmp_path / "rgb.ppm"
    p.write_bytes(b"P6\n# two pixels\n2 1\n255\n" + bytes([10, 20, 30, 40, 50, 60]))
    img = load_image(p) * 255
    np.testing.assert_allclose(img[:, 0, :], [[10, 40], [20, 50], [30, 60]])


@pytest.mark.parametrize("raw,where", [(b"P4\n1 1\n255\n\x00", "byte 0"), (b"P5\n2 2\n255\n\x00", "byte 11"),
                                       (b"P5\n2", "byte"), (b"P5\nx 2\n255\n", "byte")])
def test_malformed_headers_report_offsets(tmp_path, raw, where):
    p = tmp_path / "bad.pgm"
    p.write_bytes(raw)
    with pytest.raises(ImageFormatError, match=where):
        load_image(p)


@given(hnp.arrays(np.uint8, st.tuples(st.sampled_from([1, 3]), st.integers(1, 5), st.integers(1, 5))))
def test_save_load_roundtrip(tmp_path_factory, arr):
    p = tmp_path_factory.mktemp("img") / "x.pnm"
    save_image(p, arr / 255.0)
    assert np.array_equal(np.round(load_image(p) * 255).astype(np.uint8), arr)


def test_fake_argmax_at_artifact_bin():
    spec = ArtifactSpec(freq=12)
    for seed in range(6):
        img = synthesize_image(seed, "fake", (64, 64), spec)[0]
        mag = np.log1p(np.abs(dft2_direct(img - img.mean())))
        mag[0, 0] = 0
        u, v = np.unravel_index(np.argmax(mag), mag.shape)
        assert (min(u, 64 - u), min(v, 64 - v)) in {(12, 0), (0, 12)}


def test_zero_amplitude_classes_identical():
    spec = ArtifactSpec(amplitude=0.0)
    for seed in range(3):
        assert np.array_equal(synthesize_image(seed, "real", (32, 32), spec),
                              synthesize_image(seed, "fake", (32, 32), spec))


def test_spec_validation():
    with pytest.raises(ValueError, match="frequency"):
        ArtifactSpec(freq=32).validate(64, 64)
    with pytest.raises(ValueError, match="mode"):
        ArtifactSpec(mode="stripes").validate(64, 64)


@pytest.mark.parametrize("mode", ["grid", "radial-peaks", "checkerboard-upsample"])
def test_modes_produce_valid_images(mode):
    img = synthesize_image(3, "fake", (32, 32), ArtifactSpec(mode=mode, freq=6))
    assert img.shape == (1, 32, 32) and img.min() >= 0 and img.max() <= 1


def test_radial_power_real_monotone_fake_bump():
    spec = ArtifactSpec()
    real = np.mean([radial_power(synthesize_image(s, "real", (64, 64), spec), 16) for s in range(40)], axis=0)
    fake = np.mean([radial_power(synthesize_image(s, "fake", (64, 64), spec), 16) for s in range(40)], axis=0)
    assert np.sum(np.diff(real) > 0) <= 1
    ring = 12 * 16 // 32 - (1 if 12 * 16 % 32 == 0 else 0)  # radial bin containing radius 12
    rises = np.nonzero(np.diff(fake) > 0)[0] + 1
    assert any(abs(r - ring) <= 1 for r in rises)


def test_split_assignment_stable_and_exact():
    a = assign_splits(100, 3)
    b = assign_splits(120, 3)
    assert a == b[:100]
    exact = assign_splits(50, 1, counts=(30, 5, 15))
    assert [exact.count(s) for s in ("train", "val", "test")] == [30, 5, 15]
    with pytest.raises(ValueError):
        assign_splits(10, 0, counts=(5, 5, 5))


def test_generate_manifest_roundtrip_and_determinism(tmp_path):
    spec = ArtifactSpec()
    m = generate_dataset(6, spec, 11, tmp_path / "a", size=(32, 32))
    generate_dataset(6, spec, 11, tmp_path / "b", size=(32, 32))
    assert len(m.entries) == 12
    for p, _, _ in m.entries:
        assert (tmp_path / "a" / p).read_bytes() == (tmp_path / "b" / p).read_bytes()
    first = (tmp_path / "a" / "manifest.csv").read_bytes()
    assert first.startswith(b"path,label,split\n") and b"\r" not in first
    DatasetManifest.load(tmp_path / "a").save()
    assert (tmp_path / "a" / "manifest.csv").read_bytes() == first
    x, y = load_split(m, "train", channels=1)
    assert x.shape[1:] == (1, 32, 32) and set(y) <= {0, 1}


def test_manifest_validation(tmp_path):
    m = generate_dataset(3, ArtifactSpec(freq=4), 0, tmp_path, size=(16, 16))
    (tmp_path / m.entries[0][0]).unlink()
    with pytest.raises(FileNotFoundError):
        DatasetManifest.load(tmp_path)
    with pytest.raises(ValueError, match="duplicate"):
        DatasetManifest(tmp_path, [("a", "real", "train")] * 2).validate(False)
    with pytest.raises(ValueError, match="both classes"):
        DatasetManifest(tmp_path, [("a", "real", "train")]).validate(False)
    with pytest.raises(ValueError, match="at least 2"):
        generate_dataset(1, ArtifactSpec(), 0, tmp_path / "x")
