import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from specxnet import checkpoint
from specxnet.backbone import SpecXNet
from specxnet.config import ModelConfig, chain_blocks
from specxnet.tensor import Tensor


def test_byte_layout():
    buf = checkpoint.encode({"w": np.array([[1.0, 2.0]], dtype=np.float32)})
    expected = (b"SPXC" + struct.pack("<II", 1, 1) + struct.pack("<H", 1) + b"w" + bytes([1, 2])
                + struct.pack("<QQ", 1, 2) + np.array([1.0, 2.0], dtype="<f4").tobytes())
    assert buf == expected


@given(st.dictionaries(st.text(min_size=1, max_size=8),
                       hnp.arrays(st.sampled_from([np.float32, np.float64]), hnp.array_shapes(min_dims=0, max_dims=4,
                                                                                              min_side=0, max_side=3)),
                       max_size=4))
def test_roundtrip(tensors):
    out = checkpoint.decode(checkpoint.encode(tensors))
    assert list(out) == list(tensors)
    for k in tensors:
        assert out[k].dtype == tensors[k].dtype and out[k].shape == tensors[k].shape
        assert np.array_equal(out[k], tensors[k], equal_nan=True)


@pytest.mark.parametrize("bad,msg", [(b"XXXX", "magic"), (b"SPXC\x02\x00\x00\x00\x00\x00\x00\x00", "version"),
                                     (b"SPXC\x01\x00\x00\x00\x01\x00\x00\x00\x05", "truncated")])
def test_corrupt(bad, msg):
    with pytest.raises(checkpoint.CheckpointError, match=msg):
        checkpoint.decode(bad)


def test_truncated_payload():
    buf = checkpoint.encode({"a": np.zeros(4)})
    with pytest.raises(checkpoint.CheckpointError, match="payload"):
        checkpoint.decode(buf[:-3])


def test_rejects_int_arrays():
    with pytest.raises(checkpoint.CheckpointError, match="dtype"):
        checkpoint.encode({"a": np.zeros(2, dtype=np.int32)})


def test_model_state_roundtrip(tmp_path, rng):
    cfg = ModelConfig(input_shape=(1, 8, 8), stem_channels=4, blocks=chain_blocks(4, [4], 0.5))
    m = SpecXNet(cfg)
    x = Tensor(rng.random((2, 1, 8, 8)))
    m(x)  # move BN running stats
    checkpoint.save(tmp_path / "m.spxc", m.state_dict())
    m2 = SpecXNet(ModelConfig(input_shape=(1, 8, 8), stem_channels=4, blocks=chain_blocks(4, [4], 0.5), seed=5))
    m2.load_state_dict(checkpoint.load(tmp_path / "m.spxc"))
    assert np.array_equal(m.eval()(x).data, m2.eval()(x).data)
    with pytest.raises(FileNotFoundError):
        checkpoint.load(tmp_path / "missing.spxc")
