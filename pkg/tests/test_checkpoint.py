from __future__ import annotations

import numpy as np
import pytest
import torch

from panseg.checkpoint import (CheckpointError, load_weights, read_weight_map,
                               save_weights)
from panseg.config import ModelConfig
from panseg.model import PanopticNet


def make_net(seed=0, **kw):
    torch.manual_seed(seed)
    base = dict(n_att=4, c_att=50.0, n_things=3, n_stuff=2, f_dim=8,
                backbone_width=8, head_width=8)
    base.update(kw)
    return PanopticNet(ModelConfig(**base))


def test_save_load_round_trip(tmp_path):
    net = make_net(seed=1)
    # Perturb running stats so buffers carry non-default values.
    with torch.no_grad():
        net.train()
        net(torch.randn(2, 3, 128, 128), torch.rand(2, 4, 16, 16))
    path = tmp_path / "model.wts"
    save_weights(net, path)

    other = make_net(seed=2)
    load_weights(other, path)
    for (name_a, a), (name_b, b) in zip(net.state_dict().items(),
                                        other.state_dict().items()):
        assert name_a == name_b
        if name_a.endswith("num_batches_tracked"):
            continue
        assert torch.equal(a, b), name_a


def test_weight_map_contents(tmp_path):
    net = make_net()
    path = tmp_path / "model.wts"
    save_weights(net, path)
    weights = read_weight_map(path)
    assert "backbone.stem.0.0.weight" in weights
    assert "head.classifier.weight" in weights
    for name, array in weights.items():
        assert array.dtype == np.float32
        assert tuple(array.shape) == tuple(net.state_dict()[name].shape)


def test_architecture_mismatch_rejected(tmp_path):
    net = make_net()
    path = tmp_path / "model.wts"
    save_weights(net, path)
    other = make_net(n_att=6)
    with pytest.raises(CheckpointError, match="mismatch"):
        load_weights(other, path)
    deeper = make_net(backbone_width=8, f_dim=8)
    deeper.config = None  # same shapes load fine; a renamed module does not
    with pytest.raises(CheckpointError, match="does not match"):
        load_weights(PanopticNet(ModelConfig(n_att=4, c_att=50.0, n_things=3,
                                             n_stuff=2, f_dim=8, backbone_width=8,
                                             head_width=8, backbone_depth=2)), path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.wts"
    path.write_bytes(b"NOTAFILE" + b"\x00" * 64)
    with pytest.raises(CheckpointError, match="bad magic"):
        read_weight_map(path)


def test_trailing_garbage_rejected(tmp_path):
    net = make_net()
    path = tmp_path / "model.wts"
    save_weights(net, path)
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(CheckpointError, match="trailing"):
        read_weight_map(path)


def test_missing_file_raises(tmp_path):
    with pytest.raises(CheckpointError, match="cannot read"):
        read_weight_map(tmp_path / "absent.wts")
