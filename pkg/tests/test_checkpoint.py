import json

import numpy as np
import pytest

from align.checkpoint import METADATA_FILE, Checkpoint, CheckpointManager
from align.embedding import EmbeddingHyperParams, init_params
from align.errors import FrameIoError, ShapeMismatch

HYPER = EmbeddingHyperParams(hidden=4, rounds=1, out_dim=3, profile_len=4)


@pytest.fixture
def manager(tmp_path):
    return CheckpointManager(str(tmp_path / "models"))


def make_checkpoint(name="edge_gnn"):
    return Checkpoint(name, init_params(HYPER, seed=4), 0.25, [1.0, 0.5], "test")


def test_save_and_load(manager):
    ckpt = make_checkpoint()
    assert manager.save(ckpt)
    loaded = manager.load("edge_gnn")
    assert loaded.name == "edge_gnn"
    assert loaded.edge_threshold == 0.25
    assert loaded.loss_history == [1.0, 0.5]
    assert loaded.notes == "test"
    assert loaded.params.hyper == HYPER
    for name in ckpt.params.names():
        np.testing.assert_array_equal(loaded.params.weights[name], ckpt.params.weights[name])


def test_save_overwrites(manager):
    manager.save(make_checkpoint())
    other = Checkpoint("edge_gnn", init_params(HYPER, seed=9), 0.5)
    manager.save(other)
    loaded = manager.load("edge_gnn")
    assert loaded.edge_threshold == 0.5
    np.testing.assert_array_equal(loaded.params.weights["head.weight"], other.params.weights["head.weight"])


def test_save_rejects_invalid_params(manager):
    ckpt = make_checkpoint()
    ckpt.params.weights["head.weight"] = np.zeros((1, 1))
    assert manager.save(ckpt) is False


def test_list_models(manager):
    assert manager.list_models() == []
    manager.save(make_checkpoint("b"))
    manager.save(make_checkpoint("a"))
    assert manager.list_models() == ["a", "b"]


def test_load_missing(manager):
    with pytest.raises(FrameIoError):
        manager.load("nothing")


def test_load_wrong_format_version(manager):
    manager.save(make_checkpoint())
    meta_path = manager.models_dir / "edge_gnn" / METADATA_FILE
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    meta["format_version"] = 99
    meta_path.write_text(json.dumps(meta), encoding="utf-8")
    with pytest.raises(ShapeMismatch):
        manager.load("edge_gnn")


def test_load_missing_weight(manager):
    manager.save(make_checkpoint())
    (manager.models_dir / "edge_gnn" / "weights" / "head.bias.npy").unlink()
    with pytest.raises(ShapeMismatch):
        manager.load("edge_gnn")
