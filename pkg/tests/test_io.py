import json

import numpy as np
import pytest

from conftest import random_net
from stackgame import io as sio
from stackgame.attacks import build_bundle
from stackgame.data import DataParseError
from stackgame.games import records_from_pools, solve_g1
from stackgame.network import Network
from stackgame.training import Arch, TrainConfig


def test_model_round_trip(tmp_path):
    net = Network.init([3, 7, 4, 2], clip_bound=0.8, seed=12)
    sio.save_model(net, tmp_path / "m.json")
    back = sio.load_model(tmp_path / "m.json")
    assert back.flat_params().tobytes() == net.flat_params().tobytes()
    assert back.layer_dims == net.layer_dims and back.clip_bound == 0.8 and back.seed == 12
    X = np.random.default_rng(0).uniform(size=(100, 3))
    assert back.logits(X).tobytes() == net.logits(X).tobytes()
    doc = json.loads((tmp_path / "m.json").read_text())
    assert set(doc) == {"layer_dims", "clip_bound", "weights", "biases", "seed", "format_version"}
    assert doc["format_version"] == 1
    # weights are stored row-major, one flat array per layer
    assert doc["weights"][0][:7] == net.weights[0].ravel()[:7].tolist()


def test_bundle_round_trip(tmp_path, small_data):
    b = build_bundle(random_net([2, 5, 2], 1), small_data, 0.05, "cw")
    sio.save_bundle(b, tmp_path / "b.json")
    back = sio.load_bundle(tmp_path / "b.json")
    assert back.deltas.tobytes() == b.deltas.tobytes()
    assert back.epsilon == b.epsilon and back.dataset_id == small_data.id
    assert set(json.loads((tmp_path / "b.json").read_text())) == {
        "epsilon", "dataset_id", "deltas", "format_version"}


def test_record_round_trip(tmp_path, small_data):
    rec = solve_g1(small_data, Arch((2, 4, 2)), 0.05, "ce", TrainConfig(epochs=5))
    sio.save_record(rec, tmp_path / "r.json")
    back = sio.load_record(tmp_path / "r.json")
    assert back.value == rec.value and back.trace == rec.trace and back.context == rec.context
    assert back.classifier_strategy.flat_params().tobytes() == \
        rec.classifier_strategy.flat_params().tobytes()
    nets = [random_net([2, 4, 2], s) for s in range(2)]
    bundles = [build_bundle(n, small_data, 0.05, "cw") for n in nets]
    g3 = records_from_pools(nets, bundles, small_data, "cw")["G3"]
    sio.save_record(g3, tmp_path / "g3.json", ["a.json", "b.json"], ["c.json", "d.json"])
    doc = json.loads((tmp_path / "g3.json").read_text())
    assert doc["classifier"]["pool"] == ["a.json", "b.json"]
    back = sio.load_record(tmp_path / "g3.json")
    assert back.classifier_strategy.weights.tolist() == g3.classifier_strategy.weights.tolist()


def test_format_errors(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(sio.FormatError):
        sio.load_model(p)
    p.write_text(json.dumps({"format_version": 2}))
    with pytest.raises(sio.FormatError):
        sio.load_model(p)
    p.write_text(json.dumps({"format_version": 1, "layer_dims": [2, 2]}))
    with pytest.raises(sio.FormatError):
        sio.load_model(p)


def test_matrix_csv(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("0,-0.5\n-1,0\n")
    np.testing.assert_array_equal(sio.load_matrix(p).payoff, [[0, -0.5], [-1, 0]])
    sio.save_matrix([[0.1, 0.2]], tmp_path / "n.csv")
    assert sio.load_matrix(tmp_path / "n.csv").payoff.tolist() == [[0.1, 0.2]]
    p.write_text("")
    with pytest.raises(DataParseError):
        sio.load_matrix(p)
    p.write_text("1,2\n3\n")
    with pytest.raises(DataParseError):
        sio.load_matrix(p)
    p.write_text("1,2\n3,x\n")
    with pytest.raises(DataParseError, match=":2:"):
        sio.load_matrix(p)
