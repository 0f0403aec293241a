import json
import shutil

import numpy as np
import pytest

from kraken_sim.codec import TernaryTensor, pack_tensor
from kraken_sim.cutie import CutieNetwork
from kraken_sim.errors import InvalidDims, MemoryBudgetExceeded, ParseError, SchemaViolation, UnsortedStream
from kraken_sim.io import (
    EVENT_MAGIC,
    events_to_binary,
    fixture_path,
    gen_synthetic,
    load_events,
    load_image,
    load_network,
    pack_nibbles,
    pixels_to_trits,
    sha256,
    synthetic_events,
    trits_from_text,
    trits_to_text,
    unpack_nibbles,
)
from kraken_sim.pulp import ConvPatchSpec
from kraken_sim.sne import Event, SneNetwork, stream_activity


def write_sne(tmp_path, c_out=4, weights=None, **layer):
    w = np.ones((c_out, 1, 3, 3), dtype=int) if weights is None else weights
    blob = pack_nibbles(w)
    (tmp_path / "w.kw4").write_bytes(blob)
    d = {"height": 4, "width": 4, "c_in": 1, "c_out": c_out, "threshold": 3, "leak_num": 1, "leak_shift": 0}
    d.update(layer)
    d["weights"] = {"path": "w.kw4", "sha256": sha256(blob)}
    doc = {"schema_version": 1, "engine": "sne", "name": "t", "layers": [d]}
    path = tmp_path / "net.json"
    path.write_text(json.dumps(doc))
    return path


def write_cutie(tmp_path, c_out=4, payload=None):
    w = TernaryTensor(np.ones((c_out, 2, 9), dtype=int))
    blob = pack_tensor(w) if payload is None else payload
    (tmp_path / "w.ktt").write_bytes(blob)
    doc = {
        "schema_version": 1,
        "engine": "cutie",
        "input": [4, 4, 2],
        "layers": [{"c_in": 2, "c_out": c_out, "kernel": 3, "theta_lo": -1, "theta_hi": 1, "weights": {"path": "w.ktt", "sha256": sha256(blob)}}],
    }
    path = tmp_path / "net.json"
    path.write_text(json.dumps(doc))
    return path


# ------------------------------------------------------------------ networks


def test_load_minimal_sne(tmp_path):
    loaded = load_network(write_sne(tmp_path))
    assert loaded.engine == "sne"
    assert isinstance(loaded.network, SneNetwork) and len(loaded.network.layers) == 1
    assert loaded.network.layers[0].weights.sum() == 36


def test_load_sne_budget(tmp_path):
    assert load_network(write_sne(tmp_path, c_out=4, height=128, width=128)).network.layers[0].neurons == 65536
    with pytest.raises(MemoryBudgetExceeded):
        load_network(write_sne(tmp_path, c_out=5, height=128, width=128))


def test_load_cutie(tmp_path):
    loaded = load_network(write_cutie(tmp_path))
    assert isinstance(loaded.network, CutieNetwork)


def test_cutie_wide_layer_rejected(tmp_path):
    with pytest.raises(SchemaViolation, match="96"):
        load_network(write_cutie(tmp_path, c_out=128))


def test_truncated_payload(tmp_path):
    blob = pack_tensor(TernaryTensor(np.ones((4, 2, 9), dtype=int)))[:-3]
    with pytest.raises(ParseError):
        load_network(write_cutie(tmp_path, payload=blob))
    path = write_sne(tmp_path)
    blob = (tmp_path / "w.kw4").read_bytes()[:-2]
    (tmp_path / "w.kw4").write_bytes(blob)
    doc = json.loads(path.read_text())
    doc["layers"][0]["weights"]["sha256"] = sha256(blob)
    path.write_text(json.dumps(doc))
    with pytest.raises(ParseError):
        load_network(path)


def test_checksum_mismatch(tmp_path):
    path = write_sne(tmp_path)
    (tmp_path / "w.kw4").write_bytes(pack_nibbles(np.zeros((4, 1, 3, 3), dtype=int)))
    with pytest.raises(ParseError, match="checksum"):
        load_network(path)


def test_json_syntax_error_has_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "schema_version": 1,\n  "engine": \n}')
    with pytest.raises(ParseError) as info:
        load_network(path)
    assert info.value.line == 4


def test_schema_violation_names_field(tmp_path):
    path = write_sne(tmp_path, threshold=0)
    with pytest.raises(SchemaViolation) as info:
        load_network(path)
    assert "threshold" in info.value.field


def test_load_patch(fixtures):
    loaded = load_network(fixtures("pulp_patch.json"))
    assert loaded.network == ConvPatchSpec(64, 8, 16, 3, 8, 8)


def test_bundled_fixtures_load(fixtures):
    for name in ("sne_tiny.json", "cutie_cifar10.json", "pulp_patch.json"):
        load_network(fixtures(name))


def test_nibble_round_trip():
    w = np.arange(-8, 8).repeat(3)[:45]
    assert np.array_equal(unpack_nibbles(pack_nibbles(w)), w)
    with pytest.raises(ParseError):
        unpack_nibbles(b"XXXX" + pack_nibbles(w)[4:])


# -------------------------------------------------------------------- events


def test_empty_event_file(tmp_path):
    (tmp_path / "e.csv").write_text("")
    assert load_events(tmp_path / "e.csv") == []


def test_csv_events(tmp_path):
    (tmp_path / "e.csv").write_text("tick,x,y,c\n0,1,2,0\n0,3,3,1\n4,0,0,1\n")
    assert load_events(tmp_path / "e.csv") == [Event(0, 1, 2, 0), Event(0, 3, 3, 1), Event(4, 0, 0, 1)]


def test_csv_polarity(tmp_path):
    (tmp_path / "e.csv").write_text("0,1,2,-1\n1,3,3,1\n")
    assert [e.c for e in load_events(tmp_path / "e.csv", polarity=True)] == [0, 1]


def test_csv_parse_error_line(tmp_path):
    (tmp_path / "e.csv").write_text("0,1,2,0\n0,1,x,0\n")
    with pytest.raises(ParseError) as info:
        load_events(tmp_path / "e.csv")
    assert info.value.line == 2


def test_unsorted_events(tmp_path):
    (tmp_path / "e.csv").write_text("3,0,0,0\n1,0,0,0\n1,1,0,0\n")
    with pytest.raises(UnsortedStream):
        load_events(tmp_path / "e.csv")
    assert [e.tick for e in load_events(tmp_path / "e.csv", auto_sort=True)] == [1, 1, 3]


def test_binary_events(tmp_path):
    events = [Event(0, 1, 2, 0), Event(70000, 65535, 3, 1)]
    blob = events_to_binary(events)
    assert blob[:4] == EVENT_MAGIC and len(blob) == 4 + 2 * 10
    (tmp_path / "e.kev").write_bytes(blob)
    assert load_events(tmp_path / "e.kev") == events
    assert load_events(tmp_path / "e.kev", "binary") == events


def test_binary_bad_magic_and_truncation(tmp_path):
    (tmp_path / "e.kev").write_bytes(b"KEV0" + b"\0" * 10)
    with pytest.raises(ParseError):
        load_events(tmp_path / "e.kev", "binary")
    (tmp_path / "e.kev").write_bytes(EVENT_MAGIC + b"\0" * 9)
    with pytest.raises(ParseError):
        load_events(tmp_path / "e.kev", "binary")


# ------------------------------------------------------------ trits, images


def test_trit_text_round_trip():
    t = TernaryTensor(np.random.default_rng(0).integers(-1, 2, size=(3, 4, 2)))
    assert trits_from_text(trits_to_text(t)) == t


def test_pixel_terciles():
    t = pixels_to_trits(np.array([[0, 84, 85, 170, 171, 255]], dtype=np.uint8))
    assert t.data[0, :, 0].tolist() == [-1, -1, 0, 0, 1, 1]


def test_load_pgm(fixtures):
    t = load_image(fixtures("input.pgm"))
    assert t.dims == (32, 32, 1)


# ---------------------------------------------------------------- generators


def test_gen_deterministic(tmp_path):
    for kind in ("sne", "cutie", "patch"):
        a = gen_synthetic(kind, seed=1).write(tmp_path / f"{kind}a")
        b = gen_synthetic(kind, seed=1).write(tmp_path / f"{kind}b")
        for f in sorted(a.parent.iterdir()):
            assert f.read_bytes() == (b.parent / f.name).read_bytes()


def test_gen_density_zero():
    syn = gen_synthetic("sne", density=0.0, seed=3)
    assert syn.inputs["events.csv"] == b""


def test_gen_density_activity():
    events = synthetic_events((32, 32, 2), 20, 0.01, seed=5)
    assert abs(stream_activity(events, (32, 32, 2)) - 0.01) / 0.01 < 0.10


def test_gen_loads(tmp_path):
    for kind in ("sne", "cutie", "patch"):
        load_network(gen_synthetic(kind, seed=2).write(tmp_path / kind))


def test_gen_invalid_dims():
    with pytest.raises(InvalidDims):
        gen_synthetic("sne", dims=(0, 4, 2))
    with pytest.raises(InvalidDims):
        gen_synthetic("patch", dims=(1, 2))
    with pytest.raises(InvalidDims):
        gen_synthetic("sne", dims=(128, 128, 2))


def test_fixture_directory_is_self_contained(tmp_path, fixtures):
    src = fixtures("sne_tiny.json").parent
    dst = tmp_path / "copy"
    shutil.copytree(src, dst)
    assert load_network(dst / "sne_tiny.json").engine == "sne"
