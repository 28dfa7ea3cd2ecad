import json

import numpy as np
import pytest

from dcrupture.forward import StageHistory, stage_stamps
from dcrupture.io import (
    HEADER_SIZE,
    read_checkpoint,
    read_data_set,
    read_table,
    verify_manifest,
    write_checkpoint,
    write_data_set,
    write_table,
)


def test_csv_round_trip_is_lossless(tmp_path):
    rng = np.random.default_rng(0)
    values = np.concatenate([rng.standard_normal(200) * 10.0 ** rng.integers(-300, 300, 200), [0.1, 1 / 3, 5e-324, -0.0]])
    path = write_table(tmp_path / "t.csv", ["value"], [[v] for v in values], {}, "abc")
    header, table = read_table(path)
    assert header == ["value"]
    assert table[:, 0].tobytes() == values.tobytes()


def test_sidecar_contents(tmp_path):
    path = write_table(tmp_path / "t.csv", ["a", "b"], [[1.0, 2.0]], {"kind": "velocity"}, "hash123")
    side = json.loads((tmp_path / "t.csv.json").read_text())
    assert side["config_hash"] == "hash123"
    assert side["units"]["stress"] == "MPa" and side["units"]["coordinates"] == "km"
    assert side["kind"] == "velocity"
    assert side["file"] == path.name


def data_set(tmp_path, hash_="h1"):
    rng = np.random.default_rng(1)
    stamps = stage_stamps(np.full(5, 0.1))
    data = rng.standard_normal((20, 3))
    pos = np.array([[0.0, 1.0], [2.0, -3.0], [4.0, 5.0]])
    return write_data_set(tmp_path, data, stamps, pos, "velocity", hash_), data


def test_data_set_round_trip(tmp_path):
    manifest, data = data_set(tmp_path)
    loaded, meta = read_data_set(manifest, "h1")
    assert loaded.tobytes() == data.tobytes()
    assert meta["n_receivers"] == 3 and meta["n_stages"] == 20
    assert verify_manifest(tmp_path) == []


def test_config_hash_mismatch_detected(tmp_path):
    manifest, _ = data_set(tmp_path)
    with pytest.raises(ValueError, match="made for config"):
        read_data_set(manifest, "other")


def test_tampered_file_detected(tmp_path):
    manifest, _ = data_set(tmp_path)
    csv = tmp_path / "data.csv"
    csv.write_text(csv.read_text().replace("0,0,0,", "0,0,0,1", 1))
    with pytest.raises(ValueError, match="checksum"):
        read_data_set(manifest)
    problems = verify_manifest(tmp_path)
    assert any("checksum mismatch" in p for p in problems)


def test_mixed_config_hashes_flagged(tmp_path):
    data_set(tmp_path / "one", "h1")
    write_table(tmp_path / "two.csv", ["x"], [[1.0]], {}, "h2")
    assert any("inconsistent config hashes" in p for p in verify_manifest(tmp_path))


def history(with_receivers=True):
    rng = np.random.default_rng(2)
    steps = np.full(6, 0.05)
    hist = StageHistory(steps, stage_stamps(steps), rng.standard_normal((24, 7)), rng.standard_normal((24, 7)))
    if with_receivers:
        hist.measurements = rng.standard_normal((24, 3))
        hist.residuals = rng.standard_normal((24, 3))
    return hist


@pytest.mark.parametrize("with_receivers", [True, False])
def test_checkpoint_round_trip(tmp_path, with_receivers):
    hist = history(with_receivers)
    path = write_checkpoint(tmp_path / "h.bin", hist)
    raw = path.read_bytes()
    assert raw[:8] == b"DCRSTAGE"
    assert len(raw) == HEADER_SIZE + 8 * (6 + 24 + 2 * 24 * 7 + (2 * 24 * 3 if with_receivers else 0))
    back = read_checkpoint(path)
    for name in ("step_sizes", "stamps", "v_star", "psi", "measurements", "residuals"):
        a, b = getattr(hist, name), getattr(back, name)
        if a is None:
            assert b is None
        else:
            assert a.tobytes() == b.tobytes()


def test_corrupt_checkpoint_rejected(tmp_path):
    path = write_checkpoint(tmp_path / "h.bin", history())
    raw = path.read_bytes()
    (tmp_path / "short.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="payload"):
        read_checkpoint(tmp_path / "short.bin")
    (tmp_path / "magic.bin").write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ValueError, match="not a stage-history"):
        read_checkpoint(tmp_path / "magic.bin")
