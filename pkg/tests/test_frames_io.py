import json

import numpy as np
import pytest

from align.errors import FrameIoError, MalformedRecord
from align.frames import Box, DetectionFrame
from sim.frames_io import (
    CONFIG_FILE,
    FRAMES_FILE,
    export_frames,
    import_frames,
    load_scenario,
    save_scenario,
)
from sim.scenario import ScenarioConfig, generate_scenario

CFG = ScenarioConfig(seed=5, num_agents=2, num_objects=15, duration=8)


def test_scenario_round_trip(tmp_path):
    scenario = generate_scenario(CFG)
    save_scenario(scenario, tmp_path)
    loaded = load_scenario(tmp_path)
    assert loaded.cfg == scenario.cfg
    assert loaded.streams == scenario.streams
    assert loaded.truth.messages == scenario.truth.messages
    assert loaded.truth.poses == scenario.truth.poses
    assert loaded.truth.clock_offsets == scenario.truth.clock_offsets
    np.testing.assert_array_equal(loaded.truth.object_positions, scenario.truth.object_positions)
    assert loaded.odometry == scenario.odometry


def test_frames_without_truth_ids(tmp_path):
    frame = DetectionFrame("agent_0", 100, (Box(1.5, -2.0, 0.3, 7, 0.8),))
    path = tmp_path / "frames.jsonl"
    export_frames({"agent_0": (frame,)}, path, include_truth=False)
    loaded = import_frames(path)["agent_0"][0]
    assert loaded.boxes[0].truth_id is None
    assert loaded.boxes[0].score == 0.8
    assert (loaded.boxes[0].x, loaded.boxes[0].y) == (1.5, -2.0)


def test_blank_lines_are_skipped(tmp_path):
    path = tmp_path / "frames.jsonl"
    path.write_text('\n{"agent": "a", "t": 0, "boxes": []}\n\n', encoding="utf-8")
    streams = import_frames(path)
    assert len(streams["a"]) == 1
    assert len(streams["a"][0]) == 0


@pytest.mark.parametrize("bad_line", [
    "{not json",
    "[1, 2, 3]",
    '{"agent": "a", "boxes": []}',
    '{"agent": "a", "t": 1.5, "boxes": []}',
    '{"agent": "a", "t": 0, "boxes": [[1, 2]]}',
    '{"agent": "a", "t": 0, "boxes": [[1, "x", 0]]}',
    '{"agent": "a", "t": 0, "boxes": [[1, 2, 0]], "truth_ids": [1, 2]}',
    '{"agent": "a", "t": 0, "boxes": [[1, 2, 0]], "truth_ids": ["id"]}',
    '{"agent": "a", "t": 0, "boxes": [[1e999, 2, 0]]}',
])
def test_malformed_record_reports_line(tmp_path, bad_line):
    path = tmp_path / "frames.jsonl"
    good = '{"agent": "a", "t": 0, "boxes": [[0, 0, 0]]}'
    path.write_text(f"{good}\n{good.replace('0, 0, 0', '1, 1, 0')}\n{bad_line}\n", encoding="utf-8")
    with pytest.raises(MalformedRecord) as info:
        import_frames(path)
    assert info.value.line_no == 3
    assert "line 3" in str(info.value)


def test_missing_frames_file(tmp_path):
    with pytest.raises(FrameIoError):
        import_frames(tmp_path / "nope.jsonl")


def test_missing_scenario_dir(tmp_path):
    with pytest.raises(FrameIoError):
        load_scenario(tmp_path / "missing")


def test_unknown_config_key(tmp_path):
    save_scenario(generate_scenario(CFG), tmp_path)
    data = json.loads((tmp_path / CONFIG_FILE).read_text(encoding="utf-8"))
    data["warp_speed"] = 9
    (tmp_path / CONFIG_FILE).write_text(json.dumps(data), encoding="utf-8")
    with pytest.raises(MalformedRecord):
        load_scenario(tmp_path)


def test_corrupted_frames_in_scenario(tmp_path):
    save_scenario(generate_scenario(CFG), tmp_path)
    with open(tmp_path / FRAMES_FILE, "a", encoding="utf-8") as f:
        f.write("garbage\n")
    with pytest.raises(MalformedRecord) as info:
        load_scenario(tmp_path)
    assert info.value.line_no == 2 * CFG.duration + 1


def test_undecodable_line_reports_line(tmp_path):
    path = tmp_path / "frames.jsonl"
    good = b'{"agent": "a", "t": 0, "boxes": [[0, 0, 0]]}\n'
    path.write_bytes(good + b"\xff\n")
    with pytest.raises(MalformedRecord) as info:
        import_frames(path)
    assert info.value.line_no == 2
