import json

import pytest

from align.errors import FrameIoError, MalformedRecord
from bench.metrics import (
    TRIAL_FIELDS,
    TrialRecord,
    aggregate,
    breakdown_by_sender,
    read_trials_csv,
    write_loss_csv,
    write_report_json,
    write_trials_csv,
)


def record(index, status="ALIGNED", sender="agent_1", est_index=2, true_index=2, in_range=True,
           planar=0.5, rotation=1.0, est_dev=30, true_dev=40, shared=None):
    aligned = status == "ALIGNED"
    return TrialRecord(
        scenario_index=index // 10,
        message_index=index % 10,
        seed=index // 10,
        sender=sender,
        method="freealign",
        status=status,
        true_buffer_index=true_index,
        in_buffer_range=in_range,
        true_latency_ms=true_index * 100,
        true_clock_dev_ms=true_dev,
        true_dx=1.0 / 3.0,
        true_dy=-2.0,
        true_dtheta_deg=10.0,
        est_buffer_index=est_index if aligned else None,
        est_latency_ms=est_index * 100 if aligned else None,
        est_clock_dev_ms=est_dev if aligned else None,
        est_dx=0.1 if aligned else None,
        est_dy=0.2 if aligned else None,
        est_dtheta_deg=9.0 if aligned else None,
        planar_error_m=planar if aligned else None,
        rotation_error_deg=rotation if aligned else None,
        psi=8 if aligned else None,
        epsilon=0.01 if aligned else None,
        shared_objects=shared,
    )


@pytest.fixture
def records():
    return [
        record(0, shared=12),
        record(1, planar=4.0, rotation=3.0),
        record(2, est_index=3, est_dev=140),
        record(3, status="REJECTED"),
        record(11, sender="agent_2", in_range=False, status="REJECTED"),
        record(12, sender="agent_2", in_range=False, est_index=0, planar=1.0),
    ]


def test_time_correct_semantics(records):
    assert records[0].time_correct
    assert not records[2].time_correct
    assert not records[3].time_correct
    assert records[4].time_correct
    assert not records[5].time_correct


def test_aggregate(records):
    report = aggregate(records, "freealign")
    assert report.num_trials == 6
    assert report.num_aligned == 4
    assert report.num_rejected == 2
    assert report.rejection_rate == pytest.approx(2 / 6)
    assert report.mean_planar_error_m == pytest.approx((0.5 + 4.0 + 0.5 + 1.0) / 4)
    assert report.mean_rotation_error_deg == pytest.approx((1.0 + 3.0 + 1.0 + 1.0) / 4)
    assert report.error_rate == pytest.approx(1 / 4)
    assert report.sync_accuracy_all == pytest.approx(3 / 6)
    assert report.sync_accuracy_aligned == pytest.approx(2 / 4)
    # 범위 밖 시행은 δt 오차에서 제외
    assert report.mean_abs_dt_error_ms == pytest.approx((10 + 10 + 100) / 3)


def test_aggregate_counting_rejections(records):
    report = aggregate(records, count_rejected_as_error=True)
    assert report.error_rate == pytest.approx(3 / 6)


def test_aggregate_empty():
    report = aggregate([])
    assert report.num_trials == 0
    assert report.rejection_rate is None
    assert report.mean_planar_error_m is None
    assert report.error_rate is None


def test_breakdown_by_sender(records):
    parts = breakdown_by_sender(aggregate(records, "run"))
    assert list(parts) == ["agent_1", "agent_2"]
    assert parts["agent_1"].num_trials == 4
    assert parts["agent_2"].num_trials == 2
    assert parts["agent_2"].label == "run/agent_2"


def test_csv_reproduces_aggregates(tmp_path, records):
    path = write_trials_csv(records, tmp_path / "trials.csv")
    loaded = read_trials_csv(path)
    assert loaded == sorted(records, key=lambda r: (r.scenario_index, r.message_index))
    assert aggregate(loaded, "x").to_dict() == aggregate(records, "x").to_dict()


def test_csv_header_and_float_format(tmp_path, records):
    path = write_trials_csv(records, tmp_path / "trials.csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].split(",") == TRIAL_FIELDS
    assert repr(1.0 / 3.0) in lines[1]
    assert len(lines) == len(records) + 1


def test_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "trials.csv"
    path.write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(MalformedRecord):
        read_trials_csv(path)


def test_csv_rejects_bad_value(tmp_path, records):
    path = write_trials_csv(records[:1], tmp_path / "trials.csv")
    header, row = path.read_text(encoding="utf-8").splitlines()
    row = "oops" + row[row.index(","):]
    path.write_text(f"{header}\n{row}\n", encoding="utf-8")
    with pytest.raises(MalformedRecord) as info:
        read_trials_csv(path)
    assert info.value.line_no == 2


def test_read_missing_csv(tmp_path):
    with pytest.raises(FrameIoError):
        read_trials_csv(tmp_path / "none.csv")


def test_report_json(tmp_path, records):
    path = write_report_json({"freealign": aggregate(records, "freealign"), "seed": 3}, tmp_path / "report.json")
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["seed"] == 3
    assert data["freealign"]["num_trials"] == 6
    assert "records" not in data["freealign"]


def test_loss_csv(tmp_path):
    path = write_loss_csv([1.5, 0.75], tmp_path / "loss.csv")
    assert path.read_text(encoding="utf-8").splitlines() == ["epoch,loss", "0,1.5", "1,0.75"]
