"""Metric report serialization and schema validation."""

import json

import pytest
from jsonschema import ValidationError

from speech2image.evaluation.report import (
    REPORT_FORMAT_VERSION,
    MetricReport,
    validate_report,
)


def _report(**overrides) -> MetricReport:
    base = dict(
        is_mean=2.5,
        is_std=0.1,
        fid=12.75,
        map=0.42,
        backbone={
            "name": "desk",
            "provenance": "desk-scale-trained",
            "feature_dim": 64,
            "num_classes": 8,
        },
        protocol={"is_splits": 10, "queries_per_class": 2, "seed": 7},
        config={"global.seed": "7"},
    )
    base.update(overrides)
    return MetricReport(**base)


def test_round_trip_preserves_every_field():
    report = _report(flags={"dense_stacking": True, "relation_supervisor": False})
    text = report.to_json()
    again = MetricReport.from_json(text)
    assert again == report
    assert again.format_version == REPORT_FORMAT_VERSION


def test_save_and_load(tmp_path):
    report = _report()
    path = report.save(tmp_path / "sub" / "report.json")
    assert path.is_file()
    assert MetricReport.load(path) == report
    # file is valid standalone JSON with sorted keys
    data = json.loads(path.read_text())
    assert list(data) == sorted(data)


def test_flags_omitted_when_absent():
    data = _report().to_dict()
    assert "flags" not in data
    data = _report(flags={"dense_stacking": False}).to_dict()
    assert data["flags"] == {"dense_stacking": False}


def test_tiny_negative_fid_clamps_to_zero():
    report = _report(fid=-1e-7)
    assert report.fid == 0.0


def test_large_negative_fid_rejected():
    with pytest.raises(ValueError, match="negative"):
        _report(fid=-1e-3)


def test_schema_rejects_missing_key():
    data = _report().to_dict()
    del data["fid"]
    with pytest.raises(ValidationError):
        validate_report(data)


def test_schema_rejects_unknown_key():
    data = _report().to_dict()
    data["surprise"] = 1
    with pytest.raises(ValidationError):
        validate_report(data)


def test_schema_rejects_bad_provenance():
    data = _report().to_dict()
    data["backbone"]["provenance"] = "downloaded-from-somewhere"
    with pytest.raises(ValidationError):
        validate_report(data)


def test_schema_rejects_out_of_range_values():
    # IS can never drop below 1, mAP never above 1
    data = _report().to_dict()
    data["is_mean"] = 0.5
    with pytest.raises(ValidationError):
        validate_report(data)
    data = _report().to_dict()
    data["map"] = 1.5
    with pytest.raises(ValidationError):
        validate_report(data)


def test_schema_rejects_wrong_format_version():
    data = _report().to_dict()
    data["format_version"] = REPORT_FORMAT_VERSION + 1
    with pytest.raises(ValidationError):
        validate_report(data)


def test_from_json_rejects_invalid_payload():
    with pytest.raises(ValidationError):
        MetricReport.from_json('{"is_mean": 2.0}')
