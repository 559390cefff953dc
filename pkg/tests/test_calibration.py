from __future__ import annotations

import json

import pytest

from noisyosc.calibration import CalibrationError, CalibrationRecord
from noisyosc.scenario import builtin


def test_convention_selected_with_small_residuals(calibration_record):
    assert calibration_record.convention == "complex-riccati-x2"
    chosen = calibration_record.residuals[calibration_record.convention]
    assert chosen["static"] < 1e-3
    assert chosen["jump"] < 1e-3
    assert max(chosen.values()) < 1e-3


def test_literal_reading_is_rejected(calibration_record):
    assert calibration_record.residuals["literal"]["static"] > 0.5


def test_record_covers_families(calibration_record):
    for name in ("static", "jump", "tanh", "noisy_default", "noisy_static"):
        assert calibration_record.covers(builtin(name))


def test_round_trip(tmp_path, calibration_record):
    path = tmp_path / "cal.json"
    calibration_record.save(path)
    assert CalibrationRecord.load(path) == calibration_record


@pytest.mark.parametrize(
    "mutate, match",
    [
        (lambda d: "{not json", "unreadable"),
        (lambda d: json.dumps([1, 2]), "not a JSON object"),
        (lambda d: json.dumps({k: v for k, v in d.items() if k != "convention"}), "lacks convention"),
        (lambda d: json.dumps({**d, "convention": "mystery"}), "unknown convention"),
        (lambda d: json.dumps({**d, "schema_version": 99}), "schema"),
        (
            lambda d: json.dumps({**d, "residuals": {d["convention"]: {"static": 0.5}}}),
            "above",
        ),
    ],
)
def test_corrupt_records_refused_with_instructions(tmp_path, calibration_record, mutate, match):
    path = tmp_path / "cal.json"
    path.write_text(mutate(json.loads(calibration_record.to_json())))
    with pytest.raises(CalibrationError, match=match) as info:
        CalibrationRecord.load(path)
    assert "noisyosc calibrate" in str(info.value)


def test_missing_record(tmp_path):
    with pytest.raises(CalibrationError, match="noisyosc calibrate"):
        CalibrationRecord.load(tmp_path / "absent.json")
