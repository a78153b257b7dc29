import json
import os

import numpy as np
import pytest

from petkin import (
    DynamicVolume,
    FormatError,
    InputFunction,
    LabelMap,
    ParametricVolume,
    read_idif,
    read_tac_csv,
    read_volume,
    write_idif,
    write_tac_csv,
    write_volume,
    wb_fdg_schedule,
)
from petkin.volumes import FIT_CHANNELS


def random_dynamic(schedule, seed=0):
    rng = np.random.default_rng(seed)
    data = rng.random((schedule.n_frames, 3, 4, 5), dtype=np.float32)
    return DynamicVolume(data, schedule, (2.5, 2.0, 1.5))


class TestVolumeRoundTrip:
    def test_dynamic_bitwise(self, tmp_path, schedule):
        vol = random_dynamic(schedule)
        write_volume(tmp_path / "dyn", vol)
        back = read_volume(tmp_path / "dyn.raw")
        assert isinstance(back, DynamicVolume)
        assert back.data.tobytes() == vol.data.tobytes()
        assert np.array_equal(back.schedule.starts, vol.schedule.starts)
        assert back.spacing_mm == vol.spacing_mm

    def test_labels_bitwise(self, tmp_path):
        rng = np.random.default_rng(1)
        labels = LabelMap(rng.integers(0, 3, size=(3, 4, 5)).astype(np.uint8),
                          {1: "a", 2: "b"})
        write_volume(tmp_path / "lab", labels)
        back = read_volume(tmp_path / "lab")
        assert isinstance(back, LabelMap)
        assert back.labels.tobytes() == labels.labels.tobytes()
        assert back.legend == labels.legend

    def test_parametric_bitwise(self, tmp_path):
        rng = np.random.default_rng(2)
        pv = ParametricVolume(rng.random((5, 3, 4, 5), dtype=np.float32),
                              FIT_CHANNELS)
        write_volume(tmp_path / "par", pv)
        back = read_volume(tmp_path / "par")
        assert isinstance(back, ParametricVolume)
        assert back.data.tobytes() == pv.data.tobytes()
        assert back.channels == pv.channels

    def test_reference_schedule_loads_with_full_end_time(self, tmp_path):
        vol = random_dynamic(wb_fdg_schedule())
        write_volume(tmp_path / "dyn", vol)
        back = read_volume(tmp_path / "dyn")
        assert back.schedule.n_frames == 62
        assert back.schedule.end_time == 3900.0

    def test_truncated_payload_names_byte_counts(self, tmp_path, schedule):
        vol = random_dynamic(schedule)
        write_volume(tmp_path / "dyn", vol)
        raw = tmp_path / "dyn.raw"
        with open(raw, "r+b") as fh:
            fh.truncate(100)
        with pytest.raises(FormatError) as err:
            read_volume(raw)
        msg = str(err.value)
        assert "100" in msg and str(vol.data.nbytes) in msg

    def test_magic_and_version_checked(self, tmp_path, schedule):
        vol = random_dynamic(schedule)
        write_volume(tmp_path / "dyn", vol)
        meta = json.loads((tmp_path / "dyn.json").read_text())
        meta["magic"] = "something-else"
        (tmp_path / "dyn.json").write_text(json.dumps(meta))
        with pytest.raises(FormatError, match="magic"):
            read_volume(tmp_path / "dyn")
        meta = json.loads((tmp_path / "dyn.json").read_text())
        meta["magic"] = "petkin-volume"
        meta["format_version"] = "2.0"
        (tmp_path / "dyn.json").write_text(json.dumps(meta))
        with pytest.raises(FormatError, match="version"):
            read_volume(tmp_path / "dyn")

    def test_schedule_dims_consistency(self, tmp_path, schedule):
        vol = random_dynamic(schedule)
        write_volume(tmp_path / "dyn", vol)
        meta = json.loads((tmp_path / "dyn.json").read_text())
        meta["frame_schedule"]["durations_s"] = \
            meta["frame_schedule"]["durations_s"][:-1]
        meta["frame_schedule"]["starts_s"] = \
            meta["frame_schedule"]["starts_s"][:-1]
        (tmp_path / "dyn.json").write_text(json.dumps(meta))
        with pytest.raises(FormatError, match="frames"):
            read_volume(tmp_path / "dyn")

    def test_missing_files(self, tmp_path):
        with pytest.raises(FormatError, match="sidecar"):
            read_volume(tmp_path / "nope")


class TestIdif:
    def test_constant_round_trip(self, tmp_path, schedule):
        flat = InputFunction([0.0, 3900.0], [7.5, 7.5])
        write_idif(tmp_path / "idif.csv", flat, schedule)
        back, sched = read_idif(tmp_path / "idif.csv")
        assert sched.n_frames == 62 and sched.end_time == 3900.0
        assert np.allclose(back.values, 7.5)
        assert np.array_equal(back.times_s, schedule.mid_times)

    def test_reference_62_row_file_validates(self, tmp_path, aif, schedule):
        write_idif(tmp_path / "idif.csv", aif, schedule)
        back, sched = read_idif(tmp_path / "idif.csv")
        assert sched.n_frames == 62
        assert np.array_equal(back.values, aif(schedule.mid_times))

    def test_empty_file_rejected(self, tmp_path):
        (tmp_path / "idif.csv").write_text("")
        with pytest.raises(FormatError, match="empty"):
            read_idif(tmp_path / "idif.csv")

    def test_negative_activity_rejected(self, tmp_path):
        (tmp_path / "idif.csv").write_text(
            "frame_start_s,duration_s,activity_bq_ml\n0,10,5\n10,10,-1\n20,10,3\n")
        with pytest.raises(FormatError, match="negative"):
            read_idif(tmp_path / "idif.csv")

    def test_non_monotone_times_rejected(self, tmp_path):
        (tmp_path / "idif.csv").write_text(
            "frame_start_s,duration_s,activity_bq_ml\n0,10,5\n30,10,1\n20,10,3\n")
        with pytest.raises(FormatError):
            read_idif(tmp_path / "idif.csv")

    def test_header_checked(self, tmp_path):
        (tmp_path / "idif.csv").write_text("a,b,c\n0,10,5\n10,10,5\n")
        with pytest.raises(FormatError, match="header"):
            read_idif(tmp_path / "idif.csv")


class TestTacCsv:
    def test_round_trip(self, tmp_path, schedule):
        rng = np.random.default_rng(5)
        tac = rng.random(62)
        write_tac_csv(tmp_path / "tac.csv", schedule, tac)
        back, sched = read_tac_csv(tmp_path / "tac.csv")
        assert np.array_equal(back, tac)
        assert sched.end_time == schedule.end_time
