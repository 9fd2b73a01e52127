# SPDX-License-Identifier: Apache-2.0
"""Streams produced outside the engine must decode and drive it end to end."""
import json

import wireproto


def test_python_encoder_matches_hand_vectors():
    empty = wireproto.Frame(type=wireproto.KEYPOINTS_3D)
    assert wireproto.encode(empty) == bytes([0x45, 0x53, 0x4F, 0x50, 1, 1, 0, 0] + [0] * 12)

    f = wireproto.Frame(wireproto.JOINT_CONFIG, 0x0102030405060708, 0xDEADBEEF, [(3, 1.0, -2.0, 0.5, 1.0)])
    assert wireproto.encode(f).hex() == (
        "45534f50" "01" "02" "0100" "0807060504030201" "efbeadde" "03" "0000803f" "000000c0" "0000003f" "0000803f"
    )
    assert wireproto.encode_record(empty)[:4] == bytes([0x14, 0, 0, 0])


def test_scheme_has_33_contiguous_landmark_ids(scheme):
    assert sorted(scheme.values()) == list(range(33))
    assert scheme["nose"] == 0 and scheme["left_shoulder"] == 11 and scheme["right_foot_index"] == 32


def test_foreign_recording_drives_pipeline_to_joint_configs(cli, scheme, tmp_path):
    rec = tmp_path / "performer.pbr"
    rec.write_bytes(wireproto.recording(scheme, seconds=2.0))
    out = tmp_path / "out.pbr"
    res = cli("run", "--input", f"file:{rec}", "--output", f"file:{out}", "--metrics", tmp_path / "m.json")
    assert res.returncode == 0, res.stderr.decode()

    frames = wireproto.read_records(out.read_bytes())
    assert frames and all(f.type == wireproto.JOINT_CONFIG for f in frames)
    seqs = [f.sequence for f in frames]
    assert seqs == sorted(seqs)
    metrics = json.loads((tmp_path / "m.json").read_text())
    source = next(s for s in metrics["stages"] if s["name"] == "source")
    assert source["frames_out"] == 60
    assert source["errors"] == 0
    assert all(s["errors"] == 0 for s in metrics["stages"])
    assert metrics["sink"]["fresh"] == 60


def test_engine_output_decodes_in_python(cli, tmp_path):
    out = tmp_path / "out.pbr"
    assert cli("run", "--input", "synthetic:1", "--output", f"file:{out}").returncode == 0
    frames = wireproto.read_records(out.read_bytes())
    assert len(frames) == 30
    ids = [e[0] for e in frames[0].entries]
    assert ids == list(range(len(ids)))
    assert all(e[4] == 1.0 for f in frames for e in f.entries)  # fresh: confidence carries "not stale"
