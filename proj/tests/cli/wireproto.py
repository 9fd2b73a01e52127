# SPDX-License-Identifier: Apache-2.0
"""Independent Python codec for WireFrames and recorded streams.

Written from the byte layout alone so the engine's decoder is checked
against a second implementation, the same way a capture adapter would
talk to it.
"""
import json
import math
import struct
from dataclasses import dataclass, field

MAGIC = b"ESOP"  # 0x504F5345 little-endian
VERSION = 1
KEYPOINTS_2D, KEYPOINTS_3D, JOINT_CONFIG = 0, 1, 2

_HEADER = struct.Struct("<4sBBHQI")
_ENTRY = struct.Struct("<Bffff")


@dataclass
class Frame:
    type: int = KEYPOINTS_3D
    timestamp_us: int = 0
    sequence: int = 0
    entries: list = field(default_factory=list)  # (id, x, y, z, confidence)


def encode(frame):
    out = bytearray(_HEADER.pack(MAGIC, VERSION, frame.type, len(frame.entries), frame.timestamp_us, frame.sequence))
    for e in frame.entries:
        out += _ENTRY.pack(*e)
    return bytes(out)


def decode(data):
    if len(data) < _HEADER.size:
        raise ValueError("truncated header")
    magic, version, ftype, count, ts, seq = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION or ftype > JOINT_CONFIG:
        raise ValueError("bad header")
    if len(data) != _HEADER.size + count * _ENTRY.size:
        raise ValueError("length does not match entry count")
    entries = [_ENTRY.unpack_from(data, _HEADER.size + i * _ENTRY.size) for i in range(count)]
    return Frame(ftype, ts, seq, entries)


def encode_record(frame):
    body = encode(frame)
    return struct.pack("<I", len(body)) + body


def read_records(data):
    frames, pos = [], 0
    while pos < len(data):
        (n,) = struct.unpack_from("<I", data, pos)
        frames.append(decode(data[pos + 4 : pos + 4 + n]))
        pos += 4 + n
    return frames


def load_scheme(path):
    with open(path) as f:
        doc = json.load(f)
    return {lm["name"]: lm["id"] for lm in doc["landmarks"]}


# ---------------------------------------------------------------------------
# a small scripted performer, y up, meters


def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _scale(a, s):
    return tuple(x * s for x in a)


def performer(t):
    p = {}
    for side, sign, phase in (("left", 1.0, 0.0), ("right", -1.0, 2.0)):
        shoulder = (sign * 0.19, 1.45, 0.0)
        abduct = 0.7 + 0.4 * math.sin(1.7 * t + phase)
        flex = 0.9 + 0.5 * math.sin(1.1 * t + phase)
        upper = (sign * math.sin(abduct), -math.cos(abduct), 0.0)
        fore = _add(_scale(upper, math.cos(flex)), (0.0, 0.0, math.sin(flex)))
        elbow = _add(shoulder, _scale(upper, 0.28))
        wrist = _add(elbow, _scale(fore, 0.25))
        p[side + "_shoulder"], p[side + "_elbow"], p[side + "_wrist"] = shoulder, elbow, wrist
        for k, d in (("pinky", 0.08), ("index", 0.09), ("thumb", 0.05)):
            p[f"{side}_{k}"] = _add(wrist, _scale(fore, d))
        hip = (sign * 0.11, 0.95, 0.0)
        h = 0.25 * math.sin(1.3 * t + phase)
        knee = _add(hip, (0.0, -0.42 * math.cos(h), 0.42 * math.sin(h)))
        ankle = _add(knee, (0.0, -0.40, 0.05))
        p[side + "_hip"], p[side + "_knee"], p[side + "_ankle"] = hip, knee, ankle
        p[side + "_heel"] = _add(ankle, (0.0, -0.05, -0.05))
        p[side + "_foot_index"] = _add(ankle, (0.0, -0.06, 0.15))
        for k, dx in (("eye_inner", 0.018), ("eye", 0.032), ("eye_outer", 0.046)):
            p[f"{side}_{k}"] = (sign * dx, 1.655, 0.075)
        p[side + "_ear"] = (sign * 0.075, 1.63, 0.0)
    p["nose"] = (0.0, 1.62, 0.09)
    p["mouth_left"], p["mouth_right"] = (0.025, 1.585, 0.075), (-0.025, 1.585, 0.075)
    return p


def keypoint_frame(scheme, t, seq, project=None):
    named = performer(t)
    entries = []
    for name, lid in sorted(scheme.items(), key=lambda kv: kv[1]):
        x, y, z = named[name]
        if project is not None:
            x, y = project((x, y, z))
            z = 0.0
        entries.append((lid, x, y, z, 0.95))
    return Frame(KEYPOINTS_2D if project else KEYPOINTS_3D, round(t * 1e6), seq, entries)


def recording(scheme, seconds, fps=30.0, project=None):
    n = int(seconds * fps + 1e-9)
    return b"".join(encode_record(keypoint_frame(scheme, i / fps, i, project)) for i in range(n))


def projector(camera):
    """Pinhole projection with world->camera rotation and translation."""
    r, tr = camera["rotation"], camera["translation"]

    def project(x):
        c = [sum(r[i][j] * x[j] for j in range(3)) + tr[i] for i in range(3)]
        return camera["fx"] * c[0] / c[2] + camera["cx"], camera["fy"] * c[1] / c[2] + camera["cy"]

    return project
