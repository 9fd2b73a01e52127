# SPDX-License-Identifier: Apache-2.0
import os
import socket
import subprocess
from pathlib import Path

import pytest

import wireproto

ROOT = Path(__file__).resolve().parents[2]


@pytest.fixture(scope="session")
def data_dir():
    return Path(os.environ.get("POSEBRIDGE_DATA", ROOT / "data"))


@pytest.fixture(scope="session")
def scheme(data_dir):
    return wireproto.load_scheme(data_dir / "schemes" / "mediapipe33.json")


@pytest.fixture(scope="session")
def bin_path():
    path = os.environ.get("POSEBRIDGE_BIN", str(ROOT / "build" / "posebridge"))
    if not Path(path).exists():
        pytest.skip(f"posebridge binary not built at {path}")
    return path


@pytest.fixture
def cli(bin_path):
    def run(*args, timeout=60, **kw):
        return subprocess.run([bin_path, *map(str, args)], capture_output=True, timeout=timeout, **kw)

    return run


@pytest.fixture
def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]
