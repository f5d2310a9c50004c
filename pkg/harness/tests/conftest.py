import subprocess
import wave
from pathlib import Path

import numpy as np
import pytest


def write_pseudo_speech(path, seconds, rng):
    """Amplitude-modulated noise clip in the simulator's WAV format."""
    n = int(16000 * seconds)
    env = 0.55 + 0.45 * np.sin(2 * np.pi * rng.uniform(1.5, 3.5)
                               * np.arange(n) / 16000 + rng.uniform(0, 6))
    x = np.clip(rng.standard_normal(n) * env * 0.1, -1, 1)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(16000)
        wf.writeframes((x * 32767).astype("<i2").tobytes())


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    rng = np.random.default_rng(0)
    for i in range(6):
        write_pseudo_speech(d / f"clip{i}.wav", rng.uniform(1.3, 1.7), rng)
    return d


def simulate(out_dir, n, seed, corpus_dir):
    """Scene generation through the engine's public CLI (external interface)."""
    res = subprocess.run(
        ["avtse", "simulate", "--out", str(out_dir), "--n", str(n),
         "--seed", str(seed), "--speech", str(corpus_dir)],
        capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    return Path(out_dir)


@pytest.fixture(scope="session")
def scene_dir(tmp_path_factory, corpus_dir):
    return simulate(tmp_path_factory.mktemp("scenes"), 20, 11, corpus_dir)


@pytest.fixture(scope="session")
def artifacts_dir():
    d = Path(__file__).resolve().parent.parent / "artifacts"
    d.mkdir(exist_ok=True)
    return d
