from __future__ import annotations

import numpy as np
import pytest

from choirf0.signal_io import AudioClip


def sine_clip(freq: float, duration: float = 1.0, sr: int = 44100, amp: float = 0.5,
              phase: float = 0.0) -> AudioClip:
    t = np.arange(int(round(duration * sr))) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t + phase), sr)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
