import numpy as np
import pytest

from fpcg.audio_io import Waveform


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tone16k():
    t = np.arange(16000) / 16000
    return Waveform(0.5 * np.sin(2 * np.pi * 300.0 * t), 16000)


def sine(freq_hz: float, duration_s: float, rate: int, amp: float = 0.5) -> Waveform:
    t = np.arange(int(duration_s * rate)) / rate
    return Waveform(amp * np.sin(2 * np.pi * freq_hz * t), rate)


def measured_snr_db(clean: np.ndarray, signal: np.ndarray) -> float:
    noise = signal - clean
    return 10.0 * np.log10(np.mean(clean**2) / np.mean(noise**2))
