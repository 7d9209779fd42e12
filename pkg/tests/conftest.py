"""Shared fixtures: a fabricated Speech Commands V1 layout with tone 'words'."""

import numpy as np
import pytest
from scipy.io import wavfile


def write_tone(path, freq, length=16000, rate=16000, amp=0.4):
    t = np.arange(length) / rate
    wave = (amp * np.sin(2 * np.pi * freq * t) * 32767).astype(np.int16)
    wavfile.write(path, rate, wave)


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("speech_commands")
    words = {"yes": 600.0, "no": 300.0, "marvin": 1200.0}
    rng = np.random.default_rng(0)
    for word, freq in words.items():
        (root / word).mkdir()
        for i in range(6):
            write_tone(root / word / f"u{i}.wav", freq + 20 * i)
    noise_dir = root / "_background_noise_"
    noise_dir.mkdir()
    for i in range(2):
        wave = (0.1 * rng.normal(size=48000) * 32767).clip(-32768, 32767).astype(np.int16)
        wavfile.write(noise_dir / f"noise{i}.wav", 16000, wave)
    (root / "validation_list.txt").write_text(
        "yes/u4.wav\nno/u4.wav\nmarvin/u4.wav\n")
    (root / "testing_list.txt").write_text(
        "yes/u5.wav\nno/u5.wav\nmarvin/u5.wav\n")
    return root
