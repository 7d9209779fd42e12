"""Audio front end and dataset assembly.

Waveforms are turned into log-Mel features with first and second temporal
derivatives stacked as channels: magnitude STFT (periodic Hann, no
centering, frames = 1 + floor((L - win) / hop)), triangular Mel filterbank
on the HTK scale (mel = 2595 log10(1 + f/700)) between f_min and f_max,
natural log with a 1e-10 floor, centered-difference deltas with replicated
edges. Each (mel bin, channel) is then rescaled so its variance across
time over the *training* corpus is exactly 1 (population variance, no mean
centering); the same frozen scale is reused for validation and test.

The speech dataset follows the Speech Commands V1 layout: target words map
to labels 0..n-1 in the documented order, every other word becomes
"unknown", and "silence" examples are random one-second crops of the
_background_noise_ files. The provided validation/testing lists are
honored verbatim.

synthetic_dataset generates a desk-scale stand-in: each class is a smooth
bump train with a class-specific period, onset, and channel envelope plus
noise, emitted in the same [frames x bins x channels] layout.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import ConfigurationError, DataError, ParameterError

logger = logging.getLogger("sodnet.features")

DEFAULT_WORDS = ("yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go")
BACKGROUND_DIR = "_background_noise_"

FEATURE_CACHE_VERSION = 1

# a FeatureTensor is a float64 ndarray [frames x n_mels x channels]
FeatureTensor = np.ndarray


@dataclass
class MelConfig:
    sample_rate: int = 16000
    win_s: float = 0.030
    hop_s: float = 0.010
    n_mels: int = 40
    f_min: float = 20.0
    f_max: float = 4000.0
    n_derivatives: int = 2
    log_floor: float = 1e-10

    def __post_init__(self):
        if not self.f_min < self.f_max <= self.sample_rate / 2:
            raise ParameterError(
                f"need f_min < f_max <= sample_rate/2, got {self.f_min}, {self.f_max}")
        if self.win < self.hop:
            raise ParameterError("window must be at least one hop long")

    @property
    def win(self) -> int:
        return int(round(self.win_s * self.sample_rate))

    @property
    def hop(self) -> int:
        return int(round(self.hop_s * self.sample_rate))

    @property
    def n_channels(self) -> int:
        return 1 + self.n_derivatives


@dataclass
class LabeledExample:
    features: np.ndarray            # [frames x n_mels x channels]
    label: int


@dataclass
class SplitDataset:
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    test: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# signal processing


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(cfg: MelConfig) -> np.ndarray:
    """Center frequency (Hz) of each triangular filter."""
    pts = np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2)
    return mel_to_hz(pts)[1:-1]


def mel_filterbank(cfg: MelConfig, n_fft: int | None = None) -> np.ndarray:
    """Triangular filters, rows (n_mels) x rfft bins (n_fft // 2 + 1)."""
    n_fft = n_fft or cfg.win
    freqs = np.arange(n_fft // 2 + 1) * (cfg.sample_rate / n_fft)
    pts = mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2))
    bank = np.zeros((cfg.n_mels, freqs.size))
    for i in range(cfg.n_mels):
        lo, mid, hi = pts[i], pts[i + 1], pts[i + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        bank[i] = np.maximum(0.0, np.minimum(up, down))
    return bank


def stft_magnitude(waveform: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Frames start at sample 0 (no centering); returns [frames x bins]."""
    x = np.asarray(waveform, dtype=np.float64)
    if x.ndim != 1:
        raise ParameterError(f"waveform must be 1-D, got shape {x.shape}")
    win, hop = cfg.win, cfg.hop
    if x.size < win:
        raise ParameterError(f"waveform shorter than one window ({x.size} < {win})")
    n_frames = 1 + (x.size - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win) / win)
    return np.abs(np.fft.rfft(x[idx] * window, axis=1))


def delta_features(x: np.ndarray, order: int = 1) -> np.ndarray:
    """Centered differences along axis 0, edges replicated; order 2 = twice."""
    if order not in (1, 2):
        raise ParameterError(f"order must be 1 or 2, got {order}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 3:
        raise ParameterError("need at least 3 samples for centered differences")
    for _ in range(order):
        padded = np.concatenate([x[:1], x, x[-1:]], axis=0)
        x = (padded[2:] - padded[:-2]) / 2.0
    return x


def log_mel_features(waveform: np.ndarray, cfg: MelConfig = MelConfig(),
                     scale: np.ndarray | None = None) -> np.ndarray:
    """[frames x n_mels x (1 + n_derivatives)]; short clips are zero-padded to 1 s.

    ``scale`` is the per-(bin, channel) corpus rescaling from
    normalization_scale; pass None for raw (unnormalized) features.
    """
    x = np.asarray(waveform, dtype=np.float64)
    one_second = cfg.sample_rate
    if x.size < one_second:
        x = np.concatenate([x, np.zeros(one_second - x.size)])
    spec = stft_magnitude(x, cfg)
    mel = spec @ mel_filterbank(cfg).T
    static = np.log(mel + cfg.log_floor)
    channels = [static]
    for order in range(1, cfg.n_derivatives + 1):
        channels.append(delta_features(static, order))
    feats = np.stack(channels, axis=2)
    if scale is not None:
        if scale.shape != feats.shape[1:]:
            raise ParameterError(
                f"scale shape {scale.shape} does not match features {feats.shape[1:]}")
        feats = feats * scale
    return feats


def normalization_scale(feature_list) -> np.ndarray:
    """1 / std per (bin, channel) across all frames of the given corpus.

    Population variance (ddof=0) in a deterministic two-pass reduction;
    bins with zero variance keep scale 1 so silence-only corpora stay finite.
    """
    if not feature_list:
        raise ParameterError("cannot compute normalization on an empty corpus")
    shape = feature_list[0].shape[1:]
    count = 0
    total = np.zeros(shape)
    for f in feature_list:
        total += f.sum(axis=0)
        count += f.shape[0]
    mean = total / count
    sq = np.zeros(shape)
    for f in feature_list:
        d = f - mean
        sq += (d * d).sum(axis=0)
    var = sq / count
    std = np.sqrt(var)
    scale = np.ones(shape)
    nz = std > 0
    scale[nz] = 1.0 / std[nz]
    return scale


# ---------------------------------------------------------------------------
# speech commands layout


def read_wav(path, expect_rate: int = 16000) -> np.ndarray:
    """16-bit PCM mono -> float64 in [-1, 1)."""
    rate, data = wavfile.read(path)
    if rate != expect_rate:
        raise DataError(f"{path}: sample rate {rate}, expected {expect_rate}")
    if data.ndim != 1:
        raise DataError(f"{path}: expected mono, got shape {data.shape}")
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise DataError(f"{path}: unsupported sample format {data.dtype}")


def _read_split_list(path: Path) -> set[str]:
    if not path.is_file():
        raise ConfigurationError(f"missing split list {path}")
    return {line.strip().replace("\\", "/") for line in path.read_text().splitlines()
            if line.strip()}


def _load_feature_cache(cache_path: Path) -> dict[str, np.ndarray]:
    if not cache_path.is_file():
        return {}
    with np.load(cache_path, allow_pickle=False) as data:
        if int(data["__cache_version__"]) != FEATURE_CACHE_VERSION:
            logger.warning("ignoring feature cache with stale version at %s", cache_path)
            return {}
        return {k: data[k] for k in data.files if k != "__cache_version__"}


def _save_feature_cache(cache_path: Path, cache: dict[str, np.ndarray]):
    payload = dict(cache)
    payload["__cache_version__"] = np.int64(FEATURE_CACHE_VERSION)
    with open(cache_path, "wb") as fh:
        np.savez(fh, **payload)


def build_speech_dataset(root_dir, split_files=None, cfg: MelConfig = MelConfig(),
                         words=None, seed: int = 0, max_per_class: int | None = None,
                         cache_path=None) -> SplitDataset:
    """Assemble train/val/test LabeledExample sets from a Speech Commands tree.

    words: target commands in label order (default the canonical ten);
    everything else becomes unknown (label len(words)), background-noise
    crops become silence (label len(words)+1). max_per_class caps each
    non-silence class per split (deterministic subsample) for desk-scale
    subsets. The normalization scale is fit on the training split only.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise ConfigurationError(f"dataset root {root} does not exist")
    words = list(words) if words is not None else list(DEFAULT_WORDS)
    unknown_label = len(words)
    silence_label = len(words) + 1

    if split_files is None:
        split_files = (root / "validation_list.txt", root / "testing_list.txt")
    val_set = _read_split_list(Path(split_files[0]))
    test_set = _read_split_list(Path(split_files[1]))

    by_split: dict[str, dict[int, list[Path]]] = {s: {} for s in ("train", "val", "test")}
    for wav in sorted(root.glob("*/*.wav")):
        if wav.parent.name == BACKGROUND_DIR:
            continue
        rel = f"{wav.parent.name}/{wav.name}"
        split = "val" if rel in val_set else "test" if rel in test_set else "train"
        label = words.index(wav.parent.name) if wav.parent.name in words else unknown_label
        by_split[split].setdefault(label, []).append(wav)

    rng = np.random.default_rng(seed)
    if max_per_class is not None:
        for split in by_split:
            for label, paths in by_split[split].items():
                if len(paths) > max_per_class:
                    pick = rng.choice(len(paths), size=max_per_class, replace=False)
                    by_split[split][label] = [paths[i] for i in sorted(pick)]

    cache: dict[str, np.ndarray] = {}
    if cache_path is not None:
        cache = _load_feature_cache(Path(cache_path))
    cache_dirty = False

    def features_for(path: Path) -> np.ndarray | None:
        key = f"{path.parent.name}/{path.name}"
        if key in cache:
            return cache[key]
        nonlocal cache_dirty
        try:
            wavform = read_wav(path, cfg.sample_rate)
        except (DataError, ValueError, OSError) as exc:
            logger.warning("skipping unreadable audio %s (%s)", path, exc)
            return None
        feats = log_mel_features(wavform, cfg)
        cache[key] = feats
        cache_dirty = True
        return feats

    noise_files = sorted((root / BACKGROUND_DIR).glob("*.wav"))
    noise_waves = []
    for path in noise_files:
        try:
            noise_waves.append(read_wav(path, cfg.sample_rate))
        except (DataError, ValueError, OSError) as exc:
            logger.warning("skipping unreadable noise file %s (%s)", path, exc)

    dataset = SplitDataset(meta={"words": words, "unknown_label": unknown_label,
                                 "silence_label": silence_label,
                                 "n_classes": len(words) + 2})
    raw: dict[str, list[LabeledExample]] = {"train": [], "val": [], "test": []}
    for split in ("train", "val", "test"):
        for label in sorted(by_split[split]):
            for path in by_split[split][label]:
                feats = features_for(path)
                if feats is not None:
                    raw[split].append(LabeledExample(features=feats, label=label))
        # as many silence crops as the mean per-command count for the split
        word_counts = [len(by_split[split].get(lbl, [])) for lbl in range(len(words))]
        n_silence = int(round(float(np.mean(word_counts)))) if word_counts else 0
        split_rng = np.random.default_rng(
            zlib.adler32(split.encode()) ^ (seed & 0xFFFFFFFF))
        for _ in range(n_silence):
            if not noise_waves:
                break
            wave = noise_waves[int(split_rng.integers(0, len(noise_waves)))]
            if wave.size <= cfg.sample_rate:
                crop = wave
            else:
                off = int(split_rng.integers(0, wave.size - cfg.sample_rate))
                crop = wave[off:off + cfg.sample_rate]
            raw[split].append(LabeledExample(features=log_mel_features(crop, cfg),
                                             label=silence_label))

    if cache_path is not None and cache_dirty:
        _save_feature_cache(Path(cache_path), cache)

    if not raw["train"]:
        raise ConfigurationError(f"no training utterances found under {root}")
    scale = normalization_scale([ex.features for ex in raw["train"]])
    dataset.meta["normalization_scale"] = scale
    for split in ("train", "val", "test"):
        examples = [LabeledExample(features=ex.features * scale, label=ex.label)
                    for ex in raw[split]]
        setattr(dataset, split, examples)
    return dataset


# ---------------------------------------------------------------------------
# synthetic desk-scale task


def synthetic_dataset(n_classes: int = 4, n_examples: int = 60, T: int = 60,
                      dims: int = 8, seed: int = 0, noise: float = 0.3) -> SplitDataset:
    """Deterministic multi-channel bump-train classification task.

    Each class gets a distinct bump period, onset, and smooth channel
    envelope; examples add phase jitter, amplitude jitter, and Gaussian
    noise. n_examples is the per-class training count; val and test each
    hold n_examples // 3 per class. Features come out [T x dims x 1].
    """
    if n_classes < 2:
        raise ParameterError(f"need at least 2 classes, got {n_classes}")
    rng = np.random.default_rng(seed)
    periods = np.array([8 + 5 * c for c in range(n_classes)], dtype=np.float64)
    onsets = np.array([(3 * c) % int(p) for c, p in enumerate(periods)], dtype=np.float64)
    envelopes = rng.uniform(0.2, 1.0, size=(n_classes, dims))
    envelopes *= rng.choice([-1.0, 1.0], size=(n_classes, dims))

    t = np.arange(T, dtype=np.float64)

    def make_example(c: int) -> LabeledExample:
        jitter = rng.uniform(-1.5, 1.5)
        amp = rng.uniform(0.9, 1.1) * 2.0
        phase = np.mod(t - onsets[c] - jitter, periods[c]) - periods[c] / 2.0
        bump = np.exp(-0.5 * (phase / (periods[c] / 6.0)) ** 2)
        sig = amp * bump[:, None] * envelopes[c][None, :]
        sig = sig + noise * rng.normal(size=(T, dims))
        return LabeledExample(features=sig[:, :, None], label=c)

    n_eval = max(1, n_examples // 3)
    dataset = SplitDataset(meta={"n_classes": n_classes, "T": T, "dims": dims})
    for c in range(n_classes):
        dataset.train.extend(make_example(c) for _ in range(n_examples))
    for c in range(n_classes):
        dataset.val.extend(make_example(c) for _ in range(n_eval))
    for c in range(n_classes):
        dataset.test.extend(make_example(c) for _ in range(n_eval))
    return dataset
