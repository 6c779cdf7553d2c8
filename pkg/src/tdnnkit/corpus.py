"""Deterministic synthetic corpus of coarticulated phone sequences.

Each phone has a fixed mean feature vector; frames near a phone boundary
linearly interpolate between the adjacent phone means, so temporal context
carries information a single frame cannot.  A per-speaker constant offset and
Gaussian noise are added on top.  Audio mode renders each phone as two summed
sinusoids instead, to exercise the feature frontend end to end.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, FormatError
from .features import (
    AudioBuffer,
    FeatureMatrix,
    read_features,
    read_wav,
    write_features,
    write_wav,
)

SPEAKER_OFFSET_SCALE = 0.5

# Audio-mode rendering constants, matched to the frontend defaults.
AUDIO_SAMPLE_RATE = 16000
AUDIO_FRAME_SHIFT = 160
AUDIO_FRAME_LENGTH = 400
AUDIO_TONE_AMPLITUDE = 0.3
AUDIO_NOISE_SCALE = 0.02
FORMANT_RANGE_HZ = (300.0, 3500.0)


@dataclass(frozen=True)
class CorpusConfig:
    num_phones: int = 8
    num_utterances: int = 2200
    min_phone_duration: int = 5
    max_phone_duration: int = 15
    min_utterance_phones: int = 5
    max_utterance_phones: int = 15
    coarticulation_frames: int = 3
    noise_sigma: float = 0.3
    feature_dim: int = 40
    num_speakers: int = 10
    mode: str = "features"
    seed: int = 0

    def __post_init__(self):
        if self.num_phones < 2:
            raise ConfigurationError("need at least 2 phones")
        if self.min_phone_duration < 1 or self.max_phone_duration < self.min_phone_duration:
            raise ConfigurationError("phone durations must satisfy 1 <= min <= max")
        if self.min_utterance_phones < 1 or self.max_utterance_phones < self.min_utterance_phones:
            raise ConfigurationError("utterance lengths must satisfy 1 <= min <= max")
        if self.coarticulation_frames >= self.min_phone_duration:
            raise ConfigurationError(
                "coarticulation_frames must be smaller than the minimum phone duration"
            )
        if self.coarticulation_frames < 0:
            raise ConfigurationError("coarticulation_frames must be non-negative")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be non-negative")
        if self.feature_dim < 1:
            raise ConfigurationError("feature_dim must be positive")
        if self.num_speakers < 1:
            raise ConfigurationError("need at least one speaker")
        if self.num_utterances < 1:
            raise ConfigurationError("need at least one utterance")
        if self.mode not in ("features", "audio"):
            raise ConfigurationError(f"mode must be 'features' or 'audio', got {self.mode!r}")


@dataclass
class CorpusModel:
    """The generative parameters behind a corpus, fixed by the config seed."""

    phone_means: np.ndarray
    speaker_offsets: np.ndarray
    formants: np.ndarray


@dataclass
class ManifestEntry:
    utt_id: str
    speaker_id: str
    payload_path: str
    label_path: str


@dataclass
class CorpusManifest:
    entries: list
    base_dir: Path | None = None

    def __len__(self):
        return len(self.entries)

    def resolve(self, relative: str) -> Path:
        path = Path(relative)
        if path.is_absolute() or self.base_dir is None:
            return path
        return self.base_dir / path


@dataclass
class Utterance:
    utt_id: str
    speaker_id: str
    labels: np.ndarray
    frames: FeatureMatrix | None = None
    audio: AudioBuffer | None = None

    @property
    def transcript(self) -> np.ndarray:
        return collapse_labels(self.labels)


def collapse_labels(labels: np.ndarray) -> np.ndarray:
    """Collapse consecutive duplicate labels into a symbol sequence."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] == 0:
        return labels
    keep = np.ones(labels.shape[0], dtype=bool)
    keep[1:] = labels[1:] != labels[:-1]
    return labels[keep]


def corpus_model(cfg: CorpusConfig) -> CorpusModel:
    """Phone means, speaker offsets and formant pairs for a config."""
    model_ss, _ = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(model_ss)
    phone_means = rng.standard_normal((cfg.num_phones, cfg.feature_dim))
    speaker_offsets = SPEAKER_OFFSET_SCALE * rng.standard_normal(
        (cfg.num_speakers, cfg.feature_dim)
    )
    lo, hi = FORMANT_RANGE_HZ
    formants = np.sort(rng.uniform(lo, hi, size=(cfg.num_phones, 2)), axis=1)
    return CorpusModel(phone_means, speaker_offsets, formants)


def _sample_phone_string(rng, cfg: CorpusConfig) -> np.ndarray:
    """Uniform phone string without immediate repeats, so the transcript
    equals the sampled string."""
    length = int(rng.integers(cfg.min_utterance_phones, cfg.max_utterance_phones + 1))
    phones = np.empty(length, dtype=np.int64)
    phones[0] = rng.integers(cfg.num_phones)
    for i in range(1, length):
        step = rng.integers(1, cfg.num_phones)
        phones[i] = (phones[i - 1] + step) % cfg.num_phones
    return phones


def clean_trajectory(cfg: CorpusConfig, model: CorpusModel, phones: np.ndarray, durations: np.ndarray) -> np.ndarray:
    """Noise-free, speaker-free feature trajectory for a phone/duration string.

    Mid-phone frames sit exactly on the phone mean; the coarticulation_frames
    frames straddling each internal boundary interpolate linearly between the
    two adjacent phone means.
    """
    labels = np.repeat(phones, durations)
    clean = model.phone_means[labels].copy()
    c = cfg.coarticulation_frames
    if c > 0:
        boundaries = np.cumsum(durations)[:-1]
        for k, b in enumerate(boundaries):
            mu_prev = model.phone_means[phones[k]]
            mu_next = model.phone_means[phones[k + 1]]
            for j in range(c):
                pos = b - (c // 2) + j
                u = (j + 1) / (c + 1)
                clean[pos] = (1.0 - u) * mu_prev + u * mu_next
    return clean


def _render_audio(rng, cfg: CorpusConfig, model: CorpusModel, phones: np.ndarray, durations: np.ndarray) -> AudioBuffer:
    total_frames = int(durations.sum())
    num_samples = (total_frames - 1) * AUDIO_FRAME_SHIFT + AUDIO_FRAME_LENGTH
    signal = np.zeros(num_samples, dtype=np.float64)
    sample_pos = 0
    for k, phone in enumerate(phones):
        seg_samples = int(durations[k]) * AUDIO_FRAME_SHIFT
        if k == len(phones) - 1:
            seg_samples = num_samples - sample_pos
        t = np.arange(seg_samples) / AUDIO_SAMPLE_RATE
        f1, f2 = model.formants[phone]
        tone = 0.5 * (np.sin(2 * np.pi * f1 * t) + np.sin(2 * np.pi * f2 * t))
        signal[sample_pos : sample_pos + seg_samples] = AUDIO_TONE_AMPLITUDE * tone
        sample_pos += seg_samples
    if cfg.noise_sigma > 0:
        signal = signal + AUDIO_NOISE_SCALE * cfg.noise_sigma * rng.standard_normal(num_samples)
    clipped = np.clip(signal, -0.99, 0.99)
    return AudioBuffer(np.round(clipped * 32767.0).astype(np.int16), AUDIO_SAMPLE_RATE)


def generate_corpus(cfg: CorpusConfig, out_dir) -> tuple:
    """Write a corpus under out_dir and return (manifest, model).

    Layout: one payload file (.feat or .wav) and one .labels file per
    utterance, plus manifest.tsv with paths relative to out_dir.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = corpus_model(cfg)
    _, data_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(data_ss)
    entries = []
    for idx in range(cfg.num_utterances):
        phones = _sample_phone_string(rng, cfg)
        durations = rng.integers(
            cfg.min_phone_duration, cfg.max_phone_duration + 1, size=phones.shape[0]
        )
        speaker = int(rng.integers(cfg.num_speakers))
        labels = np.repeat(phones, durations)
        utt_id = f"utt{idx:05d}"
        speaker_id = f"spk{speaker:03d}"
        if cfg.mode == "features":
            clean = clean_trajectory(cfg, model, phones, durations)
            data = clean + model.speaker_offsets[speaker]
            if cfg.noise_sigma > 0:
                data = data + cfg.noise_sigma * rng.standard_normal(data.shape)
            payload_name = f"{utt_id}.feat"
            write_features(out_dir / payload_name, FeatureMatrix(data, utt_id=utt_id))
        else:
            audio = _render_audio(rng, cfg, model, phones, durations)
            payload_name = f"{utt_id}.wav"
            write_wav(out_dir / payload_name, audio)
        label_name = f"{utt_id}.labels"
        write_label_file(out_dir / label_name, utt_id, labels)
        entries.append(ManifestEntry(utt_id, speaker_id, payload_name, label_name))
    manifest = CorpusManifest(entries=entries, base_dir=out_dir)
    write_manifest(out_dir / "manifest.tsv", manifest)
    return manifest, model


def write_label_file(path, utt_id: str, labels: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write(utt_id + " " + " ".join(str(int(l)) for l in labels) + "\n")


def read_label_file(path):
    with open(path) as fh:
        line = fh.readline().strip()
    if not line:
        raise FormatError(f"{path}: empty label file")
    parts = line.split()
    return parts[0], np.array([int(p) for p in parts[1:]], dtype=np.int64)


def write_manifest(path, manifest: CorpusManifest) -> None:
    with open(path, "w") as fh:
        for e in manifest.entries:
            fh.write(f"{e.utt_id}\t{e.speaker_id}\t{e.payload_path}\t{e.label_path}\n")


def read_manifest(path) -> CorpusManifest:
    path = Path(path)
    entries = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 tab-separated fields")
            entries.append(ManifestEntry(*parts))
    return CorpusManifest(entries=entries, base_dir=path.parent)


def load_utterance(manifest: CorpusManifest, entry: ManifestEntry) -> Utterance:
    """Read one utterance's payload and labels from disk."""
    label_id, labels = read_label_file(manifest.resolve(entry.label_path))
    if label_id != entry.utt_id:
        raise DataError(
            f"label file id {label_id!r} does not match manifest id {entry.utt_id!r}"
        )
    payload = manifest.resolve(entry.payload_path)
    utt = Utterance(utt_id=entry.utt_id, speaker_id=entry.speaker_id, labels=labels)
    if str(payload).endswith(".wav"):
        utt.audio = read_wav(payload)
    else:
        utt.frames = read_features(payload, utt_id=entry.utt_id)
        if utt.frames.num_frames != labels.shape[0]:
            raise DataError(
                f"{entry.utt_id}: {utt.frames.num_frames} frames but "
                f"{labels.shape[0]} labels"
            )
    return utt


def split_manifest(manifest: CorpusManifest, train_fraction: float, seed: int = 0):
    """Disjoint, exhaustive, speaker-stratified split.

    Every speaker with at least two utterances contributes to both sides.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError("train_fraction must lie strictly between 0 and 1")
    by_speaker = {}
    for e in manifest.entries:
        by_speaker.setdefault(e.speaker_id, []).append(e)
    rng = np.random.default_rng(seed)
    train_ids, test_ids = set(), set()
    for speaker in sorted(by_speaker):
        utts = by_speaker[speaker]
        order = rng.permutation(len(utts))
        n_train = int(round(train_fraction * len(utts)))
        if len(utts) >= 2:
            n_train = min(max(n_train, 1), len(utts) - 1)
        else:
            n_train = 1
        for pos in order[:n_train]:
            train_ids.add(utts[pos].utt_id)
        for pos in order[n_train:]:
            test_ids.add(utts[pos].utt_id)
    train = CorpusManifest(
        entries=[e for e in manifest.entries if e.utt_id in train_ids],
        base_dir=manifest.base_dir,
    )
    test = CorpusManifest(
        entries=[e for e in manifest.entries if e.utt_id in test_ids],
        base_dir=manifest.base_dir,
    )
    return train, test


def format_corpus_config(cfg: CorpusConfig) -> str:
    lines = [f"{name} = {getattr(cfg, name)}" for name in cfg.__dataclass_fields__]
    return "\n".join(lines) + "\n"


def parse_corpus_config(text: str) -> CorpusConfig:
    fields = CorpusConfig.__dataclass_fields__
    values = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"bad corpus config line: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in fields:
            raise ConfigurationError(f"unknown corpus config key {key!r}")
        ftype = fields[key].type
        if ftype == "int":
            values[key] = int(value)
        elif ftype == "float":
            values[key] = float(value)
        else:
            values[key] = value
    return CorpusConfig(**values)
