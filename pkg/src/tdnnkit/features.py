"""MFCC feature frontend: framing, mel filterbank, CMVN, splicing, speaker stats.

The pipeline is frame -> |FFT|^2 -> triangular mel filterbank -> floored log
-> orthonormal DCT-II.  All arithmetic is float64 so that oracle comparisons
in the test suite can use tight tolerances.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.io.wavfile

from .errors import ConfigurationError, DataError, FormatError, NormalizationError, ShapeError

# Lowest filterbank edge in Hz; the top edge is the Nyquist frequency.
FILTERBANK_LOW_HZ = 20.0
# Floor applied before the log so silent frames stay finite.
LOG_ENERGY_FLOOR = 1e-10

FEATURE_FILE_MAGIC = b"FEAT"
FEATURE_FILE_VERSION = 1


@dataclass
class AudioBuffer:
    """Mono PCM audio held as signed 16-bit samples."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.int16)
        if self.samples.ndim != 1:
            raise ShapeError("audio must be mono (1-D sample array)")
        if self.sample_rate <= 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def num_samples(self) -> int:
        return int(self.samples.shape[0])


@dataclass(frozen=True)
class FeatureConfig:
    """Frontend settings for framing and the mel-cepstral transform."""

    frame_length_ms: float = 25.0
    frame_shift_ms: float = 10.0
    num_mel_filters: int = 40
    num_cepstra: int = 40
    fft_size: int = 512
    preemphasis: float = 0.97
    dither: float = 0.0

    def __post_init__(self):
        if self.frame_length_ms <= 0 or self.frame_shift_ms <= 0:
            raise ConfigurationError("frame length and shift must be positive")
        if self.frame_shift_ms > self.frame_length_ms:
            raise ConfigurationError("frame_shift_ms must not exceed frame_length_ms")
        if self.num_cepstra > self.num_mel_filters:
            raise ConfigurationError(
                f"num_cepstra ({self.num_cepstra}) must not exceed "
                f"num_mel_filters ({self.num_mel_filters})"
            )
        if self.num_mel_filters < 1 or self.num_cepstra < 1:
            raise ConfigurationError("filter and cepstrum counts must be positive")
        if not 0.0 <= self.preemphasis < 1.0:
            raise ConfigurationError("preemphasis must lie in [0, 1)")
        if self.dither < 0:
            raise ConfigurationError("dither must be non-negative")

    def frame_length_samples(self, sample_rate: int) -> int:
        return int(round(sample_rate * self.frame_length_ms / 1000.0))

    def frame_shift_samples(self, sample_rate: int) -> int:
        return int(round(sample_rate * self.frame_shift_ms / 1000.0))


@dataclass
class FeatureMatrix:
    """frames x dims matrix of real-valued features for one utterance."""

    data: np.ndarray
    utt_id: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ShapeError(f"feature data must be 2-D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise DataError("feature matrix contains non-finite values")

    @property
    def num_frames(self) -> int:
        return int(self.data.shape[0])

    @property
    def dims(self) -> int:
        return int(self.data.shape[1])


@dataclass
class SpeakerEmbedding:
    """Fixed-length per-utterance vector summarizing speaker statistics."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.shape[0] == 0:
            raise ShapeError("embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(self.values)):
            raise DataError("embedding contains non-finite values")

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def hz_to_mel(hz):
    """Mel scale: 2595 * log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def frame_signal(audio: AudioBuffer, cfg: FeatureConfig) -> np.ndarray:
    """Cut audio into pre-emphasized, Hamming-windowed frames.

    Returns an array of shape (num_frames, frame_length_samples).  The frame
    count is floor((num_samples - frame_length) / frame_shift) + 1 when at
    least one full window fits, otherwise zero.  Pre-emphasis is applied
    inside each frame, with the first sample emphasized against itself.
    """
    flen = cfg.frame_length_samples(audio.sample_rate)
    fshift = cfg.frame_shift_samples(audio.sample_rate)
    if flen < 2:
        raise ConfigurationError("frame length must cover at least 2 samples")
    n = audio.num_samples
    if n < flen:
        return np.zeros((0, flen), dtype=np.float64)
    num_frames = (n - flen) // fshift + 1
    x = audio.samples.astype(np.float64)
    if cfg.dither > 0:
        # Fixed stream keeps the frontend deterministic even with dither on.
        rng = np.random.default_rng(0x5EED)
        x = x + cfg.dither * rng.standard_normal(x.shape)
    starts = np.arange(num_frames) * fshift
    frames = x[starts[:, None] + np.arange(flen)[None, :]]
    emphasized = frames.copy()
    emphasized[:, 1:] -= cfg.preemphasis * frames[:, :-1]
    emphasized[:, 0] -= cfg.preemphasis * frames[:, 0]
    return emphasized * np.hamming(flen)


def mel_filterbank(cfg: FeatureConfig, sample_rate: int) -> np.ndarray:
    """Triangular mel filters evaluated on FFT bin frequencies.

    Returns a (num_mel_filters, fft_size // 2 + 1) weight matrix.  Triangles
    are linear in the mel domain and span FILTERBANK_LOW_HZ to Nyquist.
    """
    nyquist = sample_rate / 2.0
    if nyquist <= FILTERBANK_LOW_HZ:
        raise ConfigurationError(
            f"sample rate {sample_rate} too low for a filterbank starting at "
            f"{FILTERBANK_LOW_HZ} Hz"
        )
    mel_lo = hz_to_mel(FILTERBANK_LOW_HZ)
    mel_hi = hz_to_mel(nyquist)
    mel_points = np.linspace(mel_lo, mel_hi, cfg.num_mel_filters + 2)
    bin_freqs = np.arange(cfg.fft_size // 2 + 1) * (sample_rate / cfg.fft_size)
    bin_mels = hz_to_mel(bin_freqs)
    weights = np.zeros((cfg.num_mel_filters, bin_freqs.shape[0]), dtype=np.float64)
    for k in range(cfg.num_mel_filters):
        left, center, right = mel_points[k], mel_points[k + 1], mel_points[k + 2]
        rising = (bin_mels - left) / (center - left)
        falling = (right - bin_mels) / (right - center)
        weights[k] = np.maximum(0.0, np.minimum(rising, falling))
    return weights


def filter_center_frequencies(cfg: FeatureConfig, sample_rate: int) -> np.ndarray:
    """Center frequency in Hz of each mel filter."""
    mel_lo = hz_to_mel(FILTERBANK_LOW_HZ)
    mel_hi = hz_to_mel(sample_rate / 2.0)
    mel_points = np.linspace(mel_lo, mel_hi, cfg.num_mel_filters + 2)
    return mel_to_hz(mel_points[1:-1])


def mel_energies(audio: AudioBuffer, cfg: FeatureConfig) -> np.ndarray:
    """Per-frame mel filterbank energies (before the log), via the FFT path."""
    flen = cfg.frame_length_samples(audio.sample_rate)
    if cfg.fft_size < flen:
        raise ConfigurationError(
            f"fft_size {cfg.fft_size} smaller than frame length {flen} samples"
        )
    frames = frame_signal(audio, cfg)
    fbank = mel_filterbank(cfg, audio.sample_rate)
    if frames.shape[0] == 0:
        return np.zeros((0, cfg.num_mel_filters), dtype=np.float64)
    spectrum = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    return power @ fbank.T


def compute_mfcc(audio: AudioBuffer, cfg: FeatureConfig | None = None, utt_id: str = "") -> FeatureMatrix:
    """40-dimensional (by default) MFCC features for one utterance."""
    if cfg is None:
        cfg = FeatureConfig()
    energies = mel_energies(audio, cfg)
    log_energies = np.log(np.maximum(energies, LOG_ENERGY_FLOOR))
    cepstra = scipy.fft.dct(log_energies, type=2, norm="ortho", axis=1)
    return FeatureMatrix(cepstra[:, : cfg.num_cepstra], utt_id=utt_id)


def apply_cmvn(feats: FeatureMatrix) -> FeatureMatrix:
    """Per-utterance, per-dimension mean and variance normalization.

    Dimensions whose variance falls below 1e-12 are only mean-shifted.
    """
    if feats.num_frames < 2:
        raise NormalizationError(
            f"CMVN needs at least 2 frames, got {feats.num_frames}"
        )
    # Mean is computed relative to the first row so exactly-constant
    # dimensions come out exactly zero.
    shifted = feats.data - feats.data[0]
    centered = shifted - shifted.mean(axis=0)
    var = centered.var(axis=0)
    scale = np.where(var < 1e-12, 1.0, np.sqrt(np.maximum(var, 1e-300)))
    return FeatureMatrix(centered / scale, utt_id=feats.utt_id)


def splice(feats: FeatureMatrix, offsets) -> FeatureMatrix:
    """Concatenate feature rows at the given frame offsets, per frame.

    Row t of the output is the concatenation of input rows t+o for each
    offset o, with indices clamped to [0, num_frames - 1] (edge replication).
    """
    offsets = list(offsets)
    if not offsets:
        raise ConfigurationError("splice offsets must be non-empty")
    if any(b <= a for a, b in zip(offsets, offsets[1:])):
        raise ConfigurationError(f"splice offsets must be strictly increasing: {offsets}")
    n = feats.num_frames
    if n == 0:
        return FeatureMatrix(
            np.zeros((0, feats.dims * len(offsets))), utt_id=feats.utt_id
        )
    base = np.arange(n)
    blocks = [feats.data[np.clip(base + o, 0, n - 1)] for o in offsets]
    return FeatureMatrix(np.hstack(blocks), utt_id=feats.utt_id)


def speaker_embedding(feats: FeatureMatrix, dim: int = 100, seed: int = 0) -> SpeakerEmbedding:
    """Project utterance mean/std statistics to a fixed-length vector.

    The per-dimension mean and standard deviation (length 2 * dims) are
    multiplied by a Gaussian matrix drawn from the given seed, so the result
    is deterministic for fixed (feats, dim, seed).
    """
    if dim <= 0:
        raise ConfigurationError(f"embedding dim must be positive, got {dim}")
    if feats.num_frames < 2:
        raise DataError(
            f"speaker statistics need at least 2 frames, got {feats.num_frames}"
        )
    stats = np.concatenate([feats.data.mean(axis=0), feats.data.std(axis=0)])
    rng = np.random.default_rng(seed)
    projection = rng.standard_normal((dim, stats.shape[0])) / np.sqrt(stats.shape[0])
    return SpeakerEmbedding(projection @ stats)


def append_embedding(feats: FeatureMatrix, emb: SpeakerEmbedding) -> FeatureMatrix:
    """Widen every frame with the utterance-level embedding."""
    tiled = np.tile(emb.values, (feats.num_frames, 1))
    return FeatureMatrix(np.hstack([feats.data, tiled]), utt_id=feats.utt_id)


def read_wav(path) -> AudioBuffer:
    """Read a RIFF WAV file; must be 16-bit signed PCM, mono."""
    try:
        rate, data = scipy.io.wavfile.read(path)
    except OSError as exc:
        raise FormatError(f"cannot read WAV file {path}: {exc}") from exc
    except ValueError as exc:
        raise FormatError(f"not a valid WAV file {path}: {exc}") from exc
    if data.dtype != np.int16:
        raise FormatError(f"{path}: expected 16-bit signed PCM, got dtype {data.dtype}")
    if data.ndim != 1:
        raise FormatError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    return AudioBuffer(samples=data, sample_rate=int(rate))


def write_wav(path, audio: AudioBuffer) -> None:
    scipy.io.wavfile.write(path, audio.sample_rate, audio.samples)


def read_raw_pcm(path, sample_rate: int) -> AudioBuffer:
    """Read headerless 16-bit signed little-endian mono PCM."""
    data = np.fromfile(path, dtype="<i2")
    return AudioBuffer(samples=data, sample_rate=sample_rate)


def write_features(path, feats: FeatureMatrix) -> None:
    """Write the binary feature format: FEAT magic, version, dims, frames, f64 rows."""
    header = FEATURE_FILE_MAGIC + struct.pack(
        "<IIQ", FEATURE_FILE_VERSION, feats.dims, feats.num_frames
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(feats.data, dtype="<f8").tobytes())


def read_features(path, utt_id: str = "") -> FeatureMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20 or blob[:4] != FEATURE_FILE_MAGIC:
        raise FormatError(f"{path}: missing FEAT magic")
    version, dims, num_frames = struct.unpack("<IIQ", blob[4:20])
    if version != FEATURE_FILE_VERSION:
        raise FormatError(f"{path}: unsupported feature file version {version}")
    expected = 20 + 8 * dims * num_frames
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload size {len(blob)} does not match header (expected {expected})"
        )
    data = np.frombuffer(blob, dtype="<f8", offset=20).reshape(num_frames, dims)
    return FeatureMatrix(data.copy(), utt_id=utt_id)
