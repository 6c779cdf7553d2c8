"""Feature frontend walkthrough: PCM in, normalized spliced features out.

Synthesizes a two-tone signal, runs it through framing, the mel-cepstral
transform, per-utterance normalization, context splicing, and the
speaker-statistics embedding, then round-trips the result through the binary
feature file format.
"""

import tempfile
from pathlib import Path

import numpy as np

import tdnnkit as tk

rng = np.random.default_rng(0)

# One second of audio: 500 Hz for the first half, 1800 Hz for the second,
# with a little noise so CMVN has something to normalize.
t = np.arange(16000) / 16000.0
wave = np.where(t < 0.5, np.sin(2 * np.pi * 500 * t), np.sin(2 * np.pi * 1800 * t))
wave = 8000 * wave + 50 * rng.standard_normal(t.shape)
audio = tk.AudioBuffer(wave.astype(np.int16), sample_rate=16000)

cfg = tk.FeatureConfig()
frames = tk.frame_signal(audio, cfg)
print(f"{audio.num_samples} samples -> {frames.shape[0]} frames "
      f"of {frames.shape[1]} samples (25 ms window, 10 ms shift)")

feats = tk.compute_mfcc(audio, cfg, utt_id="demo")
print(f"MFCC matrix: {feats.num_frames} frames x {feats.dims} coefficients")

# The tone switch at 0.5 s shows up as a jump in the cepstra.
first_half = feats.data[:45].mean(axis=0)
second_half = feats.data[53:].mean(axis=0)
print(f"mean |cepstral difference| across the tone switch: "
      f"{np.abs(first_half - second_half).mean():.2f}")

normalized = tk.apply_cmvn(feats)
print(f"after CMVN: max |column mean| = {np.abs(normalized.data.mean(axis=0)).max():.2e}, "
      f"max |column std - 1| = {np.abs(normalized.data.std(axis=0) - 1).max():.2e}")

spliced = tk.splice(normalized, [-2, -1, 0, 1, 2])
print(f"splicing offsets [-2..2] widens each frame to {spliced.dims} dims")

embedding = tk.speaker_embedding(normalized, dim=100, seed=7)
augmented = tk.append_embedding(normalized, embedding)
print(f"with the 100-dim utterance embedding appended: {augmented.dims} dims per frame")

with tempfile.TemporaryDirectory() as workdir:
    path = Path(workdir) / "demo.feat"
    tk.write_features(path, augmented)
    back = tk.read_features(path, utt_id="demo")
    print(f"feature file round-trip exact: {np.array_equal(back.data, augmented.data)} "
          f"({path.stat().st_size} bytes)")
