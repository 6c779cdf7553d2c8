"""Independent reference implementations used only by the test suite.

Everything here is deliberately written as plain loops or recursion, separate
from the library's vectorized code paths.
"""

import functools

import numpy as np


def naive_affine(weights, bias, x):
    """Triple-loop matrix multiply plus bias."""
    n, in_dim = x.shape
    out_dim = weights.shape[0]
    y = np.zeros((n, out_dim))
    for r in range(n):
        for o in range(out_dim):
            acc = bias[o]
            for i in range(in_dim):
                acc += x[r, i] * weights[o, i]
            y[r, o] = acc
    return y


@functools.cache
def recursive_edit_distance(a: tuple, b: tuple) -> int:
    """Textbook recursion on suffixes, memoized across calls."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        recursive_edit_distance(a[1:], b[1:]) + (a[0] != b[0]),
        recursive_edit_distance(a[1:], b) + 1,
        recursive_edit_distance(a, b[1:]) + 1,
    )


def dft_mel_energies(samples, rate, cfg):
    """Per-filter energies straight from the signal via a naive DFT.

    Re-implements framing, pre-emphasis, Hamming windowing and the mel
    triangles with explicit loops; shares no code with the library.
    """
    flen = int(round(rate * cfg.frame_length_ms / 1000))
    fshift = int(round(rate * cfg.frame_shift_ms / 1000))
    x = np.asarray(samples, dtype=np.float64)
    n = x.shape[0]
    if n < flen:
        return np.zeros((0, cfg.num_mel_filters))
    num_frames = (n - flen) // fshift + 1
    window = np.array(
        [0.54 - 0.46 * np.cos(2 * np.pi * i / (flen - 1)) for i in range(flen)]
    )

    def mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    mel_lo, mel_hi = mel(20.0), mel(rate / 2.0)
    pts = [
        mel_lo + (mel_hi - mel_lo) * i / (cfg.num_mel_filters + 1)
        for i in range(cfg.num_mel_filters + 2)
    ]
    num_bins = cfg.fft_size // 2 + 1
    idx = np.arange(flen)
    out = np.zeros((num_frames, cfg.num_mel_filters))
    for t in range(num_frames):
        frame = x[t * fshift : t * fshift + flen]
        emph = np.empty(flen)
        emph[0] = frame[0] - cfg.preemphasis * frame[0]
        for i in range(1, flen):
            emph[i] = frame[i] - cfg.preemphasis * frame[i - 1]
        w = emph * window
        for b in range(num_bins):
            ang = -2.0 * np.pi * b / cfg.fft_size
            re = np.sum(w * np.cos(ang * idx))
            im = np.sum(w * np.sin(ang * idx))
            power = re * re + im * im
            m = mel(b * rate / cfg.fft_size)
            for k in range(cfg.num_mel_filters):
                left, center, right = pts[k], pts[k + 1], pts[k + 2]
                if left < m < right:
                    weight = (m - left) / (center - left) if m <= center else (right - m) / (right - center)
                    out[t, k] += weight * power
    return out


def _layer_spans(spec, num_output):
    """Contiguous frame span each layer must cover for outputs [0, num_output)."""
    lo, hi = 0, num_output - 1
    spans = [(lo, hi)]
    for layer in reversed(spec.layers):
        lo += min(layer.offsets)
        hi += max(layer.offsets)
        spans.append((lo, hi))
    spans.reverse()
    return spans


def loop_forward(spec, params, feats):
    """Frame-by-frame dict-based evaluation of the network recursion.

    Input reads are clamped to the utterance; hidden activations exist for
    every integer frame index a consumer needs.  Returns (hidden, logits,
    posteriors) where hidden[l][t] is layer l+1's activation at frame t.
    """
    n = feats.shape[0]
    spans = _layer_spans(spec, n)
    hidden = []
    pre = []
    lower = {
        t: feats[min(max(t, 0), n - 1)] for t in range(spans[0][0], spans[0][1] + 1)
    }
    for i, layer in enumerate(spec.layers):
        p = params.layers[i]
        level_h, level_z = {}, {}
        for t in range(spans[i + 1][0], spans[i + 1][1] + 1):
            cat = np.concatenate([lower[t + o] for o in layer.offsets])
            z = p.weights @ cat + p.bias
            level_z[t] = z
            level_h[t] = np.maximum(z, 0.0) if layer.activation == "relu" else z
        pre.append(level_z)
        hidden.append(level_h)
        lower = level_h
    logits = np.stack([params.output.weights @ hidden[-1][t] + params.output.bias for t in range(n)])
    shifted = logits - logits.max(axis=1, keepdims=True)
    expo = np.exp(shifted)
    posteriors = expo / expo.sum(axis=1, keepdims=True)
    return hidden, pre, logits, posteriors


def loop_backward(spec, params, feats, labels):
    """Analytic gradients computed over the loop_forward structure.

    Evaluates every frame of every layer span (the dense computation) and
    backpropagates the mean cross-entropy over all n output frames.
    """
    n = feats.shape[0]
    spans = _layer_spans(spec, n)
    hidden, pre, logits, posteriors = loop_forward(spec, params, feats)
    grad_h = [dict() for _ in spec.layers]
    gw = [np.zeros_like(p.weights) for p in params.layers]
    gb = [np.zeros_like(p.bias) for p in params.layers]
    gw_out = np.zeros_like(params.output.weights)
    gb_out = np.zeros_like(params.output.bias)
    for t in range(n):
        g = posteriors[t].copy()
        g[labels[t]] -= 1.0
        g /= n
        gw_out += np.outer(g, hidden[-1][t])
        gb_out += g
        grad_h[-1][t] = grad_h[-1].get(t, 0.0) + params.output.weights.T @ g
    lower_clamped_input = {
        t: feats[min(max(t, 0), n - 1)] for t in range(spans[0][0], spans[0][1] + 1)
    }
    for i in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[i]
        lower_vals = hidden[i - 1] if i > 0 else lower_clamped_input
        for t in sorted(grad_h[i]):
            gh = grad_h[i][t]
            z = pre[i][t]
            gz = gh * (z > 0) if layer.activation == "relu" else gh
            cat = np.concatenate([lower_vals[t + o] for o in layer.offsets])
            gw[i] += np.outer(gz, cat)
            gb[i] += gz
            if i > 0:
                gcat = params.layers[i].weights.T @ gz
                ld = spec.layers[i - 1].units
                for j, o in enumerate(layer.offsets):
                    piece = gcat[j * ld : (j + 1) * ld]
                    grad_h[i - 1][t + o] = grad_h[i - 1].get(t + o, 0.0) + piece
    loss = float(np.mean(-np.log(posteriors[np.arange(n), labels])))
    return loss, gw, gb, gw_out, gb_out


def perturbation_receptive_field(spec, params, margin=4):
    """Measure (left, right) by perturbing one interior input frame.

    Works on linear-activation networks so a weight chain never dies; returns
    the widest interval of output frames affected by the probe frame.  The
    probe sits far enough from both utterance edges that the affected
    interval [probe - right, probe + left] lies strictly inside the output
    range and edge clamping never touches the probe.
    """
    import tdnnkit as tk

    left_cf = sum(-min(l.offsets) for l in spec.layers)
    right_cf = sum(max(l.offsets) for l in spec.layers)
    probe = max(right_cf, 0) + margin
    n = probe + max(left_cf, 0) + margin + 1
    rng = np.random.default_rng(12345)
    base = rng.standard_normal((n, spec.input_dim))
    bumped = base.copy()
    bumped[probe] += rng.standard_normal(spec.input_dim) + 0.7
    plan = tk.build_plan(spec, n)
    out_a = tk.forward(spec, params, tk.FeatureMatrix(base), plan).data
    out_b = tk.forward(spec, params, tk.FeatureMatrix(bumped), plan).data
    changed = np.where(np.any(out_a != out_b, axis=1))[0]
    assert changed.size > 0, "probe perturbation did not reach any output"
    # outputs t with probe in [t - left, t + right]  <=>  t in [probe - right, probe + left]
    return int(changed.max()) - probe, probe - int(changed.min())
