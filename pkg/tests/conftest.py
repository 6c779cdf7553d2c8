import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import tdnnkit as tk
from tdnnkit.tdnn import _forward_trace


def random_tiny_spec(rng, max_depth=4, max_units=8, max_classes=5, activation="relu"):
    depth = int(rng.integers(1, max_depth + 1))
    layers = []
    for _ in range(depth):
        k = int(rng.integers(1, 4))
        offs = np.sort(rng.choice(np.arange(-4, 5), size=k, replace=False))
        layers.append(
            tk.LayerSpec(tuple(int(o) for o in offs), int(rng.integers(2, max_units + 1)), activation)
        )
    return tk.NetworkSpec(
        input_dim=int(rng.integers(2, 6)),
        layers=tuple(layers),
        num_classes=int(rng.integers(2, max_classes + 1)),
    )


def params_off_relu_kinks(spec, feats, plan, base_seed, margin=1e-3, attempts=300):
    """Deterministically pick an init whose pre-activations avoid the ReLU kink,
    so central differences stay on one side of it."""
    for s in range(attempts):
        params = tk.init_params(spec, base_seed + s)
        _, pres, _, _ = _forward_trace(spec, params, feats.data, plan)
        worst = min(
            (np.min(np.abs(z)) for z, l in zip(pres, spec.layers) if l.activation == "relu"),
            default=np.inf,
        )
        if worst > margin:
            return params
    raise AssertionError("no kink-free init found; widen the search")


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A 300-utterance synthetic corpus shared by training-level tests."""
    root = tmp_path_factory.mktemp("corpus")
    cfg = tk.CorpusConfig(num_utterances=300, seed=11)
    manifest, model = tk.generate_corpus(cfg, root)
    train_m, held_m = tk.split_manifest(manifest, 0.9, seed=0)
    return {
        "cfg": cfg,
        "model": model,
        "dir": root,
        "manifest": manifest,
        "train": train_m,
        "heldout": held_m,
    }
