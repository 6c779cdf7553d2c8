"""What subsampling buys: smaller index sets, fewer weights, same outputs.

Builds compute plans for a layered temporal network, shows which frames each
layer actually evaluates, verifies the planned forward pass against the dense
evaluator, and compares parameter/MAC budgets against dense-offset variants
and the built-in presets.
"""

import numpy as np

import tdnnkit as tk

layers = (
    tk.LayerSpec((-2, -1, 0, 1, 2), 48),
    tk.LayerSpec((-1, 2), 48),
    tk.LayerSpec((-3, 3), 48),
    tk.LayerSpec((-7, 2), 48),
    tk.LayerSpec((0,), 48),
)
spec = tk.NetworkSpec(input_dim=40, layers=layers, num_classes=8)
print(f"receptive field of one output frame: {tk.receptive_field(spec)}")

# A single output frame needs only a scattering of lower-layer frames.
plan_one = tk.build_plan(spec, (0, 1))
print("\nframes evaluated per layer for ONE output frame:")
for i, s in enumerate(plan_one.sets):
    name = "input" if i == 0 else f"layer {i}"
    print(f"  {name:7s} ({len(s):2d} frames): {s.tolist()}")

dense_one = tk.build_dense_plan(spec, (0, 1))
print(f"dense evaluation would touch {dense_one.layer_sizes()} frames per layer")
print(f"MACs, planned vs dense: {tk.flop_count(spec, plan_one):,} vs "
      f"{tk.flop_count(spec, dense_one):,}")

# Over a long contiguous output range the planned sets fill in and match the
# dense spans; what subsampling still saves there is the per-evaluation work,
# visible against an equal-width network with gap-free offsets.
n = 200
planned_n = tk.build_plan(spec, n)
dense_n = tk.build_dense_plan(spec, n)
gapless = tk.dense_offsets_variant(spec)
gapless_n = tk.build_plan(gapless, n)
print(f"\nfor a {n}-frame utterance:")
print(f"  planned {tk.flop_count(spec, planned_n):,} MACs "
      f"(dense spans: {tk.flop_count(spec, dense_n):,})")
print(f"  equal-width network with gap-free offsets: "
      f"{tk.flop_count(gapless, gapless_n):,} MACs")

# The planned pass must agree with the dense evaluator everywhere.
rng = np.random.default_rng(1)
feats = tk.FeatureMatrix(rng.standard_normal((n, 40)))
params = tk.init_params(spec, seed=3)
posteriors = tk.forward(spec, params, feats, planned_n)
dense = tk.forward_dense(spec, params, feats)
gap = np.max(np.abs(posteriors.data - dense.posteriors))
print(f"max |planned - dense| over all posteriors: {gap:.2e}")

# Sparse offsets also shrink the weight matrices themselves.
print("\nparameters, subsampled vs dense offsets at equal width/depth:")
dense_spec = tk.dense_offsets_variant(spec)
print(f"  this network: {tk.param_count(spec):,} vs {tk.param_count(dense_spec):,}")
print("\nbuilt-in presets:")
for name in ("ffnn", "tdnn-a", "tdnn-b", "tdnn-c"):
    p = tk.make_preset(name)
    left, right = tk.receptive_field(p)
    print(f"  {name:6s} layers={p.depth} units={p.layers[0].units:5d} "
          f"input={p.input_dim:3d} params={tk.param_count(p):>12,} "
          f"context=({left},{right})")
