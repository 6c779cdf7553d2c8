"""Time-delay layers with context offsets and subsampled compute plans.

A layer reads the layer below at a set of integer frame offsets.  Instead of
evaluating every layer at every frame, a ComputePlan records exactly which
frame indices each layer must produce for a requested output range; the
planned forward pass evaluates only those.  A dense evaluator computes the
same recursion over full contiguous spans and serves as the correctness
oracle: subsampling changes cost, never results.

Boundary policy: hidden activations are defined for every integer frame
index; only reads of the input feature matrix are clamped to its valid range
(edge replication).  Interior layers never clamp because plans are closed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, DataError, FormatError, NumericError, ShapeError
from .features import FeatureMatrix
from .nncore import (
    AffineParams,
    affine_forward,
    glorot_uniform,
    relu,
    relu_backward,
    softmax,
    softmax_xent,
)

ACTIVATIONS = ("none", "relu")

CHECKPOINT_MAGIC = b"TDNM"
CHECKPOINT_VERSION = 1

# Offset patterns used by the named presets; the offsets follow widely used
# recipes for this layer family.
_TDNN_OFFSETS = ((-2, -1, 0, 1, 2), (-1, 2), (-3, 3), (-7, 2), (0,))


@dataclass(frozen=True)
class LayerSpec:
    """One hidden layer: temporal offsets, width, and activation."""

    offsets: tuple
    units: int
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "offsets", tuple(int(o) for o in self.offsets))
        if len(self.offsets) == 0:
            raise ConfigurationError("layer offsets must be non-empty")
        if any(b <= a for a, b in zip(self.offsets, self.offsets[1:])):
            raise ConfigurationError(
                f"layer offsets must be strictly increasing: {self.offsets}"
            )
        if self.units <= 0:
            raise ConfigurationError(f"layer units must be positive, got {self.units}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class NetworkSpec:
    """Full architecture: input width, hidden layers, and class count.

    The final stage is an implicit affine to num_classes followed by softmax.
    """

    input_dim: int
    layers: tuple
    num_classes: int
    preset_name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input_dim <= 0:
            raise ConfigurationError("input_dim must be positive")
        if self.num_classes < 2:
            raise ConfigurationError("num_classes must be at least 2")
        if len(self.layers) == 0:
            raise ConfigurationError("network needs at least one hidden layer")

    @property
    def depth(self) -> int:
        return len(self.layers)

    def layer_input_dim(self, index: int) -> int:
        """Width of the concatenated input feeding hidden layer ``index``."""
        lower = self.input_dim if index == 0 else self.layers[index - 1].units
        return len(self.layers[index].offsets) * lower


@dataclass
class NetworkParams:
    """Parameter containers for every hidden layer plus the output affine."""

    layers: list
    output: AffineParams

    def copy(self) -> "NetworkParams":
        return NetworkParams([p.copy() for p in self.layers], self.output.copy())

    def size(self) -> int:
        return sum(p.size() for p in self.layers) + self.output.size()


@dataclass(frozen=True)
class ComputePlan:
    """Per-layer frame index sets needed to produce an output range.

    ``sets[0]`` holds (unclamped) input frame indices; ``sets[i]`` the frames
    at which hidden layer i is evaluated; ``sets[-1]`` equals the output
    range.  ``gathers[i][j]`` maps hidden layer i+1's offset j reads to row
    positions in ``sets[i]``; gather positions are shift-invariant.
    """

    spec: NetworkSpec
    output_range: tuple
    sets: tuple
    gathers: tuple

    @property
    def num_output_frames(self) -> int:
        return self.output_range[1] - self.output_range[0]

    def layer_sizes(self) -> list:
        return [int(s.shape[0]) for s in self.sets]


def receptive_field(spec: NetworkSpec):
    """Closed-form (left, right) context of one output frame."""
    left = sum(-min(layer.offsets) for layer in spec.layers)
    right = sum(max(layer.offsets) for layer in spec.layers)
    return left, right


def _normalize_range(output_frames) -> tuple:
    if isinstance(output_frames, range):
        if output_frames.step != 1:
            raise ConfigurationError("output range must have step 1")
        start, stop = output_frames.start, output_frames.stop
    elif isinstance(output_frames, int):
        start, stop = 0, output_frames
    else:
        start, stop = int(output_frames[0]), int(output_frames[1])
    if stop <= start:
        raise ConfigurationError(f"output range [{start}, {stop}) is empty")
    return start, stop


@lru_cache(maxsize=4096)
def _plan_at_origin(spec: NetworkSpec, length: int) -> ComputePlan:
    sets = [None] * (spec.depth + 1)
    sets[spec.depth] = np.arange(length, dtype=np.int64)
    for i in range(spec.depth - 1, -1, -1):
        upper = sets[i + 1]
        offsets = spec.layers[i].offsets
        needed = np.unique(
            np.concatenate([upper + o for o in offsets])
        )
        sets[i] = needed
    gathers = []
    for i, layer in enumerate(spec.layers):
        lower = sets[i]
        here = sets[i + 1]
        gathers.append(
            tuple(np.searchsorted(lower, here + o) for o in layer.offsets)
        )
    return ComputePlan(
        spec=spec,
        output_range=(0, length),
        sets=tuple(s for s in sets),
        gathers=tuple(gathers),
    )


def build_plan(spec: NetworkSpec, output_frames) -> ComputePlan:
    """Minimal per-layer index sets for the requested output frames.

    The top layer's set equals the output range; each lower set is the union
    of upper-set indices shifted by the upper layer's offsets.  Sets may
    contain indices outside the utterance; those are resolved by edge
    replication when the input matrix is read.  Plans are cached per range
    length and shifted, since index sets are translation-equivariant.
    """
    start, stop = _normalize_range(output_frames)
    base = _plan_at_origin(spec, stop - start)
    if start == 0:
        return base
    return ComputePlan(
        spec=spec,
        output_range=(start, stop),
        sets=tuple(s + start for s in base.sets),
        gathers=base.gathers,
    )


def build_dense_plan(spec: NetworkSpec, output_frames) -> ComputePlan:
    """Plan that evaluates every layer over its full contiguous span.

    This is the unsubsampled reference cost: each planned set is replaced by
    the contiguous hull of all indices the layers above could touch.
    """
    start, stop = _normalize_range(output_frames)
    lo, hi = start, stop - 1
    spans = [(lo, hi)]
    for layer in reversed(spec.layers):
        lo += min(layer.offsets)
        hi += max(layer.offsets)
        spans.append((lo, hi))
    spans.reverse()
    sets = [np.arange(a, b + 1, dtype=np.int64) for a, b in spans]
    gathers = []
    for i, layer in enumerate(spec.layers):
        gathers.append(
            tuple(np.searchsorted(sets[i], sets[i + 1] + o) for o in layer.offsets)
        )
    return ComputePlan(
        spec=spec, output_range=(start, stop), sets=tuple(sets), gathers=tuple(gathers)
    )


def _check_forward_args(spec: NetworkSpec, params: NetworkParams, feats: FeatureMatrix, plan: ComputePlan):
    if feats.dims != spec.input_dim:
        raise ShapeError(
            f"feature dim {feats.dims} does not match network input_dim {spec.input_dim}"
        )
    if feats.num_frames < 1:
        raise DataError("cannot evaluate an empty utterance")
    if plan.spec != spec:
        raise ShapeError("compute plan was built for a different network spec")
    if len(params.layers) != spec.depth:
        raise ShapeError(
            f"params have {len(params.layers)} layers, spec has {spec.depth}"
        )


def _apply_activation(layer: LayerSpec, z: np.ndarray) -> np.ndarray:
    return relu(z) if layer.activation == "relu" else z


def _forward_trace(spec, params, x: np.ndarray, plan):
    """Planned forward over a raw frame matrix, keeping every intermediate
    needed by backward."""
    n = x.shape[0]
    lower = x[np.clip(plan.sets[0], 0, n - 1)]
    cats, pres, acts = [], [], []
    for i, layer in enumerate(spec.layers):
        cat = np.hstack([lower[g] for g in plan.gathers[i]])
        z = affine_forward(params.layers[i], cat)
        h = _apply_activation(layer, z)
        cats.append(cat)
        pres.append(z)
        acts.append(h)
        lower = h
    logits = affine_forward(params.output, lower)
    return cats, pres, acts, logits


def forward(spec: NetworkSpec, params: NetworkParams, feats: FeatureMatrix, plan: ComputePlan) -> FeatureMatrix:
    """Posterior rows for the plan's output frames, via subsampled evaluation."""
    _check_forward_args(spec, params, feats, plan)
    _, _, _, logits = _forward_trace(spec, params, feats.data, plan)
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite activation in forward pass")
    return FeatureMatrix(softmax(logits), utt_id=feats.utt_id)


@dataclass
class DenseActivations:
    """Unsubsampled evaluation: all intermediate activations plus posteriors.

    ``starts[i]`` is the absolute frame index of row 0 of ``hidden[i]``.
    """

    starts: list
    hidden: list
    logits: np.ndarray
    posteriors: np.ndarray


def forward_dense(spec: NetworkSpec, params: NetworkParams, feats: FeatureMatrix, output_frames=None) -> DenseActivations:
    """Evaluate every layer over its full contiguous span.

    Computes the identical frame recursion as the planned path, without any
    index-set machinery: each layer's span is the contiguous hull of what the
    layers above require, and offset reads become plain slices.
    """
    n = feats.num_frames
    if feats.dims != spec.input_dim:
        raise ShapeError(
            f"feature dim {feats.dims} does not match network input_dim {spec.input_dim}"
        )
    if n < 1:
        raise DataError("cannot evaluate an empty utterance")
    start, stop = _normalize_range(output_frames if output_frames is not None else n)
    plan = build_dense_plan(spec, (start, stop))
    spans = [(int(s[0]), int(s[-1])) for s in plan.sets]
    lower = feats.data[np.clip(plan.sets[0], 0, n - 1)]
    starts, hidden = [], []
    for i, layer in enumerate(spec.layers):
        lo_here, hi_here = spans[i + 1]
        lo_below = spans[i][0]
        width = hi_here - lo_here + 1
        blocks = []
        for o in layer.offsets:
            shift = lo_here + o - lo_below
            blocks.append(lower[shift : shift + width])
        z = affine_forward(params.layers[i], np.hstack(blocks))
        lower = _apply_activation(layer, z)
        starts.append(lo_here)
        hidden.append(lower)
    logits = affine_forward(params.output, lower)
    return DenseActivations(
        starts=starts, hidden=hidden, logits=logits, posteriors=softmax(logits)
    )


def backward(spec: NetworkSpec, params: NetworkParams, feats: FeatureMatrix, plan: ComputePlan, labels: np.ndarray):
    """Loss and exact gradients of mean cross-entropy over the planned output.

    Labels must align with the plan's output range, one id per output frame.
    Gradient flows only through planned nodes.
    """
    _check_forward_args(spec, params, feats, plan)
    return _backward_arrays(spec, params, feats.data, plan, labels)


def _backward_arrays(spec, params, x: np.ndarray, plan, labels):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (plan.num_output_frames,):
        raise DataError(
            f"expected {plan.num_output_frames} labels for output range "
            f"{plan.output_range}, got shape {labels.shape}"
        )
    cats, pres, acts, logits = _forward_trace(spec, params, x, plan)
    loss, grad_logits = softmax_xent(logits, labels)
    if not np.isfinite(loss):
        raise NumericError("non-finite loss in backward pass")
    grad_layers = [None] * spec.depth
    gw_out = grad_logits.T @ acts[-1]
    gb_out = grad_logits.sum(axis=0)
    upstream = grad_logits @ params.output.weights
    for i in range(spec.depth - 1, -1, -1):
        layer = spec.layers[i]
        gz = relu_backward(pres[i], upstream) if layer.activation == "relu" else upstream
        gw = gz.T @ cats[i]
        gb = gz.sum(axis=0)
        grad_layers[i] = AffineParams(gw, gb)
        if i > 0:
            lower_dim = spec.layers[i - 1].units
            gcat = gz @ params.layers[i].weights
            glower = np.zeros_like(acts[i - 1])
            for j, g in enumerate(plan.gathers[i]):
                np.add.at(glower, g, gcat[:, j * lower_dim : (j + 1) * lower_dim])
            upstream = glower
    return loss, NetworkParams(grad_layers, AffineParams(gw_out, gb_out))


def param_count(spec: NetworkSpec) -> int:
    """Closed-form parameter total: per-layer (|offsets| * lower + 1) * units
    plus the output affine."""
    total = 0
    lower = spec.input_dim
    for layer in spec.layers:
        total += (len(layer.offsets) * lower + 1) * layer.units
        lower = layer.units
    total += (lower + 1) * spec.num_classes
    return total


def flop_count(spec: NetworkSpec, plan: ComputePlan) -> int:
    """Multiply-accumulates in the hidden stack, summed over planned frames.

    Counts one MAC per weight application: each planned evaluation of layer
    i costs |offsets_i| * lower_dim * units_i.
    """
    if plan.spec != spec:
        raise ShapeError("compute plan was built for a different network spec")
    total = 0
    lower = spec.input_dim
    for i, layer in enumerate(spec.layers):
        frames = plan.sets[i + 1].shape[0]
        total += frames * len(layer.offsets) * lower * layer.units
        lower = layer.units
    return int(total)


def dense_offsets_variant(spec: NetworkSpec) -> NetworkSpec:
    """Same depth/width network whose offsets fill each layer's context span."""
    dense_layers = [
        LayerSpec(
            offsets=tuple(range(min(layer.offsets), max(layer.offsets) + 1)),
            units=layer.units,
            activation=layer.activation,
        )
        for layer in spec.layers
    ]
    return NetworkSpec(
        input_dim=spec.input_dim,
        layers=tuple(dense_layers),
        num_classes=spec.num_classes,
        preset_name=None,
    )


def init_params(spec: NetworkSpec, seed: int = 0) -> NetworkParams:
    """Deterministic parameter init for a spec."""
    rng = np.random.default_rng(seed)
    layers = []
    lower = spec.input_dim
    for layer in spec.layers:
        layers.append(glorot_uniform(rng, layer.units, len(layer.offsets) * lower))
        lower = layer.units
    output = glorot_uniform(rng, spec.num_classes, lower)
    return NetworkParams(layers, output)


def flatten_params(params: NetworkParams) -> np.ndarray:
    pieces = []
    for p in params.layers + [params.output]:
        pieces.append(p.weights.ravel())
        pieces.append(p.bias.ravel())
    return np.concatenate(pieces)


def unflatten_params(template: NetworkParams, vec: np.ndarray) -> NetworkParams:
    out_layers = []
    pos = 0
    for p in template.layers + [template.output]:
        w = vec[pos : pos + p.weights.size].reshape(p.weights.shape)
        pos += p.weights.size
        b = vec[pos : pos + p.bias.size]
        pos += p.bias.size
        out_layers.append(AffineParams(w.copy(), b.copy()))
    if pos != vec.size:
        raise ShapeError(f"vector length {vec.size} does not match parameter count {pos}")
    return NetworkParams(out_layers[:-1], out_layers[-1])


def make_preset(name: str, units: int | None = None, input_dim: int | None = None, num_classes: int = 8) -> NetworkSpec:
    """Named architecture presets.

    tdnn-a: 4 subsampled layers, 650 units.  tdnn-b: 5 layers, 1280 units.
    tdnn-c: tdnn-b with a 140-dim input (features plus a 100-dim speaker
    vector).  ffnn: 4 layers, 3600 units, full context spliced at the first
    layer.  ``units`` and ``input_dim`` override the full-scale widths for
    desk-scale runs; the offset patterns are kept.
    """
    key = name.lower()
    if key == "tdnn-a":
        offsets, width, in_dim = _TDNN_OFFSETS[:4], 650, 40
    elif key == "tdnn-b":
        offsets, width, in_dim = _TDNN_OFFSETS, 1280, 40
    elif key == "tdnn-c":
        offsets, width, in_dim = _TDNN_OFFSETS, 1280, 140
    elif key == "ffnn":
        left, right = receptive_field(
            NetworkSpec(40, tuple(LayerSpec(o, 1) for o in _TDNN_OFFSETS), 2)
        )
        offsets = (tuple(range(-left, right + 1)), (0,), (0,), (0,))
        width, in_dim = 3600, 40
    else:
        raise ConfigurationError(
            f"unknown preset {name!r}; expected tdnn-a, tdnn-b, tdnn-c or ffnn"
        )
    width = units if units is not None else width
    in_dim = input_dim if input_dim is not None else in_dim
    layers = tuple(LayerSpec(offs, width, "relu") for offs in offsets)
    return NetworkSpec(
        input_dim=in_dim, layers=layers, num_classes=num_classes, preset_name=key
    )


PRESET_NAMES = ("tdnn-a", "tdnn-b", "tdnn-c", "ffnn")

_ACTIVATION_CODES = {"none": 0, "relu": 1}
_ACTIVATION_NAMES = {v: k for k, v in _ACTIVATION_CODES.items()}


def save_checkpoint(path, spec: NetworkSpec, params: NetworkParams) -> None:
    """Binary little-endian model checkpoint; round-trips bit-exactly."""
    if len(params.layers) != spec.depth:
        raise ShapeError("params do not match spec depth")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(
            struct.pack(
                "<IIII", CHECKPOINT_VERSION, spec.input_dim, spec.num_classes, spec.depth
            )
        )
        for layer, p in zip(spec.layers, params.layers):
            fh.write(struct.pack("<I", len(layer.offsets)))
            fh.write(struct.pack(f"<{len(layer.offsets)}i", *layer.offsets))
            fh.write(struct.pack("<IB", layer.units, _ACTIVATION_CODES[layer.activation]))
            fh.write(np.ascontiguousarray(p.weights, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(p.bias, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(params.output.weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(params.output.bias, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint back as (spec, params)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: missing TDNM magic")
    version, input_dim, num_classes, num_layers = struct.unpack("<IIII", blob[4:20])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    pos = 20
    layers, layer_params = [], []
    lower = input_dim
    try:
        for _ in range(num_layers):
            (num_offsets,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            offsets = struct.unpack_from(f"<{num_offsets}i", blob, pos)
            pos += 4 * num_offsets
            units, act_code = struct.unpack_from("<IB", blob, pos)
            pos += 5
            if act_code not in _ACTIVATION_NAMES:
                raise FormatError(f"{path}: unknown activation code {act_code}")
            in_dim = num_offsets * lower
            w = np.frombuffer(blob, dtype="<f8", count=units * in_dim, offset=pos)
            pos += 8 * units * in_dim
            b = np.frombuffer(blob, dtype="<f8", count=units, offset=pos)
            pos += 8 * units
            layers.append(LayerSpec(offsets, units, _ACTIVATION_NAMES[act_code]))
            layer_params.append(AffineParams(w.reshape(units, in_dim).copy(), b.copy()))
            lower = units
        w = np.frombuffer(blob, dtype="<f8", count=num_classes * lower, offset=pos)
        pos += 8 * num_classes * lower
        b = np.frombuffer(blob, dtype="<f8", count=num_classes, offset=pos)
        pos += 8 * num_classes
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated checkpoint") from exc
    if pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - pos} trailing bytes in checkpoint")
    spec = NetworkSpec(input_dim=input_dim, layers=tuple(layers), num_classes=num_classes)
    params = NetworkParams(layer_params, AffineParams(w.reshape(num_classes, lower).copy(), b.copy()))
    return spec, params


def format_network_spec(spec: NetworkSpec) -> str:
    """Plain-text network description (one `layer =` line per hidden layer)."""
    lines = [
        f"input_dim = {spec.input_dim}",
        f"num_classes = {spec.num_classes}",
    ]
    for layer in spec.layers:
        offs = ",".join(str(o) for o in layer.offsets)
        lines.append(f"layer = {offs} | {layer.units} | {layer.activation}")
    return "\n".join(lines) + "\n"


def parse_network_spec(text: str) -> NetworkSpec:
    input_dim = num_classes = None
    layers = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"bad spec line: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "input_dim":
            input_dim = int(value)
        elif key == "num_classes":
            num_classes = int(value)
        elif key == "layer":
            parts = [p.strip() for p in value.split("|")]
            if len(parts) != 3:
                raise ConfigurationError(
                    f"layer line needs 'offsets | units | activation': {raw!r}"
                )
            offsets = tuple(int(o) for o in parts[0].split(",") if o.strip())
            layers.append(LayerSpec(offsets, int(parts[1]), parts[2]))
        else:
            raise ConfigurationError(f"unknown spec key {key!r}")
    if input_dim is None or num_classes is None or not layers:
        raise ConfigurationError("spec must define input_dim, num_classes and layers")
    return NetworkSpec(input_dim=input_dim, layers=tuple(layers), num_classes=num_classes)
