"""Mini-batch SGD training with momentum for TDNN and spliced-FFNN models.

Batches count output frames, not utterances, so architectures under
comparison see the same supervision per update.  Training is deterministic
for a fixed seed in single-threaded mode; with threads > 1 the per-chunk
gradients are still reduced in a fixed order, so results do not change.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import CorpusManifest, load_utterance
from .errors import ConfigurationError, DataError, NumericError, ShapeError
from .nncore import AffineParams, glorot_uniform, softmax_xent
from .tdnn import (
    LayerSpec,
    NetworkParams,
    NetworkSpec,
    _backward_arrays,
    _forward_trace,
    build_plan,
    init_params,
    param_count,
    receptive_field,
)

# Relative held-out loss improvement below this triggers learning-rate halving.
LR_IMPROVEMENT_GATE = 0.001

TARGET_METRICS = ("frame_acc", "xent")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.003
    momentum: float = 0.9
    batch_frames: int = 256
    max_epochs: int = 20
    lr_halving: bool = True
    seed: int = 0
    layerwise_schedule: tuple | None = None
    target_metric: str = "frame_acc"
    target_value: float = 0.9
    evals_per_epoch: int = 1
    stop_at_target: bool = False

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.batch_frames < 1:
            raise ConfigurationError("batch_frames must be at least 1")
        if self.max_epochs < 1:
            raise ConfigurationError("max_epochs must be at least 1")
        if self.evals_per_epoch < 1:
            raise ConfigurationError("evals_per_epoch must be at least 1")
        if self.target_metric not in TARGET_METRICS:
            raise ConfigurationError(
                f"target_metric must be one of {TARGET_METRICS}, got {self.target_metric!r}"
            )
        if self.layerwise_schedule is not None:
            object.__setattr__(
                self, "layerwise_schedule", tuple(int(e) for e in self.layerwise_schedule)
            )
            if any(e < 1 for e in self.layerwise_schedule):
                raise ConfigurationError("layerwise stage epochs must be positive")


@dataclass
class EvalPoint:
    updates: int
    train_loss: float
    heldout_loss: float
    heldout_acc: float
    wall_clock_s: float
    stage: int


@dataclass
class ConvergenceReport:
    history: list = field(default_factory=list)
    updates_to_target: int | None = None
    wall_clock_to_target: float | None = None

    def reached_target(self) -> bool:
        return self.updates_to_target is not None


@dataclass
class TrainedModel:
    spec: NetworkSpec
    params: NetworkParams


@dataclass
class _LoadedUtt:
    utt_id: str
    data: np.ndarray
    labels: np.ndarray


def load_dataset(manifest: CorpusManifest, spec: NetworkSpec) -> list:
    """Load every utterance into memory and validate it against the spec."""
    if len(manifest) == 0:
        raise DataError("empty manifest")
    out = []
    for entry in manifest.entries:
        utt = load_utterance(manifest, entry)
        if utt.frames is None:
            raise DataError(f"{entry.utt_id}: training needs feature payloads, not audio")
        if utt.frames.dims != spec.input_dim:
            raise ShapeError(
                f"{entry.utt_id}: feature dim {utt.frames.dims} does not match "
                f"network input_dim {spec.input_dim}"
            )
        if utt.labels.max(initial=0) >= spec.num_classes:
            raise DataError(
                f"{entry.utt_id}: label {int(utt.labels.max())} outside "
                f"[0, {spec.num_classes})"
            )
        out.append(_LoadedUtt(entry.utt_id, utt.frames.data, utt.labels))
    return out


def _zero_like(params: NetworkParams) -> NetworkParams:
    return NetworkParams(
        [AffineParams(np.zeros_like(p.weights), np.zeros_like(p.bias)) for p in params.layers],
        AffineParams(np.zeros_like(params.output.weights), np.zeros_like(params.output.bias)),
    )


def _all_affines(params: NetworkParams):
    return params.layers + [params.output]


def _chunk_gradient(spec, params, utt: _LoadedUtt, start: int, stop: int):
    plan = build_plan(spec, (start, stop))
    loss, grads = _backward_arrays(spec, params, utt.data, plan, utt.labels[start:stop])
    return loss, grads, stop - start


def _batch_gradient(spec, params, data, batch, pool):
    jobs = [(data[idx], start, stop) for idx, start, stop in batch]
    if pool is not None:
        results = list(
            pool.map(lambda j: _chunk_gradient(spec, params, *j), jobs)
        )
    else:
        results = [_chunk_gradient(spec, params, *j) for j in jobs]
    total_frames = sum(r[2] for r in results)
    loss = sum(r[0] * r[2] for r in results) / total_frames
    accum = None
    for _, grads, frames in results:
        w = frames / total_frames
        if accum is None:
            accum = NetworkParams(
                [AffineParams(w * g.weights, w * g.bias) for g in grads.layers],
                AffineParams(w * grads.output.weights, w * grads.output.bias),
            )
        else:
            for a, g in zip(_all_affines(accum), _all_affines(grads)):
                a.weights += w * g.weights
                a.bias += w * g.bias
    return loss, accum, total_frames


def evaluate_model(spec: NetworkSpec, params: NetworkParams, data, threads: int = 1):
    """Held-out mean frame cross-entropy and frame accuracy."""
    if isinstance(data, CorpusManifest):
        data = load_dataset(data, spec)

    def one(utt):
        plan = build_plan(spec, utt.data.shape[0])
        _, _, _, logits = _forward_trace(spec, params, utt.data, plan)
        loss, _ = softmax_xent(logits, utt.labels)
        correct = int(np.sum(logits.argmax(axis=1) == utt.labels))
        return loss * utt.labels.shape[0], correct, utt.labels.shape[0]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, data))
    else:
        results = [one(u) for u in data]
    frames = sum(r[2] for r in results)
    loss = sum(r[0] for r in results) / frames
    acc = sum(r[1] for r in results) / frames
    return loss, acc


def _assemble_batches(data, order, batch_frames):
    """Cut shuffled utterances into chunks and group them into batches of at
    least batch_frames output frames (the final batch may be smaller)."""
    batches, current, acc = [], [], 0
    for idx in order:
        n = data[idx].data.shape[0]
        pos = 0
        while pos < n:
            take = min(batch_frames, n - pos)
            current.append((int(idx), pos, pos + take))
            acc += take
            pos += take
            if acc >= batch_frames:
                batches.append(current)
                current, acc = [], 0
    if current:
        batches.append(current)
    return batches


def _eval_positions(num_batches, evals_per_epoch):
    positions = {
        max(1, int(np.ceil(num_batches * (i + 1) / evals_per_epoch)))
        for i in range(evals_per_epoch)
    }
    positions.add(num_batches)
    return positions


@dataclass
class _TrainerState:
    wall_start: float
    report: ConvergenceReport
    updates: int = 0
    best_loss: float = np.inf
    best_params: NetworkParams | None = None


def _target_reached(cfg: TrainConfig, heldout_loss: float, heldout_acc: float) -> bool:
    if cfg.target_metric == "frame_acc":
        return heldout_acc >= cfg.target_value
    return heldout_loss <= cfg.target_value


def _run_stage(spec, params, cfg, train_data, heldout_data, epochs, stage, state, threads, track_best):
    """Train `epochs` epochs of one stage; returns True if stopped at target."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, stage]))
    velocity = _zero_like(params)
    lr = cfg.learning_rate
    halving_baseline = np.inf
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for _epoch in range(epochs):
            order = rng.permutation(len(train_data))
            batches = _assemble_batches(train_data, order, cfg.batch_frames)
            eval_at = _eval_positions(len(batches), cfg.evals_per_epoch)
            loss_sum, loss_frames = 0.0, 0
            for bi, batch in enumerate(batches, 1):
                try:
                    loss, grads, frames = _batch_gradient(spec, params, train_data, batch, pool)
                except NumericError as exc:
                    raise NumericError(
                        f"numeric divergence at update {state.updates + 1}: {exc}"
                    ) from exc
                if not np.isfinite(loss):
                    raise NumericError(
                        f"numeric divergence at update {state.updates + 1}: loss is not finite"
                    )
                for p, v, g in zip(
                    _all_affines(params), _all_affines(velocity), _all_affines(grads)
                ):
                    v.weights *= cfg.momentum
                    v.weights -= lr * g.weights
                    v.bias *= cfg.momentum
                    v.bias -= lr * g.bias
                    p.weights += v.weights
                    p.bias += v.bias
                state.updates += 1
                loss_sum += loss * frames
                loss_frames += frames
                if bi in eval_at:
                    heldout_loss, heldout_acc = evaluate_model(
                        spec, params, heldout_data, threads
                    )
                    wall = time.perf_counter() - state.wall_start
                    state.report.history.append(
                        EvalPoint(
                            updates=state.updates,
                            train_loss=loss_sum / max(loss_frames, 1),
                            heldout_loss=heldout_loss,
                            heldout_acc=heldout_acc,
                            wall_clock_s=wall,
                            stage=stage,
                        )
                    )
                    loss_sum, loss_frames = 0.0, 0
                    reached = _target_reached(cfg, heldout_loss, heldout_acc)
                    if reached and state.report.updates_to_target is None:
                        state.report.updates_to_target = state.updates
                        state.report.wall_clock_to_target = wall
                    stopping = cfg.stop_at_target and track_best and reached
                    if track_best and heldout_loss < state.best_loss and (
                        bi == len(batches) or stopping
                    ):
                        state.best_loss = heldout_loss
                        state.best_params = params.copy()
                    if bi == len(batches) and cfg.lr_halving:
                        if (
                            np.isfinite(halving_baseline)
                            and (halving_baseline - heldout_loss)
                            <= LR_IMPROVEMENT_GATE * halving_baseline
                        ):
                            lr *= 0.5
                        halving_baseline = min(halving_baseline, heldout_loss)
                    if stopping:
                        return True
    finally:
        if pool is not None:
            pool.shutdown()
    return False


def train(spec: NetworkSpec, cfg: TrainConfig, train_manifest, heldout_manifest, threads: int = 1):
    """SGD with momentum on mean frame cross-entropy.

    Returns (TrainedModel, ConvergenceReport); the model carries the
    parameters with the best held-out loss among epoch-boundary evaluations
    (and the stopping evaluation, when stop_at_target is set).
    """
    train_data = _as_dataset(train_manifest, spec)
    heldout_data = _as_dataset(heldout_manifest, spec)
    params = init_params(spec, cfg.seed)
    state = _TrainerState(wall_start=time.perf_counter(), report=ConvergenceReport())
    _run_stage(
        spec, params, cfg, train_data, heldout_data,
        epochs=cfg.max_epochs, stage=1, state=state, threads=threads, track_best=True,
    )
    best = state.best_params if state.best_params is not None else params
    return TrainedModel(spec=spec, params=best), state.report


def _as_dataset(manifest_or_data, spec):
    if isinstance(manifest_or_data, CorpusManifest):
        return load_dataset(manifest_or_data, spec)
    return manifest_or_data


def grow_network(spec: NetworkSpec, params: NetworkParams, new_layer: LayerSpec, num_classes: int, init_seed: int):
    """Insert a hidden layer directly below the output affine.

    Lower-layer parameters are kept as-is; the new layer and the output
    affine are freshly initialized.
    """
    rng = np.random.default_rng(np.random.SeedSequence([init_seed]))
    lower_units = spec.layers[-1].units
    new_spec = NetworkSpec(
        input_dim=spec.input_dim,
        layers=spec.layers + (new_layer,),
        num_classes=num_classes,
        preset_name=spec.preset_name,
    )
    fresh_hidden = glorot_uniform(rng, new_layer.units, len(new_layer.offsets) * lower_units)
    fresh_output = glorot_uniform(rng, num_classes, new_layer.units)
    return new_spec, NetworkParams(list(params.layers) + [fresh_hidden], fresh_output)


def greedy_layerwise_train(spec: NetworkSpec, cfg: TrainConfig, train_manifest, heldout_manifest, threads: int = 1):
    """Layer-by-layer supervised training.

    Stage 1 trains a one-hidden-layer network; each later stage inserts the
    next hidden layer below the output affine (fresh init, output affine
    re-initialized, lower weights retained) and keeps training.  The report
    concatenates all stages, with the stage recorded per evaluation.
    """
    if cfg.layerwise_schedule is None:
        raise ConfigurationError("greedy layerwise training needs a layerwise_schedule")
    if len(cfg.layerwise_schedule) != spec.depth:
        raise ConfigurationError(
            f"schedule has {len(cfg.layerwise_schedule)} stages but the network "
            f"has {spec.depth} layers"
        )
    train_data = _as_dataset(train_manifest, spec)
    heldout_data = _as_dataset(heldout_manifest, spec)
    sub_spec = NetworkSpec(
        input_dim=spec.input_dim,
        layers=spec.layers[:1],
        num_classes=spec.num_classes,
        preset_name=spec.preset_name,
    )
    params = init_params(sub_spec, cfg.seed)
    state = _TrainerState(wall_start=time.perf_counter(), report=ConvergenceReport())
    final_depth = spec.depth
    for stage_index, epochs in enumerate(cfg.layerwise_schedule, start=1):
        if stage_index > 1:
            stage_seed = int(
                np.random.SeedSequence([cfg.seed, stage_index, 1]).generate_state(1)[0]
            )
            sub_spec, params = grow_network(
                sub_spec, params, spec.layers[stage_index - 1], spec.num_classes, stage_seed
            )
        is_final = stage_index == final_depth
        stopped = _run_stage(
            sub_spec, params, cfg, train_data, heldout_data,
            epochs=epochs, stage=stage_index, state=state, threads=threads,
            track_best=is_final,
        )
        if stopped:
            break
    best = state.best_params if state.best_params is not None else params
    return TrainedModel(spec=sub_spec, params=best), state.report


def make_ffnn_baseline(tdnn_spec: NetworkSpec, budget_tolerance: float = 0.05) -> NetworkSpec:
    """Parameter-matched feed-forward baseline for a TDNN spec.

    The first layer splices the TDNN's full receptive field densely; all
    deeper layers read offset {0} only, so the same forward machinery runs
    both architectures.  A uniform hidden width is chosen so the parameter
    counts agree within budget_tolerance.
    """
    left, right = receptive_field(tdnn_spec)
    splice = tuple(range(-left, right + 1))
    depth = tdnn_spec.depth
    target = param_count(tdnn_spec)

    def candidate(width):
        layers = [LayerSpec(splice, width, "relu")]
        layers += [LayerSpec((0,), width, "relu") for _ in range(depth - 1)]
        return NetworkSpec(
            input_dim=tdnn_spec.input_dim,
            layers=tuple(layers),
            num_classes=tdnn_spec.num_classes,
            preset_name="ffnn-matched",
        )

    lo, hi = 1, 2
    while param_count(candidate(hi)) < target:
        hi *= 2
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if param_count(candidate(mid)) < target:
            lo = mid
        else:
            hi = mid
    best_spec, best_gap = None, np.inf
    for width in (lo, hi):
        spec = candidate(width)
        gap = abs(param_count(spec) - target) / target
        if gap < best_gap:
            best_spec, best_gap = spec, gap
    if best_gap > budget_tolerance:
        raise ConfigurationError(
            f"no width matches the parameter budget within {budget_tolerance:.1%}; "
            f"nearest achievable gap is {best_gap:.1%} "
            f"({param_count(best_spec)} vs {target} params)"
        )
    return best_spec


@dataclass
class ConvergenceRatio:
    comparable: bool
    update_ratio: float | None = None
    wallclock_ratio: float | None = None
    reason: str | None = None


def convergence_ratio(ffnn_report: ConvergenceReport, tdnn_report: ConvergenceReport) -> ConvergenceRatio:
    """FFNN-to-TDNN ratios of updates and wall-clock to the target metric."""
    missing = []
    if not ffnn_report.reached_target():
        missing.append("ffnn")
    if not tdnn_report.reached_target():
        missing.append("tdnn")
    if missing:
        return ConvergenceRatio(
            comparable=False,
            reason=f"target not reached by: {', '.join(missing)}",
        )
    return ConvergenceRatio(
        comparable=True,
        update_ratio=ffnn_report.updates_to_target / tdnn_report.updates_to_target,
        wallclock_ratio=ffnn_report.wall_clock_to_target / tdnn_report.wall_clock_to_target,
    )


@dataclass
class BenchSeedRow:
    seed: int
    tdnn_updates: int | None
    ffnn_updates: int | None
    tdnn_wallclock_s: float | None
    ffnn_wallclock_s: float | None
    ratio: ConvergenceRatio


@dataclass
class BenchResult:
    rows: list
    median_update_ratio: float | None
    median_wallclock_ratio: float | None


def bench_convergence(tdnn_spec: NetworkSpec, cfg: TrainConfig, train_manifest, heldout_manifest, seeds, threads: int = 1, budget_tolerance: float = 0.05) -> BenchResult:
    """Race the TDNN against its parameter-matched FFNN over several seeds."""
    ffnn_spec = make_ffnn_baseline(tdnn_spec, budget_tolerance)
    train_tdnn = _as_dataset(train_manifest, tdnn_spec)
    heldout_tdnn = _as_dataset(heldout_manifest, tdnn_spec)
    rows = []
    for seed in seeds:
        run_cfg = replace(cfg, seed=int(seed), stop_at_target=True)
        _, tdnn_report = train(tdnn_spec, run_cfg, train_tdnn, heldout_tdnn, threads)
        _, ffnn_report = train(ffnn_spec, run_cfg, train_tdnn, heldout_tdnn, threads)
        rows.append(
            BenchSeedRow(
                seed=int(seed),
                tdnn_updates=tdnn_report.updates_to_target,
                ffnn_updates=ffnn_report.updates_to_target,
                tdnn_wallclock_s=tdnn_report.wall_clock_to_target,
                ffnn_wallclock_s=ffnn_report.wall_clock_to_target,
                ratio=convergence_ratio(ffnn_report, tdnn_report),
            )
        )
    update_ratios = [r.ratio.update_ratio for r in rows if r.ratio.comparable]
    wall_ratios = [r.ratio.wallclock_ratio for r in rows if r.ratio.comparable]
    return BenchResult(
        rows=rows,
        median_update_ratio=float(np.median(update_ratios)) if update_ratios else None,
        median_wallclock_ratio=float(np.median(wall_ratios)) if wall_ratios else None,
    )


def format_convergence_report(report: ConvergenceReport) -> str:
    lines = ["updates\ttrain_loss\theldout_loss\theldout_acc\twall_clock_s\tstage"]
    for p in report.history:
        lines.append(
            f"{p.updates}\t{p.train_loss:.6f}\t{p.heldout_loss:.6f}\t"
            f"{p.heldout_acc:.6f}\t{p.wall_clock_s:.3f}\t{p.stage}"
        )
    return "\n".join(lines) + "\n"


def _fmt_opt(value, pattern="{:.4f}"):
    return pattern.format(value) if value is not None else "not_reached"


def format_bench_report(result: BenchResult, target_metric: str, target_value: float) -> str:
    lines = [
        f"# target: {target_metric} {target_value}",
        "seed\ttdnn_updates\tffnn_updates\tupdate_ratio\t"
        "tdnn_wallclock_s\tffnn_wallclock_s\twallclock_ratio",
    ]
    for r in result.rows:
        lines.append(
            f"{r.seed}\t{_fmt_opt(r.tdnn_updates, '{}')}\t{_fmt_opt(r.ffnn_updates, '{}')}\t"
            f"{_fmt_opt(r.ratio.update_ratio)}\t{_fmt_opt(r.tdnn_wallclock_s, '{:.3f}')}\t"
            f"{_fmt_opt(r.ffnn_wallclock_s, '{:.3f}')}\t{_fmt_opt(r.ratio.wallclock_ratio)}"
        )
    lines.append(
        f"MEDIAN\t-\t-\t{_fmt_opt(result.median_update_ratio)}\t-\t-\t"
        f"{_fmt_opt(result.median_wallclock_ratio)}"
    )
    return "\n".join(lines) + "\n"


_BOOL_VALUES = {"true": True, "false": False, "on": True, "off": False, "1": True, "0": False}


def format_train_config(cfg: TrainConfig) -> str:
    lines = []
    for name in cfg.__dataclass_fields__:
        value = getattr(cfg, name)
        if name == "layerwise_schedule":
            value = "none" if value is None else ",".join(str(e) for e in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"


def parse_train_config(text: str) -> TrainConfig:
    fields = TrainConfig.__dataclass_fields__
    values = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"bad train config line: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in fields:
            raise ConfigurationError(f"unknown train config key {key!r}")
        if key == "layerwise_schedule":
            values[key] = (
                None if value.lower() in ("none", "") else tuple(int(v) for v in value.split(","))
            )
        elif key in ("learning_rate", "momentum", "target_value"):
            values[key] = float(value)
        elif key in ("lr_halving", "stop_at_target"):
            if value.lower() not in _BOOL_VALUES:
                raise ConfigurationError(f"bad boolean {value!r} for {key}")
            values[key] = _BOOL_VALUES[value.lower()]
        elif key == "target_metric":
            values[key] = value
        else:
            values[key] = int(value)
    return TrainConfig(**values)
