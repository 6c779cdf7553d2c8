"""Subsampled time-delay acoustic modeling toolkit.

Capabilities: an MFCC feature frontend, time-delay network layers with
subsampled compute plans, a parameter-matched feed-forward baseline, a
deterministic synthetic phone corpus, SGD training with a greedy layer-wise
schedule, and edit-distance scoring.
"""

__version__ = "0.1.0"

from .corpus import (
    CorpusConfig,
    CorpusManifest,
    CorpusModel,
    ManifestEntry,
    Utterance,
    clean_trajectory,
    collapse_labels,
    corpus_model,
    generate_corpus,
    load_utterance,
    read_label_file,
    read_manifest,
    split_manifest,
    write_label_file,
    write_manifest,
)
from .errors import (
    ConfigurationError,
    DataError,
    FormatError,
    NormalizationError,
    NumericError,
    ShapeError,
    ToolkitError,
)
from .features import (
    AudioBuffer,
    FeatureConfig,
    FeatureMatrix,
    SpeakerEmbedding,
    append_embedding,
    apply_cmvn,
    compute_mfcc,
    filter_center_frequencies,
    frame_signal,
    hz_to_mel,
    mel_energies,
    mel_filterbank,
    mel_to_hz,
    read_features,
    read_raw_pcm,
    read_wav,
    speaker_embedding,
    splice,
    write_features,
    write_wav,
)
from .nncore import (
    AffineParams,
    Batch,
    affine_backward,
    affine_forward,
    glorot_uniform,
    grad_check,
    relu,
    relu_backward,
    softmax,
    softmax_xent,
)
from .scoring import (
    EvalReport,
    UtteranceScore,
    aggregate_scores,
    format_eval_report,
    frame_accuracy,
    greedy_decode,
    levenshtein,
    score_corpus,
    score_utterance,
)
from .tdnn import (
    ComputePlan,
    DenseActivations,
    LayerSpec,
    NetworkParams,
    NetworkSpec,
    backward,
    build_dense_plan,
    build_plan,
    dense_offsets_variant,
    flatten_params,
    flop_count,
    format_network_spec,
    forward,
    forward_dense,
    init_params,
    load_checkpoint,
    make_preset,
    param_count,
    parse_network_spec,
    receptive_field,
    save_checkpoint,
    unflatten_params,
)
from .training import (
    BenchResult,
    ConvergenceRatio,
    ConvergenceReport,
    EvalPoint,
    TrainConfig,
    TrainedModel,
    bench_convergence,
    convergence_ratio,
    evaluate_model,
    format_bench_report,
    format_convergence_report,
    format_train_config,
    greedy_layerwise_train,
    grow_network,
    load_dataset,
    make_ffnn_baseline,
    parse_train_config,
    train,
)
