"""Model scoring: frame accuracy, greedy decoding, and edit-distance CER.

CER = (substitutions + deletions + insertions) / reference length, aggregated
over an entire corpus (not averaged per utterance).  It can exceed 1.0 for
insertion-heavy hypotheses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import CorpusManifest, collapse_labels, load_utterance
from .errors import DataError, ShapeError
from .tdnn import NetworkParams, NetworkSpec, build_plan, forward


@dataclass
class UtteranceScore:
    utt_id: str
    ref_len: int
    substitutions: int
    deletions: int
    insertions: int
    frame_correct: int
    frame_total: int

    @property
    def cer(self) -> float:
        errors = self.substitutions + self.deletions + self.insertions
        return errors / self.ref_len if self.ref_len > 0 else float(errors > 0)


@dataclass
class EvalReport:
    frame_accuracy: float
    cer: float
    substitutions: int
    deletions: int
    insertions: int
    ref_length: int
    per_utterance: list


def frame_accuracy(posteriors: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of frames whose argmax posterior matches the label."""
    posteriors = np.asarray(posteriors, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if posteriors.shape[0] != labels.shape[0]:
        raise ShapeError(
            f"{posteriors.shape[0]} posterior rows vs {labels.shape[0]} labels"
        )
    if labels.shape[0] == 0:
        raise DataError("cannot score zero frames")
    return float(np.mean(posteriors.argmax(axis=1) == labels))


def greedy_decode(posteriors: np.ndarray) -> np.ndarray:
    """Per-frame argmax collapsed over consecutive duplicates."""
    posteriors = np.asarray(posteriors, dtype=np.float64)
    return collapse_labels(posteriors.argmax(axis=1))


def levenshtein(ref, hyp):
    """Minimal edit distance with unit costs and an S/D/I breakdown.

    Returns (distance, substitutions, deletions, insertions) for one optimal
    alignment.  Ties are broken deterministically: substitution/match is
    preferred over deletion, deletion over insertion.
    """
    ref = list(ref)
    hyp = list(hyp)
    n, m = len(ref), len(hyp)
    width = m + 1
    dist = list(range(width))
    table = [dist]
    for i in range(1, n + 1):
        prev = table[i - 1]
        row = [i] + [0] * m
        ri = ref[i - 1]
        for j in range(1, width):
            best = prev[j - 1] + (ri != hyp[j - 1])
            dele = prev[j] + 1
            if dele < best:
                best = dele
            ins = row[j - 1] + 1
            if ins < best:
                best = ins
            row[j] = best
        table.append(row)
    subs = dels = inss = 0
    i, j = n, m
    while i > 0 or j > 0:
        cur = table[i][j]
        if i > 0 and j > 0 and table[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]) == cur:
            subs += ref[i - 1] != hyp[j - 1]
            i -= 1
            j -= 1
        elif i > 0 and table[i - 1][j] + 1 == cur:
            dels += 1
            i -= 1
        else:
            inss += 1
            j -= 1
    return table[n][m], subs, dels, inss


def score_utterance(utt_id: str, posteriors: np.ndarray, labels: np.ndarray) -> UtteranceScore:
    ref = collapse_labels(labels)
    hyp = greedy_decode(posteriors)
    _, s, d, ins = levenshtein(ref, hyp)
    correct = int(np.sum(posteriors.argmax(axis=1) == labels))
    return UtteranceScore(
        utt_id=utt_id,
        ref_len=int(ref.shape[0]),
        substitutions=s,
        deletions=d,
        insertions=ins,
        frame_correct=correct,
        frame_total=int(labels.shape[0]),
    )


def aggregate_scores(scores: list) -> EvalReport:
    if not scores:
        raise DataError("no utterances to aggregate")
    s = sum(u.substitutions for u in scores)
    d = sum(u.deletions for u in scores)
    ins = sum(u.insertions for u in scores)
    ref_len = sum(u.ref_len for u in scores)
    correct = sum(u.frame_correct for u in scores)
    total = sum(u.frame_total for u in scores)
    return EvalReport(
        frame_accuracy=correct / total,
        cer=(s + d + ins) / ref_len,
        substitutions=s,
        deletions=d,
        insertions=ins,
        ref_length=ref_len,
        per_utterance=scores,
    )


def score_corpus(spec: NetworkSpec, params: NetworkParams, manifest: CorpusManifest) -> EvalReport:
    """Score a model over every utterance in a manifest."""
    if len(manifest) == 0:
        raise DataError("empty manifest")
    scores = []
    for entry in manifest.entries:
        utt = load_utterance(manifest, entry)
        if utt.frames is None:
            raise DataError(
                f"{entry.utt_id}: audio payloads must be featurized before scoring"
            )
        plan = build_plan(spec, utt.frames.num_frames)
        post = forward(spec, params, utt.frames, plan)
        scores.append(score_utterance(entry.utt_id, post.data, utt.labels))
    return aggregate_scores(scores)


def format_eval_report(report: EvalReport) -> str:
    """TSV report: one row per utterance plus a TOTAL row."""
    lines = ["utt_id\tref_len\tS\tD\tI\tcer\tframe_acc"]
    for u in report.per_utterance:
        acc = u.frame_correct / u.frame_total if u.frame_total else 0.0
        lines.append(
            f"{u.utt_id}\t{u.ref_len}\t{u.substitutions}\t{u.deletions}\t"
            f"{u.insertions}\t{u.cer:.6f}\t{acc:.6f}"
        )
    lines.append(
        f"TOTAL\t{report.ref_length}\t{report.substitutions}\t{report.deletions}\t"
        f"{report.insertions}\t{report.cer:.6f}\t{report.frame_accuracy:.6f}"
    )
    return "\n".join(lines) + "\n"
