import numpy as np
import pytest

import tdnnkit as tk
from tdnnkit.corpus import (
    CorpusConfig,
    clean_trajectory,
    collapse_labels,
    corpus_model,
    parse_corpus_config,
    format_corpus_config,
)
from tdnnkit.errors import ConfigurationError, DataError


def load_all(manifest):
    return [tk.load_utterance(manifest, e) for e in manifest.entries]


def segments_of(labels):
    """(phone, start, stop) runs of a label sequence."""
    runs = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[i - 1]:
            runs.append((int(labels[start]), start, i))
            start = i
    return runs


class TestGeneration:
    def test_deterministic_bytes(self, tmp_path):
        cfg = CorpusConfig(num_utterances=12, seed=9)
        m1, _ = tk.generate_corpus(cfg, tmp_path / "a")
        m2, _ = tk.generate_corpus(cfg, tmp_path / "b")
        assert (tmp_path / "a" / "manifest.tsv").read_bytes() == (
            tmp_path / "b" / "manifest.tsv"
        ).read_bytes()
        for e in m1.entries:
            assert (tmp_path / "a" / e.payload_path).read_bytes() == (
                tmp_path / "b" / e.payload_path
            ).read_bytes()

    def test_labels_match_frames_and_transcript(self, tmp_path):
        cfg = CorpusConfig(num_utterances=20, seed=3)
        manifest, _ = tk.generate_corpus(cfg, tmp_path)
        for utt in load_all(manifest):
            assert utt.frames.num_frames == utt.labels.shape[0]
            assert np.all(utt.labels >= 0)
            assert np.all(utt.labels < cfg.num_phones)
            collapsed = collapse_labels(utt.labels)
            assert np.array_equal(collapsed, utt.transcript)
            # no immediate repeats survive collapsing
            assert np.all(collapsed[1:] != collapsed[:-1])

    def test_noiseless_mid_phone_frames_sit_on_phone_means(self, tmp_path):
        cfg = CorpusConfig(num_utterances=10, seed=4, noise_sigma=0.0)
        manifest, model = tk.generate_corpus(cfg, tmp_path)
        c = cfg.coarticulation_frames
        lead, tail = (c + 1) // 2, c // 2
        for utt in load_all(manifest):
            spk = int(utt.speaker_id[3:])
            for phone, start, stop in segments_of(utt.labels):
                expected = model.phone_means[phone] + model.speaker_offsets[spk]
                for t in range(start + lead, stop - tail):
                    assert np.array_equal(utt.frames.data[t], expected)

    def test_coarticulation_geometry(self):
        cfg = CorpusConfig(num_utterances=1, seed=0)
        model = corpus_model(cfg)
        phones = np.array([0, 1])
        durations = np.array([5, 5])
        clean = clean_trajectory(cfg, model, phones, durations)
        mu0, mu1 = model.phone_means[0], model.phone_means[1]
        assert np.allclose(clean[4], 0.75 * mu0 + 0.25 * mu1)
        assert np.allclose(clean[5], 0.5 * mu0 + 0.5 * mu1)
        assert np.allclose(clean[6], 0.25 * mu0 + 0.75 * mu1)
        assert np.array_equal(clean[3], mu0)
        assert np.array_equal(clean[7], mu1)

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            CorpusConfig(coarticulation_frames=5, min_phone_duration=5)
        with pytest.raises(ConfigurationError):
            CorpusConfig(noise_sigma=-0.1)
        with pytest.raises(ConfigurationError):
            CorpusConfig(mode="waveform")
        with pytest.raises(ConfigurationError):
            CorpusConfig(min_phone_duration=6, max_phone_duration=5)


class TestContextInformativeness:
    def test_context_bayes_beats_frame_bayes_on_boundaries(self, tmp_path):
        cfg = CorpusConfig(num_utterances=120, seed=5)
        manifest, model = tk.generate_corpus(cfg, tmp_path)
        sigma2 = cfg.noise_sigma**2
        pairs = [
            (a, b)
            for a in range(cfg.num_phones)
            for b in range(cfg.num_phones)
            if a != b
        ]
        # clean window templates around a boundary, per ordered phone pair
        tmpl = {}
        for a, b in pairs:
            mu_a, mu_b = model.phone_means[a], model.phone_means[b]
            rows = [
                mu_a,
                mu_a,
                0.75 * mu_a + 0.25 * mu_b,
                0.5 * mu_a + 0.5 * mu_b,
                0.25 * mu_a + 0.75 * mu_b,
                mu_b,
                mu_b,
            ]
            tmpl[(a, b)] = np.concatenate(rows)

        frame_errors, ctx_errors, total = 0, 0, 0
        for utt in load_all(manifest):
            spk = int(utt.speaker_id[3:])
            offset = model.speaker_offsets[spk]
            runs = segments_of(utt.labels)
            T = utt.labels.shape[0]
            for k in range(1, len(runs)):
                b = runs[k][1]
                if b - 3 < 0 or b + 3 >= T:
                    continue
                truth = int(utt.labels[b])
                center = utt.frames.data[b] - offset
                window = (utt.frames.data[b - 3 : b + 4] - offset).ravel()
                frame_scores = np.full(cfg.num_phones, -np.inf)
                ctx_scores = np.full(cfg.num_phones, -np.inf)
                for a, c in pairs:
                    mid = 0.5 * model.phone_means[a] + 0.5 * model.phone_means[c]
                    ll_frame = -np.sum((center - mid) ** 2) / (2 * sigma2)
                    ll_ctx = -np.sum((window - tmpl[(a, c)]) ** 2) / (2 * sigma2)
                    frame_scores[c] = np.logaddexp(frame_scores[c], ll_frame)
                    ctx_scores[c] = np.logaddexp(ctx_scores[c], ll_ctx)
                total += 1
                frame_errors += int(np.argmax(frame_scores)) != truth
                ctx_errors += int(np.argmax(ctx_scores)) != truth
        assert total > 200
        frame_rate = frame_errors / total
        ctx_rate = ctx_errors / total
        # single-frame evidence is symmetric in (a, b) at the boundary center
        assert frame_rate > 0.4
        assert ctx_rate < 0.05
        assert ctx_rate < frame_rate


class TestSplit:
    def test_disjoint_exhaustive(self, tmp_path):
        cfg = CorpusConfig(num_utterances=60, seed=6, num_speakers=5)
        manifest, _ = tk.generate_corpus(cfg, tmp_path)
        train, test = tk.split_manifest(manifest, 0.8, seed=1)
        train_ids = {e.utt_id for e in train.entries}
        test_ids = {e.utt_id for e in test.entries}
        assert len(train_ids & test_ids) == 0
        assert len(train_ids) + len(test_ids) == len(manifest)

    def test_same_seed_identical(self, tmp_path):
        cfg = CorpusConfig(num_utterances=40, seed=7, num_speakers=4)
        manifest, _ = tk.generate_corpus(cfg, tmp_path)
        a1, b1 = tk.split_manifest(manifest, 0.7, seed=3)
        a2, b2 = tk.split_manifest(manifest, 0.7, seed=3)
        assert [e.utt_id for e in a1.entries] == [e.utt_id for e in a2.entries]
        assert [e.utt_id for e in b1.entries] == [e.utt_id for e in b2.entries]

    def test_speaker_stratification(self, tmp_path):
        cfg = CorpusConfig(num_utterances=80, seed=8, num_speakers=6)
        manifest, _ = tk.generate_corpus(cfg, tmp_path)
        counts = {}
        for e in manifest.entries:
            counts[e.speaker_id] = counts.get(e.speaker_id, 0) + 1
        train, _ = tk.split_manifest(manifest, 0.9, seed=0)
        train_speakers = {e.speaker_id for e in train.entries}
        for speaker, count in counts.items():
            if count >= 2:
                assert speaker in train_speakers

    def test_bad_fraction(self, tmp_path):
        cfg = CorpusConfig(num_utterances=4, seed=1)
        manifest, _ = tk.generate_corpus(cfg, tmp_path)
        with pytest.raises(ConfigurationError):
            tk.split_manifest(manifest, 1.0)


class TestManifestFiles:
    def test_round_trip(self, tmp_path):
        cfg = CorpusConfig(num_utterances=8, seed=2)
        manifest, _ = tk.generate_corpus(cfg, tmp_path)
        back = tk.read_manifest(tmp_path / "manifest.tsv")
        assert [(e.utt_id, e.speaker_id, e.payload_path, e.label_path) for e in back.entries] == [
            (e.utt_id, e.speaker_id, e.payload_path, e.label_path) for e in manifest.entries
        ]
        utt = tk.load_utterance(back, back.entries[0])
        assert utt.frames.num_frames == utt.labels.shape[0]

    def test_label_file_format(self, tmp_path):
        path = tmp_path / "u.labels"
        tk.write_label_file(path, "u7", np.array([0, 0, 1, 2]))
        assert path.read_text() == "u7 0 0 1 2\n"
        utt_id, labels = tk.read_label_file(path)
        assert utt_id == "u7"
        assert labels.tolist() == [0, 0, 1, 2]

    def test_mismatched_label_id(self, tmp_path):
        cfg = CorpusConfig(num_utterances=2, seed=2)
        manifest, _ = tk.generate_corpus(cfg, tmp_path)
        entry = manifest.entries[0]
        tk.write_label_file(manifest.resolve(entry.label_path), "wrong", np.array([0]))
        with pytest.raises(DataError):
            tk.load_utterance(manifest, entry)


class TestAudioMode:
    def test_wav_payloads_featurize_end_to_end(self, tmp_path):
        cfg = CorpusConfig(num_utterances=5, seed=10, mode="audio")
        manifest, _ = tk.generate_corpus(cfg, tmp_path)
        for e in manifest.entries:
            utt = tk.load_utterance(manifest, e)
            assert utt.audio is not None
            frames = tk.frame_signal(utt.audio, tk.FeatureConfig())
            assert frames.shape[0] == utt.labels.shape[0]
            feats = tk.compute_mfcc(utt.audio)
            assert feats.num_frames == utt.labels.shape[0]
            assert feats.dims == 40

    def test_audio_deterministic(self, tmp_path):
        cfg = CorpusConfig(num_utterances=3, seed=12, mode="audio")
        m1, _ = tk.generate_corpus(cfg, tmp_path / "a")
        tk.generate_corpus(cfg, tmp_path / "b")
        for e in m1.entries:
            assert (tmp_path / "a" / e.payload_path).read_bytes() == (
                tmp_path / "b" / e.payload_path
            ).read_bytes()


class TestCorpusConfigText:
    def test_round_trip(self):
        cfg = CorpusConfig(num_utterances=77, noise_sigma=0.25, mode="audio", seed=13)
        back = parse_corpus_config(format_corpus_config(cfg))
        assert back == cfg

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError):
            parse_corpus_config("bogus = 3\n")
