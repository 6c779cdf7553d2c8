"""Race a subsampled temporal network against its parameter-matched FFNN.

Both models see identical data, identical training settings, and parameter
counts within 5% of each other; the FFNN reads the same temporal context as a
flat splice at its first layer.  The race measures updates and wall-clock
until 90% held-out frame accuracy, then scores both with greedy decoding and
character error rate.
"""

import tempfile

import tdnnkit as tk

with tempfile.TemporaryDirectory() as workdir:
    cfg = tk.CorpusConfig(num_utterances=600, seed=2)
    manifest, _ = tk.generate_corpus(cfg, workdir)
    train_m, held_m = tk.split_manifest(manifest, 0.9, seed=0)
    print(f"corpus: {len(train_m)} train / {len(held_m)} held-out utterances")

    tdnn = tk.make_preset("tdnn-b", units=48, input_dim=40, num_classes=8)
    ffnn = tk.make_ffnn_baseline(tdnn, budget_tolerance=0.05)
    print(f"tdnn:  {tk.param_count(tdnn):,} params, width {tdnn.layers[0].units}")
    print(f"ffnn:  {tk.param_count(ffnn):,} params, width {ffnn.layers[0].units}, "
          f"first-layer splice of {len(ffnn.layers[0].offsets)} frames")

    train_cfg = tk.TrainConfig(
        learning_rate=0.005,
        max_epochs=8,
        seed=0,
        target_metric="frame_acc",
        target_value=0.9,
        evals_per_epoch=8,
        stop_at_target=True,
    )

    results = {}
    for name, spec in (("tdnn", tdnn), ("ffnn", ffnn)):
        model, report = tk.train(spec, train_cfg, train_m, held_m)
        results[name] = (model, report)
        print(f"\n{name} trajectory (updates, held-out loss, held-out acc):")
        for point in report.history:
            print(f"  {point.updates:5d}  {point.heldout_loss:.4f}  {point.heldout_acc:.4f}")
        print(f"{name} reached 90% at {report.updates_to_target} updates "
              f"({report.wall_clock_to_target:.1f}s)")

    ratio = tk.convergence_ratio(results["ffnn"][1], results["tdnn"][1])
    print(f"\nffnn/tdnn updates-to-target ratio:    {ratio.update_ratio:.2f}")
    print(f"ffnn/tdnn wall-clock-to-target ratio: {ratio.wallclock_ratio:.2f}")

    for name in ("tdnn", "ffnn"):
        model, _ = results[name]
        report = tk.score_corpus(model.spec, model.params, held_m)
        print(f"{name} held-out: frame accuracy {report.frame_accuracy:.3f}, "
              f"CER {report.cer:.4f}")
