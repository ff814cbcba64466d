#!/usr/bin/env python3
"""Criteria margins as the generator geometry varies, at fixed (tau, alpha)."""

import sys
import tempfile

from sphash import evaluator
from sphash.data import SynthSpec, generate_synthetic, inject_noise_subset, split
from sphash.fileio import load_checkpoint
from sphash.losses import LossConfig
from sphash.pacer import PaceSchedule
from sphash.seeding import stable_seed
from sphash.trainer import TrainConfig, binary_codes, train


def run(noise, variant, seed, tau, alpha, sep, istd, epochs=200):
    spec = SynthSpec(
        n=2000, k=8, m=2, dims=(64, 48), class_separation=sep, intra_noise_std=istd, seed=seed
    )
    ds = generate_synthetic(spec)
    tr, _, _ = split(ds, 0.7, 0.1, seed)
    ds = inject_noise_subset(ds, tr.source_rows, noise, stable_seed(seed, "train-noise"))
    tr, va, te = split(ds, 0.7, 0.1, seed)
    pace = PaceSchedule("fixed", gamma_start=200.0) if variant == "gamma_override" else None
    cfg = TrainConfig(
        seed=seed, max_epochs=epochs, learning_rate=1e-3, variant=variant, pace=pace,
        loss=LossConfig(tau=tau, alpha=alpha),
    )
    with tempfile.TemporaryDirectory() as tmp:
        report = train(tr, va, cfg, tmp)
        params, _ = load_checkpoint(report.checkpoint_path)
        q = binary_codes(params, te)
        g = binary_codes(params, tr)
        i2t = evaluator.mean_average_precision(
            evaluator.RetrievalTask(q[0], te.true_labels, g[1], tr.true_labels)
        )
        t2i = evaluator.mean_average_precision(
            evaluator.RetrievalTask(q[1], te.true_labels, g[0], tr.true_labels)
        )
        auc0 = f1b = float("nan")
        if report.weight_log:
            auc0 = evaluator.noise_detection_score(report.weight_log[0].weights, tr.noise_mask).auc
            snaps = [s for s in report.weight_log if s.epoch <= report.best_epoch]
            snaps = snaps or report.weight_log[:1]
            f1b = evaluator.noise_detection_score(snaps[-1].weights, tr.noise_mask).f1
        return 0.5 * (i2t + t2i), report.best_epoch, auc0, f1b


def main():
    seed = int(sys.argv[1])
    tau = float(sys.argv[2])
    alpha = float(sys.argv[3])
    sep = float(sys.argv[4])
    istd = float(sys.argv[5])
    res = {}
    for variant, noise in [
        ("full", 0.2), ("full", 0.6), ("full", 0.8),
        ("no_spl", 0.2), ("no_spl", 0.6), ("no_spl", 0.8),
        ("gamma_override", 0.6),
    ]:
        m, be, auc0, f1b = run(noise, variant, seed, tau, alpha, sep, istd)
        res[(variant, noise)] = m
        print(
            f"seed={seed} tau={tau} a={alpha} sep={sep} istd={istd} {variant:16s} "
            f"noise={noise}: MAP {m:.4f} (ep {be:3d}, auc0 {auc0:.3f}, f1 {f1b:.3f})",
            flush=True,
        )
    gap_spl = res[("full", 0.6)] - res[("no_spl", 0.6)]
    gap_go = res[("full", 0.6)] - res[("gamma_override", 0.6)]
    deg_full = (res[("full", 0.2)] - res[("full", 0.8)]) / res[("full", 0.2)]
    deg_nospl = (res[("no_spl", 0.2)] - res[("no_spl", 0.8)]) / res[("no_spl", 0.2)]
    print(
        f"seed={seed} tau={tau} a={alpha} sep={sep} istd={istd} SUMMARY: "
        f"full@0.2 {res[('full', 0.2)]:.4f} | gap_spl {gap_spl:.4f} | gap_go {gap_go:.4f} | "
        f"deg_full {deg_full:.4f} | deg_nospl {deg_nospl:.4f}",
        flush=True,
    )


if __name__ == "__main__":
    main()
