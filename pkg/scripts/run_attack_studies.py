#!/usr/bin/env python3
"""End-to-end attack-detection study.

Builds the cell corpus, trains the base one-step voltage predictor,
fine-tunes it for both pack configurations, calibrates the residual
threshold on each pack's nominal 1C charge, and scores the two attack
scenarios (module-voltage swap on pack 1, partial replay on pack 2).

Writes all artifacts (telemetry CSVs, model JSONs, detection CSVs, plot
data, reports) under --out-dir and prints a summary table.
"""

import argparse
import os
import sys
import time

import numpy as np

from voltsentry import boost, datasets, pipeline, sentinel, simkit, threatgen, transfer


def run_pack_study(base, base_seconds, config, recipe, scenario, out_dir):
    pack_dir = os.path.join(out_dir, config.name)
    os.makedirs(pack_dir, exist_ok=True)
    traces = pipeline.generate_pack_traces(config, out_dir=pack_dir)
    model, info, seconds = pipeline.finetune_pack(
        base, config, traces["train"], traces["test"], recipe)
    boost.save_model(os.path.join(pack_dir, f"model_{config.name}.json"), model)

    epsilon, nominal_det, preds = pipeline.calibrate_on_trace(model, traces["test"])
    pipeline.write_prediction_csv(
        os.path.join(pack_dir, "predictions_nominal.csv"),
        traces["test"], preds, nominal_det.r)
    sentinel.write_detection(
        os.path.join(pack_dir, "detection_nominal.csv"), nominal_det)

    corrupted, det, metrics = pipeline.evaluate_attack(
        model, traces["test"], scenario, epsilon)
    datasets.write_trace(
        os.path.join(pack_dir, f"trace_{scenario.kind}.csv"), corrupted)
    sentinel.write_detection(
        os.path.join(pack_dir, f"detection_{scenario.kind}.csv"), det)
    sentinel.write_events(
        os.path.join(pack_dir, f"events_{scenario.kind}.csv"), det)

    return {
        "pack": config.name,
        "attack": scenario.kind,
        "n_trees": len(model.segments[-1].trees),
        "train_size": info["train_size"],
        "val_size": info["val_size"],
        "finetune_s": seconds,
        "test_err_pct": 100 * info["test_max_abs_error_fraction"],
        "max_nominal_r": float(np.max(nominal_det.r)),
        "epsilon": epsilon,
        "onset": metrics.onset_delay,
        "withdrawal": metrics.withdrawal_delay,
        "false_alarms": metrics.false_alarms,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out/study")
    parser.add_argument("--seed", type=int,
                        default=pipeline.CANONICAL_CORPUS_SEED,
                        help="cell corpus seed")
    args = parser.parse_args(argv)
    os.makedirs(args.out_dir, exist_ok=True)

    corpus_dir = os.path.join(args.out_dir, "corpus")
    print(f"[1/4] generating cell corpus (seed {args.seed}) ...")
    pipeline.generate_cell_corpus(corpus_dir, seed=args.seed)

    print("[2/4] training base model (400 trees, depth 4, lr 0.12) ...")
    t0 = time.perf_counter()
    base, base_seconds = pipeline.train_base(corpus_dir)
    boost.save_model(os.path.join(args.out_dir, "model_base.json"), base)
    train_set, val_set = pipeline.load_cell_corpus(corpus_dir)
    base_err = pipeline.max_abs_residual(base, val_set)
    print(f"      {len(train_set)} train / {len(val_set)} val pairs, "
          f"{base_seconds:.1f} s, val max abs err "
          f"{100 * base_err / 4.2:.3f}% of 4.2 V")

    swap = threatgen.AttackScenario(kind="swap_fdi", k0_s=300, kf_s=700)
    replay = threatgen.AttackScenario(kind="replay", k0_s=400, kf_s=700,
                                      record_start_s=100, record_end_s=400,
                                      target_modules=(1, 2))
    print("[3/4] pack 1: fine-tune + swap-FDI study ...")
    row1 = run_pack_study(base, base_seconds, simkit.pack1_config(),
                          transfer.PACK1_RECIPE, swap, args.out_dir)
    print("[4/4] pack 2: fine-tune + replay study ...")
    row2 = run_pack_study(base, base_seconds, simkit.pack2_config(),
                          transfer.PACK2_RECIPE, replay, args.out_dir)

    print()
    header = (f"{'pack':6s} {'attack':9s} {'trees':>5s} {'N':>5s} "
              f"{'ft[s]':>7s} {'err%':>6s} {'max r':>6s} {'eps':>5s} "
              f"{'onset':>5s} {'wdraw':>5s} {'FA':>3s}")
    print(header)
    print("-" * len(header))
    for row in (row1, row2):
        print(f"{row['pack']:6s} {row['attack']:9s} {row['n_trees']:5d} "
              f"{row['train_size']:5d} {row['finetune_s']:7.3f} "
              f"{row['test_err_pct']:6.3f} {row['max_nominal_r']:6.2f} "
              f"{row['epsilon']:5.2f} {str(row['onset']):>5s} "
              f"{str(row['withdrawal']):>5s} {row['false_alarms']:3d}")
    print(f"\nartifacts under {args.out_dir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
