"""End-to-end harness driver: train both stages, export artifacts.

    python3 -m avtse_harness.run_all --scenes scenes/ --out artifacts/ \
        [--epochs 60] [--target-db 5.6]

Writes ``trained.avtw`` (weight archive) and ``parity_vectors.bin``
(sub-module probe dumps) to the output directory.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import torch

from .export import export_parity_vectors, export_weights
from .training import TrainConfig, train_tse, train_vvad


def run(scene_dir, out_dir, epochs: int = 60, target_db: float | None = 5.6,
        seed: int = 0, log=print) -> dict:
    torch.set_num_threads(torch.get_num_threads())
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vvad_result = train_vvad(seed=seed, log=log)
    tse_result = train_tse(TrainConfig(scene_dir=str(scene_dir), epochs=epochs,
                                       seed=seed,
                                       target_improvement_db=target_db),
                           log=log)
    export_weights(vvad_result.model, tse_result.model, out_dir / "trained.avtw")
    export_parity_vectors(vvad_result.model, tse_result.model,
                          out_dir / "parity_vectors.bin")
    summary = {
        "vvad_accuracy": vvad_result.accuracy,
        "vvad_precision": vvad_result.precision,
        "vvad_recall": vvad_result.recall,
        "vvad_speech_fraction": vvad_result.speech_fraction,
        "tse_unprocessed_db": tse_result.si_snr_unprocessed_db,
        "tse_trained_db": tse_result.si_snr_trained_db,
        "tse_improvement_db": tse_result.improvement_db,
        "tse_epochs_run": len(tse_result.epoch_losses),
        "tse_epoch_losses": tse_result.epoch_losses,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=1))
    log(f"artifacts written to {out_dir}")
    return summary


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenes", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--target-db", type=float, default=5.6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    summary = run(args.scenes, args.out, epochs=args.epochs,
                  target_db=args.target_db, seed=args.seed)
    print(json.dumps({k: v for k, v in summary.items()
                      if k != "tse_epoch_losses"}, indent=1))


if __name__ == "__main__":
    main()
