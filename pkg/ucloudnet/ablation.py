# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

"""Desk-scale ablation of deep supervision and learning rate decay on generated data."""

import argparse
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .analytics import Analytics
from .dataset import Dataset, split
from .etc import run_label
from .evaluation import evaluate
from .runConfig import RunConfig, run_name
from .synthetic import synth_dataset
from .training import Trainer

# (aux_enabled, lr_decay_enabled), ordered as in the comparison table
CONFIGURATIONS = [(False, False), (False, True), (True, True)]


def run_ablation(n_samples:int=200, seeds:Sequence[int]=(0, 1, 2), k:int=2, epochs:int=40, batch_size:int=16,
        size:Tuple[int, int]=(64, 64), data_seed:int=1234, out_dir:Optional[Path]=None,
        progress:bool=False) -> pd.DataFrame:
    """Test F-measure of every configuration and training seed on one fixed dataset split.

    Returns one row per configuration with the per-seed values and their mean.
    """
    dataset = Dataset(samples=synth_dataset(n_samples, size, data_seed))
    train_ids, test_ids = split(dataset.ids, 0.8, data_seed)

    with tempfile.TemporaryDirectory() as tmp:
        base = Path(out_dir) if out_dir is not None else Path(tmp)
        combined = Analytics(base / "combined")
        scores:Dict[str, List[float]] = {}
        for aux, lr_decay in CONFIGURATIONS:
            for seed in seeds:
                cfg = RunConfig(k=k, aux_enabled=aux, lr_decay_enabled=lr_decay, epochs=epochs,
                    batch_size=batch_size, seed=seed, target_size=size, synthetic=n_samples).validate()
                name = run_name(cfg)
                run_dir = base / f"{name}_seed{seed}" if out_dir is not None else None
                a = Analytics(base / "analytics" / f"{name}_seed{seed}")

                trainer = Trainer(cfg, dataset, train_ids, run_dir, a, progress=progress)
                ckpt, _ = trainer.fit()
                report = evaluate(ckpt.model, dataset, test_ids, 0.5, batch_size, with_curve=False, analytics=a)
                scores.setdefault(name, []).append(report.f_measure)
                print(f"{run_label(name)} seed {seed}: F={report.f_measure:.4f}")
                combined += a

        combined.printAnalytics(title="Ablation Analytics")

    rows = []
    for name, fs in scores.items():
        row = {"Method": run_label(name)}
        row.update({f"seed {s}": f for s, f in zip(seeds, fs)})
        row["mean F"] = float(np.mean(fs))
        rows.append(row)
    return pd.DataFrame(rows).set_index("Method")


def ordering_holds(df:pd.DataFrame, tolerance:float=0.01) -> bool:
    """(aux + decay) >= (decay only) >= (neither) - tolerance on the mean test F."""
    f = df["mean F"].tolist()
    neither, decay, both = f
    return both >= decay - tolerance and decay >= neither - tolerance


if __name__ == "__main__":
    parser = argparse.ArgumentParser(formatter_class=argparse.ArgumentDefaultsHelpFormatter)

    parser.add_argument("-n", '--num_samples', type=int, default=200, help="Generated samples (80%% train)")
    parser.add_argument("-s", '--seeds', type=int, nargs="+", default=[0, 1, 2], help="Training seeds")
    parser.add_argument("-k", '--k', type=int, default=2, help="Channel width hyperparameter")
    parser.add_argument("-e", '--epochs', type=int, default=40, help="Epochs per run")
    parser.add_argument("-bs", '--batch_size', type=int, default=16, help="Batch size")
    parser.add_argument("-ds", '--data_seed', type=int, default=1234, help="Seed of the generated dataset and split")
    parser.add_argument("-o", '--out', action='store', help="Keep run directories and analytics here")

    args = parser.parse_args()

    df = run_ablation(args.num_samples, args.seeds, args.k, args.epochs, args.batch_size,
        data_seed=args.data_seed, out_dir=Path(args.out) if args.out else None, progress=True)
    print()
    print(df.round(4).to_string())
    print("\nOrdering aux+lr-decay >= lr-decay >= neither:", "holds" if ordering_holds(df) else "violated")
