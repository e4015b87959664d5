# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import argparse
from pathlib import Path
from typing import List

import matplotlib.pyplot as plt

from ..errors import MetricsError
from ..etc import run_label
from ..metrics import auc_pr, read_pr_curve
from .diagram import Diagram, use_style


class PrCurveDiagram(Diagram):
    """Precision over recall of several runs, AUC in the legend."""

    def __init__(self, out_dir:Path):
        super().__init__(out_dir, "pr_curve")

    def _plot(self, ax:plt.Axes, run_dirs:List[Path]) -> dict:
        aucs = {}
        for run_dir in run_dirs:
            path = run_dir / "pr_curve.csv"
            if not path.exists():
                raise MetricsError(f"{run_dir} has no pr_curve.csv")
            curve = read_pr_curve(path)
            auc = auc_pr(curve)
            name = run_dir.resolve().name
            aucs[name] = auc
            recall = [r for _, _, r in curve]
            precision = [p for _, p, _ in curve]
            ax.plot(recall, precision, label=f"{run_label(name)} (AUC {auc:.3f})")
        ax.set_xlabel("Recall")
        ax.set_ylabel("Precision")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.legend(loc="lower left")
        return aucs

    def create_diagram(self, run_dirs:List[Path]) -> Path:
        use_style()
        fig, ax = plt.subplots()
        aucs = self._plot(ax, run_dirs)
        self._dump_json(self.diagrams_dir / f"{self.filename}.json", aucs)
        return self._save(fig)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(formatter_class=argparse.ArgumentDefaultsHelpFormatter)

    parser.add_argument("run_dirs",
        nargs="+",
        help="Run directories containing pr_curve.csv")

    parser.add_argument("-o", '--out',
        action='store',
        default=".",
        help="Directory for diagrams/")

    args = parser.parse_args()

    path = PrCurveDiagram(Path(args.out)).create_diagram([Path(d) for d in args.run_dirs])
    print("Diagram:", path)
