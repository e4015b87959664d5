# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import argparse
from pathlib import Path
from typing import Optional

import matplotlib.pyplot as plt
import pandas as pd

from ..etc import run_label
from .diagram import Diagram, use_style

CURVES = [("main", "final output"), ("aux2", "auxiliary 1/2"), ("aux4", "auxiliary 1/4")]


def load_history(path:Path) -> pd.DataFrame:
    df = pd.read_csv(path)
    return df.set_index("iter")


class LossCurveDiagram(Diagram):
    """Loss of the main and auxiliary outputs over the training iterations."""

    def __init__(self, out_dir:Path, window:int=1):
        super().__init__(out_dir, "loss_curve")
        self.window = window

    def _plot(self, ax:plt.Axes, df:pd.DataFrame):
        for column, label in CURVES:
            series = df[column].dropna()
            if series.empty:
                continue
            if self.window > 1:
                series = series.rolling(self.window, min_periods=1).mean()
            ax.plot(series.index, series.values, label=label)
        ax.set_xlabel("Iteration")
        ax.set_ylabel("Binary cross-entropy")
        ax.legend()

    def create_diagram(self, history_csv:Path, title:Optional[str]=None) -> Path:
        use_style()
        df = load_history(history_csv)
        fig, ax = plt.subplots()
        self._plot(ax, df)
        if title:
            ax.set_title(run_label(title))

        last = df.iloc[-1]
        self._dump_json(self.diagrams_dir / f"{self.filename}.json",
            {c: (None if pd.isna(last[c]) else float(last[c])) for c, _ in CURVES + [("total", None)]})
        return self._save(fig)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(formatter_class=argparse.ArgumentDefaultsHelpFormatter)

    parser.add_argument("run_dir",
        help="Run directory containing loss_history.csv")

    parser.add_argument("-w", '--window',
        action='store',
        type=int,
        default=1,
        help="Moving average window in iterations")

    args = parser.parse_args()

    run_dir = Path(args.run_dir)
    path = LossCurveDiagram(run_dir, args.window).create_diagram(run_dir / "loss_history.csv",
        title=run_dir.resolve().name)
    print("Diagram:", path)
