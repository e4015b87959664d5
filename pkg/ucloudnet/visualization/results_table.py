# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import argparse
from pathlib import Path
from typing import List

import pandas as pd

from ..errors import MetricsError
from ..etc import run_label
from ..metrics import read_report

COLUMNS = ["Precision", "Recall", "F-measure", "Error-rate"]


def collect(run_dirs:List[Path]) -> pd.DataFrame:
    """One row per run directory with an eval_report.txt, labelled by its run name."""
    rows = []
    for run_dir in run_dirs:
        path = Path(run_dir) / "eval_report.txt"
        if not path.exists():
            raise MetricsError(f"{run_dir} has no eval_report.txt")
        r = read_report(path)
        rows.append({"Method": run_label(Path(run_dir).resolve().name), "Precision": r.precision,
            "Recall": r.recall, "F-measure": r.f_measure, "Error-rate": r.error_rate})
    return pd.DataFrame(rows, columns=["Method"] + COLUMNS).set_index("Method")


def to_markdown(df:pd.DataFrame) -> str:
    rounded = df.round(2)
    lines = ["| Method | " + " | ".join(COLUMNS) + " |", "|---" * (len(COLUMNS) + 1) + "|"]
    for method, row in rounded.iterrows():
        lines.append(f"| {method} | " + " | ".join(f"{row[c]:.2f}" for c in COLUMNS) + " |")
    return "\n".join(lines) + "\n"


def write_table(df:pd.DataFrame, out:Path):
    out = Path(out)
    if out.suffix == ".csv":
        df.round(2).to_csv(out, float_format="%.2f")
    else:
        with open(out, "w", encoding="utf-8") as f:
            f.write(to_markdown(df))


if __name__ == "__main__":
    parser = argparse.ArgumentParser(formatter_class=argparse.ArgumentDefaultsHelpFormatter)

    parser.add_argument("run_dirs",
        nargs="+",
        help="Run directories containing eval_report.txt")

    parser.add_argument("-o", '--out',
        action='store',
        help="Write the table to this .md or .csv file instead of stdout")

    args = parser.parse_args()

    df = collect([Path(d) for d in args.run_dirs])
    if args.out:
        write_table(df, Path(args.out))
        print("Table:", args.out)
    else:
        print(to_markdown(df))
