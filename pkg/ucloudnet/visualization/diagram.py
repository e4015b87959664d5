# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import json
from os import makedirs
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .. import ucloudnet_dir

STYLE = ucloudnet_dir / "resources" / "style.mplstyle"


def use_style():
    plt.style.use(STYLE)


class Diagram():
    def __init__(self, out_dir:Path, diagram_name:str):
        self.filename = diagram_name

        self.diagrams_dir = Path(out_dir) / "diagrams"
        makedirs(self.diagrams_dir, exist_ok=True)

    def _dump_json(self, file_path, obj):
        with open(file_path, mode='w', encoding="utf-8") as f:
            json.dump(obj, f)

    def _save(self, fig:plt.Figure, suffix:str="svg") -> Path:
        path = self.diagrams_dir / f"{self.filename}.{suffix}"
        fig.savefig(path, bbox_inches="tight")
        plt.close(fig)
        return path
