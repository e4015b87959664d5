# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)
from pathlib import Path
from typing import List


class DatasetEntry():
    def __init__(self, id:str, image_path:Path, mask_path:Path, subset:str):
        self.id = id # image basename without extension
        self.image_path = image_path
        self.mask_path = mask_path
        self.subset = subset # day | night

    def __repr__(self):
        return f"DatasetEntry({self.id}, {self.subset})"


class DatasetManifest():
    def __init__(self, root:Path, subset:str, entries:List[DatasetEntry], split_seed:int=0):
        self.root = root
        self.subset = subset
        self.entries = entries # sorted by id
        self.split_seed = split_seed

    def ids(self) -> List[str]:
        return [e.id for e in self.entries]

    def __len__(self):
        return len(self.entries)
