# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)
from typing import Optional


class LossRecord():
    def __init__(self, iteration:int, main:float, aux2:Optional[float], aux4:Optional[float],
            total:float, lr:float, epoch:int):
        self.iteration = iteration
        self.main = main
        self.aux2 = aux2 # None when deep supervision is off
        self.aux4 = aux4
        self.total = total
        self.lr = lr
        self.epoch = epoch

    def as_row(self):
        cell = lambda v: "" if v is None else repr(float(v))
        return [str(self.iteration), cell(self.main), cell(self.aux2), cell(self.aux4),
            cell(self.total), cell(self.lr)]

    def __eq__(self, other):
        return isinstance(other, LossRecord) and self.as_row() == other.as_row()

    def __repr__(self):
        return "LossRecord(" + ",".join(self.as_row()) + ")"
