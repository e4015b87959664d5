# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)


class Confusion():
    def __init__(self, tp:int=0, fp:int=0, fn:int=0, tn:int=0):
        self.tp = tp
        self.fp = fp
        self.fn = fn
        self.tn = tn

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __iadd__(self, other:"Confusion"):
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        self.tn += other.tn
        return self

    def __eq__(self, other):
        return isinstance(other, Confusion) and self.as_tuple() == other.as_tuple()

    def as_tuple(self):
        return (self.tp, self.fp, self.fn, self.tn)

    def __repr__(self) -> str:
        return f"Confusion(tp={self.tp}, fp={self.fp}, fn={self.fn}, tn={self.tn})"
