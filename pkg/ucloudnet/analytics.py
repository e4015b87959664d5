# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

from collections import Counter
from dataclasses import dataclass, field
from json import dump, load
from os import makedirs
from pathlib import Path
from pprint import pformat
from sys import stdout
from threading import RLock
from time import time


class AnalyticsDatatype():
    """A value that is printed, saved to JSON and summed over runs."""

    def to_json_obj(self): raise NotImplementedError
    def combine(self, other): raise NotImplementedError

@dataclass(repr=False)
class Amount(AnalyticsDatatype):
    amount: int = 0

    def __iadd__(self, n:int):
        self.amount += n
        return self

    def __repr__(self) -> str:
        return str(self.amount)

    def to_json_obj(self):
        return self.amount

    def combine(self, other:"Amount"):
        self.amount += other.amount

@dataclass(repr=False)
class Average(AnalyticsDatatype):
    unit: str
    sum: float = 0
    num: int = 0

    def add_value(self, v:float):
        self.sum += v
        self.num += 1

    def get_average(self) -> float:
        """-1 while nothing was added."""
        return self.sum/self.num if self.num else -1

    def __repr__(self) -> str:
        return f"{self.get_average():.4g} {self.unit}".rstrip()

    # [sum, num, unit]
    def to_json_obj(self):
        return [self.sum, self.num, self.unit]

    def combine(self, other:"Average"):
        if self.unit != other.unit:
            raise ValueError(f"cannot combine averages in {self.unit!r} and {other.unit!r}")
        self.sum += other.sum
        self.num += other.num

@dataclass(repr=False)
class ValueDict(AnalyticsDatatype):
    d: Counter = field(default_factory=Counter)

    def __post_init__(self):
        self.d = Counter(self.d)

    def increment(self, key, amount=1):
        self.d[key] += amount

    def __repr__(self) -> str:
        return pformat(self.d.most_common(), width=200)

    def to_json_obj(self):
        return dict(self.d)

    def combine(self, other:"ValueDict"):
        self.d.update(other.d)


class Analytics:
    """Counters and timings of a training or evaluation run."""

    def __init__(self, analyticsDir:Path):
        self.analyticsDir = Path(analyticsDir)
        makedirs(self.analyticsDir, exist_ok=True)
        self.lock = RLock()

        # num*
        self.numIterations = Amount()
        self.numEpochs = Amount()
        self.numSamplesLoaded = Amount()
        self.numImageCacheHits = Amount()
        self.numImageCacheMisses = Amount()
        self.numCheckpointsSaved = Amount()
        self.numEvaluatedPixels = Amount()

        # avg* = [sum, num, "unit"]
        self.avgIterationTime = Average("ms")
        self.avgEpochTime = Average("min")
        self.avgSampleLoadTime = Average("ms")
        self.avgEpochLoss = Average("")

        # dict*
        self.dictSamplesPerSubset = ValueDict()

        # not to print
        self.iterationStartTime = 0
        self.epochStartTime = 0

    def iterationStart(self):
        self.iterationStartTime = time()

    def iterationEnd(self):
        self.numIterations += 1
        self.avgIterationTime.add_value((time() - self.iterationStartTime)*1000)

    def epochStart(self):
        self.epochStartTime = time()

    def epochEnd(self):
        self.numEpochs += 1
        self.avgEpochTime.add_value((time() - self.epochStartTime)/60)

    def __printTemplateVars(self, stream=stdout):
        for k, v in self.__dict__.items():
            if isinstance(v, AnalyticsDatatype):
                print(f"{k}: {str(v)}", file=stream)

    def printAnalytics(self, title="Analytics", stream=stdout):
        print("\n" + title + ":", file=stream)
        self.__printTemplateVars(stream)

    def save(self, prefix:str) -> Path:
        res = {}
        for k, v in self.__dict__.items():
            if isinstance(v, AnalyticsDatatype):
                res[k] = v.to_json_obj()

        path = self.analyticsDir / (prefix + "_analytics.json")
        with open(path, "w", encoding="utf-8") as fp:
            dump(res, fp)

        print("Analytics saved to", path)
        return path

    def load(self, prefix:str):
        """Read values saved by `save`; values missing from the file keep their current state."""
        with open(self.analyticsDir / (prefix + "_analytics.json"), "r", encoding="utf-8") as fp:
            res = load(fp)

        for k, v in list(self.__dict__.items()):
            if k not in res:
                continue
            if isinstance(v, Amount):
                self.__dict__[k] = Amount(res[k])
            elif isinstance(v, ValueDict):
                self.__dict__[k] = ValueDict(res[k])
            elif isinstance(v, Average):
                summ, num, unit = res[k]
                self.__dict__[k] = Average(unit, summ, num)

    def __iadd__(self, other:"Analytics"):
        for k,v in self.__dict__.items():
            other_v = other.__dict__[k]
            if isinstance(v, AnalyticsDatatype):
                v.combine(other_v)
        return self
