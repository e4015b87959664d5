# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import csv
import logging
import math
from contextlib import nullcontext
from os import makedirs
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .analytics import Analytics
from .checkpoint import Checkpoint, save_checkpoint
from .dataset import Dataset, batches, num_batches
from .errors import CheckpointError, DatasetError, NumericalAbort
from .loss import LossConfig, loss_terms
from .model import build, forward
from .objects.lossRecord import LossRecord
from .optimizer import AdamState, LrSchedule, adam_step, lr_at
from .runConfig import RunConfig
from .tensor import Tensor, backward, float64_mode, reset_graph

logger = logging.getLogger("ucloudnet.train")

HISTORY_HEADER = ["iter", "main", "aux2", "aux4", "total", "lr"]
LAST_CHECKPOINT = "last.ckpt"


class LossHistory():
    def __init__(self, records:Optional[List[LossRecord]]=None):
        self.records:List[LossRecord] = []
        for r in records or []:
            self.append(r)

    def append(self, record:LossRecord):
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError(f"iteration {record.iteration} does not follow {self.records[-1].iteration}")
        self.records.append(record)

    def truncate(self, iteration:int):
        """Drop records after `iteration` (resuming from an older checkpoint)."""
        self.records = [r for r in self.records if r.iteration <= iteration]

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i) -> LossRecord:
        return self.records[i]

    def column(self, name:str) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records],
            dtype=np.float64)

    def write_csv(self, path:Path):
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f)
            w.writerow(HISTORY_HEADER)
            for r in self.records:
                w.writerow(r.as_row())

    @classmethod
    def read_csv(cls, path:Path) -> "LossHistory":
        cell = lambda v: None if v == "" else float(v)
        res = cls()
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            if header != HISTORY_HEADER:
                raise ValueError(f"{path}: unexpected header {header}")
            for row in reader:
                it, main, aux2, aux4, total, lr = row
                res.append(LossRecord(int(it), cell(main), cell(aux2), cell(aux4), cell(total), cell(lr), None))
        return res


def schedule_for(cfg:RunConfig) -> LrSchedule:
    return LrSchedule(initial=cfg.lr, gamma=cfg.gamma, enabled=cfg.lr_decay_enabled)


class Trainer():
    """One training run: epochs of shuffled batches, Adam steps and checkpoints.

    With a run directory, `last.ckpt` and `loss_history.csv` are rewritten after
    every epoch, and `epoch_<e>.ckpt` every `checkpoint_every` epochs.
    """

    def __init__(self, config:RunConfig, dataset:Dataset, train_ids:Sequence[str], run_dir:Optional[Path]=None,
            analytics:Optional[Analytics]=None, checkpoint_every:int=0, resume:Optional[Checkpoint]=None,
            progress:bool=True):
        if not train_ids:
            raise DatasetError("Cannot train on an empty set of samples")
        self.config = config
        self.dataset = dataset
        self.train_ids = list(train_ids)
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.analytics = analytics
        self.checkpoint_every = checkpoint_every
        self.progress = progress
        self.schedule = schedule_for(config)
        self.loss_config = LossConfig(aux_enabled=config.aux_enabled)
        self.history = LossHistory()

        if resume is not None:
            if resume.config.k != config.k or resume.config.dtype != config.dtype:
                raise CheckpointError(f"Checkpoint was trained with k={resume.config.k}/{resume.config.dtype}, "
                    f"run uses k={config.k}/{config.dtype}")
            self.model = resume.model
            self.state = resume.state
            self.epoch = resume.epoch
            self.iteration = resume.iteration
            history_path = self.history_path()
            if history_path is not None and history_path.exists():
                self.history = LossHistory.read_csv(history_path)
                self.history.truncate(self.iteration)
        else:
            with self._dtype_mode():
                self.model = build(config.k, config.seed)
            self.state = AdamState(list(self.model.named_parameters()))
            self.epoch = 0
            self.iteration = 0
        self.params = list(self.model.named_parameters())

        if self.run_dir is not None:
            makedirs(self.run_dir, exist_ok=True)

    def _dtype_mode(self):
        if self.config.dtype == "float64":
            return float64_mode()
        return nullcontext()

    def history_path(self) -> Optional[Path]:
        return self.run_dir / "loss_history.csv" if self.run_dir is not None else None

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(self.model, self.state, self.config, self.epoch, self.iteration)

    def save(self, name:str) -> Optional[Path]:
        if self.run_dir is None:
            return None
        path = save_checkpoint(self.model, self.state, self.config, self.run_dir / name, self.epoch, self.iteration)
        logger.info(f"checkpoint {path.name} at epoch {self.epoch}, iteration {self.iteration}")
        if self.analytics:
            self.analytics.numCheckpointsSaved += 1
        return path

    def step(self, x:Tensor, y:Tensor, lr:float) -> LossRecord:
        dtype = self.params[0][1].dtype
        x = Tensor(x.data, dtype=dtype)
        y = Tensor(y.data, dtype=dtype)

        reset_graph()
        main, aux2, aux4 = forward(self.model, x, training=True, aux=self.config.aux_enabled)
        terms = loss_terms(main, aux2, aux4, y, self.loss_config)
        total = terms["total"].item()
        if not math.isfinite(total):
            reset_graph()
            raise NumericalAbort(f"Non-finite loss {total} at iteration {self.iteration + 1}")
        backward(terms["total"])
        adam_step(self.params, self.state, lr)
        reset_graph()

        self.iteration += 1
        value = lambda k: None if terms[k] is None else terms[k].item()
        return LossRecord(self.iteration, value("main"), value("aux2"), value("aux4"), total, lr, self.epoch)

    def run_epoch(self) -> float:
        lr = lr_at(self.schedule, self.epoch)
        n = num_batches(len(self.train_ids), self.config.batch_size)
        stream = self.dataset.iterate(batches(self.train_ids, self.config.batch_size, self.config.seed, self.epoch))
        totals = []

        if self.analytics:
            self.analytics.epochStart()
        with tqdm(total=n, desc=f"epoch {self.epoch + 1}/{self.config.epochs}", disable=not self.progress) as pbar:
            for _, x, y in stream:
                if self.analytics:
                    self.analytics.iterationStart()
                record = self.step(x, y, lr)
                self.history.append(record)
                totals.append(record.total)
                if self.analytics:
                    self.analytics.iterationEnd()
                pbar.set_postfix(loss=f"{record.total:.4f}")
                pbar.update(1)

        mean_total = float(np.mean(totals))
        self.epoch += 1
        if self.analytics:
            self.analytics.epochEnd()
            self.analytics.avgEpochLoss.add_value(mean_total)
        logger.info(f"epoch {self.epoch}: lr={lr!r} mean_total={mean_total:.6f} iterations={self.iteration}")
        return mean_total

    def fit(self) -> Tuple[Checkpoint, LossHistory]:
        try:
            while self.epoch < self.config.epochs:
                self.run_epoch()
                if self.checkpoint_every and self.epoch % self.checkpoint_every == 0:
                    self.save(f"epoch_{self.epoch}.ckpt")
                self.save(LAST_CHECKPOINT)
                self.write_history()
        except NumericalAbort as e:
            # last.ckpt on disk is the last good state
            logger.error(f"aborted: {e}")
            self.write_history()
            raise
        return self.checkpoint(), self.history

    def write_history(self):
        path = self.history_path()
        if path is not None:
            self.history.write_csv(path)


def fit(config:RunConfig, dataset:Dataset, train_ids:Optional[Sequence[str]]=None, run_dir:Optional[Path]=None,
        analytics:Optional[Analytics]=None, checkpoint_every:int=0, resume:Optional[Checkpoint]=None,
        progress:bool=False) -> Tuple[Checkpoint, LossHistory]:
    """Train UCloudNet as `config` describes; all dataset ids are used when `train_ids` is None."""
    config.validate()
    ids = list(train_ids) if train_ids is not None else list(dataset.ids)
    trainer = Trainer(config, dataset, ids, run_dir, analytics, checkpoint_every, resume, progress)
    return trainer.fit()
