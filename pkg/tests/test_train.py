# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import numpy as np
import pytest

from ucloudnet.analytics import Analytics
from ucloudnet.checkpoint import load_checkpoint
from ucloudnet.dataset import Dataset
from ucloudnet.errors import CheckpointError, ConfigError, NumericalAbort
from ucloudnet.evaluation import evaluate
from ucloudnet.objects.lossRecord import LossRecord
from ucloudnet.optimizer import AdamState, LrSchedule, adam_step, lr_at
from ucloudnet.runConfig import RunConfig
from ucloudnet.synthetic import synth_dataset
from ucloudnet.tensor import Tensor
from ucloudnet.training import LAST_CHECKPOINT, LossHistory, Trainer, fit, schedule_for


def small_config(**kw):
    base = dict(k=1, epochs=2, batch_size=4, target_size=(32, 32), synthetic=8)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture
def small_dataset():
    return Dataset(samples=synth_dataset(8, (32, 32), seed=1))


# ---- optimizer -----------------------------------------------------------

def scalar_param(value, grad=None):
    p = Tensor.scalar(value, requires_grad=True, dtype=np.float64)
    if grad is not None:
        p.grad = np.full((1, 1, 1, 1), grad)
    return p


def test_adam_first_step_moves_by_lr():
    p = scalar_param(0.0, grad=1.0)
    state = AdamState([("w", p)])
    adam_step([("w", p)], state, 0.001)
    assert p.item() == pytest.approx(-0.001, rel=1e-6)
    assert state.t == 1
    assert p.grad is None


def test_adam_zero_gradient_is_a_fixed_point():
    p = scalar_param(0.25, grad=0.0)
    q = scalar_param(-1.5)
    params = [("p", p), ("q", q)]
    state = AdamState(params)
    adam_step(params, state, 0.001)
    assert (p.item(), q.item()) == (0.25, -1.5)
    assert state.t == 1


def test_adam_aborts_on_non_finite_gradient():
    ok = scalar_param(1.0, grad=0.5)
    bad = scalar_param(2.0, grad=np.inf)
    params = [("ok", ok), ("bad.weight", bad)]
    state = AdamState(params)
    with pytest.raises(NumericalAbort, match="bad.weight"):
        adam_step(params, state, 0.001)
    assert ok.item() == 1.0
    assert state.t == 0


def test_adam_is_deterministic():
    def run():
        p = scalar_param(0.3)
        state = AdamState([("w", p)])
        for i in range(10):
            p.grad = np.full((1, 1, 1, 1), np.sin(i + p.item()))
            adam_step([("w", p)], state, 0.001)
        return p.item()
    assert run() == run()


# ---- schedule ------------------------------------------------------------

def test_lr_schedule_values():
    decay = LrSchedule(enabled=True)
    assert lr_at(decay, 0) == 0.001
    assert lr_at(decay, 2) == 0.001 * 0.95**2
    assert lr_at(decay, 2) == pytest.approx(0.0009025, abs=1e-12)
    assert lr_at(decay, 99) == 0.001 * 0.95**99


def test_lr_constant_when_disabled():
    flat = LrSchedule(enabled=False)
    assert {lr_at(flat, e) for e in (0, 1, 50, 99)} == {0.001}


def test_lr_rejects_negative_epoch():
    with pytest.raises(ValueError):
        lr_at(LrSchedule(), -1)


def test_schedule_follows_config():
    assert schedule_for(RunConfig(lr_decay_enabled=True)).enabled
    assert not schedule_for(RunConfig()).enabled


# ---- loss history --------------------------------------------------------

def test_history_requires_increasing_iterations():
    h = LossHistory([LossRecord(1, 0.5, None, None, 0.5, 0.001, 0)])
    with pytest.raises(ValueError):
        h.append(LossRecord(1, 0.4, None, None, 0.4, 0.001, 0))


def test_history_csv_round_trip(tmp_path):
    h = LossHistory([LossRecord(1, 0.7, 0.6, 0.5, 1.04, 0.001, 0), LossRecord(2, 0.5, None, None, 0.5, 0.00095, 1)])
    h.write_csv(tmp_path / "loss_history.csv")
    lines = (tmp_path / "loss_history.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "iter,main,aux2,aux4,total,lr"
    assert lines[2] == "2,0.5,,,0.5,0.00095"
    assert list(LossHistory.read_csv(tmp_path / "loss_history.csv")) == list(h)


# ---- training loop -------------------------------------------------------

def test_fit_is_deterministic(small_dataset):
    a, ha = fit(small_config(), small_dataset)
    b, hb = fit(small_config(), small_dataset)
    assert list(ha) == list(hb)
    for (name, ta), (_, tb) in zip(a.model.named_state(), b.model.named_state()):
        np.testing.assert_array_equal(ta.data, tb.data, err_msg=name)


def test_identical_runs_write_identical_checkpoints(small_dataset, tmp_path):
    fit(small_config(), small_dataset, run_dir=tmp_path / "a")
    fit(small_config(), small_dataset, run_dir=tmp_path / "b")
    assert (tmp_path / "a" / LAST_CHECKPOINT).read_bytes() == (tmp_path / "b" / LAST_CHECKPOINT).read_bytes()


def test_history_counts_one_record_per_step(small_dataset):
    ckpt, history = fit(small_config(epochs=3), small_dataset)
    assert len(history) == 3 * 2
    assert [r.iteration for r in history] == list(range(1, 7))
    assert (ckpt.epoch, ckpt.iteration, ckpt.state.t) == (3, 6, 6)


def test_lr_column_follows_schedule(small_dataset):
    _, history = fit(small_config(epochs=3, lr_decay_enabled=True), small_dataset)
    schedule = LrSchedule(enabled=True)
    for r in history:
        assert r.lr == lr_at(schedule, (r.iteration - 1) // 2)


def test_deep_supervision_identity_in_history(small_dataset):
    _, history = fit(small_config(aux_enabled=True), small_dataset)
    for r in history:
        assert r.total == pytest.approx(r.main + 0.4*r.aux2 + 0.2*r.aux4, rel=1e-6)


def test_without_aux_total_is_main(small_dataset):
    _, history = fit(small_config(aux_enabled=False), small_dataset)
    for r in history:
        assert r.aux2 is None and r.aux4 is None
        assert r.total == r.main


def test_fit_writes_run_files(small_dataset, tmp_path):
    analytics = Analytics(tmp_path / "analytics")
    fit(small_config(epochs=2), small_dataset, run_dir=tmp_path, analytics=analytics, checkpoint_every=1)
    for name in ("epoch_1.ckpt", "epoch_2.ckpt", LAST_CHECKPOINT, "loss_history.csv"):
        assert (tmp_path / name).exists()
    assert len(LossHistory.read_csv(tmp_path / "loss_history.csv")) == 4
    assert analytics.numIterations.amount == 4
    assert analytics.numEpochs.amount == 2
    assert analytics.numCheckpointsSaved.amount == 4


def test_fit_rejects_invalid_config(small_dataset):
    with pytest.raises(ConfigError):
        fit(small_config(k=0), small_dataset)


def test_resume_matches_uninterrupted_run(small_dataset, tmp_path):
    _, full = fit(small_config(epochs=3), small_dataset, run_dir=tmp_path / "full")

    fit(small_config(epochs=2), small_dataset, run_dir=tmp_path / "part")
    resume = load_checkpoint(tmp_path / "part" / LAST_CHECKPOINT)
    assert (resume.epoch, resume.iteration) == (2, 4)
    _, resumed = fit(small_config(epochs=3), small_dataset, run_dir=tmp_path / "part", resume=resume)

    assert list(resumed) == list(full)


def test_resume_rejects_different_k(small_dataset, tmp_path):
    fit(small_config(epochs=1), small_dataset, run_dir=tmp_path)
    resume = load_checkpoint(tmp_path / LAST_CHECKPOINT)
    with pytest.raises(CheckpointError):
        Trainer(small_config(k=2), small_dataset, small_dataset.ids, resume=resume, progress=False)


def test_non_finite_loss_aborts_and_keeps_last_good_checkpoint(small_dataset, tmp_path):
    trainer = Trainer(small_config(epochs=3), small_dataset, small_dataset.ids, tmp_path, progress=False)
    trainer.run_epoch()
    trainer.save(LAST_CHECKPOINT)
    trainer.model.head_main.conv.bias.data[...] = np.nan

    with pytest.raises(NumericalAbort):
        trainer.fit()

    good = load_checkpoint(tmp_path / LAST_CHECKPOINT)
    assert good.epoch == 1
    assert all(np.isfinite(t.data).all() for _, t in good.model.named_state())
    assert len(LossHistory.read_csv(tmp_path / "loss_history.csv")) == 2


def test_float64_run(small_dataset):
    ckpt, history = fit(small_config(epochs=1, dtype="float64"), small_dataset)
    assert all(t.dtype == np.float64 for _, t in ckpt.model.named_parameters())
    assert np.isfinite(history[-1].total)


@pytest.fixture(scope="module")
def overfit_run():
    dataset = Dataset(samples=synth_dataset(8, (64, 64), seed=1))
    cfg = RunConfig(k=1, aux_enabled=True, epochs=100, batch_size=4, target_size=(64, 64), synthetic=8)
    ckpt, history = fit(cfg, dataset)
    return dataset, ckpt, history


@pytest.mark.slow
def test_overfits_eight_synthetic_samples(overfit_run):
    dataset, ckpt, history = overfit_run
    assert len(history) == 200
    assert history[-1].total < history[0].total / 2

    report = evaluate(ckpt.model, dataset, dataset.ids, 0.5, with_curve=False)
    assert report.f_measure >= 0.95


@pytest.mark.slow
@pytest.mark.xfail(strict=False, reason="each head reads a batch-normalized feature map, so its logits scale "
    "with the head weight and the batch norm gamma; Adam at lr 0.001 moves both by about 0.2 in 200 steps and "
    "the bce stays above 0.05 unless the head weight happens to start large")
def test_overfit_total_loss_below_five_hundredths(overfit_run):
    _, _, history = overfit_run
    assert history[-1].total < 0.05


@pytest.mark.slow
def test_overfit_loss_windows_do_not_increase(overfit_run):
    _, _, history = overfit_run
    total = history.column("total")
    # 50-iteration windows after the first 50 iterations
    means = [total[start:start + 50].mean() for start in range(50, len(total), 50)]
    assert len(means) == 3
    assert all(later <= earlier for earlier, later in zip(means, means[1:]))
