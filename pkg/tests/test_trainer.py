from dataclasses import replace

import numpy as np
import pytest

from shapemate.autodiff import TrainingDivergedError
from shapemate.geometry import quat_to_matrix, random_quaternion
from shapemate.trainer import (
    TrainConfig, Trainer, evaluation_rotations, frozen, load_generator, make_inputs, predict,
)

SMALL = TrainConfig(model="tiny", steps=4, batch_size=2, points_per_part=32, sdf_queries=16, val_every=2,
                    checkpoint_every=2)


@pytest.fixture(scope="module")
def pairs(toy_set):
    return toy_set[:4]


def params_of(module):
    return [p.data.copy() for p in module.parameters()]


def same(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1)
    with pytest.raises(ValueError):
        TrainConfig(lambda_sdf=float("nan"))
    with pytest.raises(ValueError):
        TrainConfig.from_json({"stepz": 3})
    with pytest.raises(ValueError):
        _ = TrainConfig(model="huge").model_config
    assert TrainConfig(steps=None, epochs=3, batch_size=4).total_steps(10) == 9


def test_inputs_are_consistent_with_targets(pairs):
    rng = np.random.default_rng(0)
    ra, rb = evaluation_rotations(len(pairs), 0)
    b = make_inputs(pairs, np.arange(len(pairs)), ra, rb, None, 32, 8)
    for j, p in enumerate(pairs):
        # applying the target pose to the input reproduces the assembled ground truth
        placed = b.points_a[j] @ b.rot_gt[0][j].T + b.trans_gt[0][j]
        assert np.allclose(placed, b.assembled_gt[j, :32], atol=1e-12)
        assert np.allclose(b.queries_a[j] @ b.rot_gt[0][j].T, p.sdf_a[:8, :3], atol=1e-12)
    noisy = make_inputs(pairs, np.arange(2), ra, rb, rng, 32, 0, noise_sigma=0.05)
    assert not np.allclose(noisy.points_a, b.points_a[:2])


def test_generator_step_leaves_discriminator_untouched(pairs):
    tr = Trainer(pairs, SMALL)
    d_before = params_of(tr.disc)
    buffers = [v.copy() for _, v in tr.disc.named_buffers()]
    g_before = params_of(tr.gen)
    tr.generator_step(tr.make_batch(0))
    assert same(d_before, params_of(tr.disc))
    assert all(p.grad is None or not np.any(p.grad) for p in tr.disc.parameters())
    assert all(np.array_equal(a, v) for a, (_, v) in zip(buffers, tr.disc.named_buffers()))
    assert not same(g_before, params_of(tr.gen))


def test_discriminator_step_leaves_generator_untouched(pairs):
    tr = Trainer(pairs, SMALL)
    batch = tr.make_batch(0)
    _, assembled = tr.generator_step(batch)
    g_before = params_of(tr.gen)
    d_before = params_of(tr.disc)
    tr.discriminator_step(batch, assembled)
    assert same(g_before, params_of(tr.gen))
    assert not same(d_before, params_of(tr.disc))


def test_frozen_restores_flags(pairs):
    tr = Trainer(pairs, SMALL)
    with frozen(tr.disc):
        assert not any(p.requires_grad for p in tr.disc.parameters())
    assert all(p.requires_grad for p in tr.disc.parameters())


def test_loss_decreases_on_fixed_batch(pairs):
    cfg = replace(SMALL, adversarial=False, lambda_sdf=0.0)
    tr = Trainer(pairs, cfg)
    batch = tr.make_batch(0)
    losses = [tr.generator_step(batch)[0]["L_pose"] for _ in range(200)]
    assert np.mean(losses[-10:]) < 0.5 * np.mean(losses[:10])


def test_training_is_deterministic(pairs):
    runs = []
    for _ in range(2):
        tr = Trainer(pairs, SMALL)
        runs.append([tr.train_step() for _ in range(3)])
    assert runs[0] == runs[1]


def test_discriminator_separates_scrambled_clouds(pairs):
    tr = Trainer(pairs, replace(SMALL, batch_size=4))
    batch = tr.make_batch(0)
    rng = np.random.default_rng(0)
    n = batch.points_a.shape[1]
    # scrambled: part B thrown far off and rotated; assembled: ground truth
    scrambled = batch.assembled_gt.copy()
    for j in range(len(scrambled)):
        rot = quat_to_matrix(random_quaternion(rng))
        scrambled[j, n:] = scrambled[j, n:] @ rot.T + np.array([1.5, 0.0, 0.0])
    for _ in range(500):
        loss = tr.discriminator_step(batch, scrambled)
        if loss < 0.1:
            break
    assert loss < 0.1
    s = tr.disc(scrambled).data
    assert np.all((s > 0) & (s < 1))


def test_resume_is_bit_exact(tmp_path, pairs):
    ref = Trainer(pairs, SMALL)
    for _ in range(2):
        ref.train_step()
    ref.save(tmp_path / "ck")
    expected = ref.train_step()
    resumed = Trainer.resume(tmp_path / "ck", pairs)
    assert resumed.step == 2
    assert resumed.train_step() == expected
    assert same(params_of(ref.gen), params_of(resumed.gen))
    assert same(params_of(ref.disc), params_of(resumed.disc))


def test_validation_does_not_mutate(pairs):
    tr = Trainer(pairs, SMALL, val_pairs=pairs[:2])
    tr.train_step()
    state = {k: v.copy() for k, v in tr.state().items()}
    tr.evaluate()
    tr.evaluate_train()
    assert all(np.array_equal(state[k], v) for k, v in tr.state().items())
    assert tr.gen.training


def test_fit_writes_checkpoints_and_trace(tmp_path, pairs):
    tr = Trainer(pairs[:3], SMALL, val_pairs=pairs[3:], out_dir=tmp_path)
    trace = tr.fit()
    assert tr.step == 4 and len(trace) == 4
    for name in ("best.bin", "best.json", "last.bin", "trace.csv"):
        assert (tmp_path / name).exists()
    header = (tmp_path / "trace.csv").read_text().splitlines()[0]
    assert header.split(",")[:5] == ["step", "L_pose", "L_G", "L_adv", "L_SDF"]
    net, cfg = load_generator(tmp_path / "last")
    ra, rb = evaluation_rotations(1, 0)
    b = make_inputs(pairs, np.arange(1), ra, rb, None, 32)
    assert np.array_equal(predict(net, b.points_a, b.points_b)[0], predict(tr.gen, b.points_a, b.points_b)[0])


def test_non_finite_loss_aborts(pairs):
    tr = Trainer(pairs, SMALL)
    tr.gen.regressor.trans.weight.data[...] = np.nan
    with pytest.raises(TrainingDivergedError):
        tr.train_step()


def test_early_stop(pairs):
    cfg = replace(SMALL, steps=10, val_every=2, stop_mae_r=1000.0, stop_mae_t=1000.0)
    tr = Trainer(pairs, cfg)
    tr.fit()
    assert tr.step == 2
