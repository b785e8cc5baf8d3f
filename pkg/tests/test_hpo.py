import json

import numpy as np
import pytest

from zslforge import hpo, synthetic
from zslforge.simple_zsl import predict, train


def test_log_uniform_basics():
    rng = np.random.default_rng(0)
    assert hpo.sample_log_uniform(0.5, 0.5, rng) == 0.5
    draws = np.array([hpo.sample_log_uniform(0.1, 100, rng) for _ in range(10_000)])
    assert draws.min() >= 0.1 and draws.max() <= 100
    assert abs(np.median(draws) / np.sqrt(0.1 * 100) - 1) < 0.1
    for lo, hi in [(0, 1), (-1, 1), (2, 1)]:
        with pytest.raises(ValueError):
            hpo.sample_log_uniform(lo, hi, rng)


def test_space_validation():
    with pytest.raises(ValueError):
        hpo.Categorical(())
    with pytest.raises(ValueError):
        hpo.LogUniform(1, 1)
    with pytest.raises(ValueError):
        hpo.Mixture(1.5, 1.0, hpo.LogUniform(0.1, 1))


def test_simple_sampling():
    rng = np.random.default_rng(1)
    cfgs = [hpo.sample_simple_config(rng) for _ in range(1000)]
    assert {c.batch_size for c in cfgs} <= {32, 128, 256, 512, 1024}
    assert {c.d_embed for c in cfgs} <= {32, 128, 256, 512, 1024}
    assert {c.beta1 for c in cfgs} == {0.5, 0.9}
    assert all(3e-5 <= c.learning_rate <= 1e-2 for c in cfgs)
    assert all(c.margin == 1.0 or 0.1 <= c.margin <= 100 for c in cfgs)
    assert abs(np.mean([c.margin == 1.0 for c in cfgs]) - 0.5) <= 0.05
    assert hpo.sample_simple_config(5) == hpo.sample_simple_config(5)


def test_cada_sampling():
    rng = np.random.default_rng(2)
    cfgs = [hpo.sample_cada_config(rng) for _ in range(1000)]
    assert abs(np.mean([c.beta_fixed for c in cfgs]) - 0.3) <= 0.04
    assert all(c.beta_factor == 1.0 for c in cfgs if c.beta_fixed)
    encs = {(1560, 1560), (2048, 1024), (1560,), (1024, 512)}
    assert all(tuple(c.img_encoder) in encs and tuple(c.aux_encoder) in encs for c in cfgs)
    assert all(0.25 <= c.cross_recon_factor <= 50 and 0.25 <= c.dist_align_factor <= 100
               for c in cfgs)
    c = cfgs[0]
    assert (c.vae_lr, c.amsgrad, c.classifier_lr, c.classifier_batch_size) == (0.00015, True, 0.001, 32)
    assert hpo.sample_cada_config(9) == hpo.sample_cada_config(9)


@pytest.fixture(scope="module")
def task():
    b = synthetic.generate(synthetic.SyntheticSpec(samples_per_class=20))
    x, y = b.image_rows(b.train)
    t = b.aux.rows(b.train.wnids).astype(float)
    vx, vy = b.image_rows(b.test)
    vt = b.aux.rows(b.test.wnids).astype(float)

    def trainer(cfg):
        r = train(cfg, t, x, y)
        return r.params, r.history

    def evaluator(params):
        ranked = predict(params, vx, vt, 5)
        return float(np.mean(ranked[:, 0] == vy)), float(np.mean((ranked == vy[:, None]).any(1)))

    return trainer, evaluator


def short(rng, seed):
    return hpo.sample_simple_config(rng, seed=seed, epochs=2)


def test_single_trial_rank_one(task):
    recs = hpo.run_search(short, 1, *task, seed=3)
    assert len(recs) == 1 and recs[0].rank == 1 and recs[0].status == "ok"
    with pytest.raises(ValueError):
        hpo.run_search(short, 0, *task)


def test_failure_recorded(task, tmp_path):
    trainer, evaluator = task

    def flaky(cfg):
        if cfg.seed == (11 ^ 1):
            raise RuntimeError("boom")
        return trainer(cfg)

    recs = hpo.run_search(short, 4, flaky, evaluator, seed=11, run_dir=tmp_path)
    assert [r.status for r in recs] == ["ok", "ok", "ok", "failed"]
    assert recs[-1].trial_id == 1 and "boom" in recs[-1].error
    on_disk = json.loads((tmp_path / "trial_0001.json").read_text())
    assert on_disk["status"] == "failed" and on_disk["rank"] == 4
    assert len((tmp_path / "index.tsv").read_text().splitlines()) == 5


def test_replay_identical(task, tmp_path):
    a = hpo.run_search(short, 3, *task, seed=7, run_dir=tmp_path / "a")
    b = hpo.run_search(short, 3, *task, seed=7, run_dir=tmp_path / "b", parallel=3)
    assert [r.to_dict() for r in a] == [r.to_dict() for r in b]
    for i in range(3):
        name = f"trial_{i:04d}.json"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_rank_order_total():
    recs = [hpo.RunRecord(0, 0, {}, "ok", val_top1=0.5, val_top5=0.9),
            hpo.RunRecord(1, 0, {}, "failed"),
            hpo.RunRecord(2, 0, {}, "ok", val_top1=0.6, val_top5=0.9),
            hpo.RunRecord(3, 0, {}, "ok", val_top1=0.6, val_top5=0.9),
            hpo.RunRecord(4, 0, {}, "ok", val_top1=0.1, val_top5=0.95)]
    assert [r.trial_id for r in sorted(recs, key=hpo.rank_key)] == [4, 2, 3, 0, 1]


def test_forty_trial_budget(task):
    recs = hpo.run_search(short, 40, *task, seed=0)
    assert len(recs) == 40 and all(r.status == "ok" for r in recs)
    assert all(r.config["seed"] == r.seed for r in recs)
