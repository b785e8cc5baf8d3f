# coding: utf-8

# # Random search
#
# Continuous hyperparameters are drawn log-uniformly. The margin is 1 half of
# the time. Each trial gets the seed ``seed ^ trial_id``, so the search replays
# exactly, whether it runs sequentially or in parallel.

import tempfile

import numpy as np

from zslforge import hpo, simple_zsl, synthetic

rng = np.random.default_rng(0)
print(hpo.sample_simple_config(rng))
print(hpo.sample_cada_config(rng))

bundle = synthetic.generate(synthetic.SyntheticSpec(samples_per_class=30))
x, y = bundle.image_rows(bundle.train)
t = bundle.aux.rows(bundle.train.wnids).astype(float)
vx, vy = bundle.image_rows(bundle.test)
vt = bundle.aux.rows(bundle.test.wnids).astype(float)


def trainer(cfg):
    r = simple_zsl.train(cfg, t, x, y)
    return r.params, r.history


def evaluator(params):
    ranked = simple_zsl.predict(params, vx, vt, 5)
    return np.mean(ranked[:, 0] == vy), np.mean((ranked == vy[:, None]).any(1))


def sampler(rng, seed):
    # short trials keep the demo quick
    return hpo.sample_simple_config(rng, seed=seed, epochs=20)


with tempfile.TemporaryDirectory() as run_dir:
    records = hpo.run_search(sampler, 10, trainer, evaluator, seed=0, run_dir=run_dir, parallel=4)
    print(open(run_dir + "/index.tsv").read())
best = records[0]
print("best trial", best.trial_id, best.config)
