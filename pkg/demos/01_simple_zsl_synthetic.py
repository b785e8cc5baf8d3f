# coding: utf-8

# # Simple ZSL on a synthetic task
#
# The synthetic generator draws a prototype per class, then derives both the
# class description (aux vector) and noisy image features from it through two
# fixed linear maps. Because the link is linear, a linear joint embedding can
# recover it, which makes this a handy sanity check.

import json
from pathlib import Path

import numpy as np

from zslforge import evaluation, simple_zsl, synthetic

bundle = synthetic.generate(synthetic.SyntheticSpec())
x, y = bundle.image_rows(bundle.train)
aux_seen = bundle.aux.rows(bundle.train.wnids).astype(float)
print("seen images", x.shape, "seen classes", aux_seen.shape[0])


# ## Training
#
# The config below came out of a small random search over the usual ranges.
# Each epoch is one pass of Adam over shuffled mini-batches.

cfg_path = Path(__file__).resolve().parents[1] / "configs" / "simple_synthetic.json"
cfg = simple_zsl.SimpleZslConfig(**json.loads(cfg_path.read_text()))
result = simple_zsl.train(cfg, aux_seen, x, y)
print("loss: first epoch %.4f, last epoch %.4f" % (result.history[0], result.history[-1]))


# ## Zero-shot evaluation
#
# Only the five unseen classes are candidates at test time. Ranking is by
# dot product in the joint space.

tx, ty = bundle.image_rows(bundle.test)
aux_unseen = bundle.aux.rows(bundle.test.wnids).astype(float)
ranked = simple_zsl.predict(result.params, tx, aux_unseen, 5)
report = evaluation.evaluate_ranked(ranked, ty, list(bundle.test.wnids), ks=(1, 5))
print("mean per-class top-1: %.3f" % report.mean_topk[1])
print("confusion matrix (rows = true class):")
print(np.round(report.confusion, 2))
