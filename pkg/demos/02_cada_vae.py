# coding: utf-8

# # CADA-VAE on the same task
#
# Two VAEs, one for images and one for class descriptions, share a latent
# space. Besides reconstruction and KL terms, the loss asks each latent to
# decode into the other modality and pulls the two Gaussians together.
# The three extra weights warm up linearly over fixed epoch windows.

import sys

from zslforge import cada_vae, evaluation, synthetic

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 100

cfg = cada_vae.CadaVaeConfig(epochs=epochs)
for e in (0, 6, 14, 22, 50, 93):
    print("epoch %3d weights:" % e, {k: round(v, 3) for k, v in cfg.weights(e).items()})

bundle = synthetic.generate(synthetic.SyntheticSpec())
x, y = bundle.image_rows(bundle.train)
aux_seen = bundle.aux.rows(bundle.train.wnids).astype(float)


# ## Training (this takes a couple of minutes at 100 epochs)

model = cada_vae.train_cada(cfg, x, y, aux_seen)
print("total loss: first %.2f, last %.2f" % (model.history[0]["total"], model.history[-1]["total"]))


# ## Latent classifier
#
# Latents are sampled from the aux encoder for every unseen class, and a
# softmax classifier is fit on them. Test images are then encoded (mean
# only) and classified.

tx, ty = bundle.image_rows(bundle.test)
aux_unseen = bundle.aux.rows(bundle.test.wnids).astype(float)
clf = cada_vae.fit_unseen_classifier(model, aux_unseen, cfg)
ranked = cada_vae.classify(model.img_vae, clf, tx, 5)
report = evaluation.evaluate_ranked(ranked, ty, list(bundle.test.wnids), ks=(1, 5))
print("mean per-class top-1: %.3f, top-5: %.3f" % (report.mean_topk[1], report.mean_topk[5]))
