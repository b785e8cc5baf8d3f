"""Finite-difference checks shared by the model tests and the acceptance suite."""

import numpy as np

from zslforge import cada_vae, simple_zsl
from zslforge.numeric import finite_diff_grad, relative_error


def max_rel_error(analytic: dict, numeric: dict) -> float:
    return max(float(relative_error(analytic[k], numeric[k]).max()) for k in numeric)


def simple_zsl_case(seed: int, d_img=6, d_aux=5, d_embed=4, n_cls=4, batch=5, margin=1.0):
    rng = np.random.default_rng(seed)
    params = simple_zsl.SimpleZslParams(
        rng.normal(size=(d_embed, d_img)), rng.normal(size=d_embed),
        rng.normal(size=(d_embed, d_aux)), rng.normal(size=d_embed))
    x = rng.normal(size=(batch, d_img))
    t = rng.normal(size=(n_cls, d_aux))
    y = rng.integers(0, n_cls, batch)
    _, grads = simple_zsl.loss_and_grad(params, x, y, t, margin)
    p = params.as_dict()
    num = finite_diff_grad(
        lambda q: simple_zsl.loss_and_grad(simple_zsl.SimpleZslParams(**q), x, y, t, margin)[0], p)
    return grads, num


def cada_case(seed: int, d_img=5, d_aux=4, latent=3, hidden=(6,), batch=4, epoch=50):
    rng = np.random.default_rng(seed)
    cfg = cada_vae.CadaVaeConfig(latent_dim=latent, img_encoder=hidden, img_decoder=hidden,
                                 aux_encoder=hidden, aux_decoder=(7,))
    img = cada_vae.VaeParams.init(d_img, latent, hidden, hidden, rng)
    aux = cada_vae.VaeParams.init(d_aux, latent, hidden, (7,), rng)
    # move biases off zero so ReLU kinks are not hit exactly
    for vae in (img, aux):
        for k, v in vae.params.items():
            if k.endswith(".b"):
                v += rng.normal(scale=0.1, size=v.shape)
    x = rng.normal(size=(batch, d_img))
    t = rng.normal(size=(batch, d_aux))
    ex = rng.normal(size=(batch, latent))
    et = rng.normal(size=(batch, latent))
    _, _, (gi, ga) = cada_vae.cada_loss(x, t, img, aux, epoch, cfg, ex, et, with_grad=True)

    def loss(_):
        return cada_vae.cada_loss(x, t, img, aux, epoch, cfg, ex, et)[0]

    ni = finite_diff_grad(loss, img.params)
    na = finite_diff_grad(loss, aux.params)
    return {**{"img." + k: v for k, v in gi.items()}, **{"aux." + k: v for k, v in ga.items()}}, \
        {**{"img." + k: v for k, v in ni.items()}, **{"aux." + k: v for k, v in na.items()}}


def classifier_case(seed: int, latent=5, n_cls=4, batch=7):
    rng = np.random.default_rng(seed)
    clf = cada_vae.LatentClassifier(rng.normal(size=(n_cls, latent)), rng.normal(size=n_cls))
    z = rng.normal(size=(batch, latent))
    y = rng.integers(0, n_cls, batch)
    _, g = cada_vae.classifier_loss_and_grad(clf, z, y)
    num = finite_diff_grad(
        lambda q: cada_vae.classifier_loss_and_grad(cada_vae.LatentClassifier(**q), z, y)[0],
        clf.as_dict())
    return g, num
