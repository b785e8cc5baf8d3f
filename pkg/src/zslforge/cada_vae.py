"""Cross- and distribution-aligned VAEs for zero-shot classification.

One VAE encodes image features, a second one encodes class-description
features. Training pairs every image with its class's description vector and
minimizes

    recon_img + recon_aux
    + beta(e)  * (KL_img + KL_aux)
    + gamma(e) * (cross_img + cross_aux)
    + delta(e) * W2(q_img, q_aux)

where the three weights ramp up linearly over epoch windows, the cross terms
decode one modality's latent with the other modality's decoder, and W2 is
the 2-Wasserstein distance between the two diagonal Gaussian posteriors.
All terms are averaged over the batch.

For zero-shot classification, latents are sampled from the description VAE
for each unseen class, a softmax classifier is fit on them, and test images
are classified from the image VAE's posterior mean.

Gradients are derived by hand; :func:`cada_loss` with ``with_grad=True``
returns them for every parameter of both VAEs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .numeric import Adam, WarmupSchedule, as_rng, init_bias, init_linear, top_k


@dataclass
class CadaVaeConfig:
    latent_dim: int = 64
    batch_size: int = 32
    vae_lr: float = 0.00015
    epochs: int = 100
    seed: int = 0
    amsgrad: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    beta_factor: float = 0.25
    beta_fixed: bool = False
    beta_start: int = 0
    beta_end: int = 93
    cross_recon_factor: float = 2.37
    cross_recon_start: int = 21
    cross_recon_end: int = 75
    dist_align_factor: float = 8.13
    dist_align_start: int = 6
    dist_align_end: int = 22
    img_encoder: tuple[int, ...] = (1560,)
    img_decoder: tuple[int, ...] = (1660,)
    aux_encoder: tuple[int, ...] = (1560,)
    aux_decoder: tuple[int, ...] = (1660,)
    recon_reduction: str = "sum"
    classifier_lr: float = 0.001
    classifier_batch_size: int = 32
    classifier_epochs: int = 20
    latents_per_class: int = 200

    def __post_init__(self):
        for f in ("img_encoder", "img_decoder", "aux_encoder", "aux_decoder"):
            setattr(self, f, tuple(int(h) for h in getattr(self, f)))
        if min(self.beta_factor, self.cross_recon_factor, self.dist_align_factor) < 0:
            raise ValueError("loss factors must be >= 0")
        if self.recon_reduction not in ("sum", "mean"):
            raise ValueError("recon_reduction must be 'sum' or 'mean'")
        # validates the windows
        self.schedules()

    def schedules(self) -> dict[str, WarmupSchedule]:
        return {
            "beta": WarmupSchedule(self.beta_factor, self.beta_start, self.beta_end),
            "cross_recon": WarmupSchedule(
                self.cross_recon_factor, self.cross_recon_start, self.cross_recon_end),
            "dist_align": WarmupSchedule(
                self.dist_align_factor, self.dist_align_start, self.dist_align_end),
        }

    def weights(self, epoch) -> dict[str, float]:
        w = {k: s(epoch) for k, s in self.schedules().items()}
        if self.beta_fixed:
            w["beta"] = 1.0
        return w

    def to_dict(self) -> dict:
        d = asdict(self)
        for f in ("img_encoder", "img_decoder", "aux_encoder", "aux_decoder"):
            d[f] = list(d[f])
        return d

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# -- one VAE --------------------------------------------------------------------


@dataclass
class VaeParams:
    """Weights of one VAE.

    Keys: ``enc.{i}.W/b`` hidden layers, ``mu.W/b`` and ``logvar.W/b`` heads,
    ``dec.{i}.W/b`` hidden layers and ``out.W/b``. Weight matrices are
    ``out_features x in_features``.
    """

    params: dict[str, np.ndarray]
    in_dim: int
    latent_dim: int
    encoder: tuple[int, ...]
    decoder: tuple[int, ...]

    @classmethod
    def init(cls, in_dim, latent_dim, encoder=(), decoder=(), seed_or_rng=None) -> "VaeParams":
        rng = as_rng(seed_or_rng)
        p = {}
        prev = in_dim
        for i, h in enumerate(encoder):
            p[f"enc.{i}.W"], p[f"enc.{i}.b"] = init_linear(h, prev, rng), init_bias(h)
            prev = h
        p["mu.W"], p["mu.b"] = init_linear(latent_dim, prev, rng), init_bias(latent_dim)
        p["logvar.W"], p["logvar.b"] = init_linear(latent_dim, prev, rng), init_bias(latent_dim)
        prev = latent_dim
        for i, h in enumerate(decoder):
            p[f"dec.{i}.W"], p[f"dec.{i}.b"] = init_linear(h, prev, rng), init_bias(h)
            prev = h
        p["out.W"], p["out.b"] = init_linear(in_dim, prev, rng), init_bias(in_dim)
        return cls(p, in_dim, latent_dim, tuple(encoder), tuple(decoder))

    def copy(self) -> "VaeParams":
        return VaeParams({k: v.copy() for k, v in self.params.items()},
                         self.in_dim, self.latent_dim, self.encoder, self.decoder)


def _stack_forward(p, prefix, n, h):
    cache = []
    for i in range(n):
        a = h @ p[f"{prefix}.{i}.W"].T + p[f"{prefix}.{i}.b"]
        cache.append((h, a))
        h = np.maximum(a, 0.0)
    return h, cache


def _stack_backward(p, prefix, cache, dh, grads):
    for i in reversed(range(len(cache))):
        h_in, a = cache[i]
        da = dh * (a > 0)
        _acc(grads, f"{prefix}.{i}.W", da.T @ h_in)
        _acc(grads, f"{prefix}.{i}.b", da.sum(axis=0))
        dh = da @ p[f"{prefix}.{i}.W"]
    return dh


def _acc(grads, key, value):
    if key in grads:
        grads[key] += value
    else:
        grads[key] = value


def _encode(vae: VaeParams, x):
    p = vae.params
    h, cache = _stack_forward(p, "enc", len(vae.encoder), x)
    mu = h @ p["mu.W"].T + p["mu.b"]
    logvar = h @ p["logvar.W"].T + p["logvar.b"]
    return mu, logvar, (h, cache)


def _encode_backward(vae: VaeParams, state, dmu, dlogvar, grads):
    p = vae.params
    h, cache = state
    _acc(grads, "mu.W", dmu.T @ h)
    _acc(grads, "mu.b", dmu.sum(axis=0))
    _acc(grads, "logvar.W", dlogvar.T @ h)
    _acc(grads, "logvar.b", dlogvar.sum(axis=0))
    dh = dmu @ p["mu.W"] + dlogvar @ p["logvar.W"]
    _stack_backward(p, "enc", cache, dh, grads)


def _decode(vae: VaeParams, z):
    p = vae.params
    h, cache = _stack_forward(p, "dec", len(vae.decoder), z)
    return h @ p["out.W"].T + p["out.b"], (h, cache)


def _decode_backward(vae: VaeParams, state, dout, grads):
    p = vae.params
    h, cache = state
    _acc(grads, "out.W", dout.T @ h)
    _acc(grads, "out.b", dout.sum(axis=0))
    dh = dout @ p["out.W"]
    return _stack_backward(p, "dec", cache, dh, grads)


def vae_encode(vae: VaeParams, x):
    """Posterior mean and log-variance; ReLU hidden layers, linear heads."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != vae.in_dim:
        raise ValueError(f"input dim {x.shape[-1]} != encoder dim {vae.in_dim}")
    single = x.ndim == 1
    mu, logvar, _ = _encode(vae, np.atleast_2d(x))
    return (mu[0], logvar[0]) if single else (mu, logvar)


def vae_decode(vae: VaeParams, z):
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    out, _ = _decode(vae, np.atleast_2d(z))
    return out[0] if single else out


# -- loss pieces ----------------------------------------------------------------


def reparameterize(mu, logvar, eps):
    return mu + eps * np.exp(0.5 * np.asarray(logvar))


def _batched(a):
    a = np.asarray(a, dtype=np.float64)
    return a[None, :] if a.ndim == 1 else a


def kl_divergence(mu, logvar) -> float:
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over dims, mean over batch."""
    mu, logvar = _batched(mu), _batched(logvar)
    per = -0.5 * (1 + logvar - mu**2 - np.exp(logvar)).sum(axis=1)
    return float(per.mean())


def reconstruction_loss(x, x_hat, reduction: str = "mean") -> float:
    """L1 reconstruction error.

    ``mean`` averages over features and batch; ``sum`` sums over features
    and averages over the batch.
    """
    d = np.abs(_batched(x) - _batched(x_hat))
    if reduction == "mean":
        return float(d.mean())
    if reduction == "sum":
        return float(d.sum(axis=1).mean())
    raise ValueError(f"unknown reduction {reduction!r}")


def distribution_alignment(mu_a, logvar_a, mu_b, logvar_b) -> float:
    """2-Wasserstein distance between diagonal Gaussians, mean over batch."""
    mu_a, mu_b = _batched(mu_a), _batched(mu_b)
    sa = np.exp(0.5 * _batched(logvar_a))
    sb = np.exp(0.5 * _batched(logvar_b))
    d2 = ((mu_a - mu_b) ** 2).sum(axis=1) + ((sa - sb) ** 2).sum(axis=1)
    return float(np.sqrt(d2).mean())


def _l1_with_grad(x, x_hat, reduction):
    diff = x_hat - x
    if reduction == "mean":
        return float(np.abs(diff).mean()), np.sign(diff) / diff.size
    return float(np.abs(diff).sum(axis=1).mean()), np.sign(diff) / diff.shape[0]


def cada_loss(x, t, img_vae: VaeParams, aux_vae: VaeParams, epoch, config: CadaVaeConfig,
              eps_x=None, eps_t=None, rng=None, with_grad=False):
    """Total loss and its components for a batch of paired (image, aux) rows.

    ``eps_x``/``eps_t`` are the standard-normal draws of the
    reparameterization; they are drawn from ``rng`` when not given. With
    ``with_grad`` the return value gains a third element
    ``(img_grads, aux_grads)`` keyed like the parameter dicts.
    """
    x = _batched(x)
    t = _batched(t)
    B = x.shape[0]
    L = img_vae.latent_dim
    if eps_x is None or eps_t is None:
        rng = as_rng(rng)
        eps_x = rng.standard_normal((B, L))
        eps_t = rng.standard_normal((B, L))
    w = config.weights(epoch)
    red = config.recon_reduction

    mu_x, lv_x, enc_x = _encode(img_vae, x)
    mu_t, lv_t, enc_t = _encode(aux_vae, t)
    sd_x = np.exp(0.5 * lv_x)
    sd_t = np.exp(0.5 * lv_t)
    z_x = mu_x + eps_x * sd_x
    z_t = mu_t + eps_t * sd_t

    x_rec, dec_xx = _decode(img_vae, z_x)
    t_rec, dec_tt = _decode(aux_vae, z_t)
    x_cross, dec_tx = _decode(img_vae, z_t)
    t_cross, dec_xt = _decode(aux_vae, z_x)

    r_x, g_xrec = _l1_with_grad(x, x_rec, red)
    r_t, g_trec = _l1_with_grad(t, t_rec, red)
    c_x, g_xcross = _l1_with_grad(x, x_cross, red)
    c_t, g_tcross = _l1_with_grad(t, t_cross, red)
    kl_x = kl_divergence(mu_x, lv_x)
    kl_t = kl_divergence(mu_t, lv_t)
    dmu = mu_x - mu_t
    dsd = sd_x - sd_t
    dist = np.sqrt((dmu**2).sum(axis=1) + (dsd**2).sum(axis=1))
    da = float(dist.mean())

    components = {
        "recon_img": r_x, "recon_aux": r_t,
        "kl_img": kl_x, "kl_aux": kl_t,
        "cross_img": c_x, "cross_aux": c_t,
        "dist_align": da,
        "beta": w["beta"], "cross_weight": w["cross_recon"], "align_weight": w["dist_align"],
    }
    total = (r_x + r_t + w["beta"] * (kl_x + kl_t)
             + w["cross_recon"] * (c_x + c_t) + w["dist_align"] * da)
    if not with_grad:
        return total, components

    gi: dict[str, np.ndarray] = {}
    ga: dict[str, np.ndarray] = {}
    gamma = w["cross_recon"]
    dz_x = _decode_backward(img_vae, dec_xx, g_xrec, gi)
    dz_x = dz_x + _decode_backward(aux_vae, dec_xt, gamma * g_tcross, ga)
    dz_t = _decode_backward(aux_vae, dec_tt, g_trec, ga)
    dz_t = dz_t + _decode_backward(img_vae, dec_tx, gamma * g_xcross, gi)

    # reparameterization
    dmu_x = dz_x.copy()
    dmu_t = dz_t.copy()
    dsd_x = dz_x * eps_x
    dsd_t = dz_t * eps_t

    # alignment; zero subgradient where the two posteriors coincide
    delta = w["dist_align"]
    safe = np.where(dist > 0, dist, 1.0)
    coef = (delta / B) * np.where(dist > 0, 1.0 / safe, 0.0)[:, None]
    dmu_x += coef * dmu
    dmu_t -= coef * dmu
    dsd_x += coef * dsd
    dsd_t -= coef * dsd

    beta = w["beta"]
    dlv_x = dsd_x * 0.5 * sd_x + beta * (-0.5 * (1 - sd_x**2)) / B
    dlv_t = dsd_t * 0.5 * sd_t + beta * (-0.5 * (1 - sd_t**2)) / B
    dmu_x += beta * mu_x / B
    dmu_t += beta * mu_t / B

    _encode_backward(img_vae, enc_x, dmu_x, dlv_x, gi)
    _encode_backward(aux_vae, enc_t, dmu_t, dlv_t, ga)
    return total, components, (gi, ga)


# -- training -------------------------------------------------------------------


@dataclass
class CadaModel:
    img_vae: VaeParams
    aux_vae: VaeParams
    history: list[dict] = field(default_factory=list)


def init_cada(config: CadaVaeConfig, d_img: int, d_aux: int, seed_or_rng=None) -> CadaModel:
    rng = as_rng(config.seed if seed_or_rng is None else seed_or_rng)
    img = VaeParams.init(d_img, config.latent_dim, config.img_encoder, config.img_decoder, rng)
    aux = VaeParams.init(d_aux, config.latent_dim, config.aux_encoder, config.aux_decoder, rng)
    return CadaModel(img, aux)


def train_cada(config: CadaVaeConfig, images, labels, aux) -> CadaModel:
    """Fit both VAEs on seen classes with (AMS)Adam at ``config.vae_lr``.

    ``labels`` index rows of ``aux`` (one row per seen class). The history
    holds the sample-weighted epoch means of every loss component.
    """
    x = np.asarray(images, dtype=np.float64)
    t_cls = np.asarray(aux, dtype=np.float64)
    y = np.asarray(labels)
    if x.shape[0] == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    model = init_cada(config, x.shape[1], t_cls.shape[1], rng)
    opt = Adam(config.vae_lr, config.beta1, config.beta2, config.eps, amsgrad=config.amsgrad)
    params = {**{"img." + k: v for k, v in model.img_vae.params.items()},
              **{"aux." + k: v for k, v in model.aux_vae.params.items()}}
    n = x.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        sums: dict[str, float] = {}
        for start in range(0, n, config.batch_size):
            b = order[start:start + config.batch_size]
            total, comp, (gi, ga) = cada_loss(
                x[b], t_cls[y[b]], model.img_vae, model.aux_vae, epoch, config,
                rng=rng, with_grad=True)
            grads = {**{"img." + k: v for k, v in gi.items()},
                     **{"aux." + k: v for k, v in ga.items()}}
            opt.step(params, grads)
            for k, v in {"total": total, **comp}.items():
                sums[k] = sums.get(k, 0.0) + v * len(b)
        model.history.append({"epoch": epoch, **{k: v / n for k, v in sums.items()}})
    return model


def sample_latents(aux_vae: VaeParams, aux, n_per_class: int = 200, seed_or_rng=None,
                   eps=None):
    """Draw ``n_per_class`` latents per row of ``aux``.

    Returns ``(latents, labels)`` with labels indexing rows of ``aux``.
    ``eps`` overrides the noise (shape ``(K * n, latent_dim)``).
    """
    t = _batched(aux)
    mu, logvar, _ = _encode(aux_vae, t)
    K, L = mu.shape
    labels = np.repeat(np.arange(K), n_per_class)
    if eps is None:
        eps = as_rng(seed_or_rng).standard_normal((K * n_per_class, L))
    return reparameterize(mu[labels], logvar[labels], eps), labels


# -- latent classifier ----------------------------------------------------------


@dataclass
class LatentClassifier:
    W: np.ndarray
    b: np.ndarray

    def as_dict(self):
        return {"W": self.W, "b": self.b}

    @property
    def n_classes(self):
        return self.W.shape[0]


def _log_softmax(logits):
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def classifier_loss_and_grad(clf: LatentClassifier, latents, labels):
    """Mean softmax cross-entropy and its gradients."""
    z = _batched(latents)
    y = np.asarray(labels)
    B = z.shape[0]
    logp = _log_softmax(z @ clf.W.T + clf.b)
    loss = float(-logp[np.arange(B), y].mean())
    d = np.exp(logp)
    d[np.arange(B), y] -= 1.0
    d /= B
    return loss, {"W": d.T @ z, "b": d.sum(axis=0)}


def train_latent_classifier(latents, labels, n_classes: int | None = None, lr: float = 0.001,
                            batch_size: int = 32, epochs: int = 20, seed_or_rng=None,
                            beta1: float = 0.9, beta2: float = 0.999) -> LatentClassifier:
    z = np.asarray(latents, dtype=np.float64)
    y = np.asarray(labels)
    K = int(y.max()) + 1 if n_classes is None else n_classes
    counts = np.bincount(y, minlength=K)
    if (counts == 0).any():
        raise ValueError(f"class {int(np.flatnonzero(counts == 0)[0])} has no samples")
    rng = as_rng(seed_or_rng)
    clf = LatentClassifier(init_linear(K, z.shape[1], rng), init_bias(K))
    opt = Adam(lr, beta1, beta2)
    n = z.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            b = order[start:start + batch_size]
            _, grads = classifier_loss_and_grad(clf, z[b], y[b])
            opt.step(clf.as_dict(), grads)
    return clf


def fit_unseen_classifier(model: CadaModel, aux_unseen, config: CadaVaeConfig,
                          seed_or_rng=None) -> LatentClassifier:
    """Sample latents from the description VAE and fit the classifier on them."""
    rng = as_rng(config.seed if seed_or_rng is None else seed_or_rng)
    t = _batched(aux_unseen)
    z, y = sample_latents(model.aux_vae, t, config.latents_per_class, rng)
    return train_latent_classifier(
        z, y, t.shape[0], config.classifier_lr, config.classifier_batch_size,
        config.classifier_epochs, rng)


def classify(img_vae: VaeParams, clf: LatentClassifier, images, k: int = 1) -> np.ndarray:
    """Top-k class indices from the image posterior mean (no sampling)."""
    x = np.asarray(images, dtype=np.float64)
    single = x.ndim == 1
    mu, _, _ = _encode(img_vae, np.atleast_2d(x))
    idx = top_k(mu @ clf.W.T + clf.b, k)
    return idx[0] if single else idx
