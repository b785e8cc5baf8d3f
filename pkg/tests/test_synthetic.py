import numpy as np
import pytest

from zslforge import synthetic
from zslforge.corpus import load_class_registry, load_feature_matrix, load_split
from zslforge.synthetic import SyntheticSpec, generate, write_bundle


def test_defaults():
    s = SyntheticSpec()
    assert (s.n_classes, s.n_seen, s.d_proto, s.d_img, s.d_aux, s.samples_per_class,
            s.noise_scale) == (20, 15, 16, 32, 16, 100, 0.05)


def test_noiseless_identity():
    b = generate(SyntheticSpec(noise_scale=0, d_img=16, identity_image_map=True, samples_per_class=3))
    x, y = b.image_rows(b.train)
    np.testing.assert_allclose(x, b.prototypes[y], atol=1e-6)


def test_deterministic():
    a, b = generate(SyntheticSpec(seed=4)), generate(SyntheticSpec(seed=4))
    np.testing.assert_array_equal(a.images.data, b.images.data)
    np.testing.assert_array_equal(a.aux.data, b.aux.data)
    assert not np.array_equal(a.aux.data, generate(SyntheticSpec(seed=5)).aux.data)


def test_class_means_clt():
    spec = SyntheticSpec(samples_per_class=400, noise_scale=0.5)
    b = generate(spec)
    x, y = b.image_rows(b.train)
    sigma = spec.noise_scale / np.sqrt(spec.samples_per_class)
    errs = np.array([np.abs(x[y == c].mean(0) - b.image_map @ b.prototypes[c])
                     for c in range(spec.n_seen)])
    # a 3-sigma band holds for 99.73% of coordinates, so a few of 480 may fall outside
    assert np.mean(errs <= 3 * sigma) >= 0.99
    assert errs.max() <= 4.5 * sigma


def test_aux_is_linear_in_prototypes():
    b = generate()
    np.testing.assert_allclose(b.aux.data, b.prototypes @ b.aux_map.T, atol=1e-5)


def test_splits():
    b = generate()
    assert len(b.train.wnids) == 15 and len(b.test.wnids) == 5
    assert not set(b.train.wnids) & set(b.test.wnids)


@pytest.mark.parametrize("kw", [dict(n_seen=20), dict(n_seen=0), dict(d_img=0),
                                dict(noise_scale=-1), dict(map_kind="x"),
                                dict(identity_image_map=True)])
def test_invalid(kw):
    with pytest.raises(ValueError):
        SyntheticSpec(**kw)


def test_write_bundle(tmp_path):
    b = generate(SyntheticSpec(samples_per_class=5))
    paths = write_bundle(b, tmp_path)
    reg = load_class_registry(paths["registry"])
    assert list(reg.order) == list(b.registry.order)
    assert load_split(paths["test"], reg).wnids == b.test.wnids
    fm = load_feature_matrix(paths["images"])
    np.testing.assert_array_equal(fm.data, b.images.data)
    assert fm.labels()[:5] == [synthetic.wnid_for(0)] * 5
