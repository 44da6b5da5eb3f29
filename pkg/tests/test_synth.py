import numpy as np
import pytest

from selflab import synth


def small_spec(**kw):
    base = dict(
        num_classes=4,
        feature_dim=8,
        class_prior=(0.4, 0.3, 0.2, 0.1),
        n_images=4,
        image_size=(24, 24),
        cells_per_image=12,
        seed=5,
    )
    base.update(kw)
    return synth.WorldSpec(**base)


def test_determinism_byte_identical():
    a = synth.generate(small_spec())
    b = synth.generate(small_spec())
    for x, y in zip(a.features, b.features):
        assert x.tobytes() == y.tobytes()
    for x, y in zip(a.truth, b.truth):
        assert x.tobytes() == y.tobytes()
    for x, y in zip(a.classifier_probs, b.classifier_probs):
        assert x.tobytes() == y.tobytes()


def test_different_seed_differs():
    a = synth.generate(small_spec())
    b = synth.generate(small_spec(seed=6))
    assert any(x.tobytes() != y.tobytes() for x, y in zip(a.truth, b.truth))


def test_noiseless_limit():
    world = synth.generate(small_spec(noise_sigma=0.0, label_noise=0.0))
    preds = [np.argmax(p, axis=-1) for p in world.classifier_probs]
    assert synth.oracle_accuracy(preds, world.truth, 4) == 1.0
    for z, t in zip(world.features, world.truth):
        flat = z.reshape(-1, 8).astype(np.float64)
        expected = world.means[t.ravel()]
        assert np.abs(flat - expected).max() < 1e-6


def test_full_label_noise_gives_chance_accuracy():
    spec = synth.WorldSpec(
        num_classes=5,
        label_noise=1.0,
        n_images=30,
        image_size=(64, 64),
        seed=9,
    )
    world = synth.generate(spec)
    preds = [np.argmax(p, axis=-1) for p in world.classifier_probs]
    acc = synth.oracle_accuracy(preds, world.truth, 5)
    assert world.truth[0].size * 30 >= 10**5
    assert abs(acc - 0.2) < 0.03


def test_pixel_histogram_tracks_prior():
    spec = synth.WorldSpec(seed=0)  # default long-tailed world
    world = synth.generate(spec)
    flat = np.concatenate([t.ravel() for t in world.truth])
    assert flat.size >= 10**5
    hist = np.bincount(flat, minlength=5) / flat.size
    assert np.abs(hist - np.asarray(spec.class_prior)).sum() <= 0.02


def test_classifier_probs_are_valid_maps():
    world = synth.generate(small_spec())
    for p in world.classifier_probs:
        assert (p >= 0).all()
        assert np.abs(p.sum(axis=-1) - 1.0).max() < 1e-6


def test_features_unit_norm():
    world = synth.generate(small_spec())
    for z in world.features:
        norms = np.linalg.norm(z.reshape(-1, 8).astype(np.float64), axis=1)
        assert np.abs(norms - 1.0).max() < 1e-5


def test_class_separation_supports_nearest_mean():
    world = synth.generate(small_spec(noise_sigma=0.15, n_images=8))
    hits = total = 0
    for z, t in zip(world.features, world.truth):
        pred = np.argmax(z.reshape(-1, 8).astype(np.float64) @ world.means.T, axis=1)
        hits += (pred == t.ravel()).sum()
        total += t.size
    assert hits / total > 0.99


def test_classifier_accuracy_near_configured():
    world = synth.generate(synth.WorldSpec(seed=1))
    preds = [np.argmax(p, axis=-1) for p in world.classifier_probs]
    acc = synth.oracle_accuracy(preds, world.truth, 5)
    # label_noise 0.375 with uniform redirect: 1 - 0.375 * 4/5 = 0.70
    assert abs(acc - 0.70) < 0.02


def test_images_contain_contiguous_regions():
    world = synth.generate(small_spec())
    t = world.truth[0]
    same_right = (t[:, :-1] == t[:, 1:]).mean()
    same_down = (t[:-1, :] == t[1:, :]).mean()
    # far above the i.i.d. baseline (sum of squared priors = 0.3)
    assert same_right > 0.8 and same_down > 0.8


def test_degenerate_sigma_rejected():
    with pytest.raises(ValueError):
        synth.generate(small_spec(noise_sigma=-0.1))
    with pytest.raises(ValueError):
        synth.WorldSpec(num_classes=3, class_prior=(0.5, 0.5))


def test_oracle_accuracy_cases():
    a = np.array([[0, 1], [1, 0]], dtype=np.uint16)
    assert synth.oracle_accuracy([a], [a]) == 1.0
    assert synth.oracle_accuracy([a], [1 - a]) == 0.0
    b = a.copy()
    b[0, 0] = 1
    assert synth.oracle_accuracy([b], [a]) == 0.75
    with pytest.raises(ValueError):
        synth.oracle_accuracy([], [])
