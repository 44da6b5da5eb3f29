import numpy as np
import pytest

from selflab import pipeline, synth


@pytest.fixture(scope="session")
def default_world():
    """The default imbalanced synthetic world, seed 7 (shared, read-only)."""
    return synth.generate(synth.WorldSpec(seed=7))


@pytest.fixture(scope="session")
def default_corpus(default_world):
    return pipeline.corpus_from_world(default_world)


def per_class_recall(preds, truths, num_classes):
    """Diagonal recall from an independently accumulated confusion matrix."""
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    for p, t in zip(preds, truths):
        p = np.asarray(p).ravel()
        t = np.asarray(t).ravel()
        keep = t < num_classes
        np.add.at(conf, (t[keep], p[keep]), 1)
    return np.diag(conf) / conf.sum(axis=1)
