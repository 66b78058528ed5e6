import dataclasses

import numpy as np
import pytest
from sklearn.base import clone

from memdep.corpusgen import GenSpec, generate
from memdep.estimators import DependencyClassifier, IndirectCallMatcher, MemDepPretrainer, RegionClassifier
from memdep.model import REGIONS
from memdep.train import SignatureRecord, function_samples, region_ids
from memdep import validation

TINY = dict(d=16, layers=2, fusion_layer=1, heads=2, conv_channels=2)


@pytest.fixture(scope="module")
def corpus():
    g = generate(GenSpec(seed=3, functions=4, max_ops=12))
    regions = region_ids(g.regions)
    out = []
    for fn in g.program.functions:
        out += function_samples(fn, {d.pair for d in g.function_dependencies(fn.name)}, regions=regions)
    return out


def test_params_round_trip_and_clone():
    est = DependencyClassifier(**TINY, epochs=3, threshold=0.7)
    params = est.get_params()
    assert params["d"] == 16 and params["threshold"] == 0.7
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(lr=5e-4)
    assert est.lr == 5e-4


def test_unfitted_estimators_refuse_to_predict(corpus):
    with pytest.raises(RuntimeError):
        DependencyClassifier(**TINY).predict(corpus)
    with pytest.raises(RuntimeError):
        MemDepPretrainer(**TINY).transform(corpus)


def test_pretrainer_transform_shape(corpus):
    est = MemDepPretrainer(**TINY, epochs=2, batch_size=4).fit(corpus)
    emb = est.transform(corpus)
    assert emb.shape == (len(corpus), 16) and np.isfinite(emb).all()
    assert len(est.audit_) == 2


def test_dependency_classifier_fit_predict(corpus):
    est = DependencyClassifier(**TINY, epochs=2, batch_size=4, lr=1e-3).fit(corpus)
    pairs = est.predict(corpus)
    assert len(pairs) == len(corpus)
    for s, found in zip(corpus, pairs):
        memory = set(s.labels["memory"])
        assert all(i < j and i in memory and j in memory for i, j in found)
    assert 0.0 <= est.score(corpus) <= 1.0
    assert est.set_params(threshold=1.0).predict(corpus) == [set()] * len(corpus)


def test_dependency_classifier_starts_from_pretrained(corpus):
    pre = MemDepPretrainer(**TINY, epochs=1, batch_size=4).fit(corpus)
    est = DependencyClassifier(init_model=pre.model_, epochs=1, batch_size=4).fit(corpus)
    assert est.model_ is not pre.model_
    assert est.model_.config == pre.model_.config


def test_region_classifier_predicts_known_classes(corpus):
    pre = MemDepPretrainer(**TINY, epochs=1, batch_size=4).fit(corpus)
    est = RegionClassifier(encoder=pre.model_, epochs=5, lr=1e-3).fit(corpus)
    pred = est.predict(corpus)
    assert set(pred) <= set(REGIONS)
    assert len(pred) == sum(len(s.labels["regions"]) for s in corpus)
    assert 0.0 <= est.score(corpus) <= 1.0


def test_matcher_estimator():
    functions = {
        "f": SignatureRecord.of(1, ["int"], "int"),
        "g": SignatureRecord.of(2, ["ptr", "int"], "void"),
    }
    est = IndirectCallMatcher(arity="strict").fit(functions)
    assert est.predict({0x40: SignatureRecord.of(1, ["int"], "int")}) == {0x40: ["f"]}
    with pytest.raises(ValueError):
        IndirectCallMatcher(arity="fuzzy").fit(functions)
    with pytest.raises(ValueError):
        IndirectCallMatcher().fit({})


def test_sample_validation(corpus):
    assert validation.check_samples(corpus[0]) == [corpus[0]]
    with pytest.raises(ValueError):
        validation.check_samples([])
    with pytest.raises(TypeError):
        validation.check_samples([1])
    with pytest.raises(ValueError):
        validation.check_samples(corpus, require_labels=("signature",))
    bad = corpus[0]
    broken = dataclasses.replace(bad, memflags=bad.memflags[:-1])
    with pytest.raises(ValueError):
        validation.check_samples([broken])


@pytest.mark.parametrize(
    "check, value",
    [
        (validation.check_positive_int, 0),
        (validation.check_positive_int, True),
        (validation.check_positive_int, 1.5),
        (validation.check_fraction, 1.5),
        (validation.check_fraction, float("nan")),
        (validation.check_positive, -1e-3),
    ],
)
def test_scalar_checks_reject(check, value):
    with pytest.raises(ValueError):
        check(value, "x")
