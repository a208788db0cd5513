"""Smoke test for the citeshield Python bindings.

Build and install the extension first:

    pip install --no-build-isolation ./crates/python

then run ``python python/smoke_test.py``.
"""

import math
import tempfile

import citeshield_py as cs

SMALL = dict(hidden=8, heads=2, head_hidden=8, disc_hidden=4, max_epochs=3, warmup_epochs=1, batch_size=64)


def check_metrics():
    assert cs.male([0.0], [0.0]) == 0.0
    assert abs(cs.rmsle([math.e - 1.0], [0.0]) - 1.0) < 1e-15
    assert cs.ndcg_at_k([3.0, 1.0, 0.0], [0.9, 0.5, 0.1], 3) == 1.0
    assert cs.spearman([1.0, 2.0, 3.0], [10.0, 20.0, 30.0]) == 1.0
    w = cs.update_group_weights([0.5, 0.5], [1.0, 0.5])
    assert abs(sum(w) - 1.0) < 1e-12 and w[0] > w[1]
    try:
        cs.male([1.0], [])
    except ValueError:
        pass
    else:
        raise AssertionError("length mismatch must raise")


def check_pipeline():
    corpus = cs.Corpus.generate(n_papers=300, n_authors=180, n_venues=10, seed=3)
    assert len(corpus) == 300
    assert len(corpus.features()) == 300 and "v" in corpus.features()[0]
    data = cs.Dataset(corpus, **SMALL)
    assert len(data.indices("test")) > 0

    model = cs.Model.fit(data, seed=1)
    history = model.history()
    assert history[-1]["epoch"] == "best"
    report = model.evaluate(data, "val")
    assert report["male"] == history[-1]["val_male"]

    pred = model.predict(data, "test")
    assert len(pred["u"]) == len(pred["e_hat"]) == len(data.indices("test"))

    rows, summary = model.whatif(data, "test", ["R"])
    assert all(r["delta"] == r["u_cf"] - r["u"] for r in rows)
    assert summary["factors"][0]["factor"] == "R"

    with tempfile.TemporaryDirectory() as d:
        model.save(d)
        again = cs.Model.load(d)
        assert again.predict(data, "test") == pred
        assert cs.main(["eval", "--data", d, "--model", d, "--out", d]) == 1  # no corpus there

    try:
        cs.Dataset(corpus, no_such_key=1)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown key must raise")


if __name__ == "__main__":
    check_metrics()
    check_pipeline()
    print("python smoke test ok")
