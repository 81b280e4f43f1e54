import json
import math
import random

import pytest

import ttn


def planted_docs(num_docs=200, seed=1):
    rng = random.Random(seed)
    topics = [["bodug", "kamir", "pitop", "dunar"], ["folik", "gavum", "ritam", "vorup"]]
    docs = []
    for d in range(num_docs):
        main = topics[d % 2]
        other = topics[1 - d % 2]
        tokens = [rng.choice(main) if rng.random() < 0.9 else rng.choice(other) for _ in range(40)]
        docs.append((f"doc{d}", tokens, f"class{d % 2}"))
    return docs


def test_normalize_text():
    assert ttn.normalize_text("The Horses, running.", {"the"}) == ["hors", "run"]
    assert ttn.normalize_text("") == []
    assert ttn.porter_stem("caresses") == "caress"
    assert "the" in ttn.default_stopwords()


def test_vocabulary_and_vectorize():
    vocab = ttn.Vocabulary.build([["hors", "run"]], 1, 1.0)
    assert vocab.words == ["hors", "run"]
    bow = ttn.vectorize(["hors", "hors", "run", "zzz"], vocab, "d1")
    assert bow.counts == [(0, 2), (1, 1)]
    with pytest.raises(ttn.EmptyVocabularyError):
        ttn.Vocabulary.build([["a"], ["b"]], 2, 1.0)


def test_lda_roundtrip(tmp_path):
    raw = planted_docs()
    vocab = ttn.Vocabulary.build([t for _, t, _ in raw], 1, 1.0)
    docs = [ttn.vectorize(t, vocab, i, c) for i, t, c in raw]
    model = ttn.train_lda(docs, vocab, num_topics=2, alpha=0.5, iters=50, seed=3)
    again = ttn.train_lda(docs, vocab, num_topics=2, alpha=0.5, iters=50, seed=3)
    assert model.phi == again.phi
    for row in model.phi:
        assert math.isclose(sum(row), 1.0, abs_tol=1e-9)
    theta, prior_only = ttn.infer_topics(model, docs[0])
    assert not prior_only
    assert math.isclose(sum(theta), 1.0, abs_tol=1e-9)
    assert max(theta) > 0.7
    assert 1.0 < ttn.perplexity(model, docs) < len(vocab)
    assert len(ttn.top_words(model, vocab, 0)) == 5

    path = tmp_path / "model.json"
    model.save(str(path))
    assert ttn.TopicModel.load(str(path)).phi == model.phi


def test_embedder_and_projection():
    assert ttn.sigmoid_ce_loss([0.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))
    assert ttn.project_logits([0.0] * 4) == [0.25] * 4
    p = ttn.project_logits([20.0, -20.0])
    assert p[0] == pytest.approx(1.0, abs=1e-6)

    net = ttn.EmbedderNet.glorot([3, 5, 2], seed=1)
    assert net.forward([1.0, 2.0, 3.0]) == net.forward([1.0, 2.0, 3.0])
    features = [[random.Random(i).gauss(0, 1) for _ in range(3)] for i in range(20)]
    targets = [[0.2, 0.8]] * 20
    trained, losses = ttn.train_embedder(net, features, targets, lr=0.1, batch=5, iters=40, seed=2)
    assert len(losses) == 10
    assert losses[-1] < losses[0]
    frozen, _ = ttn.train_embedder(net, features, targets, lr=0.0, iters=10)
    assert frozen == net
    dist = ttn.project_image(trained, features[0])
    assert math.isclose(sum(dist), 1.0, abs_tol=1e-9)
    with pytest.raises(ttn.DimensionError):
        net.forward([1.0])


def test_retrieval_and_metrics():
    assert ttn.kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.14384, abs=1e-5)
    assert ttn.smooth([1.0, 0.0], 0.01) == pytest.approx([101 / 102, 1 / 102])
    index = ttn.TopicIndex(
        [
            ("a", "text", [0.7, 0.3], "x"),
            ("b", "text", [0.2, 0.8], "y"),
            ("c", "image", [0.6, 0.4], "x"),
        ]
    )
    hits = index.query([0.2, 0.8], "text", 12)
    assert [h[0] for h in hits] == ["b", "a"]
    assert hits[0][1] == 0.0
    assert ttn.average_precision([0.9, 0.1], [False, True]) == pytest.approx(0.5)
    assert ttn.mean_average_precision([["x", "x", "y"]], ["x"]) == pytest.approx(1.0)


def test_linear_probe():
    rng = random.Random(4)
    rows = [([rng.gauss(6 * c, 1), rng.gauss(0, 1)], f"c{c}") for _ in range(60) for c in range(2)]
    result = ttn.train_linear_probe(rows[:72], rows[72:96], rows[96:], [0.1], 1)
    assert result["mean_ap"] >= 0.99
    assert set(result["best_hyperparams"].values()) == {0.1}


def test_cli_entry_point(tmp_path, capfd):
    assert ttn.run_cli(["bogus"]) != 0
    index = tmp_path / "index.jsonl"
    index.write_text(
        "\n".join(
            json.dumps({"id": i, "modality": "text", "dist": d})
            for i, d in [("t1", [0.9, 0.1]), ("t2", [0.1, 0.9])]
        )
        + "\n"
    )
    out = tmp_path / "hits.jsonl"
    assert ttn.run_cli(["retrieve", "--index", str(index), "--query-id", "t2", "--out", str(out)]) == 0
    first = json.loads(out.read_text().splitlines()[0])
    assert first["id"] == "t2"
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "x", "modality": "text", "dist": [0.5, 0.5]}\nnot json\n')
    assert ttn.run_cli(["index", "--inputs", str(bad), "--out", str(tmp_path / "i.jsonl")]) == 1
    assert f"{bad}:2" in capfd.readouterr().err
