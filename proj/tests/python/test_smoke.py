import itertools
import math
from pathlib import Path

import numpy as np
import pytest

import dcond

ROOT = Path(__file__).resolve().parents[2]


def log_rows(rows):
    return np.log(np.asarray(rows, dtype=np.float64))


def test_inventory():
    assert len(dcond.PHONEMES) == 40
    assert dcond.PHONEMES[-1] == "SIL"
    assert dcond.diphone_index("AA", "AA") == 0
    assert dcond.diphone_index("SIL", "AA") == 1560


def test_hope_expansion_round_trip():
    d = dcond.expand_diphones(["HH", "OW", "P"])
    assert d == [("SIL", "HH"), ("HH", "HH"), ("HH", "OW"), ("OW", "OW"), ("OW", "P"), ("P", "P"), ("P", "SIL")]
    assert dcond.collapse_diphones(d) == ["HH", "OW", "P"]
    assert dcond.parse_phonemes("SIL HH OW P SIL.") == ["SIL", "HH", "OW", "P", "SIL"]


def test_ctc_worked_examples():
    loss, grad = dcond.ctc_loss(log_rows([[0.2, 0.5, 0.3]]), [1])
    assert loss == pytest.approx(-math.log(0.5))
    assert grad.shape == (1, 3)
    loss, _ = dcond.ctc_loss(log_rows([[0.5, 0.5], [0.5, 0.5]]), [0])
    assert loss == pytest.approx(-math.log(0.75))
    with pytest.raises(dcond.Unalignable):
        dcond.ctc_loss(log_rows([[0.2, 0.5, 0.3]]), [0, 0])


def test_ctc_matches_bruteforce():
    rng = np.random.default_rng(0)
    for _ in range(50):
        logits = rng.normal(size=(4, 3))
        post = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
        labels = list(rng.integers(0, 2, size=2))
        if labels[0] == labels[1]:
            continue
        loss, _ = dcond.ctc_loss(post, labels)
        assert abs(loss - dcond.ctc_loss_bruteforce(post, labels)) <= 1e-9


def test_ctc_against_numpy_enumeration():
    # Independent enumeration over every frame labeling.
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(4, 3))
    post = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    total = 0.0
    for path in itertools.product(range(3), repeat=4):
        collapsed = [k for i, k in enumerate(path) if i == 0 or k != path[i - 1]]
        if [k for k in collapsed if k != 2] == [0, 1]:
            total += math.exp(sum(post[t, k] for t, k in enumerate(path)))
    loss, _ = dcond.ctc_loss(post, [0, 1])
    assert loss == pytest.approx(-math.log(total), abs=1e-12)


def test_marginalize_and_combined_loss():
    table = dcond.SubclassTable.diphone()
    assert table.num_subclasses == 1600
    uniform = np.full((3, 1601), -math.log(1601))
    m = dcond.marginalize(uniform, table)
    assert m.shape == (3, 41)
    assert np.allclose(np.exp(m).sum(axis=1), 1.0, atol=1e-12)
    rng = np.random.default_rng(2)
    logits = rng.normal(size=(12, 1601))
    post = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    total, mono, sub, grad = dcond.combined_loss(post, ["AA", "B"], table, 0.3)
    assert total == pytest.approx(0.3 * mono + 0.7 * sub)
    assert grad.shape == post.shape
    mono_only, _, _, _ = dcond.combined_loss(post, ["AA", "B"], table, 1.0)
    assert mono_only == pytest.approx(dcond.ctc_loss(dcond.marginalize(post, table), table.phoneme_targets(["AA", "B"]))[0])


def test_metrics():
    assert dcond.edit_distance([1, 2, 3], [1, 3]) == 1
    assert dcond.p_wer(0.19, 0.1) == pytest.approx(0.1)
    assert dcond.p_wer(0.3, 0.3) == 0.0


def test_ngram():
    lm = dcond.NGramModel.train(["the cat sat", "the cat ran"])
    assert lm.prob(["the"], "cat") == pytest.approx(1.0)
    assert lm.prob(["ran"], "sat") == pytest.approx(0.4 / 8)
    assert dcond.NGramModel.deserialize(lm.serialize()).serialize() == lm.serialize()


def test_prompts_match_fixtures():
    assert dcond.system_prompt("finetune") == (ROOT / "prompts/finetune_system_v1.txt").read_text()
    assert dcond.system_prompt("icl") == (ROOT / "prompts/icl_system_v1.txt").read_text()


def test_cli_round_trip(tmp_path):
    code, out, _ = dcond.run_cli(["--version"])
    assert code == 0 and dcond.__version__ in out
    corpus = tmp_path / "corpus.txt"
    corpus.write_text("we know that\nthe cat sat\n")
    code, _, _ = dcond.run_cli(["lm-train", "--corpus", str(corpus), "--order", "3", "--out", str(tmp_path / "lm.txt")])
    assert code == 0
    assert (tmp_path / "lm.txt").read_text().startswith("ngram order=3 backoff=0.4\n")
    code, _, err = dcond.run_cli(["eval", "--hyp", "x", "--ref", "y", "--metric", "cer"])
    assert code == 2 and "--metric" in err
