import json
import math

import pytest

import sowreap


def test_metrics():
    assert sowreap.bleu("the cat sat".split(), "the cat sat".split()) == pytest.approx(1.0)
    assert sowreap.bleu("the cat sat".split(), "the cat sat down".split()) == pytest.approx(math.exp(1 - 4 / 3))
    assert sowreap.wer("a b c".split(), "a c".split()) == pytest.approx(0.5)
    assert sowreap.rouge("a b c".split(), "a b c d".split(), "1") == pytest.approx(0.75)
    assert sowreap.kendall_tau([2, 1, 3], [1, 2, 3]) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        sowreap.rouge(["a"], ["a"], "3")


def test_permutation_and_positions():
    assert sowreap.apply_permutation(list("abcde"), [4, 5, 1, 2, 3]) == list("deabc")
    with pytest.raises(sowreap.ContractViolation):
        sowreap.apply_permutation(["a"], [1, 2])
    pe = sowreap.sinusoidal_embedding(1, 4)
    assert pe == pytest.approx([math.sin(1), math.cos(1), math.sin(0.01), math.cos(0.01)])


def test_reorder_without_model_is_identity():
    ptb = "(S (NP (DT the) (NN dog)) (VP (VBD ran)))"
    assert sowreap.parse_tree_yield(ptb) == ["the", "dog", "ran"]
    rs = sowreap.reorder(ptb, k=5)
    assert [r["perm"] for r in rs] == [[1, 2, 3]]
    with pytest.raises(sowreap.FormatError):
        sowreap.reorder("(S (NP")


def test_synthesize_is_deterministic():
    a = sowreap.synthesize(5, seed=3)
    assert a == sowreap.synthesize(5, seed=3)
    assert [r["id"] for r in a] == ["s0", "s1", "s2", "s3", "s4"]
    for r in a:
        assert sorted(r["source"].split()) == sorted(r["target"].split())


def test_pipeline_commands(tmp_path):
    cfg = sowreap.default_config()
    cfg["seed"] = 4
    cfg["bpe_merges"] = 40
    cfg["paths"].update(
        corpus=str(tmp_path / "corpus.jsonl"),
        data_dir=str(tmp_path / "data"),
        checkpoint_dir=str(tmp_path / "ck"),
        output_dir=str(tmp_path),
    )
    for key in ("reap_model", "sow_model"):
        cfg[key].update(hidden_size=8, encoder_layers=1, decoder_layers=1, heads=2)
    cfg["training"]["max_epochs"] = 1

    rc, _ = sowreap.synth(cfg, 30)
    assert rc == 0
    rc, log = sowreap.build_data(cfg)
    assert rc == 0, log
    stats = json.loads((tmp_path / "data" / "stats.json").read_text())
    assert stats["reap_records"] > 0
    rc, log = sowreap.train(cfg, "reap")
    assert rc == 0, log
    assert (tmp_path / "ck" / "reap.ckpt").exists()

    with pytest.raises(sowreap.FormatError):
        sowreap.build_data(dict(cfg, unknown_key=1))
