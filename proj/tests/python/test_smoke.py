import json
import math

import pytest

import camo


def test_version():
    assert camo.__version__ == "0.1.0"


def test_auroc_oracle():
    pos = [0.9, 0.8, 0.8, 0.6]
    neg = [0.7, 0.5, 0.5, 0.4, 0.3]
    # hand count: 20 pairs, 16 wins + 0 ties... recompute against the
    # quadratic definition right here
    wins = ties = 0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1
            elif p == n:
                ties += 1
    expect = (wins + 0.5 * ties) / (len(pos) * len(neg))
    assert camo.auroc(pos, neg) == expect
    assert camo.auroc([1.0, 1.0], [0.0]) == 1.0
    assert camo.auroc([0.5], [0.5]) == 0.5


def test_calibrate_threshold():
    neg = [i / 100.0 for i in range(100)]
    tau = camo.calibrate_threshold(neg, 0.01)
    flagged = sum(1 for s in neg if s > tau)
    assert flagged == 1
    with pytest.raises(ValueError):
        camo.calibrate_threshold([0.1, 0.2], 0.01)


def test_pearson():
    r, p, n = camo.pearson([1, 2, 3, 4, 5, 6], [2, 1, 4, 3, 7, 5])
    assert n == 6
    assert math.isclose(r, 0.7917946548886297, rel_tol=0, abs_tol=1e-14)
    assert math.isclose(p, 0.06051140336275659, rel_tol=1e-12)


def test_format_double_round_trip():
    for v in [0.1, 1.0 / 3.0, 12345.6789, 1e-300]:
        assert float(camo.format_double(v)) == v


def test_config_round_trip(tmp_path):
    cfg_path = tmp_path / "c.json"
    base = {
        "model": {
            "vocab_size": 512,
            "d_model": 16,
            "n_layers": 2,
            "n_heads": 2,
            "d_ff": 32,
            "max_seq_len": 128,
            "seed": 0,
        },
        "corpus": {"n_pretrain_docs": 60, "n_finetune_examples": 48, "n_probe_per_class": 16},
        "lm": {"epochs": 1, "warmup_steps": 4, "val_fraction": 0.1, "require_beat_unigram": False},
        "probes": {"layer": 1, "quality_auroc": 0.55},
        "finetune": {"epochs": 1, "warmup_steps": 2, "completion_tokens": 6},
        "eval": {
            "probe_layer": 1,
            "n_monitor_train": 12,
            "admission_auroc": 0.0,
            "n_eval_pos": 30,
            "n_eval_neg": 30,
            "n_selectivity": 6,
            "n_capability": 12,
            "fpr_budget": 0.2,
            "n_audit": 30,
            "bootstrap_B": 80,
        },
        "analysis": {
            "probe_layer": 1,
            "n_pairs": 6,
            "n_reference": 8,
            "n_sweep": 6,
            "bootstrap_B": 60,
        },
        "out_root": "runs",
    }
    cfg_path.write_text(json.dumps(base))
    cfg = camo.ExperimentConfig.load_file(str(cfg_path))
    cfg.validate()
    again = camo.ExperimentConfig.from_json(cfg.to_json())
    assert again.config_hash() == cfg.config_hash()

    # out_root never reaches the hash
    cfg.out_root = "elsewhere"
    assert cfg.config_hash() == again.config_hash()

    # unknown keys rejected
    bad = dict(base)
    bad["extra"] = 1
    with pytest.raises(ValueError):
        camo.ExperimentConfig.from_json(json.dumps(bad))


def test_gradcheck_smoke():
    rep = camo.gradcheck()
    assert rep["pass"]
    assert rep["worst"] < 1e-4
    assert len(rep["entries"]) >= 20
