import numpy as np
import pytest

import monet


def test_full_size_budget_table():
    rows = monet.budget_table(monet.ScaleConfig())
    assert [r["ours"] for r in rows] == [4096, 2048, 8192, 32768, 131072]
    assert [r["naive"] for r in rows] == [4096, 65536, 1048576, 16777216, 268435456]


def test_desk_shapes():
    cfg = monet.ScaleConfig.desk()
    assert (cfg.image_size, cfg.top_scale) == (64, 3)
    assert [cfg.grid_size(s) for s in (3, 2, 1)] == [8, 16, 32]
    assert cfg.channels(1) == 16
    assert monet.ours_budget(cfg, 1) == 8192


def test_exact_overlap_identity():
    cfg = monet.ScaleConfig.desk()
    full = (0, 0, 64, 64)
    assert monet.exact_overlap(cfg, full, full, 3, (2, 5), (2, 5)) == 64
    assert monet.exact_overlap(cfg, full, full, 3, (2, 5), (2, 6)) == 0


def test_losses_and_mcc():
    assert monet.margin_rank_loss(0.9, 0.1, 0.5) == 0.0
    assert monet.margin_rank_loss(0.2, 0.6, 0.3) == pytest.approx(0.7, abs=1e-12)
    assert monet.flexible_margin(48, 16, 8) == 0.5
    assert monet.mcc(10, 10, 0, 0) == 1.0
    assert monet.mcc(0, 5, 0, 3) == 0.0
    with pytest.raises(ValueError):
        monet.flexible_margin(4, 4, 2)


def test_template_is_seeded():
    cfg = monet.ScaleConfig.desk()
    a = monet.generate_template(cfg, 3, 8, 32)
    assert a == monet.generate_template(cfg, 3, 8, 32)
    assert {s["scale"] for s in a["per_scale"]} == {1, 2, 3}


def test_detect_shapes_and_ledger():
    cfg = monet.ScaleConfig.desk()
    model = monet.Model.untrained(cfg, seed=1)
    rng = np.random.default_rng(0)
    a = rng.random((64, 64, 3))
    out = model.detect(a, rng.random((80, 80, 3)))
    assert out["mask1"].shape == (64, 64, 1)
    assert np.all((out["mask1"] > 0) & (out["mask1"] < 1))
    assert out["ledger"] == {1: 8192, 2: 2048, 3: 4096}
    assert out["score_maps"][3].shape == (8, 8, 2)
    with pytest.raises(ValueError):
        model.detect(np.zeros((64, 64)), a)


def test_desk_config_dict():
    cfg = monet.desk_config()
    assert cfg["scales"]["image_size"] == 64
    assert cfg["train"]["pretrain_epochs"] == 25
