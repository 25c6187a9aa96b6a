"""Smoke tests for the python surface of the core module."""

import numpy as np
import pytest

import regionlm as rl


def test_matmul_matches_numpy():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 5))
    b = rng.normal(size=(5, 3))
    np.testing.assert_allclose(rl.matmul(a, b), a @ b, atol=1e-12)


def test_conv2d_zero_kernel():
    x = np.ones((2, 5, 5))
    k = np.zeros((3, 2, 3, 3))
    out = rl.conv2d(x, k, stride=1, padding=1)
    assert out.shape == (3, 5, 5)
    assert np.all(out == 0.0)


def test_resize_bilinear_constant():
    img = np.full((3, 4, 4), 0.25)
    out = rl.resize_bilinear(img, 7, 9)
    np.testing.assert_allclose(out, 0.25, atol=1e-12)


def test_mask_round_trips_and_bbox():
    mask = np.zeros((6, 8), dtype=np.uint8)
    mask[2:5, 3:7] = 1
    assert rl.mask_to_bbox(mask) == (3, 2, 6, 4)
    rle = rl.mask_to_rle(mask)
    np.testing.assert_array_equal(rl.mask_from_rle(rle), mask)
    near = rl.resize_mask_nearest(mask, 3, 4)
    assert near.shape == (3, 4)
    assert set(np.unique(near)) <= {0, 1}


def test_mask_to_bbox_rejects_empty():
    with pytest.raises(Exception):
        rl.mask_to_bbox(np.zeros((4, 4), dtype=np.uint8))


def test_plan_tiles_budget():
    plan = rl.plan_tiles(672, 672, tile_side=336, budget=16)
    assert plan["grid_rows"] == 2 and plan["grid_cols"] == 2
    for h, w in [(1, 1), (99, 1234), (4000, 250)]:
        p = rl.plan_tiles(h, w)
        assert p["grid_rows"] * p["grid_cols"] <= 16


def test_roi_align_identity_case():
    fmap = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    out = rl.roi_align(fmap, 0, 0, 2, 2, bins_r=2, bins_c=2, sampling_ratio=1, aligned=True)
    np.testing.assert_allclose(out[0], [[1, 2], [3, 4]])


def test_roi_align_constant_map():
    fmap = np.full((2, 6, 6), 1.5)
    out = rl.roi_align(fmap, 0.5, 0.5, 5.0, 5.5, bins_r=3, bins_c=3)
    np.testing.assert_allclose(out, 1.5, atol=1e-12)


def test_sample_frames():
    assert rl.sample_frames(16) == list(range(16))
    idx = rl.sample_frames(160)
    assert len(idx) == 16 and idx[0] == 0 and idx[-1] == 159


def test_score_mcq_normalization():
    choices = {"A": "red", "B": "blue"}
    assert rl.score_mcq("Answer: A", choices, "A")["score"] == 1
    assert rl.score_mcq("The answer is (b).", choices, "B")["score"] == 1
    flagged = rl.score_mcq("maybe A or B", choices, "B")
    assert flagged["ambiguous"] and flagged["score"] == 0


def test_difficulty_filter():
    kept = rl.difficulty_filter(
        ["m1", "m2"], {"easy": [True, True], "hard": [True, False]}
    )
    assert kept == ["hard"]


def test_model_respond_deterministic():
    cfg = rl.ModelConfig(patch_size=8, embed_dim=16, depth=1, heads=2,
                         tile_side=32, budget=4, roi_bins=2)
    model = rl.Model(cfg, seed=7)
    rng = np.random.default_rng(1)
    image = rng.random((3, 64, 64))
    mask = np.zeros((64, 64), dtype=np.uint8)
    mask[10:30, 12:40] = 1
    a = model.respond(image, [mask], "describe <Prompt0>", max_tokens=6)
    b = model.respond(image, [mask], "describe <Prompt0>", max_tokens=6)
    assert a.text == b.text
    assert a.prefix_tokens == b.prefix_tokens

    # token accounting: 5 views x 16 tokens + 1 prompt x (4 replay + 2
    # delimiters) + instruction tokens ("<Prompt0>" is a single token)
    n = model.sequence_length(image, [mask], "describe <Prompt0>", "roi_replay")
    instruction_tokens = len("describe ") + 1
    assert n == 5 * 16 + (4 + 2) + instruction_tokens


def test_model_rejects_empty_mask():
    cfg = rl.ModelConfig(patch_size=8, embed_dim=16, depth=1, heads=2,
                         tile_side=32, budget=4, roi_bins=2)
    model = rl.Model(cfg, seed=7)
    image = np.zeros((3, 64, 64))
    empty = np.zeros((64, 64), dtype=np.uint8)
    with pytest.raises(Exception):
        model.respond(image, [empty], "describe <Prompt0>")
