import math

import pytest

import th2


def test_crop_plan():
    p = th2.plan_crop(896, 672)
    assert (p["rows"], p["cols"]) == (3, 4)
    assert p["total_tiles"] == 13
    with pytest.raises(th2.InputError):
        th2.plan_crop(0, 10)


def test_token_counts():
    assert th2.frontend_token_count(448, 224, thumbnail=False) == 32
    assert th2.frontend_token_count(224, 224, thumbnail=False) == 16


def test_compress_shape():
    out = th2.compress_random(448, 224, thumbnail=False, seed=3)
    assert len(out["tokens"]) == 32
    assert out["patch_tokens"] == 16 * len(out["tokens"])
    assert all(math.isfinite(x) for row in out["tokens"] for x in row)


def test_spe():
    v = th2.spe_interpolate([1, 0, 0, 0], [0, 1, 0, 0], 0.5)
    assert v[0] == pytest.approx(math.sqrt(2))
    grid = th2.spe_grid(3, 5, dim=16, heads=4, seed=1)
    assert len(grid) == 15 and len(grid[0]) == 16


def test_rearrange_is_permutation():
    perm = th2.rearrange_permutation(2, 3)
    assert sorted(perm) == list(range(2 * 3 * 64))


def test_box_codec():
    ids = th2.encode_box([0, 0, 1, 1])
    assert ids == [0, 3, 3, 2, 1002, 1002, 1]
    assert th2.decode_box(ids) == [0.0, 0.0, 1.0, 1.0]
    assert len(th2.encode_box_digits([0, 0, 1, 1])) == 25
    with pytest.raises(th2.ParseError):
        th2.decode_box([0, 3, 3, 3])
    with pytest.raises(th2.ValidationError):
        th2.encode_box([0.6, 0.1, 0.5, 0.2])


def test_partition_and_bubble():
    plan = th2.partition([1, 1, 1], 1.0, 2, 4)
    assert plan["layers_per_stage"] == [1, 2]
    assert th2.bubble_fraction([1.0, 1.0], 1) == pytest.approx(0.5)
    with pytest.raises(th2.ConfigError):
        th2.partition([1, 1], 0.0, 4, 1)


def test_pack():
    batches = th2.pack([("a", [1] * 2000, 0), ("b", [2] * 2000, 0)])
    assert len(batches) == 1
    assert batches[0]["used"] == 4000
    assert len(batches[0]["tokens"]) == 4096
    with pytest.raises(th2.SampleTooLargeError):
        th2.pack([("big", [1] * 5000, 0)])
