"""Python-surface smoke tests; run with PYTHONPATH holding the built module."""

import math
import sys

import numpy as np

import cosimgen as cg


def test_palette_roundtrip():
    p = cg.build_palette(7)
    assert p.num_classes == 7
    assert p.colors[0] == [0, 0, 0]
    rng = np.random.default_rng(0)
    ids = rng.integers(0, 7, (32, 32)).astype(np.int32)
    assert (cg.decode_mask(cg.encode_mask(ids, p), p) == ids).all()
    assert abs(cg.golden_angle_deg() - 360.0 * (1.0 - 2.0 / (1.0 + math.sqrt(5.0)))) < 1e-6


def test_pack_unpack():
    rng = np.random.default_rng(1)
    image = rng.uniform(-1, 1, (3, 8, 8))
    mask = rng.uniform(-1, 1, (3, 8, 8))
    pair = cg.pack_pair(image, mask)
    assert pair.shape == (6, 8, 8)
    img2, msk2 = cg.unpack_pair(pair)
    assert np.array_equal(img2, image) and np.array_equal(msk2, mask)


def test_forward_process_identity():
    s = cg.make_schedule(50, 1e-3, 0.25)
    assert len(s.alpha_bars) == 50 and s.alpha_bars[0] > s.alpha_bars[-1]
    rng = np.random.default_rng(2)
    x0 = rng.uniform(-1, 1, (6, 8, 8))
    eps = rng.standard_normal((6, 8, 8))
    for t in (0, 20, 49):
        x_t = cg.q_sample(x0, s, t, eps)
        x0_hat = cg.predict_x0(x_t, s, t, eps)
        assert np.max(np.abs(x0_hat - x0)) < 1e-9


def test_fusion_oracles():
    rng = np.random.default_rng(3)
    f = rng.standard_normal((4, 5, 6))
    c_map = rng.standard_normal((1, 5, 6))
    t_map = rng.standard_normal((4, 1, 1))
    assert np.array_equal(cg.spatial_fuse(f, c_map), f + c_map)
    assert np.array_equal(cg.spectral_fuse(f, t_map), f + t_map)


def test_loss_identities():
    r = cg.total_loss(1.0, 0.5, 0.2, 0.1)
    assert r["l_total"] == 1.52
    a = np.zeros(4)
    assert cg.triplet_loss(a, a, a) == 1.0
    assert abs(cg.discriminator_loss_from_scores(0.5, 0.5) - 2.0 * math.log(2.0)) < 1e-12
    assert cg.adversarial_loss_from_score(0.25) == 0.75


def test_metric_oracles():
    a = np.zeros((4, 2))
    b = np.zeros((4, 2)) + np.array([3.0, 4.0])
    assert abs(cg.feature_distance(a, b) - 5.0) < 1e-12
    rng = np.random.default_rng(4)
    x = rng.standard_normal((16, 4))
    assert cg.frechet_distance(x, x) <= 1e-6
    # Unbiased MMD^2 is exactly zero only for constant feature sets; random
    # same-distribution halves land within the 3/sqrt(n) band.
    const = np.ones((8, 4)) * 0.5
    assert cg.kernel_distance(const, const) == 0.0
    assert abs(cg.kernel_distance(x[:8], x[8:])) <= 3.0 / math.sqrt(8.0)


def test_embedding():
    e = cg.hashed_bow_embedding("A photo of circle", 384)
    assert e.shape == (384,)
    assert abs(np.linalg.norm(e) - 1.0) < 1e-12
    assert np.array_equal(e, cg.hashed_bow_embedding("a PHOTO of circle", 384))


def test_shapes_dataset():
    import os
    import tempfile

    with tempfile.TemporaryDirectory() as root:
        palette = cg.synthesize_shapes_dataset(root, 3, 32, 7)
        assert palette.num_classes == 4
        assert sorted(os.listdir(os.path.join(root, "images"))) == sorted(os.listdir(os.path.join(root, "masks")))
        assert len(os.listdir(os.path.join(root, "images"))) == 3
        assert os.path.exists(os.path.join(root, "palette.json"))


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for fn in tests:
        fn()
        print(f"PASS {fn.__name__}")
    print(f"{len(tests)} python smoke tests passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
