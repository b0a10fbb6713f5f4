import math

import numpy as np
import pytest

from saner_lab import (
    Batch, LabeledDataset, ModelSpec, NoiseSpec, OptimConfig, OptimizerState, apply_noise,
    apply_update, backward, init_params, inject_asymmetric, inject_instance_proxy,
    inject_symmetric, load_dataset, make_gaussian_blobs, save_dataset,
)
from saner_lab.model import predict
from saner_lab.noise import DatasetFormatError, instance_flip_probabilities


@pytest.fixture(scope="module")
def blobs10k():
    return make_gaussian_blobs(10_000, 10, 8, 4.0, seed=3)


def test_blobs_basic_shape():
    ds = make_gaussian_blobs(103, 4, 5, 3.0, seed=0)
    assert ds.features.shape == (103, 5)
    counts = np.bincount(ds.true_labels, minlength=4)
    assert counts.max() - counts.min() <= 1
    assert not ds.is_noisy.any()
    assert np.array_equal(ds.true_labels, ds.observed_labels)


def test_blobs_deterministic():
    assert make_gaussian_blobs(50, 3, 4, 2.0, 9).equals(make_gaussian_blobs(50, 3, 4, 2.0, 9))


def test_blobs_center_separation():
    ds = make_gaussian_blobs(20_000, 5, 6, 7.0, seed=1)
    centers = np.stack([ds.features[ds.true_labels == c].mean(axis=0) for c in range(5)])
    gaps = [np.linalg.norm(a - b) for i, a in enumerate(centers) for b in centers[i + 1:]]
    assert min(gaps) > 7.0 - 0.2


def test_blobs_infeasible_packing():
    # at most six points on a circle can sit a radius apart
    with pytest.raises(ValueError):
        make_gaussian_blobs(70, 7, 2, 1.0, seed=0, max_tries=2000)


@pytest.mark.parametrize("args", [(1, 2, 2, 1.0), (10, 2, 1, 1.0), (10, 2, 2, 0.0)])
def test_blobs_bad_arguments(args):
    with pytest.raises(ValueError):
        make_gaussian_blobs(*args, seed=0)


def test_blobs_linearly_learnable():
    ds = make_gaussian_blobs(1000, 2, 5, 10.0, seed=4)
    spec = ModelSpec((5, 2))
    cfg = OptimConfig(eta=0.1, momentum=0.0, weight_decay=0.0, mode="sgd")
    params = init_params(spec, 0)
    state = OptimizerState.zeros(spec.num_params)
    rng = np.random.default_rng(0)
    for _ in range(5):
        order = rng.permutation(len(ds))
        for start in range(0, len(ds), 50):
            idx = order[start:start + 50]
            g = backward(params, Batch(ds.features[idx], ds.observed_labels[idx]), spec)
            params = apply_update(params, g, state, cfg)
    assert np.mean(predict(params, ds.features, spec) == ds.true_labels) >= 0.99


def test_symmetric_rate_zero(blobs10k):
    assert inject_symmetric(blobs10k, 0.0, 1).equals(blobs10k)


def test_symmetric_rate_one(blobs10k):
    noisy = inject_symmetric(blobs10k, 1.0, 1)
    assert noisy.is_noisy.all()
    assert np.all(noisy.observed_labels != noisy.true_labels)


def test_symmetric_binomial_count(blobs10k):
    noisy = inject_symmetric(blobs10k, 0.25, 5)
    n = len(blobs10k)
    sd = math.sqrt(n * 0.25 * 0.75)
    assert abs(noisy.is_noisy.sum() - n * 0.25) < 4 * sd


def test_symmetric_targets_uniform(blobs10k):
    noisy = inject_symmetric(blobs10k, 1.0, 2)
    offsets = (noisy.observed_labels - noisy.true_labels) % 10
    counts = np.bincount(offsets, minlength=10)
    assert counts[0] == 0
    expected = len(blobs10k) / 9
    sd = math.sqrt(len(blobs10k) * (1 / 9) * (8 / 9))
    assert np.all(np.abs(counts[1:] - expected) < 4 * sd)


def test_injection_preserves_features_and_truth(blobs10k):
    for spec in (NoiseSpec("symmetric", 0.3, 1), NoiseSpec("asymmetric_circular", 0.3, 1),
                 NoiseSpec("asymmetric_pairmap", 0.3, 1, {1: 2}), NoiseSpec("instance_proxy", 0.3, 1)):
        noisy = apply_noise(blobs10k, spec)
        assert np.array_equal(noisy.features, blobs10k.features)
        assert np.array_equal(noisy.true_labels, blobs10k.true_labels)
        assert np.array_equal(noisy.is_noisy, noisy.observed_labels != noisy.true_labels)
        assert apply_noise(blobs10k, spec).equals(noisy)


def test_rate_out_of_range(blobs10k):
    with pytest.raises(ValueError):
        inject_symmetric(blobs10k, 1.5, 0)
    with pytest.raises(ValueError):
        inject_instance_proxy(blobs10k, -0.1, 0)


def test_noise_requires_clean_input(blobs10k):
    noisy = inject_symmetric(blobs10k, 0.2, 0)
    with pytest.raises(ValueError):
        inject_symmetric(noisy, 0.2, 1)


def test_circular_forced():
    ds = LabeledDataset(np.zeros((3, 2)), [0, 1, 2], [0, 1, 2], 3)
    out = inject_asymmetric(ds, 1.0, 0, NoiseSpec("asymmetric_circular", 1.0))
    assert out.observed_labels.tolist() == [1, 2, 0]


def test_pairmap_eligibility():
    ds = LabeledDataset(np.zeros((6, 2)), [0, 1, 2, 0, 1, 2], [0, 1, 2, 0, 1, 2], 3)
    out = inject_asymmetric(ds, 1.0, 0, NoiseSpec("asymmetric_pairmap", 1.0, pair_map={0: 1}))
    assert out.observed_labels.tolist() == [1, 1, 2, 1, 1, 2]
    assert out.is_noisy.tolist() == [True, False, False, True, False, False]


def test_pairmap_requires_map():
    with pytest.raises(ValueError):
        NoiseSpec("asymmetric_pairmap", 0.5)
    with pytest.raises(ValueError):
        NoiseSpec("asymmetric_pairmap", 0.5, pair_map={3: 3})
    with pytest.raises(ValueError):
        NoiseSpec("symmetric", 0.5, pair_map={1: 2})


def test_circular_per_class_fraction(blobs10k):
    out = inject_asymmetric(blobs10k, 0.5, 8, NoiseSpec("asymmetric_circular", 0.5))
    for c in range(10):
        members = blobs10k.true_labels == c
        n = members.sum()
        assert abs(out.is_noisy[members].mean() - 0.5) < 4 * math.sqrt(0.25 / n)


def test_instance_proxy_rate_zero(blobs10k):
    assert inject_instance_proxy(blobs10k, 0.0, 4).equals(blobs10k)


def test_instance_proxy_equal_features_equal_probability():
    x = np.tile(np.array([[0.3, -1.0, 2.0]]), (4, 1))
    q = instance_flip_probabilities(x, 0.4, 11)
    assert np.all(q == q[0])


def test_instance_proxy_probabilities_vary_and_clip(blobs10k):
    q = instance_flip_probabilities(blobs10k.features, 0.9, 2)
    assert q.max() <= 1.0
    assert q.std() > 0


def test_instance_proxy_realized_rate(blobs10k):
    out = inject_instance_proxy(blobs10k, 0.25, 6)
    assert abs(out.noise_rate - 0.25) <= 0.03
    assert np.all(out.observed_labels[out.is_noisy] != out.true_labels[out.is_noisy])


def test_roundtrip(tmp_path, blobs10k):
    ds = inject_symmetric(blobs10k.subset(slice(0, 300)), 0.3, 2)
    save_dataset(ds, tmp_path / "d.txt")
    back = load_dataset(tmp_path / "d.txt")
    assert back.equals(ds)
    assert np.array_equal(back.is_noisy, ds.is_noisy)


def test_file_header(tmp_path):
    ds = make_gaussian_blobs(4, 2, 3, 2.0, seed=0)
    save_dataset(ds, tmp_path / "d.txt")
    raw = (tmp_path / "d.txt").read_bytes()
    assert raw.startswith(b"saner-ds v1 n=4 d=3 c=2\n")
    assert b"\r" not in raw


def test_truncated_file(tmp_path):
    ds = make_gaussian_blobs(10, 2, 3, 2.0, seed=0)
    save_dataset(ds, tmp_path / "d.txt")
    text = (tmp_path / "d.txt").read_text()
    (tmp_path / "t.txt").write_text(text[: len(text) // 2])
    with pytest.raises(DatasetFormatError):
        load_dataset(tmp_path / "t.txt")


@pytest.mark.parametrize("body,line", [
    ("saner-ds v2 n=1 d=2 c=2\n0,0,1.0,2.0\n", 1),
    ("saner-ds v1 n=1 d=2 c=2\n0,0,1.0\n", 2),
    ("saner-ds v1 n=1 d=2 c=2\n0,5,1.0,2.0\n", 2),
    ("saner-ds v1 n=2 d=2 c=2\n0,1,1.0,x\n1,1,0.0,0.0\n", 2),
])
def test_malformed_reports_line(tmp_path, body, line):
    (tmp_path / "bad.txt").write_text(body)
    with pytest.raises(DatasetFormatError, match=f"line {line}"):
        load_dataset(tmp_path / "bad.txt")


def test_external_labels_reconstruct_flags(tmp_path):
    (tmp_path / "real.txt").write_text("saner-ds v1 n=3 d=2 c=3\n0,0,0.5,1.5\n1,2,0.0,0.0\n2,2,1.0,1.0\n")
    ds = load_dataset(tmp_path / "real.txt")
    assert ds.is_noisy.tolist() == [False, True, False]
