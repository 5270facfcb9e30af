"""Synthetic data generation and the naive reference implementations."""

import numpy as np
import pytest

from voxelenc.errors import ValidationError
from voxelenc.matio import read_manifest, read_matrix
from voxelenc.rng import PortableRng
from voxelenc.synth import (
    SynthSpec,
    generate,
    naive_ridge,
    naive_two_v_two,
    write_fixture,
)


def test_generate_is_deterministic():
    spec = SynthSpec(n=20, d=4, v=6, noise_sigma=0.3, seed=99)
    x1, y1, w1 = generate(spec)
    x2, y2, w2 = generate(spec)
    np.testing.assert_array_equal(x1, x2)
    np.testing.assert_array_equal(y1, y2)
    np.testing.assert_array_equal(w1, w2)
    x3, _, _ = generate(SynthSpec(n=20, d=4, v=6, noise_sigma=0.3, seed=100))
    assert not np.array_equal(x1, x3)


def test_generate_shapes_and_noiseless_consistency():
    spec = SynthSpec(n=30, d=5, v=7, noise_sigma=0.0, seed=1)
    x, y, w = generate(spec)
    assert x.shape == (30, 5)
    assert y.shape == (30, 7)
    assert w.shape == (5, 7)
    np.testing.assert_array_equal(y, x @ w)


def test_generate_noise_scale():
    clean = generate(SynthSpec(n=400, d=6, v=10, noise_sigma=0.0, seed=12))
    noisy = generate(SynthSpec(n=400, d=6, v=10, noise_sigma=0.5, seed=12))
    np.testing.assert_array_equal(clean[0], noisy[0])
    np.testing.assert_array_equal(clean[2], noisy[2])
    resid = noisy[1] - clean[1]
    assert abs(float(resid.std()) - 0.5) < 0.02


def test_generate_column_means_near_zero():
    x, _, _ = generate(SynthSpec(n=100000, d=1, v=1, seed=0))
    assert abs(float(x.mean())) < 0.02


def test_noiseless_fixture_recoverable_by_ridge():
    from voxelenc.ridge import fit, predict

    spec = SynthSpec(n=120, d=8, v=5, noise_sigma=0.0, seed=3)
    x, y, _ = generate(spec)
    m = fit(x, y, lambda_=1e-8, normalization_mode="none")
    np.testing.assert_allclose(predict(m, x), y, atol=1e-6)


def test_spec_validation():
    with pytest.raises(ValidationError):
        SynthSpec(n=0, d=3, v=3)
    with pytest.raises(ValidationError):
        SynthSpec(n=3, d=3, v=3, noise_sigma=-0.1)


def test_naive_ridge_hand_case():
    x = np.eye(2)
    y = np.array([[2.0], [4.0]])
    np.testing.assert_allclose(naive_ridge(x, y, 1.0), [[1.0], [2.0]], rtol=1e-12)


def test_naive_ridge_shrinks():
    rng = PortableRng(40)
    x = rng.gaussians(20 * 4).reshape(20, 4)
    y = rng.gaussians(20 * 2).reshape(20, 2)
    small = np.linalg.norm(naive_ridge(x, y, 0.01))
    large = np.linalg.norm(naive_ridge(x, y, 100.0))
    assert small > large


def test_naive_ridge_singular_report():
    x = np.zeros((4, 2))
    y = np.zeros((4, 1))
    with pytest.raises(ValidationError, match="singular"):
        naive_ridge(x, y, 0.0)


def test_naive_guards():
    big = np.ones((4097, 2))
    with pytest.raises(ValidationError):
        naive_two_v_two(big, big)
    wide = np.ones((4, 65))
    with pytest.raises(ValidationError):
        naive_ridge(wide, np.ones((4, 1)), 1.0)


def test_naive_two_v_two_hand_case():
    y = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert naive_two_v_two(y, y.copy()) == 1.0
    assert naive_two_v_two(y, y[::-1].copy()) == 0.0


def test_write_fixture_roundtrip(tmp_path):
    spec = SynthSpec(n=24, d=6, v=9, noise_sigma=0.1, seed=5)
    path = write_fixture(
        spec,
        tmp_path,
        subject="sub",
        model="net",
        n_rois=3,
        n_layers=2,
        true_layer=2,
    )
    man = read_manifest(path)
    entry = man.subject("sub")
    assert entry.n_stimuli == 24
    assert [r.name for r in entry.rois] == ["roi1", "roi2", "roi3"]
    assert sum(r.count for r in entry.rois) == 9
    layers = sorted(f.layer for f in entry.features)
    assert layers == ["L1", "L2"]

    x_true, y, _ = generate(spec)
    resp = read_matrix(path.parent / entry.response_path)
    np.testing.assert_array_equal(resp, y)
    feat = read_matrix(path.parent / entry.feature("net", "L2").path)
    np.testing.assert_array_equal(feat, x_true)
    other = read_matrix(path.parent / entry.feature("net", "L1").path)
    assert other.shape == (24, 6)
    assert not np.array_equal(other, x_true)


def test_write_fixture_sub_datasets_and_groups(tmp_path):
    spec = SynthSpec(n=12, d=3, v=4, seed=8)
    path = write_fixture(
        spec,
        tmp_path,
        sub_datasets=[("alpha", 7), ("beta", 5)],
        group_size=3,
    )
    man = read_manifest(path)
    entry = man.subject("synth")
    subs = {s.name: s for s in entry.sub_datasets}
    assert subs["alpha"].indices.tolist() == list(range(7))
    assert subs["beta"].indices.tolist() == list(range(7, 12))
    groups = entry.groups
    assert len(groups) == 12
    assert groups[0] == groups[2] != groups[3]


def test_write_fixture_sub_dataset_counts_must_cover(tmp_path):
    spec = SynthSpec(n=10, d=3, v=4, seed=8)
    with pytest.raises(ValidationError, match="sub-dataset"):
        write_fixture(spec, tmp_path, sub_datasets=[("a", 4), ("b", 4)])


def test_write_fixture_multiple_subjects(tmp_path):
    spec = SynthSpec(n=16, d=4, v=6, seed=2)
    path = write_fixture(spec, tmp_path, subject="sub", n_subjects=3)
    man = read_manifest(path)
    names = [s.name for s in man.subjects]
    assert names == ["sub01", "sub02", "sub03"]
    y1 = read_matrix(path.parent / man.subject("sub01").response_path)
    y2 = read_matrix(path.parent / man.subject("sub02").response_path)
    assert not np.array_equal(y1, y2)
    # first subject uses the base seed directly
    _, y_base, _ = generate(spec)
    np.testing.assert_array_equal(y1, y_base)


def test_write_fixture_true_layer_bounds(tmp_path):
    spec = SynthSpec(n=8, d=2, v=2, seed=1)
    with pytest.raises(ValidationError):
        write_fixture(spec, tmp_path, n_layers=2, true_layer=3)
