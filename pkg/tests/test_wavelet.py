import numpy as np
import pytest

from blindcal.wavelet import WaveletBasis, analyze, sparsify_top_k, synthesize_coeffs
from oracles import wavelet_analysis_matrix


@pytest.mark.parametrize("levels", [1, 2, 3])
def test_fast_transform_matches_assembled_matrix(levels):
    b = WaveletBasis(8, levels)
    W = wavelet_analysis_matrix(8, levels)
    assert np.max(np.abs(W.T @ W - np.eye(64))) < 1e-12
    x = np.random.default_rng(levels).standard_normal(64)
    assert np.allclose(analyze(b, x), W @ x, atol=1e-13)
    assert np.allclose(synthesize_coeffs(b, x), W.T @ x, atol=1e-13)


def test_default_levels_and_validation():
    assert WaveletBasis(64).levels == 5
    assert WaveletBasis(2).levels == 1
    for bad in (6, 1, 0):
        with pytest.raises(ValueError):
            WaveletBasis(bad)
    with pytest.raises(ValueError):
        WaveletBasis(8, 4)
    with pytest.raises(ValueError):
        analyze(WaveletBasis(8), np.zeros(63))


def test_round_trip_and_isometry():
    b = WaveletBasis(64)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(b.n)
    z = rng.standard_normal(b.n)
    assert np.linalg.norm(b.synthesize(b.analyze(x)) - x) / np.linalg.norm(x) < 1e-12
    assert np.linalg.norm(b.analyze(b.synthesize(z)) - z) / np.linalg.norm(z) < 1e-12
    assert abs(np.linalg.norm(b.analyze(x)) - np.linalg.norm(x)) < 1e-12 * np.linalg.norm(x)


def test_constant_image_has_no_detail():
    b = WaveletBasis(8, 3)
    c = b.analyze(np.full(64, 2.0))
    assert np.all(np.abs(c[1:]) < 1e-10)
    assert np.isclose(c[0], np.linalg.norm(np.full(64, 2.0)))


def test_coarsest_atom_is_constant():
    b = WaveletBasis(8, 3)
    e1 = np.zeros(64)
    e1[0] = 1.0
    atom = b.synthesize(e1)
    assert np.allclose(atom, wavelet_analysis_matrix(8, 3).T[:, 0], atol=1e-13)
    assert np.allclose(atom, 1 / 8)


def test_synthesis_is_linear():
    b = WaveletBasis(16)
    rng = np.random.default_rng(3)
    z1, z2 = rng.standard_normal((2, 256))
    assert np.allclose(b.synthesize(z1 + z2), b.synthesize(z1) + b.synthesize(z2),
                       atol=1e-12)


def test_sparsify_top_k():
    b = WaveletBasis(8)
    rng = np.random.default_rng(4)
    img = rng.standard_normal(64)
    full, _ = sparsify_top_k(b, img, 64)
    assert np.allclose(full, img, atol=1e-12)

    sparse, coeffs = sparsify_top_k(b, img, 5)
    assert np.count_nonzero(coeffs) == 5
    discarded = b.analyze(img) - coeffs
    assert abs(np.sum((sparse - img) ** 2) - np.sum(discarded ** 2)) < 1e-12

    errs = [np.linalg.norm(sparsify_top_k(b, img, k)[0] - img) for k in range(65)]
    assert all(a >= b_ - 1e-12 for a, b_ in zip(errs, errs[1:]))
