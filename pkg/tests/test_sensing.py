import json

import numpy as np
import pytest

from blindcal.sensing import Dimensions, SensingEnsemble, backproject_init, derive_seed, \
    draw_ensemble, draw_gains, draw_sparse_signal, instance_from_dict, instance_to_dict, \
    load_instance, loss, make_instance, save_instance, synthesize
from blindcal.geometry import GainFeasibleSet


def explicit(mats):
    mats = np.asarray(mats, dtype=float)
    p, m, n = mats.shape
    return SensingEnsemble(n, m, p, matrices=mats)


@pytest.mark.parametrize("bad", [(0, 4, 1, 1), (4, 0, 1, 1), (4, 4, 0, 1), (4, 4, 1, 5),
                                 (4, 4, 1, 0)])
def test_dimensions_reject_invalid(bad):
    with pytest.raises(ValueError):
        Dimensions(*bad)


def test_draw_ensemble_deterministic_and_shape():
    d = Dimensions(512, 160, 4, 32)
    a = draw_ensemble(d, 7)
    b = draw_ensemble(d, 7)
    assert a.matrices.shape == (4, 160, 512)
    assert np.array_equal(a.matrices, b.matrices)
    assert not np.array_equal(a.matrices, draw_ensemble(d, 8).matrices)


def test_compact_ensemble_matches_dense_bitwise():
    d = Dimensions(20, 12, 3, 2)
    dense = draw_ensemble(d, 99)
    compact = draw_ensemble(d, 99, compact=True)
    assert compact.compact and not dense.compact
    assert np.array_equal(dense.matrices, compact.matrices)
    x = np.random.default_rng(0).standard_normal(20)
    r = np.random.default_rng(1).standard_normal((3, 12))
    assert np.array_equal(dense.forward(x), compact.forward(x))
    assert np.array_equal(dense.adjoint(r), compact.adjoint(r))


def test_ensemble_entry_statistics():
    # 1000 x 1000 = 10^6 entries
    A = draw_ensemble(Dimensions(1000, 1000, 1, 1), 3).matrices
    assert abs(A.mean()) < 0.01
    assert abs(A.var() - 1) < 0.01


def test_sparse_signal_support():
    x = draw_sparse_signal(512, 32, 11)
    assert np.count_nonzero(x) == 32
    dense = draw_sparse_signal(4, 4, 11)
    assert np.count_nonzero(dense) == 4
    with pytest.raises(ValueError):
        draw_sparse_signal(4, 5, 0)


def test_sparse_signal_support_is_uniform():
    counts = np.zeros(8)
    for s in range(10_000):
        counts += draw_sparse_signal(8, 2, s) != 0
    # each index lies in the support with probability k/n = 1/4
    assert np.all(np.abs(counts / 10_000 - 0.25) < 0.02)


def test_gains_rho_zero_and_feasibility():
    assert np.array_equal(draw_gains(10, 0.0, 1), np.ones(10))
    g = draw_gains(128, 0.5, 1)
    assert g.min() >= 0.5 and g.max() <= 1.5
    assert abs(g.sum() - 128) < 1e-12
    assert GainFeasibleSet(128, 0.5).contains(g)
    with pytest.raises(ValueError):
        draw_gains(8, 1.0, 0)


def test_gain_sampler_is_centered():
    first = [draw_gains(16, 0.5, s)[0] for s in range(10_000)]
    assert abs(np.mean(first) - 1.0) < 0.02


def test_synthesize_examples():
    ens = explicit([np.eye(3)])
    x = np.array([1.0, -2.0, 0.5])
    assert np.allclose(synthesize(ens, x, np.ones(3)), x[None])
    ens = explicit([[[1, 2], [3, 4]]])
    assert np.allclose(synthesize(ens, [1, 1], [2, 0.5]), [[6, 3.5]])


def test_synthesize_shape_mismatch():
    ens = explicit([np.eye(3)])
    with pytest.raises(ValueError):
        synthesize(ens, np.ones(2), np.ones(3))
    with pytest.raises(ValueError):
        loss(ens, np.zeros((1, 3)), np.ones(3), np.ones(4))


def test_bilinear_scaling_and_loss():
    inst = make_instance(Dimensions(32, 16, 3, 4), 0.5, 2)
    x, g, ens, y = inst.x, inst.g, inst.ensemble, inst.y
    assert np.allclose(synthesize(ens, 3 * x, g / 3), y, rtol=1e-13, atol=1e-13)
    assert loss(ens, y, x, g) == 0.0 or loss(ens, y, x, g) < 1e-28
    assert loss(ens, y, 2 * x, g / 2) < 1e-28
    m, p = 16, 3
    assert np.isclose(loss(ens, y, np.zeros(32), g), np.sum(y ** 2) / (2 * m * p))
    rng = np.random.default_rng(0)
    assert loss(ens, y, rng.standard_normal(32), 1 + rng.uniform(-.5, .5, 16)) >= 0


def test_backprojection_identity_and_determinism():
    ens = explicit([np.eye(4)])
    x = np.array([1.0, 0, -3, 2])
    y = synthesize(ens, x, np.ones(4))
    # (1/(mp)) A^T y with m = 4
    assert np.allclose(backproject_init(ens, y) * 4, x)
    inst = make_instance(Dimensions(16, 8, 2, 3), 0.5, 1)
    assert np.array_equal(backproject_init(inst.ensemble, inst.y),
                          backproject_init(inst.ensemble, inst.y))


def test_backprojection_unbiased():
    n, m, p = 32, 64, 2
    x = draw_sparse_signal(n, 32, 123)
    g = draw_gains(m, 0.5, 321)
    acc = np.zeros(n)
    N = 1000
    for s in range(N):
        ens = draw_ensemble(Dimensions(n, m, p, 1), derive_seed(77, s))
        acc += backproject_init(ens, synthesize(ens, x, g))
    # E[A^T diag(g) A x] / m = (sum(g)/m) x = x
    assert np.linalg.norm(acc / N - x) / np.linalg.norm(x) < 0.05


def test_derive_seed_is_counter_based():
    assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)
    assert derive_seed(5, 1, 2) != derive_seed(5, 2, 1)
    assert 0 <= derive_seed(0) < 2 ** 64


@pytest.mark.parametrize("compact", [False, True])
def test_instance_round_trip(tmp_path, compact):
    inst = make_instance(Dimensions(24, 10, 3, 4), 0.4, 17)
    path = tmp_path / "inst.json"
    save_instance(inst, path, compact=compact)
    doc = json.loads(path.read_text())
    assert doc["compact"] is compact
    assert ("matrices" in doc) is (not compact)
    back = load_instance(path)
    assert back.dims == inst.dims and back.rho == inst.rho
    assert np.array_equal(back.y, inst.y)
    assert np.array_equal(back.x, inst.x)
    assert np.array_equal(back.g, inst.g)
    assert back.ensemble == inst.ensemble


def test_instance_regeneration_is_bitwise():
    a = make_instance(Dimensions(40, 20, 4, 5), 0.5, 1234)
    b = make_instance(Dimensions(40, 20, 4, 5), 0.5, 1234)
    assert np.array_equal(a.y, b.y)
    assert np.array_equal(a.y, synthesize(a.ensemble, a.x, a.g))
    assert GainFeasibleSet(20, 0.5).contains(a.g)


def test_instance_document_missing_field():
    doc = instance_to_dict(make_instance(Dimensions(8, 4, 1, 2), 0.2, 0))
    del doc["signal"]
    with pytest.raises(ValueError):
        instance_from_dict(doc)
