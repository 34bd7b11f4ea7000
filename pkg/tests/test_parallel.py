import numpy as np
from numpy.testing import assert_array_equal

from emp._parallel import ordered_map, thread_count
from emp.net import DenseNet, TrainConfig, beta_sweep, make_blobs, train
from emp.simplex import verify_proposition


def test_thread_count_default(monkeypatch):
    monkeypatch.delenv("EMP_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("EMP_THREADS", "4")
    assert thread_count() == 4
    monkeypatch.setenv("EMP_THREADS", "junk")
    assert thread_count() == 1
    monkeypatch.setenv("EMP_THREADS", "-2")
    assert thread_count() == 1


def test_ordered_map_preserves_order(monkeypatch):
    monkeypatch.setenv("EMP_THREADS", "4")
    assert ordered_map(lambda x: x * x, range(10)) == [x * x for x in range(10)]


def test_fan_out_matches_sequential(monkeypatch):
    monkeypatch.delenv("EMP_THREADS", raising=False)
    seq = verify_proposition(6, budget=30_000, seed=2)
    monkeypatch.setenv("EMP_THREADS", "4")
    par = verify_proposition(6, budget=30_000, seed=2)
    assert [c.nu for c in seq.checks] == [c.nu for c in par.checks]
    assert [c.brute_min for c in seq.checks] == [c.brute_min for c in par.checks]
    assert seq.all_passed and par.all_passed


def test_sweep_fan_out_deterministic(monkeypatch):
    data = make_blobs(n_samples=200, seed=4)
    result = train(DenseNet.init((2, 6, 2), seed=4), data, TrainConfig(epochs=20, seed=4))
    monkeypatch.delenv("EMP_THREADS", raising=False)
    seq = beta_sweep(result.net, data, [0.5, 1.0, 2.0])
    monkeypatch.setenv("EMP_THREADS", "3")
    par = beta_sweep(result.net, data, [0.5, 1.0, 2.0])
    assert seq == par
    assert_array_equal([r.sparsity for r in seq], [r.sparsity for r in par])
