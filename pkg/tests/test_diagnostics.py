import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_model, two_spin
from sparse_dbm.diagnostics import (all_states, batch_means_stderr, curves_agree, empirical_distribution,
                                    enumerate_boltzmann, exact_moments, magnetization_relaxation,
                                    state_index, throughput_bench, tvd, write_table)
from sparse_dbm.graph import SparseGraph, color_dsatur
from sparse_dbm.model import Model


def test_single_spin_uniform():
    m = Model.create(SparseGraph.from_edges(1, []))
    assert np.allclose(enumerate_boltzmann(m).probabilities, [0.5, 0.5])


def test_two_spin_probabilities():
    d = enumerate_boltzmann(two_spin(J=1.0))
    p_aligned = np.e / (2 * np.e + 2 / np.e)
    assert np.isclose(p_aligned, 0.4404, atol=1e-4)
    # index 0 = (-1,-1), 3 = (+1,+1)
    assert np.allclose(d.probabilities[[0, 3]], p_aligned)
    assert np.isclose(d.Z, 2 * np.e + 2 / np.e)


def test_beta_zero_uniform_and_normalized():
    m = random_model(8, 0)
    assert np.allclose(enumerate_boltzmann(m, 0.0).probabilities, 1 / 256)
    assert abs(enumerate_boltzmann(m).probabilities.sum() - 1) < 1e-12


def test_invariant_under_energy_shift():
    m = random_model(6, 1)
    # a constant field flip symmetry: J -> J, h -> h gives the same law when energies shift uniformly;
    # emulate a constant shift by comparing log-weights directly
    d = enumerate_boltzmann(m)
    from sparse_dbm.model import energy
    E = energy(m, d.states())
    w = np.exp(-(E + 123.0))
    assert np.allclose(w / w.sum(), d.probabilities, atol=1e-12)


def test_enumeration_cap():
    m = Model.create(SparseGraph.from_edges(21, []))
    with pytest.raises(ValueError):
        enumerate_boltzmann(m)


def test_state_index_inverse():
    s = all_states(5)
    assert np.array_equal(state_index(s), np.arange(32))


def test_tvd_basics():
    p = np.array([0.2, 0.3, 0.5])
    assert tvd(p, p) == 0.0
    assert tvd([1, 0, 0], [0, 0, 1]) == 1.0
    with pytest.raises(ValueError):
        tvd([1.0], [0.5, 0.5])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_tvd_symmetric_and_triangle(seed):
    rng = np.random.default_rng(seed)
    p, q, r = rng.dirichlet(np.ones(8), size=3)
    assert np.isclose(tvd(p, q), tvd(q, p))
    assert tvd(p, r) <= tvd(p, q) + tvd(q, r) + 1e-12
    assert 0 <= tvd(p, q) <= 1


def test_empirical_distribution():
    s = np.array([[-1, -1], [1, 1], [1, 1], [1, -1]])
    assert np.allclose(empirical_distribution(s), [0.25, 0.25, 0, 0.5])


def test_exact_moments_two_spin():
    corr, mean = exact_moments(two_spin(J=1.0))
    assert np.isclose(corr[0], np.tanh(1.0))
    assert np.allclose(mean, 0)


def test_batch_means_iid():
    x = np.random.default_rng(0).normal(size=100_000)
    se = batch_means_stderr(x)
    assert 0.5 / np.sqrt(1e5) < se < 2 / np.sqrt(1e5)


def test_relaxation_zero_model_decays():
    m = color_dsatur(SparseGraph.from_edges(6, [(0, 1), (2, 3)]))
    model = Model.create(m)
    curves = magnetization_relaxation(model, repetitions=50, sweeps=20)
    for c in curves.values():
        assert abs(c.mean[0]) < 0.2 and np.all(np.abs(c.mean[2:]) < 5 * c.stderr[2:] + 0.05)
    assert curves_agree(curves["sequential"], curves["chromatic"]).mean() > 0.9


def test_throughput_counts_are_exact():
    model = Model.create(color_dsatur(SparseGraph.from_edges(50, [(i, i + 1) for i in range(49)])))
    (r,) = throughput_bench([model], "chromatic", duration=0.2, repetitions=2)
    assert r.attempted_flips % 50 == 0 and r.attempted_flips > 0
    assert r.flips_per_ns > 0 and r.graph_size == 50


def test_write_table(tmp_path):
    write_table(tmp_path / "t.tsv", ["a", "b"], [(1, np.float64(0.5))], gnuplot=True)
    assert (tmp_path / "t.tsv").read_text() == "# a\tb\n1\t0.5\n"
