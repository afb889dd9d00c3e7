import numpy as np
import pytest

from conftest import random_model, two_spin
from sparse_dbm.diagnostics import empirical_distribution, enumerate_boltzmann, exact_moments, tvd
from sparse_dbm.graph import SparseGraph, color_dsatur, generate_graph
from sparse_dbm.model import Model, to_binary_model
from sparse_dbm.sampler import (AnnealSchedule, ChainState, SampleBlock, anneal, run_chain, run_mean_trace,
                                run_node_averages, run_statistics, set_workers, sweep_chromatic,
                                sweep_sequential, update_pbit)

E = np.e
P_ALIGNED = 2 * E / (2 * E + 2 / E)          # 0.8808, exact enumeration of the 2-spin model


def colored(model):
    return model.with_graph(color_dsatur(model.graph))


def bernoulli_bound(p, n):
    return 3 * np.sqrt(p * (1 - p) / n)


def test_update_pbit_zero_field_is_fair():
    m = Model.create(SparseGraph.from_edges(1, []))
    st = ChainState.new(m, 0)
    ups = [update_pbit(m, st, 0) for _ in range(20_000)]
    frac = np.mean(np.array(ups) == 1)
    assert abs(frac - 0.5) < bernoulli_bound(0.5, 20_000)


def test_update_pbit_beta_zero_ignores_field():
    m = Model.create(SparseGraph.from_edges(1, []), None, [5.0])
    st = ChainState.new(m, 1, beta=0.0)
    frac = np.mean([update_pbit(m, st, 0) == 1 for _ in range(20_000)])
    assert abs(frac - 0.5) < bernoulli_bound(0.5, 20_000)


def test_update_pbit_saturated_field():
    m = Model.create(SparseGraph.from_edges(1, []), None, [1e6])
    st = ChainState.new(m, 2)
    assert all(update_pbit(m, st, 0) == 1 for _ in range(1000))


def test_update_pbit_probability_matches_tanh():
    h = 0.4
    m = Model.create(SparseGraph.from_edges(1, []), None, [h])
    st = ChainState.new(m, 3)
    n = 50_000
    frac = np.mean([update_pbit(m, st, 0) == 1 for _ in range(n)])
    p = (1 + np.tanh(h)) / 2
    assert abs(frac - p) < bernoulli_bound(p, n)


def test_clamped_update_is_noop():
    m = two_spin()
    st = ChainState.new(m, 0, init="low")
    st.clamp([0], [0])
    assert update_pbit(m, st, 0) == -1
    assert st.update_counts[0] == 0


@pytest.mark.parametrize("engine", ["sequential", "chromatic"])
def test_all_clamped_state_unchanged(engine):
    m = colored(random_model(8, 0))
    st = ChainState.new(m, 5)
    before = st.m.copy()
    st.clamp(np.arange(8), (before == 1).astype(int))
    block = run_chain(m, st, 20, 1, engine)
    assert np.all(block.states == before)


def test_single_free_node_mean_is_zero():
    m = Model.create(SparseGraph.from_edges(1, []))
    st = ChainState.new(m, 9)
    b = run_chain(m, st, 40_000)
    assert abs(b.states.mean()) < 3 / np.sqrt(40_000)


@pytest.mark.parametrize("engine", ["sequential", "chromatic"])
def test_two_spin_alignment(engine):
    m = colored(two_spin(J=1.0))
    st = ChainState.new(m, 4)
    b = run_chain(m, st, 200_000, 1, engine)
    aligned = np.mean(b.states[:, 0] == b.states[:, 1])
    assert abs(aligned - P_ALIGNED) < 0.005


def test_chromatic_rounds_match_colors():
    g = color_dsatur(generate_graph("bipartite_full", n_visible=4, n_hidden=3))
    assert g.n_colors == 2
    m = Model.create(g)
    st = ChainState.new(m, 0)
    sweep_chromatic(m, st)
    assert np.all(st.update_counts == 1)


def test_chromatic_requires_coloring():
    m = two_spin()
    with pytest.raises(ValueError, match="colored"):
        run_chain(m, ChainState.new(m, 0), 1, 1, "chromatic")


def test_run_chain_stride_and_counters():
    m = random_model(10, 1)
    st = ChainState.new(m, 0)
    b = run_chain(m, st, 10, 5)
    assert len(b) == 2 and b.sweeps.tolist() == [5, 10]
    assert st.sweep == 10
    assert int(st.update_counts.sum()) == 10 * 10
    st.clamp([0, 1], [1, 1])
    run_chain(m, st, 3)
    assert int(st.update_counts.sum()) == 100 + 3 * 8


def test_determinism_same_seed():
    m = colored(random_model(12, 2))
    for engine in ("sequential", "chromatic"):
        a = run_chain(m, ChainState.new(m, 77), 50, 1, engine)
        b = run_chain(m, ChainState.new(m, 77), 50, 1, engine)
        assert np.array_equal(a.states, b.states)
    c = run_chain(m, ChainState.new(m, 78), 50, 1, "sequential")
    assert not np.array_equal(a.states, c.states)


def test_chromatic_independent_of_worker_count():
    m = colored(random_model(40, 3, p=0.2))
    a = run_chain(m, ChainState.new(m, 5), 30, 1, "chromatic", workers=1)
    b = run_chain(m, ChainState.new(m, 5), 30, 1, "chromatic", workers=set_workers(0))
    assert np.array_equal(a.states, b.states)


def test_split_runs_equal_one_run():
    m = random_model(10, 4)
    s1 = ChainState.new(m, 3)
    whole = run_chain(m, s1, 40)
    s2 = ChainState.new(m, 3)
    parts = np.concatenate([run_chain(m, s2, 15).states, run_chain(m, s2, 25).states])
    assert np.array_equal(whole.states, parts)
    s3 = ChainState.new(m, 3)
    for _ in range(40):
        sweep_sequential(m, s3)
    assert np.array_equal(s3.m, whole.states[-1])


def test_padded_and_csr_kernels_agree():
    """A complete bipartite graph uses the CSR layout; the same chain on a padded layout matches."""
    g = generate_graph("bipartite_full", n_visible=6, n_hidden=2)
    rng = np.random.default_rng(0)
    m = Model.create(g, rng.normal(0, 1, g.edge_count), rng.normal(0, 1, 8))
    assert not m.neighborhood[-1]
    ptr, idx, Jc, _, _, h, _ = m.neighborhood
    csr = run_chain(m, ChainState.new(m, 1), 30).states
    # force padded rows by rebuilding the neighborhood with a generous rule
    import dataclasses
    n, deg = g.node_count, g.degrees
    width = int(deg.max())
    nb = np.repeat(np.arange(n)[:, None], width, axis=1)
    Jp = np.zeros((n, width))
    slot = np.arange(len(g.indices)) - np.repeat(g.indptr[:-1], deg)
    row = np.repeat(np.arange(n), deg)
    nb[row, slot] = g.indices
    Jp[row, slot] = Jc
    padded = dataclasses.replace(m, _nbr=(ptr, idx, Jc, nb, Jp, h, True))
    assert np.array_equal(run_chain(padded, ChainState.new(m, 1), 30).states, csr)


def test_statistics_match_recorded_block():
    m = random_model(9, 6)
    a = ChainState.new(m, 8)
    pair, node = run_statistics(m, a, 500)
    b = run_chain(m, ChainState.new(m, 8), 500).states.astype(float)
    u, v = m.graph.edges.T
    assert np.allclose(pair, (b[:, u] * b[:, v]).sum(0))
    assert np.allclose(node, b.sum(0))


def test_negative_phase_moments_two_spin():
    m = two_spin(J=1.0)
    pair, node = run_statistics(m, ChainState.new(m, 0), 400_000)
    assert abs(pair[0] / 400_000 - np.tanh(1.0)) < 0.01


def test_node_averages_and_mean_trace():
    m = random_model(8, 7)
    acts = run_node_averages(m, ChainState.new(m, 2), 300, [0, 3])
    b = run_chain(m, ChainState.new(m, 2), 300).states
    assert np.allclose(acts, (b[:, [0, 3]] == 1).mean(0))
    tr = run_mean_trace(m, ChainState.new(m, 2), 300)
    assert np.allclose(tr, b.mean(1))


def test_beta_zero_time_averages_vanish():
    m = colored(random_model(10, 8))
    st = ChainState.new(m, 0, beta=0.0)
    b = run_chain(m, st, 100_000, 1, "chromatic")
    assert np.all(np.abs(b.states.mean(0)) < 3 / np.sqrt(100_000) + 1e-3)


def test_binary_model_sampling():
    m = to_binary_model(random_model(5, 9))
    st = ChainState.new(m, 1)
    assert set(np.unique(st.m)) <= {0, 1}
    b = run_chain(m, st, 200_000)
    assert tvd(empirical_distribution(b.states, 5), enumerate_boltzmann(m)) < 0.02


def test_alphabet_mismatch_rejected():
    m = two_spin()
    b = to_binary_model(m)
    st = ChainState.new(m, 0)
    with pytest.raises(ValueError, match="alphabet"):
        run_chain(b, st, 1)


def test_lut_activation_close_to_exact():
    m = two_spin(J=1.0)
    b = run_chain(m, ChainState.new(m, 4), 200_000, lut=(1 / 64, 8.0))
    aligned = np.mean(b.states[:, 0] == b.states[:, 1])
    assert abs(aligned - P_ALIGNED) < 0.01


def test_anneal_schedule_betas():
    assert len(AnnealSchedule(0, 5, 0.125).betas()) == 41
    assert AnnealSchedule(0, 0, 0.125).betas().tolist() == [0.0]
    assert AnnealSchedule(1, 0, -0.25).betas().tolist() == [1.0, 0.75, 0.5, 0.25, 0.0]
    with pytest.raises(ValueError):
        AnnealSchedule(0, 1, -0.1)


def test_anneal_records_one_state_per_beta():
    m = random_model(10, 10)
    blk = anneal(m, ChainState.new(m, 0), AnnealSchedule(0, 1, 0.25, 10))
    assert len(blk) == 5 and blk.sweeps.tolist() == [10, 20, 30, 40, 50]
    assert blk.betas.tolist() == [0, 0.25, 0.5, 0.75, 1.0]


def test_sample_block_round_trip(tmp_path):
    m = random_model(13, 11)
    blk = anneal(m, ChainState.new(m, 0), AnnealSchedule(0, 1, 0.5, 3))
    blk.save(tmp_path / "b.pbs")
    back = SampleBlock.load(tmp_path / "b.pbs")
    assert np.array_equal(back.states, blk.states) and np.array_equal(back.sweeps, blk.sweeps)
    assert np.array_equal(back.betas, blk.betas) and back.stride == 3


def test_moments_against_enumeration():
    m = colored(random_model(7, 12, jmax=1.0))
    corr, mean = exact_moments(m)
    for engine in ("sequential", "chromatic"):
        pair, node = run_statistics(m, ChainState.new(m, 1), 200_000, engine)
        assert np.max(np.abs(pair / 200_000 - corr)) < 0.02
        assert np.max(np.abs(node / 200_000 - mean)) < 0.02
