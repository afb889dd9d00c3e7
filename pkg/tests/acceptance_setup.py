"""Shared setup for the acceptance suite: the MNIST/100 task and cached training runs.

Training runs are slow (hours on one core), so each run is stored under
``RUN_DIR/<name>`` with its config, per-epoch checkpoint and metrics log. A
run is reused only when its stored config matches the requested one and its
``done`` marker exists; otherwise it is (re)trained. Fill the cache ahead of
time with ``python3 scripts/train_acceptance_models.py``.
"""
from __future__ import annotations

import os
from dataclasses import replace
from pathlib import Path

import numpy as np

from sparse_dbm.data import binarize, load_idx, split_holdout
from sparse_dbm.graph import RoleAssignment, assign_roles, generate_graph
from sparse_dbm.model import load_model
from sparse_dbm.trainer import TrainConfig, class_frequencies, init_model, read_log, train

HERE = Path(__file__).parent
MNIST_IMAGES = HERE / "data" / "mnist-sample-images-idx3-ubyte.gz"
MNIST_LABELS = HERE / "data" / "mnist-sample-labels-idx1-ubyte.gz"
RUN_DIR = Path(os.environ.get("SPARSE_DBM_RUN_DIR", HERE / "acceptance_runs"))
EPOCHS = int(os.environ.get("SPARSE_DBM_EPOCHS", "300"))

N_NODES, DEGREE = 2000, 12
N_VISIBLE, N_CLASSES, N_REPLICAS = 784, 10, 5
PER_CLASS = 10                         # MNIST/100

BASE = TrainConfig(
    epochs=EPOCHS, batch_size=10, n_batches=10, sweeps_per_image=1000, negative_sweeps=10_000,
    learning_rate=0.003, momentum=0.6, eval_every=10, eval_sweeps=1000, train_eval_size=100,
    test_eval_size=100,
)


def mnist():
    return binarize(load_idx(MNIST_IMAGES, MNIST_LABELS))


def task(data_seed: int = 0):
    """MNIST/100 training set and the held-out remainder of the fixture."""
    return split_holdout(mnist(), PER_CLASS, data_seed)


def sparse_network(graph_seed: int = 0):
    g = generate_graph("random_regular", graph_seed, n=N_NODES, d=DEGREE)
    return g, assign_roles(g, N_VISIBLE, N_CLASSES, N_REPLICAS, permutation_seed=graph_seed)


def rbm_network():
    """Complete bipartite RBM with as many couplings as the sparse network (visible side = pixels + labels)."""
    n_vis = N_VISIBLE + N_CLASSES * N_REPLICAS
    n_hidden = int(round(N_NODES * DEGREE / 2 / n_vis))
    g = generate_graph("bipartite_full", n_visible=n_vis, n_hidden=n_hidden)
    return g, assign_roles(g, N_VISIBLE, N_CLASSES, N_REPLICAS, randomize=False)


RUNS = {
    # criterion 4 (and the reference for 5, 6, 8)
    "cd1e4_seed0": dict(),
    # criterion 5: CD-10^2 vs CD-10^4 on two seeds
    "cd1e2_seed0": dict(sweeps_per_image=10, negative_sweeps=100),
    "cd1e4_seed1": dict(master_seed=1),
    "cd1e2_seed1": dict(sweeps_per_image=10, negative_sweeps=100, master_seed=1),
    # criterion 6: fixed-point weights
    "s63_seed0": dict(precision="s{6}{3}"),
    "s32_seed0": dict(precision="s{3}{2}"),
    # criterion 8: iso-parameter RBM
    "rbm_seed0": dict(),
}


def run_config(name: str) -> TrainConfig:
    return replace(BASE, **RUNS[name])


def network_for(name: str):
    return rbm_network() if name.startswith("rbm") else sparse_network()


def trained_run(name: str, verbose: bool = False):
    """``(model, roles, log)`` for a named run, training it if the cache is missing or stale."""
    cfg = run_config(name)
    out = RUN_DIR / name
    done = out / "done"
    if done.exists() and (out / "trainer.cfg").read_text() == cfg.to_text():
        model = load_model(out / "checkpoint.pbm")
        return model, RoleAssignment.load(out / "roles.txt"), read_log(out / "metrics.tsv")
    if done.exists():
        done.unlink()
    train_set, test_set = task()
    g, roles = network_for(name)
    out.mkdir(parents=True, exist_ok=True)
    roles.save(out / "roles.txt")
    init_seed = cfg.master_seed
    model = init_model(g, roles, train_set.stats, class_frequencies(train_set.labels, N_CLASSES), init_seed)
    callbacks = [lambda r, m: print(f"[{name}] {r}", flush=True)] if verbose else None
    result = train(model, roles, train_set, cfg, test_set=test_set, callbacks=callbacks, out_dir=out)
    done.write_text("ok\n")
    return result.model, roles, result.log


def binary_images(ds):
    return (ds.images > 0.5).astype(np.int8)
