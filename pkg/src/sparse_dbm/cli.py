"""Command-line entry point: ``sparse-dbm <command> [flags]``.

Every command reads a flat ``key=value`` config (``--config``) with flag
overrides (``--set key=value`` or the dedicated flags), writes the effective
config next to its outputs and exits non-zero with a one-line diagnostic on
failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diagnostics, tasks
from .data import DataError, Dataset, binarize, load_idx, split_holdout
from .graph import (GraphError, RoleAssignment, assign_roles, color_dsatur, generate_graph,
                    load_edge_list, save_edge_list)
from .model import Model, PrecisionSpec, load_model
from .sampler import CHROMATIC, AnnealSchedule, ChainState, run_chain, set_workers
from .trainer import TrainConfig, class_frequencies, init_model, parse_key_values, train

COMMANDS = ("train", "classify", "generate", "complete", "bench", "mix", "validate")
WORKERS_ENV = "SPARSE_DBM_WORKERS"

EXIT_CONFIG, EXIT_IO, EXIT_DIMENSION, EXIT_RESOURCE = 2, 3, 4, 5


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of every command. Unused keys are ignored by a command."""

    # graph source: an edge-list file, or a generated topology
    graph: str = ""
    graph_kind: str = "random_regular"
    graph_nodes: int = 2000
    graph_degree: int = 12
    graph_rows: int = 28
    graph_cols: int = 28
    graph_hidden: int = 14
    graph_seed: int = 0
    # roles
    roles: str = ""
    n_visible: int = 784
    n_classes: int = 10
    n_replicas: int = 5
    role_seed: int = 0
    randomize_roles: int = 1
    # data
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    per_class: int = 10
    data_seed: int = 0
    threshold: float = 0.5
    # model
    model: str = ""
    init_seed: int = 0
    # annealing
    beta_start: float = 0.0
    beta_end: float = 5.0
    beta_step: float = 0.125
    sweeps_per_step: int = 100
    # inference
    class_id: int = 0
    n_samples: int = 10
    image_index: int = 0
    known_rows: int = 14
    classify_count: int = 0
    # bench / mix / validate
    bench_sizes: str = "1000,2000,4000"
    bench_duration: float = 2.0
    bench_repetitions: int = 5
    cd_values: str = "100,10000"
    validate_nodes: int = 10
    validate_sweeps: int = 1000000
    validate_tolerance: float = 0.02
    # shared
    engine: str = "sequential"
    workers: int = 0
    seed: int = 0
    out: str = "run"
    # trainer (prefixed keys are not needed: names match TrainConfig)
    epochs: int = 100
    batch_size: int = 10
    n_batches: int = 10
    sweeps_per_image: int = 1000
    negative_sweeps: int = 0
    learning_rate: float = 0.003
    momentum: float = 0.6
    weight_decay: float = 0.0
    cd_mode: str = "CD"
    beta: float = 1.0
    precision: str = "float64"
    eval_every: int = 10
    eval_sweeps: int = 1000
    train_eval_size: int = 100
    test_eval_size: int = 100

    @classmethod
    def from_mapping(cls, items: dict, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kw = {}
        for key, raw in items.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                kw[key] = {"int": int, "float": float}.get(types[key], str)(raw)
            except ValueError:
                raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {types[key]}") from None
        return dataclasses.replace(base or cls(), **kw)

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in dataclasses.fields(self))

    def train_config(self) -> TrainConfig:
        names = {f.name for f in dataclasses.fields(TrainConfig)}
        kw = {k: getattr(self, k) for k in names if k not in ("master_seed", "negative_sweeps")}
        return TrainConfig(master_seed=self.seed, negative_sweeps=self.negative_sweeps or None, **kw)

    def schedule(self) -> AnnealSchedule:
        return AnnealSchedule(self.beta_start, self.beta_end, self.beta_step, self.sweeps_per_step)


class ConfigError(ValueError):
    pass


class DimensionError(ValueError):
    pass


# --------------------------------------------------------------------------- builders

def build_graph(cfg: ExperimentConfig):
    if cfg.graph:
        g = load_edge_list(cfg.graph)
    elif cfg.graph_kind == "random_regular":
        g = generate_graph("random_regular", cfg.graph_seed, n=cfg.graph_nodes, d=cfg.graph_degree)
    elif cfg.graph_kind == "grid2d":
        g = generate_graph("grid2d", cfg.graph_seed, rows=cfg.graph_rows, cols=cfg.graph_cols)
    elif cfg.graph_kind == "bipartite_full":
        g = generate_graph("bipartite_full", cfg.graph_seed,
                           n_visible=cfg.n_visible + cfg.n_classes * cfg.n_replicas, n_hidden=cfg.graph_hidden)
    else:
        raise ConfigError(f"unknown graph_kind {cfg.graph_kind!r}")
    return color_dsatur(g) if cfg.engine == CHROMATIC else g


def build_roles(cfg: ExperimentConfig, g) -> RoleAssignment:
    if cfg.roles:
        roles = RoleAssignment.load(cfg.roles)
        if roles.node_count != g.node_count:
            raise DimensionError(f"roles cover {roles.node_count} nodes, graph has {g.node_count}")
        return roles
    return assign_roles(g, cfg.n_visible, cfg.n_classes, cfg.n_replicas, cfg.role_seed, bool(cfg.randomize_roles))


def load_data(cfg: ExperimentConfig, split: str = "train") -> Dataset:
    images, labels = (cfg.train_images, cfg.train_labels) if split == "train" else (cfg.test_images, cfg.test_labels)
    if not images or not labels:
        raise ConfigError(f"{split}_images and {split}_labels are required")
    return binarize(load_idx(images, labels, split), cfg.threshold)


def training_sets(cfg: ExperimentConfig):
    """Training subset and held-out set (explicit test files win over the remainder)."""
    ds = load_data(cfg, "train")
    if cfg.per_class > 0:
        train_set, rest = split_holdout(ds, cfg.per_class, cfg.data_seed)
    else:
        train_set, rest = ds, None
    test = load_data(cfg, "test") if cfg.test_images else rest
    return train_set, test


def load_trained(cfg: ExperimentConfig):
    out = Path(cfg.out)
    model_path = Path(cfg.model) if cfg.model else out / "checkpoint.pbm"
    roles_path = Path(cfg.roles) if cfg.roles else out / "roles.txt"
    model = load_model(model_path)
    if cfg.engine == CHROMATIC:
        model = model.with_graph(color_dsatur(model.graph))
    roles = RoleAssignment.load(roles_path)
    if roles.node_count != model.graph.node_count:
        raise DimensionError(f"roles cover {roles.node_count} nodes, model has {model.graph.node_count}")
    return model, roles


# --------------------------------------------------------------------------- commands

def cmd_train(cfg: ExperimentConfig, out: Path) -> int:
    train_set, test = training_sets(cfg)
    g = build_graph(cfg)
    roles = build_roles(cfg, g)
    if train_set.pixels != len(roles.visible_ids):
        raise DimensionError(f"images have {train_set.pixels} pixels, n_visible is {len(roles.visible_ids)}")
    save_edge_list(g, out / "graph.edges")
    roles.save(out / "roles.txt")
    model = init_model(g, roles, train_set.stats, class_frequencies(train_set.labels, roles.n_classes),
                       cfg.init_seed, cfg.precision)
    tc = cfg.train_config()
    result = train(model, roles, train_set, tc, test_set=test, out_dir=out,
                   callbacks=[lambda r, m: print(f"epoch {r.epoch} train_acc={r.train_acc:.3f} "
                                                 f"test_acc={r.test_acc:.3f} mean|dJ|={r.mean_abs_dJ:.2e}")])
    print(f"{result.updates} updates; checkpoint {out / 'checkpoint.pbm'}")
    return 0


def cmd_classify(cfg: ExperimentConfig, out: Path) -> int:
    model, roles = load_trained(cfg)
    ds = load_data(cfg, "test" if cfg.test_images else "train")
    if ds.pixels != len(roles.visible_ids):
        raise DimensionError(f"images have {ds.pixels} pixels, model has {len(roles.visible_ids)} visible nodes")
    n = len(ds) if cfg.classify_count <= 0 else min(cfg.classify_count, len(ds))
    hits = 0
    with open(out / "predictions.tsv", "w") as f:
        f.write("index\tlabel\tpredicted\t" + "\t".join(f"score{c}" for c in range(roles.n_classes)) + "\n")
        for k in range(n):
            r = tasks.classify(model, roles, ds.images[k].astype(np.int8), cfg.eval_sweeps, cfg.seed + k,
                               cfg.engine, cfg.workers or None)
            hits += r.predicted == ds.labels[k]
            f.write(f"{k}\t{ds.labels[k]}\t{r.predicted}\t" + "\t".join(f"{s:.6f}" for s in r.class_scores) + "\n")
    print(f"accuracy {hits / n:.4f} on {n} images")
    return 0


def cmd_generate(cfg: ExperimentConfig, out: Path) -> int:
    model, roles = load_trained(cfg)
    shape = _image_shape(len(roles.visible_ids))
    images = []
    with open(out / f"generate_class{cfg.class_id}.tsv", "w") as f:
        f.write("sample\tinitial_energy\tfinal_energy\n")
        for k in range(cfg.n_samples):
            r = tasks.generate(model, roles, cfg.class_id, cfg.schedule(), cfg.seed + k, cfg.engine,
                               cfg.workers or None)
            images.append(r.image)
            f.write(f"{k}\t{r.initial_energy!r}\t{r.final_energy!r}\n")
    grid = tasks.compose_grid(images, shape, ncols=min(10, len(images)))
    tasks.write_pgm(out / f"generate_class{cfg.class_id}.pgm", grid, grid.shape)
    print(f"wrote {len(images)} samples of class {cfg.class_id} to {out}")
    return 0


def cmd_complete(cfg: ExperimentConfig, out: Path) -> int:
    model, roles = load_trained(cfg)
    ds = load_data(cfg, "test" if cfg.test_images else "train")
    if not 0 <= cfg.image_index < len(ds):
        raise ConfigError(f"image_index {cfg.image_index} outside 0..{len(ds) - 1}")
    shape = _image_shape(len(roles.visible_ids))
    bits = ds.images[cfg.image_index].astype(np.int8)
    known = np.zeros(shape, dtype=bool)
    known[:cfg.known_rows] = True
    filled = tasks.complete(model, roles, bits, known.ravel(), int(ds.labels[cfg.image_index]),
                            cfg.schedule(), cfg.seed, cfg.engine, cfg.workers or None)
    grid = tasks.compose_grid([bits, np.where(known.ravel(), bits, 0.5), filled], shape, ncols=3)
    tasks.write_pgm(out / f"complete_{cfg.image_index}.pgm", grid, grid.shape)
    print(f"wrote {out / f'complete_{cfg.image_index}.pgm'}")
    return 0


def cmd_bench(cfg: ExperimentConfig, out: Path) -> int:
    sizes = [int(s) for s in cfg.bench_sizes.split(",") if s.strip()]
    rng = np.random.default_rng(cfg.seed)
    models = []
    for n in sizes:
        g = color_dsatur(generate_graph("random_regular", cfg.graph_seed, n=n, d=cfg.graph_degree))
        models.append(Model.create(g, rng.normal(0, 0.5, g.edge_count), rng.normal(0, 0.5, n)))
    reports = diagnostics.throughput_bench(models, cfg.engine, cfg.bench_duration, cfg.bench_repetitions,
                                           cfg.workers or None, cfg.seed)
    rows = [(r.graph_size, r.engine, r.workers, r.attempted_flips, r.elapsed, r.flips_per_ns, r.stderr)
            for r in reports]
    diagnostics.write_table(out / "throughput.tsv",
                            ["nodes", "engine", "workers", "flips", "seconds", "flips_per_ns", "stderr"], rows)
    for r in reports:
        print(f"N={r.graph_size} {r.flips_per_ns:.4f} flips/ns ({r.workers} workers)")
    return 0


def cmd_mix(cfg: ExperimentConfig, out: Path) -> int:
    train_set, test = training_sets(cfg)
    g = build_graph(cfg)
    roles = build_roles(cfg, g)

    def factory():
        return init_model(g, roles, train_set.stats, class_frequencies(train_set.labels, roles.n_classes),
                          cfg.init_seed, cfg.precision), roles

    cds = [int(s) for s in cfg.cd_values.split(",") if s.strip()]
    rows = diagnostics.mixing_study(factory, train_set, cds, cfg.epochs, cfg.train_config(), test,
                                    cfg.eval_every)
    table = [(r.cd_sweeps, e, tr, te) for r in rows for e, tr, te in
             zip(r.epochs, r.train_accuracy, r.test_accuracy)]
    diagnostics.write_table(out / "mixing.tsv", ["cd_sweeps", "epoch", "train_acc", "test_acc"], table)
    for r in rows:
        print(f"CD-{r.cd_sweeps}: final train accuracy {r.final_train_accuracy:.3f}")
    return 0


def cmd_validate(cfg: ExperimentConfig, out: Path) -> int:
    n = cfg.validate_nodes
    model = diagnostics.random_ising_model(n, cfg.graph_seed)
    g = model.graph
    if cfg.engine == CHROMATIC:
        g = color_dsatur(g)
        model = model.with_graph(g)
    state = ChainState.new(model, cfg.seed, beta=cfg.beta)
    block = run_chain(model, state, cfg.validate_sweeps, 1, cfg.engine, cfg.workers or None)
    exact = diagnostics.enumerate_boltzmann(model, cfg.beta)
    d = diagnostics.tvd(diagnostics.empirical_distribution(block.states, n), exact)
    ok = d < cfg.validate_tolerance
    (out / "validate.tsv").write_text(f"nodes\tedges\tsweeps\ttvd\tpass\n{n}\t{g.edge_count}\t"
                                      f"{cfg.validate_sweeps}\t{d!r}\t{int(ok)}\n")
    print(f"TVD {d:.5f} vs exact over {2 ** n} states ({'pass' if ok else 'FAIL'} at {cfg.validate_tolerance})")
    return 0 if ok else 1


def _image_shape(pixels: int):
    side = int(round(np.sqrt(pixels)))
    return (side, side) if side * side == pixels else (1, pixels)


HANDLERS = {"train": cmd_train, "classify": cmd_classify, "generate": cmd_generate, "complete": cmd_complete,
            "bench": cmd_bench, "mix": cmd_mix, "validate": cmd_validate}


# --------------------------------------------------------------------------- argument handling

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparse-dbm", description="Sparse Boltzmann network sampler and trainer.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat key=value file")
    p.add_argument("--graph", help="edge-list file (overrides generated topology)")
    p.add_argument("--engine", choices=("sequential", "chromatic"))
    p.add_argument("--workers", type=int, help=f"chromatic threads (default ${WORKERS_ENV} or all)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--model", help="trained model file (default <out>/checkpoint.pbm)")
    p.add_argument("--roles", help="role file (default <out>/roles.txt)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--class", dest="class_id", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if os.environ.get(WORKERS_ENV):
        cfg = ExperimentConfig.from_mapping({"workers": os.environ[WORKERS_ENV]}, cfg)
    if args.config:
        cfg = ExperimentConfig.from_mapping(parse_key_values(Path(args.config).read_text()), cfg)
    flags = {k: getattr(args, k) for k in ("graph", "engine", "workers", "seed", "out", "model", "roles",
                                           "epochs", "class_id") if getattr(args, k) is not None}
    cfg = ExperimentConfig.from_mapping(flags, cfg)
    sets = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        sets[k.strip()] = v.strip()
    cfg = ExperimentConfig.from_mapping(sets, cfg)
    try:
        cfg.train_config()
        cfg.schedule()
        PrecisionSpec.parse(cfg.precision)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None
    return cfg


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else 0
    try:
        cfg = resolve_config(args)
        if cfg.workers:
            set_workers(cfg.workers)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{args.command}.cfg").write_text(cfg.to_text())
        return HANDLERS[args.command](cfg, out)
    except (ConfigError, KeyError) as e:
        return _fail("config", e, EXIT_CONFIG)
    except (OSError, DataError) as e:
        return _fail("io", e, EXIT_IO)
    except (DimensionError, GraphError) as e:
        return _fail("dimension", e, EXIT_DIMENSION)
    except MemoryError as e:
        return _fail("resource", e, EXIT_RESOURCE)
    except ValueError as e:
        return _fail("config", e, EXIT_CONFIG)


def _fail(kind: str, err: Exception, code: int) -> int:
    msg = str(err).strip().splitlines()[0] if str(err).strip() else type(err).__name__
    print(f"sparse-dbm: {kind} error: {msg}", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
