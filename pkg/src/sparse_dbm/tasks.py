"""Inference with a trained network: classification, generation, completion, image export."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import RoleAssignment
from .model import Model, energy
from .sampler import AnnealSchedule, ChainState, SampleBlock, run_chain, run_node_averages

GENERATION_SCHEDULE = AnnealSchedule(0.0, 5.0, 0.125, 100)


@dataclass(frozen=True)
class ClassificationResult:
    class_scores: np.ndarray
    predicted: int


def scores_to_result(scores) -> ClassificationResult:
    scores = np.asarray(scores, dtype=np.float64)
    return ClassificationResult(scores, int(np.argmax(scores)))  # argmax: lowest id wins ties


def _check_bits(bits, n: int, what: str) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.shape != (n,):
        raise ValueError(f"{what} has {bits.size} entries, expected {n}")
    if not np.all((bits == 0) | (bits == 1)):
        raise ValueError(f"{what} must be binary (0/1)")
    return bits


def classify(model: Model, roles: RoleAssignment, image_bits, n_sweeps: int = 1000, seed: int = 0,
             engine: str = "sequential", workers: int | None = None, lut=None) -> ClassificationResult:
    """Clamp the pixels, let labels and hidden nodes run, and read the labels.

    Each label node is averaged over the sweeps, then the replicas of a class
    are averaged into its score.
    """
    bits = _check_bits(image_bits, len(roles.visible_ids), "image")
    state = ChainState.new(model, seed)
    state.clamp(roles.visible_ids, bits)
    act = run_node_averages(model, state, n_sweeps, roles.label_ids, engine, workers, lut)
    return scores_to_result(act.reshape(roles.n_replicas, roles.n_classes).mean(axis=0))


def classify_grayscale(model: Model, roles: RoleAssignment, image_gray, n_samples: int = 20,
                       n_sweeps: int = 1000, seed: int = 0, **kw) -> ClassificationResult:
    """Classify each Bernoulli binary sample of a grayscale image and average the label scores."""
    samples = grayscale_encode(image_gray, n_samples, seed)
    scores = np.mean([classify(model, roles, s, n_sweeps, seed + 1 + k, **kw).class_scores
                      for k, s in enumerate(samples)], axis=0)
    return scores_to_result(scores)


def accuracy(model: Model, roles: RoleAssignment, images, labels, n_sweeps: int = 1000, seed: int = 0,
             engine: str = "sequential", workers: int | None = None) -> float:
    """Fraction of binary ``images`` whose predicted class equals ``labels``."""
    if len(labels) == 0:
        return float("nan")
    hits = sum(classify(model, roles, img, n_sweeps, seed + k, engine, workers).predicted == int(y)
               for k, (img, y) in enumerate(zip(images, labels)))
    return float(hits) / len(labels)


def _label_pattern(roles: RoleAssignment, class_id: int) -> np.ndarray:
    if not 0 <= class_id < roles.n_classes:
        raise ValueError(f"class {class_id} outside 0..{roles.n_classes - 1}")
    pattern = np.zeros((roles.n_replicas, roles.n_classes), dtype=np.int8)
    pattern[:, class_id] = 1
    return pattern.ravel()


@dataclass(frozen=True)
class GenerationResult:
    image: np.ndarray           # time-averaged pixel activations in [0, 1]
    initial_energy: float       # energy of the state at the first beta
    final_energy: float         # energy of the last recorded state
    trajectory: object          # SampleBlock of per-beta final states


def _anneal_and_average(model: Model, state: ChainState, roles: RoleAssignment, schedule: AnnealSchedule,
                        engine: str, workers, tail: float) -> GenerationResult:
    """Anneal like :func:`anneal`, averaging the visible nodes over the tail of the final beta."""
    betas = schedule.betas()
    spp = schedule.sweeps_per_step
    n_tail = min(spp, max(1, int(round(tail * spp))))
    states = np.empty((len(betas), model.graph.node_count), dtype=np.int8)
    sweeps = np.empty(len(betas), dtype=np.int64)
    for k, beta in enumerate(betas):
        state.beta = float(beta)
        if k < len(betas) - 1:
            run_chain(model, state, spp, spp, engine, workers)
        else:
            run_chain(model, state, spp - n_tail, max(1, spp - n_tail), engine, workers)
            image = run_node_averages(model, state, n_tail, roles.visible_ids, engine, workers)
        states[k] = state.m
        sweeps[k] = state.sweep
    block = SampleBlock(sweeps, states, spp, betas)
    energies = energy(model, states)
    return GenerationResult(image, float(energies[0]), float(energies[-1]), block)


def generate(model: Model, roles: RoleAssignment, class_id: int,
             schedule: AnnealSchedule = GENERATION_SCHEDULE, seed: int = 0, engine: str = "sequential",
             workers: int | None = None, tail: float = 0.25) -> GenerationResult:
    """Clamp every replica of ``class_id`` on (other labels off) and anneal from noise.

    The returned image averages the visible nodes over the last ``tail``
    fraction of a further block of sweeps at the final beta.
    """
    state = ChainState.new(model, seed)
    state.clamp(roles.label_ids, _label_pattern(roles, class_id))
    return _anneal_and_average(model, state, roles, schedule, engine, workers, tail)


def complete(model: Model, roles: RoleAssignment, image_bits, known_mask, class_id: int | None,
             schedule: AnnealSchedule = GENERATION_SCHEDULE, seed: int = 0, engine: str = "sequential",
             workers: int | None = None, tail: float = 0.25) -> np.ndarray:
    """Fill in the unknown pixels of ``image_bits``.

    Pixels where ``known_mask`` is true stay clamped (as do the labels when
    ``class_id`` is given); the rest start from noise and are annealed. Known
    pixels are returned unchanged, unknown ones as activations in [0, 1].
    """
    n_vis = len(roles.visible_ids)
    bits = _check_bits(image_bits, n_vis, "image")
    known = np.asarray(known_mask, dtype=bool)
    if known.shape != (n_vis,):
        raise ValueError(f"mask has {known.size} entries, expected {n_vis}")
    state = ChainState.new(model, seed)
    state.clamp(roles.visible_ids[known], bits[known])
    if class_id is not None:
        state.clamp(roles.label_ids, _label_pattern(roles, class_id))
    if known.all():
        return bits.astype(np.float64)
    res = _anneal_and_average(model, state, roles, schedule, engine, workers, tail)
    return np.where(known, bits, res.image)


def grayscale_encode(image_gray, n_samples: int, seed: int = 0) -> np.ndarray:
    """Independent Bernoulli(pixel) binary images, shape (n_samples, pixels)."""
    g = np.asarray(image_gray, dtype=np.float64)
    if np.any((g < 0) | (g > 1)) or not np.all(np.isfinite(g)):
        raise ValueError("grayscale pixels must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    return (rng.random((n_samples, *g.shape)) < g).astype(np.int8)


# --------------------------------------------------------------------------- image export

def write_pgm(path, image, shape=(28, 28), binary: bool = True, maxval: int = 255) -> None:
    """Grayscale activations in [0, 1] as PGM (P5 binary or P2 text)."""
    rows, cols = shape
    px = np.clip(np.rint(np.asarray(image, dtype=np.float64).reshape(rows, cols) * maxval), 0, maxval)
    px = px.astype(np.uint8 if maxval < 256 else np.uint16)
    with open(path, "wb") as f:
        if binary:
            f.write(f"P5\n{cols} {rows}\n{maxval}\n".encode())
            f.write(px.astype(">u2" if maxval > 255 else np.uint8).tobytes())
        else:
            f.write(f"P2\n{cols} {rows}\n{maxval}\n".encode())
            for r in px:
                f.write((" ".join(map(str, r.tolist())) + "\n").encode())


def write_pbm(path, bits, shape=(28, 28)) -> None:
    """Binary image as plain PBM (P1); 1 = on = black."""
    rows, cols = shape
    b = (np.asarray(bits).reshape(rows, cols) > 0.5).astype(int)
    with open(path, "w") as f:
        f.write(f"P1\n{cols} {rows}\n")
        for r in b:
            f.write(" ".join(map(str, r.tolist())) + "\n")


def read_pgm(path) -> np.ndarray:
    """Read a P2/P5 file written by :func:`write_pgm`, scaled to [0, 1]."""
    data = open(path, "rb").read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode())
        pos = end
    magic, cols, rows, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == "P5":
        dt = ">u2" if maxval > 255 else np.uint8
        px = np.frombuffer(data[pos + 1:], dtype=dt, count=rows * cols)
    elif magic == "P2":
        px = np.array(data[pos:].split(), dtype=np.int64)[:rows * cols]
    else:
        raise ValueError(f"{path}: unsupported PNM type {magic}")
    return px.reshape(rows, cols) / maxval


def compose_grid(images, shape=(28, 28), ncols: int = 10, pad: int = 1) -> np.ndarray:
    """Tile images into one panel with ``pad`` pixels of background between tiles."""
    images = [np.asarray(im, dtype=np.float64).reshape(shape) for im in images]
    rows, cols = shape
    nrows = -(-len(images) // ncols)
    grid = np.zeros((nrows * (rows + pad) + pad, ncols * (cols + pad) + pad))
    for k, im in enumerate(images):
        r, c = divmod(k, ncols)
        y, x = pad + r * (rows + pad), pad + c * (cols + pad)
        grid[y:y + rows, x:x + cols] = im
    return grid


def nearest_centroid(images, centroids) -> np.ndarray:
    """Index of the closest centroid (Euclidean) for each image."""
    X = np.atleast_2d(np.asarray(images, dtype=np.float64))
    C = np.asarray(centroids, dtype=np.float64)
    d = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=-1)
    return d.argmin(axis=1)
