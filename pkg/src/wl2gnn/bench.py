"""Benchmark harness: training, cross-validation, timing, comparisons.

Evaluation protocol: stratified outer k-fold CV. Within each training
fold a stratified 90/10 holdout drives grid selection (ties go to the
earliest grid entry); the winner is retrained on the full training fold
with early stopping on holdout loss and the best epoch's weights
restored, repeated with distinct seeds. Test folds are touched exactly
once per repeat, after all selection and training is done; the helpers
below never see test indices.

Training is Adam on binary cross-entropy over logits, minibatched with
a fixed batch size (full-batch when the fold fits in one batch).
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .graphs import circulant_graph
from .layers import (ModelSpec, combine_units, format_model_spec,
                     forward_model, init_model_params, prepare_units,
                     validate_model_spec)

RESULT_COLUMNS = ("dataset", "model", "params", "fold", "repeat",
                  "train_acc", "test_acc", "epochs", "seconds")

# power radii that keep the encodings of the common corpora tractable
DEFAULT_RADII = {"TRIANGLE": 2, "NCI1": 8, "PROTEINS": 5, "DD": 2,
                 "REDDIT-B": 1, "IMDB-B": 4}


@dataclass
class TrainConfig:
    epochs: int = 200
    patience: int = 20
    batch_size: int = 32
    seed: int = 0
    folds: int = 10
    holdout: float = 0.1
    repeats: int = 3
    workers: int = 1
    # stop as soon as training accuracy reaches this (None: never check)
    target_train_acc: float | None = None
    # multiply the learning rate by lr_decay whenever the monitored loss
    # has not improved for lr_patience epochs; 0 disables the schedule
    lr_decay: float = 0.5
    lr_patience: int = 0


@dataclass
class FoldResult:
    dataset: str
    model: str
    params: int
    fold: int
    repeat: int
    train_acc: float
    test_acc: float
    epochs: int
    seconds: float


@dataclass
class TrainedModel:
    spec: ModelSpec
    params: object
    epochs: int
    seconds: float


def stratified_folds(labels, k, rng):
    """Deals each class round-robin into k folds after a shuffle."""
    labels = np.asarray(labels)
    folds = [[] for _ in range(k)]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        for pos, i in enumerate(idx):
            folds[pos % k].append(int(i))
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


def stratified_holdout(indices, labels, fraction, rng):
    """Splits indices into (rest, held) keeping at least one held
    example per class."""
    indices = np.asarray(indices)
    labels = np.asarray(labels)
    held = []
    for cls in np.unique(labels[indices]):
        idx = indices[labels[indices] == cls]
        idx = idx.copy()
        rng.shuffle(idx)
        take = max(1, int(round(fraction * len(idx))))
        held.extend(idx[:take].tolist())
    held = np.asarray(sorted(held), dtype=np.int64)
    rest = np.asarray(sorted(set(indices.tolist()) - set(held.tolist())),
                      dtype=np.int64)
    return rest, held


def _select(units, idx):
    return [units[i] for i in idx]


def evaluate_model(spec, params, units, labels, batch_size=256):
    """Full-dataset loss and accuracy, computed in chunks."""
    labels = np.asarray(labels, dtype=np.float64)
    total_loss, correct = 0.0, 0
    for lo in range(0, len(units), batch_size):
        chunk = units[lo:lo + batch_size]
        y = labels[lo:lo + batch_size].reshape(-1, 1)
        logits = forward_model(spec, params, combine_units(spec, chunk))
        loss = T.bce(logits, y)
        total_loss += float(loss.data[0, 0]) * len(chunk)
        correct += int(np.sum((logits.data > 0.0) == (y > 0.5)))
    return total_loss / len(units), correct / len(units)


def train_model(spec, units, labels, config, seed,
                val_units=None, val_labels=None):
    """Trains one model; early-stops on validation loss when a
    validation set is given, restoring the best epoch's weights."""
    validate_model_spec(spec)
    labels = np.asarray(labels, dtype=np.float64)
    if spec.layer == "wl2" or spec.layer == "gnn2":
        enc = units[0] if spec.layer == "wl2" else units[0].enc
        in_dim = enc.width
    else:
        in_dim = units[0].vertex_features.shape[1]
    params = init_model_params(spec, in_dim, seed)
    tensors = params.tensors()
    state = T.AdamState.for_params(tensors, spec.lr)
    rng = np.random.default_rng([seed, 0x5eed])
    start = time.perf_counter()
    best_loss, best_snapshot, bad, ran = np.inf, None, 0, 0
    for epoch in range(1, config.epochs + 1):
        ran = epoch
        order = rng.permutation(len(units))
        for lo in range(0, len(order), config.batch_size):
            sel = order[lo:lo + config.batch_size]
            batch = combine_units(spec, _select(units, sel))
            y = labels[sel].reshape(-1, 1)
            T.zero_grads(tensors)
            loss = T.bce(forward_model(spec, params, batch), y)
            T.backward(loss)
            T.adam_step(state, tensors)
        if config.target_train_acc is not None:
            _, train_acc = evaluate_model(spec, params, units, labels)
            if train_acc >= config.target_train_acc:
                best_snapshot = None  # current weights hit the target
                break
        if val_units is not None:
            val_loss, _ = evaluate_model(spec, params, val_units, val_labels)
            if val_loss < best_loss - 1e-12:
                best_loss = val_loss
                best_snapshot = [t.data.copy() for t in tensors]
                bad = 0
            else:
                bad += 1
                if bad >= config.patience:
                    break
                if config.lr_patience and bad % config.lr_patience == 0:
                    state.lr *= config.lr_decay
    if best_snapshot is not None:
        for t, saved in zip(tensors, best_snapshot):
            t.data = saved
    return TrainedModel(spec=spec, params=params, epochs=ran,
                        seconds=time.perf_counter() - start)


def _unit_cache(grid, graphs):
    cache = {}
    for spec in grid:
        key = (spec.layer, spec.r if spec.layer == "wl2" else 1)
        if key not in cache:
            cache[key] = prepare_units(spec, graphs)
    return cache


def _units_for(cache, spec):
    return cache[(spec.layer, spec.r if spec.layer == "wl2" else 1)]


def _run_fold(graphs, labels, grid, config, dataset, folds, fold, cache=None):
    """Selection and repeated retraining for one outer fold. Sees the
    test fold only for the single final evaluation per repeat."""
    if cache is None:
        cache = _unit_cache(grid, graphs)
    test_idx = folds[fold]
    train_idx = np.asarray(sorted(set(range(len(graphs)))
                                  - set(test_idx.tolist())), dtype=np.int64)
    rng = np.random.default_rng([config.seed, fold])
    inner_idx, held_idx = stratified_holdout(train_idx, labels,
                                             config.holdout, rng)
    best_spec, best_acc = None, -1.0
    for spec in grid:
        units = _units_for(cache, spec)
        trained = train_model(spec, _select(units, inner_idx),
                              labels[inner_idx], config,
                              seed=int(rng.integers(2 ** 31)),
                              val_units=_select(units, held_idx),
                              val_labels=labels[held_idx])
        _, acc = evaluate_model(spec, trained.params,
                                _select(units, held_idx), labels[held_idx])
        if acc > best_acc:
            best_spec, best_acc = spec, acc
    results = []
    units = _units_for(cache, best_spec)
    for repeat in range(config.repeats):
        trained = train_model(best_spec, _select(units, train_idx),
                              labels[train_idx], config,
                              seed=int(np.random.default_rng(
                                  [config.seed, fold, repeat]).integers(2 ** 31)),
                              val_units=_select(units, held_idx),
                              val_labels=labels[held_idx])
        _, train_acc = evaluate_model(best_spec, trained.params,
                                      _select(units, train_idx),
                                      labels[train_idx])
        _, test_acc = evaluate_model(best_spec, trained.params,
                                     _select(units, test_idx),
                                     labels[test_idx])
        results.append(FoldResult(
            dataset=dataset, model=format_model_spec(best_spec),
            params=trained.params.n_params(), fold=fold, repeat=repeat,
            train_acc=train_acc, test_acc=test_acc,
            epochs=trained.epochs, seconds=trained.seconds))
    return results


def _run_fold_task(payload):
    return _run_fold(*payload)


def run_cv(graphs, labels, grid, config, dataset="dataset", out_path=None):
    """Full cross-validation; returns FoldResults sorted by
    (fold, repeat) regardless of worker count."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(graphs) != len(labels):
        raise ValueError("graphs and labels differ in length")
    grid = [validate_model_spec(s) for s in grid]
    if not grid:
        raise ValueError("empty model grid")
    for spec in grid:
        if spec.pool == "min":
            raise ValueError("min pooling is a demonstration mode, "
                             "not part of the training grid")
    folds = stratified_folds(labels, config.folds, np.random.default_rng(config.seed))
    results = []
    if config.workers > 1:
        payloads = [(graphs, labels, grid, config, dataset, folds, fold)
                    for fold in range(config.folds)]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for rows in pool.map(_run_fold_task, payloads):
                results.extend(rows)
    else:
        cache = _unit_cache(grid, graphs)
        for fold in range(config.folds):
            results.extend(_run_fold(graphs, labels, grid, config, dataset,
                                     folds, fold, cache=cache))
    results.sort(key=lambda r: (r.fold, r.repeat))
    if out_path is not None:
        write_results_csv(results, out_path)
    return results


# ---------------------------------------------------------------------------
# results interchange


def write_results_csv(results, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in results:
            writer.writerow([r.dataset, r.model, r.params, r.fold, r.repeat,
                             f"{r.train_acc:.6f}", f"{r.test_acc:.6f}",
                             r.epochs, f"{r.seconds:.6f}"])


def read_results_csv(path):
    results = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for row in reader:
            results.append(FoldResult(
                dataset=row["dataset"], model=row["model"],
                params=int(row["params"]), fold=int(row["fold"]),
                repeat=int(row["repeat"]),
                train_acc=float(row["train_acc"]),
                test_acc=float(row["test_acc"]),
                epochs=int(row["epochs"]), seconds=float(row["seconds"])))
    return results


@dataclass
class DeltaReport:
    deltas: np.ndarray
    mean: float
    std: float
    significant: bool


def foldwise_deltas(results_a, results_b):
    """Paired test-accuracy deltas (a minus b) matched on (fold, repeat),
    with a two-sigma significance call. Mismatched fold structures are
    rejected."""
    by_key_a = {(r.fold, r.repeat): r for r in results_a}
    by_key_b = {(r.fold, r.repeat): r for r in results_b}
    if len(by_key_a) != len(results_a) or len(by_key_b) != len(results_b):
        raise ValueError("duplicate (fold, repeat) rows")
    if by_key_a.keys() != by_key_b.keys():
        raise ValueError("fold structures do not match")
    keys = sorted(by_key_a)
    deltas = np.asarray([by_key_a[k].test_acc - by_key_b[k].test_acc
                         for k in keys])
    mean = float(deltas.mean())
    std = float(deltas.std())
    return DeltaReport(deltas=deltas, mean=mean, std=std,
                       significant=abs(mean) > 2 * std)


# ---------------------------------------------------------------------------
# timing harness


@dataclass
class TimingRow:
    n: int
    d: int
    r: int
    gamma: int
    epoch_seconds: float


def _random_regular_circulant(rng, n, d):
    """Random circulant graph with every vertex of degree exactly d, or
    None when no offset set can achieve it."""
    if d < 1 or d >= n:
        return None
    half = (n - 1) // 2
    if d % 2 == 0:
        if half < d // 2:
            return None
        offsets = rng.choice(np.arange(1, half + 1), size=d // 2,
                             replace=False)
    else:
        # odd degree needs the antipodal offset, hence an even n
        if n % 2 or (n // 2 - 1) < (d - 1) // 2:
            return None
        offsets = list(rng.choice(np.arange(1, n // 2), size=(d - 1) // 2,
                                  replace=False)) + [n // 2]
    return circulant_graph(n, offsets)


def epoch_timing(n_list, d_list, r_list, spec, n_graphs=100, epochs=100,
                 seed=0):
    """Wall-clock scaling sweep over (n, d, r) combinations.

    For each combination: a dataset of `n_graphs` random d-regular
    circulant graphs of size n is encoded at radius r, then full-batch
    training epochs are timed (forward, loss, backward, update) and the
    mean epoch duration recorded together with the batch gamma.
    Infeasible (n, d) pairs are skipped with a warning. Strictly serial.
    Returns (rows, warnings).
    """
    validate_model_spec(spec)
    rows, warnings = [], []
    for n in n_list:
        for d in d_list:
            for r in r_list:
                rng = np.random.default_rng([seed, n, d, r])
                graphs = []
                for _ in range(n_graphs):
                    g = _random_regular_circulant(rng, n, d)
                    if g is None:
                        break
                    graphs.append(g)
                if len(graphs) < n_graphs:
                    warnings.append(f"skipped n={n} d={d} r={r}: no d-regular "
                                    "circulant exists")
                    continue
                run_spec = replace(spec, r=r)
                labels = rng.integers(0, 2, size=n_graphs).astype(np.float64)
                batch = combine_units(run_spec,
                                      prepare_units(run_spec, graphs))
                if run_spec.layer == "wl2":
                    gamma = int(batch.gamma)
                    in_dim = batch.width
                elif run_spec.layer == "gnn2":
                    gamma = int(batch.enc.gamma)
                    in_dim = batch.enc.width
                else:
                    gamma = 0
                    in_dim = graphs[0].vertex_features.shape[1]
                params = init_model_params(run_spec, in_dim, seed)
                tensors = params.tensors()
                state = T.AdamState.for_params(tensors, run_spec.lr)
                y = labels.reshape(-1, 1)

                def one_epoch():
                    T.zero_grads(tensors)
                    loss = T.bce(forward_model(run_spec, params, batch), y)
                    T.backward(loss)
                    T.adam_step(state, tensors)

                one_epoch()  # warmup, untimed
                start = time.perf_counter()
                for _ in range(epochs):
                    one_epoch()
                mean_seconds = (time.perf_counter() - start) / epochs
                rows.append(TimingRow(n=n, d=d, r=r, gamma=gamma,
                                      epoch_seconds=mean_seconds))
    return rows, warnings


def write_timing_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("n", "d", "r", "gamma", "epoch_seconds"))
        for r in rows:
            writer.writerow([r.n, r.d, r.r, r.gamma, f"{r.epoch_seconds:.9f}"])


def loglog_slope(x, y):
    """Least-squares slope of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])
