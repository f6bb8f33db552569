"""Measurement suite: critic-based distance estimates, nearest-neighbor
memorization audit, per-dimension Bernoulli comparison (DWP), per-dimension
predict-one-from-rest AUC comparison (DWpre), and downstream classification
on generated samples."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .data import KIND_BINARY, RecordMatrix
from .network import NetworkSpec, ParameterSet, forward_batch

SKIP_UNI_LABEL = "uni-label"


def wasserstein_estimate(
    disc_spec: NetworkSpec,
    disc: ParameterSet,
    real_batch: np.ndarray,
    fake_batch: np.ndarray,
) -> float:
    """Mean critic value on real samples minus mean on fake samples."""
    real_batch = np.asarray(real_batch, dtype=float)
    fake_batch = np.asarray(fake_batch, dtype=float)
    if real_batch.shape[0] == 0 or fake_batch.shape[0] == 0:
        raise ValueError("batches must be non-empty")
    fx, _ = forward_batch(disc_spec, disc, real_batch)
    fy, _ = forward_batch(disc_spec, disc, fake_batch)
    return float(fx.mean() - fy.mean())


def nearest_neighbors(
    generated: RecordMatrix, training: RecordMatrix, k: int
) -> np.ndarray:
    """Indices of the k nearest training rows (Euclidean) per generated row.

    Ties break toward the lower training index. Returns an (n_generated, k)
    integer array ordered by increasing distance.
    """
    if k < 1 or k > training.n_rows:
        raise ValueError("k must lie in [1, number of training rows]")
    g, t = generated.data, training.data
    # ||g - t||^2 = ||g||^2 - 2 g.t + ||t||^2, computed blockwise
    d2 = (
        (g * g).sum(1)[:, None]
        - 2.0 * g @ t.T
        + (t * t).sum(1)[None, :]
    )
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


@dataclass(frozen=True)
class DwpPair:
    """Per-dimension Bernoulli rate of real vs generated data."""

    dim_index: int
    p_real: float
    p_gen: float


def dwp(real: RecordMatrix, generated: RecordMatrix) -> list[DwpPair]:
    """Per-column sample means of two binary matrices."""
    if real.kind != KIND_BINARY or generated.kind != KIND_BINARY:
        raise ValueError("dimension-wise probability needs binary matrices")
    if real.n_cols != generated.n_cols:
        raise ValueError("column counts differ")
    p_r = real.data.mean(axis=0)
    p_g = generated.data.mean(axis=0)
    return [DwpPair(i, float(a), float(b)) for i, (a, b) in enumerate(zip(p_r, p_g))]


class UniLabelError(ValueError):
    """The labels contain a single class."""


def train_logreg(
    features: np.ndarray,
    labels: np.ndarray,
    l2: float = 1e-3,
    iters: int = 500,
    tol: float = 1e-6,
) -> np.ndarray:
    """Fit logistic regression by deterministic full-batch gradient descent.

    Minimizes mean negative log-likelihood plus ``l2/2 * ||w||^2`` (intercept
    included in the penalty) from a zero initialization, stopping when the
    gradient norm falls below ``tol`` or after ``iters`` steps. Returns the
    weight vector with the intercept as its last entry.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError("features and labels disagree in length")
    classes = np.unique(y)
    if classes.size < 2:
        raise UniLabelError("labels contain a single class")
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    w = np.zeros(Xb.shape[1])
    n = Xb.shape[0]
    # 1/L step size: L <= 0.25 * max eigenvalue of X^T X / n + l2
    lipschitz = 0.25 * float((Xb * Xb).sum()) / n + l2
    lr = 1.0 / max(lipschitz, 1e-12)
    for _ in range(iters):
        p = 1.0 / (1.0 + np.exp(-(Xb @ w)))
        grad = Xb.T @ (p - y) / n + l2 * w
        if float(np.linalg.norm(grad)) < tol:
            break
        w -= lr * grad
    return w


def logreg_predict(weights: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Class-1 probabilities under a fitted weight vector."""
    X = np.asarray(features, dtype=float)
    z = X @ weights[:-1] + weights[-1]
    return 1.0 / (1.0 + np.exp(-z))


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a random positive outscores a random negative (ties 0.5).

    Equal to the normalized Mann-Whitney U statistic, which matches the
    brute-force count over all positive-negative pairs exactly.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UniLabelError("AUC needs both classes present")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class DwpreResult:
    """Per-dimension predict-from-rest AUCs; skipped when a training source
    (or the test split) is uni-label in that dimension."""

    dim_index: int
    auc_real: float | None
    auc_gen: float | None
    skip_reason: str | None = None


def dwpre(
    real: RecordMatrix,
    generated: RecordMatrix,
    test: RecordMatrix,
    l2: float = 1e-3,
    iters: int = 500,
) -> list[DwpreResult]:
    """Column-by-column classifier comparison between real and generated data.

    For each column d, fits one logistic regression on the real matrix and
    one on the generated matrix (features = remaining columns, target =
    column d) and evaluates both on the test matrix by AUC.
    """
    for mat in (real, generated, test):
        if mat.kind != KIND_BINARY:
            raise ValueError("dimension-wise prediction needs binary matrices")
    if not (real.n_cols == generated.n_cols == test.n_cols):
        raise ValueError("column counts differ")
    results: list[DwpreResult] = []
    for d in range(real.n_cols):
        cols = [c for c in range(real.n_cols) if c != d]
        sources = [real.data, generated.data, test.data]
        if any(np.unique(src[:, d]).size < 2 for src in sources):
            results.append(DwpreResult(d, None, None, SKIP_UNI_LABEL))
            continue
        aucs = []
        for src in (real.data, generated.data):
            w = train_logreg(src[:, cols], src[:, d], l2=l2, iters=iters)
            scores = logreg_predict(w, test.data[:, cols])
            aucs.append(auc(scores, test.data[:, d]))
        results.append(DwpreResult(d, aucs[0], aucs[1], None))
    return results


def downstream_classify(
    gen_class_a: np.ndarray,
    gen_class_b: np.ndarray,
    test_a: np.ndarray,
    test_b: np.ndarray,
    n_samples: int,
    repeats: int,
    seed: int | np.random.Generator,
    l2: float = 1e-3,
    iters: int = 200,
) -> list[float]:
    """Accuracy distribution of classifiers fit on generated class pairs.

    Per repeat: draw n_samples/2 without replacement from each generated
    class, fit logistic regression (a -> 0, b -> 1), and score accuracy on
    the labeled test pool.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    half = n_samples // 2
    gen_a, gen_b = np.asarray(gen_class_a, float), np.asarray(gen_class_b, float)
    if len(gen_a) < half or len(gen_b) < half:
        raise ValueError("not enough generated samples for the requested draw")
    X_test = np.vstack([test_a, test_b])
    y_test = np.concatenate([np.zeros(len(test_a)), np.ones(len(test_b))])
    accuracies = []
    for _ in range(repeats):
        ia = rng.choice(len(gen_a), size=half, replace=False)
        ib = rng.choice(len(gen_b), size=half, replace=False)
        X = np.vstack([gen_a[ia], gen_b[ib]])
        y = np.concatenate([np.zeros(half), np.ones(half)])
        w = train_logreg(X, y, l2=l2, iters=iters)
        pred = logreg_predict(w, X_test) >= 0.5
        accuracies.append(float((pred == (y_test == 1)).mean()))
    return accuracies


def binarize(generated: RecordMatrix, threshold: float = 0.5) -> RecordMatrix:
    """Threshold continuous records: entry >= threshold maps to 1, else 0."""
    data = generated.data
    if np.any((data < 0.0) | (data > 1.0)):
        raise ValueError("binarize expects entries in [0, 1]")
    return RecordMatrix((data >= threshold).astype(float), kind=KIND_BINARY)


def split_train_test(
    records: RecordMatrix, test_fraction: float, seed: int | np.random.Generator
) -> tuple[RecordMatrix, RecordMatrix]:
    """Seeded shuffle split preserving the record kind."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = records.n_rows
    perm = rng.permutation(n)
    n_test = int(round(n * test_fraction))
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    return (
        RecordMatrix(records.data[train_idx], kind=records.kind, B_x=records.B_x),
        RecordMatrix(records.data[test_idx], kind=records.kind, B_x=records.B_x),
    )


# ---------------------------------------------------------------- file output

def write_dwp_csv(path, pairs: list[DwpPair]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dim_index", "p_real", "p_gen"])
        for p in pairs:
            writer.writerow([p.dim_index, repr(p.p_real), repr(p.p_gen)])


def write_dwpre_csv(path, results: list[DwpreResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dim_index", "auc_real", "auc_gen", "skip_reason"])
        for r in results:
            writer.writerow(
                [
                    r.dim_index,
                    "" if r.auc_real is None else repr(r.auc_real),
                    "" if r.auc_gen is None else repr(r.auc_gen),
                    r.skip_reason or "",
                ]
            )


def write_nn_csv(path, indices: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generated_index"] + [f"neighbor_{j}" for j in range(indices.shape[1])])
        for i, row in enumerate(indices):
            writer.writerow([i] + list(map(int, row)))


def write_accuracy_csv(path, accuracies: list[float]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["repeat", "accuracy"])
        for i, a in enumerate(accuracies):
            writer.writerow([i, repr(a)])


def write_summary_json(path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
