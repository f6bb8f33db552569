"""Dataset containers, CSV ingestion, norm-bound enforcement, and synthetic
desk-scale generators (a 2-d Gaussian mixture and a correlated binary-record
sampler)."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm as _norm

logger = logging.getLogger(__name__)

KIND_CONTINUOUS = "continuous"
KIND_BINARY = "binary"


@dataclass
class RecordMatrix:
    """Training records as a dense (M, d) float64 matrix.

    ``kind`` is "continuous" or "binary"; binary matrices contain only 0/1
    entries. ``B_x`` records the enforced per-row Euclidean norm bound
    (None when no bound has been enforced).
    """

    data: np.ndarray
    kind: str = KIND_CONTINUOUS
    B_x: float | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2:
            raise ValueError("records must form a 2-d matrix")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("records contain non-finite values")
        if self.kind not in (KIND_CONTINUOUS, KIND_BINARY):
            raise ValueError(f"unknown record kind {self.kind!r}")
        if self.kind == KIND_BINARY and not np.all(np.isin(self.data, (0.0, 1.0))):
            raise ValueError("binary records must contain only 0/1 entries")

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_cols(self) -> int:
        return self.data.shape[1]

    def max_row_norm(self) -> float:
        if self.n_rows == 0:
            return 0.0
        return float(np.linalg.norm(self.data, axis=1).max())


def load_binary_csv(path, delimiter: str = ",", header: bool = False) -> RecordMatrix:
    """Read a numeric CSV and binarize it: nonzero -> 1, zero -> 0.

    Rows containing unparseable or missing cells are dropped (count logged);
    rows with the wrong number of fields are fatal.
    """
    rows: list[list[float]] = []
    dropped = 0
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for idx, fields in enumerate(reader):
            if header and idx == 0:
                continue
            if not fields:
                continue
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise ValueError(
                    f"{path}: row {idx} has {len(fields)} fields, expected {width}"
                )
            try:
                values = [float(cell) for cell in fields]
            except ValueError:
                dropped += 1
                continue
            rows.append(values)
    if width is None:
        raise ValueError(f"{path}: file is empty")
    if dropped:
        logger.warning("%s: dropped %d rows with missing or unparseable cells", path, dropped)
    if not rows:
        raise ValueError(f"{path}: no usable rows")
    matrix = (np.asarray(rows, dtype=float) != 0.0).astype(float)
    return RecordMatrix(matrix, kind=KIND_BINARY, B_x=float(np.sqrt(matrix.shape[1])))


def save_csv(records: RecordMatrix, path, header: list[str] | None = None) -> None:
    """Write records as CSV; binary matrices emit integer 0/1."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        if records.kind == KIND_BINARY:
            for row in records.data.astype(int):
                writer.writerow(list(row))
        else:
            for row in records.data:
                writer.writerow([repr(float(v)) for v in row])


def load_csv(path, kind: str = KIND_CONTINUOUS, header: bool = False) -> RecordMatrix:
    """Read a numeric CSV without binarization (strict: bad cells are fatal)."""
    matrix = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2)
    return RecordMatrix(matrix, kind=kind)


def enforce_norm_bound(records: RecordMatrix, B_x: float) -> RecordMatrix:
    """Scale any row with Euclidean norm above ``B_x`` back to ``B_x``.

    Rows already within ``B_x`` (up to one part in 1e12, so the operation is
    bitwise idempotent) are left untouched.
    """
    if B_x <= 0:
        raise ValueError("norm bound must be positive")
    norms = np.linalg.norm(records.data, axis=1)
    scale = np.ones_like(norms)
    over = norms > B_x * (1.0 + 1e-12)
    scale[over] = B_x / norms[over]
    return RecordMatrix(records.data * scale[:, None], kind=records.kind, B_x=float(B_x))


def gen_gaussian_mixture(
    n: int, centers, std: float, seed: int | np.random.Generator
) -> RecordMatrix:
    """Sample ``n`` points from an equal-weight isotropic Gaussian mixture."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=float)
    idx = rng.integers(0, len(centers), size=n)
    points = centers[idx] + std * rng.standard_normal((n, centers.shape[1]))
    return RecordMatrix(points, kind=KIND_CONTINUOUS)


def gen_correlated_binary(
    n: int,
    dims: int,
    base_probs,
    pair_couplings,
    seed: int | np.random.Generator,
) -> RecordMatrix:
    """Sample correlated binary records via a latent Gaussian threshold model.

    The latent covariance is the identity plus ``strength`` at each coupled
    ``(i, j)`` pair; column ``i`` is 1 when its latent coordinate falls below
    the normal quantile of ``base_probs[i]``, so marginals match base_probs.

    Raises ValueError naming the first coupling that makes the latent
    covariance non positive-definite.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    base_probs = np.asarray(base_probs, dtype=float)
    if base_probs.shape != (dims,):
        raise ValueError(f"base_probs must have length {dims}")
    if np.any((base_probs < 0) | (base_probs > 1)):
        raise ValueError("base_probs entries must lie in [0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    cov = np.eye(dims)
    for i, j, strength in pair_couplings:
        if i == j or not (0 <= i < dims and 0 <= j < dims):
            raise ValueError(f"invalid coupling pair ({i}, {j})")
        cov[i, j] = cov[j, i] = float(strength)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        # replay the pairs to name the first one that breaks definiteness
        probe = np.eye(dims)
        for i, j, strength in pair_couplings:
            probe[i, j] = probe[j, i] = float(strength)
            if np.linalg.eigvalsh(probe).min() <= 0:
                raise ValueError(
                    f"coupling ({i}, {j}, {strength}) makes the latent "
                    "covariance non positive-definite"
                ) from None
        raise ValueError("latent covariance is not positive-definite") from None

    latent = rng.standard_normal((n, dims)) @ chol.T
    thresholds = _norm.ppf(base_probs)  # -inf at p=0, +inf at p=1: constant columns
    matrix = (latent <= thresholds).astype(float)
    return RecordMatrix(matrix, kind=KIND_BINARY, B_x=float(np.sqrt(dims)))
