"""Downstream binary label prediction with logistic regression.

The design matrix concatenates the OF encoding with one block per CF,
whose content depends on the input mode:

* ``ord``  - one-hot of the hidden true values (the ceiling),
* ``comp`` - the uniform-over-complement initial confidences,
* ``soft`` - estimated confidence rows,
* ``hard`` - one-hot of the hard estimates.

Training is deterministic full-batch gradient descent with a
backtracking line search, so the loss trace never increases and runs
are reproducible without seed bookkeeping.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .encoding import EncodedMatrix, encode_of
from .errors import DataError, ShapeMismatchError, SingleClassError
from .propagation import EstimationResult, init_marginal

MODES = ("ord", "comp", "soft", "hard")


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray                  # (n, d) float64
    blocks: dict[str, tuple[int, int]]  # column/CF name -> [start, stop)
    mode: str

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if not np.isfinite(vals).all():
            raise DataError("design matrix must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def export_csv(self, path):
        names = sorted(self.blocks, key=lambda k: self.blocks[k])
        header = []
        for name in names:
            start, stop = self.blocks[name]
            width = stop - start
            header += [name] if width == 1 else [f"{name}_{i + 1}" for i in range(width)]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in self.values:
                writer.writerow([repr(float(v)) for v in row])


def assemble(
    ds: Dataset,
    mode: str,
    result: EstimationResult | None = None,
    enc_of: EncodedMatrix | None = None,
) -> DesignMatrix:
    """Build the model input: OFs in schema order, then CF blocks in schema order."""
    if mode not in MODES:
        raise DataError(f"unknown mode {mode!r}, expected one of {MODES}")
    if enc_of is None:
        enc_of = encode_of(ds)
    parts = [enc_of.values]
    blocks = dict(enc_of.blocks)
    pos = enc_of.dim

    cf_cols = ds.schema.cf_columns
    if mode == "comp":
        source = [b.values for b in init_marginal(ds)]
    elif mode == "ord":
        if ds.cf_truth is None:
            raise DataError("ord mode needs ground-truth CF values")
        source = [_one_hot(ds.cf_truth[:, j], c.size) for j, c in enumerate(cf_cols)]
    else:
        if result is None:
            raise DataError(f"mode {mode!r} needs an estimation result")
        if result.n != ds.n:
            raise ShapeMismatchError("estimation result rows do not match the dataset")
        if mode == "soft":
            source = [result.block(c.name).values for c in cf_cols]
        else:
            source = [
                _one_hot(result.hard_estimates[:, j], c.size)
                for j, c in enumerate(cf_cols)
            ]
    for col, block in zip(cf_cols, source):
        parts.append(block)
        blocks[col.name] = (pos, pos + col.size)
        pos += col.size
    return DesignMatrix(values=np.hstack(parts), blocks=blocks, mode=mode)


def _one_hot(codes: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros((codes.shape[0], size))
    out[np.arange(codes.shape[0]), codes - 1] = 1.0
    return out


# ---------------------------------------------------------------------------
# Logistic regression


@dataclass(frozen=True)
class LrModel:
    weights: np.ndarray
    bias: float
    l2: float
    trace: tuple[float, ...]  # loss per epoch, non-increasing

    def save(self, path):
        doc = {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "l2": self.l2,
            "trace": list(self.trace),
        }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LrModel":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(weights=np.asarray(doc["weights"]), bias=float(doc["bias"]),
                   l2=float(doc["l2"]), trace=tuple(doc["trace"]))


def loss_and_grad(params: np.ndarray, x: np.ndarray, targets: np.ndarray, l2: float):
    """Mean cross entropy plus (l2/2)||w||^2; bias (last entry) unregularized."""
    w, b = params[:-1], params[-1]
    z = x @ w + b
    # log(1 + e^z) - t*z, computed stably
    loss = float(np.mean(np.logaddexp(0.0, z) - targets * z) + 0.5 * l2 * (w @ w))
    resid = _sigmoid(z) - targets
    grad_w = x.T @ resid / x.shape[0] + l2 * w
    grad_b = float(resid.mean())
    return loss, np.concatenate([grad_w, [grad_b]])


def train(x, y: np.ndarray, l2: float = 1e-4, epochs: int = 500, seed: int = 0) -> LrModel:
    """Deterministic full-batch training from zero-initialized weights.

    ``seed`` is accepted for interface symmetry; with zero initialization
    and full batches the result does not depend on it.
    """
    del seed
    mat = x.values if isinstance(x, DesignMatrix) else np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClassError("training needs both label classes present")
    if classes.size > 2:
        raise DataError("only binary labels are supported")
    targets = (y == classes.max()).astype(np.float64)
    if l2 < 0:
        raise DataError("l2 must be nonnegative")

    params = np.zeros(mat.shape[1] + 1)
    loss, grad = loss_and_grad(params, mat, targets, l2)
    trace = [loss]
    step = 1.0
    for _ in range(epochs):
        while True:
            cand = params - step * grad
            cand_loss, cand_grad = loss_and_grad(cand, mat, targets, l2)
            if cand_loss <= loss - 0.5 * step * (grad @ grad) or step < 1e-18:
                break
            step *= 0.5
        if cand_loss > loss:
            trace.append(loss)
            continue
        params, loss, grad = cand, cand_loss, cand_grad
        trace.append(loss)
        step *= 1.5
    return LrModel(weights=params[:-1], bias=float(params[-1]), l2=l2, trace=tuple(trace))


def predict(model: LrModel, x) -> np.ndarray:
    """Probability of the higher label code, per row."""
    mat = x.values if isinstance(x, DesignMatrix) else np.asarray(x, dtype=np.float64)
    return _sigmoid(mat @ model.weights + model.bias)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
