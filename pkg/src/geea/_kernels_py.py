"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def true_ranks(scores, truth):
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    if truth.shape[0] != scores.shape[0]:
        raise ValueError("truth must have one entry per row")
    n_cols = scores.shape[1]
    if len(truth) and (truth.min() < 0 or truth.max() >= n_cols):
        raise IndexError(f"truth column out of range for {n_cols} columns")
    target = scores[np.arange(len(truth)), truth][:, None]
    cols = np.arange(n_cols)[None, :]
    better = (scores > target) | ((scores == target) & (cols < truth[:, None]))
    return better.sum(axis=1).astype(np.int64) + 1


def multi_hot(indptr, indices, rows, width):
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    rows = np.asarray(rows, dtype=np.int64)
    n_sets = len(indptr) - 1
    if len(rows) and (rows.min() < 0 or rows.max() >= n_sets):
        raise IndexError(f"row out of range for {n_sets} sets")
    out = np.zeros((len(rows), width), dtype=np.float32)
    starts, ends = indptr[rows], indptr[rows + 1]
    counts = ends - starts
    row_idx = np.repeat(np.arange(len(rows)), counts)
    offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    cols = indices[np.repeat(starts, counts) + offsets]
    if len(cols) and (cols.min() < 0 or cols.max() >= width):
        raise IndexError(f"column out of range for width {width}")
    out[row_idx, cols] = 1.0
    return out
