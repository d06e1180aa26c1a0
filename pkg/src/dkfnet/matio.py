"""Plain-text matrix files.

The interchange format for matrices that cross tool boundaries, e.g.
steady-state covariances produced by one tool and verified by another:
a "rows cols" header line followed by the entries in row-major order,
whitespace separated, written with enough digits to round-trip doubles
exactly.
"""

import os

import numpy as np

MAT_SUFFIX = ".mat"


def save_matrix(M: np.ndarray, path: str) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{M.shape[0]} {M.shape[1]}\n")
        for row in M:
            fh.write(" ".join(format(v, ".17g") for v in row) + "\n")


def load_matrix(path: str) -> np.ndarray:
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise ValueError(f"{path}: missing 'rows cols' header")
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise ValueError(f"{path}: malformed 'rows cols' header")
    if rows < 1 or cols < 1:
        raise ValueError(f"{path}: matrix dimensions must be positive")
    body = tokens[2:]
    if len(body) != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} entries, "
                         f"found {len(body)}")
    try:
        vals = [float(t) for t in body]
    except ValueError:
        raise ValueError(f"{path}: non-numeric entry")
    return np.array(vals).reshape(rows, cols)


def save_matrix_dir(mats: dict, out_dir: str) -> dict:
    """Write every entry as <name>.mat inside out_dir; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, M in mats.items():
        p = os.path.join(out_dir, f"{name}{MAT_SUFFIX}")
        save_matrix(M, p)
        paths[name] = p
    return paths


def load_matrix_dir(path: str) -> dict:
    out = {}
    for entry in sorted(os.listdir(path)):
        if entry.endswith(MAT_SUFFIX):
            out[entry[:-len(MAT_SUFFIX)]] = load_matrix(
                os.path.join(path, entry))
    if not out:
        raise ValueError(f"{path}: no {MAT_SUFFIX} files found")
    return out
