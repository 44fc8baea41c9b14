"""Synchronized multi-agent streams and their CSV file formats.

Row ``t`` of agent ``i`` holds the odometry increment that moves the agent
from pose ``t-1`` to pose ``t`` (zero at ``t = 0``), the field-norm reading
taken at pose ``t``, and optionally the true pose at ``t``.  Numbers are
written with 17 significant digits so files round-trip exactly.
"""

import csv
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .quat import IDENTITY

DATASET_COLUMNS = ["t", "agent", "dp_x", "dp_y", "dp_z", "dq_x", "dq_y", "dq_z", "y"]
TRUTH_COLUMNS = ["px", "py", "pz", "qw", "qx", "qy", "qz"]
RESULT_COLUMNS = ["t", "agent", "px_hat", "py_hat", "pz_hat", "qw_hat", "qx_hat", "qy_hat", "qz_hat"]
GRID_COLUMNS = ["x", "y", "z", "mean", "variance"]
WEIGHT_COLUMNS = ["agent", "index", "w", "variance"]
SWEEP_COLUMNS = ["axis", "mean", "std", "reps", "failures"]


class DatasetFormatError(ValueError):
    pass


@dataclass
class Dataset:
    dp: np.ndarray  # (N, m, 3)
    dq: np.ndarray  # (N, m, 3)
    y: np.ndarray  # (N, m)
    true_positions: np.ndarray = None  # (N, m, 3)
    true_quats: np.ndarray = None  # (N, m, 4)

    @property
    def N(self):
        return self.dp.shape[0]

    @property
    def m(self):
        return self.dp.shape[1]

    @property
    def has_truth(self):
        return self.true_positions is not None

    def initial_poses(self):
        if self.has_truth:
            return self.true_positions[0].copy(), self.true_quats[0].copy()
        return np.zeros((self.m, 3)), np.tile(IDENTITY, (self.m, 1))

    def agent(self, i):
        sl = slice(i, i + 1)
        return Dataset(
            self.dp[:, sl].copy(), self.dq[:, sl].copy(), self.y[:, sl].copy(),
            None if self.true_positions is None else self.true_positions[:, sl].copy(),
            None if self.true_quats is None else self.true_quats[:, sl].copy(),
        )


def fmt(x):
    return format(float(x), ".17g")


def atomic_write_rows(path, header, rows):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([v if isinstance(v, str) else fmt(v) if isinstance(v, float) else v for v in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_dataset(path, ds, include_truth=True):
    truth = include_truth and ds.has_truth
    header = DATASET_COLUMNS + (TRUTH_COLUMNS if truth else [])

    def rows():
        for t in range(ds.N):
            for i in range(ds.m):
                row = [t, i, *map(float, ds.dp[t, i]), *map(float, ds.dq[t, i]), float(ds.y[t, i])]
                if truth:
                    row += [*map(float, ds.true_positions[t, i]), *map(float, ds.true_quats[t, i])]
                yield row

    atomic_write_rows(path, header, rows())


def _read_table(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    return header, rows


def read_dataset(path):
    header, rows = _read_table(path)
    if header == DATASET_COLUMNS:
        truth = False
    elif header == DATASET_COLUMNS + TRUTH_COLUMNS:
        truth = True
    else:
        raise DatasetFormatError(f"{path}: unexpected header {header}")
    if not rows:
        raise DatasetFormatError(f"{path}: no records")
    ts = np.array([int(r[0]) for r in rows])
    agents = np.array([int(r[1]) for r in rows])
    m = int(agents.max()) + 1
    N = int(ts.max()) + 1
    if len(rows) != N * m:
        raise DatasetFormatError(f"{path}: expected a complete {N} x {m} (t, agent) grid, got {len(rows)} rows")
    expected_t = np.repeat(np.arange(N), m)
    expected_a = np.tile(np.arange(m), N)
    if not (np.array_equal(ts, expected_t) and np.array_equal(agents, expected_a)):
        raise DatasetFormatError(f"{path}: rows must be sorted by (t, agent) without gaps")
    vals = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(N, m, -1)
    ds = Dataset(vals[:, :, 0:3].copy(), vals[:, :, 3:6].copy(), vals[:, :, 6].copy())
    if truth:
        ds.true_positions = vals[:, :, 7:10].copy()
        ds.true_quats = vals[:, :, 10:14].copy()
    return ds


def write_result(path, positions, quats):
    N, m = positions.shape[:2]
    rows = (
        [t, i, *map(float, positions[t, i]), *map(float, quats[t, i])]
        for t in range(N) for i in range(m)
    )
    atomic_write_rows(path, RESULT_COLUMNS, rows)


def read_result(path):
    header, rows = _read_table(path)
    if header != RESULT_COLUMNS:
        raise DatasetFormatError(f"{path}: unexpected header {header}")
    N = max(int(r[0]) for r in rows) + 1
    m = max(int(r[1]) for r in rows) + 1
    vals = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(N, m, 7)
    return vals[:, :, :3].copy(), vals[:, :, 3:].copy()


def write_weights(path, ws, variances, agents):
    """One block of ``(index, w, variance)`` per map; ``agents`` labels each block.

    A shared (centralized) map is labelled ``-1``.
    """
    rows = (
        [int(a), k, float(w[k]), float(v[k])]
        for a, w, v in zip(agents, ws, variances) for k in range(len(w))
    )
    atomic_write_rows(path, WEIGHT_COLUMNS, rows)


def read_weights(path):
    header, rows = _read_table(path)
    if header != WEIGHT_COLUMNS:
        raise DatasetFormatError(f"{path}: unexpected header {header}")
    out = {}
    for r in rows:
        out.setdefault(int(r[0]), []).append((int(r[1]), float(r[2]), float(r[3])))
    return {
        a: (np.array([w for _, w, _ in sorted(v)]), np.array([s for _, _, s in sorted(v)]))
        for a, v in out.items()
    }


def write_grid(path, points, mean, var):
    rows = ([*map(float, p), float(mu), float(v)] for p, mu, v in zip(points, mean, var))
    atomic_write_rows(path, GRID_COLUMNS, rows)


def read_grid(path):
    header, rows = _read_table(path)
    if header != GRID_COLUMNS:
        raise DatasetFormatError(f"{path}: unexpected header {header}")
    vals = np.array([[float(v) for v in r] for r in rows]).reshape(-1, 5)
    return vals[:, :3], vals[:, 3], vals[:, 4]


def write_sweep(path, result):
    rows = (
        [float(v), float(mu), float(sd), int(result.reps), int(nf)]
        for v, mu, sd, nf in zip(result.values, result.mean, result.std, result.failures)
    )
    atomic_write_rows(path, SWEEP_COLUMNS, rows)


def read_sweep(path):
    header, rows = _read_table(path)
    if header != SWEEP_COLUMNS:
        raise DatasetFormatError(f"{path}: unexpected header {header}")
    return [(float(a), float(mu), float(sd), int(n), int(f)) for a, mu, sd, n, f in rows]
