"""Path-ensemble generation under the drifted law and under Wiener measure.

The canonical process starts at the origin and is discretized by
Euler-Maruyama on a uniform grid over [0, 1].  Under the law attached to a
velocity field u the drift is -u(1 - t, x) with unit dispersion; under
Wiener measure the drift is zero.  Gaussian increments are drawn from a
counter-based Philox stream keyed by (seed, path block), with a fixed block
size, so every increment is a pure function of (seed, n, k): regenerating
with the same arguments is bit-exact and independent of how many workers run
the blocks.

Novikov's condition holds automatically for the bounded catalog fields, so
the change-of-measure density is a true martingale; nothing is checked at
runtime.
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fields import Array, FlowCase

_MAGIC = b"LGF1"
_MASK64 = (1 << 64) - 1
BLOCK_PATHS = 8192          # fixed; never derived from the worker count

WIENER_TAG = "wiener"


class TagMismatchError(ValueError):
    """An operation received an ensemble generated under the wrong measure."""


class GridMismatchError(ValueError):
    """Two samples or ensembles do not share the same time grid."""


class CapacityError(MemoryError):
    """Allocation failure, reported with the requested size in bytes."""

    def __init__(self, requested_bytes: int):
        self.requested_bytes = requested_bytes
        super().__init__(f"cannot allocate {requested_bytes} bytes for ensemble storage")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k/M, k = 0..M."""

    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    @property
    def dt(self) -> float:
        return 1.0 / self.steps

    @property
    def times(self) -> Array:
        return np.arange(self.steps + 1) / self.steps


@dataclass(frozen=True)
class PathEnsemble:
    """N discretized paths plus the driving Gaussian increments.

    positions has shape (N, M+1, 3) with positions[:, 0] = 0; noise has shape
    (N, M, 3) and holds the raw increments, which downstream density and
    covariation estimators need.  Arrays are frozen after construction.
    """

    grid: TimeGrid
    positions: Array
    noise: Array
    measure_tag: str
    seed: int

    @property
    def n_paths(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class ProcessSample:
    """An adapted process evaluated on the ensemble grid.

    values has shape (N, M+1) for scalar processes or (N, M+1, 3) for vector
    ones.  Builders in this package only read path data up to the current
    index, which is what makes the sample adapted.
    """

    grid: TimeGrid
    values: Array
    label: str

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == 3


def worker_count() -> int:
    env = os.environ.get("LAGRANGEFLOW_THREADS")
    if env:
        return max(1, int(env))
    return max(1, min(8, os.cpu_count() or 1))


def _alloc(shape) -> Array:
    try:
        return np.zeros(shape)
    except MemoryError:
        raise CapacityError(int(np.prod(shape)) * 8) from None


def _run_blocks(n_paths: int, fn) -> None:
    blocks = [(i, lo, min(lo + BLOCK_PATHS, n_paths))
              for i, lo in enumerate(range(0, n_paths, BLOCK_PATHS))]
    workers = worker_count()
    if workers == 1 or len(blocks) == 1:
        for b in blocks:
            fn(*b)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: fn(*b), blocks))


def _freeze(ensemble: PathEnsemble) -> PathEnsemble:
    ensemble.positions.flags.writeable = False
    ensemble.noise.flags.writeable = False
    return ensemble


def _simulate(drift, n_paths: int, steps: int, seed: int, tag: str) -> PathEnsemble:
    if n_paths < 1:
        raise ValueError("N must be >= 1")
    if steps < 2:
        raise ValueError("M must be >= 2")
    grid = TimeGrid(steps)
    dt = grid.dt
    times = grid.times
    sqrt_dt = np.sqrt(dt)
    positions = _alloc((n_paths, steps + 1, 3))
    noise = _alloc((n_paths, steps, 3))

    def run_block(index, lo, hi):
        gen = np.random.Generator(np.random.Philox(key=[seed & _MASK64, index]))
        block = gen.standard_normal((hi - lo, steps, 3))
        block *= sqrt_dt
        noise[lo:hi] = block
        x = positions[lo:hi]
        for k in range(steps):
            step = block[:, k]
            if drift is not None:
                step = drift(times[k], x[:, k]) * dt + step
            x[:, k + 1] = x[:, k] + step

    _run_blocks(n_paths, run_block)
    return _freeze(PathEnsemble(grid, positions, noise, tag, seed))


def pu_tag(case: FlowCase) -> str:
    return f"P_u({case.name})"


def simulate_pu(case: FlowCase, n_paths: int, steps: int, seed: int) -> PathEnsemble:
    """Euler-Maruyama ensemble with drift -u(1 - t, x) and unit dispersion."""
    u = case.velocity.eval

    def drift(t, x):
        return -u(1.0 - t, x)

    return _simulate(drift, n_paths, steps, seed, pu_tag(case))


def simulate_wiener(n_paths: int, steps: int, seed: int) -> PathEnsemble:
    """Driftless ensemble: discretized standard Brownian motion from 0."""
    return _simulate(None, n_paths, steps, seed, WIENER_TAG)


def require_tag(ensemble: PathEnsemble, tag: str) -> None:
    if ensemble.measure_tag != tag:
        raise TagMismatchError(
            f"ensemble carries measure {ensemble.measure_tag!r}, expected {tag!r}")


def require_same_grid(a, b) -> None:
    if a.grid.steps != b.grid.steps:
        raise GridMismatchError(f"grids differ: {a.grid.steps} vs {b.grid.steps}")


def drift_process(case: FlowCase, ensemble: PathEnsemble) -> ProcessSample:
    """The realized drift v[n, k] = -u(1 - t_k, X[n, k]) along each path.

    This is also the momentum conjugate of the kinetic-minus-pressure
    Lagrangian, since dL/dv = v.
    """
    require_tag(ensemble, pu_tag(case))
    times = ensemble.grid.times
    x = ensemble.positions
    values = np.empty_like(x)
    for k in range(ensemble.grid.steps + 1):
        values[:, k] = -case.velocity.eval(1.0 - times[k], x[:, k])
    return ProcessSample(ensemble.grid, values, f"drift({case.name})")


# ---------------------------------------------------------------------------
# flat binary dump

def dump_ensemble(ensemble: PathEnsemble, path) -> None:
    """Write the flat binary layout: magic, N, M, tag, seed, then float64 data.

    Header fields are little-endian 64-bit; the measure tag is stored as a
    64-bit byte length followed by its UTF-8 bytes.  Positions precede noise,
    both row-major.
    """
    tag = ensemble.measure_tag.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQQQ", ensemble.n_paths, ensemble.grid.steps,
                             len(tag), ensemble.seed & _MASK64))
        fh.write(tag)
        fh.write(np.ascontiguousarray(ensemble.positions, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ensemble.noise, dtype="<f8").tobytes())


def load_ensemble(path) -> PathEnsemble:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a lagrangeflow ensemble file")
        n, m, tag_len, seed = struct.unpack("<QQQQ", fh.read(32))
        tag = fh.read(tag_len).decode("utf-8")
        positions = np.frombuffer(fh.read(n * (m + 1) * 3 * 8), dtype="<f8")
        noise = np.frombuffer(fh.read(n * m * 3 * 8), dtype="<f8")
    positions = positions.reshape(n, m + 1, 3).copy()
    noise = noise.reshape(n, m, 3).copy()
    return _freeze(PathEnsemble(TimeGrid(m), positions, noise, tag, seed))


def dump_process(sample: ProcessSample, path, seed: int = 0) -> None:
    """Write a process sample in the same flat layout (values after header).

    The component count is recoverable from the file size, so the header
    stays identical to the ensemble one.
    """
    tag = sample.label.encode("utf-8")
    n = sample.values.shape[0]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQQQ", n, sample.grid.steps, len(tag), seed & _MASK64))
        fh.write(tag)
        fh.write(np.ascontiguousarray(sample.values, dtype="<f8").tobytes())


def load_process(path) -> ProcessSample:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a lagrangeflow process file")
        n, m, tag_len, _seed = struct.unpack("<QQQQ", fh.read(32))
        label = fh.read(tag_len).decode("utf-8")
        data = np.frombuffer(fh.read(), dtype="<f8")
    width = data.size // (n * (m + 1))
    shape = (n, m + 1) if width == 1 else (n, m + 1, width)
    return ProcessSample(TimeGrid(m), data.reshape(shape).copy(), label)


def process_to_csv(sample: ProcessSample, path, ensemble_mean: bool = True) -> None:
    """CSV export: column t_k, then ensemble-mean value(s) or per-path columns."""
    times = sample.grid.times
    if ensemble_mean:
        mean = sample.values.mean(axis=0)
        cols = [times] + ([mean] if mean.ndim == 1 else [mean[:, i] for i in range(3)])
        header = "t," + ",".join(
            ["mean"] if mean.ndim == 1 else [f"mean_{i + 1}" for i in range(3)])
    else:
        per_path = sample.values.reshape(sample.values.shape[0], len(times), -1)
        cols = [times] + [per_path[n, :, i]
                          for n in range(per_path.shape[0])
                          for i in range(per_path.shape[2])]
        header = "t," + ",".join(
            f"path{n}_{i}" for n in range(per_path.shape[0])
            for i in range(per_path.shape[2]))
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="")
