"""Data-parallel kernel execution over fixed contiguous index chunks.

Every array-sweep phase of the solver (node classification, edge root
finding, jump systems, transform rows/columns, diagonal scaling, trace
extraction, density and rhs updates) is dispatched through a Backend as a
named kernel. Work is split into chunks of `chunk_size` items; chunk
boundaries depend only on (n_items, chunk_size), never on the worker count,
so serial and worker backends touch identical index ranges and produce
bitwise-identical results.

Kernel item functions receive a half-open index range (start, stop), read
shared immutable inputs, and write only their own output slots.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import ConfigError, DispatchError

KERNEL_NAMES = frozenset(
    {
        "classify-nodes",
        "edge-intersections",
        "jumps-and-corrections",
        "transform-rows",
        "transform-cols",
        "diagonal-scale",
        "extract-traces",
        "density-update",
        "rhs-update",
    }
)

DEFAULT_CHUNK_SIZE = 256


@dataclass(frozen=True)
class KernelSpec:
    """A named data-parallel sweep over n_items work items."""

    name: str
    n_items: int
    chunk_size: int = DEFAULT_CHUNK_SIZE

    def __post_init__(self):
        if self.name not in KERNEL_NAMES:
            raise ConfigError(f"unknown kernel name '{self.name}'")
        if self.n_items < 0:
            raise ConfigError("kernel item count must be non-negative")
        if self.chunk_size < 1:
            raise ConfigError("kernel chunk size must be >= 1")

    @property
    def n_chunks(self):
        # ceil(n/chunk), the block-count formula for 1D launch grids
        return (self.n_items + self.chunk_size - 1) // self.chunk_size

    def chunk_bounds(self):
        """Half-open (start, stop) ranges; fixed for all backends."""
        return [
            (k * self.chunk_size, min((k + 1) * self.chunk_size, self.n_items))
            for k in range(self.n_chunks)
        ]


@dataclass
class Backend:
    """Executes kernels and accumulates per-kernel wall time."""

    timings: dict = field(default_factory=dict)
    calls: dict = field(default_factory=dict)

    @property
    def kind(self):
        raise NotImplementedError

    def reset_timings(self):
        self.timings.clear()
        self.calls.clear()

    def dispatch(self, spec: KernelSpec, item_fn):
        """Run item_fn(start, stop) over every chunk; barrier semantics.

        Returns the elapsed wall time for this dispatch.
        """
        t0 = time.perf_counter()
        if spec.n_items > 0:
            self._run(spec, item_fn)
        elapsed = time.perf_counter() - t0
        self.timings[spec.name] = self.timings.get(spec.name, 0.0) + elapsed
        self.calls[spec.name] = self.calls.get(spec.name, 0) + 1
        return elapsed

    def _run(self, spec, item_fn):
        raise NotImplementedError

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class SerialBackend(Backend):
    """Runs chunks sequentially on the calling thread."""

    @property
    def kind(self):
        return "serial"

    def _run(self, spec, item_fn):
        for start, stop in spec.chunk_bounds():
            try:
                item_fn(start, stop)
            except Exception as exc:
                raise DispatchError(spec.name, f"items [{start},{stop}): {exc}") from exc


class WorkerBackend(Backend):
    """Runs chunks on a persistent thread pool.

    numpy/scipy kernels release the GIL, so chunks execute concurrently.
    Chunk boundaries are identical to SerialBackend's, so results match it
    bitwise regardless of scheduling order.
    """

    def __init__(self, n_workers):
        super().__init__()
        if n_workers < 1:
            raise ConfigError("worker count must be >= 1")
        self.n_workers = n_workers
        self._pool = ThreadPoolExecutor(
            max_workers=n_workers, thread_name_prefix="kfbi-worker"
        )

    @property
    def kind(self):
        return f"workers:{self.n_workers}"

    def _run(self, spec, item_fn):
        bounds = spec.chunk_bounds()
        if len(bounds) == 1:
            start, stop = bounds[0]
            try:
                item_fn(start, stop)
            except Exception as exc:
                raise DispatchError(spec.name, f"items [{start},{stop}): {exc}") from exc
            return
        futures = [self._pool.submit(item_fn, start, stop) for start, stop in bounds]
        first_exc = None
        for (start, stop), fut in zip(bounds, futures):
            try:
                fut.result()
            except Exception as exc:
                if first_exc is None:
                    first_exc = (start, stop, exc)
        if first_exc is not None:
            start, stop, exc = first_exc
            raise DispatchError(spec.name, f"items [{start},{stop}): {exc}") from exc

    def close(self):
        self._pool.shutdown(wait=True)


def make_backend(selector):
    """Build a backend from a selector string: 'serial' or 'workers:<k>'."""
    if isinstance(selector, Backend):
        return selector
    if selector is None or selector == "serial":
        return SerialBackend()
    if selector.startswith("workers:"):
        try:
            count = int(selector.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad worker count in backend selector '{selector}'")
        return WorkerBackend(count)
    raise ConfigError(
        f"unknown backend '{selector}' (expected 'serial' or 'workers:<k>')"
    )
