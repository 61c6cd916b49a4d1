"""Chunked kernel dispatch: bounds, bookkeeping, serial/worker parity."""

import numpy as np
import pytest

from kfbi import (
    DEFAULT_CHUNK_SIZE,
    KERNEL_NAMES,
    ConfigError,
    DispatchError,
    KernelSpec,
    SerialBackend,
    WorkerBackend,
    make_backend,
)


def test_chunk_bounds_cover_every_item_once():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(0, 5000))
        size = int(rng.integers(1, 700))
        spec = KernelSpec("density-update", n, chunk_size=size)
        bounds = spec.chunk_bounds()
        assert len(bounds) == spec.n_chunks == (n + size - 1) // size
        prev_stop = 0
        for start, stop in bounds:
            assert start == prev_stop
            assert 0 < stop - start <= size
            prev_stop = stop
        if n > 0:
            assert prev_stop == n


def test_chunk_bounds_do_not_depend_on_worker_count():
    spec = KernelSpec("transform-rows", 1000, chunk_size=64)
    assert spec.chunk_bounds() == KernelSpec("transform-rows", 1000, 64).chunk_bounds()
    assert spec.chunk_bounds()[-1] == (960, 1000)


def test_kernel_spec_validation():
    with pytest.raises(ConfigError):
        KernelSpec("not-a-kernel", 10)
    with pytest.raises(ConfigError):
        KernelSpec("density-update", -1)
    with pytest.raises(ConfigError):
        KernelSpec("density-update", 10, chunk_size=0)
    # every published kernel name is accepted
    for name in KERNEL_NAMES:
        KernelSpec(name, 3)


def test_dispatch_runs_all_chunks_and_counts_calls():
    be = SerialBackend()
    out = np.zeros(1000)
    spec = KernelSpec("diagonal-scale", 1000, chunk_size=128)

    def fill(start, stop):
        out[start:stop] = np.arange(start, stop)

    elapsed = be.dispatch(spec, fill)
    assert elapsed >= 0.0
    assert np.array_equal(out, np.arange(1000.0))
    be.dispatch(spec, fill)
    assert be.calls["diagonal-scale"] == 2
    assert be.timings["diagonal-scale"] >= elapsed
    be.reset_timings()
    assert be.timings == {} and be.calls == {}


def test_dispatch_empty_kernel_is_a_noop_but_counted():
    be = SerialBackend()
    called = []
    be.dispatch(KernelSpec("rhs-update", 0), lambda s, t: called.append((s, t)))
    assert called == []
    assert be.calls["rhs-update"] == 1


@pytest.mark.parametrize("n_workers", [1, 2, 4])
def test_worker_backend_matches_serial_bitwise(n_workers):
    rng = np.random.default_rng(42)
    x = rng.standard_normal(3001)
    spec = KernelSpec("extract-traces", x.size, chunk_size=97)

    def run(be):
        out = np.empty_like(x)

        def fn(start, stop):
            out[start:stop] = np.sin(x[start:stop]) * np.sqrt(np.abs(x[start:stop]))

        be.dispatch(spec, fn)
        return out

    ref = run(SerialBackend())
    with WorkerBackend(n_workers) as be:
        got = run(be)
    assert np.array_equal(ref, got)


def test_worker_failure_reports_kernel_and_chunk():
    spec = KernelSpec("jumps-and-corrections", 1000, chunk_size=100)

    def boom(start, stop):
        if start == 300:
            raise ValueError("synthetic failure")

    with WorkerBackend(2) as be:
        with pytest.raises(DispatchError) as exc_info:
            be.dispatch(spec, boom)
    err = exc_info.value
    assert err.kernel_name == "jumps-and-corrections"
    assert "[300,400)" in str(err)
    assert "synthetic failure" in str(err)

    with pytest.raises(DispatchError):
        SerialBackend().dispatch(spec, boom)


def test_worker_single_chunk_shortcut():
    spec = KernelSpec("classify-nodes", 10, chunk_size=64)
    seen = []
    with WorkerBackend(3) as be:
        be.dispatch(spec, lambda s, t: seen.append((s, t)))
        with pytest.raises(DispatchError):
            be.dispatch(spec, _raiser)
    assert seen == [(0, 10)]


def _raiser(start, stop):
    raise RuntimeError("nope")


def test_make_backend_selectors():
    assert make_backend(None).kind == "serial"
    assert make_backend("serial").kind == "serial"
    be = make_backend("workers:3")
    assert be.kind == "workers:3" and be.n_workers == 3
    be.close()
    # an existing backend instance passes through unchanged
    ser = SerialBackend()
    assert make_backend(ser) is ser
    for bad in ("workers:x", "gpu", "workers:"):
        with pytest.raises(ConfigError):
            make_backend(bad)
    with pytest.raises(ConfigError):
        WorkerBackend(0)


def test_close_is_idempotent():
    be = WorkerBackend(2)
    be.dispatch(KernelSpec("transform-cols", 500, chunk_size=50), lambda s, t: None)
    be.close()
    be.close()
    assert DEFAULT_CHUNK_SIZE == 256
