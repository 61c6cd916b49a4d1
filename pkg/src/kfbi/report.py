"""Error norms, convergence studies, field dumps, figures, and benchmarks.

Norms follow the convention of the error tables this harness reproduces:
with M the per-side grid size and the sums ranging over interior nodes only,

    ‖e‖∞ = max |e_ij|          ‖e‖₂ = (1/M)·sqrt(Σ |e_ij|²)

Observed order between consecutive grids is log₂(e_M / e_{2M}). Tables are
tab-separated text; field dumps are CSV with 17-significant-digit decimals
(lossless for float64); each driver also writes a JSON manifest echoing the
configuration plus the results, and, unless figures are disabled, renders
matplotlib PNGs next to the delimited output.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .config import build_curve, build_problem_spec, build_solution
from .engine import make_backend
from .errors import ConvergenceError
from .grid import build_grid
from .timestepping import run as run_evolution

BENCH_AGREEMENT_TOL = 1e-12


def compute_errors(u_numeric, u_exact, grid, classification):
    """(‖e‖∞, ‖e‖₂) over interior nodes; complex errors use the modulus."""
    mask = classification.interior
    diff = u_numeric[mask] - u_exact(grid.X[mask], grid.Y[mask])
    abs_diff = np.abs(diff)
    e_inf = float(abs_diff.max()) if abs_diff.size else 0.0
    e_2 = float(np.sqrt(np.sum(abs_diff**2)) / grid.m)
    return e_inf, e_2


def dump_field(u, grid, classification, path, m=None, t=None, equation=None):
    """CSV dump of the interior nodes: x, y, value[, imag]."""
    mask = classification.interior
    xs, ys, vals = grid.X[mask], grid.Y[mask], u[mask]
    is_complex = np.iscomplexobj(vals)
    meta = f"# M={grid.m if m is None else m} t={t} equation={equation}\n"
    header = "x,y,value,imag\n" if is_complex else "x,y,value\n"
    with open(path, "w") as fh:
        fh.write(meta)
        fh.write(header)
        for i in range(xs.size):
            if is_complex:
                fh.write(f"{xs[i]:.17g},{ys[i]:.17g},{vals[i].real:.17g},{vals[i].imag:.17g}\n")
            else:
                fh.write(f"{xs[i]:.17g},{ys[i]:.17g},{vals[i]:.17g}\n")
    return path


def write_manifest(path, config_echo, results):
    with open(path, "w") as fh:
        json.dump({"config": config_echo, "results": results}, fh, indent=2, default=str)
    return path


def _config_echo(cfg):
    return {k: getattr(cfg, k) for k in (
        "equation", "bc", "curve", "box", "m_list", "tau0", "t_final", "solution",
        "c", "theta", "w", "splitting", "phase", "gamma", "tol", "max_iter",
        "backend", "snapshots", "out_dir", "blowup_threshold", "allow_cfl_risk",
    )}


# ---------------------------------------------------------------------------
# figures

def render_field_figure(u, grid, classification, path, title=""):
    field_vals = np.real(u) if np.iscomplexobj(u) else u
    masked = np.ma.masked_where(~classification.interior, field_vals)
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    pm = ax.pcolormesh(grid.X, grid.Y, masked, shading="auto")
    fig.colorbar(pm, ax=ax)
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def render_convergence_figure(rows, path, title=""):
    ms = [r["m"] for r in rows]
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.loglog(ms, [r["e_inf"] for r in rows], "o-", label="max norm")
    ax.loglog(ms, [r["e_2"] for r in rows], "s-", label="scaled l2 norm")
    ref = rows[0]["e_inf"]
    ax.loglog(ms, [ref * (ms[0] / m) ** 2 for m in ms], "k--", label="second order")
    ax.set_xlabel("grid size M")
    ax.set_ylabel("error at T")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def render_bench_figure(kernel_rows, path, title=""):
    names = sorted({r["kernel"] for r in kernel_rows})
    backends = sorted({r["backend"] for r in kernel_rows})
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    width = 0.8 / max(len(backends), 1)
    for k, backend in enumerate(backends):
        by_name = {r["kernel"]: r["seconds"] for r in kernel_rows if r["backend"] == backend}
        xs = np.arange(len(names)) + k * width
        ax.bar(xs, [by_name.get(n, 0.0) for n in names], width=width, label=backend)
    ax.set_xticks(np.arange(len(names)) + 0.4 - width / 2)
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("seconds")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# drivers

@dataclass
class ErrorReport:
    rows: list = field(default_factory=list)
    iteration_stats: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)


def _final_exact(cfg, solution):
    t_final = cfg.t_final

    def exact(x, y):
        return solution.u(x, y, t_final)

    return exact


def run_single(cfg, m, tau, backend=None, out_dir=None, snapshots=None, figures=None):
    """One (M, τ) evolution; returns (result, geometry, errors, wall_time)."""
    curve = build_curve(cfg)
    solution = build_solution(cfg)
    spec = build_problem_spec(cfg, tau, solution=solution)
    geometry = build_grid(cfg.box, m, curve)
    backend = make_backend(cfg.backend if backend is None else backend)
    snap = cfg.snapshots if snapshots is None else snapshots

    t0 = time.perf_counter()
    result = run_evolution(spec, geometry, backend=backend, snapshot_times=snap)
    wall = time.perf_counter() - t0
    errors = compute_errors(result.state.u, _final_exact(cfg, solution),
                            geometry.grid, geometry.classification)
    return result, geometry, errors, wall


def _order_cell(value):
    return f"{value:.2f}" if value is not None else ""


def format_table(rows):
    lines = ["M\ttau\te_inf\te_2\torder_inf\torder_2"]
    for r in rows:
        lines.append(
            f"{r['m']}\t{r['tau']:.6g}\t{r['e_inf']:.6e}\t{r['e_2']:.6e}"
            f"\t{_order_cell(r['order_inf'])}\t{_order_cell(r['order_2'])}"
        )
    return "\n".join(lines) + "\n"


def convergence_study(cfg, out_dir=None, backend=None, figures=None):
    """Run every (M, τ) level and emit the tab-separated error table.

    A failure mid-study still flushes the rows gathered so far before the
    exception propagates.
    """
    out = _prepare_out_dir(cfg.out_dir if out_dir is None else out_dir)
    do_figures = cfg.figures if figures is None else figures
    report = ErrorReport()
    rows = report.rows
    table_path = out / "convergence.tsv"
    try:
        for m in cfg.m_list:
            tau = cfg.tau_for(m)
            result, geometry, (e_inf, e_2), wall = run_single(
                cfg, m, tau, backend=backend, snapshots=())
            order_inf = order_2 = None
            if rows:
                order_inf = float(np.log2(rows[-1]["e_inf"] / e_inf))
                order_2 = float(np.log2(rows[-1]["e_2"] / e_2))
            rows.append({
                "m": m, "tau": tau, "e_inf": e_inf, "e_2": e_2,
                "order_inf": order_inf, "order_2": order_2,
            })
            iters = result.iterations
            report.iteration_stats.append({
                "m": m,
                "max": int(max(iters)) if iters else 0,
                "mean": float(np.mean(iters)) if iters else 0.0,
            })
            report.wall_times.append({"m": m, "seconds": wall,
                                      "kernels": result.kernel_times})
    finally:
        table_path.write_text(format_table(rows))
    write_manifest(out / "manifest.json", _config_echo(cfg), {
        "table": rows,
        "iterations": report.iteration_stats,
        "wall_times": report.wall_times,
    })
    if do_figures and rows:
        render_convergence_figure(rows, out / "convergence.png",
                                  title=f"{cfg.equation} ({cfg.bc})")
    return report, table_path


def solve_run(cfg, out_dir=None, backend=None, snapshots=None, figures=None):
    """Single-grid run: field dump, snapshot dumps, manifest, figure."""
    out = _prepare_out_dir(cfg.out_dir if out_dir is None else out_dir)
    do_figures = cfg.figures if figures is None else figures
    m = cfg.m_list[0]
    tau = cfg.tau_for(m)
    result, geometry, (e_inf, e_2), wall = run_single(
        cfg, m, tau, backend=backend, snapshots=snapshots)
    grid, classification = geometry.grid, geometry.classification

    dump_field(result.state.u, grid, classification, out / "field.csv",
               t=result.state.t, equation=cfg.equation)
    for snap_t, snap_u in result.snapshots:
        dump_field(snap_u, grid, classification,
                   out / f"field_t{snap_t:g}.csv", t=snap_t, equation=cfg.equation)
    write_manifest(out / "manifest.json", _config_echo(cfg), {
        "m": m, "tau": tau, "t_final": cfg.t_final,
        "e_inf": e_inf, "e_2": e_2,
        "iterations": result.iterations,
        "wall_seconds": wall,
        "kernel_times": result.kernel_times,
    })
    if do_figures:
        render_field_figure(result.state.u, grid, classification, out / "field.png",
                            title=f"{cfg.equation} at T={cfg.t_final:g} (M={m})")
    return result, (e_inf, e_2), out


def bench(cfg, out_dir=None, figures=None):
    """Time the evolution loop per backend after verifying the backends agree.

    Grid construction and workspace precomputation are excluded from the
    timed section; startup and every per-step kernel are included.
    """
    out = _prepare_out_dir(cfg.out_dir if out_dir is None else out_dir)
    do_figures = cfg.figures if figures is None else figures
    backends = cfg.backends or [cfg.backend]
    if "serial" not in backends:
        backends = ["serial"] + backends
    m = cfg.m_list[0]
    tau = cfg.tau_for(m)

    curve = build_curve(cfg)
    solution = build_solution(cfg)
    spec = build_problem_spec(cfg, tau, solution=solution)
    geometry = build_grid(cfg.box, m, curve)

    fields = {}
    rows = []
    kernel_rows = []
    for name in backends:
        backend = make_backend(name)
        ctx_t0 = time.perf_counter()
        result = run_evolution(spec, geometry, backend=backend)
        elapsed = time.perf_counter() - ctx_t0
        fields[name] = result.state.u
        rows.append({
            "backend": name, "seconds": elapsed,
            "iterations": result.iterations,
        })
        for kname, secs in sorted(result.kernel_times.items()):
            kernel_rows.append({
                "backend": name, "kernel": kname, "seconds": secs,
                "calls": result.kernel_calls.get(kname, 0),
            })
        backend.close()

    ref = fields["serial"]
    for name, u in fields.items():
        diff = float(np.max(np.abs(u - ref)))
        if diff > BENCH_AGREEMENT_TOL:
            raise ConvergenceError(
                f"backend {name!r} disagrees with serial by {diff:.3e} "
                f"(tolerance {BENCH_AGREEMENT_TOL:g}); benchmark aborted",
                iterations=0, last_residual=diff,
            )

    serial_time = rows[0]["seconds"]
    lines = [
        "# timed section: startup + stepping loop (grid/workspace setup excluded)",
        "backend\tseconds\tspeedup_vs_serial",
    ]
    for r in rows:
        r["speedup"] = serial_time / r["seconds"] if r["seconds"] > 0 else float("inf")
        lines.append(f"{r['backend']}\t{r['seconds']:.6f}\t{r['speedup']:.3f}")
    bench_path = out / "bench.tsv"
    bench_path.write_text("\n".join(lines) + "\n")

    klines = ["backend\tkernel\tseconds\tcalls"]
    for r in kernel_rows:
        klines.append(f"{r['backend']}\t{r['kernel']}\t{r['seconds']:.6f}\t{r['calls']}")
    (out / "bench_kernels.tsv").write_text("\n".join(klines) + "\n")

    write_manifest(out / "manifest.json", _config_echo(cfg), {
        "m": m, "tau": tau, "backends": rows, "kernels": kernel_rows,
        "agreement_tol": BENCH_AGREEMENT_TOL,
    })
    if do_figures and kernel_rows:
        render_bench_figure(kernel_rows, out / "bench.png",
                            title=f"kernel times, M={m}")
    return rows, bench_path


def _prepare_out_dir(out_dir):
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out
