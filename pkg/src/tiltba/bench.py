"""Experiment execution, summary tables, trace files and derivative checks."""

from __future__ import annotations

import csv
import io
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import calculus
from .lm import LMConfig, lm_solve
from .model import Dataset, l1_residual
from .oca import AdaptiveConfig, OCAConfig, oca_adaptive_solve, oca_solve
from .serialize import load_dataset
from .synth import SynthConfig, generate
from .trace import IterationRecord, SolverReport, Termination

log = logging.getLogger(__name__)

SOLVERS = ("lm", "oca", "oca_adaptive")
TABLE_COLUMNS = ("Data", "Method", "R/mu0", "Iteration", "Initial residual", "Final residual", "Time")
TRACE_COLUMNS = ("iter", "cost", "l1", "step_norm", "damping_or_weight", "elapsed_ms")

SolverConfig = Union[LMConfig, OCAConfig, AdaptiveConfig]


@dataclass(frozen=True)
class SolverSpec:
    name: str
    config: SolverConfig

    def __post_init__(self):
        expected = {"lm": LMConfig, "oca": OCAConfig, "oca_adaptive": AdaptiveConfig}
        if self.name not in expected:
            raise ValueError(f"unknown solver {self.name!r}; expected one of {SOLVERS}")
        if type(self.config) is not expected[self.name]:
            raise ValueError(f"solver {self.name!r} needs a {expected[self.name].__name__}")

    @property
    def method(self) -> str:
        return {"lm": "L-M", "oca": "OCA", "oca_adaptive": "OCA-adaptive"}[self.name]

    @property
    def weight_label(self) -> str:
        if self.name == "lm":
            return f"mu0={self.config.mu0:g}"
        if self.name == "oca":
            return f"R={self.config.lambda0:g}I"
        return f"R0={self.config.lambda0:g}I"

    def run(self, dataset: Dataset, x0, l1_mode: str = "visible") -> SolverReport:
        if self.name == "lm":
            return lm_solve(dataset, x0, self.config, l1_mode)
        if self.name == "oca":
            return oca_solve(dataset, x0, self.config, l1_mode)
        return oca_adaptive_solve(dataset, x0, self.config, l1_mode)


DatasetSource = Union[str, Path, SynthConfig, Dataset]


@dataclass
class ExperimentSpec:
    """What to run: every dataset (per seed for synthetic sources) against every solver.

    ``seeds`` overrides the seed of synthetic sources; file sources ignore it.
    ``repetitions`` repeats each job, useful for timing.
    """

    datasets: Sequence[DatasetSource]
    solvers: Sequence[SolverSpec]
    repetitions: int = 1
    seeds: Optional[Sequence[int]] = None
    l1_mode: str = "visible"
    jobs: int = 1

    def __post_init__(self):
        if not self.solvers:
            raise ValueError("experiment needs at least one solver")
        if not self.datasets:
            raise ValueError("experiment needs at least one dataset")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")


@dataclass
class SummaryRow:
    data: str
    method: str
    weight: str
    iterations: int
    initial_residual: float
    final_residual: float
    time_s: float
    status: str = Termination.CONVERGED.value
    seed: Optional[int] = None


@dataclass
class RunResult:
    row: SummaryRow
    report: SolverReport
    trace_path: Optional[Path] = None


def _resolve(source: DatasetSource, seeds) -> list[tuple[str, Dataset, Optional[int]]]:
    if isinstance(source, Dataset):
        return [(str(source.metadata.get("label", "dataset")), source, None)]
    if isinstance(source, SynthConfig):
        configs = [replace(source, seed=s) for s in seeds] if seeds is not None else [source]
        return [(c.label(), generate(c)[0], c.seed) for c in configs]
    path = Path(source)
    return [(path.stem, load_dataset(path)[0], None)]


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9.=+-]+", "_", text).strip("_")


def run_experiment(
    spec: ExperimentSpec, trace_dir=None, timing: bool = True
) -> list[RunResult]:
    """Run all jobs of ``spec``; results come back in spec order.

    Wall time covers the solve call only. Solver failures are reported in
    the row ``status``. With ``timing=False`` trace and table files carry
    zero times so repeated sweeps are byte-identical.
    """
    datasets = [d for src in spec.datasets for d in _resolve(src, spec.seeds)]
    jobs = [
        (label, ds, seed, solver, rep)
        for label, ds, seed in datasets
        for solver in spec.solvers
        for rep in range(spec.repetitions)
    ]
    if trace_dir is not None:
        trace_dir = Path(trace_dir)
        trace_dir.mkdir(parents=True, exist_ok=True)

    def execute(index: int) -> RunResult:
        label, ds, seed, solver, rep = jobs[index]
        x0 = ds.initial_params()
        initial = l1_residual(ds, x0, spec.l1_mode)
        t0 = time.perf_counter()
        report = solver.run(ds, x0, spec.l1_mode)
        elapsed = time.perf_counter() - t0
        final = l1_residual(ds, report.params, spec.l1_mode)
        if report.termination is Termination.NUMERICAL_FAILURE:
            log.warning("%s / %s %s: %s", label, solver.method, solver.weight_label, report.message)
        row = SummaryRow(
            data=label,
            method=solver.method,
            weight=solver.weight_label,
            iterations=report.iterations,
            initial_residual=initial,
            final_residual=final,
            time_s=elapsed if timing else 0.0,
            status=report.termination.value,
            seed=seed,
        )
        path = None
        if trace_dir is not None:
            name = f"{index:04d}_{_slug(label)}_{solver.name}_{_slug(solver.weight_label)}"
            if spec.repetitions > 1:
                name += f"_rep{rep}"
            path = trace_dir / f"{name}.csv"
            if report.trace:
                emit_trace(report, path, timing=timing)
            else:
                # failed before the first step: keep a header-only file so sweeps stay aligned
                path.write_text(",".join(TRACE_COLUMNS) + "\n")
        return RunResult(row, report, path)

    if spec.jobs > 1:
        with ThreadPoolExecutor(max_workers=spec.jobs) as pool:
            results = list(pool.map(execute, range(len(jobs))))
    else:
        results = [execute(i) for i in range(len(jobs))]
    return results


def emit_table(rows: Sequence[SummaryRow], format: str = "markdown") -> str:
    """Render rows with the fixed column set, residuals and seconds to 3 decimals."""
    if not rows:
        raise ValueError("no rows to render")
    body = [
        [
            r.data,
            r.method,
            r.weight,
            str(r.iterations),
            f"{r.initial_residual:.3f}",
            f"{r.final_residual:.3f}",
            f"{r.time_s:.3f}",
        ]
        for r in rows
    ]
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        writer.writerows(body)
        return buf.getvalue()
    if format != "markdown":
        raise ValueError(f"unknown table format {format!r}")
    widths = [max(len(h), *(len(b[c]) for b in body)) for c, h in enumerate(TABLE_COLUMNS)]

    def line(cells):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"

    out = [line(TABLE_COLUMNS), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    out += [line(b) for b in body]
    return "\n".join(out) + "\n"


def emit_trace(report: SolverReport, path, timing: bool = True) -> None:
    if not report.trace:
        raise ValueError("report has an empty trace")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in report.trace:
            writer.writerow([
                r.iter,
                repr(r.cost),
                repr(r.l1),
                repr(r.step_norm),
                repr(r.damping_or_weight),
                repr(r.elapsed_ms if timing else 0.0),
            ])


def read_trace(path) -> list[IterationRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected trace header {reader.fieldnames}")
        return [
            IterationRecord(
                iter=int(row["iter"]),
                **{k: float(row[k]) for k in TRACE_COLUMNS[1:]},
            )
            for row in reader
        ]


@dataclass
class DerivativeCheck:
    gradient_error: float
    hessian_error: float
    jacobian_error: float
    thresholds: tuple[float, float, float] = (1e-6, 1e-5, 1e-6)

    @property
    def results(self) -> dict[str, bool]:
        errs = (self.gradient_error, self.hessian_error, self.jacobian_error)
        return {
            name: bool(err < tol)
            for name, err, tol in zip(("gradient", "hessian", "jacobian"), errs, self.thresholds)
        }

    @property
    def passed(self) -> bool:
        return all(self.results.values())

    def format(self) -> str:
        errs = (self.gradient_error, self.hessian_error, self.jacobian_error)
        lines = []
        for (name, ok), err, tol in zip(self.results.items(), errs, self.thresholds):
            lines.append(f"{name:<9} max rel error {err:.3e} (< {tol:g}) {'PASS' if ok else 'FAIL'}")
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    """``max |a - r| / (1 + max |a|)``."""
    return float(np.max(np.abs(analytic - reference)) / (1.0 + np.max(np.abs(analytic))))


def check_derivatives(
    dataset: Dataset,
    params=None,
    h_rel: float = 1e-6,
    gradient_fn: Callable = calculus.gradient,
    hessian_fn: Callable = calculus.hessian,
    jacobian_fn: Callable = calculus.jacobian,
) -> DerivativeCheck:
    """Compare analytic derivatives with central finite differences.

    The Hessian reference differentiates the analytic gradient; the gradient
    and Jacobian references difference the cost and residual vector.
    """
    x = dataset.initial_params() if params is None else np.asarray(params, dtype=float)
    return DerivativeCheck(
        gradient_error=relative_error(gradient_fn(dataset, x), calculus.fd_gradient(dataset, x, h_rel)),
        hessian_error=relative_error(hessian_fn(dataset, x), calculus.fd_hessian(dataset, x, h_rel)),
        jacobian_error=relative_error(jacobian_fn(dataset, x), calculus.fd_jacobian(dataset, x, h_rel)),
    )


def random_instance(rng: np.random.Generator, m: int = 3, n: int = 4, visible_frac: float = 0.75) -> Dataset:
    """Small random dataset with generic cameras and mixed visibility."""
    cams = np.column_stack([
        rng.uniform(0.8, 1.25, m),
        rng.uniform(-0.3, 0.3, m),
        rng.uniform(-1.0, 1.0, m),
        rng.uniform(-0.3, 0.3, m),
        rng.uniform(-20, 20, (m, 2)),
    ])
    pts = rng.uniform([-400, -400, -200], [400, 400, 200], (n, 3))
    marker = np.repeat(np.arange(n), m)
    image = np.tile(np.arange(m), n)
    visible = rng.random(m * n) < visible_frac
    visible[rng.integers(m * n)] = True
    uv = rng.uniform(-500, 500, (m * n, 2))
    return Dataset(cams, pts, marker, image, uv, visible, metadata={"label": "random"})
