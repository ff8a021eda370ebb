"""
Batch experiment driver

Expands the factorial grid into instances, evaluates every setting on shared
availability realizations in a process pool, and writes deterministic CSV
outputs: per-run rows, per-cell summaries, relative improvements against a
reference setting, per-departure-position costs and beta sensitivity grids.
"""

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor, TimeoutError, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import binomtest
from tqdm import tqdm

from .base import BETA_SENSITIVE_SETTINGS, PenaltyConvention, Setting
from .config import ExperimentConfig, PlannerConfig
from .exceptions import CellTimeoutError
from .instance_gen import GenerationParams, full_factorial, generate
from .model import Instance
from .simulation import Metrics, RealizationMatrix, RunRecord, compute_metrics, sample_realizations, simulate
from .utils import format_float

logger = logging.getLogger(__name__)

SCHEMA_HEADER = "# schema: v1"

RUN_COLUMNS = [
    "instance", "setting", "run", "agent", "departure_rank",
    "search_time", "success", "visited_count", "final_station", "penalty",
]
SUMMARY_COLUMNS = [
    "instance", "setting", "status", "n_agents", "start_radius", "search_radius",
    "start_spread", "mean_availability", "beta_global", "alpha_hat", "rho_hat",
    "any_failure_rate", "t_hat", "t_max", "t_min", "rho_min", "rho_max",
]
COMPARISON_COLUMNS = ["instance", "setting", "reference", "alpha_hat", "alpha_ref", "delta_pct"]
POSITION_COLUMNS = ["setting", "n_agents", "departure_rank", "alpha_hat_i", "rho_hat_i", "instances"]
SENSITIVITY_COLUMNS = [
    "instance", "setting", "beta_global", "alpha_hat", "rho_hat", "rho_min", "t_hat", "t_max",
]


@dataclass
class InstanceJob:
    key: str
    point: Dict[str, float]
    instance: Instance
    matrix: RealizationMatrix


@dataclass
class CellTask:
    instance_key: str
    setting: Setting
    instance: Instance
    matrix: RealizationMatrix
    planner: PlannerConfig
    convention: PenaltyConvention
    timeout: float
    beta_global: Optional[float] = None

    @property
    def key(self) -> Tuple[str, str, float]:
        beta = self.instance.beta_global if self.beta_global is None else self.beta_global
        return (self.instance_key, self.setting.value, beta)


@dataclass
class CellResult:
    instance_key: str
    setting: Setting
    beta_global: float
    status: str
    digest: str
    records: List[RunRecord] = field(default_factory=list)
    metrics: Optional[Metrics] = None
    error: str = ""
    elapsed: float = 0.0


def run_cell(task: CellTask) -> CellResult:
    """Simulate one (instance, setting) cell; runs in a worker process"""
    start = time.monotonic()
    instance = task.instance
    if task.beta_global is not None:
        instance = instance.with_beta_global(task.beta_global)
    result = CellResult(
        instance_key=task.instance_key,
        setting=task.setting,
        beta_global=instance.beta_global,
        status="ok",
        digest=task.matrix.digest(),
    )
    try:
        result.records = simulate(
            task.setting, instance, task.matrix, task.planner, deadline=start + task.timeout
        )
        result.metrics = compute_metrics(result.records, instance, task.convention)
    except CellTimeoutError as e:
        result.status, result.error = "skipped", str(e)
    except Exception as e:
        result.status, result.error = "failed", f"{type(e).__name__}: {e}"
    result.elapsed = time.monotonic() - start
    return result


@dataclass
class SignTestResult:
    wins: int
    losses: int
    ties: int
    p_value: float


def sign_test(candidate: Sequence[float], reference: Sequence[float]) -> SignTestResult:
    """
    One-sided paired sign test that ``candidate`` is lower than ``reference``

    Ties are discarded; the p-value is the binomial tail of the win count.
    """
    if len(candidate) != len(reference):
        raise ValueError("paired samples must have equal length")
    wins = sum(1 for a, b in zip(candidate, reference) if a < b)
    losses = sum(1 for a, b in zip(candidate, reference) if a > b)
    ties = len(candidate) - wins - losses
    if wins + losses == 0:
        return SignTestResult(wins, losses, ties, 1.0)
    p_value = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue
    return SignTestResult(wins, losses, ties, float(p_value))


@dataclass
class ExperimentResult:
    """Result of a batch experiment"""

    successful_cells: List[Tuple[str, str, float]]
    failed_cells: List[Tuple[str, str, float]]
    skipped_cells: List[Tuple[str, str, float]]
    total_cells: int
    processing_time: float
    errors: Dict[Tuple[str, str, float], str]
    output_dir: str
    files: Dict[str, str] = field(default_factory=dict)
    cells: Dict[Tuple[str, str, float], CellResult] = field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        if self.total_cells == 0:
            return 0.0
        return (len(self.successful_cells) / self.total_cells) * 100

    def summary(self) -> str:
        return (
            f"Experiment Summary:\n"
            f"  Total cells: {self.total_cells}\n"
            f"  Successful: {len(self.successful_cells)} ({self.success_rate:.1f}%)\n"
            f"  Failed: {len(self.failed_cells)}\n"
            f"  Skipped (time cap): {len(self.skipped_cells)}\n"
            f"  Processing time: {self.processing_time:.2f} seconds\n"
            f"  Output directory: {self.output_dir}"
        )


def _derived_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


class ExperimentRunner:
    """
    Runs every configured setting on every generated instance

    Cells are independent given the shared realization matrix of their
    instance, so they are distributed over a process pool; results are
    written in a fixed (instance, setting) order regardless of completion
    order.
    """

    def __init__(self, config: ExperimentConfig, show_progress: bool = True):
        self.config = config
        self.show_progress = show_progress
        self.logger = logger

    def build_instances(self) -> List[InstanceJob]:
        """Generate one instance (per replicate) for every grid point"""
        jobs = []
        for index, point in enumerate(full_factorial(self.config.full_grid())):
            params = GenerationParams.from_config(point, self.config)
            for replicate in range(self.config.replicates):
                key = f"i{index:04d}r{replicate}"
                instance = generate(params, _derived_seed(self.config.seed, index, replicate))
                matrix = sample_realizations(
                    instance, self.config.runs, _derived_seed(self.config.seed, index, replicate, 1)
                )
                self.logger.debug(
                    f"Instance {key}: {instance.graph.n_stations} stations, "
                    f"{len(instance.agents)} agents, realization digest {matrix.digest()}"
                )
                jobs.append(InstanceJob(key, dict(point), instance, matrix))
        self.logger.info(f"Built {len(jobs)} instances")
        return jobs

    def _tasks(
        self, jobs: Sequence[InstanceJob], settings: Sequence[Setting], betas: Sequence[Optional[float]]
    ) -> List[CellTask]:
        return [
            CellTask(
                instance_key=job.key,
                setting=setting,
                instance=job.instance,
                matrix=job.matrix,
                planner=self.config.planner,
                convention=PenaltyConvention(self.config.penalty_convention),
                timeout=self.config.cell_timeout,
                beta_global=beta,
            )
            for job in jobs
            for beta in betas
            for setting in settings
        ]

    def execute(self, tasks: Sequence[CellTask]) -> ExperimentResult:
        """Evaluate cells, inline for a single job or in a process pool"""
        start_time = time.time()
        results: Dict[Tuple[str, str, float], CellResult] = {}
        errors: Dict[Tuple[str, str, float], str] = {}

        pbar = None
        if self.show_progress:
            pbar = tqdm(total=len(tasks), desc="Simulating cells", unit="cell")

        try:
            if self.config.jobs == 1:
                for task in tasks:
                    results[task.key] = run_cell(task)
                    if pbar:
                        pbar.update(1)
            else:
                self._execute_pool(tasks, results, pbar)
        finally:
            if pbar:
                pbar.close()

        successful, failed, skipped = [], [], []
        for key in sorted(results):
            cell = results[key]
            if cell.status == "ok":
                successful.append(key)
            elif cell.status == "skipped":
                skipped.append(key)
                errors[key] = cell.error
                self.logger.warning(f"Skipped {key[0]}/{key[1]}: {cell.error}")
            else:
                failed.append(key)
                errors[key] = cell.error
                self.logger.error(f"Failed {key[0]}/{key[1]}: {cell.error}")

        return ExperimentResult(
            successful_cells=successful,
            failed_cells=failed,
            skipped_cells=skipped,
            total_cells=len(tasks),
            processing_time=time.time() - start_time,
            errors=errors,
            output_dir=self.config.out_dir,
            cells=results,
        )

    def _execute_pool(
        self,
        tasks: Sequence[CellTask],
        results: Dict[Tuple[str, str, float], CellResult],
        pbar: Optional[tqdm],
    ) -> None:
        """
        Evaluate cells in a process pool under a batch wall-clock cap

        Per-cell caps are enforced inside :func:`run_cell`. When the batch cap
        is reached, pending cells are cancelled and reported as skipped and the
        pool is shut down without waiting; cells already running finish in
        their worker processes but their results are discarded.
        """
        batch_timeout = self.config.cell_timeout * (len(tasks) / self.config.jobs + 1)
        executor = ProcessPoolExecutor(max_workers=self.config.jobs)
        capped = False
        try:
            future_to_task = {executor.submit(run_cell, task): task for task in tasks}
            try:
                for future in as_completed(future_to_task, timeout=batch_timeout):
                    task = future_to_task[future]
                    try:
                        results[task.key] = future.result()
                    except Exception as e:
                        results[task.key] = CellResult(
                            task.instance_key, task.setting, task.key[2], "failed",
                            task.matrix.digest(), error=f"{type(e).__name__}: {e}",
                        )
                    if pbar:
                        pbar.update(1)
            except TimeoutError:
                capped = True
                self.logger.error("Batch wall-clock cap reached, skipping remaining cells")
                for task in future_to_task.values():
                    if task.key not in results:
                        results[task.key] = CellResult(
                            task.instance_key, task.setting, task.key[2], "skipped",
                            task.matrix.digest(), error="batch wall-clock cap reached",
                        )
        finally:
            executor.shutdown(wait=not capped, cancel_futures=True)

    def _check_shared_matrices(self, result: ExperimentResult) -> None:
        digests: Dict[str, set] = {}
        for cell in result.cells.values():
            digests.setdefault(cell.instance_key, set()).add(cell.digest)
        for key, values in sorted(digests.items()):
            if len(values) != 1:
                self.logger.error(f"Instance {key}: settings saw different realizations")
            else:
                self.logger.info(f"Instance {key}: all settings share realization digest {next(iter(values))}")

    def run(self, jobs: Optional[List[InstanceJob]] = None) -> ExperimentResult:
        """Run all settings on all instances and write the CSV outputs"""
        jobs = jobs if jobs is not None else self.build_instances()
        settings = self.config.parsed_settings
        tasks = self._tasks(jobs, settings, [None])
        self.logger.info(f"Running {len(tasks)} cells ({len(jobs)} instances x {len(settings)} settings)")
        result = self.execute(tasks)
        self._check_shared_matrices(result)

        out = Path(self.config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.files = {
            "runs": str(write_runs_csv(out / "runs.csv", jobs, result)),
            "summary": str(write_summary_csv(out / "summary.csv", jobs, result)),
            "comparison": str(
                write_comparison_csv(out / "comparison.csv", jobs, result, Setting.parse(self.config.reference))
            ),
            "positions": str(write_positions_csv(out / "positions.csv", jobs, result)),
            "metadata": str(write_metadata(out / "metadata.json", self.config, jobs)),
        }
        self.logger.info(result.summary())
        return result

    def sweep(
        self, beta_grid: Optional[Sequence[float]] = None, jobs: Optional[List[InstanceJob]] = None
    ) -> ExperimentResult:
        """Rerun the beta-sensitive settings for every global penalty in ``beta_grid``"""
        beta_grid = list(beta_grid if beta_grid is not None else self.config.beta_grid)
        settings = [s for s in self.config.parsed_settings if s in BETA_SENSITIVE_SETTINGS]
        if not settings:
            self.logger.warning("No beta-sensitive setting configured; sweep emits no rows")
        jobs = jobs if jobs is not None else self.build_instances()
        result = self.execute(self._tasks(jobs, settings, beta_grid))

        out = Path(self.config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.files = {"sensitivity": str(write_sensitivity_csv(out / "sensitivity.csv", result))}
        self.logger.info(result.summary())
        return result


def run_experiment(config: ExperimentConfig, show_progress: bool = True) -> ExperimentResult:
    return ExperimentRunner(config, show_progress).run()


def sensitivity_sweep(
    config: ExperimentConfig, beta_grid: Optional[Sequence[float]] = None, show_progress: bool = True
) -> ExperimentResult:
    return ExperimentRunner(config, show_progress).sweep(beta_grid)


# ==========================================
# CSV OUTPUTS
# ==========================================


def _writer(path: Path, columns: Sequence[str]):
    handle = path.open("w", newline="")
    handle.write(SCHEMA_HEADER + "\n")
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(columns)
    return handle, writer


def _ordered_cells(jobs: Sequence[InstanceJob], result: ExperimentResult):
    for job in jobs:
        for key in sorted(k for k in result.cells if k[0] == job.key):
            yield job, result.cells[key]


def write_runs_csv(path: Path, jobs: Sequence[InstanceJob], result: ExperimentResult) -> Path:
    handle, writer = _writer(path, RUN_COLUMNS)
    with handle:
        for job, cell in _ordered_cells(jobs, result):
            ranks = {a.id: rank for rank, a in enumerate(job.instance.agents)}
            for record in cell.records:
                for outcome in record.outcomes:
                    writer.writerow([
                        job.key,
                        cell.setting.value,
                        record.run,
                        outcome.agent,
                        ranks[outcome.agent],
                        format_float(outcome.search_time),
                        int(outcome.success),
                        len(outcome.visited),
                        "" if outcome.final_station is None else outcome.final_station,
                        format_float(job.instance.agent(outcome.agent).penalty),
                    ])
    return path


def write_summary_csv(path: Path, jobs: Sequence[InstanceJob], result: ExperimentResult) -> Path:
    handle, writer = _writer(path, SUMMARY_COLUMNS)
    with handle:
        for job, cell in _ordered_cells(jobs, result):
            point = [format_float(job.point[a]) for a in ("start_radius", "search_radius", "start_spread", "mean_availability")]
            head = [job.key, cell.setting.value, cell.status, int(job.point["n_agents"])] + point
            head.append(format_float(cell.beta_global))
            m = cell.metrics
            if m is None:
                writer.writerow(head + [""] * 8)
                continue
            writer.writerow(head + [
                format_float(v)
                for v in (m.alpha_hat, m.rho_hat, m.any_failure_rate, m.t_hat, m.t_max, m.t_min, m.rho_min, m.rho_max)
            ])
    return path


def write_comparison_csv(
    path: Path, jobs: Sequence[InstanceJob], result: ExperimentResult, reference: Setting
) -> Path:
    """Relative difference of every setting's alpha_hat to the reference setting, in percent"""
    handle, writer = _writer(path, COMPARISON_COLUMNS)
    with handle:
        for job, cell in _ordered_cells(jobs, result):
            ref = result.cells.get((job.key, reference.value, cell.beta_global))
            if cell.metrics is None or ref is None or ref.metrics is None:
                continue
            base = ref.metrics.alpha_hat
            delta = (cell.metrics.alpha_hat - base) / base * 100 if base else float("nan")
            writer.writerow([
                job.key,
                cell.setting.value,
                reference.value,
                format_float(cell.metrics.alpha_hat),
                format_float(base),
                format_float(delta),
            ])
    return path


def write_positions_csv(path: Path, jobs: Sequence[InstanceJob], result: ExperimentResult) -> Path:
    """Individual cost and success rate by departure rank, averaged over instances"""
    table: Dict[Tuple[str, int, int], List[Tuple[float, float]]] = {}
    for job, cell in _ordered_cells(jobs, result):
        if cell.metrics is None:
            continue
        for rank, agent in enumerate(job.instance.agents):
            key = (cell.setting.value, len(job.instance.agents), rank)
            table.setdefault(key, []).append(
                (cell.metrics.alpha_hat_i[agent.id], cell.metrics.rho_hat_i[agent.id])
            )
    handle, writer = _writer(path, POSITION_COLUMNS)
    with handle:
        for (setting, n_agents, rank), values in sorted(table.items()):
            writer.writerow([
                setting,
                n_agents,
                rank,
                format_float(float(np.mean([v[0] for v in values]))),
                format_float(float(np.mean([v[1] for v in values]))),
                len(values),
            ])
    return path


def write_sensitivity_csv(path: Path, result: ExperimentResult) -> Path:
    handle, writer = _writer(path, SENSITIVITY_COLUMNS)
    with handle:
        for key in sorted(result.cells):
            cell = result.cells[key]
            if cell.metrics is None:
                continue
            m = cell.metrics
            writer.writerow([
                cell.instance_key,
                cell.setting.value,
                format_float(cell.beta_global),
                format_float(m.alpha_hat),
                format_float(m.rho_hat),
                format_float(m.rho_min),
                format_float(m.t_hat),
                format_float(m.t_max),
            ])
    return path


def write_metadata(path: Path, config: ExperimentConfig, jobs: Sequence[InstanceJob]) -> Path:
    metadata = {
        "config": config.to_dict(),
        "instances": {
            job.key: {
                "point": job.point,
                "stations": job.instance.graph.n_stations,
                "realization_digest": job.matrix.digest(),
            }
            for job in jobs
        },
    }
    path.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")
    return path
