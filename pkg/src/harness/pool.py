"""Dispatch experiment repeats to local threads or to Celery workers."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List

from src.config import ExperimentConfig, WorkerBackend
from src.harness.repeats import Row, repeat_jobs, run_repeat

logger = logging.getLogger(__name__)


def _run_one(config: ExperimentConfig, n_samples: int, run_index: int) -> List[Row]:
    try:
        return run_repeat(config.experiment, config, n_samples, run_index)
    except Exception:
        logger.error(
            f"Repeat failed: experiment={config.experiment.value}, seed={config.seed}, N={n_samples}, run={run_index}",
            exc_info=True,
        )
        raise


def _run_celery(config: ExperimentConfig, jobs) -> List[List[Row]]:
    from celery import group

    from src.tasks.experiment_tasks import run_repeat_task

    payload = config.to_dict()
    signatures = group(run_repeat_task.s(config.experiment.value, payload, n, run) for n, run in jobs)
    logger.info(f"Submitted {len(jobs)} repeats of {config.experiment.value} to Celery")
    return signatures.apply_async().get()


def run_repeats(config: ExperimentConfig, backend: WorkerBackend = WorkerBackend.LOCAL) -> List[Row]:
    """All repeats of ``config``, flattened and sorted by (N, run index).

    Args:
        config: Experiment configuration; ``threads`` sizes the local pool.
        backend: Worker backend, normally the one the caller read from workers.conf.
    """
    jobs = repeat_jobs(config)
    logger.info(f"Running {len(jobs)} repeats of {config.experiment.value} on the {backend.value} backend")
    if backend is WorkerBackend.CELERY:
        results = _run_celery(config, jobs)
    elif config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as executor:
            results = list(executor.map(lambda job: _run_one(config, *job), jobs))
    else:
        results = [_run_one(config, n, run) for n, run in jobs]
    rows = [row for block in results for row in block]
    return sorted(rows, key=lambda row: (row["N"], row["run"]))
