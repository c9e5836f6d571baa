import logging
from typing import Any, Dict, List

from src.config import ExperimentConfig, ExperimentKind
from src.harness.repeats import run_repeat
from src.tasks.celery_app import celery_app

logger = logging.getLogger(__name__)


@celery_app.task(bind=True)
def run_repeat_task(self, experiment: str, config_dict: Dict[str, Any], n_samples: int, run_index: int) -> List[Dict[str, Any]]:
    """Celery task running one repeat of an experiment."""
    task_name = f"{experiment} repeat"
    logger.info(f"Starting {task_name} N={n_samples} run={run_index}")

    try:
        config = ExperimentConfig.from_dict(config_dict)
        rows = run_repeat(ExperimentKind.from_name(experiment), config, n_samples, run_index)
        logger.info(f"Successfully completed {task_name} N={n_samples} run={run_index}")
        return rows
    except Exception as e:
        logger.error(
            f"Task {task_name} failed (seed={config_dict.get('seed')}, N={n_samples}, run={run_index}): {e}",
            exc_info=True,
        )
        # Re-raise the exception to mark the task as failed
        raise
