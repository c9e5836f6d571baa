from celery import Celery
from src.config import AppConfig, CelerySettings

# Load configuration
app_config = AppConfig()
celery_settings = app_config.workers.celery

# Create a Celery instance
celery_app = Celery(
    "bayes_robust_sets",
    broker=celery_settings.broker_url,
    backend=celery_settings.result_backend,
    include=["src.tasks.experiment_tasks"],
)


def configure(settings: CelerySettings) -> Celery:
    """Point the shared app at the transports and serializers in ``settings``."""
    celery_app.conf.update(
        broker_url=settings.broker_url,
        result_backend=settings.result_backend,
        task_serializer=settings.task_serializer,
        accept_content=settings.accept_content,
        result_serializer=settings.result_serializer,
        task_always_eager=settings.task_always_eager,
        timezone=settings.timezone,
        enable_utc=settings.enable_utc,
    )
    return celery_app


# Configuration from config files
configure(celery_settings)

if __name__ == "__main__":
    celery_app.start()
