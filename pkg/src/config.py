from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass
from enum import Enum, EnumMeta
from pathlib import Path
import os
import typing
from typing import Any, Dict, List, Optional
import logging

from pyhocon import ConfigFactory, ConfigTree
from pyhocon.exceptions import ConfigException

from src.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_DIR = Path(
    os.environ.get("BAYES_ROBUST_SETS_CONFIG_DIR", Path(__file__).resolve().parent.parent / "config")
)


def _plain(value):
    """ConfigTree / ConfigList values as plain dicts and lists."""
    if isinstance(value, ConfigTree):
        return value.as_plain_ordered_dict()
    if isinstance(value, list):
        return [_plain(v) for v in value]
    return value


def typed_value_from_config_tree(hocon: ConfigTree, field_type: type, field_name: str):
    origin = typing.get_origin(field_type)
    if origin is typing.Union:
        inner = [arg for arg in typing.get_args(field_type) if arg is not type(None)]
        if hocon.get(field_name, None) is None:
            return None
        return typed_value_from_config_tree(hocon, inner[0], field_name)
    if origin in (list, List):
        (item_type,) = typing.get_args(field_type) or (Any,)
        values = hocon.get_list(field_name)
        if item_type in (int, float, str, bool):
            return [item_type(v) for v in values]
        return [_plain(v) for v in values]
    if origin in (dict, Dict):
        return dict(_plain(hocon.get_config(field_name)))
    if field_type == bool:
        return hocon.get_bool(field_name)
    if field_type == str:
        return hocon.get_string(field_name)
    if field_type == int:
        return hocon.get_int(field_name)
    if field_type == float:
        return hocon.get_float(field_name)
    if is_dataclass(field_type):
        sub_config = hocon.get_config(field_name)
        return dataclass_from_config_tree(sub_config, field_type)
    if isinstance(field_type, EnumMeta):
        enum_name = hocon.get_string(field_name)
        return field_type.from_name(enum_name)
    raise ConfigError(
        f"Cannot convert the field {field_name} to type {field_type}. This is either a failure "
        f"in the config-file or a missing feature!"
    )


def dataclass_from_config_tree(ct: ConfigTree, data_cls: type):
    """Build ``data_cls`` from a config tree; fields absent from the tree keep their defaults."""
    hints = typing.get_type_hints(data_cls)
    kwargs = {}
    for data_field in fields(data_cls):
        if data_field.name not in ct:
            if data_field.default is MISSING and data_field.default_factory is MISSING:
                raise ConfigError(f"Missing required setting '{data_field.name}' for {data_cls.__name__}")
            continue
        try:
            kwargs[data_field.name] = typed_value_from_config_tree(ct, hints[data_field.name], data_field.name)
        except (ConfigException, ValueError, TypeError) as e:
            raise ConfigError(f"Invalid value for '{data_field.name}': {e}")
    return data_cls(**kwargs)


def load_conf(path: Path) -> ConfigTree:
    if path.exists():
        try:
            return ConfigFactory.parse_file(str(path))
        except Exception as e:
            raise ConfigError(f"Cannot parse {path}: {e}") from e
    logger.warning(f"Configuration file not found at {path}")
    return ConfigTree()


class WorkerBackend(Enum):
    LOCAL = "local"
    CELERY = "celery"

    @classmethod
    def from_name(cls, name: str) -> "WorkerBackend":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ConfigError(f"Unknown worker backend '{name}', expected 'local' or 'celery'")


class ExperimentKind(Enum):
    BUILD_SET = "build-set"
    PORTFOLIO = "portfolio"
    QUEUE = "queue"
    GUARANTEE_LAB = "guarantee-lab"
    GEOMETRY = "geometry"
    BACKTEST = "backtest"

    @classmethod
    def from_name(cls, name: str) -> "ExperimentKind":
        try:
            return cls(name.strip().lower().replace("_", "-"))
        except ValueError:
            raise ConfigError(f"Unknown experiment '{name}'")

    @property
    def section(self) -> str:
        """Name of the defaults block in experiments.conf."""
        return self.value.replace("-", "_")


@dataclass
class CelerySettings:
    broker_url: str = "redis://localhost:6379/0"
    result_backend: str = "redis://localhost:6379/0"
    task_serializer: str = "json"
    accept_content: List[str] = field(default_factory=lambda: ["json"])
    result_serializer: str = "json"
    task_always_eager: bool = False
    timezone: str = "UTC"
    enable_utc: bool = True


@dataclass
class WorkerSettings:
    backend: WorkerBackend = WorkerBackend.LOCAL
    threads: int = 1
    celery: CelerySettings = field(default_factory=CelerySettings)


@dataclass
class AppSettings:
    log_level: str = "INFO"
    default_out_dir: str = "results"


@dataclass
class AppConfig:
    app: AppSettings
    workers: WorkerSettings
    experiments: ConfigTree

    def __init__(self, config_dir: Optional[str] = None):
        """Initialize configuration from the HOCON files in ``config_dir``.

        Without a directory the repository's config/ is used, or BAYES_ROBUST_SETS_CONFIG_DIR when set.
        """
        config_dir = config_dir or DEFAULT_CONFIG_DIR
        try:
            config_dir_path = Path(config_dir)

            app_config_data = load_conf(config_dir_path / "application.conf")
            workers_config_data = load_conf(config_dir_path / "workers.conf")
            self.experiments = load_conf(config_dir_path / "experiments.conf").get("experiments", ConfigTree())

            self.app = dataclass_from_config_tree(app_config_data.get("app", ConfigTree()), AppSettings)
            self.workers = dataclass_from_config_tree(workers_config_data.get("workers", ConfigTree()), WorkerSettings)

            broker_url = os.environ.get("CELERY_BROKER_URL")
            if broker_url:
                logger.info(f"Using Celery broker from environment: {broker_url}")
                self.workers.celery.broker_url = broker_url
            result_backend = os.environ.get("CELERY_RESULT_BACKEND")
            if result_backend:
                logger.info(f"Using Celery result backend from environment: {result_backend}")
                self.workers.celery.result_backend = result_backend
        except Exception as e:
            logger.error(f"Failed to load configuration from {config_dir}: {e}")
            raise

    def experiment_defaults(self, kind: ExperimentKind) -> ConfigTree:
        defaults = self.experiments.get(kind.section, None)
        if defaults is None:
            logger.warning(f"No defaults for experiment '{kind.value}' in experiments.conf")
            return ConfigTree()
        return defaults


@dataclass
class ExperimentConfig:
    """Everything one experiment run needs; echoed into the run manifest."""

    experiment: ExperimentKind
    seed: int = 0
    out_dir: str = "results"
    sizes: List[int] = field(default_factory=lambda: [500])
    repeats: int = 1
    eps: float = 0.1
    eps_bar: float = 0.5
    alpha: float = 0.1
    alphas: List[float] = field(default_factory=list)
    regimes: List[str] = field(default_factory=lambda: ["independent", "no_assumption"])
    tail: str = "upper"
    threads: int = 1
    model: Dict[str, Any] = field(default_factory=dict)
    returns_csv: Optional[str] = None
    correlation_csv: Optional[str] = None
    clip: Optional[Dict[str, Any]] = None
    holdout: int = 0
    n_customers: int = 10
    out_of_sample_draws: int = 50
    out_of_sample_level: float = 0.1
    monte_carlo_draws: int = 100000
    percentile_draws: int = 1000000

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.repeats < 1:
            raise ConfigError(f"repeats must be at least 1, got {self.repeats}")
        if self.seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {self.seed}")
        if self.threads < 1:
            raise ConfigError(f"threads must be at least 1, got {self.threads}")
        if not self.sizes or any(n < 2 for n in self.sizes):
            raise ConfigError(f"sizes must be a nonempty list of sample sizes >= 2, got {self.sizes}")
        for name in ("eps", "eps_bar", "out_of_sample_level"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {value}")
        for value in [self.alpha, *self.alphas]:
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"alpha values must lie in (0, 1], got {value}")
        if self.tail not in ("upper", "lower"):
            raise ConfigError(f"tail must be 'upper' or 'lower', got {self.tail}")
        if self.holdout < 0 or self.n_customers < 2:
            raise ConfigError("holdout must be nonnegative and n_customers at least 2")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["experiment"] = self.experiment.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        present = {key: value for key, value in data.items() if value is not None}
        return dataclass_from_config_tree(ConfigFactory.from_dict(present), cls)


def load_experiment_config(
    kind: ExperimentKind,
    app_config: AppConfig,
    config_path: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """User file (JSON or HOCON) layered over the experiments.conf defaults, then CLI overrides."""
    tree = app_config.experiment_defaults(kind)
    base = ConfigFactory.from_dict({"out_dir": app_config.app.default_out_dir, "threads": app_config.workers.threads})
    tree = tree.with_fallback(base)
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"Experiment configuration not found at {path}")
        try:
            user = ConfigFactory.parse_file(str(path))
        except Exception as e:
            raise ConfigError(f"Could not parse experiment configuration {path}: {e}")
        tree = user.with_fallback(tree)
    cleaned = {key: value for key, value in (overrides or {}).items() if value is not None}
    if cleaned:
        tree = ConfigFactory.from_dict(cleaned).with_fallback(tree)
    declared = tree.get_string("experiment", kind.value)
    if ExperimentKind.from_name(declared) is not kind:
        raise ConfigError(f"Configuration declares experiment '{declared}' but '{kind.value}' was requested")
    tree.put("experiment", kind.value, append=False)
    return dataclass_from_config_tree(tree, ExperimentConfig)
