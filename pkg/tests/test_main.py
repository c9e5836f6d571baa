import json
import logging

import pytest

from src.main import main
from tests.conftest import CONFIG_DIR

EAGER_WORKERS = """workers {
  backend = "celery"
  celery {
    broker_url = "memory://"
    result_backend = "cache+memory://"
    task_always_eager = true
  }
}
"""


@pytest.fixture
def restore_celery():
    """Put the shared Celery app back the way main found it."""
    from src.tasks.celery_app import celery_app

    keys = ("broker_url", "result_backend", "task_always_eager", "task_serializer", "accept_content", "result_serializer")
    saved = {key: celery_app.conf.get(key) for key in keys}
    yield celery_app
    celery_app.conf.update(saved)


class TestMain:
    """Exit codes and outputs of the command-line entry point."""

    def test_build_set_writes_outputs(self, tmp_path):
        """Test a small build-set run end to end."""
        path = tmp_path / "set.json"
        path.write_text(json.dumps({"sizes": [50], "model": {"kind": "two_point_assets", "dimension": 3}}), encoding="utf-8")
        out_dir = tmp_path / "out"
        code = main(["--config-dir", str(CONFIG_DIR), "build-set", "--config", str(path), "--out-dir", str(out_dir), "--seed", "5"])
        assert code == 0
        manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["seed"] == 5
        assert "set_independent.json" in manifest["outputs"]

    def test_configuration_error_exit_code(self, tmp_path):
        """Test that an invalid configuration exits with code 2."""
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"eps": 2.0}), encoding="utf-8")
        assert main(["--config-dir", str(CONFIG_DIR), "portfolio", "--config", str(path)]) == 2

    def test_missing_returns_file(self, tmp_path):
        """Test that a backtest on an absent returns file fails with a nonzero code."""
        path = tmp_path / "backtest.json"
        path.write_text(json.dumps({"returns_csv": str(tmp_path / "absent.csv"), "out_dir": str(tmp_path)}), encoding="utf-8")
        assert main(["--config-dir", str(CONFIG_DIR), "backtest", "--config", str(path)]) != 0

    def test_unknown_backend_exit_code(self, tmp_path):
        """Test that an unknown worker backend in workers.conf exits with code 2."""
        config_dir = tmp_path / "conf"
        config_dir.mkdir()
        (config_dir / "workers.conf").write_text('workers { backend = "nonsense" }\n', encoding="utf-8")
        assert main(["--config-dir", str(config_dir), "queue"]) == 2

    def test_unparsable_config_exit_code(self, tmp_path):
        """Test that a HOCON syntax error in application.conf exits with code 2."""
        config_dir = tmp_path / "conf"
        config_dir.mkdir()
        (config_dir / "application.conf").write_text("app { log_level = \n", encoding="utf-8")
        assert main(["--config-dir", str(config_dir), "queue"]) == 2

    @pytest.mark.celery
    def test_config_dir_selects_worker_backend(self, tmp_path, monkeypatch, caplog, restore_celery):
        """Test that workers.conf from --config-dir drives dispatch when the working directory has no config/."""
        config_dir = tmp_path / "conf"
        config_dir.mkdir()
        (config_dir / "workers.conf").write_text(EAGER_WORKERS, encoding="utf-8")
        path = tmp_path / "queue.json"
        out_dir = tmp_path / "out"
        path.write_text(json.dumps({"sizes": [100], "repeats": 1, "seed": 9, "monte_carlo_draws": 2000}), encoding="utf-8")
        monkeypatch.chdir(tmp_path)
        caplog.set_level(logging.INFO)

        code = main(["--config-dir", str(config_dir), "queue", "--config", str(path), "--out-dir", str(out_dir)])

        assert code == 0
        assert "on the celery backend" in caplog.text
        assert "on the local backend" not in caplog.text
        assert restore_celery.conf.broker_url == "memory://"
        assert (out_dir / "manifest.json").exists()
