"""
Tests for the pimsbo command line
"""

import json
import tempfile
from pathlib import Path
from unittest import TestCase, mock

from click.testing import CliRunner

from pimsbo import __version__
from pimsbo.config import Config
from pimsbo.core import cli

SMALL = {
    "kernel": "rbf",
    "dim": 2,
    "divisions": 4,
    "T": 4,
    "trials": 2,
    "policies": ["TS", "PIMS"],
    "rff_features": 200,
    "init_count": 2,
}


class TestCli(TestCase):
    """Test the click commands and their exit codes"""

    def setUp(self):
        self.test_dir = tempfile.TemporaryDirectory()
        self.root = Path(self.test_dir.name)
        self.runner = CliRunner()
        self.user_config = Config(self.root / "config")
        self.patcher = mock.patch("pimsbo.core.user_config", self.user_config)
        self.patcher.start()

    def tearDown(self):
        self.patcher.stop()
        self.test_dir.cleanup()

    def write_config(self, **overrides):
        path = self.root / "experiment.json"
        path.write_text(json.dumps(dict(SMALL, **overrides)))
        return str(path)

    def invoke(self, *args):
        return self.runner.invoke(cli, list(args))

    def test_run_and_report(self):
        out = self.root / "run"
        result = self.invoke("run", "--config", self.write_config(), "--out", str(out),
                             "--seed", "5")
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("REGRET AT T=4 OVER 2 TRIALS", result.output)
        self.assertTrue((out / "regret_PIMS_1.csv").exists())
        manifest = json.loads((out / "manifest.json").read_text())
        self.assertEqual(manifest["seed"], 5)

        pdf = self.root / "summary.pdf"
        result = self.invoke("report", "--out", str(out), "--output", str(pdf))
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("Report generated successfully", result.output)
        self.assertTrue(pdf.exists())

    def test_config_error_exits_2(self):
        result = self.invoke("run", "--config", self.write_config(trials=0),
                             "--out", str(self.root / "run"))
        self.assertEqual(result.exit_code, 2)
        self.assertIn("trials", result.output)
        self.assertFalse((self.root / "run").exists())

    def test_verify_passes(self):
        out = self.root / "verify"
        result = self.invoke("verify", "--config", self.write_config(checks=["gauss_tail"]),
                             "--out", str(out))
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("PASS  gauss_tail", result.output)
        self.assertTrue((out / "verify.json").exists())

    def test_verify_without_checks(self):
        result = self.invoke("verify", "--config", self.write_config(checks=[]),
                             "--out", str(self.root / "verify"))
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("No checks selected.", result.output)

    def test_verify_failure_exits_1(self):
        config = self.write_config(checks=["variance_sum"], verify_trials=1)
        with mock.patch("pimsbo.theory.c1_constant", return_value=1e-9):
            result = self.invoke("verify", "--config", config, "--out", str(self.root / "v"))
        self.assertEqual(result.exit_code, 1)
        self.assertIn("FAIL  variance_sum_TS_0", result.output)

    def test_mig(self):
        out = self.root / "mig"
        result = self.invoke("mig", "--config", self.write_config(), "--T", "2",
                             "--mode", "exact", "--out", str(out))
        self.assertEqual(result.exit_code, 0, result.output)
        document = json.loads(result.output)
        self.assertEqual(document["T"], 2)
        self.assertEqual(document["mode"], "exact")
        self.assertEqual(document["value"], document["upper"])
        self.assertEqual(json.loads((out / "mig.json").read_text())["T"], 2)

    def test_mig_rejects_large_T(self):
        result = self.invoke("mig", "--config", self.write_config(), "--T", "20",
                             "--mode", "exact")
        self.assertEqual(result.exit_code, 2)

    def test_unknown_mode_is_usage_error(self):
        result = self.invoke("mig", "--config", self.write_config(), "--mode", "lazy")
        self.assertEqual(result.exit_code, 2)

    def test_init_config(self):
        result = self.invoke("init-config")
        self.assertEqual(result.exit_code, 0)
        self.assertIn("Created default configuration", result.output)
        self.assertTrue(self.user_config.config_file.exists())
        result = self.invoke("init-config")
        self.assertIn("Configuration already exists", result.output)

    def test_version(self):
        result = self.invoke("--version")
        self.assertEqual(result.exit_code, 0)
        self.assertIn(__version__, result.output)
