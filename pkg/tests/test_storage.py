"""
Tests for run artifacts
"""

import json
import tempfile
from pathlib import Path
from unittest import TestCase

from pimsbo import __version__
from pimsbo.acquisition import Box
from pimsbo.bench import gen_objective, regret_series, run_bo, trial_streams
from pimsbo.config import config_from_dict, config_hash
from pimsbo.kernel_gp import KernelSpec
from pimsbo.storage import ArtifactStorage, trace_filename
from pimsbo.theory import BoundReport, build_discretization, mig


class TestArtifactStorage(TestCase):
    """Test the ArtifactStorage class"""

    def setUp(self):
        self.test_dir = tempfile.TemporaryDirectory()
        self.storage = ArtifactStorage(Path(self.test_dir.name) / "run")
        self.storage.ensure_output_exists()

    def tearDown(self):
        self.test_dir.cleanup()

    def make_trace(self):
        kernel = KernelSpec("rbf", 0.3)
        grid = build_discretization(Box(1.0, 2), 4).as_grid()
        streams = trial_streams(0, 0, "PIMS")
        objective = gen_objective(kernel, grid, streams.objective)
        trace = run_bo(objective, "PIMS", 4, 2, 0, streams.policy, kernel=kernel,
                       noise_var=1e-4, num_features=200, noise_rng=streams.noise,
                       init_rng=streams.init)
        return trace, regret_series(trace, objective)

    def test_ensure_output_exists(self):
        self.assertTrue(self.storage.output_dir.is_dir())

    def test_trace_csv(self):
        trace, series = self.make_trace()
        path = self.storage.write_trace_csv(trace, series, 3)
        self.assertEqual(path.name, trace_filename("PIMS", 3))
        self.assertEqual(path.name, "regret_PIMS_3.csv")

        header = path.read_text().splitlines()[0]
        self.assertEqual(header, "t,policy,x_t_0,x_t_1,y_t,f_xt,confidence,sigma_at_choice,"
                                 "simple_regret,cumulative_regret,modified_simple_regret")
        rows = self.storage.read_trace_csv("PIMS", 3)
        self.assertEqual(len(rows), 4)
        for step, row, simple in zip(trace.steps, rows, series.simple):
            self.assertEqual(int(row["t"]), step.t)
            self.assertEqual(row["policy"], "PIMS")
            # repr floats read back exactly
            self.assertEqual(float(row["y_t"]), step.y)
            self.assertEqual(float(row["confidence"]), step.acquisition.confidence)
            self.assertEqual(float(row["simple_regret"]), simple)

    def test_summary_round_trip(self):
        summary = {"T": 2, "policies": {"TS": {"simple_regret": {"mean": [0.5, 0.25]}}}}
        path = self.storage.write_summary(summary)
        self.assertTrue(path.read_text().endswith("}\n"))
        self.assertEqual(self.storage.load_summary(), summary)

    def test_manifest(self):
        config = config_from_dict({"kernel": "rbf", "dim": 2, "divisions": 4, "seed": 11})
        self.storage.write_manifest(config, ["summary.json", "regret_TS_0.csv"])
        manifest = self.storage.load_manifest()
        self.assertEqual(manifest["config_hash"], config_hash(config))
        self.assertEqual(manifest["seed"], 11)
        self.assertEqual(manifest["version"], __version__)
        self.assertEqual(manifest["files"], ["regret_TS_0.csv", "summary.json"])
        self.assertEqual(config_from_dict(manifest["config"]), config)

    def test_verify_report(self):
        reports = [BoundReport("gauss_tail", 0.1, 0.2, True),
                   BoundReport("variance_sum", 3.0, 2.0, False, details={"steps": 5})]
        self.storage.write_verify_report(reports, False)
        document = self.storage.load_verify_report()
        self.assertFalse(document["pass"])
        self.assertEqual([c["name"] for c in document["checks"]], ["gauss_tail", "variance_sum"])
        self.assertEqual(document["checks"][1]["details"], {"steps": 5})
        self.assertNotIn("details", document["checks"][0])

    def test_mig_result(self):
        grid = build_discretization(Box(1.0, 1), 3).as_grid()
        result = mig(KernelSpec("rbf", 0.3), 1e-2, grid, 2, "greedy")
        path = self.storage.write_mig_result(result, 2)
        document = json.loads(path.read_text())
        self.assertEqual(document["T"], 2)
        self.assertEqual(document["mode"], "greedy")
        self.assertEqual(len(document["indices"]), 2)

    def test_missing_file(self):
        with self.assertRaises(OSError):
            self.storage.load_summary()

    def test_default_directory(self):
        self.assertEqual(ArtifactStorage().output_dir.name, "runs")
        self.assertEqual(self.storage.output_dir.name, "run")
