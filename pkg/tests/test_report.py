"""
Tests for the PDF run summary
"""

import tempfile
from pathlib import Path
from unittest import TestCase

from pimsbo.config import config_from_dict
from pimsbo.report import ReportGenerator
from pimsbo.storage import ArtifactStorage


def policy_entry(simple, cumulative, confidence=True):
    entry = {
        "simple_regret": {"mean": [1.0, simple], "stderr": [0.1, 0.05]},
        "cumulative_regret": {"mean": [1.0, cumulative], "stderr": [0.1, 0.2]},
        "modified_simple_regret": {"mean": [1.0, 0.25], "stderr": [0.0, 0.0]},
        "evaluated_std": {"per_trial_mean": [0.5, 0.7], "mean": 0.6, "std": 0.1},
        "regret_ordering_holds": True,
    }
    if confidence:
        entry["confidence"] = {"median": [1.5, 1.25], "lower": [1.0, 1.0], "upper": [2.0, 2.0]}
    return entry


SUMMARY = {
    "T": 2,
    "trials": 2,
    "grid_size": 16,
    "policies": {"TS": policy_entry(0.5, 1.5), "EI": policy_entry(0.125, 1.125, False)},
    "gamma_upper": 12.5,
    "bcr_bound": 3.25,
    "evaluated_std_pvalue": 0.01,
    "continuous_bounds": {"a": 1.0, "b": 2.0, "tau_T": 120, "s_T": 17.5, "m_T": 30.25,
                          "ts_bcr": 40.0, "ts_discretized_bcr": 35.5, "pims_bcr": 50.0,
                          "pims_bsr": 2.5},
}


class TestReportGenerator(TestCase):
    """Test the ReportGenerator class"""

    def setUp(self):
        self.test_dir = tempfile.TemporaryDirectory()
        self.storage = ArtifactStorage(Path(self.test_dir.name))
        self.generator = ReportGenerator(self.storage)

    def tearDown(self):
        self.test_dir.cleanup()

    def test_regret_rows(self):
        rows = self.generator.regret_rows(SUMMARY)
        self.assertEqual(rows[0][0], "Policy")
        self.assertEqual(rows[1], ["EI", "0.125", "0.05", "1.125", "0.2", "0.25"])
        self.assertEqual(rows[2][0], "TS")

    def test_std_rows(self):
        rows = self.generator.std_rows(SUMMARY)
        self.assertEqual(rows[1], ["EI", "0.6", "0.1", "-"])
        self.assertEqual(rows[2], ["TS", "0.6", "0.1", "1.25"])

    def test_continuous_rows(self):
        rows = self.generator.continuous_rows(SUMMARY)
        self.assertEqual(rows[0], ["Box domain", "a=1, b=2"])
        self.assertEqual(rows[1][1], "120")
        self.assertEqual(rows[-1], ["PIMS simple regret", "2.5"])
        self.assertEqual(self.generator.continuous_rows({"policies": {}}), [])

    def test_generate_report(self):
        config = config_from_dict({"kernel": "matern", "nu": 2.5, "dim": 2, "divisions": 4})
        self.storage.write_summary(SUMMARY)
        self.storage.write_manifest(config, ["summary.json"])
        output = Path(self.test_dir.name) / "summary.pdf"

        path = self.generator.generate_report(output)
        self.assertEqual(path, str(output.resolve()))
        self.assertTrue(output.read_bytes().startswith(b"%PDF"))

    def test_missing_summary(self):
        with self.assertRaises(OSError):
            self.generator.generate_report(Path(self.test_dir.name) / "summary.pdf")
