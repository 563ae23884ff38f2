"""
Storage management for pimsbo - writes run artifacts and reads them back
"""

import csv
import io
import json
import logging
from pathlib import Path

from pimsbo import __version__
from pimsbo.config import config_hash, default_output_dir, serialize_config

logger = logging.getLogger(__name__)

TRACE_PREFIX = "regret_"
SUMMARY_FILE = "summary.json"
MANIFEST_FILE = "manifest.json"
VERIFY_FILE = "verify.json"
MIG_FILE = "mig.json"


def trace_filename(policy, trial):
    return f"{TRACE_PREFIX}{policy}_{trial}.csv"


def _dump_json(document):
    return json.dumps(document, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


class ArtifactStorage:
    """Manages the output directory of one experiment or verifier run"""

    def __init__(self, output_dir=None):
        """Initialize with the given directory or the per-user runs directory"""
        self.output_dir = Path(output_dir) if output_dir else default_output_dir()

    def ensure_output_exists(self):
        if not self.output_dir.exists():
            self.output_dir.mkdir(parents=True, exist_ok=True)

    def _write_text(self, name, text):
        path = self.output_dir / name
        try:
            with open(path, 'w', encoding="utf-8", newline="") as f:
                f.write(text)
        except OSError as e:
            raise OSError(f"Error saving {path}: {e}") from e
        return path

    def _read_json(self, name):
        path = self.output_dir / name
        try:
            with open(path, 'r', encoding="utf-8") as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise OSError(f"Error loading {path}: {e}") from e

    def write_trace_csv(self, trace, series, trial):
        """Write one trace with its regret series as CSV

        Floats are written with repr so reruns reproduce the bytes exactly.
        """
        dim = trace.initial_inputs.shape[1]
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["t", "policy"] + [f"x_t_{i}" for i in range(dim)] + [
            "y_t", "f_xt", "confidence", "sigma_at_choice",
            "simple_regret", "cumulative_regret", "modified_simple_regret"])
        for k, step in enumerate(trace.steps):
            writer.writerow([step.t, trace.policy.value] + [repr(float(v)) for v in step.x] + [
                repr(step.y), repr(step.f_x), repr(step.acquisition.confidence),
                repr(step.sigma), repr(float(series.simple[k])),
                repr(float(series.cumulative[k])), repr(float(series.modified_simple[k]))])
        return self._write_text(trace_filename(trace.policy.value, trial), buffer.getvalue())

    def read_trace_csv(self, policy, trial):
        path = self.output_dir / trace_filename(policy, trial)
        with open(path, 'r', encoding="utf-8", newline="") as f:
            return list(csv.DictReader(f))

    def write_summary(self, summary):
        return self._write_text(SUMMARY_FILE, _dump_json(summary))

    def load_summary(self):
        return self._read_json(SUMMARY_FILE)

    def write_manifest(self, config, files):
        """Record what is needed to reproduce every artifact byte for byte"""
        manifest = {
            "config": json.loads(serialize_config(config)),
            "config_hash": config_hash(config),
            "seed": config.seed,
            "version": __version__,
            "files": sorted(files),
        }
        return self._write_text(MANIFEST_FILE, _dump_json(manifest))

    def load_manifest(self):
        return self._read_json(MANIFEST_FILE)

    def write_verify_report(self, reports, passed):
        document = {"pass": passed, "checks": [report.to_dict() for report in reports]}
        return self._write_text(VERIFY_FILE, _dump_json(document))

    def load_verify_report(self):
        return self._read_json(VERIFY_FILE)

    def write_mig_result(self, result, T):
        return self._write_text(MIG_FILE, _dump_json(dict(result.to_dict(), T=T)))
