import logging
from dataclasses import dataclass, field
from pathlib import Path

from pydantic import ValidationError

from kamlattice.storage.local.artifacts import ARTIFACTS, read_json, read_jsonl, read_table
from kamlattice.storage.local.config import ExperimentConfig, config_hash
from kamlattice.tasks.exceptions import ArtifactError
from kamlattice.tasks.verify.report import TorusRecord, VerificationReport, verify_torus
from kamlattice.workflows.experiment import verification_settings

logger = logging.getLogger(__name__)


@dataclass
class ReplayReport:
    """
    Audits recomputed from a persisted run. ``differences`` compares each audit number with the one stored in
    ``audits.json``; ``report`` is ``None`` when verification is disabled in the run's configuration.
    """
    artifact_dir: Path
    config_hash: str
    report: VerificationReport | None = None
    checks: dict[str, bool] = field(default_factory=dict)
    differences: dict[str, float] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 0 if all(self.checks.values()) else 1

    def to_json(self) -> dict:
        return {
            "artifact_dir": str(self.artifact_dir),
            "config_hash": self.config_hash,
            "report": self.report.to_json() if self.report is not None else None,
            "checks": self.checks,
            "differences": self.differences,
            "exit_code": self.exit_code,
        }


def load_run_config(artifact_dir: Path) -> ExperimentConfig:
    _, data = read_json(Path(artifact_dir) / "config.json")
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ArtifactError(f"Stored configuration in {artifact_dir} does not validate: {e.error_count()} errors") from e
    return config


def check_artifact_set(artifact_dir: Path, digest: str) -> None:
    """
    Every artifact must exist and carry the configuration hash.

    Raises:
        ArtifactError: on the first missing or inconsistent artifact.
    """
    artifact_dir = Path(artifact_dir)
    for name in ARTIFACTS:
        path = artifact_dir / name
        match path.suffix:
            case ".json":
                read_json(path, digest)
            case ".jsonl":
                for line in read_jsonl(path):
                    if line.get("config_hash") != digest:
                        raise ArtifactError(f"Trace record in {path} carries another configuration hash")
            case ".csv":
                for row in read_table(path):
                    if row.get("config_hash") != digest:
                        raise ArtifactError(f"Table row in {path} carries another configuration hash")


def replay(artifact_dir: str | Path) -> ReplayReport:
    """
    Re-run the verification audits of a finished experiment from its persisted data, without solving anything.

    Raises:
        ArtifactError: if the artifact set is incomplete, corrupt or mixes configurations.
    """
    artifact_dir = Path(artifact_dir)
    if not artifact_dir.is_dir():
        raise ArtifactError(f"Artifact directory {artifact_dir} does not exist")
    config = load_run_config(artifact_dir)
    digest = config_hash(config)
    check_artifact_set(artifact_dir, digest)

    if not config.acceptance.verify:
        logger.info(f"Verification disabled in configuration {digest[:12]}: empty replay report")
        return ReplayReport(artifact_dir, digest)

    _, torus = read_json(artifact_dir / "torus.json", digest)
    try:
        record = TorusRecord.from_json(torus)
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactError(f"Corrupt torus record in {artifact_dir}: {e}") from e
    report = verify_torus(record, verification_settings(config))
    checks = {name: report.checks[name] for name in config.acceptance.checks if name in report.checks}

    _, audits = read_json(artifact_dir / "audits.json", digest)
    stored = audits.get("verification")
    differences = {}
    if stored is not None:
        previous = VerificationReport.from_json(stored).numbers()
        differences = {name: abs(value - previous[name]) for name, value in report.numbers().items()}
    logger.info(f"Replay of {artifact_dir}: checks {checks}, largest difference {max(differences.values(), default=0.0):.3e}")
    return ReplayReport(artifact_dir, digest, report, checks, differences)
