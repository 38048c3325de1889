import logging
import os
from pathlib import Path

logger = logging.getLogger(__name__)


def output_root() -> Path | None:
    """Root for relative output directories, from the KAMLATTICE_OUTPUT_ROOT environment variable if set."""
    root = os.environ.get("KAMLATTICE_OUTPUT_ROOT")
    return Path(root) if root else None


def resolve_output_dir(configured: str | Path) -> Path:
    """
    Directory an experiment writes to. A relative path is taken under the output root when one is set,
    under the working directory otherwise.
    """
    path = Path(configured)
    root = output_root()
    if root is not None and not path.is_absolute():
        path = root / path
    logger.info(f"Using output directory: {path}")
    return path
