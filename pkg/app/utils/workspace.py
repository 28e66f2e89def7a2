"""
Staged output directory: files are written to a private staging directory
and only moved into the output directory when the run succeeds.
"""
import logging
import os
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional

logger = logging.getLogger(__name__)


class OutputWorkspace:
    """
    Staging area next to the output directory.

    A failed run leaves the output directory exactly as it was.
    """

    def __init__(self, out_dir: Path, run_id: Optional[str] = None):
        self.out_dir = Path(out_dir)
        self.run_id = run_id or "run"
        self.staging: Optional[Path] = None
        self.committed: list[Path] = []
        self.stale: list[str] = []

    def create(self) -> Path:
        if self.staging is None:
            parent = self.out_dir.resolve().parent
            parent.mkdir(parents=True, exist_ok=True)
            self.staging = Path(tempfile.mkdtemp(prefix=f".{self.run_id}_", dir=parent))
            logger.debug(f"[{self.run_id}] staging outputs in {self.staging}")
        return self.staging

    def path(self, name: str) -> Path:
        return self.create() / name

    def discard(self, *patterns: str) -> None:
        """Glob patterns of files in the output directory that a commit deletes first."""
        self.stale.extend(patterns)

    def commit(self) -> list[Path]:
        """Delete stale outputs, then move every staged file in, replacing older copies."""
        if self.staging is None:
            return []
        self.out_dir.mkdir(parents=True, exist_ok=True)
        for pattern in self.stale:
            for old in sorted(self.out_dir.glob(pattern)):
                if old.is_file():
                    old.unlink()
                    logger.debug(f"[{self.run_id}] removed stale {old.name}")
        for staged in sorted(self.staging.iterdir()):
            target = self.out_dir / staged.name
            os.replace(staged, target)
            self.committed.append(target)
        logger.info(f"[{self.run_id}] wrote {len(self.committed)} file(s) to {self.out_dir}")
        return self.committed

    def cleanup(self) -> None:
        if self.staging is not None and self.staging.exists():
            shutil.rmtree(self.staging, ignore_errors=True)
        self.staging = None

    def __enter__(self) -> "OutputWorkspace":
        self.create()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        try:
            if exc_type is None:
                self.commit()
        finally:
            self.cleanup()


@contextmanager
def output_workspace(out_dir: Path, run_id: Optional[str] = None) -> Iterator[OutputWorkspace]:
    """
    Usage:
        with output_workspace(Path("out"), "ab12cd34") as ws:
            frame.to_csv(ws.path("codes.csv"))
        # files now in out/, or nothing changed if the block raised
    """
    with OutputWorkspace(out_dir, run_id) as workspace:
        yield workspace
