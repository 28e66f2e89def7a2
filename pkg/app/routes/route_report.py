"""
Route for the report command.
"""
import logging
import sys

from app.models.schema import RunConfig
from app.services.identification_service import IdentificationService
from app.utils.errors import CongestionIdError

logger = logging.getLogger(__name__)


def run_report(config: RunConfig) -> int:
    """Emit plot-ready block and affinity grids from a previous identify run."""
    try:
        for path in IdentificationService(config).report():
            print(path)
        return 0
    except CongestionIdError as e:
        logger.error(f"report failed::{type(e).__name__}: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error in report::{type(e).__name__}: {e}", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
