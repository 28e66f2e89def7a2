"""
Route for the evaluate command.
"""
import logging
import sys

from app.models.schema import RunConfig
from app.services.identification_service import IdentificationService
from app.utils.errors import CongestionIdError

logger = logging.getLogger(__name__)


def run_evaluate(config: RunConfig) -> int:
    """Score recovered codes against the truth file; prints total and per-line miscode."""
    try:
        report = IdentificationService(config).evaluate()
        print(f"total miscode: {report.total_miscode:.4%}")
        for label, rate in report.row_miscode.items():
            print(f"  {label}: {rate:.4%}")
        if report.k_mismatch:
            print(f"recovered {report.k_recovered} rows, truth has {report.k_true} ever-congested lines")
        return 0
    except CongestionIdError as e:
        logger.error(f"evaluate failed::{type(e).__name__}: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error in evaluate::{type(e).__name__}: {e}", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
