"""
Route for the simulate command.
"""
import logging
import sys

from app.models.schema import RunConfig
from app.services.identification_service import IdentificationService
from app.utils.errors import CongestionIdError

logger = logging.getLogger(__name__)


def run_simulate(config: RunConfig) -> int:
    """
    Generate a labelled LMP dataset from a network case.

    Prints the feasible interval count and the lines that were ever congested.
    """
    try:
        service = IdentificationService(config)
        batch = service.simulate()
        lines = batch.ever_congested
        print(f"feasible intervals: {len(batch.records)} of {config.intervals}"
              + (f" ({len(batch.skipped)} infeasible skipped)" if batch.skipped else ""))
        print(f"ever-congested lines: {', '.join(str(line) for line in lines) if lines else 'none'}")
        print(f"wrote {config.out}")
        return 0
    except CongestionIdError as e:
        logger.error(f"simulate failed::{type(e).__name__}: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error in simulate::{type(e).__name__}: {e}", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
