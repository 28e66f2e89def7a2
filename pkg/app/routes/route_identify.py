"""
Route for the identify command.
"""
import logging
import sys

from app.models.schema import RunConfig
from app.services.identification_service import IdentificationService
from app.utils.errors import CongestionIdError, RankDeficitError

logger = logging.getLogger(__name__)


def run_identify(config: RunConfig) -> int:
    """Recover the basis and status codes from an LMP panel, printing per-stage seconds."""
    try:
        service = IdentificationService(config)
        result = service.identify()
        print(f"basis vectors: {result.basis.k} ({', '.join(result.basis.provenance)})")
        print(f"bottom-up rounds: {len(result.bottom_up.rounds)}"
              + (", top-down engaged" if result.top_down is not None else ""))
        for stage, seconds in result.timings.items():
            print(f"  {stage:<24} {seconds:.3f}s")
        print(f"wrote {config.out}")
        return 0
    except RankDeficitError as e:
        logger.error(f"identify failed::{e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        print(f"missing={e.missing} residual_columns={e.residual_columns}", file=sys.stderr)
        return e.exit_code
    except CongestionIdError as e:
        logger.error(f"identify failed::{type(e).__name__}: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error in identify::{type(e).__name__}: {e}", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
