"""
Routes package: one handler per command, each returning a process exit code.
"""
from app.routes.route_evaluate import run_evaluate
from app.routes.route_identify import run_identify
from app.routes.route_report import run_report
from app.routes.route_simulate import run_simulate

COMMANDS = {
    "simulate": run_simulate,
    "identify": run_identify,
    "evaluate": run_evaluate,
    "report": run_report,
}

__all__ = ["COMMANDS", "run_evaluate", "run_identify", "run_report", "run_simulate"]
