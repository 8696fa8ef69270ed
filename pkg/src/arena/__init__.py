"""Self-hostable judging service with collective dynamic-point scoring."""

from .app import ArenaService
from .config import ServiceConfig, load_config
from .errors import ArenaError
from .model import (
    Problem,
    ProblemStatus,
    Submission,
    SubmissionMode,
    UserAccount,
    UserGroup,
    Verdict,
)
from .scoring import (
    ScoringEngine,
    acceptance_rate,
    challenge_score,
    efficiency_score,
    format_points,
)
from .service import build_app

__version__ = "0.1.0"

__all__ = [
    "ArenaError",
    "ArenaService",
    "Problem",
    "ProblemStatus",
    "ScoringEngine",
    "ServiceConfig",
    "Submission",
    "SubmissionMode",
    "UserAccount",
    "UserGroup",
    "Verdict",
    "acceptance_rate",
    "build_app",
    "challenge_score",
    "efficiency_score",
    "format_points",
    "load_config",
    "__version__",
]
