"""Logic tensor networks: fuzzy first-order logic with learned groundings."""

from .grounding import GroundingConfig, GroundingEnv, init_env
from .logic import Clause, Literal, LogicError, Signature, normalize
from .optimizer import TrainConfig, TrainingError, train
from .parser import KbDocument, ParseError, parse_formula, parse_kb, serialize_kb
from .satisfiability import GroundedTheory, completion_report, theory_from_document, total_loss

__all__ = [
    "Clause", "GroundedTheory", "GroundingConfig", "GroundingEnv", "KbDocument", "Literal", "LogicError",
    "ParseError", "Signature", "TrainConfig", "TrainingError", "completion_report", "init_env", "normalize",
    "parse_formula", "parse_kb", "serialize_kb", "theory_from_document", "total_loss", "train",
]
__version__ = "0.1.0"
