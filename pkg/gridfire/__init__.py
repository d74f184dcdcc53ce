from . import config
from . import errors
from . import grid
from . import solvers
from . import model
from . import evaluation
from . import utils

__all__ = ["config", "errors", "grid", "solvers", "model", "evaluation", "utils"]
