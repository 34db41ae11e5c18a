"""gnbgbench: memetic LSHADE workbench for composition-function benchmarks.

Core layers:
  generator  — composition functions with certified optima and gated views
  engine     — success-history DE with linear population shrink
  mutation   — scout-augmented operator with a gated CMA-ES branch
  crossover  — frozen bracket-adaptive binomial crossover
  polish     — multi-start quasi-Newton refinement under budget accounting
  harness    — seeded suites, win counting, failure labels, reports
  autoloop   — gated configuration-research loop with persistent log

service/ wraps the core behind a FastAPI app; cli is a thin client of it.
"""

__version__ = "0.1.0"

from .generator import (  # noqa: F401
    Component,
    DescriptorView,
    EvalCounter,
    InstanceSpec,
    ProblemInstance,
    TransformParams,
    descriptor_view,
    evaluate,
    load_instance,
    make_instance,
    save_instance,
)
from .engine import EAConfig, EAResult, run_ea  # noqa: F401
from .harness import (  # noqa: F401
    FailureLabel,
    RunRecord,
    SuiteConfig,
    budget_for,
    classify_failure,
    run_one,
    run_suite,
)
from .polish import LocalOptConfig, PolishVariant, run_polish  # noqa: F401
