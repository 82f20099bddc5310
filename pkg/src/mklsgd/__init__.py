"""Min-k-loss SGD: selection math, surrogate landscape, bounds and benchmarks."""
from .losses import (Dataset, DegenerateProblemError, InvalidInputError, LossComponent, ProblemConstants,
                     dataset_constants, loss_gradient, loss_value)
from .sampling import (SelectionScheme, UnsupportedClosedFormError, make_rng, rank_fractions,
                       rank_probabilities, select_batch, select_index, select_indices)
from .optimizer import OptimizerConfig, StepSchedule, Trajectory, ema_readout, error_to_target, run
from .surrogate import (OrderedLossProfile, ScanTable, StationaryReport, find_stationary_point, ordering,
                        scan_line, surrogate_gradient, surrogate_value)

__version__ = "0.1.0"
