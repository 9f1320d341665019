"""Nested mini-batch k-means with triangle-inequality bounds, plus the
lloyd and mini-batch baselines it is measured against."""
from .core import (Algorithm, BoundsTable, CentroidSet, ConfigError, Dataset, InvariantError,
                   MiniBatchState, RunConfig, RunningStats, TimeEnergyLog, recompute_stats_oracle)
from .engines import (Lloyd, MiniBatch, NestedMiniBatch, doubling_check, run_lloyd, run_mbatch,
                      run_nmbatch, stop_condition)
from .harness import (generate_mixture, monte_carlo_revisit, prepare_run, revisit_fraction,
                      run_experiment)
from .metrics import DistanceCounter, energy, nearest_centroid, squared_distance

__version__ = "0.1.0"
