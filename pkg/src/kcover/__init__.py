"""Fewest-sensor k-coverage placement on 2.5-D building environments."""
import warnings

warnings.filterwarnings("ignore", message="The TBB threading layer")

from .coverage import (  # noqa: E402
    CandidateFields,
    GainField,
    PsiStack,
    Weights,
    coverage_fraction,
    coverage_fractions,
    coverage_volumes,
    f_k,
    gain,
    gain_closed_form,
    gain_field,
    nmin,
    order_of_visibility,
    psi_insert,
)
from .env import (  # noqa: E402
    CityGenParams,
    Environment,
    GridSpec,
    flat_environment,
    generate_random_city,
    load_environment,
    load_pgm,
    make_environment,
    save_environment,
    street_mask,
)
from .dataset import DatasetConfig, dataset_spectrum, export_training_dataset  # noqa: E402
from .greedy import GreedyConfig, PlacementRun, greedy_place, select_epsilon_band  # noqa: E402
from .harness import ExperimentConfig, random_baseline, run_experiment  # noqa: E402
from .parallel import ParallelConfig, merge_runs, parallel_greedy_place  # noqa: E402
from .visibility import (  # noqa: E402
    OcclusionField,
    SensorPose,
    make_sensor,
    occlusion_field,
    occlusion_field_exact,
    occlusion_field_sweep,
    visibility_at_height,
)

__version__ = "0.1.0"
