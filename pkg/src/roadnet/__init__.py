"""Road-network extraction from raster map imagery.

An iterative graph search walks outward from seed points, one fixed-length
step at a time; each step is chosen by a deep belief network whose hidden
structure (neuron and layer counts) adapts during contrastive-divergence
pretraining.  Synthetic worlds with known road graphs provide training
labels and a vertex-level precision/recall harness closes the loop.
"""

from .adaptive import (
    DbnStack,
    HeadParams,
    PretrainSchedule,
    StructureThresholds,
    WdTrace,
    dbn_forward,
    format_layer_sizes,
    load_stack,
    pretrain_adaptive,
    replay_structure_log,
    save_stack,
)
from .decision import (
    ALLOWED_WINDOW_SIZES,
    STOP,
    WALK,
    DecisionInput,
    DecisionLabel,
    DecisionOutput,
    TrainSchedule,
    action_accuracy,
    decision_fn,
    encode_input,
    infer_decision,
    init_head,
    select_action,
    train_head,
)
from .errors import (
    CapacityError,
    ConfigError,
    DataError,
    DimensionError,
    RoadnetError,
)
from .evaluate import (
    MatchResult,
    match_points,
    match_vertices,
    precision,
    recall,
    report,
    report_csv,
)
from .graph import (
    RoadGraph,
    drop_isolated,
    load_graph,
    resample_uniform,
    save_graph,
)
from .raster import crop_window, draw_segment, imread, imwrite
from .rbm import (
    RbmParams,
    cd_update,
    energy,
    init_rbm,
    joint_prob_exact,
    load_params,
    log_partition_exact,
    save_params,
    visible_marginal_exact,
)
from .search import (
    Rect,
    SearchConfig,
    grid_seeds,
    load_trace,
    save_trace,
    search,
    search_multi,
)
from .world import (
    DecisionDataset,
    OracleContext,
    WorldSpec,
    generate_world,
    load_world,
    make_training_set,
    oracle_decision_fn,
    save_world,
    trace_world,
)
