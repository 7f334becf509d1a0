"""Continual area sweeping: simulator, baselines, average-reward learners.

A robot repeatedly traverses a grid in which events appear over time,
trying to detect them quickly. This package provides the semi-Markov
gridworld simulator, detection metrics, rate-estimation and patrol
baselines, a from-scratch convolutional value network with average-reward
training, exact small-model oracles, and a config-driven experiment
harness with a CLI.
"""
from .baselines import (
    GreedyConfig,
    GreedyRateAgent,
    PatrolAgent,
    PatrolPlan,
    RateEstimateTable,
    greedy_select,
    greedy_update,
    plan_patrol,
)
from .encoding import EncodingConfig, encode_state
from .errors import (
    DisconnectedFreeSpaceError,
    EmptyListError,
    EmptyMaskError,
    MapTooSmallError,
    NoConvergenceError,
    NoEventsError,
    NonFiniteGradientError,
    NonMonotonicTimeError,
    NonRectangularError,
    NotUnichainError,
    ReplayTooSmallError,
    ShapeMismatchError,
    SweepError,
    TargetIsObstacleError,
    TooFewFreeCellsError,
    UnknownCharacterError,
    UnreachableError,
    ZeroElapsedTimeError,
)
from .events import (
    BinomialGenerator,
    Event,
    EventField,
    EventGenerator,
    FurnitureWalkGenerator,
    PeriodicGenerator,
    PersonWalkGenerator,
    spawn_tick,
)
from .grid import GridMap, load_map, shortest_path
from .harness import (
    ComparisonReport,
    ExperimentConfig,
    InstanceRow,
    InstanceSpec,
    generate_instance,
    make_generator,
    make_simulator,
    parse_experiment_config,
    run_experiment,
    sign_test_pvalue,
    train_dps_max,
    write_report_csv,
)
from .maps import BUILTIN_MAPS, builtin_map
from .rewards import RewardTracker, TrajectoryRewarder, empirical_gain, reward
from .rlearn import (
    AgentConfig,
    DeepRAgent,
    ReplayBuffer,
    build_qnetwork,
    evaluate_policy,
    explore_loop,
    load_agent,
    select_action,
)
from .sim import (
    RunLog,
    StepOutcome,
    SweepSimulator,
    metric_adt,
    metric_dps,
    write_events_csv,
    write_runlog_csv,
)
from .tabular import (
    TabularRConfig,
    TabularSMDP,
    brute_force_gain,
    exact_policy_gain,
    greedy_policy,
    gridworld_to_smdp,
    simulate_policy_dps,
    smdp_value_iteration,
    tabular_r_learning,
)

__version__ = "0.1.0"
