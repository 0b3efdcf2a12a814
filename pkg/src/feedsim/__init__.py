"""Session-level simulation environment for evaluating recommenders.

Simulated (or human) users interact with pluggable recommenders over
multi-turn sessions; trajectories are recorded, scored into retention-style
rewards, filtered by rubric judges, replayed against recorded datasets, and
scaled to populations of interacting users.
"""

from .catalog import (
    ActionKind,
    Catalog,
    ContentType,
    FileFormat,
    HistorySummary,
    InteractionRecord,
    Item,
    ItemMetadata,
    load_interactions,
    load_items,
    save_items,
    summarize_history,
)
from .errors import (
    ConfigError,
    DataFormatError,
    DuplicateItemError,
    FeedsimError,
    LLMError,
    PromptBudgetError,
    SessionError,
    SimulatorOutputError,
    UnknownItemError,
)
from .evaluation import (
    EvalReport,
    ReplayDataset,
    build_replay_dataset,
    ndcg_at_n,
    recall_at_n,
    replay_protocol,
    run_eval,
)
from .population import (
    CheckpointSchedule,
    EnvironmentState,
    Message,
    PopulationConfig,
    PopulationState,
    SocialGraph,
    env_update,
    rerun_variance,
    run_population,
    user_update,
)
from .recommender import (
    BaselineRecommender,
    InstructionFollowingRecommender,
    RecommendationList,
    RecommendationRequest,
    ReplayReranker,
    recommend_initial,
    replay_rerank,
    respond_to_instruction,
)
from .rewards import (
    JudgeVerdict,
    Quadrant,
    QuadrantThresholds,
    RewardSignal,
    Rubric,
    compute_trajectory_reward,
    filter_trajectories,
    judge_trajectory,
    quadrant_classify,
    retention_proxy,
)
from .session import (
    SessionConfig,
    SessionEngine,
    SessionMode,
    Trajectory,
    Turn,
    reset,
    run_batch,
    run_session,
    step,
    trajectory_from_dict,
    trajectory_to_dict,
    trajectory_violations,
)
from .users import (
    ActionDecision,
    Context,
    Instruction,
    ScriptedConfig,
    ScriptedSimulator,
    UserProfile,
    UserState,
    build_prompt,
    infer_implicit_signal,
    update_mindset,
)

__version__ = "0.1.0"
