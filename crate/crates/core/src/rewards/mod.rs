//! Training-side signals: per-role rewards, group-relative advantages, the paired gain
//! estimator and Stage-II inspector data mining.

mod gain;
mod grpo;
mod judge;
mod scores;
mod stage2;

pub use gain::{gain_decomposition, DegenerateStratum, GainEstimate, PairedRun};
pub use grpo::{group_loss, grpo_loss, normalize_group, GroupSample, GrpoError, DEFAULT_EPSILON};
pub use judge::{judge_plan, label_with_teacher, parse_verdict, TeacherError};
pub use scores::{
    f_err, f_none, inspector_reward, planner_reward, solver_reward, sources_score, InspectorRewardBreakdown,
    InspectorWeights, PlannerRewardBreakdown, PlannerWeights, RewardWeights, SolverRewardBreakdown, SolverWeights,
};
pub use stage2::{
    final_answer_from_trace, inspection_points, load_teacher_labels, mine_stage2_dataset, read_teacher_labels,
    AugmentedState, GoldAudit, InspectionPoint, MiningError, PlanView, RecoveryAction, SolverView, Stage2Record,
    StepView, TeacherLabel, TrajectoryView,
};
