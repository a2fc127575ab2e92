//! Per-question evidence cache, trajectory logging and the cascade guard.

mod evidence;
mod guard;
mod trace;

pub use evidence::{CacheHit, EvidenceEntry, EvidenceStore, DEFAULT_TAU};
pub use guard::{cascade_guard, GuardStatus, GuardVerdict, RejectionPatterns, DEFAULT_REJECTIONS, REFUSAL};
pub use trace::{load_trace, now_ms, EventType, TraceError, TraceEvent, Trajectory, TrajectoryStore};
