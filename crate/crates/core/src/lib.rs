//! Simulation and verification tools for the Randomized Local Search (RLS)
//! balls-into-bins protocol.
//!
//! Every ball carries a rate-1 exponential clock. When it rings, the ball
//! samples a uniform destination bin and migrates iff its current bin holds
//! at least one more ball than the destination. The crate provides
//!
//! * [`config`]: load vectors and exact balance metrics,
//! * [`sampling`]: seeded streams and a dynamic weighted index,
//! * [`engine`]: the continuous-time process with phase markers,
//! * [`adversary`]: destructive moves, causal adversaries and the coupling
//!   that keeps an adversarial process "close" to the plain one,
//! * [`oracle`]: exact expected hitting times on small instances,
//! * [`bounds`]: closed-form tail bounds and phase schedules,
//! * [`harness`]: scenarios, batches, fits and CSV / JSON-lines output.

pub mod adversary;
pub mod bounds;
pub mod config;
pub mod engine;
mod error;
pub mod harness;
pub mod oracle;
pub mod sampling;

pub use adversary::{AdversarySchedule, CoupledChain, CoupledPair, Move};
pub use config::{BalanceMetrics, Configuration};
pub use engine::{Caps, Event, Marker, PhaseReport, ProcessState, ProtocolVariant, RunStatus};
pub use error::{Error, Result};
pub use oracle::{ExactChain, SortedState};

pub use sampling::{RngStream, WeightedIndex};
