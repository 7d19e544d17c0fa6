//! The three learners. Q-learning bootstraps against the realized next
//! action set; the policy-gradient learner adds adaptive dual baselines;
//! the natural-gradient learner regresses compatible-feature weights and
//! takes unit-normalized steps.

mod sas_npg;
mod sas_pg;
mod sas_q;

pub use sas_npg::{NpgEpisodeInfo, SasNpgConfig, SasNpgLearner};
pub use sas_pg::{CTarget, PgEpisodeInfo, SasPgConfig, SasPgLearner, ThetaUpdateMode};
pub use sas_q::{epsilon_greedy, QEpisodeReturns, SasQConfig, SasQLearner, StoredTransition};
