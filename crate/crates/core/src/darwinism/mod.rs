//! The spin-bath decoherence model: construction from seeded randomness, an
//! exact brute-force density-matrix engine, a linear-cost branch-wise fast
//! engine, discarding, and the analytic per-interaction decay laws.

mod branch;
mod brute;
mod model;

pub use branch::{
    bloch_norm_law, bloch_update, branch_evolve_fast, discard_ensemble, omega_update_normsq,
    props_oracle_run, BranchEnsemble, PropositionInputs, PropsReport,
};
pub use brute::{
    branch_block, brute_force_evolve, brute_force_evolve_prefix, discard_full, offdiagonal_norm,
    DEFAULT_DIM_CAP,
};
pub use model::{build_model, DarwinModel, EnSub, ModelConfig};
