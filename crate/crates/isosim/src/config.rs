//! Centralized numeric defaults shared by the library and the CLI.

use serde::Serialize;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_DT: f64 = 1e-2;
pub const DEFAULT_DTAU: f64 = 0.1;
pub const DEFAULT_KRYLOV_DIM: usize = 24;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_GAMMA0: f64 = 1.0;
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;

/// Dense eigensolver is used up to this dimension; Lanczos beyond.
pub const DENSE_EIG_LIMIT: usize = 2048;
/// The Hamiltonian is never materialized as a dense matrix beyond this.
pub const DENSE_MATRIX_LIMIT: usize = 4096;
/// Density-matrix (Lindblad) propagation is capped at this dimension.
pub const LINDBLAD_DIM_LIMIT: usize = 128;

/// Environment variable that overrides the random seed.
pub const SEED_ENV_VAR: &str = "ISOSIM_SEED";

/// Snapshot of every default, printed by `isosim --show-config`.
#[derive(Debug, Clone, Serialize)]
pub struct Defaults {
    pub seed: u64,
    pub dt: f64,
    pub dtau: f64,
    pub krylov_dim: usize,
    pub tol: f64,
    pub gamma0: f64,
    pub max_steps: usize,
    pub dense_eig_limit: usize,
    pub dense_matrix_limit: usize,
    pub lindblad_dim_limit: usize,
    pub seed_env_var: &'static str,
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults {
            seed: DEFAULT_SEED,
            dt: DEFAULT_DT,
            dtau: DEFAULT_DTAU,
            krylov_dim: DEFAULT_KRYLOV_DIM,
            tol: DEFAULT_TOL,
            gamma0: DEFAULT_GAMMA0,
            max_steps: DEFAULT_MAX_STEPS,
            dense_eig_limit: DENSE_EIG_LIMIT,
            dense_matrix_limit: DENSE_MATRIX_LIMIT,
            lindblad_dim_limit: LINDBLAD_DIM_LIMIT,
            seed_env_var: SEED_ENV_VAR,
        }
    }
}

/// Resolve the run seed: the `ISOSIM_SEED` environment variable overrides
/// the default.
pub fn resolve_seed() -> u64 {
    std::env::var(SEED_ENV_VAR)
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(DEFAULT_SEED)
}
