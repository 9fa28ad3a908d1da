pub mod engine;
pub mod forest;
pub mod forest_rlct;
pub mod gaussian;
pub mod selection;
pub mod sim;

pub use engine::{rlct_monomial_sos, EngineError, Interval, MonomialSos, NewtonPolyhedron, Term};
pub use forest::{
    build_forest, canonicalize, model_dimension, q_forest, steiner_subforest, subforest_lattice, CanonicalForest,
    Forest, ForestError, ModelLattice, Node,
};
pub use forest_rlct::{rlct_forest_pair, subtree_decomposition, zero_part_monomials, Rlct, RlctError, Subtree};
pub use gaussian::{
    covariance, em_fit, kl_divergence, loglik, sample, suff_stats, suff_stats_from_cov, EmConfig, EmFit,
    GaussianError, ModelParams, SufficientStats,
};
pub use selection::{
    bic, initial_tree, log_lprime, pruned_chain, sbic_all, select_exhaustive, ChainResult, ClassScore, Criterion,
    ScoreTable, Selection, SelectionError,
};
pub use sim::{
    laplace_rlct_estimate, random_subforest_at_depth, random_trivalent_tree, run_experiment, ExperimentConfig,
    ExperimentResult, LaplaceConfig, LaplaceEstimate, SimError,
};

/// Independent seed for stream `stream` of a master seed (splitmix64 finalizer).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
