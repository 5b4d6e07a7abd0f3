//! Phase I: rank tracking and low-rank completion of the measurement matrix.

mod complete;
mod rank;

pub use complete::{
    complete_matrix, default_mu, r1mc_complete, refine_channel_estimate, refine_matrix, soft_shrink, CompletionParams,
    CompletionResult, RankPolicy, RefinedEstimate, DEFAULT_MAX_ITERS, DEFAULT_TOL_EPS,
};
pub use rank::{
    ar_fit, ar_predict, effective_rank, estimate_rank, noise_edge, rank_gap_estimate, RankTrack, AR_WINDOW, MAX_AR_ORDER,
};
