//! Spectral reconstruction of a mixture from its 3-trail distribution.

mod companion;
mod eigen;
mod factor;
mod label;
mod merge;
mod options;
mod pipeline;
mod reconstruct;

pub use companion::{
    auto_threshold, companionship_classes, companionship_score, exact_threshold, subspace_scores, CompanionshipClasses,
};
pub use eigen::{eigendecompose_pair, fix_scaling};
pub use factor::{
    build_shuffle_matrix, cokernel_basis, cokernel_factorization, split_basis, svd_factor, CokernelFactorization,
    SvdFactors,
};
pub use label::{feasible_labelings, label_assignment, least_overlap, LabelMode};
pub use merge::{assemble_r, nonzero_rows, Assembly};
pub use options::{Mode, RecoveryOptions, Tolerances, EXACT_COMPANION_THRESHOLD};
pub use pipeline::{ca_svd, gkv_svd, recover_from_factorization, RecoveryReport, RecoveryReportFile};
pub use reconstruct::reconstruct_mixture;
