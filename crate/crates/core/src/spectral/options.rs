use serde::{Deserialize, Serialize};

/// Numerical thresholds of the reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative co-kernel residual and singular-value cutoff.
    pub ker: f64,
    /// Relative rank cutoff in pseudoinverses.
    pub rank: f64,
    /// Angular distance under which two columns are the same component.
    pub dup: f64,
    /// Relative separation required between eigenvalues.
    pub eig: f64,
    /// Largest tolerated imaginary part, relative to the largest eigenvalue.
    pub imag: f64,
    /// Smallest tolerated scale factor, relative to the largest.
    pub scale: f64,
    /// Starting probability below which a division is not trusted.
    pub start: f64,
    /// Zero-row cutoff relative to the largest row norm.
    pub row: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            ker: 1e-8,
            rank: 1e-8,
            dup: 1e-6,
            eig: 1e-8,
            imag: 1e-6,
            scale: 1e-10,
            start: 1e-9,
            row: 1e-6,
        }
    }
}

/// How companionship classes, merging and labels are decided.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Threshold sweep, exact deduplication, feasibility search.
    Exact,
    /// Clustered companionship classes, agglomerative merging, least-overlap labels.
    Noisy,
}

/// Options of the spectral recovery.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecoveryOptions {
    /// `None` picks `Exact` for exact distributions and `Noisy` otherwise.
    pub mode: Option<Mode>,
    /// Whether hypothesis violations abort (`true`) or become warnings.
    /// `None` means strict in exact mode.
    pub strict: Option<bool>,
    /// Number of representative/companion draws; `None` means 1 in exact
    /// mode and 5 in noisy mode.
    pub repetitions: Option<usize>,
    pub seed: u64,
    /// Companionship score cutoff (single linkage in noisy mode). `None`
    /// means a gap-based cutoff below `1e-6` in exact mode; in noisy mode it
    /// means clustering subspace scores and keeping the partition with the
    /// smallest residual.
    pub companion_threshold: Option<f64>,
    /// Score companionship with random probes instead of exact Penrose residuals.
    pub probe_scores: bool,
    /// Largest number of feasible labelings compared by residual.
    pub max_labelings: usize,
    pub tol: Tolerances,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            mode: None,
            strict: None,
            repetitions: None,
            seed: 0,
            companion_threshold: None,
            probe_scores: false,
            max_labelings: 16,
            tol: Tolerances::default(),
        }
    }
}

/// Upper limit of the companionship cutoff on exact inputs.
pub const EXACT_COMPANION_THRESHOLD: f64 = 1e-6;

impl RecoveryOptions {
    pub(crate) fn resolve_mode(&self, exact_input: bool) -> Mode {
        self.mode.unwrap_or(if exact_input { Mode::Exact } else { Mode::Noisy })
    }

    pub(crate) fn resolve_strict(&self, mode: Mode) -> bool {
        self.strict.unwrap_or(mode == Mode::Exact)
    }

    pub(crate) fn resolve_repetitions(&self, mode: Mode) -> usize {
        self.repetitions
            .unwrap_or(match mode {
                Mode::Exact => 1,
                Mode::Noisy => 5,
            })
            .max(1)
    }
}
