/// Numerical thresholds used across the solvers.
///
/// Every routine that needs a threshold reads it from here; callers that
/// want different behaviour pass a modified copy to the `*_with` variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Eigenvalues closer than this (relative to the largest magnitude) are
    /// treated as a tie when ordering eigenvectors.
    pub eig_tie: f64,
    /// Eigenvalues above `-psd_clamp * scale` are clamped to zero.
    pub psd_clamp: f64,
    /// Eigenvalues below `-psd_reject * scale` make a matrix "not PSD".
    pub psd_reject: f64,
    /// Constraint slack accepted by feasibility checks.
    pub feasibility: f64,
    /// Relative constraint violation at which the weight search stops.
    pub weight_search_rel: f64,
    pub weight_search_max_iter: usize,
    /// Condition number above which the aggregated weight matrix is ridged.
    pub omega_max_condition: f64,
    /// Ridge size relative to `trace / n`.
    pub omega_ridge: f64,
    /// Minimum value of `1 - Tr(...)` in the robust relay structures.
    pub robust_denominator_margin: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        eig_tie: 1e-10,
        psd_clamp: 1e-10,
        psd_reject: 1e-6,
        feasibility: 1e-8,
        weight_search_rel: 1e-6,
        weight_search_max_iter: 5000,
        omega_max_condition: 1e12,
        omega_ridge: 1e-10,
        robust_denominator_margin: 1e-6,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}
