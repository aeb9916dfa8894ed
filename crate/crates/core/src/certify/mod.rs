//! Positive-definiteness algebra of the weighted sum and its certification.

pub mod coeffs;
pub mod detf;
pub mod numeric;
pub mod roots;
pub mod scan;
pub mod sweep;

pub use coeffs::{assemble_matrix, c_coefficients, CCoeffs, QuadMatrix};
pub use detf::{coef_a, coef_b, det_diagnostics, det_f, f_gamma, DetDiagnostics};
pub use roots::{
    admissible_s, extremal_bounds, restriction_s, select_weights_general_s, w1_bounds, Branch, RootAnalysis,
};
pub use scan::{
    certify_slice, check_gamma_monotonicity, first_negative_det, landscape, scan_region, Landscape,
    LandscapeKind, RegionMap, RegionRow, RegionVerdict, RemarkWitness, SPolicy, SliceCertificate,
};
pub use sweep::{certify, certify_with, Certificate, CertifyOptions, Method, Verdict, Witness};
