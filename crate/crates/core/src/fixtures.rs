//! Reference fixtures shared across the unit, integration, and acceptance
//! test suites. Values are frozen from independent hand/oracle computation;
//! the frontier test suite re-derives each one from explicit 2x2 algebra
//! before trusting it.

use crate::frontier::MomentEstimate;
use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

/// Two-asset reference instance: means (0.10, 0.20), covariance
/// diag(0.04, 0.04), risk-free rate 0.05.
pub mod two_asset {
    pub const MEAN: [f64; 2] = [0.10, 0.20];
    pub const VAR: f64 = 0.04;
    pub const RF: f64 = 0.05;

    pub const A: f64 = 50.0;
    pub const B: f64 = 7.5;
    pub const C: f64 = 1.25;

    pub const R_MVP: f64 = 0.15;
    /// 1/sqrt(50)
    pub const SIGMA_MVP: f64 = 0.141_421_356_237_309_5;
    /// sqrt(0.125)
    pub const U: f64 = 0.353_553_390_593_273_73;

    pub const R_TANGENCY: f64 = 0.175;
    /// sqrt(0.025)
    pub const SIGMA_TANGENCY: f64 = 0.158_113_883_008_418_97;
    pub const TANGENCY_WEIGHTS: [f64; 2] = [0.25, 0.75];

    /// sqrt(1.25)
    pub const MAHALANOBIS: f64 = 1.118_033_988_749_895;
    /// 7.5 / sqrt(62.5)
    pub const COS_SIM: f64 = 0.948_683_298_050_513_8;
}

/// The two-asset reference instance as a moment estimate.
pub fn two_asset_moments() -> MomentEstimate {
    MomentEstimate::new(
        DVector::from_row_slice(&two_asset::MEAN),
        DMatrix::from_diagonal(&DVector::from_element(2, two_asset::VAR)),
        21,
        NaiveDate::from_ymd_opt(2020, 1, 31).unwrap(),
    )
    .expect("reference instance is valid")
}
