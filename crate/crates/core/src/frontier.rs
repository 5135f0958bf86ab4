//! Efficient-frontier geometry: rolling moments, the frontier's closed-form
//! coefficients, efficient weights, and tangency portfolios.
//!
//! The frontier of an n-asset universe with mean vector `r` and covariance
//! `V` is parameterized two ways:
//!
//! * by `A = e'V^-1 e`, `B = r'V^-1 e`, `C = r'V^-1 r`, giving
//!   `sigma^2(m) = (A m^2 - 2Bm + C) / (AC - B^2)`;
//! * by the vertex and curvature `(r_mvp, sigma_mvp, u)`, giving
//!   `sigma^2(m) = ((m - r_mvp)/u)^2 + sigma_mvp^2`.
//!
//! The two forms are algebraically identical; the second is what the
//! forecaster predicts. All quantities are in daily units.

use crate::data::ReturnPanel;
use chrono::NaiveDate;
use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

/// Relative threshold below which `AC - B^2` is treated as a degenerate
/// frontier.
pub const DEGENERACY_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum FrontierError {
    #[error("window length must be at least 2, got {0}")]
    WindowTooShort(usize),
    #[error("need {required} return rows ending at {as_of}, have {actual}")]
    InsufficientHistory {
        required: usize,
        actual: usize,
        as_of: NaiveDate,
    },
    #[error("date {0} not present in panel")]
    DateNotFound(NaiveDate),
    #[error("covariance matrix could not be conditioned into invertibility")]
    ConditioningFailed,
    #[error("covariance matrix is singular")]
    SingularCovariance,
    #[error("frontier coefficients broke down (A={a}, C={c}; both must be positive)")]
    NumericalBreakdown { a: f64, c: f64 },
    #[error("degenerate frontier: AC - B^2 = {discriminant} is not positive")]
    DegenerateFrontier { discriminant: f64 },
    #[error("no finite tangency: risk-free rate {rf} is not below the vertex return {r_mvp}")]
    NoFiniteTangency { r_mvp: f64, rf: f64 },
    #[error("no tangency on the efficient branch: B - A*rf = {0} is not positive")]
    NoUpperBranchTangency(f64),
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),
    #[error("covariance asymmetry {0} exceeds tolerance")]
    AsymmetricCovariance(f64),
    #[error("no dates produced a valid frontier")]
    NoValidDates,
}

/// Mean vector and covariance matrix for one rolling window, after
/// conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    window_len: usize,
    as_of: NaiveDate,
}

impl MomentEstimate {
    pub fn new(
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        window_len: usize,
        as_of: NaiveDate,
    ) -> Result<Self, FrontierError> {
        if window_len < 2 {
            return Err(FrontierError::WindowTooShort(window_len));
        }
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(FrontierError::InvalidCoefficients(format!(
                "covariance is {}x{} but mean has {n} entries",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let mut asymmetry = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                asymmetry = asymmetry.max((cov[(i, j)] - cov[(j, i)]).abs());
            }
        }
        if asymmetry >= 1e-12 {
            return Err(FrontierError::AsymmetricCovariance(asymmetry));
        }
        Ok(Self {
            mean,
            cov,
            window_len,
            as_of,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn as_of(&self) -> NaiveDate {
        self.as_of
    }

    pub fn n_assets(&self) -> usize {
        self.mean.len()
    }
}

/// The frontier's closed-form scalars `A`, `B`, `C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MertonCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl MertonCoefficients {
    pub fn discriminant(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    fn degeneracy_threshold(&self) -> f64 {
        DEGENERACY_TOL * (self.a * self.c).max(1.0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.discriminant() <= self.degeneracy_threshold()
    }
}

/// Vertex-and-curvature frontier parameterization: the minimum-variance
/// point `(sigma_mvp, r_mvp)` and the curvature rate `u`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InterpretableCoefficients {
    pub r_mvp: f64,
    pub sigma_mvp: f64,
    pub u: f64,
}

impl InterpretableCoefficients {
    pub fn is_valid(&self) -> bool {
        self.r_mvp.is_finite()
            && self.sigma_mvp.is_finite()
            && self.u.is_finite()
            && self.sigma_mvp > 0.0
            && self.u > 0.0
    }
}

/// A `(sigma, return)` pair in daily units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierPoint {
    pub sigma: f64,
    pub ret: f64,
}

/// Portfolio weights. Frontier portfolios sum to 1 before leverage scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(pub DVector<f64>);

impl WeightVector {
    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.sum()
    }

    /// Gross exposure `sum(|w_i|)`.
    pub fn gross_exposure(&self) -> f64 {
        self.0.iter().map(|w| w.abs()).sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// Mahalanobis length of the mean vector and its cosine similarity to the
/// ones vector under the `V^-1` inner product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UDecomposition {
    pub mahalanobis: f64,
    pub cos_sim: f64,
}

/// Per-date interpretable coefficients for one window length.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSeries {
    pub dates: Vec<NaiveDate>,
    pub records: Vec<InterpretableCoefficients>,
    pub window_len: usize,
}

impl CoefficientSeries {
    pub fn new(
        dates: Vec<NaiveDate>,
        records: Vec<InterpretableCoefficients>,
        window_len: usize,
    ) -> Result<Self, FrontierError> {
        if dates.len() != records.len() {
            return Err(FrontierError::InvalidCoefficients(format!(
                "{} dates vs {} records",
                dates.len(),
                records.len()
            )));
        }
        if dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FrontierError::InvalidCoefficients(
                "series dates must be strictly increasing".to_string(),
            ));
        }
        Ok(Self {
            dates,
            records,
            window_len,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn record_on(&self, date: NaiveDate) -> Option<&InterpretableCoefficients> {
        self.dates
            .binary_search(&date)
            .ok()
            .map(|i| &self.records[i])
    }
}

/// Applies the scale-aware ridge policy: if the smallest eigenvalue is below
/// `1e-12 * trace/n`, add `1e-10 * trace/n` to the diagonal and re-check.
fn condition_covariance(cov: &mut DMatrix<f64>) -> Result<(), FrontierError> {
    let n = cov.nrows();
    let trace = cov.trace();
    if !trace.is_finite() || trace <= 0.0 {
        return Err(FrontierError::ConditioningFailed);
    }
    let min_eig = |m: &DMatrix<f64>| {
        m.clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    };
    let threshold = 1e-12 * trace / n as f64;
    if min_eig(cov) >= threshold {
        return Ok(());
    }
    let ridge = 1e-10 * trace / n as f64;
    for i in 0..n {
        cov[(i, i)] += ridge;
    }
    let new_threshold = 1e-12 * cov.trace() / n as f64;
    if min_eig(cov) >= new_threshold {
        log::debug!("covariance ridged by {ridge:e} to restore invertibility");
        Ok(())
    } else {
        Err(FrontierError::ConditioningFailed)
    }
}

/// Estimates mean and sample covariance (denominator `L - 1`) from the `L`
/// return rows ending at `as_of`, then conditions the covariance.
pub fn estimate_moments(
    panel: &ReturnPanel,
    as_of: NaiveDate,
    window_len: usize,
) -> Result<MomentEstimate, FrontierError> {
    if window_len < 2 {
        return Err(FrontierError::WindowTooShort(window_len));
    }
    let end = panel
        .dates()
        .binary_search(&as_of)
        .map_err(|_| FrontierError::DateNotFound(as_of))?;
    if end + 1 < window_len {
        return Err(FrontierError::InsufficientHistory {
            required: window_len,
            actual: end + 1,
            as_of,
        });
    }
    let start = end + 1 - window_len;
    let n = panel.n_assets();
    let rows = panel.returns().rows(start, window_len);

    let mut mean = DVector::zeros(n);
    for i in 0..window_len {
        mean += rows.row(i).transpose();
    }
    mean /= window_len as f64;

    let mut cov = DMatrix::zeros(n, n);
    for i in 0..window_len {
        let dev = rows.row(i).transpose() - &mean;
        cov += &dev * dev.transpose();
    }
    cov /= (window_len - 1) as f64;
    condition_covariance(&mut cov)?;
    MomentEstimate::new(mean, cov, window_len, as_of)
}

fn cholesky(m: &MomentEstimate) -> Result<Cholesky<f64, nalgebra::Dyn>, FrontierError> {
    Cholesky::new(m.cov.clone()).ok_or(FrontierError::SingularCovariance)
}

fn merton_from_solves(
    mean: &DVector<f64>,
    v_inv_e: &DVector<f64>,
    v_inv_r: &DVector<f64>,
) -> Result<MertonCoefficients, FrontierError> {
    let ones = DVector::from_element(mean.len(), 1.0);
    let a = ones.dot(v_inv_e);
    let b = mean.dot(v_inv_e);
    let c = mean.dot(v_inv_r);
    if !(a > 0.0) || !(c > 0.0) || !b.is_finite() {
        return Err(FrontierError::NumericalBreakdown { a, c });
    }
    Ok(MertonCoefficients { a, b, c })
}

/// Computes `A = e'V^-1 e`, `B = r'V^-1 e`, `C = r'V^-1 r`.
pub fn merton_coefficients(m: &MomentEstimate) -> Result<MertonCoefficients, FrontierError> {
    let chol = cholesky(m)?;
    let ones = DVector::from_element(m.n_assets(), 1.0);
    let v_inv_e = chol.solve(&ones);
    let v_inv_r = chol.solve(&m.mean);
    merton_from_solves(&m.mean, &v_inv_e, &v_inv_r)
}

/// Converts `A, B, C` to the vertex parameterization:
/// `r_mvp = B/A`, `sigma_mvp = 1/sqrt(A)`, `u = sqrt((AC - B^2)/A)`.
pub fn interpretable_from_merton(
    mc: &MertonCoefficients,
) -> Result<InterpretableCoefficients, FrontierError> {
    if !(mc.a > 0.0) {
        return Err(FrontierError::NumericalBreakdown { a: mc.a, c: mc.c });
    }
    let discriminant = mc.discriminant();
    if discriminant <= mc.degeneracy_threshold() {
        return Err(FrontierError::DegenerateFrontier { discriminant });
    }
    Ok(InterpretableCoefficients {
        r_mvp: mc.b / mc.a,
        sigma_mvp: 1.0 / mc.a.sqrt(),
        u: (discriminant / mc.a).sqrt(),
    })
}

/// Inverse of [`interpretable_from_merton`]:
/// `A = 1/sigma^2`, `B = r_mvp/sigma^2`, `C = u^2 + r_mvp^2/sigma^2`.
pub fn merton_from_interpretable(
    ic: &InterpretableCoefficients,
) -> Result<MertonCoefficients, FrontierError> {
    if !(ic.sigma_mvp > 0.0) || !ic.sigma_mvp.is_finite() {
        return Err(FrontierError::InvalidCoefficients(format!(
            "sigma_mvp must be positive, got {}",
            ic.sigma_mvp
        )));
    }
    let inv_var = 1.0 / (ic.sigma_mvp * ic.sigma_mvp);
    Ok(MertonCoefficients {
        a: inv_var,
        b: ic.r_mvp * inv_var,
        c: ic.u * ic.u + ic.r_mvp * ic.r_mvp * inv_var,
    })
}

/// Frontier volatility at a target return:
/// `sigma(m) = sqrt(((m - r_mvp)/u)^2 + sigma_mvp^2)`.
pub fn frontier_sigma(ic: &InterpretableCoefficients, ret: f64) -> f64 {
    debug_assert!(ic.is_valid(), "frontier_sigma needs valid coefficients");
    let z = (ret - ic.r_mvp) / ic.u;
    (z * z + ic.sigma_mvp * ic.sigma_mvp).sqrt()
}

/// Minimum-variance weights at a fixed target return, via the Lagrange
/// closed form `w = lambda V^-1 r + gamma V^-1 e`.
pub fn efficient_weights(
    m: &MomentEstimate,
    r_target: f64,
) -> Result<WeightVector, FrontierError> {
    let chol = cholesky(m)?;
    let ones = DVector::from_element(m.n_assets(), 1.0);
    let v_inv_e = chol.solve(&ones);
    let v_inv_r = chol.solve(&m.mean);
    let mc = merton_from_solves(&m.mean, &v_inv_e, &v_inv_r)?;
    let discriminant = mc.discriminant();
    if discriminant <= mc.degeneracy_threshold() {
        return Err(FrontierError::DegenerateFrontier { discriminant });
    }
    let lambda = (mc.a * r_target - mc.b) / discriminant;
    let gamma = (mc.c - mc.b * r_target) / discriminant;
    Ok(WeightVector(v_inv_r * lambda + v_inv_e * gamma))
}

/// Tangency point from frontier coefficients alone:
/// `r_tp = (r_mvp^2 + u^2 sigma_mvp^2 - r_mvp rf) / (r_mvp - rf)`.
pub fn tangency_from_coefficients(
    ic: &InterpretableCoefficients,
    rf: f64,
) -> Result<FrontierPoint, FrontierError> {
    if !ic.is_valid() {
        return Err(FrontierError::InvalidCoefficients(format!("{ic:?}")));
    }
    let denom = ic.r_mvp - rf;
    if denom <= 1e-12 * ic.r_mvp.abs().max(1.0) {
        return Err(FrontierError::NoFiniteTangency {
            r_mvp: ic.r_mvp,
            rf,
        });
    }
    let ret = (ic.r_mvp * ic.r_mvp + ic.u * ic.u * ic.sigma_mvp * ic.sigma_mvp
        - ic.r_mvp * rf)
        / denom;
    Ok(FrontierPoint {
        sigma: frontier_sigma(ic, ret),
        ret,
    })
}

/// Sharpe-maximizing portfolio directly from the moments:
/// `w = V^-1 (r - rf e) / (B - A rf)`. Serves as the independent check on
/// [`tangency_from_coefficients`].
pub fn tangency_numeric(
    m: &MomentEstimate,
    rf: f64,
) -> Result<(FrontierPoint, WeightVector), FrontierError> {
    let chol = cholesky(m)?;
    let excess = &m.mean - DVector::from_element(m.n_assets(), rf);
    let z = chol.solve(&excess);
    let q = z.sum();
    if q <= 1e-12 * z.iter().map(|v| v.abs()).sum::<f64>().max(1e-300) {
        return Err(FrontierError::NoUpperBranchTangency(q));
    }
    let w = z / q;
    let ret = w.dot(&m.mean);
    let sigma = (w.dot(&(&m.cov * &w))).sqrt();
    Ok((FrontierPoint { sigma, ret }, WeightVector(w)))
}

/// Splits `u` into the Mahalanobis length of the mean vector and the
/// `V^-1`-weighted cosine similarity between the mean vector and ones:
/// `u = sqrt(C) * sqrt(1 - cos^2)` with `cos = B / sqrt(AC)`.
pub fn u_decomposition(m: &MomentEstimate) -> Result<UDecomposition, FrontierError> {
    let mc = merton_coefficients(m)?;
    Ok(UDecomposition {
        mahalanobis: mc.c.sqrt(),
        cos_sim: mc.b / (mc.a * mc.c).sqrt(),
    })
}

/// Rolling-window moment queries backed by prefix sums, so a whole series
/// costs O(T n^2) instead of O(T L n^2).
pub(crate) struct RollingMoments<'a> {
    panel: &'a ReturnPanel,
    window: usize,
    prefix_sum: Vec<DVector<f64>>,
    prefix_outer: Vec<DMatrix<f64>>,
}

impl<'a> RollingMoments<'a> {
    pub fn new(panel: &'a ReturnPanel, window: usize) -> Result<Self, FrontierError> {
        if window < 2 {
            return Err(FrontierError::WindowTooShort(window));
        }
        let t = panel.n_rows();
        let n = panel.n_assets();
        let mut prefix_sum = Vec::with_capacity(t + 1);
        let mut prefix_outer = Vec::with_capacity(t + 1);
        prefix_sum.push(DVector::zeros(n));
        prefix_outer.push(DMatrix::zeros(n, n));
        for i in 0..t {
            let x = panel.returns().row(i).transpose();
            prefix_sum.push(&prefix_sum[i] + &x);
            prefix_outer.push(&prefix_outer[i] + &x * x.transpose());
        }
        Ok(Self {
            panel,
            window,
            prefix_sum,
            prefix_outer,
        })
    }

    /// First return-row index with a full window behind it.
    pub fn first_index(&self) -> usize {
        self.window - 1
    }

    /// Moments for the window ending at return-row `end` (inclusive).
    pub fn moments_at(&self, end: usize) -> Result<MomentEstimate, FrontierError> {
        if end + 1 < self.window || end >= self.panel.n_rows() {
            return Err(FrontierError::InsufficientHistory {
                required: self.window,
                actual: (end + 1).min(self.panel.n_rows()),
                as_of: *self
                    .panel
                    .dates()
                    .get(end)
                    .unwrap_or(&self.panel.dates()[self.panel.n_rows() - 1]),
            });
        }
        let lo = end + 1 - self.window;
        let l = self.window as f64;
        let mean = (&self.prefix_sum[end + 1] - &self.prefix_sum[lo]) / l;
        let mut cov = (&self.prefix_outer[end + 1] - &self.prefix_outer[lo]
            - (&mean * mean.transpose()) * l)
            / (l - 1.0);
        condition_covariance(&mut cov)?;
        MomentEstimate::new(mean, cov, self.window, self.panel.dates()[end])
    }
}

/// Interpretable coefficients for every date with a full window. Dates whose
/// frontier is degenerate or unconditionable are skipped with a logged
/// reason.
pub fn rolling_coefficients(
    panel: &ReturnPanel,
    window_len: usize,
) -> Result<CoefficientSeries, FrontierError> {
    let engine = RollingMoments::new(panel, window_len)?;
    let mut dates = Vec::new();
    let mut records = Vec::new();
    for end in engine.first_index()..panel.n_rows() {
        let date = panel.dates()[end];
        let result = engine
            .moments_at(end)
            .and_then(|m| merton_coefficients(&m))
            .and_then(|mc| interpretable_from_merton(&mc));
        match result {
            Ok(ic) => {
                dates.push(date);
                records.push(ic);
            }
            Err(e) => log::debug!("skipping {date}: {e}"),
        }
    }
    if records.is_empty() {
        return Err(FrontierError::NoValidDates);
    }
    CoefficientSeries::new(dates, records, window_len)
}
