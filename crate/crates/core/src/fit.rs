//! Least-squares fits for exponents, velocities and string tensions.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Boundary;
use crate::observables::CorrelatorSeries;

/// Minimum coefficient of determination for a string-tension fit to count as linear.
pub const LINEARITY_THRESHOLD: f64 = 0.98;

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// Covariance of all fitted coefficients, ordered as in `coefficients`.
    pub covariance: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    /// Coefficient of determination R².
    pub quality: f64,
    pub window: (f64, f64),
    pub points: usize,
    /// Name and value of the physical quantity derived from the fit.
    pub parameter: &'static str,
    pub value: f64,
    pub std_err: f64,
    pub warning: Option<String>,
}

impl FitResult {
    fn derived(mut self, name: &'static str, value: f64, std_err: f64) -> Self {
        self.parameter = name;
        self.value = value;
        self.std_err = std_err;
        self
    }
}

/// Ordinary least squares `y ≈ X c`; returns `(c, cov, R²)`.
fn least_squares(design: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>, f64)> {
    let n = y.len();
    let p = design.first().map_or(0, Vec::len);
    if n < p || p == 0 {
        return Err(Error::Fit(format!("{n} points for {p} coefficients")));
    }
    if y.iter().chain(design.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite data".into()));
    }
    let x = Mat::from_fn(n, p, |i, j| design[i][j]);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * Mat::from_fn(n, 1, |i, _| y[i]);
    let lu = xtx.partial_piv_lu();
    let inv = lu.inverse();
    let coef = &inv * &xty;
    let c: Vec<f64> = (0..p).map(|i| coef[(i, 0)]).collect();
    if c.iter().any(|v| !v.is_finite()) || (0..p).any(|i| !inv[(i, i)].is_finite() || inv[(i, i)] < 0.0) {
        return Err(Error::Fit("singular design matrix".into()));
    }
    let resid: Vec<f64> = (0..n)
        .map(|i| y[i] - (0..p).map(|j| design[i][j] * c[j]).sum::<f64>())
        .collect();
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let quality = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let s2 = if n > p { rss / (n - p) as f64 } else { 0.0 };
    let cov = (0..p).map(|i| (0..p).map(|j| s2 * inv[(i, j)]).collect()).collect();
    Ok((c, cov, quality))
}

fn window_of(x: &[f64]) -> (f64, f64) {
    (
        x.iter().cloned().fold(f64::INFINITY, f64::min),
        x.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    )
}

/// Straight line `y = slope · x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} abscissae but {} values", x.len(), y.len())));
    }
    let design: Vec<Vec<f64>> = x.iter().map(|&v| vec![v, 1.0]).collect();
    let (c, cov, quality) = least_squares(&design, y)?;
    let err = cov[0][0].sqrt();
    Ok(FitResult {
        slope: c[0],
        intercept: c[1],
        covariance: cov,
        coefficients: c.clone(),
        quality,
        window: window_of(x),
        points: x.len(),
        parameter: "slope",
        value: c[0],
        std_err: err,
        warning: None,
    })
}

fn log_log(x: &[f64], y: &[f64], what: &str) -> Result<FitResult> {
    if let Some(v) = y.iter().chain(x).find(|v| **v <= 0.0) {
        return Err(Error::Fit(format!("{what}: nonpositive value {v} in a log-log fit")));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mut f = linear_fit(&lx, &ly)?;
    f.window = window_of(x);
    Ok(f)
}

/// Minimum number of points in a power-law window.
pub const MIN_WINDOW_POINTS: usize = 4;

/// `C(r) ∝ r^p` over `lo <= r <= hi`; reports the Luttinger parameter `K = −2p`.
pub fn fit_power_law(series: &CorrelatorSeries, lo: f64, hi: f64) -> Result<FitResult> {
    let (x, y) = series.window(lo, hi);
    if x.len() < MIN_WINDOW_POINTS {
        return Err(Error::Fit(format!(
            "{} points in [{lo}, {hi}], need {MIN_WINDOW_POINTS}",
            x.len()
        )));
    }
    let f = log_log(&x, &y, "power law")?;
    let (k, err) = (-2.0 * f.slope, 2.0 * f.std_err);
    Ok(f.derived("K", k, err))
}

/// `⟨e^{iφ}⟩ ∝ E_J2^p`; reports `β² = 4p / (1 + 4p)`.
pub fn fit_vertex_scaling(ej2: &[f64], vertex: &[f64]) -> Result<FitResult> {
    if ej2.len() < MIN_WINDOW_POINTS {
        return Err(Error::Fit(format!(
            "{} coupling points, need {MIN_WINDOW_POINTS}",
            ej2.len()
        )));
    }
    let f = log_log(ej2, vertex, "vertex scaling")?;
    let p = f.slope;
    let beta_sq = 4.0 * p / (1.0 + 4.0 * p);
    let err = 4.0 / (1.0 + 4.0 * p).powi(2) * f.std_err;
    let mut f = f.derived("beta_sq", beta_sq, err);
    if !(0.0..1.0).contains(&beta_sq) {
        f.warning = Some(format!("beta^2 = {beta_sq:.4} outside (0, 1)"));
    }
    Ok(f)
}

/// Ground energies of a critical chain versus length. Open chains fit
/// `e₀L + b − πu/(24L)`, periodic ones `e₀L − πu/(6L)`; reports `u`.
pub fn fit_casimir(lengths: &[usize], energies: &[f64], bc: Boundary) -> Result<FitResult> {
    if lengths.len() != energies.len() {
        return Err(Error::Shape("lengths and energies differ in count".into()));
    }
    if lengths.len() < 4 {
        return Err(Error::Fit(format!("{} system sizes, need 4", lengths.len())));
    }
    let (design, scale, k): (Vec<Vec<f64>>, f64, usize) = match bc {
        Boundary::Open => (
            lengths.iter().map(|&l| vec![l as f64, 1.0, 1.0 / l as f64]).collect(),
            24.0,
            2,
        ),
        Boundary::Periodic => (
            lengths.iter().map(|&l| vec![l as f64, 1.0 / l as f64]).collect(),
            6.0,
            1,
        ),
    };
    let (c, cov, quality) = least_squares(&design, energies)?;
    let u = -scale * c[k] / std::f64::consts::PI;
    let err = scale / std::f64::consts::PI * cov[k][k].sqrt();
    let ls: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    let intercept = if bc == Boundary::Open { c[1] } else { 0.0 };
    let warning = (u <= 0.0).then(|| format!("negative velocity u = {u:.4}"));
    Ok(FitResult {
        slope: c[0],
        intercept,
        covariance: cov,
        coefficients: c.clone(),
        quality,
        window: window_of(&ls),
        points: ls.len(),
        parameter: "u",
        value: u,
        std_err: err,
        warning,
    })
}

/// `T(d) = σ d + T₀` over `lo <= d <= hi`; flags fits with `R² < 0.98`.
pub fn fit_string_tension(series: &CorrelatorSeries, lo: f64, hi: f64) -> Result<FitResult> {
    let (x, y) = series.window(lo, hi);
    if x.len() < 4 {
        return Err(Error::Fit(format!("{} separations in [{lo}, {hi}], need 4", x.len())));
    }
    let f = linear_fit(&x, &y)?;
    let (s, e) = (f.slope, f.std_err);
    let mut f = f.derived("sigma", s, e);
    if f.quality < LINEARITY_THRESHOLD {
        f.warning = Some(format!(
            "poor linearity: R^2 = {:.4} < {LINEARITY_THRESHOLD}",
            f.quality
        ));
    }
    Ok(f)
}

/// `(m − 2M)/M ∝ η^α`; reports `α`.
pub fn fit_meson_scaling(eta: &[f64], masses: &[f64], soliton_mass: f64) -> Result<FitResult> {
    if eta.len() != masses.len() {
        return Err(Error::Shape("eta and masses differ in count".into()));
    }
    if let Some(m) = masses.iter().find(|m| **m <= 2.0 * soliton_mass) {
        return Err(Error::Fit(format!(
            "meson mass {m} not above the threshold 2M = {}",
            2.0 * soliton_mass
        )));
    }
    if eta.len() < 3 {
        return Err(Error::Fit(format!("{} eta points, need 3", eta.len())));
    }
    let binding: Vec<f64> = masses.iter().map(|m| (m - 2.0 * soliton_mass) / soliton_mass).collect();
    let f = log_log(eta, &binding, "meson scaling")?;
    let (a, e) = (f.slope, f.std_err);
    Ok(f.derived("alpha", a, e))
}
