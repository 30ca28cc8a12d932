//! Ad hoc predictors: least squares, Huber regression and least squares over
//! a non-linear feature map.
//!
//! Every fit only ever sees a training [`Dataset`]; predictions for the test
//! split are made afterwards through [`predict`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, RiiError};
use crate::region::{Dataset, PredictionSet};

/// Default Huber threshold.
pub const HUBER_DELTA: f64 = 1.345;
pub const IRLS_MAX_ITER: usize = 100;
pub const IRLS_TOL: f64 = 1e-8;

/// Frequency of the `sin_norm` feature.
pub const SIN_NORM_FREQUENCY: f64 = 8.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Identity,
    SinNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub kind: MapKind,
    pub frequency: f64,
}

impl Default for FeatureMap {
    fn default() -> Self {
        Self::identity()
    }
}

impl FeatureMap {
    pub fn identity() -> Self {
        Self {
            kind: MapKind::Identity,
            frequency: 0.0,
        }
    }

    /// `x -> (x, sin(8 pi |x|))`.
    pub fn sin_norm() -> Self {
        Self {
            kind: MapKind::SinNorm,
            frequency: SIN_NORM_FREQUENCY,
        }
    }

    pub fn output_dim(&self, d: usize) -> usize {
        match self.kind {
            MapKind::Identity => d,
            MapKind::SinNorm => d + 1,
        }
    }

    /// Appends the mapped features of `x` to `out`.
    pub fn apply_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend_from_slice(x);
        if self.kind == MapKind::SinNorm {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            out.push((self.frequency * norm).sin());
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.output_dim(x.len()));
        self.apply_into(x, &mut out);
        out
    }
}

/// Options shared by all fits.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitOptions {
    pub map: FeatureMap,
    /// Append a constant feature after the map.
    pub intercept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub intercept_included: bool,
    pub map_kind: MapKind,
    pub frequency: f64,
}

impl LinearFit {
    pub fn map(&self) -> FeatureMap {
        FeatureMap {
            kind: self.map_kind,
            frequency: self.frequency,
        }
    }

    fn features(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        self.map().apply_into(x, out);
        if self.intercept_included {
            out.push(1.0);
        }
    }

    /// Prediction for a single raw input.
    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        let mut phi = Vec::with_capacity(self.coefficients.len());
        self.features(x, &mut phi);
        if phi.len() != self.coefficients.len() {
            return Err(RiiError::DimensionMismatch {
                expected: self.coefficients.len(),
                got: phi.len(),
            });
        }
        Ok(phi.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Huber fit together with its IRLS diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct HuberFit {
    pub fit: LinearFit,
    pub iterations: usize,
    pub converged: bool,
    /// Huber objective after the OLS start and after every iteration.
    pub objective_trace: Vec<f64>,
}

fn design(train: &Dataset, opts: &FitOptions) -> (DMatrix<f64>, usize) {
    let p = opts.map.output_dim(train.dim()) + usize::from(opts.intercept);
    let mut buf = Vec::with_capacity(train.len() * p);
    for row in train.rows() {
        opts.map.apply_into(row, &mut buf);
        if opts.intercept {
            buf.push(1.0);
        }
    }
    (DMatrix::from_row_slice(train.len(), p, &buf), p)
}

/// Least squares through a thin QR decomposition of the (weighted) design.
fn qr_solve(a: DMatrix<f64>, y: DVector<f64>) -> Result<Vec<f64>> {
    let (n, p) = a.shape();
    if n < p {
        return Err(RiiError::RankDeficient { rank: n, cols: p });
    }
    let qr = a.qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    let threshold = scale * f64::EPSILON * (n.max(p) as f64) * 16.0;
    let rank = r.diagonal().iter().filter(|v| v.abs() > threshold).count();
    if rank < p || scale == 0.0 {
        return Err(RiiError::RankDeficient { rank, cols: p });
    }
    let qty = qr.q().transpose() * y;
    let sol = r
        .solve_upper_triangular(&qty)
        .ok_or(RiiError::RankDeficient { rank, cols: p })?;
    Ok(sol.iter().copied().collect())
}

fn make_fit(coefficients: Vec<f64>, opts: &FitOptions) -> LinearFit {
    LinearFit {
        coefficients,
        intercept_included: opts.intercept,
        map_kind: opts.map.kind,
        frequency: opts.map.frequency,
    }
}

/// Ordinary least squares without intercept on the raw inputs.
pub fn fit_ols(train: &Dataset) -> Result<LinearFit> {
    fit_ols_with(train, &FitOptions::default())
}

pub fn fit_ols_with(train: &Dataset, opts: &FitOptions) -> Result<LinearFit> {
    let (a, _) = design(train, opts);
    let y = DVector::from_column_slice(train.y());
    Ok(make_fit(qr_solve(a, y)?, opts))
}

/// Huber loss `rho_delta(r)`.
pub fn huber_loss(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Sum of Huber losses of the training residuals under `fit`.
pub fn huber_objective(fit: &LinearFit, train: &Dataset, delta: f64) -> Result<f64> {
    let mut total = 0.0;
    for (row, &y) in train.rows().zip(train.y()) {
        total += huber_loss(y - fit.predict_one(row)?, delta);
    }
    Ok(total)
}

/// Huber regression with the default threshold and IRLS settings.
pub fn fit_huber(train: &Dataset) -> Result<HuberFit> {
    fit_huber_with(
        train,
        HUBER_DELTA,
        IRLS_MAX_ITER,
        IRLS_TOL,
        &FitOptions::default(),
    )
}

/// Huber regression by iteratively reweighted least squares started from
/// the OLS fit. Stops when the sup-norm change of the coefficients drops
/// below `tol`; hitting `max_iter` is reported through `converged`.
pub fn fit_huber_with(
    train: &Dataset,
    delta: f64,
    max_iter: usize,
    tol: f64,
    opts: &FitOptions,
) -> Result<HuberFit> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(invalid(format!(
            "huber delta must be positive, got {delta}"
        )));
    }
    if !(tol >= 0.0) {
        return Err(invalid(format!("tolerance must be nonnegative, got {tol}")));
    }
    let (a, p) = design(train, opts);
    let y = DVector::from_column_slice(train.y());
    let mut coef = qr_solve(a.clone(), y.clone())?;
    let mut fit = make_fit(coef.clone(), opts);
    let mut trace = vec![huber_objective(&fit, train, delta)?];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let theta = DVector::from_column_slice(&coef);
        let resid = &y - &a * &theta;
        let mut wa = a.clone();
        let mut wy = y.clone();
        for i in 0..a.nrows() {
            let r = resid[i].abs();
            let w = if r <= delta { 1.0 } else { delta / r };
            let s = w.sqrt();
            for j in 0..p {
                wa[(i, j)] *= s;
            }
            wy[i] *= s;
        }
        let next = qr_solve(wa, wy)?;
        let change = next
            .iter()
            .zip(&coef)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        coef = next;
        fit = make_fit(coef.clone(), opts);
        trace.push(huber_objective(&fit, train, delta)?);
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok(HuberFit {
        fit,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Predictions `theta_hat . phi(x_i)` for row-major inputs of dimension `d`.
pub fn predict(fit: &LinearFit, x: &[f64], d: usize) -> Result<PredictionSet> {
    if d == 0 || x.len() % d != 0 {
        return Err(invalid(format!(
            "input length {} is not a multiple of d = {d}",
            x.len()
        )));
    }
    let p = fit.map().output_dim(d) + usize::from(fit.intercept_included);
    if p != fit.coefficients.len() {
        return Err(RiiError::DimensionMismatch {
            expected: fit.coefficients.len(),
            got: p,
        });
    }
    let mut phi = Vec::with_capacity(p);
    let y_hat = x
        .chunks_exact(d)
        .map(|row| {
            fit.features(row, &mut phi);
            phi.iter().zip(&fit.coefficients).map(|(a, b)| a * b).sum()
        })
        .collect();
    Ok(PredictionSet { y_hat })
}

pub fn predict_dataset(fit: &LinearFit, data: &Dataset) -> Result<PredictionSet> {
    predict(fit, data.x(), data.dim())
}

/// Predictor choices wired into the harness and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    Ols,
    Huber,
    FeatureMapOls,
}

impl Predictor {
    pub fn fit(&self, train: &Dataset) -> Result<LinearFit> {
        match self {
            Predictor::Ols => fit_ols(train),
            Predictor::Huber => Ok(fit_huber(train)?.fit),
            Predictor::FeatureMapOls => fit_ols_with(
                train,
                &FitOptions {
                    map: FeatureMap::sin_norm(),
                    intercept: false,
                },
            ),
        }
    }
}

impl std::str::FromStr for Predictor {
    type Err = RiiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(Predictor::Ols),
            "huber" => Ok(Predictor::Huber),
            "feature_map_ols" | "feature-map-ols" => Ok(Predictor::FeatureMapOls),
            other => Err(invalid(format!("unknown predictor `{other}`"))),
        }
    }
}
