//! Synthetic data: linear models under three noise families, the
//! sin-perturbed non-linear model, and Monte-Carlo estimates of the
//! effective tolerance `b_bar`.
//!
//! Inputs are iid uniform on `[0, 1]^d`. Targets follow
//! `y = theta* . x + v* sin(8 pi |x|) + eps(x)`, where `eps` is drawn from
//! the configured [`NoiseSpec`]. Gaussian parameters are standard deviations.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Result};
use crate::estimators::SIN_NORM_FREQUENCY;
use crate::region::{dot, Dataset};
use crate::rng::{stream_rng, Purpose};

/// Smallest Monte-Carlo sample accepted by [`estimate_b_bar`].
pub const MIN_B_BAR_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// `eps = 0`.
    Noiseless,
    /// `eps ~ N(0, sigma)`.
    AdditiveGaussian { sigma: f64 },
    /// `eps ~ N(0, scale |theta* . x|)`; exactly zero where `theta* . x = 0`.
    MultiplicativeGaussian { scale: f64 },
    /// With probability `p` from `N(0, sigma_hi)`, otherwise `N(0, sigma_lo)`.
    Outliers {
        p: f64,
        sigma_hi: f64,
        sigma_lo: f64,
    },
}

impl std::str::FromStr for NoiseSpec {
    type Err = crate::error::RiiError;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s)
    }
}

impl NoiseSpec {
    pub fn additive() -> Self {
        NoiseSpec::AdditiveGaussian { sigma: 0.5 }
    }

    pub fn multiplicative() -> Self {
        NoiseSpec::MultiplicativeGaussian { scale: 1.0 }
    }

    pub fn outliers() -> Self {
        NoiseSpec::Outliers {
            p: 0.1,
            sigma_hi: 10.0,
            sigma_lo: 0.05,
        }
    }

    /// Unit-variance Gaussian noise of the non-linear model.
    pub fn standard() -> Self {
        NoiseSpec::AdditiveGaussian { sigma: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!(
                    "noise parameter {name} must be positive, got {v}"
                )))
            }
        };
        match *self {
            NoiseSpec::Noiseless => Ok(()),
            NoiseSpec::AdditiveGaussian { sigma } => positive("sigma", sigma),
            NoiseSpec::MultiplicativeGaussian { scale } => positive("scale", scale),
            NoiseSpec::Outliers {
                p,
                sigma_hi,
                sigma_lo,
            } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(invalid(format!(
                        "outlier probability must be in (0, 1), got {p}"
                    )));
                }
                positive("sigma_hi", sigma_hi)?;
                positive("sigma_lo", sigma_lo)
            }
        }
    }

    /// Short name used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            NoiseSpec::Noiseless => "noiseless",
            NoiseSpec::AdditiveGaussian { .. } => "additive_gaussian",
            NoiseSpec::MultiplicativeGaussian { .. } => "multiplicative_gaussian",
            NoiseSpec::Outliers { .. } => "outliers",
        }
    }

    /// Default-parameter family by name; accepts the names of
    /// [`NoiseSpec::name`] plus the short forms `additive` and
    /// `multiplicative`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.replace('-', "_").as_str() {
            "noiseless" => Ok(NoiseSpec::Noiseless),
            "additive" | "additive_gaussian" => Ok(NoiseSpec::additive()),
            "multiplicative" | "multiplicative_gaussian" => Ok(NoiseSpec::multiplicative()),
            "outliers" => Ok(NoiseSpec::outliers()),
            "standard" => Ok(NoiseSpec::standard()),
            _ => Err(invalid(format!("unknown noise family `{name}`"))),
        }
    }

    fn sample<R: Rng>(&self, linear: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        match *self {
            NoiseSpec::Noiseless => 0.0,
            NoiseSpec::AdditiveGaussian { sigma } => sigma * z,
            NoiseSpec::MultiplicativeGaussian { scale } => scale * linear.abs() * z,
            NoiseSpec::Outliers {
                p,
                sigma_hi,
                sigma_lo,
            } => {
                let hi = rng.random::<f64>() < p;
                z * if hi { sigma_hi } else { sigma_lo }
            }
        }
    }

    /// `P(eps <= t)` at an input whose linear part is `linear`.
    fn cdf(&self, linear: f64, t: f64) -> f64 {
        let step = || {
            if t >= 0.0 {
                1.0
            } else {
                0.0
            }
        };
        match *self {
            NoiseSpec::Noiseless => step(),
            NoiseSpec::AdditiveGaussian { sigma } => normal_cdf(t / sigma),
            NoiseSpec::MultiplicativeGaussian { scale } => {
                let s = scale * linear.abs();
                if s == 0.0 {
                    step()
                } else {
                    normal_cdf(t / s)
                }
            }
            NoiseSpec::Outliers {
                p,
                sigma_hi,
                sigma_lo,
            } => p * normal_cdf(t / sigma_hi) + (1.0 - p) * normal_cdf(t / sigma_lo),
        }
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub theta_star: Vec<f64>,
    /// Amplitude of the `sin(8 pi |x|)` perturbation; 0 for linear data.
    pub v_star: f64,
    pub noise: NoiseSpec,
}

impl GroundTruth {
    pub fn new(theta_star: Vec<f64>, v_star: f64, noise: NoiseSpec) -> Result<Self> {
        if theta_star.is_empty() {
            return Err(invalid("theta* must have at least one coordinate"));
        }
        if theta_star.iter().any(|v| !v.is_finite()) || !v_star.is_finite() {
            return Err(invalid("ground truth must be finite"));
        }
        noise.validate()?;
        Ok(Self {
            theta_star,
            v_star,
            noise,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    /// Noise-free part of the target, `theta* . x + v* sin(8 pi |x|)`.
    pub fn signal(&self, x: &[f64]) -> f64 {
        dot(&self.theta_star, x) + self.perturbation(x)
    }

    fn perturbation(&self, x: &[f64]) -> f64 {
        if self.v_star == 0.0 {
            return 0.0;
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.v_star * (SIN_NORM_FREQUENCY * norm).sin()
    }

    /// `d_eps(x) = min(P(eps' >= 0 | x), P(eps' <= 0 | x))` for the total
    /// deviation `eps' = v* sin(8 pi |x|) + eps` from the linear part.
    pub fn median_tolerance(&self, x: &[f64]) -> f64 {
        let m = self.perturbation(x);
        let linear = dot(&self.theta_star, x);
        // P(m + eps <= 0) = F(-m); P(m + eps >= 0) = 1 - F(-m) for continuous eps.
        let below = self.noise.cdf(linear, -m);
        let above = if matches!(self.noise, NoiseSpec::Noiseless)
            || (matches!(self.noise, NoiseSpec::MultiplicativeGaussian { .. }) && linear == 0.0)
        {
            if m <= 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            1.0 - below
        };
        below.min(above)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: GroundTruth = serde_json::from_str(text)?;
        GroundTruth::new(t.theta_star, t.v_star, t.noise)
    }
}

/// Draws `n` points from `truth` using the streams of trial `index`.
pub fn sample_dataset_indexed(
    truth: &GroundTruth,
    n: usize,
    seed: u64,
    index: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let d = truth.dim();
    let mut x_rng = stream_rng(seed, index, Purpose::Inputs);
    let mut e_rng = stream_rng(seed, index, Purpose::Noise);
    let x: Vec<f64> = (0..n * d).map(|_| x_rng.random::<f64>()).collect();
    let y = x
        .chunks_exact(d)
        .map(|row| {
            let linear = dot(&truth.theta_star, row);
            linear + truth.perturbation(row) + truth.noise.sample(linear, &mut e_rng)
        })
        .collect();
    Dataset::new(d, x, y)
}

pub fn sample_dataset(truth: &GroundTruth, n: usize, seed: u64) -> Result<Dataset> {
    sample_dataset_indexed(truth, n, seed, 0)
}

pub fn sample_theta_star_indexed(d: usize, seed: u64, index: u64) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    let mut rng = stream_rng(seed, index, Purpose::Theta);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok((0..d).map(|_| normal.sample(&mut rng)).collect())
}

/// `theta*` with iid standard normal coordinates.
pub fn sample_theta_star(d: usize, seed: u64) -> Result<Vec<f64>> {
    sample_theta_star_indexed(d, seed, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBarEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_mc: usize,
}

/// Monte-Carlo average over `X` of the closed-form [`GroundTruth::median_tolerance`].
pub fn estimate_b_bar(truth: &GroundTruth, n_mc: usize, seed: u64) -> Result<BBarEstimate> {
    if n_mc < MIN_B_BAR_SAMPLES {
        return Err(invalid(format!(
            "n_mc must be at least {MIN_B_BAR_SAMPLES}, got {n_mc}"
        )));
    }
    let d = truth.dim();
    let mut rng = stream_rng(seed, 0, Purpose::MonteCarlo);
    let mut x = vec![0.0; d];
    // Welford running mean and variance.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n_mc {
        x.iter_mut().for_each(|v| *v = rng.random::<f64>());
        let v = truth.median_tolerance(&x);
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = m2 / (n_mc - 1) as f64;
    Ok(BBarEstimate {
        estimate: mean,
        std_error: (var / n_mc as f64).sqrt(),
        n_mc,
    })
}

/// A named non-linear example with its recorded `(v*, b_bar)` pair and the
/// `(k, n_te)` pair used for its coverage run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonlinearExample {
    pub name: &'static str,
    pub v_star: f64,
    pub recorded_b_bar: f64,
    pub k: usize,
    pub n_te: usize,
}

pub const NONLINEAR_EXAMPLES: [NonlinearExample; 3] = [
    NonlinearExample {
        name: "easy",
        v_star: 0.05,
        recorded_b_bar: 0.05,
        k: 2,
        n_te: 74,
    },
    NonlinearExample {
        name: "med",
        v_star: 0.2,
        recorded_b_bar: 0.14,
        k: 7,
        n_te: 73,
    },
    NonlinearExample {
        name: "hard",
        v_star: 0.1,
        recorded_b_bar: 0.27,
        k: 10,
        n_te: 50,
    },
];

pub fn nonlinear_example(name: &str) -> Option<NonlinearExample> {
    NONLINEAR_EXAMPLES.iter().copied().find(|e| e.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_names_parse() {
        for spec in [
            NoiseSpec::Noiseless,
            NoiseSpec::additive(),
            NoiseSpec::multiplicative(),
            NoiseSpec::outliers(),
        ] {
            assert_eq!(spec.name().parse::<NoiseSpec>().unwrap(), spec);
        }
        assert_eq!(
            "additive".parse::<NoiseSpec>().unwrap(),
            NoiseSpec::additive()
        );
        assert!("laplace".parse::<NoiseSpec>().is_err());
    }

    #[test]
    fn noiseless_linear_targets_exact() {
        let truth = GroundTruth::new(vec![1.0, -2.0, 0.5], 0.0, NoiseSpec::Noiseless).unwrap();
        let data = sample_dataset(&truth, 50, 7).unwrap();
        for (row, &y) in data.rows().zip(data.y()) {
            assert_eq!(y, dot(&truth.theta_star, row));
        }
    }

    #[test]
    fn determinism_and_index_streams() {
        let truth = GroundTruth::new(vec![1.0, 2.0], 0.0, NoiseSpec::outliers()).unwrap();
        let a = sample_dataset(&truth, 20, 3).unwrap();
        let b = sample_dataset(&truth, 20, 3).unwrap();
        let c = sample_dataset_indexed(&truth, 20, 3, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.x().iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn theta_star_reproducible() {
        let a = sample_theta_star(3, 11).unwrap();
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|v| v.is_finite()));
        assert_eq!(a, sample_theta_star(3, 11).unwrap());
        assert_ne!(a, sample_theta_star(3, 12).unwrap());
        assert!(sample_theta_star(0, 1).is_err());
    }

    #[test]
    fn validation() {
        assert!(GroundTruth::new(vec![], 0.0, NoiseSpec::additive()).is_err());
        assert!(NoiseSpec::AdditiveGaussian { sigma: 0.0 }
            .validate()
            .is_err());
        assert!(NoiseSpec::Outliers {
            p: 1.0,
            sigma_hi: 1.0,
            sigma_lo: 1.0
        }
        .validate()
        .is_err());
        assert!(NoiseSpec::outliers().validate().is_ok());
    }

    #[test]
    fn b_bar_symmetric_noise_is_half() {
        for noise in [
            NoiseSpec::standard(),
            NoiseSpec::outliers(),
            NoiseSpec::multiplicative(),
        ] {
            let truth = GroundTruth::new(vec![0.3, -0.7, 1.1], 0.0, noise).unwrap();
            let est = estimate_b_bar(&truth, 10_000, 1).unwrap();
            assert!(
                (est.estimate - 0.5).abs() < 1e-12,
                "{noise:?}: {}",
                est.estimate
            );
        }
        let truth = GroundTruth::new(vec![1.0], 0.1, NoiseSpec::standard()).unwrap();
        assert!(estimate_b_bar(&truth, 9_999, 1).is_err());
    }

    #[test]
    fn b_bar_decreases_with_amplitude() {
        let mut last = 0.5;
        for v in [0.5, 1.0, 2.0, 8.0, 64.0] {
            let truth = GroundTruth::new(vec![1.0, 1.0, 1.0], v, NoiseSpec::standard()).unwrap();
            let est = estimate_b_bar(&truth, 20_000, 5).unwrap().estimate;
            assert!(est < last, "v = {v}: {est} >= {last}");
            last = est;
        }
        assert!(last < 0.02);
    }

    #[test]
    fn median_tolerance_closed_form() {
        let truth = GroundTruth::new(vec![1.0], 1.0, NoiseSpec::standard()).unwrap();
        // |x| = 1/16 puts sin(8 pi |x|) = sin(pi/2) = 1.
        let d = truth.median_tolerance(&[1.0 / 16.0]);
        assert!((d - normal_cdf(-1.0)).abs() < 1e-15);
        let v = normal_cdf(-1.0);
        assert!((v - 0.158_655_253_931_457_05).abs() < 1e-10, "{v:e}");
    }

    #[test]
    fn json_round_trip() {
        let truth = GroundTruth::new(vec![1.5, -0.25], 0.2, NoiseSpec::outliers()).unwrap();
        let text = truth.to_json().unwrap();
        assert!(text.contains("\"kind\": \"outliers\""));
        assert_eq!(GroundTruth::from_json(&text).unwrap(), truth);
    }
}
