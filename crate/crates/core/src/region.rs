//! Residual intervals, the hit count `C(theta)` and the confidence region.
//!
//! Each test point contributes the closed interval between its observed
//! target and its prediction. A parameter vector belongs to the region when
//! its linear response lands inside at least `k` of those intervals.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::coverage::{self, binomial_tail};
use crate::error::{invalid, Result, RiiError};
use crate::rng::{stream_rng, Purpose};

/// Inputs `x` (row-major, `n x d`) with targets `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(d: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(invalid("feature dimension must be at least 1"));
        }
        if x.len() != y.len() * d {
            return Err(RiiError::DimensionMismatch {
                expected: y.len() * d,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(RiiError::NonFinite("inputs"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(RiiError::NonFinite("targets"));
        }
        Ok(Self { d, x, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(RiiError::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        Self::new(d, rows.concat(), y)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.d)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.d);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Dataset { d: self.d, x, y }
    }

    /// Copy with the targets replaced (inputs unchanged).
    pub fn with_targets(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.d, self.x.clone(), y)
    }

    /// CSV with header `x1,...,xd,y`.
    pub fn to_csv(&self) -> String {
        let mut out = (1..=self.d)
            .map(|j| format!("x{j}"))
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(",y\n");
        for (row, y) in self.rows().zip(&self.y) {
            for v in row {
                out.push_str(&format!("{v:?},"));
            }
            out.push_str(&format!("{y:?}\n"));
        }
        out
    }

    /// Parses `x1,...,xd,y` CSV; the header row is required.
    pub fn from_csv(text: &str) -> Result<Dataset> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| RiiError::Parse(format!("CSV header: {e}")))?
            .clone();
        if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
            return Err(RiiError::Parse("empty CSV".into()));
        }
        let cols = header.len();
        if cols < 2 {
            return Err(RiiError::Parse(
                "CSV needs at least one feature column and a target column".into(),
            ));
        }
        if header.iter().any(|h| h.parse::<f64>().is_ok()) {
            return Err(RiiError::Parse("CSV header row is missing".into()));
        }
        let d = cols - 1;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (lineno, record) in reader.records().enumerate() {
            let record = record.map_err(|e| RiiError::Parse(format!("row {}: {e}", lineno + 1)))?;
            for (j, f) in record.iter().enumerate() {
                let v: f64 = f.parse().map_err(|_| {
                    RiiError::Parse(format!("row {}: bad number {f:?}", lineno + 1))
                })?;
                if j < d {
                    x.push(v);
                } else {
                    y.push(v);
                }
            }
        }
        if y.is_empty() {
            return Err(RiiError::Parse("CSV has no data rows".into()));
        }
        Dataset::new(d, x, y)
    }
}

/// Uniform random split without replacement into `(test, train)`.
///
/// Row order inside each part follows the original dataset.
pub fn split_dataset(data: &Dataset, n_te: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    split_dataset_indexed(data, n_te, seed, 0)
}

/// [`split_dataset`] drawing from the split stream of trial `index`.
pub fn split_dataset_indexed(
    data: &Dataset,
    n_te: usize,
    seed: u64,
    index: u64,
) -> Result<(Dataset, Dataset)> {
    if n_te == 0 || n_te > data.len() {
        return Err(invalid(format!(
            "n_te = {n_te} must lie in 1..={}",
            data.len()
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    let mut rng = stream_rng(seed, index, Purpose::Split);
    idx.shuffle(&mut rng);
    let (test, train) = idx.split_at_mut(n_te);
    test.sort_unstable();
    train.sort_unstable();
    Ok((data.subset(test), data.subset(train)))
}

/// Predictions for a test split, produced without its targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub y_hat: Vec<f64>,
}

/// Closed intervals `[min(y, y_hat), max(y, y_hat)]` with their inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualIntervalSet {
    d: usize,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ResidualIntervalSet {
    /// Builds intervals directly from their ends.
    pub fn from_parts(d: usize, x: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(invalid("feature dimension must be at least 1"));
        }
        if lo.len() != hi.len() {
            return Err(RiiError::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if x.len() != lo.len() * d {
            return Err(RiiError::DimensionMismatch {
                expected: lo.len() * d,
                got: x.len(),
            });
        }
        if x.iter().chain(&lo).chain(&hi).any(|v| !v.is_finite()) {
            return Err(RiiError::NonFinite("residual intervals"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(invalid("interval with lower end above upper end"));
        }
        Ok(Self { d, x, lo, hi })
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// Largest interval end in absolute value.
    pub fn max_abs_end(&self) -> f64 {
        self.lo
            .iter()
            .chain(&self.hi)
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Intervals reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut x = Vec::with_capacity(self.x.len());
        let mut lo = Vec::with_capacity(self.len());
        let mut hi = Vec::with_capacity(self.len());
        for &i in perm {
            x.extend_from_slice(self.row(i));
            lo.push(self.lo[i]);
            hi.push(self.hi[i]);
        }
        Self::from_parts(self.d, x, lo, hi)
    }
}

pub fn residual_intervals(test: &Dataset, preds: &PredictionSet) -> Result<ResidualIntervalSet> {
    if preds.y_hat.len() != test.len() {
        return Err(RiiError::DimensionMismatch {
            expected: test.len(),
            got: preds.y_hat.len(),
        });
    }
    if preds.y_hat.iter().any(|v| !v.is_finite()) {
        return Err(RiiError::NonFinite("predictions"));
    }
    let (lo, hi) = test
        .y()
        .iter()
        .zip(&preds.y_hat)
        .map(|(&y, &p)| (y.min(p), y.max(p)))
        .unzip();
    ResidualIntervalSet::from_parts(test.dim(), test.x().to_vec(), lo, hi)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Number of intervals containing `theta . x_i` (closed on both ends).
pub fn count_hits(intervals: &ResidualIntervalSet, theta: &[f64]) -> Result<usize> {
    if theta.len() != intervals.d {
        return Err(RiiError::DimensionMismatch {
            expected: intervals.d,
            got: theta.len(),
        });
    }
    Ok(intervals
        .x
        .chunks_exact(intervals.d)
        .zip(intervals.lo.iter().zip(&intervals.hi))
        .filter(|(row, (&lo, &hi))| {
            let v = dot(row, theta);
            lo <= v && v <= hi
        })
        .count())
}

/// Big-M constant used when none is given: 50 for targets of order one,
/// otherwise ten times the largest interval end.
pub fn default_big_m(intervals: &ResidualIntervalSet) -> f64 {
    (10.0 * intervals.max_abs_end().max(1.0)).max(50.0)
}

/// Confidence region `{theta : C(theta) >= k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    intervals: ResidualIntervalSet,
    k: usize,
    alpha: f64,
    b: f64,
    big_m: f64,
}

impl RegionSpec {
    pub fn new(
        intervals: ResidualIntervalSet,
        k: usize,
        alpha: f64,
        b: f64,
        big_m: f64,
    ) -> Result<Self> {
        let n = intervals.len();
        if k == 0 || k > n {
            return Err(invalid(format!("k = {k} must lie in 1..={n}")));
        }
        coverage::check_alpha(alpha)?;
        coverage::check_tolerance(b)?;
        let max_end = intervals.max_abs_end();
        if !(big_m.is_finite() && big_m > max_end) {
            return Err(invalid(format!(
                "big_m = {big_m} must exceed the largest interval end {max_end}"
            )));
        }
        Ok(Self {
            intervals,
            k,
            alpha,
            b,
            big_m,
        })
    }

    /// Region at level `alpha` with the threshold `k_alpha(n_te, alpha, b)`;
    /// `Ok(None)` when the test split is too small for that level.
    pub fn at_level(
        intervals: ResidualIntervalSet,
        alpha: f64,
        b: f64,
        big_m: Option<f64>,
    ) -> Result<Option<Self>> {
        let Some(k) = coverage::k_alpha(intervals.len(), alpha, b)? else {
            return Ok(None);
        };
        let m = big_m.unwrap_or_else(|| default_big_m(&intervals));
        Self::new(intervals, k, alpha, b, m).map(Some)
    }

    pub fn intervals(&self) -> &ResidualIntervalSet {
        &self.intervals
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    pub fn dim(&self) -> usize {
        self.intervals.d
    }

    pub fn n_te(&self) -> usize {
        self.intervals.len()
    }

    /// Same region with a different Big-M constant.
    pub fn with_big_m(&self, big_m: f64) -> Result<Self> {
        Self::new(self.intervals.clone(), self.k, self.alpha, self.b, big_m)
    }

    /// `S_{n_te}(k, b)`, the coverage the threshold guarantees.
    pub fn guaranteed_coverage(&self) -> f64 {
        binomial_tail(self.n_te(), self.k, self.b).expect("validated at construction")
    }

    pub fn count_hits(&self, theta: &[f64]) -> Result<usize> {
        count_hits(&self.intervals, theta)
    }

    pub fn contains(&self, theta: &[f64]) -> Result<bool> {
        membership(self, theta)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn membership(region: &RegionSpec, theta: &[f64]) -> Result<bool> {
    Ok(count_hits(&region.intervals, theta)? >= region.k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundednessVerdict {
    SurelyUnboundedOrEmpty,
    Undetermined,
}

/// Cheap necessary check: fewer than `d` active intervals, or test inputs
/// spanning fewer than `d` directions, leave a direction along which the
/// region (if nonempty) is unbounded.
pub fn boundedness_necessary_check(region: &RegionSpec) -> BoundednessVerdict {
    let d = region.dim();
    if region.k < d || design_rank(&region.intervals) < d {
        BoundednessVerdict::SurelyUnboundedOrEmpty
    } else {
        BoundednessVerdict::Undetermined
    }
}

fn design_rank(intervals: &ResidualIntervalSet) -> usize {
    let n = intervals.len();
    let d = intervals.d;
    if n == 0 {
        return 0;
    }
    let m = DMatrix::from_row_slice(n, d, &intervals.x);
    let svd = m.svd(false, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return 0;
    }
    let eps = smax * n.max(d) as f64 * f64::EPSILON * 16.0;
    svd.singular_values.iter().filter(|&&s| s > eps).count()
}

#[derive(Serialize, Deserialize)]
struct PointRepr {
    x: Vec<f64>,
    lo: f64,
    hi: f64,
}

#[derive(Serialize, Deserialize)]
struct RegionRepr {
    d: usize,
    n_te: usize,
    k: usize,
    alpha: f64,
    b: f64,
    big_m: f64,
    points: Vec<PointRepr>,
}

impl Serialize for RegionSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let iv = &self.intervals;
        RegionRepr {
            d: iv.d,
            n_te: iv.len(),
            k: self.k,
            alpha: self.alpha,
            b: self.b,
            big_m: self.big_m,
            points: (0..iv.len())
                .map(|i| PointRepr {
                    x: iv.row(i).to_vec(),
                    lo: iv.lo[i],
                    hi: iv.hi[i],
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RegionSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let repr = RegionRepr::deserialize(deserializer)?;
        if repr.points.len() != repr.n_te {
            return Err(D::Error::custom(format!(
                "n_te = {} but {} points given",
                repr.n_te,
                repr.points.len()
            )));
        }
        let mut x = Vec::with_capacity(repr.n_te * repr.d);
        let mut lo = Vec::with_capacity(repr.n_te);
        let mut hi = Vec::with_capacity(repr.n_te);
        for p in repr.points {
            if p.x.len() != repr.d {
                return Err(D::Error::custom(format!(
                    "point has {} inputs, expected d = {}",
                    p.x.len(),
                    repr.d
                )));
            }
            x.extend(p.x);
            lo.push(p.lo);
            hi.push(p.hi);
        }
        let intervals =
            ResidualIntervalSet::from_parts(repr.d, x, lo, hi).map_err(D::Error::custom)?;
        RegionSpec::new(intervals, repr.k, repr.alpha, repr.b, repr.big_m).map_err(D::Error::custom)
    }
}
