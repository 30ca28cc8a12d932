//! Queries answered through the region's MILP: coordinate confidence
//! intervals, the emptiness test, and minimax decisions over the bounding
//! box of the region.

use serde::{Deserialize, Serialize};

use crate::coverage::fmt_sig;
use crate::error::{invalid, Result, RiiError};
use crate::milp::{
    simplex_solve, solve_over_region, BranchOptions, MilpModel, Relation, Sense, SolveStatus,
};
use crate::region::{count_hits, RegionSpec};

/// One end of a coordinate interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateBound {
    /// Extreme value of the coordinate; infinite when the region is unbounded
    /// in that direction or the Big-M check never passed.
    pub value: f64,
    pub status: SolveStatus,
    /// The optimum passed the Big-M check.
    pub verified: bool,
    pub big_m: f64,
    pub nodes: usize,
    /// The parameter vector attaining `value`, when one was found.
    pub theta: Option<Vec<f64>>,
}

impl CoordinateBound {
    /// The value is a certified extreme rather than a node-limited guess.
    pub fn is_complete(&self) -> bool {
        self.status != SolveStatus::NodeLimit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoordinateOutcome {
    Interval {
        lower: CoordinateBound,
        upper: CoordinateBound,
    },
    /// The region has no element, so no interval exists.
    Empty { nodes: usize },
}

fn solve_bound(
    region: &RegionSpec,
    coord: usize,
    sense: Sense,
    options: &BranchOptions,
) -> Result<CoordinateBound> {
    let mut objective = vec![0.0; region.dim()];
    objective[coord] = 1.0;
    let res = solve_over_region(region, &objective, sense, options)?;
    let infinite = match sense {
        Sense::Minimize => f64::NEG_INFINITY,
        Sense::Maximize => f64::INFINITY,
    };
    let out = &res.outcome;
    let value = match out.status {
        SolveStatus::Optimal if res.verified => out.objective_value.expect("optimal value"),
        SolveStatus::NodeLimit => out.objective_value.unwrap_or(infinite),
        _ => infinite,
    };
    Ok(CoordinateBound {
        value,
        status: out.status,
        verified: res.verified,
        big_m: res.big_m,
        nodes: res.total_nodes,
        theta: out.solution.as_ref().map(|s| s[..region.dim()].to_vec()),
    })
}

/// Smallest and largest value of `theta[coord]` over the region.
pub fn coordinate_interval(
    region: &RegionSpec,
    coord: usize,
    options: &BranchOptions,
) -> Result<CoordinateOutcome> {
    if coord >= region.dim() {
        return Err(invalid(format!(
            "coordinate {coord} out of range for d = {}",
            region.dim()
        )));
    }
    let lower = solve_bound(region, coord, Sense::Minimize, options)?;
    if lower.status == SolveStatus::Infeasible {
        return Ok(CoordinateOutcome::Empty { nodes: lower.nodes });
    }
    let upper = solve_bound(region, coord, Sense::Maximize, options)?;
    if upper.status == SolveStatus::Infeasible {
        return Ok(CoordinateOutcome::Empty {
            nodes: lower.nodes + upper.nodes,
        });
    }
    Ok(CoordinateOutcome::Interval { lower, upper })
}

/// Axis-aligned bounding box of the region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateIntervals {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Per coordinate, whether the lower and upper ends are infinite.
    pub unbounded_flags: Vec<(bool, bool)>,
    /// Some end stopped at the node limit and is not certified.
    pub incomplete: bool,
    pub nodes: usize,
    /// Parameter vectors attaining each end, lower then upper per coordinate.
    pub extreme_points: Vec<Option<Vec<f64>>>,
}

impl CoordinateIntervals {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .collect()
    }

    pub fn mean_width(&self) -> f64 {
        self.widths().iter().sum::<f64>() / self.dim() as f64
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| l <= t && t <= u)
    }

    /// CSV with header `coord,lower,upper`; infinite ends print as `inf`
    /// and `-inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("coord,lower,upper\n");
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            out.push_str(&format!("{i},{},{}\n", fmt_sig(*l), fmt_sig(*u)));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&IntervalsRepr::from(self))?)
    }
}

/// JSON has no infinities, so infinite ends travel as `null` next to the
/// explicit flags.
#[derive(Serialize)]
struct IntervalsRepr<'a> {
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
    unbounded_flags: &'a [(bool, bool)],
    incomplete: bool,
    nodes: usize,
}

impl<'a> From<&'a CoordinateIntervals> for IntervalsRepr<'a> {
    fn from(c: &'a CoordinateIntervals) -> Self {
        let finite = |v: &f64| v.is_finite().then_some(*v);
        IntervalsRepr {
            lower: c.lower.iter().map(finite).collect(),
            upper: c.upper.iter().map(finite).collect(),
            unbounded_flags: &c.unbounded_flags,
            incomplete: c.incomplete,
            nodes: c.nodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IntervalsOutcome {
    Box(CoordinateIntervals),
    Empty { nodes: usize },
}

/// All `2d` coordinate solves; stops at the first proof of emptiness.
pub fn all_coordinate_intervals(
    region: &RegionSpec,
    options: &BranchOptions,
) -> Result<IntervalsOutcome> {
    let d = region.dim();
    let mut lower = Vec::with_capacity(d);
    let mut upper = Vec::with_capacity(d);
    let mut flags = Vec::with_capacity(d);
    let mut points = Vec::with_capacity(2 * d);
    let mut incomplete = false;
    let mut nodes = 0;
    for coord in 0..d {
        match coordinate_interval(region, coord, options)? {
            CoordinateOutcome::Empty { nodes: n } => {
                return Ok(IntervalsOutcome::Empty { nodes: nodes + n });
            }
            CoordinateOutcome::Interval {
                lower: lo,
                upper: hi,
            } => {
                nodes += lo.nodes + hi.nodes;
                incomplete |= !lo.is_complete() || !hi.is_complete();
                flags.push((lo.value.is_infinite(), hi.value.is_infinite()));
                lower.push(lo.value);
                upper.push(hi.value);
                points.push(lo.theta);
                points.push(hi.theta);
            }
        }
    }
    Ok(IntervalsOutcome::Box(CoordinateIntervals {
        lower,
        upper,
        unbounded_flags: flags,
        incomplete,
        nodes,
        extreme_points: points,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestState {
    /// The region is empty: the null hypothesis is rejected at level alpha.
    Rejected,
    NotRejected,
    /// The node limit stopped the search before a proof either way.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub rejected: bool,
    pub state: TestState,
    pub alpha: f64,
    pub b: f64,
    /// A member of the region, when one was found.
    pub witness: Option<Vec<f64>>,
    /// The witness passes the exact closed-interval membership test.
    pub witness_verified: bool,
    pub nodes: usize,
}

impl TestVerdict {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Tests `H0: the data follow a linear model in X with b-valid noise` by
/// deciding whether the region is empty.
pub fn hypothesis_test(region: &RegionSpec, options: &BranchOptions) -> Result<TestVerdict> {
    let d = region.dim();
    let res = solve_over_region(region, &vec![0.0; d], Sense::Minimize, options)?;
    let out = &res.outcome;
    let (state, witness) = match out.status {
        SolveStatus::Infeasible => (TestState::Rejected, None),
        SolveStatus::Optimal | SolveStatus::Unbounded => {
            let active = out.solution.as_ref().map(|s| {
                (0..region.n_te())
                    .filter(|&i| s[d + i] >= 0.5)
                    .collect::<Vec<_>>()
            });
            let raw = out.solution.as_ref().map(|s| s[..d].to_vec());
            (
                TestState::NotRejected,
                pick_witness(region, raw, active.as_deref())?,
            )
        }
        SolveStatus::NodeLimit => (TestState::Inconclusive, None),
    };
    let witness_verified = match &witness {
        Some(theta) => count_hits(region.intervals(), theta)? >= region.k(),
        None => false,
    };
    Ok(TestVerdict {
        rejected: state == TestState::Rejected,
        state,
        alpha: region.alpha(),
        b: region.b(),
        witness,
        witness_verified,
        nodes: res.total_nodes,
    })
}

/// Prefers a point deep inside the active slabs, which survives the exact
/// membership test, over the solver's vertex, which sits on slab faces.
fn pick_witness(
    region: &RegionSpec,
    raw: Option<Vec<f64>>,
    active: Option<&[usize]>,
) -> Result<Option<Vec<f64>>> {
    if let Some(active) = active.filter(|a| a.len() >= region.k()) {
        if let Some(theta) = deepest_point(region, active)? {
            if count_hits(region.intervals(), &theta)? >= region.k() {
                return Ok(Some(theta));
            }
        }
    }
    Ok(raw)
}

/// Maximises the margin `t <= 1` with `lo_i + t <= theta . x_i <= hi_i - t`
/// over the active points.
fn deepest_point(region: &RegionSpec, active: &[usize]) -> Result<Option<Vec<f64>>> {
    let d = region.dim();
    let iv = region.intervals();
    let mut lp = MilpModel::new(d + 1, Sense::Maximize);
    lp.objective[d] = 1.0;
    lp.set_bounds(d, f64::NEG_INFINITY, 1.0);
    for &i in active {
        let mut lo = iv.row(i).to_vec();
        lo.push(-1.0);
        lp.add_constraint(lo, Relation::Ge, iv.lo()[i]);
        let mut hi = iv.row(i).to_vec();
        hi.push(1.0);
        lp.add_constraint(hi, Relation::Le, iv.hi()[i]);
    }
    let out = simplex_solve(&lp)?;
    Ok(match (out.status, out.solution) {
        (SolveStatus::Optimal, Some(x)) if x[d] >= 0.0 => Some(x[..d].to_vec()),
        _ => None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxDecision {
    pub w: Vec<f64>,
    /// `max over the box of w . C theta` at the returned `w`.
    pub worst_value: f64,
}

/// Solves `min_w max_{theta in box} w^T C theta` for a row-major `p x d`
/// cost matrix `C` and `w` restricted to `w_bounds`.
///
/// The inner maximum is separable: coordinate `j` contributes
/// `max(g_j l_j, g_j u_j)` with `g = C^T w`. The outer problem is the LP
/// `min sum_j t_j` subject to `t_j >= g_j l_j`, `t_j >= g_j u_j`.
pub fn robust_minimax_box(
    bbox: &CoordinateIntervals,
    cost_matrix: &[f64],
    w_bounds: &[(f64, f64)],
) -> Result<MinimaxDecision> {
    let d = bbox.dim();
    let p = w_bounds.len();
    if p == 0 || d == 0 {
        return Err(invalid("w and theta must have at least one coordinate"));
    }
    if cost_matrix.len() != p * d {
        return Err(RiiError::DimensionMismatch {
            expected: p * d,
            got: cost_matrix.len(),
        });
    }
    if let Some(j) = (0..d).find(|&j| !bbox.lower[j].is_finite() || !bbox.upper[j].is_finite()) {
        return Err(RiiError::Unsupported(format!(
            "coordinate {j} of the box is unbounded"
        )));
    }
    if cost_matrix.iter().any(|v| !v.is_finite()) {
        return Err(RiiError::NonFinite("cost matrix"));
    }

    // Variables: w_0..w_{p-1}, t_0..t_{d-1}.
    let mut lp = MilpModel::new(p + d, Sense::Minimize);
    for (k, &(l, u)) in w_bounds.iter().enumerate() {
        if l > u || l.is_nan() || u.is_nan() {
            return Err(invalid(format!("w bound {k} is empty")));
        }
        lp.set_bounds(k, l, u);
    }
    for j in 0..d {
        lp.objective[p + j] = 1.0;
        for end in [bbox.lower[j], bbox.upper[j]] {
            // t_j - end * sum_k C[k][j] w_k >= 0
            let mut row = vec![0.0; p + d];
            for k in 0..p {
                row[k] = -end * cost_matrix[k * d + j];
            }
            row[p + j] = 1.0;
            lp.add_constraint(row, Relation::Ge, 0.0);
        }
    }
    let out = simplex_solve(&lp)?;
    match out.status {
        SolveStatus::Optimal => {
            let x = out.solution.expect("optimal solution");
            let w = x[..p].to_vec();
            Ok(MinimaxDecision {
                worst_value: worst_case(bbox, cost_matrix, &w),
                w,
            })
        }
        SolveStatus::Unbounded => Err(RiiError::Unsupported(
            "minimax value is unbounded below; bound w".into(),
        )),
        other => Err(invalid(format!("minimax LP ended with status {other}"))),
    }
}

/// `max over the box of w^T C theta`, evaluated in closed form.
pub fn worst_case(bbox: &CoordinateIntervals, cost_matrix: &[f64], w: &[f64]) -> f64 {
    let d = bbox.dim();
    (0..d)
        .map(|j| {
            let g: f64 = w
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * cost_matrix[k * d + j])
                .sum();
            (g * bbox.lower[j]).max(g * bbox.upper[j])
        })
        .sum()
}
