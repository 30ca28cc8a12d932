//! Dense two-phase primal simplex with implicit variable bounds.
//!
//! Every model variable is mapped onto nonnegative kernel columns: a finite
//! lower bound is shifted to zero, an upper-bounded-only variable is
//! reflected, and a free variable is split into a plus/minus pair. Upper
//! bounds stay implicit (nonbasic columns rest at either end of their box),
//! so binaries do not add rows. Phase 1 only introduces artificials for rows
//! the all-at-lower-bound start point violates.
//!
//! Pricing is Dantzig's largest reduced cost. After a run of degenerate
//! pivots the phase switches to Bland's smallest-index rule, which cannot
//! cycle.
//!
//! Branch-and-bound children differ from their parent only in the bounds of
//! a few binaries. [`resolve`] restarts from the parent's optimal tableau,
//! restores primal feasibility with the dual simplex and falls back to a
//! cold solve whenever the warm path stalls or loses accuracy.

use std::time::Instant;

use super::model::{MilpModel, Relation, Sense, SolveOutcome, SolveStatus, Tolerances};
use super::SolverError;

/// Consecutive degenerate Dantzig pivots tolerated before switching to Bland.
const DEGENERATE_RUN_LIMIT: usize = 50;

/// Outcome of the LP kernel on one relaxation.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpSolution {
    /// `value` is reported in the model's own sense. `reduced` holds, per
    /// model variable, the minimisation-form reduced cost of a nonbasic
    /// variable resting at a bound (zero for basic or fixed variables).
    Optimal {
        x: Vec<f64>,
        value: f64,
        reduced: Vec<f64>,
    },
    Infeasible,
    /// `x` is a feasible point from which the objective improves without bound.
    Unbounded {
        x: Vec<f64>,
    },
}

/// Solves a pure LP with the two-phase simplex.
pub fn simplex_solve(model: &MilpModel) -> Result<SolveOutcome, SolverError> {
    simplex_solve_with(model, &Tolerances::default())
}

pub fn simplex_solve_with(
    model: &MilpModel,
    tol: &Tolerances,
) -> Result<SolveOutcome, SolverError> {
    model.validate()?;
    if !model.is_pure_lp() {
        return Err(SolverError::InvalidModel(
            "simplex_solve expects a model without binary variables".into(),
        ));
    }
    let start = Instant::now();
    let lp = solve_relaxation(model, &model.bounds, tol)?;
    let wall_time = start.elapsed();
    Ok(match lp {
        LpSolution::Optimal { x, value, .. } => SolveOutcome {
            status: SolveStatus::Optimal,
            objective_value: Some(value),
            solution: Some(x),
            nodes_explored: 1,
            wall_time,
        },
        LpSolution::Infeasible => SolveOutcome {
            status: SolveStatus::Infeasible,
            objective_value: None,
            solution: None,
            nodes_explored: 1,
            wall_time,
        },
        LpSolution::Unbounded { .. } => SolveOutcome {
            status: SolveStatus::Unbounded,
            objective_value: None,
            solution: None,
            nodes_explored: 1,
            wall_time,
        },
    })
}

/// Kernel column: `sign * y` contributes to model variable `var`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StructCol {
    var: usize,
    sign: f64,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

#[derive(Debug, Clone)]
struct Tableau {
    m: usize,
    ncols: usize,
    /// Row-major `m x ncols` entries of `B^-1 A`.
    t: Vec<f64>,
    /// Current values of the basic columns.
    x_b: Vec<f64>,
    basis: Vec<usize>,
    /// Row holding each column when basic.
    row_of: Vec<Option<usize>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    at_upper: Vec<bool>,
    /// Reduced costs for the active phase.
    d: Vec<f64>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.ncols + j]
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.ub[j]
        } else {
            self.lb[j]
        }
    }

    fn value(&self, j: usize) -> f64 {
        match self.row_of[j] {
            Some(i) => self.x_b[i],
            None => self.nonbasic_value(j),
        }
    }

    fn price(&mut self, cost: &[f64]) {
        self.d.clear();
        self.d.extend_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
            for (dj, &a) in self.d.iter_mut().zip(row) {
                *dj -= cb * a;
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    fn choose_entering(&self, allowed: &[bool], bland: bool, opt_tol: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.ncols {
            if !allowed[j] || self.row_of[j].is_some() || self.ub[j] <= self.lb[j] {
                continue;
            }
            let dj = self.d[j];
            let improving = if self.at_upper[j] {
                dj > opt_tol
            } else {
                dj < -opt_tol
            };
            if !improving {
                continue;
            }
            if bland {
                return Some(j);
            }
            let score = dj.abs();
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Moves nonbasic column `q` by `delta` and, when `row` is given, swaps it
    /// into the basis in place of that row's basic column.
    fn step(&mut self, q: usize, delta: f64, row: Option<(usize, bool)>) {
        let n = self.ncols;
        if delta != 0.0 {
            for i in 0..self.m {
                let a = self.t[i * n + q];
                if a != 0.0 {
                    self.x_b[i] -= a * delta;
                }
            }
        }
        let entering_value = self.nonbasic_value(q) + delta;
        let Some((r, leaves_at_upper)) = row else {
            self.at_upper[q] = !self.at_upper[q];
            return;
        };
        let leaving = self.basis[r];
        let piv = self.t[r * n + q];
        let inv = 1.0 / piv;
        for v in &mut self.t[r * n..(r + 1) * n] {
            *v *= inv;
        }
        let (before, rest) = self.t.split_at_mut(r * n);
        let (pivot_row, after) = rest.split_at_mut(n);
        for other in before.chunks_exact_mut(n).chain(after.chunks_exact_mut(n)) {
            let f = other[q];
            if f != 0.0 {
                for (o, &p) in other.iter_mut().zip(pivot_row.iter()) {
                    *o -= f * p;
                }
                other[q] = 0.0;
            }
        }
        let f = self.d[q];
        if f != 0.0 {
            for (dj, &p) in self.d.iter_mut().zip(pivot_row.iter()) {
                *dj -= f * p;
            }
            self.d[q] = 0.0;
        }
        self.x_b[r] = entering_value;
        self.basis[r] = q;
        self.row_of[q] = Some(r);
        self.row_of[leaving] = None;
        self.at_upper[leaving] = leaves_at_upper;
        self.at_upper[q] = false;
    }

    fn run(
        &mut self,
        cost: &[f64],
        allowed: &[bool],
        tol: &Tolerances,
    ) -> Result<(PhaseEnd, Option<usize>), SolverError> {
        self.price(cost);
        let mut bland = false;
        let mut degenerate_run = 0usize;
        let max_iter = 20_000 + 200 * (self.m + self.ncols);
        for _ in 0..max_iter {
            let Some(q) = self.choose_entering(allowed, bland, tol.optimality) else {
                return Ok((PhaseEnd::Optimal, None));
            };
            let dir = if self.at_upper[q] { -1.0 } else { 1.0 };

            let mut best: Option<(usize, f64, bool, f64)> = None;
            let mut tiny_seen = false;
            for i in 0..self.m {
                let alpha = self.at(i, q);
                if alpha.abs() <= tol.pivot {
                    if alpha != 0.0 {
                        tiny_seen = true;
                    }
                    continue;
                }
                let g = dir * alpha;
                let (limit, to_upper) = if g > 0.0 {
                    ((self.x_b[i] - self.lb[self.basis[i]]).max(0.0) / g, false)
                } else {
                    let u = self.ub[self.basis[i]];
                    if u.is_infinite() {
                        continue;
                    }
                    ((u - self.x_b[i]).max(0.0) / -g, true)
                };
                let replace = match best {
                    None => true,
                    Some((bi, bt, _, ba)) => {
                        let slack = 1e-12 * (1.0 + bt.abs());
                        if limit < bt - slack {
                            true
                        } else if limit <= bt + slack {
                            if bland {
                                self.basis[i] < self.basis[bi]
                            } else {
                                alpha.abs() > ba
                            }
                        } else {
                            false
                        }
                    }
                };
                if replace {
                    best = Some((i, limit, to_upper, alpha.abs()));
                }
            }

            let flip = self.ub[q] - self.lb[q];
            let (t, row) = match best {
                Some((_, bt, _, _)) if flip <= bt => (flip, None),
                Some((r, bt, up, _)) => (bt, Some((r, up))),
                None if flip.is_finite() => (flip, None),
                None => {
                    if tiny_seen {
                        return Err(SolverError::NumericInstability(
                            "all candidate pivots fall below the pivot tolerance".into(),
                        ));
                    }
                    return Ok((PhaseEnd::Unbounded, Some(q)));
                }
            };
            if t <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > DEGENERATE_RUN_LIMIT {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
            self.step(q, dir * t, row);
        }
        Err(SolverError::IterationLimit(max_iter))
    }

    /// Dual simplex from a dual-feasible basis. Returns `false` when a
    /// bound-violating row admits no entering column, which proves the LP
    /// infeasible.
    fn dual_run(&mut self, allowed: &[bool], tol: &Tolerances) -> Result<bool, SolverError> {
        let max_iter = 50 * (self.m + self.ncols);
        for _ in 0..max_iter {
            let mut leave: Option<(usize, bool, f64)> = None;
            for i in 0..self.m {
                let b = self.basis[i];
                let v = self.x_b[i];
                let (viol, below) = if v < self.lb[b] - tol.feasibility {
                    (self.lb[b] - v, true)
                } else if v > self.ub[b] + tol.feasibility {
                    (v - self.ub[b], false)
                } else {
                    continue;
                };
                if leave.is_none_or(|(_, _, w)| viol > w) {
                    leave = Some((i, below, viol));
                }
            }
            let Some((r, below, _)) = leave else {
                return Ok(true);
            };

            let mut enter: Option<(usize, f64, f64)> = None;
            for j in 0..self.ncols {
                if !allowed[j] || self.row_of[j].is_some() || self.ub[j] <= self.lb[j] {
                    continue;
                }
                let a = self.at(r, j);
                if a.abs() <= tol.pivot {
                    continue;
                }
                // Row r reads x_r = beta_r - sum_j a_rj x_j; the entering
                // column must move x_r toward the violated bound.
                let eligible = if self.at_upper[j] {
                    (a > 0.0) == below
                } else {
                    (a < 0.0) == below
                };
                if !eligible {
                    continue;
                }
                let ratio = self.d[j].abs() / a.abs();
                let replace = match enter {
                    None => true,
                    Some((_, br, ba)) => {
                        let slack = 1e-12 * (1.0 + br);
                        ratio < br - slack || (ratio <= br + slack && a.abs() > ba)
                    }
                };
                if replace {
                    enter = Some((j, ratio, a.abs()));
                }
            }
            let Some((q, _, _)) = enter else {
                return Ok(false);
            };
            let target = if below {
                self.lb[self.basis[r]]
            } else {
                self.ub[self.basis[r]]
            };
            let delta = (self.x_b[r] - target) / self.at(r, q);
            self.step(q, delta, Some((r, !below)));
        }
        Err(SolverError::IterationLimit(max_iter))
    }

    /// Changes the box of column `c`, moving it if it is nonbasic.
    fn set_bounds(&mut self, c: usize, lb: f64, ub: f64) {
        let basic = self.row_of[c].is_some();
        let old = self.nonbasic_value(c);
        self.lb[c] = lb;
        self.ub[c] = ub;
        if basic {
            return;
        }
        self.at_upper[c] = self.at_upper[c] && ub.is_finite() && ub > lb;
        let delta = self.nonbasic_value(c) - old;
        if delta != 0.0 {
            let n = self.ncols;
            for i in 0..self.m {
                let a = self.t[i * n + c];
                if a != 0.0 {
                    self.x_b[i] -= a * delta;
                }
            }
        }
    }
}

/// Optimal simplex state of one relaxation, reusable for warm starts.
#[derive(Debug, Clone)]
pub(crate) struct LpState {
    tab: Tableau,
    cols: Vec<StructCol>,
    offset: Vec<f64>,
    /// Column of each variable whose box is adjustable in place.
    col_of: Vec<Option<usize>>,
    bounds: Vec<(f64, f64)>,
    allowed: Vec<bool>,
    cost: Vec<f64>,
}

fn extract(model: &MilpModel, st: &LpState, end: PhaseEnd) -> LpSolution {
    let mut x = st.offset.clone();
    for (k, sc) in st.cols.iter().enumerate() {
        x[sc.var] += sc.sign * st.tab.value(k);
    }
    match end {
        PhaseEnd::Optimal => {
            let value = model.objective_value(&x);
            let mut reduced = vec![0.0; model.num_vars()];
            for (k, sc) in st.cols.iter().enumerate() {
                if st.tab.row_of[k].is_none() {
                    reduced[sc.var] += sc.sign * st.tab.d[k];
                }
            }
            LpSolution::Optimal { x, value, reduced }
        }
        PhaseEnd::Unbounded => LpSolution::Unbounded { x },
    }
}

/// Re-solves a relaxation whose bounds tighten those of `parent`'s.
pub(crate) fn resolve(
    parent: &LpState,
    model: &MilpModel,
    bounds: &[(f64, f64)],
    tol: &Tolerances,
) -> Result<(LpSolution, Option<LpState>), SolverError> {
    match warm_resolve(parent, model, bounds, tol) {
        Some(result) => Ok(result),
        None => solve_with_state(model, bounds, tol),
    }
}

fn warm_resolve(
    parent: &LpState,
    model: &MilpModel,
    bounds: &[(f64, f64)],
    tol: &Tolerances,
) -> Option<(LpSolution, Option<LpState>)> {
    let mut st = parent.clone();
    for (j, &(l, u)) in bounds.iter().enumerate() {
        if (l, u) == st.bounds[j] {
            continue;
        }
        let c = st.col_of[j]?;
        if l > u + tol.feasibility {
            return Some((LpSolution::Infeasible, None));
        }
        st.tab.set_bounds(c, l - st.offset[j], u - st.offset[j]);
        st.bounds[j] = (l, u);
    }
    match st.tab.dual_run(&st.allowed, tol) {
        Ok(true) => {}
        Ok(false) => return Some((LpSolution::Infeasible, None)),
        Err(_) => return None,
    }
    let cost = std::mem::take(&mut st.cost);
    let end = st.tab.run(&cost, &st.allowed, tol).ok()?.0;
    st.cost = cost;
    let sol = extract(model, &st, end);
    let x = match &sol {
        LpSolution::Optimal { x, .. } | LpSolution::Unbounded { x } => x,
        LpSolution::Infeasible => unreachable!("extract never reports infeasibility"),
    };
    // Accept the warm answer only if it is as accurate as a cold solve.
    let scale = 1.0
        + model
            .constraints
            .iter()
            .map(|c| c.rhs.abs())
            .fold(0.0, f64::max);
    let bound_ok = x
        .iter()
        .zip(bounds)
        .all(|(&v, &(l, u))| v >= l - 1e-6 && v <= u + 1e-6);
    if !bound_ok || model.max_violation(x) > 1e-7 * scale {
        return None;
    }
    Some((sol, Some(st)))
}

/// Solves the LP relaxation of `model` under the given variable bounds.
pub(crate) fn solve_relaxation(
    model: &MilpModel,
    bounds: &[(f64, f64)],
    tol: &Tolerances,
) -> Result<LpSolution, SolverError> {
    Ok(solve_with_state(model, bounds, tol)?.0)
}

/// Cold two-phase solve that also hands back the final simplex state when
/// the relaxation is optimal.
pub(crate) fn solve_with_state(
    model: &MilpModel,
    bounds: &[(f64, f64)],
    tol: &Tolerances,
) -> Result<(LpSolution, Option<LpState>), SolverError> {
    let nvars = model.num_vars();
    let mut col_of = vec![None; nvars];

    // Column mapping.
    let mut offset = vec![0.0; nvars];
    let mut cols: Vec<StructCol> = Vec::with_capacity(nvars + 4);
    let mut col_ub: Vec<f64> = Vec::with_capacity(nvars + 4);
    for (j, &(l, u)) in bounds.iter().enumerate() {
        if l > u + tol.feasibility {
            return Ok((LpSolution::Infeasible, None));
        }
        if l.is_finite() && u.is_finite() && u - l <= 0.0 {
            offset[j] = l;
        } else if l.is_finite() {
            offset[j] = l;
            col_of[j] = Some(cols.len());
            cols.push(StructCol { var: j, sign: 1.0 });
            col_ub.push(u - l);
        } else if u.is_finite() {
            offset[j] = u;
            cols.push(StructCol { var: j, sign: -1.0 });
            col_ub.push(f64::INFINITY);
        } else {
            cols.push(StructCol { var: j, sign: 1.0 });
            col_ub.push(f64::INFINITY);
            cols.push(StructCol { var: j, sign: -1.0 });
            col_ub.push(f64::INFINITY);
        }
    }
    let nstruct = cols.len();

    // Row assembly in kernel coordinates; rows without structural support are
    // checked directly.
    struct Row {
        coefs: Vec<f64>,
        relation: Relation,
        rhs: f64,
    }
    let mut rows: Vec<Row> = Vec::with_capacity(model.constraints.len());
    let mut rhs_scale: f64 = 0.0;
    for c in &model.constraints {
        let shift: f64 = c.coeffs.iter().zip(&offset).map(|(a, o)| a * o).sum();
        let rhs = c.rhs - shift;
        let coefs: Vec<f64> = cols.iter().map(|sc| sc.sign * c.coeffs[sc.var]).collect();
        if coefs.iter().all(|&a| a == 0.0) {
            let violated = match c.relation {
                Relation::Le => rhs < -tol.feasibility,
                Relation::Ge => rhs > tol.feasibility,
                Relation::Eq => rhs.abs() > tol.feasibility,
            };
            if violated {
                return Ok((LpSolution::Infeasible, None));
            }
            continue;
        }
        rhs_scale = rhs_scale.max(rhs.abs());
        rows.push(Row {
            coefs,
            relation: c.relation,
            rhs,
        });
    }
    let m = rows.len();

    let nslack = rows.iter().filter(|r| r.relation != Relation::Eq).count();
    // Each row is basic in either its slack or a fresh artificial.
    let mut needs_art = vec![false; m];
    for (i, r) in rows.iter().enumerate() {
        needs_art[i] = match r.relation {
            Relation::Le => r.rhs < 0.0,
            Relation::Ge => r.rhs > 0.0,
            Relation::Eq => true,
        };
    }
    let nart = needs_art.iter().filter(|&&b| b).count();
    let ncols = nstruct + nslack + nart;
    let art_start = nstruct + nslack;

    let mut tab = Tableau {
        m,
        ncols,
        t: vec![0.0; m * ncols],
        x_b: vec![0.0; m],
        basis: vec![0; m],
        row_of: vec![None; ncols],
        lb: vec![0.0; ncols],
        ub: Vec::with_capacity(ncols),
        at_upper: vec![false; ncols],
        d: Vec::with_capacity(ncols),
    };
    tab.ub.extend_from_slice(&col_ub);
    tab.ub.resize(ncols, f64::INFINITY);

    let mut slack_idx = nstruct;
    let mut art_idx = art_start;
    for (i, r) in rows.iter().enumerate() {
        let base = i * ncols;
        tab.t[base..base + nstruct].copy_from_slice(&r.coefs);
        let slack_col = match r.relation {
            Relation::Le => {
                tab.t[base + slack_idx] = 1.0;
                slack_idx += 1;
                Some(slack_idx - 1)
            }
            Relation::Ge => {
                tab.t[base + slack_idx] = -1.0;
                slack_idx += 1;
                Some(slack_idx - 1)
            }
            Relation::Eq => None,
        };
        let (basic_col, basic_coef) = if needs_art[i] {
            let coef = if r.rhs >= 0.0 { 1.0 } else { -1.0 };
            tab.t[base + art_idx] = coef;
            art_idx += 1;
            (art_idx - 1, coef)
        } else {
            let sc = slack_col.expect("slack present when no artificial is needed");
            (sc, tab.t[base + sc])
        };
        if basic_coef != 1.0 {
            for v in &mut tab.t[base..base + ncols] {
                *v /= basic_coef;
            }
        }
        tab.x_b[i] = r.rhs / basic_coef;
        tab.basis[i] = basic_col;
        tab.row_of[basic_col] = Some(i);
    }

    // Phase 1.
    let mut allowed = vec![true; ncols];
    if nart > 0 {
        let mut cost = vec![0.0; ncols];
        for c in cost.iter_mut().skip(art_start) {
            *c = 1.0;
        }
        let (end, _) = tab.run(&cost, &allowed, tol)?;
        if let PhaseEnd::Unbounded = end {
            return Err(SolverError::NumericInstability(
                "phase-1 objective reported unbounded".into(),
            ));
        }
        let infeasibility: f64 = (art_start..ncols).map(|j| tab.value(j)).sum();
        if infeasibility > tol.feasibility * (1.0 + rhs_scale) {
            return Ok((LpSolution::Infeasible, None));
        }
        // Drive remaining artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] < art_start {
                continue;
            }
            let mut pick: Option<(usize, f64)> = None;
            for j in 0..art_start {
                if tab.row_of[j].is_some() {
                    continue;
                }
                let a = tab.at(r, j).abs();
                if a > 1e-9 && pick.is_none_or(|(_, b)| a > b) {
                    pick = Some((j, a));
                }
            }
            if let Some((j, _)) = pick {
                let delta = tab.x_b[r] / tab.at(r, j);
                tab.step(j, delta, Some((r, false)));
            }
        }
        for j in art_start..ncols {
            tab.ub[j] = 0.0;
            allowed[j] = false;
        }
    }

    // Phase 2.
    let flip = if model.sense == Sense::Maximize {
        -1.0
    } else {
        1.0
    };
    let mut cost = vec![0.0; ncols];
    for (k, sc) in cols.iter().enumerate() {
        cost[k] = flip * sc.sign * model.objective[sc.var];
    }
    let (end, _) = tab.run(&cost, &allowed, tol)?;

    let unbounded = matches!(end, PhaseEnd::Unbounded);
    let st = LpState {
        tab,
        cols,
        offset,
        col_of,
        bounds: bounds.to_vec(),
        allowed,
        cost,
    };
    let sol = extract(model, &st, end);
    Ok((sol, (!unbounded).then_some(st)))
}
