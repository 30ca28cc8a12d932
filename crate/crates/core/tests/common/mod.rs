//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rii::milp::{MilpModel, Relation, Sense};
use rii::region::ResidualIntervalSet;

/// Oracle verdict for a bounded problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleResult {
    Optimal(f64),
    Infeasible,
}

/// Hyperplane `a . x = rhs` with the side on which points are feasible.
#[derive(Debug, Clone)]
struct HalfSpace {
    a: Vec<f64>,
    rhs: f64,
    relation: Relation,
}

impl HalfSpace {
    fn holds(&self, x: &[f64], tol: f64) -> bool {
        let lhs: f64 = self.a.iter().zip(x).map(|(a, v)| a * v).sum();
        let scale = tol * (1.0 + self.rhs.abs());
        match self.relation {
            Relation::Le => lhs <= self.rhs + scale,
            Relation::Ge => lhs >= self.rhs - scale,
            Relation::Eq => (lhs - self.rhs).abs() <= scale,
        }
    }
}

/// Calls `visit` with every `r`-subset of `0..n` in lexicographic order.
pub fn for_each_subset(n: usize, r: usize, mut visit: impl FnMut(&[usize])) {
    if r > n {
        return;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        visit(&idx);
        let Some(i) = (0..r).rev().find(|&i| idx[i] < n - r + i) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Solves the square system `A x = b` given by the rows `rows`, or `None`
/// when it is (numerically) singular.
fn intersect(planes: &[&HalfSpace]) -> Option<Vec<f64>> {
    let n = planes.len();
    let a = DMatrix::from_fn(n, n, |i, j| planes[i].a[j]);
    let b = DVector::from_iterator(n, planes.iter().map(|p| p.rhs));
    let lu = a.clone().full_piv_lu();
    let scale = a.amax().max(1.0);
    let min_pivot = (0..n)
        .map(|i| lu.u()[(i, i)].abs())
        .fold(f64::INFINITY, f64::min);
    if min_pivot < 1e-10 * scale {
        return None;
    }
    lu.solve(&b).map(|x| x.iter().copied().collect())
}

/// Optimum of a bounded LP by enumerating every basic solution: each choice
/// of `n` tight rows among constraints and finite bounds.
pub fn lp_vertex_oracle(model: &MilpModel) -> OracleResult {
    let n = model.num_vars();
    let mut planes: Vec<HalfSpace> = model
        .constraints
        .iter()
        .map(|c| HalfSpace {
            a: c.coeffs.clone(),
            rhs: c.rhs,
            relation: c.relation,
        })
        .collect();
    for (j, &(lo, hi)) in model.bounds.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        if lo.is_finite() {
            planes.push(HalfSpace {
                a: e.clone(),
                rhs: lo,
                relation: Relation::Ge,
            });
        }
        if hi.is_finite() {
            planes.push(HalfSpace {
                a: e,
                rhs: hi,
                relation: Relation::Le,
            });
        }
    }
    let mut best: Option<f64> = None;
    for_each_subset(planes.len(), n, |idx| {
        let chosen: Vec<&HalfSpace> = idx.iter().map(|&i| &planes[i]).collect();
        let Some(x) = intersect(&chosen) else { return };
        if !planes.iter().all(|p| p.holds(&x, 1e-9)) {
            return;
        }
        let v: f64 = model.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        best = Some(match (best, model.sense) {
            (None, _) => v,
            (Some(b), Sense::Maximize) => b.max(v),
            (Some(b), Sense::Minimize) => b.min(v),
        });
    });
    best.map_or(OracleResult::Infeasible, OracleResult::Optimal)
}

/// Optimum of `objective . theta` over the Big-M encoding of
/// `{theta : C(theta) >= k}` by exhaustive enumeration.
///
/// For a fixed activation pattern the problem is an LP in `theta` whose rows
/// are the slabs `lo_i <= theta.x_i <= hi_i` (active) or
/// `lo_i - M <= theta.x_i <= hi_i + M` (inactive). Every vertex of every
/// such LP is the intersection of `d` of the `4 n` hyperplanes, and such a
/// point is feasible for some pattern with at least `k` active points exactly
/// when it satisfies every relaxed band and at least `k` slabs. Requires the
/// test inputs to span `R^d` so that every pattern's LP is bounded.
pub fn milp_exhaustive_oracle(
    iv: &ResidualIntervalSet,
    k: usize,
    big_m: f64,
    objective: &[f64],
    sense: Sense,
) -> OracleResult {
    let d = iv.dim();
    let n = iv.len();
    let mut planes = Vec::with_capacity(4 * n);
    for i in 0..n {
        let x = iv.row(i).to_vec();
        for rhs in [
            iv.lo()[i],
            iv.hi()[i],
            iv.lo()[i] - big_m,
            iv.hi()[i] + big_m,
        ] {
            planes.push(HalfSpace {
                a: x.clone(),
                rhs,
                relation: Relation::Eq,
            });
        }
    }
    let tol = 1e-9;
    let mut best: Option<f64> = None;
    for_each_subset(planes.len(), d, |idx| {
        let chosen: Vec<&HalfSpace> = idx.iter().map(|&i| &planes[i]).collect();
        let Some(theta) = intersect(&chosen) else {
            return;
        };
        let mut hits = 0;
        for i in 0..n {
            let v: f64 = iv.row(i).iter().zip(&theta).map(|(a, b)| a * b).sum();
            let slack = tol * (1.0 + big_m);
            if v < iv.lo()[i] - big_m - slack || v > iv.hi()[i] + big_m + slack {
                return;
            }
            let s = tol * (1.0 + iv.lo()[i].abs().max(iv.hi()[i].abs()));
            if iv.lo()[i] - s <= v && v <= iv.hi()[i] + s {
                hits += 1;
            }
        }
        if hits < k {
            return;
        }
        let v: f64 = objective.iter().zip(&theta).map(|(c, t)| c * t).sum();
        best = Some(match (best, sense) {
            (None, _) => v,
            (Some(b), Sense::Maximize) => b.max(v),
            (Some(b), Sense::Minimize) => b.min(v),
        });
    });
    best.map_or(OracleResult::Infeasible, OracleResult::Optimal)
}

/// Closed-interval hit count written out independently of the library.
pub fn naive_hits(iv: &ResidualIntervalSet, theta: &[f64]) -> usize {
    (0..iv.len())
        .filter(|&i| {
            let v: f64 = iv.row(i).iter().zip(theta).map(|(a, b)| a * b).sum();
            iv.lo()[i] <= v && v <= iv.hi()[i]
        })
        .count()
}

/// Bounds of a one-dimensional region `{t : C(t) >= k}` found by scanning
/// every interval end `lo_i / x_i`, `hi_i / x_i`, then checking a fine grid
/// finds no member outside. `None` for an empty region.
pub fn grid_scan_interval(iv: &ResidualIntervalSet, k: usize) -> Option<(f64, f64)> {
    assert_eq!(iv.dim(), 1);
    let mut candidates = Vec::new();
    for i in 0..iv.len() {
        let x = iv.row(i)[0];
        assert!(x != 0.0, "grid scan needs nonzero inputs");
        candidates.push(iv.lo()[i] / x);
        candidates.push(iv.hi()[i] / x);
    }
    // A breakpoint computed by division can land a rounding error outside
    // its own interval; probe a hair either side as well.
    let members: Vec<f64> = candidates
        .iter()
        .flat_map(|&t| [t, t * (1.0 + 1e-14), t * (1.0 - 1e-14)])
        .filter(|t| naive_hits(iv, &[*t]) >= k)
        .collect();
    let lo = members.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = members.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if members.is_empty() {
        return None;
    }
    let span = candidates.iter().map(|t| t.abs()).fold(1.0, f64::max);
    let steps = 20_000;
    for s in 0..=steps {
        let t = -2.0 * span + 4.0 * span * s as f64 / steps as f64;
        if naive_hits(iv, &[t]) >= k {
            assert!(
                t >= lo - 1e-9 && t <= hi + 1e-9,
                "grid member {t} outside [{lo}, {hi}]"
            );
        }
    }
    Some((lo, hi))
}

/// Random interval set with Gaussian inputs and intervals around a random
/// linear signal.
pub fn random_intervals<R: Rng>(rng: &mut R, n: usize, d: usize) -> ResidualIntervalSet {
    let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut x = Vec::with_capacity(n * d);
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let signal: f64 = row.iter().zip(&theta).map(|(a, b)| a * b).sum();
        let y = signal + rng.random_range(-1.0..1.0);
        let y_hat = signal + rng.random_range(-1.0..1.0);
        lo.push(y.min(y_hat));
        hi.push(y.max(y_hat));
        x.extend(row);
    }
    ResidualIntervalSet::from_parts(d, x, lo, hi).expect("valid random intervals")
}

/// Beale's cycling example: minimise
/// `-3/4 x1 + 20 x2 - 1/2 x3 + 6 x4` subject to
/// `1/4 x1 - 8 x2 - x3 + 9 x4 <= 0`, `1/2 x1 - 12 x2 - 1/2 x3 + 3 x4 <= 0`,
/// `x3 <= 1`, `x >= 0`. Optimum `-5/4` at `x = (1, 0, 1, 0)`.
pub fn beale_model() -> MilpModel {
    let mut m = MilpModel::new(4, Sense::Minimize);
    m.objective = vec![-0.75, 20.0, -0.5, 6.0];
    m.add_constraint(vec![0.25, -8.0, -1.0, 9.0], Relation::Le, 0.0);
    m.add_constraint(vec![0.5, -12.0, -0.5, 3.0], Relation::Le, 0.0);
    m.add_constraint(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
    for j in 0..4 {
        m.set_bounds(j, 0.0, f64::INFINITY);
    }
    m
}

/// Random LP with box bounds `[-5, 5]` on every variable, so it is bounded.
/// Three in four instances are built around a point inside the box so that
/// they are feasible; the rest have unrelated right-hand sides.
pub fn random_bounded_lp<R: Rng>(rng: &mut R) -> MilpModel {
    let n = rng.random_range(1..=4);
    let m_rows = rng.random_range(1..=12);
    let sense = if rng.random_bool(0.5) {
        Sense::Maximize
    } else {
        Sense::Minimize
    };
    let anchor: Option<Vec<f64>> = rng
        .random_bool(0.75)
        .then(|| (0..n).map(|_| rng.random_range(-4.0..4.0)).collect());
    let mut model = MilpModel::new(n, sense);
    model.objective = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    for _ in 0..m_rows {
        let coeffs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let relation = match rng.random_range(0..12) {
            0..=6 => Relation::Le,
            7..=10 => Relation::Ge,
            _ => Relation::Eq,
        };
        let rhs = match &anchor {
            Some(x0) => {
                let at: f64 = coeffs.iter().zip(x0).map(|(a, b)| a * b).sum();
                match relation {
                    Relation::Le => at + rng.random_range(0.0..2.0),
                    Relation::Ge => at - rng.random_range(0.0..2.0),
                    Relation::Eq => at,
                }
            }
            None => rng.random_range(-3.0..3.0),
        };
        model.add_constraint(coeffs, relation, rhs);
    }
    for j in 0..n {
        model.set_bounds(j, -5.0, 5.0);
    }
    model
}

/// Outcome of an oracle comparison suite.
#[derive(Debug, Default)]
pub struct SuiteReport {
    pub total: usize,
    pub passed: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.total += 1;
        if ok {
            self.passed += 1;
        } else {
            self.failures.push(detail());
        }
    }

    pub fn all_passed(&self) -> bool {
        self.total > 0 && self.passed == self.total
    }
}

fn agrees(got: &rii::milp::SolveOutcome, want: OracleResult, tol: f64) -> bool {
    use rii::milp::SolveStatus;
    match want {
        OracleResult::Infeasible => got.status == SolveStatus::Infeasible,
        OracleResult::Optimal(v) => {
            got.status == SolveStatus::Optimal
                && got
                    .objective_value
                    .is_some_and(|g| (g - v).abs() <= tol * (1.0 + v.abs()))
        }
    }
}

/// Simplex against vertex enumeration on `count` random bounded LPs.
pub fn lp_suite(seed: u64, count: usize) -> SuiteReport {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::default();
    for case in 0..count {
        let model = random_bounded_lp(&mut rng);
        let want = lp_vertex_oracle(&model);
        let got = rii::milp::simplex_solve(&model);
        let ok = got.as_ref().is_ok_and(|g| agrees(g, want, 1e-7));
        report.record(ok, || {
            format!("LP case {case}: oracle {want:?}, simplex {got:?}")
        });
    }
    report
}

/// Branch-and-bound against the exhaustive oracle on `count` random region
/// instances with `n_te <= 12` and `d <= 3`.
pub fn milp_suite(seed: u64, count: usize) -> SuiteReport {
    use rand::SeedableRng;
    use rii::milp::{branch_and_bound, encode_region, DEFAULT_NODE_LIMIT};
    use rii::region::{default_big_m, RegionSpec};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::default();
    for case in 0..count {
        let d = rng.random_range(1..=3);
        let n = rng.random_range(d.max(2)..=12);
        let k = rng.random_range(1..=n);
        let iv = random_intervals(&mut rng, n, d);
        let m = default_big_m(&iv);
        let region = RegionSpec::new(iv.clone(), k, 0.1, 0.5, m).expect("valid region");
        let objective: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sense = if rng.random_bool(0.5) {
            Sense::Maximize
        } else {
            Sense::Minimize
        };
        let want = milp_exhaustive_oracle(&iv, k, m, &objective, sense);
        let got = branch_and_bound(
            &encode_region(&region, &objective, sense),
            DEFAULT_NODE_LIMIT,
        );
        let ok = got.as_ref().is_ok_and(|g| agrees(g, want, 1e-6));
        report.record(ok, || {
            format!(
                "MILP case {case} (n={n}, d={d}, k={k}): oracle {want:?}, branch-and-bound {got:?}"
            )
        });
    }
    report
}

/// One grid point of the Monte-Carlo check `P(C(theta*) >= k) >= S_n(k, b)`.
#[derive(Debug, Clone)]
pub struct CoverageCheck {
    pub predictor: &'static str,
    pub n_te: usize,
    pub k: usize,
    pub b: f64,
    pub empirical: f64,
    pub guaranteed: f64,
    pub sigma: f64,
}

impl CoverageCheck {
    pub fn holds(&self) -> bool {
        self.empirical >= self.guaranteed - 3.0 * self.sigma
    }
}

/// Noise with `P(eps >= 0) = b` exactly: `+|z|` with probability `b`,
/// otherwise `-|z|`, for standard normal `z`.
fn skewed_sign_noise<R: Rng>(rng: &mut R, b: f64) -> f64 {
    let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
    if rng.random_bool(b) {
        z.abs()
    } else {
        -z.abs()
    }
}

/// Simulates `reps` draws of `C(theta*)` per `(n_te, b, predictor)` and
/// compares `P(C >= k)` with `S_{n_te}(k, b)` at `k = k_alpha` for
/// `alpha` in {0.1, 0.3}. The `ols` predictor is fitted on 20 training
/// points; the `below` predictor returns `theta* . x - 1`, which makes
/// every hit probability exactly `b`.
pub fn coverage_theorem_grid(reps: usize, seed: u64) -> Vec<CoverageCheck> {
    use rand::SeedableRng;
    use rii::coverage::{binomial_tail, k_alpha};
    use rii::estimators::{fit_ols, predict_dataset};
    use rii::region::{count_hits, residual_intervals, Dataset, PredictionSet};

    let theta = [1.0, -2.0];
    let d = theta.len();
    let n_train = 20;
    let mut out = Vec::new();
    for (pi, predictor) in ["ols", "below"].into_iter().enumerate() {
        for (ni, n_te) in [10usize, 20, 39].into_iter().enumerate() {
            for (bi, b) in [0.2, 0.35, 0.5].into_iter().enumerate() {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                    seed ^ ((pi * 100 + ni * 10 + bi) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                let draw = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| {
                    let x: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
                    let y = x
                        .chunks_exact(d)
                        .map(|r| theta[0] * r[0] + theta[1] * r[1] + skewed_sign_noise(rng, b))
                        .collect();
                    Dataset::new(d, x, y).unwrap()
                };
                let counts: Vec<usize> = (0..reps)
                    .map(|_| {
                        let test = draw(n_te, &mut rng);
                        let preds = match predictor {
                            "ols" => {
                                let train = draw(n_train, &mut rng);
                                predict_dataset(&fit_ols(&train).unwrap(), &test).unwrap()
                            }
                            _ => PredictionSet {
                                y_hat: test
                                    .rows()
                                    .map(|r| theta[0] * r[0] + theta[1] * r[1] - 1.0)
                                    .collect(),
                            },
                        };
                        let iv = residual_intervals(&test, &preds).unwrap();
                        count_hits(&iv, &theta).unwrap()
                    })
                    .collect();
                let mut ks: Vec<usize> = [0.1, 0.3]
                    .into_iter()
                    .filter_map(|alpha| k_alpha(n_te, alpha, b).unwrap())
                    .collect();
                ks.dedup();
                for k in ks {
                    let guaranteed = binomial_tail(n_te, k, b).unwrap();
                    let empirical = counts.iter().filter(|&&c| c >= k).count() as f64 / reps as f64;
                    out.push(CoverageCheck {
                        predictor,
                        n_te,
                        k,
                        b,
                        empirical,
                        guaranteed,
                        sigma: (guaranteed * (1.0 - guaranteed) / reps as f64).sqrt(),
                    });
                }
            }
        }
    }
    out
}
