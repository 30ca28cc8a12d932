//! Big-M encoding of a confidence region and the M-escalation loop.
//!
//! Variables are `theta_0..theta_{d-1}` (free) followed by one binary `a_i`
//! per test point. Rows are the cardinality constraint `sum a_i >= k` and,
//! per point, `lo_i - (1 - a_i) M <= theta . x_i <= hi_i + (1 - a_i) M`.

use super::branch::{branch_and_bound_with, BranchOptions};
use super::model::{MilpModel, Relation, Sense, SolveOutcome, SolveStatus};
use super::SolverError;
use crate::region::{dot, RegionSpec};

/// Times the Big-M constant may be multiplied by ten before giving up.
pub const MAX_ESCALATIONS: usize = 3;

/// Relative margin (in units of M) a deactivated row must keep from its
/// relaxed bound.
const BIG_M_MARGIN: f64 = 1e-6;

pub fn encode_region(region: &RegionSpec, objective: &[f64], sense: Sense) -> MilpModel {
    assert_eq!(
        objective.len(),
        region.dim(),
        "objective length must equal d"
    );
    let d = region.dim();
    let n = region.n_te();
    let m = region.big_m();
    let iv = region.intervals();
    let nv = d + n;

    let mut model = MilpModel::new(nv, sense);
    model.objective[..d].copy_from_slice(objective);
    for i in 0..n {
        model.set_binary(d + i);
    }

    let mut card = vec![0.0; nv];
    card[d..].iter_mut().for_each(|c| *c = 1.0);
    model.add_constraint(card, Relation::Ge, region.k() as f64);

    for i in 0..n {
        let x = iv.row(i);
        // theta.x - M a_i >= lo_i - M
        let mut lower = vec![0.0; nv];
        lower[..d].copy_from_slice(x);
        lower[d + i] = -m;
        model.add_constraint(lower, Relation::Ge, iv.lo()[i] - m);
        // theta.x + M a_i <= hi_i + M
        let mut upper = vec![0.0; nv];
        upper[..d].copy_from_slice(x);
        upper[d + i] = m;
        model.add_constraint(upper, Relation::Le, iv.hi()[i] + m);
    }
    model
}

/// Checks that every point switched off (`a_i = 0`) sits strictly inside its
/// relaxed band, i.e. no Big-M row constrains the returned optimum.
///
/// Vacuously true when the outcome carries no solution.
pub fn verify_big_m(model: &MilpModel, outcome: &SolveOutcome, region: &RegionSpec) -> bool {
    let Some(sol) = &outcome.solution else {
        return true;
    };
    let d = region.dim();
    debug_assert_eq!(model.num_vars(), d + region.n_te());
    // The model may have been encoded with its own M; read it from the row.
    let theta = &sol[..d];
    let iv = region.intervals();
    (0..region.n_te()).all(|i| {
        if sol[d + i] >= 0.5 {
            return true;
        }
        let m = model
            .constraints
            .get(2 + 2 * i)
            .map_or(region.big_m(), |row| row.coeffs[d + i]);
        let v = dot(iv.row(i), theta);
        let margin = BIG_M_MARGIN * m;
        v >= iv.lo()[i] - m + margin && v <= iv.hi()[i] + m - margin
    })
}

/// Result of optimising a linear objective over a region.
#[derive(Debug, Clone)]
pub struct RegionSolve {
    pub outcome: SolveOutcome,
    /// Big-M constant of the final solve.
    pub big_m: f64,
    pub escalations: usize,
    /// The final solution passed [`verify_big_m`].
    pub verified: bool,
    /// Nodes summed over all solves of the escalation loop.
    pub total_nodes: usize,
}

/// Optimises `objective . theta` over the region, multiplying M by ten (at
/// most [`MAX_ESCALATIONS`] times) while the optimum leans on a relaxed row.
pub fn solve_over_region(
    region: &RegionSpec,
    objective: &[f64],
    sense: Sense,
    options: &BranchOptions,
) -> Result<RegionSolve, SolverError> {
    let mut current = region.clone();
    let mut escalations = 0;
    let mut total_nodes = 0;
    loop {
        let model = encode_region(&current, objective, sense);
        let outcome = branch_and_bound_with(&model, options)?;
        total_nodes += outcome.nodes_explored;
        let verified =
            outcome.status != SolveStatus::Optimal || verify_big_m(&model, &outcome, &current);
        if verified || escalations == MAX_ESCALATIONS {
            return Ok(RegionSolve {
                outcome,
                big_m: current.big_m(),
                escalations,
                verified,
                total_nodes,
            });
        }
        escalations += 1;
        current = current
            .with_big_m(current.big_m() * 10.0)
            .expect("a larger M keeps the region valid");
    }
}
