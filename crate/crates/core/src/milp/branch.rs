//! Branch-and-bound over binary variables.
//!
//! Nodes are explored depth-first; nodes at equal depth are ordered by the
//! parent's relaxation bound, and the `x = 1` child of a branching is taken
//! before its `x = 0` sibling. The branching variable is the most fractional
//! binary of the node relaxation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::Instant;

use super::model::{MilpModel, Sense, SolveOutcome, SolveStatus, Tolerances};
use super::simplex::{resolve, solve_with_state, LpSolution, LpState};
use super::SolverError;

pub const DEFAULT_NODE_LIMIT: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchOptions {
    pub node_limit: usize,
    pub tolerances: Tolerances,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self {
            node_limit: DEFAULT_NODE_LIMIT,
            tolerances: Tolerances::default(),
        }
    }
}

struct Node {
    /// Fixings as (binary position, value) pairs, root first.
    fixings: Vec<(usize, bool)>,
    /// Number of branchings above this node.
    depth: usize,
    /// Parent relaxation value in minimisation form.
    bound: f64,
    /// Parent relaxation was unbounded; the subtree is searched for an
    /// integer-feasible point rather than pruned on value.
    unbounded_search: bool,
    up_branch: bool,
    seq: u64,
    /// Optimal simplex state of the parent relaxation.
    warm: Option<Rc<LpState>>,
}

impl Node {
    fn depth(&self) -> usize {
        self.depth
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap: deeper first, then smaller bound, then the up branch, then
    // most recently created.
    fn cmp(&self, other: &Self) -> Ordering {
        self.depth()
            .cmp(&other.depth())
            .then_with(|| other.bound.total_cmp(&self.bound))
            .then_with(|| self.up_branch.cmp(&other.up_branch))
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

/// Solves `model` exactly by branch-and-bound on its binary variables.
pub fn branch_and_bound(model: &MilpModel, node_limit: usize) -> Result<SolveOutcome, SolverError> {
    branch_and_bound_with(
        model,
        &BranchOptions {
            node_limit,
            ..BranchOptions::default()
        },
    )
}

pub fn branch_and_bound_with(
    model: &MilpModel,
    options: &BranchOptions,
) -> Result<SolveOutcome, SolverError> {
    model.validate()?;
    if options.node_limit == 0 {
        return Err(SolverError::InvalidModel(
            "node limit must be at least 1".into(),
        ));
    }
    let start = Instant::now();
    let tol = &options.tolerances;
    let sign = if model.sense == Sense::Maximize {
        -1.0
    } else {
        1.0
    };
    let binaries: Vec<usize> = (0..model.num_vars()).filter(|&j| model.binary[j]).collect();

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        fixings: Vec::new(),
        depth: 0,
        bound: f64::NEG_INFINITY,
        unbounded_search: false,
        up_branch: false,
        seq,
        warm: None,
    });
    let mut nodes = 0usize;
    let mut bounds = model.bounds.clone();
    let mut hit_limit = false;

    let prunes = |bound: f64, inc: &Option<(f64, Vec<f64>)>| match inc {
        Some((best, _)) => bound >= best - 1e-9 * best.abs().max(1.0),
        None => false,
    };

    while let Some(node) = heap.pop() {
        if !node.unbounded_search && prunes(node.bound, &incumbent) {
            continue;
        }
        if nodes >= options.node_limit {
            hit_limit = true;
            break;
        }
        nodes += 1;

        bounds.copy_from_slice(&model.bounds);
        for &(pos, value) in &node.fixings {
            let v = if value { 1.0 } else { 0.0 };
            bounds[binaries[pos]] = (v, v);
        }

        let (lp, state) = match &node.warm {
            Some(parent) => resolve(parent, model, &bounds, tol)?,
            None => solve_with_state(model, &bounds, tol)?,
        };
        let (x, value, reduced) = match lp {
            LpSolution::Infeasible => continue,
            LpSolution::Optimal { x, value, reduced } => (x, sign * value, Some(reduced)),
            LpSolution::Unbounded { x } => (x, f64::NEG_INFINITY, None),
        };
        let unbounded = reduced.is_none();
        if !unbounded && prunes(value, &incumbent) {
            continue;
        }

        let mut branch_on: Option<(usize, f64)> = None;
        for (pos, &j) in binaries.iter().enumerate() {
            let v = x[j];
            let frac = v.min(1.0 - v).max(0.0);
            if frac > tol.integrality && branch_on.is_none_or(|(_, f)| frac > f) {
                branch_on = Some((pos, frac));
            }
        }

        let Some((pos, _)) = branch_on else {
            if unbounded {
                return Ok(SolveOutcome {
                    status: SolveStatus::Unbounded,
                    objective_value: None,
                    solution: None,
                    nodes_explored: nodes,
                    wall_time: start.elapsed(),
                });
            }
            let mut sol = x;
            for &j in &binaries {
                sol[j] = sol[j].round();
            }
            incumbent = Some((value, sol));
            continue;
        };

        // Reduced-cost fixing: a binary resting at a bound whose reduced cost
        // alone lifts the relaxation past the incumbent keeps that value in
        // the whole subtree.
        let mut fixings = node.fixings.clone();
        if let (Some(reduced), Some((best, _))) = (&reduced, &incumbent) {
            let cutoff = best - 1e-9 * best.abs().max(1.0);
            for (p, &j) in binaries.iter().enumerate() {
                if p == pos || bounds[j].0 == bounds[j].1 {
                    continue;
                }
                let r = reduced[j];
                if x[j] <= tol.integrality && r > 0.0 && value + r >= cutoff {
                    fixings.push((p, false));
                } else if x[j] >= 1.0 - tol.integrality && r < 0.0 && value - r >= cutoff {
                    fixings.push((p, true));
                }
            }
        }

        let state = state.map(Rc::new);
        for up in [false, true] {
            seq += 1;
            let mut fixings = fixings.clone();
            fixings.push((pos, up));
            heap.push(Node {
                fixings,
                depth: node.depth + 1,
                bound: value,
                unbounded_search: unbounded,
                up_branch: up,
                seq,
                warm: state.clone(),
            });
        }
    }

    let wall_time = start.elapsed();
    Ok(match incumbent {
        Some((value, sol)) => SolveOutcome {
            status: if hit_limit {
                SolveStatus::NodeLimit
            } else {
                SolveStatus::Optimal
            },
            objective_value: Some(sign * value),
            solution: Some(sol),
            nodes_explored: nodes,
            wall_time,
        },
        None => SolveOutcome {
            status: if hit_limit {
                SolveStatus::NodeLimit
            } else {
                SolveStatus::Infeasible
            },
            objective_value: None,
            solution: None,
            nodes_explored: nodes,
            wall_time,
        },
    })
}
