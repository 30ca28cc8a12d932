//! LP-text dump of a model for cross-checking with external solvers.

use std::fmt::Write as _;

use super::model::{MilpModel, Relation, Sense};

fn term(out: &mut String, coef: f64, var: usize, first: bool) {
    let sign = if coef < 0.0 { "-" } else { "+" };
    if first {
        if coef < 0.0 {
            out.push_str("- ");
        }
    } else {
        let _ = write!(out, " {sign} ");
    }
    let _ = write!(out, "{:?} x{var}", coef.abs());
}

fn linear(out: &mut String, coeffs: &[f64]) {
    let mut first = true;
    for (j, &c) in coeffs.iter().enumerate() {
        if c != 0.0 {
            term(out, c, j, first);
            first = false;
        }
    }
    if first {
        out.push_str("0 x0");
    }
}

/// Renders the model in CPLEX LP format.
pub fn to_lp_text(model: &MilpModel) -> String {
    let mut out = String::new();
    out.push_str(match model.sense {
        Sense::Minimize => "Minimize\n obj: ",
        Sense::Maximize => "Maximize\n obj: ",
    });
    linear(&mut out, &model.objective);
    out.push_str("\nSubject To\n");
    for (i, c) in model.constraints.iter().enumerate() {
        let _ = write!(out, " c{i}: ");
        linear(&mut out, &c.coeffs);
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        };
        let _ = writeln!(out, " {rel} {:?}", c.rhs);
    }
    out.push_str("Bounds\n");
    for (j, &(l, u)) in model.bounds.iter().enumerate() {
        if model.binary[j] {
            continue;
        }
        match (l.is_finite(), u.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " x{j} free");
            }
            (true, false) => {
                let _ = writeln!(out, " x{j} >= {l:?}");
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= x{j} <= {u:?}");
            }
            (true, true) => {
                let _ = writeln!(out, " {l:?} <= x{j} <= {u:?}");
            }
        }
    }
    let bins: Vec<String> = (0..model.num_vars())
        .filter(|&j| model.binary[j])
        .map(|j| format!("x{j}"))
        .collect();
    if !bins.is_empty() {
        let _ = writeln!(out, "Binaries\n {}", bins.join(" "));
    }
    out.push_str("End\n");
    out
}
