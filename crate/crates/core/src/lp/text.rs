use std::fmt::Write as _;

use super::{LinearProgram, Sense};

fn term_list(coeffs: &[f64], names: &[String]) -> String {
    let mut out = String::new();
    for (a, name) in coeffs.iter().zip(names) {
        if *a == 0.0 {
            continue;
        }
        let sign = if *a < 0.0 { "-" } else { "+" };
        if out.is_empty() {
            if *a < 0.0 {
                out.push_str("- ");
            }
        } else {
            let _ = write!(out, " {sign} ");
        }
        let _ = write!(out, "{} {name}", a.abs());
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

/// Renders the program in CPLEX LP text format.
pub fn write_lp_text(lp: &LinearProgram) -> String {
    let mut out = String::new();
    out.push_str(match lp.sense {
        Sense::Minimize => "Minimize\n",
        Sense::Maximize => "Maximize\n",
    });
    let _ = writeln!(out, " obj: {}", term_list(&lp.objective, &lp.var_names));
    out.push_str("Subject To\n");
    for (i, c) in lp.constraints.iter().enumerate() {
        let name = c.name.clone().unwrap_or_else(|| format!("c{i}"));
        let _ = writeln!(
            out,
            " {name}: {} {} {}",
            term_list(&c.coeffs, &lp.var_names),
            c.relation.symbol(),
            c.rhs
        );
    }
    out.push_str("Bounds\n");
    for (b, name) in lp.bounds.iter().zip(&lp.var_names) {
        let lower = if b.lower.is_finite() { b.lower.to_string() } else { "-inf".into() };
        match b.upper {
            Some(u) => {
                let _ = writeln!(out, " {lower} <= {name} <= {u}");
            }
            None if b.lower == 0.0 => {}
            None => {
                let _ = writeln!(out, " {name} >= {lower}");
            }
        }
    }
    out.push_str("End\n");
    out
}
