use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{lie_list, Clause};
use crate::polyalg::{DynamicalSystem, Polynomial};

/// Decimal literal with 17 significant digits; negative values as `(- d)`.
pub fn format_decimal(v: f64) -> String {
    let body = unsigned_decimal(v.abs());
    if v < 0.0 && body.trim_start_matches(['0', '.']).chars().any(|c| c != '0' && c != '.') {
        format!("(- {body})")
    } else {
        body
    }
}

fn unsigned_decimal(v: f64) -> String {
    if v == 0.0 {
        return "0.0".into();
    }
    let sci = format!("{:.16e}", v);
    let (mant, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    let point = 1 + exp;
    let mut out = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}.0", digits, "0".repeat(point as usize - digits.len()))
    } else {
        let (i, f) = digits.split_at(point as usize);
        format!("{i}.{f}")
    };
    if out.contains('.') {
        while out.ends_with('0') && !out.ends_with(".0") {
            out.pop();
        }
    }
    out
}

fn symbol(name: &str) -> String {
    let simple = !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "~!@$%^&*_-+=<>.?/".contains(c));
    if simple {
        name.to_string()
    } else {
        format!("|{}|", name.replace('|', "_"))
    }
}

/// SMT-LIB term for `p` over the given variable names.
pub fn poly_to_smt(p: &Polynomial, names: &[String]) -> String {
    let syms: Vec<String> = names.iter().map(|n| symbol(n)).collect();
    let mut terms = Vec::new();
    for (m, c) in p.terms().rev() {
        let mut factors = vec![format_decimal(c)];
        for (i, &e) in m.exponents().iter().enumerate() {
            for _ in 0..e {
                factors.push(syms[i].clone());
            }
        }
        terms.push(if factors.len() == 1 { factors.pop().unwrap() } else { format!("(* {})", factors.join(" ")) });
    }
    match terms.len() {
        0 => "0.0".into(),
        1 => terms.pop().unwrap(),
        _ => format!("(+ {})", terms.join(" ")),
    }
}

fn header(sys: &DynamicalSystem, clause: Clause) -> String {
    let mut s = String::new();
    writeln!(s, "(set-logic QF_NRA)").unwrap();
    writeln!(s, "(set-info :smt-lib-version 2.6)").unwrap();
    writeln!(s, "(set-info :source |negated {clause} clause of an invariant barrier certificate; unsat means the clause holds|)").unwrap();
    writeln!(s, "(set-info :status unknown)").unwrap();
    for v in &sys.variables {
        writeln!(s, "(declare-fun {} () Real)", symbol(v)).unwrap();
    }
    if let Some(d) = &sys.domain {
        for (v, &(lo, hi)) in sys.variables.iter().zip(d) {
            let x = symbol(v);
            writeln!(s, "(assert (and (<= {} {x}) (<= {x} {})))", format_decimal(lo), format_decimal(hi)).unwrap();
        }
    }
    s
}

/// SMT-LIB text for the negation of one clause.
pub fn clause_smtlib(sys: &DynamicalSystem, b: &Polynomial, clause: Clause) -> String {
    let names = &sys.variables;
    let mut s = header(sys, clause);
    let body = match clause {
        Clause::Initial => format!("(and (<= {} 0.0) (> {} 0.0))", poly_to_smt(&sys.init, names), poly_to_smt(b, names)),
        Clause::Separation => format!("(and (<= {} 0.0) (<= {} 0.0))", poly_to_smt(&sys.unsafe_set, names), poly_to_smt(b, names)),
        Clause::Consecution(i) => {
            let lie = lie_list(&DynamicalSystem { lie_order: i, ..sys.clone() }, b);
            let mut parts: Vec<String> = lie[..i].iter().map(|l| format!("(= {} 0.0)", poly_to_smt(l, names))).collect();
            parts.push(format!("(> {} 0.0)", poly_to_smt(&lie[i], names)));
            format!("(and {})", parts.join(" "))
        }
    };
    writeln!(s, "(assert {body})").unwrap();
    writeln!(s, "(check-sat)").unwrap();
    writeln!(s, "(exit)").unwrap();
    s
}

/// Writes one file per clause into `dir` and returns their paths.
pub fn export_smtlib(sys: &DynamicalSystem, b: &Polynomial, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut clauses = vec![Clause::Initial];
    for i in 1..=sys.lie_order.max(1) {
        clauses.push(Clause::Consecution(i));
    }
    clauses.push(Clause::Separation);
    let mut out = Vec::new();
    for c in clauses {
        let path = dir.join(format!("{c}.smt2"));
        std::fs::write(&path, clause_smtlib(sys, b, c))?;
        out.push(path);
    }
    Ok(out)
}
