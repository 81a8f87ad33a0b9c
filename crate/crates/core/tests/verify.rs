mod common;

use std::collections::HashMap;

use invbc::dcp::{bmi_dc, initial_solution, DcpConfig};
use invbc::encode::{check_sos_solution, Mode};
use invbc::polyalg::{lie_derivative, parse_polynomial, DynamicalSystem, Polynomial};
use invbc::problem::bundled;
use invbc::sdp::SolverOptions;
use invbc::synth::{encode_problem, synthesize, SynthConfig};
use invbc::verify::{
    certify, check_certificate, clause_smtlib, export_smtlib, format_decimal, witness_violates, CheckConfig, Clause, Verdict,
};
use rand::Rng;

fn overview() -> DynamicalSystem {
    bundled("overview").unwrap().system
}

fn poly(src: &str, sys: &DynamicalSystem) -> Polynomial {
    parse_polynomial(src, &sys.variables).unwrap()
}

fn small_check() -> CheckConfig {
    CheckConfig { n_points: 20_000, n_targeted: 1_000, ..CheckConfig::default() }
}

#[test]
fn overview_certificate_is_valid() {
    let sys = overview();
    let b = poly("-0.00363421*x2", &sys);
    let r = check_certificate(&sys, &b, &CheckConfig::default());
    assert_eq!(r.verdict, Verdict::Valid);
    assert!(r.samples.iter().all(|(_, k)| *k > 0), "{:?}", r.samples);
    assert!(r.caveats.iter().any(|c| c.contains("no domain")));
}

#[test]
fn wrong_sign_is_refuted_on_separation() {
    let sys = overview();
    let b = poly("x2", &sys);
    let cfg = small_check();
    match check_certificate(&sys, &b, &cfg).verdict {
        Verdict::Refuted { clause, witness, violation } => {
            assert_eq!(clause, Clause::Separation);
            assert!(witness[1] <= -1.0 + 1e-9);
            assert!(violation > 1.0 - 1e-6);
            assert!(witness_violates(&sys, &b, clause, &witness, &cfg, 1e-9));
        }
        v => panic!("expected a refutation, got {v:?}"),
    }
}

#[test]
fn positive_initial_values_are_refuted() {
    let sys = overview();
    let b = poly("1", &sys);
    match check_certificate(&sys, &b, &small_check()).verdict {
        Verdict::Refuted { clause, .. } => assert_eq!(clause, Clause::Initial),
        v => panic!("{v:?}"),
    }
}

#[test]
fn consecution_violation_is_found_on_the_zero_set() {
    // B = x1 on a rotation: zero set x1 = 0, derivative -x2 changes sign there
    let vars = vec!["x1".to_string(), "x2".to_string()];
    let p = |s: &str| parse_polynomial(s, &vars).unwrap();
    let mut sys = DynamicalSystem::new(vars.clone(), vec![p("x2"), p("-x1")], p("(x1+5)^2 + x2^2 - 1"), p("(x1-5)^2 + x2^2 - 1")).unwrap();
    sys.domain = Some(vec![(-8.0, 8.0), (-8.0, 8.0)]);
    let b = p("x1");
    let cfg = small_check();
    match check_certificate(&sys, &b, &cfg).verdict {
        Verdict::Refuted { clause, witness, .. } => {
            assert_eq!(clause, Clause::Consecution(1));
            assert!(witness_violates(&sys, &b, clause, &witness, &cfg, 1e-6));
        }
        v => panic!("{v:?}"),
    }
}

#[test]
fn synthesized_barr_cert1_is_valid() {
    let problem = bundled("barr-cert1").unwrap();
    let report = synthesize(&problem, &SynthConfig::default()).unwrap();
    assert!(report.verdict.is_valid(), "{:?}", report.verdict);
    let again = check_certificate(&problem.system, &report.certificate, &CheckConfig { seed: 99, ..CheckConfig::default() });
    assert!(again.verdict.is_valid(), "{:?}", again.verdict);
}

#[test]
fn checking_is_deterministic() {
    let sys = overview();
    for src in ["x2", "-0.00363421*x2", "x1^2 - x2", "0.1*x1*x2 - 0.2"] {
        let b = poly(src, &sys);
        let cfg = small_check();
        let r1 = check_certificate(&sys, &b, &cfg);
        let r2 = check_certificate(&sys, &b, &cfg);
        assert_eq!(r1.verdict, r2.verdict, "{src}");
        assert_eq!(r1.samples, r2.samples);
    }
}

#[test]
fn certificate_record_carries_the_report() {
    let sys = overview();
    let b = poly("-0.00363421*x2", &sys);
    let c = certify(&sys, &b, &small_check());
    assert_eq!(c.b, b);
    assert_eq!(c.lie_order, 1);
    assert!(c.report.verdict.is_valid());
}

#[test]
fn sos_pass_implies_no_refutation_and_perturbation_flips_a_sign() {
    let problem = bundled("overview").unwrap();
    let enc = encode_problem(&problem, Mode::Sufficient).unwrap();
    let z0 = initial_solution(&enc.problem, &enc.registry, 1.0, &SolverOptions::default()).unwrap();
    let z = bmi_dc(&enc.problem, &z0, &DcpConfig::default()).last().clone();
    let report = check_sos_solution(&enc.problem, &z.a, &z.s);
    assert!(report.iter().all(|(_, e)| *e >= -1e-6));
    let cfg = CheckConfig::for_epsilon(enc.epsilon);
    assert!(check_certificate(&problem.system, &enc.certificate(&z.a), &cfg).verdict.is_valid());

    let mut r = common::rng(4);
    let mut flipped = 0;
    for _ in 0..50 {
        let s: Vec<f64> = z.s.iter().map(|v| v + r.gen_range(-2.0..2.0)).collect();
        let a: Vec<f64> = z.a.iter().map(|v| v + r.gen_range(-0.5..0.5)).collect();
        if enc.problem.max_eigenvalue(&a, &s) > 1e-6 {
            let rep = check_sos_solution(&enc.problem, &a, &s);
            assert!(rep.iter().any(|(_, e)| *e < -1e-6));
            flipped += 1;
        }
    }
    assert!(flipped > 0);
}

#[test]
fn decimals_carry_seventeen_significant_digits() {
    assert_eq!(format_decimal(0.0), "0.0");
    assert_eq!(format_decimal(1.0), "1.0");
    assert_eq!(format_decimal(-2.5), "(- 2.5)");
    assert_eq!(format_decimal(1e20), "100000000000000000000.0");
    let mut r = common::rng(8);
    for _ in 0..2000 {
        let v: f64 = r.gen_range(-1.0..1.0) * 10f64.powi(r.gen_range(-12..12));
        let text = format_decimal(v);
        let digits: String = text.chars().filter(|c| c.is_ascii_digit()).collect();
        assert!(digits.trim_start_matches('0').len() <= 17, "{text}");
        assert_eq!(eval_term(&parse_sexpr(&text), &HashMap::new()).num(), v, "{text}");
    }
}

#[test]
fn constant_negative_certificate_gives_a_trivial_initial_file() {
    let sys = overview();
    let text = clause_smtlib(&sys, &poly("-1", &sys), Clause::Initial);
    let asserts = assertions(&text);
    let body = asserts.last().unwrap();
    let Sexpr::List(items) = body else { panic!() };
    assert_eq!(items[0], Sexpr::Atom("and".into()));
    assert_eq!(items[2], parse_sexpr("(> (- 1.0) 0.0)"));
}

#[test]
fn exported_files_reparse_and_match_direct_evaluation() {
    let vars = vec!["x1".to_string(), "x2".to_string()];
    let p = |s: &str| parse_polynomial(s, &vars).unwrap();
    let mut sys = DynamicalSystem::new(
        vars.clone(),
        vec![p("x1 + x2"), p("x1*x2 - 1/2*x2^2 + 0.1")],
        p("x1^2 + (x2 - 2)^2 - 1"),
        p("x2 + 1"),
    )
    .unwrap();
    sys.domain = Some(vec![(-3.0, 3.0), (-2.5, 4.0)]);
    sys.lie_order = 2;
    let dir = tempfile::tempdir().unwrap();
    let mut r = common::rng(21);
    for src in ["-0.00363421*x2", "x2", "x1^2 - 0.3*x1*x2 + 1e-5", "-1"] {
        let b = p(src);
        let files = export_smtlib(&sys, &b, dir.path()).unwrap();
        let names: Vec<String> = files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(names, ["initial.smt2", "consecution-1.smt2", "consecution-2.smt2", "separation.smt2"]);
        let clauses = [Clause::Initial, Clause::Consecution(1), Clause::Consecution(2), Clause::Separation];
        for (path, clause) in files.iter().zip(clauses) {
            let text = std::fs::read_to_string(path).unwrap();
            assert!(text.starts_with("(set-logic QF_NRA)\n"));
            assert!(text.contains("(set-info :smt-lib-version 2.6)"));
            assert!(text.trim_end().ends_with("(check-sat)\n(exit)") || text.trim_end().ends_with("(exit)"));
            let asserts = assertions(&text);
            assert_eq!(asserts.len(), 3, "two box assertions plus the clause");
            for _ in 0..300 {
                let x = [r.gen_range(-3.5..3.5), r.gen_range(-3.0..4.5)];
                let env: HashMap<String, f64> = [("x1".to_string(), x[0]), ("x2".to_string(), x[1])].into();
                let got = asserts.iter().all(|a| eval_term(a, &env).truth());
                if let Some(want) = negated_clause(&sys, &b, clause, &x) {
                    assert_eq!(got, want, "{src} {clause} at {x:?}");
                }
            }
        }
    }
    // exact zero-set membership is honoured: B = x2 at x2 = 0 has L B = 0.1 > 0
    let text = clause_smtlib(&sys, &p("x2"), Clause::Consecution(1));
    let env: HashMap<String, f64> = [("x1".to_string(), 0.5), ("x2".to_string(), 0.0)].into();
    assert!(assertions(&text).iter().all(|a| eval_term(a, &env).truth()));
}

/// Truth of the negated clause at `x`, or `None` when `x` is too close to a boundary to decide.
fn negated_clause(sys: &DynamicalSystem, b: &Polynomial, clause: Clause, x: &[f64]) -> Option<bool> {
    let d = sys.domain.as_ref().unwrap();
    let inside = x.iter().zip(d).all(|(v, (lo, hi))| lo <= v && v <= hi);
    let near = |v: f64| v.abs() < 1e-9;
    let bv = b.eval(x);
    let r = match clause {
        Clause::Initial => {
            let iv = sys.init.eval(x);
            if near(iv) || near(bv) {
                return None;
            }
            iv <= 0.0 && bv > 0.0
        }
        Clause::Separation => {
            let uv = sys.unsafe_set.eval(x);
            if near(uv) || near(bv) {
                return None;
            }
            uv <= 0.0 && bv <= 0.0
        }
        Clause::Consecution(i) => {
            let vals: Vec<f64> = (0..=i).map(|k| lie_derivative(b, &sys.flow, k).eval(x)).collect();
            if near(vals[i]) {
                return None;
            }
            vals[..i].iter().all(|v| *v == 0.0) && vals[i] > 0.0
        }
    };
    Some(inside && r)
}

#[derive(Clone, Debug, PartialEq)]
enum Sexpr {
    Atom(String),
    List(Vec<Sexpr>),
}

fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '(' | ')' => {
                out.push(c.to_string());
                chars.next();
            }
            ';' => {
                while chars.next().is_some_and(|c| c != '\n') {}
            }
            '|' => {
                let mut s = String::from("|");
                chars.next();
                for c in chars.by_ref() {
                    s.push(c);
                    if c == '|' {
                        break;
                    }
                }
                assert!(s.len() >= 2 && s.ends_with('|'), "unterminated quoted symbol");
                out.push(s);
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c == '(' || c == ')' || c.is_whitespace() {
                        break;
                    }
                    s.push(c);
                    chars.next();
                }
                out.push(s);
            }
        }
    }
    out
}

fn parse_all(text: &str) -> Vec<Sexpr> {
    let toks = tokenize(text);
    let mut pos = 0;
    let mut out = Vec::new();
    while pos < toks.len() {
        out.push(parse_at(&toks, &mut pos));
    }
    out
}

fn parse_at(toks: &[String], pos: &mut usize) -> Sexpr {
    let t = &toks[*pos];
    *pos += 1;
    match t.as_str() {
        "(" => {
            let mut items = Vec::new();
            while toks[*pos] != ")" {
                items.push(parse_at(toks, pos));
            }
            *pos += 1;
            Sexpr::List(items)
        }
        ")" => panic!("unbalanced parenthesis"),
        _ => Sexpr::Atom(t.clone()),
    }
}

fn parse_sexpr(text: &str) -> Sexpr {
    let mut all = parse_all(text);
    assert_eq!(all.len(), 1);
    all.pop().unwrap()
}

/// Checks the command structure and returns the asserted terms.
fn assertions(text: &str) -> Vec<Sexpr> {
    let mut declared = Vec::new();
    let mut asserts = Vec::new();
    for cmd in parse_all(text) {
        let Sexpr::List(items) = cmd else { panic!("top-level atom") };
        let Sexpr::Atom(head) = &items[0] else { panic!("command without a name") };
        match head.as_str() {
            "set-logic" => assert_eq!(items[1], Sexpr::Atom("QF_NRA".into())),
            "set-info" => assert!(matches!(&items[1], Sexpr::Atom(k) if k.starts_with(':'))),
            "declare-fun" => {
                assert_eq!(items[2], Sexpr::List(vec![]));
                assert_eq!(items[3], Sexpr::Atom("Real".into()));
                let Sexpr::Atom(name) = &items[1] else { panic!() };
                declared.push(name.clone());
            }
            "assert" => {
                assert_eq!(items.len(), 2);
                check_symbols(&items[1], &declared);
                asserts.push(items[1].clone());
            }
            "check-sat" | "exit" => assert_eq!(items.len(), 1),
            other => panic!("unexpected command {other}"),
        }
    }
    asserts
}

fn check_symbols(e: &Sexpr, declared: &[String]) {
    match e {
        Sexpr::Atom(a) => {
            let known = ["and", "+", "-", "*", "<=", "<", ">=", ">", "="];
            assert!(
                known.contains(&a.as_str()) || a.parse::<f64>().is_ok() || declared.contains(a),
                "undeclared symbol {a}"
            );
            if a.parse::<f64>().is_ok() {
                assert!(a.contains('.') && !a.contains('e') && !a.starts_with('-'), "not an SMT-LIB decimal: {a}");
            }
        }
        Sexpr::List(items) => items.iter().for_each(|i| check_symbols(i, declared)),
    }
}

enum Value {
    Num(f64),
    Bool(bool),
}

impl Value {
    fn num(self) -> f64 {
        match self {
            Value::Num(v) => v,
            Value::Bool(_) => panic!("expected a number"),
        }
    }
    fn truth(self) -> bool {
        match self {
            Value::Bool(b) => b,
            Value::Num(_) => panic!("expected a formula"),
        }
    }
}

fn eval_term(e: &Sexpr, env: &HashMap<String, f64>) -> Value {
    match e {
        Sexpr::Atom(a) => Value::Num(env.get(a).copied().unwrap_or_else(|| a.parse().unwrap())),
        Sexpr::List(items) => {
            let Sexpr::Atom(op) = &items[0] else { panic!() };
            let args = &items[1..];
            let nums = || args.iter().map(|a| eval_term(a, env).num()).collect::<Vec<_>>();
            match op.as_str() {
                "and" => Value::Bool(args.iter().all(|a| eval_term(a, env).truth())),
                "+" => Value::Num(nums().iter().sum()),
                "*" => Value::Num(nums().iter().product()),
                "-" => {
                    let v = nums();
                    Value::Num(if v.len() == 1 { -v[0] } else { v[0] - v[1..].iter().sum::<f64>() })
                }
                cmp => {
                    let v = nums();
                    assert_eq!(v.len(), 2);
                    Value::Bool(match cmp {
                        "<=" => v[0] <= v[1],
                        "<" => v[0] < v[1],
                        ">=" => v[0] >= v[1],
                        ">" => v[0] > v[1],
                        "=" => v[0] == v[1],
                        _ => panic!("unknown operator {cmp}"),
                    })
                }
            }
        }
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn refutation_witnesses_violate_their_clause(c in proptest::collection::vec(-1.0f64..1.0, 6), seed in 0u64..1000) {
            let sys = overview();
            let src = format!(
                "({}) + ({})*x1 + ({})*x2 + ({})*x1^2 + ({})*x1*x2 + ({})*x2^2",
                c[0], c[1], c[2], c[3], c[4], c[5]
            );
            let b = poly(&src, &sys);
            let cfg = CheckConfig { n_points: 3_000, n_targeted: 300, seed, ..CheckConfig::default() };
            if let Verdict::Refuted { clause, witness, violation } = check_certificate(&sys, &b, &cfg).verdict {
                prop_assert!(violation > cfg.margin);
                prop_assert!(witness_violates(&sys, &b, clause, &witness, &cfg, 1e-6), "{clause} at {witness:?}");
            }
        }
    }
}
