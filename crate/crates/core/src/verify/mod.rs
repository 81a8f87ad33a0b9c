//! Posterior validity check of a candidate certificate and SMT-LIB export
//! of the three defining clauses.

mod smt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use smt::{clause_smtlib, export_smtlib, format_decimal, poly_to_smt};

use crate::polyalg::{lie_derivative_once, DynamicalSystem, Polynomial};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Clause {
    Initial,
    Consecution(usize),
    Separation,
}

impl std::fmt::Display for Clause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Clause::Initial => write!(f, "initial"),
            Clause::Consecution(i) => write!(f, "consecution-{i}"),
            Clause::Separation => write!(f, "separation"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Valid,
    Refuted { clause: Clause, witness: Vec<f64>, violation: f64 },
    Inconclusive { reason: String },
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

#[derive(Clone, Debug)]
pub struct CheckConfig {
    /// Uniform samples in the domain box.
    pub n_points: usize,
    /// Targeted samples on and inside each of the initial and unsafe sets,
    /// and on each consecution variety.
    pub n_targeted: usize,
    pub margin: f64,
    /// Required strict separation on the unsafe set.
    pub epsilon_check: f64,
    pub seed: u64,
    /// Half-width of the box used when the system has no domain.
    pub default_half_width: f64,
    /// Initial band half-width relative to the scale of `B`.
    pub tau0: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            n_points: 100_000,
            n_targeted: 4_000,
            margin: 1e-6,
            epsilon_check: 5e-5,
            seed: 0,
            default_half_width: 10.0,
            tau0: 1e-3,
        }
    }
}

impl CheckConfig {
    pub fn for_epsilon(eps: f64) -> Self {
        CheckConfig { epsilon_check: eps / 2.0, ..CheckConfig::default() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub caveats: Vec<String>,
    /// Number of points on which each clause was evaluated.
    pub samples: Vec<(Clause, usize)>,
}

/// A candidate `B` with the outcome of its posterior check.
#[derive(Clone, Debug)]
pub struct Certificate {
    pub b: Polynomial,
    pub lie_order: usize,
    pub report: CheckReport,
}

/// Flat polynomial representation for fast repeated evaluation.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledPoly {
    pub fn new(p: &Polynomial) -> Self {
        CompiledPoly {
            terms: p
                .terms()
                .map(|(m, c)| {
                    let f = m.exponents().iter().enumerate().filter(|(_, &e)| e > 0).map(|(i, &e)| (i, e as i32)).collect();
                    (c, f)
                })
                .collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (c, f) in &self.terms {
            let mut v = *c;
            for &(i, e) in f {
                v *= if e == 1 { x[i] } else { x[i].powi(e) };
            }
            s += v;
        }
        s
    }
}

struct Compiled {
    value: CompiledPoly,
    grad: Vec<CompiledPoly>,
}

impl Compiled {
    fn new(p: &Polynomial) -> Self {
        Compiled { value: CompiledPoly::new(p), grad: p.gradient().iter().map(CompiledPoly::new).collect() }
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.grad.iter().map(|g| g.eval(x)).collect()
    }
}

/// Domain box of the system, or the default box with a caveat.
pub fn check_box(sys: &DynamicalSystem, cfg: &CheckConfig, caveats: &mut Vec<String>) -> Vec<(f64, f64)> {
    match &sys.domain {
        Some(d) => d.clone(),
        None => {
            let h = cfg.default_half_width;
            caveats.push(format!("no domain given; sampled the box [-{h}, {h}]^{}", sys.nvars()));
            vec![(-h, h); sys.nvars()]
        }
    }
}

fn in_box(x: &[f64], bx: &[(f64, f64)]) -> bool {
    x.iter().zip(bx).all(|(&v, &(lo, hi))| v >= lo && v <= hi)
}

fn uniform(rng: &mut ChaCha8Rng, bx: &[(f64, f64)]) -> Vec<f64> {
    bx.iter().map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo }).collect()
}

/// Gauss-Newton projection onto `{f_j = 0 for all j}`; returns the point,
/// the final residual norm and the length of the last correction.
fn project(fs: &[&Compiled], x0: &[f64], iters: usize) -> Option<(Vec<f64>, f64, f64)> {
    let n = x0.len();
    let k = fs.len();
    let mut x = x0.to_vec();
    let mut last_step = f64::INFINITY;
    for _ in 0..iters {
        let r = DVector::from_iterator(k, fs.iter().map(|f| f.value.eval(&x)));
        let mut jac = DMatrix::zeros(k, n);
        for (row, f) in fs.iter().enumerate() {
            for (col, g) in f.grad(&x).into_iter().enumerate() {
                jac[(row, col)] = g;
            }
        }
        let jjt = &jac * jac.transpose();
        let sol = jjt.clone().cholesky().map(|c| c.solve(&r)).or_else(|| jjt.try_inverse().map(|inv| inv * &r))?;
        let step = jac.transpose() * sol;
        last_step = step.norm();
        for i in 0..n {
            x[i] -= step[i];
        }
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
        if last_step <= 1e-13 * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            break;
        }
    }
    let r: f64 = fs.iter().map(|f| f.value.eval(&x).powi(2)).sum::<f64>().sqrt();
    Some((x, r, last_step))
}

struct Worst {
    clause: Clause,
    witness: Vec<f64>,
    violation: f64,
}

fn record(worst: &mut Option<Worst>, clause: Clause, x: &[f64], violation: f64) {
    if worst.as_ref().map_or(true, |w| violation > w.violation) {
        *worst = Some(Worst { clause, witness: x.to_vec(), violation });
    }
}

/// Points on the boundary `{g = 0}` and inside `{g <= 0}` within the box.
fn sublevel_points(g: &Compiled, bx: &[(f64, f64)], rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<f64>> {
    let mut boundary = Vec::new();
    let attempts = count * 4;
    for _ in 0..attempts {
        if boundary.len() >= count / 2 {
            break;
        }
        let x0 = uniform(rng, bx);
        if let Some((x, r, _)) = project(&[g], &x0, 60) {
            if r <= 1e-9 * (1.0 + g.value.eval(&x0).abs()) && in_box(&x, bx) {
                boundary.push(x);
            }
        }
    }
    let mut out = boundary.clone();
    if boundary.len() >= 2 {
        let mut tries = 0;
        while out.len() < count && tries < count * 4 {
            tries += 1;
            let p = &boundary[rng.gen_range(0..boundary.len())];
            let q = &boundary[rng.gen_range(0..boundary.len())];
            let t: f64 = rng.gen_range(0.0..=1.0);
            let x: Vec<f64> = p.iter().zip(q).map(|(a, b)| a + t * (b - a)).collect();
            if g.value.eval(&x) <= 0.0 && in_box(&x, bx) {
                out.push(x);
            }
        }
    }
    out
}

/// Samples the three clauses of the certificate conditions for `b` at the
/// system's Lie order. Deterministic for a fixed seed.
pub fn check_certificate(sys: &DynamicalSystem, b: &Polynomial, cfg: &CheckConfig) -> CheckReport {
    let mut caveats = Vec::new();
    let bx = check_box(sys, cfg, &mut caveats);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let order = sys.lie_order.max(1);
    let mut lie = vec![b.clone()];
    for _ in 0..order {
        let next = lie_derivative_once(lie.last().unwrap(), &sys.flow);
        lie.push(next);
    }
    let lc: Vec<Compiled> = lie.iter().map(Compiled::new).collect();
    let ic = Compiled::new(&sys.init);
    let uc = Compiled::new(&sys.unsafe_set);
    let mu = cfg.margin;
    let mut worst: Option<Worst> = None;
    let mut counts = [0usize; 2];
    let mut cons_counts = vec![0usize; order];
    let mut nonfinite = false;

    let check_init = |x: &[f64], worst: &mut Option<Worst>, counts: &mut [usize; 2]| {
        let bv = lc[0].value.eval(x);
        if !bv.is_finite() {
            return false;
        }
        counts[0] += 1;
        if bv > mu {
            record(worst, Clause::Initial, x, bv);
        }
        true
    };
    let check_sep = |x: &[f64], worst: &mut Option<Worst>, counts: &mut [usize; 2]| {
        let bv = lc[0].value.eval(x);
        if !bv.is_finite() {
            return false;
        }
        counts[1] += 1;
        let v = cfg.epsilon_check - bv;
        if v > mu {
            record(worst, Clause::Separation, x, v);
        }
        true
    };

    // uniform pass
    let mut b_scale_samples = Vec::new();
    for _ in 0..cfg.n_points {
        let x = uniform(&mut rng, &bx);
        let iv = ic.value.eval(&x);
        let uv = uc.value.eval(&x);
        if iv <= 0.0 && !check_init(&x, &mut worst, &mut counts) {
            nonfinite = true;
        }
        if uv <= 0.0 && !check_sep(&x, &mut worst, &mut counts) {
            nonfinite = true;
        }
        if b_scale_samples.len() < 2000 {
            b_scale_samples.push(x);
        }
    }

    // targeted passes over the initial and unsafe sets
    for x in sublevel_points(&ic, &bx, &mut rng, cfg.n_targeted) {
        if !check_init(&x, &mut worst, &mut counts) {
            nonfinite = true;
        }
    }
    for x in sublevel_points(&uc, &bx, &mut rng, cfg.n_targeted) {
        if !check_sep(&x, &mut worst, &mut counts) {
            nonfinite = true;
        }
    }

    // consecution on {L^0 B = ... = L^{i-1} B = 0}
    for i in 1..=order {
        let fs: Vec<&Compiled> = lc[..i].iter().collect();
        let scale = {
            let mut v: Vec<f64> = b_scale_samples.iter().map(|x| lc[0].value.eval(x).abs()).filter(|v| v.is_finite()).collect();
            v.sort_by(f64::total_cmp);
            v.get(v.len() / 2).copied().unwrap_or(1.0).max(1e-12)
        };
        let mut tau = cfg.tau0 * scale;
        let mut accepted = 0usize;
        let mut pending: Vec<(Vec<f64>, f64, f64)> = Vec::new();
        let mut attempts = 0usize;
        while accepted < cfg.n_targeted && attempts < cfg.n_targeted * 4 {
            attempts += 1;
            let x0 = uniform(&mut rng, &bx);
            let Some((x, r, step)) = project(&fs, &x0, 60) else { continue };
            if !in_box(&x, &bx) {
                continue;
            }
            if r <= tau {
                accepted += 1;
                evaluate_consecution(&lc[i], &x, step, mu, i, &mut worst, &mut nonfinite);
            } else {
                pending.push((x, r, step));
            }
            if attempts % 1000 == 0 && accepted * 10 < attempts {
                tau *= 2.0;
                let (take, keep): (Vec<_>, Vec<_>) = pending.into_iter().partition(|(_, r, _)| *r <= tau);
                pending = keep;
                for (x, _, step) in take {
                    accepted += 1;
                    evaluate_consecution(&lc[i], &x, step, mu, i, &mut worst, &mut nonfinite);
                }
            }
        }
        cons_counts[i - 1] = accepted;
    }

    let mut samples = vec![(Clause::Initial, counts[0])];
    for (i, &c) in cons_counts.iter().enumerate() {
        samples.push((Clause::Consecution(i + 1), c));
    }
    samples.push((Clause::Separation, counts[1]));
    for &(c, k) in &samples {
        if k == 0 {
            caveats.push(format!("no sample points for the {c} clause inside the box"));
        }
    }
    let verdict = if nonfinite {
        Verdict::Inconclusive { reason: "non-finite value while sampling".into() }
    } else {
        match worst {
            Some(w) => Verdict::Refuted { clause: w.clause, witness: w.witness, violation: w.violation },
            None => Verdict::Valid,
        }
    };
    CheckReport { verdict, caveats, samples }
}

fn evaluate_consecution(
    li: &Compiled,
    x: &[f64],
    step: f64,
    mu: f64,
    i: usize,
    worst: &mut Option<Worst>,
    nonfinite: &mut bool,
) {
    let v = li.value.eval(x);
    if !v.is_finite() {
        *nonfinite = true;
        return;
    }
    let gnorm = crate::linalg::norm2(&li.grad(x));
    let slack = if step.is_finite() { gnorm * step } else { 0.0 };
    let excess = v - slack;
    if excess > mu {
        record(worst, Clause::Consecution(i), x, excess);
    }
}

/// Independent re-evaluation of a refutation: the clause's premise holds at
/// the witness up to `premise_tol` and its conclusion fails by more than `mu / 2`.
pub fn witness_violates(sys: &DynamicalSystem, b: &Polynomial, clause: Clause, x: &[f64], cfg: &CheckConfig, premise_tol: f64) -> bool {
    let mu = cfg.margin;
    match clause {
        Clause::Initial => sys.init.eval(x) <= premise_tol && b.eval(x) > mu / 2.0,
        Clause::Separation => sys.unsafe_set.eval(x) <= premise_tol && cfg.epsilon_check - b.eval(x) > mu / 2.0,
        Clause::Consecution(i) => {
            let mut cur = b.clone();
            for _ in 0..i {
                if cur.eval(x).abs() > premise_tol {
                    return false;
                }
                cur = lie_derivative_once(&cur, &sys.flow);
            }
            cur.eval(x) > mu / 2.0
        }
    }
}

/// Convenience: the certificate record for `b`.
pub fn certify(sys: &DynamicalSystem, b: &Polynomial, cfg: &CheckConfig) -> Certificate {
    Certificate { b: b.clone(), lie_order: sys.lie_order, report: check_certificate(sys, b, cfg) }
}

pub(crate) fn lie_list(sys: &DynamicalSystem, b: &Polynomial) -> Vec<Polynomial> {
    let mut lie = vec![b.clone()];
    for _ in 0..sys.lie_order.max(1) {
        let next = lie_derivative_once(lie.last().unwrap(), &sys.flow);
        lie.push(next);
    }
    lie
}
