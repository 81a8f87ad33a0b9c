//! Branch and bound over the template-parameter box.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dcp::{bmi_dc, initial_solution, DcpConfig};
use crate::encode::{BmiProblem, Encoding, Mode, ParamBox};
use crate::problem::Problem;
use crate::sdp::{solve_conic, ConicProgram, LinearIneq, LmiBlock, SocConstraint, SolverOptions};
use crate::verify::{check_certificate, CheckConfig, CheckReport};

/// Axis-aligned box of template parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        ParamRegion { lo, hi }
    }

    pub fn cube(m: usize, half: f64) -> Self {
        ParamRegion { lo: vec![-half; m], hi: vec![half; m] }
    }

    pub fn from_box(b: &ParamBox) -> Self {
        ParamRegion { lo: b.iter().map(|p| p.0).collect(), hi: b.iter().map(|p| p.1).collect() }
    }

    pub fn to_box(&self) -> ParamBox {
        self.lo.iter().copied().zip(self.hi.iter().copied()).collect()
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Largest side length.
    pub fn width(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).fold(0.0, f64::max)
    }

    pub fn widest_axis(&self) -> usize {
        let mut best = 0;
        for i in 1..self.dim() {
            if self.hi[i] - self.lo[i] > self.hi[best] - self.lo[best] {
                best = i;
            }
        }
        best
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    /// Halves along the widest axis.
    pub fn bisect(&self) -> (ParamRegion, ParamRegion) {
        let k = self.widest_axis();
        let mid = 0.5 * (self.lo[k] + self.hi[k]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[k] = mid;
        right.lo[k] = mid;
        (left, right)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(&l, &h)| if h > l { rng.gen_range(l..=h) } else { l }).collect()
    }
}

/// Upper bound on the best `lambda` over `a` in `region` from the Shor
/// relaxation of the bilinear terms with McCormick cuts (`|s_j| <= l_s`).
/// Returns `+inf` when the relaxation cannot be solved.
pub fn relaxation_upper_bound(problem: &BmiProblem, region: &ParamRegion, l_s: f64, opts: &SolverOptions) -> f64 {
    let (m, n) = (problem.m, problem.n);
    let mut ci: Vec<usize> = Vec::new();
    let mut cj: Vec<usize> = Vec::new();
    for c in &problem.constraints {
        let (a, s) = c.coupled();
        ci.extend(a);
        cj.extend(s);
    }
    ci.sort_unstable();
    ci.dedup();
    cj.sort_unstable();
    cj.dedup();
    let (p, q) = (ci.len(), cj.len());

    // Variables: lambda, a, s, then lifted X (p x p upper), Y (q x q upper), Z (p x q).
    let lam = 0;
    let av = |i: usize| 1 + i;
    let sv = |j: usize| 1 + m + j;
    let base = 1 + m + n;
    let xv = |u: usize, v: usize| {
        let (u, v) = if u <= v { (u, v) } else { (v, u) };
        base + v * (v + 1) / 2 + u
    };
    let ybase = base + p * (p + 1) / 2;
    let yv = |u: usize, v: usize| {
        let (u, v) = if u <= v { (u, v) } else { (v, u) };
        ybase + v * (v + 1) / 2 + u
    };
    let zbase = ybase + q * (q + 1) / 2;
    let zv = |u: usize, v: usize| zbase + u * q + v;
    let nvars = zbase + p * q;
    let pos_a = |i: usize| ci.binary_search(&i).expect("coupled a");
    let pos_s = |j: usize| cj.binary_search(&j).expect("coupled s");

    let mut prog = ConicProgram::new(nvars);
    prog.objective[lam] = 1.0;

    for c in &problem.constraints {
        let mut b = LmiBlock::new(c.p);
        b.constant.add_dense(&c.f, 0, 1.0);
        for d in 0..c.p {
            b.coeff_mut(lam).add(d, d, 1.0);
        }
        for (&i, h) in &c.h {
            b.add_coeff_dense(av(i), h, 0, 1.0);
        }
        for (&j, g) in &c.g {
            b.add_coeff_dense(sv(j), g, 0, 1.0);
        }
        for (&(i, j), f) in &c.fij {
            b.add_coeff_dense(zv(pos_a(i), pos_s(j)), f, 0, 1.0);
        }
        b.prune();
        prog.lmis.push(b);
    }

    // Moment matrix W = [[1, a, s], [a, X, Z], [s, Z^T, Y]] >= 0, written as -W <= 0.
    let dim = 1 + p + q;
    if p + q > 0 && dim <= 400 {
        let mut w = LmiBlock::new(dim);
        w.constant.add(0, 0, -1.0);
        for (u, &i) in ci.iter().enumerate() {
            w.coeff_mut(av(i)).add(0, 1 + u, -1.0);
            for v in u..p {
                w.coeff_mut(xv(u, v)).add(1 + u, 1 + v, -1.0);
            }
            for v in 0..q {
                w.coeff_mut(zv(u, v)).add(1 + u, 1 + p + v, -1.0);
            }
        }
        for (u, &j) in cj.iter().enumerate() {
            w.coeff_mut(sv(j)).add(0, 1 + p + u, -1.0);
            for v in u..q {
                w.coeff_mut(yv(u, v)).add(1 + p + u, 1 + p + v, -1.0);
            }
        }
        w.prune();
        prog.lmis.push(w);
    }

    let lin = |terms: Vec<(usize, f64)>, rhs: f64| LinearIneq { terms, rhs };
    for i in 0..m {
        prog.linear.push(LinearIneq::lower(av(i), region.lo[i]));
        prog.linear.push(LinearIneq::upper(av(i), region.hi[i]));
    }
    for j in 0..n {
        prog.linear.push(LinearIneq::lower(sv(j), -l_s));
        prog.linear.push(LinearIneq::upper(sv(j), l_s));
    }
    // McCormick envelopes for Z = a s, X_uu = a^2 and trace bounds.
    for (u, &i) in ci.iter().enumerate() {
        let (al, ah) = (region.lo[i], region.hi[i]);
        for (v, &j) in cj.iter().enumerate() {
            let (sl, sh) = (-l_s, l_s);
            let z = zv(u, v);
            prog.linear.push(lin(vec![(z, -1.0), (sv(j), al), (av(i), sl)], al * sl));
            prog.linear.push(lin(vec![(z, -1.0), (sv(j), ah), (av(i), sh)], ah * sh));
            prog.linear.push(lin(vec![(z, 1.0), (sv(j), -ah), (av(i), -sl)], -ah * sl));
            prog.linear.push(lin(vec![(z, 1.0), (sv(j), -al), (av(i), -sh)], -al * sh));
        }
        prog.linear.push(lin(vec![(xv(u, u), 1.0), (av(i), -(al + ah))], -al * ah));
    }
    if p > 0 {
        prog.linear.push(lin((0..p).map(|u| (xv(u, u), 1.0)).collect(), problem.l_a * problem.l_a));
    }
    if q > 0 {
        prog.linear.push(lin((0..q).map(|u| (yv(u, u), 1.0)).collect(), l_s * l_s));
    }
    let a_idx: Vec<usize> = (0..m).map(av).collect();
    prog.socs.push(SocConstraint::ball(&a_idx, &vec![0.0; m], problem.l_a));
    let s_idx: Vec<usize> = (0..n).map(sv).collect();
    if n > 0 {
        prog.socs.push(SocConstraint::ball(&s_idx, &vec![0.0; n], problem.l_s));
    }

    let res = solve_conic(&prog, opts);
    if res.is_optimal() && res.objective.is_finite() {
        res.objective
    } else {
        f64::INFINITY
    }
}

#[derive(Clone, Debug)]
pub struct BnbConfig {
    /// Minimum region width; defaults to `0.05 L_a` when `None`.
    pub eta: Option<f64>,
    pub samples_per_region: usize,
    pub max_regions: usize,
    pub time_limit: f64,
    pub mode: Mode,
    pub dcp: DcpConfig,
    pub check: CheckConfig,
    /// Sampling-check size for the per-region candidates.
    pub sample_check_points: usize,
    pub seed: u64,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            eta: None,
            samples_per_region: 8,
            max_regions: 2_000,
            time_limit: 600.0,
            mode: Mode::Sufficient,
            dcp: DcpConfig::default(),
            check: CheckConfig::default(),
            sample_check_points: 5_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BnbStats {
    pub regions: usize,
    pub pruned: usize,
    pub below_eta: usize,
    pub dcp_runs: usize,
    pub dcp_iterations: usize,
    pub candidates_checked: usize,
    pub max_depth: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub enum BnbOutcome {
    Found { a: Vec<f64>, s: Vec<f64>, lambda: f64, report: CheckReport, iterations: usize },
    /// Every region was pruned or fell below the width threshold.
    Exhausted,
    /// A region or time budget ran out; the string names it.
    Budget(String),
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    region: ParamRegion,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        self.bound.total_cmp(&o.bound).then_with(|| o.seq.cmp(&self.seq))
    }
}

/// Generic search. `relax` bounds the best `lambda` in a region, `candidate`
/// decides whether a parameter point is valid, `local` runs a local search
/// inside a region and returns its end point, `(s, lambda, iterations)` and
/// whether that point is valid.
pub fn search<R, C, L>(
    root: ParamRegion,
    cfg: &BnbConfig,
    eta: f64,
    lambda_tol: f64,
    mut relax: R,
    mut candidate: C,
    mut local: L,
) -> (Option<(Vec<f64>, Vec<f64>, f64, usize)>, BnbStats, Option<String>)
where
    R: FnMut(&ParamRegion) -> f64,
    C: FnMut(&[f64]) -> bool,
    L: FnMut(&ParamRegion) -> Option<(Vec<f64>, Vec<f64>, f64, usize, bool)>,
{
    let start = Instant::now();
    let mut stats = BnbStats::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node { bound: f64::INFINITY, depth: 0, seq, region: root });
    let mut visited: Vec<Vec<f64>> = Vec::new();
    while let Some(node) = heap.pop() {
        if stats.regions >= cfg.max_regions {
            stats.seconds = start.elapsed().as_secs_f64();
            return (None, stats, Some(format!("region budget of {} exhausted", cfg.max_regions)));
        }
        if start.elapsed().as_secs_f64() > cfg.time_limit {
            stats.seconds = start.elapsed().as_secs_f64();
            return (None, stats, Some(format!("time limit of {} s reached", cfg.time_limit)));
        }
        stats.regions += 1;
        stats.max_depth = stats.max_depth.max(node.depth);
        let region = node.region;
        if region.width() < eta {
            stats.below_eta += 1;
            continue;
        }
        let bound = relax(&region);
        if bound < -lambda_tol && cfg.mode == Mode::Necessary {
            stats.pruned += 1;
            continue;
        }
        let mut pts = vec![region.center()];
        while pts.len() < cfg.samples_per_region.max(1) {
            pts.push(region.sample(&mut rng));
        }
        for x in &pts {
            stats.candidates_checked += 1;
            if candidate(x) {
                stats.seconds = start.elapsed().as_secs_f64();
                return (Some((x.clone(), Vec::new(), f64::NAN, 0)), stats, None);
            }
        }
        if bound >= -lambda_tol && !visited.iter().any(|v| region.contains(v)) {
            stats.dcp_runs += 1;
            if let Some((a, s, lambda, iters, ok)) = local(&region) {
                stats.dcp_iterations += iters;
                if ok {
                    stats.seconds = start.elapsed().as_secs_f64();
                    return (Some((a, s, lambda, iters)), stats, None);
                }
                visited.push(a);
            }
        }
        let (l, r) = region.bisect();
        for child in [l, r] {
            seq += 1;
            heap.push(Node { bound, depth: node.depth + 1, seq, region: child });
        }
    }
    stats.seconds = start.elapsed().as_secs_f64();
    (None, stats, None)
}

/// Branch and bound on an encoded problem.
pub fn branch_and_bound(enc: &Encoding, problem: &Problem, cfg: &BnbConfig) -> (BnbOutcome, BnbStats) {
    let bmi = &enc.problem;
    let root = match &bmi.a_box {
        Some(b) => ParamRegion::from_box(b),
        None => ParamRegion::cube(bmi.m, bmi.l_a),
    };
    let eta = cfg.eta.unwrap_or(0.05 * bmi.l_a);
    let sys = &problem.system;
    let quick = CheckConfig {
        n_points: cfg.sample_check_points,
        n_targeted: (cfg.sample_check_points / 25).max(100),
        ..cfg.check.clone()
    };
    let solver = cfg.dcp.solver.clone();
    let relax = |r: &ParamRegion| relaxation_upper_bound(bmi, r, bmi.l_s, &solver);
    let candidate = |a: &[f64]| check_certificate(sys, &enc.certificate(a), &quick).verdict.is_valid();
    let local = |r: &ParamRegion| {
        let boxed = bmi.with_box(r.to_box());
        let z0 = initial_solution(&boxed, &enc.registry, problem.multiplier_constant, &cfg.dcp.solver).ok()?;
        let tr = bmi_dc(&boxed, &z0, &cfg.dcp);
        let z = tr.last().clone();
        let ok = check_certificate(sys, &enc.certificate(&z.a), &quick).verdict.is_valid();
        Some((z.a, z.s, z.lambda, tr.iterations(), ok))
    };
    let (found, stats, budget) = search(root, cfg, eta, cfg.dcp.lambda_tol, relax, candidate, local);
    match found {
        Some((a, s, lambda, iterations)) => {
            let report = check_certificate(sys, &enc.certificate(&a), &cfg.check);
            let lambda = if lambda.is_nan() { f64::NEG_INFINITY } else { lambda };
            (BnbOutcome::Found { a, s, lambda, report, iterations }, stats)
        }
        None => match budget {
            Some(b) => (BnbOutcome::Budget(b), stats),
            None => (BnbOutcome::Exhausted, stats),
        },
    }
}
