//! Difference-of-convex iteration for bilinear matrix inequalities.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dcdecomp::{kron_quadratic, kron_quadratic_partial, split_block, BlockSplit, DcMethod};
use crate::encode::{BmiProblem, ParamRegistry};
use crate::sdp::{solve_conic, AffineExpr, ConicProgram, LinearIneq, LmiBlock, SocConstraint, SolverOptions};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Solution {
    pub lambda: f64,
    pub a: Vec<f64>,
    pub s: Vec<f64>,
}

impl Solution {
    pub fn distance(&self, other: &Solution) -> f64 {
        let d: f64 = (self.lambda - other.lambda).powi(2)
            + self.a.iter().zip(&other.a).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
            + self.s.iter().zip(&other.s).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        d.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DcpError {
    #[error("initial LMI could not be solved ({0})")]
    InitialInfeasible(String),
    #[error("parameter s_{0} is bilinearly coupled but has no fixed initial value")]
    UnfixedCoupling(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// `lambda` reached the non-negativity threshold.
    LambdaNonNegative,
    /// Successive iterates closer than the step tolerance.
    Tolerance,
    MaxIterations,
    SolverFailure,
    /// The caller accepted an iterate.
    Accepted,
    /// A solved subproblem did not improve `lambda` beyond round-off.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct DcpConfig {
    pub delta: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// `lambda >= -lambda_tol` counts as non-negative.
    pub lambda_tol: f64,
    pub method: DcMethod,
    pub solver: SolverOptions,
    /// Compare squared step norms against `tol`.
    pub squared_step: bool,
    /// Allowed decrease of `lambda` between accepted iterates.
    pub monotone_slack: f64,
    /// Rebalance each split at the current iterate before linearizing.
    pub rebalance: bool,
    /// Keep `<a^k, a> >= |a^k|^2` in every subproblem so the template scale
    /// cannot shrink.
    pub normalize: bool,
}

impl Default for DcpConfig {
    fn default() -> Self {
        DcpConfig {
            delta: -1e-3,
            tol: 1e-6,
            max_iter: 100,
            lambda_tol: 1e-6,
            method: DcMethod::Eig,
            solver: SolverOptions::default(),
            squared_step: false,
            monotone_slack: 1e-9,
            rebalance: true,
            normalize: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationTrace {
    /// Accepted iterates, starting with the initial solution.
    pub solutions: Vec<Solution>,
    pub objectives: Vec<f64>,
    pub residuals: Vec<f64>,
    pub reason: Termination,
    pub seconds: f64,
}

impl IterationTrace {
    /// Number of iterations after the initial solution.
    pub fn iterations(&self) -> usize {
        self.solutions.len().saturating_sub(1)
    }

    pub fn last(&self) -> &Solution {
        self.solutions.last().expect("trace holds the initial solution")
    }
}

fn add_box(prog: &mut ConicProgram, problem: &BmiProblem, a_var: impl Fn(usize) -> usize) {
    if let Some(b) = &problem.a_box {
        for (i, &(lo, hi)) in b.iter().enumerate() {
            prog.linear.push(LinearIneq::lower(a_var(i), lo));
            prog.linear.push(LinearIneq::upper(a_var(i), hi));
        }
    }
}

/// Solves the LMI obtained by fixing the coupled multipliers, maximizing
/// `lambda` over `(lambda, a, free s)`. The returned `lambda` is pulled 1e-7
/// inside the feasible range. Retries once with `c / 2`.
pub fn initial_solution(
    problem: &BmiProblem,
    registry: &ParamRegistry,
    c: f64,
    opts: &SolverOptions,
) -> Result<Solution, DcpError> {
    match initial_solution_fixed(problem, &registry.initial_multipliers(c), opts) {
        Ok(s) => Ok(s),
        Err(e) => {
            log::info!("initial LMI failed with c = {c}: {e}; retrying with c = {}", c / 2.0);
            initial_solution_fixed(problem, &registry.initial_multipliers(c / 2.0), opts)
        }
    }
}

/// Initial LMI with an explicit list of fixed `s` entries.
pub fn initial_solution_fixed(
    problem: &BmiProblem,
    fixed: &[(usize, f64)],
    opts: &SolverOptions,
) -> Result<Solution, DcpError> {
    let (m, n) = (problem.m, problem.n);
    let mut fixed_val: Vec<Option<f64>> = vec![None; n];
    for &(j, v) in fixed {
        fixed_val[j] = Some(v);
    }
    for c in &problem.constraints {
        for &(_, j) in c.fij.keys() {
            if fixed_val[j].is_none() {
                return Err(DcpError::UnfixedCoupling(j));
            }
        }
    }
    // variables: lambda, a (m), free s
    let mut s_var = vec![usize::MAX; n];
    let mut nv = 1 + m;
    for j in 0..n {
        if fixed_val[j].is_none() {
            s_var[j] = nv;
            nv += 1;
        }
    }
    let mut prog = ConicProgram::new(nv);
    prog.objective[0] = 1.0;
    for c in &problem.constraints {
        let p = c.p;
        let mut blk = LmiBlock::new(p);
        let mut constant = c.f.clone();
        let mut a_coef: Vec<DMatrix<f64>> = (0..m).map(|_| DMatrix::zeros(0, 0)).collect();
        for (&i, h) in &c.h {
            a_coef[i] = h.clone();
        }
        for (&j, g) in &c.g {
            match fixed_val[j] {
                Some(v) => constant += g * v,
                None => blk.add_coeff_dense(s_var[j], g, 0, 1.0),
            }
        }
        for (&(i, j), fm) in &c.fij {
            let v = fixed_val[j].unwrap();
            if a_coef[i].nrows() == 0 {
                a_coef[i] = DMatrix::zeros(p, p);
            }
            a_coef[i] += fm * v;
        }
        for (i, mat) in a_coef.iter().enumerate() {
            if mat.nrows() > 0 {
                blk.add_coeff_dense(1 + i, mat, 0, 1.0);
            }
        }
        blk.constant.add_dense(&constant, 0, 1.0);
        for d in 0..p {
            blk.coeff_mut(0).add(d, d, 1.0);
        }
        blk.prune();
        prog.lmis.push(blk);
    }
    prog.socs.push(SocConstraint::ball(&(1..=m).collect::<Vec<_>>(), &vec![0.0; m], problem.l_a));
    prog.socs.push(SocConstraint {
        t: AffineExpr::constant(problem.l_s),
        w: (0..n)
            .map(|j| match fixed_val[j] {
                Some(v) => AffineExpr::constant(v),
                None => AffineExpr::var(s_var[j]),
            })
            .collect(),
    });
    add_box(&mut prog, problem, |i| 1 + i);
    let res = solve_conic(&prog, opts);
    if !res.is_optimal() {
        return Err(DcpError::InitialInfeasible(format!("{:?}", res.status)));
    }
    let a: Vec<f64> = res.x[1..=m].to_vec();
    let s: Vec<f64> = (0..n).map(|j| fixed_val[j].unwrap_or_else(|| res.x[s_var[j]])).collect();
    let lambda = problem.best_lambda(&a, &s) - 1e-7;
    Ok(Solution { lambda, a, s })
}

/// Per-block decompositions, computed once per problem.
pub struct DcpContext<'a> {
    pub problem: &'a BmiProblem,
    pub splits: Vec<Option<BlockSplit>>,
}

impl<'a> DcpContext<'a> {
    pub fn new(problem: &'a BmiProblem, method: DcMethod, opts: &SolverOptions) -> Self {
        let splits = problem
            .constraints
            .iter()
            .map(|c| if c.is_linear() { None } else { Some(split_block(c, method, opts)) })
            .collect();
        DcpContext { problem, splits }
    }

    /// Context with every split rebalanced at `z`.
    pub fn rebalanced_at(&self, z: &Solution) -> DcpContext<'a> {
        let splits = self.splits.iter().map(|s| s.as_ref().map(|b| b.rebalanced_at(&z.a, &z.s))).collect();
        DcpContext { problem: self.problem, splits }
    }
}

/// Variable layout of the linearized program: `lambda, a, s, t`.
pub struct SubproblemLayout {
    pub m: usize,
    pub n: usize,
}

impl SubproblemLayout {
    pub fn lambda(&self) -> usize {
        0
    }
    pub fn a(&self, i: usize) -> usize {
        1 + i
    }
    pub fn s(&self, j: usize) -> usize {
        1 + self.m + j
    }
    pub fn t(&self) -> usize {
        1 + self.m + self.n
    }
    pub fn nvars(&self) -> usize {
        2 + self.m + self.n
    }
}

/// Schur-complement LMI of one block linearized at `zk`, written into
/// `(lambda, a, s)` variables of `layout`:
///
/// `[[-I, N (z (x) I)], [., B-(zk) + F + sum z_u (Omega_u - D_u) + lambda I]] <= 0`.
pub fn linearized_block(
    problem: &BmiProblem,
    block: usize,
    split: Option<&BlockSplit>,
    zk: &Solution,
    layout: &SubproblemLayout,
) -> LmiBlock {
    let c = &problem.constraints[block];
    let p = c.p;
    let Some(split) = split else {
        let mut blk = LmiBlock::new(p);
        blk.constant.add_dense(&c.f, 0, 1.0);
        for (&i, h) in &c.h {
            blk.add_coeff_dense(layout.a(i), h, 0, 1.0);
        }
        for (&j, g) in &c.g {
            blk.add_coeff_dense(layout.s(j), g, 0, 1.0);
        }
        for d in 0..p {
            blk.coeff_mut(layout.lambda()).add(d, d, 1.0);
        }
        blk.prune();
        return blk;
    };
    let kf = &split.kron;
    let nmat = &split.dc.n;
    let r = nmat.nrows();
    let zloc = kf.local(&zk.a, &zk.s);
    let var_of = |u: usize| match kf.global(u) {
        (true, i) => layout.a(i),
        (false, j) => layout.s(j),
    };
    let mut blk = LmiBlock::new(r + p);
    for d in 0..r {
        blk.constant.add(d, d, -1.0);
    }
    let bminus = kron_quadratic(&split.dc.m2, &zloc, p);
    blk.constant.add_dense(&(bminus + &c.f), r, 1.0);
    for (&i, h) in &c.h {
        blk.add_coeff_dense(layout.a(i), h, r, 1.0);
    }
    for (&j, g) in &c.g {
        blk.add_coeff_dense(layout.s(j), g, r, 1.0);
    }
    for u in 0..kf.local_dim() {
        let var = var_of(u);
        let du = kron_quadratic_partial(&split.dc.m2, &zloc, p, u);
        blk.add_coeff_dense(var, &du, r, -1.0);
        if r > 0 {
            let nu = nmat.columns(u * p, p).into_owned();
            blk.coeff_mut(var).add_offdiag_block(&nu, 0, r, 1.0);
        }
    }
    for d in 0..p {
        blk.coeff_mut(layout.lambda()).add(r + d, r + d, 1.0);
    }
    blk.prune();
    blk
}

/// Convex program solved at each iteration: maximize
/// `lambda + delta/2 * t` with `t >= ||z - zk||^2`, one linearized block per
/// constraint and the norm bounds on `a` and `s`.
pub fn linearized_subproblem(ctx: &DcpContext, zk: &Solution, delta: f64) -> (ConicProgram, SubproblemLayout) {
    linearized_subproblem_weighted(ctx, zk, delta, 1.0)
}

/// As [`linearized_subproblem`] with the regularizer measured as
/// `kappa |a - ak|^2 + |s - sk|^2 / kappa + (lambda - lambdak)^2`.
pub fn linearized_subproblem_weighted(
    ctx: &DcpContext,
    zk: &Solution,
    delta: f64,
    kappa: f64,
) -> (ConicProgram, SubproblemLayout) {
    let problem = ctx.problem;
    let layout = SubproblemLayout { m: problem.m, n: problem.n };
    let mut prog = ConicProgram::new(layout.nvars());
    prog.objective[layout.lambda()] = 1.0;
    prog.objective[layout.t()] = 0.5 * delta;
    for (k, split) in ctx.splits.iter().enumerate() {
        prog.lmis.push(linearized_block(problem, k, split.as_ref(), zk, &layout));
    }
    // ||(2 (z - zk), t - 1)|| <= t + 1
    let mut w = Vec::with_capacity(1 + problem.m + problem.n + 1);
    w.push(AffineExpr { terms: vec![(layout.lambda(), 2.0)], constant: -2.0 * zk.lambda });
    let (wa, ws) = (2.0 * kappa.sqrt(), 2.0 / kappa.sqrt());
    for i in 0..problem.m {
        w.push(AffineExpr { terms: vec![(layout.a(i), wa)], constant: -wa * zk.a[i] });
    }
    for j in 0..problem.n {
        w.push(AffineExpr { terms: vec![(layout.s(j), ws)], constant: -ws * zk.s[j] });
    }
    w.push(AffineExpr { terms: vec![(layout.t(), 1.0)], constant: -1.0 });
    prog.socs.push(SocConstraint { t: AffineExpr { terms: vec![(layout.t(), 1.0)], constant: 1.0 }, w });
    let avars: Vec<usize> = (0..problem.m).map(|i| layout.a(i)).collect();
    prog.socs.push(SocConstraint::ball(&avars, &vec![0.0; problem.m], problem.l_a));
    let svars: Vec<usize> = (0..problem.n).map(|j| layout.s(j)).collect();
    prog.socs.push(SocConstraint::ball(&svars, &vec![0.0; problem.n], problem.l_s));
    add_box(&mut prog, problem, |i| layout.a(i));
    (prog, layout)
}

/// Runs the iteration from `z0` until `lambda` is non-negative, the step
/// falls below the tolerance, or the iteration budget is spent.
pub fn bmi_dc(problem: &BmiProblem, z0: &Solution, cfg: &DcpConfig) -> IterationTrace {
    bmi_dc_with(problem, z0, cfg, |_, _| false)
}

/// As [`bmi_dc`], calling `accept(k, z_k)` on every new iterate; returning
/// `true` stops the run with [`Termination::Accepted`].
pub fn bmi_dc_with(
    problem: &BmiProblem,
    z0: &Solution,
    cfg: &DcpConfig,
    mut accept: impl FnMut(usize, &Solution) -> bool,
) -> IterationTrace {
    let start = Instant::now();
    let ctx = DcpContext::new(problem, cfg.method, &cfg.solver);
    let mut z = z0.clone();
    z.lambda = z.lambda.min(problem.best_lambda(&z.a, &z.s));
    let mut trace = IterationTrace {
        solutions: vec![z.clone()],
        objectives: vec![z.lambda],
        residuals: vec![problem.residual(z.lambda, &z.a, &z.s)],
        reason: Termination::MaxIterations,
        seconds: 0.0,
    };
    if z.lambda >= -cfg.lambda_tol {
        trace.reason = Termination::LambdaNonNegative;
        trace.seconds = start.elapsed().as_secs_f64();
        return trace;
    }
    for k in 1..=cfg.max_iter {
        let (mut prog, layout) = if cfg.rebalance {
            let kappa = global_balance_ratio(problem, &z);
            linearized_subproblem_weighted(&ctx.rebalanced_at(&z), &z, cfg.delta, kappa)
        } else {
            linearized_subproblem(&ctx, &z, cfg.delta)
        };
        if cfg.normalize {
            let norm2: f64 = z.a.iter().map(|v| v * v).sum();
            if norm2 > 0.0 {
                let terms = z.a.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (layout.a(i), -v)).collect();
                prog.linear.push(LinearIneq { terms, rhs: -norm2 * (1.0 - 1e-9) });
            }
        }
        let res = solve_conic(&prog, &cfg.solver);
        if !res.is_optimal() {
            log::debug!("subproblem {k} ended with {:?}", res.status);
            trace.reason = Termination::SolverFailure;
            break;
        }
        let a: Vec<f64> = (0..problem.m).map(|i| res.x[layout.a(i)]).collect();
        let s: Vec<f64> = (0..problem.n).map(|j| res.x[layout.s(j)]).collect();
        let lambda = problem.best_lambda(&a, &s);
        if lambda < z.lambda - cfg.monotone_slack {
            log::debug!("iterate {k} lowered lambda from {} to {lambda}", z.lambda);
            trace.reason = Termination::Stalled;
            break;
        }
        let next = Solution { lambda, a, s };
        let step = next.distance(&z);
        z = next;
        trace.solutions.push(z.clone());
        trace.objectives.push(z.lambda);
        trace.residuals.push(problem.residual(z.lambda, &z.a, &z.s));
        log::debug!("iteration {k}: lambda = {:.3e}, step = {step:.3e}", z.lambda);
        if accept(k, &z) {
            trace.reason = Termination::Accepted;
            break;
        }
        if z.lambda >= -cfg.lambda_tol {
            trace.reason = Termination::LambdaNonNegative;
            break;
        }
        let measure = if cfg.squared_step { step * step } else { step };
        if measure < cfg.tol {
            trace.reason = Termination::Tolerance;
            break;
        }
    }
    trace.seconds = start.elapsed().as_secs_f64();
    trace
}

/// Ratio of the root-mean-square magnitudes of all coupled `s` and `a`
/// coordinates at `z`, clamped to `[1e-6, 1e6]`.
pub fn global_balance_ratio(problem: &BmiProblem, z: &Solution) -> f64 {
    let mut ai = std::collections::BTreeSet::new();
    let mut sj = std::collections::BTreeSet::new();
    for c in &problem.constraints {
        for &(i, j) in c.fij.keys() {
            ai.insert(i);
            sj.insert(j);
        }
    }
    let rms = |v: Vec<f64>| (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt();
    let ra = rms(ai.iter().map(|&i| z.a[i]).collect());
    let rs = rms(sj.iter().map(|&j| z.s[j]).collect());
    if ra <= 1e-12 || rs <= 1e-12 {
        return 1.0;
    }
    (rs / ra).clamp(1e-6, 1e6)
}

/// Largest eigenvalue of `F_k(a, s) + lambda I` over all blocks; `<= 0` is feasible.
pub fn bmi_residual(problem: &BmiProblem, z: &Solution) -> f64 {
    problem.max_eigenvalue(&z.a, &z.s) + z.lambda
}
