use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus as ClStatus, SupportedConeT,
};

use super::program::{AffineExpr, ConicProgram};
use super::{SolverResult, SolverStatus};

/// Column-major upper-triangle index used by the PSD triangle cone.
fn svec_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

struct Rows {
    triplets: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
}

impl Rows {
    fn push_affine_neg(&mut self, e: &AffineExpr) {
        // s = b - A x must equal the affine expression.
        let r = self.b.len();
        self.b.push(e.constant);
        for &(k, c) in &e.terms {
            self.triplets.push((r, k, -c));
        }
    }
}

fn csc_from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> CscMatrix<f64> {
    t.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    let mut colptr = vec![0usize; ncols + 1];
    let mut rowval = Vec::with_capacity(t.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(t.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in t {
        if last == Some((r, c)) {
            *nzval.last_mut().unwrap() += v;
            continue;
        }
        last = Some((r, c));
        rowval.push(r);
        nzval.push(v);
        colptr[c + 1] += 1;
    }
    for c in 0..ncols {
        colptr[c + 1] += colptr[c];
    }
    CscMatrix::new(nrows, ncols, colptr, rowval, nzval)
}

/// Solves `prog` with the embedded interior-point method.
pub fn solve_embedded(prog: &ConicProgram, tol: f64) -> SolverResult {
    let n = prog.nvars;
    let mut rows = Rows { triplets: Vec::new(), b: Vec::new() };
    let mut cones = Vec::new();

    if !prog.linear.is_empty() {
        for l in &prog.linear {
            let r = rows.b.len();
            rows.b.push(l.rhs);
            for &(k, c) in &l.terms {
                rows.triplets.push((r, k, c));
            }
        }
        cones.push(SupportedConeT::NonnegativeConeT(prog.linear.len()));
    }
    for s in &prog.socs {
        rows.push_affine_neg(&s.t);
        for w in &s.w {
            rows.push_affine_neg(w);
        }
        cones.push(SupportedConeT::SecondOrderConeT(s.w.len() + 1));
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    for blk in &prog.lmis {
        let base = rows.b.len();
        let len = blk.dim * (blk.dim + 1) / 2;
        rows.b.extend(std::iter::repeat(0.0).take(len));
        // slack = -(A0 + sum x_k A_k) in scaled svec form
        for (&(i, j), &v) in &blk.constant.entries {
            let w = if i == j { 1.0 } else { sqrt2 };
            rows.b[base + svec_index(i, j)] -= w * v;
        }
        for (&k, a) in &blk.coeffs {
            for (&(i, j), &v) in &a.entries {
                let w = if i == j { 1.0 } else { sqrt2 };
                rows.triplets.push((base + svec_index(i, j), k, w * v));
            }
        }
        cones.push(SupportedConeT::PSDTriangleConeT(blk.dim));
    }

    let m = rows.b.len();
    let a = csc_from_triplets(m, n, rows.triplets);
    let p = CscMatrix::zeros((n, n));
    let q: Vec<f64> = prog.objective.iter().map(|c| -c).collect();
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(tol)
        .max_iter(300)
        .presolve_enable(true)
        .build()
        .expect("valid solver settings");
    let mut solver = match DefaultSolver::new(&p, &q, &a, &rows.b, &cones, settings) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("embedded solver rejected program: {e:?}");
            return SolverResult::failed(n);
        }
    };
    solver.solve();
    let sol = &solver.solution;
    let x = sol.x.clone();
    let status = match sol.status {
        ClStatus::Solved | ClStatus::AlmostSolved => SolverStatus::Optimal,
        ClStatus::PrimalInfeasible | ClStatus::AlmostPrimalInfeasible => SolverStatus::Infeasible,
        ClStatus::DualInfeasible | ClStatus::AlmostDualInfeasible => SolverStatus::Unbounded,
        _ => SolverStatus::NumericalLimit,
    };
    let finite = x.iter().all(|v| v.is_finite());
    let objective = if finite { prog.objective_value(&x) } else { f64::NAN };
    SolverResult {
        status: if status == SolverStatus::Optimal && !finite { SolverStatus::NumericalLimit } else { status },
        x,
        objective,
        violation: f64::NAN,
        iterations: sol.iterations as usize,
    }
}
