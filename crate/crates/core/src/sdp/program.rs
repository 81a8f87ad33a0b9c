use std::collections::BTreeMap;

use nalgebra::DMatrix;

/// Symmetric matrix stored as its upper triangle, `(i, j)` with `i <= j`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SymSparse {
    pub entries: BTreeMap<(usize, usize), f64>,
}

impl SymSparse {
    pub fn new() -> Self {
        SymSparse::default()
    }

    /// Adds `v` at `(i, j)` and its mirror.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let key = if i <= j { (i, j) } else { (j, i) };
        let e = self.entries.entry(key).or_insert(0.0);
        *e += v;
        if *e == 0.0 {
            self.entries.remove(&key);
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut s = SymSparse::new();
        s.add_dense(m, 0, 1.0);
        s
    }

    /// Adds `scale * m` with its top-left corner placed at `(offset, offset)`.
    pub fn add_dense(&mut self, m: &DMatrix<f64>, offset: usize, scale: f64) {
        for j in 0..m.ncols() {
            for i in 0..=j.min(m.nrows() - 1) {
                let v = m[(i, j)];
                if v != 0.0 {
                    self.add(offset + i, offset + j, scale * v);
                }
            }
        }
    }

    /// Adds `scale * r` into the off-diagonal block at rows `row0..`, columns `col0..`
    /// (the mirrored block is implied). Requires `row0 + r.nrows() <= col0`.
    pub fn add_offdiag_block(&mut self, r: &DMatrix<f64>, row0: usize, col0: usize, scale: f64) {
        for i in 0..r.nrows() {
            for j in 0..r.ncols() {
                let v = r[(i, j)];
                if v != 0.0 {
                    self.add(row0 + i, col0 + j, scale * v);
                }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        for (&(i, j), &v) in &self.entries {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
        m
    }
}

/// Linear matrix inequality `A0 + sum_k x_k A_k <= 0` (negative semidefinite).
#[derive(Clone, Debug, PartialEq)]
pub struct LmiBlock {
    pub dim: usize,
    pub constant: SymSparse,
    pub coeffs: BTreeMap<usize, SymSparse>,
}

impl LmiBlock {
    pub fn new(dim: usize) -> Self {
        LmiBlock { dim, constant: SymSparse::new(), coeffs: BTreeMap::new() }
    }

    pub fn coeff_mut(&mut self, var: usize) -> &mut SymSparse {
        self.coeffs.entry(var).or_default()
    }

    pub fn add_coeff_dense(&mut self, var: usize, m: &DMatrix<f64>, offset: usize, scale: f64) {
        self.coeff_mut(var).add_dense(m, offset, scale);
    }

    pub fn prune(&mut self) {
        self.coeffs.retain(|_, s| !s.is_empty());
    }

    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.to_dense(self.dim);
        for (&k, a) in &self.coeffs {
            if x[k] != 0.0 {
                for (&(i, j), &v) in &a.entries {
                    m[(i, j)] += x[k] * v;
                    if i != j {
                        m[(j, i)] += x[k] * v;
                    }
                }
            }
        }
        m
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr { terms: Vec::new(), constant: c }
    }

    pub fn var(k: usize) -> Self {
        AffineExpr { terms: vec![(k, 1.0)], constant: 0.0 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(k, c)| c * x[k]).sum::<f64>()
    }
}

/// Second-order cone `||w|| <= t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SocConstraint {
    pub t: AffineExpr,
    pub w: Vec<AffineExpr>,
}

impl SocConstraint {
    /// `||x[vars] - center|| <= radius`.
    pub fn ball(vars: &[usize], center: &[f64], radius: f64) -> Self {
        SocConstraint {
            t: AffineExpr::constant(radius),
            w: vars
                .iter()
                .zip(center)
                .map(|(&k, &c)| AffineExpr { terms: vec![(k, 1.0)], constant: -c })
                .collect(),
        }
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        let nw = self.w.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
        (nw - self.t.eval(x)).max(0.0)
    }
}

/// `sum terms <= rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearIneq {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearIneq {
    pub fn upper(var: usize, hi: f64) -> Self {
        LinearIneq { terms: vec![(var, 1.0)], rhs: hi }
    }

    pub fn lower(var: usize, lo: f64) -> Self {
        LinearIneq { terms: vec![(var, -1.0)], rhs: -lo }
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        (self.terms.iter().map(|&(k, c)| c * x[k]).sum::<f64>() - self.rhs).max(0.0)
    }
}

/// Maximize `objective . x` over LMI, second-order-cone and linear constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct ConicProgram {
    pub nvars: usize,
    pub objective: Vec<f64>,
    pub lmis: Vec<LmiBlock>,
    pub socs: Vec<SocConstraint>,
    pub linear: Vec<LinearIneq>,
}

impl ConicProgram {
    pub fn new(nvars: usize) -> Self {
        ConicProgram {
            nvars,
            objective: vec![0.0; nvars],
            lmis: Vec::new(),
            socs: Vec::new(),
            linear: Vec::new(),
        }
    }

    /// Largest constraint violation at `x`: positive eigenvalues of LMI blocks,
    /// cone and half-space excess.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for b in &self.lmis {
            v = v.max(crate::linalg::max_eigenvalue(&b.evaluate(x)).max(0.0));
        }
        for s in &self.socs {
            v = v.max(s.violation(x));
        }
        for l in &self.linear {
            v = v.max(l.violation(x));
        }
        v
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Rewrites every second-order cone as the arrow LMI
    /// `-[[t I, w], [w^T, t]] <= 0`.
    pub fn socs_as_lmis(&self) -> ConicProgram {
        let mut out = self.clone();
        out.socs.clear();
        for s in &self.socs {
            let k = s.w.len();
            let mut b = LmiBlock::new(k + 1);
            for d in 0..=k {
                b.constant.add(d, d, -s.t.constant);
                for &(var, c) in &s.t.terms {
                    b.coeff_mut(var).add(d, d, -c);
                }
            }
            for (r, w) in s.w.iter().enumerate() {
                b.constant.add(r, k, -w.constant);
                for &(var, c) in &w.terms {
                    b.coeff_mut(var).add(r, k, -c);
                }
            }
            b.prune();
            out.lmis.push(b);
        }
        out
    }
}
