use std::collections::BTreeMap;

use nalgebra::DMatrix;

/// Symmetric matrix function bilinear in `(a, s)`:
/// `F(a, s) = F + sum a_i H_i + sum s_j G_j + sum a_i s_j F_ij`.
///
/// Absent entries of the sparse maps are zero matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearMatrixFunction {
    pub p: usize,
    pub f: DMatrix<f64>,
    pub h: BTreeMap<usize, DMatrix<f64>>,
    pub g: BTreeMap<usize, DMatrix<f64>>,
    pub fij: BTreeMap<(usize, usize), DMatrix<f64>>,
}

fn add_to(map: &mut BTreeMap<usize, DMatrix<f64>>, k: usize, m: &DMatrix<f64>) {
    match map.get_mut(&k) {
        Some(cur) => *cur += m,
        None => {
            map.insert(k, m.clone());
        }
    }
}

impl BilinearMatrixFunction {
    pub fn zero(p: usize) -> Self {
        BilinearMatrixFunction {
            p,
            f: DMatrix::zeros(p, p),
            h: BTreeMap::new(),
            g: BTreeMap::new(),
            fij: BTreeMap::new(),
        }
    }

    pub fn add_h(&mut self, i: usize, m: &DMatrix<f64>) {
        add_to(&mut self.h, i, m);
    }

    pub fn add_g(&mut self, j: usize, m: &DMatrix<f64>) {
        add_to(&mut self.g, j, m);
    }

    pub fn add_fij(&mut self, i: usize, j: usize, m: &DMatrix<f64>) {
        match self.fij.get_mut(&(i, j)) {
            Some(cur) => *cur += m,
            None => {
                self.fij.insert((i, j), m.clone());
            }
        }
    }

    /// Removes exactly-zero coefficient matrices.
    pub fn prune(&mut self) {
        self.h.retain(|_, m| !crate::linalg::is_zero(m));
        self.g.retain(|_, m| !crate::linalg::is_zero(m));
        self.fij.retain(|_, m| !crate::linalg::is_zero(m));
    }

    pub fn is_linear(&self) -> bool {
        self.fij.is_empty()
    }

    pub fn evaluate(&self, a: &[f64], s: &[f64]) -> DMatrix<f64> {
        let mut out = self.f.clone();
        for (&i, m) in &self.h {
            out += m * a[i];
        }
        for (&j, m) in &self.g {
            out += m * s[j];
        }
        for (&(i, j), m) in &self.fij {
            out += m * (a[i] * s[j]);
        }
        out
    }

    /// Indices of `a` and `s` that occur in some bilinear term.
    pub fn coupled(&self) -> (Vec<usize>, Vec<usize>) {
        let mut a: Vec<usize> = self.fij.keys().map(|k| k.0).collect();
        let mut s: Vec<usize> = self.fij.keys().map(|k| k.1).collect();
        a.sort_unstable();
        a.dedup();
        s.sort_unstable();
        s.dedup();
        (a, s)
    }
}

/// Box bound on the template parameters.
pub type ParamBox = Vec<(f64, f64)>;

/// Maximize `lambda` subject to `F_k(a, s) + lambda I <= 0` for every block,
/// `||a|| <= L_a`, `||s|| <= L_s`, and optionally `a` in a box.
#[derive(Clone, Debug)]
pub struct BmiProblem {
    pub m: usize,
    pub n: usize,
    pub constraints: Vec<BilinearMatrixFunction>,
    pub labels: Vec<String>,
    pub l_a: f64,
    pub l_s: f64,
    pub a_box: Option<ParamBox>,
}

impl BmiProblem {
    /// `max_k lambda_max(F_k(a, s))`; `lambda <= -this` is the feasible range.
    pub fn max_eigenvalue(&self, a: &[f64], s: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| crate::linalg::max_eigenvalue(&c.evaluate(a, s)))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `lambda` for which `(lambda, a, s)` is feasible (ignoring norm bounds).
    pub fn best_lambda(&self, a: &[f64], s: &[f64]) -> f64 {
        -self.max_eigenvalue(a, s)
    }

    /// `max(0, max_k lambda_max(F_k(a, s) + lambda I))`.
    pub fn residual(&self, lambda: f64, a: &[f64], s: &[f64]) -> f64 {
        (self.max_eigenvalue(a, s) + lambda).max(0.0)
    }

    pub fn with_box(&self, b: ParamBox) -> BmiProblem {
        let mut out = self.clone();
        out.a_box = Some(b);
        out
    }
}
