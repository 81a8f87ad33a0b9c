//! Kronecker rewriting of a bilinear matrix function and its
//! difference-of-convex split `M = M1 - M2`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::encode::BilinearMatrixFunction;
use crate::linalg::{frobenius, sym_eig};
use crate::sdp::{solve_conic, ConicProgram, LinearIneq, LmiBlock, SolverOptions};

/// Eigenvalues with magnitude at most this are dropped from both parts.
pub const EIG_CLAMP: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DcMethod {
    #[default]
    Eig,
    Bound,
    Sdp,
}

impl std::str::FromStr for DcMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "eig" => Ok(DcMethod::Eig),
            "bound" => Ok(DcMethod::Bound),
            "sdp" => Ok(DcMethod::Sdp),
            _ => Err(format!("unknown decomposition method '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DcError {
    #[error("matrix is indefinite beyond tolerance (smallest eigenvalue {0})")]
    Indefinite(f64),
}

/// `F(a, s) = (z (x) I)^T M (z (x) I) + linear + F`, restricted to the
/// parameters that occur bilinearly. Local coordinates are
/// `z = (a[a_idx], s[s_idx])`.
#[derive(Clone, Debug)]
pub struct KroneckerForm {
    pub p: usize,
    pub a_idx: Vec<usize>,
    pub s_idx: Vec<usize>,
    pub gamma: DMatrix<f64>,
    pub m: DMatrix<f64>,
}

impl KroneckerForm {
    pub fn local_dim(&self) -> usize {
        self.a_idx.len() + self.s_idx.len()
    }

    /// Local coordinates of `(a, s)`.
    pub fn local(&self, a: &[f64], s: &[f64]) -> Vec<f64> {
        self.a_idx.iter().map(|&i| a[i]).chain(self.s_idx.iter().map(|&j| s[j])).collect()
    }

    /// Global variable behind local coordinate `u`: `(true, i)` for `a_i`, `(false, j)` for `s_j`.
    pub fn global(&self, u: usize) -> (bool, usize) {
        if u < self.a_idx.len() {
            (true, self.a_idx[u])
        } else {
            (false, self.s_idx[u - self.a_idx.len()])
        }
    }
}

/// Builds `M = [[0, Gamma], [Gamma^T, 0]]` with `Gamma = 1/2 [F_ij]`.
pub fn to_kronecker(bmf: &BilinearMatrixFunction) -> KroneckerForm {
    let (a_idx, s_idx) = bmf.coupled();
    let p = bmf.p;
    let (ka, ks) = (a_idx.len(), s_idx.len());
    let mut gamma = DMatrix::zeros(ka * p, ks * p);
    for (&(i, j), fm) in &bmf.fij {
        let u = a_idx.binary_search(&i).unwrap();
        let v = s_idx.binary_search(&j).unwrap();
        gamma.view_mut((u * p, v * p), (p, p)).copy_from(&(fm * 0.5));
    }
    let dim = (ka + ks) * p;
    let mut m = DMatrix::zeros(dim, dim);
    m.view_mut((0, ka * p), (ka * p, ks * p)).copy_from(&gamma);
    m.view_mut((ka * p, 0), (ks * p, ka * p)).copy_from(&gamma.transpose());
    KroneckerForm { p, a_idx, s_idx, gamma, m }
}

/// `(z (x) I)^T Q (z (x) I)` for a symmetric `Q` of size `(len z) p`.
pub fn kron_quadratic(q: &DMatrix<f64>, z: &[f64], p: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(p, p);
    for (u, &zu) in z.iter().enumerate() {
        if zu == 0.0 {
            continue;
        }
        for (v, &zv) in z.iter().enumerate() {
            if zv == 0.0 {
                continue;
            }
            out += q.view((u * p, v * p), (p, p)) * (zu * zv);
        }
    }
    out
}

/// `d/dz_u (z (x) I)^T Q (z (x) I) = sum_v z_v (Q_uv + Q_vu)`.
pub fn kron_quadratic_partial(q: &DMatrix<f64>, z: &[f64], p: usize, u: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(p, p);
    for (v, &zv) in z.iter().enumerate() {
        if zv == 0.0 {
            continue;
        }
        out += (q.view((u * p, v * p), (p, p)) + q.view((v * p, u * p), (p, p))) * zv;
    }
    out
}

/// `M = M1 - M2` with both parts positive semidefinite and `N^T N = M1`.
#[derive(Clone, Debug)]
pub struct DcDecomposition {
    pub m1: DMatrix<f64>,
    pub m2: DMatrix<f64>,
    /// Square root of `M1` with one row per retained direction.
    pub n: DMatrix<f64>,
    pub method: DcMethod,
}

impl DcDecomposition {
    /// Split of the same `M` after scaling the first `head` coordinates by
    /// `1 / sqrt(kappa)` and the rest by `sqrt(kappa)`: `M1` and `M2` get
    /// their head block multiplied by `kappa` and their tail block divided by
    /// it. Valid only when `M` has zero diagonal blocks, as the Kronecker
    /// form does.
    pub fn rebalanced(&self, head: usize, kappa: f64) -> DcDecomposition {
        let dim = self.m1.nrows();
        let w = |i: usize| if i < head { kappa.sqrt() } else { 1.0 / kappa.sqrt() };
        let scale = |m: &DMatrix<f64>| DMatrix::from_fn(dim, dim, |i, j| m[(i, j)] * w(i) * w(j));
        let n = DMatrix::from_fn(self.n.nrows(), dim, |r, j| self.n[(r, j)] * w(j));
        DcDecomposition { m1: scale(&self.m1), m2: scale(&self.m2), n, method: self.method }
    }
}

/// Splits `m` into a difference of positive semidefinite matrices.
///
/// `Sdp` falls back to `Bound` when the auxiliary program fails or is too
/// large; `Bound` falls back to `Eig` when power iteration does not settle.
pub fn dc_decompose(m: &DMatrix<f64>, method: DcMethod, opts: &SolverOptions) -> DcDecomposition {
    match method {
        DcMethod::Eig => eig_split(m),
        DcMethod::Bound => bound_split(m).unwrap_or_else(|| {
            log::info!("power iteration did not converge, using eigen split");
            eig_split(m)
        }),
        DcMethod::Sdp => sdp_split(m, opts).unwrap_or_else(|| {
            log::info!("diagonal bound program failed, using eigenvalue bound");
            bound_split(m).unwrap_or_else(|| eig_split(m))
        }),
    }
}

fn eig_split(m: &DMatrix<f64>) -> DcDecomposition {
    let dim = m.nrows();
    let (vals, vecs) = sym_eig(m);
    let mut m1 = DMatrix::zeros(dim, dim);
    let mut m2 = DMatrix::zeros(dim, dim);
    let mut rows = Vec::new();
    for (k, &d) in vals.iter().enumerate() {
        let v = vecs.column(k);
        if d > EIG_CLAMP {
            m1 += v * v.transpose() * d;
            rows.push(v.transpose() * d.sqrt());
        } else if d < -EIG_CLAMP {
            m2 += v * v.transpose() * (-d);
        }
    }
    let mut n = DMatrix::zeros(rows.len(), dim);
    for (r, row) in rows.iter().enumerate() {
        n.set_row(r, row);
    }
    DcDecomposition { m1: crate::linalg::symmetrize(&m1), m2: crate::linalg::symmetrize(&m2), n, method: DcMethod::Eig }
}

/// Nonzero pattern of a symmetric matrix as row lists, for cheap products.
fn sparse_rows(m: &DMatrix<f64>) -> Vec<Vec<(usize, f64)>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).filter_map(|j| (m[(i, j)] != 0.0).then(|| (j, m[(i, j)]))).collect())
        .collect()
}

/// Largest eigenvalue by shifted power iteration, `None` without convergence.
pub fn power_iteration_max(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> Option<f64> {
    let dim = m.nrows();
    if dim == 0 {
        return Some(0.0);
    }
    let rows = sparse_rows(m);
    let shift = rows.iter().map(|r| r.iter().map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    if shift == 0.0 {
        return Some(0.0);
    }
    let mut x: Vec<f64> = (0..dim).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64 / 13.0).collect();
    let nx = crate::linalg::norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut y = vec![0.0; dim];
    let mut prev = f64::NAN;
    for _ in 0..max_iter {
        for (i, r) in rows.iter().enumerate() {
            y[i] = shift * x[i] + r.iter().map(|&(j, v)| v * x[j]).sum::<f64>();
        }
        let rho: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ny = crate::linalg::norm2(&y);
        if ny == 0.0 {
            return Some(-shift);
        }
        for i in 0..dim {
            x[i] = y[i] / ny;
        }
        if (rho - prev).abs() <= tol * rho.abs().max(1.0) {
            return Some(rho - shift);
        }
        prev = rho;
    }
    None
}

fn bound_split(m: &DMatrix<f64>) -> Option<DcDecomposition> {
    let dim = m.nrows();
    let top = power_iteration_max(m, 1e-10, 10_000)?;
    let lu = (1.01 * top).max(0.0);
    let m1 = DMatrix::identity(dim, dim) * lu;
    let m2 = &m1 - m;
    let n = if lu > 0.0 { DMatrix::identity(dim, dim) * lu.sqrt() } else { DMatrix::zeros(0, dim) };
    Some(DcDecomposition { m1, m2, n, method: DcMethod::Bound })
}

/// Largest matrix handled by the diagonal-bound program.
pub const SDP_SPLIT_MAX_DIM: usize = 400;

fn sdp_split(m: &DMatrix<f64>, opts: &SolverOptions) -> Option<DcDecomposition> {
    let dim = m.nrows();
    if dim == 0 {
        return Some(DcDecomposition { m1: m.clone(), m2: m.clone(), n: DMatrix::zeros(0, 0), method: DcMethod::Sdp });
    }
    if dim > SDP_SPLIT_MAX_DIM {
        return None;
    }
    // minimize sum c  s.t.  M - diag(c) <= 0, c >= 0
    let mut prog = ConicProgram::new(dim);
    prog.objective = vec![-1.0; dim];
    let mut blk = LmiBlock::new(dim);
    blk.constant = crate::sdp::SymSparse::from_dense(m);
    for i in 0..dim {
        blk.coeff_mut(i).add(i, i, -1.0);
        prog.linear.push(LinearIneq::lower(i, 0.0));
    }
    prog.lmis.push(blk);
    let res = solve_conic(&prog, opts);
    if !res.is_optimal() {
        return None;
    }
    let mut c: Vec<f64> = res.x.iter().map(|v| v.max(0.0)).collect();
    let mut m2 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(c.clone())) - m;
    let low = crate::linalg::min_eigenvalue(&m2);
    if low < 0.0 {
        let bump = -low + 1e-12 * (1.0 + frobenius(m));
        c.iter_mut().for_each(|v| *v += bump);
        m2 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(c.clone())) - m;
    }
    let m1 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(c));
    let n = sqrt_psd(&m1).ok()?;
    Some(DcDecomposition { m1, m2: crate::linalg::symmetrize(&m2), n, method: DcMethod::Sdp })
}

/// Returns `N` with `N^T N = m1`, one row per direction with a positive
/// eigenvalue. Diagonal input gives a diagonal-pattern root.
pub fn sqrt_psd(m1: &DMatrix<f64>) -> Result<DMatrix<f64>, DcError> {
    let dim = m1.nrows();
    let diagonal = (0..dim).all(|i| (0..dim).all(|j| i == j || m1[(i, j)] == 0.0));
    if diagonal {
        let mut rows = Vec::new();
        for i in 0..dim {
            let d = m1[(i, i)];
            if d < -EIG_CLAMP {
                return Err(DcError::Indefinite(d));
            }
            if d > 0.0 {
                rows.push((i, d.sqrt()));
            }
        }
        let mut n = DMatrix::zeros(rows.len(), dim);
        for (r, (i, v)) in rows.into_iter().enumerate() {
            n[(r, i)] = v;
        }
        return Ok(n);
    }
    let (vals, vecs) = sym_eig(m1);
    if let Some(&low) = vals.first() {
        if low < -EIG_CLAMP {
            return Err(DcError::Indefinite(low));
        }
    }
    let top = vals.last().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..dim).filter(|&k| vals[k] > 1e-14 * top.max(1e-300)).collect();
    let mut n = DMatrix::zeros(keep.len(), dim);
    for (r, &k) in keep.iter().enumerate() {
        n.set_row(r, &(vecs.column(k).transpose() * vals[k].sqrt()));
    }
    Ok(n)
}

/// Decomposition of one constraint block together with its Kronecker form.
#[derive(Clone, Debug)]
pub struct BlockSplit {
    pub kron: KroneckerForm,
    pub dc: DcDecomposition,
}

pub fn split_block(bmf: &BilinearMatrixFunction, method: DcMethod, opts: &SolverOptions) -> BlockSplit {
    let kron = to_kronecker(bmf);
    let dc = dc_decompose(&kron.m, method, opts);
    BlockSplit { kron, dc }
}

impl BlockSplit {
    /// Ratio of the root-mean-square magnitudes of the coupled `s` and `a`
    /// coordinates at `(a, s)`, clamped to `[1e-6, 1e6]`.
    pub fn balance_ratio(&self, a: &[f64], s: &[f64]) -> f64 {
        let rms = |v: &mut dyn Iterator<Item = f64>, k: usize| (v.map(|x| x * x).sum::<f64>() / k.max(1) as f64).sqrt();
        let ra = rms(&mut self.kron.a_idx.iter().map(|&i| a[i]), self.kron.a_idx.len());
        let rs = rms(&mut self.kron.s_idx.iter().map(|&j| s[j]), self.kron.s_idx.len());
        if ra <= 1e-12 || rs <= 1e-12 {
            return 1.0;
        }
        (rs / ra).clamp(1e-6, 1e6)
    }

    /// The split rebalanced for the magnitudes at `(a, s)`.
    pub fn rebalanced_at(&self, a: &[f64], s: &[f64]) -> BlockSplit {
        let head = self.kron.a_idx.len() * self.kron.p;
        BlockSplit { kron: self.kron.clone(), dc: self.dc.rebalanced(head, self.balance_ratio(a, s)) }
    }
}

/// Convex part `B+(z)` and subtracted part `B-(z)` of a block at `(a, s)`,
/// with `B+ - B- = F(a, s)`.
pub fn block_parts(bmf: &BilinearMatrixFunction, split: &BlockSplit, a: &[f64], s: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let z = split.kron.local(a, s);
    let p = bmf.p;
    let mut linear = bmf.f.clone();
    for (&i, h) in &bmf.h {
        linear += h * a[i];
    }
    for (&j, g) in &bmf.g {
        linear += g * s[j];
    }
    let plus = kron_quadratic(&split.dc.m1, &z, p) + linear;
    let minus = kron_quadratic(&split.dc.m2, &z, p);
    (plus, minus)
}
