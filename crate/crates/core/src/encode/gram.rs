use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::bilinear::BilinearPolynomial;
use super::bmf::BilinearMatrixFunction;
use super::EncodeError;
use crate::polyalg::{Monomial, Polynomial};

/// Index pairs `(k, l)`, `k <= l`, grouped by the product `b_k b_l`.
///
/// Within each group the first pair is the representative: a diagonal pair
/// when one exists, otherwise the lexicographically smallest.
pub fn product_groups(basis: &[Monomial]) -> BTreeMap<Monomial, Vec<(usize, usize)>> {
    let mut groups: BTreeMap<Monomial, Vec<(usize, usize)>> = BTreeMap::new();
    for l in 0..basis.len() {
        for k in 0..=l {
            groups.entry(basis[k].mul(&basis[l])).or_default().push((k, l));
        }
    }
    for pairs in groups.values_mut() {
        pairs.sort_by_key(|&(k, l)| (k != l, k, l));
    }
    groups
}

/// Symmetric matrix `E` with `b^T E b = mu` for the pair `(k, l)`.
fn unit(p: usize, k: usize, l: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(p, p);
    if k == l {
        e[(k, k)] = 1.0;
    } else {
        e[(k, l)] = 0.5;
        e[(l, k)] = 0.5;
    }
    e
}

/// Number of free Gram parameters for `basis`: symmetric entries minus
/// distinct products.
pub fn null_space_dimension(basis: &[Monomial]) -> usize {
    let p = basis.len();
    p * (p + 1) / 2 - product_groups(basis).len()
}

/// Gram representation `h = b^T Q b` of a bilinear polynomial.
///
/// Returns the matrix function for `F = -Q` together with the number of
/// free Gram parameters, which are numbered `n0, n0 + 1, ...` in `s`.
pub fn gram_matrix(
    h: &BilinearPolynomial,
    basis: &[Monomial],
    n0: usize,
) -> Result<(BilinearMatrixFunction, usize), EncodeError> {
    let p = basis.len();
    let groups = product_groups(basis);
    for m in h.support() {
        if !groups.contains_key(&m) {
            return Err(EncodeError::NotRepresentable { monomial: m.exponents().to_vec() });
        }
    }
    let mut bmf = BilinearMatrixFunction::zero(p);
    let mut free = 0usize;
    let coeff_of = |poly: &Polynomial, m: &Monomial| poly.coefficient(m);
    for (mono, pairs) in &groups {
        let (k, l) = pairs[0];
        let e = unit(p, k, l);
        let c = coeff_of(&h.constant, mono);
        if c != 0.0 {
            bmf.f -= &e * c;
        }
        for (&i, poly) in &h.a {
            let c = coeff_of(poly, mono);
            if c != 0.0 {
                bmf.add_h(i, &(&e * -c));
            }
        }
        for (&j, poly) in &h.s {
            let c = coeff_of(poly, mono);
            if c != 0.0 {
                bmf.add_g(j, &(&e * -c));
            }
        }
        for (&(i, j), poly) in &h.as_ {
            let c = coeff_of(poly, mono);
            if c != 0.0 {
                bmf.add_fij(i, j, &(&e * -c));
            }
        }
        for &(k2, l2) in &pairs[1..] {
            let dir = &e - unit(p, k2, l2);
            bmf.add_g(n0 + free, &(-dir));
            free += 1;
        }
    }
    bmf.prune();
    Ok((bmf, free))
}

/// `b^T Q b` expanded back into a polynomial.
pub fn gram_to_polynomial(q: &DMatrix<f64>, basis: &[Monomial]) -> Polynomial {
    let nv = basis.first().map(Monomial::nvars).unwrap_or(0);
    let mut out = Polynomial::zero(nv);
    for k in 0..basis.len() {
        for l in 0..basis.len() {
            out.add_term(basis[k].mul(&basis[l]), q[(k, l)]);
        }
    }
    out
}
