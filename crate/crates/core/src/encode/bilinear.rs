use std::collections::BTreeMap;

use crate::polyalg::{ParamPolynomial, Polynomial};

/// Polynomial in `x` whose coefficients are bilinear in two parameter
/// vectors `a` (template) and `s` (multipliers):
/// `h = c(x) + sum a_i h_i(x) + sum s_j g_j(x) + sum a_i s_j k_ij(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearPolynomial {
    pub constant: Polynomial,
    pub a: BTreeMap<usize, Polynomial>,
    pub s: BTreeMap<usize, Polynomial>,
    pub as_: BTreeMap<(usize, usize), Polynomial>,
}

fn accumulate<K: Ord + Copy>(map: &mut BTreeMap<K, Polynomial>, k: K, p: &Polynomial, scale: f64) {
    if p.is_zero() {
        return;
    }
    let cur = map.remove(&k).unwrap_or_else(|| Polynomial::zero(p.nvars()));
    let next = &cur + &p.scale(scale);
    if !next.is_zero() {
        map.insert(k, next);
    }
}

impl BilinearPolynomial {
    pub fn zero(nvars: usize) -> Self {
        BilinearPolynomial {
            constant: Polynomial::zero(nvars),
            a: BTreeMap::new(),
            s: BTreeMap::new(),
            as_: BTreeMap::new(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.constant.nvars()
    }

    /// Embeds a polynomial affine in `a`.
    pub fn from_a(p: &ParamPolynomial) -> Self {
        let mut out = BilinearPolynomial::zero(p.nvars());
        out.constant = p.constant.clone();
        out.a = p.terms.clone();
        out
    }

    /// Embeds a polynomial affine in `s`.
    pub fn from_s(p: &ParamPolynomial) -> Self {
        let mut out = BilinearPolynomial::zero(p.nvars());
        out.constant = p.constant.clone();
        out.s = p.terms.clone();
        out
    }

    /// Product of a polynomial affine in `s` with one affine in `a`.
    pub fn product(s_poly: &ParamPolynomial, a_poly: &ParamPolynomial) -> Self {
        let n = s_poly.nvars();
        let mut out = BilinearPolynomial::zero(n);
        out.constant = &s_poly.constant * &a_poly.constant;
        for (&i, pa) in &a_poly.terms {
            accumulate(&mut out.a, i, &(&s_poly.constant * pa), 1.0);
        }
        for (&j, ps) in &s_poly.terms {
            accumulate(&mut out.s, j, &(ps * &a_poly.constant), 1.0);
            for (&i, pa) in &a_poly.terms {
                accumulate(&mut out.as_, (i, j), &(ps * pa), 1.0);
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &BilinearPolynomial, c: f64) {
        self.constant = &self.constant + &other.constant.scale(c);
        for (&k, p) in &other.a {
            accumulate(&mut self.a, k, p, c);
        }
        for (&k, p) in &other.s {
            accumulate(&mut self.s, k, p, c);
        }
        for (&k, p) in &other.as_ {
            accumulate(&mut self.as_, k, p, c);
        }
    }

    pub fn add_constant(&mut self, p: &Polynomial) {
        self.constant = &self.constant + p;
    }

    pub fn degree(&self) -> u32 {
        self.a
            .values()
            .chain(self.s.values())
            .chain(self.as_.values())
            .map(Polynomial::degree)
            .chain(std::iter::once(self.constant.degree()))
            .max()
            .unwrap_or(0)
    }

    /// The polynomial obtained by fixing both parameter vectors.
    pub fn instantiate(&self, a: &[f64], s: &[f64]) -> Polynomial {
        let mut out = self.constant.clone();
        for (&i, p) in &self.a {
            out = &out + &p.scale(a[i]);
        }
        for (&j, p) in &self.s {
            out = &out + &p.scale(s[j]);
        }
        for (&(i, j), p) in &self.as_ {
            out = &out + &p.scale(a[i] * s[j]);
        }
        out
    }

    /// All monomials appearing in any component.
    pub fn support(&self) -> std::collections::BTreeSet<crate::polyalg::Monomial> {
        let mut out = std::collections::BTreeSet::new();
        for p in std::iter::once(&self.constant)
            .chain(self.a.values())
            .chain(self.s.values())
            .chain(self.as_.values())
        {
            for (m, _) in p.terms() {
                out.insert(m.clone());
            }
        }
        out
    }
}
