use std::collections::BTreeMap;

use super::polynomial::Polynomial;

/// Polynomial in `x` whose coefficients are affine in a parameter vector:
/// `p(a, x) = p0(x) + sum_k a_k p_k(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamPolynomial {
    pub constant: Polynomial,
    pub terms: BTreeMap<usize, Polynomial>,
}

impl ParamPolynomial {
    pub fn zero(nvars: usize) -> Self {
        ParamPolynomial { constant: Polynomial::zero(nvars), terms: BTreeMap::new() }
    }

    pub fn from_constant(p: Polynomial) -> Self {
        ParamPolynomial { constant: p, terms: BTreeMap::new() }
    }

    /// `a_k * p`.
    pub fn param_term(k: usize, p: Polynomial) -> Self {
        let mut out = ParamPolynomial::zero(p.nvars());
        out.add_param_term(k, &p);
        out
    }

    pub fn nvars(&self) -> usize {
        self.constant.nvars()
    }

    pub fn add_param_term(&mut self, k: usize, p: &Polynomial) {
        let cur = self.terms.remove(&k).unwrap_or_else(|| Polynomial::zero(p.nvars()));
        let next = &cur + p;
        if !next.is_zero() {
            self.terms.insert(k, next);
        }
    }

    pub fn add(&self, other: &ParamPolynomial) -> ParamPolynomial {
        let mut out = self.clone();
        out.constant = &out.constant + &other.constant;
        for (&k, p) in &other.terms {
            out.add_param_term(k, p);
        }
        out
    }

    pub fn scale(&self, c: f64) -> ParamPolynomial {
        ParamPolynomial {
            constant: self.constant.scale(c),
            terms: self
                .terms
                .iter()
                .map(|(&k, p)| (k, p.scale(c)))
                .filter(|(_, p)| !p.is_zero())
                .collect(),
        }
    }

    pub fn mul_poly(&self, q: &Polynomial) -> ParamPolynomial {
        ParamPolynomial {
            constant: &self.constant * q,
            terms: self
                .terms
                .iter()
                .map(|(&k, p)| (k, p * q))
                .filter(|(_, p)| !p.is_zero())
                .collect(),
        }
    }

    /// Applies a linear map on polynomials componentwise.
    pub fn map(&self, f: impl Fn(&Polynomial) -> Polynomial) -> ParamPolynomial {
        ParamPolynomial {
            constant: f(&self.constant),
            terms: self
                .terms
                .iter()
                .map(|(&k, p)| (k, f(p)))
                .filter(|(_, p)| !p.is_zero())
                .collect(),
        }
    }

    /// Total degree in `x` over all components.
    pub fn degree(&self) -> u32 {
        self.terms
            .values()
            .map(Polynomial::degree)
            .chain(std::iter::once(self.constant.degree()))
            .max()
            .unwrap_or(0)
    }

    pub fn instantiate(&self, params: &[f64]) -> Polynomial {
        let mut out = self.constant.clone();
        for (&k, p) in &self.terms {
            out = &out + &p.scale(params[k]);
        }
        out
    }

    pub fn eval(&self, params: &[f64], x: &[f64]) -> f64 {
        self.constant.eval(x) + self.terms.iter().map(|(&k, p)| params[k] * p.eval(x)).sum::<f64>()
    }
}
