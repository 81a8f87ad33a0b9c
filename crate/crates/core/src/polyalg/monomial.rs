use std::cmp::Ordering;
use std::fmt;

/// Exponent vector over a fixed, ordered variable list.
///
/// Ordering is graded lexicographic: lower total degree first, then the
/// exponent of the first variable decides (larger exponent first).
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Monomial {
    exps: Vec<u32>,
}

impl Monomial {
    pub fn new(exps: Vec<u32>) -> Self {
        Monomial { exps }
    }

    pub fn one(nvars: usize) -> Self {
        Monomial { exps: vec![0; nvars] }
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut exps = vec![0; nvars];
        exps[i] = 1;
        Monomial { exps }
    }

    pub fn nvars(&self) -> usize {
        self.exps.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exps
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.exps.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.nvars(), other.nvars());
        Monomial {
            exps: self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn pow(&self, k: u32) -> Monomial {
        Monomial {
            exps: self.exps.iter().map(|e| e * k).collect(),
        }
    }

    /// Derivative with respect to variable `i`: returns the multiplicity and
    /// the lowered monomial, or `None` when the variable is absent.
    pub fn derivative(&self, i: usize) -> Option<(u32, Monomial)> {
        let e = self.exps[i];
        if e == 0 {
            return None;
        }
        let mut exps = self.exps.clone();
        exps[i] -= 1;
        Some((e, Monomial { exps }))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = 1.0;
        for (xi, &e) in x.iter().zip(&self.exps) {
            if e > 0 {
                v *= xi.powi(e as i32);
            }
        }
        v
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> MonomialDisplay<'a> {
        MonomialDisplay { m: self, names }
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub struct MonomialDisplay<'a> {
    m: &'a Monomial,
    names: &'a [String],
}

impl fmt::Display for MonomialDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.m.is_constant() {
            return write!(f, "1");
        }
        let mut first = true;
        for (i, &e) in self.m.exps.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            write!(f, "{}", self.names[i])?;
            if e > 1 {
                write!(f, "^{e}")?;
            }
        }
        Ok(())
    }
}

/// All monomials in `n` variables of total degree at most `d`, in graded
/// lexicographic order. The count is `C(n + d, n)`.
pub fn monomial_basis(n: usize, d: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    for deg in 0..=d {
        let mut cur = vec![0u32; n];
        homogeneous(n, deg, 0, &mut cur, &mut out);
    }
    out
}

fn homogeneous(n: usize, deg: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Monomial>) {
    if n == 0 {
        if deg == 0 {
            out.push(Monomial::new(Vec::new()));
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = deg;
        out.push(Monomial::new(cur.clone()));
        cur[pos] = 0;
        return;
    }
    for e in (0..=deg).rev() {
        cur[pos] = e;
        homogeneous(n, deg - e, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// Monomials of total degree exactly `d`, in graded lexicographic order.
pub fn homogeneous_monomials(n: usize, d: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; n];
    homogeneous(n, d, 0, &mut cur, &mut out);
    out
}
