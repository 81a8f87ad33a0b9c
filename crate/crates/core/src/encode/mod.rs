//! Sum-of-squares encoding of the invariant barrier-certificate conditions
//! and their Gram-matrix form as bilinear matrix inequalities.

mod bilinear;
mod bmf;
mod gram;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use bilinear::BilinearPolynomial;
pub use bmf::{BilinearMatrixFunction, BmiProblem, ParamBox};
pub use gram::{gram_matrix, gram_to_polynomial, null_space_dimension, product_groups};

use crate::polyalg::{lie_derivatives_param, monomial_basis, DynamicalSystem, Monomial, ParamPolynomial, Polynomial};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncodeError {
    #[error("monomial with exponents {monomial:?} is not a product of basis monomials")]
    NotRepresentable { monomial: Vec<u32> },
    #[error("SOS degree {sos_degree} is smaller than the degree {needed} of {what}")]
    SosDegreeTooSmall { sos_degree: u32, needed: u32, what: String },
    #[error("SOS degree must be even, got {0}")]
    OddSosDegree(u32),
    #[error("necessary mode needs an archimedean radius")]
    MissingArchimedeanRadius,
    #[error("template has no parameters")]
    EmptyTemplate,
    #[error("template monomial has {found} variables, system has {expected}")]
    TemplateArity { expected: usize, found: usize },
    #[error("lie order must be at least 1")]
    ZeroLieOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Sufficient,
    Necessary,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sufficient" => Ok(Mode::Sufficient),
            "necessary" => Ok(Mode::Necessary),
            _ => Err(format!("unknown mode '{s}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TemplateShape {
    /// All monomials up to this degree.
    MaxDegree(u32),
    /// An explicit monomial list.
    Monomials(Vec<Monomial>),
}

/// Parametric template `B(a, x) = fixed(x) + sum_k a_k m_k(x)` and the
/// degree settings of the SOS relaxation.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateSpec {
    pub shape: TemplateShape,
    pub include_constant: bool,
    pub fixed: Option<Polynomial>,
    /// Degree of the consecution multipliers `v_ij`; derived when absent.
    pub multiplier_degree: Option<u32>,
    /// Even degree `2d` of every SOS polynomial; derived when absent.
    pub sos_degree: Option<u32>,
    pub epsilon: f64,
}

impl TemplateSpec {
    pub fn degree(d: u32) -> Self {
        TemplateSpec {
            shape: TemplateShape::MaxDegree(d),
            include_constant: true,
            fixed: None,
            multiplier_degree: None,
            sos_degree: None,
            epsilon: 1e-4,
        }
    }

    pub fn monomials(ms: Vec<Monomial>) -> Self {
        TemplateSpec { shape: TemplateShape::Monomials(ms), ..TemplateSpec::degree(0) }
    }
}

/// Meaning of an `s` parameter.
#[derive(Clone, Debug, PartialEq)]
pub enum SRole {
    /// Coefficient of `monomial` in the consecution multiplier `v_{i,j}`.
    Multiplier { order: usize, j: usize, monomial: Monomial },
    /// Entry `(row, col)` of the Gram matrix of an SOS multiplier.
    SosGram { name: String, row: usize, col: usize },
    /// Free Gram parameter of constraint `constraint`.
    GramFree { constraint: usize },
}

#[derive(Clone, Debug, Default)]
pub struct ParamRegistry {
    pub a: Vec<Monomial>,
    pub s: Vec<SRole>,
}

impl ParamRegistry {
    fn push_s(&mut self, r: SRole) -> usize {
        self.s.push(r);
        self.s.len() - 1
    }

    /// Initial multiplier vector fixing every `s` entry: each multiplier
    /// polynomial becomes the constant `c` (`v_{i,0}` and the SOS
    /// multipliers), all other coefficients and free Gram entries are zero.
    pub fn initial_multipliers(&self, c: f64) -> Vec<(usize, f64)> {
        self.s
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let v = match r {
                    SRole::Multiplier { j, monomial, .. } if *j == 0 && monomial.is_constant() => c,
                    SRole::SosGram { row: 0, col: 0, .. } => c,
                    _ => 0.0,
                };
                (k, v)
            })
            .collect()
    }

    /// Fixes every `s` entry with separate constants: `v` for the consecution
    /// multipliers `v_{i,0}`, `sigma_sep` for the separation multiplier `sigma'`
    /// and `sigma` for every other SOS multiplier.
    pub fn multipliers_with(&self, v: f64, sigma: f64, sigma_sep: f64) -> Vec<(usize, f64)> {
        self.s
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let x = match r {
                    SRole::Multiplier { j, monomial, .. } if *j == 0 && monomial.is_constant() => v,
                    SRole::SosGram { name, row: 0, col: 0 } if name == "sigma'" => sigma_sep,
                    SRole::SosGram { row: 0, col: 0, .. } => sigma,
                    _ => 0.0,
                };
                (k, x)
            })
            .collect()
    }

    /// Only the `s` entries that multiply template coefficients, fixed as in
    /// [`initial_multipliers`](Self::initial_multipliers); the SOS multipliers
    /// and free Gram entries stay free.
    pub fn coupled_multipliers(&self, c: f64) -> Vec<(usize, f64)> {
        self.initial_multipliers(c)
            .into_iter()
            .filter(|&(k, _)| matches!(self.s[k], SRole::Multiplier { .. }))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintKind {
    Initial,
    Consecution(usize),
    Separation,
    /// Gram matrix of an SOS multiplier must be positive semidefinite.
    MultiplierGram(String),
}

#[derive(Clone, Debug)]
pub enum SosBody {
    /// `h` must be SOS over the given Gram basis.
    Polynomial { h: BilinearPolynomial, basis: Vec<Monomial> },
    /// The symmetric matrix whose upper-triangle entries are these `s`
    /// parameters (row-major over `k <= l`) must be PSD.
    Gram { basis: Vec<Monomial>, params: Vec<usize> },
}

#[derive(Clone, Debug)]
pub struct SosConstraint {
    pub label: String,
    pub kind: ConstraintKind,
    pub body: SosBody,
    /// Constant used by the initial-solution heuristic for this constraint.
    pub multiplier_constant: f64,
}

/// Full encoding of a synthesis problem.
#[derive(Clone, Debug)]
pub struct Encoding {
    pub template: ParamPolynomial,
    pub lie: Vec<ParamPolynomial>,
    pub constraints: Vec<SosConstraint>,
    pub registry: ParamRegistry,
    pub problem: BmiProblem,
    pub sos_degree: u32,
    pub mode: Mode,
    pub epsilon: f64,
}

impl Encoding {
    pub fn certificate(&self, a: &[f64]) -> Polynomial {
        self.template.instantiate(a)
    }
}

/// Template polynomial and its parameter monomials.
pub fn build_template(sys: &DynamicalSystem, spec: &TemplateSpec) -> Result<(ParamPolynomial, Vec<Monomial>), EncodeError> {
    let n = sys.nvars();
    let mut monos = match &spec.shape {
        TemplateShape::MaxDegree(d) => monomial_basis(n, *d),
        TemplateShape::Monomials(ms) => ms.clone(),
    };
    for m in &monos {
        if m.nvars() != n {
            return Err(EncodeError::TemplateArity { expected: n, found: m.nvars() });
        }
    }
    if !spec.include_constant {
        monos.retain(|m| !m.is_constant());
    }
    if monos.is_empty() {
        return Err(EncodeError::EmptyTemplate);
    }
    let mut t = ParamPolynomial::from_constant(spec.fixed.clone().unwrap_or_else(|| Polynomial::zero(n)));
    for (k, m) in monos.iter().enumerate() {
        t.add_param_term(k, &Polynomial::monomial(m.clone(), 1.0));
    }
    Ok((t, monos))
}

fn largest_even_at_most(v: i64) -> Option<u32> {
    if v < 0 {
        None
    } else {
        Some((v - v % 2) as u32)
    }
}

/// SOS multiplier of degree `2e` represented by its Gram matrix over the
/// monomials up to `e`; returns the polynomial and the PSD constraint.
fn sos_multiplier(
    reg: &mut ParamRegistry,
    name: &str,
    nvars: usize,
    degree: u32,
) -> (ParamPolynomial, Vec<Monomial>, Vec<usize>) {
    let basis = monomial_basis(nvars, degree / 2);
    let mut poly = ParamPolynomial::zero(nvars);
    let mut params = Vec::new();
    for k in 0..basis.len() {
        for l in k..basis.len() {
            let idx = reg.push_s(SRole::SosGram { name: name.to_string(), row: k, col: l });
            let w = if k == l { 1.0 } else { 2.0 };
            poly.add_param_term(idx, &Polynomial::monomial(basis[k].mul(&basis[l]), w));
            params.push(idx);
        }
    }
    (poly, basis, params)
}

/// Builds the SOS constraint list.
///
/// Sufficient mode:
/// 1. `-B + sigma I`
/// 2. `-L^i B + sum_{j<i} v_ij L^j B` for `i = 1..N` (minus `eps` on the last when `strict_last`)
/// 3. `B + sigma' U - eps`
///
/// Necessary mode adds `rho (|x|^2 - L^2)` terms and `eps` on the first two families.
pub fn build_constraints(
    sys: &DynamicalSystem,
    spec: &TemplateSpec,
    mode: Mode,
) -> Result<(ParamPolynomial, Vec<ParamPolynomial>, Vec<SosConstraint>, ParamRegistry, u32), EncodeError> {
    let n = sys.nvars();
    let order = sys.lie_order;
    if order == 0 {
        return Err(EncodeError::ZeroLieOrder);
    }
    let (template, monos) = build_template(sys, spec)?;
    let lie = lie_derivatives_param(&template, &sys.flow, order);
    let eps = spec.epsilon;

    let deg_b = template.degree();
    let deg_i = sys.init.degree();
    let deg_u = sys.unsafe_set.degree();
    let mut needed = deg_b.max(deg_i).max(deg_u);
    for l in &lie[1..] {
        needed = needed.max(l.degree());
    }
    if mode == Mode::Necessary {
        needed = needed.max(2);
    }
    let sos_degree = match spec.sos_degree {
        Some(d) if d % 2 == 1 => return Err(EncodeError::OddSosDegree(d)),
        Some(d) => {
            if d < needed {
                return Err(EncodeError::SosDegreeTooSmall { sos_degree: d, needed, what: "the constraint data".into() });
            }
            d
        }
        None => needed + needed % 2,
    };
    let basis = monomial_basis(n, sos_degree / 2);
    let mut reg = ParamRegistry { a: monos, s: Vec::new() };
    let mut cons = Vec::new();

    let ball = if mode == Mode::Necessary {
        let r = sys.archimedean_radius.ok_or(EncodeError::MissingArchimedeanRadius)?;
        let mut q = Polynomial::constant(n, -r * r);
        for i in 0..n {
            q = &q + &Polynomial::var(n, i).pow(2);
        }
        Some(q)
    } else {
        None
    };
    let rho_degree = largest_even_at_most(sos_degree as i64 - 2).unwrap_or(0);
    let add_rho = |reg: &mut ParamRegistry, cons_gram: &mut Vec<SosConstraint>, h: &mut BilinearPolynomial, name: String| {
        if let Some(q) = &ball {
            let (rho, rb, params) = sos_multiplier(reg, &name, n, rho_degree);
            h.add_scaled(&BilinearPolynomial::from_s(&rho.mul_poly(q)), 1.0);
            cons_gram.push(SosConstraint {
                label: format!("{name} gram"),
                kind: ConstraintKind::MultiplierGram(name),
                body: SosBody::Gram { basis: rb, params },
                multiplier_constant: 0.0,
            });
        }
    };
    let mut grams = Vec::new();

    // initial condition
    let sigma_deg = largest_even_at_most(sos_degree as i64 - deg_i as i64).ok_or(EncodeError::SosDegreeTooSmall {
        sos_degree,
        needed: deg_i,
        what: "the initial set".into(),
    })?;
    let (sigma, sb, sp) = sos_multiplier(&mut reg, "sigma", n, sigma_deg);
    let mut h1 = BilinearPolynomial::from_a(&template.scale(-1.0));
    h1.add_scaled(&BilinearPolynomial::from_s(&sigma.mul_poly(&sys.init)), 1.0);
    add_rho(&mut reg, &mut grams, &mut h1, "rho".into());
    if mode == Mode::Necessary {
        h1.add_constant(&Polynomial::constant(n, eps));
    }
    grams.push(SosConstraint {
        label: "sigma gram".into(),
        kind: ConstraintKind::MultiplierGram("sigma".into()),
        body: SosBody::Gram { basis: sb, params: sp },
        multiplier_constant: 0.0,
    });
    cons.push(SosConstraint {
        label: "initial".into(),
        kind: ConstraintKind::Initial,
        body: SosBody::Polynomial { h: h1, basis: basis.clone() },
        multiplier_constant: 0.0,
    });

    // consecution
    for i in 1..=order {
        let mut h = BilinearPolynomial::from_a(&lie[i].scale(-1.0));
        for (j, lj) in lie.iter().enumerate().take(i) {
            let room = sos_degree as i64 - lj.degree() as i64;
            let vdeg = match spec.multiplier_degree {
                Some(d) if (d as i64) > room => {
                    return Err(EncodeError::SosDegreeTooSmall {
                        sos_degree,
                        needed: d + lj.degree(),
                        what: format!("v_{i}{j} * L^{j} B"),
                    })
                }
                Some(d) => d,
                None => room.max(0) as u32,
            };
            let mut v = ParamPolynomial::zero(n);
            for mono in monomial_basis(n, vdeg) {
                let idx = reg.push_s(SRole::Multiplier { order: i, j, monomial: mono.clone() });
                v.add_param_term(idx, &Polynomial::monomial(mono, 1.0));
            }
            h.add_scaled(&BilinearPolynomial::product(&v, lj), 1.0);
        }
        add_rho(&mut reg, &mut grams, &mut h, format!("rho''_{i}"));
        if mode == Mode::Necessary {
            h.add_constant(&Polynomial::constant(n, eps));
        } else if sys.strict_last && i == order {
            h.add_constant(&Polynomial::constant(n, -eps));
        }
        cons.push(SosConstraint {
            label: format!("consecution {i}"),
            kind: ConstraintKind::Consecution(i),
            body: SosBody::Polynomial { h, basis: basis.clone() },
            multiplier_constant: 1.0,
        });
    }

    // separation
    let sigma2_deg = largest_even_at_most(sos_degree as i64 - deg_u as i64).ok_or(EncodeError::SosDegreeTooSmall {
        sos_degree,
        needed: deg_u,
        what: "the unsafe set".into(),
    })?;
    let (sigma2, sb2, sp2) = sos_multiplier(&mut reg, "sigma'", n, sigma2_deg);
    let mut h3 = BilinearPolynomial::from_a(&template);
    h3.add_scaled(&BilinearPolynomial::from_s(&sigma2.mul_poly(&sys.unsafe_set)), 1.0);
    add_rho(&mut reg, &mut grams, &mut h3, "rho'".into());
    if mode == Mode::Sufficient {
        h3.add_constant(&Polynomial::constant(n, -eps));
    }
    grams.push(SosConstraint {
        label: "sigma' gram".into(),
        kind: ConstraintKind::MultiplierGram("sigma'".into()),
        body: SosBody::Gram { basis: sb2, params: sp2 },
        multiplier_constant: 0.0,
    });
    cons.push(SosConstraint {
        label: "separation".into(),
        kind: ConstraintKind::Separation,
        body: SosBody::Polynomial { h: h3, basis },
        multiplier_constant: 0.0,
    });

    for c in &cons {
        if let SosBody::Polynomial { h, .. } = &c.body {
            if h.degree() > sos_degree {
                return Err(EncodeError::SosDegreeTooSmall { sos_degree, needed: h.degree(), what: c.label.clone() });
            }
        }
    }
    cons.extend(grams);
    Ok((template, lie, cons, reg, sos_degree))
}

/// Matrix function `-S` for a Gram matrix whose entries are `s` parameters.
fn gram_block(basis_len: usize, params: &[usize]) -> BilinearMatrixFunction {
    let mut bmf = BilinearMatrixFunction::zero(basis_len);
    let mut it = params.iter();
    for k in 0..basis_len {
        for l in k..basis_len {
            let idx = *it.next().expect("gram parameter count");
            let mut e = DMatrix::zeros(basis_len, basis_len);
            e[(k, l)] = -1.0;
            e[(l, k)] = -1.0;
            bmf.add_g(idx, &e);
        }
    }
    bmf
}

/// Encodes a synthesis problem as a BMI.
pub fn encode(
    sys: &DynamicalSystem,
    spec: &TemplateSpec,
    mode: Mode,
    l_a: f64,
    l_s: f64,
) -> Result<Encoding, EncodeError> {
    let (template, lie, constraints, mut registry, sos_degree) = build_constraints(sys, spec, mode)?;
    let m = registry.a.len();
    let mut blocks = Vec::new();
    let mut labels = Vec::new();
    for (ci, c) in constraints.iter().enumerate() {
        let bmf = match &c.body {
            SosBody::Polynomial { h, basis } => {
                let n0 = registry.s.len();
                let (bmf, free) = gram_matrix(h, basis, n0)?;
                for _ in 0..free {
                    registry.push_s(SRole::GramFree { constraint: ci });
                }
                bmf
            }
            SosBody::Gram { basis, params } => gram_block(basis.len(), params),
        };
        blocks.push(bmf);
        labels.push(c.label.clone());
    }
    let problem = BmiProblem {
        m,
        n: registry.s.len(),
        constraints: blocks,
        labels,
        l_a,
        l_s,
        a_box: None,
    };
    Ok(Encoding { template, lie, constraints, registry, problem, sos_degree, mode, epsilon: spec.epsilon })
}

/// Smallest eigenvalue of the Gram matrix `Q = -F(a, s)` of every constraint.
pub fn check_sos_solution(problem: &BmiProblem, a: &[f64], s: &[f64]) -> Vec<(String, f64)> {
    problem
        .constraints
        .iter()
        .zip(&problem.labels)
        .map(|(c, l)| (l.clone(), crate::linalg::min_eigenvalue(&(-c.evaluate(a, s)))))
        .collect()
}

/// True when every Gram matrix has smallest eigenvalue at least `-tol`.
pub fn sos_solution_passes(problem: &BmiProblem, a: &[f64], s: &[f64], tol: f64) -> bool {
    check_sos_solution(problem, a, s).iter().all(|(_, e)| *e >= -tol)
}
