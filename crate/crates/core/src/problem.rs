//! JSON problem files and the bundled benchmark corpus.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encode::{TemplateShape, TemplateSpec};
use crate::polyalg::{parse_polynomial, DynamicalSystem, Monomial, PolyError, Polynomial};

#[derive(Debug, thiserror::Error)]
pub enum ProblemError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("field '{field}': {source}")]
    Poly { field: String, source: PolyError },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Bounds {
    #[serde(rename = "L_a")]
    pub l_a: f64,
    #[serde(rename = "L_s")]
    pub l_s: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { l_a: 1.0, l_s: 100.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TemplateFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monomials: Option<Vec<String>>,
    #[serde(default = "yes")]
    pub include_constant: bool,
    /// Parameter-free part of the template.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<String>,
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

fn default_epsilon() -> f64 {
    1e-4
}

fn default_constant() -> f64 {
    1.0
}

/// On-disk problem description.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProblemFile {
    pub name: String,
    pub variables: Vec<String>,
    pub flow: Vec<String>,
    pub init: String,
    #[serde(rename = "unsafe")]
    pub unsafe_set: String,
    #[serde(default)]
    pub domain: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub archimedean_radius: Option<f64>,
    pub template: TemplateFile,
    #[serde(default = "one")]
    pub lie_order: usize,
    #[serde(default)]
    pub strict_last: bool,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub multiplier_degree: Option<u32>,
    #[serde(default)]
    pub sos_degree: Option<u32>,
    #[serde(default)]
    pub bounds: Bounds,
    /// Constant `c` of the initial-solution multipliers.
    #[serde(default = "default_constant")]
    pub multiplier_constant: f64,
}

/// A validated problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub name: String,
    pub system: DynamicalSystem,
    pub template: TemplateSpec,
    pub l_a: f64,
    pub l_s: f64,
    pub multiplier_constant: f64,
}

fn parse_field(field: &str, src: &str, vars: &[String]) -> Result<Polynomial, ProblemError> {
    parse_polynomial(src, vars).map_err(|source| ProblemError::Poly { field: field.to_string(), source })
}

fn parse_monomial(field: &str, src: &str, vars: &[String]) -> Result<Monomial, ProblemError> {
    let p = parse_field(field, src, vars)?;
    let mut terms = p.terms();
    match (terms.next(), terms.next()) {
        (Some((m, c)), None) if c == 1.0 => Ok(m.clone()),
        _ => Err(ProblemError::Invalid(format!("{field}: '{src}' is not a single monomial"))),
    }
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        serde_json::from_str(text).map_err(|e| ProblemError::Json { line: e.line(), column: e.column(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ProblemError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }

    pub fn validate(&self) -> Result<Problem, ProblemError> {
        let vars = &self.variables;
        if vars.is_empty() {
            return Err(ProblemError::Invalid("no variables".into()));
        }
        if self.flow.len() != vars.len() {
            return Err(ProblemError::Invalid(format!("{} flow components for {} variables", self.flow.len(), vars.len())));
        }
        let flow = self
            .flow
            .iter()
            .enumerate()
            .map(|(i, f)| parse_field(&format!("flow[{i}]"), f, vars))
            .collect::<Result<Vec<_>, _>>()?;
        let init = parse_field("init", &self.init, vars)?;
        let unsafe_set = parse_field("unsafe", &self.unsafe_set, vars)?;
        let mut system = DynamicalSystem::new(vars.clone(), flow, init, unsafe_set)
            .map_err(|source| ProblemError::Poly { field: "system".into(), source })?;
        if let Some(d) = &self.domain {
            if d.len() != vars.len() {
                return Err(ProblemError::Invalid(format!("domain has {} intervals for {} variables", d.len(), vars.len())));
            }
            if d.iter().any(|[lo, hi]| !(lo <= hi)) {
                return Err(ProblemError::Invalid("domain interval with lower > upper".into()));
            }
            system.domain = Some(d.iter().map(|&[lo, hi]| (lo, hi)).collect());
        }
        if let Some(r) = self.archimedean_radius {
            if !(r > 0.0) {
                return Err(ProblemError::Invalid("archimedean_radius must be positive".into()));
            }
        }
        system.archimedean_radius = self.archimedean_radius;
        if self.lie_order == 0 {
            return Err(ProblemError::Invalid("lie_order must be at least 1".into()));
        }
        system.lie_order = self.lie_order;
        system.strict_last = self.strict_last;

        let shape = match (&self.template.degree, &self.template.monomials) {
            (Some(d), None) => TemplateShape::MaxDegree(*d),
            (None, Some(ms)) => TemplateShape::Monomials(
                ms.iter()
                    .enumerate()
                    .map(|(i, m)| parse_monomial(&format!("template.monomials[{i}]"), m, vars))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            _ => return Err(ProblemError::Invalid("template needs exactly one of 'degree' or 'monomials'".into())),
        };
        let fixed = match &self.template.fixed {
            Some(f) => Some(parse_field("template.fixed", f, vars)?),
            None => None,
        };
        if !(self.epsilon > 0.0) {
            return Err(ProblemError::Invalid("epsilon must be positive".into()));
        }
        if let Some(d) = self.sos_degree {
            if d % 2 != 0 {
                return Err(ProblemError::Invalid(format!("sos_degree must be even, got {d}")));
            }
        }
        if !(self.bounds.l_a > 0.0 && self.bounds.l_s > 0.0) {
            return Err(ProblemError::Invalid("bounds must be positive".into()));
        }
        if !(self.multiplier_constant >= 0.0) {
            return Err(ProblemError::Invalid("multiplier_constant must be non-negative".into()));
        }
        let template = TemplateSpec {
            shape,
            include_constant: self.template.include_constant,
            fixed,
            multiplier_degree: self.multiplier_degree,
            sos_degree: self.sos_degree,
            epsilon: self.epsilon,
        };
        Ok(Problem {
            name: self.name.clone(),
            system,
            template,
            l_a: self.bounds.l_a,
            l_s: self.bounds.l_s,
            multiplier_constant: self.multiplier_constant,
        })
    }
}

/// Reads and validates a problem file.
pub fn load_problem(path: &Path) -> Result<Problem, ProblemError> {
    ProblemFile::load(path)?.validate()
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        /// The bundled benchmark files as `(name, json)`, in table order.
        pub const BUNDLED: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../benchmarks/", $name, ".json")))),*
        ];
    };
}

bundled!(
    "overview",
    "contrived",
    "lie-der",
    "lorenz",
    "lti-stable",
    "lotka-volterra",
    "clock",
    "lyapunov",
    "arch1",
    "arch2",
    "arch3",
    "arch4",
    "barr-cert1",
    "barr-cert2",
    "barr-cert3",
    "barr-cert4",
    "fitzhugh-nagumo",
    "stabilization",
    "lie-high-order",
    "raychaudhuri",
    "focus",
    "sys-bio1",
    "sys-bio2",
    "quadcopter",
);

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

pub fn bundled_file(name: &str) -> Option<ProblemFile> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, j)| ProblemFile::from_json(j).expect("bundled files parse"))
}

pub fn bundled(name: &str) -> Option<Problem> {
    bundled_file(name).map(|f| f.validate().expect("bundled files validate"))
}
