use super::param::ParamPolynomial;
use super::polynomial::Polynomial;
use super::PolyError;

/// Polynomial continuous-time system with initial and unsafe sets.
///
/// `init` and `unsafe_set` describe `{x : g(x) <= 0}`.
#[derive(Clone, Debug)]
pub struct DynamicalSystem {
    pub variables: Vec<String>,
    pub flow: Vec<Polynomial>,
    pub init: Polynomial,
    pub unsafe_set: Polynomial,
    pub domain: Option<Vec<(f64, f64)>>,
    pub archimedean_radius: Option<f64>,
    pub lie_order: usize,
    pub strict_last: bool,
}

impl DynamicalSystem {
    pub fn new(
        variables: Vec<String>,
        flow: Vec<Polynomial>,
        init: Polynomial,
        unsafe_set: Polynomial,
    ) -> Result<Self, PolyError> {
        let n = variables.len();
        if flow.len() != n {
            return Err(PolyError::DimensionMismatch { expected: n, found: flow.len() });
        }
        for p in flow.iter().chain([&init, &unsafe_set]) {
            if p.nvars() != n {
                return Err(PolyError::DimensionMismatch { expected: n, found: p.nvars() });
            }
        }
        Ok(DynamicalSystem {
            variables,
            flow,
            init,
            unsafe_set,
            domain: None,
            archimedean_radius: None,
            lie_order: 1,
            strict_last: false,
        })
    }

    pub fn nvars(&self) -> usize {
        self.variables.len()
    }

    pub fn with_domain(mut self, domain: Vec<(f64, f64)>) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn with_lie_order(mut self, n: usize) -> Self {
        self.lie_order = n;
        self
    }

    pub fn eval_flow(&self, x: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.flow) {
            *o = f.eval(x);
        }
    }
}

/// `L_f p = grad(p) . f`.
pub fn lie_derivative_once(p: &Polynomial, flow: &[Polynomial]) -> Polynomial {
    let mut out = Polynomial::zero(p.nvars());
    for (i, fi) in flow.iter().enumerate() {
        let d = p.partial_derivative(i);
        if !d.is_zero() {
            out = &out + &(&d * fi);
        }
    }
    out
}

/// `L_f^k p`; order 0 returns `p`.
pub fn lie_derivative(p: &Polynomial, flow: &[Polynomial], order: usize) -> Polynomial {
    let mut cur = p.clone();
    for _ in 0..order {
        cur = lie_derivative_once(&cur, flow);
    }
    cur
}

/// Lie derivatives `L^0 p, ..., L^order p` of a parametric polynomial.
pub fn lie_derivatives_param(p: &ParamPolynomial, flow: &[Polynomial], order: usize) -> Vec<ParamPolynomial> {
    let mut out = vec![p.clone()];
    for _ in 0..order {
        let next = out.last().unwrap().map(|q| lie_derivative_once(q, flow));
        out.push(next);
    }
    out
}

/// Result of numerically integrating the flow.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
    /// Set when the run stopped early because the state left the enlarged domain box.
    pub truncated: bool,
}

/// Classical fourth-order Runge-Kutta with `steps` steps of size `dt`.
///
/// When the domain is known, integration stops once any coordinate leaves the
/// box enlarged by ten times its width on each side.
pub fn sample_trajectory(sys: &DynamicalSystem, x0: &[f64], dt: f64, steps: usize) -> Result<Trajectory, PolyError> {
    let n = sys.nvars();
    if x0.len() != n {
        return Err(PolyError::DimensionMismatch { expected: n, found: x0.len() });
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    states.push(x.clone());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for step in 0..steps {
        sys.eval_flow(&x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        sys.eval_flow(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        sys.eval_flow(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        sys.eval_flow(&tmp, &mut k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PolyError::NonFiniteState { step: step + 1 });
        }
        if let Some(dom) = &sys.domain {
            let escaped = x.iter().zip(dom).any(|(&v, &(lo, hi))| {
                let w = hi - lo;
                v < lo - 10.0 * w || v > hi + 10.0 * w
            });
            if escaped {
                states.push(x.clone());
                return Ok(Trajectory { dt, states, truncated: true });
            }
        }
        states.push(x.clone());
    }
    Ok(Trajectory { dt, states, truncated: false })
}
