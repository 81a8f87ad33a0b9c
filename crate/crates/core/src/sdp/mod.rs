//! Conic programs (LMI, second-order cone, linear), the embedded
//! interior-point backend and SDPA sparse-format I/O.

mod embedded;
mod program;
mod sdpa;

use std::path::PathBuf;

pub use embedded::solve_embedded;
pub use program::{AffineExpr, ConicProgram, LinearIneq, LmiBlock, SocConstraint, SymSparse};
pub use sdpa::{export_sdpa, parse_sdpa, parse_sdpa_result, solve_external, SdpaResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalLimit,
}

#[derive(Clone, Debug)]
pub struct SolverResult {
    pub status: SolverStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Largest constraint violation of `x`, measured independently of the backend.
    pub violation: f64,
    pub iterations: usize,
}

impl SolverResult {
    pub fn failed(n: usize) -> Self {
        SolverResult {
            status: SolverStatus::NumericalLimit,
            x: vec![f64::NAN; n],
            objective: f64::NAN,
            violation: f64::INFINITY,
            iterations: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolverStatus::Optimal
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SdpError {
    #[error("second-order cone constraints cannot be written in SDPA format")]
    SocNotSupported,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("SDPA parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("external solver failed: {0}")]
    Backend(String),
}

/// Which engine solves conic programs.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Backend {
    #[default]
    Embedded,
    /// External SDPA-compatible binary invoked as `binary input output`.
    Sdpa(PathBuf),
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "embedded" {
            Ok(Backend::Embedded)
        } else if let Some(p) = s.strip_prefix("sdpa:") {
            if p.is_empty() {
                Err("sdpa backend needs a binary path".into())
            } else {
                Ok(Backend::Sdpa(PathBuf::from(p)))
            }
        } else {
            Err(format!("unknown backend '{s}' (expected 'embedded' or 'sdpa:<path>')"))
        }
    }
}

/// Solver settings shared by every conic solve.
#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub backend: Backend,
    /// When set, every program is also written here in SDPA format.
    pub emit_dir: Option<PathBuf>,
    /// Skip the independent violation measurement for LMI blocks larger than this.
    pub violation_check_max_dim: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-8, backend: Backend::Embedded, emit_dir: None, violation_check_max_dim: 600 }
    }
}

static EMIT_COUNTER: std::sync::atomic::AtomicUsize = std::sync::atomic::AtomicUsize::new(0);

/// Solves `prog` (maximization) and reports an independently measured violation.
///
/// An `Optimal` status is downgraded to `NumericalLimit` when the measured
/// violation exceeds the tolerance scaled by the data magnitude.
pub fn solve_conic(prog: &ConicProgram, opts: &SolverOptions) -> SolverResult {
    if let Some(dir) = &opts.emit_dir {
        let k = EMIT_COUNTER.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let path = dir.join(format!("program_{k:05}.dat-s"));
        let lmi_form = prog.socs_as_lmis();
        if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, export_sdpa(&lmi_form).unwrap_or_default())) {
            log::warn!("could not write {}: {e}", path.display());
        }
    }
    let mut res = match &opts.backend {
        Backend::Embedded => solve_embedded(prog, opts.tol),
        Backend::Sdpa(bin) => match solve_external(prog, bin) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{e}");
                SolverResult::failed(prog.nvars)
            }
        },
    };
    if res.x.iter().all(|v| v.is_finite()) {
        let large = prog.lmis.iter().any(|b| b.dim > opts.violation_check_max_dim);
        res.violation = if large { 0.0 } else { prog.violation(&res.x) };
        if res.is_optimal() {
            let scale = 1.0 + res.x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if res.violation > 1e3 * opts.tol * scale {
                res.status = SolverStatus::NumericalLimit;
            }
        }
    } else {
        res.violation = f64::INFINITY;
        if res.is_optimal() {
            res.status = SolverStatus::NumericalLimit;
        }
    }
    res
}
