//! End-to-end synthesis: encode, initial LMI, DC iteration, posterior check.

use std::time::Instant;

use serde::Serialize;

use crate::bnb::{branch_and_bound, BnbConfig, BnbOutcome, BnbStats};
use crate::dcp::{bmi_dc_with, initial_solution, initial_solution_fixed, DcpConfig, IterationTrace, Solution, Termination};
use crate::encode::{encode, sos_solution_passes, EncodeError, Encoding, Mode};
use crate::polyalg::Polynomial;
use crate::problem::Problem;
use crate::verify::{check_certificate, CheckConfig, Verdict};

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub mode: Mode,
    pub dcp: DcpConfig,
    pub check: CheckConfig,
    /// Run the sampling check on every iterate with this many points (0 disables).
    pub iterate_samples: usize,
    /// Try the multiplier-constant schedule when the default initial
    /// solution is not valid.
    pub multiplier_search: bool,
    pub bnb: Option<BnbConfig>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            mode: Mode::Sufficient,
            dcp: DcpConfig::default(),
            check: CheckConfig::default(),
            iterate_samples: 0,
            multiplier_search: true,
            bnb: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Initial(#[from] crate::dcp::DcpError),
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthReport {
    pub name: String,
    pub a: Vec<f64>,
    #[serde(skip)]
    pub certificate: Polynomial,
    pub certificate_text: String,
    pub iterations: usize,
    pub lambda: f64,
    pub termination: Option<Termination>,
    pub verdict: Verdict,
    pub caveats: Vec<String>,
    /// Whether the final `(a, s)` satisfies all Gram constraints to 1e-6.
    pub sos_feasible: bool,
    pub objectives: Vec<f64>,
    /// Multiplier constants `(v, sigma, sigma')` of the initial solution.
    pub initial_constants: Option<(f64, f64, f64)>,
    pub bnb: Option<BnbStats>,
    pub seconds: f64,
}

impl SynthReport {
    /// Process exit code: 0 valid, 2 refuted, 3 inconclusive.
    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            Verdict::Valid => 0,
            Verdict::Refuted { .. } => 2,
            Verdict::Inconclusive { .. } => 3,
        }
    }
}

/// Encodes `problem` under `cfg.mode`.
pub fn encode_problem(problem: &Problem, mode: Mode) -> Result<Encoding, EncodeError> {
    let mut spec = problem.template.clone();
    if spec.epsilon <= 0.0 {
        spec.epsilon = 1e-4;
    }
    encode(&problem.system, &spec, mode, problem.l_a, problem.l_s)
}

fn iterate_config(cfg: &SynthConfig) -> Option<CheckConfig> {
    if cfg.iterate_samples == 0 {
        return None;
    }
    Some(CheckConfig {
        n_points: cfg.iterate_samples,
        n_targeted: (cfg.iterate_samples / 25).max(200),
        ..cfg.check.clone()
    })
}

/// Constants `(v, sigma, sigma')` tried for the initial LMI after the
/// default `c` everywhere.
pub fn multiplier_schedule(c: f64) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for v in [c, 0.0, -c] {
        for (sg, sp) in [(c, c), (c / 10.0, c / 10.0), (c / 100.0, c / 100.0), (c, 0.0), (c / 10.0, 0.0), (c / 100.0, 0.0)] {
            if (v, sg, sp) != (c, c, c) {
                out.push((v, sg, sp));
            }
        }
    }
    out
}

/// Result of the DC stage.
pub struct DcpRun {
    pub trace: IterationTrace,
    /// Constants `(v, sigma, sigma')` of the initial solution.
    pub constants: (f64, f64, f64),
}

/// `lambda / |a|`, comparable across template scalings.
fn relative_lambda(z: &Solution) -> f64 {
    let na = z.a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na > 0.0 {
        z.lambda / na
    } else {
        f64::NEG_INFINITY
    }
}

fn zero_iteration(enc: &Encoding, z0: Solution) -> IterationTrace {
    IterationTrace {
        residuals: vec![enc.problem.residual(z0.lambda, &z0.a, &z0.s)],
        objectives: vec![z0.lambda],
        solutions: vec![z0],
        reason: Termination::Accepted,
        seconds: 0.0,
    }
}

/// Checks the initial LMI solution and, failing that, the multiplier
/// schedule; then runs the DC iteration from the start with the best
/// `lambda / |a|` (the earliest within 10% of the best).
/// With `iterate_samples > 0` every iterate is also sampled and the first
/// valid one stops the run.
pub fn run_dcp(enc: &Encoding, problem: &Problem, cfg: &SynthConfig) -> Result<DcpRun, SynthError> {
    let c = problem.multiplier_constant;
    let sys = &problem.system;
    let valid = |z: &Solution| check_certificate(sys, &enc.certificate(&z.a), &cfg.check).verdict.is_valid();
    let z0 = initial_solution(&enc.problem, &enc.registry, c, &cfg.dcp.solver)?;
    if valid(&z0) {
        return Ok(DcpRun { trace: zero_iteration(enc, z0), constants: (c, c, c) });
    }
    let mut starts = vec![(relative_lambda(&z0), z0, (c, c, c))];
    if cfg.multiplier_search {
        for (v, sg, sp) in multiplier_schedule(c) {
            let fixed = enc.registry.multipliers_with(v, sg, sp);
            if let Ok(z) = initial_solution_fixed(&enc.problem, &fixed, &cfg.dcp.solver) {
                if valid(&z) {
                    return Ok(DcpRun { trace: zero_iteration(enc, z), constants: (v, sg, sp) });
                }
                starts.push((relative_lambda(&z), z, (v, sg, sp)));
            }
        }
    }
    let best = starts.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let pick = starts.iter().position(|s| s.0 >= best - 0.1 * best.abs()).unwrap_or(0);
    let (_, z0, constants) = starts.swap_remove(pick);
    let quick = iterate_config(cfg);
    let accept = |_k: usize, z: &Solution| match &quick {
        Some(q) => check_certificate(sys, &enc.certificate(&z.a), q).verdict.is_valid(),
        None => false,
    };
    Ok(DcpRun { trace: bmi_dc_with(&enc.problem, &z0, &cfg.dcp, accept), constants })
}

/// Full pipeline on one problem.
pub fn synthesize(problem: &Problem, cfg: &SynthConfig) -> Result<SynthReport, SynthError> {
    let start = Instant::now();
    let enc = encode_problem(problem, cfg.mode)?;
    let sys = &problem.system;
    let mut check = cfg.check.clone();
    check.epsilon_check = enc.epsilon / 2.0;

    if let Some(bcfg) = &cfg.bnb {
        let mut bcfg = bcfg.clone();
        bcfg.dcp = cfg.dcp.clone();
        bcfg.check = check.clone();
        bcfg.mode = cfg.mode;
        let (outcome, stats) = branch_and_bound(&enc, problem, &bcfg);
        let (a, verdict, caveats, iterations, lambda, sos) = match outcome {
            BnbOutcome::Found { a, s, lambda, report, iterations } => {
                let sos = s.len() == enc.problem.n && sos_solution_passes(&enc.problem, &a, &s, 1e-6);
                (a, report.verdict, report.caveats, iterations, lambda, sos)
            }
            BnbOutcome::Exhausted => (
                vec![0.0; enc.problem.m],
                Verdict::Inconclusive { reason: "branch and bound exhausted the parameter box".into() },
                vec![],
                0,
                f64::NEG_INFINITY,
                false,
            ),
            BnbOutcome::Budget(reason) => (
                vec![0.0; enc.problem.m],
                Verdict::Inconclusive { reason },
                vec![],
                0,
                f64::NEG_INFINITY,
                false,
            ),
        };
        let b = enc.certificate(&a);
        return Ok(SynthReport {
            name: problem.name.clone(),
            certificate_text: b.to_string_with(&sys.variables),
            certificate: b,
            a,
            iterations,
            lambda,
            termination: None,
            verdict,
            caveats,
            sos_feasible: sos,
            objectives: vec![],
            initial_constants: None,
            bnb: Some(stats),
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    let run = run_dcp(&enc, problem, &SynthConfig { check: check.clone(), ..cfg.clone() })?;
    let trace = run.trace;
    let z = trace.last().clone();
    let b = enc.certificate(&z.a);
    let report = check_certificate(sys, &b, &check);
    Ok(SynthReport {
        name: problem.name.clone(),
        certificate_text: b.to_string_with(&sys.variables),
        certificate: b,
        iterations: trace.iterations(),
        lambda: z.lambda,
        termination: Some(trace.reason),
        verdict: report.verdict,
        caveats: report.caveats,
        sos_feasible: sos_solution_passes(&enc.problem, &z.a, &z.s, 1e-6),
        objectives: trace.objectives.clone(),
        initial_constants: Some(run.constants),
        a: z.a,
        bnb: None,
        seconds: start.elapsed().as_secs_f64(),
    })
}
