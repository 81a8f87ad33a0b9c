use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use invbc::bench::{fast_subset, known_examples, run_bench};
use invbc::bnb::BnbConfig;
use invbc::dcdecomp::{split_block, DcMethod};
use invbc::encode::Mode;
use invbc::polyalg::{parse_polynomial, sample_trajectory};
use invbc::problem::{load_problem, Problem};
use invbc::sdp::Backend;
use invbc::synth::{encode_problem, synthesize, SynthConfig};
use invbc::verify::{check_certificate, export_smtlib, CheckConfig, Verdict};

/// Invariant barrier-certificate synthesis for polynomial dynamical systems.
#[derive(Parser)]
#[command(name = "invbc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a certificate for a problem file.
    Synth {
        file: PathBuf,
        #[command(flatten)]
        opts: SolveOpts,
        /// Write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Check a given certificate against a problem file.
    Check {
        file: PathBuf,
        /// Certificate polynomial over the problem's variables.
        #[arg(long, allow_hyphen_values = true)]
        certificate: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write one SMT-LIB file per clause into this directory.
        #[arg(long)]
        emit_smt: Option<PathBuf>,
    },
    /// Run bundled benchmarks and compare with the reference table.
    Bench {
        /// Comma-separated example names; empty selects nothing.
        #[arg(long)]
        select: Option<String>,
        /// Run all bundled examples.
        #[arg(long, conflicts_with = "select")]
        all: bool,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Write the CSV report here (the markdown table goes to stdout).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        opts: SolveOpts,
    },
    /// Integrate the flow and print `t,x1..xn,B` as CSV.
    Trace {
        file: PathBuf,
        /// Initial state, comma-separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        /// Certificate to evaluate; synthesized when omitted.
        #[arg(long, allow_hyphen_values = true)]
        certificate: Option<String>,
        #[command(flatten)]
        opts: SolveOpts,
    },
    /// Print the Kronecker matrix `M` and its split `M1 - M2` per constraint as JSON.
    Decompose {
        file: PathBuf,
        #[arg(long, default_value = "eig")]
        dc_method: DcMethod,
        #[arg(long, default_value = "sufficient")]
        mode: Mode,
    },
}

#[derive(Args, Clone)]
struct SolveOpts {
    #[arg(long, default_value = "sufficient")]
    mode: Mode,
    #[arg(long, default_value = "eig")]
    dc_method: DcMethod,
    /// Wrap the DC iteration in branch and bound.
    #[arg(long)]
    bnb: bool,
    /// Minimum branch-and-bound region width (default 0.05 L_a).
    #[arg(long)]
    eta: Option<f64>,
    /// Regularization weight of the linearized subproblems.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    /// Step-norm termination tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `embedded` or `sdpa:<path-to-binary>`.
    #[arg(long, default_value = "embedded")]
    backend: Backend,
    /// Write SMT-LIB files for the final certificate into this directory.
    #[arg(long)]
    emit_smt: Option<PathBuf>,
    /// Write every conic program in SDPA format into this directory.
    #[arg(long)]
    emit_sdpa: Option<PathBuf>,
}

impl SolveOpts {
    fn config(&self) -> SynthConfig {
        let mut cfg = SynthConfig { mode: self.mode, ..SynthConfig::default() };
        cfg.dcp.method = self.dc_method;
        if let Some(d) = self.delta {
            cfg.dcp.delta = d;
        }
        if let Some(t) = self.tol {
            cfg.dcp.tol = t;
        }
        if let Some(k) = self.max_iter {
            cfg.dcp.max_iter = k;
        }
        cfg.dcp.solver.backend = self.backend.clone();
        cfg.dcp.solver.emit_dir = self.emit_sdpa.clone();
        cfg.check.seed = self.seed;
        if self.bnb {
            cfg.bnb = Some(BnbConfig { eta: self.eta, seed: self.seed, ..BnbConfig::default() });
        }
        cfg
    }
}

fn load(file: &Path) -> Result<Problem, ExitCode> {
    load_problem(file).map_err(|e| {
        eprintln!("error: {}: {e}", file.display());
        ExitCode::from(1)
    })
}

fn verdict_code(v: &Verdict) -> u8 {
    match v {
        Verdict::Valid => 0,
        Verdict::Refuted { .. } => 2,
        Verdict::Inconclusive { .. } => 3,
    }
}

fn describe(v: &Verdict) -> String {
    match v {
        Verdict::Valid => "valid".into(),
        Verdict::Refuted { clause, witness, violation } => {
            format!("refuted ({clause} clause, violation {violation:.3e} at {witness:?})")
        }
        Verdict::Inconclusive { reason } => format!("inconclusive ({reason})"),
    }
}

fn write_smt(problem: &Problem, b: &invbc::polyalg::Polynomial, dir: &Path) -> Result<()> {
    let files = export_smtlib(&problem.system, b, dir).with_context(|| format!("writing SMT files to {}", dir.display()))?;
    for f in files {
        println!("smt: {}", f.display());
    }
    Ok(())
}

fn synth(file: &Path, opts: &SolveOpts, json: Option<&Path>) -> Result<u8> {
    let problem = match load(file) {
        Ok(p) => p,
        Err(_) => return Ok(1),
    };
    let report = synthesize(&problem, &opts.config()).map_err(|e| anyhow::anyhow!("{}: {e}", problem.name))?;
    println!("problem: {}", report.name);
    println!("certificate: {}", report.certificate_text);
    println!("iterations: {}", report.iterations);
    println!("lambda: {:e}", report.lambda);
    if let Some(t) = report.termination {
        println!("termination: {}", serde_json::to_value(t)?.as_str().unwrap_or("?"));
    }
    for c in &report.caveats {
        println!("caveat: {c}");
    }
    println!("verdict: {}", describe(&report.verdict));
    println!("time: {:.3} s", report.seconds);
    if let Some(dir) = &opts.emit_smt {
        write_smt(&problem, &report.certificate, dir)?;
    }
    if let Some(path) = json {
        std::fs::write(path, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(verdict_code(&report.verdict))
}

fn check(file: &Path, certificate: &str, seed: u64, emit_smt: Option<&Path>) -> Result<u8> {
    let problem = match load(file) {
        Ok(p) => p,
        Err(_) => return Ok(1),
    };
    let b = match parse_polynomial(certificate, &problem.system.variables) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: certificate: {e}");
            return Ok(1);
        }
    };
    let cfg = CheckConfig { seed, ..CheckConfig::for_epsilon(problem.template.epsilon) };
    let report = check_certificate(&problem.system, &b, &cfg);
    for c in &report.caveats {
        println!("caveat: {c}");
    }
    for (clause, n) in &report.samples {
        println!("samples {clause}: {n}");
    }
    println!("verdict: {}", describe(&report.verdict));
    if let Some(dir) = emit_smt {
        write_smt(&problem, &b, dir)?;
    }
    Ok(verdict_code(&report.verdict))
}

fn bench(select: Option<&str>, all: bool, jobs: usize, csv: Option<&Path>, opts: &SolveOpts) -> Result<u8> {
    let names: Vec<String> = if all {
        known_examples().iter().map(|s| s.to_string()).collect()
    } else if let Some(list) = select {
        list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
    } else {
        fast_subset()
    };
    let known = known_examples();
    for n in &names {
        if !known.contains(&n.as_str()) {
            eprintln!("error: unknown example '{n}' (known: {})", known.join(", "));
            return Ok(1);
        }
    }
    let report = run_bench(&names, &opts.config(), jobs);
    print!("{}", report.markdown());
    if let Some(path) = csv {
        std::fs::write(path, report.csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(0)
}

fn trace(file: &Path, x0: &[f64], dt: f64, steps: usize, certificate: Option<&str>, opts: &SolveOpts) -> Result<u8> {
    let problem = match load(file) {
        Ok(p) => p,
        Err(_) => return Ok(1),
    };
    let vars = &problem.system.variables;
    if x0.len() != vars.len() {
        eprintln!("error: --x0 has {} values for {} variables", x0.len(), vars.len());
        return Ok(1);
    }
    let b = match certificate {
        Some(text) => match parse_polynomial(text, vars) {
            Ok(b) => b,
            Err(e) => {
                eprintln!("error: certificate: {e}");
                return Ok(1);
            }
        },
        None => synthesize(&problem, &opts.config()).map_err(|e| anyhow::anyhow!("{e}"))?.certificate,
    };
    let traj = sample_trajectory(&problem.system, x0, dt, steps)?;
    let mut w = std::io::stdout().lock();
    use std::io::Write;
    let header: Vec<String> = std::iter::once("t".to_string()).chain(vars.iter().cloned()).chain(std::iter::once("B".into())).collect();
    writeln!(w, "{}", header.join(","))?;
    for (k, x) in traj.states.iter().enumerate() {
        let cols: Vec<String> = std::iter::once(format!("{}", k as f64 * dt))
            .chain(x.iter().map(|v| v.to_string()))
            .chain(std::iter::once(b.eval(x).to_string()))
            .collect();
        writeln!(w, "{}", cols.join(","))?;
    }
    if traj.truncated {
        eprintln!("warning: trajectory left the domain and was truncated");
    }
    Ok(0)
}

fn decompose(file: &Path, method: DcMethod, mode: Mode) -> Result<u8> {
    let problem = match load(file) {
        Ok(p) => p,
        Err(_) => return Ok(1),
    };
    let enc = encode_problem(&problem, mode)?;
    let rows = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> { (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect() };
    let mut out = Vec::new();
    for (c, label) in enc.problem.constraints.iter().zip(&enc.problem.labels) {
        if c.is_linear() {
            continue;
        }
        let split = split_block(c, method, &Default::default());
        out.push(serde_json::json!({
            "constraint": label,
            "p": split.kron.p,
            "a_indices": split.kron.a_idx,
            "s_indices": split.kron.s_idx,
            "method": method,
            "M": rows(&split.kron.m),
            "M1": rows(&split.dc.m1),
            "M2": rows(&split.dc.m2),
        }));
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Synth { file, opts, json } => synth(&file, &opts, json.as_deref()),
        Command::Check { file, certificate, seed, emit_smt } => check(&file, &certificate, seed, emit_smt.as_deref()),
        Command::Bench { select, all, jobs, csv, opts } => bench(select.as_deref(), all, jobs, csv.as_deref(), &opts),
        Command::Trace { file, x0, dt, steps, certificate, opts } => trace(&file, &x0, dt, steps, certificate.as_deref(), &opts),
        Command::Decompose { file, dc_method, mode } => decompose(&file, dc_method, mode),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
