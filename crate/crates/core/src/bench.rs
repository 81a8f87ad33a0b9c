//! Benchmark harness over the bundled corpus.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::problem::{bundled, bundled_names};
use crate::synth::{synthesize, SynthConfig};
use crate::verify::Verdict;

const REFERENCE_CSV: &str = include_str!("../benchmarks/reference.csv");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Validity {
    Valid,
    Invalid,
    Inconclusive,
}

impl std::fmt::Display for Validity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Validity::Valid => "valid",
            Validity::Invalid => "invalid",
            Validity::Inconclusive => "inconclusive",
        })
    }
}

impl From<&Verdict> for Validity {
    fn from(v: &Verdict) -> Self {
        match v {
            Verdict::Valid => Validity::Valid,
            Verdict::Refuted { .. } => Validity::Invalid,
            Verdict::Inconclusive { .. } => Validity::Inconclusive,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
pub struct ReferenceRow {
    pub name: String,
    pub n_sys: usize,
    pub d_flow: u32,
    pub d_bc: u32,
    pub iterations: usize,
    pub validity: Validity,
}

/// Published iteration counts and verdicts, in table order.
pub fn reference_table() -> Vec<ReferenceRow> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(REFERENCE_CSV.as_bytes());
    rdr.deserialize().map(|r| r.expect("reference table parses")).collect()
}

pub fn reference(name: &str) -> Option<ReferenceRow> {
    reference_table().into_iter().find(|r| r.name == name)
}

/// Examples of dimension 2 or 3.
pub fn fast_subset() -> Vec<String> {
    reference_table().into_iter().filter(|r| r.n_sys <= 3).map(|r| r.name).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub name: String,
    pub iterations: Option<usize>,
    pub seconds: f64,
    pub verdict: Option<Validity>,
    pub certificate: String,
    pub ref_iterations: Option<usize>,
    pub ref_validity: Option<Validity>,
    pub iteration_delta: Option<i64>,
    pub verdict_matches: Option<bool>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

impl BenchReport {
    pub fn markdown(&self) -> String {
        let mut s = String::new();
        writeln!(s, "| example | iterations | ref. iterations | delta | verdict | ref. verdict | match | time (s) |").unwrap();
        writeln!(s, "|---|---:|---:|---:|---|---|---|---:|").unwrap();
        for r in &self.rows {
            let verdict = match (&r.verdict, &r.error) {
                (Some(v), _) => v.to_string(),
                (None, Some(e)) => format!("error: {e}"),
                (None, None) => "-".into(),
            };
            let delta = r.iteration_delta.map(|d| format!("{d:+}")).unwrap_or_else(|| "-".into());
            let matches = match r.verdict_matches {
                Some(true) => "yes",
                Some(false) => "no",
                None => "-",
            };
            writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} | {:.2} |",
                r.name,
                opt(&r.iterations),
                opt(&r.ref_iterations),
                delta,
                verdict,
                opt(&r.ref_validity),
                matches,
                r.seconds
            )
            .unwrap();
        }
        s
    }

    pub fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "name",
            "iterations",
            "ref_iterations",
            "iteration_delta",
            "verdict",
            "ref_verdict",
            "verdict_matches",
            "seconds",
            "certificate",
            "error",
        ])
        .expect("csv header");
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                opt(&r.iterations),
                opt(&r.ref_iterations),
                opt(&r.iteration_delta),
                opt(&r.verdict),
                opt(&r.ref_validity),
                opt(&r.verdict_matches),
                format!("{:.4}", r.seconds),
                r.certificate.clone(),
                r.error.clone().unwrap_or_default(),
            ])
            .expect("csv row");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("utf-8 csv")
    }
}

/// Runs one bundled example.
pub fn bench_one(name: &str, cfg: &SynthConfig) -> BenchRow {
    let reference = reference(name);
    let mut row = BenchRow {
        name: name.to_string(),
        iterations: None,
        seconds: 0.0,
        verdict: None,
        certificate: String::new(),
        ref_iterations: reference.as_ref().map(|r| r.iterations),
        ref_validity: reference.as_ref().map(|r| r.validity),
        iteration_delta: None,
        verdict_matches: None,
        error: None,
    };
    let Some(problem) = bundled(name) else {
        row.error = Some(format!("unknown example '{name}'"));
        return row;
    };
    let start = std::time::Instant::now();
    match synthesize(&problem, cfg) {
        Ok(rep) => {
            let v = Validity::from(&rep.verdict);
            row.iterations = Some(rep.iterations);
            row.verdict = Some(v);
            row.certificate = rep.certificate_text;
            row.iteration_delta = row.ref_iterations.map(|r| rep.iterations as i64 - r as i64);
            row.verdict_matches = row.ref_validity.map(|r| r == v);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row.seconds = start.elapsed().as_secs_f64();
    row
}

/// Runs `names` with up to `jobs` examples in parallel; rows keep the input order.
pub fn run_bench(names: &[String], cfg: &SynthConfig, jobs: usize) -> BenchReport {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<BenchRow>>> = Mutex::new(vec![None; names.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(names.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= names.len() {
                    break;
                }
                log::info!("bench: {}", names[k]);
                let row = bench_one(&names[k], cfg);
                slots.lock().expect("bench slots")[k] = Some(row);
            });
        }
    });
    BenchReport { rows: slots.into_inner().expect("bench slots").into_iter().flatten().collect() }
}

/// Names accepted by [`run_bench`].
pub fn known_examples() -> Vec<&'static str> {
    bundled_names()
}
