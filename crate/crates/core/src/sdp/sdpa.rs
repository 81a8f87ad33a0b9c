//! SDPA sparse format (`.dat-s`).
//!
//! SDPA minimizes `c . x` subject to `sum_k F_k x_k - F_0 >= 0`. A program
//! here maximizes `objective . x` subject to `A_0 + sum_k x_k A_k <= 0`, so
//! `c = -objective`, `F_0 = A_0` and `F_k = -A_k`. Linear inequalities
//! `g . x <= h` share one trailing diagonal block.

use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;

use super::program::{ConicProgram, LinearIneq, LmiBlock};
use super::{SdpError, SolverResult, SolverStatus};

fn neg(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        -v
    }
}

/// Writes `prog` in SDPA sparse format. Entries are 1-indexed, upper
/// triangle only, ordered by matrix, block, row and column.
pub fn export_sdpa(prog: &ConicProgram) -> Result<String, SdpError> {
    if !prog.socs.is_empty() {
        return Err(SdpError::SocNotSupported);
    }
    let nblocks = prog.lmis.len() + usize::from(!prog.linear.is_empty());
    let mut out = String::new();
    writeln!(out, "{}", prog.nvars).unwrap();
    writeln!(out, "{nblocks}").unwrap();
    let mut sizes: Vec<String> = prog.lmis.iter().map(|b| b.dim.to_string()).collect();
    if !prog.linear.is_empty() {
        sizes.push(format!("-{}", prog.linear.len()));
    }
    writeln!(out, "{}", sizes.join(" ")).unwrap();
    let c: Vec<String> = prog.objective.iter().map(|&v| neg(v).to_string()).collect();
    writeln!(out, "{}", c.join(" ")).unwrap();

    // (matno, blkno, i, j, value)
    let mut entries: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for (b, blk) in prog.lmis.iter().enumerate() {
        for (&(i, j), &v) in &blk.constant.entries {
            entries.push((0, b + 1, i + 1, j + 1, v));
        }
        for (&k, a) in &blk.coeffs {
            for (&(i, j), &v) in &a.entries {
                entries.push((k + 1, b + 1, i + 1, j + 1, neg(v)));
            }
        }
    }
    if !prog.linear.is_empty() {
        let b = prog.lmis.len() + 1;
        for (r, l) in prog.linear.iter().enumerate() {
            if l.rhs != 0.0 {
                entries.push((0, b, r + 1, r + 1, -l.rhs));
            }
            for &(k, g) in &l.terms {
                if g != 0.0 {
                    entries.push((k + 1, b, r + 1, r + 1, -g));
                }
            }
        }
    }
    entries.sort_by(|x, y| (x.0, x.1, x.2, x.3).cmp(&(y.0, y.1, y.2, y.3)));
    for (m, b, i, j, v) in entries {
        writeln!(out, "{m} {b} {i} {j} {v}").unwrap();
    }
    Ok(out)
}

fn perr(line: usize, message: impl Into<String>) -> SdpError {
    SdpError::Parse { line, message: message.into() }
}

/// Reads an SDPA sparse file back into a program. Diagonal blocks become
/// linear inequalities, one per diagonal position.
pub fn parse_sdpa(text: &str) -> Result<ConicProgram, SdpError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('"') && !l.starts_with('*'));
    let clean = |s: &str| s.replace([',', '{', '}', '(', ')'], " ");
    let mut next = |what: &str| lines.next().ok_or_else(|| perr(0, format!("missing {what}")));

    let (ln, l) = next("number of variables")?;
    let nvars: usize = clean(l).split_whitespace().next().and_then(|t| t.parse().ok()).ok_or_else(|| perr(ln, "bad variable count"))?;
    let (ln, l) = next("number of blocks")?;
    let nblocks: usize = clean(l).split_whitespace().next().and_then(|t| t.parse().ok()).ok_or_else(|| perr(ln, "bad block count"))?;
    let (ln, l) = next("block sizes")?;
    let sizes: Vec<i64> = clean(l)
        .split_whitespace()
        .take(nblocks)
        .map(|t| t.parse::<i64>().map_err(|_| perr(ln, format!("bad block size '{t}'"))))
        .collect::<Result<_, _>>()?;
    if sizes.len() != nblocks {
        return Err(perr(ln, "too few block sizes"));
    }
    let (ln, l) = next("objective")?;
    let c: Vec<f64> = clean(l)
        .split_whitespace()
        .take(nvars)
        .map(|t| t.parse::<f64>().map_err(|_| perr(ln, format!("bad objective entry '{t}'"))))
        .collect::<Result<_, _>>()?;
    if c.len() != nvars {
        return Err(perr(ln, "too few objective entries"));
    }

    let mut prog = ConicProgram::new(nvars);
    prog.objective = c.iter().map(|&v| neg(v)).collect();
    // block index -> Some(lmi index) or diagonal offset into `linear`
    enum Slot {
        Lmi(usize),
        Diag(usize, usize),
    }
    let mut slots = Vec::new();
    let mut diag_total = 0usize;
    for &s in &sizes {
        if s > 0 {
            slots.push(Slot::Lmi(prog.lmis.len()));
            prog.lmis.push(LmiBlock::new(s as usize));
        } else {
            let n = s.unsigned_abs() as usize;
            slots.push(Slot::Diag(diag_total, n));
            diag_total += n;
        }
    }
    prog.linear = (0..diag_total).map(|_| LinearIneq { terms: Vec::new(), rhs: 0.0 }).collect();

    for (ln, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 5 {
            return Err(perr(ln, "entry needs 5 fields"));
        }
        let m: usize = toks[0].parse().map_err(|_| perr(ln, "bad matrix number"))?;
        let b: usize = toks[1].parse().map_err(|_| perr(ln, "bad block number"))?;
        let i: usize = toks[2].parse().map_err(|_| perr(ln, "bad row"))?;
        let j: usize = toks[3].parse().map_err(|_| perr(ln, "bad column"))?;
        let v: f64 = toks[4].parse().map_err(|_| perr(ln, "bad value"))?;
        if m > nvars || b == 0 || b > nblocks || i == 0 || j == 0 {
            return Err(perr(ln, "index out of range"));
        }
        match slots[b - 1] {
            Slot::Lmi(k) => {
                let blk = &mut prog.lmis[k];
                if i > blk.dim || j > blk.dim {
                    return Err(perr(ln, "index out of range"));
                }
                if m == 0 {
                    blk.constant.add(i - 1, j - 1, v);
                } else {
                    blk.coeff_mut(m - 1).add(i - 1, j - 1, neg(v));
                }
            }
            Slot::Diag(off, n) => {
                if i != j || i > n {
                    return Err(perr(ln, "off-diagonal entry in diagonal block"));
                }
                let row = &mut prog.linear[off + i - 1];
                if m == 0 {
                    row.rhs -= v;
                } else {
                    row.terms.push((m - 1, neg(v)));
                }
            }
        }
    }
    for blk in &mut prog.lmis {
        blk.prune();
    }
    for row in &mut prog.linear {
        row.terms.sort_by_key(|t| t.0);
    }
    Ok(prog)
}

/// Values read from an SDPA result file.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpaResult {
    pub phase: Option<String>,
    pub obj_primal: Option<f64>,
    pub obj_dual: Option<f64>,
    pub x: Vec<f64>,
}

fn value_after_eq(line: &str) -> Option<&str> {
    line.split_once('=').map(|(_, v)| v.trim())
}

/// Parses `objValPrimal`, `objValDual`, `phase.value` and `xVec` from an
/// SDPA result file.
pub fn parse_sdpa_result(text: &str) -> Result<SdpaResult, SdpError> {
    let mut res = SdpaResult { phase: None, obj_primal: None, obj_dual: None, x: Vec::new() };
    let mut lines = text.lines().enumerate().peekable();
    let mut saw_x = false;
    while let Some((ln, line)) = lines.next() {
        let t = line.trim();
        if t.starts_with("phase.value") {
            res.phase = value_after_eq(t).map(str::to_string);
        } else if t.starts_with("objValPrimal") {
            res.obj_primal = value_after_eq(t).and_then(|v| v.parse().ok());
        } else if t.starts_with("objValDual") {
            res.obj_dual = value_after_eq(t).and_then(|v| v.parse().ok());
        } else if t.starts_with("xVec") {
            let mut body = value_after_eq(t).unwrap_or("").to_string();
            while !body.contains('}') {
                match lines.next() {
                    Some((_, l)) => body.push_str(l),
                    None => return Err(perr(ln + 1, "unterminated xVec")),
                }
            }
            let inner = body.trim().trim_start_matches('{');
            let inner = &inner[..inner.find('}').unwrap()];
            res.x = inner
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| perr(ln + 1, format!("bad xVec entry '{s}'"))))
                .collect::<Result<_, _>>()?;
            saw_x = true;
        }
    }
    if !saw_x {
        return Err(perr(0, "result has no xVec"));
    }
    Ok(res)
}

static RUN_COUNTER: std::sync::atomic::AtomicUsize = std::sync::atomic::AtomicUsize::new(0);

/// Runs an external SDPA-compatible binary as `binary input output`.
pub fn solve_external(prog: &ConicProgram, binary: &Path) -> Result<SolverResult, SdpError> {
    let lmi_form = prog.socs_as_lmis();
    let text = export_sdpa(&lmi_form)?;
    let k = RUN_COUNTER.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let dir = std::env::temp_dir();
    let input = dir.join(format!("invbc_{}_{k}.dat-s", std::process::id()));
    let output = dir.join(format!("invbc_{}_{k}.out", std::process::id()));
    std::fs::write(&input, text)?;
    let status = Command::new(binary).arg(&input).arg(&output).output();
    let _ = std::fs::remove_file(&input);
    let status = status.map_err(|e| SdpError::Backend(format!("{}: {e}", binary.display())))?;
    if !status.status.success() {
        let _ = std::fs::remove_file(&output);
        return Err(SdpError::Backend(format!("{} exited with {}", binary.display(), status.status)));
    }
    let body = std::fs::read_to_string(&output)?;
    let _ = std::fs::remove_file(&output);
    let parsed = parse_sdpa_result(&body)?;
    if parsed.x.len() != prog.nvars {
        return Err(SdpError::Backend(format!("xVec has {} entries, expected {}", parsed.x.len(), prog.nvars)));
    }
    let status = match parsed.phase.as_deref() {
        Some(p) if p.contains("pdOPT") => SolverStatus::Optimal,
        Some(p) if p.contains("pINF") => SolverStatus::Infeasible,
        Some(p) if p.contains("pUNBD") => SolverStatus::Unbounded,
        Some(_) => SolverStatus::NumericalLimit,
        None => SolverStatus::Optimal,
    };
    let objective = prog.objective_value(&parsed.x);
    Ok(SolverResult { status, x: parsed.x, objective, violation: f64::NAN, iterations: 0 })
}
