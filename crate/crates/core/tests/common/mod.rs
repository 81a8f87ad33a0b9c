#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use invbc::bnb::{relaxation_upper_bound, ParamRegion};
use invbc::dcdecomp::{block_parts, dc_decompose, split_block, to_kronecker, DcMethod};
use invbc::dcp::{linearized_block, Solution, SubproblemLayout};
use invbc::encode::{BilinearMatrixFunction, BmiProblem, Mode, SRole};
use invbc::problem::{bundled, Problem, ProblemFile};
use invbc::synth::encode_problem;
use invbc::linalg::{frobenius, max_eigenvalue, min_eigenvalue};
use invbc::sdp::SolverOptions;

pub const METHODS: [DcMethod; 3] = [DcMethod::Eig, DcMethod::Bound, DcMethod::Sdp];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_symmetric(rng: &mut impl Rng, p: usize, density: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            if rng.gen_bool(density) {
                let v = rng.gen_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    m
}

/// Random bilinear matrix function with at least one bilinear term.
pub fn random_bmf(rng: &mut impl Rng, m: usize, n: usize, p: usize) -> BilinearMatrixFunction {
    let mut b = BilinearMatrixFunction::zero(p);
    b.f = random_symmetric(rng, p, 0.7);
    for i in 0..m {
        if rng.gen_bool(0.7) {
            b.add_h(i, &random_symmetric(rng, p, 0.5));
        }
    }
    for j in 0..n {
        if rng.gen_bool(0.7) {
            b.add_g(j, &random_symmetric(rng, p, 0.5));
        }
    }
    for i in 0..m {
        for j in 0..n {
            if rng.gen_bool(0.5) {
                b.add_fij(i, j, &random_symmetric(rng, p, 0.5));
            }
        }
    }
    if b.fij.is_empty() {
        let mut e = random_symmetric(rng, p, 0.5);
        e[(0, 0)] = 1.0;
        b.add_fij(rng.gen_range(0..m), rng.gen_range(0..n), &e);
    }
    b.prune();
    b
}

pub fn random_vec(rng: &mut impl Rng, k: usize, r: f64) -> Vec<f64> {
    (0..k).map(|_| rng.gen_range(-r..r)).collect()
}

/// `(z (x) I_p)` as an explicit `(len z) p x p` matrix.
pub fn kron_column(z: &[f64], p: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(z.len() * p, p);
    for (u, &zu) in z.iter().enumerate() {
        for d in 0..p {
            out[(u * p + d, d)] = zu;
        }
    }
    out
}

/// Checks the decomposition invariants on `count` random functions with
/// `m, n <= 4`, `p <= 6`, for every method.
pub fn decomposition_suite(count: usize, seed: u64) -> Result<String, String> {
    let mut rng = rng(seed);
    let opts = SolverOptions::default();
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..count {
        let (m, n, p) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=6));
        let bmf = random_bmf(&mut rng, m, n, p);
        let kf = to_kronecker(&bmf);
        let mm = &kf.m;
        // Kronecker identity against direct evaluation
        let (a, s) = (random_vec(&mut rng, m, 2.0), random_vec(&mut rng, n, 2.0));
        let z = kf.local(&a, &s);
        let zi = kron_column(&z, p);
        let mut affine = bmf.f.clone();
        for (&i, h) in &bmf.h {
            affine += h * a[i];
        }
        for (&j, g) in &bmf.g {
            affine += g * s[j];
        }
        let via = zi.transpose() * mm * &zi + affine;
        let gap = (via - bmf.evaluate(&a, &s)).abs().max();
        if gap > 1e-10 {
            return Err(format!("case {case}: Kronecker form off by {gap:.2e}"));
        }
        for method in METHODS {
            let dc = dc_decompose(mm, method, &opts);
            let nm = frobenius(mm);
            let rel = frobenius(&(mm - (&dc.m1 - &dc.m2))) / (1.0 + nm);
            let lo = min_eigenvalue(&dc.m1).min(min_eigenvalue(&dc.m2));
            let root = frobenius(&(dc.n.transpose() * &dc.n - &dc.m1)) / (1.0 + frobenius(&dc.m1));
            worst = (worst.0.max(rel), worst.1.min(lo), worst.2.max(root));
            if rel > 1e-8 {
                return Err(format!("case {case} {method:?}: M - (M1 - M2) relative {rel:.2e}"));
            }
            if lo < -1e-8 {
                return Err(format!("case {case} {method:?}: part with eigenvalue {lo:.2e}"));
            }
            if root > 1e-7 {
                return Err(format!("case {case} {method:?}: N^T N - M1 relative {root:.2e}"));
            }
            if method == DcMethod::Bound {
                let dim = mm.nrows();
                for i in 0..dim {
                    for j in 0..dim {
                        if i != j && mm[(i, j)] == 0.0 && dc.m2[(i, j)] != 0.0 {
                            return Err(format!("case {case}: bound M2 fills ({i},{j})"));
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{count} cases, worst residual {:.1e}, worst eigenvalue {:.1e}, worst root {:.1e}", worst.0, worst.1, worst.2))
}

/// Largest eigenvalue of the linearized quadratic matrix inequality,
/// computed from `M1`, `M2` with explicit Kronecker products.
pub fn qmi_value(
    bmf: &BilinearMatrixFunction,
    split: &invbc::dcdecomp::BlockSplit,
    zk: &Solution,
    lambda: f64,
    a: &[f64],
    s: &[f64],
) -> f64 {
    let p = bmf.p;
    let z = split.kron.local(a, s);
    let zk_loc = split.kron.local(&zk.a, &zk.s);
    let zi = kron_column(&z, p);
    let zki = kron_column(&zk_loc, p);
    let (m1, m2) = (&split.dc.m1, &split.dc.m2);
    let mut q = zi.transpose() * m1 * &zi + &bmf.f;
    for (&i, h) in &bmf.h {
        q += h * a[i];
    }
    for (&j, g) in &bmf.g {
        q += g * s[j];
    }
    q -= zki.transpose() * m2 * &zki;
    for u in 0..z.len() {
        let mut e = vec![0.0; z.len()];
        e[u] = 1.0;
        let eu = kron_column(&e, p);
        let d = eu.transpose() * m2 * &zki + zki.transpose() * m2 * &eu;
        q -= d * (z[u] - zk_loc[u]);
    }
    for d in 0..p {
        q[(d, d)] += lambda;
    }
    max_eigenvalue(&q)
}

/// Sign agreement between the linearized QMI and its Schur-complement LMI.
pub fn schur_suite(instances: usize, points: usize, seed: u64) -> Result<String, String> {
    let mut rng = rng(seed);
    let opts = SolverOptions::default();
    let mut feasible = 0usize;
    let mut banded = 0usize;
    for inst in 0..instances {
        let (m, n, p) = (rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=4));
        let bmf = random_bmf(&mut rng, m, n, p);
        let method = METHODS[inst % 3];
        let split = split_block(&bmf, method, &opts);
        let problem = BmiProblem {
            m,
            n,
            constraints: vec![bmf.clone()],
            labels: vec!["random".into()],
            l_a: 10.0,
            l_s: 10.0,
            a_box: None,
        };
        let zk = Solution { lambda: 0.0, a: random_vec(&mut rng, m, 1.5), s: random_vec(&mut rng, n, 1.5) };
        let layout = SubproblemLayout { m, n };
        let blk = linearized_block(&problem, 0, Some(&split), &zk, &layout);
        for _ in 0..points {
            let a: Vec<f64> = zk.a.iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect();
            let s: Vec<f64> = zk.s.iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect();
            let q0 = qmi_value(&bmf, &split, &zk, 0.0, &a, &s);
            let lambda = -q0 + rng.gen_range(-0.5..0.5) * (1.0 + q0.abs());
            let qmi = q0 + lambda;
            let mut x = vec![0.0; layout.nvars()];
            x[layout.lambda()] = lambda;
            for i in 0..m {
                x[layout.a(i)] = a[i];
            }
            for j in 0..n {
                x[layout.s(j)] = s[j];
            }
            let lmi = max_eigenvalue(&blk.evaluate(&x));
            if qmi.abs() <= 1e-7 * (1.0 + q0.abs()) {
                banded += 1;
                continue;
            }
            if (qmi <= 0.0) != (lmi <= 0.0) {
                return Err(format!("instance {inst} ({method:?}): QMI {qmi:.3e} but LMI {lmi:.3e}"));
            }
            feasible += (qmi <= 0.0) as usize;
        }
    }
    Ok(format!(
        "{instances} instances x {points} points, {feasible} feasible, {banded} in the boundary band, 0 disagreements"
    ))
}

/// `max_a,s -lambda_max(F(a, s))` over a grid of step `h` on `[-1, 1]^2`.
pub fn grid_optimum(bmf: &BilinearMatrixFunction, h: f64) -> f64 {
    let k = (2.0 / h).round() as usize;
    let mut best = f64::NEG_INFINITY;
    for ia in 0..=k {
        let a = -1.0 + ia as f64 * h;
        for is in 0..=k {
            let s = -1.0 + is as f64 * h;
            best = best.max(-max_eigenvalue(&bmf.evaluate(&[a], &[s])));
        }
    }
    best
}

pub fn toy_problem(bmf: BilinearMatrixFunction) -> BmiProblem {
    BmiProblem { m: 1, n: 1, constraints: vec![bmf], labels: vec!["toy".into()], l_a: 1.0, l_s: 1.0, a_box: None }
}

/// Relaxation bound against grid optima of random one-by-one parameter toys.
pub fn relaxation_toy_suite(count: usize, seed: u64) -> Result<String, String> {
    let mut rng = rng(seed);
    let opts = SolverOptions::default();
    let mut slack = f64::INFINITY;
    for case in 0..count {
        let p = rng.gen_range(1..=3);
        let bmf = random_bmf(&mut rng, 1, 1, p);
        let best = grid_optimum(&bmf, 1e-2);
        let ub = relaxation_upper_bound(&toy_problem(bmf), &ParamRegion::cube(1, 1.0), 1.0, &opts);
        if ub < best - 1e-6 {
            return Err(format!("toy {case}: bound {ub:.6} below grid optimum {best:.6}"));
        }
        slack = slack.min(ub - best);
    }
    Ok(format!("{count} toys, smallest margin {slack:.2e}"))
}

/// Convex part `8 B+` of the consecution block, with `v = s0 + s1 x1 + s2 x2`.
fn b2_plus_times_8(l: f64, a: f64, s: [f64; 3]) -> DMatrix<f64> {
    let [s0, s1, s2] = s;
    let r6 = 0.408;
    DMatrix::from_row_slice(
        3,
        3,
        &[
            8.0 * l + 0.8 * a + a * a + r6 * s0 * s0,
            r6 * s0 * s1,
            -2.0 * a * s0 + 2.0 * r6 * s0 * s2,
            r6 * s0 * s1,
            8.0 * l + a * a + r6 * s1 * s1,
            4.0 * a - 2.0 * a * s1 + 2.0 * r6 * s1 * s2,
            -2.0 * a * s0 + 2.0 * r6 * s0 * s2,
            4.0 * a - 2.0 * a * s1 + 2.0 * r6 * s1 * s2,
            8.0 * l - 4.0 * a + 2.449 * a * a - 4.0 * a * s2 + s0 * s0 + s1 * s1 + 1.632 * s2 * s2,
        ],
    )
}

fn b2_minus_times_8(a: f64, s: [f64; 3]) -> DMatrix<f64> {
    let [s0, s1, s2] = s;
    let r6 = 0.408;
    DMatrix::from_row_slice(
        3,
        3,
        &[
            a * a + r6 * s0 * s0,
            r6 * s0 * s1,
            2.0 * a * s0 + 2.0 * r6 * s0 * s2,
            r6 * s0 * s1,
            a * a + r6 * s1 * s1,
            2.0 * a * s1 + 2.0 * r6 * s1 * s2,
            2.0 * a * s0 + 2.0 * r6 * s0 * s2,
            2.0 * a * s1 + 2.0 * r6 * s1 * s2,
            2.449 * a * a + 4.0 * a * s2 + s0 * s0 + s1 * s1 + 1.632 * s2 * s2,
        ],
    )
}

/// Entrywise gap between the computed overview consecution split and the
/// printed pair, at `count` random points of `[-1, 1]^5`.
pub fn overview_split_gap(count: usize) -> f64 {
    let enc = encode_problem(&bundled("overview").unwrap(), Mode::Sufficient).unwrap();
    let bmf = &enc.problem.constraints[1];
    let split = split_block(bmf, DcMethod::Eig, &SolverOptions::default());
    let idx: Vec<usize> = [[0u32, 0], [1, 0], [0, 1]]
        .iter()
        .map(|e| {
            enc.registry
                .s
                .iter()
                .position(|r| matches!(r, SRole::Multiplier { order: 1, monomial, .. } if monomial.exponents() == e))
                .unwrap()
        })
        .collect();
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let (l, a) = (r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        let s = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let mut sv = vec![0.0; enc.problem.n];
        for k in 0..3 {
            sv[idx[k]] = s[k];
        }
        let (mut plus, minus) = block_parts(bmf, &split, &[a], &sv);
        for d in 0..3 {
            plus[(d, d)] += l;
        }
        worst = worst.max((plus - b2_plus_times_8(l, a, s) / 8.0).abs().max());
        worst = worst.max((minus - b2_minus_times_8(a, s) / 8.0).abs().max());
    }
    worst
}

pub const TOY: &str = r#"{
  "name": "toy",
  "variables": ["x1", "x2"],
  "flow": ["-x1", "-x2"],
  "init": "0.6*x1^2 + 0.6*x2^2 - 1",
  "unsafe": "1 - 0.4*x1^2",
  "domain": [[-3, 3], [-3, 3]],
  "template": {"monomials": ["x1^2", "x2^2"], "include_constant": false, "fixed": "-1"},
  "bounds": {"L_a": 1.0, "L_s": 100.0}
}"#;

pub fn toy() -> Problem {
    ProblemFile::from_json(TOY).unwrap().validate().unwrap()
}

/// Signed distance of `a` to the boundary of the valid set of `a1 x1^2 + a2 x2^2 - 1`
/// (positive inside); the set is cut out by `a1 <= 0.6`, `a2 <= 0.6` and
/// `2.5 a1 + 9 min(a2, 0) > 1`.
pub fn toy_margin(a: &[f64]) -> f64 {
    let sep = (2.5 * a[0] + 9.0 * a[1].min(0.0) - 1.0) / 9.3;
    (0.6 - a[0]).min(0.6 - a[1]).min(sep)
}
