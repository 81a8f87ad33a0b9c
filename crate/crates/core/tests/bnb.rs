mod common;

use std::cell::RefCell;

use nalgebra::DMatrix;
use invbc::bnb::{branch_and_bound, relaxation_upper_bound, search, BnbConfig, BnbOutcome, ParamRegion};
use invbc::dcp::{bmi_dc, initial_solution, DcpConfig};
use invbc::encode::{BilinearMatrixFunction, Mode};
use invbc::linalg::max_eigenvalue;
use invbc::problem::bundled;
use invbc::sdp::SolverOptions;
use invbc::synth::encode_problem;
use invbc::verify::{check_certificate, CheckConfig};

use common::{random_bmf, rng, toy, toy_margin, toy_problem};

fn opts() -> SolverOptions {
    SolverOptions::default()
}

#[test]
fn bisect_examples() {
    let r = ParamRegion::cube(2, 1.0);
    let (l, h) = r.bisect();
    assert_eq!(l, ParamRegion::new(vec![-1.0, -1.0], vec![0.0, 1.0]));
    assert_eq!(h, ParamRegion::new(vec![0.0, -1.0], vec![1.0, 1.0]));

    let unit = ParamRegion::new(vec![0.0, 0.0], vec![1.0, 1.0]);
    let (a, b) = unit.bisect();
    let quarters: Vec<ParamRegion> = [a.bisect(), b.bisect()].into_iter().flat_map(|(x, y)| [x, y]).collect();
    for q in &quarters {
        assert_eq!(q.hi[0] - q.lo[0], 0.5);
        assert_eq!(q.hi[1] - q.lo[1], 0.5);
    }
    let mut corners: Vec<(f64, f64)> = quarters.iter().map(|q| (q.lo[0], q.lo[1])).collect();
    corners.sort_by(|x, y| x.partial_cmp(y).unwrap());
    assert_eq!(corners, vec![(0.0, 0.0), (0.0, 0.5), (0.5, 0.0), (0.5, 0.5)]);
}

#[test]
fn bisection_depth_matches_the_counting_argument() {
    for (m, l_a, eta) in [(1, 1.0, 0.05), (2, 1.0, 0.1), (3, 10.0, 0.7), (2, 0.5, 0.013)] {
        let mut r = ParamRegion::cube(m, l_a);
        let mut steps = 0;
        while r.width() >= eta {
            r = r.bisect().0;
            steps += 1;
        }
        let per_axis = (2.0 * l_a / eta).log2().ceil() as usize;
        assert_eq!(steps, m * per_axis, "m {m} L_a {l_a} eta {eta}");
    }
}

#[test]
fn region_helpers() {
    let r = ParamRegion::new(vec![-1.0, 0.0], vec![1.0, 0.5]);
    assert_eq!(r.width(), 2.0);
    assert_eq!(r.center(), vec![0.0, 0.25]);
    assert!(r.contains(&[1.0, 0.5]));
    assert!(!r.contains(&[1.0, 0.6]));
    let mut g = rng(1);
    for _ in 0..100 {
        assert!(r.contains(&r.sample(&mut g)));
    }
    assert_eq!(ParamRegion::from_box(&r.to_box()), r);
}

#[test]
fn degenerate_region_bound_is_the_conditional_optimum() {
    let mut g = rng(31);
    for _ in 0..10 {
        let bmf = random_bmf(&mut g, 1, 1, 3);
        let a0: f64 = common::random_vec(&mut g, 1, 0.9)[0];
        let problem = toy_problem(bmf.clone());
        let ub = relaxation_upper_bound(&problem, &ParamRegion::new(vec![a0], vec![a0]), 1.0, &opts());
        let k = 20_000;
        let best = (0..=k)
            .map(|t| -1.0 + 2.0 * t as f64 / k as f64)
            .map(|s| -max_eigenvalue(&bmf.evaluate(&[a0], &[s])))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(ub >= best - 1e-7, "{ub} < {best}");
        assert!(ub <= best + 1e-3, "{ub} vs grid {best}");
    }
}

#[test]
fn product_toy_bound_covers_the_grid_optimum() {
    // lambda - a s <= 0 with a in [0, 1]
    let mut b = BilinearMatrixFunction::zero(1);
    b.add_fij(0, 0, &DMatrix::from_element(1, 1, -1.0));
    let problem = toy_problem(b.clone());
    let ub = relaxation_upper_bound(&problem, &ParamRegion::new(vec![0.0], vec![1.0]), 1.0, &opts());
    let grid = (0..=100)
        .flat_map(|i| (0..=100).map(move |j| (i as f64 / 100.0, j as f64 / 100.0)))
        .map(|(a, s)| -max_eigenvalue(&b.evaluate(&[a], &[s])))
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(grid, 1.0);
    assert!(ub >= 1.0 - 1e-7, "{ub}");
}

#[test]
fn random_toy_bounds_cover_grid_optima() {
    common::relaxation_toy_suite(20, 5).unwrap();
}

#[test]
fn overview_bound_covers_the_local_optimum() {
    let enc = encode_problem(&bundled("overview").unwrap(), Mode::Sufficient).unwrap();
    let z0 = initial_solution(&enc.problem, &enc.registry, 1.0, &opts()).unwrap();
    let z = bmi_dc(&enc.problem, &z0, &DcpConfig::default()).last().clone();
    let ub = relaxation_upper_bound(&enc.problem, &ParamRegion::cube(1, enc.problem.l_a), enc.problem.l_s, &opts());
    assert!(ub >= z.lambda - 1e-7, "{ub} < {}", z.lambda);
}

#[test]
fn failed_relaxation_never_prunes() {
    // infeasible data: lambda I + I <= 0 with an empty box
    let mut b = BilinearMatrixFunction::zero(1);
    b.add_fij(0, 0, &DMatrix::from_element(1, 1, 1.0));
    let problem = toy_problem(b);
    let ub = relaxation_upper_bound(&problem, &ParamRegion::new(vec![1.0], vec![0.0]), 1.0, &opts());
    assert_eq!(ub, f64::INFINITY);
}

#[test]
fn overview_is_found_in_the_first_region() {
    let problem = bundled("overview").unwrap();
    let enc = encode_problem(&problem, Mode::Sufficient).unwrap();
    let cfg = BnbConfig { eta: Some(0.05), ..BnbConfig::default() };
    let (outcome, stats) = branch_and_bound(&enc, &problem, &cfg);
    let BnbOutcome::Found { a, report, .. } = outcome else { panic!("{outcome:?}") };
    assert!(report.verdict.is_valid());
    assert!(a[0] < 0.0);
    assert_eq!(stats.regions, 1);
}

#[test]
fn toy_valid_set_matches_the_analytic_predicate() {
    let problem = toy();
    let enc = encode_problem(&problem, Mode::Sufficient).unwrap();
    let cfg = CheckConfig { n_points: 4_000, n_targeted: 300, epsilon_check: enc.epsilon / 2.0, ..CheckConfig::default() };
    let mut checked = 0;
    for i in 0..=20 {
        for j in 0..=20 {
            let a = [-1.0 + 0.1 * i as f64, -1.0 + 0.1 * j as f64];
            let margin = toy_margin(&a);
            if margin.abs() < 0.03 {
                continue;
            }
            let valid = check_certificate(&problem.system, &enc.certificate(&a), &cfg).verdict.is_valid();
            assert_eq!(valid, margin > 0.0, "a = {a:?}");
            checked += 1;
        }
    }
    assert!(checked > 350);
}

#[test]
fn toy_search_returns_a_valid_parameter_in_both_modes() {
    let problem = toy();
    let enc = encode_problem(&problem, Mode::Sufficient).unwrap();
    for mode in [Mode::Sufficient, Mode::Necessary] {
        let cfg = BnbConfig { eta: Some(0.05), mode, ..BnbConfig::default() };
        let (outcome, stats) = branch_and_bound(&enc, &problem, &cfg);
        let BnbOutcome::Found { a, report, .. } = outcome else { panic!("{mode:?}: {outcome:?}") };
        assert!(report.verdict.is_valid());
        assert!(toy_margin(&a) > 0.0, "{a:?}");
        assert!((0.4..=0.6).contains(&a[0]));
        assert!(stats.max_depth <= 4, "{stats:?}");
        for seed in 0..3 {
            let strict = CheckConfig { seed: 1000 + seed, epsilon_check: enc.epsilon / 2.0, ..CheckConfig::default() };
            assert!(check_certificate(&problem.system, &enc.certificate(&a), &strict).verdict.is_valid());
        }
    }
}

#[test]
fn necessary_mode_prunes_without_local_search() {
    // lambda + 1 + a^2-free data: F = 1 everywhere, so lambda <= -1
    let mut b = BilinearMatrixFunction::zero(1);
    b.f = DMatrix::from_element(1, 1, 1.0);
    b.add_fij(0, 0, &DMatrix::from_element(1, 1, 0.1));
    let problem = toy_problem(b);
    let local_calls = RefCell::new(0);
    let run = |mode: Mode| {
        let cfg = BnbConfig { mode, max_regions: 10_000, ..BnbConfig::default() };
        search(
            ParamRegion::cube(1, 1.0),
            &cfg,
            0.25,
            1e-6,
            |r| relaxation_upper_bound(&problem, r, 1.0, &opts()),
            |_| false,
            |_| {
                *local_calls.borrow_mut() += 1;
                None
            },
        )
    };
    let (found, stats, budget) = run(Mode::Necessary);
    assert!(found.is_none() && budget.is_none());
    assert_eq!(stats.pruned, 1);
    assert_eq!(stats.regions, 1);
    assert_eq!(*local_calls.borrow(), 0);

    // grid cross-check: no point of the pruned region reaches lambda >= 0
    let grid_best = (0..=200)
        .flat_map(|i| (0..=200).map(move |j| (-1.0 + i as f64 / 100.0, -1.0 + j as f64 / 100.0)))
        .map(|(a, s)| -max_eigenvalue(&problem.constraints[0].evaluate(&[a], &[s])))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(grid_best < 0.0);

    let (_, stats, _) = run(Mode::Sufficient);
    assert_eq!(stats.pruned, 0);
    assert!(stats.below_eta > 0);
    assert_eq!(*local_calls.borrow(), 0);
}

#[test]
fn search_tree_is_finite_and_best_first() {
    for (m, eta) in [(1usize, 0.05), (2, 0.1), (3, 0.3)] {
        let seen: RefCell<Vec<(ParamRegion, f64)>> = RefCell::new(Vec::new());
        let keys: RefCell<Vec<f64>> = RefCell::new(Vec::new());
        let target = vec![0.37; m];
        let cfg = BnbConfig { max_regions: 1_000_000, samples_per_region: 1, ..BnbConfig::default() };
        let (_, stats, budget) = search(
            ParamRegion::cube(m, 1.0),
            &cfg,
            eta,
            1e-6,
            |r| {
                // concave bound: minus the distance from the box to a target
                let d: f64 = (0..m).map(|i| (r.lo[i] - target[i]).max(target[i] - r.hi[i]).max(0.0).powi(2)).sum();
                let bound = -d.sqrt();
                let vol = |q: &ParamRegion| (0..m).map(|i| q.hi[i] - q.lo[i]).product::<f64>();
                let parent = seen
                    .borrow()
                    .iter()
                    .find(|(q, _)| (vol(q) - 2.0 * vol(r)).abs() < 1e-12 && (0..m).all(|i| q.lo[i] <= r.lo[i] && r.hi[i] <= q.hi[i]))
                    .map(|(_, b)| *b);
                keys.borrow_mut().push(parent.unwrap_or(f64::INFINITY));
                seen.borrow_mut().push((r.clone(), bound));
                bound
            },
            |_| false,
            |_| None,
        );
        assert!(budget.is_none());
        let keys = keys.into_inner();
        for w in keys.windows(2) {
            assert!(w[1] <= w[0], "expansion order rose from {} to {}", w[0], w[1]);
        }
        // midpoint bisection leaves 2^ceil(log2(2 L_a / eta)) cells per axis
        let per_axis = 1usize << (2.0 / eta).log2().ceil() as u32;
        let cells = per_axis.pow(m as u32);
        let expanded = stats.regions - stats.below_eta;
        let finest = seen.into_inner().iter().filter(|(q, _)| (0..m).all(|i| q.hi[i] - q.lo[i] >= eta)).count();
        assert!(finest <= cells, "m {m}: {finest} boxes with every side >= eta, {cells} cells");
        assert!(expanded < 2 * cells, "m {m}: {expanded} expanded regions, {cells} cells");
    }
}
