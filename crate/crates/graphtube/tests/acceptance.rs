//! Acceptance gate: ten numbered criteria, each a single test that prints
//! one `criterion N: PASS/FAIL` line (visible with `--nocapture`; failures
//! carry the same line in the panic message). Tolerances and wall limits
//! are stated inline; nothing here is tuned to make a check pass.

use graphtube::estimates::{compute_bounds, spectral_infimum_bounds, BoundInputs};
use graphtube::fem::{
    assemble, eigensolve, lower_bound_check, template_lambda2, PotentialSpec,
};
use graphtube::graph::{Coupling, StarGraph};
use graphtube::harness::{run_experiment, ExperimentConfig, ExperimentKind, HRule};
use graphtube::mesh::{build_mesh, rectangle_mesh, FatGraphSpec};
use graphtube::spectra::{
    fd_oracle, rayleigh_constant_test, solve_kappa_beta, star_delta_spectrum,
    star_deltaprime_spectrum,
};
use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

fn scratch(tag: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("graphtube-acc-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&p);
    p
}

fn base(kind: ExperimentKind) -> ExperimentConfig {
    let doc = serde_json::json!({ "experiment": kind });
    serde_json::from_value(doc).expect("skeleton config")
}

fn report(dir: &PathBuf) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn criterion_01_rectangle_neumann_modes() {
    let t0 = Instant::now();
    let mesh = rectangle_mesh(1.0, 0.1, 80, 8).unwrap();
    let sys = assemble(&mesh, &PotentialSpec::zero()).unwrap();
    let res = eigensolve(&sys, 5, -1.0).unwrap();
    let flat = res.flattened();
    let pi2 = PI * PI;
    let want = [0.0, pi2, 4.0 * pi2, 9.0 * pi2, 16.0 * pi2];
    assert!(
        flat[0].abs() <= 1e-8,
        "criterion 1: FAIL - zero mode came out as {:.3e}",
        flat[0]
    );
    let mut worst = 0.0f64;
    for (v, w) in flat[1..].iter().zip(&want[1..]) {
        worst = worst.max((v - w).abs() / w);
    }
    let dt = t0.elapsed();
    assert!(
        worst <= 0.005,
        "criterion 1: FAIL - worst relative error {worst:.3e} exceeds 0.5%"
    );
    assert!(dt.as_secs() < 30, "criterion 1: FAIL - took {dt:.1?}, limit 30s");
    println!(
        "criterion 1: PASS - strip modes within {:.2e} relative at h = 0.0125 ({dt:.1?})",
        worst
    );
}

#[test]
fn criterion_02_secular_matches_difference_oracle() {
    let t0 = Instant::now();
    let h = 1e-3;
    let mut worst = 0.0f64;
    let mut configs = 0;
    for q in [0.0, -1.0, 2.0] {
        for n in [2usize, 3, 4] {
            let sec = star_delta_spectrum(q, n, 6.0 * PI).unwrap().flattened();
            let graph = StarGraph::unit_star(n, Coupling::Delta { q });
            let fd = fd_oracle(&graph, h, 6).unwrap().flattened();
            for (s, f) in sec.iter().zip(&fd).take(6) {
                worst = worst.max((s - f).abs());
            }
            configs += 1;
        }
    }
    for beta in [-1.0, 0.0, 1.0] {
        let sec = star_deltaprime_spectrum(beta, 3, 6.0 * PI).unwrap().flattened();
        let graph = StarGraph::unit_star(3, Coupling::DeltaPrimeS { beta });
        let fd = fd_oracle(&graph, h, 6).unwrap().flattened();
        for (s, f) in sec.iter().zip(&fd).take(6) {
            worst = worst.max((s - f).abs());
        }
        configs += 1;
    }
    let dt = t0.elapsed();
    assert!(
        worst <= 1e-3,
        "criterion 2: FAIL - worst absolute gap {worst:.3e} exceeds 1e-3"
    );
    assert!(dt.as_secs() < 60, "criterion 2: FAIL - took {dt:.1?}, limit 60s");
    println!(
        "criterion 2: PASS - {configs} couplings, first six eigenvalues agree to {worst:.2e} ({dt:.1?})"
    );
}

#[test]
fn criterion_03_bound_state_three_routes() {
    // beta = -3, n = 3: the bound state solves kappa tanh kappa = 1
    let kappa_secular = solve_kappa_beta(-3.0, 3).unwrap().expect("bound state exists");

    let graph = StarGraph::unit_star(3, Coupling::DeltaPrimeS { beta: -3.0 });
    let fd = fd_oracle(&graph, 1e-3, 1).unwrap().flattened();
    let kappa_fd = (-fd[0]).sqrt();

    let (mut lo, mut hi) = (0.5f64, 2.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid.tanh() < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let kappa_bisect = 0.5 * (lo + hi);

    let routes = [kappa_secular, kappa_fd, kappa_bisect];
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in i + 1..3 {
            worst = worst.max((routes[i] - routes[j]).abs() / routes[j]);
        }
    }
    assert!(
        worst <= 1e-4,
        "criterion 3: FAIL - routes {routes:?} disagree by {worst:.3e} relative"
    );
    println!(
        "criterion 3: PASS - kappa = {kappa_secular:.10} agreed across secular, difference, \
         and bisection routes to {worst:.2e}"
    );
}

#[test]
fn criterion_04_attractive_vertex_width_sweep() {
    let t0 = Instant::now();
    let mut cfg = base(ExperimentKind::ConvergeDelta);
    cfg.q = -1.0;
    cfg.eps_grid = vec![0.2, 0.1, 0.05];
    cfg.count = 4;
    cfg.h_rule = HRule::EpsOver { factor: 8.0 };
    let dir = scratch("c4");
    let summary = run_experiment(&cfg, &dir).unwrap();
    let rep = report(&dir);
    let r = &rep["report"];
    let dt = t0.elapsed();

    assert_eq!(r["monotone_ok"], true, "criterion 4: FAIL - errors not monotone");
    assert_eq!(
        r["defect_decreasing"], true,
        "criterion 4: FAIL - eigenvector defect not decreasing"
    );
    assert_eq!(
        r["multiplicity_ok"], true,
        "criterion 4: FAIL - degenerate pair split beyond tolerance"
    );
    let mut orders = Vec::new();
    for f in r["fits"].as_array().unwrap() {
        let order = f["order"].as_f64().unwrap();
        let residual = f["residual"].as_f64().unwrap();
        assert!(
            order >= 0.5 && residual < 0.2,
            "criterion 4: FAIL - {} fitted order {order:.3} (residual {residual:.3})",
            f["label"]
        );
        orders.push(order);
    }
    assert!(summary.pass, "criterion 4: FAIL - report flagged failure");
    assert!(dt.as_secs() < 600, "criterion 4: FAIL - took {dt:.1?}, limit 10min");
    let _ = std::fs::remove_dir_all(&dir);
    println!(
        "criterion 4: PASS - orders {:?} with monotone errors and decreasing vector defect ({dt:.1?})",
        orders.iter().map(|o| (o * 1e3).round() / 1e3).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_05_satellite_spacing_orders() {
    let t0 = Instant::now();
    let mut cfg = base(ExperimentKind::ConvergeDeltaprimeGraph);
    cfg.beta = -1.0;
    cfg.a_grid = vec![0.2, 0.1, 0.05, 0.025];
    let dir = scratch("c5");
    let summary = run_experiment(&cfg, &dir).unwrap();
    let rep = report(&dir);
    let r = &rep["report"];
    let dt = t0.elapsed();
    assert!(dt.as_secs() < 60, "criterion 5: FAIL - took {dt:.1?}, limit 60s");

    for f in r["positive_fits"].as_array().unwrap() {
        let order = f["order"].as_f64().unwrap();
        assert!(
            order >= 0.9,
            "criterion 5: FAIL - positive branch {} order {order:.3} below 0.9",
            f["label"]
        );
    }
    for p in r["points"].as_array().unwrap() {
        assert_eq!(p["rayleigh_ok"], true, "criterion 5: FAIL - Rayleigh bound violated");
    }
    let kappa_order = r["kappa_fit"]["order"].as_f64().unwrap();
    let _ = std::fs::remove_dir_all(&dir);
    if kappa_order >= 0.9 && summary.pass {
        println!("criterion 5: PASS - all branches fitted order >= 0.9 ({dt:.1?})");
    } else {
        panic!(
            "criterion 5: FAIL - bound-state order {kappa_order:.4} below the 0.9 target on \
             a in {{0.2, 0.1, 0.05, 0.025}}; the positive branches pass (>= 0.9) and the \
             kappa error curve is preasymptotic, bending toward first order only below \
             a ~ 0.01 where the difference oracle cost explodes"
        );
    }
}

#[test]
fn criterion_06_transverse_branch_has_no_roots() {
    let t0 = Instant::now();
    let cfg = base(ExperimentKind::NorootScan);
    let dir = scratch("c6");
    let summary = run_experiment(&cfg, &dir).unwrap();
    let rep = report(&dir);
    let r = &rep["report"];
    let dt = t0.elapsed();
    assert_eq!(
        r["sign_changes"], 0,
        "criterion 6: FAIL - {} sign changes on the 200 x 2000 grid",
        r["sign_changes"]
    );
    assert_eq!(r["sign"], -1, "criterion 6: FAIL - expected a negative branch");
    assert!(summary.pass);
    assert!(dt.as_secs() < 5, "criterion 6: FAIL - took {dt:.1?}, limit 5s");
    let _ = std::fs::remove_dir_all(&dir);
    println!(
        "criterion 6: PASS - single-signed on 200 x 2000, kappa <= 50, closest approach {:.3e} ({dt:.1?})",
        r["min_abs"].as_f64().unwrap()
    );
}

#[test]
fn criterion_07_explicit_constants() {
    let t0 = Instant::now();
    let mut cfg = base(ExperimentKind::Constants);
    cfg.trials = 1000;
    cfg.seed = 20260818;
    let dir = scratch("c7");
    let summary = run_experiment(&cfg, &dir).unwrap();
    let rep = report(&dir);
    let r = &rep["report"];
    let dt = t0.elapsed();
    assert_eq!(
        r["ordering_violations"], 0,
        "criterion 7: FAIL - graph constant exceeded the manifold constant"
    );
    let dev = r["worst_term_deviation"].as_f64().unwrap();
    assert!(
        dev <= 1e-14,
        "criterion 7: FAIL - defect terms drifted {dev:.3e} from the literal formulas"
    );
    assert_eq!(
        r["exponent_exact"], true,
        "criterion 7: FAIL - chain exponent is not exactly (1 - 13 alpha)/2"
    );
    assert_eq!(r["max_term_consistent"], true);
    assert!(summary.pass);
    assert!(dt.as_secs() < 5, "criterion 7: FAIL - took {dt:.1?}, limit 5s");
    let _ = std::fs::remove_dir_all(&dir);
    println!(
        "criterion 7: PASS - 1000 random inputs: ordering holds, terms match to {dev:.2e}, \
         exponents exact ({dt:.1?})"
    );
}

#[test]
fn criterion_08_identification_maps_certified() {
    let t0 = Instant::now();
    let mut passes = Vec::new();
    for q in [0.0, -1.0] {
        let mut cfg = base(ExperimentKind::ClosenessSuite);
        cfg.q = q;
        cfg.eps = Some(0.1);
        cfg.samples = 200;
        cfg.seed = 11;
        let dir = scratch(&format!("c8-{}", if q == 0.0 { "free" } else { "attractive" }));
        let summary = run_experiment(&cfg, &dir).unwrap();
        let rep = report(&dir);
        for c in rep["report"]["checks"].as_array().unwrap() {
            assert_eq!(
                c["pass"], true,
                "criterion 8: FAIL - q = {q}: {} measured {:.3e} against bound {:.3e}",
                c["name"],
                c["worst_measured"].as_f64().unwrap(),
                c["bound"].as_f64().unwrap()
            );
        }
        assert!(summary.pass, "criterion 8: FAIL - q = {q} suite flagged failure");
        passes.push(q);
        let _ = std::fs::remove_dir_all(&dir);
    }
    let dt = t0.elapsed();
    assert!(dt.as_secs() < 300, "criterion 8: FAIL - took {dt:.1?}, limit 5min");
    println!(
        "criterion 8: PASS - six closeness quantities within bounds for q in {passes:?}, \
         200 samples each ({dt:.1?})"
    );
}

#[test]
fn criterion_09_spectral_bounds_and_identity() {
    let q = -1.0;
    let n = 3;
    let graph = StarGraph::unit_star(n, Coupling::Delta { q });
    let vol_edges: f64 = graph
        .lengths()
        .iter()
        .zip(graph.weights().iter())
        .map(|(l, p)| l * p * p)
        .sum();
    let mut checked = 0;
    for eps in [0.2, 0.1, 0.05] {
        let h = eps / 8.0;
        let spec = FatGraphSpec::unit(n, eps).unwrap();
        let mesh = build_mesh(&spec, h, &[]).unwrap();
        let sys = assemble(&mesh, &PotentialSpec::delta_strength(q, mesh.vol_vertex(), eps)).unwrap();
        let template = spec.template();
        let lambda2_vertex = template_lambda2(template, 16).unwrap();
        let weight_norm_sq: f64 = graph.weights().iter().map(|p| p * p).sum();
        let inputs = BoundInputs {
            q_sup: q.abs() / template.vol(),
            l_minus: graph.min_length(),
            lambda2_vertex,
            lambda2_edge: PI * PI / (spec.width() * spec.width()),
            c_vol: template.c_vol(),
            weight_norm_sq,
            q_vertex: q,
            eps,
        };
        let bounds = compute_bounds(&inputs, 0.5).unwrap();
        let (_, ceiling) =
            spectral_infimum_bounds(q, vol_edges, mesh.vol_vertex(), eps).unwrap();
        let check = lower_bound_check(&sys, -bounds.c_tilde_half, Some(ceiling)).unwrap();
        assert!(
            check.lower_ok,
            "criterion 9: FAIL - eps = {eps}: minimum {:.6} dips below lambda_0 = {:.6}",
            check.min_eigenvalue, check.lower_bound
        );
        assert!(
            check.ceiling_ok,
            "criterion 9: FAIL - eps = {eps}: minimum {:.6} misses the variational ceiling {:.6}",
            check.min_eigenvalue,
            ceiling
        );
        checked += 1;
    }
    // exact two-route identity for the interpolating vertex constant
    let mut identities = 0;
    for beta in [-1.0, 1.0] {
        for a in [0.2, 0.1, 0.05, 0.025] {
            for nn in [2usize, 3, 4] {
                rayleigh_constant_test(beta, a, nn).unwrap();
                identities += 1;
            }
        }
    }
    println!(
        "criterion 9: PASS - {checked} widths bracketed by lambda_0 and the variational \
         ceiling; {identities} constant-vector identities exact to 1e-14"
    );
}

#[test]
fn criterion_10_chain_limit_both_signs() {
    let t0 = Instant::now();
    // attractive side: the ground eigenvalue error against -kappa^2 must
    // shrink as the tube narrows
    let mut cfg = base(ExperimentKind::ConvergeDeltaprimeChain);
    cfg.beta = -1.0;
    cfg.eps_grid = vec![0.3, 0.2, 0.1];
    cfg.count = 8;
    let dir_a = scratch("c10-attractive");
    let summary_a = run_experiment(&cfg, &dir_a).unwrap();
    let rep_a = report(&dir_a);
    assert_eq!(
        rep_a["report"]["trend_ok"], true,
        "criterion 10: FAIL - beta = -1 ground error not strictly decreasing"
    );
    assert!(summary_a.pass, "criterion 10: FAIL - attractive chain run flagged failure");
    let errs: Vec<f64> = rep_a["report"]["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["lambda_min_error"].as_f64().unwrap())
        .collect();
    let _ = std::fs::remove_dir_all(&dir_a);

    // repulsive side: the ground eigenvalue must diverge downward and the
    // positive spectrum must land within 10% inside the window
    cfg.beta = 1.0;
    let dir_r = scratch("c10-repulsive");
    let summary_r = run_experiment(&cfg, &dir_r).unwrap();
    let rep_r = report(&dir_r);
    assert_eq!(
        rep_r["report"]["trend_ok"], true,
        "criterion 10: FAIL - beta = +1 ground eigenvalue not strictly decreasing"
    );
    let worst_window: Vec<f64> = rep_r["report"]["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["window_worst"].as_f64().unwrap())
        .collect();
    let window_ok = rep_r["report"]["window_ok"] == serde_json::json!(true);
    let _ = std::fs::remove_dir_all(&dir_r);
    let dt = t0.elapsed();
    assert!(dt.as_secs() < 1800, "criterion 10: FAIL - took {dt:.1?}, limit 30min");

    if window_ok && summary_r.pass {
        println!(
            "criterion 10: PASS - ground trends certified both signs, window matched ({dt:.1?})"
        );
    } else {
        panic!(
            "criterion 10: FAIL - beta = +1 spectrum inside [0.5, 12] misses the limit \
             spectrum by {worst_window:?} relative (10% required); the divergence trend and \
             the beta = -1 error trend {errs:?} both certify, but at widths eps >= 0.1 the \
             repulsive chain's positive eigenvalues are still far from their limits, \
             consistent with the slow predicted scale eps^((1-13 alpha)/2)"
        );
    }
}
