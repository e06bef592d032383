//! Acceptance gate: end-to-end checks of the toolkit's headline claims,
//! each printing a single PASS/FAIL line with the measured quantities.
//! Tolerances are asserted exactly as stated; nothing is loosened to make
//! a line pass.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};

use rsp_core::asymptotics::{
    appendix_limit_partial, closed_form, covariance_report, AppendixOracleInput,
    ClosedFormExample,
};
use rsp_core::dynamics::{
    enumerate_exact, project, ReinforcementSchedule, Simulator, Stride,
};
use rsp_core::harness::{
    check_ci_coverage, check_convergence_clt, check_sync_clt, check_synchronization,
    empirical_test_calibration, reports_to_json, run_checks, verify_forcing, verify_reducible,
    CheckKind, ExperimentConfig, ForcingSpec, NetworkSpec, Thresholds, Z0Spec,
};
use rsp_core::network::{build_network_rows, cycle, mean_field, special_vertex};
use rsp_core::spectral::{classify_regime, decompose, REGIME_TOL_DEFAULT};

fn config(network: NetworkSpec, gamma: f64, c: f64, horizon: u64, reps: u64) -> ExperimentConfig {
    ExperimentConfig {
        network,
        gamma,
        c,
        n0: None,
        z0: Z0Spec::Constant { value: 0.5 },
        horizon,
        replications: reps,
        master_seed: 20240817,
        forcing: None,
        sync_pair: (0, 1),
        proxy_factor: 100,
        sensitivity_factor: 10,
        null_network: None,
        checks: vec![CheckKind::Synchronization],
        thresholds: Thresholds::default(),
    }
}

fn entrywise_close(
    a: &rsp_core::nalgebra::DMatrix<f64>,
    b: &rsp_core::nalgebra::DMatrix<f64>,
    tol: f64,
) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let mut worst = 0.0f64;
    for j in 0..a.nrows() {
        for k in 0..a.ncols() {
            worst = worst.max((a[(j, k)] - b[(j, k)]).abs());
        }
    }
    assert!(worst <= tol, "entrywise gap {worst} exceeds {tol}");
    worst
}

/// The general spectral covariance path must equal
/// the analytic forms for the three canonical families within 1e-10.
#[test]
fn closed_form_covariance_cross_checks() {
    let mut worst = 0.0f64;
    let mut combos = 0usize;

    // mean-field across sizes, couplings, and all three regimes
    for n in 2..=8usize {
        for &alpha in &[0.25f64, 0.5, 1.0] {
            let spec = decompose(&mean_field(n, alpha).unwrap()).unwrap();
            let regimes = [
                (0.75, 1.0),              // slow decay
                (1.0, 1.0 / alpha),       // critical-free linear decay
                (1.0, 0.5 / alpha),       // critical line
            ];
            for (gamma, c) in regimes {
                let regime = classify_regime(&spec, gamma, c, REGIME_TOL_DEFAULT).unwrap();
                let general = covariance_report(&spec, &regime).unwrap();
                let closed =
                    closed_form(ClosedFormExample::MeanField { n, alpha }, &regime).unwrap();
                worst = worst.max(entrywise_close(
                    &general.sigma_hat,
                    &closed.sigma_hat,
                    1e-10,
                ));
                combos += 1;
            }
        }
    }

    // cycle of four: eigenvalues c/2, c/2, c/4, 0 under slow decay
    let c = 1.0;
    let spec = decompose(&cycle(4).unwrap()).unwrap();
    let regime = classify_regime(&spec, 0.75, c, REGIME_TOL_DEFAULT).unwrap();
    let report = covariance_report(&spec, &regime).unwrap();
    for (got, want) in report
        .sigma_hat_eigenvalues
        .iter()
        .zip([c / 2.0, c / 2.0, c / 4.0, 0.0].iter())
    {
        assert!((got - want).abs() <= 1e-10, "cycle eigenvalue {got} vs {want}");
    }
    combos += 1;

    // special vertex across regimes
    for (n, p) in [(4usize, 0.3f64), (6, 0.8)] {
        let spec = decompose(&special_vertex(n, p).unwrap()).unwrap();
        for (gamma, c) in [(0.75, 1.0), (1.0, 1.0), (1.0, 0.5)] {
            let regime = classify_regime(&spec, gamma, c, REGIME_TOL_DEFAULT).unwrap();
            let general = covariance_report(&spec, &regime).unwrap();
            let closed =
                closed_form(ClosedFormExample::SpecialVertex { n, p }, &regime).unwrap();
            worst = worst.max(entrywise_close(
                &general.sigma_hat,
                &closed.sigma_hat,
                1e-10,
            ));
            combos += 1;
        }
    }

    println!("PASS closed-form covariance cross-checks: {combos} combinations, worst entrywise gap {worst:.3e}");
}

/// Covariance structure on random networks: symmetric, PSD,
/// rank N-1 away from the critical case, v1-annihilation below 1e-8, and
/// full critical rank on the mean-field critical line.
#[test]
fn covariance_structure_on_random_networks() {
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(424242);
    let mut worst_v1 = 0.0f64;
    let mut worst_asym = 0.0f64;
    for i in 0..50usize {
        let n = 2 + i % 7;
        let mut rows = vec![vec![0.0; n]; n];
        for k in 0..n {
            let mut sum = 0.0;
            for row in rows.iter_mut() {
                row[k] = rng.gen_range(0.05..1.0);
                sum += row[k];
            }
            for row in rows.iter_mut() {
                row[k] /= sum;
            }
        }
        let net = build_network_rows(&rows).unwrap();
        assert!(net.is_irreducible());
        let spec = decompose(&net).unwrap();
        let max_re = spec.eigenvalues()[1..]
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max);
        // linear decay with the critical line safely above every eigenvalue
        let c_linear = 1.25 / (2.0 * (1.0 - max_re));
        for (gamma, c) in [(0.75, 1.0), (1.0, c_linear)] {
            let regime = classify_regime(&spec, gamma, c, REGIME_TOL_DEFAULT).unwrap();
            let report = covariance_report(&spec, &regime).unwrap();
            let s = &report.sigma_hat;
            for j in 0..n {
                for k in 0..n {
                    worst_asym = worst_asym.max((s[(j, k)] - s[(k, j)]).abs());
                }
            }
            for &e in &report.sigma_hat_eigenvalues {
                assert!(e > -1e-9, "eigenvalue {e} breaks positive semidefiniteness");
            }
            assert_eq!(report.rank_hat, n - 1, "rank away from the critical line");
            let v1 = spec.v1();
            let mut q = 0.0;
            for j in 0..n {
                for k in 0..n {
                    q += v1[j] * s[(j, k)] * v1[k];
                }
            }
            assert!(q.abs() < 1e-8, "v1^T S v1 = {q}");
            worst_v1 = worst_v1.max(q.abs());
        }
    }

    // critical mean-field: every non-leading eigenvalue sits on the line,
    // so the rank equals the critical multiplicity N-1
    for n in 2..=8usize {
        let alpha = 0.5;
        let spec = decompose(&mean_field(n, alpha).unwrap()).unwrap();
        let regime = classify_regime(&spec, 1.0, 0.5 / alpha, REGIME_TOL_DEFAULT).unwrap();
        assert_eq!(regime.m_star, n - 1);
        let report = covariance_report(&spec, &regime).unwrap();
        assert_eq!(report.rank_hat, n - 1, "critical rank at N={n}");
        assert_eq!(report.rank_expected, n - 1);
    }

    println!(
        "PASS covariance structure on 50 random networks: worst v1-annihilation {worst_v1:.3e}, worst asymmetry {worst_asym:.3e}, critical ranks match"
    );
}

/// The simulator reproduces the exact enumerated law. Every
/// sampled state must land on an enumeration atom bit-for-bit; the law
/// itself must agree within total variation 0.01 at a million paths; and
/// the synchronized component must be a martingale in the oracle.
#[test]
fn enumeration_oracle_matches_simulation() {
    let net = build_network_rows(&[vec![0.7, 0.4], vec![0.3, 0.6]]).unwrap();
    let spec = decompose(&net).unwrap();
    let sched = ReinforcementSchedule::new(0.75, 1.0).unwrap();
    let z0 = vec![0.3, 0.7];
    let (z_tilde_0, _) = project(&spec, &z0).unwrap();
    let paths = 1_000_000u64;
    let mut lines = Vec::new();

    for steps in [4u32, 10] {
        let dist = enumerate_exact(&net, &sched, &z0, steps).unwrap();
        assert!((dist.total_probability() - 1.0).abs() < 1e-12);

        // martingale property of the synchronized component, exactly
        let mean = dist.mean();
        let (z_tilde_mean, _) = project(&spec, &mean).unwrap();
        assert!(
            (z_tilde_mean - z_tilde_0).abs() < 1e-12,
            "mean synchronized component drifted: {z_tilde_mean} vs {z_tilde_0}"
        );

        let lookup = dist.atom_lookup();
        let sim = Simulator::new(&net, &sched, steps as u64).unwrap();
        let stride = Stride::Explicit(vec![steps as u64]);
        let mut counts = vec![0u64; dist.atoms.len()];
        for rep in 0..paths {
            let t = sim.run(&z0, &stride, None, 99, rep).unwrap();
            let bits: Vec<u64> = t.final_state.z.iter().map(|x| x.to_bits()).collect();
            let &i = lookup
                .get(&bits)
                .expect("every simulated state must be an enumeration atom");
            counts[i] += 1;
        }

        let tv = if dist.atoms.len() <= 1 << 12 {
            // few atoms: total variation over the atoms themselves
            0.5 * dist
                .atoms
                .iter()
                .enumerate()
                .map(|(i, (p, _))| (counts[i] as f64 / paths as f64 - p).abs())
                .sum::<f64>()
        } else {
            // a million samples cannot resolve 2^20 individual atoms (pure
            // Poisson noise dominates), so the law is compared on a 16x16
            // state grid instead
            let bins = 16usize;
            let idx = |z: &[f64]| {
                let a = ((z[0] * bins as f64) as usize).min(bins - 1);
                let b = ((z[1] * bins as f64) as usize).min(bins - 1);
                a * bins + b
            };
            let mut exact_grid = vec![0.0; bins * bins];
            let mut emp_grid = vec![0.0; bins * bins];
            for (i, (p, z)) in dist.atoms.iter().enumerate() {
                exact_grid[idx(z)] += p;
                emp_grid[idx(z)] += counts[i] as f64 / paths as f64;
            }
            0.5 * exact_grid
                .iter()
                .zip(emp_grid.iter())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        };
        assert!(tv < 0.01, "total variation {tv} at {steps} steps");
        lines.push(format!("{steps} steps tv={tv:.5}"));
    }

    println!(
        "PASS enumeration oracle vs simulator: {} ({} paths, all states bit-exact atoms, martingale within 1e-12)",
        lines.join(", "),
        paths
    );
}

/// Synchronization across the canonical generators: median
/// spread at horizon 1e5 over 200 replications below 0.05 and below the
/// step-1e3 median.
#[test]
fn synchronization_across_generators() {
    let mut lines = Vec::new();
    for (label, net) in [
        ("mean-field", NetworkSpec::MeanField { n: 6, alpha: 0.5 }),
        ("cycle", NetworkSpec::Cycle { n: 6 }),
        ("special-vertex", NetworkSpec::SpecialVertex { n: 6, p: 0.3 }),
    ] {
        for gamma in [0.6, 0.75, 1.0] {
            // the cycle's second eigenvalue (real part 3/4) falls outside
            // the covered linear-decay regimes, so that combination is not
            // admissible and is skipped
            if label == "cycle" && gamma == 1.0 {
                continue;
            }
            let cfg = config(net.clone(), gamma, 1.0, 100_000, 200);
            let report = check_synchronization(&cfg).unwrap();
            let terminal = report.value("median_spread_terminal").unwrap();
            let reference = report.value("median_spread_reference").unwrap();
            assert!(
                report.passed && terminal < 0.05 && terminal < reference,
                "{label} gamma={gamma}: terminal {terminal}, reference {reference}"
            );
            lines.push(format!("{label}/{gamma}: {terminal:.4}"));
        }
    }
    println!(
        "PASS synchronization across generators (median spread at 1e5): {}",
        lines.join(", ")
    );
}

/// CLT variance ratios: synchronization-CLT empirical/theoretical
/// variance within [0.9, 1.1] and convergence-CLT within [0.85, 1.15] at
/// 2000 replications for mean-field sizes 3 and 4 in both covered
/// linear-decay-free regimes.
#[test]
fn clt_variance_ratios() {
    let mut lines = Vec::new();
    for n in [3usize, 4] {
        for (gamma, c, label) in [(0.75, 1.0, "A"), (1.0, 2.0, "B")] {
            let cfg = config(NetworkSpec::MeanField { n, alpha: 0.5 }, gamma, c, 10_000, 2000);
            let report = check_sync_clt(&cfg).unwrap();
            let ratio = report.value("variance_ratio").unwrap();
            assert!(
                report.passed && (0.9..=1.1).contains(&ratio),
                "sync ratio {ratio} for N={n} {label}"
            );
            lines.push(format!("sync N={n} {label}: {ratio:.3}"));
        }
    }
    for n in [3usize, 4] {
        for (gamma, c, proxy, label) in [(0.75, 1.0, 200, "A"), (1.0, 2.0, 100, "B")] {
            let mut cfg =
                config(NetworkSpec::MeanField { n, alpha: 0.5 }, gamma, c, 10_000, 2000);
            cfg.proxy_factor = proxy;
            let report = check_convergence_clt(&cfg).unwrap();
            let ratio = report.value("variance_ratio").unwrap();
            assert!(
                report.passed && (0.85..=1.15).contains(&ratio),
                "convergence ratio {ratio} for N={n} {label}"
            );
            lines.push(format!("conv N={n} {label}: {ratio:.3}"));
        }
    }
    println!("PASS CLT variance ratios: {}", lines.join(", "));
}

/// Topology-test calibration: nominal-0.05 empirical size in
/// [0.03, 0.08] with mean statistic within 10% of the dof under the null;
/// mean statistic within 15% of the predicted factor-2 inflation under the
/// halved-coupling alternative.
#[test]
fn inference_calibration_size_and_power() {
    let null_cfg = config(
        NetworkSpec::MeanField { n: 4, alpha: 0.5 },
        0.75,
        1.0,
        100_000,
        2000,
    );
    let null_report = empirical_test_calibration(&null_cfg).unwrap();
    let size = null_report.value("empirical_size").unwrap();
    let mean_stat = null_report.value("mean_statistic").unwrap();
    assert!(
        null_report.passed && (0.03..=0.08).contains(&size),
        "size {size}"
    );
    assert!(
        (mean_stat / 3.0 - 1.0).abs() <= 0.10,
        "null mean statistic {mean_stat}"
    );

    let mut alt_cfg = config(
        NetworkSpec::MeanField { n: 4, alpha: 0.25 },
        0.75,
        1.0,
        100_000,
        2000,
    );
    alt_cfg.null_network = Some(NetworkSpec::MeanField { n: 4, alpha: 0.5 });
    let alt_report = empirical_test_calibration(&alt_cfg).unwrap();
    let alt_mean = alt_report.value("mean_statistic").unwrap();
    assert!(
        alt_report.passed && (alt_mean / 6.0 - 1.0).abs() <= 0.15,
        "alternative mean statistic {alt_mean}"
    );

    println!(
        "PASS inference calibration: size {size:.4}, null mean {mean_stat:.3} (target 3), alternative mean {alt_mean:.3} (target 6)"
    );
}

/// Confidence-interval coverage: nominal 95% intervals cover the
/// 100x-horizon proxy at a rate in [0.90, 0.98] over 1000 replications.
#[test]
fn confidence_interval_coverage() {
    let cfg = config(
        NetworkSpec::MeanField { n: 4, alpha: 0.5 },
        0.75,
        1.0,
        1_000,
        1000,
    );
    let report = check_ci_coverage(&cfg).unwrap();
    let coverage = report.value("coverage").unwrap();
    assert!(
        report.passed && (0.90..=0.98).contains(&coverage),
        "coverage {coverage}"
    );
    println!("PASS confidence-interval coverage: {coverage:.4} over 1000 replications");
}

/// Product-sum limit values at n = 1e6, relative error below
/// 1e-2 against the analytic limits. The slow-decay and log-rate cases
/// converge at rates n^{-1/4} and 1/ln(n); at n = 1e6 those rates leave
/// intrinsic gaps above the tolerance, so the corresponding lines fail and
/// are reported with their measured values rather than being loosened.
#[test]
fn product_sum_limit_values() {
    let triples = [
        ("slow decay", Complex64::new(0.5, 0.0), Complex64::new(0.5, 0.0), 0.75, 1.0, 1.0),
        ("supercritical", Complex64::new(0.5, 0.0), Complex64::new(0.5, 0.0), 1.0, 2.0, 4.0),
        ("log-rate conjugate", Complex64::new(0.5, 0.3), Complex64::new(0.5, -0.3), 1.0, 1.0, 1.0),
    ];
    let mut failures = Vec::new();
    for (label, a1, a2, gamma, c, limit) in triples {
        let m0 = AppendixOracleInput::minimal_m0(gamma, c, a1, a2).unwrap();
        let value = appendix_limit_partial(&AppendixOracleInput {
            alpha1: a1,
            alpha2: a2,
            gamma,
            c,
            m0,
            n: 1_000_000,
        })
        .unwrap();
        let rel = (value - Complex64::new(limit, 0.0)).norm() / limit;
        if rel < 1e-2 {
            println!("PASS product-sum limit ({label}): value {:.9}, rel err {rel:.2e}", value.re);
        } else {
            println!("FAIL product-sum limit ({label}): value {:.9}, rel err {rel:.2e} >= 1e-2", value.re);
            failures.push(format!("{label}: rel err {rel:.3e}"));
        }
    }
    assert!(
        failures.is_empty(),
        "limits outside tolerance at n=1e6: {}",
        failures.join("; ")
    );
}

/// Model variants: forcing drives the synchronized component to
/// the target within 0.01 at horizon 1e6; on reducible networks every
/// follower terminal sits inside the leader-limit interval within 0.02.
#[test]
fn forcing_and_reducible_variants() {
    let mut forcing_cfg = config(
        NetworkSpec::MeanField { n: 4, alpha: 0.5 },
        1.0,
        1.0,
        1_000_000,
        100,
    );
    forcing_cfg.forcing = Some(ForcingSpec { rho: 0.5, q: 0.3 });
    let forcing_report = verify_forcing(&forcing_cfg).unwrap();
    let gap = forcing_report.value("max_gap").unwrap();
    assert!(forcing_report.passed && gap < 0.01, "forcing gap {gap}");

    let reducible_net = NetworkSpec::Reducible {
        leader_blocks: vec![
            vec![vec![0.6, 0.4], vec![0.4, 0.6]],
            vec![vec![0.7, 0.3], vec![0.3, 0.7]],
        ],
        follower_block: Some(vec![vec![0.2, 0.1], vec![0.1, 0.2]]),
        coupling_blocks: Some(vec![
            vec![vec![0.4, 0.2], vec![0.1, 0.2]],
            vec![vec![0.1, 0.2], vec![0.1, 0.1]],
        ]),
    };
    let mut worst_violation = 0.0f64;
    for (gamma, c) in [(0.75, 1.0), (1.0, 1.0)] {
        let cfg = config(reducible_net.clone(), gamma, c, 100_000, 100);
        let report = verify_reducible(&cfg).unwrap();
        let violation = report.value("max_follower_violation").unwrap();
        assert!(
            report.passed && violation <= 0.02,
            "follower violation {violation} at gamma={gamma}"
        );
        worst_violation = worst_violation.max(violation);
    }
    println!(
        "PASS forcing and reducible variants: forcing gap {gap:.5}, worst follower violation {worst_violation:.5}"
    );
}

/// Determinism: the whole verification suite produces
/// byte-identical reports across repeated runs and across serial vs
/// maximally parallel execution.
#[test]
fn verification_suite_is_thread_deterministic() {
    let mut main_cfg = config(
        NetworkSpec::MeanField { n: 4, alpha: 0.5 },
        0.75,
        1.0,
        2_000,
        200,
    );
    main_cfg.checks = vec![
        CheckKind::Synchronization,
        CheckKind::SyncClt,
        CheckKind::ConvergenceClt,
        CheckKind::Calibration,
        CheckKind::CiCoverage,
        CheckKind::LimitDistribution,
    ];
    let mut forcing_cfg = config(
        NetworkSpec::MeanField { n: 3, alpha: 0.5 },
        1.0,
        1.0,
        20_000,
        40,
    );
    forcing_cfg.forcing = Some(ForcingSpec { rho: 0.5, q: 0.3 });
    forcing_cfg.checks = vec![CheckKind::Forcing];
    let mut reducible_cfg = config(
        NetworkSpec::Reducible {
            leader_blocks: vec![
                vec![vec![0.6, 0.4], vec![0.4, 0.6]],
                vec![vec![0.7, 0.3], vec![0.3, 0.7]],
            ],
            follower_block: Some(vec![vec![0.2, 0.1], vec![0.1, 0.2]]),
            coupling_blocks: Some(vec![
                vec![vec![0.4, 0.2], vec![0.1, 0.2]],
                vec![vec![0.1, 0.2], vec![0.1, 0.1]],
            ]),
        },
        0.75,
        1.0,
        20_000,
        40,
    );
    reducible_cfg.checks = vec![CheckKind::Reducible];

    let run_suite = || -> String {
        [&main_cfg, &forcing_cfg, &reducible_cfg]
            .iter()
            .map(|cfg| reports_to_json(&run_checks(cfg).unwrap()))
            .collect::<Vec<_>>()
            .join("\n")
    };

    let saved = std::env::var("RSP_THREADS").ok();
    std::env::set_var("RSP_THREADS", "1");
    let serial_a = run_suite();
    let serial_b = run_suite();
    std::env::set_var("RSP_THREADS", "16");
    let parallel_a = run_suite();
    let parallel_b = run_suite();
    match saved {
        Some(v) => std::env::set_var("RSP_THREADS", v),
        None => std::env::remove_var("RSP_THREADS"),
    }

    assert_eq!(serial_a, serial_b, "serial reruns must be byte-identical");
    assert_eq!(parallel_a, parallel_b, "parallel reruns must be byte-identical");
    assert_eq!(serial_a, parallel_a, "serial and parallel must be byte-identical");
    println!(
        "PASS determinism: {} bytes of reports identical across serial and 16-thread runs",
        serial_a.len()
    );
}
