//! Acceptance suite: every certification the laboratory must pass, one
//! criterion per test, each printing a single pass line. Tolerances are
//! pinned here, not configured.

use bdlab_core::bd::{
    self, action, bd_rhs, covector_with_scaled_increments, dissipation, energy_gradient,
    gradient_flow_residual, BdControls, ClusterState, CovectorField,
};
use bdlab_core::experiments::config::{ExperimentConfig, Scenario};
use bdlab_core::experiments::{initial, run_scenario};
use bdlab_core::integrate::StepControls;
use bdlab_core::lsw::{
    self, dissipation_at, integrate_lsw, lsw_curve_j, mean_field_u, LswControls, LswParams,
    Particle, ParticleEnsemble,
};
use bdlab_core::network::{
    build_bd_network, modified_bd_energy, modified_bd_rhs, modified_gradient_residual,
};
use bdlab_core::rates::{
    asymptotic_log_scaled_q, compute_asymptotic_constants, exact_log_scaled_q, partition_coeffs,
    RateParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::time::Instant;

fn default_params() -> RateParams {
    RateParams::new(0.0, 0.5, 1.0, 1.0).unwrap()
}

fn pass(criterion: &str, detail: String) {
    println!("acceptance {criterion}: PASS ({detail})");
}

/// The canonical supersaturated run shared by criteria 3, 4, and 5:
/// L = 512, default rates, equilibrium-plus-bump data, T = 10.
fn canonical_bump_run() -> (
    RateParams,
    bdlab_core::rates::EquilibriumTable,
    bd::CurveRecord,
) {
    let p = default_params();
    let table = partition_coeffs(&p, 512).unwrap();
    let state0 = initial::equilibrium_bump(&table, 512, 0.1, 1.0, 0.5, 1.0).unwrap();
    assert!(state0.mass() > 10.0, "run must be supersaturated");
    let controls = BdControls {
        step: StepControls {
            dt_max: 10.0 / 1024.0,
            ..Default::default()
        },
        time_scale: 1.0,
        sample_count: 200,
        reference_z: None,
    };
    let rec = bd::integrate_bd(&p, &table, &state0, 10.0, &controls).unwrap();
    (p, table, rec)
}

#[test]
fn criterion_01_gradient_flow_identity() {
    let start = Instant::now();
    let p = default_params();
    let table = partition_coeffs(&p, 256).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for &len in &[8usize, 64, 256] {
        for _ in 0..100 {
            let state =
                ClusterState::new((0..len).map(|_| rng.gen_range(0.05..2.0)).collect()).unwrap();
            let resid = gradient_flow_residual(&p, &table, &state, 1.0).unwrap();
            let scale = 1.0
                + bd_rhs(&p, &state)
                    .iter()
                    .fold(0.0_f64, |m, v| m.max(v.abs()));
            worst = worst.max(resid / scale);
            assert!(resid <= 1e-10 * scale, "residual {resid} at L = {len}");
        }
    }
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 5.0, "runtime {dt:?} exceeds 5 s");
    pass(
        "01 gradient_flow_identity",
        format!("worst {worst:.3e}, {dt:?}"),
    );
}

#[test]
fn criterion_02_detailed_balance() {
    let start = Instant::now();
    let p = default_params();
    let table = partition_coeffs(&p, 10_000).unwrap();
    let mut worst = 0.0_f64;
    for z in [0.1, 0.4, 0.7, 0.9, 1.0] {
        let r = table.detailed_balance_residual(z).unwrap();
        worst = worst.max(r);
        assert!(r <= 1e-12, "residual {r} at z = {z}");
    }
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "runtime {dt:?} exceeds 1 s");
    pass("02 detailed_balance", format!("worst {worst:.3e}, {dt:?}"));
}

#[test]
fn criterion_03_mass_conservation() {
    let (_, _, rec) = canonical_bump_run();
    let drift = rec.mass_drift();
    assert!(drift <= 1e-8, "mass drift {drift}");
    pass(
        "03 mass_conservation",
        format!(
            "drift {drift:.3e}, truncation metric {:.3e}",
            rec.truncation_metric
        ),
    );
}

#[test]
fn criterion_04_energy_dissipation_identity() {
    let (_, _, rec) = canonical_bump_run();
    let resid = rec.energy_dissipation_residual().abs();
    let df = (rec.free_energy.last().unwrap() - rec.free_energy[0]).abs();
    let bound = (1e-3 * df).max(1e-6);
    assert!(resid <= bound, "residual {resid} vs bound {bound}");
    assert!(
        rec.free_energy
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs())),
        "free energy increased at an accepted step"
    );
    pass(
        "04 energy_dissipation_identity",
        format!("residual {resid:.3e} <= {bound:.3e}"),
    );
}

#[test]
fn criterion_05_j_certification() {
    // cluster side
    let (p, table, rec) = canonical_bump_run();
    let int_d = rec
        .times
        .windows(2)
        .zip(rec.dissipation.windows(2))
        .map(|(t, d)| 0.5 * (t[1] - t[0]) * (d[0] + d[1]))
        .sum::<f64>();
    let df = (rec.free_energy.last().unwrap() - rec.free_energy[0]).abs();
    let tol = 1e-4 * (df + int_d);
    let j = bd::curve_j(&p, &rec, None).unwrap();
    assert!(j.j.abs() <= tol, "BD J = {} vs tol {tol}", j.j);
    let scales = vec![1.1; 511];
    let cov: Vec<CovectorField> = rec
        .states
        .iter()
        .map(|s| covector_with_scaled_increments(&table, s, 1.0, &scales).unwrap())
        .collect();
    let j_pert = bd::curve_j(&p, &rec, Some(&cov)).unwrap();
    assert!(
        j_pert.j > 10.0 * tol,
        "perturbed BD J = {} vs 10 tol {}",
        j_pert.j,
        10.0 * tol
    );

    // particle side
    let lp = LswParams::new(0.0, 0.5, 1.0, 10.0).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let ens = ParticleEnsemble::new(
        (0..10)
            .map(|_| Particle {
                lambda: rng.gen_range(1.0..6.0),
                mass: rng.gen_range(0.5..1.5),
            })
            .collect(),
    )
    .unwrap();
    let controls = LswControls {
        step: StepControls {
            dt_max: 2.0 / 1024.0,
            ..Default::default()
        },
        sample_count: 200,
        ..Default::default()
    };
    let lrec = integrate_lsw(&lp, &ens, 2.0, &controls).unwrap();
    assert!(lrec.retirements.is_empty());
    let int_d_l = lrec
        .times
        .windows(2)
        .zip(lrec.dissipation.windows(2))
        .map(|(t, d)| 0.5 * (t[1] - t[0]) * (d[0] + d[1]))
        .sum::<f64>();
    let de = (lrec.energy.last().unwrap() - lrec.energy[0]).abs();
    let tol_l = 1e-4 * (de + int_d_l);
    let jl = lsw_curve_j(&lp, &lrec, None).unwrap();
    assert!(jl.j.abs() <= tol_l, "LSW J = {} vs tol {tol_l}", jl.j);
    let ws: Vec<Vec<f64>> = lrec
        .ensembles
        .iter()
        .map(|e| {
            let u = mean_field_u(&lp, e).unwrap();
            e.atoms
                .iter()
                .map(|a| 1.1 * (u - a.lambda.powf(-0.5)))
                .collect()
        })
        .collect();
    let jl_pert = lsw_curve_j(&lp, &lrec, Some(&ws)).unwrap();
    assert!(jl_pert.j > 10.0 * tol_l, "perturbed LSW J = {}", jl_pert.j);
    pass(
        "05 j_certification",
        format!(
            "BD {:.3e} <= {tol:.3e}, perturbed {:.3e}; LSW {:.3e} <= {tol_l:.3e}, perturbed {:.3e}",
            j.j, j_pert.j, jl.j, jl_pert.j
        ),
    );
}

#[test]
fn criterion_06_expansion_error_decay() {
    let start = Instant::now();
    let p = default_params();
    let table = partition_coeffs(&p, 16_384).unwrap();
    let consts = compute_asymptotic_constants(&p, 1 << 22, 1e-2).unwrap();
    let mut prev = f64::INFINITY;
    let mut weighted_max = 0.0_f64;
    for l in [64usize, 256, 1024, 4096, 16_384] {
        let err =
            (asymptotic_log_scaled_q(&p, &consts, l) / exact_log_scaled_q(&table, l) - 1.0).abs();
        weighted_max = weighted_max.max(err * (l as f64).sqrt());
        assert!(err < prev, "error not strictly decreasing at l = {l}");
        prev = err;
    }
    assert!(
        weighted_max < 1.0,
        "weighted error {weighted_max} unbounded"
    );
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "runtime {dt:?} exceeds 1 s");
    pass(
        "06 expansion_error_decay",
        format!("max err * l^gamma = {weighted_max:.3e}, {dt:?}"),
    );
}

#[test]
fn criterion_07_particle_method() {
    // single particle stays put
    let lp = LswParams::new(0.0, 0.5, 1.0, 1.0).unwrap();
    let single = ParticleEnsemble::new(vec![Particle {
        lambda: 2.0,
        mass: 1.0,
    }])
    .unwrap();
    let rec = integrate_lsw(&lp, &single, 5.0, &LswControls::default()).unwrap();
    let lam_t = rec.ensembles.last().unwrap().atoms[0].lambda;
    assert!((lam_t - 2.0).abs() <= 1e-12 * 2.0, "drifted to {lam_t}");

    // two-particle hand case, expected values re-derived here from the
    // constrained mean-field formulas
    let (l1, l2, m) = (1.0_f64, 4.0_f64, 1.0_f64);
    let u_expect = (m * l1.powf(-0.5) + m * l2.powf(-0.5)) / (m * l1.powf(0.0) + m * l2.powf(0.0));
    assert_eq!(u_expect, 0.75);
    let d_expect = m * (u_expect - l1.powf(-0.5)).powi(2) + m * (u_expect - l2.powf(-0.5)).powi(2);
    assert_eq!(d_expect, 0.125);
    let two = ParticleEnsemble::new(vec![
        Particle {
            lambda: l1,
            mass: m,
        },
        Particle {
            lambda: l2,
            mass: m,
        },
    ])
    .unwrap();
    let u = mean_field_u(&lp, &two).unwrap();
    assert!((u - u_expect).abs() < 1e-15);
    let d = lsw::lsw_dissipation(&lp, &two).unwrap();
    assert!((d - d_expect).abs() < 1e-15);

    // first-moment conservation until retirement on a run where the small
    // particle does retire
    let controls = LswControls {
        step: StepControls {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            ..Default::default()
        },
        ..Default::default()
    };
    let rec = integrate_lsw(&lp, &two, 6.0, &controls).unwrap();
    assert!(
        !rec.retirements.is_empty(),
        "expected a retirement within the horizon"
    );
    let drift = rec.first_moment_drift();
    assert!(drift <= 1e-8, "first-moment drift {drift}");
    pass(
        "07 particle_method",
        format!(
            "u = {u}, D = {d}, drift {drift:.3e}, vanished {:.3e}",
            rec.vanished_mass()
        ),
    );
}

#[test]
fn criterion_08_mean_field_minimality() {
    let lp = LswParams::new(0.0, 0.5, 1.0, 1.0).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let ens = ParticleEnsemble::new(
            (0..rng.gen_range(3..20))
                .map(|_| Particle {
                    lambda: rng.gen_range(0.2..8.0),
                    mass: rng.gen_range(0.1..2.0),
                })
                .collect(),
        )
        .unwrap();
        let u = mean_field_u(&lp, &ens).unwrap();
        let d_u = dissipation_at(&lp, &ens, u);
        let mut c = u - 1.0;
        while c <= u + 1.0 {
            let gain = d_u - dissipation_at(&lp, &ens, c);
            worst = worst.max(gain);
            assert!(gain <= 1e-8, "grid beat the mean field by {gain}");
            c += 1e-4;
        }
    }
    pass(
        "08 mean_field_minimality",
        format!("best grid gain {worst:.3e}"),
    );
}

#[test]
fn criterion_09_network_equivalence() {
    let p = default_params();
    let table = partition_coeffs(&p, 32).unwrap();
    let net = build_bd_network(&p, &table, 1.0, 32).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let n: Vec<f64> = (0..32).map(|_| rng.gen_range(0.05..2.0)).collect();
        let state = ClusterState::new(n.clone()).unwrap();
        let r1 = bd_rhs(&p, &state);
        let r2 = net.rhs(&n);
        let scale = 1.0 + r1.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (a, b) in r1.iter().zip(&r2) {
            worst = worst.max((a - b).abs() / scale);
            assert!((a - b).abs() <= 1e-12 * scale);
        }
        let f1 = bd::free_energy(&table, &state, 1.0).unwrap();
        let f2 = net.free_energy(&n);
        assert!((f1 - f2).abs() <= 1e-12 * (1.0 + f1.abs()));
        let d1 = dissipation(&p, &state);
        let d2 = net.dissipation(&n);
        assert!((d1 - d2).abs() <= 1e-12 * (1.0 + d1));
    }
    // conservation laws on random small networks
    let mut worst_cons = 0.0_f64;
    for trial in 0..10 {
        let n = 5 + trial % 6;
        let net = random_balanced_network(&mut rng, n, n + 2);
        let basis = net.conservation_basis().unwrap();
        let state: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
        let dn = net.rhs(&state);
        let scale: f64 = dn.iter().map(|v| v.abs()).sum::<f64>().max(1e-30);
        for s in &basis {
            let dot: f64 = s.iter().zip(&dn).map(|(&si, &di)| si as f64 * di).sum();
            worst_cons = worst_cons.max(dot.abs() / scale);
            assert!(dot.abs() <= 1e-12 * scale, "conservation violated: {dot}");
        }
    }
    pass(
        "09 network_equivalence",
        format!("worst rhs gap {worst:.3e}, worst conservation {worst_cons:.3e}"),
    );
}

fn random_balanced_network(
    rng: &mut ChaCha12Rng,
    n: usize,
    r: usize,
) -> bdlab_core::network::ReactionNetwork {
    use bdlab_core::network::{RawReaction, ReactionNetwork};
    let omega: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..3.0)).collect();
    let log_omega: Vec<f64> = omega.iter().map(|w| w.ln()).collect();
    let raw = (0..r)
        .map(|_| loop {
            let mut x: Vec<(usize, u32)> = vec![(rng.gen_range(0..n), rng.gen_range(1..=2u32))];
            if rng.gen_bool(0.5) {
                x.push((rng.gen_range(0..n), 1));
            }
            let y: Vec<(usize, u32)> = vec![(rng.gen_range(0..n), rng.gen_range(1..=2u32))];
            let mut xs = x.clone();
            let mut ys = y.clone();
            xs.sort_unstable();
            ys.sort_unstable();
            if xs == ys {
                continue;
            }
            let k_plus: f64 = rng.gen_range(0.3..3.0);
            let lx: f64 = x.iter().map(|&(i, c)| c as f64 * log_omega[i]).sum();
            let ly: f64 = y.iter().map(|&(i, c)| c as f64 * log_omega[i]).sum();
            let k_minus = (k_plus.ln() + lx - ly).exp();
            break RawReaction {
                x,
                y,
                k_plus,
                k_minus,
            };
        })
        .collect();
    ReactionNetwork::new(omega, raw).unwrap()
}

fn scenario_config(scenario: Scenario) -> ExperimentConfig {
    let text = match scenario {
        Scenario::Quasistat => {
            r#"
scenario = "quasistat"
seed = 7
[rates]
alpha = 0.0
gamma = 0.5
z_s = 1.0
q = 3.0
[rescale]
eps_ladder = [0.2, 0.1, 0.05]
cutoff_exponent = 0.3
[integrator]
t_final = 3.0
dt_init = 1e-6
dt_min = 1e-13
dt_max = 0.0
rel_tol = 1e-8
abs_tol = 1e-12
sample_count = 240
truncation = 320
"#
        }
        Scenario::Converge => {
            r#"
scenario = "converge"
seed = 7
[rates]
alpha = 0.0
gamma = 0.5
z_s = 1.0
q = 3.0
[rescale]
eps_ladder = [0.1, 0.05, 0.025]
cutoff_exponent = 0.45
[integrator]
t_final = 1.2
dt_init = 1e-6
dt_min = 1e-13
dt_max = 0.0
rel_tol = 1e-8
abs_tol = 1e-12
sample_count = 240
truncation = 320
"#
        }
        _ => unreachable!(),
    };
    ExperimentConfig::from_str(text).unwrap()
}

#[test]
fn criterion_10_quasistationarity() {
    let start = Instant::now();
    let cfg = scenario_config(Scenario::Quasistat);
    let dir = tempfile::tempdir().unwrap();
    let summary = run_scenario(&cfg, dir.path()).unwrap();
    for want in ["hu_l2_strictly_decreasing", "fmic_avg_strictly_decreasing"] {
        let c = summary
            .certifications
            .iter()
            .find(|c| c.name == want)
            .unwrap_or_else(|| panic!("missing certification {want}"));
        assert!(c.passed, "{want} failed");
    }
    // the certified entropy inequality holds at every sample of every run
    for c in summary
        .certifications
        .iter()
        .filter(|c| c.name.starts_with("quasistationary"))
    {
        assert!(c.passed, "{} failed with gap {}", c.name, c.value);
    }
    let dt = start.elapsed();
    assert!(
        dt.as_secs_f64() < 600.0,
        "ladder runtime {dt:?} exceeds 10 min"
    );
    pass("10 quasistationarity", format!("ladder in {dt:?}"));
}

#[test]
fn criterion_11_macroscopic_limit_trend() {
    let cfg = scenario_config(Scenario::Converge);
    let dir = tempfile::tempdir().unwrap();
    let summary = run_scenario(&cfg, dir.path()).unwrap();
    for want in [
        "distance_decreasing_t_half",
        "distance_decreasing_t_full",
        "energy_gap_decreasing_t_half",
        "energy_gap_decreasing_t_full",
    ] {
        let c = summary
            .certifications
            .iter()
            .find(|c| c.name == want)
            .unwrap_or_else(|| panic!("missing certification {want}"));
        assert!(c.passed, "{want} failed");
    }
    pass(
        "11 macroscopic_limit_trend",
        "distances and energy gaps decrease".into(),
    );
}

#[test]
fn criterion_12_modified_system() {
    let p = default_params();
    let table = partition_coeffs(&p, 24).unwrap();
    let omega: Vec<f64> = (1..=24).map(|l| table.omega(1.0, l)).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(12);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let n: Vec<f64> = (0..24).map(|_| rng.gen_range(0.05..1.5)).collect();
        let resid = modified_gradient_residual(&p, &omega, &n).unwrap();
        let scale = 1.0
            + modified_bd_rhs(&p, &n)
                .iter()
                .fold(0.0_f64, |m, v| m.max(v.abs()));
        worst = worst.max(resid / scale);
        assert!(resid <= 1e-10 * scale, "residual {resid}");
    }
    // energy nonincreasing along a modified-dynamics run
    let n0: Vec<f64> = (0..24).map(|_| rng.gen_range(0.05..0.6)).collect();
    let om = omega.clone();
    let mut energies = Vec::new();
    bdlab_core::integrate::integrate_adaptive(
        |_t, y, dy| dy.copy_from_slice(&modified_bd_rhs(&p, y)),
        &n0,
        3.0,
        &StepControls::default(),
        |_t, _o, new, _s| {
            for v in new.iter_mut() {
                if *v < 0.0 && *v > -1e-14 {
                    *v = 0.0;
                }
            }
            bdlab_core::integrate::StepVerdict::Accept
        },
        |_t, y, _dt| energies.push(modified_bd_energy(&om, y)),
    )
    .unwrap();
    assert!(
        energies
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs())),
        "modified free energy increased"
    );
    pass(
        "12 modified_system",
        format!(
            "worst residual {worst:.3e}, dF = {:.3e}",
            energies.last().unwrap() - energies[0]
        ),
    );
}

// criteria 5 and 12 make use of `action` and `energy_gradient` indirectly
// through the covector builders; keep the imports honest
#[allow(dead_code)]
fn _imports(p: &RateParams, t: &bdlab_core::rates::EquilibriumTable, s: &ClusterState) {
    let g = energy_gradient(t, s, 1.0);
    let _ = action(p, s, &g);
}
