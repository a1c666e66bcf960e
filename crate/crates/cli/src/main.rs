//! Command-line driver for the cluster-kinetics laboratory.
//!
//! Subcommands:
//! * `simulate` -- run one configured scenario and write its artifacts
//! * `sweep`    -- run a scenario once per scale parameter on the ladder
//! * `check`    -- invariant suite over random states
//! * `expand-ql` -- table of exact vs asymptotic scaled partition coefficients
//!
//! Exit code 0 means every certification passed; 2 flags a certification
//! failure; 1 an execution error.

use anyhow::{Context, Result};
use bdlab_core::experiments::{run_scenario, ExperimentConfig};
use bdlab_core::rates::{
    asymptotic_log_scaled_q, compute_asymptotic_constants, exact_log_scaled_q, partition_coeffs,
    RateParams,
};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bdlab",
    version,
    about = "cluster kinetics gradient-flow laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Path to the experiment config (TOML key = value sections).
    #[arg(long)]
    config: PathBuf,
    /// Output directory override (also honored: BDLAB_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress lines and passing certifications; failures still print.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario from a config file.
    Simulate(CommonOpts),
    /// Run the configured scenario once per ladder entry, in ladder order.
    Sweep(CommonOpts),
    /// Invariant suite over random states.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        quiet: bool,
    },
    /// Emit the exact vs asymptotic log-scaled partition coefficient table.
    ExpandQl {
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        z_s: f64,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        /// Largest size; the table runs over powers of two from 2.
        #[arg(long, default_value_t = 16384)]
        l_max: usize,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(opts) => {
            let (cfg, out) = load(&opts)?;
            if !opts.quiet {
                eprintln!(
                    "simulate: scenario {} -> {}",
                    cfg.scenario.tag(),
                    out.display()
                );
            }
            let summary = run_scenario(&cfg, &out)
                .with_context(|| format!("scenario {}", cfg.scenario.tag()))?;
            print_certs(&summary, opts.quiet);
            Ok(summary.all_passed())
        }
        Command::Sweep(opts) => {
            let (cfg, out) = load(&opts)?;
            let mut all = true;
            for (i, &eps) in cfg.rescale.eps_ladder.iter().enumerate() {
                let mut single = cfg.clone();
                single.rescale.eps_ladder = vec![eps];
                let dir = out.join(format!("sweep-{i:02}-eps-{eps:.4}"));
                if !opts.quiet {
                    eprintln!("sweep: eps = {eps} -> {}", dir.display());
                }
                let summary =
                    run_scenario(&single, &dir).with_context(|| format!("sweep at eps = {eps}"))?;
                print_certs(&summary, opts.quiet);
                all &= summary.all_passed();
            }
            Ok(all)
        }
        Command::Check { seed, quiet } => Ok(run_check(seed, quiet)),
        Command::ExpandQl {
            alpha,
            gamma,
            z_s,
            q,
            l_max,
            out,
            quiet,
        } => {
            let params = RateParams::new(alpha, gamma, z_s, q)?;
            let table = partition_coeffs(&params, l_max.max(4))?;
            let consts = compute_asymptotic_constants(&params, 1 << 22, 1e-2)?;
            let mut csv = String::from("l,exact,asymptotic,rel_err,rel_err_weighted\n");
            let mut l = 2usize;
            while l <= l_max {
                let exact = exact_log_scaled_q(&table, l);
                let pred = asymptotic_log_scaled_q(&params, &consts, l);
                let rel = (pred / exact - 1.0).abs();
                csv.push_str(&format!(
                    "{l},{exact:.12e},{pred:.12e},{rel:.6e},{:.6e}\n",
                    rel * (l as f64).powf(gamma)
                ));
                l *= 2;
            }
            match out {
                Some(path) => std::fs::write(&path, csv)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{csv}"),
            }
            if !quiet {
                eprintln!(
                    "expand-ql: C1 = {:.12}, F0 = {:.12}, remainder <= {:.3e}",
                    consts.c1, consts.f0, consts.remainder_bound
                );
            }
            Ok(true)
        }
    }
}

fn load(opts: &CommonOpts) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::from_path(&opts.config)
        .with_context(|| format!("loading {}", opts.config.display()))?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    let out = opts
        .out
        .clone()
        .or_else(|| std::env::var_os("BDLAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    Ok((cfg, out))
}

fn print_certs(summary: &bdlab_core::experiments::RunSummary, quiet: bool) {
    for c in &summary.certifications {
        if !quiet || !c.passed {
            println!(
                "cert {:<44} value={:>13.6e} bound={:>13.6e} {}",
                c.name,
                c.value,
                c.bound,
                if c.passed { "pass" } else { "FAIL" }
            );
        }
    }
}

/// Invariant suite over random states: the identity checks that make the
/// gradient structure trustworthy at desk scale, printed one per line.
fn run_check(seed: u64, quiet: bool) -> bool {
    use bdlab_core::bd::{
        action, bd_rhs, dissipation, energy_gradient, gradient_flow_residual, onsager_apply,
        ClusterState, CovectorField,
    };
    use bdlab_core::lsw::{dissipation_at, mean_field_u, Particle, ParticleEnsemble};
    use bdlab_core::numerics::log_mean;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let params = RateParams::new(0.0, 0.5, 1.0, 1.0).expect("valid defaults");
    let table = partition_coeffs(&params, 256).expect("table");
    let mut all = true;
    let mut report = |name: &str, ok: bool, detail: String| {
        all &= ok;
        if !quiet || !ok {
            println!(
                "check {name:<40} {} {detail}",
                if ok { "pass" } else { "FAIL" }
            );
        }
    };

    // detailed balance
    let mut worst = 0.0_f64;
    for z in [0.2, 0.5, 0.8, 0.95, 1.0] {
        worst = worst.max(table.detailed_balance_residual(z).expect("z in range"));
    }
    report(
        "detailed_balance",
        worst <= 1e-12,
        format!("residual={worst:.3e}"),
    );

    // gradient-flow identity on random strictly positive states
    let mut worst = 0.0_f64;
    for &len in &[8usize, 64, 256] {
        for _ in 0..100 {
            let n: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..2.0)).collect();
            let s = ClusterState::new(n).unwrap();
            let r = gradient_flow_residual(&params, &table, &s, 1.0).unwrap();
            let scale = 1.0
                + bd_rhs(&params, &s)
                    .iter()
                    .fold(0.0_f64, |m, v| m.max(v.abs()));
            worst = worst.max(r / scale);
        }
    }
    report(
        "gradient_flow_identity",
        worst <= 1e-10,
        format!("residual={worst:.3e}"),
    );

    // mass orthogonality of the Onsager operator
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let n: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..2.0)).collect();
        let s = ClusterState::new(n).unwrap();
        let phi = CovectorField {
            phi: (0..64).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        };
        let out = onsager_apply(&params, &s, &phi).unwrap();
        let mdot: f64 = out
            .iter()
            .enumerate()
            .map(|(i, v)| (i + 1) as f64 * v)
            .sum();
        let scale: f64 = out.iter().map(|v| v.abs()).sum::<f64>().max(1e-30);
        worst = worst.max(mdot.abs() / scale);
    }
    report(
        "onsager_mass_orthogonal",
        worst <= 1e-12,
        format!("residual={worst:.3e}"),
    );

    // dissipation = action at the energy gradient, and nonnegative
    let mut ok = true;
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let n: Vec<f64> = (0..48).map(|_| rng.gen_range(0.05..2.0)).collect();
        let s = ClusterState::new(n).unwrap();
        let d = dissipation(&params, &s);
        ok &= d >= 0.0;
        let minus_df = CovectorField {
            phi: energy_gradient(&table, &s, 1.0)
                .phi
                .iter()
                .map(|v| -v)
                .collect(),
        };
        let a = action(&params, &s, &minus_df).unwrap();
        worst = worst.max((d - a).abs() / d.max(1.0));
        ok &= (d - a).abs() <= 1e-10 * d.max(1.0);
    }
    report(
        "dissipation_equals_action_at_gradient",
        ok,
        format!("gap={worst:.3e}"),
    );

    // logarithmic mean bounds
    let mut ok = true;
    for _ in 0..1000 {
        let a: f64 = rng.gen_range(1e-8..1e8);
        let b: f64 = rng.gen_range(1e-8..1e8);
        let lm = log_mean(a, b);
        ok &= lm >= (a * b).sqrt() * (1.0 - 1e-12) && lm <= 0.5 * (a + b) * (1.0 + 1e-12);
    }
    report("log_mean_bounds", ok, String::new());

    // particle mean field is the dissipation minimizer
    let mut ok = true;
    let lp = bdlab_core::lsw::LswParams::new(0.0, 0.5, 1.0, 1.0).unwrap();
    for _ in 0..20 {
        let e = ParticleEnsemble::new(
            (0..12)
                .map(|_| Particle {
                    lambda: rng.gen_range(0.2..8.0),
                    mass: rng.gen_range(0.1..2.0),
                })
                .collect(),
        )
        .unwrap();
        let u = mean_field_u(&lp, &e).unwrap();
        let du = dissipation_at(&lp, &e, u);
        let mut c = u - 1.0;
        while c <= u + 1.0 {
            if dissipation_at(&lp, &e, c) < du - 1e-8 {
                ok = false;
            }
            c += 1e-3;
        }
    }
    report("mean_field_minimizes_dissipation", ok, String::new());

    // network instance agrees with the direct cluster implementation
    let net = bdlab_core::network::build_bd_network(&params, &table, 1.0, 48).unwrap();
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let n: Vec<f64> = (0..48).map(|_| rng.gen_range(0.05..2.0)).collect();
        let s = ClusterState::new(n.clone()).unwrap();
        let r1 = bd_rhs(&params, &s);
        let r2 = net.rhs(&n);
        let scale = 1.0 + r1.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (a, b) in r1.iter().zip(&r2) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    report(
        "network_equivalence",
        worst <= 1e-12,
        format!("gap={worst:.3e}"),
    );

    all
}
