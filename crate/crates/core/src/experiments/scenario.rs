//! Scenario engines: reproducible experiment runs wired from config to
//! artifact files, each ending in a set of certification checks that decide
//! the process exit code.

use super::config::{ExperimentConfig, Scenario};
use super::initial;
use super::output::{
    cluster_csv, diagnostics_csv, timeseries_csv, write_file, Certification, DiagnosticsRow,
    RunSummary, TimeSeriesRow,
};
use crate::bd::{self, BdControls, ClusterState, CurveRecord};
use crate::error::{CoreError, Result};
use crate::lsw::{
    self, integrate_lsw, lsw_curve_j, measure_distance, Dictionary, LswControls, LswParams,
};
use crate::rates::{partition_coeffs, saturation_mass, solve_fugacity, EquilibriumTable};
use crate::rescale::{
    self, lsi_bound, macroscopic_u_eps, monomer_excess, project_mac, quasistationary_entropy,
    rescaled_energies, sqrt_dissipation_mic, RescaleParams,
};
use rayon::prelude::*;
use std::path::Path;

/// Runs the configured scenario, writes all artifacts beneath `out_dir`, and
/// returns the summary (also written as `summary.txt`).
pub fn run_scenario(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let start = std::time::Instant::now();
    if !cfg.rates.limit_condition_holds() {
        eprintln!(
            "warning: alpha = {} < 1 - 3 gamma = {}; the macroscopic-limit theory does not cover these rates",
            cfg.rates.alpha,
            1.0 - 3.0 * cfg.rates.gamma
        );
    }
    let mut summary = match cfg.scenario {
        Scenario::BdRelax => run_bd_relax(cfg, out_dir)?,
        Scenario::BdRescaled => run_bd_rescaled(cfg, out_dir)?,
        Scenario::Lsw => run_lsw_scenario(cfg, out_dir)?,
        Scenario::Quasistat => run_quasistat(cfg, out_dir)?,
        Scenario::Converge => run_converge(cfg, out_dir)?,
        Scenario::Network => run_network(cfg, out_dir)?,
    };
    summary.scenario = cfg.scenario.tag().into();
    if !cfg.rates.limit_condition_holds() {
        summary.notes.push((
            "limit_condition".into(),
            "violated: alpha < 1 - 3 gamma".into(),
        ));
    }
    summary.config_echo = cfg.echo();
    summary.wall_ms = start.elapsed().as_millis();
    write_file(out_dir, "summary.txt", &summary.render())?;
    Ok(summary)
}

fn build_table(cfg: &ExperimentConfig) -> Result<EquilibriumTable> {
    partition_coeffs(&cfg.rates, cfg.integrator.truncation.max(4))
}

fn make_cluster_initial(
    cfg: &ExperimentConfig,
    table: &EquilibriumTable,
    eps: f64,
) -> Result<ClusterState> {
    match initial::make_initial(
        &cfg.initial.family,
        table,
        &cfg.initial,
        cfg.seed,
        cfg.integrator.truncation,
        eps,
        cfg.rescale.cutoff_exponent,
    )? {
        initial::InitialState::Cluster(s) => Ok(s),
        initial::InitialState::Particles(_) => Err(CoreError::InvalidConfig(format!(
            "family {} yields particles; this scenario needs a cluster state",
            cfg.initial.family
        ))),
    }
}

/// Index of the first finite dissipation sample; empty-cluster starts carry
/// an infinite initial dissipation that the quadrature must skip.
fn finite_window_start(d: &[f64]) -> usize {
    d.iter().position(|v| v.is_finite()).unwrap_or(0)
}

/// Energy-dissipation residual and solver-curve certification value on the
/// finite window of a cluster run.
fn bd_certs(cfg: &ExperimentConfig, rec: &CurveRecord, tag: &str) -> (Vec<Certification>, usize) {
    let c = &cfg.certify;
    let w = finite_window_start(&rec.dissipation);
    let t = &rec.times[w..];
    let d = &rec.dissipation[w..];
    let df = rec.free_energy.last().unwrap() - rec.free_energy[w];
    let int_d = bd::trapezoid(t, d);
    let resid = (df + int_d).abs();
    let ed_bound = c
        .energy_dissipation_abs
        .max(c.energy_dissipation_rel * df.abs());
    let j_budget = df.abs() + int_d;
    let mut certs = vec![
        Certification::upper(format!("mass_drift{tag}"), rec.mass_drift(), c.mass_drift),
        Certification::upper(format!("energy_dissipation{tag}"), resid, ed_bound),
        Certification::upper(format!("j_residual{tag}"), resid, c.j_rel * j_budget),
        Certification::boolean(
            format!("free_energy_monotone{tag}"),
            rec.free_energy
                .windows(2)
                .all(|v| v[1] <= v[0] + 1e-10 * (1.0 + v[0].abs())),
        ),
    ];
    if w > 0 {
        certs.push(Certification::boolean(
            format!("ed_window_shifted{tag}"),
            true,
        ));
    }
    (certs, w)
}

/// Output of one rescaled cluster run with its per-sample diagnostics.
struct RescaledRun {
    rp: RescaleParams,
    record: CurveRecord,
    rows: Vec<TimeSeriesRow>,
    diagnostics: Vec<DiagnosticsRow>,
    certs: Vec<Certification>,
    /// Trapezoid of `(h - u)^2` over the sample grid.
    hu2: f64,
    /// Trapezoid of the rescaled macroscopic dissipation.
    int_d_mac_eps: f64,
    /// Time average of the rescaled microscopic free energy.
    fmic_avg: f64,
    /// Worst violation `H_mic - C_EED Dbar_mic` over all samples (run cutoff
    /// and the diagnostic cutoff 8).
    worst_entropy_gap: f64,
}

fn run_rescaled_single(
    cfg: &ExperimentConfig,
    table: &EquilibriumTable,
    rho_s: f64,
    eps: f64,
) -> Result<RescaledRun> {
    let params = &cfg.rates;
    let rp = RescaleParams::new(eps, cfg.rescale.cutoff_exponent)?;
    let state0 = make_cluster_initial(cfg, table, eps)?;
    let controls = BdControls {
        step: cfg.integrator.step_controls(),
        time_scale: rp.time_scale(params),
        sample_count: cfg.integrator.sample_count,
        reference_z: None,
    };
    let record = bd::integrate_bd(params, table, &state0, cfg.integrator.t_final, &controls)?;

    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    let mut hs = Vec::new();
    let mut us = Vec::new();
    let mut fmics = Vec::new();
    let mut worst_gap = f64::NEG_INFINITY;
    let sample_times = record.sample_times();
    let l0_diag = rp.l0.max(8);
    // cumulative dense quadrature for the partial certification functional
    let w0 = finite_window_start(&record.dissipation);
    let mut cum = 0.0;
    let mut dense_k = w0;
    for (s, &idx) in record.sample_indices.iter().enumerate() {
        let state = &record.states[s];
        let t = sample_times[s];
        while dense_k < idx {
            cum += 0.5
                * (record.times[dense_k + 1] - record.times[dense_k])
                * (record.dissipation[dense_k] + record.dissipation[dense_k + 1]);
            dense_k += 1;
        }
        let split = rescaled_energies(params, table, state, &rp);
        let rates = rescale::rescaled_action_dissipation(
            params,
            state,
            &bd::CovectorField {
                phi: vec![0.0; state.len()],
            },
            &rp,
        )?;
        let h = monomer_excess(params, state, eps);
        let u = macroscopic_u_eps(params, state, &rp, false)?;
        hs.push(h);
        us.push(u);
        fmics.push(split.f_mic);
        // quasistationarity: certified inequality at the run cutoff and at
        // the diagnostic cutoff
        let h_mic_run = quasistationary_entropy(table, state, rp.l0)?;
        if rp.l0 >= 3 {
            let b = lsi_bound(params, table, state, rp.l0)?;
            let dbar = sqrt_dissipation_mic(params, table, state, rp.l0)?;
            worst_gap = worst_gap.max(h_mic_run - b.c_eed * dbar);
        } else {
            // the microscopic block is the monomer alone; the entropy term
            // vanishes identically and the inequality is trivial
            worst_gap = worst_gap.max(h_mic_run - 1e-12);
        }
        let h_mic = quasistationary_entropy(table, state, l0_diag)?;
        let b = lsi_bound(params, table, state, l0_diag)?;
        let dbar = sqrt_dissipation_mic(params, table, state, l0_diag)?;
        worst_gap = worst_gap.max(h_mic - b.c_eed * dbar);
        let cp = rescale::csiszar_pinsker_diagnostics(params, table, state, rp.l0, rho_s)?;
        diagnostics.push(DiagnosticsRow {
            eps,
            t,
            ratio_tv: cp.ratio_tv,
            residual_excess: cp.residual_excess,
            h_mic,
            c_eed: b.c_eed,
            dbar_mic: dbar,
        });
        rows.push(TimeSeriesRow {
            t,
            mass: Some(record.mass[idx]),
            free_energy: Some(record.free_energy[idx]),
            f_mic_eps: Some(split.f_mic),
            f_mac_eps: Some(split.f_mac),
            d_eps: Some(rates.d_eps),
            d_mic_eps: Some(rates.d_mic_eps),
            d_mac_eps: Some(rates.d_mac_eps),
            h_eps: Some(h),
            u_eps: Some(u),
            e_lsw: None,
            d_lsw: None,
            j_partial: Some(record.free_energy[idx] - record.free_energy[w0] + cum),
        });
    }
    // macroscopic dissipation integral on the rescaled clock, reported so
    // the monomer-tracking inequality's empirical constant can be read off
    let int_d_mac_eps = bd::trapezoid(
        &sample_times,
        &rows
            .iter()
            .map(|r| r.d_mac_eps.unwrap_or(0.0))
            .collect::<Vec<_>>(),
    );
    let hu2 = bd::trapezoid(
        &sample_times,
        &hs.iter()
            .zip(&us)
            .map(|(h, u)| (h - u) * (h - u))
            .collect::<Vec<_>>(),
    );
    let fmic_avg = bd::trapezoid(&sample_times, &fmics) / cfg.integrator.t_final;
    let tag = format!("[eps={eps}]");
    let (mut certs, _) = bd_certs(cfg, &record, &tag);
    certs.push(Certification::upper(
        format!("quasistationary_entropy_bound{tag}"),
        worst_gap,
        0.0,
    ));
    Ok(RescaledRun {
        rp,
        record,
        rows,
        diagnostics,
        certs,
        hu2,
        int_d_mac_eps,
        fmic_avg,
        worst_entropy_gap: worst_gap,
    })
}

// ---- scenarios ----

fn run_bd_relax(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let params = &cfg.rates;
    let table = build_table(cfg)?;
    let rho_s = saturation_mass(params, 1e-12, 1 << 24)?;
    let eps = cfg.rescale.eps_ladder[0];
    let state0 = make_cluster_initial(cfg, &table, eps)?;
    let controls = BdControls {
        step: cfg.integrator.step_controls(),
        time_scale: 1.0,
        sample_count: cfg.integrator.sample_count,
        reference_z: None,
    };
    let record = bd::integrate_bd(params, &table, &state0, cfg.integrator.t_final, &controls)?;

    let (mut certs, w0) = bd_certs(cfg, &record, "");
    let mut summary = RunSummary::default();
    let mut cum = 0.0;
    let mut dense_k = w0;
    let mut rows = Vec::new();
    for (s, &idx) in record.sample_indices.iter().enumerate() {
        while dense_k < idx {
            cum += 0.5
                * (record.times[dense_k + 1] - record.times[dense_k])
                * (record.dissipation[dense_k] + record.dissipation[dense_k + 1]);
            dense_k += 1;
        }
        rows.push(TimeSeriesRow {
            t: record.sample_times()[s],
            mass: Some(record.mass[idx]),
            free_energy: Some(record.free_energy[idx]),
            j_partial: Some(record.free_energy[idx] - record.free_energy[w0] + cum),
            ..Default::default()
        });
    }

    // subcritical runs relax to the equilibrium selected by the total mass
    let rho_0 = state0.mass();
    if rho_0 <= rho_s {
        let z = solve_fugacity(params, rho_0, 1e-10 * rho_s)?;
        let last = record.states.last().unwrap();
        let dist: f64 = last
            .n
            .iter()
            .enumerate()
            .map(|(i, v)| (i + 1) as f64 * (v - table.omega(z, i + 1)).abs())
            .sum();
        summary.push_scalar("relax_weighted_l1", dist);
        summary.notes.push(("fugacity".into(), format!("{z:.12e}")));
        if cfg.certify.relax_l1 > 0.0 {
            certs.push(Certification::upper(
                "relax_weighted_l1",
                dist,
                cfg.certify.relax_l1,
            ));
        }
    }

    summary.push_scalar("final_mass_drift", record.mass_drift());
    summary.push_scalar(
        "delta_free_energy",
        record.free_energy.last().unwrap() - record.free_energy[w0],
    );
    summary.push_scalar(
        "int_dissipation",
        bd::trapezoid(&record.times[w0..], &record.dissipation[w0..]),
    );
    summary.push_scalar("truncation_metric", record.truncation_metric);
    summary.push_scalar("accepted_steps", record.stats.accepted as f64);
    summary.certifications = certs;
    write_file(out_dir, "timeseries.csv", &timeseries_csv(&rows))?;
    write_file(out_dir, "bd_state_initial.csv", &cluster_csv(&state0))?;
    write_file(
        out_dir,
        "bd_state.csv",
        &cluster_csv(record.states.last().unwrap()),
    )?;
    Ok(summary)
}

fn run_bd_rescaled(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let table = build_table(cfg)?;
    let rho_s = saturation_mass(&cfg.rates, 1e-12, 1 << 24)?;
    let eps = cfg.rescale.eps_ladder[0];
    let run = run_rescaled_single(cfg, &table, rho_s, eps)?;
    let mut summary = RunSummary::default();
    summary.push_scalar("eps", eps);
    summary.push_scalar("l0", run.rp.l0 as f64);
    summary.push_scalar("final_mass_drift", run.record.mass_drift());
    summary.push_scalar("hu_l2_sq", run.hu2);
    summary.push_scalar("fmic_eps_time_avg", run.fmic_avg);
    summary.push_scalar("truncation_metric", run.record.truncation_metric);
    summary.push_scalar("worst_entropy_gap", run.worst_entropy_gap);
    summary.certifications = run.certs;
    write_file(out_dir, "timeseries.csv", &timeseries_csv(&run.rows))?;
    write_file(
        out_dir,
        "diagnostics.csv",
        &diagnostics_csv(&run.diagnostics),
    )?;
    write_file(
        out_dir,
        "bd_state.csv",
        &cluster_csv(run.record.states.last().unwrap()),
    )?;
    Ok(summary)
}

fn lsw_params_of(cfg: &ExperimentConfig) -> Result<LswParams> {
    LswParams::new(
        cfg.rates.alpha,
        cfg.rates.gamma,
        cfg.rates.q,
        cfg.initial.excess_mass,
    )
}

fn run_lsw_scenario(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let lp = lsw_params_of(cfg)?;
    if !cfg.initial.ensemble_file.is_empty() {
        let path = cfg.base_dir.join(&cfg.initial.ensemble_file);
        let file = std::fs::File::open(&path).map_err(|e| CoreError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let ens = crate::lsw::ParticleEnsemble::read_csv(std::io::BufReader::new(file))?;
        return run_lsw_from(cfg, out_dir, &lp, ens);
    }
    let table = build_table(cfg)?;
    let ensemble0 = match initial::make_initial(
        &cfg.initial.family,
        &table,
        &cfg.initial,
        cfg.seed,
        cfg.integrator.truncation,
        cfg.rescale.eps_ladder[0],
        cfg.rescale.cutoff_exponent,
    )? {
        initial::InitialState::Particles(e) => e,
        initial::InitialState::Cluster(_) => {
            return Err(CoreError::InvalidConfig(format!(
                "family {} yields a cluster state; the lsw scenario needs particles",
                cfg.initial.family
            )))
        }
    };
    run_lsw_from(cfg, out_dir, &lp, ensemble0)
}

fn run_lsw_from(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    lp: &LswParams,
    ensemble0: crate::lsw::ParticleEnsemble,
) -> Result<RunSummary> {
    let lp = *lp;
    // a tight relative-motion cap keeps the trapezoid accurate through the
    // dissipation blow-up of retiring atoms (well inside the 0.1 bound)
    let controls = LswControls {
        step: cfg.integrator.step_controls(),
        lambda_min: None,
        max_rel_move: 0.01,
        sample_count: cfg.integrator.sample_count,
    };
    let record = integrate_lsw(&lp, &ensemble0, cfg.integrator.t_final, &controls)?;
    let mut summary = RunSummary::default();
    let c = &cfg.certify;
    let resid = record.energy_dissipation_residual().abs();
    let de = (record.energy.last().unwrap() - record.energy[0]).abs();
    let int_d = bd::trapezoid(&record.times, &record.dissipation);
    let jv = lsw_curve_j(&lp, &record, None)?;
    summary.certifications = vec![
        Certification::upper(
            "first_moment_drift",
            record.first_moment_drift(),
            c.mass_drift,
        ),
        Certification::upper(
            "energy_dissipation",
            resid,
            c.energy_dissipation_abs.max(c.energy_dissipation_rel * de),
        ),
        Certification::upper("j_residual", jv.j.abs(), c.j_rel * (de + int_d)),
        Certification::boolean(
            "energy_monotone",
            record
                .energy
                .windows(2)
                .all(|w| w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs())),
        ),
    ];
    summary.push_scalar("vanished_mass", record.vanished_mass());
    summary.push_scalar("retirements", record.retirements.len() as f64);
    summary.push_scalar("delta_energy", de);
    summary.push_scalar("int_dissipation", int_d);
    summary.push_scalar("j_quadrature_error", jv.quadrature_error);
    let rows: Vec<TimeSeriesRow> = record
        .sample_indices
        .iter()
        .map(|&idx| TimeSeriesRow {
            t: record.times[idx],
            mass: Some(record.first_moment[idx]),
            e_lsw: Some(record.energy[idx]),
            d_lsw: Some(record.dissipation[idx]),
            j_partial: None,
            ..Default::default()
        })
        .collect();
    write_file(out_dir, "timeseries.csv", &timeseries_csv(&rows))?;
    let mut buf = Vec::new();
    ensemble0.write_csv(&mut buf).map_err(|e| CoreError::Io {
        path: "ensemble_initial.csv".into(),
        source: e,
    })?;
    write_file(
        out_dir,
        "ensemble_initial.csv",
        &String::from_utf8_lossy(&buf),
    )?;
    let mut buf = Vec::new();
    record
        .ensembles
        .last()
        .unwrap()
        .write_csv(&mut buf)
        .map_err(|e| CoreError::Io {
            path: "ensemble.csv".into(),
            source: e,
        })?;
    write_file(out_dir, "ensemble.csv", &String::from_utf8_lossy(&buf))?;
    Ok(summary)
}

fn run_quasistat(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let table = build_table(cfg)?;
    let rho_s = saturation_mass(&cfg.rates, 1e-12, 1 << 24)?;
    let runs: Vec<Result<RescaledRun>> = cfg
        .rescale
        .eps_ladder
        .par_iter()
        .map(|&eps| run_rescaled_single(cfg, &table, rho_s, eps))
        .collect();
    let mut summary = RunSummary::default();
    let mut all_diags = Vec::new();
    let mut hu2s = Vec::new();
    let mut fmics = Vec::new();
    for (i, run) in runs.into_iter().enumerate() {
        let run = run?;
        let eps = cfg.rescale.eps_ladder[i];
        let dir = out_dir.join(format!("eps-{eps:.4}"));
        write_file(&dir, "timeseries.csv", &timeseries_csv(&run.rows))?;
        write_file(
            &dir,
            "bd_state.csv",
            &cluster_csv(run.record.states.last().unwrap()),
        )?;
        all_diags.extend(run.diagnostics.iter().copied());
        summary.certifications.extend(run.certs);
        summary.table.push(format!(
            "eps={eps:.4} l0={} hu_l2_sq={:.6e} fmic_avg={:.6e} int_D_mac_eps={:.6e} hu_over_dmac={:.4e} mass_drift={:.3e} truncation_metric={:.3e}",
            run.rp.l0,
            run.hu2,
            run.fmic_avg,
            run.int_d_mac_eps,
            run.hu2 / run.int_d_mac_eps,
            run.record.mass_drift(),
            run.record.truncation_metric
        ));
        hu2s.push(run.hu2);
        fmics.push(run.fmic_avg);
    }
    summary.certifications.push(Certification::boolean(
        "hu_l2_strictly_decreasing",
        hu2s.windows(2).all(|w| w[1] < w[0]),
    ));
    summary.certifications.push(Certification::boolean(
        "fmic_avg_strictly_decreasing",
        fmics.windows(2).all(|w| w[1] < w[0]),
    ));
    for (i, &eps) in cfg.rescale.eps_ladder.iter().enumerate() {
        summary.push_scalar(format!("hu_l2_sq_eps_{eps}"), hu2s[i]);
        summary.push_scalar(format!("fmic_avg_eps_{eps}"), fmics[i]);
    }
    write_file(out_dir, "diagnostics.csv", &diagnostics_csv(&all_diags))?;
    Ok(summary)
}

fn run_converge(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let params = &cfg.rates;
    let table = build_table(cfg)?;
    let rho_s = saturation_mass(params, 1e-12, 1 << 24)?;
    let runs: Vec<Result<RescaledRun>> = cfg
        .rescale
        .eps_ladder
        .par_iter()
        .map(|&eps| run_rescaled_single(cfg, &table, rho_s, eps))
        .collect();
    let runs: Vec<RescaledRun> = runs.into_iter().collect::<Result<_>>()?;

    // macroscopic reference: particle run from the projection of the finest
    // initial state, compared at shared sample times on the rescaled clock
    let finest = runs.last().expect("nonempty ladder");
    let (ens0, dust) =
        initial::bd_projected(&finest.record.states[0], &finest.rp, cfg.initial.lambda_cut);
    let lp = lsw_params_of(cfg)?;
    let lcontrols = LswControls {
        step: cfg.integrator.step_controls(),
        lambda_min: None,
        max_rel_move: 0.1,
        sample_count: cfg.integrator.sample_count,
    };
    let lrec = integrate_lsw(&lp, &ens0, cfg.integrator.t_final, &lcontrols)?;
    let dict = Dictionary::default_v1();

    let mut summary = RunSummary::default();
    summary
        .notes
        .push(("distance_dictionary".into(), dict.name.clone()));
    summary.push_scalar("reference_dust_mass", dust);
    summary.push_scalar("reference_vanished_mass", lrec.vanished_mass());

    // sample indices nearest to T/2 and T on each record's own grid
    let t_half = 0.5 * cfg.integrator.t_final;
    let pick = |times: &[f64], target: f64| -> usize {
        times
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - target)
                    .abs()
                    .partial_cmp(&(b.1 - target).abs())
                    .unwrap()
            })
            .map(|(i, _)| i)
            .unwrap()
    };
    let l_times = lrec.sample_times();
    let mut dist_half = Vec::new();
    let mut dist_full = Vec::new();
    let mut egap_half = Vec::new();
    let mut egap_full = Vec::new();
    let mut table_lines = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let eps = cfg.rescale.eps_ladder[i];
        let times = run.record.sample_times();
        let mut per_time = Vec::new();
        for (&target, dv, ev) in [
            (&t_half, &mut dist_half, &mut egap_half),
            (&cfg.integrator.t_final, &mut dist_full, &mut egap_full),
        ] {
            let bi = pick(&times, target);
            let li = pick(&l_times, target);
            let nu_eps = project_mac(&run.record.states[bi], &run.rp);
            let d = measure_distance(&nu_eps, &lrec.ensembles[li], &dict);
            let f_eps =
                run.rp.energy_scale(params) * run.record.free_energy[run.record.sample_indices[bi]];
            let e_proj = lsw::lsw_energy(&lp, &nu_eps);
            dv.push(d);
            ev.push((f_eps - e_proj).abs());
            per_time.push((d, (f_eps - e_proj).abs()));
        }
        // rescaled integrals for the lower-semicontinuity table, plus the
        // tail mass beyond the dictionary window as a tightness diagnostic
        let w0 = finite_window_start(&run.record.dissipation);
        let int_d_eps = run.rp.energy_scale(params)
            * bd::trapezoid(&run.record.times[w0..], &run.record.dissipation[w0..]);
        let f0 = run.rp.energy_scale(params) * run.record.free_energy[0];
        let ft = run.rp.energy_scale(params) * run.record.free_energy.last().unwrap();
        let tail_r = 8.0;
        let tail_mass = project_mac(run.record.states.last().unwrap(), &run.rp).integrate(|l| {
            if l > tail_r {
                l
            } else {
                0.0
            }
        });
        table_lines.push(format!(
            "eps={eps:.4} l0={} dist_half={:.6e} dist_full={:.6e} egap_half={:.6e} egap_full={:.6e} F_eps_0={:.6e} F_eps_T={:.6e} int_D_eps={:.6e} tail_mass_R8={:.6e}",
            run.rp.l0, per_time[0].0, per_time[1].0, per_time[0].1, per_time[1].1, f0, ft, int_d_eps, tail_mass
        ));
        let dir = out_dir.join(format!("eps-{eps:.4}"));
        write_file(&dir, "timeseries.csv", &timeseries_csv(&run.rows))?;
        write_file(
            &dir,
            "bd_state.csv",
            &cluster_csv(run.record.states.last().unwrap()),
        )?;
        summary.certifications.extend(run.certs.iter().cloned());
    }
    let int_d_lsw = bd::trapezoid(&lrec.times, &lrec.dissipation);
    table_lines.push(format!(
        "lsw E_0={:.6e} E_T={:.6e} int_D={:.6e}",
        lrec.energy[0],
        lrec.energy.last().unwrap(),
        int_d_lsw
    ));
    summary.table = table_lines;
    summary.certifications.push(Certification::boolean(
        "distance_decreasing_t_half",
        dist_half.windows(2).all(|w| w[1] < w[0]),
    ));
    summary.certifications.push(Certification::boolean(
        "distance_decreasing_t_full",
        dist_full.windows(2).all(|w| w[1] < w[0]),
    ));
    summary.certifications.push(Certification::boolean(
        "energy_gap_decreasing_t_half",
        egap_half.windows(2).all(|w| w[1] < w[0]),
    ));
    summary.certifications.push(Certification::boolean(
        "energy_gap_decreasing_t_full",
        egap_full.windows(2).all(|w| w[1] < w[0]),
    ));
    for (i, &eps) in cfg.rescale.eps_ladder.iter().enumerate() {
        summary.push_scalar(format!("distance_t_half_eps_{eps}"), dist_half[i]);
        summary.push_scalar(format!("distance_t_full_eps_{eps}"), dist_full[i]);
    }
    // reference ensemble snapshot
    let mut buf = Vec::new();
    lrec.ensembles
        .last()
        .unwrap()
        .write_csv(&mut buf)
        .map_err(|e| CoreError::Io {
            path: "ensemble.csv".into(),
            source: e,
        })?;
    write_file(out_dir, "ensemble.csv", &String::from_utf8_lossy(&buf))?;
    Ok(summary)
}

fn run_network(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    use rand::{Rng, SeedableRng};
    let path = cfg.base_dir.join(&cfg.network.file);
    let text = std::fs::read_to_string(&path).map_err(|e| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let net = crate::network::parse_network(&text)?;
    let n = net.n_species();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(cfg.seed);
    let basis = net.conservation_basis()?;

    // conservation and gradient-identity residuals over random states
    let mut worst_cons = 0.0_f64;
    let mut worst_grad = 0.0_f64;
    for _ in 0..10 {
        let state: Vec<f64> = (0..n)
            .map(|_| cfg.network.species_scale * rng.gen_range(0.1..2.0))
            .collect();
        let dn = net.rhs(&state);
        let scale: f64 = dn.iter().map(|v| v.abs()).sum::<f64>().max(1e-30);
        for s in &basis {
            let dot: f64 = s.iter().zip(&dn).map(|(&si, &di)| si as f64 * di).sum();
            worst_cons = worst_cons.max(dot.abs() / scale);
        }
        let grad: Vec<f64> = state
            .iter()
            .zip(&net.omega)
            .map(|(&ni, &w)| (ni / w).ln())
            .collect();
        let kdf = net.onsager_apply(&state, &grad);
        let rhs_norm = dn.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let resid = dn
            .iter()
            .zip(&kdf)
            .map(|(a, b)| (a + b).abs())
            .fold(0.0_f64, f64::max);
        worst_grad = worst_grad.max(resid / (1.0 + rhs_norm));
    }

    // relaxation run from a random positive state
    let y0: Vec<f64> = (0..n)
        .map(|_| cfg.network.species_scale * rng.gen_range(0.2..1.5))
        .collect();
    let net_c = net.clone();
    let mut energies: Vec<f64> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    let controls = cfg.integrator.step_controls();
    crate::integrate::integrate_adaptive(
        |_t, y, dy| {
            let d = net_c.rhs(y);
            dy.copy_from_slice(&d);
        },
        &y0,
        cfg.network.t_final,
        &controls,
        |_t, _old, new, _stats| {
            let amp = new.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            for v in new.iter_mut() {
                if *v < 0.0 {
                    if *v < -10.0 * f64::EPSILON * amp {
                        return crate::integrate::StepVerdict::Reject;
                    }
                    *v = 0.0;
                }
            }
            crate::integrate::StepVerdict::Accept
        },
        |t, y, _dt| {
            times.push(t);
            energies.push(net.free_energy(y));
        },
    )?;

    let mut summary = RunSummary::default();
    summary.push_scalar("species", n as f64);
    summary.push_scalar("reactions", net.reactions.len() as f64);
    summary.push_scalar("conservation_laws", basis.len() as f64);
    summary.certifications = vec![
        Certification::upper("conservation_residual", worst_cons, 1e-12),
        Certification::upper("gradient_identity", worst_grad, 1e-10),
        Certification::boolean(
            "free_energy_monotone",
            energies
                .windows(2)
                .all(|w| w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs())),
        ),
    ];
    let rows: Vec<TimeSeriesRow> = times
        .iter()
        .zip(&energies)
        .map(|(&t, &f)| TimeSeriesRow {
            t,
            free_energy: Some(f),
            ..Default::default()
        })
        .collect();
    write_file(out_dir, "timeseries.csv", &timeseries_csv(&rows))?;
    Ok(summary)
}
