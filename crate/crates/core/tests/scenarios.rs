//! Scenario-level integration checks driven through the library API: the
//! shipped configs stay loadable, relaxation lands on the mass-selected
//! equilibrium, and the artifact files carry the promised content.

use bdlab_core::experiments::config::ExperimentConfig;
use bdlab_core::experiments::run_scenario;
use std::fs;

fn repo_config(name: &str) -> ExperimentConfig {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/");
    ExperimentConfig::from_path(std::path::Path::new(path).join(name).as_path()).unwrap()
}

#[test]
fn shipped_configs_parse() {
    for name in [
        "quasistat.toml",
        "converge.toml",
        "bd-relax.toml",
        "bd-relax-subcritical.toml",
        "lsw.toml",
        "network.toml",
        "smoluchowski.toml",
    ] {
        let cfg = repo_config(name);
        cfg.validate().unwrap();
    }
}

#[test]
fn subcritical_relaxation_reaches_selected_equilibrium() {
    // small truncation keeps this quick; the certification includes the
    // weighted-l1 distance to the fugacity-selected equilibrium
    let mut cfg = repo_config("bd-relax-subcritical.toml");
    cfg.integrator.truncation = 72;
    cfg.integrator.t_final = 300.0;
    let dir = tempfile::tempdir().unwrap();
    let summary = run_scenario(&cfg, dir.path()).unwrap();
    assert!(summary.all_passed(), "certifications failed: {summary:?}");
    let dist = summary
        .scalars
        .iter()
        .find(|(k, _)| k == "relax_weighted_l1")
        .map(|(_, v)| *v)
        .unwrap();
    assert!(dist <= 1e-6, "weighted l1 distance {dist}");
    // the summary records the selected fugacity
    let z: f64 = summary
        .notes
        .iter()
        .find(|(k, _)| k == "fugacity")
        .map(|(_, v)| v.parse().unwrap())
        .unwrap();
    assert!(z > 0.0 && z < 1.0);
}

#[test]
fn relax_summary_reports_truncation_metric_and_snapshots() {
    let mut cfg = repo_config("bd-relax.toml");
    cfg.integrator.t_final = 0.5;
    cfg.integrator.truncation = 256;
    let dir = tempfile::tempdir().unwrap();
    let summary = run_scenario(&cfg, dir.path()).unwrap();
    assert!(summary
        .scalars
        .iter()
        .any(|(k, _)| k == "truncation_metric"));
    let text = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(text.contains("truncation_metric="));
    for f in ["timeseries.csv", "bd_state.csv", "bd_state_initial.csv"] {
        assert!(dir.path().join(f).exists(), "missing artifact {f}");
    }
    // snapshot carries one row per size plus the header
    let state = fs::read_to_string(dir.path().join("bd_state.csv")).unwrap();
    assert_eq!(state.lines().count(), 1 + 256);
}

#[test]
fn quasistat_artifacts_per_rung() {
    let mut cfg = repo_config("quasistat.toml");
    cfg.rescale.eps_ladder = vec![0.2, 0.1];
    cfg.integrator.t_final = 0.4;
    cfg.integrator.sample_count = 40;
    cfg.integrator.truncation = 192;
    let dir = tempfile::tempdir().unwrap();
    let summary = run_scenario(&cfg, dir.path()).unwrap();
    for eps in ["0.2000", "0.1000"] {
        assert!(dir
            .path()
            .join(format!("eps-{eps}/timeseries.csv"))
            .exists());
    }
    let diags = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert!(diags.starts_with("eps,t,ratio_tv,residual_excess,H_mic,C_EED,Dbar_mic"));
    // rows keyed by both ladder entries
    assert!(diags.lines().any(|l| l.starts_with("2.000000e-1,")));
    assert!(diags.lines().any(|l| l.starts_with("1.000000e-1,")));
    // per-run certifications carry the eps tag
    assert!(summary
        .certifications
        .iter()
        .any(|c| c.name.contains("[eps=0.2]")));
    // the time-series carries the rescaled split columns
    let ts = fs::read_to_string(dir.path().join("eps-0.2000/timeseries.csv")).unwrap();
    let header = ts.lines().next().unwrap();
    assert_eq!(
        header,
        "t,mass,F,F_mic_eps,F_mac_eps,D_eps,D_mic_eps,D_mac_eps,h_eps,u_eps,E_lsw,D_lsw,J_partial"
    );
    let row = ts.lines().nth(1).unwrap();
    assert_eq!(row.split(',').count(), 13);
    assert!(
        !row.split(',').nth(3).unwrap().is_empty(),
        "F_mic_eps missing"
    );
    assert!(
        row.split(',').nth(10).unwrap().is_empty(),
        "E_lsw must stay blank"
    );
}

#[test]
fn converge_emits_reference_ensemble_and_table() {
    let mut cfg = repo_config("converge.toml");
    cfg.rescale.eps_ladder = vec![0.1, 0.05];
    cfg.integrator.t_final = 0.4;
    cfg.integrator.sample_count = 40;
    cfg.integrator.truncation = 192;
    let dir = tempfile::tempdir().unwrap();
    let summary = run_scenario(&cfg, dir.path()).unwrap();
    assert!(dir.path().join("ensemble.csv").exists());
    assert!(summary.table.iter().any(|l| l.starts_with("lsw ")));
    assert!(summary.table.iter().any(|l| l.contains("dist_half=")));
    // distances are recorded per rung
    assert!(
        summary
            .scalars
            .iter()
            .filter(|(k, _)| k.starts_with("distance_t_full"))
            .count()
            == 2
    );
}
