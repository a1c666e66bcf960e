//! Nonlocal coarsening equation solved by the particle method: the measure is
//! a finite sum of weighted atoms whose positions follow the characteristic
//! ODEs, with the mean-field supersaturation recomputed at every stage so the
//! cotangent constraint holds pointwise in time.
//!
//! Atoms whose size reaches the retirement threshold are removed from all
//! sums; the residual mass is logged, never silently dropped.

use crate::error::{CoreError, Result};
use crate::integrate::{dopri5_step, Dopri5Workspace, IntegrationStats, StepControls};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Macroscopic model constants. `alpha`, `gamma`, `q` share the microscopic
/// semantics; `rho_bar` is the excess mass the measure should carry.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LswParams {
    pub alpha: f64,
    pub gamma: f64,
    pub q: f64,
    pub rho_bar: f64,
}

impl LswParams {
    pub fn new(alpha: f64, gamma: f64, q: f64, rho_bar: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) || !(gamma > 0.0 && gamma < 1.0) || !(q > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "lsw params out of range: alpha={alpha} gamma={gamma} q={q}"
            )));
        }
        Ok(Self {
            alpha,
            gamma,
            q,
            rho_bar,
        })
    }

    /// The convergence theory assumes `alpha >= 1 - 3 gamma`.
    pub fn limit_condition_holds(&self) -> bool {
        self.alpha >= 1.0 - 3.0 * self.gamma
    }
}

/// One weighted atom of the measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub lambda: f64,
    pub mass: f64,
}

/// A finite weighted-atom representation of the macroscopic measure.
#[derive(Debug, Clone, Default)]
pub struct ParticleEnsemble {
    pub atoms: Vec<Particle>,
}

impl ParticleEnsemble {
    pub fn new(atoms: Vec<Particle>) -> Result<Self> {
        if atoms.iter().any(|a| !(a.lambda > 0.0) || !(a.mass > 0.0)) {
            return Err(CoreError::InvalidParameter(
                "atoms must have positive size and mass".into(),
            ));
        }
        Ok(Self { atoms })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `int lambda d nu`, the excess mass carried by the ensemble.
    pub fn first_moment(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass * a.lambda).sum()
    }

    /// `int zeta d nu` for a pointwise test function.
    pub fn integrate<F: Fn(f64) -> f64>(&self, zeta: F) -> f64 {
        self.atoms.iter().map(|a| a.mass * zeta(a.lambda)).sum()
    }

    /// Writes the `lambda,mass` CSV snapshot format.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lambda,mass")?;
        for a in &self.atoms {
            writeln!(w, "{:.17e},{:.17e}", a.lambda, a.mass)?;
        }
        Ok(())
    }

    /// Reads the `lambda,mass` CSV snapshot format.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut atoms = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| CoreError::Io {
                path: "<csv>".into(),
                source: e,
            })?;
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("lambda")) {
                continue;
            }
            let mut parts = line.split(',');
            let lambda = parse_field(parts.next(), i)?;
            let mass = parse_field(parts.next(), i)?;
            atoms.push(Particle { lambda, mass });
        }
        ParticleEnsemble::new(atoms)
    }
}

fn parse_field(s: Option<&str>, line: usize) -> Result<f64> {
    s.and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| CoreError::NetworkParse {
            line: line + 1,
            msg: "malformed ensemble csv row".into(),
        })
}

/// Mean-field supersaturation `u = q int l^(a-g) d nu / int l^a d nu`,
/// evaluated as the `l^alpha`-weighted mean of `q l^-gamma` so that the
/// cotangent constraint `int l^alpha (u - q l^-gamma) d nu = 0` cancels to
/// roundoff in the velocity sums.
pub fn mean_field_u(params: &LswParams, ensemble: &ParticleEnsemble) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(CoreError::EmptyEnsemble);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for a in &ensemble.atoms {
        let w = a.mass * a.lambda.powf(params.alpha);
        num += w * params.q * a.lambda.powf(-params.gamma);
        den += w;
    }
    Ok(num / den)
}

/// Transport velocities `v_i = l_i^alpha (u - q l_i^-gamma)`.
pub fn particle_velocities(params: &LswParams, ensemble: &ParticleEnsemble, u: f64) -> Vec<f64> {
    ensemble
        .atoms
        .iter()
        .map(|a| a.lambda.powf(params.alpha) * (u - params.q * a.lambda.powf(-params.gamma)))
        .collect()
}

/// Driving energy `E(nu) = q/(1-gamma) int lambda^(1-gamma) d nu`.
pub fn lsw_energy(params: &LswParams, ensemble: &ParticleEnsemble) -> f64 {
    params.q / (1.0 - params.gamma) * ensemble.integrate(|l| l.powf(1.0 - params.gamma))
}

/// Dissipation `D(nu) = int lambda^alpha (u - q lambda^-gamma)^2 d nu` with
/// the constrained mean field; the minimum over constants of the same
/// quadratic.
pub fn lsw_dissipation(params: &LswParams, ensemble: &ParticleEnsemble) -> Result<f64> {
    let u = mean_field_u(params, ensemble)?;
    Ok(dissipation_at(params, ensemble, u))
}

/// The same quadratic at an arbitrary constant `c`; grid searches over `c`
/// provide the minimality oracle.
pub fn dissipation_at(params: &LswParams, ensemble: &ParticleEnsemble, c: f64) -> f64 {
    ensemble
        .atoms
        .iter()
        .map(|a| {
            let d = c - params.q * a.lambda.powf(-params.gamma);
            a.mass * a.lambda.powf(params.alpha) * d * d
        })
        .sum()
}

/// Action `A(nu, w) = int lambda^alpha w^2 d nu` for per-atom potential
/// values `w`.
pub fn lsw_action(params: &LswParams, ensemble: &ParticleEnsemble, w: &[f64]) -> f64 {
    assert_eq!(w.len(), ensemble.len(), "one w value per live atom");
    ensemble
        .atoms
        .iter()
        .zip(w)
        .map(|(a, wi)| a.mass * a.lambda.powf(params.alpha) * wi * wi)
        .sum()
}

/// Controls for [`integrate_lsw`].
#[derive(Debug, Clone, Copy)]
pub struct LswControls {
    pub step: StepControls,
    /// Retirement threshold; when `None`, `1e-6 * initial mean lambda`.
    pub lambda_min: Option<f64>,
    /// Per-step relative motion cap `|d lambda| / lambda`.
    pub max_rel_move: f64,
    pub sample_count: usize,
}

impl Default for LswControls {
    fn default() -> Self {
        Self {
            step: StepControls::default(),
            lambda_min: None,
            max_rel_move: 0.1,
            sample_count: 120,
        }
    }
}

/// A retirement event: the atom index no longer participates in any sum and
/// its residual mass `m * lambda` is accounted for here.
#[derive(Debug, Clone, Copy)]
pub struct Retirement {
    pub time: f64,
    pub lambda: f64,
    pub mass: f64,
}

/// Sampled particle trajectory with per-step macroscopic scalars.
#[derive(Debug, Clone)]
pub struct LswCurveRecord {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub mean_field: Vec<f64>,
    pub first_moment: Vec<f64>,
    pub sample_indices: Vec<usize>,
    pub ensembles: Vec<ParticleEnsemble>,
    pub retirements: Vec<Retirement>,
    /// Indices into `times` where the live set changed (the post-retirement
    /// snapshot); conservation and energy accounting restart there.
    pub segment_starts: Vec<usize>,
    pub stats: IntegrationStats,
}

impl LswCurveRecord {
    pub fn sample_times(&self) -> Vec<f64> {
        self.sample_indices.iter().map(|&i| self.times[i]).collect()
    }

    /// Total retired mass `sum m * lambda` at retirement.
    pub fn vanished_mass(&self) -> f64 {
        self.retirements.iter().map(|r| r.mass * r.lambda).sum()
    }

    /// `E(T) - E(0) + int D dt` by trapezoid on accepted steps. Retirements
    /// withdraw energy along with mass; the residual is accumulated per
    /// segment between live-set changes so the withdrawals drop out.
    pub fn energy_dissipation_residual(&self) -> f64 {
        let mut residual = 0.0;
        let mut seg_start = 0usize;
        let mut bounds = self.segment_starts.iter().copied().peekable();
        for k in 1..self.times.len() {
            let at_boundary = bounds.peek() == Some(&k);
            if at_boundary || k == self.times.len() - 1 {
                let end = if at_boundary { k - 1 } else { k };
                if end > seg_start {
                    let t = &self.times[seg_start..=end];
                    let d = &self.dissipation[seg_start..=end];
                    residual +=
                        self.energy[end] - self.energy[seg_start] + crate::bd::trapezoid(t, d);
                }
                seg_start = k;
                while bounds.peek() == Some(&k) {
                    bounds.next();
                }
            }
        }
        residual
    }

    /// Worst relative drift of the first moment between retirements.
    pub fn first_moment_drift(&self) -> f64 {
        let mut worst = 0.0_f64;
        let mut anchor = self.first_moment[0];
        let mut bounds = self.segment_starts.iter().copied().peekable();
        for (k, &fm) in self.first_moment.iter().enumerate() {
            if bounds.peek() == Some(&k) {
                anchor = fm;
                while bounds.peek() == Some(&k) {
                    bounds.next();
                }
            } else {
                worst = worst.max((fm - anchor).abs() / anchor.abs());
            }
        }
        worst
    }
}

/// Integrates the particle system with the mean field recomputed at every
/// stage. A step that would carry an atom below the retirement threshold is
/// split; once an atom sits at the threshold it is retired and its residual
/// mass logged.
pub fn integrate_lsw(
    params: &LswParams,
    ensemble0: &ParticleEnsemble,
    t_end: f64,
    controls: &LswControls,
) -> Result<LswCurveRecord> {
    if !(t_end > 0.0) {
        return Err(CoreError::InvalidParameter(format!("t_end = {t_end} <= 0")));
    }
    if ensemble0.is_empty() {
        return Err(CoreError::EmptyEnsemble);
    }
    let n = ensemble0.len();
    let masses: Vec<f64> = ensemble0.atoms.iter().map(|a| a.mass).collect();
    let mean_lambda = ensemble0.atoms.iter().map(|a| a.lambda).sum::<f64>() / n as f64;
    let lambda_min = controls.lambda_min.unwrap_or(1e-6 * mean_lambda);

    let mut lambda: Vec<f64> = ensemble0.atoms.iter().map(|a| a.lambda).collect();
    let mut alive: Vec<bool> = vec![true; n];

    let assemble = |lambda: &[f64], alive: &[bool]| -> ParticleEnsemble {
        ParticleEnsemble {
            atoms: lambda
                .iter()
                .zip(&masses)
                .zip(alive)
                .filter(|(_, &al)| al)
                .map(|((&l, &m), _)| Particle { lambda: l, mass: m })
                .collect(),
        }
    };

    let mut record = LswCurveRecord {
        times: Vec::new(),
        energy: Vec::new(),
        dissipation: Vec::new(),
        mean_field: Vec::new(),
        first_moment: Vec::new(),
        sample_indices: Vec::new(),
        ensembles: Vec::new(),
        retirements: Vec::new(),
        segment_starts: Vec::new(),
        stats: IntegrationStats::default(),
    };
    let sample_every = t_end / controls.sample_count.max(1) as f64;
    let mut next_sample = 0.0;

    // rhs over the full lambda vector; retired atoms stay frozen at their
    // final position and are excluded from every sum
    let make_rhs = |alive: &[bool]| {
        let alive = alive.to_vec();
        let masses = masses.clone();
        let p = *params;
        move |_t: f64, y: &[f64], dy: &mut [f64]| {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..y.len() {
                if !alive[i] {
                    continue;
                }
                if y[i] <= 0.0 {
                    // poisoned stage: force rejection via non-finite error
                    dy.fill(f64::NAN);
                    return;
                }
                let w = masses[i] * y[i].powf(p.alpha);
                num += w * p.q * y[i].powf(-p.gamma);
                den += w;
            }
            let u = num / den;
            for i in 0..y.len() {
                dy[i] = if alive[i] {
                    y[i].powf(p.alpha) * (u - p.q * y[i].powf(-p.gamma))
                } else {
                    0.0
                };
            }
        }
    };

    let mut t = 0.0;
    let mut dt = controls.step.dt_init.min(t_end);
    let mut ws = Dopri5Workspace::new(n);
    let mut rhs = make_rhs(&alive);
    rhs(0.0, &lambda, ws.k1_mut());

    let mut push_scalars =
        |t: f64, lambda: &[f64], alive: &[bool], record: &mut LswCurveRecord| -> Result<()> {
            let ens = assemble(lambda, alive);
            if ens.is_empty() {
                return Err(CoreError::EmptyEnsemble);
            }
            let u = mean_field_u(params, &ens)?;
            record.times.push(t);
            record.energy.push(lsw_energy(params, &ens));
            record.dissipation.push(dissipation_at(params, &ens, u));
            record.mean_field.push(u);
            record.first_moment.push(ens.first_moment());
            if t >= next_sample || t >= t_end * (1.0 - 1e-14) {
                record.sample_indices.push(record.times.len() - 1);
                record.ensembles.push(ens);
                next_sample = t + sample_every;
            }
            Ok(())
        };
    push_scalars(0.0, &lambda, &alive, &mut record)?;

    let mut steps = 0usize;
    let mut last_energy = record.energy[0];
    while t < t_end * (1.0 - 1e-14) {
        steps += 1;
        if steps > controls.step.max_steps {
            return Err(CoreError::InvalidConfig(format!(
                "step budget {} exhausted at t = {t}",
                controls.step.max_steps
            )));
        }
        // per-step relative motion cap, and split any step that would cross
        // the retirement threshold
        let mut v = vec![0.0; n];
        rhs(t, &lambda, &mut v);
        let mut dt_cap = t_end - t;
        let mut to_retire: Vec<usize> = Vec::new();
        for i in 0..n {
            if !alive[i] || v[i] == 0.0 {
                continue;
            }
            dt_cap = dt_cap.min(controls.max_rel_move * lambda[i] / v[i].abs());
            if v[i] < 0.0 {
                let split = 0.9 * (lambda[i] - 0.5 * lambda_min) / -v[i];
                if lambda[i] <= lambda_min || split < controls.step.dt_min {
                    to_retire.push(i);
                } else {
                    dt_cap = dt_cap.min(split.max(controls.step.dt_min * 2.0));
                }
            }
        }
        if !to_retire.is_empty() {
            for &i in &to_retire {
                alive[i] = false;
                record.retirements.push(Retirement {
                    time: t,
                    lambda: lambda[i],
                    mass: masses[i],
                });
            }
            if alive.iter().all(|a| !a) {
                return Err(CoreError::EmptyEnsemble);
            }
            rhs = make_rhs(&alive);
            rhs(t, &lambda, ws.k1_mut());
            // re-anchor scalars after the jump in the live set
            push_scalars(t, &lambda, &alive, &mut record)?;
            record.segment_starts.push(record.times.len() - 1);
            last_energy = *record.energy.last().unwrap();
            continue;
        }
        dt = dt.min(dt_cap).max(controls.step.dt_min);

        let err = dopri5_step(&mut rhs, t, &lambda, dt, &controls.step, &mut ws);
        let mut ok = err.is_finite() && err <= 1.0;
        if ok {
            // energy must not increase along solver output
            let cand = assemble(&ws.y_new, &alive);
            let e_new = lsw_energy(params, &cand);
            if e_new > last_energy + 1e-10 * (1.0 + last_energy.abs())
                || ws
                    .y_new
                    .iter()
                    .zip(&alive)
                    .any(|(l, &al)| al && !(*l > 0.0))
            {
                ok = false;
            } else {
                last_energy = e_new;
            }
        }
        if ok {
            t += dt;
            lambda.copy_from_slice(&ws.y_new);
            ws.promote_fsal();
            record.stats.accepted += 1;
            push_scalars(t, &lambda, &alive, &mut record)?;
            // retire anything that reached the threshold inside the step
            let mut retired_now = false;
            for i in 0..n {
                if alive[i] && lambda[i] <= lambda_min {
                    alive[i] = false;
                    record.retirements.push(Retirement {
                        time: t,
                        lambda: lambda[i],
                        mass: masses[i],
                    });
                    retired_now = true;
                }
            }
            if retired_now {
                if alive.iter().all(|a| !a) {
                    return Err(CoreError::EmptyEnsemble);
                }
                rhs = make_rhs(&alive);
                rhs(t, &lambda, ws.k1_mut());
                push_scalars(t, &lambda, &alive, &mut record)?;
                record.segment_starts.push(record.times.len() - 1);
                last_energy = *record.energy.last().unwrap();
            }
            let grow = if err > 0.0 {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            dt = (dt * grow).min(controls.step.dt_max);
        } else {
            record.stats.rejected += 1;
            dt *= if err.is_finite() && err > 1.0 {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.5
            };
            if dt < controls.step.dt_min {
                return Err(CoreError::DtUnderflow {
                    t,
                    dt,
                    dt_min: controls.step.dt_min,
                });
            }
        }
    }
    Ok(record)
}

/// Value of the macroscopic curve functional with a quadrature error
/// estimate. Per-atom potentials, when given, are evaluated on the sample
/// grid with the same trapezoid as the dissipation.
pub fn lsw_curve_j(
    params: &LswParams,
    record: &LswCurveRecord,
    potentials: Option<&[Vec<f64>]>,
) -> Result<crate::bd::JValue> {
    let de = record.energy.last().unwrap() - record.energy[0]
        + record
            .retirements
            .iter()
            .map(|r| retired_energy(params, r))
            .sum::<f64>();
    match potentials {
        None => {
            let int_d = crate::bd::trapezoid(&record.times, &record.dissipation);
            Ok(crate::bd::JValue {
                j: de + int_d,
                quadrature_error: crate::bd::trapezoid_error_estimate(
                    &record.times,
                    &record.dissipation,
                ),
            })
        }
        Some(ws) => {
            assert_eq!(
                ws.len(),
                record.ensembles.len(),
                "one potential set per sample"
            );
            let ts = record.sample_times();
            let mut d_vals = Vec::with_capacity(ws.len());
            let mut a_vals = Vec::with_capacity(ws.len());
            for (ens, w) in record.ensembles.iter().zip(ws) {
                d_vals.push(lsw_dissipation(params, ens)?);
                a_vals.push(lsw_action(params, ens, w));
            }
            let half =
                0.5 * (crate::bd::trapezoid(&ts, &d_vals) + crate::bd::trapezoid(&ts, &a_vals));
            Ok(crate::bd::JValue {
                j: de + half,
                quadrature_error: crate::bd::trapezoid_error_estimate(&ts, &d_vals),
            })
        }
    }
}

fn retired_energy(params: &LswParams, r: &Retirement) -> f64 {
    params.q / (1.0 - params.gamma) * r.mass * r.lambda.powf(1.0 - params.gamma)
}

/// A fixed, versioned family of bounded-Lipschitz test functions: hat
/// functions on a log-spaced grid plus `lambda -> min(lambda, R)`
/// truncations. An honest surrogate for weak* comparison on compactly
/// supported continuous functions, not a metric claim.
#[derive(Debug, Clone)]
pub struct Dictionary {
    pub name: String,
    entries: Vec<TestFn>,
}

#[derive(Debug, Clone, Copy)]
enum TestFn {
    /// Piecewise-linear tent on `(lo, mid, hi)`, height one.
    Hat { lo: f64, mid: f64, hi: f64 },
    /// `lambda -> min(lambda, r)`.
    Truncation { r: f64 },
}

impl TestFn {
    fn eval(&self, l: f64) -> f64 {
        match *self {
            TestFn::Hat { lo, mid, hi } => {
                if l > lo && l <= mid {
                    (l - lo) / (mid - lo)
                } else if l > mid && l < hi {
                    (hi - l) / (hi - mid)
                } else {
                    0.0
                }
            }
            TestFn::Truncation { r } => l.min(r),
        }
    }

    fn lipschitz(&self) -> f64 {
        match *self {
            TestFn::Hat { lo, mid, hi } => (1.0 / (mid - lo)).max(1.0 / (hi - mid)),
            TestFn::Truncation { .. } => 1.0,
        }
    }
}

impl Dictionary {
    /// The versioned default: 9 hats on a half-octave grid over
    /// `[0.4, 12.8]` and truncations at `R = 1, 2, 4, 8`.
    pub fn default_v1() -> Self {
        Self::log_grid("bl-hats-v1", 0.4, 11)
    }

    /// Hats on `nodes[k] = lo * 2^(k/2)`, `k = 0..count`, plus truncations.
    pub fn log_grid(name: &str, lo: f64, count: usize) -> Self {
        let nodes: Vec<f64> = (0..count).map(|k| lo * 2f64.powf(k as f64 / 2.0)).collect();
        let mut entries: Vec<TestFn> = nodes
            .windows(3)
            .map(|w| TestFn::Hat {
                lo: w[0],
                mid: w[1],
                hi: w[2],
            })
            .collect();
        for r in [1.0, 2.0, 4.0, 8.0] {
            entries.push(TestFn::Truncation { r });
        }
        Self {
            name: name.into(),
            entries,
        }
    }

    pub fn max_lipschitz(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.lipschitz())
            .fold(0.0, f64::max)
    }
}

/// `max_zeta |int zeta d nu_a - int zeta d nu_b|` over the dictionary.
pub fn measure_distance(a: &ParticleEnsemble, b: &ParticleEnsemble, dict: &Dictionary) -> f64 {
    dict.entries
        .iter()
        .map(|f| (a.integrate(|l| f.eval(l)) - b.integrate(|l| f.eval(l))).abs())
        .fold(0.0, f64::max)
}
