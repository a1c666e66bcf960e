//! Truncated cluster dynamics in flux form and Onsager gradient form, the
//! free energy / dissipation / action functionals, the curve functional that
//! certifies solutions, and the adaptive integrator.
//!
//! Truncation closes the hierarchy with a vanishing top flux, which conserves
//! the first moment exactly; the integrator reports `L * max_t n_L` so runs
//! can be judged against their truncation length.

use crate::error::{CoreError, Result};
use crate::integrate::{integrate_adaptive, IntegrationStats, StepControls, StepVerdict};
use crate::numerics::log_mean;
use crate::rates::{coag_rate, frag_rate, EquilibriumTable, RateParams};

/// Finite truncation of the nonnegative cluster-density sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    /// `n[i]` is the density of clusters of size `i + 1`.
    pub n: Vec<f64>,
}

impl ClusterState {
    pub fn new(n: Vec<f64>) -> Result<Self> {
        if n.len() < 3 {
            return Err(CoreError::InvalidParameter(format!(
                "truncation length {} < 3",
                n.len()
            )));
        }
        if n.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CoreError::InvalidParameter(
                "densities must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { n })
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    /// First moment `sum_l l n_l`.
    pub fn mass(&self) -> f64 {
        self.n
            .iter()
            .enumerate()
            .map(|(i, v)| (i + 1) as f64 * v)
            .sum()
    }
}

/// Monomer-exchange fluxes `J_l`, `l = 1..L-1`; the top flux `J_L` is zero by
/// the conservative closure.
#[derive(Debug, Clone)]
pub struct FluxVector {
    /// `j[i]` is the flux from size `i + 1` to size `i + 2`.
    pub j: Vec<f64>,
}

/// A covector (potential per component). Entries may carry a non-finite
/// sentinel where the gradient is masked by a zero density; consumers must
/// only read such entries against vanishing edge weight.
#[derive(Debug, Clone)]
pub struct CovectorField {
    pub phi: Vec<f64>,
}

/// `J_l = a_l n_1 n_l - b_{l+1} n_{l+1}` for `l = 1..L-1`.
pub fn fluxes(params: &RateParams, state: &ClusterState) -> FluxVector {
    let n = &state.n;
    let len = n.len();
    let mut j = Vec::with_capacity(len - 1);
    for l in 1..len {
        let a = coag_rate(params, l);
        let b = frag_rate(params, l + 1).expect("l + 1 >= 2");
        j.push(a * n[0] * n[l - 1] - b * n[l]);
    }
    FluxVector { j }
}

/// Time derivative in flux form: `dn_l = J_{l-1} - J_l` for `l >= 2` and
/// `dn_1 = -sum_l J_l - J_1`, so the first moment is conserved exactly.
pub fn bd_rhs(params: &RateParams, state: &ClusterState) -> Vec<f64> {
    let j = fluxes(params, state).j;
    rhs_from_fluxes(&j, state.len())
}

fn rhs_from_fluxes(j: &[f64], len: usize) -> Vec<f64> {
    let mut dn = vec![0.0; len];
    let total: f64 = j.iter().sum();
    dn[0] = -total - j[0];
    for i in 1..len {
        dn[i] = j[i - 1] - if i < len - 1 { j[i] } else { 0.0 };
    }
    dn
}

/// Edge mobility `k^l n-hat_l = log_mean(a_l n_1 n_l, b_{l+1} n_{l+1})`, the
/// omega-free form of the logarithmic-mean weight.
pub fn edge_weight(params: &RateParams, state: &ClusterState, l: usize) -> f64 {
    debug_assert!(l >= 1 && l < state.len());
    let n = &state.n;
    let a = coag_rate(params, l) * n[0] * n[l - 1];
    let b = frag_rate(params, l + 1).expect("l + 1 >= 2") * n[l];
    log_mean(a, b)
}

/// Onsager operator applied to a covector:
/// `K(n) phi = sum_l w_l ((e1 + e_l - e_{l+1}) . phi) (e1 + e_l - e_{l+1})`.
///
/// The result is mass-orthogonal. Reading a non-finite (masked) covector
/// entry against a nonzero weight is an error; against zero weight the edge
/// simply drops out.
pub fn onsager_apply(
    params: &RateParams,
    state: &ClusterState,
    phi: &CovectorField,
) -> Result<Vec<f64>> {
    let len = state.len();
    assert_eq!(phi.phi.len(), len, "covector length mismatch");
    let mut out = vec![0.0; len];
    for l in 1..len {
        let w = edge_weight(params, state, l);
        if w == 0.0 {
            continue;
        }
        let inc = phi.phi[0] + phi.phi[l - 1] - phi.phi[l];
        if !inc.is_finite() {
            return Err(CoreError::MaskedCovector { edge: l });
        }
        let v = w * inc;
        out[0] += v;
        out[l - 1] += v;
        out[l] -= v;
    }
    Ok(out)
}

/// Relative entropy `F_z(n) = sum_l omega_l(z) psi(n_l / omega_l(z))` with
/// `psi(a) = a log a - a + 1`, evaluated as
/// `n (log n - log omega) - n + omega` so that an equilibrium state gives an
/// exact zero and underflowed `omega` with positive `n` stays finite.
pub fn free_energy(table: &EquilibriumTable, state: &ClusterState, z: f64) -> Result<f64> {
    check_fugacity(table, z)?;
    assert!(table.len() >= state.len(), "table shorter than state");
    let mut total = 0.0;
    for (i, &nl) in state.n.iter().enumerate() {
        let lw = table.log_omega(z, i + 1);
        let w = lw.exp();
        if nl == 0.0 {
            total += w; // psi(0) = 1
        } else {
            total += nl * (nl.ln() - lw) - nl + w;
        }
    }
    Ok(total)
}

fn check_fugacity(table: &EquilibriumTable, z: f64) -> Result<()> {
    if !(z > 0.0 && z <= table.params().z_s * (1.0 + 1e-14)) {
        return Err(CoreError::InvalidParameter(format!(
            "fugacity z = {z} out of range"
        )));
    }
    Ok(())
}

/// Differential of the free energy, `(DF)_l = log n_l - log omega_l(z)`.
/// Zero-density entries are masked with a NaN sentinel and must only ever
/// multiply a vanishing edge weight.
pub fn energy_gradient(table: &EquilibriumTable, state: &ClusterState, z: f64) -> CovectorField {
    let phi = state
        .n
        .iter()
        .enumerate()
        .map(|(i, &nl)| {
            if nl > 0.0 {
                nl.ln() - table.log_omega(z, i + 1)
            } else {
                f64::NAN
            }
        })
        .collect();
    CovectorField { phi }
}

/// Entropy dissipation
/// `D(n) = sum_l (a_l n_1 n_l - b_{l+1} n_{l+1}) (log a_l n_1 n_l - log b_{l+1} n_{l+1})`.
///
/// A pair with one factor zero and the other positive carries a nonzero flux
/// against an infinite potential difference and contributes a flagged
/// `+inf`; a zero-zero pair contributes nothing.
pub fn dissipation(params: &RateParams, state: &ClusterState) -> f64 {
    let n = &state.n;
    let mut total = 0.0;
    for l in 1..n.len() {
        let a = coag_rate(params, l) * n[0] * n[l - 1];
        let b = frag_rate(params, l + 1).expect("l + 1 >= 2") * n[l];
        if a == 0.0 && b == 0.0 {
            continue;
        }
        if a == 0.0 || b == 0.0 {
            return f64::INFINITY;
        }
        total += (a - b) * (a.ln() - b.ln());
    }
    total
}

/// Action `A(n, phi) = sum_l w_l |(e1 + e_l - e_{l+1}) . phi|^2 >= 0`.
pub fn action(params: &RateParams, state: &ClusterState, phi: &CovectorField) -> Result<f64> {
    let len = state.len();
    assert_eq!(phi.phi.len(), len, "covector length mismatch");
    let mut total = 0.0;
    for l in 1..len {
        let w = edge_weight(params, state, l);
        if w == 0.0 {
            continue;
        }
        let inc = phi.phi[0] + phi.phi[l - 1] - phi.phi[l];
        if !inc.is_finite() {
            return Err(CoreError::MaskedCovector { edge: l });
        }
        total += w * inc * inc;
    }
    Ok(total)
}

/// `max_l |bd_rhs(n) + K(n) DF(n)|`: an algebraic identity on strictly
/// positive states, so the result is pure roundoff.
pub fn gradient_flow_residual(
    params: &RateParams,
    table: &EquilibriumTable,
    state: &ClusterState,
    z: f64,
) -> Result<f64> {
    if state.n.iter().any(|&v| v <= 0.0) {
        return Err(CoreError::InvalidParameter(
            "gradient-flow residual requires a strictly positive state".into(),
        ));
    }
    let rhs = bd_rhs(params, state);
    let grad = energy_gradient(table, state, z);
    let kdf = onsager_apply(params, state, &grad)?;
    Ok(rhs
        .iter()
        .zip(&kdf)
        .map(|(r, k)| (r + k).abs())
        .fold(0.0, f64::max))
}

/// Builds a covector whose edge increments are `scale_l` times those of
/// `-DF(n)`; used to produce velocity-perturbed curves for the certification
/// functional. Requires a strictly positive state.
pub fn covector_with_scaled_increments(
    table: &EquilibriumTable,
    state: &ClusterState,
    z: f64,
    scale: &[f64],
) -> Result<CovectorField> {
    if state.n.iter().any(|&v| v <= 0.0) {
        return Err(CoreError::InvalidParameter(
            "state must be strictly positive".into(),
        ));
    }
    assert_eq!(scale.len(), state.len() - 1);
    let minus_df: Vec<f64> = energy_gradient(table, state, z)
        .phi
        .iter()
        .map(|v| -v)
        .collect();
    let mut phi = vec![0.0; state.len()];
    phi[0] = minus_df[0];
    // phi'_{l+1} = phi'_1 + phi'_l - scale_l * inc_l reproduces the scaled
    // increments exactly
    for l in 1..state.len() {
        let inc = minus_df[0] + minus_df[l - 1] - minus_df[l];
        phi[l] = phi[0] + phi[l - 1] - scale[l - 1] * inc;
    }
    Ok(CovectorField { phi })
}

/// Controls for [`integrate_bd`].
#[derive(Debug, Clone, Copy)]
pub struct BdControls {
    pub step: StepControls,
    /// Factor multiplying the right-hand side; the rescaled clock uses
    /// `eps^-(1 - alpha + gamma)`.
    pub time_scale: f64,
    /// Target number of stored full states along the run.
    pub sample_count: usize,
    /// Fugacity of the Lyapunov free energy; defaults to saturation.
    pub reference_z: Option<f64>,
}

impl Default for BdControls {
    fn default() -> Self {
        Self {
            step: StepControls::default(),
            time_scale: 1.0,
            sample_count: 120,
            reference_z: None,
        }
    }
}

/// Time-sampled trajectory with the per-step scalars needed for quadrature
/// of the certification functional, plus full states on a coarser grid.
#[derive(Debug, Clone)]
pub struct CurveRecord {
    /// Every accepted step time, starting at 0.
    pub times: Vec<f64>,
    /// Free energy at every accepted step.
    pub free_energy: Vec<f64>,
    /// Dissipation on the integration clock (`time_scale * D`).
    pub dissipation: Vec<f64>,
    pub mass: Vec<f64>,
    pub monomer: Vec<f64>,
    /// Indices into `times` where full states were stored.
    pub sample_indices: Vec<usize>,
    pub states: Vec<ClusterState>,
    /// Truncation-quality metric `L * max_t n_L`.
    pub truncation_metric: f64,
    pub reference_z: f64,
    pub time_scale: f64,
    pub stats: IntegrationStats,
}

impl CurveRecord {
    pub fn sample_times(&self) -> Vec<f64> {
        self.sample_indices.iter().map(|&i| self.times[i]).collect()
    }

    /// `F(T) - F(0) + int D dt` by trapezoid on every accepted step.
    pub fn energy_dissipation_residual(&self) -> f64 {
        let df = self.free_energy.last().unwrap() - self.free_energy[0];
        df + trapezoid(&self.times, &self.dissipation)
    }

    /// Relative drift of the first moment over the run.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.mass[0];
        self.mass.iter().map(|m| (m - m0).abs()).fold(0.0, f64::max) / m0
    }
}

pub(crate) fn trapezoid(t: &[f64], v: &[f64]) -> f64 {
    t.windows(2)
        .zip(v.windows(2))
        .map(|(tw, vw)| 0.5 * (tw[1] - tw[0]) * (vw[0] + vw[1]))
        .sum()
}

/// Crude trapezoid error estimate from slope changes between adjacent panels.
pub(crate) fn trapezoid_error_estimate(t: &[f64], v: &[f64]) -> f64 {
    let mut est = 0.0;
    for k in 1..t.len().saturating_sub(1) {
        let dt0 = t[k] - t[k - 1];
        let dt1 = t[k + 1] - t[k];
        if dt0 <= 0.0 || dt1 <= 0.0 {
            continue;
        }
        let s0 = (v[k] - v[k - 1]) / dt0;
        let s1 = (v[k + 1] - v[k]) / dt1;
        est += dt1 * dt1 / 12.0 * (s1 - s0).abs();
    }
    est
}

/// Integrates the truncated system with adaptive embedded stepping.
///
/// Acceptance of a step requires the embedded error below tolerance, all
/// densities above `-10 eps * scale` (then clamped to zero), and the free
/// energy nonincreasing up to `1e-10 (1 + |F|)`.
pub fn integrate_bd(
    params: &RateParams,
    table: &EquilibriumTable,
    state0: &ClusterState,
    t_end: f64,
    controls: &BdControls,
) -> Result<CurveRecord> {
    if !(t_end > 0.0) {
        return Err(CoreError::InvalidParameter(format!("t_end = {t_end} <= 0")));
    }
    let len = state0.len();
    assert!(table.len() >= len, "table shorter than state");
    let z = controls.reference_z.unwrap_or(params.z_s);
    check_fugacity(table, z)?;
    let scale = controls.time_scale;

    let params_c = *params;
    let rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| {
        let j: Vec<f64> = (1..len)
            .map(|l| {
                let a = coag_rate(&params_c, l);
                let b = frag_rate(&params_c, l + 1).expect("l + 1 >= 2");
                a * y[0] * y[l - 1] - b * y[l]
            })
            .collect();
        let total: f64 = j.iter().sum();
        dy[0] = scale * (-total - j[0]);
        for i in 1..len {
            dy[i] = scale * (j[i - 1] - if i < len - 1 { j[i] } else { 0.0 });
        }
    };

    let energy_of = |y: &[f64]| -> f64 {
        let mut total = 0.0;
        for (i, &nl) in y.iter().enumerate() {
            let lw = table.log_omega(z, i + 1);
            let w = lw.exp();
            total += if nl == 0.0 {
                w
            } else {
                nl * (nl.ln() - lw) - nl + w
            };
        }
        total
    };

    let mut last_energy = energy_of(&state0.n);
    let accept = move |_t: f64, _y_old: &[f64], y_new: &mut [f64], stats: &mut IntegrationStats| {
        let amp = y_new.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let floor = -10.0 * f64::EPSILON * amp;
        let mut clamped = 0.0;
        for v in y_new.iter_mut() {
            if *v < 0.0 {
                if *v < floor {
                    return StepVerdict::Reject;
                }
                clamped += -*v;
                *v = 0.0;
            }
        }
        let f_new = energy_of(y_new);
        if f_new > last_energy + 1e-10 * (1.0 + last_energy.abs()) {
            return StepVerdict::Reject;
        }
        stats.clamped_total += clamped;
        last_energy = f_new;
        StepVerdict::Accept
    };

    let mut record = CurveRecord {
        times: Vec::new(),
        free_energy: Vec::new(),
        dissipation: Vec::new(),
        mass: Vec::new(),
        monomer: Vec::new(),
        sample_indices: Vec::new(),
        states: Vec::new(),
        truncation_metric: 0.0,
        reference_z: z,
        time_scale: scale,
        stats: IntegrationStats::default(),
    };
    let sample_every = t_end / controls.sample_count.max(1) as f64;
    let mut next_sample = 0.0;
    let dissipation_of = |y: &[f64]| -> f64 {
        let mut total = 0.0;
        for l in 1..len {
            let a = coag_rate(&params_c, l) * y[0] * y[l - 1];
            let b = frag_rate(&params_c, l + 1).expect("l + 1 >= 2") * y[l];
            if a == 0.0 && b == 0.0 {
                continue;
            }
            if a == 0.0 || b == 0.0 {
                return f64::INFINITY;
            }
            total += (a - b) * (a.ln() - b.ln());
        }
        total
    };

    let on_accept = |t: f64, y: &[f64], _dt: f64| {
        record.times.push(t);
        record.free_energy.push(energy_of(y));
        record.dissipation.push(scale * dissipation_of(y));
        record
            .mass
            .push(y.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum());
        record.monomer.push(y[0]);
        record.truncation_metric = record.truncation_metric.max(len as f64 * y[len - 1]);
        if t >= next_sample || t >= t_end * (1.0 - 1e-14) {
            record.sample_indices.push(record.times.len() - 1);
            record.states.push(ClusterState { n: y.to_vec() });
            next_sample = t + sample_every;
        }
    };

    let (_, stats) = integrate_adaptive(rhs, &state0.n, t_end, &controls.step, accept, on_accept)?;
    record.stats = stats;
    Ok(record)
}

/// Value of the curve functional together with a quadrature error estimate.
#[derive(Debug, Clone, Copy)]
pub struct JValue {
    pub j: f64,
    pub quadrature_error: f64,
}

/// Curve functional `F(T) - F(0) + 1/2 int D + 1/2 int A`.
///
/// Without covectors the curve is treated as solver output, where the action
/// equals the dissipation pointwise and the dense per-step record is used.
/// With covectors (one per stored sample), both integrals run on the sample
/// grid with the same trapezoid so their cancellation structure survives.
pub fn curve_j(
    params: &RateParams,
    record: &CurveRecord,
    covectors: Option<&[CovectorField]>,
) -> Result<JValue> {
    let df = record.free_energy.last().unwrap() - record.free_energy[0];
    match covectors {
        None => {
            let int_d = trapezoid(&record.times, &record.dissipation);
            Ok(JValue {
                j: df + int_d,
                quadrature_error: trapezoid_error_estimate(&record.times, &record.dissipation),
            })
        }
        Some(cov) => {
            assert_eq!(
                cov.len(),
                record.states.len(),
                "one covector per stored sample"
            );
            let ts = record.sample_times();
            let mut d_vals = Vec::with_capacity(cov.len());
            let mut a_vals = Vec::with_capacity(cov.len());
            for (state, phi) in record.states.iter().zip(cov) {
                d_vals.push(record.time_scale * dissipation(params, state));
                a_vals.push(record.time_scale * action(params, state, phi)?);
            }
            let half = 0.5 * (trapezoid(&ts, &d_vals) + trapezoid(&ts, &a_vals));
            let quad = trapezoid_error_estimate(&ts, &d_vals);
            Ok(JValue {
                j: df + half,
                quadrature_error: quad,
            })
        }
    }
}
