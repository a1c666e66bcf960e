//! The scale-parameter pipeline from the microscopic cluster system to the
//! macroscopic coarsening description: empirical-measure projection, rescaled
//! energy/action/dissipation with a micro/macro split at a cutoff size,
//! monomer-excess and moment-ratio diagnostics, relative-entropy and
//! log-Sobolev bounds for the quasistationary regime, and flux density
//! measures for the discrete continuity equation.

use crate::bd::{ClusterState, CovectorField};
use crate::error::{CoreError, Result};
use crate::lsw::{Particle, ParticleEnsemble};
use crate::numerics::log_sum_exp;
use crate::rates::{coag_rate, frag_rate, EquilibriumTable, RateParams};
use serde::{Deserialize, Serialize};

/// Scale parameter, cutoff exponent, and the derived cutoff size.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RescaleParams {
    pub eps: f64,
    /// Cutoff exponent, strictly inside `(0, 1/2)`.
    pub x: f64,
    /// Cutoff size `floor(eps^-x)`, clamped to at least 2 (the cutoff must
    /// leave a nonempty microscopic block, which `floor` alone cannot
    /// guarantee for coarse scales).
    pub l0: usize,
}

impl RescaleParams {
    pub fn new(eps: f64, x: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "eps = {eps} outside (0,1)"
            )));
        }
        if !(x > 0.0 && x < 0.5) {
            return Err(CoreError::InvalidParameter(format!(
                "x = {x} outside (0, 1/2)"
            )));
        }
        let l0 = (eps.powf(-x).floor() as usize).max(2);
        Ok(Self { eps, x, l0 })
    }

    /// Rescaled-clock speed-up `eps^-(1 - alpha + gamma)` for the given rates.
    pub fn time_scale(&self, params: &RateParams) -> f64 {
        self.eps.powf(-(1.0 - params.alpha + params.gamma))
    }

    /// Prefactor `z_s eps^-gamma` of the rescaled free energy.
    pub fn energy_scale(&self, params: &RateParams) -> f64 {
        params.z_s * self.eps.powf(-params.gamma)
    }

    /// Prefactor `z_s eps^-(1 - alpha + 2 gamma)` of the rescaled action and
    /// dissipation.
    pub fn rate_scale(&self, params: &RateParams) -> f64 {
        params.z_s * self.eps.powf(-(1.0 - params.alpha + 2.0 * params.gamma))
    }
}

/// Projects the macroscopic part `l >= l0` onto the empirical measure with
/// atoms `(eps l, n_l / eps)`, so `int zeta d nu = (1/eps) sum zeta(eps l) n_l`.
pub fn project_mac(state: &ClusterState, rp: &RescaleParams) -> ParticleEnsemble {
    let mut atoms = Vec::new();
    for (i, &nl) in state.n.iter().enumerate().skip(rp.l0 - 1) {
        if nl > 0.0 {
            atoms.push(Particle {
                lambda: rp.eps * (i + 1) as f64,
                mass: nl / rp.eps,
            });
        }
    }
    ParticleEnsemble { atoms }
}

/// Rescaled free energy split at the cutoff, all scaled by `z_s eps^-gamma`.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnergySplit {
    /// Summation over `l < l0`.
    pub f_mic: f64,
    /// Summation over `l >= l0`.
    pub f_mac: f64,
    /// First-order macroscopic surrogate
    /// `z_s eps^-gamma (q / (z_s (1-gamma))) sum_{l >= l0} l^(1-gamma) n_l`,
    /// which equals the particle energy of the projected measure.
    pub f_lsw_mac: f64,
}

impl EnergySplit {
    /// `f_mic + f_mac = z_s eps^-gamma F(n)` by the exact index split.
    pub fn f_total(&self) -> f64 {
        self.f_mic + self.f_mac
    }
}

/// Rescaled energies against the saturated reference, split at the cutoff.
pub fn rescaled_energies(
    params: &RateParams,
    table: &EquilibriumTable,
    state: &ClusterState,
    rp: &RescaleParams,
) -> EnergySplit {
    let z = params.z_s;
    let scale = rp.energy_scale(params);
    let (mut mic, mut mac, mut lsw) = (0.0, 0.0, 0.0);
    for (i, &nl) in state.n.iter().enumerate() {
        let l = i + 1;
        let lw = table.log_omega(z, l);
        let w = lw.exp();
        let term = if nl == 0.0 {
            w
        } else {
            nl * (nl.ln() - lw) - nl + w
        };
        if l < rp.l0 {
            mic += term;
        } else {
            mac += term;
            lsw += (l as f64).powf(1.0 - params.gamma) * nl;
        }
    }
    EnergySplit {
        f_mic: scale * mic,
        f_mac: scale * mac,
        f_lsw_mac: scale * params.q / (params.z_s * (1.0 - params.gamma)) * lsw,
    }
}

/// Rescaled monomer excess `h = (n_1 - z_s) / eps^gamma`.
pub fn monomer_excess(params: &RateParams, state: &ClusterState, eps: f64) -> f64 {
    (state.n[0] - params.z_s) / eps.powf(params.gamma)
}

/// Macroscopic moment-ratio supersaturation
/// `u = sum_{l >= l0} (b_{l+1} n_{l+1} - z_s a_l n_l) / (eps^gamma sum_{l >= l0} a_l n_l)`.
///
/// The saturation factor on the coagulation sum keeps the numerator
/// dimensionally consistent with the monomer excess; `literal_numerator`
/// switches to the plain `b_{l+1} n_{l+1} - a_l n_l` variant.
pub fn macroscopic_u_eps(
    params: &RateParams,
    state: &ClusterState,
    rp: &RescaleParams,
    literal_numerator: bool,
) -> Result<f64> {
    let len = state.len();
    let mut num = 0.0;
    let mut den = 0.0;
    let z_factor = if literal_numerator { 1.0 } else { params.z_s };
    for l in rp.l0..=len {
        let a = coag_rate(params, l) * state.n[l - 1];
        den += a;
        let b_next = if l < len {
            frag_rate(params, l + 1)? * state.n[l]
        } else {
            0.0
        };
        num += b_next - z_factor * a;
    }
    if den <= 0.0 {
        return Err(CoreError::InvalidParameter(
            "macroscopic moment ratio undefined: vanishing alpha-moment".into(),
        ));
    }
    Ok(num / (rp.eps.powf(params.gamma) * den))
}

/// Rescaled action and dissipation, with the dissipation split at the cutoff
/// (edge `l` belongs to the microscopic block when `l <= l0 - 1`).
#[derive(Debug, Clone, Copy)]
pub struct RescaledRates {
    pub a_eps: f64,
    pub d_eps: f64,
    pub d_mic_eps: f64,
    pub d_mac_eps: f64,
}

pub fn rescaled_action_dissipation(
    params: &RateParams,
    state: &ClusterState,
    phi: &CovectorField,
    rp: &RescaleParams,
) -> Result<RescaledRates> {
    let scale = rp.rate_scale(params);
    let len = state.len();
    let n = &state.n;
    let mut a_eps = 0.0;
    let (mut d_mic, mut d_mac) = (0.0, 0.0);
    for l in 1..len {
        let fwd = coag_rate(params, l) * n[0] * n[l - 1];
        let bwd = frag_rate(params, l + 1)? * n[l];
        let w = crate::numerics::log_mean(fwd, bwd);
        if w > 0.0 {
            let inc = phi.phi[0] + phi.phi[l - 1] - phi.phi[l];
            if !inc.is_finite() {
                return Err(CoreError::MaskedCovector { edge: l });
            }
            a_eps += w * inc * inc;
        }
        let d_term = if fwd == 0.0 && bwd == 0.0 {
            0.0
        } else if fwd == 0.0 || bwd == 0.0 {
            f64::INFINITY
        } else {
            (fwd - bwd) * (fwd.ln() - bwd.ln())
        };
        if l < rp.l0 {
            d_mic += d_term;
        } else {
            d_mac += d_term;
        }
    }
    let d_mic_eps = scale * d_mic;
    let d_mac_eps = scale * d_mac;
    Ok(RescaledRates {
        a_eps: scale * a_eps,
        d_eps: d_mic_eps + d_mac_eps,
        d_mic_eps,
        d_mac_eps,
    })
}

/// The microscopic block `l < l0` must fit inside both the state and the
/// table (the block's boundary edge also reads site `l0`).
fn check_mic_block(table: &EquilibriumTable, state: &ClusterState, l0: usize) -> Result<()> {
    if l0 < 2 || l0 > state.len() || l0 > table.len() {
        return Err(CoreError::InvalidParameter(format!(
            "cutoff l0 = {l0} outside the truncation window (state {}, table {})",
            state.len(),
            table.len()
        )));
    }
    Ok(())
}

/// `log omega_l(z) = l log z + log Q_l` for an arbitrary positive reference
/// density `z` (also above saturation: only finitely many terms are used).
fn log_omega_at(table: &EquilibriumTable, z: f64, l: usize) -> f64 {
    l as f64 * z.ln() + table.log_q(l)
}

/// Restricted relative entropy of the small clusters against the
/// quasistationary family seeded by the monomer density,
/// `H_mic(n | omega(n_1)) = sum_{l < l0} omega_l(n_1) psi(n_l / omega_l(n_1))`.
pub fn quasistationary_entropy(
    table: &EquilibriumTable,
    state: &ClusterState,
    l0: usize,
) -> Result<f64> {
    check_mic_block(table, state, l0)?;
    let n1 = state.n[0];
    if !(n1 > 0.0) {
        return Err(CoreError::InvalidParameter(
            "monomer density must be positive".into(),
        ));
    }
    let mut total = 0.0;
    for l in 1..l0.min(state.len() + 1) {
        let nl = state.n[l - 1];
        let lw = log_omega_at(table, n1, l);
        let w = lw.exp();
        total += if nl == 0.0 {
            w
        } else {
            nl * (nl.ln() - lw) - nl + w
        };
    }
    Ok(total)
}

/// Square-root lower bound of the microscopic dissipation at reference
/// `z = n_1`: `4 sum_{l < l0} a_l n_1 omega_l(n_1) (sqrt(n_l/omega_l) - sqrt(n_{l+1}/omega_{l+1}))^2`.
pub fn sqrt_dissipation_mic(
    params: &RateParams,
    table: &EquilibriumTable,
    state: &ClusterState,
    l0: usize,
) -> Result<f64> {
    check_mic_block(table, state, l0)?;
    let n1 = state.n[0];
    if !(n1 > 0.0) {
        return Err(CoreError::InvalidParameter(
            "monomer density must be positive".into(),
        ));
    }
    let ratio_sqrt = |l: usize| -> f64 {
        let nl = state.n[l - 1];
        if nl == 0.0 {
            0.0
        } else {
            (0.5 * (nl.ln() - log_omega_at(table, n1, l))).exp()
        }
    };
    let mut total = 0.0;
    for l in 1..l0 {
        let w = coag_rate(params, l) * n1 * log_omega_at(table, n1, l).exp();
        let d = ratio_sqrt(l) - ratio_sqrt(l + 1);
        total += 4.0 * w * d * d;
    }
    Ok(total)
}

/// Certified constants of the microscopic energy-dissipation estimate.
#[derive(Debug, Clone, Copy)]
pub struct LsiBound {
    /// `480 sup_{1 < l < l0} W_l log(W_1/W_l) V_l` at `z = n_1`.
    pub c_lsi: f64,
    /// `(n_1^2 + 2 (sum_{l<l0} n_l)(sum_{l<l0} omega_l(n_1))) / n_1^2 * c_lsi`.
    pub c_eed: f64,
}

/// Log-Sobolev style bound for the small-cluster block, computed in
/// log-sum-exp form so tail sums survive underflow of individual `omega_l`.
pub fn lsi_bound(
    params: &RateParams,
    table: &EquilibriumTable,
    state: &ClusterState,
    l0: usize,
) -> Result<LsiBound> {
    check_mic_block(table, state, l0)?;
    if l0 < 3 {
        return Err(CoreError::InvalidParameter(format!(
            "lsi bound needs l0 >= 3, got {l0}"
        )));
    }
    let n1 = state.n[0];
    if !(n1 > 0.0) {
        return Err(CoreError::InvalidParameter(
            "monomer density must be positive".into(),
        ));
    }
    let log_w: Vec<f64> = (1..l0).map(|l| log_omega_at(table, n1, l)).collect();
    // log W_l = log sum_{j=l..l0-1} omega_j, built from the tail
    let mut log_tail = vec![f64::NEG_INFINITY; l0 - 1];
    for l in (0..l0 - 1).rev() {
        let next = if l + 1 < l0 - 1 {
            log_tail[l + 1]
        } else {
            f64::NEG_INFINITY
        };
        log_tail[l] = log_sum_exp(&[log_w[l], next]);
    }
    // log V_l = log sum_{j=1..l-1} 1/(a_j omega_j)
    let mut sup = 0.0_f64;
    let mut log_v = f64::NEG_INFINITY;
    for l in 2..l0 {
        let j = l - 1;
        let inv = -(coag_rate(params, j).ln() + log_w[j - 1]);
        log_v = log_sum_exp(&[log_v, inv]);
        let term = (log_tail[l - 1] + log_v).exp() * (log_tail[0] - log_tail[l - 1]);
        sup = sup.max(term);
    }
    let c_lsi = 480.0 * sup;
    let sum_n: f64 = state.n.iter().take(l0 - 1).sum();
    let sum_w: f64 = log_w.iter().map(|lw| lw.exp()).sum();
    let c_eed = c_lsi * (n1 * n1 + 2.0 * sum_n * sum_w) / (n1 * n1);
    Ok(LsiBound { c_lsi, c_eed })
}

/// Monitored diagnostics from the entropy-control inequalities: the weighted
/// total-variation to square-root-energy ratio and the excess-mass residual.
/// Both are reported quantities; the constants they bound are not explicit.
#[derive(Debug, Clone, Copy)]
pub struct EntropyDiagnostics {
    /// `sum_l l^(1-gamma) |n_l - omega_l| / sqrt(F(n))`, 0 when `F = 0`.
    pub ratio_tv: f64,
    /// `|sum_{l >= l0} l n_l - (rho - rho_s)|`.
    pub residual_excess: f64,
    /// Set when the ratio was 0/0-guarded.
    pub degenerate: bool,
}

pub fn csiszar_pinsker_diagnostics(
    params: &RateParams,
    table: &EquilibriumTable,
    state: &ClusterState,
    l0: usize,
    rho_s: f64,
) -> Result<EntropyDiagnostics> {
    let f = crate::bd::free_energy(table, state, params.z_s)?;
    let mut tv = 0.0;
    let mut mac_mass = 0.0;
    for (i, &nl) in state.n.iter().enumerate() {
        let l = i + 1;
        let w = table.log_omega(params.z_s, l).exp();
        tv += (l as f64).powf(1.0 - params.gamma) * (nl - w).abs();
        if l >= l0 {
            mac_mass += l as f64 * nl;
        }
    }
    let degenerate = f <= 0.0;
    let ratio_tv = if degenerate { 0.0 } else { tv / f.sqrt() };
    let residual_excess = (mac_mass - (state.mass() - rho_s)).abs();
    Ok(EntropyDiagnostics {
        ratio_tv,
        residual_excess,
        degenerate,
    })
}

/// One atom of a flux density measure: position `eps l` and signed weight.
#[derive(Debug, Clone, Copy)]
pub struct FluxAtom {
    pub lambda: f64,
    pub weight: f64,
}

/// Flux density measures on the macroscopic block: the covector-driven
/// measure with weights `z_s eps^-(1-alpha+2gamma) w_l nabla_l phi` and the
/// raw-flux measure with weights `eps^-(1-alpha+gamma) J_l`. For
/// `phi = -DF` the two agree atom-by-atom up to the factor
/// `z_s eps^-gamma`.
pub fn rescaled_flux_measures(
    params: &RateParams,
    state: &ClusterState,
    phi: &CovectorField,
    rp: &RescaleParams,
) -> Result<(Vec<FluxAtom>, Vec<FluxAtom>)> {
    let len = state.len();
    let n = &state.n;
    let cov_scale = rp.rate_scale(params);
    let flux_scale = rp.eps.powf(-(1.0 - params.alpha + params.gamma));
    let mut mu = Vec::new();
    let mut mu_hat = Vec::new();
    for l in rp.l0..len {
        let fwd = coag_rate(params, l) * n[0] * n[l - 1];
        let bwd = frag_rate(params, l + 1)? * n[l];
        let w = crate::numerics::log_mean(fwd, bwd);
        let lambda = rp.eps * l as f64;
        let weight = if w == 0.0 {
            0.0
        } else {
            let inc = phi.phi[l] - phi.phi[l - 1] - phi.phi[0]; // nabla_l phi
            if !inc.is_finite() {
                return Err(CoreError::MaskedCovector { edge: l });
            }
            cov_scale * w * inc
        };
        mu.push(FluxAtom { lambda, weight });
        mu_hat.push(FluxAtom {
            lambda,
            weight: flux_scale * (fwd - bwd),
        });
    }
    Ok((mu, mu_hat))
}
