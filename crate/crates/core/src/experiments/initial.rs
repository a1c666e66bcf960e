//! Deterministic initial-condition families for the scenarios.

use crate::bd::ClusterState;
use crate::error::{CoreError, Result};
use crate::lsw::{Particle, ParticleEnsemble};
use crate::rates::EquilibriumTable;
use crate::rescale::{project_mac, RescaleParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// A prepared initial condition: either a cluster state or a particle cloud.
#[derive(Debug, Clone)]
pub enum InitialState {
    Cluster(ClusterState),
    Particles(ParticleEnsemble),
}

/// Dispatches on the family name. Deterministic given the seed; errors on
/// unknown names.
pub fn make_initial(
    family: &str,
    table: &EquilibriumTable,
    icfg: &super::config::InitialConfig,
    seed: u64,
    len: usize,
    eps: f64,
    cutoff_exponent: f64,
) -> Result<InitialState> {
    match family {
        "equilibrium-bump" => Ok(InitialState::Cluster(equilibrium_bump(
            table,
            len,
            eps,
            icfg.bump_center,
            icfg.bump_width,
            icfg.excess_mass,
        )?)),
        "pure-monomer" => Ok(InitialState::Cluster(pure_monomer(icfg.rho_0, len)?)),
        "log-uniform-particles" => Ok(InitialState::Particles(log_uniform_particles(
            seed,
            icfg.particle_count,
            icfg.lambda_lo,
            icfg.lambda_hi,
            icfg.excess_mass,
        )?)),
        "bd-projected" => {
            let rp = RescaleParams::new(eps, cutoff_exponent)?;
            let bump = equilibrium_bump(
                table,
                len,
                eps,
                icfg.bump_center,
                icfg.bump_width,
                icfg.excess_mass,
            )?;
            Ok(InitialState::Particles(
                bd_projected(&bump, &rp, icfg.lambda_cut).0,
            ))
        }
        other => Err(CoreError::UnknownFamily(other.into())),
    }
}

/// Saturated equilibrium everywhere plus a smooth compactly supported bump
/// at macroscopic scale carrying exactly `rho_bar` of excess mass:
/// `n_l = omega_l(z_s) + A s((eps l - center)/width)` with a squared-cosine
/// profile and `A` normalized so the bump's first moment is `rho_bar`.
///
/// The microscopic block is exactly at equilibrium, so the restricted free
/// energy below any cutoff inside the bump gap vanishes at time zero.
pub fn equilibrium_bump(
    table: &EquilibriumTable,
    len: usize,
    eps: f64,
    center: f64,
    width: f64,
    rho_bar: f64,
) -> Result<ClusterState> {
    if !(rho_bar > 0.0 && width > 0.0 && center - width > 0.0) {
        return Err(CoreError::InvalidParameter(
            "bump must carry positive mass on a positive support".into(),
        ));
    }
    if center + width >= eps * len as f64 {
        return Err(CoreError::InvalidParameter(format!(
            "bump support [{}, {}] exceeds the truncation window {}",
            center - width,
            center + width,
            eps * len as f64
        )));
    }
    let z = table.params().z_s;
    let profile: Vec<f64> = (1..=len)
        .map(|l| {
            let u = (eps * l as f64 - center) / width;
            if u.abs() <= 1.0 {
                (0.5 * std::f64::consts::PI * u).cos().powi(2)
            } else {
                0.0
            }
        })
        .collect();
    let norm: f64 = profile
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1) as f64 * p)
        .sum();
    if norm <= 0.0 {
        return Err(CoreError::InvalidParameter(
            "bump support contains no lattice site".into(),
        ));
    }
    let n: Vec<f64> = (1..=len)
        .map(|l| table.omega(z, l) + rho_bar * profile[l - 1] / norm)
        .collect();
    ClusterState::new(n)
}

/// All mass in monomers: `n_1 = rho_0`, everything else empty.
pub fn pure_monomer(rho_0: f64, len: usize) -> Result<ClusterState> {
    if !(rho_0 > 0.0) {
        return Err(CoreError::InvalidParameter(format!("rho_0 = {rho_0} <= 0")));
    }
    let mut n = vec![0.0; len];
    n[0] = rho_0;
    ClusterState::new(n)
}

/// Equal-mass atoms at log-uniform sizes in `[lambda_lo, lambda_hi]`,
/// normalized so the first moment is exactly `rho_bar`. Deterministic given
/// the seed.
pub fn log_uniform_particles(
    seed: u64,
    count: usize,
    lambda_lo: f64,
    lambda_hi: f64,
    rho_bar: f64,
) -> Result<ParticleEnsemble> {
    if count == 0 || !(lambda_lo > 0.0 && lambda_hi > lambda_lo) {
        return Err(CoreError::InvalidParameter(
            "bad particle family parameters".into(),
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (llo, lhi) = (lambda_lo.ln(), lambda_hi.ln());
    let lambdas: Vec<f64> = (0..count).map(|_| rng.gen_range(llo..lhi).exp()).collect();
    let total: f64 = lambdas.iter().sum();
    let mass = rho_bar / total;
    ParticleEnsemble::new(
        lambdas
            .into_iter()
            .map(|l| Particle { lambda: l, mass })
            .collect(),
    )
}

/// The macroscopic projection of a cluster state imported as a particle
/// cloud, with atoms below `lambda_cut` dropped as dust (their mass is
/// returned alongside).
pub fn bd_projected(
    state: &ClusterState,
    rp: &RescaleParams,
    lambda_cut: f64,
) -> (ParticleEnsemble, f64) {
    let full = project_mac(state, rp);
    let mut kept = Vec::new();
    let mut dust = 0.0;
    for a in full.atoms {
        if a.lambda >= lambda_cut {
            kept.push(a);
        } else {
            dust += a.mass * a.lambda;
        }
    }
    (ParticleEnsemble { atoms: kept }, dust)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{partition_coeffs, RateParams};

    #[test]
    fn bump_family_mass_and_micro_equilibrium() {
        let p = RateParams::new(0.0, 0.5, 1.0, 3.0).unwrap();
        let t = partition_coeffs(&p, 128).unwrap();
        let eps = 0.1;
        let state = equilibrium_bump(&t, 128, eps, 2.5, 1.0, 40.0).unwrap();
        // bump first moment is exact
        let excess: f64 = state
            .n
            .iter()
            .enumerate()
            .map(|(i, v)| (i + 1) as f64 * (v - t.omega(1.0, i + 1)))
            .sum();
        assert!((excess - 40.0).abs() <= 1e-10 * 40.0);
        // microscopic block exactly at equilibrium: F_mic = 0 at t = 0
        let rp = RescaleParams::new(eps, 0.3).unwrap();
        let split = crate::rescale::rescaled_energies(&p, &t, &state, &rp);
        assert_eq!(split.f_mic, 0.0);
        assert!(split.f_total().is_finite());
        // support must fit under the truncation
        assert!(equilibrium_bump(&t, 128, eps, 12.0, 1.5, 1.0).is_err());
    }

    #[test]
    fn monomer_family() {
        let s = pure_monomer(2.0, 16).unwrap();
        assert_eq!(s.mass(), 2.0);
        assert!(s.n[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn particle_family_deterministic_and_normalized() {
        let a = log_uniform_particles(9, 24, 0.5, 4.0, 40.0).unwrap();
        let b = log_uniform_particles(9, 24, 0.5, 4.0, 40.0).unwrap();
        assert_eq!(a.atoms, b.atoms);
        assert!((a.first_moment() - 40.0).abs() <= 1e-12 * 40.0);
        assert!(a.atoms.iter().all(|p| p.lambda >= 0.5 && p.lambda <= 4.0));
        let c = log_uniform_particles(10, 24, 0.5, 4.0, 40.0).unwrap();
        assert_ne!(a.atoms, c.atoms);
    }

    #[test]
    fn projection_family_drops_dust() {
        let p = RateParams::new(0.0, 0.5, 1.0, 3.0).unwrap();
        let t = partition_coeffs(&p, 128).unwrap();
        let eps = 0.1;
        let rp = RescaleParams::new(eps, 0.45).unwrap();
        let state = equilibrium_bump(&t, 128, eps, 2.5, 1.0, 40.0).unwrap();
        let (ens, dust) = bd_projected(&state, &rp, 0.4);
        assert!(ens.atoms.iter().all(|a| a.lambda >= 0.4));
        assert!(dust > 0.0);
        let (full, none) = bd_projected(&state, &rp, 0.0);
        assert_eq!(none, 0.0);
        assert!(full.len() > ens.len());
    }
}
