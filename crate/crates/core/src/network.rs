//! Reversible mass-action reaction networks as entropic gradient flows, with
//! the cluster system, detailed-balance Smoluchowski coagulation-
//! fragmentation, and the modified cluster system (mixing entropy over the
//! total number) as instances.

use crate::bd::CovectorField;
use crate::error::{CoreError, Result};
use crate::numerics::log_mean;
use crate::rates::{coag_rate, frag_rate, EquilibriumTable, RateParams};

/// Sparse stoichiometric complex: `(species index, coefficient)`, species
/// 0-based, coefficients positive.
pub type Complex = Vec<(usize, u32)>;

/// One reversible reaction with its equilibrium flux
/// `k = k_+ omega^x = k_- omega^y`.
#[derive(Debug, Clone)]
pub struct Reaction {
    pub x: Complex,
    pub y: Complex,
    pub k: f64,
}

/// A reversible mass-action network with positive reference state `omega`
/// satisfying detailed balance for every reaction.
#[derive(Debug, Clone)]
pub struct ReactionNetwork {
    pub omega: Vec<f64>,
    log_omega: Vec<f64>,
    pub reactions: Vec<Reaction>,
}

/// Raw reaction input: stoichiometry plus forward/backward rate constants.
#[derive(Debug, Clone)]
pub struct RawReaction {
    pub x: Complex,
    pub y: Complex,
    pub k_plus: f64,
    pub k_minus: f64,
}

const BALANCE_TOL: f64 = 1e-12;

fn log_monomial(complex: &Complex, log_vals: &[f64]) -> f64 {
    complex.iter().map(|&(i, c)| c as f64 * log_vals[i]).sum()
}

/// `prod_i (n_i / omega_i)^{c_i}` with the convention that any zero density
/// raised to a positive power makes the whole monomial exactly zero; no log
/// of zero is ever taken.
fn monomial_ratio(complex: &Complex, n: &[f64], log_omega: &[f64]) -> f64 {
    let mut log_acc = 0.0;
    for &(i, c) in complex {
        if n[i] == 0.0 {
            return 0.0;
        }
        log_acc += c as f64 * (n[i].ln() - log_omega[i]);
    }
    log_acc.exp()
}

impl ReactionNetwork {
    /// Validates detailed balance `k_+ omega^x = k_- omega^y` per reaction
    /// (relative tolerance 1e-12) and stores the equilibrium fluxes.
    pub fn new(omega: Vec<f64>, raw: Vec<RawReaction>) -> Result<Self> {
        if omega.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(CoreError::InvalidParameter(
                "reference state must be positive".into(),
            ));
        }
        let log_omega: Vec<f64> = omega.iter().map(|w| w.ln()).collect();
        let n = omega.len();
        let mut reactions = Vec::with_capacity(raw.len());
        for (r, raw) in raw.into_iter().enumerate() {
            for &(i, c) in raw.x.iter().chain(raw.y.iter()) {
                if i >= n || c == 0 {
                    return Err(CoreError::InvalidParameter(format!(
                        "reaction {r}: bad species index or zero coefficient"
                    )));
                }
            }
            if complexes_equal(&raw.x, &raw.y) {
                return Err(CoreError::InvalidParameter(format!(
                    "reaction {r}: identical sides"
                )));
            }
            if !(raw.k_plus > 0.0 && raw.k_minus > 0.0) {
                return Err(CoreError::InvalidParameter(format!(
                    "reaction {r}: rate constants must be positive"
                )));
            }
            let log_fwd = raw.k_plus.ln() + log_monomial(&raw.x, &log_omega);
            let log_bwd = raw.k_minus.ln() + log_monomial(&raw.y, &log_omega);
            let residual = (log_fwd - log_bwd).abs();
            if residual > BALANCE_TOL {
                return Err(CoreError::DetailedBalance {
                    reaction: r,
                    residual,
                });
            }
            reactions.push(Reaction {
                x: raw.x,
                y: raw.y,
                k: log_fwd.exp(),
            });
        }
        Ok(Self {
            omega,
            log_omega,
            reactions,
        })
    }

    pub fn n_species(&self) -> usize {
        self.omega.len()
    }

    /// `dn = -sum_r k^r (n^x/omega^x - n^y/omega^y) (x - y)`.
    pub fn rhs(&self, n: &[f64]) -> Vec<f64> {
        assert_eq!(n.len(), self.n_species());
        let mut dn = vec![0.0; n.len()];
        for r in &self.reactions {
            let flux = r.k
                * (monomial_ratio(&r.x, n, &self.log_omega)
                    - monomial_ratio(&r.y, n, &self.log_omega));
            apply_difference(&mut dn, r, -flux);
        }
        dn
    }

    /// Onsager operator
    /// `K(n) phi = sum_r k^r logmean(n^x/w^x, n^y/w^y) ((x-y).phi) (x-y)`.
    pub fn onsager_apply(&self, n: &[f64], phi: &[f64]) -> Vec<f64> {
        assert_eq!(n.len(), self.n_species());
        assert_eq!(phi.len(), self.n_species());
        let mut out = vec![0.0; n.len()];
        for r in &self.reactions {
            let w = log_mean(
                monomial_ratio(&r.x, n, &self.log_omega),
                monomial_ratio(&r.y, n, &self.log_omega),
            );
            if w == 0.0 {
                continue;
            }
            let inc = difference_dot(r, phi);
            apply_difference(&mut out, r, r.k * w * inc);
        }
        out
    }

    /// Relative entropy `F(n) = sum_i (n_i log(n_i/omega_i) - n_i + omega_i)`.
    pub fn free_energy(&self, n: &[f64]) -> f64 {
        n.iter()
            .zip(&self.log_omega)
            .zip(&self.omega)
            .map(|((&ni, &lw), &w)| {
                if ni == 0.0 {
                    w
                } else {
                    ni * (ni.ln() - lw) - ni + w
                }
            })
            .sum()
    }

    /// Entropy dissipation with the same zero conventions as the cluster
    /// system: a one-sided zero with nonzero flux is flagged infinite.
    pub fn dissipation(&self, n: &[f64]) -> f64 {
        let mut total = 0.0;
        for r in &self.reactions {
            let fwd = monomial_ratio(&r.x, n, &self.log_omega);
            let bwd = monomial_ratio(&r.y, n, &self.log_omega);
            if fwd == 0.0 && bwd == 0.0 {
                continue;
            }
            if fwd == 0.0 || bwd == 0.0 {
                return f64::INFINITY;
            }
            total += r.k * (fwd - bwd) * (fwd.ln() - bwd.ln());
        }
        total
    }

    /// Integer basis of the conservation-law space (the orthogonal
    /// complement of the span of the difference vectors), computed by exact
    /// rational elimination. Desk-scale guard at 200 species.
    pub fn conservation_basis(&self) -> Result<Vec<Vec<i64>>> {
        let n = self.n_species();
        if n > 200 {
            return Err(CoreError::InvalidParameter(
                "conservation basis limited to 200 species".into(),
            ));
        }
        let mut rows: Vec<Vec<Frac>> = Vec::new();
        for r in &self.reactions {
            let mut row = vec![Frac::zero(); n];
            for &(i, c) in &r.x {
                row[i] = row[i].add(Frac::int(c as i128));
            }
            for &(i, c) in &r.y {
                row[i] = row[i].add(Frac::int(-(c as i128)));
            }
            rows.push(row);
        }
        Ok(rational_kernel(&mut rows, n))
    }
}

fn complexes_equal(a: &Complex, b: &Complex) -> bool {
    let mut a = a.clone();
    let mut b = b.clone();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

fn apply_difference(out: &mut [f64], r: &Reaction, scale: f64) {
    for &(i, c) in &r.x {
        out[i] += scale * c as f64;
    }
    for &(i, c) in &r.y {
        out[i] -= scale * c as f64;
    }
}

fn difference_dot(r: &Reaction, phi: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &(i, c) in &r.x {
        acc += c as f64 * phi[i];
    }
    for &(i, c) in &r.y {
        acc -= c as f64 * phi[i];
    }
    acc
}

// ---- exact rational kernel ----

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frac {
    num: i128,
    den: i128,
}

impl Frac {
    fn zero() -> Self {
        Self { num: 0, den: 1 }
    }
    fn int(v: i128) -> Self {
        Self { num: v, den: 1 }
    }
    fn reduce(mut self) -> Self {
        if self.num == 0 {
            return Self::zero();
        }
        if self.den < 0 {
            self.num = -self.num;
            self.den = -self.den;
        }
        let g = gcd(self.num.unsigned_abs(), self.den.unsigned_abs()) as i128;
        Self {
            num: self.num / g,
            den: self.den / g,
        }
    }
    fn add(self, o: Self) -> Self {
        Self {
            num: self.num * o.den + o.num * self.den,
            den: self.den * o.den,
        }
        .reduce()
    }
    fn sub(self, o: Self) -> Self {
        self.add(Self {
            num: -o.num,
            den: o.den,
        })
    }
    fn mul(self, o: Self) -> Self {
        Self {
            num: self.num * o.num,
            den: self.den * o.den,
        }
        .reduce()
    }
    fn div(self, o: Self) -> Self {
        Self {
            num: self.num * o.den,
            den: self.den * o.num,
        }
        .reduce()
    }
    fn is_zero(self) -> bool {
        self.num == 0
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Kernel basis of the row space by Gauss-Jordan over exact rationals,
/// scaled to primitive integer vectors.
#[allow(clippy::needless_range_loop)] // double indexing into the same row
fn rational_kernel(rows: &mut [Vec<Frac>], n: usize) -> Vec<Vec<i64>> {
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut rank = 0usize;
    for col in 0..n {
        let Some(pr) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, pr);
        let p = rows[rank][col];
        for c in 0..n {
            rows[rank][c] = rows[rank][c].div(p);
        }
        for r in 0..rows.len() {
            if r != rank && !rows[r][col].is_zero() {
                let f = rows[r][col];
                for c in 0..n {
                    let v = rows[rank][c].mul(f);
                    rows[r][c] = rows[r][c].sub(v);
                }
            }
        }
        pivots.push((rank, col));
        rank += 1;
    }
    let pivot_cols: Vec<usize> = pivots.iter().map(|&(_, c)| c).collect();
    let mut basis = Vec::new();
    for free in (0..n).filter(|c| !pivot_cols.contains(c)) {
        let mut v = vec![Frac::zero(); n];
        v[free] = Frac::int(1);
        for &(r, c) in &pivots {
            v[c] = Frac::zero().sub(rows[r][free]);
        }
        // clear denominators and divide by the content
        let lcm = v.iter().fold(1i128, |acc, f| {
            if f.is_zero() {
                acc
            } else {
                acc / gcd(acc.unsigned_abs(), f.den.unsigned_abs()) as i128 * f.den
            }
        });
        let ints: Vec<i128> = v.iter().map(|f| f.num * (lcm / f.den)).collect();
        let content = ints.iter().fold(0u128, |acc, &x| {
            gcd(acc.max(1), x.unsigned_abs().max(1)).max(1)
        });
        basis.push(ints.iter().map(|&x| (x / content as i128) as i64).collect());
    }
    basis
}

// ---- instances ----

/// The cluster system as a network: species `1..=len`, reactions
/// `X_1 + X_r <-> X_{r+1}` with equilibrium fluxes `a_r omega_1 omega_r` at
/// fugacity `z`.
pub fn build_bd_network(
    params: &RateParams,
    table: &EquilibriumTable,
    z: f64,
    len: usize,
) -> Result<ReactionNetwork> {
    assert!(len >= 3 && table.len() >= len);
    let omega: Vec<f64> = (1..=len).map(|l| table.omega(z, l)).collect();
    let raw: Vec<RawReaction> = (1..len)
        .map(|r| {
            let x = if r == 1 {
                vec![(0usize, 2u32)]
            } else {
                vec![(0, 1), (r - 1, 1)]
            };
            RawReaction {
                x,
                y: vec![(r, 1)],
                k_plus: coag_rate(params, r),
                k_minus: frag_rate(params, r + 1).expect("r + 1 >= 2"),
            }
        })
        .collect();
    ReactionNetwork::new(omega, raw)
}

/// Detailed-balance Smoluchowski coagulation-fragmentation truncated at
/// total size `n_max`: reactions `X_i + X_j <-> X_{i+j}` for `i <= j`,
/// `i + j <= n_max`. Rejects rate tables violating
/// `a_{ij} omega_i omega_j = b_{ij} omega_{i+j}`.
pub fn build_smoluchowski(
    coag: &dyn Fn(usize, usize) -> f64,
    frag: &dyn Fn(usize, usize) -> f64,
    omega: &[f64],
    n_max: usize,
) -> Result<ReactionNetwork> {
    assert!(n_max >= 2 && omega.len() >= n_max);
    let mut raw = Vec::new();
    for i in 1..=n_max {
        for j in i..=n_max {
            if i + j > n_max {
                break;
            }
            let x = if i == j {
                vec![(i - 1, 2u32)]
            } else {
                vec![(i - 1, 1), (j - 1, 1)]
            };
            raw.push(RawReaction {
                x,
                y: vec![(i + j - 1, 1)],
                k_plus: coag(i, j),
                k_minus: frag(i, j),
            });
        }
    }
    ReactionNetwork::new(omega[..n_max].to_vec(), raw)
}

// ---- modified cluster system ----

/// Fluxes of the modified system,
/// `J~_r = a_r n_1 n_r - b_{r+1} N(n) n_{r+1}` with `N(n) = sum_i n_i`.
pub fn modified_bd_fluxes(params: &RateParams, n: &[f64]) -> Vec<f64> {
    let total: f64 = n.iter().sum();
    (1..n.len())
        .map(|r| {
            coag_rate(params, r) * n[0] * n[r - 1]
                - frag_rate(params, r + 1).expect("r + 1 >= 2") * total * n[r]
        })
        .collect()
}

/// Modified dynamics with the conservative truncation closure; the first
/// moment is conserved exactly.
pub fn modified_bd_rhs(params: &RateParams, n: &[f64]) -> Vec<f64> {
    let j = modified_bd_fluxes(params, n);
    let mut dn = vec![0.0; n.len()];
    let total: f64 = j.iter().sum();
    dn[0] = -total - j[0];
    for i in 1..n.len() {
        dn[i] = j[i - 1] - if i < n.len() - 1 { j[i] } else { 0.0 };
    }
    dn
}

/// Modified free energy in its compact form
/// `F~(n) = sum_i (n_i log(n_i / (omega_i N(n))) + omega_i)`.
pub fn modified_bd_energy(omega: &[f64], n: &[f64]) -> f64 {
    let total: f64 = n.iter().sum();
    n.iter()
        .zip(omega)
        .map(|(&ni, &w)| {
            if ni == 0.0 {
                w
            } else {
                ni * (ni / (w * total)).ln() + w
            }
        })
        .sum()
}

/// `max_l |modified_rhs + K~(n) DF~(n)|` with the number-weighted
/// logarithmic-mean mobilities; an algebraic identity on strictly positive
/// states.
pub fn modified_gradient_residual(params: &RateParams, omega: &[f64], n: &[f64]) -> Result<f64> {
    if n.iter().any(|&v| v <= 0.0) {
        return Err(CoreError::InvalidParameter(
            "modified gradient residual requires a strictly positive state".into(),
        ));
    }
    let total: f64 = n.iter().sum();
    let grad: Vec<f64> = n
        .iter()
        .zip(omega)
        .map(|(&ni, &w)| (ni / (w * total)).ln())
        .collect();
    let rhs = modified_bd_rhs(params, n);
    let mut out = vec![0.0; n.len()];
    for r in 1..n.len() {
        // omega-free weight: logmean(a_r n_1 n_r, b_{r+1} N n_{r+1})
        let fwd = coag_rate(params, r) * n[0] * n[r - 1];
        let bwd = frag_rate(params, r + 1).expect("r + 1 >= 2") * total * n[r];
        let w = log_mean(fwd, bwd);
        let inc = grad[0] + grad[r - 1] - grad[r];
        let v = w * inc;
        out[0] += v;
        out[r - 1] += v;
        out[r] -= v;
    }
    Ok(rhs
        .iter()
        .zip(&out)
        .map(|(a, b)| (a + b).abs())
        .fold(0.0, f64::max))
}

/// Modified-system covector increments give back the action-type form used
/// by the integrator's Lyapunov check through [`modified_bd_energy`].
pub fn modified_bd_gradient(omega: &[f64], n: &[f64]) -> CovectorField {
    let total: f64 = n.iter().sum();
    CovectorField {
        phi: n
            .iter()
            .zip(omega)
            .map(|(&ni, &w)| {
                if ni > 0.0 {
                    (ni / (w * total)).ln()
                } else {
                    f64::NAN
                }
            })
            .collect(),
    }
}

// ---- network description files ----

/// Parses the line-based network description format:
///
/// ```text
/// # comment
/// species 3
/// omega 1 2.0
/// omega 2 1.0
/// omega 3 0.25
/// reaction 1.0 8.0 : 1*1 + 1*2 -> 1*3
/// ```
///
/// Species are 1-based in files; `reaction <k+> <k-> : x -> y` with each
/// side a `+`-separated list of `<coeff>*<species>` terms. Detailed balance
/// is validated on load.
pub fn parse_network(text: &str) -> Result<ReactionNetwork> {
    let mut n_species: Option<usize> = None;
    let mut omega: Vec<Option<f64>> = Vec::new();
    let mut raw: Vec<RawReaction> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| CoreError::NetworkParse {
            line: ln + 1,
            msg: msg.into(),
        };
        let mut words = line.split_whitespace();
        match words.next() {
            Some("species") => {
                let n: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| err("expected species count"))?;
                n_species = Some(n);
                omega = vec![None; n];
            }
            Some("omega") => {
                let i: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| err("expected species index"))?;
                let v: f64 = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| err("expected omega value"))?;
                if i == 0 || i > omega.len() {
                    return Err(err("species index out of range"));
                }
                omega[i - 1] = Some(v);
            }
            Some("reaction") => {
                let rest = line.strip_prefix("reaction").unwrap().trim();
                let (rates, sides) = rest
                    .split_once(':')
                    .ok_or_else(|| err("expected ':' in reaction"))?;
                let mut rv = rates.split_whitespace();
                let k_plus: f64 = rv
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| err("expected k+"))?;
                let k_minus: f64 = rv
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| err("expected k-"))?;
                let (xs, ys) = sides
                    .split_once("->")
                    .ok_or_else(|| err("expected '->' in reaction"))?;
                let parse_side = |side: &str| -> Result<Complex> {
                    side.split('+')
                        .map(|term| {
                            let term = term.trim();
                            let (c, s) = term
                                .split_once('*')
                                .ok_or_else(|| err("expected coeff*species"))?;
                            let c: u32 = c.trim().parse().map_err(|_| err("bad coefficient"))?;
                            let s: usize = s.trim().parse().map_err(|_| err("bad species"))?;
                            if s == 0 {
                                return Err(err("species indices are 1-based"));
                            }
                            Ok((s - 1, c))
                        })
                        .collect()
                };
                raw.push(RawReaction {
                    x: parse_side(xs)?,
                    y: parse_side(ys)?,
                    k_plus,
                    k_minus,
                });
            }
            _ => return Err(err("unknown directive")),
        }
    }
    let n = n_species.ok_or_else(|| CoreError::NetworkParse {
        line: 0,
        msg: "missing species count".into(),
    })?;
    let omega: Vec<f64> = omega
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| CoreError::NetworkParse {
                line: 0,
                msg: format!("missing omega for species {}", i + 1),
            })
        })
        .collect::<Result<_>>()?;
    if omega.len() != n {
        return Err(CoreError::NetworkParse {
            line: 0,
            msg: "species count mismatch".into(),
        });
    }
    ReactionNetwork::new(omega, raw)
}

/// Writes the network back in the file format accepted by [`parse_network`].
pub fn network_to_text(net: &ReactionNetwork) -> String {
    let mut out = String::new();
    out.push_str(&format!("species {}\n", net.n_species()));
    for (i, w) in net.omega.iter().enumerate() {
        out.push_str(&format!("omega {} {:.17e}\n", i + 1, w));
    }
    for r in &net.reactions {
        let side = |c: &Complex| {
            c.iter()
                .map(|&(i, k)| format!("{}*{}", k, i + 1))
                .collect::<Vec<_>>()
                .join(" + ")
        };
        // store k+ = k / omega^x and k- = k / omega^y
        let log_omega: Vec<f64> = net.omega.iter().map(|w| w.ln()).collect();
        let k_plus = (r.k.ln() - log_monomial(&r.x, &log_omega)).exp();
        let k_minus = (r.k.ln() - log_monomial(&r.y, &log_omega)).exp();
        out.push_str(&format!(
            "reaction {:.17e} {:.17e} : {} -> {}\n",
            k_plus,
            k_minus,
            side(&r.x),
            side(&r.y)
        ));
    }
    out
}
