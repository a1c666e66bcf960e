//! Adaptive explicit embedded Runge-Kutta stepping (Dormand-Prince 5(4))
//! shared by the cluster, particle, and network integrators.
//!
//! The driver is deliberately plain: proportional step control on the
//! embedded error estimate, an optional nonnegativity clamp, and an optional
//! Lyapunov-descent acceptance test. Stiffness shows up as a step-size
//! underflow error rather than being hidden behind an implicit solver; the
//! gradient structure of the systems integrated here makes energy descent a
//! legitimate extra rejection criterion.

use crate::error::{CoreError, Result};

/// Step-size and tolerance controls for the adaptive driver.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct StepControls {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for StepControls {
    fn default() -> Self {
        Self {
            dt_init: 1e-4,
            dt_min: 1e-13,
            dt_max: f64::INFINITY,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_steps: 20_000_000,
        }
    }
}

/// Outcome counters for one integration run.
#[derive(Debug, Clone, Copy, Default)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_dt: f64,
    /// Total absolute amount clamped away by the nonnegativity filter.
    pub clamped_total: f64,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Scratch buffers for one Dormand-Prince step.
pub struct Dopri5Workspace {
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    pub y_new: Vec<f64>,
    err: Vec<f64>,
}

impl Dopri5Workspace {
    pub fn new(dim: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            stage: vec![0.0; dim],
            y_new: vec![0.0; dim],
            err: vec![0.0; dim],
        }
    }

    pub fn k1_mut(&mut self) -> &mut Vec<f64> {
        &mut self.k[0]
    }

    /// Copies the last stage derivative into the first (first-same-as-last),
    /// to be called when a step is accepted.
    pub fn promote_fsal(&mut self) {
        let (head, tail) = self.k.split_at_mut(6);
        head[0].copy_from_slice(&tail[0]);
    }
}

/// One embedded trial step from `(t, y)` with size `dt`.
///
/// Requires `ws.k[0] = f(t, y)` on entry (first-same-as-last reuse).
/// Fills `ws.y_new` with the 5th-order candidate and returns the scaled
/// error norm; `ws.k[6]` holds `f(t + dt, y_new)` for reuse on acceptance.
#[allow(clippy::needless_range_loop)] // stage updates index several buffers at once
pub fn dopri5_step<F: FnMut(f64, &[f64], &mut [f64])>(
    rhs: &mut F,
    t: f64,
    y: &[f64],
    dt: f64,
    controls: &StepControls,
    ws: &mut Dopri5Workspace,
) -> f64 {
    let n = y.len();
    for s in 1..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, a) in A[s - 1].iter().enumerate().take(s) {
                acc += a * ws.k[j][i];
            }
            ws.stage[i] = y[i] + dt * acc;
        }
        if s < 6 {
            let (head, tail) = ws.k.split_at_mut(s);
            let _ = head;
            rhs(t + C[s] * dt, &ws.stage, &mut tail[0]);
        } else {
            // sixth stage lands on the candidate itself
            ws.y_new.copy_from_slice(&ws.stage);
            rhs(t + dt, &ws.y_new, &mut ws.k[6]);
        }
    }
    // the B5 combination equals the last stage by construction; error from E
    debug_assert_eq!(B5[6], 0.0);
    let mut norm2 = 0.0;
    for i in 0..n {
        let mut e = 0.0;
        for (j, c) in E.iter().enumerate() {
            e += c * ws.k[j][i];
        }
        ws.err[i] = dt * e;
        let scale = controls.abs_tol + controls.rel_tol * y[i].abs().max(ws.y_new[i].abs());
        let r = ws.err[i] / scale;
        norm2 += r * r;
    }
    (norm2 / n as f64).sqrt()
}

/// Verdict of a caller-supplied acceptance filter.
pub enum StepVerdict {
    Accept,
    Reject,
}

/// Adaptive driver. `accept_filter` may veto a step or modify the candidate
/// state in place (e.g. clamp tiny negatives); `on_accept` sees every
/// accepted `(t, y)` including the initial state.
pub fn integrate_adaptive<R, G, H>(
    mut rhs: R,
    y0: &[f64],
    t_end: f64,
    controls: &StepControls,
    mut accept_filter: G,
    mut on_accept: H,
) -> Result<(Vec<f64>, IntegrationStats)>
where
    R: FnMut(f64, &[f64], &mut [f64]),
    G: FnMut(f64, &[f64], &mut [f64], &mut IntegrationStats) -> StepVerdict,
    H: FnMut(f64, &[f64], f64),
{
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut dt = controls.dt_init.min(controls.dt_max).min(t_end);
    let mut ws = Dopri5Workspace::new(y.len());
    let mut stats = IntegrationStats {
        min_dt: dt,
        ..Default::default()
    };
    rhs(t, &y, ws.k1_mut());
    on_accept(0.0, &y, 0.0);

    let mut steps = 0usize;
    while t < t_end * (1.0 - 1e-14) {
        steps += 1;
        if steps > controls.max_steps {
            return Err(CoreError::InvalidConfig(format!(
                "step budget {} exhausted at t = {t}",
                controls.max_steps
            )));
        }
        dt = dt.min(t_end - t);
        let err = dopri5_step(&mut rhs, t, &y, dt, controls, &mut ws);
        let mut ok = err.is_finite() && err <= 1.0;
        if ok {
            match accept_filter(t + dt, &y, &mut ws.y_new, &mut stats) {
                StepVerdict::Accept => {}
                StepVerdict::Reject => ok = false,
            }
        }
        if ok {
            t += dt;
            std::mem::swap(&mut y, &mut ws.y_new);
            ws.promote_fsal();
            stats.accepted += 1;
            stats.min_dt = stats.min_dt.min(dt);
            on_accept(t, &y, dt);
            let grow = if err > 0.0 {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            dt = (dt * grow).min(controls.dt_max);
        } else {
            stats.rejected += 1;
            let shrink = if err.is_finite() && err > 1.0 {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.5
            };
            dt *= shrink;
            if dt < controls.dt_min {
                return Err(CoreError::DtUnderflow {
                    t,
                    dt,
                    dt_min: controls.dt_min,
                });
            }
        }
    }
    Ok((y, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_to_high_accuracy() {
        let controls = StepControls {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            ..Default::default()
        };
        let (y, stats) = integrate_adaptive(
            |_t, y, dy| dy[0] = -y[0],
            &[1.0],
            2.0,
            &controls,
            |_, _, _, _| StepVerdict::Accept,
            |_, _, _| {},
        )
        .unwrap();
        assert!((y[0] - (-2.0_f64).exp()).abs() < 1e-10);
        assert!(stats.accepted > 0);
    }

    #[test]
    fn harmonic_oscillator_energy() {
        let controls = StepControls {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            ..Default::default()
        };
        let (y, _) = integrate_adaptive(
            |_t, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            &[1.0, 0.0],
            std::f64::consts::TAU,
            &controls,
            |_, _, _, _| StepVerdict::Accept,
            |_, _, _| {},
        )
        .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-7 && y[1].abs() < 1e-7);
    }

    #[test]
    fn rejection_reports_underflow() {
        // Lyapunov filter that rejects everything drives dt below dt_min
        let controls = StepControls {
            dt_min: 1e-6,
            ..Default::default()
        };
        let r = integrate_adaptive(
            |_t, y, dy| dy[0] = -y[0],
            &[1.0],
            1.0,
            &controls,
            |_, _, _, _| StepVerdict::Reject,
            |_, _, _| {},
        );
        assert!(matches!(r, Err(CoreError::DtUnderflow { .. })));
    }
}
