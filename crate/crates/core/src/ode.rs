//! Explicit Runge–Kutta integrators for small autonomous-in-structure systems.

use crate::error::{Error, Result};

/// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
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
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Right-hand side `y' = f(t, y)` of a two-component system.
pub trait System2 {
    fn rhs(&self, t: f64, y: [f64; 2]) -> [f64; 2];
}

impl<F: Fn(f64, [f64; 2]) -> [f64; 2]> System2 for F {
    fn rhs(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        self(t, y)
    }
}

/// Adaptive Dormand–Prince integrator for two-component states.
///
/// The error of each component is measured against
/// `rtol·(max(|y|, |y_new|) + scale)` where `scale` is the largest magnitude
/// of either component seen so far. This keeps the control invariant under
/// `y -> c·y` and meaningful as a component passes through zero.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    pub rtol: f64,
    pub max_steps: usize,
    t: f64,
    y: [f64; 2],
    k1: [f64; 2],
    h: f64,
    scale: f64,
    steps: usize,
}

impl Dopri5 {
    pub fn new(sys: &impl System2, t0: f64, y0: [f64; 2], rtol: f64) -> Self {
        let k1 = sys.rhs(t0, y0);
        let scale = y0[0].abs().max(y0[1].abs());
        Self {
            rtol,
            max_steps: 1_000_000,
            t: t0,
            y: y0,
            k1,
            h: 0.0,
            scale,
            steps: 0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> [f64; 2] {
        self.y
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Advances to exactly `t_end` (which must be ahead of the current time),
    /// calling `on_step(t, y)` after every accepted step. `on_step` returning
    /// `false` stops the integration early.
    pub fn advance(
        &mut self,
        sys: &impl System2,
        t_end: f64,
        mut on_step: impl FnMut(f64, [f64; 2]) -> bool,
    ) -> Result<bool> {
        let span = t_end - self.t;
        if span <= 0.0 {
            return Ok(true);
        }
        if self.h <= 0.0 {
            self.h = (span * 1e-3).max(1e-12 * span);
        }
        loop {
            let remaining = t_end - self.t;
            if remaining <= 1e-14 * t_end.abs().max(1.0) {
                self.t = t_end;
                return Ok(true);
            }
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };
            let (y_new, k7, err) = self.trial(sys, h);
            if !(err.is_finite() && y_new.iter().all(|v| v.is_finite())) {
                self.h = 0.2 * h;
                if self.h < 1e-14 * span {
                    return Err(Error::IntegratorFailure {
                        t: self.t,
                        reason: "non-finite state".into(),
                    });
                }
                continue;
            }
            if err <= 1.0 {
                self.t = if last { t_end } else { self.t + h };
                self.y = y_new;
                self.k1 = k7;
                self.scale = self.scale.max(y_new[0].abs()).max(y_new[1].abs());
                self.steps += 1;
                let grow = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !last || grow < 1.0 {
                    self.h = h * grow;
                }
                if !on_step(self.t, self.y) {
                    return Ok(false);
                }
                if self.steps >= self.max_steps {
                    return Err(Error::IntegratorFailure {
                        t: self.t,
                        reason: format!("step limit {} reached", self.max_steps),
                    });
                }
            } else {
                self.h = h * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                if self.h < 1e-14 * span {
                    return Err(Error::IntegratorFailure {
                        t: self.t,
                        reason: "step size underflow".into(),
                    });
                }
            }
        }
    }

    fn trial(&self, sys: &impl System2, h: f64) -> ([f64; 2], [f64; 2], f64) {
        let mut k = [[0.0; 2]; 7];
        k[0] = self.k1;
        for s in 1..7 {
            let mut y = self.y;
            for (j, kj) in k.iter().enumerate().take(s) {
                for c in 0..2 {
                    y[c] += h * A[s][j] * kj[c];
                }
            }
            k[s] = sys.rhs(self.t + C[s] * h, y);
        }
        // the last stage is evaluated at the fifth-order solution
        let mut y_new = self.y;
        for c in 0..2 {
            for j in 0..6 {
                y_new[c] += h * A[6][j] * k[j][c];
            }
        }
        let mut err: f64 = 0.0;
        for c in 0..2 {
            let e: f64 = h * (0..7).map(|j| E[j] * k[j][c]).sum::<f64>();
            let sc =
                self.rtol * (self.y[c].abs().max(y_new[c].abs()) + self.scale) + f64::MIN_POSITIVE;
            err = err.max((e / sc).abs());
        }
        (y_new, k[6], err)
    }
}

/// One classical fourth-order Runge–Kutta step for a scalar autonomous ODE.
pub fn rk4_scalar(f: impl Fn(f64) -> f64, y: f64, h: f64) -> f64 {
    let k1 = f(y);
    let k2 = f(y + 0.5 * h * k1);
    let k3 = f(y + 0.5 * h * k2);
    let k4 = f(y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn harmonic_oscillator_keeps_phase() {
        let sys = |_t: f64, y: [f64; 2]| [y[1], -y[0]];
        let mut ode = Dopri5::new(&sys, 0.0, [0.0, 1.0], 1e-11);
        let end = 20.0 * std::f64::consts::PI + 1.0;
        ode.advance(&sys, end, |_, _| true).unwrap();
        assert_relative_eq!(ode.y()[0], 1f64.sin(), epsilon = 1e-8);
        assert_relative_eq!(ode.y()[1], 1f64.cos(), epsilon = 1e-8);
        assert_eq!(ode.t(), end);
    }

    #[test]
    fn advance_in_pieces_hits_targets() {
        let sys = |t: f64, y: [f64; 2]| [y[1], t];
        let mut ode = Dopri5::new(&sys, 0.0, [0.0, 0.0], 1e-10);
        for j in 1..=10 {
            ode.advance(&sys, j as f64 * 0.1, |_, _| true).unwrap();
            let t = j as f64 * 0.1;
            assert_eq!(ode.t(), t);
            assert_relative_eq!(ode.y()[0], t * t * t / 6.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn early_stop_is_reported() {
        let sys = |_t: f64, y: [f64; 2]| [y[1], -y[0]];
        let mut ode = Dopri5::new(&sys, 0.0, [0.0, 1.0], 1e-8);
        let finished = ode.advance(&sys, 10.0, |_, y| y[0] >= 0.0).unwrap();
        assert!(!finished);
        assert!(ode.t() > 3.0 && ode.t() < 3.5);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let f = |y: f64| -y;
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let y = (0..n).fold(1.0, |y, _| rk4_scalar(f, y, h));
            (y - (-1f64).exp()).abs()
        };
        let ratio = err(20) / err(40);
        assert!(ratio > 14.0 && ratio < 18.0, "{ratio}");
    }
}
