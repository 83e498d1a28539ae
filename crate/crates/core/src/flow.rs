//! Radial flows of `v_t = Δv + |v|^{p-1} v` with Dirichlet data: time
//! stepping, blow-up detection, the linearized flow around a stationary
//! solution, separation times, sub/supersolution residuals and discrete
//! comparison.
//!
//! The default step is IMEX backward Euler,
//! `(W + dt K) v⁺ = W (v + dt f(v))`. Since `W + dt K` is an M-matrix and
//! `v ↦ v + dt f(v)` is increasing, the step is order preserving; its fixed
//! points are exactly the discrete stationary solutions; and with the
//! convex part of the energy implicit it is energy stable.

use std::collections::VecDeque;
use std::sync::Arc;
use std::thread;

use crate::error::{Error, Result};
use crate::mesh::{critical_exponent, integrate_weighted, sphere_area, RadialField, RadialGrid};
use crate::ode::rk4_scalar;
use crate::spectral::EigenPair;
use crate::stationary::{residual_field, source, source_derivative, StationarySolution};
use crate::tridiag::solve_tridiagonal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Backward-Euler diffusion, explicit reaction.
    ImexBe,
    /// Crank–Nicolson diffusion, explicit reaction. Not order preserving.
    ImexCn,
    /// Pointwise `v' = f(v)` by RK4, no diffusion.
    ReactionOnly,
}

impl Integrator {
    pub fn label(&self) -> &'static str {
        match self {
            Integrator::ImexBe => "imex-be",
            Integrator::ImexCn => "imex-cn",
            Integrator::ReactionOnly => "reaction-only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "imex-be" => Ok(Integrator::ImexBe),
            "imex-cn" => Ok(Integrator::ImexCn),
            "reaction-only" => Ok(Integrator::ReactionOnly),
            _ => Err(Error::InvalidParameter(format!("unknown integrator '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub dt_max: f64,
    pub dt_min: f64,
    pub t_end: f64,
    /// Blow-up needs `‖v‖_∞ > blow_threshold · ‖v_0‖_∞`.
    pub blow_threshold: f64,
    /// Reaction step restriction `dt ≤ safety / ‖v‖_∞^{p-1}`.
    pub safety: f64,
    pub integrator: Integrator,
    /// Keep every `sample_stride`-th step in the series.
    pub sample_stride: usize,
    /// Relative drift from `v_0` below which a run counts as stationary.
    pub stationary_tol: f64,
    /// Relative sup-norm below which a run counts as decayed to zero.
    pub decay_tol: f64,
    pub max_steps: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt_max: 1e-4,
            dt_min: 1e-12,
            t_end: 1.0,
            blow_threshold: 1e2,
            safety: 0.1,
            integrator: Integrator::ImexBe,
            sample_stride: 10,
            stationary_tol: 1e-4,
            decay_tol: 1e-8,
            max_steps: 50_000_000,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_max) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < dt_min < dt_max, got {} and {}",
                self.dt_min, self.dt_max
            )));
        }
        if !(self.blow_threshold >= 1e2) {
            return Err(Error::InvalidParameter(format!(
                "blow_threshold {} must be at least 1e2",
                self.blow_threshold
            )));
        }
        if !(self.t_end > 0.0 && self.safety > 0.0 && self.sample_stride > 0) {
            return Err(Error::InvalidParameter(
                "t_end, safety and sample_stride must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowStatus {
    /// Stayed within `stationary_tol` of the initial data up to `t_end`.
    Stationary,
    /// Reached `t_end` (or decayed to zero) without growth.
    GlobalBounded { t_final: f64, decayed: bool },
    BlowUp {
        t_estimate: f64,
        t_bracket: (f64, f64),
    },
    /// Reached `t_end` still growing without meeting the blow-up rule.
    Undetermined { t_final: f64 },
}

impl FlowStatus {
    pub fn label(&self) -> &'static str {
        match self {
            FlowStatus::Stationary => "stationary",
            FlowStatus::GlobalBounded { .. } => "global-bounded",
            FlowStatus::BlowUp { .. } => "blow-up",
            FlowStatus::Undetermined { .. } => "undetermined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    pub t: f64,
    pub sup_norm: f64,
    pub energy: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub status: FlowStatus,
    pub series: Vec<FlowSample>,
    pub final_field: RadialField,
    pub steps: usize,
    /// Largest `max(0, J(v⁺) - J(v)) / (1 + |J(v)|)` over all steps.
    pub max_energy_increase: f64,
    /// Largest `‖v(t) - v_0‖_∞ / ‖v_0‖_∞` seen.
    pub max_drift: f64,
}

/// `J(v) = ½∫|∇v|² - ∫|v|^{p+1}/(p+1)`.
pub fn energy(v: &RadialField) -> f64 {
    let grid = v.grid();
    let p = critical_exponent(grid.dim());
    let u = v.values();
    let dirichlet: f64 = grid
        .conductance()
        .iter()
        .zip(u.windows(2))
        .map(|(g, w)| g * (w[1] - w[0]) * (w[1] - w[0]))
        .sum();
    let potential: f64 = grid
        .weights()
        .iter()
        .zip(u)
        .map(|(w, x)| w * x.abs().powf(p + 1.0))
        .sum();
    sphere_area(grid.dim()) * (0.5 * dirichlet - potential / (p + 1.0))
}

/// One-step time integrator over the unknowns of a Dirichlet grid.
#[derive(Debug, Clone)]
pub struct FlowStepper {
    grid: Arc<RadialGrid>,
    p: f64,
    integrator: Integrator,
    idx: Vec<usize>,
    kd: Vec<f64>,
    ku: Vec<f64>,
    v: Vec<f64>,
    t: f64,
}

impl FlowStepper {
    pub fn new(v0: &RadialField, integrator: Integrator) -> Result<Self> {
        let grid = Arc::clone(v0.grid());
        let n = grid.len();
        if grid.is_ball() || v0.values()[0] != 0.0 || v0.values()[n - 1] != 0.0 {
            return Err(Error::InvalidParameter(
                "flow needs zero-trace data on an annulus".into(),
            ));
        }
        let (kd, ku) = grid.stiffness();
        Ok(Self {
            p: critical_exponent(grid.dim()),
            integrator,
            idx: grid.unknowns().collect(),
            kd,
            ku,
            v: v0.values().to_vec(),
            t: 0.0,
            grid,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn field(&self) -> RadialField {
        RadialField::new(Arc::clone(&self.grid), self.v.clone()).expect("length matches grid")
    }

    pub fn sup_norm(&self) -> f64 {
        self.v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Reaction-limited step `safety / ‖v‖^{p-1}`.
    pub fn reaction_step(&self, safety: f64) -> f64 {
        let m = self.sup_norm();
        if m == 0.0 {
            f64::INFINITY
        } else {
            safety / m.powf(self.p - 1.0)
        }
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        let w = self.grid.weights();
        let p = self.p;
        match self.integrator {
            Integrator::ReactionOnly => {
                for &j in &self.idx {
                    self.v[j] = rk4_scalar(|y| source(p, y), self.v[j], dt);
                }
            }
            Integrator::ImexBe | Integrator::ImexCn => {
                let theta = if self.integrator == Integrator::ImexBe {
                    1.0
                } else {
                    0.5
                };
                let n = self.idx.len();
                let mut rhs = vec![0.0; n];
                for (i, &j) in self.idx.iter().enumerate() {
                    let x = self.v[j];
                    let mut explicit = w[j] * (x + dt * source(p, x));
                    if theta < 1.0 {
                        let mut kx = self.kd[i] * x;
                        if i > 0 {
                            kx += self.ku[i - 1] * self.v[self.idx[i - 1]];
                        }
                        if i + 1 < n {
                            kx += self.ku[i] * self.v[self.idx[i + 1]];
                        }
                        explicit -= (1.0 - theta) * dt * kx;
                    }
                    rhs[i] = explicit;
                }
                let diag: Vec<f64> = self
                    .idx
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| w[j] + theta * dt * self.kd[i])
                    .collect();
                let off: Vec<f64> = self.ku.iter().map(|k| theta * dt * k).collect();
                let next = solve_tridiagonal(&off, &diag, &off, &rhs)?;
                for (i, &j) in self.idx.iter().enumerate() {
                    self.v[j] = next[i];
                }
            }
        }
        self.t += dt;
        if self.v.iter().any(|x| !x.is_finite()) {
            return Err(Error::IntegratorFailure {
                t: self.t,
                reason: format!("non-finite state after step dt = {dt:e}"),
            });
        }
        Ok(())
    }
}

/// Number of trailing steps kept at full resolution for the blow-up rules.
const HISTORY: usize = 4096;
/// Consecutive sup-norm increases required for sustained growth.
const SUSTAINED: usize = 10;

/// Evolves `v0` and classifies the run.
///
/// `observe(t, v)` is called after every step; returning `false` ends the
/// run early with the classification reached so far.
pub fn evolve_observed(
    v0: &RadialField,
    cfg: &FlowConfig,
    mut observe: impl FnMut(f64, &[f64]) -> bool,
) -> Result<FlowResult> {
    cfg.validate()?;
    let mut stepper = FlowStepper::new(v0, cfg.integrator)?;
    let v0_sup = stepper.sup_norm();
    let sample = |s: &FlowStepper, dt: f64| FlowSample {
        t: s.t(),
        sup_norm: s.sup_norm(),
        energy: energy(&s.field()),
        dt,
    };
    let mut series = vec![sample(&stepper, 0.0)];
    if v0_sup == 0.0 {
        return Ok(FlowResult {
            status: FlowStatus::GlobalBounded {
                t_final: cfg.t_end,
                decayed: true,
            },
            series,
            final_field: v0.clone(),
            steps: 0,
            max_energy_increase: 0.0,
            max_drift: 0.0,
        });
    }

    let mut history: VecDeque<(f64, f64)> = VecDeque::with_capacity(HISTORY);
    history.push_back((0.0, v0_sup));
    let mut rising = 0;
    let mut steps = 0;
    let mut max_energy_increase: f64 = 0.0;
    let mut max_drift: f64 = 0.0;
    let mut j_prev = series[0].energy;
    let mut status = None;

    while stepper.t() < cfg.t_end {
        let react = stepper.reaction_step(cfg.safety);
        let dt = cfg.dt_max.min(react).min(cfg.t_end - stepper.t());
        let prev_sup = stepper.sup_norm();
        stepper.step(dt)?;
        steps += 1;
        let sup = stepper.sup_norm();
        let j_now = energy(&stepper.field());
        max_energy_increase =
            max_energy_increase.max((j_now - j_prev).max(0.0) / (1.0 + j_prev.abs()));
        j_prev = j_now;
        let drift = stepper
            .values()
            .iter()
            .zip(v0.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
            / v0_sup;
        max_drift = max_drift.max(drift);

        if history.len() == HISTORY {
            history.pop_front();
        }
        history.push_back((stepper.t(), sup));
        rising = if sup > prev_sup { rising + 1 } else { 0 };
        if steps % cfg.sample_stride == 0 {
            series.push(FlowSample {
                t: stepper.t(),
                sup_norm: sup,
                energy: j_now,
                dt,
            });
        }

        let collapsed = stepper.reaction_step(cfg.safety) < cfg.dt_min;
        if sup > cfg.blow_threshold * v0_sup && collapsed && rising >= SUSTAINED {
            let (t_estimate, t_bracket) = blow_up_time(&history, stepper.p, stepper.t(), sup);
            status = Some(FlowStatus::BlowUp {
                t_estimate,
                t_bracket,
            });
            break;
        }
        if sup < cfg.decay_tol * v0_sup {
            status = Some(FlowStatus::GlobalBounded {
                t_final: stepper.t(),
                decayed: true,
            });
            break;
        }
        if !observe(stepper.t(), stepper.values()) {
            break;
        }
        if steps >= cfg.max_steps {
            return Err(Error::IntegratorFailure {
                t: stepper.t(),
                reason: format!("step limit {} reached with sup norm {sup:e}", cfg.max_steps),
            });
        }
    }
    let last = series.last().map(|s| s.t);
    if last != Some(stepper.t()) {
        series.push(sample(&stepper, 0.0));
    }
    let status = status.unwrap_or_else(|| {
        let t_final = stepper.t();
        let sup = stepper.sup_norm();
        if max_drift <= cfg.stationary_tol {
            FlowStatus::Stationary
        } else if sup <= v0_sup || rising == 0 {
            FlowStatus::GlobalBounded {
                t_final,
                decayed: false,
            }
        } else {
            FlowStatus::Undetermined { t_final }
        }
    });
    Ok(FlowResult {
        status,
        series,
        final_field: stepper.field(),
        steps,
        max_energy_increase,
        max_drift,
    })
}

pub fn evolve(v0: &RadialField, cfg: &FlowConfig) -> Result<FlowResult> {
    evolve_observed(v0, cfg, |_, _| true)
}

/// Fits `‖v‖^{1-p} ≈ c (T - t)` over the last decade of growth.
///
/// The bracket concerns the computed trajectory; it does not include the
/// time-discretization error accumulated before the final ramp.
/// The lower end of the bracket is the comparison bound
/// `t + ‖v‖^{1-p}/(p-1)`, valid because `d/dt ‖v‖_∞ ≤ ‖v‖_∞^p`; the upper
/// end mirrors the fitted estimate about it.
fn blow_up_time(
    history: &VecDeque<(f64, f64)>,
    p: f64,
    t_now: f64,
    sup_now: f64,
) -> (f64, (f64, f64)) {
    let floor = sup_now / 10.0;
    let window: Vec<(f64, f64)> = history
        .iter()
        .rev()
        .take_while(|(_, m)| *m >= floor)
        .map(|&(t, m)| (t, m.powf(1.0 - p)))
        .collect();
    let lower = t_now + sup_now.powf(1.0 - p) / (p - 1.0);
    if window.len() < 3 {
        return (lower, (lower, lower + (lower - t_now)));
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) = window.into_iter().unzip();
    let n = ts.len() as f64;
    // centre the abscissa to keep the fit well conditioned near T
    let t0 = ts[0];
    let mx = ts.iter().map(|t| t - t0).sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = ts
        .iter()
        .zip(&ys)
        .map(|(t, y)| (t - t0 - mx) * (y - my))
        .sum();
    let sxx: f64 = ts.iter().map(|t| (t - t0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return (lower, (lower, lower + (lower - t_now)));
    }
    let estimate = t0 + mx - my / slope;
    let upper = if estimate > lower {
        2.0 * estimate - lower
    } else {
        lower + (lower - t_now)
    };
    (estimate, (lower, upper))
}

/// Runs the flow from `λ φ` for every `λ`, one thread per value.
pub fn lambda_sweep(
    sol: &StationarySolution,
    lambdas: &[f64],
    cfg: &FlowConfig,
) -> Vec<(f64, Result<FlowResult>)> {
    thread::scope(|scope| {
        let handles: Vec<_> = lambdas
            .iter()
            .map(|&lambda| {
                let v0 = sol.field.scaled(lambda).with_zero_trace();
                scope.spawn(move || (lambda, evolve(&v0, cfg)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("flow thread panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearScheme {
    /// Crank–Nicolson in the full operator `Δ + V`.
    CrankNicolson,
    /// Implicit diffusion, explicit potential: the linearization of the
    /// IMEX backward-Euler step, for direct comparison with nonlinear runs.
    SemiImplicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedRun {
    /// Fitted log-slope of `|⟨z, φ_1⟩|` over the second half of the run.
    pub growth_rate: f64,
    /// `(t, ⟨z, φ_1⟩, angle between z and φ_1)`.
    pub alignment: Vec<(f64, f64, f64)>,
    /// `|⟨z_0, φ_1⟩| / ‖z_0‖` (small values mean higher modes dominate).
    pub initial_overlap: f64,
    pub final_field: RadialField,
}

/// Linear flow `z_t = Δz + p|φ|^{p-1} z` with fixed step `dt` up to `t_end`.
pub fn linearized_evolve(
    phi: &RadialField,
    pair: &EigenPair,
    z0: &RadialField,
    dt: f64,
    t_end: f64,
    scheme: LinearScheme,
) -> Result<LinearizedRun> {
    if !(phi.same_grid(z0) && phi.same_grid(&pair.phi)) {
        return Err(Error::GridMismatch);
    }
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidParameter(
            "dt and t_end must be positive".into(),
        ));
    }
    let grid = Arc::clone(phi.grid());
    let p = critical_exponent(grid.dim());
    let w = grid.weights();
    let (kd, ku) = grid.stiffness();
    let idx: Vec<usize> = grid.unknowns().collect();
    let n = idx.len();
    let pot: Vec<f64> = idx
        .iter()
        .map(|&j| source_derivative(p, phi.values()[j]))
        .collect();

    // A z⁺ = B z with A, B tridiagonal over the unknowns
    let (a_diag, a_off, b_diag, b_off): (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) = match scheme {
        LinearScheme::CrankNicolson => (
            idx.iter()
                .enumerate()
                .map(|(i, &j)| w[j] + 0.5 * dt * (kd[i] - w[j] * pot[i]))
                .collect(),
            ku.iter().map(|k| 0.5 * dt * k).collect(),
            idx.iter()
                .enumerate()
                .map(|(i, &j)| w[j] - 0.5 * dt * (kd[i] - w[j] * pot[i]))
                .collect(),
            ku.iter().map(|k| -0.5 * dt * k).collect(),
        ),
        LinearScheme::SemiImplicit => (
            idx.iter()
                .enumerate()
                .map(|(i, &j)| w[j] + dt * kd[i])
                .collect(),
            ku.iter().map(|k| dt * k).collect(),
            idx.iter()
                .enumerate()
                .map(|(i, &j)| w[j] * (1.0 + dt * pot[i]))
                .collect(),
            vec![0.0; ku.len()],
        ),
    };

    let norm = |f: &RadialField| integrate_weighted(f, f).map(f64::sqrt);
    let z0_norm = norm(z0)?;
    let initial_overlap = if z0_norm > 0.0 {
        integrate_weighted(z0, &pair.phi)?.abs() / z0_norm
    } else {
        0.0
    };
    let mut z: Vec<f64> = idx.iter().map(|&j| z0.values()[j]).collect();
    let steps = (t_end / dt).round().max(1.0) as usize;
    let mut alignment = Vec::with_capacity(steps + 1);
    let mut field = RadialField::zeros(Arc::clone(&grid));
    let mut record = |t: f64, z: &[f64], field: &mut RadialField| -> Result<()> {
        for (i, &j) in idx.iter().enumerate() {
            field.values_mut()[j] = z[i];
        }
        let proj = integrate_weighted(field, &pair.phi)?;
        let zn = norm(field)?;
        let cos = if zn > 0.0 {
            (proj / zn).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        alignment.push((t, proj, cos.acos()));
        Ok(())
    };
    record(0.0, &z, &mut field)?;
    for s in 1..=steps {
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                let mut y = b_diag[i] * z[i];
                if i > 0 {
                    y += b_off[i - 1] * z[i - 1];
                }
                if i + 1 < n {
                    y += b_off[i] * z[i + 1];
                }
                y
            })
            .collect();
        z = solve_tridiagonal(&a_off, &a_diag, &a_off, &rhs)?;
        let top = z.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if !top.is_finite() {
            return Err(Error::IntegratorFailure {
                t: s as f64 * dt,
                reason: "linearized state overflowed".into(),
            });
        }
        record(s as f64 * dt, &z, &mut field)?;
    }

    let late: Vec<(f64, f64)> = alignment[steps / 2..]
        .iter()
        .filter(|(_, proj, _)| *proj != 0.0)
        .map(|&(t, proj, _)| (t, proj.abs().ln()))
        .collect();
    let growth_rate = if late.len() >= 2 {
        let (ts, ys): (Vec<f64>, Vec<f64>) = late.into_iter().unzip();
        crate::stationary::least_squares_slope(&ts, &ys)
    } else {
        f64::NAN
    };
    Ok(LinearizedRun {
        growth_rate,
        alignment,
        initial_overlap,
        final_field: field,
    })
}

/// `max_t ‖(v^λ(t) - φ)/(λ - 1) - z(t)‖_∞ / ‖z(t)‖_∞` with `v^λ` from the
/// IMEX backward-Euler step and `z` from its linearization, both with the
/// fixed step `dt` and `z(0) = φ`.
pub fn linear_consistency(phi: &RadialField, lambda: f64, dt: f64, t_end: f64) -> Result<f64> {
    if lambda == 1.0 || !(dt > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidParameter(
            "need lambda != 1 and positive dt, t_end".into(),
        ));
    }
    let grid = phi.grid();
    let p = critical_exponent(grid.dim());
    let w = grid.weights();
    let (kd, ku) = grid.stiffness();
    let idx: Vec<usize> = grid.unknowns().collect();
    let diag: Vec<f64> = idx
        .iter()
        .enumerate()
        .map(|(i, &j)| w[j] + dt * kd[i])
        .collect();
    let off: Vec<f64> = ku.iter().map(|k| dt * k).collect();
    let mut v = FlowStepper::new(&phi.scaled(lambda).with_zero_trace(), Integrator::ImexBe)?;
    let mut z: Vec<f64> = idx.iter().map(|&j| phi.values()[j]).collect();
    let steps = (t_end / dt).round().max(1.0) as usize;
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        v.step(dt)?;
        let rhs: Vec<f64> = idx
            .iter()
            .zip(&z)
            .map(|(&j, &zi)| w[j] * (zi + dt * source_derivative(p, phi.values()[j]) * zi))
            .collect();
        z = solve_tridiagonal(&off, &diag, &off, &rhs)?;
        let mut gap: f64 = 0.0;
        let mut top: f64 = 0.0;
        for (i, &j) in idx.iter().enumerate() {
            let scaled = (v.values()[j] - phi.values()[j]) / (lambda - 1.0);
            gap = gap.max((scaled - z[i]).abs());
            top = top.max(z[i].abs());
        }
        worst = worst.max(gap / top);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Separation {
    /// First sampled time at which `v - φ` is single-signed on the interior.
    pub t0: Option<f64>,
    /// `min |v - φ| / ‖φ‖_∞` over interior nodes at `t0`.
    pub margin: f64,
    /// `+1` above `φ`, `-1` below, `0` if no separation.
    pub sign: i8,
    /// Largest fraction of interior nodes carrying the expected sign.
    pub best_fraction: f64,
    /// Time at which `best_fraction` was reached.
    pub best_time: f64,
    pub run: FlowResult,
}

/// Steps skipped before single-signedness is tested.
const SEPARATION_TRANSIENT: usize = 10;

/// Flows from `λ φ` and returns the first time at which `v - φ` has the sign
/// of `λ - 1` at every interior node.
pub fn find_separation_time(
    phi: &RadialField,
    lambda: f64,
    cfg: &FlowConfig,
) -> Result<Separation> {
    let expected: f64 = if lambda > 1.0 {
        1.0
    } else if lambda < 1.0 {
        -1.0
    } else {
        0.0
    };
    let v0 = phi.scaled(lambda).with_zero_trace();
    let interior: Vec<usize> = (1..phi.values().len() - 1).collect();
    let phi_sup = phi.sup_norm();
    let mut steps = 0;
    let mut t0 = None;
    let mut margin = 0.0;
    let mut best_fraction: f64 = 0.0;
    let mut best_time = 0.0;
    let run = evolve_observed(&v0, cfg, |t, v| {
        steps += 1;
        if steps <= SEPARATION_TRANSIENT || expected == 0.0 {
            return true;
        }
        let mut good = 0;
        let mut smallest = f64::INFINITY;
        for &j in &interior {
            let d = v[j] - phi.values()[j];
            if d * expected > 0.0 {
                good += 1;
                smallest = smallest.min(d.abs());
            }
        }
        let fraction = good as f64 / interior.len() as f64;
        if fraction > best_fraction {
            best_fraction = fraction;
            best_time = t;
        }
        if good == interior.len() {
            t0 = Some(t);
            margin = smallest / phi_sup;
            return false;
        }
        true
    })?;
    Ok(Separation {
        t0,
        margin,
        sign: if t0.is_some() { expected as i8 } else { 0 },
        best_fraction,
        best_time,
        run,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubSuperResidual {
    /// `-Δ_h s - f(s)` for `s = ψ + ε' φ_1`.
    pub residual: RadialField,
    /// Largest positive residual over the unknowns (a subsolution has none).
    pub max_wrong_sign: f64,
    /// Largest negative residual magnitude over the unknowns (a
    /// supersolution has none).
    pub max_negative: f64,
}

/// Residual of `ψ + ε' φ_1`; a negative `eps_prime` tests `ψ - |ε'| φ_1`.
pub fn subsupersolution_residual(
    psi: &RadialField,
    phi1: &RadialField,
    eps_prime: f64,
) -> Result<SubSuperResidual> {
    if !psi.same_grid(phi1) {
        return Err(Error::GridMismatch);
    }
    let p = critical_exponent(psi.grid().dim());
    let s = psi.axpy(eps_prime, phi1)?;
    let residual = residual_field(&s, p);
    let grid = psi.grid();
    let mut max_wrong_sign: f64 = 0.0;
    let mut max_negative: f64 = 0.0;
    for j in grid.unknowns() {
        let r = residual.values()[j];
        max_wrong_sign = max_wrong_sign.max(r);
        max_negative = max_negative.max(-r);
    }
    Ok(SubSuperResidual {
        residual,
        max_wrong_sign,
        max_negative,
    })
}

/// Outcome of scanning `ε'` downward by factors of ten.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubSuperScan {
    /// Largest tested `ε'` for which `ψ + ε'φ_1` is a subsolution.
    pub sub_eps: Option<f64>,
    /// Largest tested `ε'` for which `ψ - ε'φ_1` is a supersolution.
    pub super_eps: Option<f64>,
    /// Residual noise floor: `slack` times the largest residual of `ψ`.
    pub tol: f64,
}

/// Scans `ε' = start, start/10, …` (`count` values).
///
/// A value passes when the wrong-sign part stays below `tol` and the
/// right-sign part exceeds it, so the perturbation is visible above the
/// residual of `ψ` itself.
pub fn scan_subsupersolution(
    psi: &RadialField,
    phi1: &RadialField,
    start: f64,
    count: usize,
    slack: f64,
) -> Result<SubSuperScan> {
    let base = subsupersolution_residual(psi, phi1, 0.0)?;
    let tol = slack
        * base
            .max_wrong_sign
            .max(base.max_negative)
            .max(f64::MIN_POSITIVE);
    let mut sub_eps = None;
    let mut super_eps = None;
    let mut e = start;
    for _ in 0..count {
        if sub_eps.is_none() {
            let r = subsupersolution_residual(psi, phi1, e)?;
            if r.max_wrong_sign <= tol && r.max_negative > tol {
                sub_eps = Some(e);
            }
        }
        if super_eps.is_none() {
            let r = subsupersolution_residual(psi, phi1, -e)?;
            if r.max_negative <= tol && r.max_wrong_sign > tol {
                super_eps = Some(e);
            }
        }
        if sub_eps.is_some() && super_eps.is_some() {
            break;
        }
        e /= 10.0;
    }
    Ok(SubSuperScan {
        sub_eps,
        super_eps,
        tol,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// Largest `max(v_A - v_B)_+` over all steps.
    pub ordering_violation: f64,
    pub t_final: f64,
    pub steps: usize,
    /// Whether either run passed the blow-up threshold.
    pub blew_up: bool,
}

/// Evolves two ordered data with a shared step sequence and tracks ordering.
pub fn comparison_monitor(
    va0: &RadialField,
    vb0: &RadialField,
    cfg: &FlowConfig,
) -> Result<ComparisonReport> {
    cfg.validate()?;
    if !va0.same_grid(vb0) {
        return Err(Error::GridMismatch);
    }
    if va0.values().iter().zip(vb0.values()).any(|(a, b)| a > b) {
        return Err(Error::InvalidParameter(
            "comparison data must satisfy vA0 <= vB0".into(),
        ));
    }
    let mut a = FlowStepper::new(va0, cfg.integrator)?;
    let mut b = FlowStepper::new(vb0, cfg.integrator)?;
    let start = a.sup_norm().max(b.sup_norm()).max(f64::MIN_POSITIVE);
    let mut violation: f64 = 0.0;
    let mut steps = 0;
    let mut blew_up = false;
    while a.t() < cfg.t_end {
        let dt = cfg
            .dt_max
            .min(a.reaction_step(cfg.safety))
            .min(b.reaction_step(cfg.safety))
            .min(cfg.t_end - a.t());
        a.step(dt)?;
        b.step(dt)?;
        steps += 1;
        for (x, y) in a.values().iter().zip(b.values()) {
            violation = violation.max(x - y);
        }
        if a.sup_norm().max(b.sup_norm()) > cfg.blow_threshold * start {
            blew_up = true;
            break;
        }
        if steps >= cfg.max_steps {
            break;
        }
    }
    Ok(ComparisonReport {
        ordering_violation: violation,
        t_final: a.t(),
        steps,
        blew_up,
    })
}
