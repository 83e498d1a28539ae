//! Radial sign-changing stationary solutions on the annulus.
//!
//! The radial equation `u'' + (N-1)/r u' + f(u) = 0` is integrated in
//! `t = ln r` with state `(u, r u_r)`:
//!
//! ```text
//! u_t = v,    v_t = -(N-2) v - e^{2t} f(u)
//! ```
//!
//! A slope `s = u'(ε)` is located by scanning and bisection so that the
//! trajectory has exactly `k-1` interior zeros and `u(1) = 0`; the shooting
//! trajectory sampled on the grid is then refined by Newton's method on the
//! discrete boundary value problem.
//!
//! Solutions are normalized with `s > 0`, i.e. positive on the innermost
//! nodal region, where the smallest bubble lives.

use std::sync::Arc;
use std::thread;

use crate::error::{Error, Result};
use crate::mesh::{norms, Grading, ProblemParams, RadialField, RadialGrid};
use crate::ode::Dopri5;
use crate::profile::extract_concentrations;
use crate::tridiag::solve_tridiagonal;

/// `|s|^{p-1} s`.
pub fn source(p: f64, s: f64) -> f64 {
    s.abs().powf(p - 1.0) * s
}

/// `p |s|^{p-1}`.
pub fn source_derivative(p: f64, s: f64) -> f64 {
    p * s.abs().powf(p - 1.0)
}

/// Magnitude at which a shooting trajectory counts as escaped.
const ESCAPE_LEVEL: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    /// Relative tolerance of the adaptive integrator (at most `1e-10`).
    pub rtol: f64,
    /// Stop as soon as this many interior zeros have been seen.
    pub max_zeros: Option<usize>,
    /// Keep every accepted step in the returned trajectory.
    pub record: bool,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            max_zeros: None,
            record: true,
        }
    }
}

/// Accepted integrator steps `(r, u, u_r)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl Trajectory {
    fn push(&mut self, t: f64, y: [f64; 2]) {
        let r = t.exp();
        self.radii.push(r);
        self.values.push(y[0]);
        self.slopes.push(y[1] / r);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub trajectory: Trajectory,
    pub zero_count: usize,
    /// `u(1)`, or the last value reached when the shot stopped early.
    pub terminal_value: f64,
    /// `false` when `max_zeros` stopped the integration before `r = 1`.
    pub completed: bool,
}

fn radial_system(params: &ProblemParams) -> impl Fn(f64, [f64; 2]) -> [f64; 2] {
    let damping = params.dim() as f64 - 2.0;
    let p = params.p_s();
    move |t: f64, y: [f64; 2]| [y[1], -damping * y[1] - (2.0 * t).exp() * source(p, y[0])]
}

/// Integrates the radial stationary equation from `u(ε) = 0`, `u'(ε) = s`.
pub fn shoot(params: &ProblemParams, s: f64, opts: &ShootOptions) -> Result<Shot> {
    if !s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "shooting slope {s} is not finite"
        )));
    }
    if !(opts.rtol > 0.0 && opts.rtol <= 1e-10) {
        return Err(Error::InvalidParameter(format!(
            "integrator rtol {} must lie in (0, 1e-10]",
            opts.rtol
        )));
    }
    let eps = params.eps();
    let t0 = eps.ln();
    let y0 = [0.0, eps * s];
    let mut trajectory = Trajectory::default();
    if opts.record {
        trajectory.push(t0, y0);
    }
    if s == 0.0 {
        if opts.record {
            trajectory.push(0.0, y0);
        }
        return Ok(Shot {
            trajectory,
            zero_count: 0,
            terminal_value: 0.0,
            completed: true,
        });
    }

    let sys = radial_system(params);
    let mut ode = Dopri5::new(&sys, t0, y0, opts.rtol);
    let mut zeros = 0;
    let mut last_sign = s.signum();
    let mut escaped = None;
    let completed = ode.advance(&sys, 0.0, |t, y| {
        if opts.record {
            trajectory.push(t, y);
        }
        if y[0].abs() > ESCAPE_LEVEL {
            escaped = Some(t.exp());
            return false;
        }
        // u(1) = 0 exactly is a boundary zero and is not counted
        if y[0] != 0.0 && y[0].signum() != last_sign {
            zeros += 1;
            last_sign = y[0].signum();
        }
        opts.max_zeros.map_or(true, |cap| zeros < cap)
    })?;
    if let Some(radius) = escaped {
        return Err(Error::Escaped { radius });
    }
    Ok(Shot {
        trajectory,
        zero_count: zeros,
        terminal_value: ode.y()[0],
        completed,
    })
}

/// Shooting solution sampled exactly at the grid nodes.
pub fn shoot_on_grid(
    params: &ProblemParams,
    s: f64,
    grid: &Arc<RadialGrid>,
    rtol: f64,
) -> Result<RadialField> {
    let nodes = grid.nodes();
    if (nodes[0] - params.eps()).abs() > 1e-14 * params.eps() || nodes[nodes.len() - 1] != 1.0 {
        return Err(Error::InvalidParameter(
            "grid does not span [eps, 1]".into(),
        ));
    }
    let sys = radial_system(params);
    let mut ode = Dopri5::new(&sys, params.eps().ln(), [0.0, params.eps() * s], rtol);
    let mut values = vec![0.0; nodes.len()];
    for (j, r) in nodes.iter().enumerate().skip(1) {
        ode.advance(&sys, r.ln(), |_, _| true)?;
        values[j] = ode.y()[0];
    }
    RadialField::new(Arc::clone(grid), values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryConfig {
    /// Grid intervals of the refined solution.
    pub intervals: usize,
    pub grading: Grading,
    /// Integrator relative tolerance.
    pub rtol: f64,
    /// Geometric slope scan range and density.
    pub scan_lo: f64,
    pub scan_hi: f64,
    pub scan_per_decade: usize,
    /// Accepted relative residual `‖-Δ_h u - f(u)‖_∞ / ‖f(u)‖_∞`.
    pub residual_tol: f64,
    pub newton_max_iter: usize,
    /// Also solve on the grid with half the intervals to estimate the
    /// truncation error.
    pub truncation_estimate: bool,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self {
            intervals: 4096,
            grading: Grading::LogUniform,
            rtol: 1e-10,
            scan_lo: 1e-2,
            scan_hi: 1e12,
            scan_per_decade: 40,
            residual_tol: 1e-8,
            newton_max_iter: 50,
            truncation_estimate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    pub params: ProblemParams,
    /// Grid-resident solution with zero trace.
    pub field: RadialField,
    /// Interior zeros, increasing.
    pub nodal_radii: Vec<f64>,
    /// Concentration scales `δ̂_1 > … > δ̂_k`.
    pub deltas_measured: Vec<f64>,
    pub shooting_slope: f64,
    /// Bracket `[lo, hi]` of the slope scan that isolated the nodal class.
    pub scan_bracket: (f64, f64),
    /// Relative discrete residual of `field`.
    pub residual_norm: f64,
    pub newton_history: Vec<f64>,
    /// `‖u_shoot - u_h‖_∞` on the grid nodes.
    pub shooting_gap: f64,
    /// `‖u_h - u_{2h}‖_∞ / 3` on the shared nodes, when computed.
    pub truncation_estimate: Option<f64>,
}

impl StationarySolution {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.field.grid()
    }
}

/// Locates the smallest positive slope whose trajectory has `k-1` interior
/// zeros and vanishes at `r = 1`. Returns `(s*, scan bracket)`.
pub fn find_shooting_slope(
    params: &ProblemParams,
    cfg: &StationaryConfig,
) -> Result<(f64, (f64, f64))> {
    let k = params.towers();
    let opts = ShootOptions {
        rtol: cfg.rtol,
        max_zeros: Some(k),
        record: false,
    };
    let above = |s: f64| -> Result<(bool, usize)> {
        let shot = shoot(params, s, &opts)?;
        Ok((shot.zero_count >= k, shot.zero_count))
    };

    let decades = (cfg.scan_hi / cfg.scan_lo).log10();
    let points = (decades * cfg.scan_per_decade as f64).ceil() as usize;
    let mut seen = Vec::new();
    let mut prev = None;
    let mut bracket = None;
    for j in 0..=points {
        let s = (cfg.scan_lo * 10f64.powf(j as f64 / cfg.scan_per_decade as f64)).min(cfg.scan_hi);
        let (is_above, zeros) = above(s)?;
        if !seen.contains(&zeros) {
            seen.push(zeros);
        }
        if is_above {
            if let Some(lo) = prev {
                bracket = Some((lo, s));
            }
            break;
        }
        prev = Some(s);
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Err(Error::NoBracket {
            zeros: k - 1,
            lo: cfg.scan_lo,
            hi: cfg.scan_hi,
            seen,
        });
    };
    let scan = (lo, hi);
    while hi - lo > 4.0 * f64::EPSILON * hi {
        let mid = 0.5 * (lo + hi);
        if above(mid)?.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((0.5 * (lo + hi), scan))
}

/// Relative residual `‖-Δ_h u - f(u)‖_∞ / ‖f(u)‖_∞` over the unknowns.
pub fn stationary_residual(u: &RadialField, p: f64) -> f64 {
    let (abs, scale) = residual_parts(u, p);
    if scale == 0.0 {
        abs
    } else {
        abs / scale
    }
}

/// Nodal residual `-Δ_h u - f(u)` (zero on Dirichlet nodes).
pub fn residual_field(u: &RadialField, p: f64) -> RadialField {
    let g = u.grid();
    let (diag, upper) = g.stiffness();
    let idx: Vec<usize> = g.unknowns().collect();
    let x: Vec<f64> = idx.iter().map(|&j| u.values()[j]).collect();
    let mut out = vec![0.0; g.len()];
    let boundary = |j: usize| {
        if j == 0 || j + 1 == g.len() {
            u.values()[j]
        } else {
            0.0
        }
    };
    for (i, &j) in idx.iter().enumerate() {
        let mut ku = diag[i] * x[i];
        if i > 0 {
            ku += upper[i - 1] * x[i - 1];
        } else if j > 0 {
            ku -= g.conductance()[j - 1] * boundary(j - 1);
        }
        if i + 1 < idx.len() {
            ku += upper[i] * x[i + 1];
        } else {
            ku -= g.conductance()[j] * boundary(j + 1);
        }
        out[j] = ku / g.weights()[j] - source(p, x[i]);
    }
    RadialField::new(Arc::clone(g), out).expect("length matches grid")
}

fn residual_parts(u: &RadialField, p: f64) -> (f64, f64) {
    let r = residual_field(u, p);
    let g = u.grid();
    let abs = g
        .unknowns()
        .map(|j| r.values()[j].abs())
        .fold(0.0, f64::max);
    let scale = g
        .unknowns()
        .map(|j| source(p, u.values()[j]).abs())
        .fold(0.0, f64::max);
    (abs, scale)
}

/// Damped Newton iteration on `K u - W f(u) = 0` over the unknowns.
///
/// Iterates until the relative residual stops decreasing; fails if it never
/// drops below `tol`.
pub fn newton_refine(
    initial: &RadialField,
    p: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(RadialField, Vec<f64>)> {
    let g = Arc::clone(initial.grid());
    let (kd, ku) = g.stiffness();
    let idx: Vec<usize> = g.unknowns().collect();
    let mut u = initial.clone().with_zero_trace();
    let mut res = stationary_residual(&u, p);
    let mut history = vec![res];
    for _ in 0..max_iter {
        let x: Vec<f64> = idx.iter().map(|&j| u.values()[j]).collect();
        let rf = residual_field(&u, p);
        let rhs: Vec<f64> = idx
            .iter()
            .map(|&j| -g.weights()[j] * rf.values()[j])
            .collect();
        let diag: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(i, &j)| kd[i] - g.weights()[j] * source_derivative(p, x[i]))
            .collect();
        let delta = solve_tridiagonal(&ku, &diag, &ku, &rhs)?;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let mut trial = u.clone();
            for (i, &j) in idx.iter().enumerate() {
                trial.values_mut()[j] = x[i] + step * delta[i];
            }
            let trial_res = stationary_residual(&trial, p);
            if trial_res < res {
                accepted = Some((trial, trial_res));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, trial_res)) => {
                u = trial;
                res = trial_res;
                history.push(res);
            }
            None => break,
        }
    }
    if res > tol {
        return Err(Error::NewtonStagnation { history });
    }
    Ok((u, history))
}

/// Radial stationary solution with exactly `k-1` interior zeros.
pub fn find_nodal_solution(
    params: &ProblemParams,
    cfg: &StationaryConfig,
) -> Result<StationarySolution> {
    let k = params.towers();
    let p = params.p_s();
    let (slope, scan_bracket) = find_shooting_slope(params, cfg)?;

    let refine = |intervals: usize| -> Result<(RadialField, RadialField, Vec<f64>)> {
        let grid = Arc::new(RadialGrid::new(
            params.dim(),
            params.eps(),
            1.0,
            intervals,
            cfg.grading,
        )?);
        let shot = shoot_on_grid(params, slope, &grid, cfg.rtol)?;
        let (field, history) = newton_refine(&shot, p, cfg.residual_tol, cfg.newton_max_iter)?;
        Ok((shot, field, history))
    };
    let (shot, field, newton_history) = refine(cfg.intervals)?;

    let found = field.sign_changes();
    if found != k - 1 {
        return Err(Error::WrongNodalCount {
            found,
            expected: k - 1,
        });
    }
    let norm = norms(&field).l2_weighted;
    if norm < 1e-3 {
        return Err(Error::TrivialSolution { norm });
    }
    let shooting_gap = shot
        .values()
        .iter()
        .zip(field.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let truncation_estimate =
        if cfg.truncation_estimate && cfg.intervals % 2 == 0 && cfg.intervals / 2 >= 16 {
            let (_, coarse, _) = refine(cfg.intervals / 2)?;
            let diff = coarse
                .values()
                .iter()
                .enumerate()
                .map(|(j, c)| (c - field.values()[2 * j]).abs())
                .fold(0.0, f64::max);
            Some(diff / 3.0)
        } else {
            None
        };

    Ok(StationarySolution {
        params: *params,
        nodal_radii: field.zero_radii(),
        deltas_measured: extract_concentrations(&field, k)?,
        shooting_slope: slope,
        scan_bracket,
        residual_norm: stationary_residual(&field, p),
        newton_history,
        shooting_gap,
        truncation_estimate,
        field,
    })
}

/// Fitted exponents of `δ̂_i` against `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTable {
    pub towers: usize,
    /// Hole radii with a converged solution, and their measured scales.
    pub eps: Vec<f64>,
    pub deltas: Vec<Vec<f64>>,
    /// Least-squares slope of `log δ̂_i` against `log ε`, one per bubble.
    pub slopes: Vec<f64>,
    /// `(2i-1)/(2k)`.
    pub expected: Vec<f64>,
    /// Hole radii whose solve failed; a non-empty list flags a partial table.
    pub failures: Vec<(f64, Error)>,
}

/// Solves for every `ε` in parallel and fits the concentration exponents.
pub fn verify_scaling_law(
    template: &ProblemParams,
    k: usize,
    eps_list: &[f64],
    cfg: &StationaryConfig,
) -> Result<ScalingTable> {
    if eps_list.len() < 3 {
        return Err(Error::Underdetermined(eps_list.len()));
    }
    let params: Vec<ProblemParams> = eps_list
        .iter()
        .map(|&e| template.with_towers(k).and_then(|p| p.with_eps(e)))
        .collect::<Result<_>>()?;
    let results: Vec<Result<StationarySolution>> = thread::scope(|scope| {
        let handles: Vec<_> = params
            .iter()
            .map(|p| scope.spawn(move || find_nodal_solution(p, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    });

    let mut eps = Vec::new();
    let mut deltas = Vec::new();
    let mut failures = Vec::new();
    for (&e, r) in eps_list.iter().zip(results) {
        match r {
            Ok(sol) => {
                eps.push(e);
                deltas.push(sol.deltas_measured);
            }
            Err(err) => failures.push((e, err)),
        }
    }
    if eps.len() < 3 {
        return Err(Error::Underdetermined(eps.len()));
    }
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let slopes = (0..k)
        .map(|i| {
            let y: Vec<f64> = deltas.iter().map(|d| d[i].ln()).collect();
            least_squares_slope(&x, &y)
        })
        .collect();
    let expected = (1..=k)
        .map(|i| (2 * i - 1) as f64 / (2 * k) as f64)
        .collect();
    Ok(ScalingTable {
        towers: k,
        eps,
        deltas,
        slopes,
        expected,
        failures,
    })
}

pub(crate) fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(dim: usize, k: usize, eps: f64) -> ProblemParams {
        ProblemParams::new(dim, k, eps).unwrap()
    }

    #[test]
    fn zero_slope_gives_zero_solution() {
        let shot = shoot(&params(3, 1, 0.1), 0.0, &ShootOptions::default()).unwrap();
        assert_eq!(shot.zero_count, 0);
        assert_eq!(shot.terminal_value, 0.0);
        assert!(shot.trajectory.values.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn shooting_is_odd_in_the_slope() {
        let pr = params(4, 2, 1e-2);
        let a = shoot(&pr, 3e3, &ShootOptions::default()).unwrap();
        let b = shoot(&pr, -3e3, &ShootOptions::default()).unwrap();
        assert_eq!(a.zero_count, b.zero_count);
        assert_eq!(a.trajectory.radii, b.trajectory.radii);
        for (x, y) in a.trajectory.values.iter().zip(&b.trajectory.values) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn zero_count_increases_across_a_bracket() {
        let pr = params(3, 2, 0.1);
        let opts = ShootOptions::default();
        let counts: Vec<usize> = [1.0, 1e1, 1e2, 1e3, 1e4]
            .iter()
            .map(|&s| shoot(&pr, s, &opts).unwrap().zero_count)
            .collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
        assert_eq!(counts[0], 0);
        assert!(counts[4] >= 1);
    }

    #[test]
    fn invalid_tolerance_is_rejected() {
        let opts = ShootOptions {
            rtol: 1e-6,
            ..Default::default()
        };
        assert!(shoot(&params(3, 1, 0.1), 1.0, &opts).is_err());
    }

    #[test]
    fn positive_solution_on_wide_annulus() {
        let cfg = StationaryConfig {
            intervals: 1024,
            ..Default::default()
        };
        let sol = find_nodal_solution(&params(3, 1, 0.1), &cfg).unwrap();
        assert!(sol.field.values()[1..1024].iter().all(|&u| u > 0.0));
        assert!(sol.residual_norm <= 1e-8);
        assert!(sol.nodal_radii.is_empty());
        assert_eq!(sol.deltas_measured.len(), 1);
        let est = sol.truncation_estimate.unwrap();
        assert!(
            sol.shooting_gap <= 10.0 * est,
            "{} vs {est}",
            sol.shooting_gap
        );
    }

    #[test]
    fn residual_of_exact_discrete_data() {
        let g = Arc::new(RadialGrid::new(3, 0.5, 1.0, 32, Grading::Uniform).unwrap());
        let zero = RadialField::zeros(g);
        assert_eq!(stationary_residual(&zero, 5.0), 0.0);
    }

    #[test]
    fn scaling_fit_requires_three_radii() {
        let cfg = StationaryConfig::default();
        let r = verify_scaling_law(&params(4, 2, 0.01), 2, &[1e-2, 1e-3], &cfg);
        assert!(matches!(r, Err(Error::Underdetermined(2))));
    }

    #[test]
    fn least_squares_recovers_a_line() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 0.75 * v - 2.0).collect();
        assert_relative_eq!(least_squares_slope(&x, &y), 0.75, max_relative = 1e-14);
    }
}
