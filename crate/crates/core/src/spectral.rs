//! First eigenpairs of linearized operators `L = -Δ - V` with `V ≥ 0`, on
//! the annulus and on truncated balls, and the sign condition of a tower.
//!
//! With unknowns `φ` and nodal weights `W`, the discrete problem
//! `K φ - W V φ = λ W φ` is solved through the symmetric tridiagonal matrix
//! `B = W^{-1/2} K W^{-1/2} - V` acting on `x = W^{1/2} φ`. Its
//! off-diagonal entries are negative, so the ground state is a positive
//! vector whose consecutive ratios are the LDLᵀ pivots of `B - λ`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{
    integrate_weighted, integrate_weighted_simpson, laplacian_values, sphere_area, weighted_dot,
    RadialField, RadialGrid,
};
use crate::profile::Bubble;
use crate::stationary::{source, source_derivative, StationarySolution};
use crate::tridiag::SymTridiagonal;

/// Maximum accepted eigen-residual `‖Lφ - λφ‖ / (‖L‖ ‖φ‖)`.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedOperator {
    potential: RadialField,
    /// `W^{1/2}` over the unknowns.
    sqrt_weight: Vec<f64>,
    matrix: SymTridiagonal,
}

impl LinearizedOperator {
    /// `-Δ_h - V` with Dirichlet conditions (and regularity at a ball centre).
    pub fn new(potential: RadialField) -> Result<Self> {
        if let Some(v) = potential.values().iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "potential must be nonnegative, found {v}"
            )));
        }
        let grid = Arc::clone(potential.grid());
        let (kd, ku) = grid.stiffness();
        let idx: Vec<usize> = grid.unknowns().collect();
        let sqrt_weight: Vec<f64> = idx.iter().map(|&j| grid.weights()[j].sqrt()).collect();
        let diag: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(i, &j)| kd[i] / grid.weights()[j] - potential.values()[j])
            .collect();
        let off: Vec<f64> = ku
            .iter()
            .enumerate()
            .map(|(i, k)| k / (sqrt_weight[i] * sqrt_weight[i + 1]))
            .collect();
        Ok(Self {
            potential,
            sqrt_weight,
            matrix: SymTridiagonal::new(diag, off),
        })
    }

    /// Linearization `-Δ - p|u|^{p-1}` at `u`.
    pub fn at(u: &RadialField, p: f64) -> Result<Self> {
        Self::new(u.map(|v| source_derivative(p, v)))
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.potential.grid()
    }

    pub fn potential(&self) -> &RadialField {
        &self.potential
    }

    /// Symmetrized matrix acting on `W^{1/2} φ`.
    pub fn matrix(&self) -> &SymTridiagonal {
        &self.matrix
    }

    /// Largest relative mismatch between `W^{1/2} L W^{-1/2}` and its
    /// transpose, where `L = W^{-1}K - V` is the unsymmetric operator.
    pub fn asymmetry(&self) -> f64 {
        let grid = self.grid();
        let (_, ku) = grid.stiffness();
        let idx: Vec<usize> = grid.unknowns().collect();
        let mut worst: f64 = 0.0;
        for i in 0..ku.len() {
            let (a, b) = (idx[i], idx[i + 1]);
            // L_{a,b} = K_{ab}/W_a and L_{b,a} = K_{ab}/W_b
            let upper = self.sqrt_weight[i] * (ku[i] / grid.weights()[a]) / self.sqrt_weight[i + 1];
            let lower = self.sqrt_weight[i + 1] * (ku[i] / grid.weights()[b]) / self.sqrt_weight[i];
            worst = worst.max((upper - lower).abs() / upper.abs().max(lower.abs()));
        }
        worst
    }

    /// `Lφ` at the unknowns; zero on Dirichlet nodes.
    pub fn apply(&self, phi: &RadialField) -> Result<RadialField> {
        if !phi.same_grid(&self.potential) {
            return Err(Error::GridMismatch);
        }
        let grid = self.grid();
        let lap = laplacian_values(grid, phi.values());
        let mut out = vec![0.0; grid.len()];
        for j in grid.unknowns() {
            out[j] = -lap[j] - self.potential.values()[j] * phi.values()[j];
        }
        RadialField::new(Arc::clone(grid), out)
    }

    pub fn rayleigh_quotient(&self, phi: &RadialField) -> Result<f64> {
        Ok(integrate_weighted(phi, &self.apply(phi)?)? / integrate_weighted(phi, phi)?)
    }

    /// Eigenvalue number `index` (0 = smallest) by Sturm bisection.
    pub fn eigenvalue(&self, index: usize) -> f64 {
        let (lo, hi) = self.matrix.gershgorin();
        self.matrix.bisect_eigenvalue(index, lo, hi)
    }

    fn field_from_symmetric(&self, x: &[f64]) -> RadialField {
        let grid = self.grid();
        let mut values = vec![0.0; grid.len()];
        for (i, j) in grid.unknowns().enumerate() {
            values[j] = x[i] / self.sqrt_weight[i];
        }
        RadialField::new(Arc::clone(grid), values).expect("length matches grid")
    }

    fn pair(&self, lambda: f64, x: &[f64]) -> Result<EigenPair> {
        let omega = sphere_area(self.grid().dim());
        let norm = (omega * x.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let scaled: Vec<f64> = x.iter().map(|v| v / norm).collect();
        let phi = self.field_from_symmetric(&scaled);
        let lphi = self.apply(&phi)?;
        let defect = lphi.axpy(-lambda, &phi)?;
        let (lo, hi) = self.matrix.gershgorin();
        let residual = norm_w(&defect) / (lo.abs().max(hi.abs()).max(1.0) * norm_w(&phi));
        Ok(EigenPair {
            lambda,
            normalization: integrate_weighted(&phi, &phi)?,
            rayleigh: self.rayleigh_quotient(&phi)?,
            residual,
            phi,
        })
    }

    /// Inverse iteration at a fixed shift, starting from the constant vector.
    fn inverse_iteration(&self, shift: f64) -> Result<Vec<f64>> {
        let n = self.matrix.len();
        let mut x = vec![1.0; n];
        let mut sigma = shift;
        for _ in 0..3 {
            let y = match self.matrix.solve_shifted(sigma, &x) {
                Ok(y) => y,
                Err(_) => {
                    sigma -= (shift.abs() + 1.0) * 1e-13;
                    self.matrix.solve_shifted(sigma, &x)?
                }
            };
            let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            x = y.iter().map(|v| v / scale).collect();
        }
        Ok(x)
    }
}

fn norm_w(u: &RadialField) -> f64 {
    let g = u.grid();
    (sphere_area(g.dim()) * weighted_dot(g.weights(), u.values(), u.values())).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    /// Positive in the interior for the ground state, with unit weighted L² norm.
    pub phi: RadialField,
    /// Backward error `‖Lφ - λφ‖ / (‖L‖ ‖φ‖)` in the weighted norm, with
    /// `‖L‖` bounded by the Gershgorin enclosure.
    pub residual: f64,
    pub rayleigh: f64,
    /// `∫ φ²`, equal to 1 up to roundoff.
    pub normalization: f64,
}

/// Ground state eigenpair.
///
/// The eigenvalue comes from Sturm bisection. One inverse-iteration solve
/// locates the peak `m` of the eigenvector, which is then rebuilt in log
/// form from the forward pivots below `m` and the backward pivots above `m`.
/// Each ratio `x_{i+1}/x_i` is a pivot over a negative off-diagonal, so the
/// vector is positive exactly when every pivot on both sides is positive;
/// tails that decay below the floating-point range underflow to zero.
pub fn first_eigenpair(op: &LinearizedOperator) -> Result<EigenPair> {
    let (lo, hi) = op.matrix.gershgorin();
    first_eigenpair_in(op, lo, hi)
}

fn first_eigenpair_in(op: &LinearizedOperator, lo: f64, hi: f64) -> Result<EigenPair> {
    let lambda = op.matrix.bisect_eigenvalue(0, lo, hi);
    let guess = op.inverse_iteration(lambda)?;
    let peak = guess
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let x = ground_state_vector(&op.matrix, lambda, peak)?;
    let pair = op.pair(lambda, &x)?;
    if !(pair.residual <= EIGEN_RESIDUAL_TOL) {
        return Err(Error::EigenNonConvergence {
            history: vec![pair.lambda, pair.rayleigh, pair.residual],
        });
    }
    Ok(pair)
}

fn ground_state_vector(a: &SymTridiagonal, lambda: f64, peak: usize) -> Result<Vec<f64>> {
    let n = a.len();
    let mut log_x = vec![0.0; n];
    let mut bad = 0;
    let mut q = 0.0;
    for i in 0..peak {
        q = a.diag[i]
            - lambda
            - if i > 0 {
                a.off[i - 1] * a.off[i - 1] / q
            } else {
                0.0
            };
        let ratio = q / -a.off[i];
        if !(ratio > 0.0) {
            bad += 1;
        }
        log_x[i + 1] = log_x[i] + ratio.ln();
    }
    let mut back = vec![0.0; n];
    let mut p = 0.0;
    for i in (peak + 1..n).rev() {
        p = a.diag[i]
            - lambda
            - if i + 1 < n {
                a.off[i] * a.off[i] / p
            } else {
                0.0
            };
        let ratio = p / -a.off[i - 1];
        if !(ratio > 0.0) {
            bad += 1;
        }
        back[i - 1] = back[i] + ratio.ln();
    }
    if bad > 0 {
        return Err(Error::NonPositiveEigenvector { negative: bad });
    }
    let shift = log_x[peak] - back[peak];
    for i in peak + 1..n {
        log_x[i] = back[i] + shift;
    }
    let top = log_x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(log_x.iter().map(|l| (l - top).exp()).collect())
}

/// Eigenpair number `index` (0 = smallest), sign-normalized to a positive
/// weighted mean; no positivity requirement.
pub fn eigenpair(op: &LinearizedOperator, index: usize) -> Result<EigenPair> {
    if index == 0 {
        return first_eigenpair(op);
    }
    let lambda = op.eigenvalue(index);
    let mut x = op.inverse_iteration(lambda)?;
    if x.iter().sum::<f64>() < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    op.pair(lambda, &x)
}

/// Operator `-Δ - p U^{p-1}` of the unit bubble on the ball `[0, radius]`.
pub fn limit_operator(dim: usize, radius: f64, intervals: usize) -> Result<LinearizedOperator> {
    let grid = Arc::new(RadialGrid::ball(dim, radius, intervals)?);
    let bubble = Bubble::new(1.0, dim)?;
    let p = crate::mesh::critical_exponent(dim);
    LinearizedOperator::new(RadialField::from_fn(grid, |r| {
        source_derivative(p, bubble.eval(r))
    }))
}

/// Ground state of the bubble linearization on a ball of radius `radius`
/// (at least 20) with uniform spacing `radius / intervals`.
///
/// Bisection runs in the fixed bracket `[-N(N+2), 0]`: the potential peaks
/// at `N(N+2)`, and a nonnegative eigenvalue is an error. Balls sharing the
/// spacing have nested matrices, so the fixed bisection path returns
/// eigenvalues that are monotone in the radius bit for bit.
pub fn limit_eigenpair(dim: usize, radius: f64, intervals: usize) -> Result<EigenPair> {
    if radius < 20.0 {
        return Err(Error::InvalidParameter(format!(
            "truncation radius {radius} must be at least 20"
        )));
    }
    let op = limit_operator(dim, radius, intervals)?;
    let floor = -((dim * (dim + 2)) as f64);
    if op.matrix.sturm_count(0.0) == 0 {
        return Err(Error::NonNegativeLimit {
            lambda: op.eigenvalue(0),
        });
    }
    first_eigenpair_in(&op, floor, 0.0)
}

/// Limit eigenvalue estimates over truncation radii and two spacings.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitEstimate {
    pub dim: usize,
    pub spacing: f64,
    pub radii: Vec<f64>,
    /// `λ*_R` at `spacing`, one per radius.
    pub lambdas: Vec<f64>,
    /// `λ*_R` at twice the spacing, one per radius.
    pub lambdas_coarse: Vec<f64>,
    /// Richardson value at the largest radius: `λ_h + (λ_h - λ_{2h})/3`.
    pub lambda_star: f64,
    /// `|λ_R - λ_{R/2}|` at the two largest radii (fine spacing).
    pub radius_change: f64,
    /// `|λ_h - λ_{2h}| / 3` at the largest radius.
    pub spacing_error: f64,
    /// Ground state at the largest radius and fine spacing.
    pub phi_star: EigenPair,
}

pub fn limit_extrapolation(dim: usize, radii: &[f64], spacing: f64) -> Result<LimitEstimate> {
    if radii.len() < 2 {
        return Err(Error::Underdetermined(radii.len()));
    }
    let solve = |radius: f64, h: f64| limit_eigenpair(dim, radius, (radius / h).round() as usize);
    let mut lambdas = Vec::new();
    let mut lambdas_coarse = Vec::new();
    let mut phi_star = None;
    for &radius in radii {
        let fine = solve(radius, spacing)?;
        lambdas.push(fine.lambda);
        lambdas_coarse.push(solve(radius, 2.0 * spacing)?.lambda);
        phi_star = Some(fine);
    }
    let n = radii.len();
    let (fine, coarse) = (lambdas[n - 1], lambdas_coarse[n - 1]);
    Ok(LimitEstimate {
        dim,
        spacing,
        radii: radii.to_vec(),
        lambda_star: fine + (fine - coarse) / 3.0,
        radius_change: (lambdas[n - 1] - lambdas[n - 2]).abs(),
        spacing_error: (fine - coarse).abs() / 3.0,
        lambdas,
        lambdas_coarse,
        phi_star: phi_star.expect("at least two radii"),
    })
}

/// `∫_{R^N} f(U) φ*` on the ball carrying `phi_star`.
pub fn bubble_source_overlap(phi_star: &RadialField) -> Result<f64> {
    let grid = phi_star.grid();
    let dim = grid.dim();
    let p = crate::mesh::critical_exponent(dim);
    let bubble = Bubble::new(1.0, dim)?;
    let fu = RadialField::from_fn(Arc::clone(grid), |r| source(p, bubble.eval(r)));
    integrate_weighted(&fu, phi_star)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledEigenvalue {
    /// `δ̂_k² λ_ε`.
    pub lambda_tilde: f64,
    pub gap_to_limit: f64,
}

pub fn scaled_eigenvalue_diagnostic(
    sol: &StationarySolution,
    pair: &EigenPair,
    lambda_star: f64,
) -> Result<ScaledEigenvalue> {
    let delta = innermost_scale(sol)?;
    let lambda_tilde = delta * delta * pair.lambda;
    Ok(ScaledEigenvalue {
        lambda_tilde,
        gap_to_limit: (lambda_tilde - lambda_star).abs(),
    })
}

fn innermost_scale(sol: &StationarySolution) -> Result<f64> {
    let k = sol.params.towers();
    sol.deltas_measured
        .get(k - 1)
        .copied()
        .ok_or(Error::TooFewPeaks {
            found: sol.deltas_measured.len(),
            expected: k,
        })
}

/// Weighted L² distance between `δ^{N/2} φ_1(δ y)` and `φ*`, evaluated on
/// the grid of `phi_star` (the rescaled function vanishes outside the
/// rescaled annulus).
pub fn rescaled_eigenfunction_distance(
    phi1: &RadialField,
    delta: f64,
    phi_star: &RadialField,
) -> Result<f64> {
    let dim = phi1.grid().dim();
    let scale = delta.powf(0.5 * dim as f64);
    let rescaled = RadialField::from_fn(Arc::clone(phi_star.grid()), |y| {
        scale * phi1.interpolate(delta * y)
    });
    let diff = rescaled.axpy(-1.0, phi_star)?;
    Ok(integrate_weighted(&diff, &diff)?.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignCondition {
    /// `∫ φ φ_1`.
    pub inner_product: f64,
    /// `∫ f(φ) φ_1`.
    pub source_overlap: f64,
    /// `-(p-1)/λ ∫ f(φ) φ_1`.
    pub identity_rhs: f64,
    /// Relative mismatch of the identity with the fourth-order quadrature
    /// (measures discretization error).
    pub identity_residual: f64,
    /// Same mismatch with the nodal quadrature that symmetrizes the operator
    /// (measures solver error only).
    pub identity_residual_nodal: f64,
    /// `δ̂_k ∫ f(φ) φ_1`.
    pub scaled_overlap: f64,
}

pub fn sign_condition(sol: &StationarySolution, pair: &EigenPair) -> Result<SignCondition> {
    let p = sol.params.p_s();
    if pair.lambda.abs() <= 1e-12 {
        return Err(Error::ZeroEigenvalue {
            lambda: pair.lambda,
        });
    }
    let phi = &sol.field;
    let fphi = phi.map(|v| source(p, v));
    let factor = -(p - 1.0) / pair.lambda;
    let mismatch = |ip: f64, overlap: f64| (ip - factor * overlap).abs() / ip.abs();

    let inner_product = integrate_weighted(phi, &pair.phi)?;
    let source_overlap = integrate_weighted(&fphi, &pair.phi)?;
    let identity_residual_nodal = mismatch(inner_product, source_overlap);
    let identity_residual = match (
        integrate_weighted_simpson(phi, &pair.phi),
        integrate_weighted_simpson(&fphi, &pair.phi),
    ) {
        (Ok(ip), Ok(ov)) => mismatch(ip, ov),
        _ => identity_residual_nodal,
    };
    Ok(SignCondition {
        inner_product,
        source_overlap,
        identity_rhs: factor * source_overlap,
        identity_residual,
        identity_residual_nodal,
        scaled_overlap: innermost_scale(sol)? * source_overlap,
    })
}
