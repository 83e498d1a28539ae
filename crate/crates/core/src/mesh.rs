//! Radial grids on an annulus (or a ball), weighted quadrature and the
//! divergence-form radial Laplacian.
//!
//! Every integral over the N-dimensional domain is reduced to
//! `ω_{N-1} ∫ g(r) r^{N-1} dr`. The discrete Laplacian is assembled as
//! `(r^{N-1} u')' / r^{N-1}` with flux coefficients at cell midpoints, so
//! that `W·(-Δ_h)` is a symmetric tridiagonal matrix where `W` holds the
//! nodal quadrature weights. The same `W` is used by [`integrate_weighted`],
//! which makes the discrete operator self-adjoint in the discrete inner
//! product.

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Smallest admissible number of grid intervals.
pub const MIN_INTERVALS: usize = 16;

/// Dimension, tower count and hole radius of one annulus problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParams {
    dim: usize,
    towers: usize,
    eps: f64,
    p_s: f64,
    alpha_n: f64,
}

impl ProblemParams {
    pub fn new(dim: usize, towers: usize, eps: f64) -> Result<Self> {
        if dim < 3 {
            return Err(Error::InvalidParameter(format!(
                "dimension N = {dim} must be >= 3"
            )));
        }
        if towers < 1 {
            return Err(Error::InvalidParameter("tower count k must be >= 1".into()));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "hole radius eps = {eps} must lie in (0, 1)"
            )));
        }
        Ok(Self {
            dim,
            towers,
            eps,
            p_s: critical_exponent(dim),
            alpha_n: bubble_constant(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn towers(&self) -> usize {
        self.towers
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Critical exponent `(N+2)/(N-2)`.
    pub fn p_s(&self) -> f64 {
        self.p_s
    }

    /// Bubble normalisation `[N(N-2)]^{(N-2)/4}`.
    pub fn alpha_n(&self) -> f64 {
        self.alpha_n
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.dim, self.towers, eps)
    }

    pub fn with_towers(&self, towers: usize) -> Result<Self> {
        Self::new(self.dim, towers, self.eps)
    }
}

pub fn critical_exponent(dim: usize) -> f64 {
    let n = dim as f64;
    (n + 2.0) / (n - 2.0)
}

pub fn bubble_constant(dim: usize) -> f64 {
    let n = dim as f64;
    (n * (n - 2.0)).powf((n - 2.0) / 4.0)
}

/// Surface area of the unit sphere in `R^dim`, `2 π^{N/2} / Γ(N/2)`.
pub fn sphere_area(dim: usize) -> f64 {
    // Γ(N/2) for integer N: (m-1)! for N = 2m, (2m)! √π / (4^m m!) for N = 2m+1.
    let gamma_half = if dim % 2 == 0 {
        (1..dim / 2).map(|j| j as f64).product::<f64>()
    } else {
        let m = dim / 2;
        let mut g = PI.sqrt();
        for j in 0..m {
            g *= j as f64 + 0.5;
        }
        g
    };
    2.0 * PI.powf(dim as f64 / 2.0) / gamma_half
}

/// How nodes are distributed between the inner and outer radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grading {
    Uniform,
    /// Uniform in `log r`; requires a positive inner radius.
    LogUniform,
    /// Convex blend `(1-θ)·uniform + θ·log-uniform`, `θ ∈ [0, 1]`.
    Hybrid {
        log_weight: f64,
    },
}

impl Grading {
    pub fn label(&self) -> String {
        match self {
            Grading::Uniform => "uniform".into(),
            Grading::LogUniform => "log".into(),
            Grading::Hybrid { log_weight } => format!("hybrid:{log_weight}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Grading::Uniform),
            "log" | "log-uniform" => Ok(Grading::LogUniform),
            other => {
                if let Some(w) = other.strip_prefix("hybrid:") {
                    let log_weight: f64 = w
                        .parse()
                        .map_err(|_| Error::InvalidParameter(format!("bad hybrid weight '{w}'")))?;
                    if !(0.0..=1.0).contains(&log_weight) {
                        return Err(Error::InvalidParameter(format!(
                            "hybrid weight {log_weight} outside [0, 1]"
                        )));
                    }
                    Ok(Grading::Hybrid { log_weight })
                } else {
                    Err(Error::InvalidParameter(format!(
                        "unknown grading '{other}'"
                    )))
                }
            }
        }
    }
}

/// Node set on `[inner, outer]` together with the precomputed coefficients
/// of the radial operator in dimension `dim`.
///
/// An inner radius of exactly zero denotes a ball: node 0 sits at the origin
/// and carries the regularity condition `u'(0) = 0` instead of a Dirichlet
/// trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    dim: usize,
    grading: Grading,
    nodes: Vec<f64>,
    /// `r_{j+1/2}^{N-1} / (r_{j+1} - r_j)` for `j = 0..M`.
    conductance: Vec<f64>,
    /// Nodal quadrature weights including `r^{N-1}` (without `ω_{N-1}`).
    weights: Vec<f64>,
}

impl RadialGrid {
    /// Builds a grid with `intervals + 1` nodes.
    pub fn new(
        dim: usize,
        inner: f64,
        outer: f64,
        intervals: usize,
        grading: Grading,
    ) -> Result<Self> {
        if dim < 3 {
            return Err(Error::InvalidParameter(format!(
                "dimension N = {dim} must be >= 3"
            )));
        }
        if !(inner >= 0.0 && inner < outer) || !outer.is_finite() {
            return Err(Error::GridOrdering { inner, outer });
        }
        if intervals < MIN_INTERVALS {
            return Err(Error::GridTooSmall {
                got: intervals,
                min: MIN_INTERVALS,
            });
        }
        let needs_log = !matches!(grading, Grading::Uniform);
        if needs_log && inner == 0.0 {
            return Err(Error::InvalidParameter(
                "logarithmic grading needs a positive inner radius".into(),
            ));
        }

        let m = intervals as f64;
        let log_ratio = if needs_log { (outer / inner).ln() } else { 0.0 };
        let mut nodes: Vec<f64> = (0..=intervals)
            .map(|j| {
                let x = j as f64 / m;
                let uniform = inner + (outer - inner) * x;
                let log = || inner * (log_ratio * x).exp();
                match grading {
                    Grading::Uniform => uniform,
                    Grading::LogUniform => log(),
                    Grading::Hybrid { log_weight } => {
                        (1.0 - log_weight) * uniform + log_weight * log()
                    }
                }
            })
            .collect();
        nodes[0] = inner;
        nodes[intervals] = outer;
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "grid nodes are not strictly increasing".into(),
            ));
        }
        Ok(Self::from_nodes(dim, grading, nodes))
    }

    /// Uniform grid on the ball `[0, radius]` with spacing `radius / intervals`.
    pub fn ball(dim: usize, radius: f64, intervals: usize) -> Result<Self> {
        Self::new(dim, 0.0, radius, intervals, Grading::Uniform)
    }

    fn from_nodes(dim: usize, grading: Grading, nodes: Vec<f64>) -> Self {
        let power = dim as i32 - 1;
        let m = nodes.len() - 1;
        let conductance: Vec<f64> = nodes
            .windows(2)
            .map(|w| (0.5 * (w[0] + w[1])).powi(power) / (w[1] - w[0]))
            .collect();
        let mut weights = vec![0.0; m + 1];
        for j in 0..=m {
            let left = if j > 0 { nodes[j] - nodes[j - 1] } else { 0.0 };
            let right = if j < m { nodes[j + 1] - nodes[j] } else { 0.0 };
            weights[j] = nodes[j].powi(power) * 0.5 * (left + right);
        }
        if nodes[0] == 0.0 {
            // control volume [0, r_{1/2}] around the centre
            weights[0] = (0.5 * nodes[1]).powi(dim as i32) / dim as f64;
        }
        Self {
            dim,
            grading,
            nodes,
            conductance,
            weights,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grading(&self) -> Grading {
        self.grading
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of intervals `M`.
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn inner(&self) -> f64 {
        self.nodes[0]
    }

    pub fn outer(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn is_ball(&self) -> bool {
        self.nodes[0] == 0.0
    }

    pub fn conductance(&self) -> &[f64] {
        &self.conductance
    }

    /// Nodal weights of the `r^{N-1} dr` quadrature (no sphere factor).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Indices of the nodes that carry unknowns: all but Dirichlet endpoints.
    pub fn unknowns(&self) -> Range<usize> {
        let start = if self.is_ball() { 0 } else { 1 };
        start..self.nodes.len() - 1
    }

    /// `(K_jj, K_{j,j+1})`: stiffness diagonal and upper diagonal of
    /// `W·(-Δ_h)` restricted to [`Self::unknowns`].
    pub fn stiffness(&self) -> (Vec<f64>, Vec<f64>) {
        let g = &self.conductance;
        let range = self.unknowns();
        let diag: Vec<f64> = range
            .clone()
            .map(|j| if j == 0 { g[0] } else { g[j - 1] + g[j] })
            .collect();
        let upper: Vec<f64> = range.clone().skip(1).map(|j| -g[j - 1]).collect();
        (diag, upper)
    }

    /// Uniform log spacing for log-graded grids, `None` otherwise.
    pub fn log_step(&self) -> Option<f64> {
        match self.grading {
            Grading::LogUniform => {
                Some((self.outer() / self.inner()).ln() / self.intervals() as f64)
            }
            _ => None,
        }
    }

    /// Index of the grid cell containing `r` (clamped to the grid).
    pub fn locate(&self, r: f64) -> usize {
        let m = self.intervals();
        match self
            .nodes
            .binary_search_by(|x| x.partial_cmp(&r).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(j) => j.min(m - 1),
            Err(j) => j.saturating_sub(1).min(m - 1),
        }
    }
}

/// Nodal values of a radial function on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    dirichlet: bool,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            dirichlet: false,
        })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self {
            grid,
            values,
            dirichlet: true,
        }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self {
            grid,
            values,
            dirichlet: false,
        }
    }

    /// Pins the trace to zero at every Dirichlet endpoint.
    pub fn with_zero_trace(mut self) -> Self {
        let last = self.values.len() - 1;
        if !self.grid.is_ball() {
            self.values[0] = 0.0;
        }
        self.values[last] = 0.0;
        self.dirichlet = true;
        self
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_dirichlet(&self) -> bool {
        self.dirichlet
    }

    pub fn same_grid(&self, other: &RadialField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// Pointwise map keeping the grid and trace flag.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
            dirichlet: self.dirichlet && f(0.0) == 0.0,
        }
    }

    /// `self + scale · other`.
    pub fn axpy(&self, scale: f64, other: &RadialField) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + scale * b)
                .collect(),
            dirichlet: self.dirichlet && other.dirichlet,
        })
    }

    pub fn scaled(&self, scale: f64) -> Self {
        self.map(|v| scale * v)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Linear interpolation at radius `r`; zero outside the grid.
    pub fn interpolate(&self, r: f64) -> f64 {
        let nodes = self.grid.nodes();
        if r < nodes[0] || r > nodes[nodes.len() - 1] {
            return 0.0;
        }
        let j = self.grid.locate(r);
        let t = (r - nodes[j]) / (nodes[j + 1] - nodes[j]);
        (1.0 - t) * self.values[j] + t * self.values[j + 1]
    }

    /// Number of strict sign changes between interior nodes, ignoring exact zeros.
    pub fn sign_changes(&self) -> usize {
        count_sign_changes(&self.values)
    }

    /// Radii of interior sign changes by linear interpolation.
    pub fn zero_radii(&self) -> Vec<f64> {
        let r = self.grid.nodes();
        let v = &self.values;
        let mut zeros = Vec::new();
        let mut prev: Option<usize> = None;
        for j in 0..v.len() {
            if v[j] == 0.0 {
                continue;
            }
            if let Some(i) = prev {
                if v[i].signum() != v[j].signum() {
                    let t = v[i] / (v[i] - v[j]);
                    zeros.push(r[i] + t * (r[j] - r[i]));
                }
            }
            prev = Some(j);
        }
        zeros
    }
}

pub(crate) fn count_sign_changes(values: &[f64]) -> usize {
    let mut count = 0;
    let mut prev = 0.0_f64;
    for &v in values {
        if v == 0.0 || !v.is_finite() {
            continue;
        }
        if prev != 0.0 && prev.signum() != v.signum() {
            count += 1;
        }
        prev = v;
    }
    count
}

/// `ω_{N-1} ∫ u v r^{N-1} dr` by the nodal (trapezoid) rule.
pub fn integrate_weighted(u: &RadialField, v: &RadialField) -> Result<f64> {
    if !u.same_grid(v) {
        return Err(Error::GridMismatch);
    }
    let grid = u.grid();
    Ok(sphere_area(grid.dim()) * weighted_dot(grid.weights(), u.values(), v.values()))
}

/// `ω_{N-1} ∫ u v r^{N-1} dr` by composite Simpson in the grid's uniform
/// variable: `r` on uniform grids, `ln r` on log-uniform grids.
///
/// Fourth order for smooth integrands, and not tied to the weights that
/// symmetrize the discrete Laplacian.
pub fn integrate_weighted_simpson(u: &RadialField, v: &RadialField) -> Result<f64> {
    if !u.same_grid(v) {
        return Err(Error::GridMismatch);
    }
    let grid = u.grid();
    let m = grid.intervals();
    if m % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "Simpson rule needs an even interval count, got {m}"
        )));
    }
    let power = grid.dim() as i32 - 1;
    let nodes = grid.nodes();
    let (step, integrand): (f64, Box<dyn Fn(usize) -> f64>) = match grid.grading() {
        Grading::Uniform => (
            (grid.outer() - grid.inner()) / m as f64,
            Box::new(|j| u.values()[j] * v.values()[j] * nodes[j].powi(power)),
        ),
        Grading::LogUniform => (
            grid.log_step().expect("log grid"),
            Box::new(|j| u.values()[j] * v.values()[j] * nodes[j].powi(power + 1)),
        ),
        Grading::Hybrid { .. } => {
            return Err(Error::InvalidParameter(
                "Simpson rule needs a uniform or log-uniform grid".into(),
            ));
        }
    };
    let mut sum = integrand(0) + integrand(m);
    for j in 1..m {
        sum += if j % 2 == 1 { 4.0 } else { 2.0 } * integrand(j);
    }
    Ok(sphere_area(grid.dim()) * sum * step / 3.0)
}

/// `ω_{N-1} ∫ g r^{N-1} dr` for a single nodal integrand.
pub fn integrate(u: &RadialField) -> f64 {
    let grid = u.grid();
    let sum: f64 = grid
        .weights()
        .iter()
        .zip(u.values())
        .map(|(w, g)| w * g)
        .sum();
    sphere_area(grid.dim()) * sum
}

pub(crate) fn weighted_dot(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    // symmetric in (a, b) bit for bit: products commute in IEEE arithmetic
    weights
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x * y))
        .sum()
}

/// Discrete `u'' + (N-1)/r u'` at every node that carries an unknown;
/// Dirichlet endpoint entries of the result are zero.
pub fn apply_radial_laplacian(u: &RadialField) -> Result<RadialField> {
    let grid = u.grid();
    if grid.len() < 3 {
        return Err(Error::GridTooSmall {
            got: grid.intervals(),
            min: 2,
        });
    }
    let values = laplacian_values(grid, u.values());
    RadialField::new(Arc::clone(grid), values)
}

pub(crate) fn laplacian_values(grid: &RadialGrid, u: &[f64]) -> Vec<f64> {
    let g = grid.conductance();
    let w = grid.weights();
    let mut out = vec![0.0; u.len()];
    for j in grid.unknowns() {
        let right = g[j] * (u[j + 1] - u[j]);
        let left = if j == 0 {
            0.0
        } else {
            g[j - 1] * (u[j] - u[j - 1])
        };
        out[j] = (right - left) / w[j];
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2_weighted: f64,
    pub linf: f64,
    pub h1_seminorm: f64,
}

pub fn norms(u: &RadialField) -> Norms {
    let grid = u.grid();
    let omega = sphere_area(grid.dim());
    let v = u.values();
    let l2 = omega * weighted_dot(grid.weights(), v, v);
    let dirichlet_form: f64 = grid
        .conductance()
        .iter()
        .zip(v.windows(2))
        .map(|(g, w)| g * (w[1] - w[0]) * (w[1] - w[0]))
        .sum();
    Norms {
        l2_weighted: l2.sqrt(),
        linf: u.sup_norm(),
        h1_seminorm: (omega * dirichlet_form).sqrt(),
    }
}
