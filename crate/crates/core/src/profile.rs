//! Bubbles, their annulus projections, tower ansätze and the Emden–Fowler
//! measurement of concentration scales.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{bubble_constant, ProblemParams, RadialField, RadialGrid};

/// Largest admissible ratio `δ_{i+1} / δ_i` between consecutive scales.
pub const SEPARATION_LIMIT: f64 = 0.5;
/// Every scale must exceed `eps · (1 + CORE_MARGIN)`.
pub const CORE_MARGIN: f64 = 0.1;
/// Minimum peak prominence as a fraction of the universal peak height.
pub const PEAK_PROMINENCE: f64 = 0.1;

/// The positive entire solution `α_N (δ / (δ² + r²))^{(N-2)/2}` centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bubble {
    delta: f64,
    dim: usize,
}

impl Bubble {
    pub fn new(delta: f64, dim: usize) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bubble scale {delta} must be positive"
            )));
        }
        if dim < 3 {
            return Err(Error::InvalidParameter(format!(
                "dimension N = {dim} must be >= 3"
            )));
        }
        Ok(Self { delta, dim })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, r: f64) -> f64 {
        let half = 0.5 * (self.dim as f64 - 2.0);
        bubble_constant(self.dim) * (self.delta / (self.delta * self.delta + r * r)).powf(half)
    }

    /// Peak value at the origin, `α_N δ^{-(N-2)/2}`.
    pub fn peak(&self) -> f64 {
        bubble_constant(self.dim) * self.delta.powf(-0.5 * (self.dim as f64 - 2.0))
    }
}

/// Height of every bubble in Emden–Fowler variables, `α_N 2^{-(N-2)/2}`.
pub fn emden_fowler_peak(dim: usize) -> f64 {
    bubble_constant(dim) * 2f64.powf(-0.5 * (dim as f64 - 2.0))
}

/// Subtracts from `f` the radial harmonic `A + B r^{2-N}` that matches its
/// values at both ends of the annulus, leaving a zero-trace field.
pub fn project_annulus(grid: &Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<RadialField> {
    if grid.is_ball() {
        return Err(Error::InvalidParameter(
            "projection needs an annulus".into(),
        ));
    }
    let power = 2 - grid.dim() as i32;
    let (a, b) = (grid.inner(), grid.outer());
    let (ga, gb) = (a.powi(power), b.powi(power));
    let det = gb - ga;
    if det == 0.0 || !det.is_finite() {
        return Err(Error::Singular(
            "harmonic correction on a degenerate annulus".into(),
        ));
    }
    let (fa, fb) = (f(a), f(b));
    let coef_b = (fb - fa) / det;
    let coef_a = fa - coef_b * ga;
    let field = RadialField::from_fn(Arc::clone(grid), |r| {
        f(r) - (coef_a + coef_b * r.powi(power))
    });
    Ok(field.with_zero_trace())
}

pub fn project_bubble_annulus(bubble: &Bubble, grid: &Arc<RadialGrid>) -> Result<RadialField> {
    if bubble.dim() != grid.dim() {
        return Err(Error::InvalidParameter(
            "bubble and grid dimensions differ".into(),
        ));
    }
    project_annulus(grid, |r| bubble.eval(r))
}

/// Superposition data `Σ (-1)^i P U_{δ_i}` with `δ_i = d_i ε^{(2i-1)/(2k)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerAnsatz {
    params: ProblemParams,
    coefficients: Vec<f64>,
    deltas: Vec<f64>,
}

impl TowerAnsatz {
    /// Ansatz with all `d_i = 1`.
    pub fn unit(params: ProblemParams) -> Result<Self> {
        Self::new(params, vec![1.0; params.towers()])
    }

    pub fn new(params: ProblemParams, coefficients: Vec<f64>) -> Result<Self> {
        let k = params.towers();
        if coefficients.len() != k {
            return Err(Error::InvalidParameter(format!(
                "{} coefficients for a {k}-tower",
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::InvalidParameter(
                "tower coefficients must be positive".into(),
            ));
        }
        let eps = params.eps();
        let deltas: Vec<f64> = coefficients
            .iter()
            .enumerate()
            .map(|(i, d)| d * eps.powf((2 * i + 1) as f64 / (2 * k) as f64))
            .collect();
        for (i, &delta) in deltas.iter().enumerate() {
            if delta <= eps * (1.0 + CORE_MARGIN) {
                return Err(Error::InvalidParameter(format!(
                    "delta[{i}] = {delta:e} does not clear the hole eps = {eps:e}"
                )));
            }
        }
        for i in 1..k {
            let ratio = deltas[i] / deltas[i - 1];
            if ratio > SEPARATION_LIMIT {
                return Err(Error::ScalesNotSeparated {
                    prev: i - 1,
                    index: i,
                    ratio,
                    limit: SEPARATION_LIMIT,
                });
            }
        }
        Ok(Self {
            params,
            coefficients,
            deltas,
        })
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Scales `δ_1 > … > δ_k`.
    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    /// Signs `(-1)^i` for `i = 1..=k`.
    pub fn signs(&self) -> Vec<f64> {
        (1..=self.deltas.len())
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect()
    }
}

pub fn build_tower_ansatz(tower: &TowerAnsatz, grid: &Arc<RadialGrid>) -> Result<RadialField> {
    let dim = tower.params().dim();
    if grid.dim() != dim {
        return Err(Error::InvalidParameter(
            "ansatz and grid dimensions differ".into(),
        ));
    }
    let mut total = RadialField::zeros(Arc::clone(grid));
    for (&delta, sign) in tower.deltas().iter().zip(tower.signs()) {
        let projected = project_bubble_annulus(&Bubble::new(delta, dim)?, grid)?;
        total = total.axpy(sign, &projected)?;
    }
    Ok(total)
}

/// Emden–Fowler coordinates `s = log r`, `w = r^{(N-2)/2} u`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmdenFowler {
    pub s: Vec<f64>,
    pub w: Vec<f64>,
}

pub fn emden_fowler_transform(u: &RadialField) -> Result<EmdenFowler> {
    let grid = u.grid();
    if grid.is_ball() {
        return Err(Error::InvalidParameter(
            "Emden–Fowler variables need positive radii".into(),
        ));
    }
    let half = 0.5 * (grid.dim() as f64 - 2.0);
    let s = grid.nodes().iter().map(|r| r.ln()).collect();
    let w = grid
        .nodes()
        .iter()
        .zip(u.values())
        .map(|(r, v)| r.powf(half) * v)
        .collect();
    Ok(EmdenFowler { s, w })
}

/// Local maxima of `values` with their topographic prominence.
fn prominent_peaks(values: &[f64], min_prominence: f64) -> Vec<(usize, f64)> {
    let n = values.len();
    let mut peaks = Vec::new();
    for j in 1..n.saturating_sub(1) {
        let h = values[j];
        if !(h > values[j - 1] && h >= values[j + 1]) {
            continue;
        }
        let mut left_min = h;
        let mut i = j;
        while i > 0 {
            i -= 1;
            if values[i] > h {
                break;
            }
            left_min = left_min.min(values[i]);
        }
        let mut right_min = h;
        let mut i = j;
        while i + 1 < n {
            i += 1;
            if values[i] > h {
                break;
            }
            right_min = right_min.min(values[i]);
        }
        let prominence = h - left_min.max(right_min);
        if prominence >= min_prominence {
            peaks.push((j, prominence));
        }
    }
    peaks
}

/// Estimates `δ_1 > … > δ_k` from the `k` most prominent peaks of `|w|`.
///
/// Peak positions are refined by a parabola through the three nodes around
/// each discrete maximum.
pub fn extract_concentrations(u: &RadialField, k: usize) -> Result<Vec<f64>> {
    let ef = emden_fowler_transform(u)?;
    let abs: Vec<f64> = ef.w.iter().map(|w| w.abs()).collect();
    let threshold = PEAK_PROMINENCE * emden_fowler_peak(u.grid().dim());
    let mut peaks = prominent_peaks(&abs, threshold);
    if peaks.len() < k {
        return Err(Error::TooFewPeaks {
            found: peaks.len(),
            expected: k,
        });
    }
    peaks.sort_by(|a, b| abs[b.0].total_cmp(&abs[a.0]));
    peaks.truncate(k);
    let mut deltas: Vec<f64> = peaks
        .iter()
        .map(|&(j, _)| {
            let (s0, s1, s2) = (ef.s[j - 1], ef.s[j], ef.s[j + 1]);
            let (y0, y1, y2) = (abs[j - 1], abs[j], abs[j + 1]);
            // vertex of the interpolating parabola
            let num = (s1 - s0).powi(2) * (y1 - y2) - (s1 - s2).powi(2) * (y1 - y0);
            let den = (s1 - s0) * (y1 - y2) - (s1 - s2) * (y1 - y0);
            let vertex = if den != 0.0 { s1 - 0.5 * num / den } else { s1 };
            vertex.clamp(s0, s2).exp()
        })
        .collect();
    deltas.sort_by(|a, b| b.total_cmp(a));
    Ok(deltas)
}
