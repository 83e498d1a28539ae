//! Independent reference computations for the stationary and limit problems.
//!
//! In Emden–Fowler variables `t = ln r`, `w = r^{(N-2)/2} u` the radial
//! equation becomes the autonomous oscillator `w'' - a² w + |w|^{p-1} w = 0`
//! with `a = (N-2)/2`, so a solution with `k` nodal regions on `[ε, 1]` is
//! a periodic orbit whose half period is `ln(1/ε)/k`. Its energy `E` fixes
//! the slope `u'(ε) = sqrt(2E) ε^{-N/2}`.
#![allow(dead_code)]

use bubbletower::mesh::critical_exponent;

fn ef_constants(dim: usize) -> (f64, f64) {
    (0.5 * (dim as f64 - 2.0), critical_exponent(dim))
}

/// Turning point `w_max` of the orbit with energy `e`.
fn turning_point(dim: usize, e: f64) -> f64 {
    let (a, p) = ef_constants(dim);
    let g = |w: f64| 2.0 * w.powf(p + 1.0) / (p + 1.0) - a * a * w * w - 2.0 * e;
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Half period `2 ∫_0^{w_max} dw / sqrt(2E + a²w² - 2w^{p+1}/(p+1))` with
/// `w = w_max sin θ`, composite Simpson in `θ`.
fn half_period(dim: usize, e: f64) -> f64 {
    let (a, p) = ef_constants(dim);
    let wm = turning_point(dim, e);
    let big_g = |w: f64| 2.0 * w.powf(p + 1.0) / (p + 1.0) - a * a * w * w;
    let dg = |w: f64| 2.0 * w.powf(p) - 2.0 * a * a * w;
    let integrand = |theta: f64| {
        let c = theta.cos();
        let gap = big_g(wm) - big_g(wm * theta.sin());
        if c < 1e-6 {
            // limit of wm cos θ / sqrt(G(wm) - G(wm sin θ)) as θ → π/2
            wm / (0.5 * dg(wm) * wm).sqrt()
        } else {
            wm * c / gap.sqrt()
        }
    };
    let n = 20_000;
    let h = 0.5 * std::f64::consts::PI / n as f64;
    let mut sum = integrand(0.0) + integrand(0.5 * std::f64::consts::PI);
    for j in 1..n {
        sum += if j % 2 == 1 { 4.0 } else { 2.0 } * integrand(j as f64 * h);
    }
    2.0 * sum * h / 3.0
}

/// Slope from the half-period condition `k h(E) = ln(1/ε)`.
pub fn quadrature_slope(dim: usize, k: usize, eps: f64) -> f64 {
    let target = (1.0 / eps).ln() / k as f64;
    let (mut lo, mut hi) = ((1e-30f64).ln(), (1e30f64).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if half_period(dim, mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (2.0 * (0.5 * (lo + hi)).exp()).sqrt() * eps.powf(-0.5 * dim as f64)
}

/// Fixed-step RK4 in Emden–Fowler variables: whether the `k`-th zero of the
/// orbit starting at `w = 0, w' = q` occurs before `t = 0`.
fn kth_zero_before_end(dim: usize, k: usize, eps: f64, q: f64, steps: usize) -> bool {
    let (a, p) = ef_constants(dim);
    let f = |y: [f64; 2]| [y[1], a * a * y[0] - y[0].abs().powf(p - 1.0) * y[0]];
    let t0 = eps.ln();
    let h = -t0 / steps as f64;
    let mut y = [0.0, q];
    let mut zeros = 0;
    let mut sign = 1.0;
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
        for c in 0..2 {
            y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        if y[0] * sign < 0.0 {
            zeros += 1;
            sign = -sign;
        }
    }
    zeros >= k || (zeros == k - 1 && y[0] == 0.0)
}

pub fn rk4_slope(dim: usize, k: usize, eps: f64) -> f64 {
    let steps = 100_000;
    let mut lo = 1e-6f64;
    while kth_zero_before_end(dim, k, eps, lo, steps) {
        lo /= 10.0;
    }
    let mut hi = 10.0 * lo;
    while !kth_zero_before_end(dim, k, eps, hi, steps) {
        lo = hi;
        hi *= 10.0;
    }
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if kth_zero_before_end(dim, k, eps, mid, steps) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi) * eps.powf(-0.5 * dim as f64)
}

/// `φ'' + (N-1)/r φ' + (V + λ) φ = 0` with `V = p N(N-2)/(1+r²)²`, shot
/// from the origin by fixed-step RK4; `true` if `φ` vanishes before `radius`.
fn limit_has_zero(dim: usize, lambda: f64, radius: f64, steps: usize) -> bool {
    let p = critical_exponent(dim);
    let nn = dim as f64;
    let v = |r: f64| p * nn * (nn - 2.0) / ((1.0 + r * r) * (1.0 + r * r));
    // series start: φ = 1 + c r², c = -(V(0) + λ)/(2N)
    let r0 = 1e-4;
    let c = -(v(0.0) + lambda) / (2.0 * nn);
    let mut y = [1.0 + c * r0 * r0, 2.0 * c * r0];
    let h = (radius - r0) / steps as f64;
    let f = |r: f64, y: [f64; 2]| [y[1], -(nn - 1.0) / r * y[1] - (v(r) + lambda) * y[0]];
    let mut r = r0;
    for _ in 0..steps {
        let k1 = f(r, y);
        let k2 = f(
            r + 0.5 * h,
            [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]],
        );
        let k3 = f(
            r + 0.5 * h,
            [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]],
        );
        let k4 = f(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for c in 0..2 {
            y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        r += h;
        if y[0] <= 0.0 {
            return true;
        }
    }
    false
}

/// Dirichlet ground state energy on the ball of radius `radius`.
pub fn limit_oracle(dim: usize, radius: f64) -> f64 {
    let floor = -((dim * (dim + 2)) as f64);
    let (mut lo, mut hi) = (floor, 0.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if limit_has_zero(dim, mid, radius, 200_000) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn rk4_radial(f: impl Fn(f64, [f64; 2]) -> [f64; 2], r: f64, y: [f64; 2], h: f64) -> [f64; 2] {
    let k1 = f(r, y);
    let k2 = f(
        r + 0.5 * h,
        [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]],
    );
    let k3 = f(
        r + 0.5 * h,
        [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]],
    );
    let k4 = f(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// `∫ U^p φ*` over `R^N` for the L²-normalized ground state at eigenvalue
/// `lambda`, from the shooting profile. The profile is integrated until it
/// turns upward, where the growing mode takes over; the discarded tail is
/// below roundoff.
pub fn limit_overlap_oracle(dim: usize, lambda: f64) -> f64 {
    let p = critical_exponent(dim);
    let nn = dim as f64;
    let alpha = (nn * (nn - 2.0)).powf(0.25 * (nn - 2.0));
    let bubble = |r: f64| alpha * (1.0 + r * r).powf(-0.5 * (nn - 2.0));
    let v = |r: f64| p * nn * (nn - 2.0) / ((1.0 + r * r) * (1.0 + r * r));
    let f = |r: f64, y: [f64; 2]| [y[1], -(nn - 1.0) / r * y[1] - (v(r) + lambda) * y[0]];
    let r0 = 1e-4;
    let c = -(v(0.0) + lambda) / (2.0 * nn);
    let mut y = [1.0 + c * r0 * r0, 2.0 * c * r0];
    let h = 1e-4;
    let mut r = r0;
    let (mut mass, mut overlap) = (0.0, 0.0);
    // trapezoid in r; the first cell [0, r0] is negligible
    let weight = |r: f64| r.powf(nn - 1.0);
    loop {
        let next = rk4_radial(f, r, y, h);
        if next[1] >= 0.0 || next[0] <= 0.0 {
            break;
        }
        mass += 0.5 * h * (weight(r) * y[0] * y[0] + weight(r + h) * next[0] * next[0]);
        overlap += 0.5
            * h
            * (weight(r) * bubble(r).powf(p) * y[0]
                + weight(r + h) * bubble(r + h).powf(p) * next[0]);
        y = next;
        r += h;
    }
    let area = 2.0 * std::f64::consts::PI.powf(0.5 * nn) / half_integer_gamma(0.5 * nn);
    area.sqrt() * overlap / mass.sqrt()
}

/// `Γ(x)` for half-integers `x ≥ 1/2`.
fn half_integer_gamma(x: f64) -> f64 {
    let mut g = if (x - x.floor()).abs() < 1e-12 {
        1.0
    } else {
        std::f64::consts::PI.sqrt()
    };
    let mut t = if (x - x.floor()).abs() < 1e-12 {
        1.0
    } else {
        0.5
    };
    while t < x - 1e-12 {
        g *= t;
        t += 1.0;
    }
    g
}
