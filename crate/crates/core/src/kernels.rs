//! Per-step oscillatory integrals over the piecewise-linear Wong–Zakai path.
//!
//! Over a step `[t_n, t_n + τ]` with `ψ(s) = B^{δ,R}(t_n + s) - B^{δ,R}(t_n)`,
//! the kernels are
//!
//! * low-regularity kernel: `I(k²) = ∫₀^τ e^{2ik²ψ(s)} ds`
//! * exponential-Euler kernel: `J(k²) = ∫₀^τ e^{ik²ψ(s)} ds`
//!
//! `ψ` is affine between knots, so each piece integrates in closed form as
//! `(b - a) e^{ick²ψ(a)} φ₁(ick²(ψ(b) - ψ(a)))`. Phases are always taken
//! relative to `t_n`.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::paths::WongZakaiPath;
use crate::spectral::{phi1, TorusField};

/// Multiplier values `K(k)` for `0 ≤ k ≤ N` (kernels depend on `k²` only).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    values: Vec<Complex64>,
    pub t_n: f64,
    pub tau: f64,
    pub delta: f64,
}

impl KernelTable {
    pub fn bandwidth(&self) -> usize {
        self.values.len() - 1
    }

    pub fn get(&self, k: i64) -> Complex64 {
        self.values[k.unsigned_abs() as usize]
    }

    /// Values for `k = 0..=N`.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// The table as a symmetric field, e.g. for a `k,re,im` dump.
    pub fn as_field(&self) -> TorusField {
        TorusField::from_fn(self.bandwidth(), |k| self.get(k))
    }
}

/// Fine-grid breakpoints of one step: the step ends plus every knot inside.
#[derive(Debug, Clone)]
pub(crate) struct StepSegment {
    /// Breakpoint times relative to `t_n`.
    pub offsets: Vec<f64>,
    /// `ψ` at each breakpoint.
    pub psi: Vec<f64>,
}

impl StepSegment {
    pub fn new(path: &WongZakaiPath<'_>, start: usize, steps: usize) -> Self {
        let h = path.grid().h_fine;
        let m = path.knot_steps();
        let origin = path.eval_index(start);
        let mut idx = vec![start];
        let mut next = (start / m + 1) * m;
        while next < start + steps {
            idx.push(next);
            next += m;
        }
        idx.push(start + steps);
        Self {
            offsets: idx.iter().map(|&j| (j - start) as f64 * h).collect(),
            psi: idx.iter().map(|&j| path.eval_index(j) - origin).collect(),
        }
    }

    /// `∫₀^τ e^{i·factor·k²ψ(s)} ds` in closed form.
    pub fn integral(&self, factor: f64, k: i64) -> Complex64 {
        let omega = factor * (k * k) as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for l in 0..self.psi.len() - 1 {
            let width = self.offsets[l + 1] - self.offsets[l];
            let rise = self.psi[l + 1] - self.psi[l];
            acc += width * Complex64::from_polar(1.0, omega * self.psi[l]) * phi1(Complex64::new(0.0, omega * rise));
        }
        acc
    }
}

/// Validates `(t_n, τ)` against the path and returns `(start index, fine steps)`.
///
/// Either `δ` divides both `τ` and `t_n`, or `τ` divides `δ` and `t_n`; in the
/// latter case the step lies inside one knot interval.
pub(crate) fn step_indices(path: &WongZakaiPath<'_>, t_n: f64, tau: f64) -> Result<(usize, usize)> {
    let grid = path.grid();
    let steps = grid.steps_in(tau, "tau")?;
    let start = grid.index_of(t_n)?;
    if start + steps > grid.steps() {
        return Err(Error::Range {
            t: t_n + tau,
            horizon: grid.horizon,
        });
    }
    let m = path.knot_steps();
    let aligned = if steps % m == 0 {
        start % m == 0
    } else if m.is_multiple_of(steps) {
        start % steps == 0
    } else {
        false
    };
    if !aligned {
        return Err(Error::Config(format!(
            "step [{t_n}, {}] is not commensurate with delta={}",
            t_n + tau,
            path.delta()
        )));
    }
    Ok((start, steps))
}

fn kernel_table(path: &WongZakaiPath<'_>, t_n: f64, tau: f64, bandwidth: usize, factor: f64) -> Result<KernelTable> {
    let (start, steps) = step_indices(path, t_n, tau)?;
    let seg = StepSegment::new(path, start, steps);
    Ok(KernelTable {
        values: (0..=bandwidth as i64).map(|k| seg.integral(factor, k)).collect(),
        t_n,
        tau,
        delta: path.delta(),
    })
}

/// `I_{n,τ}(k²) = ∫₀^τ e^{2ik²ψ(s)} ds` for `|k| ≤ N`.
pub fn sdlri_kernel(path: &WongZakaiPath<'_>, t_n: f64, tau: f64, bandwidth: usize) -> Result<KernelTable> {
    kernel_table(path, t_n, tau, bandwidth, 2.0)
}

/// `J(k²) = ∫₀^τ e^{ik²ψ(s)} ds` for `|k| ≤ N`.
pub fn expeuler_kernel(path: &WongZakaiPath<'_>, t_n: f64, tau: f64, bandwidth: usize) -> Result<KernelTable> {
    kernel_table(path, t_n, tau, bandwidth, 1.0)
}

const GL_ORDER: usize = 32;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        (0..n)
            .map(|i| {
                let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
                let mut dp = 0.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for j in 2..=n {
                        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let dx = p1 / dp;
                    x -= dx;
                    if dx.abs() < 1e-16 {
                        break;
                    }
                }
                (x, 2.0 / ((1.0 - x * x) * dp * dp))
            })
            .collect()
    })
}

/// Composite Gauss–Legendre value of `∫₀^τ e^{i·phase_factor·k²ψ(s)} ds`.
///
/// Independent check on the closed-form kernels: the path is sampled through
/// [`WongZakaiPath::eval`] at quadrature nodes, each knot interval is split
/// into panels of bounded phase variation, and every interval receives at
/// least 64 nodes.
pub fn kernel_oracle(path: &WongZakaiPath<'_>, t_n: f64, tau: f64, k: i64, phase_factor: u32) -> Result<Complex64> {
    if !matches!(phase_factor, 1 | 2) {
        return Err(Error::Argument(format!(
            "phase factor must be 1 or 2, got {phase_factor}"
        )));
    }
    let (start, steps) = step_indices(path, t_n, tau)?;
    let h = path.grid().h_fine;
    let omega = phase_factor as f64 * (k * k) as f64;
    let origin = path.eval(t_n)?;
    let m = path.knot_steps();

    let mut cuts = vec![start];
    let mut next = (start / m + 1) * m;
    while next < start + steps {
        cuts.push(next);
        next += m;
    }
    cuts.push(start + steps);

    let mut total = Complex64::new(0.0, 0.0);
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0] as f64 * h, pair[1] as f64 * h);
        let variation = omega * (path.eval(b)? - path.eval(a)?).abs();
        let panels = ((variation / 4.0).ceil() as usize).max(2);
        let width = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * width;
            let mid = lo + 0.5 * width;
            let mut acc = Complex64::new(0.0, 0.0);
            for &(x, w) in gauss_legendre() {
                let t = (mid + 0.5 * width * x).clamp(a, b);
                let psi = path.eval(t)? - origin;
                acc += w * Complex64::from_polar(1.0, omega * psi);
            }
            total += 0.5 * width * acc;
        }
    }
    Ok(total)
}

/// `k² + k₁² - k₂² - k₃²` for a quadruple on `k + k₁ = k₂ + k₃`.
pub fn phase_mismatch(k: i64, k1: i64, k2: i64, k3: i64) -> i64 {
    k * k + k1 * k1 - k2 * k2 - k3 * k3
}

/// Split of the phase mismatch into the dominant part `2k₁²` (integrated
/// exactly by the kernel) and the remainder `2k₂k₃ - 2k₁(k₂ + k₃)`.
pub fn resonance_split(k1: i64, k2: i64, k3: i64) -> (i64, i64) {
    (2 * k1 * k1, 2 * k2 * k3 - 2 * k1 * (k2 + k3))
}
