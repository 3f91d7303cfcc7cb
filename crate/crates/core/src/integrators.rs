//! One-step maps for the low-regularity scheme and the reference schemes,
//! and a driver that runs a full trajectory along one path.
//!
//! All schemes treat the free flow `e^{ibΔ}` exactly in Fourier space and
//! differ only in how the cubic term is integrated over a step.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{expeuler_kernel, sdlri_kernel, KernelTable};
use crate::paths::{commensurate, BrownianPath, Truncation, WongZakaiPath};
use crate::spectral::{
    apply_multiplier, conjugate, cubic, dealiased_grid_size, free_propagate, pointwise, to_physical, to_spectral,
    TorusField,
};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Resonance-based low-regularity integrator on the Wong–Zakai path.
    Sdlri,
    /// Lie splitting: exact nonlinear phase, then exact free flow.
    Lie,
    /// Wong–Zakai exponential Euler.
    Expeuler,
    /// Relaxed Crank–Nicolson.
    RelaxedCn,
    /// Symmetric splitting used as the fine reference solver.
    SplitstepRef,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Sdlri,
        Scheme::Lie,
        Scheme::Expeuler,
        Scheme::RelaxedCn,
        Scheme::SplitstepRef,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Sdlri => "sdlri",
            Scheme::Lie => "lie",
            Scheme::Expeuler => "expeuler",
            Scheme::RelaxedCn => "relaxed_cn",
            Scheme::SplitstepRef => "splitstep_ref",
        }
    }

    /// Whether each step integrates an oscillatory kernel over the path.
    pub fn uses_kernel(self) -> bool {
        matches!(self, Scheme::Sdlri | Scheme::Expeuler)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown scheme '{s}'")))
    }
}

/// Which path drives the dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSource {
    WongZakai,
    RawBrownian,
}

impl FromStr for PathSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wong_zakai" => Ok(PathSource::WongZakai),
            "raw_brownian" => Ok(PathSource::RawBrownian),
            other => Err(Error::Argument(format!("unknown path source '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub tau: f64,
    pub delta: f64,
    #[serde(rename = "R")]
    pub truncation: Truncation,
    #[serde(rename = "N")]
    pub bandwidth: usize,
    pub lambda: f64,
    pub path_source: PathSource,
    pub cn_tol: f64,
    pub cn_max_iter: usize,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, horizon: f64, tau: f64, delta: f64, bandwidth: usize) -> Self {
        Self {
            scheme,
            horizon,
            tau,
            delta,
            truncation: Truncation::NONE,
            bandwidth,
            lambda: 1.0,
            path_source: PathSource::WongZakai,
            cn_tol: 1e-12,
            cn_max_iter: 200,
        }
    }

    pub fn steps(&self) -> usize {
        commensurate(self.horizon, self.tau).unwrap_or(0)
    }

    /// Checks the commensurability rules against the fine grid of `path`.
    pub fn validate(&self, path: &BrownianPath) -> Result<()> {
        let grid = path.grid();
        if !self.lambda.is_finite() {
            return Err(Error::Config("lambda must be finite".into()));
        }
        if self.horizon > grid.horizon * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "T={} exceeds the path horizon {}",
                self.horizon, grid.horizon
            )));
        }
        let tau_steps = grid.steps_in(self.tau, "tau")?;
        if self.scheme == Scheme::SplitstepRef && tau_steps % 2 != 0 {
            return Err(Error::Config(format!(
                "tau={} has no midpoint on the fine grid",
                self.tau
            )));
        }
        if self.path_source == PathSource::WongZakai {
            let knot_steps = grid.steps_in(self.delta, "delta")?;
            if self.scheme.uses_kernel() && tau_steps % knot_steps != 0 && knot_steps % tau_steps != 0 {
                return Err(Error::Config(format!(
                    "delta={} does not divide tau={}",
                    self.delta, self.tau
                )));
            }
        }
        match commensurate(self.horizon, self.tau) {
            Some(k) if k > 0 => {}
            _ => {
                return Err(Error::Config(format!(
                    "tau={} does not divide T={}",
                    self.tau, self.horizon
                )))
            }
        }
        if self.cn_tol <= 0.0 || self.cn_max_iter == 0 {
            return Err(Error::Config("CN tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }

    fn path_view<'a>(&self, path: &'a BrownianPath) -> Result<WongZakaiPath<'a>> {
        match self.path_source {
            PathSource::WongZakai => WongZakaiPath::new(path, self.delta, self.truncation),
            PathSource::RawBrownian => Ok(WongZakaiPath::raw(path)),
        }
    }
}

/// `u_{n+1} = e^{iΔb Δ}[u_n + iλ π_N(u_n² · K(-Δ) ū_n)]`.
pub fn step_sdlri(u: &TorusField, kernel: &KernelTable, db: f64, lambda: f64) -> Result<TorusField> {
    if kernel.bandwidth() != u.bandwidth() {
        return Err(Error::Config(format!(
            "kernel bandwidth {} does not match field bandwidth {}",
            kernel.bandwidth(),
            u.bandwidth()
        )));
    }
    let filtered = apply_multiplier(&conjugate(u), |k| kernel.get(k));
    let nonlinear = pointwise([u, &filtered], u.bandwidth(), |[a, w]| a * a * w);
    Ok(free_propagate(&(u + &nonlinear.scaled(I * lambda)), db))
}

/// `u_{n+1} = e^{iψΔ} π_N(e^{iτλ|u_n|²} u_n)`.
pub fn step_lie(u: &TorusField, psi: f64, tau: f64, lambda: f64) -> TorusField {
    let rotated = pointwise([u], u.bandwidth(), |[a]| {
        a * Complex64::from_polar(1.0, tau * lambda * a.norm_sqr())
    });
    free_propagate(&rotated, psi)
}

/// Symmetric splitting: free flow over the first half-step increment `psi_a`,
/// the pointwise phase over `τ`, then free flow over `psi_b`.
pub fn step_strang(u: &TorusField, psi_a: f64, psi_b: f64, tau: f64, lambda: f64) -> TorusField {
    step_lie(&free_propagate(u, psi_a), psi_b, tau, lambda)
}

/// `u_{n+1} = e^{iψΔ}[u_n + iλ J(-Δ) π_N(|u_n|² u_n)]`.
pub fn step_expeuler(u: &TorusField, kernel: &KernelTable, psi: f64, lambda: f64) -> Result<TorusField> {
    if kernel.bandwidth() != u.bandwidth() {
        return Err(Error::Config(format!(
            "kernel bandwidth {} does not match field bandwidth {}",
            kernel.bandwidth(),
            u.bandwidth()
        )));
    }
    let nonlinear = apply_multiplier(&cubic(u), |k| kernel.get(k));
    Ok(free_propagate(&(u + &nonlinear.scaled(I * lambda)), psi))
}

/// Relaxation variable `φ^{n-1/2}` on the padded physical grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CnState {
    pub phi_half: Vec<f64>,
}

impl CnState {
    /// `φ^{-1/2} = |u⁰|²`.
    pub fn new(u0: &TorusField) -> Self {
        let grid = dealiased_grid_size(u0.bandwidth());
        let values = to_physical(u0, grid).expect("padded grid holds bandwidth");
        Self {
            phi_half: values.iter().map(|v| v.norm_sqr()).collect(),
        }
    }
}

/// One relaxed Crank–Nicolson step, solved by fixed-point iteration.
///
/// The linear part is inverted exactly in Fourier space; the iteration only
/// resolves the relaxation product. On non-convergence the error carries the
/// last L² update as residual and step index 0 (the driver fills in the step).
pub fn step_relaxed_cn(
    u: &TorusField,
    state: &CnState,
    db: f64,
    tau: f64,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(TorusField, CnState)> {
    let n = u.bandwidth();
    let grid = dealiased_grid_size(n);
    if state.phi_half.len() != grid {
        return Err(Error::Config(format!(
            "CN state has {} grid points, expected {grid}",
            state.phi_half.len()
        )));
    }
    let u_phys = to_physical(u, grid)?;
    let phi: Vec<f64> = u_phys
        .iter()
        .zip(&state.phi_half)
        .map(|(v, p)| 2.0 * v.norm_sqr() - p)
        .collect();

    let half = 0.5 * db;
    let explicit = TorusField::from_fn(n, |k| (1.0 - I * half * (k * k) as f64) * u.get(k));
    let coupling = I * (0.5 * tau * lambda);

    let mut current = u.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let mut sum = to_physical(&(&current + u), grid)?;
        for (v, p) in sum.iter_mut().zip(&phi) {
            *v *= *p;
        }
        let product = to_spectral(&sum, n)?;
        let next = TorusField::from_fn(n, |k| {
            (explicit.get(k) + coupling * product.get(k)) / (1.0 + I * half * (k * k) as f64)
        });
        residual = (&next - &current).l2_norm();
        current = next;
        if residual < tol {
            return Ok((current, CnState { phi_half: phi }));
        }
        if !residual.is_finite() {
            break;
        }
    }
    Err(Error::StepFailure {
        step: 0,
        residual,
        iterations: max_iter,
    })
}

/// Runs `T/τ` steps of the configured scheme along `path`.
pub fn run_trajectory(cfg: &SchemeConfig, path: &BrownianPath, u0: &TorusField) -> Result<TorusField> {
    run_trajectory_with(cfg, path, u0, |_, _| {})
}

/// As [`run_trajectory`], calling `observe(n, u_n)` for `n = 0..=K`.
pub fn run_trajectory_with(
    cfg: &SchemeConfig,
    path: &BrownianPath,
    u0: &TorusField,
    mut observe: impl FnMut(usize, &TorusField),
) -> Result<TorusField> {
    cfg.validate(path)?;
    if u0.bandwidth() > cfg.bandwidth {
        return Err(Error::Config(format!(
            "initial bandwidth {} exceeds N={}",
            u0.bandwidth(),
            cfg.bandwidth
        )));
    }
    let view = cfg.path_view(path)?;
    let grid = path.grid();
    let h = grid.h_fine;
    let tau_steps = grid.steps_in(cfg.tau, "tau")?;
    let n_steps = cfg.steps();
    let n = cfg.bandwidth;

    let mut u = u0.resized(n);
    let mut cn = (cfg.scheme == Scheme::RelaxedCn).then(|| CnState::new(&u));
    observe(0, &u);
    for step in 0..n_steps {
        let start = step * tau_steps;
        let t_n = start as f64 * h;
        let db = view.increment_index(start, start + tau_steps);
        u = match cfg.scheme {
            Scheme::Sdlri => {
                let kernel = sdlri_kernel(&view, t_n, cfg.tau, n)?;
                step_sdlri(&u, &kernel, db, cfg.lambda)?
            }
            Scheme::Expeuler => {
                let kernel = expeuler_kernel(&view, t_n, cfg.tau, n)?;
                step_expeuler(&u, &kernel, db, cfg.lambda)?
            }
            Scheme::Lie => step_lie(&u, db, cfg.tau, cfg.lambda),
            Scheme::SplitstepRef => {
                let mid = start + tau_steps / 2;
                let first = view.increment_index(start, mid);
                let second = view.increment_index(mid, start + tau_steps);
                step_strang(&u, first, second, cfg.tau, cfg.lambda)
            }
            Scheme::RelaxedCn => {
                let state = cn.take().expect("CN state initialized");
                let (next, state) = step_relaxed_cn(&u, &state, db, cfg.tau, cfg.lambda, cfg.cn_tol, cfg.cn_max_iter)
                    .map_err(|e| match e {
                    Error::StepFailure {
                        residual, iterations, ..
                    } => Error::StepFailure {
                        step,
                        residual,
                        iterations,
                    },
                    other => other,
                })?;
                cn = Some(state);
                next
            }
        };
        if !u.is_finite() {
            return Err(Error::Divergence { step });
        }
        observe(step + 1, &u);
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::PathGrid;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn smooth_field(n: usize) -> TorusField {
        TorusField::from_fn(n, |k| {
            let d = (-(k as f64).abs() / 2.0).exp();
            c(0.1 * d, 0.05 * d * (k as f64).sin())
        })
    }

    #[test]
    fn sdlri_without_nonlinearity_is_free_flow() {
        let u = smooth_field(8);
        let path = BrownianPath::sample(1, 1.0, 1.0 / 64.0).unwrap();
        let wz = WongZakaiPath::new(&path, 1.0 / 16.0, Truncation::NONE).unwrap();
        let kt = sdlri_kernel(&wz, 0.0, 0.25, 8).unwrap();
        let db = wz.increment(0.0, 0.25).unwrap();
        assert_eq!(step_sdlri(&u, &kt, db, 0.0).unwrap(), free_propagate(&u, db));
    }

    #[test]
    fn flat_path_reduces_to_explicit_euler() {
        let u = smooth_field(6);
        let grid = PathGrid::new(1.0, 0.25).unwrap();
        let path = BrownianPath::from_samples(grid, vec![0.0; 5]).unwrap();
        let wz = WongZakaiPath::new(&path, 0.25, Truncation::NONE).unwrap();
        let tau = 0.25;
        let lambda = 1.3;
        let euler = &u + &cubic(&u).scaled(I * lambda * tau);
        let kt = sdlri_kernel(&wz, 0.0, tau, 6).unwrap();
        let jt = expeuler_kernel(&wz, 0.0, tau, 6).unwrap();
        let a = step_sdlri(&u, &kt, 0.0, lambda).unwrap();
        let b = step_expeuler(&u, &jt, 0.0, lambda).unwrap();
        assert!((&a - &euler).l2_norm() < 1e-15);
        assert!((&b - &euler).l2_norm() < 1e-15);
    }

    #[test]
    fn bandwidth_mismatch_is_rejected() {
        let path = BrownianPath::sample(1, 1.0, 0.25).unwrap();
        let wz = WongZakaiPath::new(&path, 0.25, Truncation::NONE).unwrap();
        let kt = sdlri_kernel(&wz, 0.0, 0.25, 4).unwrap();
        assert!(matches!(
            step_sdlri(&smooth_field(5), &kt, 0.0, 1.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            step_expeuler(&smooth_field(5), &kt, 0.0, 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn lie_examples() {
        let u = smooth_field(8);
        assert!((&step_lie(&u, 0.4, 0.1, 0.0) - &free_propagate(&u, 0.4)).l2_norm() < 1e-15);
        let z = c(0.3, 0.4);
        let out = step_lie(&TorusField::mode(4, 0, z), 0.9, 0.5, 2.0);
        let expect = z * Complex64::from_polar(1.0, 0.5 * 2.0 * z.norm_sqr());
        assert!((out.get(0) - expect).norm() < 1e-15);
        for k in 1..=4 {
            assert!(out.get(k).norm() < 1e-15);
        }
    }

    #[test]
    fn lie_mass_leak_is_bounded_by_tail() {
        let u = smooth_field(16);
        let out = step_lie(&u, 0.3, 0.1, 1.0);
        // phase rotation on a larger window preserves mass exactly
        let wide = step_lie(&u.resized(64), 0.3, 0.1, 1.0);
        let tail = (&wide - &wide.resized(16)).l2_norm();
        assert!((wide.l2_norm() - u.l2_norm()).abs() < 1e-14 + tail);
        assert!((out.l2_norm() - u.l2_norm()).abs() <= tail + 1e-14);
    }

    #[test]
    fn cn_linear_step_is_cayley() {
        let u = smooth_field(10);
        let state = CnState::new(&u);
        let db = 0.37;
        let (next, _) = step_relaxed_cn(&u, &state, db, 0.1, 0.0, 1e-14, 50).unwrap();
        for k in -10..=10i64 {
            let z = I * 0.5 * db * (k * k) as f64;
            let cayley = (1.0 - z) / (1.0 + z);
            assert!((cayley.norm() - 1.0).abs() < 1e-15);
            assert!((next.get(k) - cayley * u.get(k)).norm() < 1e-16);
        }
        assert_eq!(next.get(0), u.get(0));
        assert!((next.l2_norm() - u.l2_norm()).abs() < 1e-15);
    }

    #[test]
    fn cn_reports_non_convergence() {
        let u = smooth_field(6).scaled(c(50.0, 0.0));
        let state = CnState::new(&u);
        match step_relaxed_cn(&u, &state, 0.1, 1.0, 1.0, 1e-14, 5) {
            Err(Error::StepFailure {
                iterations, residual, ..
            }) => {
                assert_eq!(iterations, 5);
                assert!(residual > 1e-14);
            }
            other => panic!("expected step failure, got {other:?}"),
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("rk4".parse::<Scheme>().is_err());
    }

    #[test]
    fn config_commensurability() {
        let path = BrownianPath::sample(1, 1.2, 0.05).unwrap();
        let cfg = SchemeConfig::new(Scheme::Sdlri, 1.2, 0.3, 0.2, 4);
        match cfg.validate(&path) {
            Err(Error::Config(msg)) => assert!(msg.contains("does not divide tau"), "{msg}"),
            other => panic!("expected rejection, got {other:?}"),
        }
        let lie = SchemeConfig {
            scheme: Scheme::Lie,
            ..cfg
        };
        assert!(lie.validate(&path).is_ok());
        let path = BrownianPath::sample(1, 1.0, 1.0 / 64.0).unwrap();
        let mut cfg = SchemeConfig::new(Scheme::Sdlri, 1.0, 0.25, 1.0 / 16.0, 4);
        assert!(cfg.validate(&path).is_ok());
        cfg.tau = 0.3;
        assert!(cfg.validate(&path).is_err());
        cfg.tau = 0.25;
        cfg.lambda = f64::NAN;
        assert!(cfg.validate(&path).is_err());
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let path = BrownianPath::sample(3, 1.0, 1.0 / 16.0).unwrap();
        let mut cfg = SchemeConfig::new(Scheme::Sdlri, 1.0, 1.0 / 16.0, 1.0 / 16.0, 4);
        cfg.lambda = 1e6;
        let u0 = TorusField::from_fn(4, |_| c(1e3, 0.0));
        match run_trajectory(&cfg, &path, &u0) {
            Err(Error::Divergence { step }) => assert!(step < 16),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn single_step_trajectory_matches_step() {
        let path = BrownianPath::sample(4, 0.5, 1.0 / 64.0).unwrap();
        let u0 = smooth_field(8);
        let cfg = SchemeConfig::new(Scheme::Sdlri, 0.5, 0.5, 1.0 / 8.0, 8);
        let wz = WongZakaiPath::new(&path, 1.0 / 8.0, Truncation::NONE).unwrap();
        let kt = sdlri_kernel(&wz, 0.0, 0.5, 8).unwrap();
        let direct = step_sdlri(&u0, &kt, wz.increment(0.0, 0.5).unwrap(), 1.0).unwrap();
        assert_eq!(run_trajectory(&cfg, &path, &u0).unwrap(), direct);
    }
}
