//! Periodic fields on the torus `R / 2πZ` stored by their Fourier coefficients.
//!
//! A [`TorusField`] of bandwidth `N` holds `a_k` for `k = -N..=N` and represents
//! `u(x) = Σ a_k e^{ikx}`. Norms use plain coefficients:
//! `‖u‖²_{L²} = Σ |a_k|²` and `‖u‖²_{H^s} = Σ (1 + |k|^{2s}) |a_k|²`.

use std::cell::RefCell;
use std::io::{Read, Write};
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

thread_local! {
    // Plans are cached per thread so trajectory workers never share mutable FFT state.
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Debug, Clone, PartialEq)]
pub struct TorusField {
    bandwidth: usize,
    coeffs: Vec<Complex64>,
}

impl TorusField {
    pub fn zeros(bandwidth: usize) -> Self {
        Self {
            bandwidth,
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * bandwidth + 1],
        }
    }

    /// Builds a field from coefficients ordered `a_{-N}, ..., a_N`.
    pub fn from_coeffs(bandwidth: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != 2 * bandwidth + 1 {
            return Err(Error::Argument(format!(
                "expected {} coefficients for bandwidth {bandwidth}, got {}",
                2 * bandwidth + 1,
                coeffs.len()
            )));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::Argument(format!(
                "coefficient k={} is not finite",
                i as i64 - bandwidth as i64
            )));
        }
        Ok(Self { bandwidth, coeffs })
    }

    pub fn from_fn(bandwidth: usize, mut f: impl FnMut(i64) -> Complex64) -> Self {
        let n = bandwidth as i64;
        Self {
            bandwidth,
            coeffs: (-n..=n).map(&mut f).collect(),
        }
    }

    /// A field with a single nonzero mode.
    pub fn mode(bandwidth: usize, k: i64, value: Complex64) -> Self {
        let mut f = Self::zeros(bandwidth);
        f.set(k, value);
        f
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient `a_k`; zero outside the stored window.
    pub fn get(&self, k: i64) -> Complex64 {
        if k.unsigned_abs() as usize > self.bandwidth {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + self.bandwidth as i64) as usize]
        }
    }

    /// Sets `a_k`. Panics if `|k| > N`.
    pub fn set(&mut self, k: i64, value: Complex64) {
        assert!(
            k.unsigned_abs() as usize <= self.bandwidth,
            "mode {k} outside bandwidth {}",
            self.bandwidth
        );
        self.coeffs[(k + self.bandwidth as i64) as usize] = value;
    }

    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let n = self.bandwidth as i64;
        self.coeffs.iter().enumerate().map(move |(i, &c)| (i as i64 - n, c))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Same field with bandwidth changed: higher modes are dropped or zero-filled.
    pub fn resized(&self, bandwidth: usize) -> Self {
        Self::from_fn(bandwidth, |k| self.get(k))
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn sobolev_norm(&self, s: SobolevIndex) -> f64 {
        self.modes()
            .map(|(k, c)| sobolev_weight(k, s) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            bandwidth: self.bandwidth,
            coeffs: self.coeffs.iter().map(|a| a * c).collect(),
        }
    }

    fn zip_with(&self, other: &Self, op: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        let n = self.bandwidth.max(other.bandwidth);
        Self::from_fn(n, |k| op(self.get(k), other.get(k)))
    }
}

impl Add for &TorusField {
    type Output = TorusField;
    fn add(self, rhs: &TorusField) -> TorusField {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &TorusField {
    type Output = TorusField;
    fn sub(self, rhs: &TorusField) -> TorusField {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul<Complex64> for &TorusField {
    type Output = TorusField;
    fn mul(self, rhs: Complex64) -> TorusField {
        self.scaled(rhs)
    }
}

/// Exponent `s ≥ 0` of a Sobolev norm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SobolevIndex(f64);

impl SobolevIndex {
    pub const L2: SobolevIndex = SobolevIndex(0.0);
    pub const H1: SobolevIndex = SobolevIndex(1.0);
    pub const H2: SobolevIndex = SobolevIndex(2.0);

    pub fn new(s: f64) -> Result<Self> {
        if s.is_finite() && s >= 0.0 {
            Ok(Self(s))
        } else {
            Err(Error::Argument(format!("Sobolev index must be >= 0, got {s}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SobolevIndex {
    type Error = Error;
    fn try_from(s: f64) -> Result<Self> {
        Self::new(s)
    }
}

impl From<SobolevIndex> for f64 {
    fn from(s: SobolevIndex) -> f64 {
        s.0
    }
}

fn sobolev_weight(k: i64, s: SobolevIndex) -> f64 {
    if k == 0 {
        1.0
    } else {
        1.0 + (k.unsigned_abs() as f64).powf(2.0 * s.0)
    }
}

/// Smallest power of two `≥ 4N + 2`; products of three band-`N` fields
/// computed on this grid carry no aliasing into `|k| ≤ N`.
pub fn dealiased_grid_size(bandwidth: usize) -> usize {
    (4 * bandwidth + 2).next_power_of_two()
}

/// Values `u(2πj/M)`, `j = 0..M`, by zero-padded inverse DFT.
pub fn to_physical(f: &TorusField, grid: usize) -> Result<Vec<Complex64>> {
    let n = f.bandwidth;
    if grid < 2 * n + 1 {
        return Err(Error::Size { grid, bandwidth: n });
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); grid];
    for (k, c) in f.modes() {
        buf[k.rem_euclid(grid as i64) as usize] = c;
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(grid).process(&mut buf));
    Ok(buf)
}

/// Forward DFT of grid values, keeping `|k| ≤ N`.
pub fn to_spectral(values: &[Complex64], bandwidth: usize) -> Result<TorusField> {
    let mut buf = values.to_vec();
    spectral_in_place(&mut buf, bandwidth)
}

fn spectral_in_place(buf: &mut [Complex64], bandwidth: usize) -> Result<TorusField> {
    let grid = buf.len();
    if grid < 2 * bandwidth + 1 {
        return Err(Error::Size { grid, bandwidth });
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(grid).process(buf));
    let scale = 1.0 / grid as f64;
    Ok(TorusField::from_fn(bandwidth, |k| {
        buf[k.rem_euclid(grid as i64) as usize] * scale
    }))
}

pub fn galerkin_project(f: &TorusField, bandwidth: usize) -> TorusField {
    TorusField::from_fn(f.bandwidth, |k| {
        if k.unsigned_abs() as usize <= bandwidth {
            f.get(k)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

pub fn sobolev_norm(f: &TorusField, s: SobolevIndex) -> f64 {
    f.sobolev_norm(s)
}

pub fn l2_norm(f: &TorusField) -> f64 {
    f.l2_norm()
}

/// `e^{ibΔ} f`, i.e. `a_k ↦ e^{-ik²b} a_k`.
pub fn free_propagate(f: &TorusField, b: f64) -> TorusField {
    apply_multiplier(f, |k| Complex64::from_polar(1.0, -((k * k) as f64) * b))
}

pub fn apply_multiplier(f: &TorusField, mut m: impl FnMut(i64) -> Complex64) -> TorusField {
    TorusField::from_fn(f.bandwidth, |k| m(k) * f.get(k))
}

/// Coefficients of the complex conjugate field: `b_k = conj(a_{-k})`.
pub fn conjugate(f: &TorusField) -> TorusField {
    TorusField::from_fn(f.bandwidth, |k| f.get(-k).conj())
}

/// Galerkin-truncated pointwise product of fields, evaluated on a padded grid.
///
/// `combine` receives the physical values of each input at one grid point.
/// The result is exact (alias-free) whenever the total degree of `combine`
/// is at most three in band-`N` inputs.
pub fn pointwise<const K: usize>(
    inputs: [&TorusField; K],
    bandwidth: usize,
    combine: impl Fn([Complex64; K]) -> Complex64,
) -> TorusField {
    let widest = inputs.iter().map(|f| f.bandwidth).max().unwrap_or(0);
    let grid = dealiased_grid_size(widest.max(bandwidth));
    let values: Vec<Vec<Complex64>> = inputs
        .iter()
        .map(|f| to_physical(f, grid).expect("padded grid holds bandwidth"))
        .collect();
    let mut out: Vec<Complex64> = (0..grid)
        .map(|j| combine(std::array::from_fn(|i| values[i][j])))
        .collect();
    spectral_in_place(&mut out, bandwidth).expect("padded grid holds bandwidth")
}

/// `π_N(|u|²u)`, alias-free.
pub fn cubic(f: &TorusField) -> TorusField {
    pointwise([f], f.bandwidth, |[u]| u * u.norm_sqr())
}

const PHI1_SERIES_RADIUS: f64 = 1e-4;

/// `φ₁(z) = (e^z - 1)/z`, `φ₁(0) = 1`.
pub fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < PHI1_SERIES_RADIUS {
        phi1_series(z)
    } else {
        expm1(z) / z
    }
}

// Σ_{j=0}^{6} z^j/(j+1)!, Horner form
fn phi1_series(z: Complex64) -> Complex64 {
    const C: [f64; 7] = [
        1.0,
        1.0 / 2.0,
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 120.0,
        1.0 / 720.0,
        1.0 / 5040.0,
    ];
    C.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// `e^z - 1` without cancellation for small `|z|`.
fn expm1(z: Complex64) -> Complex64 {
    let (x, y) = (z.re, z.im);
    let half_sin = (0.5 * y).sin();
    Complex64::new(x.exp_m1() * y.cos() - 2.0 * half_sin * half_sin, x.exp() * y.sin())
}

#[derive(Debug, Serialize, Deserialize)]
struct ModeRecord {
    k: i64,
    re: f64,
    im: f64,
}

/// Writes the `k,re,im` table of a field.
pub fn write_field_csv<W: Write>(f: &TorusField, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (k, c) in f.modes() {
        w.serialize(ModeRecord { k, re: c.re, im: c.im })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `k,re,im` table. Bandwidth is the largest `|k|` present; absent modes are zero.
pub fn read_field_csv<R: Read>(reader: R) -> Result<TorusField> {
    let mut r = csv::Reader::from_reader(reader);
    let records: Vec<ModeRecord> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    let n = records.iter().map(|m| m.k.unsigned_abs() as usize).max().unwrap_or(0);
    let mut f = TorusField::zeros(n);
    for m in records {
        f.set(m.k, Complex64::new(m.re, m.im));
    }
    if !f.is_finite() {
        return Err(Error::Argument("field table contains non-finite values".into()));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_close(a: Complex64, b: Complex64, tol: f64) {
        assert!((a - b).norm() <= tol, "{a} vs {b}");
    }

    #[test]
    fn constant_field_to_physical() {
        let f = TorusField::mode(1, 0, c(1.0, 0.0));
        for v in to_physical(&f, 4).unwrap() {
            assert_close(v, c(1.0, 0.0), 1e-15);
        }
    }

    #[test]
    fn first_mode_at_quarter_points() {
        let f = TorusField::mode(1, 1, c(1.0, 0.0));
        let v = to_physical(&f, 4).unwrap();
        let expect = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for (a, b) in v.iter().zip(expect) {
            assert_close(*a, b, 1e-15);
        }
    }

    #[test]
    fn undersized_grid_is_rejected() {
        let f = TorusField::zeros(3);
        assert!(matches!(to_physical(&f, 6), Err(Error::Size { .. })));
        assert!(matches!(to_spectral(&[c(0.0, 0.0); 6], 3), Err(Error::Size { .. })));
    }

    #[test]
    fn projection_edges() {
        let f = TorusField::from_fn(4, |k| c(k as f64, 1.0));
        assert_eq!(galerkin_project(&f, 4), f);
        assert_eq!(galerkin_project(&f, 9), f);
        let p = galerkin_project(&f, 0);
        assert_eq!(p.get(0), c(0.0, 1.0));
        assert!(p.modes().filter(|(k, _)| *k != 0).all(|(_, v)| v == c(0.0, 0.0)));
        assert_eq!(galerkin_project(&galerkin_project(&f, 2), 2), galerkin_project(&f, 2));
    }

    #[test]
    fn sobolev_examples() {
        let f = TorusField::mode(3, 1, c(1.0, 0.0));
        assert!((f.sobolev_norm(SobolevIndex::H1) - 2f64.sqrt()).abs() < 1e-15);
        let g = TorusField::mode(3, 0, c(1.0, 0.0));
        for s in [0.0, 0.5, 1.0, 3.7] {
            assert_eq!(g.sobolev_norm(SobolevIndex::new(s).unwrap()), 1.0);
        }
        let h = TorusField::from_fn(5, |k| c(1.0 / (1 + k * k) as f64, k as f64));
        let z = c(-2.0, 0.5);
        let s = SobolevIndex::new(1.5).unwrap();
        assert!((h.scaled(z).sobolev_norm(s) - z.norm() * h.sobolev_norm(s)).abs() < 1e-13);
        assert!(SobolevIndex::new(-0.1).is_err());
    }

    #[test]
    fn free_propagation_examples() {
        let f = TorusField::from_fn(3, |k| c(k as f64, 2.0));
        assert_eq!(free_propagate(&f, 0.0), f);
        let g = free_propagate(&TorusField::mode(2, 1, c(1.0, 0.0)), PI);
        assert_close(g.get(1), c(-1.0, 0.0), 1e-15);
    }

    #[test]
    fn cubic_examples() {
        let z = c(0.3, -0.7);
        let f = TorusField::mode(4, 0, z);
        assert_close(cubic(&f).get(0), z * z.norm_sqr(), 1e-15);
        let g = cubic(&TorusField::mode(4, 1, c(1.0, 0.0)));
        for (k, v) in g.modes() {
            let expect = if k == 1 { c(1.0, 0.0) } else { c(0.0, 0.0) };
            assert_close(v, expect, 1e-14);
        }
    }

    #[test]
    fn multiplier_examples() {
        let f = TorusField::from_fn(4, |k| c(1.0, k as f64));
        assert_eq!(apply_multiplier(&f, |_| c(1.0, 0.0)), f);
        let b = 0.37;
        let a = apply_multiplier(&f, |k| Complex64::from_polar(1.0, -((k * k) as f64) * b));
        assert_eq!(a, free_propagate(&f, b));
        let p = apply_multiplier(&f, |k| if k == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        assert_eq!(p, galerkin_project(&f, 0));
    }

    #[test]
    fn conjugate_examples() {
        let f = TorusField::mode(2, 1, c(0.0, 1.0));
        let g = conjugate(&f);
        assert_eq!(g.get(-1), c(0.0, -1.0));
        assert_eq!(g.get(1), c(0.0, 0.0));
        let sym = TorusField::from_fn(3, |k| c(1.0 / (1.0 + (k * k) as f64), k as f64));
        assert_eq!(conjugate(&sym), sym);
        let h = TorusField::from_fn(3, |k| c(k as f64, (k * k) as f64 - 1.0));
        assert_eq!(conjugate(&conjugate(&h)), h);
    }

    #[test]
    fn phi1_examples() {
        assert_eq!(phi1(c(0.0, 0.0)), c(1.0, 0.0));
        assert_close(phi1(c(0.0, PI)), c(0.0, 2.0 / PI), 1e-15);
        assert_close(phi1(c(1.0, 0.0)), c(std::f64::consts::E - 1.0, 0.0), 1e-15);
    }

    #[test]
    fn phi1_branches_agree_at_threshold() {
        for angle in [0.0, 0.3, 1.0, PI / 2.0, 2.5, PI, 4.0, 5.5] {
            let z = Complex64::from_polar(PHI1_SERIES_RADIUS, angle);
            let series = phi1_series(z);
            let closed = expm1(z) / z;
            assert!(((series - closed) / closed).norm() < 1e-14, "angle {angle}");
        }
    }

    #[test]
    fn phi1_matches_high_precision_closed_form() {
        // Purely imaginary arguments: φ₁(iθ) = e^{iθ/2} sin(θ/2)/(θ/2).
        for theta in [1e-6, 1e-4, 3e-3, 0.1, 1.0, 17.0, 999.0] {
            let exact = Complex64::from_polar(1.0, theta / 2.0) * ((theta / 2.0).sin() / (theta / 2.0));
            let got = phi1(c(0.0, theta));
            assert!(((got - exact) / exact).norm() < 1e-14, "theta {theta}");
        }
    }

    #[test]
    fn field_csv_round_trip() {
        let f = TorusField::from_fn(3, |k| c(0.1 * k as f64, 1.0 / 3.0));
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("k,re,im\n-3,"));
        assert_eq!(read_field_csv(buf.as_slice()).unwrap(), f);
    }

    #[test]
    fn from_coeffs_validates() {
        assert!(TorusField::from_coeffs(1, vec![c(0.0, 0.0); 2]).is_err());
        assert!(TorusField::from_coeffs(0, vec![c(f64::NAN, 0.0)]).is_err());
        assert!(TorusField::from_coeffs(0, vec![c(1.0, 0.0)]).is_ok());
    }
}
