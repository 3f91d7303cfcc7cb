#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wzlri_core::kernels::KernelTable;
use wzlri_core::{Complex64, TorusField};

pub fn dyadic(j: i32) -> f64 {
    (-(j as f64)).exp2()
}

/// Random coefficients with modulus decaying like `⟨k⟩^{-decay}`.
pub fn random_field(bandwidth: usize, decay: f64, scale: f64, seed: u64) -> TorusField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TorusField::from_fn(bandwidth, |k| {
        let w = (1.0 + (k * k) as f64).powf(-decay / 2.0);
        let re: f64 = rng.random_range(-1.0..1.0);
        let im: f64 = rng.random_range(-1.0..1.0);
        scale * w * Complex64::new(re, im)
    })
}

pub fn max_diff(a: &TorusField, b: &TorusField) -> f64 {
    let n = a.bandwidth().max(b.bandwidth()) as i64;
    (-n..=n).map(|k| (a.get(k) - b.get(k)).norm()).fold(0.0, f64::max)
}

/// `π_N(|u|²u)` by direct summation over `k₁ - k₂ + k₃ = k`.
pub fn direct_cubic(u: &TorusField) -> TorusField {
    let n = u.bandwidth() as i64;
    TorusField::from_fn(u.bandwidth(), |k| {
        let mut acc = Complex64::new(0.0, 0.0);
        for k1 in -n..=n {
            for k2 in -n..=n {
                let k3 = k - k1 + k2;
                if k3.abs() <= n {
                    acc += u.get(k1) * u.get(k2).conj() * u.get(k3);
                }
            }
        }
        acc
    })
}

/// One low-regularity step by direct summation:
/// `e^{-ik²Δb}(a_k + iλ Σ_{k₁+k₂-k₃=k} a_{k₁} a_{k₂} conj(a_{k₃}) I(k₃²))`.
pub fn direct_sdlri(u: &TorusField, kernel: &KernelTable, db: f64, lambda: f64) -> TorusField {
    let n = u.bandwidth() as i64;
    TorusField::from_fn(u.bandwidth(), |k| {
        let mut acc = Complex64::new(0.0, 0.0);
        for k1 in -n..=n {
            for k2 in -n..=n {
                let k3 = k1 + k2 - k;
                if k3.abs() <= n {
                    acc += u.get(k1) * u.get(k2) * u.get(k3).conj() * kernel.get(k3);
                }
            }
        }
        let inner = u.get(k) + Complex64::new(0.0, lambda) * acc;
        Complex64::from_polar(1.0, -((k * k) as f64) * db) * inner
    })
}

/// `e^{-ik²b}` applied mode by mode.
pub fn direct_free(u: &TorusField, b: f64) -> TorusField {
    TorusField::from_fn(u.bandwidth(), |k| {
        Complex64::from_polar(1.0, -((k * k) as f64) * b) * u.get(k)
    })
}

/// Taylor series of `(e^z - 1)/z` with enough terms for `|z| ≤ 1e-2`.
pub fn phi1_taylor(z: Complex64) -> Complex64 {
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for j in 2..20 {
        term = term * z / j as f64;
        sum += term;
    }
    sum
}
