//! Brownian paths on a uniform fine grid, their truncation, and the
//! piecewise-linear Wong–Zakai interpolant.
//!
//! Every time used by the solvers (knot spacing `δ`, step `τ`, reference
//! step) must be an integer multiple of the fine spacing `h_fine`, so coarse
//! and fine computations always see the same realization.

use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GRID_TOLERANCE: f64 = 1e-9;

/// Number of `unit`s in `span`, if `span` is an integer multiple of `unit`.
pub fn commensurate(span: f64, unit: f64) -> Option<usize> {
    if !(span.is_finite() && unit.is_finite()) || unit <= 0.0 || span < 0.0 {
        return None;
    }
    let ratio = span / unit;
    let n = ratio.round();
    ((ratio - n).abs() <= GRID_TOLERANCE * n.max(1.0)).then_some(n as usize)
}

/// Mixes a master seed and a sample index into an independent per-sample seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = master
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Horizon and fine spacing shared by all paths of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub horizon: f64,
    pub h_fine: f64,
}

impl PathGrid {
    pub fn new(horizon: f64, h_fine: f64) -> Result<Self> {
        if !(horizon > 0.0 && h_fine > 0.0) {
            return Err(Error::Config(format!(
                "horizon and fine spacing must be positive (T={horizon}, h_fine={h_fine})"
            )));
        }
        commensurate(horizon, h_fine)
            .ok_or_else(|| Error::Config(format!("T={horizon} is not a multiple of h_fine={h_fine}")))?;
        Ok(Self { horizon, h_fine })
    }

    /// Default fine spacing `2^-20 T`.
    pub fn dyadic(horizon: f64) -> Self {
        Self {
            horizon,
            h_fine: horizon * (-20f64).exp2(),
        }
    }

    pub fn steps(&self) -> usize {
        commensurate(self.horizon, self.h_fine).expect("validated grid")
    }

    /// Fine-grid index of a time, if it lies on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon * (1.0 + GRID_TOLERANCE)).contains(&t) {
            return Err(Error::Range {
                t,
                horizon: self.horizon,
            });
        }
        commensurate(t, self.h_fine)
            .ok_or_else(|| Error::Config(format!("time {t} is not on the fine grid (h_fine={})", self.h_fine)))
    }

    /// Number of fine steps in a span that must be a positive grid multiple.
    pub fn steps_in(&self, span: f64, what: &str) -> Result<usize> {
        match commensurate(span, self.h_fine) {
            Some(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!(
                "{what}={span} is not a positive multiple of h_fine={}",
                self.h_fine
            ))),
        }
    }
}

/// A seeded Brownian sample `W_j = B(j h_fine)`, `j = 0..=T/h_fine`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    seed: u64,
    grid: PathGrid,
    samples: Vec<f64>,
}

impl BrownianPath {
    pub fn sample(seed: u64, horizon: f64, h_fine: f64) -> Result<Self> {
        let grid = PathGrid::new(horizon, h_fine)?;
        Ok(Self::sample_on(seed, grid))
    }

    pub fn sample_on(seed: u64, grid: PathGrid) -> Self {
        let steps = grid.steps();
        let scale = grid.h_fine.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::with_capacity(steps + 1);
        let mut w = 0.0;
        samples.push(w);
        for _ in 0..steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            w += scale * z;
            samples.push(w);
        }
        Self { seed, grid, samples }
    }

    /// Wraps explicit samples; used for deterministic paths (linear, constant).
    pub fn from_samples(grid: PathGrid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.steps() + 1 {
            return Err(Error::Argument(format!(
                "expected {} samples, got {}",
                grid.steps() + 1,
                samples.len()
            )));
        }
        if samples[0] != 0.0 || samples.iter().any(|w| !w.is_finite()) {
            return Err(Error::Argument("path must start at 0 and be finite".into()));
        }
        Ok(Self { seed: 0, grid, samples })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> PathGrid {
        self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon
    }

    pub fn h_fine(&self) -> f64 {
        self.grid.h_fine
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn value_at_index(&self, j: usize) -> f64 {
        self.samples[j]
    }

    /// `B(t)` for a grid time `t`.
    pub fn value(&self, t: f64) -> Result<f64> {
        Ok(self.samples[self.grid.index_of(t)?])
    }

    /// Writes the `t,W` table at fine resolution.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_path_csv(writer, self.grid, |j| self.samples[j])
    }
}

/// Truncation level `R ∈ [1, +∞]`; `+∞` disables truncation.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Truncation(f64);

impl Truncation {
    pub const NONE: Truncation = Truncation(f64::INFINITY);

    pub fn new(r: f64) -> Result<Self> {
        if r >= 1.0 {
            Ok(Self(r))
        } else {
            Err(Error::Config(format!("truncation level must lie in [1, inf], got {r}")))
        }
    }

    pub fn level(self) -> f64 {
        self.0
    }

    pub fn is_none(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for Truncation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_none() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::str::FromStr for Truncation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "+inf" | "infinity" | "Inf" => Ok(Self::NONE),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::Argument(format!("bad truncation level '{other}'")))
                .and_then(Self::new),
        }
    }
}

impl Serialize for Truncation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_none() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Truncation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(r) => Truncation::new(r),
            Raw::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// `clamp(w, -R√t, R√t)`; the boundary is inclusive.
pub fn truncate_value(w: f64, t: f64, r: Truncation) -> f64 {
    if r.is_none() {
        return w;
    }
    let bound = r.0 * t.sqrt();
    w.clamp(-bound, bound)
}

/// Piecewise-linear interpolant of the truncated path with knot spacing `δ`.
#[derive(Debug, Clone, Copy)]
pub struct WongZakaiPath<'a> {
    base: &'a BrownianPath,
    delta: f64,
    knot_steps: usize,
    truncation: Truncation,
}

impl<'a> WongZakaiPath<'a> {
    pub fn new(base: &'a BrownianPath, delta: f64, truncation: Truncation) -> Result<Self> {
        let grid = base.grid();
        let knot_steps = grid.steps_in(delta, "delta")?;
        if !grid.steps().is_multiple_of(knot_steps) {
            return Err(Error::Config(format!(
                "delta={delta} does not divide T={}",
                grid.horizon
            )));
        }
        if !truncation.is_none() && delta < 1.0 {
            let r0 = (8.0 * delta.ln().abs()).sqrt().max(2.0 / std::f64::consts::E);
            if truncation.level() < r0 {
                log::warn!(
                    "truncation level {truncation} is below {r0:.3}; the sqrt(delta) path error bound needs R >= max(sqrt(8|ln delta|), 2/e)"
                );
            }
        }
        Ok(Self {
            base,
            delta,
            knot_steps,
            truncation,
        })
    }

    /// The identity interpolant: knots on every fine point, no truncation.
    pub fn raw(base: &'a BrownianPath) -> Self {
        Self {
            base,
            delta: base.h_fine(),
            knot_steps: 1,
            truncation: Truncation::NONE,
        }
    }

    pub fn base(&self) -> &'a BrownianPath {
        self.base
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Knot spacing in fine steps.
    pub fn knot_steps(&self) -> usize {
        self.knot_steps
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn grid(&self) -> PathGrid {
        self.base.grid()
    }

    /// `B^R(ℓδ)`.
    pub fn knot_value(&self, knot: usize) -> f64 {
        let j = knot * self.knot_steps;
        truncate_value(
            self.base.value_at_index(j),
            j as f64 * self.base.h_fine(),
            self.truncation,
        )
    }

    /// Interpolant at fine-grid index `j`; exact at knots.
    pub fn eval_index(&self, j: usize) -> f64 {
        let knot = j / self.knot_steps;
        let offset = j % self.knot_steps;
        let left = self.knot_value(knot);
        if offset == 0 {
            return left;
        }
        let right = self.knot_value(knot + 1);
        left + (offset as f64 / self.knot_steps as f64) * (right - left)
    }

    /// `B^{δ,R}(t)` for any `t ∈ [0, T]`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let horizon = self.base.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::Range { t, horizon });
        }
        let knots = self.base.grid().steps() / self.knot_steps;
        let scaled = t / self.delta;
        let mut knot = scaled.floor() as usize;
        if knot >= knots {
            knot = knots;
        }
        let left = self.knot_value(knot);
        let alpha = scaled - knot as f64;
        if knot == knots || alpha == 0.0 {
            return Ok(left);
        }
        Ok(left + alpha * (self.knot_value(knot + 1) - left))
    }

    pub fn increment(&self, s: f64, t: f64) -> Result<f64> {
        if s > t {
            return Err(Error::Argument(format!("increment needs s <= t, got s={s}, t={t}")));
        }
        Ok(self.eval(t)? - self.eval(s)?)
    }

    pub fn increment_index(&self, i: usize, j: usize) -> f64 {
        self.eval_index(j) - self.eval_index(i)
    }

    /// Writes the interpolant as a `t,W` table at fine resolution.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_path_csv(writer, self.grid(), |j| self.eval_index(j))
    }
}

fn write_path_csv<W: Write>(writer: W, grid: PathGrid, value: impl Fn(usize) -> f64) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "W"])?;
    for j in 0..=grid.steps() {
        let t = j as f64 * grid.h_fine;
        w.write_record([t.to_string(), value(j).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Parameters that reproduce a dumped path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathManifest {
    pub seed: u64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub h_fine: f64,
    pub delta: f64,
    #[serde(rename = "R")]
    pub truncation: Truncation,
}

/// Root-mean-square distance `√(E|B^{δ,R}(t) - B(t)|²)` over `n_samples` paths.
pub fn mc_path_error(
    grid: PathGrid,
    delta: f64,
    truncation: Truncation,
    t: f64,
    n_samples: usize,
    master_seed: u64,
) -> Result<f64> {
    if n_samples < 100 {
        return Err(Error::Argument(format!("need at least 100 samples, got {n_samples}")));
    }
    let j = grid.index_of(t)?;
    let probe = BrownianPath::from_samples(grid, vec![0.0; grid.steps() + 1])?;
    WongZakaiPath::new(&probe, delta, truncation)?;
    let squares: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|m| {
            let path = BrownianPath::sample_on(derive_seed(master_seed, m), grid);
            let wz = WongZakaiPath::new(&path, delta, truncation).expect("validated");
            (wz.eval_index(j) - path.value_at_index(j)).powi(2)
        })
        .collect();
    Ok((squares.iter().sum::<f64>() / n_samples as f64).sqrt())
}

/// For each `(s, t)` pair, `√(E|B^{δ,R}(t) - B^{δ,R}(s)|²)` over `n_samples` paths.
pub fn mc_increment_rms(
    grid: PathGrid,
    delta: f64,
    truncation: Truncation,
    pairs: &[(f64, f64)],
    n_samples: usize,
    master_seed: u64,
) -> Result<Vec<f64>> {
    let idx = pairs
        .iter()
        .map(|&(s, t)| {
            if s > t {
                return Err(Error::Argument(format!("pair needs s <= t, got ({s}, {t})")));
            }
            Ok((grid.index_of(s)?, grid.index_of(t)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let per_sample: Vec<Vec<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|m| {
            let path = BrownianPath::sample_on(derive_seed(master_seed, m), grid);
            let wz = WongZakaiPath::new(&path, delta, truncation).expect("validated");
            idx.iter().map(|&(i, j)| wz.increment_index(i, j).powi(2)).collect()
        })
        .collect();
    Ok((0..pairs.len())
        .map(|p| (per_sample.iter().map(|v| v[p]).sum::<f64>() / n_samples as f64).sqrt())
        .collect())
}
