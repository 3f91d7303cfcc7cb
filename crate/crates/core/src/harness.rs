//! Random low-regularity initial data, Monte Carlo and single-path
//! convergence sweeps, error tables and slope fits.
//!
//! Every study draws one Brownian path per sample from a seed derived from
//! `(master_seed, sample index)`, solves the reference once per sample, and
//! measures all schemes and step sizes against that single reference.
//! Per-sample squared errors are reduced in sample order, so any row can be
//! reproduced bit-for-bit by re-running it alone.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::{run_trajectory, PathSource, Scheme, SchemeConfig};
use crate::paths::{commensurate, derive_seed, BrownianPath, PathGrid, Truncation};
use crate::spectral::{SobolevIndex, TorusField};

/// Rows whose error is below this multiple of the reference's
/// self-consistency error are excluded from slope fits.
pub const FLOOR_FACTOR: f64 = 10.0;

/// Sobolev class of the random initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regularity {
    H2,
    H3,
    H4,
    Cinf,
}

impl Regularity {
    /// Algebraic decay exponent `θ = s + 0.51`; `None` for smooth data.
    pub fn theta(self) -> Option<f64> {
        match self {
            Regularity::H2 => Some(2.51),
            Regularity::H3 => Some(3.51),
            Regularity::H4 => Some(4.51),
            Regularity::Cinf => None,
        }
    }

    /// Modulus weight of mode `m` before rescaling: `⟨m⟩^{-θ}`, or `e^{-m²/2}` for smooth data.
    pub fn weight(self, m: i64) -> f64 {
        match self.theta() {
            Some(theta) => {
                let bracket = if m == 0 { 1.0 } else { m.unsigned_abs() as f64 };
                bracket.powf(-theta)
            }
            None => (-0.5 * (m * m) as f64).exp(),
        }
    }
}

impl fmt::Display for Regularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularity::H2 => "H2",
            Regularity::H3 => "H3",
            Regularity::H4 => "H4",
            Regularity::Cinf => "Cinf",
        })
    }
}

impl FromStr for Regularity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "H2" => Ok(Regularity::H2),
            "H3" => Ok(Regularity::H3),
            "H4" => Ok(Regularity::H4),
            "Cinf" | "Cinfty" | "smooth" => Ok(Regularity::Cinf),
            other => Err(Error::Argument(format!("unknown data label '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    #[serde(rename = "N")]
    pub bandwidth: usize,
    pub regularity: Regularity,
    pub target_l2: f64,
    pub seed: u64,
}

impl InitialDataSpec {
    pub fn new(bandwidth: usize, regularity: Regularity, seed: u64) -> Self {
        Self {
            bandwidth,
            regularity,
            target_l2: 0.1,
            seed,
        }
    }
}

/// `û_m = w(m) U_m` with `U_m` uniform on the unit square of `C`, rescaled to
/// the target L² norm.
pub fn make_initial_data(spec: &InitialDataSpec) -> Result<TorusField> {
    if !(spec.target_l2 > 0.0 && spec.target_l2.is_finite()) {
        return Err(Error::Argument(format!(
            "target norm must be positive, got {}",
            spec.target_l2
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let raw = TorusField::from_fn(spec.bandwidth, |m| {
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        spec.regularity.weight(m) * Complex64::new(a, b)
    });
    let norm = raw.l2_norm();
    if norm == 0.0 {
        return Err(Error::Argument("sampled data vanished".into()));
    }
    Ok(raw.scaled(Complex64::new(spec.target_l2 / norm, 0.0)))
}

/// Nearest `T·2^{-j}` (in log scale) to a requested time.
pub fn nearest_dyadic(t: f64, horizon: f64) -> f64 {
    let j = (horizon / t).log2().round().max(0.0);
    horizon * (-j).exp2()
}

/// Parameters shared by every study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyParams {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub h_fine: f64,
    #[serde(rename = "N")]
    pub bandwidth: usize,
    pub lambda: f64,
    #[serde(rename = "R")]
    pub truncation: Truncation,
    pub tau_ref: f64,
    /// Bandwidth of the reference solve (defaults to `N`).
    pub ref_bandwidth: usize,
    pub norm: SobolevIndex,
    pub data: InitialDataSpec,
    pub workers: usize,
    pub cn_tol: f64,
    pub cn_max_iter: usize,
}

impl StudyParams {
    /// Desk-scale defaults: `T = 1`, `N = 128`, `τ_ref = 2^-14 T`, `h_fine = 2^-20 T`, H¹ error.
    pub fn desk(data: Regularity) -> Self {
        let horizon = 1.0;
        let bandwidth = 128;
        Self {
            horizon,
            h_fine: PathGrid::dyadic(horizon).h_fine,
            bandwidth,
            lambda: 1.0,
            truncation: Truncation::NONE,
            tau_ref: horizon * (-14f64).exp2(),
            ref_bandwidth: bandwidth,
            norm: SobolevIndex::H1,
            data: InitialDataSpec::new(bandwidth, data, 1),
            workers: 1,
            cn_tol: 1e-12,
            cn_max_iter: 200,
        }
    }

    /// `N = 512`, `N_ref = 1024`, `τ_ref = 2^-13 T`. Slow.
    pub fn large_scale(data: Regularity) -> Self {
        let mut p = Self::desk(data);
        p.bandwidth = 512;
        p.ref_bandwidth = 1024;
        p.tau_ref = nearest_dyadic(1e-4, p.horizon);
        p.data.bandwidth = 512;
        p
    }

    pub fn grid(&self) -> Result<PathGrid> {
        PathGrid::new(self.horizon, self.h_fine)
    }

    fn scheme_config(&self, scheme: Scheme, tau: f64, delta: f64, source: PathSource) -> SchemeConfig {
        SchemeConfig {
            scheme,
            horizon: self.horizon,
            tau,
            delta,
            truncation: self.truncation,
            bandwidth: self.bandwidth,
            lambda: self.lambda,
            path_source: source,
            cn_tol: self.cn_tol,
            cn_max_iter: self.cn_max_iter,
        }
    }

    fn reference_config(&self, tau: f64, delta: f64, source: PathSource) -> SchemeConfig {
        SchemeConfig {
            bandwidth: self.ref_bandwidth,
            ..self.scheme_config(Scheme::SplitstepRef, tau, delta, source)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub scheme: Scheme,
    pub tau: f64,
    pub delta: f64,
    #[serde(rename = "N")]
    pub bandwidth: usize,
    pub s: f64,
    #[serde(rename = "M")]
    pub samples: usize,
    pub error: f64,
    pub seed: u64,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    Tau,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS deviation of `log(error)` from the fitted line.
    pub residual: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    /// Mean-square distance between the reference at `τ_ref` and at `2τ_ref`.
    pub reference_floor: f64,
}

impl ErrorTable {
    pub fn filter(&self, keep: impl Fn(&ErrorRow) -> bool) -> ErrorTable {
        ErrorTable {
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
            reference_floor: self.reference_floor,
        }
    }

    pub fn for_scheme(&self, scheme: Scheme) -> ErrorTable {
        self.filter(|r| r.scheme == scheme)
    }

    /// Errors of one scheme in row order (invalid rows as NaN).
    pub fn errors(&self, scheme: Scheme) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme)
            .map(|r| r.error)
            .collect()
    }

    pub fn fit_slope(&self, scheme: Scheme, sweep: Sweep) -> Result<SlopeFit> {
        let floor = FLOOR_FACTOR * self.reference_floor;
        let points: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.scheme == scheme && r.valid && r.error > 0.0 && r.error.is_finite())
            .filter(|r| r.error >= floor)
            .map(|r| {
                let x = match sweep {
                    Sweep::Tau => r.tau,
                    Sweep::Delta => r.delta,
                };
                (x.ln(), r.error.ln())
            })
            .collect();
        fit_loglog(&points).ok_or_else(|| {
            Error::InsufficientData(format!(
                "{scheme}: {} usable rows above the reference floor, need 3",
                points.len()
            ))
        })
    }

    /// Writes `scheme,tau,delta,N,s,M,error,seed,valid`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let rows = r.deserialize().collect::<std::result::Result<Vec<ErrorRow>, _>>()?;
        Ok(Self {
            rows,
            reference_floor: 0.0,
        })
    }
}

/// Least squares line through `(x, y)` points; `None` with fewer than three.
fn fit_loglog(points: &[(f64, f64)]) -> Option<SlopeFit> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Some(SlopeFit {
        slope,
        intercept,
        residual,
        points: points.len(),
    })
}

/// One measured configuration of a study.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Run {
    scheme: Scheme,
    tau: f64,
    delta: f64,
}

#[derive(Debug, Clone, Copy)]
struct ReferenceSpec {
    source: PathSource,
    delta: f64,
}

struct SampleOutcome {
    squared: Vec<std::result::Result<f64, String>>,
    floor_squared: f64,
}

fn run_parallel<T: Send>(workers: usize, count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(f).collect()))
}

fn run_study(
    params: &StudyParams,
    runs: &[Run],
    reference: ReferenceSpec,
    path_seeds: &[u64],
    row_seed: u64,
) -> Result<ErrorTable> {
    let grid = params.grid()?;
    let u0 = make_initial_data(&params.data)?;
    let probe = BrownianPath::from_samples(grid, vec![0.0; grid.steps() + 1])?;
    let ref_cfg = params.reference_config(params.tau_ref, reference.delta, reference.source);
    ref_cfg.validate(&probe)?;
    let coarse_ref_cfg = SchemeConfig {
        tau: 2.0 * params.tau_ref,
        ..ref_cfg.clone()
    };
    let configs: Vec<SchemeConfig> = runs
        .iter()
        .map(|r| params.scheme_config(r.scheme, r.tau, r.delta, PathSource::WongZakai))
        .collect();
    for cfg in &configs {
        cfg.validate(&probe)?;
    }

    let outcomes = run_parallel(params.workers, path_seeds.len(), |i| -> Result<SampleOutcome> {
        let path = BrownianPath::sample_on(path_seeds[i], grid);
        let reference = run_trajectory(&ref_cfg, &path, &u0)?;
        let coarse = run_trajectory(&coarse_ref_cfg, &path, &u0)?;
        let floor_squared = (&reference - &coarse).sobolev_norm(params.norm).powi(2);
        let squared = configs
            .iter()
            .map(|cfg| {
                run_trajectory(cfg, &path, &u0)
                    .map(|u| (&reference - &u).sobolev_norm(params.norm).powi(2))
                    .map_err(|e| e.to_string())
            })
            .collect();
        Ok(SampleOutcome { squared, floor_squared })
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let m = path_seeds.len() as f64;
    let rows = runs
        .iter()
        .enumerate()
        .map(|(j, run)| {
            let mut total = 0.0;
            let mut valid = true;
            for (i, out) in outcomes.iter().enumerate() {
                match &out.squared[j] {
                    Ok(e2) => total += e2,
                    Err(msg) => {
                        log::warn!("{} tau={} delta={} sample {i}: {msg}", run.scheme, run.tau, run.delta);
                        valid = false;
                    }
                }
            }
            ErrorRow {
                scheme: run.scheme,
                tau: run.tau,
                delta: run.delta,
                bandwidth: params.bandwidth,
                s: params.norm.value(),
                samples: path_seeds.len(),
                error: if valid { (total / m).sqrt() } else { f64::NAN },
                seed: row_seed,
                valid,
            }
        })
        .collect();
    let reference_floor = (outcomes.iter().map(|o| o.floor_squared).sum::<f64>() / m).sqrt();
    Ok(ErrorTable { rows, reference_floor })
}

fn sorted_desc(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn tau_runs(schemes: &[Scheme], taus: &[f64], delta: f64) -> Vec<Run> {
    let taus = sorted_desc(taus);
    schemes
        .iter()
        .flat_map(|&scheme| taus.iter().map(move |&tau| Run { scheme, tau, delta }))
        .collect()
}

/// Mean-square `H^s` error at `T` against the split-step reference on the same
/// Wong–Zakai path, over `samples` paths.
pub fn strong_error_study(
    params: &StudyParams,
    schemes: &[Scheme],
    taus: &[f64],
    delta: f64,
    samples: usize,
    master_seed: u64,
) -> Result<ErrorTable> {
    if samples < 2 {
        return Err(Error::Argument(format!(
            "strong study needs at least 2 samples, got {samples}"
        )));
    }
    let seeds: Vec<u64> = (0..samples as u64).map(|i| derive_seed(master_seed, i)).collect();
    run_study(
        params,
        &tau_runs(schemes, taus, delta),
        ReferenceSpec {
            source: PathSource::WongZakai,
            delta,
        },
        &seeds,
        master_seed,
    )
}

/// `H^s` error at `T` along the single path drawn from `seed`.
pub fn pathwise_study(
    params: &StudyParams,
    schemes: &[Scheme],
    taus: &[f64],
    delta: f64,
    seed: u64,
) -> Result<ErrorTable> {
    run_study(
        params,
        &tau_runs(schemes, taus, delta),
        ReferenceSpec {
            source: PathSource::WongZakai,
            delta,
        },
        &[seed],
        seed,
    )
}

/// The low-regularity scheme at each `(τ, δ)` against the split-step reference
/// driven by the raw Brownian path, in mean square over `samples` paths.
///
/// Pairs where neither of `τ`, `δ` divides the other are rejected.
pub fn delta_study(
    params: &StudyParams,
    deltas: &[f64],
    taus: &[f64],
    samples: usize,
    master_seed: u64,
) -> Result<ErrorTable> {
    if samples < 1 {
        return Err(Error::Argument("delta study needs at least one sample".into()));
    }
    let deltas = sorted_desc(deltas);
    let mut runs = Vec::new();
    for &tau in &sorted_desc(taus) {
        for &delta in &deltas {
            if commensurate(tau, delta).is_none() && commensurate(delta, tau).is_none() {
                return Err(Error::Config(format!("delta={delta} and tau={tau} are not nested")));
            }
            runs.push(Run {
                scheme: Scheme::Sdlri,
                tau,
                delta,
            });
        }
    }
    let seeds: Vec<u64> = (0..samples as u64).map(|i| derive_seed(master_seed, i)).collect();
    run_study(
        params,
        &runs,
        ReferenceSpec {
            source: PathSource::RawBrownian,
            delta: params.h_fine,
        },
        &seeds,
        master_seed,
    )
}

/// Everything needed to regenerate a study table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub kind: String,
    pub params: StudyParams,
    pub schemes: Vec<Scheme>,
    pub taus: Vec<f64>,
    pub deltas: Vec<f64>,
    pub samples: usize,
    pub master_seed: u64,
    pub reference_floor: f64,
    pub slopes: Vec<SlopeRecord>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRecord {
    pub scheme: Scheme,
    pub sweep: Sweep,
    /// Fixed value of the other sweep variable, if the table mixes several.
    pub fixed: Option<f64>,
    pub fit: Option<SlopeFit>,
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
