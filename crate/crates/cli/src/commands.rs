use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use wzlri_core::harness::{
    delta_study, make_initial_data, pathwise_study, strong_error_study, ErrorTable, InitialDataSpec, Regularity,
    SlopeRecord, StudyManifest, StudyParams, Sweep, VERSION,
};
use wzlri_core::paths::{PathGrid, PathManifest};
use wzlri_core::spectral::{free_propagate, read_field_csv, write_field_csv};
use wzlri_core::{
    run_trajectory, BrownianPath, PathSource, Scheme, SchemeConfig, SobolevIndex, TorusField, Truncation, WongZakaiPath,
};

use crate::manifest::RunManifest;
use crate::settings::{Resolver, Snap};
use crate::{CliError, StudyKind};

fn dyadic(horizon: f64, j: i32) -> f64 {
    horizon * (-(j as f64)).exp2()
}

fn out_dir(r: &mut Resolver) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(r.value("out", "wzlri-out".to_string())?);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn grid(r: &mut Resolver) -> Result<PathGrid, CliError> {
    let horizon = r.value("T", 1.0f64)?;
    let h = r.time("h-fine", PathGrid::dyadic(horizon).h_fine, Snap::Dyadic(horizon))?;
    Ok(PathGrid::new(horizon, h)?)
}

struct Trajectory {
    cfg: SchemeConfig,
    path: BrownianPath,
    u0: TorusField,
}

fn trajectory(r: &mut Resolver) -> Result<Trajectory, CliError> {
    let grid = grid(r)?;
    let fine = Snap::Grid(grid.h_fine);
    let scheme = r.value("scheme", Scheme::Sdlri)?;
    let tau = r.time("tau", dyadic(grid.horizon, 8), fine)?;
    let delta = r.time("delta", dyadic(grid.horizon, 12), fine)?;
    let truncation = r.value("R", Truncation::NONE)?;
    let bandwidth = r.value("N", 128usize)?;
    let lambda = r.value("lambda", 1.0f64)?;
    let path_source = r
        .value("path-source", "wong_zakai".to_string())?
        .parse::<PathSource>()?;
    let seed = r.value("seed", 0u64)?;
    let data = r.value("data", Regularity::H2)?;
    let data_seed = r.value("data-seed", 1u64)?;

    let cfg = SchemeConfig {
        truncation,
        lambda,
        path_source,
        ..SchemeConfig::new(scheme, grid.horizon, tau, delta, bandwidth)
    };
    let path = BrownianPath::sample_on(seed, grid);
    cfg.validate(&path)?;
    let u0 = make_initial_data(&InitialDataSpec::new(bandwidth, data, data_seed))?;
    Ok(Trajectory { cfg, path, u0 })
}

pub fn simulate(r: &mut Resolver) -> Result<RunManifest, CliError> {
    let t = trajectory(r)?;
    let dir = out_dir(r)?;
    let u = run_trajectory(&t.cfg, &t.path, &t.u0)?;

    let initial = dir.join("initial.csv");
    let field = dir.join("field.csv");
    write_field_csv(&t.u0, create(&initial)?)?;
    write_field_csv(&u, create(&field)?)?;
    println!(
        "{} steps of {}: |u(T)|_L2 = {:.12e}, |u0|_L2 = {:.12e}",
        t.cfg.steps(),
        t.cfg.scheme,
        u.l2_norm(),
        t.u0.l2_norm()
    );

    let mut manifest = RunManifest::new("simulate", r.resolved().clone(), t.path.seed());
    manifest.outputs = vec![initial, field, dir.join("manifest.json")];
    manifest.write(&dir.join("manifest.json"))?;
    Ok(manifest)
}

pub fn paths(r: &mut Resolver) -> Result<RunManifest, CliError> {
    let grid = grid(r)?;
    let seed = r.value("seed", 0u64)?;
    let raw = r.value("raw", false)?;
    let delta = r.time("delta", grid.h_fine, Snap::Grid(grid.h_fine))?;
    let truncation = r.value("R", Truncation::NONE)?;
    let dir = out_dir(r)?;

    let path = BrownianPath::sample_on(seed, grid);
    let file = dir.join("path.csv");
    if raw {
        path.write_csv(create(&file)?)?;
    } else {
        WongZakaiPath::new(&path, delta, truncation)?.write_csv(create(&file)?)?;
    }
    let path_manifest = dir.join("path.json");
    let record = PathManifest {
        seed,
        horizon: grid.horizon,
        h_fine: grid.h_fine,
        delta: if raw { grid.h_fine } else { delta },
        truncation: if raw { Truncation::NONE } else { truncation },
    };
    serde_json::to_writer_pretty(create(&path_manifest)?, &record).map_err(wzlri_core::Error::from)?;
    println!("wrote {} points to {}", grid.steps() + 1, file.display());

    let mut manifest = RunManifest::new("paths", r.resolved().clone(), seed);
    manifest.outputs = vec![file, path_manifest, dir.join("manifest.json")];
    manifest.write(&dir.join("manifest.json"))?;
    Ok(manifest)
}

pub fn study(kind: StudyKind, r: &mut Resolver) -> Result<RunManifest, CliError> {
    let grid = grid(r)?;
    let horizon = grid.horizon;
    let dyadic_snap = Snap::Dyadic(horizon);
    let default_data = match kind {
        StudyKind::Deterministic => Regularity::Cinf,
        _ => Regularity::H2,
    };
    let data = r.value("data", default_data)?;
    let large = match r.value("scale", "desk".to_string())?.as_str() {
        "desk" => false,
        "large" => true,
        other => {
            return Err(CliError::Usage(format!(
                "unknown --scale '{other}', expected desk or large"
            )))
        }
    };
    let base = if large {
        StudyParams::large_scale(data)
    } else {
        StudyParams::desk(data)
    };
    let mut params = base.clone();
    params.horizon = horizon;
    params.h_fine = grid.h_fine;
    params.bandwidth = r.value("N", base.bandwidth)?;
    params.ref_bandwidth = r.value("n-ref", base.ref_bandwidth.max(params.bandwidth))?;
    params.lambda = r.value("lambda", 1.0f64)?;
    params.truncation = r.value("R", Truncation::NONE)?;
    params.tau_ref = r.time("tau-ref", base.tau_ref * horizon, dyadic_snap)?;
    params.norm = SobolevIndex::new(r.value("norm-s", 1.0f64)?)?;
    params.data = InitialDataSpec::new(params.bandwidth, data, r.value("data-seed", 1u64)?);
    params.workers = r.value("workers", 1usize)?;
    let seed = r.value("seed", 0u64)?;

    let all = vec![Scheme::Sdlri, Scheme::Lie, Scheme::Expeuler, Scheme::RelaxedCn];
    let (schemes, taus, deltas, samples, table) = match kind {
        StudyKind::Deterministic | StudyKind::Strong | StudyKind::Pathwise => {
            let schemes = r.list("scheme", all)?;
            let finest = if kind == StudyKind::Deterministic { 10 } else { 9 };
            let taus = r.times("tau", (4..=finest).map(|j| dyadic(horizon, j)).collect(), dyadic_snap)?;
            let delta_default = if kind == StudyKind::Deterministic {
                horizon
            } else {
                dyadic(horizon, 12)
            };
            let delta = r.time("delta", delta_default, dyadic_snap)?;
            let (samples, table) = match kind {
                StudyKind::Strong => {
                    let m = r.value("samples", if large { 60usize } else { 20 })?;
                    (m, strong_error_study(&params, &schemes, &taus, delta, m, seed)?)
                }
                _ => (1, pathwise_study(&params, &schemes, &taus, delta, seed)?),
            };
            (schemes, taus, vec![delta], samples, table)
        }
        StudyKind::DeltaSweep => {
            let taus = r.times("tau", vec![0.1, 0.01, 0.001], dyadic_snap)?;
            let deltas = r.times("delta", (3..=12).map(|j| dyadic(horizon, j)).collect(), dyadic_snap)?;
            let m = r.value("samples", if large { 60usize } else { 20 })?;
            let table = delta_study(&params, &deltas, &taus, m, seed)?;
            (vec![Scheme::Sdlri], taus, deltas, m, table)
        }
    };

    let slopes = report(kind, &schemes, &taus, &table);
    let dir = out_dir(r)?;
    let csv = dir.join("errors.csv");
    table.write_csv(create(&csv)?)?;

    let mut manifest = RunManifest::new(format!("study {}", kind.name()), r.resolved().clone(), seed);
    manifest.outputs = vec![csv, dir.join("manifest.json")];
    manifest.study = Some(StudyManifest {
        kind: kind.name().to_string(),
        params,
        schemes,
        taus,
        deltas,
        samples,
        master_seed: seed,
        reference_floor: table.reference_floor,
        slopes,
        version: VERSION.to_string(),
    });
    manifest.write(&dir.join("manifest.json"))?;
    Ok(manifest)
}

fn report(kind: StudyKind, schemes: &[Scheme], taus: &[f64], table: &ErrorTable) -> Vec<SlopeRecord> {
    println!("reference self-error {:.3e}", table.reference_floor);
    let invalid = table.rows.iter().filter(|r| !r.valid).count();
    if invalid > 0 {
        println!("{invalid} rows failed and are flagged invalid");
    }
    let mut records = Vec::new();
    if kind == StudyKind::DeltaSweep {
        for &tau in taus {
            let curve = table.filter(|r| r.tau == tau);
            let errors: Vec<String> = curve.rows.iter().map(|r| format!("{:.3e}", r.error)).collect();
            println!("tau={tau:<12} errors over delta: {}", errors.join(" "));
            records.push(SlopeRecord {
                scheme: Scheme::Sdlri,
                sweep: Sweep::Delta,
                fixed: Some(tau),
                fit: curve.fit_slope(Scheme::Sdlri, Sweep::Delta).ok(),
            });
        }
        return records;
    }
    for &scheme in schemes {
        let fit = table.fit_slope(scheme, Sweep::Tau);
        match &fit {
            Ok(f) => println!(
                "{:<12} slope {:>6.3}  residual {:.3}  points {}",
                scheme.name(),
                f.slope,
                f.residual,
                f.points
            ),
            Err(e) => println!("{:<12} slope unavailable: {e}", scheme.name()),
        }
        records.push(SlopeRecord {
            scheme,
            sweep: Sweep::Tau,
            fixed: None,
            fit: fit.ok(),
        });
    }
    records
}

/// Compares a `simulate` result at `λ = 0` with the exact free flow of its initial data.
pub fn check_free_flow(manifest_path: &Path) -> Result<f64, CliError> {
    let manifest = RunManifest::read(manifest_path)?;
    if manifest.command != "simulate" {
        return Err(CliError::Usage(format!(
            "expected a simulate manifest, got '{}'",
            manifest.command
        )));
    }
    let mut r = Resolver::new(manifest.params.clone(), Default::default());
    let t = trajectory(&mut r)?;
    if t.cfg.lambda != 0.0 {
        return Err(CliError::Usage(format!(
            "free-flow check needs lambda=0, run used {}",
            t.cfg.lambda
        )));
    }
    let field_path = manifest
        .output_named("field.csv")
        .ok_or_else(|| CliError::Usage("manifest lists no field.csv".into()))?;
    let field = read_field_csv(File::open(field_path)?)?;
    let b = match t.cfg.path_source {
        PathSource::WongZakai => WongZakaiPath::new(&t.path, t.cfg.delta, t.cfg.truncation)?.eval(t.cfg.horizon)?,
        PathSource::RawBrownian => t.path.value(t.cfg.horizon)?,
    };
    let exact = free_propagate(&t.u0.resized(t.cfg.bandwidth), b);
    let n = field.bandwidth().max(exact.bandwidth()) as i64;
    Ok((-n..=n)
        .map(|k| (field.get(k) - exact.get(k)).norm())
        .fold(0.0, f64::max))
}
