//! Command-line pipeline: scenario-driven kernel builds, risk terrains,
//! clearance reports, terrain fusion, Monte Carlo validation, and mesh
//! export.
//!
//! Exit codes: 0 success/PASS, 1 validation FAIL, 2 configuration error,
//! 3 I/O error. `--threads` changes speed only, never results.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use riskterrain_core::error::Error;
use riskterrain_core::impact::{build_kernel, ImpactKernel};
use riskterrain_core::io;
use riskterrain_core::oracle::compare_kernel;
use riskterrain_core::scenario::{build_artifacts, load_scenario, ScenarioArtifacts};
use riskterrain_core::terrain::{
    cumulative_risk_volume, export_terrain_mesh, fuse_terrains, min_clearance, threshold_terrain,
    NoFlyTerrain,
};

#[derive(Debug, Parser)]
#[command(name = "riskterrain")]
#[command(about = "3D virtual risk terrains for UAS operations over urban models")]
struct Cli {
    /// Worker threads for grid computations (default: all cores). Affects
    /// speed only; outputs are byte-identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Precompute the impact kernel and write the cache file.
    Kernel(KernelArgs),
    /// Build the risk volume, no-fly terrains, and clearance reports.
    Terrain(TerrainArgs),
    /// Threshold a stored risk volume and report per-class clearance.
    Clearance(ClearanceArgs),
    /// Fuse no-fly terrains by voxelwise union.
    Fuse(FuseArgs),
    /// Validate kernel probabilities against the Monte Carlo sampler.
    Oracle(OracleArgs),
    /// Export a terrain file as an OBJ boundary mesh.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct KernelArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TerrainArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write the OBJ mesh of the strictest-threshold terrain.
    #[arg(long)]
    mesh: bool,
    /// Time-of-day label(s) overriding the scenario's time; with several
    /// labels each run lands in a per-label subdirectory.
    #[arg(long = "time")]
    times: Vec<String>,
}

#[derive(Debug, Args)]
struct ClearanceArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Stored risk volume to threshold.
    #[arg(long)]
    volume: PathBuf,
    /// Risk threshold(s); defaults to the scenario's strictest threshold.
    #[arg(long = "threshold")]
    thresholds: Vec<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Print per-class summaries as JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct FuseArgs {
    /// Output terrain file.
    #[arg(long)]
    out: PathBuf,
    /// Input terrain files (at least one).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Load the kernel from a cache file instead of rebuilding it.
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Monte Carlo samples per compared slice.
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    /// Stream seed; defaults to the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated slice altitudes to compare (default: 50,100,150
    /// where present).
    #[arg(long)]
    altitudes: Option<String>,
    /// Write the JSON report here as well as stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Input terrain file.
    #[arg(long)]
    terrain: PathBuf,
    /// Output OBJ path.
    #[arg(long)]
    out: PathBuf,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 3,
        Error::Validation(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || match &cli.command {
        Command::Kernel(a) => cmd_kernel(a),
        Command::Terrain(a) => cmd_terrain(a),
        Command::Clearance(a) => cmd_clearance(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Export(a) => cmd_export(a),
    };
    let outcome = match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build();
            match pool {
                Ok(pool) => pool.install(run),
                Err(e) => Err(Error::Config(format!("cannot build thread pool: {e}"))),
            }
        }
        None => run(),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn load(scenario: &Path) -> riskterrain_core::Result<ScenarioArtifacts> {
    let (file, hash) = load_scenario(scenario)?;
    let base = scenario.parent().unwrap_or(Path::new("."));
    build_artifacts(file, hash, base)
}

fn ensure_dir(dir: &Path) -> riskterrain_core::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn build_scenario_kernel(a: &ScenarioArtifacts) -> riskterrain_core::Result<ImpactKernel> {
    build_kernel(
        &a.impact,
        a.file.impact.half_extent_m,
        &a.altitudes,
        a.file.impact.delta_m,
        a.grid.spacing[0],
    )
}

fn cmd_kernel(args: &KernelArgs) -> riskterrain_core::Result<u8> {
    let a = load(&args.scenario)?;
    ensure_dir(&args.out)?;
    let kernel = build_scenario_kernel(&a)?;
    let name = a
        .file
        .outputs
        .kernel
        .clone()
        .unwrap_or_else(|| "kernel.vrt".into());
    let path = args.out.join(name);
    let hash = io::write_kernel(&path, &kernel, Some(&a.scenario_hash))?;
    println!(
        "kernel {} slices={} side={} sha256={hash}",
        path.display(),
        kernel.altitudes_m.len(),
        kernel.side()
    );
    Ok(0)
}

fn threshold_tag(t: f64) -> String {
    format!("{t:e}").replace('.', "p")
}

fn cmd_terrain(args: &TerrainArgs) -> riskterrain_core::Result<u8> {
    match args.times.as_slice() {
        [] => {
            let a = load(&args.scenario)?;
            let kernel = build_scenario_kernel(&a)?;
            run_terrain_products(&a, &kernel, &args.out, args.mesh)
        }
        [time] => {
            let a = load_with_time(&args.scenario, time)?;
            let kernel = build_scenario_kernel(&a)?;
            run_terrain_products(&a, &kernel, &args.out, args.mesh)
        }
        times => {
            // The kernel does not depend on the exposure time; build it once.
            let a0 = load_with_time(&args.scenario, &times[0])?;
            let kernel = build_scenario_kernel(&a0)?;
            run_terrain_products(&a0, &kernel, &args.out.join(&times[0]), args.mesh)?;
            for time in &times[1..] {
                let a = load_with_time(&args.scenario, time)?;
                run_terrain_products(&a, &kernel, &args.out.join(time), args.mesh)?;
            }
            Ok(0)
        }
    }
}

fn load_with_time(scenario: &Path, time: &str) -> riskterrain_core::Result<ScenarioArtifacts> {
    let (mut file, hash) = load_scenario(scenario)?;
    file.time = time.to_string();
    let base = scenario.parent().unwrap_or(Path::new("."));
    build_artifacts(file, hash, base)
}

fn run_terrain_products(
    a: &ScenarioArtifacts,
    kernel: &ImpactKernel,
    out: &Path,
    mesh: bool,
) -> riskterrain_core::Result<u8> {
    ensure_dir(out)?;
    let volume = cumulative_risk_volume(
        kernel,
        &a.chain,
        &a.exposure,
        &a.occupancy,
        a.elevation.as_ref(),
    )?;

    let volume_name = a
        .file
        .outputs
        .volume
        .clone()
        .unwrap_or_else(|| "risk_volume.vrt".into());
    let vhash = io::write_risk_volume(out.join(&volume_name), &volume, Some(&a.scenario_hash))?;
    println!(
        "volume {volume_name} max_risk={:e} sha256={vhash}",
        volume.max_risk()
    );

    let mut terrains: Vec<(f64, NoFlyTerrain)> = Vec::new();
    for &t in &a.file.thresholds {
        let mut terrain = threshold_terrain(&volume, t)?;
        terrain.scenario_hash = Some(a.scenario_hash.clone());
        terrains.push((t, terrain));
    }
    // Thresholds are strictly decreasing, so each terrain must contain the
    // previous one; checked before anything is written.
    for w in terrains.windows(2) {
        let (loose, strict) = (&w[0].1, &w[1].1);
        if loose
            .excluded()
            .iter()
            .zip(strict.excluded())
            .any(|(l, s)| *l && !*s)
        {
            return Err(Error::Validation(format!(
                "terrain nesting violated between thresholds {:e} and {:e}",
                w[0].0, w[1].0
            )));
        }
    }

    let prefix = a
        .file
        .outputs
        .terrain_prefix
        .clone()
        .unwrap_or_else(|| "terrain".into());
    let clearance_prefix = a
        .file
        .outputs
        .clearance_prefix
        .clone()
        .unwrap_or_else(|| "clearance".into());
    for (t, terrain) in &terrains {
        let tname = format!("{prefix}_{}.vrt", threshold_tag(*t));
        let thash = io::write_terrain(out.join(&tname), terrain, Some(&a.scenario_hash))?;
        let clearance = min_clearance(terrain);
        let csv = io::clearance_csv(&clearance, &a.ground, Some(&a.scenario_hash))?;
        let cname = format!("{clearance_prefix}_{}.csv", threshold_tag(*t));
        io::write_text(out.join(&cname), &csv)?;
        println!(
            "terrain {tname} threshold={t:e} excluded={} sha256={thash}",
            terrain.excluded_count()
        );
        for s in io::clearance_summary(&clearance, &a.ground)? {
            if s.columns > 0 && s.class != "none" {
                println!(
                    "  {} columns={} clearance min/median/max = {:?}/{:?}/{:?} m, closed={}, above_{}m={}",
                    s.class, s.columns, s.min_m, s.median_m, s.max_m, s.closed,
                    io::REGULATION_CEILING_M, s.above_regulation
                );
            }
        }
    }

    let mesh_requested = mesh || a.file.outputs.mesh_obj.is_some();
    if mesh_requested {
        if let Some((_, strictest)) = terrains.last() {
            let obj = export_terrain_mesh(strictest);
            let mname = a
                .file
                .outputs
                .mesh_obj
                .clone()
                .unwrap_or_else(|| "terrain.obj".into());
            io::write_text(out.join(&mname), &obj)?;
            println!("mesh {mname}");
        }
    }
    Ok(0)
}

fn cmd_clearance(args: &ClearanceArgs) -> riskterrain_core::Result<u8> {
    let a = load(&args.scenario)?;
    ensure_dir(&args.out)?;
    let (volume, header) = io::read_risk_volume(&args.volume)?;
    if let Some(h) = &header.scenario_sha256 {
        if *h != a.scenario_hash {
            eprintln!(
                "note: volume was built from scenario {h}, current scenario is {}",
                a.scenario_hash
            );
        }
    }
    if volume.spec.horizontal() != a.ground.spec {
        return Err(Error::Extent(
            "stored volume does not align with the scenario's ground grid".into(),
        ));
    }
    let thresholds = if args.thresholds.is_empty() {
        vec![*a.file.thresholds.last().expect("validated thresholds")]
    } else {
        args.thresholds.clone()
    };
    let clearance_prefix = a
        .file
        .outputs
        .clearance_prefix
        .clone()
        .unwrap_or_else(|| "clearance".into());
    for t in thresholds {
        let terrain = threshold_terrain(&volume, t)?;
        let clearance = min_clearance(&terrain);
        let csv = io::clearance_csv(&clearance, &a.ground, Some(&a.scenario_hash))?;
        let cname = format!("{clearance_prefix}_{}.csv", threshold_tag(t));
        io::write_text(args.out.join(&cname), &csv)?;
        let summary = io::clearance_summary(&clearance, &a.ground)?;
        if args.json {
            println!(
                "{}",
                serde_json::json!({ "threshold": t, "classes": summary })
            );
        } else {
            println!("threshold {t:e} -> {cname}");
            for s in &summary {
                if s.columns > 0 && s.class != "none" {
                    println!(
                        "  {} columns={} clearance min/median/max = {:?}/{:?}/{:?} m, closed={}",
                        s.class, s.columns, s.min_m, s.median_m, s.max_m, s.closed
                    );
                }
            }
        }
    }
    Ok(0)
}

fn cmd_fuse(args: &FuseArgs) -> riskterrain_core::Result<u8> {
    let mut loaded = Vec::new();
    for p in &args.inputs {
        loaded.push(io::read_terrain(p)?.0);
    }
    let refs: Vec<&NoFlyTerrain> = loaded.iter().collect();
    let mut fused = fuse_terrains(&refs)?;
    fused.sources = args
        .inputs
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    let hash = io::write_terrain(&args.out, &fused, None)?;
    println!(
        "fused {} inputs={} excluded={} sha256={hash}",
        args.out.display(),
        args.inputs.len(),
        fused.excluded_count()
    );
    Ok(0)
}

fn cmd_oracle(args: &OracleArgs) -> riskterrain_core::Result<u8> {
    let a = load(&args.scenario)?;
    let kernel = match &args.kernel {
        Some(p) => io::read_kernel(p)?.0,
        None => build_scenario_kernel(&a)?,
    };
    let altitudes: Vec<f64> = match &args.altitudes {
        Some(s) => s
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad altitude '{x}': {e}")))
            })
            .collect::<riskterrain_core::Result<_>>()?,
        None => {
            let preferred = [50.0, 100.0, 150.0];
            let present: Vec<f64> = preferred
                .into_iter()
                .filter(|p| kernel.altitudes_m.iter().any(|a| (a - p).abs() < 1e-9))
                .collect();
            if present.is_empty() {
                vec![kernel.altitudes_m[kernel.altitudes_m.len() / 2]]
            } else {
                present
            }
        }
    };
    let seed = args.seed.unwrap_or(a.file.seed);
    let report = compare_kernel(&kernel, &altitudes, args.samples, seed, true)?;
    let json = report.to_json();
    if let Some(p) = &args.report {
        io::write_text(p, &json)?;
    }
    println!("{json}");
    if report.pass {
        eprintln!("oracle PASS");
        Ok(0)
    } else {
        eprintln!("oracle FAIL");
        Ok(1)
    }
}

fn cmd_export(args: &ExportArgs) -> riskterrain_core::Result<u8> {
    let (terrain, _) = io::read_terrain(&args.terrain)?;
    let obj = export_terrain_mesh(&terrain);
    io::write_text(&args.out, &obj)?;
    println!("mesh {} ({} bytes)", args.out.display(), obj.len());
    Ok(0)
}
