//! Batch front end: config resolution, subcommand dispatch, reproducible
//! run manifests.
//!
//! Configuration comes from an optional TOML file with one section per
//! subcommand (`[profile]`, `[ode]`, `[pde]`, `[sweep]`), overridden by
//! command-line flags. Every run writes a JSON manifest with the fully
//! resolved configuration; re-running from a manifest reproduces the
//! outputs byte for byte (wall time and runtimes live only in the manifest).
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical failure.
//! `PEIERLS_THREADS` bounds the worker pool used by parallel sweeps.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::analysis::{self, SweepScenario};
use crate::particles::{self, EvolveControls, ParticleState};
use crate::phasefield::{self, Grid, InitialDataSpec, Perturbation};
use crate::potential::Potential;
use crate::profiles::{self, GridSpec};
use crate::report::{self, Manifest};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "peierls", version, about = "Nonlocal phase-field dislocation dynamics toolkit")]
struct CliArgs {
    /// TOML configuration file; sections per subcommand, flags override keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Re-run from a previously written manifest (ignores --config).
    #[arg(long, global = true)]
    from_manifest: Option<PathBuf>,
    /// Seed for randomized property suites.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: CommandArgs,
}

#[derive(Subcommand, Debug)]
enum CommandArgs {
    /// Solve the layer (and optionally the corrector) and export profiles.
    Profile(ProfileFlags),
    /// Integrate the particle system with annihilation.
    Ode(OdeFlags),
    /// Run the phase-field evolution with transition tracking.
    Pde(PdeFlags),
    /// Small-epsilon convergence study against the particle reference.
    Sweep(SweepFlags),
    /// Numerical verification of the supporting lemmas.
    Verify(VerifyFlags),
    /// Fast self-checks of the basic identities.
    Selftest,
}

#[derive(Args, Debug, Default)]
struct ProfileFlags {
    /// Built-in potential name (`sine`) or `fourier` with config-file coefficients.
    #[arg(long)]
    potential: Option<String>,
    /// Multiply the potential by this factor before solving.
    #[arg(long)]
    scale: Option<f64>,
    /// none | unit-mobility | unit-effective | corrector-exact
    #[arg(long)]
    normalize: Option<String>,
    /// Also solve the corrector (requires corrector-exact normalization).
    #[arg(long)]
    corrector: bool,
    /// Grid truncation radius.
    #[arg(long)]
    extent: Option<f64>,
    /// Output base path (writes <out>.csv and <out>.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump per-cell quadrature contributions at x = 0 to this CSV.
    #[arg(long)]
    dump_quadrature: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct OdeFlags {
    /// Number of particles (validated against --positions).
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated initial positions.
    #[arg(long, allow_hyphen_values = true)]
    positions: Option<String>,
    /// Comma-separated orientations, e.g. `+,-,+`.
    #[arg(long, allow_hyphen_values = true)]
    signs: Option<String>,
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    sample_dt: Option<f64>,
    /// Output base path (writes <out>.csv, <out>_events.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct PdeFlags {
    #[arg(long)]
    epsilon: Option<f64>,
    /// Comma-separated layer centers.
    #[arg(long, allow_hyphen_values = true)]
    centers: Option<String>,
    /// Comma-separated orientations, e.g. `+,-`.
    #[arg(long)]
    signs: Option<String>,
    #[arg(long)]
    perturbation_amp: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Grid spacing (default eps/8).
    #[arg(long)]
    dx: Option<f64>,
    /// Keep a field snapshot every this many samples (0 = ends only).
    #[arg(long)]
    snapshot_every: Option<usize>,
    #[arg(long)]
    sample_dt: Option<f64>,
    /// Write snapshots as flat binary instead of CSV.
    #[arg(long)]
    binary_snapshots: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct SweepFlags {
    /// Canonical scenario: two | three | single (config file may override fields).
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated epsilon list, strictly decreasing.
    #[arg(long)]
    epsilons: Option<String>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct VerifyFlags {
    /// Skip the slowest parameter points.
    #[arg(long)]
    fast: bool,
}

/// Entry point used by the binary; returns the process exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match CliArgs::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version through this path
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(Error::InvalidInput(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Error::Io(e)) => {
            eprintln!("io error: {e}");
            1
        }
        Err(Error::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            2
        }
    }
}

fn init_threads() -> usize {
    let threads = std::env::var("PEIERLS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0);
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    rayon::current_num_threads()
}

fn run(cli: CliArgs) -> Result<()> {
    let threads = init_threads();
    let seed = cli.seed.unwrap_or(0);
    let table = load_config_table(cli.config.as_deref(), cli.from_manifest.as_deref())?;
    let started = Instant::now();
    match cli.command {
        CommandArgs::Profile(flags) => {
            let cfg = ProfileConfig::resolve(flags, section(&table, "profile"))?;
            run_profile(&cfg, seed, threads, started)
        }
        CommandArgs::Ode(flags) => {
            let cfg = OdeConfig::resolve(flags, section(&table, "ode"))?;
            run_ode(&cfg, seed, threads, started)
        }
        CommandArgs::Pde(flags) => {
            let cfg = PdeConfig::resolve(flags, section(&table, "pde"))?;
            run_pde(&cfg, seed, threads, started)
        }
        CommandArgs::Sweep(flags) => {
            let cfg = SweepConfig::resolve(flags, section(&table, "sweep"))?;
            run_sweep(&cfg, seed, threads, started)
        }
        CommandArgs::Verify(flags) => {
            let rows = run_verify(flags.fast, seed)?;
            let mut ok = true;
            println!("{:<44} {:>8}  detail", "check", "status");
            for row in &rows {
                ok &= row.pass;
                println!(
                    "{:<44} {:>8}  {}",
                    row.name,
                    if row.pass { "PASS" } else { "FAIL" },
                    row.detail
                );
            }
            if ok {
                Ok(())
            } else {
                Err(Error::Numerical("verification suite reported failures".into()))
            }
        }
        CommandArgs::Selftest => {
            let rows = run_selftest()?;
            for row in &rows {
                println!("{:<44} {:>8}  {}", row.name, if row.pass { "PASS" } else { "FAIL" }, row.detail);
            }
            if rows.iter().all(|r| r.pass) {
                Ok(())
            } else {
                Err(Error::Numerical("selftest reported failures".into()))
            }
        }
    }
}

fn load_config_table(config: Option<&Path>, manifest: Option<&Path>) -> Result<toml::Table> {
    if let Some(m) = manifest {
        let manifest = report::read_manifest(m)?;
        // the manifest's resolved config round-trips through TOML
        let json = serde_json::to_string(&serde_json::json!({
            manifest.subcommand.clone(): manifest.config
        }))?;
        let value: toml::Table = serde_json::from_str(&json).map_err(|e| {
            Error::InvalidInput(format!("manifest config not table-shaped: {e}"))
        })?;
        return Ok(value);
    }
    match config {
        None => Ok(toml::Table::new()),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            text.parse::<toml::Table>()
                .map_err(|e| Error::InvalidInput(format!("bad config file: {e}")))
        }
    }
}

fn section<'a>(table: &'a toml::Table, name: &str) -> Option<&'a toml::Table> {
    table.get(name).and_then(|v| v.as_table())
}

fn get_f64(sec: Option<&toml::Table>, key: &str) -> Option<f64> {
    sec?.get(key)?.as_float().or_else(|| sec?.get(key)?.as_integer().map(|i| i as f64))
}

fn get_usize(sec: Option<&toml::Table>, key: &str) -> Option<usize> {
    sec?.get(key)?.as_integer().map(|i| i as usize)
}

fn get_string(sec: Option<&toml::Table>, key: &str) -> Option<String> {
    sec?.get(key)?.as_str().map(|s| s.to_string())
}

fn get_bool(sec: Option<&toml::Table>, key: &str) -> Option<bool> {
    sec?.get(key)?.as_bool()
}

fn get_f64_list(sec: Option<&toml::Table>, key: &str) -> Option<Vec<f64>> {
    sec?
        .get(key)?
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64))).collect())
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad number {p:?}: {e}")))
        })
        .collect()
}

fn parse_signs(s: &str) -> Result<Vec<i8>> {
    s.split(',')
        .map(|p| match p.trim() {
            "+" | "+1" | "1" => Ok(1),
            "-" | "-1" => Ok(-1),
            other => Err(Error::InvalidInput(format!("bad orientation {other:?}"))),
        })
        .collect()
}

fn signs_from(sec: Option<&toml::Table>, key: &str) -> Option<Result<Vec<i8>>> {
    if let Some(s) = get_string(sec, key) {
        return Some(parse_signs(&s));
    }
    sec?.get(key)?.as_array().map(|a| {
        a.iter()
            .map(|v| match v.as_integer() {
                Some(1) => Ok(1),
                Some(-1) => Ok(-1),
                _ => Err(Error::InvalidInput("orientations must be +1/-1".into())),
            })
            .collect()
    })
}

/// Named potential resolution shared by the subcommands.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialConfig {
    pub kind: String,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
    pub scale: f64,
    pub holder_exponent: f64,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig {
            kind: "sine".into(),
            cos: vec![],
            sin: vec![],
            scale: 1.0,
            holder_exponent: 0.5,
        }
    }
}

impl PotentialConfig {
    fn from_table(sec: Option<&toml::Table>, name_flag: Option<String>, scale_flag: Option<f64>) -> Self {
        let pot_sec = sec.and_then(|s| s.get("potential")).and_then(|v| v.as_table());
        PotentialConfig {
            kind: name_flag
                .or_else(|| get_string(pot_sec, "kind"))
                .unwrap_or_else(|| "sine".into()),
            cos: get_f64_list(pot_sec, "cos").unwrap_or_default(),
            sin: get_f64_list(pot_sec, "sin").unwrap_or_default(),
            scale: scale_flag.or_else(|| get_f64(pot_sec, "scale")).unwrap_or(1.0),
            holder_exponent: get_f64(pot_sec, "holder_exponent").unwrap_or(0.5),
        }
    }

    pub fn build(&self) -> Result<Potential> {
        let base = match self.kind.as_str() {
            "sine" => Potential::builtin_sine(),
            "fourier" => Potential::from_fourier(self.cos.clone(), self.sin.clone(), self.holder_exponent)?,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown potential kind {other:?} (expected sine or fourier)"
                )))
            }
        };
        base.scale(self.scale)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub potential: PotentialConfig,
    pub normalize: String,
    pub corrector: bool,
    pub extent: Option<f64>,
    pub out: PathBuf,
    pub dump_quadrature: Option<PathBuf>,
}

impl ProfileConfig {
    fn resolve(flags: ProfileFlags, sec: Option<&toml::Table>) -> Result<Self> {
        Ok(ProfileConfig {
            potential: PotentialConfig::from_table(sec, flags.potential, flags.scale),
            normalize: flags
                .normalize
                .or_else(|| get_string(sec, "normalize"))
                .unwrap_or_else(|| "none".into()),
            corrector: flags.corrector || get_bool(sec, "corrector").unwrap_or(false),
            extent: flags.extent.or_else(|| get_f64(sec, "extent")),
            out: flags
                .out
                .or_else(|| get_string(sec, "out").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("profile_out")),
            dump_quadrature: flags
                .dump_quadrature
                .or_else(|| get_string(sec, "dump_quadrature").map(PathBuf::from)),
        })
    }
}

fn run_profile(cfg: &ProfileConfig, seed: u64, threads: usize, started: Instant) -> Result<()> {
    let base = cfg.potential.build()?;
    let (potential, layer) = match cfg.normalize.as_str() {
        "none" => {
            let mut spec = GridSpec::default_for(&base);
            if let Some(e) = cfg.extent {
                spec.max_extent = e;
            }
            let layer = profiles::solve_layer(&base, &spec)?;
            (base, layer)
        }
        "unit-mobility" => {
            let (p, _) = profiles::rescale_to_unit_mobility(&base, 1.0)?;
            let mut spec = GridSpec::default_for(&p);
            if let Some(e) = cfg.extent {
                spec.max_extent = e;
            }
            (p.clone(), profiles::solve_layer(&p, &spec)?)
        }
        "unit-effective" => {
            let (p, _) = profiles::rescale_to_unit_effective_mobility(&base, 1.0)?;
            let mut spec = GridSpec::default_for(&p);
            if let Some(e) = cfg.extent {
                spec.max_extent = e;
            }
            (p.clone(), profiles::solve_layer(&p, &spec)?)
        }
        "corrector-exact" => {
            let (p, l) = profiles::normalize_for_corrector(&base)?;
            (p, l)
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown normalization {other:?}"
            )))
        }
    };
    let corrector = if cfg.corrector {
        if cfg.normalize != "corrector-exact" {
            return Err(Error::InvalidInput(
                "--corrector requires --normalize corrector-exact (the cell problem is solvable at unit mobility)"
                    .into(),
            ));
        }
        Some(profiles::solve_corrector(&layer, &potential)?)
    } else {
        None
    };

    let mut files = report::write_profiles(&cfg.out, &layer, corrector.as_ref())?;
    if let Some(dump) = &cfg.dump_quadrature {
        let rows = crate::halflap::quadrature_weight_rows(&layer.as_sampled(), 0.0)?;
        let mut csv = String::from("z_lo,z_hi,contribution\n");
        for (lo, hi, v) in rows {
            csv.push_str(&format!(
                "{},{},{}\n",
                report::fmt_g17(lo),
                report::fmt_g17(hi),
                report::fmt_g17(v)
            ));
        }
        std::fs::write(dump, csv)?;
        files.push(dump.clone());
    }
    println!(
        "profile: alpha = {:.6}, c0 = {:.8}, effective mobility = {:.8}, residual = {:.3e}",
        layer.alpha,
        layer.c0,
        profiles::effective_mobility(&layer),
        layer.residual
    );
    if let Some(c) = &corrector {
        println!("corrector: K2 = {:.6}, K3 = {:.6}, residual = {:.3e}", c.k2, c.k3, c.residual);
    }
    for f in &files {
        println!("wrote {}", f.display());
    }
    write_run_manifest(&cfg.out.with_file_name(format!(
        "{}_manifest.json",
        cfg.out.file_name().unwrap_or_default().to_string_lossy()
    )), "profile", cfg, seed, threads, started, None)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdeConfig {
    pub positions: Vec<f64>,
    pub signs: Vec<i8>,
    pub c0: f64,
    pub sigma: f64,
    pub t_end: f64,
    pub sample_dt: f64,
    pub out: PathBuf,
}

impl OdeConfig {
    fn resolve(flags: OdeFlags, sec: Option<&toml::Table>) -> Result<Self> {
        let positions = match flags.positions {
            Some(s) => parse_f64_list(&s)?,
            None => get_f64_list(sec, "positions")
                .ok_or_else(|| Error::InvalidInput("ode: positions required".into()))?,
        };
        let signs = match flags.signs {
            Some(s) => parse_signs(&s)?,
            None => signs_from(sec, "signs")
                .ok_or_else(|| Error::InvalidInput("ode: signs required".into()))??,
        };
        if let Some(n) = flags.n.or_else(|| get_usize(sec, "n")) {
            if n != positions.len() {
                return Err(Error::InvalidInput(format!(
                    "--n {} disagrees with {} positions",
                    n,
                    positions.len()
                )));
            }
        }
        Ok(OdeConfig {
            positions,
            signs,
            c0: flags.c0.or_else(|| get_f64(sec, "c0")).unwrap_or(1.0),
            sigma: flags.sigma.or_else(|| get_f64(sec, "sigma")).unwrap_or(0.0),
            t_end: flags.t_end.or_else(|| get_f64(sec, "t_end")).unwrap_or(1.0),
            sample_dt: flags.sample_dt.or_else(|| get_f64(sec, "sample_dt")).unwrap_or(1e-3),
            out: flags
                .out
                .or_else(|| get_string(sec, "out").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("ode_out")),
        })
    }
}

fn run_ode(cfg: &OdeConfig, seed: u64, threads: usize, started: Instant) -> Result<()> {
    let state = ParticleState::new(cfg.positions.clone(), cfg.signs.clone(), cfg.c0, cfg.sigma)?;
    let mut controls = EvolveControls::default();
    controls.sample_dt = cfg.sample_dt;
    let record = particles::evolve(&state, cfg.t_end, &controls)?;
    let csv_path = cfg.out.with_extension("csv");
    std::fs::create_dir_all(csv_path.parent().unwrap_or(Path::new(".")))?;
    std::fs::write(&csv_path, report::trajectory_csv(&record))?;
    let events_path = cfg.out.with_file_name(format!(
        "{}_events.json",
        cfg.out.file_name().unwrap_or_default().to_string_lossy()
    ));
    std::fs::write(&events_path, report::events_json(&record)?)?;
    println!(
        "ode: {} events, {} survivors at t = {}",
        record.events.len(),
        record.final_state.survivors.len(),
        cfg.t_end
    );
    for ev in &record.events {
        println!(
            "  collision at t = {:.6}, x = {:.6}, cluster {:?}, survivor {:?}",
            ev.time, ev.location, ev.cluster, ev.survivor
        );
    }
    println!("wrote {}", csv_path.display());
    println!("wrote {}", events_path.display());
    write_run_manifest(
        &cfg.out.with_file_name(format!(
            "{}_manifest.json",
            cfg.out.file_name().unwrap_or_default().to_string_lossy()
        )),
        "ode",
        cfg,
        seed,
        threads,
        started,
        None,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdeConfig {
    pub potential: PotentialConfig,
    pub epsilon: f64,
    pub centers: Vec<f64>,
    pub signs: Vec<i8>,
    pub perturbation_amp: f64,
    pub t_end: f64,
    pub dx: Option<f64>,
    pub sample_dt: f64,
    pub snapshot_every: usize,
    pub binary_snapshots: bool,
    pub out_dir: PathBuf,
}

impl PdeConfig {
    fn resolve(flags: PdeFlags, sec: Option<&toml::Table>) -> Result<Self> {
        let centers = match flags.centers {
            Some(s) => parse_f64_list(&s)?,
            None => get_f64_list(sec, "centers")
                .ok_or_else(|| Error::InvalidInput("pde: centers required".into()))?,
        };
        let signs = match flags.signs {
            Some(s) => parse_signs(&s)?,
            None => signs_from(sec, "signs")
                .ok_or_else(|| Error::InvalidInput("pde: signs required".into()))??,
        };
        Ok(PdeConfig {
            potential: PotentialConfig::from_table(sec, None, None),
            epsilon: flags
                .epsilon
                .or_else(|| get_f64(sec, "epsilon"))
                .ok_or_else(|| Error::InvalidInput("pde: epsilon required".into()))?,
            centers,
            signs,
            perturbation_amp: flags
                .perturbation_amp
                .or_else(|| get_f64(sec, "perturbation_amp"))
                .unwrap_or(0.0),
            t_end: flags.t_end.or_else(|| get_f64(sec, "t_end")).unwrap_or(0.35),
            dx: flags.dx.or_else(|| get_f64(sec, "dx")),
            sample_dt: flags.sample_dt.or_else(|| get_f64(sec, "sample_dt")).unwrap_or(2.5e-3),
            snapshot_every: flags
                .snapshot_every
                .or_else(|| get_usize(sec, "snapshot_every"))
                .unwrap_or(20),
            binary_snapshots: flags.binary_snapshots || get_bool(sec, "binary_snapshots").unwrap_or(false),
            out_dir: flags
                .out_dir
                .or_else(|| get_string(sec, "out_dir").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("pde_out")),
        })
    }
}

fn run_pde(cfg: &PdeConfig, seed: u64, threads: usize, started: Instant) -> Result<()> {
    // the canonical pairing: unit effective mobility
    let base = cfg.potential.build()?;
    let (potential, _) = profiles::rescale_to_unit_effective_mobility(&base, 1.0)?;
    let layer = profiles::solve_layer(&potential, &GridSpec::default_for(&potential))?;
    let spec = InitialDataSpec {
        centers: cfg.centers.clone(),
        orientations: cfg.signs.clone(),
        perturbation: if cfg.perturbation_amp != 0.0 {
            Perturbation::Gaussian { amplitude: cfg.perturbation_amp, center: 0.0, width: 1.0 }
        } else {
            Perturbation::None
        },
    };
    let dx = cfg.dx.unwrap_or(cfg.epsilon / 8.0);
    let grid = Grid::with_spacing(spec.default_half_width(cfg.epsilon), dx)?;
    let state = phasefield::build_initial(&spec, &layer, cfg.epsilon, grid)?;
    let out = phasefield::run(&state, cfg.t_end, cfg.sample_dt, &potential, &layer, cfg.snapshot_every)?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    let track_path = cfg.out_dir.join("track.csv");
    std::fs::write(&track_path, report::track_csv(&out.track))?;
    for (k, snap) in out.snapshots.iter().enumerate() {
        if cfg.binary_snapshots {
            let p = cfg.out_dir.join(format!("snapshot_{k:05}.bin"));
            std::fs::write(p, report::snapshot_binary(&out.final_state, snap))?;
        } else {
            let p = cfg.out_dir.join(format!("snapshot_{k:05}.csv"));
            std::fs::write(p, report::snapshot_csv(&out.final_state.grid, &snap.values))?;
        }
    }
    let alive = out.track.alive().len();
    println!(
        "pde: tracked {} layers, {} alive at t_end, {} snapshots, plateaus ({:.4}, {:.4})",
        out.track.layers.len(),
        alive,
        out.snapshots.len(),
        out.final_state.plateau_left,
        out.final_state.plateau_right
    );
    println!("wrote {}", track_path.display());
    write_run_manifest(&cfg.out_dir.join("manifest.json"), "pde", cfg, seed, threads, started, None)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub potential: PotentialConfig,
    pub scenario: SweepScenario,
    pub out_dir: PathBuf,
}

impl SweepConfig {
    fn resolve(flags: SweepFlags, sec: Option<&toml::Table>) -> Result<Self> {
        let name = flags
            .scenario
            .or_else(|| get_string(sec, "scenario"))
            .unwrap_or_else(|| "two".into());
        let mut scenario = match name.as_str() {
            "two" => SweepScenario::two_particle(),
            "three" => SweepScenario::three_particle(),
            "single" => SweepScenario::single_layer(),
            other => return Err(Error::InvalidInput(format!("unknown scenario {other:?}"))),
        };
        if let Some(c) = get_f64_list(sec, "centers") {
            scenario.centers = c;
        }
        if let Some(s) = signs_from(sec, "signs") {
            scenario.orientations = s?;
        }
        if let Some(e) = flags.epsilons {
            scenario.epsilons = parse_f64_list(&e)?;
        } else if let Some(e) = get_f64_list(sec, "epsilons") {
            scenario.epsilons = e;
        }
        if let Some(t) = flags.t_end.or_else(|| get_f64(sec, "t_end")) {
            scenario.t_end = t;
        }
        if let Some(ts) = get_f64_list(sec, "comparison_times") {
            scenario.comparison_times = ts;
        }
        if let Some(t) = get_f64(sec, "plateau_time") {
            scenario.plateau_time = Some(t);
        }
        if let Some(a) = get_f64(sec, "perturbation_amp") {
            scenario.perturbation_amplitude = a;
        }
        if let Some(d) = get_f64(sec, "sample_dt") {
            scenario.sample_dt = d;
        }
        if let Some(d) = get_f64(sec, "dx_over_eps") {
            scenario.dx_over_eps = d;
        }
        Ok(SweepConfig {
            potential: PotentialConfig::from_table(sec, None, None),
            scenario,
            out_dir: flags
                .out_dir
                .or_else(|| get_string(sec, "out_dir").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("sweep_out")),
        })
    }
}

fn run_sweep(cfg: &SweepConfig, seed: u64, threads: usize, started: Instant) -> Result<()> {
    let base = cfg.potential.build()?;
    let (potential, _) = profiles::rescale_to_unit_effective_mobility(&base, 1.0)?;
    let layer = profiles::solve_layer(&potential, &GridSpec::default_for(&potential))?;
    let report_data = analysis::convergence_sweep(&cfg.scenario, &potential, &layer)?;
    let files = report::emit_report(&report_data, &cfg.out_dir)?;
    println!("sweep: effective mobility {:.6}", report_data.effective_mobility);
    for m in &report_data.per_epsilon {
        println!(
            "  eps = {:<6} max tracking error {:.4e}, collisions {:?}, plateau {:?}",
            m.epsilon, m.max_tracking_error, m.collision_time_estimates, m.plateau_error
        );
    }
    for f in &files {
        println!("wrote {}", f.display());
    }
    let runtimes: Vec<(f64, f64)> = report_data
        .per_epsilon
        .iter()
        .map(|m| (m.epsilon, m.runtime_seconds))
        .collect();
    write_run_manifest(
        &cfg.out_dir.join("manifest.json"),
        "sweep",
        cfg,
        seed,
        threads,
        started,
        Some(runtimes),
    )
}

fn write_run_manifest<C: Serialize>(
    path: &Path,
    subcommand: &str,
    cfg: &C,
    seed: u64,
    threads: usize,
    started: Instant,
    runtimes: Option<Vec<(f64, f64)>>,
) -> Result<()> {
    let manifest = Manifest {
        subcommand: subcommand.to_string(),
        config: serde_json::to_value(cfg)?,
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        threads,
        wall_seconds: started.elapsed().as_secs_f64(),
        runtimes,
    };
    report::write_manifest(path, &manifest)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// One row of the verify/selftest tables.
#[derive(Debug, Clone)]
pub struct CheckRow {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn row(name: &str, pass: bool, detail: String) -> CheckRow {
    CheckRow { name: name.to_string(), pass, detail }
}

/// The lemma-verification suite behind `peierls verify`.
pub fn run_verify(fast: bool, _seed: u64) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let sine = Potential::builtin_sine();

    // layer tail law under extent doubling
    let spec = GridSpec::default_for(&sine);
    let layer = profiles::solve_layer(&sine, &spec)?;
    let mut wide = spec.clone();
    wide.max_extent = 400.0;
    let layer_wide = profiles::solve_layer(&sine, &wide)?;
    let (k1a, k1b) = (layer.fitted_tail.sup_constant, layer_wide.fitted_tail.sup_constant);
    let ratio = (k1a / k1b).max(k1b / k1a);
    rows.push(row(
        "layer tail law, extent 200 vs 400",
        ratio <= 2.0 && k1a.is_finite(),
        format!("K1 = {k1a:.3e} -> {k1b:.3e}"),
    ));

    // corrector existence and tails at unit mobility (sine and two-harmonic)
    let (unit_w, unit_layer) = profiles::normalize_for_corrector(&sine)?;
    let corr = profiles::solve_corrector(&unit_layer, &unit_w)?;
    rows.push(row(
        "corrector residual (sine, psi = 0 case)",
        corr.residual <= 1e-6,
        format!("residual {:.3e}, multiplier {:.3e}", corr.residual, corr.multiplier),
    ));
    let bumpy = Potential::from_fourier(vec![0.575, -0.5, -0.075], vec![], 0.5)?;
    let (bw, bl) = profiles::normalize_for_corrector(&bumpy)?;
    let bc = profiles::solve_corrector(&bl, &bw)?;
    let psi_end = bc.psi[0].abs().max(bc.psi[bc.psi.len() - 1].abs());
    rows.push(row(
        "corrector residual + decay (two-harmonic)",
        bc.residual <= 1e-6 && psi_end <= 0.05,
        format!("residual {:.3e}, |psi| at ends {:.3e}, K2 {:.4}", bc.residual, psi_end, bc.k2),
    ));

    // perturbation stability of the two-body collision
    let base = ParticleState::new(vec![-0.5, 0.5], vec![1, -1], 1.0, 0.0)?;
    let stab = analysis::perturbation_stability_check(&base, &[1e-2, 1e-3, 1e-4], &[0.0; 3])?;
    let last = stab.entries.last().unwrap();
    rows.push(row(
        "perturbed-system stability (two-body)",
        stab.monotone,
        format!(
            "T1 gaps {:.2e} -> {:.2e}",
            stab.entries[0].collision_time_gap.unwrap_or(f64::NAN),
            last.collision_time_gap.unwrap_or(f64::NAN)
        ),
    ));

    // supersolution residual of the repulsive pair with tuned delta
    let eps = 0.01f64;
    let theta = eps.powf(0.4);
    let delta = analysis::tune_delta(&unit_w, &unit_layer, &corr, eps, theta)?;
    let scan = analysis::repulsive_pair_residual(&unit_w, &unit_layer, &corr, eps, theta, delta + 0.05, delta)?;
    rows.push(row(
        "supersolution residual (repulsive pair)",
        scan.min >= -1e-4,
        format!("min {:.3e} at x = {:.3}, delta = {delta:.3e}", scan.min, scan.argmin),
    ));

    // patching and dipole constants across the epsilon ladder
    let eps_list: &[f64] = if fast { &[1e-2, 1e-3] } else { &[1e-2, 1e-3, 1e-4] };
    for (name, dipole) in [("patching inequality", false), ("dipole removal", true)] {
        let mut ks = Vec::new();
        let mut slack_ok = true;
        for &e in eps_list {
            let th = e.powf(0.4);
            let z = th / e;
            let c = 1.0 / th;
            if dipole {
                let rep = analysis::check_dipole_removal(c, c, e, th, z, &bl, &bc, 1.0)?;
                ks.push(rep.fitted_k);
            } else {
                let rep = analysis::check_patching_inequality(c, c, e, th, z, &bl, &bc, 1.0)?;
                slack_ok &= rep.min_slack >= -1e-12;
                ks.push(rep.fitted_k);
            }
        }
        let kmax = ks.iter().cloned().fold(0.0f64, f64::max);
        let kmin = ks.iter().cloned().fold(f64::INFINITY, f64::min);
        let stable = kmax <= 1e-9 || kmax / kmin.max(1e-300) <= 2.0 || kmax <= 2.0 * kmin + 1e-9;
        rows.push(row(
            &format!("{name} constants across eps"),
            stable && slack_ok,
            format!("K = {ks:?}"),
        ));
    }

    // asymmetric split experiment
    let mut split_ok = true;
    let mut detail = String::new();
    for &theta_gap in &[1e-2, 5e-3] {
        let st = ParticleState::new(vec![-theta_gap / 2.0, theta_gap / 2.0], vec![1, -1], 1.0, 0.0)?;
        let rep = analysis::asymmetric_split_experiment(&st, theta_gap, 26.0, 1e-3, 1.0)?;
        split_ok &= rep.no_collision && rep.min_gap_ok && rep.overtake;
        detail.push_str(&format!("Theta {theta_gap}: gain {:.2e}; ", rep.left_particle_end - rep.right_start));
    }
    let st = ParticleState::new(vec![-5e-4, 5e-4], vec![1, -1], 1.0, 0.0)?;
    let neg = analysis::asymmetric_split_experiment(&st, 1e-3, 2.0, 1e-3, 1.0)?;
    split_ok &= !neg.overtake;
    detail.push_str("L=2 control fails as expected");
    rows.push(row("asymmetric split (L = 26, control L = 2)", split_ok, detail));

    Ok(rows)
}

/// The fast identity checks behind `peierls selftest`.
pub fn run_selftest() -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let sine = Potential::builtin_sine();

    rows.push(row(
        "W(0) = 0, W(1/2) = 1, periodicity",
        sine.eval(0.0) == 0.0
            && (sine.eval(0.5) - 1.0).abs() < 1e-15
            && (sine.eval(1.3) - sine.eval(0.3)).abs() < 1e-15,
        format!("alpha = {:.6}", sine.alpha()),
    ));
    rows.push(row(
        "validate(sine) passes",
        sine.validate(1024)?.all_pass(),
        "all multi-well conditions hold".into(),
    ));

    let values = vec![2.5; 64];
    let spectral_const = crate::halflap::apply_spectral(&values, 8.0)?;
    rows.push(row(
        "spectral operator kills constants",
        spectral_const.iter().all(|v| v.abs() < 1e-12),
        format!("max {:.2e}", spectral_const.iter().fold(0.0f64, |m, v| m.max(v.abs()))),
    ));
    let grid: Vec<f64> = (0..128).map(|j| j as f64 * 2.0 * PI / 128.0).collect();
    let cosv: Vec<f64> = grid.iter().map(|&x| x.cos()).collect();
    let ic = crate::halflap::apply_spectral(&cosv, 2.0 * PI)?;
    let err = ic.iter().zip(&cosv).map(|(a, b)| (a + b).abs()).fold(0.0f64, f64::max);
    rows.push(row("I[cos] = -cos", err < 1e-10, format!("max err {err:.2e}")));

    let st = ParticleState::new(vec![3.0], vec![1], 1.0, 0.0)?;
    let v = particles::rhs(&st)?;
    rows.push(row("single particle feels no force", v == vec![0.0], format!("{v:?}")));
    let st = ParticleState::new(vec![-0.5, 0.5], vec![1, -1], 1.0, 0.0)?;
    let v = particles::rhs(&st)?;
    rows.push(row(
        "(+,-) pair attracts at unit speed",
        v == vec![1.0, -1.0],
        format!("{v:?}"),
    ));

    let rec = particles::evolve(&st, 0.05, &EvolveControls::default())?;
    rows.push(row(
        "step function conventions",
        particles::step_function(&rec, 0.02, 0.0) == 1
            && particles::step_function(&rec, 0.02, -1.0) == 0
            && particles::upper_envelope(&rec, 0.02, 1.0) == particles::step_function(&rec, 0.02, 1.0),
        "H(0) = 0 and envelope matches off the jumps".into(),
    ));

    let dir = std::env::temp_dir().join(format!("peierls_selftest_{}", std::process::id()));
    let empty = analysis::ConvergenceReport {
        scenario: SweepScenario::two_particle(),
        effective_mobility: 1.0,
        reference_collision_times: vec![],
        per_epsilon: vec![],
    };
    let files = report::emit_report(&empty, &dir)?;
    let header_only = std::fs::read_to_string(&files[0])?.lines().count() == 1;
    std::fs::remove_dir_all(&dir).ok();
    rows.push(row("empty sweep emits a header-only table", header_only, String::new()));

    Ok(rows)
}
