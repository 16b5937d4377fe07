//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::allocation::{self, random_instance};
use crate::config::{keys_help, Config};
use crate::error::{Error, Result};
use crate::radiometry::Luminaire;
use crate::raytrace::{GainTensor, MAX_ORDER};
use crate::scenarios::{self, Scene};

/// Environment variable consulted when `--out` is not given.
pub const OUT_ENV: &str = "CABIN_VLC_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "cabin-vlc",
    version,
    about = "Cabin visible-light channel simulator and resource allocator",
    after_long_help = keys_help()
)]
pub struct Cli {
    /// Worker threads for compute stages (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trace every (luminaire, device, branch) channel and write the gain tensor.
    #[command(after_long_help = keys_help())]
    Simulate(SimulateArgs),
    /// Solve the allocation for a gain tensor written by `simulate`.
    #[command(after_long_help = keys_help())]
    Allocate(AllocateArgs),
    /// Full pipeline: scene, channels, allocation and link reports.
    #[command(after_long_help = keys_help())]
    Scenario(SimArgs),
    /// Repeat the scenario pipeline over values of one numeric config key.
    #[command(after_long_help = keys_help())]
    Sweep(SweepArgs),
    /// Write the frozen scene (geometry, luminaires, reflecting elements).
    #[command(after_long_help = keys_help())]
    DumpScene(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, value_name = "DIR", env = OUT_ENV, default_value = "out")]
    pub out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fixed reduction order (bit-exact output); overrides the config.
    #[arg(long, conflicts_with = "nondeterministic")]
    pub deterministic: bool,
    /// Allow thread-dependent reduction order for speed.
    #[arg(long)]
    pub nondeterministic: bool,
    /// Highest reflection order; overrides the config.
    #[arg(long, value_name = "N", value_parser = parse_order)]
    pub max_order: Option<u8>,
    /// Scenario id (devices per passenger); overrides the config.
    #[arg(long, value_name = "ID")]
    pub scenario: Option<u8>,
    /// Reuse a scene written by `dump-scene` instead of rebuilding it.
    #[arg(long, value_name = "FILE")]
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Also write every impulse response to `cir.csv`.
    #[arg(long)]
    pub dump_cir: bool,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// `gains.json` written by `simulate`.
    #[arg(long, value_name = "FILE", required_unless_present = "random")]
    pub gains: Option<PathBuf>,
    /// Solve a random instance `PxDxL` (passengers, devices each,
    /// luminaires) instead.
    #[arg(long, value_name = "PxDxL", conflicts_with = "gains")]
    pub random: Option<String>,
    /// Seed for `--random`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also solve by exhaustive enumeration and compare.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Dotted config key, e.g. `receiver.fov_deg`.
    #[arg(long, value_name = "KEY")]
    pub param: String,
    /// Comma-separated values.
    #[arg(long, value_name = "V,..", value_delimiter = ',', num_args = 0..)]
    pub values: Vec<f64>,
}

fn parse_order(s: &str) -> std::result::Result<u8, String> {
    let n: u8 = s.parse().map_err(|e| format!("{e}"))?;
    if n > MAX_ORDER {
        return Err(format!(
            "{n} exceeds the limit; at most second order reflections are traced"
        ));
    }
    Ok(n)
}

/// Gain tensor file exchanged between `simulate` and `allocate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainsFile {
    pub luminaires: Vec<Luminaire>,
    pub tensor: GainTensor,
}

/// Parses `argv` and runs the command; returns the process exit status.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", chain(&e));
            1
        }
    }
}

fn chain(e: &Error) -> String {
    let mut s = e.to_string();
    let mut src = std::error::Error::source(e);
    while let Some(x) = src {
        if !s.contains(&x.to_string()) {
            let _ = write!(s, ": {x}");
        }
        src = x.source();
    }
    s
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::invalid("threads", e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Allocate(a) => allocate(&a),
        Command::Scenario(a) => scenario(&a),
        Command::Sweep(a) => sweep(&a),
        Command::DumpScene(a) => dump_scene(&a),
    }
}

fn load_config(common: &CommonArgs) -> Result<Config> {
    match &common.config {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn sim_config(a: &SimArgs) -> Result<Config> {
    let mut cfg = load_config(&a.common)?;
    if a.deterministic {
        cfg.trace.deterministic = true;
    }
    if a.nondeterministic {
        cfg.trace.deterministic = false;
    }
    if let Some(n) = a.max_order {
        cfg.trace.max_order = n;
    }
    if let Some(id) = a.scenario {
        cfg.scenario.id = id;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_scene(a: &SimArgs, cfg: &Config) -> Result<Scene> {
    match &a.scene {
        Some(p) => Scene::from_json(&read(p)?),
        None => Scene::build(cfg),
    }
    .map_err(|e| e.at_stage("scene"))
}

fn read(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| Error::Io {
        path: p.display().to_string(),
        source: e,
    })
}

/// Writes `files` into `dir`, refusing to replace any existing file unless
/// `force` is set. Nothing is written if any target exists.
fn write_outputs(dir: &Path, force: bool, files: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    if !force {
        if let Some((name, _)) = files.iter().find(|(n, _)| dir.join(n).exists()) {
            return Err(Error::invalid(
                "out",
                format!(
                    "{} exists; pass --force to overwrite",
                    dir.join(name).display()
                ),
            ));
        }
    }
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::Io {
            path: p.display().to_string(),
            source: e,
        })?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let a = &args.sim;
    let cfg = sim_config(a)?;
    let scene = load_scene(a, &cfg)?;
    let (_, set) = scenarios::trace_devices(&scene, &cfg, cfg.scenario.id as usize)
        .map_err(|e| e.at_stage("trace"))?;
    let t = &set.tensor;
    let mut csv = String::from(
        "luminaire,device,passenger,branch,dc_gain,bandwidth_hz,rms_delay_spread_s\n",
    );
    for (l, lum) in t.luminaires.iter().enumerate() {
        for (d, dev) in t.devices.iter().enumerate() {
            for b in 0..t.branches {
                let k = t.offset(l, d, b);
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{}",
                    lum,
                    dev.id,
                    dev.passenger,
                    b + 1,
                    t.dc_gain[k],
                    t.bandwidth_hz[k],
                    t.rms_delay_spread_s[k]
                );
            }
        }
    }
    let file = GainsFile {
        luminaires: scene.luminaires.clone(),
        tensor: set.tensor.clone(),
    };
    let json = serde_json::to_string_pretty(&file).expect("gains serialize");
    let mut files = vec![("gains.json", json), ("gains.csv", csv)];
    if args.dump_cir {
        let mut cir = String::from("luminaire,device,branch,bin,time_s,gain\n");
        for (l, lum) in t.luminaires.iter().enumerate() {
            for (d, dev) in t.devices.iter().enumerate() {
                for b in 0..t.branches {
                    let r = set.response(l, d, b);
                    for (i, g) in r.bins.iter().enumerate().filter(|(_, g)| **g != 0.0) {
                        let _ = writeln!(
                            cir,
                            "{},{},{},{},{},{}",
                            lum,
                            dev.id,
                            b + 1,
                            i,
                            i as f64 * r.bin_width_s,
                            g
                        );
                    }
                }
            }
        }
        files.push(("cir.csv", cir));
    }
    write_outputs(&a.common.out, a.common.force, &files)
}

fn parse_shape(s: &str) -> Result<(usize, usize, usize)> {
    let v: Vec<usize> = s
        .split('x')
        .map(|x| x.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid("random", format!("expected PxDxL, got `{s}`")))?;
    match v[..] {
        [p, d, l] => Ok((p, d, l)),
        _ => Err(Error::invalid("random", format!("expected PxDxL, got `{s}`"))),
    }
}

fn allocate(a: &AllocateArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let (problem, table) = if let Some(shape) = &a.random {
        let (p, d, l) = parse_shape(shape)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
        (random_instance(&mut rng, p, d, l), None)
    } else {
        let path = a.gains.as_ref().expect("clap requires --gains");
        let file: GainsFile = serde_json::from_str(&read(path)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let (sol, rows) = scenarios::allocate_only(&cfg, &file.tensor, &file.luminaires)?;
        let p = scenarios::problem_from_tensor(&file.tensor, &file.luminaires, &cfg)?;
        (p, Some((sol, rows)))
    };
    let sol = match &table {
        Some((s, _)) => s.clone(),
        None => allocation::solve_exact(&problem).map_err(|e| e.at_stage("allocation"))?,
    };
    let mut text = String::new();
    let _ = writeln!(text, "objective {}", sol.objective);
    let _ = writeln!(
        text,
        "{:<10} {:<7} {:<11} {:<7} {:<10}",
        "Passenger", "Device", "Light unit", "Branch", "Wavelength"
    );
    for d in &sol.assignment.devices {
        let _ = writeln!(
            text,
            "{:<10} {:<7} {:<11} {:<7} {:<10}",
            d.passenger, d.device, d.luminaire, d.branch, d.bands
        );
    }
    if a.check {
        let brute = allocation::solve_bruteforce(&problem).map_err(|e| e.at_stage("allocation"))?;
        let _ = writeln!(text, "brute-force objective {}", brute.objective);
        if brute.objective != sol.objective {
            return Err(Error::Infeasible(format!(
                "exact {} and exhaustive {} objectives differ",
                sol.objective, brute.objective
            )));
        }
    }
    print!("{text}");
    let json = serde_json::to_string_pretty(&sol).expect("solution serializes");
    let mut files = vec![("allocation.txt", text), ("allocation.json", json)];
    if let Some((_, rows)) = &table {
        let json = serde_json::to_string_pretty(rows).expect("rows serialize");
        files.push(("links.json", json));
    }
    write_outputs(&a.common.out, a.common.force, &files)
}

fn scenario(a: &SimArgs) -> Result<()> {
    let cfg = sim_config(a)?;
    let scene = load_scene(a, &cfg)?;
    let report = scenarios::run_with_scene(&cfg, &scene)?;
    print!("{}", report.allocation_table());
    write_outputs(
        &a.common.out,
        a.common.force,
        &[
            ("report.json", report.to_json()),
            ("report.csv", report.to_csv()),
            ("allocation.txt", report.allocation_table()),
        ],
    )
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let cfg = sim_config(&a.sim)?;
    let reports = scenarios::sweep(&cfg, &a.param, &a.values)?;
    let mut csv = String::new();
    for (i, (v, r)) in a.values.iter().zip(&reports).enumerate() {
        let body = r.to_csv();
        let mut lines = body.lines();
        let header = lines.next().unwrap_or_default();
        if i == 0 {
            let _ = writeln!(csv, "value,{header}");
        }
        for l in lines {
            let _ = writeln!(csv, "{v},{l}");
        }
    }
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    write_outputs(
        &a.sim.common.out,
        a.sim.common.force,
        &[("sweep.csv", csv), ("sweep.json", json)],
    )
}

fn dump_scene(a: &CommonArgs) -> Result<()> {
    let cfg = load_config(a)?;
    let scene = Scene::build(&cfg).map_err(|e| e.at_stage("scene"))?;
    let mut csv = String::from("order,cx,cy,cz,nx,ny,nz,area_m2,reflectance\n");
    for p in scene.patches.iter() {
        let n = p.normal.vec();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            p.order, p.center.x, p.center.y, p.center.z, n.x, n.y, n.z, p.area, p.reflectance
        );
    }
    write_outputs(a.out.as_path(), a.force, &[("scene.json", scene.to_json()), ("patches.csv", csv)])
}
