//! `dmi-retarget` command-line interface.
//!
//! Exit codes: 0 on success, 1 when an input fails validation or a stage
//! errors, 2 on usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use dmi_retarget::dmi::{build_interaction_mask, compute_dmi_field, sensor_forward_kinematics, DEFAULT_PAIRS};
use dmi_retarget::io;
use dmi_retarget::metrics::{self, MetricReport};
use dmi_retarget::objective::RetargetConfig;
use dmi_retarget::optimizer::{retarget_with_sensors, OptimizerSettings};
use dmi_retarget::scs::{coordinate_grid, ScsConfig, SemanticCoordinate, SensorSet};
use dmi_retarget::synthetic::{generate, SyntheticSpec};
use dmi_retarget::{SelectionMode, SkinnedCharacter};

#[derive(Parser)]
#[command(name = "dmi-retarget", version, about = "Geometry-aware motion retargeting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive surface sensors on a character.
    Scs {
        #[arg(long)]
        character: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        grid: GridArg,
    },
    /// Compute the interaction field of a motion.
    Dmi {
        #[arg(long)]
        character: PathBuf,
        #[arg(long)]
        sensors: PathBuf,
        #[arg(long)]
        motion: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PAIRS)]
        pairs: usize,
        #[arg(long)]
        out: PathBuf,
        /// Rank pairs once on the first frame instead of every frame.
        #[arg(long)]
        static_selection: bool,
    },
    /// Retarget a motion from one character to another.
    Retarget(RetargetArgs),
    /// Evaluate candidate motions against the source.
    Metrics {
        #[arg(long)]
        source_char: PathBuf,
        #[arg(long)]
        target_char: PathBuf,
        /// Source motion, bound to the source character.
        #[arg(long)]
        source: PathBuf,
        /// Candidate motion on the target character; repeat to compare.
        #[arg(long, required = true)]
        candidate: Vec<PathBuf>,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Also write the reports as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArg,
    },
    /// Write the synthetic biped pair and its motions.
    GenSynthetic {
        /// Shape multipliers; defaults to the built-in pair.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Check files against every invariant.
    Validate {
        #[arg(long)]
        character: PathBuf,
        #[arg(long)]
        motion: Option<PathBuf>,
        #[arg(long)]
        sensors: Option<PathBuf>,
        #[arg(long)]
        field: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GridArg {
    /// Coordinate grid as BONESxLxPHI; defaults to every bone with 4x4.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize, usize)>,
}

impl GridArg {
    fn coordinates(&self, character: &SkinnedCharacter) -> Vec<SemanticCoordinate> {
        let (bones, l, phi) = self.grid.unwrap_or((character.bone_count(), 4, 4));
        coordinate_grid(bones, l, phi)
    }
}

fn parse_grid(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    let [b, l, p] = parts.as_slice() else {
        return Err(format!("expected BONESxLxPHI, got {s:?}"));
    };
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    let g = (num(b)?, num(l)?, num(p)?);
    if g.0 == 0 || g.1 == 0 || g.2 == 0 {
        return Err("grid dimensions must be positive".into());
    }
    Ok(g)
}

#[derive(Args)]
struct RetargetArgs {
    #[arg(long)]
    source_char: PathBuf,
    #[arg(long)]
    target_char: PathBuf,
    #[arg(long)]
    motion: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lambda_rec: f64,
    #[arg(long, default_value_t = 5.0)]
    lambda_dmi: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_ef: f64,
    /// Weight of the offset-length term.
    #[arg(long, default_value_t = 0.0)]
    lambda_magnitude: f64,
    #[arg(long, default_value_t = DEFAULT_PAIRS)]
    pairs: usize,
    #[arg(long, default_value_t = 300)]
    iters: usize,
    #[arg(long, default_value_t = 1e-2)]
    step_size: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    static_selection: bool,
    #[command(flatten)]
    grid: GridArg,
}

fn selection(static_selection: bool) -> SelectionMode {
    if static_selection {
        SelectionMode::Static
    } else {
        SelectionMode::PerFrame
    }
}

fn derive_sensors(character: &SkinnedCharacter, grid: &GridArg) -> SensorSet {
    SensorSet::derive(character, &grid.coordinates(character), &ScsConfig::default())
}

fn check_sensors_match(character: &SkinnedCharacter, sensors: &SensorSet, owner: &str, path: &Path) -> Result<()> {
    if owner != character.name() {
        log::warn!(
            "{}: sensors were derived on {owner:?}, using them with {:?}",
            path.display(),
            character.name()
        );
    }
    let n = character.joint_count();
    if sensors.features.iter().any(|f| f.skin_weights.iter().any(|&(j, _)| j >= n)) {
        bail!("{}: sensors reference joints missing from {}", path.display(), character.name());
    }
    Ok(())
}

fn run_scs(character: &Path, out: &Path, grid: &GridArg) -> Result<()> {
    let c = io::load_character(character)?;
    let sensors = derive_sensors(&c, grid);
    info!("{} of {} sensors valid", sensors.valid_count(), sensors.len());
    io::save_sensors(out, c.name(), &sensors)?;
    println!("sensors={} valid={}", sensors.len(), sensors.valid_count());
    Ok(())
}

fn run_dmi(character: &Path, sensors: &Path, motion: &Path, pairs: usize, out: &Path, static_selection: bool) -> Result<()> {
    let c = io::load_character(character)?;
    let (s, owner) = io::load_sensors(sensors)?;
    check_sensors_match(&c, &s, &owner, sensors)?;
    let m = io::load_bound_motion(motion, &c)?;
    let trajectory = sensor_forward_kinematics(&c, &s, &m)?;
    let mask = build_interaction_mask(&s, None)?;
    let field = compute_dmi_field(&trajectory, &mask, pairs, selection(static_selection))?;
    io::save_dmi_field(out, &field)?;
    println!("frames={} entries={}", field.frame_count(), field.entry_count());
    Ok(())
}

fn run_retarget(a: &RetargetArgs) -> Result<()> {
    let source = io::load_character(&a.source_char)?;
    let target = io::load_character(&a.target_char)?;
    let motion = io::load_bound_motion(&a.motion, &source)?;
    let config = RetargetConfig {
        lambda_rec: a.lambda_rec,
        lambda_dmi: a.lambda_dmi,
        lambda_ef: a.lambda_ef,
        lambda_magnitude: a.lambda_magnitude,
        pairs: a.pairs,
        end_effectors: None,
        selection: selection(a.static_selection),
        optimizer: OptimizerSettings {
            max_iterations: a.iters,
            step_size: a.step_size,
            seed: a.seed,
            ..OptimizerSettings::default()
        },
    };
    let source_sensors = derive_sensors(&source, &a.grid);
    let target_sensors = derive_sensors(&target, &a.grid);
    let result = retarget_with_sensors(&source, &source_sensors, &target, &target_sensors, &motion, &config)?;
    for (i, l) in result.loss_trace.iter().enumerate() {
        eprintln!(
            "iter={i} total={:.9e} dmi={:.9e} rec={:.9e} ef={:.9e} magnitude={:.9e} valid_pairs={}",
            l.total, l.dmi, l.rec, l.ef, l.magnitude, l.valid_pair_count
        );
    }
    io::save_motion(&a.out, &result.motion, target.joint_names())?;
    let best = result.best_loss();
    println!(
        "iterations={} best_iteration={} termination={:?} total={:.9e} dmi={:.9e} rec={:.9e} ef={:.9e}",
        result.iterations, result.best_iteration, result.termination, best.total, best.dmi, best.rec, best.ef
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.6e}"))
}

#[allow(clippy::too_many_arguments)]
fn run_metrics(
    source_char: &Path,
    target_char: &Path,
    source: &Path,
    candidates: &[PathBuf],
    ground_truth: Option<&Path>,
    json: Option<&Path>,
    grid: &GridArg,
) -> Result<()> {
    let a = io::load_character(source_char)?;
    let b = io::load_character(target_char)?;
    let m = io::load_bound_motion(source, &a)?;
    let gt = ground_truth.map(|p| io::load_bound_motion(p, &b)).transpose()?;
    let sa = derive_sensors(&a, grid);
    let sb = derive_sensors(&b, grid);
    let mut reports: Vec<(String, MetricReport)> = Vec::new();
    for path in candidates {
        let cand = io::load_bound_motion(path, &b)?;
        let r = metrics::evaluate(&a, &sa, &m, &b, &sb, &cand, gt.as_ref())
            .with_context(|| format!("evaluating {}", path.display()))?;
        reports.push((path.display().to_string(), r));
    }
    if let [(name, r)] = reports.as_slice() {
        println!("candidate={name}");
        println!("mse_global={}", fmt_opt(r.mse_global));
        println!("mse_local={}", fmt_opt(r.mse_local));
        println!("contact_error={:.6e}", r.contact_error());
        println!("contact_pairs={}", r.contact.contact_pairs);
        println!("penetration_ratio={:.6e}", r.penetration_ratio());
    } else {
        println!(
            "{:<32} {:>14} {:>14} {:>14} {:>14}",
            "candidate", "mse_global", "mse_local", "contact_error", "penetration"
        );
        for (name, r) in &reports {
            println!(
                "{:<32} {:>14} {:>14} {:>14.6e} {:>14.6e}",
                name,
                fmt_opt(r.mse_global),
                fmt_opt(r.mse_local),
                r.contact_error(),
                r.penetration_ratio()
            );
        }
    }
    if let Some(path) = json {
        let map: std::collections::BTreeMap<_, _> = reports.into_iter().collect();
        io::save_report(path, &map)?;
    }
    Ok(())
}

fn run_gen_synthetic(spec: Option<&Path>, out_dir: &Path) -> Result<()> {
    let spec = match spec {
        Some(p) => io::load_synthetic_spec(p)?,
        None => SyntheticSpec::default(),
    };
    let set = generate(&spec)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    io::save_character(&out_dir.join("source.json"), &set.source)?;
    io::save_character(&out_dir.join("target.json"), &set.target)?;
    for (name, motion) in &set.motions {
        io::save_motion(&out_dir.join(format!("{name}.json")), motion, set.source.joint_names())?;
    }
    println!("wrote source, target and {} motions to {}", set.motions.len(), out_dir.display());
    Ok(())
}

fn run_validate(character: &Path, motion: Option<&Path>, sensors: Option<&Path>, field: Option<&Path>) -> Result<()> {
    let c = io::load_character(character)?;
    println!("character ok: {} joints, {} vertices, {} faces", c.joint_count(), c.vertices().len(), c.faces().len());
    if let Some(p) = motion {
        let m = io::load_bound_motion(p, &c)?;
        println!("motion ok: {} frames", m.frame_count());
    }
    if let Some(p) = sensors {
        let (s, owner) = io::load_sensors(p)?;
        check_sensors_match(&c, &s, &owner, p)?;
        if let Some(i) = s.first_non_orthonormal(1e-6) {
            bail!("{}: sensor {i} has a non-orthonormal tangent frame", p.display());
        }
        println!("sensors ok: {} ({} valid)", s.len(), s.valid_count());
    }
    if let Some(p) = field {
        let f = io::load_dmi_field(p)?;
        println!("field ok: {} frames, {} entries", f.frame_count(), f.entry_count());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Scs { character, out, grid } => run_scs(&character, &out, &grid),
        Command::Dmi {
            character,
            sensors,
            motion,
            pairs,
            out,
            static_selection,
        } => run_dmi(&character, &sensors, &motion, pairs, &out, static_selection),
        Command::Retarget(args) => run_retarget(&args),
        Command::Metrics {
            source_char,
            target_char,
            source,
            candidate,
            ground_truth,
            json,
            grid,
        } => run_metrics(
            &source_char,
            &target_char,
            &source,
            &candidate,
            ground_truth.as_deref(),
            json.as_deref(),
            &grid,
        ),
        Command::GenSynthetic { spec, out_dir } => run_gen_synthetic(spec.as_deref(), &out_dir),
        Command::Validate {
            character,
            motion,
            sensors,
            field,
        } => run_validate(&character, motion.as_deref(), sensors.as_deref(), field.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
