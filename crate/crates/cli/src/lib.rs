//! The `hsa` command line: search suites, reward training and distillation,
//! approach planning, evaluation and plotting.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use hsa_core::demo::{parse_demonstrations, synthetic_demos, to_jsonl, DemoError};
use hsa_core::distill::{estimate_kd_reward, generate_kd_sentences, smooth_reward};
use hsa_core::field::FieldError;
use hsa_core::kdmrl::{Kdmrl, KdmrlError};
use hsa_core::map::{AnnotatedMap, MapError, OccupancyGrid};
use hsa_core::plot::{search_svg, trajectories_svg};
use hsa_core::prior::{HttpSource, PriorError, ReplaySource};
use hsa_core::seed::{stream, STREAM_DEMOS, STREAM_SCENARIO};
use hsa_core::sim::{
    compute_metrics, read_rows_csv, run_approach_episode, random_start, write_rows_csv, ApproachFields, ApproachMethod, ApproachScenario,
    EpisodeRow, LogEntry, Metrics, SimError,
};
use hsa_core::state::StateMetric;
use hsa_core::theory::{run_theorem_trials, summarize};
use hsa_core::{Field, Grid, Pose, Traj};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod config;
pub mod suite;

use config::{Format, Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Kdmrl(#[from] KdmrlError),
    #[error("demonstrations: {0}")]
    Demo(#[from] DemoError),
    /// Evaluation finished but some episodes or trials failed.
    #[error("{0}")]
    Failures(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Failures(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hsa", version, about = "Human search and approach experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run search episodes for one or more methods and write results, logs and plots.
    Search,
    /// Fit the demonstration reward and write it as a field file.
    TrainReward,
    /// Build the text-derived reward from trajectory sentences.
    Distill(DistillArgs),
    /// Plan one approach and write the trajectory and a plot.
    Plan(PlanArgs),
    /// Metrics from a results CSV, or the numeric bound checks with --theory.
    Eval(EvalArgs),
    /// Plot a search log or approach trajectories.
    Plot(PlotArgs),
    /// Write scripted demonstrations as JSONL.
    GenDemos(GenDemosArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct DistillArgs {
    /// Gaze slice for a single sentence file; a directory needs gaze0.txt and gaze1.txt.
    #[arg(long)]
    pub gaze: Option<u8>,
    /// Image captions, one per line; sentences are requested from the endpoint.
    #[arg(long)]
    pub captions: Option<PathBuf>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub reward_i: Option<PathBuf>,
    #[arg(long)]
    pub reward_l: Option<PathBuf>,
    /// Approach method: hybrid, lfd, kd or baseline.
    #[arg(long, default_value = "hybrid")]
    pub approach: String,
    /// Same as `--approach baseline`.
    #[arg(long)]
    pub baseline: bool,
    /// Start pose `x,y,theta`; otherwise drawn from the seed.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub start: Option<Vec<f64>>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub theory: bool,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 64)]
    pub states: usize,
}

#[derive(Debug, Clone, clap::Args)]
pub struct PlotArgs {
    /// Search log (JSONL) to draw over the world's map.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Trajectory files (JSONL) to draw over an approach scenario.
    #[arg(long = "trajectory")]
    pub trajectories: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub floor: u32,
}

#[derive(Debug, Clone, clap::Args)]
pub struct GenDemosArgs {
    #[arg(long, default_value_t = 9)]
    pub per_gaze: usize,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
}

/// Writes to stdout; a closed pipe ends output quietly.
fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io(Path::new("<stdout>"), e)),
        _ => Ok(()),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    let p = p.as_deref().ok_or_else(|| CliError::Usage(format!("{flag} is required")))?;
    if !p.exists() {
        return Err(CliError::Usage(format!("{flag}: file not found: {}", p.display())));
    }
    Ok(p)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.common.resolve()?;
    if cli.common.dump_config {
        emit(&cfg.to_json())?;
        return Ok(());
    }
    match cli.command {
        Command::Search => cmd_search(&cfg),
        Command::TrainReward => cmd_train_reward(&cfg),
        Command::Distill(a) => cmd_distill(&cfg, &a),
        Command::Plan(a) => cmd_plan(&cfg, &a),
        Command::Eval(a) => cmd_eval(&cfg, &a),
        Command::Plot(a) => cmd_plot(&cfg, &a),
        Command::GenDemos(a) => cmd_gen_demos(&cfg, &a),
    }
}

#[derive(Debug, Serialize)]
struct MethodMetrics {
    method: String,
    #[serde(flatten)]
    metrics: Metrics,
}

#[derive(Debug, Serialize)]
struct Summary {
    seed: u64,
    /// SPF is success discounted by feedback requests, S / (1 + FD).
    spf_definition: &'static str,
    methods: Vec<MethodMetrics>,
}

const SPF_DEFINITION: &str = "success / (1 + false detections)";

fn per_method(rows: &[EpisodeRow]) -> Result<Vec<MethodMetrics>, CliError> {
    let mut names: Vec<String> = Vec::new();
    for r in rows {
        if !names.contains(&r.method) {
            names.push(r.method.clone());
        }
    }
    names
        .into_iter()
        .map(|m| {
            let sel: Vec<EpisodeRow> = rows.iter().filter(|r| r.method == m).cloned().collect();
            Ok(MethodMetrics {
                metrics: compute_metrics(&sel)?,
                method: m,
            })
        })
        .collect()
}

fn persons_on(suite_persons: &[hsa_core::perception::Person], floor: u32) -> Vec<(u32, [f64; 2])> {
    suite_persons.iter().filter(|p| p.floor == floor).map(|p| (p.id, [p.pose.x, p.pose.y])).collect()
}

fn log_svgs(map: &AnnotatedMap, persons: &[hsa_core::perception::Person], log: &[LogEntry]) -> Vec<(Option<u32>, String)> {
    let floors: BTreeSet<u32> = log.iter().map(|e| e.floor).collect();
    let many = floors.len() > 1;
    floors
        .into_iter()
        .map(|f| (many.then_some(f), search_svg(map, f, log, &persons_on(persons, f))))
        .collect()
}

pub fn cmd_search(cfg: &RunConfig) -> Result<(), CliError> {
    let methods = suite::parse_methods(&cfg.methods)?;
    let episodes = suite::load_episodes(cfg, &methods)?;
    let results = suite::run_batch(&episodes, &methods, cfg)?;
    let out = out_dir(cfg);
    let rows: Vec<EpisodeRow> = results.iter().map(|r| r.row()).collect();
    match cfg.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_rows_csv(&mut buf, &rows).map_err(|e| CliError::Usage(e.to_string()))?;
            write(&out.join("results.csv"), &String::from_utf8(buf).expect("csv is utf-8"))?;
        }
        Format::Json => write(&out.join("results.json"), &(serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n"))?,
    }
    for (r, e) in results.iter().zip(episodes.iter().flat_map(|e| std::iter::repeat_n(e, methods.len()))) {
        let stem = format!("{}_{}_{}", r.world, r.episode, r.method.name());
        write(&out.join("logs").join(format!("{stem}.jsonl")), &r.log_jsonl())?;
        for (floor, svg) in log_svgs(&e.world.map, &e.world.persons, &r.events) {
            let name = match floor {
                Some(f) => format!("{stem}_floor{f}.svg"),
                None => format!("{stem}.svg"),
            };
            write(&out.join("plots").join(name), &svg)?;
        }
    }
    let summary = Summary {
        seed: cfg.seed,
        spf_definition: SPF_DEFINITION,
        methods: per_method(&rows)?,
    };
    write(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))?;
    for m in &summary.methods {
        emit(&format!(
            "{:<16} episodes {:>3}  SR {:.3}  SPL {:.3}  SPF {:.3}  FD {:.3}\n",
            m.method, m.metrics.episodes, m.metrics.sr, m.metrics.spl, m.metrics.spf, m.metrics.mean_fd
        ))?;
    }
    Ok(())
}

pub fn cmd_train_reward(cfg: &RunConfig) -> Result<(), CliError> {
    let path = need(&cfg.paths.demos, "--demos")?;
    let grid = Grid::default();
    let demos = parse_demonstrations(&read(path)?, &grid)?;
    let model = Kdmrl::new(cfg.kdmrl, grid.clone())?.fit(&demos)?;
    let field = model.field(&grid);
    let out = cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from("reward_i.json"));
    write(&out, &field.to_json()?)?;
    emit(&format!("objective {:.12e}\nalpha_norm {:.12e}\n", model.objective, model.alpha_norm()))?;
    Ok(())
}

fn lines(text: &str) -> Vec<String> {
    ReplaySource::from_text(text).lines
}

pub fn cmd_distill(cfg: &RunConfig, a: &DistillArgs) -> Result<(), CliError> {
    let grid = Grid::default();
    let mut sets: Vec<(u8, Vec<String>)> = Vec::new();
    if let Some(caps) = &a.captions {
        if !caps.exists() {
            return Err(CliError::Usage(format!("--captions: file not found: {}", caps.display())));
        }
        let captions = lines(&read(caps)?);
        let src = HttpSource::new(cfg.llm_url.clone());
        for g in gaze_values(a.gaze)? {
            sets.push((g, generate_kd_sentences(&captions, g, cfg.kd.n, &src)?));
        }
    } else {
        let path = need(&cfg.paths.sentences, "--sentences")?;
        if path.is_dir() {
            for g in gaze_values(a.gaze)? {
                let f = path.join(format!("gaze{g}.txt"));
                if !f.exists() {
                    return Err(CliError::Usage(format!("sentence file not found: {}", f.display())));
                }
                sets.push((g, lines(&read(&f)?)));
            }
        } else {
            let g = a.gaze.ok_or_else(|| CliError::Usage("--gaze is required with a single sentence file".into()))?;
            gaze_values(Some(g))?;
            sets.push((g, lines(&read(path)?)));
        }
    }
    let mut field = Field::zeros(grid.clone());
    for (g, s) in &sets {
        field = field.add(&estimate_kd_reward(s, &grid, &cfg.kd, *g))?;
    }
    let field = smooth_reward(&field, cfg.kd.sigma_r, StateMetric::default());
    let out = cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from("reward_l.json"));
    write(&out, &field.to_json()?)?;
    for (g, s) in &sets {
        emit(&format!("gaze {g}: {} sentences\n", s.len()))?;
    }
    Ok(())
}

fn gaze_values(g: Option<u8>) -> Result<Vec<u8>, CliError> {
    match g {
        None => Ok(vec![0, 1]),
        Some(g @ (0 | 1)) => Ok(vec![g]),
        Some(g) => Err(CliError::Usage(format!("--gaze must be 0 or 1, got {g}"))),
    }
}

/// Approach scenario file: a map (inline), the person's pose and either a
/// fixed start or a start distance for seeded random starts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub map: serde_json::Value,
    pub human: Pose,
    #[serde(default)]
    pub start: Option<Pose>,
    #[serde(default = "default_start_distance")]
    pub start_distance: f64,
}

fn default_start_distance() -> f64 {
    5.0
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        serde_json::from_str(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn grid(&self) -> Result<OccupancyGrid, CliError> {
        Ok(AnnotatedMap::from_json(&self.map.to_string())?.grid(0).clone())
    }

    /// The fixed start, or a seeded random start at `start_distance`.
    /// Random starts are redrawn until they land on a free cell.
    pub fn scenario(&self, seed: u64) -> Result<ApproachScenario, CliError> {
        let grid = self.grid()?;
        let start = match self.start {
            Some(s) => s,
            None => {
                let mut rng = stream(seed, STREAM_SCENARIO);
                (0..1000)
                    .map(|_| random_start(&self.human, self.start_distance, &mut rng))
                    .find(|s| grid.is_free_world([s.x, s.y]))
                    .ok_or_else(|| CliError::Usage("no free start position at the given distance".into()))?
            }
        };
        Ok(ApproachScenario {
            grid,
            human: self.human,
            start,
        })
    }
}

fn load_field(p: &Path) -> Result<Field, CliError> {
    Ok(Field::from_json(&read(p)?)?)
}

/// Loads the reward fields for planning; a missing one is all zeros.
pub fn load_fields(r_i: Option<&Path>, r_l: Option<&Path>) -> Result<Option<ApproachFields>, CliError> {
    let fi = r_i.map(load_field).transpose()?;
    let fl = r_l.map(load_field).transpose()?;
    Ok(match (fi, fl) {
        (Some(r_i), Some(r_l)) => Some(ApproachFields { r_i, r_l }),
        (Some(r_i), None) => Some(ApproachFields {
            r_l: Field::zeros(r_i.grid.clone()),
            r_i,
        }),
        (None, Some(r_l)) => Some(ApproachFields {
            r_i: Field::zeros(r_l.grid.clone()),
            r_l,
        }),
        (None, None) => None,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajLine {
    t: f64,
    x: f64,
    y: f64,
    theta: f64,
    v: f64,
}

pub fn trajectory_jsonl(t: &Traj) -> String {
    let mut s = String::new();
    for p in t.samples() {
        let l = TrajLine {
            t: p.t,
            x: p.pose.x,
            y: p.pose.y,
            theta: p.pose.theta,
            v: p.v,
        };
        s.push_str(&serde_json::to_string(&l).expect("plain struct"));
        s.push('\n');
    }
    s
}

pub fn parse_trajectory(text: &str) -> Result<Traj, String> {
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let l: TrajLine = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        samples.push(hsa_core::geom::TrajectorySample {
            t: l.t,
            pose: Pose::new(l.x, l.y, l.theta),
            v: l.v,
        });
    }
    Traj::new(samples, hsa_core::geom::Frame::World).map_err(|e| e.to_string())
}

pub fn cmd_plan(cfg: &RunConfig, a: &PlanArgs) -> Result<(), CliError> {
    let first = cfg.paths.worlds.first().cloned();
    let world = need(&first, "--world")?;
    let file = ScenarioFile::load(world)?;
    let method: ApproachMethod = if a.baseline {
        ApproachMethod::Baseline
    } else {
        a.approach.parse().map_err(|e: SimError| CliError::Usage(e.to_string()))?
    };
    let mut scn = file.scenario(cfg.seed)?;
    if let Some(s) = &a.start {
        if s.len() != 3 {
            return Err(CliError::Usage("--start takes x,y,theta".into()));
        }
        scn.start = Pose::new(s[0], s[1], s[2]);
    }
    let fields = match load_fields(a.reward_i.as_deref(), a.reward_l.as_deref())? {
        Some(f) => f,
        None if method == ApproachMethod::Baseline => ApproachFields {
            r_i: Field::zeros(Grid::default()),
            r_l: Field::zeros(Grid::default()),
        },
        None => return Err(CliError::Usage("--reward-i or --reward-l is required for planned approaches".into())),
    };
    let r = run_approach_episode(&scn, method, &fields, &cfg.planner, cfg.seed)?;
    let out = out_dir(cfg);
    write(&out.join("trajectory.jsonl"), &trajectory_jsonl(&r.trajectory))?;
    write(
        &out.join("trajectory.svg"),
        &trajectories_svg(&scn.grid, &scn.human, &[(method.name().to_string(), r.trajectory.clone())]),
    )?;
    emit(&format!(
        "{} g={} success={} final_distance {:.3} path_length {:.3} heading_variation {:.3}\n",
        method.name(),
        r.g,
        r.success,
        r.final_distance,
        r.path_length,
        r.heading_variation
    ))
}

#[derive(Debug, Serialize)]
struct EvalReport {
    spf_definition: &'static str,
    overall: Metrics,
    methods: Vec<MethodMetrics>,
    failures: usize,
}

pub fn cmd_eval(cfg: &RunConfig, a: &EvalArgs) -> Result<(), CliError> {
    let (text, failed) = if a.theory {
        let r = summarize(&run_theorem_trials(a.trials, a.states, cfg.seed));
        (serde_json::to_string_pretty(&r).expect("report serializes"), (r.violations > 0).then(|| format!("{} bound violations", r.violations)))
    } else {
        let path = need(&a.results, "--results")?;
        let rows = read_rows_csv(&read(path)?)?;
        let failures = rows.iter().filter(|r| !r.success).count();
        let rep = EvalReport {
            spf_definition: SPF_DEFINITION,
            overall: compute_metrics(&rows)?,
            methods: per_method(&rows)?,
            failures,
        };
        (serde_json::to_string_pretty(&rep).expect("report serializes"), (failures > 0).then(|| format!("{failures} failed episodes")))
    };
    match &cfg.paths.out {
        Some(p) => write(p, &(text + "\n"))?,
        None => emit(&(text + "\n"))?,
    }
    match failed {
        Some(msg) => Err(CliError::Failures(msg)),
        None => Ok(()),
    }
}

pub fn cmd_plot(cfg: &RunConfig, a: &PlotArgs) -> Result<(), CliError> {
    let first = cfg.paths.worlds.first().cloned();
    let world = need(&first, "--world")?;
    let svg = if let Some(log) = &a.log {
        if !log.exists() {
            return Err(CliError::Usage(format!("--log: file not found: {}", log.display())));
        }
        let suite = suite::load_suite(world, cfg)?;
        let mut entries = Vec::new();
        for (i, line) in read(log)?.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let e: LogEntry = serde_json::from_str(line).map_err(|e| CliError::Usage(format!("{}: line {}: {e}", log.display(), i + 1)))?;
            entries.push(e);
        }
        search_svg(&suite.map, a.floor, &entries, &persons_on(&suite.persons, a.floor))
    } else if !a.trajectories.is_empty() {
        let file = ScenarioFile::load(world)?;
        let mut trajs = Vec::new();
        for p in &a.trajectories {
            let t = parse_trajectory(&read(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            let name = p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            trajs.push((name, t));
        }
        trajectories_svg(&file.grid()?, &file.human, &trajs)
    } else {
        return Err(CliError::Usage("give --log or --trajectory".into()));
    };
    let out = cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from("plot.svg"));
    write(&out, &svg)
}

pub fn cmd_gen_demos(cfg: &RunConfig, a: &GenDemosArgs) -> Result<(), CliError> {
    let recs = synthetic_demos(a.per_gaze, a.steps, &mut stream(cfg.seed, STREAM_DEMOS));
    let out = cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from("demos.jsonl"));
    write(&out, &to_jsonl(&recs))
}

/// Entry point for the binary: parses arguments and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
