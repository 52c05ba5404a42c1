//! Deterministic 2D worlds, search and approach episode runners, the
//! feedback oracle and episode metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::FieldError;
use crate::geom::{angle_dist, Waypoint};
use crate::map::{AnnotatedMap, CellIdx, MapError, OccupancyGrid};
use crate::perception::{gaze_flag, observe, DetectionKind, Person, SensorModel};
use crate::planner::{assign_velocities, baseline_trajectory, blend, path_collision_free, plan, PlanError, PlanRequest, PlannerParams, RewardLookup};
use crate::prior::{generate_sentences, label_priors, EmbeddingTable, LocationClue, PriorError, SentenceSource};
use crate::search::{FailureReason, Feedback, Observation, QueryMode, SearchConfig, SearchEvent, SearchFsm, SeenPerson};
use crate::seed::{stream, STREAM_PERCEPTION, STREAM_PLANNER};
use crate::{Field, Pose, Traj};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown method `{0}`")]
    Method(String),
    #[error("world: {0}")]
    World(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("metrics need at least one episode")]
    NoEpisodes,
    #[error("episode {0}: shortest path must be > 0")]
    ShortestPath(usize),
    #[error("results line {line}: {msg}")]
    Results { line: usize, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMethod {
    Proposed,
    KnowledgePrior,
    CowIndirect,
    Cow,
}

impl SearchMethod {
    pub const ALL: [SearchMethod; 4] = [Self::Proposed, Self::KnowledgePrior, Self::CowIndirect, Self::Cow];

    pub fn uses_prior(self) -> bool {
        matches!(self, Self::Proposed | Self::KnowledgePrior)
    }

    pub fn indirect(self) -> bool {
        matches!(self, Self::Proposed | Self::CowIndirect)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::KnowledgePrior => "knowledge-prior",
            Self::CowIndirect => "cow-indirect",
            Self::Cow => "cow",
        }
    }

    /// The search configuration with this method's prior and detection switches.
    pub fn configure(self, base: &SearchConfig) -> SearchConfig {
        SearchConfig {
            use_prior: self.uses_prior(),
            indirect: self.indirect(),
            ..*base
        }
    }
}

impl fmt::Display for SearchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SearchMethod {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s || m.name().replace('-', "_") == s)
            .ok_or_else(|| SimError::Method(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApproachMethod {
    Hybrid,
    Lfd,
    Kd,
    Baseline,
}

impl ApproachMethod {
    pub const ALL: [ApproachMethod; 4] = [Self::Hybrid, Self::Lfd, Self::Kd, Self::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            Self::Hybrid => "hybrid",
            Self::Lfd => "lfd",
            Self::Kd => "kd",
            Self::Baseline => "baseline",
        }
    }
}

impl fmt::Display for ApproachMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ApproachMethod {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| SimError::Method(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotStart {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub floor: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub robot: RobotStart,
    pub target_id: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapRef {
    Path(PathBuf),
    Inline(serde_json::Value),
}

/// On-disk world: one map, static persons and a list of episodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldFile {
    #[serde(default)]
    pub name: String,
    pub map: MapRef,
    pub persons: Vec<Person>,
    #[serde(default)]
    pub robot: Option<RobotStart>,
    #[serde(default)]
    pub target_id: Option<u32>,
    #[serde(default)]
    pub episodes: Vec<EpisodeSpec>,
    /// Replayed sentence files per target id, relative to the world file.
    #[serde(default)]
    pub sentences: BTreeMap<u32, PathBuf>,
}

/// One search episode's world. Persons are static.
#[derive(Debug, Clone)]
pub struct World {
    pub name: String,
    pub map: Arc<AnnotatedMap>,
    pub persons: Arc<Vec<Person>>,
    pub robot: Pose,
    pub floor: u32,
    pub target_id: u32,
}

impl World {
    pub fn target(&self) -> &Person {
        self.persons.iter().find(|p| p.id == self.target_id).expect("validated")
    }

    pub fn validate(&self, success_radius: f64) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::World(format!("{}: {m}", self.name)));
        if self.floor as usize >= self.map.floors.len() {
            return err(format!("robot floor {} does not exist", self.floor));
        }
        if !self.map.grid(self.floor).is_free_world([self.robot.x, self.robot.y]) {
            return err("robot start is not a free cell".into());
        }
        let mut ids: Vec<u32> = self.persons.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return err("duplicate person id".into());
        }
        for p in self.persons.iter() {
            if p.floor as usize >= self.map.floors.len() {
                return err(format!("person {} on missing floor {}", p.id, p.floor));
            }
        }
        let Some(t) = self.persons.iter().find(|p| p.id == self.target_id) else {
            return err(format!("target_id {} is not a person", self.target_id));
        };
        if t.floor == self.floor && t.pose.distance(&self.robot) <= success_radius {
            return err("robot starts within the success radius of the target".into());
        }
        Ok(())
    }
}

/// Parsed world file with its resolved map and episode list.
#[derive(Debug, Clone)]
pub struct WorldSuite {
    pub name: String,
    /// Map file stem, or the world name for inline maps.
    pub map_name: String,
    pub map: Arc<AnnotatedMap>,
    pub persons: Arc<Vec<Person>>,
    pub episodes: Vec<EpisodeSpec>,
    pub sentences: BTreeMap<u32, PathBuf>,
}

impl WorldSuite {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let file: WorldFile = serde_json::from_str(&text).map_err(|e| SimError::World(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let name = if file.name.is_empty() {
            path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
        } else {
            file.name.clone()
        };
        Self::from_file(file, dir, name)
    }

    pub fn from_file(file: WorldFile, dir: &Path, name: String) -> Result<Self, SimError> {
        let (map, map_name) = match &file.map {
            MapRef::Path(p) => (
                AnnotatedMap::load(&dir.join(p))?,
                p.file_stem().map_or_else(|| name.clone(), |s| s.to_string_lossy().into_owned()),
            ),
            MapRef::Inline(v) => (AnnotatedMap::from_json(&v.to_string())?, name.clone()),
        };
        let mut episodes = file.episodes.clone();
        if let (Some(robot), Some(target_id)) = (file.robot, file.target_id) {
            episodes.insert(0, EpisodeSpec { robot, target_id });
        }
        if episodes.is_empty() {
            return Err(SimError::World(format!("{name}: no episodes (give robot + target_id or episodes)")));
        }
        let sentences = file.sentences.iter().map(|(k, p)| (*k, dir.join(p))).collect();
        Ok(Self {
            name,
            map_name,
            map: Arc::new(map),
            persons: Arc::new(file.persons),
            episodes,
            sentences,
        })
    }

    pub fn world(&self, i: usize) -> World {
        let e = &self.episodes[i];
        World {
            name: self.name.clone(),
            map: self.map.clone(),
            persons: self.persons.clone(),
            robot: Pose::new(e.robot.x, e.robot.y, e.robot.theta),
            floor: e.robot.floor,
            target_id: e.target_id,
        }
    }

    pub fn worlds(&self) -> Vec<World> {
        (0..self.episodes.len()).map(|i| self.world(i)).collect()
    }
}

/// Label occurrence scores for the target's location clue.
pub fn target_priors(world: &World, m: usize, source: &dyn SentenceSource, emb: &EmbeddingTable) -> Result<BTreeMap<String, f64>, SimError> {
    let clue = LocationClue::new(&world.target().location_clue)?;
    let labels = world.map.labels();
    let batch = generate_sentences(&clue, &labels, m, source)?;
    Ok(label_priors(&labels, &batch, emb).into_iter().map(|p| (p.label, p.score)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub search: SearchConfig,
    pub sensor: SensorModel,
    pub max_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::simulation(),
            sensor: SensorModel::default(),
            max_steps: 400,
        }
    }
}

/// One line of an episode's event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub pose: Pose,
    pub floor: u32,
    pub path_length: f64,
    pub event: SearchEvent,
    /// Ids flagged by the text detector in this step's observation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub text_matches: Vec<u32>,
    /// Executed polyline for a move, world coordinates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path: Vec<[f64; 2]>,
    /// Person position and the oracle's answer for a feedback request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive: Option<bool>,
}

/// Quantities the metrics need from one episode.
pub trait Outcome {
    fn success(&self) -> bool;
    fn path_length(&self) -> f64;
    fn shortest_path(&self) -> f64;
    fn false_detections(&self) -> u32;
}

/// Flat per-episode record, the CSV row format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub world: String,
    pub episode: usize,
    pub method: String,
    pub seed: u64,
    pub success: bool,
    pub path_length: f64,
    pub shortest_path: f64,
    pub false_detections: u32,
    pub failure: String,
}

impl Outcome for EpisodeRow {
    fn success(&self) -> bool {
        self.success
    }
    fn path_length(&self) -> f64 {
        self.path_length
    }
    fn shortest_path(&self) -> f64 {
        self.shortest_path
    }
    fn false_detections(&self) -> u32 {
        self.false_detections
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub world: String,
    pub episode: usize,
    pub method: SearchMethod,
    pub seed: u64,
    pub success: bool,
    pub path_length: f64,
    pub shortest_path: f64,
    pub false_detections: u32,
    pub failure: Option<FailureReason>,
    pub events: Vec<LogEntry>,
}

impl EpisodeResult {
    pub fn row(&self) -> EpisodeRow {
        EpisodeRow {
            world: self.world.clone(),
            episode: self.episode,
            method: self.method.name().into(),
            seed: self.seed,
            success: self.success,
            path_length: self.path_length,
            shortest_path: self.shortest_path,
            false_detections: self.false_detections,
            failure: self
                .failure
                .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
                .unwrap_or_default(),
        }
    }

    pub fn log_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            s.push_str(&serde_json::to_string(e).expect("log entries serialize"));
            s.push('\n');
        }
        s
    }
}

impl Outcome for EpisodeResult {
    fn success(&self) -> bool {
        self.success
    }
    fn path_length(&self) -> f64 {
        self.path_length
    }
    fn shortest_path(&self) -> f64 {
        self.shortest_path
    }
    fn false_detections(&self) -> u32 {
        self.false_detections
    }
}

/// Start and goal cells for a move; unreachable goals snap to the reachable
/// cell nearest the target.
fn route(grid: &OccupancyGrid, from: [f64; 2], to: [f64; 2]) -> Option<(CellIdx, CellIdx, Vec<f64>)> {
    let start = grid.world_to_cell(from).filter(|&c| grid.is_free(c)).or_else(|| grid.nearest_free(from))?;
    let df = grid.distance_field(start);
    let goal = match grid.world_to_cell(to) {
        Some(c) if df[grid.index(c)].is_finite() => c,
        _ => {
            let mut best: Option<(f64, usize)> = None;
            for (k, d) in df.iter().enumerate() {
                if d.is_finite() {
                    let p = grid.cell_center(grid.cell_of_index(k));
                    let e = (p[0] - to[0]).hypot(p[1] - to[1]);
                    if best.is_none_or(|(b, _)| e < b) {
                        best = Some((e, k));
                    }
                }
            }
            grid.cell_of_index(best?.1)
        }
    };
    Some((start, goal, df))
}

/// Drives along the grid shortest path. Returns the executed polyline, its
/// length including floor changes, and the final pose.
fn drive(map: &AnnotatedMap, pose: &Pose, floor: u32, target: &Waypoint<f64>, floor_cost: f64) -> (Vec<[f64; 2]>, f64, Pose) {
    let mut len = (target.z as i64 - floor as i64).unsigned_abs() as f64 * floor_cost;
    let grid = map.grid(target.z);
    let from = [pose.x, pose.y];
    let to = [target.x, target.y];
    let Some((start, goal, _)) = route(grid, from, to) else {
        return (vec![from], len, *pose);
    };
    let cells = grid.shortest_path(start, goal).map(|(c, _)| c).unwrap_or_else(|| vec![start]);
    let end = if grid.world_to_cell(to) == Some(goal) { to } else { grid.cell_center(goal) };
    let mut line = vec![from];
    if cells.len() > 2 {
        line.extend(cells[1..cells.len() - 1].iter().map(|&c| grid.cell_center(c)));
    }
    line.push(end);
    len += line.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum::<f64>();
    (line, len, Pose::new(end[0], end[1], target.theta))
}

/// Grid path length from the start to the nearest cell within `radius` of
/// the target, plus floor changes.
pub fn shortest_path_length(world: &World, radius: f64, floor_cost: f64) -> Option<f64> {
    let t = world.target();
    let dz = (t.floor as i64 - world.floor as i64).unsigned_abs() as f64 * floor_cost;
    let grid = world.map.grid(t.floor);
    let from = [world.robot.x, world.robot.y];
    let start = grid.world_to_cell(from).filter(|&c| grid.is_free(c)).or_else(|| grid.nearest_free(from))?;
    let tp = [t.pose.x, t.pose.y];
    let (_, d) = grid.astar(
        start,
        |c| {
            let p = grid.cell_center(c);
            (p[0] - tp[0]).hypot(p[1] - tp[1]) <= radius
        },
        |c| {
            let p = grid.cell_center(c);
            ((p[0] - tp[0]).hypot(p[1] - tp[1]) - radius).max(0.0)
        },
    )?;
    Some(d + dz)
}

/// Runs one search episode. Sensing is a full in-place scan at every stop;
/// the feedback oracle answers by person identity.
pub fn run_search_episode(
    world: &World,
    cfg: &SimConfig,
    method: SearchMethod,
    priors: &BTreeMap<String, f64>,
    seed: u64,
) -> Result<EpisodeResult, SimError> {
    world.validate(cfg.search.success_radius)?;
    cfg.search.validate().map_err(SimError::World)?;
    cfg.sensor.validate().map_err(|e| SimError::World(e.to_string()))?;
    let search = method.configure(&cfg.search);
    let priors = if method.uses_prior() { priors.clone() } else { BTreeMap::new() };
    let scan = SensorModel {
        fov: 2.0 * std::f64::consts::PI,
        ..cfg.sensor
    };
    let map = &*world.map;
    let target = world.target();
    let mut rng = stream(seed, STREAM_PERCEPTION);
    let mut fsm = SearchFsm::new(map, priors, search, cfg.sensor);
    let (mut pose, mut floor, mut path) = (world.robot, world.floor, 0.0);
    let mut feedback: Option<Feedback> = None;
    let mut events = Vec::new();
    let mut outcome: Option<(bool, Option<FailureReason>)> = None;

    for step in 0..cfg.max_steps {
        let query = (fsm.query_mode() == QueryMode::Text).then_some(target.appearance.as_str());
        let dets = observe(&world.persons, map.grid(floor), floor, &pose, query, &scan, &mut rng);
        let pos_of = |id: u32| world.persons.iter().find(|p| p.id == id).map(|p| [p.pose.x, p.pose.y]).expect("detections name known persons");
        let seen: Vec<SeenPerson> = dets
            .iter()
            .filter(|d| d.kind == DetectionKind::GeneralPerson)
            .filter_map(|d| d.person_id)
            .map(|id| SeenPerson { id, pos: pos_of(id) })
            .collect();
        let matches: Vec<u32> = dets.iter().filter(|d| d.kind == DetectionKind::TextMatch).filter_map(|d| d.person_id).collect();
        let obs = Observation {
            pose,
            floor,
            path_length: path,
            persons: seen,
            text_matches: query.map(|_| matches.clone()),
            feedback: feedback.take(),
        };
        let event = fsm.step(&obs);
        let mut entry = LogEntry {
            step,
            pose,
            floor,
            path_length: path,
            event: event.clone(),
            text_matches: matches,
            path: Vec::new(),
            person: None,
            positive: None,
        };
        match event {
            SearchEvent::MoveTo { target: wp, .. } => {
                let (line, len, end) = drive(map, &pose, floor, &wp, search.floor_cost);
                entry.path = line;
                path += len;
                pose = end;
                floor = wp.z;
            }
            SearchEvent::AskFeedback { person_id } => {
                let positive = person_id == world.target_id;
                entry.person = Some(pos_of(person_id));
                entry.positive = Some(positive);
                feedback = Some(Feedback { person_id, positive });
            }
            SearchEvent::DeclareSuccess { person_id } => {
                let close = target.floor == floor && target.pose.distance(&pose) <= search.success_radius + 1e-6;
                outcome = Some((person_id == world.target_id && close, None));
            }
            SearchEvent::DeclareFailure { reason } => outcome = Some((false, Some(reason))),
        }
        events.push(entry);
        if outcome.is_some() {
            break;
        }
    }
    let (success, failure) = outcome.unwrap_or((false, Some(FailureReason::Exhausted)));
    let shortest = shortest_path_length(world, search.success_radius, search.floor_cost)
        .ok_or_else(|| SimError::World(format!("{}: target unreachable from the start", world.name)))?;
    Ok(EpisodeResult {
        world: world.name.clone(),
        episode: 0,
        method,
        seed,
        success,
        path_length: path,
        shortest_path: shortest,
        false_detections: fsm.false_detections(),
        failure,
        events,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: usize,
    pub sr: f64,
    pub spl: f64,
    /// Success discounted by feedback requests, S / (1 + FD). Not a
    /// published formula.
    pub spf: f64,
    pub mean_fd: f64,
}

pub fn compute_metrics<O: Outcome>(results: &[O]) -> Result<Metrics, SimError> {
    if results.is_empty() {
        return Err(SimError::NoEpisodes);
    }
    let n = results.len() as f64;
    let (mut sr, mut spl, mut spf, mut fd) = (0.0, 0.0, 0.0, 0.0);
    for (i, r) in results.iter().enumerate() {
        let l = r.shortest_path();
        if !(l > 0.0) {
            return Err(SimError::ShortestPath(i));
        }
        let s = if r.success() { 1.0 } else { 0.0 };
        sr += s;
        spl += s * l / r.path_length().max(l);
        spf += s / (1.0 + r.false_detections() as f64);
        fd += r.false_detections() as f64;
    }
    Ok(Metrics {
        episodes: results.len(),
        sr: sr / n,
        spl: spl / n,
        spf: spf / n,
        mean_fd: fd / n,
    })
}

pub fn write_rows_csv<W: std::io::Write>(w: W, rows: &[EpisodeRow]) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_rows_csv(text: &str) -> Result<Vec<EpisodeRow>, SimError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| SimError::Results { line: i + 2, msg: e.to_string() }))
        .collect()
}

/// Reward fields available to approach planning. `r_l` holds both gaze slices.
#[derive(Debug, Clone)]
pub struct ApproachFields {
    pub r_i: Field,
    pub r_l: Field,
}

impl ApproachFields {
    /// Planning field for a method: blended, or one source rescaled alone.
    pub fn for_method(&self, method: ApproachMethod, w_r: f64) -> Result<Field, SimError> {
        let w = match method {
            ApproachMethod::Hybrid => w_r,
            ApproachMethod::Lfd => 1.0,
            ApproachMethod::Kd | ApproachMethod::Baseline => 0.0,
        };
        Ok(blend(&self.r_i, &self.r_l, w)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproachScenario {
    pub grid: OccupancyGrid,
    pub human: Pose,
    pub start: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachResult {
    pub method: ApproachMethod,
    pub seed: u64,
    pub g: u8,
    pub success: bool,
    pub collision_free: bool,
    pub final_distance: f64,
    pub path_length: f64,
    pub heading_variation: f64,
    pub trajectory: Traj,
}

pub const BASELINE_SPEED: f64 = 0.65;

/// Plans and executes one approach. Gaze is read once from the person's
/// heading relative to the robot's start.
pub fn run_approach_episode(
    scn: &ApproachScenario,
    method: ApproachMethod,
    fields: &ApproachFields,
    params: &PlannerParams,
    seed: u64,
) -> Result<ApproachResult, SimError> {
    let g = gaze_flag(scn.human.theta, [scn.human.x, scn.human.y], [scn.start.x, scn.start.y]);
    let trajectory = match method {
        ApproachMethod::Baseline => baseline_trajectory(&scn.start, &scn.human, params.goal_radius, BASELINE_SPEED),
        _ => {
            let reward = fields.for_method(method, params.w_r)?;
            let req = PlanRequest {
                start: scn.start,
                human: scn.human,
                g,
                grid: &scn.grid,
                reward: &reward,
            };
            let mut rng = stream(seed, STREAM_PLANNER);
            let p = plan(&req, params, &mut rng)?;
            assign_velocities(&p.path, &RewardLookup::new(&reward, scn.human, g))
        }
    };
    let poses: Vec<Pose> = trajectory.samples().iter().map(|s| s.pose).collect();
    let collision_free = path_collision_free(&poses, &scn.grid);
    let final_distance = trajectory.last().pose.distance(&scn.human);
    Ok(ApproachResult {
        method,
        seed,
        g,
        success: collision_free && final_distance <= params.goal_radius + 1e-9,
        collision_free,
        final_distance,
        path_length: trajectory.path_length(),
        heading_variation: trajectory.heading_variation(),
        trajectory,
    })
}

/// Fraction of trajectory samples inside the person's frontal cone (within
/// `half_angle` of the facing direction and `range` meters).
pub fn frontal_cone_ratio(traj: &Traj, human: &Pose, half_angle: f64, range: f64) -> f64 {
    let s = traj.samples();
    let inside = s
        .iter()
        .filter(|q| {
            let d = q.pose.distance(human);
            d > 1e-9 && d <= range && angle_dist(human.bearing_to(&q.pose), human.theta) <= half_angle
        })
        .count();
    inside as f64 / s.len() as f64
}

/// Random start at `dist` meters from the person, uniform in bearing.
pub fn random_start<R: Rng>(human: &Pose, dist: f64, rng: &mut R) -> Pose {
    let a = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let x = human.x + dist * a.cos();
    let y = human.y + dist * a.sin();
    Pose::new(x, y, (human.y - y).atan2(human.x - x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{Area, Cell};
    use crate::state::StateGrid;

    fn three_rooms() -> AnnotatedMap {
        // three 10 x 10 m rooms in a row joined by doors in the walls at x = 10, 20
        let mut g = OccupancyGrid::new(60, 20, 0.5, [0.0, 0.0], Cell::Free);
        for &wx in &[20usize, 40] {
            for j in 0..20 {
                if !(9..11).contains(&j) {
                    g.set((wx, j), Cell::Occupied);
                }
            }
        }
        let room = |l: &str, x0: f64| Area {
            label: l.into(),
            floor: 0,
            polygon: vec![[x0, 0.0], [x0 + 10.0, 0.0], [x0 + 10.0, 10.0], [x0, 10.0]],
        };
        AnnotatedMap::new(vec![g], vec![room("kitchen", 0.0), room("office", 10.0), room("sofa", 20.0)]).unwrap()
    }

    fn person(id: u32, x: f64, y: f64, a: &str) -> Person {
        Person {
            id,
            pose: Pose::new(x, y, 0.0),
            appearance: a.into(),
            location_clue: "works at a desk".into(),
            floor: 0,
        }
    }

    fn world(target: u32) -> World {
        World {
            name: "rooms".into(),
            map: Arc::new(three_rooms()),
            persons: Arc::new(vec![person(1, 25.0, 8.0, "red shirt"), person(2, 15.0, 2.0, "blue shirt")]),
            robot: Pose::new(2.0, 5.0, 0.0),
            floor: 0,
            target_id: target,
        }
    }

    fn cfg() -> SimConfig {
        SimConfig {
            search: SearchConfig {
                max_path: 100.0,
                ..SearchConfig::simulation()
            },
            ..Default::default()
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in SearchMethod::ALL {
            assert_eq!(m.name().parse::<SearchMethod>().unwrap(), m);
        }
        assert!("nope".parse::<SearchMethod>().is_err());
        assert_eq!("knowledge_prior".parse::<SearchMethod>().unwrap(), SearchMethod::KnowledgePrior);
        assert!(SearchMethod::Proposed.indirect() && SearchMethod::Proposed.uses_prior());
        assert!(!SearchMethod::Cow.indirect() && !SearchMethod::Cow.uses_prior());
    }

    #[test]
    fn noise_free_prior_on_target_room_succeeds() {
        let w = world(1);
        let priors: BTreeMap<String, f64> = [("sofa".to_string(), 0.9)].into();
        let r = run_search_episode(&w, &cfg(), SearchMethod::Proposed, &priors, 1).unwrap();
        assert!(r.success, "{:#?}", r.events);
        assert_eq!(r.false_detections, 0);
        assert!(r.path_length >= r.shortest_path - 1e-9);
        let again = run_search_episode(&w, &cfg(), SearchMethod::Proposed, &priors, 1).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn small_budget_with_wrong_prior_fails_on_path() {
        let w = world(1);
        let priors: BTreeMap<String, f64> = [("kitchen".to_string(), 0.9), ("office".to_string(), 0.8)].into();
        let mut c = cfg();
        c.search.max_path = 12.0;
        c.sensor.range = 4.0;
        let r = run_search_episode(&w, &c, SearchMethod::Proposed, &priors, 1).unwrap();
        assert!(!r.success);
        assert_eq!(r.failure, Some(FailureReason::PathBudget));
    }

    #[test]
    fn feedback_oracle_counts_false_detections() {
        let w = world(1);
        let mut c = cfg();
        c.sensor.p_fp = 1.0;
        let r = run_search_episode(&w, &c, SearchMethod::Cow, &BTreeMap::new(), 3).unwrap();
        // person 2 is always flagged and always rejected before the target is found
        assert!(r.false_detections >= 1);
        let asked: Vec<_> = r.events.iter().filter(|e| matches!(e.event, SearchEvent::AskFeedback { .. })).collect();
        assert!(asked.iter().any(|e| e.positive == Some(false)));
    }

    #[test]
    fn shortest_path_oracle() {
        let w = world(2);
        // straight east from (2, 5) to within 5 m of (15, 2) through the door at y in [4.5, 5.5]
        let l = shortest_path_length(&w, 5.0, 5.0).unwrap();
        assert!(l > 7.0 && l < 10.0, "{l}");
    }

    #[test]
    fn metric_examples() {
        let row = |s: bool, l: f64, p: f64, fd: u32| EpisodeRow {
            world: "w".into(),
            episode: 0,
            method: "cow".into(),
            seed: 0,
            success: s,
            path_length: p,
            shortest_path: l,
            false_detections: fd,
            failure: String::new(),
        };
        let m = compute_metrics(&[row(false, 5.0, 10.0, 2), row(false, 3.0, 1.0, 0)]).unwrap();
        assert_eq!((m.sr, m.spl, m.spf), (0.0, 0.0, 0.0));
        let m = compute_metrics(&[row(true, 5.0, 5.0, 0)]).unwrap();
        assert_eq!(m.spl, 1.0);
        let m = compute_metrics(&[row(true, 5.0, 10.0, 1)]).unwrap();
        assert_eq!((m.spl, m.spf, m.mean_fd), (0.5, 0.5, 1.0));
        assert!(matches!(compute_metrics::<EpisodeRow>(&[]), Err(SimError::NoEpisodes)));
        assert!(compute_metrics(&[row(true, 0.0, 1.0, 0)]).is_err());

        let mut buf = Vec::new();
        write_rows_csv(&mut buf, &[row(true, 5.0, 10.0, 1)]).unwrap();
        let back = read_rows_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, vec![row(true, 5.0, 10.0, 1)]);
    }

    #[test]
    fn baseline_approach_is_straight() {
        let grid = StateGrid::default();
        let fields = ApproachFields {
            r_i: Field::zeros(grid.clone()),
            r_l: Field::zeros(grid),
        };
        let scn = ApproachScenario {
            grid: OccupancyGrid::new(40, 40, 0.25, [-5.0, -5.0], Cell::Free),
            human: Pose::new(0.0, 0.0, 0.0),
            start: Pose::new(-3.0, 4.0, 0.0),
        };
        let r = run_approach_episode(&scn, ApproachMethod::Baseline, &fields, &PlannerParams::default(), 0).unwrap();
        assert!(r.success);
        assert!((r.path_length - 4.4).abs() < 1e-9);
        assert_eq!(r.heading_variation, 0.0);
    }
}
