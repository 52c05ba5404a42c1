//! Waypoint generation for human search: global label selection, local
//! frontier exploration inside the chosen area, the standoff maneuver and the
//! detection/feedback state machine.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::geom::Waypoint;
use crate::map::{AnnotatedMap, Cell, CellIdx, OccupancyGrid};
use crate::perception::{Pose, SensorModel};
use crate::prior::{nearest_area_point, CostParams};

pub type Wp = Waypoint<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub w_e: f64,
    pub t_g: f64,
    pub standoff: f64,
    pub max_path: f64,
    pub max_false_detections: u32,
    pub m: usize,
    /// Detect any person first and re-centre at the standoff before the text query.
    pub indirect: bool,
    /// Include the prior term in the label cost.
    pub use_prior: bool,
    pub clamp_prior: bool,
    pub floor_cost: f64,
    /// Success requires the robot within this distance of the target.
    pub success_radius: f64,
}

impl SearchConfig {
    pub fn real_world() -> Self {
        Self {
            w_e: 30.0,
            t_g: 2.0,
            standoff: 5.0,
            max_path: 30.0,
            max_false_detections: 5,
            m: 20,
            indirect: true,
            use_prior: true,
            clamp_prior: true,
            floor_cost: 5.0,
            success_radius: 5.0,
        }
    }

    pub fn simulation() -> Self {
        Self {
            max_path: 15.0,
            max_false_detections: 3,
            ..Self::real_world()
        }
    }

    pub fn cost_params(&self) -> CostParams {
        CostParams {
            w_e: if self.use_prior { self.w_e } else { 0.0 },
            clamp: self.clamp_prior,
            floor_cost: self.floor_cost,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let pos = [("w_e", self.w_e), ("t_g", self.t_g), ("standoff", self.standoff), ("max_path", self.max_path)];
        for (n, v) in pos {
            if !(v > 0.0) {
                return Err(format!("{n} must be > 0"));
            }
        }
        if self.max_false_detections == 0 || self.m == 0 {
            return Err("max_false_detections and M must be > 0".into());
        }
        Ok(())
    }
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self::simulation()
    }
}

/// Argmin over unvisited labels with finite cost; ties go to the
/// lexicographically smaller label.
pub fn select_next_label(costs: &BTreeMap<String, f64>, visited: &BTreeSet<String>) -> Option<String> {
    let mut best: Option<(&String, f64)> = None;
    for (l, &c) in costs {
        if visited.contains(l) || !c.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, bc)| c < bc) {
            best = Some((l, c));
        }
    }
    best.map(|(l, _)| l.clone())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VisitHistory {
    waypoints: Vec<Wp>,
}

impl VisitHistory {
    pub fn push(&mut self, w: Wp) {
        self.waypoints.push(w);
    }

    pub fn waypoints(&self) -> &[Wp] {
        &self.waypoints
    }
}

/// True iff every visited waypoint on the candidate's floor is farther than `t_g`.
pub fn should_visit(candidate: &Wp, history: &VisitHistory, t_g: f64) -> bool {
    history
        .waypoints
        .iter()
        .filter(|p| p.z == candidate.z)
        .all(|p| p.planar_distance(candidate) > t_g)
}

const N4: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Frontier clusters of a partially known grid: free cells 4-adjacent to an
/// unknown cell, grouped 8-connected, clusters under 3 cells dropped. Each
/// cluster yields the member cell nearest its centroid, facing from the
/// robot. Results are sorted by distance from the robot.
pub fn frontier_waypoints(grid: &OccupancyGrid, robot: &Pose, floor: u32) -> Vec<Wp> {
    let mut v: Vec<(f64, Wp)> = frontier_clusters(grid, |_| true)
        .iter()
        .map(|c| cluster_waypoint(grid, c, robot, floor))
        .map(|w| ((w.x - robot.x).hypot(w.y - robot.y), w))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v.into_iter().map(|(_, w)| w).collect()
}

fn is_frontier(grid: &OccupancyGrid, c: CellIdx) -> bool {
    grid.get(c) == Cell::Free
        && N4.iter().any(|&(di, dj)| {
            let (i, j) = (c.0 as i64 + di, c.1 as i64 + dj);
            grid.in_bounds(i, j) && grid.get((i as usize, j as usize)) == Cell::Unknown
        })
}

/// 8-connected frontier clusters (size >= 3) among cells accepted by `keep`,
/// in scan order of their first cell.
pub fn frontier_clusters(grid: &OccupancyGrid, keep: impl Fn(CellIdx) -> bool) -> Vec<Vec<CellIdx>> {
    let mut mark = vec![false; grid.len()];
    let mut out = Vec::new();
    for j in 0..grid.height {
        for i in 0..grid.width {
            let c = (i, j);
            if mark[grid.index(c)] || !is_frontier(grid, c) || !keep(c) {
                continue;
            }
            let mut cluster = Vec::new();
            let mut q = VecDeque::from([c]);
            mark[grid.index(c)] = true;
            while let Some(a) = q.pop_front() {
                cluster.push(a);
                for di in -1..=1i64 {
                    for dj in -1..=1i64 {
                        let (x, y) = (a.0 as i64 + di, a.1 as i64 + dj);
                        if (di, dj) == (0, 0) || !grid.in_bounds(x, y) {
                            continue;
                        }
                        let n = (x as usize, y as usize);
                        if !mark[grid.index(n)] && is_frontier(grid, n) && keep(n) {
                            mark[grid.index(n)] = true;
                            q.push_back(n);
                        }
                    }
                }
            }
            if cluster.len() >= 3 {
                out.push(cluster);
            }
        }
    }
    out
}

fn cluster_waypoint(grid: &OccupancyGrid, cluster: &[CellIdx], robot: &Pose, floor: u32) -> Wp {
    let n = cluster.len() as f64;
    let s = cluster.iter().fold([0.0, 0.0], |a, &c| {
        let p = grid.cell_center(c);
        [a[0] + p[0], a[1] + p[1]]
    });
    let centroid = [s[0] / n, s[1] / n];
    let best = cluster
        .iter()
        .map(|&c| grid.cell_center(c))
        .min_by(|a, b| {
            let da = (a[0] - centroid[0]).powi(2) + (a[1] - centroid[1]).powi(2);
            let db = (b[0] - centroid[0]).powi(2) + (b[1] - centroid[1]).powi(2);
            da.total_cmp(&db)
        })
        .unwrap_or(centroid);
    Wp::new(best[0], best[1], floor, (best[1] - robot.y).atan2(best[0] - robot.x))
}

/// Point on the robot->person ray `standoff` meters from the person, facing it.
pub fn standoff_waypoint(person: [f64; 2], robot: &Pose, standoff: f64, floor: u32) -> Wp {
    let (dx, dy) = (robot.x - person[0], robot.y - person[1]);
    let d = dx.hypot(dy);
    let (ux, uy) = if d > 1e-12 { (dx / d, dy / d) } else { (1.0, 0.0) };
    let p = [person[0] + standoff * ux, person[1] + standoff * uy];
    Wp::new(p[0], p[1], floor, (person[1] - p[1]).atan2(person[0] - p[0]))
}

/// Standoff waypoint moved to the nearest free, reachable cell no farther
/// than `standoff` from the person when the exact point is not usable. A
/// usable point also needs a clear line of sight to the person.
pub fn standoff_waypoint_free(person: [f64; 2], robot: &Pose, standoff: f64, floor: u32, grid: &OccupancyGrid, reach: &[bool]) -> Option<Wp> {
    let w = standoff_waypoint(person, robot, standoff, floor);
    if grid.world_to_cell([w.x, w.y]).is_some_and(|c| reach[grid.index(c)]) && grid.line_of_sight([w.x, w.y], person) {
        return Some(w);
    }
    let mut best: Option<(f64, [f64; 2])> = None;
    for k in 0..grid.len() {
        if !reach[k] {
            continue;
        }
        let c = grid.cell_center(grid.cell_of_index(k));
        if (c[0] - person[0]).hypot(c[1] - person[1]) > standoff || !grid.line_of_sight(c, person) {
            continue;
        }
        let d = (c[0] - w.x).hypot(c[1] - w.y);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, c));
        }
    }
    best.map(|(_, c)| Wp::new(c[0], c[1], floor, (person[1] - c[1]).atan2(person[0] - c[0])))
}

/// Which cells the simulated camera has observed, per floor. Unobserved cells
/// read as unknown; observed cells copy the true map.
#[derive(Debug, Clone)]
pub struct Coverage {
    pub floors: Vec<OccupancyGrid>,
}

impl Coverage {
    pub fn new(map: &AnnotatedMap) -> Self {
        Self {
            floors: map
                .floors
                .iter()
                .map(|g| OccupancyGrid::new(g.width, g.height, g.resolution, g.origin, Cell::Unknown))
                .collect(),
        }
    }

    /// Ray-casts from the robot to every cell in sensor range over a full
    /// turn; rays stop at the first occupied cell.
    pub fn reveal(&mut self, truth: &OccupancyGrid, floor: u32, robot: &Pose, range: f64) {
        let cov = &mut self.floors[floor as usize];
        let Some(rc) = truth.world_to_cell([robot.x, robot.y]) else { return };
        let r = (range / truth.resolution).ceil() as i64;
        let (ri, rj) = (rc.0 as i64, rc.1 as i64);
        for j in (rj - r).max(0)..=(rj + r).min(truth.height as i64 - 1) {
            for i in (ri - r).max(0)..=(ri + r).min(truth.width as i64 - 1) {
                let is_edge = (i - ri).abs() == r || (j - rj).abs() == r || i == 0 || j == 0 || i == truth.width as i64 - 1 || j == truth.height as i64 - 1;
                if !is_edge {
                    continue;
                }
                for c in OccupancyGrid::bresenham(rc, (i as usize, j as usize)) {
                    let p = truth.cell_center(c);
                    if (p[0] - robot.x).hypot(p[1] - robot.y) > range {
                        break;
                    }
                    let v = truth.get(c);
                    cov.set(c, v);
                    if v == Cell::Occupied {
                        break;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveReason {
    Label,
    Frontier,
    Standoff,
    Approach,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchEvent {
    MoveTo {
        target: Wp,
        reason: MoveReason,
        #[serde(skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        person_id: Option<u32>,
    },
    AskFeedback {
        person_id: u32,
    },
    DeclareSuccess {
        person_id: u32,
    },
    DeclareFailure {
        reason: FailureReason,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    PathBudget,
    FalseDetections,
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeenPerson {
    pub id: u32,
    pub pos: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub person_id: u32,
    pub positive: bool,
}

/// Perception output and bookkeeping handed to the state machine each step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pose: Pose,
    pub floor: u32,
    pub path_length: f64,
    /// Every visible person (general detector).
    pub persons: Vec<SeenPerson>,
    /// Ids flagged by the text detector; `None` when it was not run.
    pub text_matches: Option<Vec<u32>>,
    pub feedback: Option<Feedback>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryMode {
    GeneralOnly,
    Text,
}

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    Global,
    Local,
    AtStandoff(u32),
    Approaching(u32),
    AwaitFeedback(u32),
    Done,
}

/// Search state machine; one instance per episode.
#[derive(Debug, Clone)]
pub struct SearchFsm<'a> {
    map: &'a AnnotatedMap,
    priors: BTreeMap<String, f64>,
    cfg: SearchConfig,
    sensor: SensorModel,
    coverage: Coverage,
    history: VisitHistory,
    visited_labels: BTreeSet<String>,
    examined: BTreeSet<u32>,
    current_label: Option<String>,
    phase: Phase,
    false_detections: u32,
}

impl<'a> SearchFsm<'a> {
    /// `priors` maps each label to its occurrence score; missing labels score 0.
    pub fn new(map: &'a AnnotatedMap, priors: BTreeMap<String, f64>, cfg: SearchConfig, sensor: SensorModel) -> Self {
        Self {
            map,
            priors,
            cfg,
            sensor,
            coverage: Coverage::new(map),
            history: VisitHistory::default(),
            visited_labels: BTreeSet::new(),
            examined: BTreeSet::new(),
            current_label: None,
            phase: Phase::Global,
            false_detections: 0,
        }
    }

    pub fn false_detections(&self) -> u32 {
        self.false_detections
    }

    pub fn history(&self) -> &VisitHistory {
        &self.history
    }

    pub fn coverage(&self) -> &Coverage {
        &self.coverage
    }

    pub fn visited_labels(&self) -> &BTreeSet<String> {
        &self.visited_labels
    }

    /// Whether the next observation must include the text detector.
    pub fn query_mode(&self) -> QueryMode {
        match self.phase {
            _ if !self.cfg.indirect => QueryMode::Text,
            Phase::AtStandoff(_) => QueryMode::Text,
            _ => QueryMode::GeneralOnly,
        }
    }

    /// Label costs from the current position over all labels.
    pub fn label_costs(&self, at: &Wp) -> BTreeMap<String, f64> {
        let params = self.cfg.cost_params();
        self.map
            .labels()
            .into_iter()
            .map(|l| {
                let prior = self.priors.get(&l).copied().unwrap_or(0.0);
                let c = match nearest_area_point(at, &l, self.map, params.floor_cost) {
                    Some(t) => crate::prior::cost_from_parts(t.distance, prior, &params),
                    None => f64::INFINITY,
                };
                (l, c)
            })
            .collect()
    }

    fn fail(&mut self, reason: FailureReason) -> SearchEvent {
        self.phase = Phase::Done;
        SearchEvent::DeclareFailure { reason }
    }

    fn budget_breach(&self, obs: &Observation) -> Option<FailureReason> {
        if obs.path_length > self.cfg.max_path {
            Some(FailureReason::PathBudget)
        } else if self.false_detections >= self.cfg.max_false_detections {
            Some(FailureReason::FalseDetections)
        } else {
            None
        }
    }

    pub fn step(&mut self, obs: &Observation) -> SearchEvent {
        if self.phase == Phase::Done {
            return SearchEvent::DeclareFailure {
                reason: FailureReason::Exhausted,
            };
        }
        let here = Wp::from_pose(&obs.pose, obs.floor);
        if self.history.waypoints().last().is_none_or(|w| w.planar_distance(&here) > 1e-9 || w.z != here.z) {
            self.history.push(here);
        }
        let grid = self.map.grid(obs.floor);
        self.coverage.reveal(grid, obs.floor, &obs.pose, self.sensor.range);

        if let Phase::AwaitFeedback(pid) = self.phase.clone() {
            if let Some(fb) = obs.feedback.filter(|f| f.person_id == pid) {
                if fb.positive {
                    self.phase = Phase::Done;
                    return SearchEvent::DeclareSuccess { person_id: pid };
                }
                self.false_detections += 1;
                self.examined.insert(pid);
                self.phase = Phase::Local;
                if let Some(r) = self.budget_breach(obs) {
                    return self.fail(r);
                }
            } else {
                return SearchEvent::AskFeedback { person_id: pid };
            }
        }
        if let Some(r) = self.budget_breach(obs) {
            return self.fail(r);
        }

        match self.phase.clone() {
            Phase::AtStandoff(pid) => {
                let matched = obs.text_matches.as_ref().is_some_and(|m| m.contains(&pid));
                if matched {
                    self.phase = Phase::AwaitFeedback(pid);
                    return SearchEvent::AskFeedback { person_id: pid };
                }
                self.examined.insert(pid);
                self.phase = Phase::Local;
            }
            Phase::Approaching(pid) => {
                self.phase = Phase::AwaitFeedback(pid);
                return SearchEvent::AskFeedback { person_id: pid };
            }
            _ => {}
        }

        let reach = grid.world_to_cell([obs.pose.x, obs.pose.y]).map_or_else(|| vec![false; grid.len()], |c| grid.reachable(c));
        let by_distance = |ids: Vec<SeenPerson>| {
            let mut v = ids;
            v.sort_by(|a, b| {
                let da = (a.pos[0] - obs.pose.x).hypot(a.pos[1] - obs.pose.y);
                let db = (b.pos[0] - obs.pose.x).hypot(b.pos[1] - obs.pose.y);
                da.total_cmp(&db).then(a.id.cmp(&b.id))
            });
            v
        };

        if matches!(self.phase, Phase::Local | Phase::Global) {
            if self.cfg.indirect {
                let cands = by_distance(obs.persons.iter().filter(|p| !self.examined.contains(&p.id)).copied().collect());
                for p in cands {
                    match standoff_waypoint_free(p.pos, &obs.pose, self.cfg.standoff, obs.floor, grid, &reach) {
                        Some(w) => {
                            self.phase = Phase::AtStandoff(p.id);
                            return SearchEvent::MoveTo {
                                target: w,
                                reason: MoveReason::Standoff,
                                label: None,
                                person_id: Some(p.id),
                            };
                        }
                        None => {
                            self.examined.insert(p.id);
                        }
                    }
                }
            } else if let Some(m) = &obs.text_matches {
                let cands = by_distance(
                    obs.persons
                        .iter()
                        .filter(|p| m.contains(&p.id) && !self.examined.contains(&p.id))
                        .copied()
                        .collect(),
                );
                if let Some(p) = cands.first() {
                    let d = (p.pos[0] - obs.pose.x).hypot(p.pos[1] - obs.pose.y);
                    if d <= self.cfg.success_radius {
                        self.phase = Phase::AwaitFeedback(p.id);
                        return SearchEvent::AskFeedback { person_id: p.id };
                    }
                    let r = self.cfg.success_radius - grid.resolution;
                    if let Some(w) = standoff_waypoint_free(p.pos, &obs.pose, r, obs.floor, grid, &reach) {
                        self.phase = Phase::Approaching(p.id);
                        return SearchEvent::MoveTo {
                            target: w,
                            reason: MoveReason::Approach,
                            label: None,
                            person_id: Some(p.id),
                        };
                    }
                    self.examined.insert(p.id);
                }
            }

            if let Some(label) = self.current_label.clone().filter(|_| self.phase == Phase::Local) {
                if let Some(w) = self.next_frontier(&label, obs, &reach) {
                    return SearchEvent::MoveTo {
                        target: w,
                        reason: MoveReason::Frontier,
                        label: Some(label),
                        person_id: None,
                    };
                }
            }
            self.phase = Phase::Global;
        }

        // global search: recompute costs and enter the cheapest unvisited label
        loop {
            let costs = self.label_costs(&here);
            let Some(label) = select_next_label(&costs, &self.visited_labels) else {
                return self.fail(FailureReason::Exhausted);
            };
            self.visited_labels.insert(label.clone());
            self.current_label = Some(label.clone());
            self.phase = Phase::Local;
            let Some(t) = nearest_area_point(&here, &label, self.map, self.cfg.floor_cost) else {
                continue;
            };
            let target = Wp::new(t.point[0], t.point[1], t.floor, (t.point[1] - obs.pose.y).atan2(t.point[0] - obs.pose.x));
            if should_visit(&target, &self.history, self.cfg.t_g) {
                return SearchEvent::MoveTo {
                    target,
                    reason: MoveReason::Label,
                    label: Some(label),
                    person_id: None,
                };
            }
            if t.floor != obs.floor {
                continue;
            }
            if let Some(w) = self.next_frontier(&label, obs, &reach) {
                return SearchEvent::MoveTo {
                    target: w,
                    reason: MoveReason::Frontier,
                    label: Some(label),
                    person_id: None,
                };
            }
        }
    }

    fn next_frontier(&self, label: &str, obs: &Observation, reach: &[bool]) -> Option<Wp> {
        let grid = self.map.grid(obs.floor);
        let cov = &self.coverage.floors[obs.floor as usize];
        let areas: Vec<_> = self.map.areas_with_label(label).filter(|a| a.floor == obs.floor).collect();
        if areas.is_empty() {
            return None;
        }
        let clusters = frontier_clusters(cov, |c| reach[grid.index(c)] && areas.iter().any(|a| a.contains(grid.cell_center(c))));
        let mut cands: Vec<(f64, Wp)> = clusters
            .iter()
            .map(|c| cluster_waypoint(cov, c, &obs.pose, obs.floor))
            .map(|w| ((w.x - obs.pose.x).hypot(w.y - obs.pose.y), w))
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0));
        cands
            .into_iter()
            .map(|(_, w)| w)
            .find(|w| should_visit(w, &self.history, self.cfg.t_g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::Area;

    #[test]
    fn label_selection() {
        let costs: BTreeMap<String, f64> = [("A".to_string(), 8.0), ("B".to_string(), 3.0)].into();
        assert_eq!(select_next_label(&costs, &BTreeSet::new()).as_deref(), Some("B"));
        let visited: BTreeSet<String> = ["B".to_string()].into();
        assert_eq!(select_next_label(&costs, &visited).as_deref(), Some("A"));
        let tie: BTreeMap<String, f64> = [("B".to_string(), 5.0), ("A".to_string(), 5.0)].into();
        assert_eq!(select_next_label(&tie, &BTreeSet::new()).as_deref(), Some("A"));
        let inf: BTreeMap<String, f64> = [("A".to_string(), f64::INFINITY)].into();
        assert_eq!(select_next_label(&inf, &BTreeSet::new()), None);
    }

    #[test]
    fn visit_threshold() {
        let mut h = VisitHistory::default();
        let c = Wp::new(0.0, 0.0, 0, 0.0);
        assert!(should_visit(&c, &h, 2.0));
        h.push(Wp::new(1.5, 0.0, 0, 0.0));
        assert!(!should_visit(&c, &h, 2.0));
        let mut h = VisitHistory::default();
        h.push(Wp::new(2.0, 0.0, 0, 0.0));
        assert!(!should_visit(&c, &h, 2.0));
        h = VisitHistory::default();
        h.push(Wp::new(2.0, 0.0, 1, 0.0));
        assert!(should_visit(&c, &h, 2.0));
    }

    #[test]
    fn standoff_examples() {
        let w = standoff_waypoint([10.0, 0.0], &Pose::new(0.0, 0.0, 1.0), 5.0, 0);
        assert!((w.x - 5.0).abs() < 1e-12 && w.y.abs() < 1e-12 && w.theta.abs() < 1e-12);
        let w = standoff_waypoint([10.0, 0.0], &Pose::new(5.0, 0.0, 2.0), 5.0, 0);
        assert!((w.x - 5.0).abs() < 1e-12 && w.theta.abs() < 1e-12);
        let w = standoff_waypoint([10.0, 0.0], &Pose::new(8.0, 0.0, 0.0), 5.0, 0);
        assert!((w.x - 5.0).abs() < 1e-12, "moves back along the ray");
    }

    #[test]
    fn frontier_examples() {
        let known = OccupancyGrid::new(10, 10, 1.0, [0.0, 0.0], Cell::Free);
        assert!(frontier_waypoints(&known, &Pose::new(0.5, 0.5, 0.0), 0).is_empty());

        let mut g = known.clone();
        for j in 0..10 {
            for i in 6..10 {
                g.set((i, j), Cell::Unknown);
            }
        }
        let f = frontier_waypoints(&g, &Pose::new(0.5, 4.5, 0.0), 0);
        assert_eq!(f.len(), 1);
        assert_eq!(g.world_to_cell([f[0].x, f[0].y]).unwrap().0, 5);

        let mut g = OccupancyGrid::new(12, 3, 1.0, [0.0, 0.0], Cell::Free);
        for i in 0..12 {
            g.set((i, 2), Cell::Occupied);
        }
        for &i in &[3usize, 4, 5] {
            g.set((i, 2), Cell::Unknown);
        }
        for &i in &[7usize, 8, 9] {
            g.set((i, 2), Cell::Unknown);
        }
        // one unknown cell alone is dropped as noise
        g.set((0, 0), Cell::Unknown);
        let f = frontier_waypoints(&g, &Pose::new(0.5, 1.5, 0.0), 0);
        assert_eq!(f.len(), 2);
        assert!(f[0].x < f[1].x);
    }

    fn room_map() -> AnnotatedMap {
        let g = OccupancyGrid::new(40, 20, 0.5, [0.0, 0.0], Cell::Free);
        let sq = |x0: f64, x1: f64| vec![[x0, 0.0], [x1, 0.0], [x1, 10.0], [x0, 10.0]];
        AnnotatedMap::new(
            vec![g],
            vec![
                Area {
                    label: "kitchen".into(),
                    floor: 0,
                    polygon: sq(0.0, 10.0),
                },
                Area {
                    label: "office".into(),
                    floor: 0,
                    polygon: sq(10.0, 20.0),
                },
            ],
        )
        .unwrap()
    }

    fn obs(x: f64, y: f64, path: f64) -> Observation {
        Observation {
            pose: Pose::new(x, y, 0.0),
            path_length: path,
            ..Default::default()
        }
    }

    #[test]
    fn fsm_prior_picks_label_then_feedback() {
        let m = room_map();
        let priors: BTreeMap<String, f64> = [("office".to_string(), 0.9), ("kitchen".to_string(), 0.1)].into();
        let mut fsm = SearchFsm::new(&m, priors, SearchConfig::real_world(), SensorModel::default());
        match fsm.step(&obs(1.0, 5.0, 0.0)) {
            SearchEvent::MoveTo { reason, label, .. } => {
                assert_eq!(reason, MoveReason::Label);
                assert_eq!(label.as_deref(), Some("office"));
            }
            e => panic!("{e:?}"),
        }
        // person visible -> standoff
        let mut o = obs(10.25, 5.0, 9.25);
        o.persons = vec![SeenPerson { id: 4, pos: [17.0, 5.0] }];
        match fsm.step(&o) {
            SearchEvent::MoveTo { reason, target, .. } => {
                assert_eq!(reason, MoveReason::Standoff);
                assert!((target.x - 12.0).abs() < 1e-9);
            }
            e => panic!("{e:?}"),
        }
        assert_eq!(fsm.query_mode(), QueryMode::Text);
        let mut o = obs(12.0, 5.0, 11.0);
        o.persons = vec![SeenPerson { id: 4, pos: [17.0, 5.0] }];
        o.text_matches = Some(vec![4]);
        assert_eq!(fsm.step(&o), SearchEvent::AskFeedback { person_id: 4 });
        o.feedback = Some(Feedback { person_id: 4, positive: true });
        assert_eq!(fsm.step(&o), SearchEvent::DeclareSuccess { person_id: 4 });
    }

    #[test]
    fn fsm_false_detection_budget() {
        let m = room_map();
        let mut cfg = SearchConfig::real_world();
        cfg.max_false_detections = 1;
        let mut fsm = SearchFsm::new(&m, BTreeMap::new(), cfg, SensorModel::default());
        cfg.indirect = false;
        let mut direct = SearchFsm::new(&m, BTreeMap::new(), cfg, SensorModel::default());
        let mut o = obs(1.0, 5.0, 0.0);
        o.persons = vec![SeenPerson { id: 2, pos: [3.0, 5.0] }];
        o.text_matches = Some(vec![2]);
        assert_eq!(direct.query_mode(), QueryMode::Text);
        assert_eq!(direct.step(&o), SearchEvent::AskFeedback { person_id: 2 });
        o.feedback = Some(Feedback { person_id: 2, positive: false });
        assert_eq!(
            direct.step(&o),
            SearchEvent::DeclareFailure {
                reason: FailureReason::FalseDetections
            }
        );
        assert_eq!(direct.false_detections(), 1);
        // path budget
        let e = fsm.step(&obs(1.0, 5.0, 31.0));
        assert_eq!(
            e,
            SearchEvent::DeclareFailure {
                reason: FailureReason::PathBudget
            }
        );
    }

    #[test]
    fn fsm_frontier_then_exhaustion() {
        let m = room_map();
        let mut cfg = SearchConfig::real_world();
        cfg.max_path = 1e9;
        let s = SensorModel {
            range: 3.0,
            ..Default::default()
        };
        let mut fsm = SearchFsm::new(&m, BTreeMap::new(), cfg, s);
        // starts inside the kitchen: the label target is the robot itself,
        // so local search begins with a frontier
        match fsm.step(&obs(1.0, 5.0, 0.0)) {
            SearchEvent::MoveTo { reason, label, .. } => {
                assert_eq!(reason, MoveReason::Frontier);
                assert_eq!(label.as_deref(), Some("kitchen"));
            }
            e => panic!("{e:?}"),
        }
        let mut pose = Pose::new(1.0, 5.0, 0.0);
        let mut path = 0.0;
        let mut labels = Vec::new();
        for _ in 0..200 {
            match fsm.step(&Observation {
                pose,
                path_length: path,
                ..Default::default()
            }) {
                SearchEvent::MoveTo { target, reason, label, .. } => {
                    if let Some(l) = label {
                        if !labels.contains(&l) {
                            labels.push(l);
                        }
                    }
                    assert!(reason == MoveReason::Standoff || should_visit(&target, &VisitHistory::default(), 2.0));
                    path += pose.distance(&target.pose());
                    pose = target.pose();
                }
                SearchEvent::DeclareFailure { reason } => {
                    assert_eq!(reason, FailureReason::Exhausted);
                    assert_eq!(labels, vec!["kitchen".to_string(), "office".to_string()]);
                    assert_eq!(fsm.visited_labels().len(), 2);
                    return;
                }
                e => panic!("{e:?}"),
            }
        }
        panic!("search did not terminate");
    }
}
