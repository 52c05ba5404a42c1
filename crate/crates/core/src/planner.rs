//! Reward blending and an FMT*-style approach planner over planar poses.
//!
//! The cost of moving from configuration `a` to `b` is
//! `zeta * (1 - R_T(b)) * (w_p * |q_b - q_a| + w_o * |theta_b - theta_a|)`,
//! with `R_T` looked up at `b` expressed in the human frame.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldError, RewardField};
use crate::geom::{angle_dist, to_human_frame, Frame, Pose2D, Trajectory, TrajectorySample};
use crate::map::OccupancyGrid;
use crate::state::{ApproachState, GridIndex};

type Pose = Pose2D<f64>;
type Field = RewardField<f64>;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid planner parameter: {0}")]
    Param(&'static str),
    #[error("start pose is in collision")]
    StartInCollision,
    #[error("no collision-free configuration within {0} m of the person")]
    GoalUnreachable(f64),
    #[error("no path found with {0} samples; try a larger --samples budget")]
    NoPath(usize),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    pub w_r: f64,
    pub w_p: f64,
    pub w_o: f64,
    pub zeta: f64,
    pub samples: usize,
    /// Fixed connection radius in cost-metric units; `None` uses the FMT* rule.
    pub connection_radius: Option<f64>,
    pub goal_radius: f64,
    /// Sampling window margin around the start and the person, meters.
    pub margin: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            w_r: 0.2,
            w_p: 1.0,
            w_o: 0.5,
            zeta: 1.5,
            samples: 2000,
            connection_radius: None,
            goal_radius: 0.6,
            margin: 2.0,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(0.0..=1.0).contains(&self.w_r) {
            return Err(PlanError::Param("w_r must lie in [0, 1]"));
        }
        if !(self.w_p >= 0.0 && self.w_o >= 0.0 && self.zeta >= 0.0) {
            return Err(PlanError::Param("weights must be >= 0"));
        }
        if self.samples < 10 {
            return Err(PlanError::Param("samples must be >= 10"));
        }
        if !(self.goal_radius > 0.0) {
            return Err(PlanError::Param("goal_radius must be > 0"));
        }
        Ok(())
    }
}

/// Affine map of the values onto `[0, 1]`; constant inputs map to zeros.
pub fn rescale_unit(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if v == hi {
                1.0
            } else {
                ((v - lo) / span).clamp(0.0, 1.0)
            }
        })
        .collect()
}

/// `w_r R_I + (1 - w_r) R_L`, rescaled onto `[0, 1]`.
pub fn blend(r_i: &Field, r_l: &Field, w_r: f64) -> Result<Field, FieldError> {
    if !r_i.same_grid(r_l) {
        return Err(FieldError::GridMismatch);
    }
    let mixed: Vec<f64> = r_i.values.iter().zip(&r_l.values).map(|(&a, &b)| w_r * a + (1.0 - w_r) * b).collect();
    Ok(Field {
        grid: r_i.grid.clone(),
        values: rescale_unit(&mixed),
    })
}

/// `w_p |dq| + w_o |dtheta|` with the angle wrapped to `[0, pi]`.
pub fn config_dist(a: &Pose, b: &Pose, p: &PlannerParams) -> f64 {
    p.w_p * (b.x - a.x).hypot(b.y - a.y) + p.w_o * angle_dist(b.theta, a.theta)
}

/// Edge cost given the blended reward at the arriving configuration.
pub fn edge_cost(a: &Pose, b: &Pose, reward_b: f64, p: &PlannerParams) -> f64 {
    p.zeta * (1.0 - reward_b) * config_dist(a, b, p)
}

/// Reward lookup for world poses relative to one person and gaze value.
#[derive(Debug, Clone)]
pub struct RewardLookup<'a> {
    pub field: &'a Field,
    pub human: Pose,
    pub g: u8,
}

impl<'a> RewardLookup<'a> {
    pub fn new(field: &'a Field, human: Pose, g: u8) -> Self {
        Self { field, human, g }
    }

    fn index(&self, q: &Pose, v: f64) -> GridIndex {
        let r = to_human_frame(q, &self.human);
        self.field.grid.discretize(&ApproachState::new(r.x, r.y, r.theta, self.g, v))
    }

    /// Reward at `q` for speed bin `iv`.
    pub fn at_bin(&self, q: &Pose, iv: usize) -> f64 {
        let mut i = self.index(q, self.field.grid.v_bins[0]);
        i.iv = iv;
        self.field.get(i)
    }

    /// Reward used during planning: best over the speed bins.
    pub fn planning(&self, q: &Pose) -> f64 {
        (0..self.field.grid.v_bins.len()).map(|iv| self.at_bin(q, iv)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Speed bin with the highest reward at `q`; ties go to the slowest.
    pub fn best_speed(&self, q: &Pose) -> f64 {
        let mut best = (0, f64::NEG_INFINITY);
        for iv in 0..self.field.grid.v_bins.len() {
            let r = self.at_bin(q, iv);
            if r > best.1 {
                best = (iv, r);
            }
        }
        self.field.grid.v_bins[best.0]
    }
}

/// Accumulated edge cost along a pose sequence.
pub fn path_cost(path: &[Pose], lookup: &RewardLookup<'_>, p: &PlannerParams) -> f64 {
    path.windows(2).map(|w| edge_cost(&w[0], &w[1], lookup.planning(&w[1]), p)).sum()
}

/// Straight translation from `start` towards the person, keeping the start
/// heading, ending just inside the goal disk. Spacing is at most `step`.
pub fn straight_path(start: &Pose, human: &Pose, goal_radius: f64, step: f64) -> Vec<Pose> {
    let d = start.distance(human);
    let travel = (d - goal_radius * (1.0 - 1e-9)).max(0.0);
    if travel == 0.0 {
        return vec![*start];
    }
    let n = (travel / step).ceil().max(1.0) as usize;
    let (ux, uy) = ((human.x - start.x) / d, (human.y - start.y) / d);
    (0..=n)
        .map(|k| {
            let s = travel * k as f64 / n as f64;
            Pose::new(start.x + s * ux, start.y + s * uy, start.theta)
        })
        .collect()
}

pub fn path_collision_free(path: &[Pose], grid: &OccupancyGrid) -> bool {
    path.iter().all(|q| grid.is_free_world([q.x, q.y])) && path.windows(2).all(|w| grid.segment_free([w[0].x, w[0].y], [w[1].x, w[1].y]))
}

#[derive(Debug, Clone)]
pub struct PlanRequest<'a> {
    pub start: Pose,
    pub human: Pose,
    pub g: u8,
    pub grid: &'a OccupancyGrid,
    /// Blended reward `R_T`.
    pub reward: &'a Field,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub path: Vec<Pose>,
    pub cost: f64,
    /// True when the straight candidate beat the sampled tree.
    pub straight: bool,
}

#[derive(Copy, Clone, PartialEq)]
struct Open(f64, usize);

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then_with(|| o.1.cmp(&self.1))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// FMT* connection radius in the weighted configuration metric.
pub fn fmt_radius(n: usize, free_area: f64, p: &PlannerParams) -> f64 {
    let d: f64 = 3.0;
    let measure = free_area * p.w_p * p.w_p * 2.0 * std::f64::consts::PI * p.w_o.max(1e-9);
    let unit_ball = 4.0 / 3.0 * std::f64::consts::PI;
    let gamma = 2.0 * (1.0 + 1.0 / d).powf(1.0 / d) * (measure / unit_ball).powf(1.0 / d);
    let n = n.max(2) as f64;
    (1.1 * gamma * (n.ln() / n).powf(1.0 / d)).max(0.5)
}

fn sample_configs<R: Rng>(req: &PlanRequest<'_>, p: &PlannerParams, margin: f64, rng: &mut R) -> (Vec<Pose>, f64) {
    let g = req.grid;
    let b = g.bounds();
    let lo = [
        (req.start.x.min(req.human.x) - margin).max(b[0]),
        (req.start.y.min(req.human.y) - margin).max(b[1]),
    ];
    let hi = [
        (req.start.x.max(req.human.x) + margin).min(b[2]),
        (req.start.y.max(req.human.y) + margin).min(b[3]),
    ];
    let mut out = Vec::with_capacity(p.samples);
    let goal_share = p.samples / 10;
    let mut tries = 0usize;
    let mut accepted_uniform = 0usize;
    let mut uniform_tries = 0usize;
    while out.len() < p.samples && tries < p.samples * 50 {
        tries += 1;
        let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let q = if out.len() < goal_share {
            let r = p.goal_radius * rng.gen::<f64>().sqrt();
            let a = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            Pose::new(req.human.x + r * a.cos(), req.human.y + r * a.sin(), theta)
        } else {
            uniform_tries += 1;
            Pose::new(rng.gen_range(lo[0]..hi[0].max(lo[0] + 1e-9)), rng.gen_range(lo[1]..hi[1].max(lo[1] + 1e-9)), theta)
        };
        if g.is_free_world([q.x, q.y]) {
            if out.len() >= goal_share {
                accepted_uniform += 1;
            }
            out.push(q);
        }
    }
    let frac = if uniform_tries > 0 { accepted_uniform as f64 / uniform_tries as f64 } else { 1.0 };
    let area = (hi[0] - lo[0]).max(0.0) * (hi[1] - lo[1]).max(0.0) * frac;
    (out, area)
}

type TreePath = (f64, Vec<Pose>);

fn grow_tree<R: Rng>(
    req: &PlanRequest<'_>,
    p: &PlannerParams,
    margin: f64,
    lookup: &RewardLookup<'_>,
    straight: Option<&[Pose]>,
    rng: &mut R,
) -> (Option<TreePath>, bool) {
    let in_goal = |q: &Pose| (q.x - req.human.x).hypot(q.y - req.human.y) <= p.goal_radius;
    let (samples, area) = sample_configs(req, p, margin, rng);
    let mut nodes = vec![req.start];
    if let Some(s) = straight {
        nodes.extend(s.iter().skip(1).copied());
    }
    nodes.extend(samples);
    let n = nodes.len();
    let radius = p.connection_radius.unwrap_or_else(|| fmt_radius(n, area, p));
    let reward: Vec<f64> = nodes.iter().map(|q| lookup.planning(q)).collect();

    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if config_dist(&nodes[i], &nodes[j], p) <= radius {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum St {
        Unvisited,
        Open,
        Closed,
    }
    let mut state = vec![St::Unvisited; n];
    let mut cost = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    state[0] = St::Open;
    cost[0] = 0.0;
    heap.push(Open(0.0, 0));
    let mut goal = None;

    while let Some(Open(cz, z)) = heap.pop() {
        if state[z] != St::Open || cz > cost[z] {
            continue;
        }
        if in_goal(&nodes[z]) {
            goal = Some(z);
            break;
        }
        let mut new_open = Vec::new();
        for &x in &neighbors[z] {
            if state[x] != St::Unvisited {
                continue;
            }
            let mut best: Option<(f64, usize)> = None;
            for &y in &neighbors[x] {
                if state[y] != St::Open {
                    continue;
                }
                let c = cost[y] + edge_cost(&nodes[y], &nodes[x], reward[x], p);
                if best.is_none_or(|(bc, by)| c < bc || (c == bc && y < by)) {
                    best = Some((c, y));
                }
            }
            if let Some((c, y)) = best {
                if req.grid.segment_free([nodes[y].x, nodes[y].y], [nodes[x].x, nodes[x].y]) {
                    cost[x] = c;
                    parent[x] = y;
                    new_open.push(x);
                }
            }
        }
        for x in new_open {
            state[x] = St::Open;
            heap.push(Open(cost[x], x));
        }
        state[z] = St::Closed;
    }

    let tree = goal.map(|gi| {
        let mut path = vec![nodes[gi]];
        let mut k = gi;
        while parent[k] != usize::MAX {
            k = parent[k];
            path.push(nodes[k]);
        }
        path.reverse();
        (cost[gi], path)
    });
    (tree, nodes.iter().any(in_goal))
}

/// Plans from the request's start into the goal disk around the person.
pub fn plan<R: Rng>(req: &PlanRequest<'_>, p: &PlannerParams, rng: &mut R) -> Result<Plan, PlanError> {
    p.validate()?;
    if !req.grid.is_free_world([req.start.x, req.start.y]) {
        return Err(PlanError::StartInCollision);
    }
    let lookup = RewardLookup::new(req.reward, req.human, req.g);

    let straight = straight_path(&req.start, &req.human, p.goal_radius, 0.25);
    let straight_ok = path_collision_free(&straight, req.grid);
    let straight_cost = if straight_ok { path_cost(&straight, &lookup, p) } else { f64::INFINITY };

    // the window grows when the tree cannot reach the goal, e.g. around a wall
    let mut tree = None;
    let mut any_goal = false;
    let mut margin = p.margin;
    for _ in 0..3 {
        let (t, g) = grow_tree(req, p, margin, &lookup, straight_ok.then_some(&straight[..]), rng);
        any_goal |= g;
        tree = t;
        if tree.is_some() || straight_ok {
            break;
        }
        margin *= 2.0;
    }

    match tree {
        Some((c, path)) if c < straight_cost => Ok(Plan { path, cost: c, straight: false }),
        _ if straight_ok => Ok(Plan {
            path: straight,
            cost: straight_cost,
            straight: true,
        }),
        _ => {
            if !any_goal {
                Err(PlanError::GoalUnreachable(p.goal_radius))
            } else {
                Err(PlanError::NoPath(p.samples))
            }
        }
    }
}

pub const TURN_RATE: f64 = 1.0;

/// Speeds by reward argmax over speed bins; time from segment length and
/// speed, or turning time at 1 rad/s when that is longer. Repeated poses are
/// dropped.
pub fn assign_velocities(path: &[Pose], lookup: &RewardLookup<'_>) -> Trajectory<f64> {
    let mut samples: Vec<TrajectorySample<f64>> = Vec::with_capacity(path.len());
    for q in path {
        let v = lookup.best_speed(q);
        match samples.last() {
            None => samples.push(TrajectorySample { t: 0.0, pose: *q, v }),
            Some(prev) => {
                let len = prev.pose.distance(q);
                let turn = angle_dist(q.theta, prev.pose.theta);
                let dt = (len / v).max(turn / TURN_RATE);
                if dt > 0.0 {
                    samples.push(TrajectorySample { t: prev.t + dt, pose: *q, v });
                }
            }
        }
    }
    Trajectory::new(samples, Frame::World).expect("non-empty with increasing time")
}

/// Trajectory driving straight at constant speed, facing the person, to
/// `stop` meters from it.
pub fn baseline_trajectory(start: &Pose, human: &Pose, stop: f64, v: f64) -> Trajectory<f64> {
    let d = start.distance(human);
    let heading = start.bearing_to(human);
    let travel = (d - stop).max(0.0);
    let (ux, uy) = ((human.x - start.x) / d, (human.y - start.y) / d);
    let mut s = vec![TrajectorySample {
        t: 0.0,
        pose: Pose::new(start.x, start.y, heading),
        v,
    }];
    if travel > 0.0 {
        s.push(TrajectorySample {
            t: travel / v,
            pose: Pose::new(start.x + travel * ux, start.y + travel * uy, heading),
            v,
        });
    }
    Trajectory::new(s, Frame::World).expect("valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::Cell;
    use crate::state::StateGrid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_grid() -> StateGrid<f64> {
        StateGrid::new(vec![-1.0, 0.0, 1.0], vec![-1.0, 0.0, 1.0], vec![-1.5, 0.0, 1.5], vec![0.15, 0.4, 0.65], vec![0, 1]).unwrap()
    }

    #[test]
    fn blend_examples() {
        let g = small_grid();
        let vals: Vec<f64> = (0..g.len()).map(|i| ((i * 7919) % 101) as f64 - 50.0).collect();
        let f = Field::new(g.clone(), vals.clone()).unwrap();
        let b = blend(&f, &f, 0.3).unwrap();
        for (x, y) in b.values.iter().zip(rescale_unit(&vals)) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(b.min(), 0.0);
        assert_eq!(b.max(), 1.0);
        let other = Field::new(g.clone(), vals.iter().map(|v| -v).collect()).unwrap();
        assert_eq!(blend(&f, &other, 1.0).unwrap().values, rescale_unit(&vals));
        let c = Field::new(g.clone(), vec![3.0; g.len()]).unwrap();
        assert!(blend(&c, &c, 0.2).unwrap().values.iter().all(|&v| v == 0.0));
        let g2 = StateGrid::new(vec![0.0], vec![0.0], vec![0.0], vec![0.15], vec![0]).unwrap();
        assert!(blend(&f, &Field::zeros(g2), 0.5).is_err());
    }

    #[test]
    fn edge_cost_examples() {
        let p = PlannerParams::default();
        let a = Pose::new(0.0, 0.0, 0.0);
        let b = Pose::new(1.0, 0.0, 0.0);
        assert_eq!(edge_cost(&a, &b, 1.0, &p), 0.0);
        assert!((edge_cost(&a, &b, 0.0, &p) - 1.5).abs() < 1e-12);
        let c = Pose::new(0.0, 0.0, 2.0 * std::f64::consts::PI - 0.1);
        assert!((config_dist(&a, &c, &p) - 0.5 * 0.1).abs() < 1e-12);
    }

    #[test]
    fn speeds_tie_to_slowest() {
        let g = small_grid();
        let f = Field::zeros(g);
        let lk = RewardLookup::new(&f, Pose::origin(), 1);
        let t = assign_velocities(&[Pose::new(1.0, 0.0, 0.0), Pose::new(0.5, 0.0, 0.0)], &lk);
        assert!(t.samples().iter().all(|s| s.v == 0.15));
        let one = assign_velocities(&[Pose::new(1.0, 0.0, 0.0)], &lk);
        assert_eq!(one.len(), 1);
        assert_eq!(one.samples()[0].t, 0.0);
    }

    #[test]
    fn plan_through_gap() {
        let mut grid = OccupancyGrid::new(40, 40, 0.25, [-5.0, -5.0], Cell::Free);
        // wall at x in [0, 0.25) with a gap near y = 3
        for j in 0..40 {
            let y = -5.0 + (j as f64 + 0.5) * 0.25;
            if !(2.5..3.5).contains(&y) {
                grid.set((20, j), Cell::Occupied);
            }
        }
        let field = Field::zeros(StateGrid::default());
        let req = PlanRequest {
            start: Pose::new(-3.0, 0.0, 0.0),
            human: Pose::new(3.0, 0.0, std::f64::consts::PI),
            g: 1,
            grid: &grid,
            reward: &field,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let plan = plan(&req, &PlannerParams::default(), &mut rng).unwrap();
        assert!(!plan.straight);
        assert!(path_collision_free(&plan.path, &grid));
        assert!(plan.path.iter().any(|q| q.y > 2.0 && q.x > -0.5 && q.x < 0.75));
        let last = plan.path.last().unwrap();
        assert!(last.distance(&req.human) <= 0.6);
    }

    #[test]
    fn deterministic() {
        let grid = OccupancyGrid::new(40, 40, 0.25, [-5.0, -5.0], Cell::Free);
        let sg = StateGrid::default();
        let vals: Vec<f64> = (0..sg.len()).map(|i| ((i * 31) % 17) as f64 / 16.0).collect();
        let field = Field::new(sg, vals).unwrap();
        let req = PlanRequest {
            start: Pose::new(-4.0, 1.0, 0.3),
            human: Pose::new(1.0, 0.0, 0.0),
            g: 0,
            grid: &grid,
            reward: &field,
        };
        let p = PlannerParams {
            samples: 400,
            ..Default::default()
        };
        let a = plan(&req, &p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = plan(&req, &p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn baseline_geometry() {
        let t = baseline_trajectory(&Pose::new(0.0, 0.0, 1.0), &Pose::new(5.0, 0.0, 0.0), 0.6, 0.65);
        assert!((t.path_length() - 4.4).abs() < 1e-12);
        assert!((t.last().pose.x - 4.4).abs() < 1e-12);
    }
}
