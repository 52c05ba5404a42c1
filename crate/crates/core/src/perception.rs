//! Detection types, activation-map box extraction, the gaze rule, and a
//! simulated detector over a known set of persons.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{angle_dist, Pose2D};
use crate::map::OccupancyGrid;

pub type Pose = Pose2D<f64>;

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("activation map row {row}: {msg}")]
    Activation { row: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: usize,
    pub y1: usize,
    pub x2: usize,
    pub y2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionKind {
    GeneralPerson,
    TextMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub kind: DetectionKind,
    pub person_id: Option<u32>,
    pub score: f64,
}

/// Dense activation values indexed `values[y][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    pub values: Vec<Vec<f64>>,
    pub threshold: f64,
}

impl ActivationMap {
    pub fn new(values: Vec<Vec<f64>>, threshold: f64) -> Self {
        Self { values, threshold }
    }

    /// Reads a headerless CSV grid of numbers.
    pub fn from_csv(text: &str, threshold: f64) -> Result<Self, PerceptionError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
        let mut values = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| PerceptionError::Activation { row, msg: e.to_string() })?;
            let r = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| PerceptionError::Activation { row, msg: e.to_string() })?;
            if let Some(c) = r.iter().position(|v| !v.is_finite()) {
                return Err(PerceptionError::Activation {
                    row,
                    msg: format!("non-finite value in column {c}"),
                });
            }
            values.push(r);
        }
        Ok(Self { values, threshold })
    }

    pub fn load_csv(path: &Path, threshold: f64) -> Result<Self, PerceptionError> {
        let s = std::fs::read_to_string(path).map_err(|source| PerceptionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv(&s, threshold)
    }
}

/// Bounding box of all cells strictly above the threshold.
pub fn bbox_from_activation(map: &ActivationMap) -> Option<Detection> {
    let mut b: Option<BBox> = None;
    let mut peak = f64::NEG_INFINITY;
    for (y, row) in map.values.iter().enumerate() {
        for (x, &v) in row.iter().enumerate() {
            if v > map.threshold {
                peak = peak.max(v);
                b = Some(match b {
                    None => BBox { x1: x, y1: y, x2: x, y2: y },
                    Some(b) => BBox {
                        x1: b.x1.min(x),
                        y1: b.y1.min(y),
                        x2: b.x2.max(x),
                        y2: b.y2.max(y),
                    },
                });
            }
        }
    }
    b.map(|bbox| Detection {
        bbox,
        kind: DetectionKind::TextMatch,
        person_id: None,
        score: peak.clamp(0.0, 1.0),
    })
}

pub const GAZE_THRESHOLD_DEG: f64 = 40.0;

/// 1 when the person's heading is within 40 degrees of the bearing towards
/// the robot.
pub fn gaze_flag(person_heading: f64, person_pos: [f64; 2], robot_pos: [f64; 2]) -> u8 {
    let bearing = (robot_pos[1] - person_pos[1]).atan2(robot_pos[0] - person_pos[0]);
    // the tolerance keeps an offset built as 40 degrees from rounding below it
    let off = angle_dist(person_heading, bearing).to_degrees();
    u8::from(off < GAZE_THRESHOLD_DEG - 1e-9)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    pub fov: f64,
    pub range: f64,
    pub p_fp: f64,
    pub p_fn: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            fov: 2.0 * std::f64::consts::FRAC_PI_3,
            range: 8.0,
            p_fp: 0.0,
            p_fn: 0.0,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        for p in [self.p_fp, self.p_fn] {
            if !(0.0..=1.0).contains(&p) {
                return Err(PerceptionError::Probability(p));
            }
        }
        Ok(())
    }

    /// Whether a point is inside the field of view, in range and unoccluded.
    pub fn sees(&self, grid: &OccupancyGrid, robot: &Pose, p: [f64; 2]) -> bool {
        let (dx, dy) = (p[0] - robot.x, p[1] - robot.y);
        let d = dx.hypot(dy);
        if d > self.range {
            return false;
        }
        if d > 1e-9 && angle_dist(dy.atan2(dx), robot.theta) > self.fov / 2.0 {
            return false;
        }
        grid.line_of_sight([robot.x, robot.y], p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub id: u32,
    pub pose: Pose,
    pub appearance: String,
    #[serde(default)]
    pub location_clue: String,
    #[serde(default)]
    pub floor: u32,
}

fn person_bbox(grid: &OccupancyGrid, p: &Person) -> BBox {
    let (i, j) = grid.world_to_cell([p.pose.x, p.pose.y]).unwrap_or((0, 0));
    BBox {
        x1: i.saturating_sub(1),
        y1: j.saturating_sub(1),
        x2: (i + 1).min(grid.width.saturating_sub(1)),
        y2: (j + 1).min(grid.height.saturating_sub(1)),
    }
}

/// Persons on `floor` visible from `robot`, in id order.
pub fn visible_persons<'a>(persons: &'a [Person], grid: &OccupancyGrid, floor: u32, robot: &Pose, sensor: &SensorModel) -> Vec<&'a Person> {
    let mut v: Vec<&Person> = persons
        .iter()
        .filter(|p| p.floor == floor && sensor.sees(grid, robot, [p.pose.x, p.pose.y]))
        .collect();
    v.sort_by_key(|p| p.id);
    v
}

/// Simulated detector. Every visible person yields a general detection; with
/// a text query, the matching person yields a text match with probability
/// `1 - p_fn` and every other visible person with probability `p_fp`. One
/// uniform draw is consumed per visible person per query.
pub fn observe<R: Rng>(
    persons: &[Person],
    grid: &OccupancyGrid,
    floor: u32,
    robot: &Pose,
    query: Option<&str>,
    sensor: &SensorModel,
    rng: &mut R,
) -> Vec<Detection> {
    let vis = visible_persons(persons, grid, floor, robot, sensor);
    let mut out: Vec<Detection> = vis
        .iter()
        .map(|p| Detection {
            bbox: person_bbox(grid, p),
            kind: DetectionKind::GeneralPerson,
            person_id: Some(p.id),
            score: 1.0,
        })
        .collect();
    if let Some(q) = query {
        for p in &vis {
            let u: f64 = rng.gen();
            let hit = if p.appearance == q { u >= sensor.p_fn } else { u < sensor.p_fp };
            if hit {
                out.push(Detection {
                    bbox: person_bbox(grid, p),
                    kind: DetectionKind::TextMatch,
                    person_id: Some(p.id),
                    score: 1.0,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::Cell;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bbox_examples() {
        let mut m = ActivationMap::new(vec![vec![0.0; 8]; 8], 0.5);
        assert!(bbox_from_activation(&m).is_none());
        m.values[4][3] = 0.9;
        assert_eq!(bbox_from_activation(&m).unwrap().bbox, BBox { x1: 3, y1: 4, x2: 3, y2: 4 });
        m.values[4][3] = 0.0;
        m.values[2][1] = 0.7;
        m.values[7][4] = 0.6;
        assert_eq!(bbox_from_activation(&m).unwrap().bbox, BBox { x1: 1, y1: 2, x2: 4, y2: 7 });
        m.values[0][0] = 0.5;
        assert_eq!(bbox_from_activation(&m).unwrap().bbox.x1, 1);
    }

    #[test]
    fn activation_csv() {
        let m = ActivationMap::from_csv("0,0.2\n0.9,0\n", 0.5).unwrap();
        assert_eq!(bbox_from_activation(&m).unwrap().bbox, BBox { x1: 0, y1: 1, x2: 0, y2: 1 });
        assert!(ActivationMap::from_csv("0,x\n", 0.5).is_err());
    }

    #[test]
    fn gaze_examples() {
        assert_eq!(gaze_flag(0.0, [0.0, 0.0], [2.0, 0.0]), 1);
        assert_eq!(gaze_flag(std::f64::consts::PI, [0.0, 0.0], [2.0, 0.0]), 0);
        assert_eq!(gaze_flag(39.9f64.to_radians(), [0.0, 0.0], [2.0, 0.0]), 1);
        assert_eq!(gaze_flag(40.0f64.to_radians(), [0.0, 0.0], [2.0, 0.0]), 0);
        assert_eq!(gaze_flag(-40.0f64.to_radians(), [0.0, 0.0], [2.0, 0.0]), 0);
    }

    fn scene() -> (OccupancyGrid, Vec<Person>) {
        let g = OccupancyGrid::new(40, 20, 0.5, [0.0, 0.0], Cell::Free);
        let mk = |id, x, y, a: &str| Person {
            id,
            pose: Pose::new(x, y, 0.0),
            appearance: a.into(),
            location_clue: String::new(),
            floor: 0,
        };
        (g, vec![mk(1, 5.0, 5.0, "red shirt"), mk(2, 6.0, 4.0, "blue shirt"), mk(3, 6.0, 6.0, "green hat")])
    }

    #[test]
    fn observe_noise_free_and_visibility() {
        let (mut g, persons) = scene();
        let robot = Pose::new(1.0, 5.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = SensorModel::default();
        let d = observe(&persons, &g, 0, &robot, Some("red shirt"), &s, &mut rng);
        let text: Vec<_> = d.iter().filter(|d| d.kind == DetectionKind::TextMatch).collect();
        assert_eq!(text.len(), 1);
        assert_eq!(text[0].person_id, Some(1));
        assert_eq!(d.iter().filter(|d| d.kind == DetectionKind::GeneralPerson).count(), 3);

        let behind = Pose::new(1.0, 5.0, std::f64::consts::PI);
        assert!(observe(&persons, &g, 0, &behind, Some("red shirt"), &s, &mut rng).is_empty());
        for j in 0..20 {
            g.set((6, j), Cell::Occupied);
        }
        assert!(observe(&persons, &g, 0, &robot, None, &s, &mut rng).is_empty());
    }

    #[test]
    fn observe_is_seeded() {
        let (g, persons) = scene();
        let robot = Pose::new(1.0, 5.0, 0.0);
        let s = SensorModel {
            p_fp: 0.3,
            ..Default::default()
        };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            (0..20).map(|_| observe(&persons, &g, 0, &robot, Some("red shirt"), &s, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
