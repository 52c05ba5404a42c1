//! Demonstration logs: JSONL ingestion in the human or world frame and a
//! scripted generator for fixtures.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{normalize_angle, to_human_frame};
use crate::kdmrl::Demonstration;
use crate::perception::gaze_flag;
use crate::{Grid, Pose, State};

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("no demonstration records")]
    Empty,
}

/// One state already expressed in the human frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanFrameRecord {
    pub demo_id: u32,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub g: u8,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// One state as logged by the robot: both poses in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldFrameRecord {
    pub demo_id: u32,
    pub t: f64,
    pub robot: PoseRecord,
    pub human: PoseRecord,
    pub v: f64,
}

impl WorldFrameRecord {
    /// Relative pose via the human frame; gaze from the person's heading.
    pub fn to_human_frame(&self) -> HumanFrameRecord {
        let r = Pose::new(self.robot.x, self.robot.y, self.robot.theta);
        let h = Pose::new(self.human.x, self.human.y, self.human.theta);
        let rel = to_human_frame(&r, &h);
        HumanFrameRecord {
            demo_id: self.demo_id,
            t: self.t,
            x: rel.x,
            y: rel.y,
            theta: rel.theta,
            g: gaze_flag(h.theta, [h.x, h.y], [r.x, r.y]),
            v: self.v,
        }
    }
}

fn parse_line(line: &str) -> Result<HumanFrameRecord, String> {
    let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let rec = if v.get("robot").is_some() || v.get("human").is_some() {
        serde_json::from_value::<WorldFrameRecord>(v).map_err(|e| e.to_string())?.to_human_frame()
    } else {
        serde_json::from_value::<HumanFrameRecord>(v).map_err(|e| e.to_string())?
    };
    let vals = [rec.t, rec.x, rec.y, rec.theta, rec.v];
    if vals.iter().any(|x| !x.is_finite()) {
        return Err("non-finite value".into());
    }
    if rec.g > 1 {
        return Err(format!("gaze must be 0 or 1, got {}", rec.g));
    }
    Ok(rec)
}

pub fn parse_records(text: &str) -> Result<Vec<HumanFrameRecord>, DemoError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(line).map_err(|msg| DemoError::Line { line: i + 1, msg })?);
    }
    if out.is_empty() {
        return Err(DemoError::Empty);
    }
    Ok(out)
}

/// Clamps a state into the grid's bin range; the heading is wrapped.
pub fn clamp_to_grid(s: State, grid: &Grid) -> State {
    let clamp = |v: f64, b: &[f64]| v.clamp(b[0], b[b.len() - 1]);
    State::new(
        clamp(s.x, &grid.x_bins),
        clamp(s.y, &grid.y_bins),
        normalize_angle(s.theta),
        s.g,
        clamp(s.v, &grid.v_bins),
    )
}

/// Groups records by `demo_id` (ascending) and orders each demo by `t`.
pub fn group_demonstrations(records: &[HumanFrameRecord], grid: &Grid) -> Vec<Demonstration<f64>> {
    let mut by_id: BTreeMap<u32, Vec<HumanFrameRecord>> = BTreeMap::new();
    for r in records {
        by_id.entry(r.demo_id).or_default().push(*r);
    }
    by_id
        .into_values()
        .map(|mut v| {
            v.sort_by(|a, b| a.t.total_cmp(&b.t));
            let states = v.iter().map(|r| clamp_to_grid(State::new(r.x, r.y, r.theta, r.g, r.v), grid)).collect();
            Demonstration { states }
        })
        .collect()
}

pub fn parse_demonstrations(text: &str, grid: &Grid) -> Result<Vec<Demonstration<f64>>, DemoError> {
    Ok(group_demonstrations(&parse_records(text)?, grid))
}

/// Scripted approaches in the human frame (person at the origin facing +x).
/// With gaze the robot comes from the front and ends facing the person; without
/// gaze it comes from behind and finishes on a diagonal. Speed tapers from
/// 0.65 to 0.15 m/s over the last part of each demo.
pub fn synthetic_demos<R: Rng>(per_gaze: usize, steps: usize, rng: &mut R) -> Vec<HumanFrameRecord> {
    let steps = steps.max(2);
    let mut out = Vec::new();
    let mut id = 0u32;
    for g in [1u8, 0] {
        for _ in 0..per_gaze {
            let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let phi = rng.gen_range(-0.6..0.6);
            let (start, end, bend) = if g == 1 {
                ([5.0 * f64::cos(phi), 2.8 * f64::sin(phi)], [rng.gen_range(0.7..0.9), rng.gen_range(-0.2..0.2)], 0.8 * side)
            } else {
                ([-5.0 * f64::cos(phi), 2.8 * f64::sin(phi)], [rng.gen_range(-0.9..-0.6), 0.6 * side], 1.5 * side)
            };
            // quadratic Bezier with the control point pushed sideways
            let mid = [(start[0] + end[0]) / 2.0, (start[1] + end[1]) / 2.0 + bend];
            let at = |s: f64| {
                let a = (1.0 - s) * (1.0 - s);
                let b = 2.0 * s * (1.0 - s);
                let c = s * s;
                [a * start[0] + b * mid[0] + c * end[0], a * start[1] + b * mid[1] + c * end[1]]
            };
            for k in 0..steps {
                let s = k as f64 / (steps - 1) as f64;
                let p = at(s);
                let q = at((s + 1e-3).min(1.0));
                let r = at((s - 1e-3).max(0.0));
                let mut theta = (q[1] - r[1]).atan2(q[0] - r[0]);
                if g == 0 {
                    let bearing = (-p[1]).atan2(-p[0]);
                    theta = normalize_angle(bearing + side * PI / 4.0 * s);
                }
                let taper = ((1.0 - s) / 0.6).min(1.0);
                let v = (0.15 + 0.5 * taper + rng.gen_range(-0.03..0.03)).clamp(0.15, 0.65);
                out.push(HumanFrameRecord {
                    demo_id: id,
                    t: 0.5 * k as f64,
                    x: p[0],
                    y: p[1],
                    theta,
                    g,
                    v,
                });
            }
            id += 1;
        }
    }
    out
}

pub fn to_jsonl(records: &[HumanFrameRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("plain struct"));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn both_formats_parse() {
        let text = r#"{"demo_id":0,"t":0,"x":2,"y":0,"theta":3.14,"g":1,"v":0.4}

{"demo_id":0,"t":1,"robot":{"x":2,"y":1,"theta":0},"human":{"x":2,"y":0,"theta":1.5707963267948966},"v":0.15}"#;
        let r = parse_records(text).unwrap();
        assert_eq!(r.len(), 2);
        // robot one meter ahead of a person facing +y, so the person looks at it
        assert!((r[1].x - 1.0).abs() < 1e-12 && r[1].y.abs() < 1e-12);
        assert_eq!(r[1].g, 1);
        assert!((r[1].theta + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "{\"demo_id\":0,\"t\":0,\"x\":2,\"y\":0,\"theta\":0,\"g\":1,\"v\":0.4}\n{\"demo_id\":0,\"t\":1}\n";
        match parse_records(text) {
            Err(DemoError::Line { line, .. }) => assert_eq!(line, 2),
            e => panic!("{e:?}"),
        }
        assert!(matches!(parse_records("\n"), Err(DemoError::Empty)));
        assert!(matches!(parse_records("{\"demo_id\":0,\"t\":0,\"x\":2,\"y\":0,\"theta\":0,\"g\":3,\"v\":0.4}"), Err(DemoError::Line { line: 1, .. })));
    }

    #[test]
    fn grouping_sorts_and_clamps() {
        let grid = Grid::default();
        let mk = |id, t, x| HumanFrameRecord {
            demo_id: id,
            t,
            x,
            y: 9.0,
            theta: 7.0,
            g: 0,
            v: 2.0,
        };
        let d = group_demonstrations(&[mk(3, 1.0, 1.0), mk(1, 0.0, 20.0), mk(3, 0.0, 2.0)], &grid);
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].states[0].x, 6.0);
        assert_eq!(d[1].states[0].x, 2.0);
        assert_eq!(d[1].states[1].y, 3.0);
        assert_eq!(d[1].states[1].v, 0.65);
        assert!((d[1].states[1].theta - (7.0 - 2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn synthetic_demos_taper_and_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let recs = synthetic_demos(3, 20, &mut rng);
        assert_eq!(recs.len(), 120);
        let grid = Grid::default();
        let demos = group_demonstrations(&recs, &grid);
        assert_eq!(demos.len(), 6);
        for d in &demos {
            let first = d.states.first().unwrap();
            let last = d.states.last().unwrap();
            assert!(last.v < first.v);
            assert!(last.x.hypot(last.y) < 1.2);
            assert!(d.states.iter().all(|s| s.x.abs() <= 6.0 && s.y.abs() <= 3.0));
            if first.g == 1 {
                assert!(first.x > 0.0);
            } else {
                assert!(first.x < 0.0);
            }
        }
        let again = synthetic_demos(3, 20, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(to_jsonl(&recs), to_jsonl(&again));
        assert_eq!(parse_records(&to_jsonl(&recs)).unwrap(), recs);
    }
}
