//! SVG overlays of maps, search logs and approach trajectories.

use std::fmt::Write;

use crate::map::{AnnotatedMap, Cell, OccupancyGrid};
use crate::search::SearchEvent;
use crate::sim::LogEntry;
use crate::{Pose, Traj};

const PX: f64 = 20.0;
pub const TRUE_DETECTION: &str = "#1f4fd8";
pub const FALSE_DETECTION: &str = "#d81f1f";
const PALETTE: [&str; 4] = ["#2a9d4b", "#7b3fb5", "#e08a00", "#444444"];

struct Canvas {
    origin: [f64; 2],
    height: f64,
    out: String,
}

impl Canvas {
    fn new(grid: &OccupancyGrid) -> Self {
        let b = grid.bounds();
        let (w, h) = ((b[2] - b[0]) * PX, (b[3] - b[1]) * PX);
        let mut out = String::new();
        writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#).unwrap();
        writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##).unwrap();
        Self {
            origin: [b[0], b[1]],
            height: h,
            out,
        }
    }

    fn xy(&self, p: [f64; 2]) -> (f64, f64) {
        ((p[0] - self.origin[0]) * PX, self.height - (p[1] - self.origin[1]) * PX)
    }

    fn points(&self, pts: &[[f64; 2]]) -> String {
        pts.iter()
            .map(|&p| {
                let (x, y) = self.xy(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn obstacles(&mut self, grid: &OccupancyGrid) {
        self.out.push_str("<g fill=\"#303030\">\n");
        // one rect per horizontal run of occupied cells
        for j in 0..grid.height {
            let mut i = 0;
            while i < grid.width {
                if grid.get((i, j)) != Cell::Occupied {
                    i += 1;
                    continue;
                }
                let s = i;
                while i < grid.width && grid.get((i, j)) == Cell::Occupied {
                    i += 1;
                }
                let p = [grid.origin[0] + s as f64 * grid.resolution, grid.origin[1] + (j + 1) as f64 * grid.resolution];
                let (x, y) = self.xy(p);
                let w = (i - s) as f64 * grid.resolution * PX;
                writeln!(self.out, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{:.2}"/>"#, grid.resolution * PX).unwrap();
            }
        }
        self.out.push_str("</g>\n");
    }

    fn circle(&mut self, p: [f64; 2], r: f64, fill: &str) {
        let (x, y) = self.xy(p);
        writeln!(self.out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.1}" fill="{fill}"/>"#).unwrap();
    }

    fn line(&mut self, a: [f64; 2], b: [f64; 2], stroke: &str, class: &str) {
        let (x1, y1) = self.xy(a);
        let (x2, y2) = self.xy(b);
        writeln!(
            self.out,
            r#"<line class="{class}" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="2"/>"#
        )
        .unwrap();
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Map, areas and the executed search on one floor: one polyline per move,
/// a circle per stop, and a line from the robot to every person it asked
/// about (blue when the answer was positive, red otherwise).
pub fn search_svg(map: &AnnotatedMap, floor: u32, log: &[LogEntry], persons: &[(u32, [f64; 2])]) -> String {
    let grid = map.grid(floor);
    let mut c = Canvas::new(grid);
    c.obstacles(grid);
    for a in map.areas.iter().filter(|a| a.floor == floor) {
        let pts = c.points(&a.polygon);
        writeln!(c.out, r##"<polygon points="{pts}" fill="none" stroke="#9a9a9a" stroke-dasharray="4 3"/>"##).unwrap();
        let (x, y) = c.xy(a.centroid());
        writeln!(c.out, r##"<text x="{x:.2}" y="{y:.2}" font-size="12" fill="#6a6a6a" text-anchor="middle">{}</text>"##, a.label).unwrap();
    }
    for (_, p) in persons {
        c.circle(*p, 5.0, "#f2c200");
    }
    for e in log.iter().filter(|e| e.floor == floor) {
        if let SearchEvent::MoveTo { .. } = e.event {
            if e.path.len() >= 2 {
                let pts = c.points(&e.path);
                writeln!(c.out, r##"<polyline class="segment" points="{pts}" fill="none" stroke="#2a2a2a" stroke-width="1.5"/>"##).unwrap();
            }
        }
        c.circle([e.pose.x, e.pose.y], 3.0, "#2a2a2a");
        if let (Some(p), Some(ok)) = (e.person, e.positive) {
            c.line([e.pose.x, e.pose.y], p, if ok { TRUE_DETECTION } else { FALSE_DETECTION }, "detection");
        }
    }
    c.finish()
}

/// Obstacles, the person with its facing direction, and one coloured
/// polyline per named trajectory.
pub fn trajectories_svg(grid: &OccupancyGrid, human: &Pose, trajs: &[(String, Traj)]) -> String {
    let mut c = Canvas::new(grid);
    c.obstacles(grid);
    let h = [human.x, human.y];
    c.circle(h, 6.0, "#f2c200");
    c.line(h, [human.x + 0.6 * human.theta.cos(), human.y + 0.6 * human.theta.sin()], "#f2c200", "facing");
    for (k, (name, t)) in trajs.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<[f64; 2]> = t.samples().iter().map(|s| [s.pose.x, s.pose.y]).collect();
        let p = c.points(&pts);
        writeln!(c.out, r#"<polyline class="trajectory" data-name="{name}" points="{p}" fill="none" stroke="{color}" stroke-width="2"/>"#).unwrap();
        let (x, y) = c.xy(pts[0]);
        writeln!(c.out, r#"<text x="{x:.2}" y="{:.2}" font-size="12" fill="{color}">{name}</text>"#, y - 6.0 - 12.0 * k as f64).unwrap();
    }
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Frame, TrajectorySample, Waypoint};
    use crate::map::Area;
    use crate::search::MoveReason;

    #[test]
    fn search_plot_elements() {
        let mut g = OccupancyGrid::new(10, 10, 1.0, [0.0, 0.0], Cell::Free);
        g.set((5, 5), Cell::Occupied);
        g.set((6, 5), Cell::Occupied);
        let map = AnnotatedMap::new(
            vec![g],
            vec![Area {
                label: "office".into(),
                floor: 0,
                polygon: vec![[0.0, 0.0], [4.0, 0.0], [4.0, 4.0]],
            }],
        )
        .unwrap();
        let mv = |x: f64| LogEntry {
            step: 0,
            pose: Pose::new(x, 1.0, 0.0),
            floor: 0,
            path_length: 0.0,
            event: SearchEvent::MoveTo {
                target: Waypoint::new(x + 2.0, 1.0, 0, 0.0),
                reason: MoveReason::Frontier,
                label: None,
                person_id: None,
            },
            text_matches: vec![],
            path: vec![[x, 1.0], [x + 1.0, 1.0], [x + 2.0, 1.0]],
            person: None,
            positive: None,
        };
        let mut ask = mv(5.0);
        ask.event = SearchEvent::AskFeedback { person_id: 1 };
        ask.path.clear();
        ask.person = Some([8.0, 8.0]);
        ask.positive = Some(false);
        let svg = search_svg(&map, 0, &[mv(1.0), mv(3.0), ask], &[(1, [8.0, 8.0])]);
        assert_eq!(svg.matches("<polyline class=\"segment\"").count(), 2);
        assert_eq!(svg.matches(FALSE_DETECTION).count(), 1);
        // the two occupied cells share a row and merge into one rect
        assert_eq!(svg.matches("<rect x=").count(), 1);
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn trajectory_plot() {
        let g = OccupancyGrid::new(10, 10, 1.0, [-5.0, -5.0], Cell::Free);
        let t = Traj::new(
            vec![
                TrajectorySample { t: 0.0, pose: Pose::new(-4.0, 0.0, 0.0), v: 0.4 },
                TrajectorySample { t: 1.0, pose: Pose::new(-1.0, 0.0, 0.0), v: 0.4 },
            ],
            Frame::World,
        )
        .unwrap();
        let svg = trajectories_svg(&g, &Pose::origin(), &[("a".into(), t.clone()), ("b".into(), t)]);
        assert_eq!(svg.matches("class=\"trajectory\"").count(), 2);
    }
}
