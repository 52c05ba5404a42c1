//! Annotated occupancy maps: per-floor grids plus labelled polygonal areas.
//!
//! Cell `(i, j)` covers `x in origin.x + [i, i+1) * res`, `y in origin.y + [j, j+1) * res`,
//! so row 0 of a nested-array grid is the bottom row of the map.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{point_in_polygon, polygon_is_simple};

#[derive(Debug, Error)]
pub enum MapError {
    #[error("resolution must be > 0")]
    Resolution,
    #[error("floor {floor}: {msg}")]
    Grid { floor: usize, msg: String },
    #[error("area {index}: {msg}")]
    Area { index: usize, msg: String },
    #[error("floors = {declared} but {found} grids given")]
    FloorCount { declared: usize, found: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Free,
    Occupied,
    Unknown,
}

impl Cell {
    fn from_code(c: i64) -> Option<Self> {
        match c {
            0 => Some(Cell::Free),
            1 => Some(Cell::Occupied),
            -1 | 255 => Some(Cell::Unknown),
            _ => None,
        }
    }

    fn code(self) -> i8 {
        match self {
            Cell::Free => 0,
            Cell::Occupied => 1,
            Cell::Unknown => -1,
        }
    }
}

pub type CellIdx = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: [f64; 2],
    cells: Vec<Cell>,
}

const NEIGHBORS8: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

#[derive(Copy, Clone, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, then lower index first
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64, origin: [f64; 2], fill: Cell) -> Self {
        Self {
            width,
            height,
            resolution,
            origin,
            cells: vec![fill; width * height],
        }
    }

    /// Builds a grid from rows of cell codes (0 free, 1 occupied, -1 unknown).
    pub fn from_rows(rows: &[Vec<i64>], resolution: f64, origin: [f64; 2]) -> Result<Self, String> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if width == 0 {
            return Err("empty grid".into());
        }
        let mut cells = Vec::with_capacity(width * height);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(format!("row {j} has {} cells, expected {width}", row.len()));
            }
            for &c in row {
                cells.push(Cell::from_code(c).ok_or_else(|| format!("row {j}: invalid cell code {c}"))?);
            }
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells,
        })
    }

    pub fn get(&self, c: CellIdx) -> Cell {
        self.cells[c.1 * self.width + c.0]
    }

    pub fn set(&mut self, c: CellIdx, v: Cell) {
        self.cells[c.1 * self.width + c.0] = v;
    }

    pub fn index(&self, c: CellIdx) -> usize {
        c.1 * self.width + c.0
    }

    pub fn cell_of_index(&self, k: usize) -> CellIdx {
        (k % self.width, k / self.width)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn is_free(&self, c: CellIdx) -> bool {
        self.get(c) == Cell::Free
    }

    pub fn in_bounds(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height
    }

    pub fn world_to_cell(&self, p: [f64; 2]) -> Option<CellIdx> {
        let i = ((p[0] - self.origin[0]) / self.resolution).floor();
        let j = ((p[1] - self.origin[1]) / self.resolution).floor();
        if !i.is_finite() || !j.is_finite() {
            return None;
        }
        let (i, j) = (i as i64, j as i64);
        self.in_bounds(i, j).then_some((i as usize, j as usize))
    }

    pub fn cell_center(&self, c: CellIdx) -> [f64; 2] {
        [
            self.origin[0] + (c.0 as f64 + 0.5) * self.resolution,
            self.origin[1] + (c.1 as f64 + 0.5) * self.resolution,
        ]
    }

    /// World-frame bounding box `[xmin, ymin, xmax, ymax]`.
    pub fn bounds(&self) -> [f64; 4] {
        [
            self.origin[0],
            self.origin[1],
            self.origin[0] + self.width as f64 * self.resolution,
            self.origin[1] + self.height as f64 * self.resolution,
        ]
    }

    pub fn is_free_world(&self, p: [f64; 2]) -> bool {
        self.world_to_cell(p).is_some_and(|c| self.is_free(c))
    }

    /// 8-connected free neighbours; diagonal moves may not cut occupied corners.
    pub fn free_neighbors(&self, c: CellIdx) -> impl Iterator<Item = (CellIdx, f64)> + '_ {
        NEIGHBORS8.iter().filter_map(move |&(di, dj)| {
            let (i, j) = (c.0 as i64 + di, c.1 as i64 + dj);
            if !self.in_bounds(i, j) {
                return None;
            }
            let n = (i as usize, j as usize);
            if !self.is_free(n) {
                return None;
            }
            if di != 0 && dj != 0 && (!self.is_free((i as usize, c.1)) || !self.is_free((c.0, j as usize))) {
                return None;
            }
            let step = if di != 0 && dj != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
            Some((n, step * self.resolution))
        })
    }

    /// Free cells reachable from `start`.
    pub fn reachable(&self, start: CellIdx) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        if !self.is_free(start) {
            return seen;
        }
        let mut q = VecDeque::from([start]);
        seen[self.index(start)] = true;
        while let Some(c) = q.pop_front() {
            for (n, _) in self.free_neighbors(c) {
                let k = self.index(n);
                if !seen[k] {
                    seen[k] = true;
                    q.push_back(n);
                }
            }
        }
        seen
    }

    /// Grid path distance from `start` to every cell (infinite if unreachable).
    pub fn distance_field(&self, start: CellIdx) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.len()];
        if !self.is_free(start) {
            return dist;
        }
        let mut heap = BinaryHeap::new();
        dist[self.index(start)] = 0.0;
        heap.push(HeapItem(0.0, self.index(start)));
        while let Some(HeapItem(d, k)) = heap.pop() {
            if d > dist[k] {
                continue;
            }
            for (n, w) in self.free_neighbors(self.cell_of_index(k)) {
                let nk = self.index(n);
                let nd = d + w;
                if nd < dist[nk] {
                    dist[nk] = nd;
                    heap.push(HeapItem(nd, nk));
                }
            }
        }
        dist
    }

    /// A* shortest path to the nearest cell satisfying `goal`, with `h` an
    /// admissible heuristic. Returns the cell sequence and its length.
    pub fn astar(
        &self,
        start: CellIdx,
        goal: impl Fn(CellIdx) -> bool,
        h: impl Fn(CellIdx) -> f64,
    ) -> Option<(Vec<CellIdx>, f64)> {
        if !self.is_free(start) {
            return None;
        }
        let mut g = vec![f64::INFINITY; self.len()];
        let mut parent = vec![usize::MAX; self.len()];
        let mut closed = vec![false; self.len()];
        let mut heap = BinaryHeap::new();
        let s = self.index(start);
        g[s] = 0.0;
        heap.push(HeapItem(h(start), s));
        while let Some(HeapItem(_, k)) = heap.pop() {
            if closed[k] {
                continue;
            }
            closed[k] = true;
            let c = self.cell_of_index(k);
            if goal(c) {
                let mut path = vec![c];
                let mut cur = k;
                while parent[cur] != usize::MAX {
                    cur = parent[cur];
                    path.push(self.cell_of_index(cur));
                }
                path.reverse();
                return Some((path, g[k]));
            }
            for (n, w) in self.free_neighbors(c) {
                let nk = self.index(n);
                let ng = g[k] + w;
                if ng < g[nk] {
                    g[nk] = ng;
                    parent[nk] = k;
                    heap.push(HeapItem(ng + h(n), nk));
                }
            }
        }
        None
    }

    pub fn shortest_path(&self, start: CellIdx, goal: CellIdx) -> Option<(Vec<CellIdx>, f64)> {
        let gc = self.cell_center(goal);
        let res = self.resolution;
        // octile distance is admissible for 8-connected moves
        self.astar(start, |c| c == goal, |c| {
            let p = self.cell_center(c);
            let (dx, dy) = (((p[0] - gc[0]) / res).abs(), ((p[1] - gc[1]) / res).abs());
            let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
            (hi - lo + std::f64::consts::SQRT_2 * lo) * res
        })
    }

    /// Cells on the Bresenham line from `a` to `b`, inclusive.
    pub fn bresenham(a: CellIdx, b: CellIdx) -> Vec<CellIdx> {
        let (mut x0, mut y0) = (a.0 as i64, a.1 as i64);
        let (x1, y1) = (b.0 as i64, b.1 as i64);
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        let mut out = Vec::new();
        loop {
            out.push((x0 as usize, y0 as usize));
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
        out
    }

    /// True when no occupied cell lies on the grid ray between two world points.
    pub fn line_of_sight(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        match (self.world_to_cell(a), self.world_to_cell(b)) {
            (Some(ca), Some(cb)) => Self::bresenham(ca, cb).into_iter().all(|c| self.get(c) != Cell::Occupied),
            _ => false,
        }
    }

    /// True when every point of the segment, sampled at half-cell spacing, is free.
    pub fn segment_free(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let n = (len / (0.5 * self.resolution)).ceil().max(1.0) as usize;
        (0..=n).all(|k| {
            let t = k as f64 / n as f64;
            self.is_free_world([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])])
        })
    }

    /// Nearest free cell to `p` by Euclidean distance between cell centres.
    pub fn nearest_free(&self, p: [f64; 2]) -> Option<CellIdx> {
        let mut best: Option<(f64, CellIdx)> = None;
        for j in 0..self.height {
            for i in 0..self.width {
                if self.is_free((i, j)) {
                    let c = self.cell_center((i, j));
                    let d = (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, (i, j)));
                    }
                }
            }
        }
        best.map(|(_, c)| c)
    }

    fn encode(&self) -> GridRepr {
        let bytes: Vec<u8> = self.cells.iter().map(|c| c.code() as u8).collect();
        GridRepr::Encoded {
            width: self.width,
            height: self.height,
            data: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
    }
}

/// A labelled polygon on one floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub label: String,
    #[serde(default)]
    pub floor: u32,
    pub polygon: Vec<[f64; 2]>,
}

impl Area {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        point_in_polygon(p, &self.polygon)
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.polygon.len() as f64;
        let s = self.polygon.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [s[0] / n, s[1] / n]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum GridRepr {
    Nested(Vec<Vec<i64>>),
    Encoded { width: usize, height: usize, data: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct MapFile {
    resolution: f64,
    #[serde(default)]
    origin: [f64; 2],
    #[serde(default)]
    floors: Option<usize>,
    grids: Vec<GridRepr>,
    areas: Vec<Area>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedMap {
    pub resolution: f64,
    pub floors: Vec<OccupancyGrid>,
    pub areas: Vec<Area>,
}

impl AnnotatedMap {
    pub fn new(floors: Vec<OccupancyGrid>, areas: Vec<Area>) -> Result<Self, MapError> {
        let resolution = floors.first().map_or(0.0, |g| g.resolution);
        let m = Self {
            resolution,
            floors,
            areas,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if !(self.resolution > 0.0) {
            return Err(MapError::Resolution);
        }
        if self.floors.is_empty() {
            return Err(MapError::FloorCount { declared: 0, found: 0 });
        }
        for (f, g) in self.floors.iter().enumerate() {
            if g.resolution != self.resolution {
                return Err(MapError::Grid {
                    floor: f,
                    msg: "resolution differs from floor 0".into(),
                });
            }
        }
        for (index, a) in self.areas.iter().enumerate() {
            let err = |msg: &str| MapError::Area { index, msg: msg.into() };
            if a.label.trim().is_empty() {
                return Err(err("empty label"));
            }
            if a.polygon.len() < 3 {
                return Err(err("polygon needs at least 3 vertices"));
            }
            if !polygon_is_simple(&a.polygon) {
                return Err(err("polygon is self-intersecting"));
            }
            if a.floor as usize >= self.floors.len() {
                return Err(err("floor out of range"));
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self, MapError> {
        let f: MapFile = serde_json::from_str(s)?;
        if !(f.resolution > 0.0) {
            return Err(MapError::Resolution);
        }
        if let Some(n) = f.floors {
            if n != f.grids.len() {
                return Err(MapError::FloorCount {
                    declared: n,
                    found: f.grids.len(),
                });
            }
        }
        let mut floors = Vec::with_capacity(f.grids.len());
        for (floor, g) in f.grids.into_iter().enumerate() {
            let grid = match g {
                GridRepr::Nested(rows) => OccupancyGrid::from_rows(&rows, f.resolution, f.origin),
                GridRepr::Encoded { width, height, data } => decode_grid(width, height, &data, f.resolution, f.origin),
            }
            .map_err(|msg| MapError::Grid { floor, msg })?;
            floors.push(grid);
        }
        Self::new(floors, f.areas)
    }

    pub fn load(path: &Path) -> Result<Self, MapError> {
        let s = std::fs::read_to_string(path).map_err(|source| MapError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&s)
    }

    /// Serializes with base64-encoded grids.
    pub fn to_json(&self) -> Result<String, MapError> {
        let f = MapFile {
            resolution: self.resolution,
            origin: self.floors[0].origin,
            floors: Some(self.floors.len()),
            grids: self.floors.iter().map(|g| g.encode()).collect(),
            areas: self.areas.clone(),
        };
        Ok(serde_json::to_string(&f)?)
    }

    pub fn grid(&self, floor: u32) -> &OccupancyGrid {
        &self.floors[floor as usize]
    }

    /// Distinct labels in sorted order.
    pub fn labels(&self) -> Vec<String> {
        let mut l: Vec<String> = self.areas.iter().map(|a| a.label.clone()).collect();
        l.sort();
        l.dedup();
        l
    }

    pub fn areas_with_label<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a Area> + 'a {
        self.areas.iter().filter(move |a| a.label == label)
    }

    /// Free cells whose centres lie inside the area polygon.
    pub fn area_cells(&self, area: &Area) -> Vec<CellIdx> {
        let g = self.grid(area.floor);
        let mut out = Vec::new();
        for j in 0..g.height {
            for i in 0..g.width {
                if g.is_free((i, j)) && area.contains(g.cell_center((i, j))) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Label of the first area containing the point, if any.
    pub fn label_at(&self, p: [f64; 2], floor: u32) -> Option<&str> {
        self.areas
            .iter()
            .find(|a| a.floor == floor && a.contains(p))
            .map(|a| a.label.as_str())
    }
}

fn decode_grid(width: usize, height: usize, data: &str, res: f64, origin: [f64; 2]) -> Result<OccupancyGrid, String> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(data.trim())
        .map_err(|e| format!("base64: {e}"))?;
    if bytes.len() != width * height {
        return Err(format!("expected {} cells, found {}", width * height, bytes.len()));
    }
    let mut g = OccupancyGrid::new(width, height, res, origin, Cell::Free);
    for (k, b) in bytes.into_iter().enumerate() {
        g.cells[k] = Cell::from_code(b as i64).ok_or_else(|| format!("invalid cell byte {b}"))?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> OccupancyGrid {
        // 10x5, wall at x = 5 with a gap at row 4
        let mut g = OccupancyGrid::new(10, 5, 0.5, [0.0, 0.0], Cell::Free);
        for j in 0..4 {
            g.set((5, j), Cell::Occupied);
        }
        g
    }

    #[test]
    fn coordinates_round_trip() {
        let g = OccupancyGrid::new(4, 3, 0.5, [-1.0, 2.0], Cell::Free);
        assert_eq!(g.world_to_cell([-1.0, 2.0]), Some((0, 0)));
        assert_eq!(g.world_to_cell([0.9, 3.4]), Some((3, 2)));
        assert_eq!(g.world_to_cell([1.0, 3.0]), None);
        assert_eq!(g.cell_center((1, 1)), [-0.25, 2.75]);
        assert_eq!(g.world_to_cell(g.cell_center((2, 1))), Some((2, 1)));
    }

    #[test]
    fn astar_goes_through_gap() {
        let g = corridor();
        let (path, len) = g.shortest_path((0, 0), (9, 0)).unwrap();
        assert!(path.iter().all(|&c| g.is_free(c)));
        assert!(path.contains(&(5, 4)));
        let d = g.distance_field((0, 0));
        assert!((d[g.index((9, 0))] - len).abs() < 1e-9);
        for w in path.windows(2) {
            let (a, b) = (w[0], w[1]);
            assert!((a.0 as i64 - b.0 as i64).abs() <= 1 && (a.1 as i64 - b.1 as i64).abs() <= 1);
        }
    }

    #[test]
    fn unreachable_and_blocked() {
        let mut g = corridor();
        g.set((5, 4), Cell::Occupied);
        assert!(g.shortest_path((0, 0), (9, 0)).is_none());
        assert!(!g.reachable((0, 0))[g.index((9, 0))]);
        assert!(!g.line_of_sight([0.25, 0.25], [4.75, 0.25]));
        assert!(g.line_of_sight([0.25, 0.25], [2.25, 2.25]));
        assert!(!g.segment_free([0.25, 0.25], [4.75, 0.25]));
    }

    #[test]
    fn no_corner_cutting() {
        let mut g = OccupancyGrid::new(2, 2, 1.0, [0.0, 0.0], Cell::Free);
        g.set((1, 0), Cell::Occupied);
        g.set((0, 1), Cell::Occupied);
        assert!(g.shortest_path((0, 0), (1, 1)).is_none());
    }

    #[test]
    fn bresenham_endpoints() {
        let l = OccupancyGrid::bresenham((0, 0), (4, 2));
        assert_eq!(l.first(), Some(&(0, 0)));
        assert_eq!(l.last(), Some(&(4, 2)));
        assert_eq!(l.len(), 5);
    }

    #[test]
    fn json_nested_and_base64() {
        let s = r#"{"resolution": 1.0, "floors": 1, "grids": [[[0,0,0],[0,1,0],[0,0,-1]]],
            "areas": [{"label": "office", "floor": 0, "polygon": [[0,0],[2,0],[2,2],[0,2]]}]}"#;
        let m = AnnotatedMap::from_json(s).unwrap();
        assert_eq!(m.grid(0).get((1, 1)), Cell::Occupied);
        assert_eq!(m.grid(0).get((2, 2)), Cell::Unknown);
        assert_eq!(m.area_cells(&m.areas[0]).len(), 3);
        let back = AnnotatedMap::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.label_at([0.5, 0.5], 0), Some("office"));
    }

    #[test]
    fn json_validation() {
        let bad_label = r#"{"resolution": 1.0, "grids": [[[0]]], "areas": [{"label": " ", "polygon": [[0,0],[1,0],[1,1]]}]}"#;
        assert!(matches!(AnnotatedMap::from_json(bad_label), Err(MapError::Area { .. })));
        let bowtie = r#"{"resolution": 1.0, "grids": [[[0]]], "areas": [{"label": "a", "polygon": [[0,0],[1,1],[1,0],[0,1]]}]}"#;
        assert!(matches!(AnnotatedMap::from_json(bowtie), Err(MapError::Area { .. })));
        let res = r#"{"resolution": 0.0, "grids": [[[0]]], "areas": []}"#;
        assert!(matches!(AnnotatedMap::from_json(res), Err(MapError::Resolution)));
        let floors = r#"{"resolution": 1.0, "floors": 2, "grids": [[[0]]], "areas": []}"#;
        assert!(matches!(AnnotatedMap::from_json(floors), Err(MapError::FloorCount { .. })));
        let ragged = r#"{"resolution": 1.0, "grids": [[[0,0],[0]]], "areas": []}"#;
        assert!(matches!(AnnotatedMap::from_json(ragged), Err(MapError::Grid { .. })));
    }
}
