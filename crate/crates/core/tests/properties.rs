use hsa_core::geom::Waypoint;
use hsa_core::map::{AnnotatedMap, Area, Cell, OccupancyGrid};
use hsa_core::perception::{bbox_from_activation, ActivationMap, BBox};
use hsa_core::planner::blend;
use hsa_core::prior::{label_cost, occurrence_score, CostParams, EmbeddingTable, LabelPrior, SentenceBatch, SourceTag};
use hsa_core::search::{should_visit, VisitHistory};
use hsa_core::sim::{compute_metrics, EpisodeRow};
use hsa_core::state::{ApproachState, StateGrid};
use hsa_core::{Field, Grid};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 10] = ["kitchen", "office", "desk", "coffee", "sofa", "lab", "robot", "bed", "printer", "lunch"];

fn table(seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = EmbeddingTable::new(6);
    for w in WORDS {
        t.insert(w, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    }
    t
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..6).prop_map(|w| w.join(" "))
}

fn batch(sentences: Vec<String>) -> SentenceBatch {
    SentenceBatch {
        sentences,
        source: SourceTag::Replay,
    }
}

proptest! {
    #[test]
    fn occurrence_score_bounded_and_order_invariant(
        seed in any::<u64>(),
        label in prop::sample::select(WORDS.to_vec()),
        sents in prop::collection::vec(sentence(), 1..12),
        perm_seed in any::<u64>(),
    ) {
        let emb = table(seed);
        let s = occurrence_score(label, &batch(sents.clone()), &emb).score;
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
        let mut shuffled = sents.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let t = occurrence_score(label, &batch(shuffled), &emb).score;
        prop_assert!((s - t).abs() < 1e-12);
    }

    #[test]
    fn occurrence_score_ignores_duplicated_non_max_tokens(
        seed in any::<u64>(),
        label in prop::sample::select(WORDS.to_vec()),
        sents in prop::collection::vec(sentence(), 1..8),
        pick in any::<prop::sample::Index>(),
    ) {
        let emb = table(seed);
        let base = occurrence_score(label, &batch(sents.clone()), &emb).score;
        let k = pick.index(sents.len());
        let mut dup = sents.clone();
        let first = dup[k].split(' ').next().unwrap().to_string();
        dup[k] = format!("{} {first}", dup[k]);
        prop_assert_eq!(occurrence_score(label, &batch(dup), &emb).score, base);
    }
}

fn open_map() -> AnnotatedMap {
    let g = OccupancyGrid::new(40, 20, 0.5, [0.0, 0.0], Cell::Free);
    let area = Area {
        label: "office".into(),
        floor: 0,
        polygon: vec![[15.0, 0.0], [20.0, 0.0], [20.0, 10.0], [15.0, 10.0]],
    };
    AnnotatedMap::new(vec![g], vec![area]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn label_cost_monotone(p1 in -0.5f64..1.5, p2 in -0.5f64..1.5, x1 in 0.5f64..14.0, x2 in 0.5f64..14.0, y in 0.5f64..9.5) {
        let map = open_map();
        let params = CostParams::default();
        let prior = |s: f64| LabelPrior { label: "office".into(), score: s, out_of_vocabulary: false };
        let at = |x: f64| Waypoint::new(x, y, 0, 0.0);
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        prop_assert!(label_cost(&at(x1), "office", &map, &prior(lo), &params) >= label_cost(&at(x1), "office", &map, &prior(hi), &params));
        // moving away from the area along x never lowers the cost
        let (near, far) = if x1 >= x2 { (x1, x2) } else { (x2, x1) };
        prop_assert!(label_cost(&at(far), "office", &map, &prior(p1), &params) >= label_cost(&at(near), "office", &map, &prior(p1), &params) - 1e-12);
    }
}

proptest! {
    #[test]
    fn should_visit_boundary(x in -64i32..64, y in -64i32..64, d8 in 1i32..64, angle_axis in 0usize..4, z in 0u32..2) {
        let t_g = d8 as f64 / 8.0;
        let (px, py) = (x as f64 / 8.0, y as f64 / 8.0);
        let (ux, uy) = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)][angle_axis];
        let mut h = VisitHistory::default();
        h.push(Waypoint::new(px, py, z, 0.0));
        let at = Waypoint::new(px + ux * t_g, py + uy * t_g, z, 0.0);
        prop_assert!(!should_visit(&at, &h, t_g));
        let beyond = Waypoint::new(px + ux * (t_g + 0.125), py + uy * (t_g + 0.125), z, 0.0);
        prop_assert!(should_visit(&beyond, &h, t_g));
        let other_floor = Waypoint::new(px, py, z + 1, 0.0);
        prop_assert!(should_visit(&other_floor, &h, t_g));
    }
}

fn contains_all(b: &BBox, cells: &[(usize, usize)]) -> bool {
    cells.iter().all(|&(x, y)| b.x1 <= x && x <= b.x2 && b.y1 <= y && y <= b.y2)
}

fn area(b: &BBox) -> usize {
    (b.x2 - b.x1 + 1) * (b.y2 - b.y1 + 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bbox_matches_brute_force(values in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 16), 16), threshold in 0.5f64..1.0) {
        let map = ActivationMap::new(values.clone(), threshold);
        let cells: Vec<(usize, usize)> = (0..16).flat_map(|y| (0..16).map(move |x| (x, y))).filter(|&(x, y)| values[y][x] > threshold).collect();
        let got = bbox_from_activation(&map);
        if cells.is_empty() {
            prop_assert!(got.is_none());
            return Ok(());
        }
        let b = got.unwrap().bbox;
        prop_assert!(contains_all(&b, &cells));
        // every rectangle holding all super-threshold cells is at least as large,
        // and the only one of equal size is the returned box
        for x1 in 0..16 {
            for x2 in x1..16 {
                for y1 in 0..16 {
                    for y2 in y1..16 {
                        let r = BBox { x1, y1, x2, y2 };
                        if contains_all(&r, &cells) {
                            prop_assert!(area(&r) > area(&b) || r == b);
                        }
                    }
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn discretize_idempotent(x in -10.0f64..10.0, y in -6.0f64..6.0, th in -10.0f64..10.0, g in 0u8..2, v in -1.0f64..2.0) {
        let grid = Grid::default();
        let i = grid.discretize(&ApproachState::new(x, y, th, g, v));
        prop_assert_eq!(grid.discretize(&grid.state(i)), i);
        let flat = grid.flat(i);
        prop_assert_eq!(grid.discretize_flat(&grid.state_at(flat)), flat);
    }
}

fn small_grid() -> Grid {
    StateGrid::new(vec![-1.0, 0.0, 1.0], vec![-1.0, 0.0, 1.0], vec![-1.5, 0.0, 1.5], vec![0.15, 0.4, 0.65], vec![0, 1]).unwrap()
}

proptest! {
    #[test]
    fn blend_in_unit_range(a in prop::collection::vec(-50.0f64..50.0, 162), b in prop::collection::vec(-50.0f64..50.0, 162), w in 0.0f64..=1.0, c in 0.01f64..100.0) {
        let g = small_grid();
        let fa = Field::new(g.clone(), a.clone()).unwrap();
        let fb = Field::new(g.clone(), b.clone()).unwrap();
        let r = blend(&fa, &fb, w).unwrap();
        prop_assert!(r.values.iter().all(|v| (0.0..=1.0).contains(v)));
        let mixed: Vec<f64> = a.iter().zip(&b).map(|(x, y)| w * x + (1.0 - w) * y).collect();
        let constant = mixed.iter().all(|&m| m == mixed[0]);
        if !constant {
            prop_assert_eq!(r.min(), 0.0);
            prop_assert_eq!(r.max(), 1.0);
        }
        // common positive scaling leaves the blend unchanged
        let scaled = blend(&fa.scaled(c), &fb.scaled(c), w).unwrap();
        for (p, q) in r.values.iter().zip(&scaled.values) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }
}

fn row() -> impl Strategy<Value = EpisodeRow> {
    (any::<bool>(), 0.1f64..50.0, 0.0f64..80.0, 0u32..6).prop_map(|(s, l, p, fd)| EpisodeRow {
        world: "w".into(),
        episode: 0,
        method: "m".into(),
        seed: 0,
        success: s,
        path_length: p,
        shortest_path: l,
        false_detections: fd,
        failure: String::new(),
    })
}

proptest! {
    #[test]
    fn spl_and_spf_never_exceed_sr(rows in prop::collection::vec(row(), 1..40)) {
        let m = compute_metrics(&rows).unwrap();
        prop_assert!(m.spl <= m.sr + 1e-12);
        prop_assert!(m.spf <= m.sr + 1e-12);
        prop_assert!((0.0..=1.0).contains(&m.spl));
        prop_assert!(m.mean_fd >= 0.0);
    }
}
