//! Checks on the shipped data directory.

use std::path::PathBuf;

use hsa_core::demo::parse_demonstrations;
use hsa_core::kdmrl::{Kdmrl, KdmrlParams};
use hsa_core::perception::{bbox_from_activation, ActivationMap, BBox};
use hsa_core::prior::{EmbeddingTable, ReplaySource};
use hsa_core::search::SearchConfig;
use hsa_core::sim::{shortest_path_length, target_priors, WorldSuite};
use hsa_core::{Field, Grid};

fn data() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn worlds() -> Vec<WorldSuite> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(data().join("worlds")).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files.iter().map(|f| WorldSuite::load(f).unwrap()).collect()
}

#[test]
fn suite_has_24_valid_episodes() {
    let cfg = SearchConfig::simulation();
    let suites = worlds();
    let episodes: Vec<_> = suites.iter().flat_map(|s| s.worlds()).collect();
    assert_eq!(episodes.len(), 24);
    for w in &episodes {
        w.validate(cfg.success_radius).unwrap();
        let l = shortest_path_length(w, cfg.success_radius, cfg.floor_cost).unwrap();
        assert!(l > 0.0, "{}", w.name);
    }
    let maps: std::collections::BTreeSet<&str> = suites.iter().map(|s| s.map_name.as_str()).collect();
    assert_eq!(maps.len(), 3);
}

#[test]
fn target_area_ranks_high_in_the_prior() {
    let emb = EmbeddingTable::load(&data().join("embeddings.txt")).unwrap();
    let mut first = 0;
    for suite in worlds() {
        let w = suite.world(0);
        let src = ReplaySource::load(&suite.sentences[&w.target_id]).unwrap();
        let priors = target_priors(&w, 20, &src, &emb).unwrap();
        let t = w.target();
        let label = w.map.label_at([t.pose.x, t.pose.y], t.floor).unwrap();
        let mut ranked: Vec<(&String, &f64)> = priors.iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(a.1));
        let rank = ranked.iter().position(|(l, _)| l.as_str() == label).unwrap();
        assert!(rank <= 1, "{}: {priors:?}", w.name);
        first += usize::from(rank == 0);
    }
    // office-6 draws enough off-topic sentences to put conference first
    assert_eq!(first, 23);
}

#[test]
fn trained_reward_peaks_where_demonstrations_are_densest() {
    let grid = Grid::default();
    let demos = parse_demonstrations(&std::fs::read_to_string(data().join("demos.jsonl")).unwrap(), &grid).unwrap();
    assert_eq!(demos.len(), 18);
    let k = Kdmrl::new(KdmrlParams::default(), grid.clone()).unwrap();
    let density = k.estimate_density(&demos).unwrap();
    let densest = (0..density.len()).max_by(|&a, &b| density[a].total_cmp(&density[b])).unwrap();
    let shipped = Field::from_json(&std::fs::read_to_string(data().join("fields/reward_i.json")).unwrap()).unwrap();
    let fitted = k.fit(&demos).unwrap().field(&grid);
    assert_eq!(fitted.argmax(), shipped.argmax());
    // smoothing along v moves the peak to a neighbouring speed bin only
    let (a, b) = (grid.state_at(shipped.argmax()), grid.state_at(densest));
    assert_eq!((a.x, a.y, a.theta, a.g), (b.x, b.y, b.theta, b.g));
    assert!((a.v - b.v).abs() <= 0.25 + 1e-12);
}

#[test]
fn activation_fixtures() {
    let blob = ActivationMap::load_csv(&data().join("activation/person_blob.csv"), 0.5).unwrap();
    let d = bbox_from_activation(&blob).unwrap();
    assert_eq!(d.bbox, BBox { x1: 6, y1: 4, x2: 9, y2: 8 });
    let empty = ActivationMap::load_csv(&data().join("activation/empty.csv"), 0.5).unwrap();
    assert!(bbox_from_activation(&empty).is_none());
}
