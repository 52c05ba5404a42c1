use hsa_core::map::{Cell, OccupancyGrid};
use hsa_core::planner::{assign_velocities, path_collision_free, path_cost, plan, straight_path, PlanRequest, PlannerParams, RewardLookup};
use hsa_core::seed::{stream, STREAM_PLANNER};
use hsa_core::state::ApproachState;
use hsa_core::{Field, Grid, Pose};
use rand::Rng;

fn field_from(f: impl Fn(&ApproachState<f64>) -> f64) -> Field {
    let grid = Grid::default();
    let values = grid.states().map(|s| f(&s)).collect();
    Field::new(grid, values).unwrap()
}

fn open_grid() -> OccupancyGrid {
    OccupancyGrid::new(64, 48, 0.25, [-8.0, -6.0], Cell::Free)
}

/// Share of waypoints on the requested side of the x axis over 20 seeds.
fn side_share(field: &Field, upper: bool) -> f64 {
    let grid = open_grid();
    let human = Pose::new(0.0, 0.0, 0.0);
    let p = PlannerParams {
        samples: 800,
        ..Default::default()
    };
    let (mut hit, mut total) = (0usize, 0usize);
    for seed in 0..20 {
        let req = PlanRequest {
            start: Pose::new(-4.5, 0.0, 0.0),
            human,
            g: 1,
            grid: &grid,
            reward: field,
        };
        let plan = plan(&req, &p, &mut stream(seed, STREAM_PLANNER)).unwrap();
        // the start sits on the axis and belongs to neither side
        for q in &plan.path[1..] {
            total += 1;
            if (upper && q.y > 0.0) || (!upper && q.y < 0.0) {
                hit += 1;
            }
        }
    }
    hit as f64 / total as f64
}

#[test]
fn follows_half_plane_reward() {
    let upper = field_from(|s| if s.y > 0.0 { 1.0 } else { 0.0 });
    let lower = field_from(|s| if s.y < 0.0 { 1.0 } else { 0.0 });
    let a = side_share(&upper, true);
    let b = side_share(&lower, false);
    assert!(a >= 0.7, "upper half-plane share {a}");
    assert!(b >= 0.7, "mirrored share {b}");
}

#[test]
fn speeds_decrease_towards_the_person() {
    let field = field_from(|s| {
        let near = s.x.hypot(s.y) < 1.5;
        match (near, s.v) {
            (true, 0.15) | (false, 0.65) => 1.0,
            _ => 0.0,
        }
    });
    let human = Pose::new(0.0, 0.0, std::f64::consts::PI);
    let path = straight_path(&Pose::new(5.0, 0.0, std::f64::consts::PI), &human, 0.6, 0.25);
    let t = assign_velocities(&path, &RewardLookup::new(&field, human, 1));
    let v: Vec<f64> = t.samples().iter().map(|s| s.v).collect();
    assert!(v.windows(2).all(|w| w[1] <= w[0]), "{v:?}");
    assert_eq!(v[0], 0.65);
    assert_eq!(*v.last().unwrap(), 0.15);
    assert!(t.samples().windows(2).all(|w| w[1].t > w[0].t));
}

#[test]
fn never_dominated_by_the_straight_path() {
    let grid = open_grid();
    let mut rng = stream(11, STREAM_PLANNER);
    let p = PlannerParams {
        samples: 300,
        ..Default::default()
    };
    for k in 0..50 {
        let values: Vec<f64> = (0..Grid::default().len()).map(|_| rng.gen()).collect();
        let field = Field::new(Grid::default(), values).unwrap();
        let human = Pose::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-3.0..3.0));
        let a = rng.gen_range(-3.1..3.1);
        let start = Pose::new(human.x + 4.0 * f64::cos(a), human.y + 4.0 * f64::sin(a), rng.gen_range(-3.0..3.0));
        let g = rng.gen_range(0..2u8);
        let req = PlanRequest {
            start,
            human,
            g,
            grid: &grid,
            reward: &field,
        };
        let out = plan(&req, &p, &mut stream(k, STREAM_PLANNER)).unwrap();
        let lookup = RewardLookup::new(&field, human, g);
        let straight = straight_path(&start, &human, p.goal_radius, 0.25);
        assert!(path_collision_free(&out.path, &grid));
        assert!(out.path.last().unwrap().distance(&human) <= p.goal_radius + 1e-9);
        assert!(out.cost <= path_cost(&straight, &lookup, &p) + 1e-9, "instance {k}");
        assert!((out.cost - path_cost(&out.path, &lookup, &p)).abs() < 1e-9);
    }
}
