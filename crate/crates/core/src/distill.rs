//! Reward construction from free-text approach descriptions: prompt building,
//! keyword extraction, word-to-trajectory expansion, accumulation over the
//! state grid and RBF smoothing.

use serde::{Deserialize, Serialize};

use crate::field::RewardField;
use crate::kernel::Rbf;
use crate::prior::{PriorError, SentenceRequest, SentenceSource};
use crate::state::{ApproachState, StateGrid, StateMetric};

type Grid = StateGrid<f64>;
type Field = RewardField<f64>;

/// Question sent to the language model for one caption and gaze condition.
pub fn build_prompt(caption: &str, g: u8) -> String {
    let not = if g == 1 { "" } else { "not " };
    format!("{caption} and the robot is {not}looking at a person. What is the trajectory for the robots to gently approach a person?")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keyword {
    Straight,
    #[serde(rename = "45")]
    FortyFive,
    Side,
    Behind,
    Curve,
    Curved,
    Front,
}

impl Keyword {
    pub fn parse(token: &str) -> Option<Self> {
        Some(match token {
            "straight" => Keyword::Straight,
            "45" => Keyword::FortyFive,
            "side" => Keyword::Side,
            "behind" => Keyword::Behind,
            "curve" => Keyword::Curve,
            "curved" => Keyword::Curved,
            "front" => Keyword::Front,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSeq {
    pub words: Vec<Keyword>,
    pub slow: bool,
}

/// Position keywords in order of appearance. A `not` drops the next position
/// keyword; `slow`/`slowly` set the slow flag.
pub fn extract_keywords(sentence: &str) -> KeywordSeq {
    let mut out = KeywordSeq::default();
    let mut negate = false;
    for tok in sentence.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let t = tok.to_lowercase();
        match t.as_str() {
            "not" => negate = true,
            "slow" | "slowly" => out.slow = true,
            _ => {
                if let Some(k) = Keyword::parse(&t) {
                    if negate {
                        negate = false;
                    } else {
                        out.words.push(k);
                    }
                }
            }
        }
    }
    out
}

/// Current end point of the partial trajectory in the human frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cursor {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Cursor {
    /// `sgn(x)` with `sgn(0) = 1`.
    pub fn sgn(&self) -> f64 {
        if self.x < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
}

pub type Segment = Vec<[f64; 2]>;

/// Candidate partial paths for one keyword, as offsets from the cursor.
pub fn word_to_segments(word: Keyword, cursor: &Cursor, step: f64) -> Vec<Segment> {
    let s = cursor.sgn();
    let l = step;
    let (c45, s45) = (l * std::f64::consts::FRAC_PI_4.cos(), l * std::f64::consts::FRAC_PI_4.sin());
    match word {
        Keyword::Straight => vec![vec![[l * cursor.theta.cos(), l * cursor.theta.sin()]]],
        Keyword::FortyFive => vec![vec![[s * c45, s45]], vec![[s * c45, -s45]]],
        Keyword::Side => vec![vec![[0.0, l]], vec![[0.0, -l]]],
        Keyword::Curve | Keyword::Curved => {
            let arc = |sign: f64| {
                (1..=8)
                    .map(|k| {
                        let phi = k as f64 * std::f64::consts::PI / 8.0;
                        [s * l * (1.0 - phi.cos()), sign * l * phi.sin()]
                    })
                    .collect::<Segment>()
            };
            vec![arc(1.0), arc(-1.0)]
        }
        Keyword::Front => vec![vec![[-s * l, 0.0]]],
        Keyword::Behind => vec![vec![[s * l, 0.0]]],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KdConfig {
    /// Step length of one keyword segment, meters.
    pub step: f64,
    pub v_slow: f64,
    pub v_normal: f64,
    /// Heading used by `straight`.
    pub theta0: f64,
    /// Start every candidate of a keyword from the same cursor instead of
    /// chaining them; the cursor then follows the first candidate.
    pub branching: bool,
    /// Generations per caption.
    pub n: usize,
    pub sigma_r: f64,
}

impl Default for KdConfig {
    fn default() -> Self {
        Self {
            step: 0.2,
            v_slow: 0.15,
            v_normal: 0.6,
            theta0: 0.0,
            branching: false,
            n: 5,
            sigma_r: 1.0,
        }
    }
}

/// Flat grid indices incremented by one sentence, in visiting order.
pub fn sentence_bins(sentence: &str, grid: &Grid, cfg: &KdConfig, g: u8) -> Vec<usize> {
    let kw = extract_keywords(sentence);
    let v = if kw.slow { cfg.v_slow } else { cfg.v_normal };
    let mut cur = Cursor {
        x: 0.0,
        y: 0.0,
        theta: cfg.theta0,
    };
    let mut out = Vec::new();
    for &w in kw.words.iter().rev() {
        let start = cur;
        let segs = word_to_segments(w, &cur, cfg.step);
        for (j, seg) in segs.iter().enumerate() {
            let base = if cfg.branching { start } else { cur };
            let last = *seg.last().expect("segments are non-empty");
            let theta = last[1].atan2(last[0]);
            for p in seg {
                let s = ApproachState::new(base.x + p[0], base.y + p[1], theta, g, v);
                out.push(grid.discretize_flat(&s));
            }
            if !cfg.branching || j == 0 {
                cur.x = base.x + last[0];
                cur.y = base.y + last[1];
            }
        }
    }
    out
}

/// Accumulates visit counts over all sentences into the `g` slice and
/// divides by the sentence count.
pub fn estimate_kd_reward(sentences: &[String], grid: &Grid, cfg: &KdConfig, g: u8) -> Field {
    let mut f = Field::zeros(grid.clone());
    if sentences.is_empty() {
        return f;
    }
    for s in sentences {
        for k in sentence_bins(s, grid, cfg, g) {
            f.values[k] += 1.0;
        }
    }
    let n = sentences.len() as f64;
    f.values.iter_mut().for_each(|v| *v /= n);
    f
}

/// `R'(x) = sum_y k_r(x, y) R(y)` with the scaled state metric.
pub fn smooth_reward(r: &Field, sigma_r: f64, metric: StateMetric<f64>) -> Field {
    let k = Rbf::with_metric(sigma_r, metric);
    let tables = k.tables(&r.grid, &r.grid);
    Field {
        grid: r.grid.clone(),
        values: tables.apply(&r.values),
    }
}

/// Queries `n` sentences for each caption under one gaze condition.
pub fn generate_kd_sentences(captions: &[String], g: u8, n: usize, source: &dyn SentenceSource) -> Result<Vec<String>, PriorError> {
    let mut out = Vec::new();
    for c in captions {
        let req = SentenceRequest {
            prompt: build_prompt(c, g),
            n,
            clue: None,
            labels: &[],
        };
        out.extend(source.sentences(&req)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::GridIndex;

    #[test]
    fn prompts() {
        assert_eq!(
            build_prompt("a man at a desk", 1),
            "a man at a desk and the robot is looking at a person. What is the trajectory for the robots to gently approach a person?"
        );
        assert_eq!(
            build_prompt("a man at a desk", 0),
            "a man at a desk and the robot is not looking at a person. What is the trajectory for the robots to gently approach a person?"
        );
        assert!(build_prompt("", 1).starts_with(" and the robot"));
    }

    #[test]
    fn keywords() {
        let k = extract_keywords("approach slowly in a straight line");
        assert_eq!(k.words, vec![Keyword::Straight]);
        assert!(k.slow);
        let k = extract_keywords("do not go behind, come from the front");
        assert_eq!(k.words, vec![Keyword::Front]);
        assert!(!k.slow);
        assert_eq!(extract_keywords("hello"), KeywordSeq::default());
        assert_eq!(extract_keywords("A 45 degree Curved path").words, vec![Keyword::FortyFive, Keyword::Curved]);
    }

    #[test]
    fn segments() {
        let c = Cursor { x: 0.0, y: 0.0, theta: 0.0 };
        assert_eq!(word_to_segments(Keyword::Straight, &c, 0.2), vec![vec![[0.2, 0.0]]]);
        assert_eq!(word_to_segments(Keyword::Side, &c, 0.2), vec![vec![[0.0, 0.2]], vec![[0.0, -0.2]]]);
        let arcs = word_to_segments(Keyword::Curve, &c, 0.2);
        assert_eq!(arcs.len(), 2);
        assert_eq!(arcs[0].len(), 8);
        for (a, b) in arcs[0].iter().zip(&arcs[1]) {
            assert_eq!(a[0], b[0]);
            assert_eq!(a[1], -b[1]);
        }
        for seg in arcs.iter().chain(word_to_segments(Keyword::FortyFive, &c, 0.2).iter()) {
            for p in seg {
                assert!(p[0].hypot(p[1]) <= 0.4 + 1e-12);
            }
        }
        let neg = Cursor { x: -1.0, y: 0.0, theta: 0.0 };
        assert_eq!(word_to_segments(Keyword::Front, &neg, 0.2), vec![vec![[0.2, 0.0]]]);
        assert_eq!(word_to_segments(Keyword::Behind, &c, 0.2), vec![vec![[0.2, 0.0]]]);
    }

    #[test]
    fn straight_slowly_hand_trace() {
        let grid = Grid::default();
        let f = estimate_kd_reward(&["approach straight slowly".to_string()], &grid, &KdConfig::default(), 1);
        let nz: Vec<usize> = (0..f.values.len()).filter(|&i| f.values[i] != 0.0).collect();
        // x = 0.2 snaps to the 0.0 bin (index 12), y = 0 (6), theta = 0 (4), v = 0.15 (0), g = 1
        let want = grid.flat(GridIndex { ix: 12, iy: 6, it: 4, iv: 0, ig: 1 });
        assert_eq!(nz, vec![want]);
        assert_eq!(f.values[want], 1.0);
    }

    #[test]
    fn duplication_and_empty() {
        let grid = Grid::default();
        let cfg = KdConfig::default();
        assert!(estimate_kd_reward(&[], &grid, &cfg, 0).values.iter().all(|&v| v == 0.0));
        let s = vec!["curve to the side then straight".to_string(), "from the front 45".to_string()];
        let d: Vec<String> = s.iter().chain(s.iter()).cloned().collect();
        assert_eq!(estimate_kd_reward(&s, &grid, &cfg, 0), estimate_kd_reward(&d, &grid, &cfg, 0));
    }

    #[test]
    fn v_slice_and_speed_snap() {
        let grid = Grid::default();
        let f = estimate_kd_reward(&["go straight".to_string()], &grid, &KdConfig::default(), 0);
        let k = f.argmax();
        assert_eq!(grid.unflat(k).iv, 2, "0.6 snaps to the 0.65 bin");
        assert_eq!(grid.unflat(k).ig, 0);
    }

    #[test]
    fn smoothing_impulse() {
        let grid = StateGrid::new(
            (0..9).map(|i| -2.0 + 0.5 * i as f64).collect(),
            vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            vec![-std::f64::consts::PI, -std::f64::consts::FRAC_PI_2, 0.0, std::f64::consts::FRAC_PI_2],
            vec![0.15, 0.4, 0.65],
            vec![0, 1],
        )
        .unwrap();
        let mut f = Field::zeros(grid.clone());
        let c = grid.flat(GridIndex { ix: 4, iy: 2, it: 2, iv: 1, ig: 1 });
        f.values[c] = 1.0;
        let s = smooth_reward(&f, 1.0, StateMetric::default());
        assert_eq!(s.argmax(), c);
        let k = Rbf::new(1.0);
        for i in 0..grid.len() {
            let direct = k.eval(&grid.state_at(i), &grid.state_at(c));
            assert!((s.values[i] - direct).abs() < 1e-12);
        }
        assert!(smooth_reward(&Field::zeros(grid), 1.0, StateMetric::default()).values.iter().all(|&v| v == 0.0));
    }
}
