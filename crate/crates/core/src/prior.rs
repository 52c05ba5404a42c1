//! Search prior over map labels from generated sentences and word embeddings,
//! and the global-search label cost.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Waypoint;
use crate::map::AnnotatedMap;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("location clue is empty")]
    EmptyClue,
    #[error("label list is empty")]
    NoLabels,
    #[error("expected {expected}, found {found}")]
    Count { expected: usize, found: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("embeddings line {line}: {msg}")]
    Embedding { line: usize, msg: String },
    #[error("sentence endpoint failed ({msg}); prompt for offline replay: {prompt}")]
    Http { prompt: String, msg: String },
    #[error("no sentence endpoint configured; prompt for offline replay: {prompt}")]
    NoEndpoint { prompt: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationClue(String);

impl LocationClue {
    pub fn new(text: &str) -> Result<Self, PriorError> {
        let t = text.trim();
        if t.is_empty() {
            return Err(PriorError::EmptyClue);
        }
        Ok(Self(t.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Replay,
    Http,
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceBatch {
    pub sentences: Vec<String>,
    pub source: SourceTag,
}

/// Lowercase, split on non-alphanumerics, drop tokens shorter than 2 chars.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: HashMap::new(),
        }
    }

    /// Inserts a word (lowercased); the first insertion of a word wins.
    pub fn insert(&mut self, word: &str, v: Vec<f64>) -> Result<(), String> {
        if v.len() != self.dim {
            return Err(format!("dimension {} != {}", v.len(), self.dim));
        }
        self.entries.entry(word.to_lowercase()).or_insert(v);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries.get(&word.to_lowercase()).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses word2vec text format with an optional `N D` header.
    pub fn parse(text: &str) -> Result<Self, PriorError> {
        let mut table: Option<Self> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let mut parts = raw.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let rest: Vec<&str> = parts.collect();
            if k == 0 && rest.len() == 1 && word.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
                table = Some(Self::new(rest[0].parse().unwrap_or(0)));
                continue;
            }
            let v = rest
                .iter()
                .map(|t| t.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| PriorError::Embedding { line, msg: e.to_string() })?;
            if v.is_empty() {
                return Err(PriorError::Embedding {
                    line,
                    msg: "word without vector".into(),
                });
            }
            let t = table.get_or_insert_with(|| Self::new(v.len()));
            t.insert(word, v).map_err(|msg| PriorError::Embedding { line, msg })?;
        }
        Ok(table.unwrap_or_default())
    }

    pub fn load(path: &Path) -> Result<Self, PriorError> {
        let s = std::fs::read_to_string(path).map_err(|source| PriorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&s)
    }

    /// Unnormalized mean of the in-vocabulary token vectors of `text`.
    pub fn phrase_vector(&self, text: &str) -> Option<Vec<f64>> {
        let vecs: Vec<&[f64]> = tokenize(text).iter().filter_map(|t| self.get(t)).collect();
        if vecs.is_empty() {
            return None;
        }
        let mut m = vec![0.0; self.dim];
        for v in &vecs {
            for (a, b) in m.iter_mut().zip(v.iter()) {
                *a += b;
            }
        }
        let n = vecs.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        Some(m)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Prompt asking the language model where the person may be found.
pub fn search_prompt(clue: &LocationClue, labels: &[String]) -> String {
    format!(
        "The lab is composed of {}. X is a {} but not always. Where can I find X in the lab?",
        labels.join(", "),
        clue.as_str()
    )
}

/// Everything a sentence source may need to answer one request.
#[derive(Debug, Clone)]
pub struct SentenceRequest<'a> {
    pub prompt: String,
    pub n: usize,
    pub clue: Option<&'a LocationClue>,
    pub labels: &'a [String],
}

pub trait SentenceSource: Send + Sync {
    fn tag(&self) -> SourceTag;
    fn sentences(&self, req: &SentenceRequest<'_>) -> Result<Vec<String>, PriorError>;
}

/// Sentences read from a text file, one per line.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    pub lines: Vec<String>,
}

impl ReplaySource {
    pub fn from_text(text: &str) -> Self {
        Self {
            lines: text.lines().map(str::trim_end).filter(|l| !l.trim().is_empty()).map(String::from).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, PriorError> {
        let s = std::fs::read_to_string(path).map_err(|source| PriorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::from_text(&s))
    }
}

impl SentenceSource for ReplaySource {
    fn tag(&self) -> SourceTag {
        SourceTag::Replay
    }

    fn sentences(&self, req: &SentenceRequest<'_>) -> Result<Vec<String>, PriorError> {
        if self.lines.len() != req.n {
            return Err(PriorError::Count {
                expected: req.n,
                found: self.lines.len(),
            });
        }
        Ok(self.lines.clone())
    }
}

/// POSTs `{"prompt", "n"}` and expects `{"sentences": [...]}`.
#[derive(Debug, Clone)]
pub struct HttpSource {
    pub url: Option<String>,
    pub timeout: std::time::Duration,
}

pub const LLM_URL_ENV: &str = "SOCRATES_LLM_URL";

impl HttpSource {
    /// Uses `url` if given, otherwise the environment variable.
    pub fn new(url: Option<String>) -> Self {
        Self {
            url: url.or_else(|| std::env::var(LLM_URL_ENV).ok()).filter(|u| !u.is_empty()),
            timeout: std::time::Duration::from_secs(30),
        }
    }
}

#[derive(Deserialize)]
struct HttpReply {
    sentences: Vec<String>,
}

impl SentenceSource for HttpSource {
    fn tag(&self) -> SourceTag {
        SourceTag::Http
    }

    fn sentences(&self, req: &SentenceRequest<'_>) -> Result<Vec<String>, PriorError> {
        let Some(url) = &self.url else {
            return Err(PriorError::NoEndpoint { prompt: req.prompt.clone() });
        };
        let fail = |msg: String| PriorError::Http {
            prompt: req.prompt.clone(),
            msg,
        };
        let reply: HttpReply = ureq::post(url)
            .timeout(self.timeout)
            .send_json(serde_json::json!({"prompt": req.prompt, "n": req.n}))
            .map_err(|e| fail(e.to_string()))?
            .into_json()
            .map_err(|e| fail(e.to_string()))?;
        if reply.sentences.len() != req.n {
            return Err(PriorError::Count {
                expected: req.n,
                found: reply.sentences.len(),
            });
        }
        Ok(reply.sentences)
    }
}

/// Emits "X can be found in the <label>." for the label most similar to the clue.
#[derive(Debug, Clone)]
pub struct TemplateSource {
    pub embeddings: Arc<EmbeddingTable>,
}

impl SentenceSource for TemplateSource {
    fn tag(&self) -> SourceTag {
        SourceTag::Template
    }

    fn sentences(&self, req: &SentenceRequest<'_>) -> Result<Vec<String>, PriorError> {
        let clue = req.clue.ok_or(PriorError::EmptyClue)?;
        let cv = self.embeddings.phrase_vector(clue.as_str());
        let mut best: Option<(f64, &String)> = None;
        for l in req.labels {
            let s = match (&cv, self.embeddings.phrase_vector(l)) {
                (Some(a), Some(b)) => cosine(a, &b),
                _ => 0.0,
            };
            if best.is_none_or(|(bs, _)| s > bs) {
                best = Some((s, l));
            }
        }
        let (_, label) = best.ok_or(PriorError::NoLabels)?;
        Ok(vec![format!("X can be found in the {label}."); req.n])
    }
}

pub fn generate_sentences(
    clue: &LocationClue,
    labels: &[String],
    m: usize,
    source: &dyn SentenceSource,
) -> Result<SentenceBatch, PriorError> {
    if labels.is_empty() {
        return Err(PriorError::NoLabels);
    }
    let req = SentenceRequest {
        prompt: search_prompt(clue, labels),
        n: m,
        clue: Some(clue),
        labels,
    };
    Ok(SentenceBatch {
        sentences: source.sentences(&req)?,
        source: source.tag(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceScore {
    pub score: f64,
    /// Set when the label has no in-vocabulary token.
    pub out_of_vocabulary: bool,
}

/// Mean over sentences of the best cosine between the label vector and any
/// sentence token.
pub fn occurrence_score(label: &str, batch: &SentenceBatch, emb: &EmbeddingTable) -> OccurrenceScore {
    let Some(lv) = emb.phrase_vector(label) else {
        return OccurrenceScore {
            score: 0.0,
            out_of_vocabulary: true,
        };
    };
    if batch.sentences.is_empty() {
        return OccurrenceScore {
            score: 0.0,
            out_of_vocabulary: false,
        };
    }
    let total: f64 = batch
        .sentences
        .iter()
        .map(|s| {
            tokenize(s)
                .iter()
                .filter_map(|t| emb.get(t))
                .map(|v| cosine(&lv, v))
                .fold(None, |m: Option<f64>, c| Some(m.map_or(c, |m| m.max(c))))
                .unwrap_or(0.0)
        })
        .sum();
    OccurrenceScore {
        score: total / batch.sentences.len() as f64,
        out_of_vocabulary: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPrior {
    pub label: String,
    pub score: f64,
    pub out_of_vocabulary: bool,
}

/// One prior entry per label, in the order given.
pub fn label_priors(labels: &[String], batch: &SentenceBatch, emb: &EmbeddingTable) -> Vec<LabelPrior> {
    labels
        .iter()
        .map(|l| {
            let s = occurrence_score(l, batch, emb);
            LabelPrior {
                label: l.clone(),
                score: s.score,
                out_of_vocabulary: s.out_of_vocabulary,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub w_e: f64,
    /// Clamp the prior to `[0, 1]` before use.
    pub clamp: bool,
    /// Cost added per floor level changed.
    pub floor_cost: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            w_e: 30.0,
            clamp: true,
            floor_cost: 5.0,
        }
    }
}

/// `||p_r - p_a|| + w_e (1 - p)` given the distance term.
pub fn cost_from_parts(distance: f64, prior: f64, params: &CostParams) -> f64 {
    let p = if params.clamp { prior.clamp(0.0, 1.0) } else { prior };
    distance + params.w_e * (1.0 - p)
}

/// Closest reachable point of a labelled area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaTarget {
    pub point: [f64; 2],
    pub floor: u32,
    /// Euclidean distance plus the floor-change term.
    pub distance: f64,
}

/// Nearest free cell inside any area with `label` that is reachable from the
/// robot by a grid path. The robot's own cell counts with distance zero.
pub fn nearest_area_point(robot: &Waypoint<f64>, label: &str, map: &AnnotatedMap, floor_cost: f64) -> Option<AreaTarget> {
    let mut reach_cache: BTreeMap<u32, (Option<(usize, usize)>, Vec<bool>)> = BTreeMap::new();
    let mut best: Option<AreaTarget> = None;
    for area in map.areas_with_label(label) {
        let g = map.grid(area.floor);
        let (start, reach) = reach_cache.entry(area.floor).or_insert_with(|| {
            let p = [robot.x, robot.y];
            let start = g
                .world_to_cell(p)
                .filter(|&c| g.is_free(c))
                .or_else(|| if area.floor != robot.z { g.nearest_free(p) } else { None });
            let reach = start.map_or_else(|| vec![false; g.len()], |s| g.reachable(s));
            (start, reach)
        });
        let dz = (area.floor as i64 - robot.z as i64).unsigned_abs() as f64 * floor_cost;
        for c in map.area_cells(area) {
            if !reach[g.index(c)] {
                continue;
            }
            let (point, d) = if Some(c) == *start && area.floor == robot.z {
                ([robot.x, robot.y], 0.0)
            } else {
                let q = g.cell_center(c);
                (q, ((q[0] - robot.x).powi(2) + (q[1] - robot.y).powi(2)).sqrt())
            };
            let d = d + dz;
            if best.is_none_or(|b| d < b.distance) {
                best = Some(AreaTarget {
                    point,
                    floor: area.floor,
                    distance: d,
                });
            }
        }
    }
    best
}

/// Global-search cost of a label; infinite when no part of it is reachable.
pub fn label_cost(robot: &Waypoint<f64>, label: &str, map: &AnnotatedMap, prior: &LabelPrior, params: &CostParams) -> f64 {
    match nearest_area_point(robot, label, map, params.floor_cost) {
        Some(t) => cost_from_parts(t.distance, prior.score, params),
        None => f64::INFINITY,
    }
}
