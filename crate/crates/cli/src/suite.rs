//! Search episode batches: world loading, prior construction and the
//! parallel runner.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hsa_core::map::AnnotatedMap;
use hsa_core::prior::{EmbeddingTable, HttpSource, ReplaySource, SentenceSource, TemplateSource};
use hsa_core::seed::episode_seed;
use hsa_core::sim::{run_search_episode, target_priors, EpisodeResult, SearchMethod, SimConfig, World, WorldSuite};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::CliError;

/// One world episode with the priors of its target.
#[derive(Debug, Clone)]
pub struct Episode {
    pub world: World,
    /// Index within its world file.
    pub index: usize,
    pub priors: BTreeMap<String, f64>,
}

pub fn parse_methods(names: &[String]) -> Result<Vec<SearchMethod>, CliError> {
    if names.iter().any(|n| n == "all") {
        return Ok(SearchMethod::ALL.to_vec());
    }
    if names.is_empty() {
        return Err(CliError::Usage("no method given".into()));
    }
    names.iter().map(|n| n.parse().map_err(|e: hsa_core::sim::SimError| CliError::Usage(e.to_string()))).collect()
}

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} not found: {}", path.display())))
    }
}

/// Sentence source for one episode: `--sentences` file or directory
/// (`<world>_<target>.txt`, else `<map>_<target>.txt`), then the world
/// file's own table, then the HTTP endpoint, then the template.
fn sentence_source(suite: &WorldSuite, target: u32, cfg: &RunConfig, emb: &Arc<EmbeddingTable>) -> Result<Box<dyn SentenceSource>, CliError> {
    let replay = |p: PathBuf| -> Result<Box<dyn SentenceSource>, CliError> {
        require(&p, "sentence file")?;
        Ok(Box::new(ReplaySource::load(&p)?))
    };
    if let Some(s) = &cfg.paths.sentences {
        require(s, "sentences")?;
        return if s.is_dir() {
            let by_world = s.join(format!("{}_{target}.txt", suite.name));
            if by_world.exists() {
                replay(by_world)
            } else {
                replay(s.join(format!("{}_{target}.txt", suite.map_name)))
            }
        } else {
            replay(s.clone())
        };
    }
    if let Some(p) = suite.sentences.get(&target) {
        return replay(p.clone());
    }
    let http = HttpSource::new(cfg.llm_url.clone());
    if http.url.is_some() {
        return Ok(Box::new(http));
    }
    Ok(Box::new(TemplateSource { embeddings: emb.clone() }))
}

/// World files in order; a directory contributes its `*.json` files sorted
/// by name.
pub fn world_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Usage("--world is required".into()));
    }
    let mut out = Vec::new();
    for p in paths {
        require(p, "world")?;
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Loads a world file; `--map` replaces the map the file references.
pub fn load_suite(path: &Path, cfg: &RunConfig) -> Result<WorldSuite, CliError> {
    let mut suite = WorldSuite::load(path)?;
    if let Some(m) = &cfg.paths.map {
        require(m, "map")?;
        suite.map = Arc::new(AnnotatedMap::load(m)?);
        suite.map_name = m.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    }
    Ok(suite)
}

/// Loads every world in order and computes priors when a method needs them.
pub fn load_episodes(cfg: &RunConfig, methods: &[SearchMethod]) -> Result<Vec<Episode>, CliError> {
    let files = world_files(&cfg.paths.worlds)?;
    let need_prior = methods.iter().any(|m| m.uses_prior());
    let emb = match (&cfg.paths.embeddings, need_prior) {
        (Some(p), true) => {
            require(p, "embeddings")?;
            Some(Arc::new(EmbeddingTable::load(p)?))
        }
        (None, true) => return Err(CliError::Usage("--embeddings is required for methods that use the prior".into())),
        _ => None,
    };
    let mut out = Vec::new();
    for path in &files {
        let suite = load_suite(path, cfg)?;
        let mut cache: BTreeMap<u32, BTreeMap<String, f64>> = BTreeMap::new();
        for (index, world) in suite.worlds().into_iter().enumerate() {
            world.validate(cfg.search.success_radius)?;
            let priors = match &emb {
                Some(emb) => match cache.get(&world.target_id) {
                    Some(p) => p.clone(),
                    None => {
                        let src = sentence_source(&suite, world.target_id, cfg, emb)?;
                        let p = target_priors(&world, cfg.search.m, src.as_ref(), emb)?;
                        cache.insert(world.target_id, p.clone());
                        p
                    }
                },
                None => BTreeMap::new(),
            };
            out.push(Episode { world, index, priors });
        }
    }
    Ok(out)
}

pub fn sim_config(cfg: &RunConfig) -> SimConfig {
    SimConfig {
        search: cfg.search,
        sensor: cfg.sensor,
        max_steps: cfg.max_steps,
    }
}

/// Runs every (episode, method) pair. Episode `i` of the batch uses seed
/// `base + i` for all methods; results come back in episode-major order.
pub fn run_batch(episodes: &[Episode], methods: &[SearchMethod], cfg: &RunConfig) -> Result<Vec<EpisodeResult>, CliError> {
    let sim = sim_config(cfg);
    let jobs: Vec<(usize, SearchMethod)> = (0..episodes.len()).flat_map(|i| methods.iter().map(move |&m| (i, m))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let results: Vec<Result<EpisodeResult, CliError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, m)| {
                let e = &episodes[i];
                let mut r = run_search_episode(&e.world, &sim, m, &e.priors, episode_seed(cfg.seed, i))?;
                r.episode = e.index;
                Ok(r)
            })
            .collect()
    });
    results.into_iter().collect()
}
