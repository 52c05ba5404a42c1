//! Run configuration: defaults, optional JSON config file, then flags.

use std::path::{Path, PathBuf};

use hsa_core::distill::KdConfig;
use hsa_core::kdmrl::KdmrlParams;
use hsa_core::perception::SensorModel;
use hsa_core::planner::PlannerParams;
use hsa_core::search::SearchConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub map: Option<PathBuf>,
    pub worlds: Vec<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub sentences: Option<PathBuf>,
    pub demos: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub format: Format,
    pub methods: Vec<String>,
    pub llm_url: Option<String>,
    pub max_steps: usize,
    pub search: SearchConfig,
    pub sensor: SensorModel,
    pub kdmrl: KdmrlParams<f64>,
    pub planner: PlannerParams,
    pub kd: KdConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 1,
            format: Format::Csv,
            methods: vec!["proposed".into()],
            llm_url: None,
            max_steps: 400,
            search: SearchConfig::simulation(),
            sensor: SensorModel::default(),
            kdmrl: KdmrlParams::default(),
            planner: PlannerParams::default(),
            kd: KdConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Flags that override config values when given.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON config file; flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the effective config as JSON and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for episode batches.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Sentence endpoint; overrides the SOCRATES_LLM_URL environment variable.
    #[arg(long, global = true)]
    pub llm_url: Option<String>,
    /// Annotated map used in place of the one each world file references.
    #[arg(long, global = true)]
    pub map: Option<PathBuf>,
    /// World file; repeat for a suite.
    #[arg(long = "world", global = true)]
    pub worlds: Vec<PathBuf>,
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// Sentence replay file, or a directory of `<world>_<target>.txt` files.
    #[arg(long, global = true)]
    pub sentences: Option<PathBuf>,
    #[arg(long, global = true)]
    pub demos: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Method name(s), comma separated, or `all`.
    #[arg(long = "method", alias = "methods", global = true, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[arg(long, global = true)]
    pub p_fp: Option<f64>,
    #[arg(long, global = true)]
    pub p_fn: Option<f64>,
    #[arg(long, global = true)]
    pub max_path: Option<f64>,
    #[arg(long, global = true)]
    pub w_r: Option<f64>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(c.seed, self.seed);
        set!(c.jobs, self.jobs);
        set!(c.format, self.format);
        if self.llm_url.is_some() {
            c.llm_url = self.llm_url.clone();
        }
        if !self.methods.is_empty() {
            c.methods = self.methods.clone();
        }
        set!(c.sensor.p_fp, self.p_fp);
        set!(c.sensor.p_fn, self.p_fn);
        set!(c.search.max_path, self.max_path);
        set!(c.planner.w_r, self.w_r);
        set!(c.planner.samples, self.samples);
        let p = &mut c.paths;
        if self.map.is_some() {
            p.map = self.map.clone();
        }
        if !self.worlds.is_empty() {
            p.worlds = self.worlds.clone();
        }
        if self.embeddings.is_some() {
            p.embeddings = self.embeddings.clone();
        }
        if self.sentences.is_some() {
            p.sentences = self.sentences.clone();
        }
        if self.demos.is_some() {
            p.demos = self.demos.clone();
        }
        if self.out.is_some() {
            p.out = self.out.clone();
        }
        if c.jobs == 0 {
            return Err(CliError::Usage("--jobs must be >= 1".into()));
        }
        c.search.validate().map_err(CliError::Usage)?;
        c.sensor.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        c.planner.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        c.kdmrl.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(c)
    }
}
