//! The experiment document: one TOML file with a table per module.

use std::path::{Path, PathBuf};

use ganmpc::env::{EnvSpec, PhysicalParams, Task};
use ganmpc::ganmpc::{Algorithm, GanMpcHyper, ModelConfig};
use ganmpc::mpc::MpcConfig;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, parse_err, LabError, Result};
use crate::hash::json_hash;
use crate::seeds::{SeedPlan, RUN_STRIDE};

/// Environment variable that replaces `output_dir`.
pub const OUT_ENV: &str = "GANMPC_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub base_seed: u64,
    pub n_demos: usize,
    pub eval_episodes: usize,
    /// Writes real elapsed times into the metric log. Off by default because
    /// it makes the log differ between otherwise identical runs.
    #[serde(default)]
    pub record_wall_time: bool,
    /// Demonstration file; defaults to a path under `output_dir`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo_file: Option<PathBuf>,
    pub algorithms: Vec<Algorithm>,
    /// `[pole_mass, cart_mass, dimensions]` scale triples.
    pub imitators: Vec<[f64; 3]>,
    /// Demonstrator environment.
    pub env: EnvSpec,
    pub hyper: GanMpcHyper,
    pub mpc: MpcConfig,
    pub models: ModelConfig,
}

impl ExperimentConfig {
    pub fn defaults(task: Task) -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            base_seed: 0,
            n_demos: 50,
            eval_episodes: 50,
            record_wall_time: false,
            demo_file: None,
            algorithms: Algorithm::ALL.to_vec(),
            imitators: ganmpc::env::imitator_grid(task).iter().map(PhysicalParams::as_array).collect(),
            env: EnvSpec::demonstrator(task),
            hyper: GanMpcHyper::default(),
            mpc: MpcConfig::default(),
            models: ModelConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// Reads `path`, resolves relative paths against its directory, applies
    /// the `GANMPC_OUT` override and validates.
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_out(path, std::env::var_os(OUT_ENV).map(PathBuf::from))
    }

    pub fn load_with_out(path: &Path, out: Option<PathBuf>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| parse_err(path, e))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { dir.join(p) };
        cfg.output_dir = match out {
            Some(o) => o,
            None => resolve(&cfg.output_dir),
        };
        cfg.demo_file = cfg.demo_file.as_deref().map(resolve);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        SeedPlan::new(self.base_seed)?;
        if self.n_demos == 0 || self.eval_episodes == 0 {
            return bad("n_demos and eval_episodes must be positive".into());
        }
        if self.eval_episodes as u64 > RUN_STRIDE {
            return bad("eval_episodes must not exceed 2^20".into());
        }
        if (self.hyper.n_mpc * self.hyper.k_rollouts) as u64 > RUN_STRIDE {
            return bad("n_mpc · k_rollouts must not exceed 2^20".into());
        }
        self.env.validate()?;
        if !self.env.physical.is_demonstrator() {
            return bad("env describes the demonstrator; its physical scales must all be 1".into());
        }
        if self.env.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if self.algorithms.is_empty() || self.imitators.is_empty() {
            return bad("algorithms and imitators must be non-empty".into());
        }
        for p in &self.imitators {
            PhysicalParams::new(p[0], p[1], p[2])?;
        }
        self.hyper.validate()?;
        self.hyper.mask(self.env.state_dim())?;
        self.mpc.validate()?;
        Ok(())
    }

    pub fn task(&self) -> Task {
        self.env.task
    }

    pub fn seeds(&self) -> SeedPlan {
        SeedPlan { base: self.base_seed }
    }

    /// Hash of everything that influences results: output location, the
    /// wall-time switch and the demo file path are left out (the demo
    /// contents are hashed separately).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.record_wall_time = false;
        c.demo_file = None;
        json_hash(&c)
    }

    pub fn demo_path(&self) -> PathBuf {
        self.demo_file.clone().unwrap_or_else(|| {
            self.output_dir.join("demos").join(format!(
                "{}-b{}-n{}.ndjson",
                self.task().name(),
                self.base_seed,
                self.n_demos
            ))
        })
    }

    pub fn imitator_spec(&self, physical: PhysicalParams) -> EnvSpec {
        self.env.clone().with_physical(physical)
    }
}

/// Parses an imitator given as `p,c,d` (or just `p` for a pole-mass scale).
pub fn parse_imitator(s: &str) -> Result<PhysicalParams> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| LabError::Config(format!("imitator `{s}`: {e}")))?;
    let p = match vals[..] {
        [p] => PhysicalParams::pole_mass(p)?,
        [p, c, d] => PhysicalParams::new(p, c, d)?,
        _ => return Err(LabError::Config(format!("imitator `{s}` must be `p` or `p,c,d`"))),
    };
    Ok(p)
}

/// Short directory-friendly label, e.g. `p3c2.5d1.5`.
pub fn imitator_label(p: &PhysicalParams) -> String {
    format!("p{}c{}d{}", p.pole_mass_scale, p.cart_mass_scale, p.cart_dim_scale)
}
