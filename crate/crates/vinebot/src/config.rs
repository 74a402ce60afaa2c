use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;
use vinebot_core::robot::RobotConfig;

/// Contents of the `--config` TOML file. Every key is optional.
///
/// ```toml
/// [robot]
/// length_start = 0.5
/// growth_rate = 0.05
///
/// [task]
/// drop_scatter = 0.1   # landing scatter per metre of drop, off when absent
/// scatter_seed = 7
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub robot: RobotConfig,
    pub task: TaskConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub drop_scatter: Option<f64>,
    pub scatter_seed: u64,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: FileConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config
            .robot
            .validate()
            .with_context(|| format!("invalid robot config in {}", path.display()))?;
        Ok(config)
    }
}
