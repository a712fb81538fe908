//! Scenario configuration files (TOML).
//!
//! ```toml
//! name = "weak"
//! preset = "classical_lv"
//!
//! [model]          # overrides on top of the preset
//! chi = 0.0
//!
//! [grid]
//! dim = 1
//! nx = 128
//! Lx = 10.0
//!
//! [initial]
//! kind = "random_uniform"
//! lo = 0.5
//! hi = 1.5
//! seed = 1
//!
//! [control]
//! t_end = 50.0
//!
//! [sweep]          # only read by `sweep`
//! seeds = [1, 2]
//! [sweep.axes]
//! m2 = [0.5, 1.0, 2.0]
//! ```
//!
//! Unknown keys are errors at every level. Relative `from_file` paths are
//! resolved against the config file's directory.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::MonitorConfig;
use crate::grid::Grid;
use crate::harness::{
    build_spec, default_grid, default_initial, invalid, InitialData, ModelOverrides, Preset,
    Scenario, ScenarioError, SweepAxes, SweepPlan, DEFAULT_SWEEP_CAP,
};
use crate::stepper::StepControl;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "custom")]
    pub preset: Preset,
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialData>,
    #[serde(default)]
    pub control: StepControl,
    #[serde(default)]
    pub monitors: MonitorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

fn custom() -> Preset {
    Preset::Custom
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub axes: SweepAxes,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify_n: Option<usize>,
    /// Two axis names for the agreement heatmap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

/// A parsed config: the base scenario plus the optional sweep section.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub scenario: Scenario,
    pub sweep: Option<SweepSection>,
}

impl LoadedConfig {
    /// The sweep plan; a config without a sweep section is a one-point sweep.
    pub fn plan(&self) -> Result<SweepPlan, ScenarioError> {
        let s = self.sweep.clone().unwrap_or_default();
        if let Some(names) = &s.heatmap {
            let present: Vec<&str> = s.axes.named().iter().map(|(n, _)| *n).collect();
            for n in names {
                if !present.contains(&n.as_str()) {
                    return Err(invalid(
                        "sweep.heatmap",
                        format!("{n} is not a swept axis (swept: {})", present.join(", ")),
                    ));
                }
            }
        }
        if s.classify_n == Some(0) {
            return Err(invalid("sweep.classify_n", "must be at least 1"));
        }
        Ok(SweepPlan {
            base: self.scenario.clone(),
            axes: s.axes,
            seeds: s.seeds,
            cap: s.cap.unwrap_or(DEFAULT_SWEEP_CAP),
            classify_n: s.classify_n,
            heatmap: s.heatmap,
        })
    }
}

/// Parses and validates config text; `base_dir` anchors relative paths.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<LoadedConfig, ScenarioError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| invalid("config", e.to_string()))?;
    let spec = build_spec(file.preset, &file.model)?;
    let initial = match file.initial.unwrap_or_else(default_initial) {
        InitialData::FromFile { u, v } => InitialData::FromFile {
            u: base_dir.join(u),
            v: base_dir.join(v),
        },
        other => other,
    };
    let scenario = Scenario {
        name: file
            .name
            .unwrap_or_else(|| file.preset.config_key().to_string()),
        preset: file.preset,
        spec,
        grid: file.grid.unwrap_or_else(default_grid),
        initial,
        ctrl: file.control,
        monitors: file.monitors,
    };
    scenario.validate()?;
    Ok(LoadedConfig {
        scenario,
        sweep: file.sweep,
    })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ScenarioError> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Config text that loads back to exactly `scenario`.
pub fn scenario_to_toml(scenario: &Scenario) -> String {
    let file = ConfigFile {
        name: Some(scenario.name.clone()),
        preset: scenario.preset,
        model: ModelOverrides::full(&scenario.spec),
        grid: Some(scenario.grid),
        initial: Some(scenario.initial.clone()),
        control: scenario.ctrl.clone(),
        monitors: scenario.monitors.clone(),
        sweep: None,
    };
    toml::to_string(&file).expect("scenario config serializes")
}
