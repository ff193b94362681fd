//! Run configuration, reproducible artifacts, and the command implementations
//! behind the CLI.

mod cli;
mod selftest;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::modal::{self, inter_area, ModalConfig, Mode};
use crate::model::GridModel;
use crate::netmodel::load_case;
use crate::sweep::SweepParam;

pub use cli::{main_with_args, Cli, Command};
pub use selftest::{selftest, Check, SelftestReport};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "GRIDFORM_SSA_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub log: bool,
    /// Droop setting held fixed during a size sweep.
    pub at_droop: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub case_path: Option<String>,
    pub band: (f64, f64),
    pub singular_tol: f64,
    pub residual_tol: f64,
    pub slow_threshold: f64,
    pub sweep: Option<SweepSpec>,
    pub mode: Option<String>,
    pub fd_step: Option<f64>,
    pub perturb: Vec<(String, f64)>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub out_dir: String,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        let m = ModalConfig::default();
        Self {
            command: command.into(),
            case_path: None,
            band: m.band,
            singular_tol: m.singular_tol,
            residual_tol: m.residual_tol,
            slow_threshold: m.slow_threshold,
            sweep: None,
            mode: None,
            fd_step: None,
            perturb: Vec::new(),
            horizon: None,
            dt: None,
            out_dir: ".".into(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.band.0 < self.band.1) || self.band.0 < 0.0 {
            return Err(Error::Invalid(format!(
                "band must satisfy 0 ≤ f_lo < f_hi, got ({}, {})",
                self.band.0, self.band.1
            )));
        }
        for (name, v) in [
            ("singular_tol", self.singular_tol),
            ("residual_tol", self.residual_tol),
            ("slow_threshold", self.slow_threshold),
        ] {
            if !(v > 0.0) {
                return Err(Error::Invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn modal(&self) -> ModalConfig {
        ModalConfig {
            band: self.band,
            singular_tol: self.singular_tol,
            residual_tol: self.residual_tol,
            slow_threshold: self.slow_threshold,
        }
    }
}

/// Case loaded from disk together with the hash of its bytes.
pub struct LoadedCase {
    pub model: GridModel,
    pub sha256: String,
}

pub fn load(path: &str) -> Result<LoadedCase> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|e| Error::Invalid(format!("{path} is not UTF-8: {e}")))?;
    let model = GridModel::from_case(load_case(&text)?)?;
    Ok(LoadedCase {
        model,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Comment header placed on every CSV artifact.
pub fn csv_header(case_sha256: &str, cfg: &RunConfig) -> String {
    format!(
        "# {TOOL} {VERSION}\n# case_sha256: {case_sha256}\n# config: {}\n",
        serde_json::to_string(cfg).expect("config serializes")
    )
}

#[derive(Serialize)]
struct JsonArtifact<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    case_sha256: &'a str,
    config: &'a RunConfig,
    result: &'a T,
}

pub fn json_artifact<T: Serialize>(case_sha256: &str, cfg: &RunConfig, result: &T) -> String {
    let mut s = serde_json::to_string_pretty(&JsonArtifact {
        tool: TOOL,
        version: VERSION,
        case_sha256,
        config: cfg,
        result,
    })
    .expect("artifact serializes");
    s.push('\n');
    s
}

pub fn write_artifact(dir: &str, name: &str, body: &str) -> Result<PathBuf> {
    let dir = Path::new(dir);
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path)
}

/// Modes selected by id, or every inter-area mode when `id` is `None`.
pub fn select_modes<'a>(modes: &'a [Mode], id: Option<&str>) -> Result<Vec<&'a Mode>> {
    match id {
        Some(id) => modes
            .iter()
            .find(|m| m.id == id)
            .map(|m| vec![m])
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "no mode \"{id}\"; modes are {}",
                    modes.iter().map(|m| m.id.as_str()).collect::<Vec<_>>().join(", ")
                ))
            }),
        None => Ok(inter_area(modes)),
    }
}

pub fn analyze_model(model: &GridModel, cfg: &RunConfig) -> Result<Vec<Mode>> {
    modal::analyze(&model.jac, &model.park, &cfg.modal())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = RunConfig::new("analyze");
        assert!(c.validate().is_ok());
        c.band = (1.0, 0.5);
        assert_eq!(c.validate().unwrap_err().exit_code(), 1);
        c.band = (0.1, 1.0);
        c.residual_tol = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn header_echoes_config() {
        let c = RunConfig::new("sweep");
        let h = csv_header("abc", &c);
        let lines: Vec<&str> = h.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "# case_sha256: abc");
        let cfg: serde_json::Value = serde_json::from_str(lines[2].trim_start_matches("# config: ")).unwrap();
        assert_eq!(cfg["command"], "sweep");
        assert_eq!(h, csv_header("abc", &c));
    }

    #[test]
    fn json_artifact_wraps_result() {
        let c = RunConfig::new("check-design");
        let s = json_artifact("abc", &c, &vec![1, 2]);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["tool"], TOOL);
        assert_eq!(v["result"], serde_json::json!([1, 2]));
        assert!(s.ends_with('\n'));
    }

    #[test]
    fn mode_selection() {
        let m = crate::fixtures::toy2x3().unwrap();
        let modes = analyze_model(&m, &RunConfig::new("x")).unwrap();
        assert_eq!(select_modes(&modes, None).unwrap().len(), 2);
        assert_eq!(select_modes(&modes, Some("M1")).unwrap()[0].id, "M1");
        assert!(select_modes(&modes, Some("M42")).unwrap_err().to_string().contains("M42"));
    }

    #[test]
    fn selftest_is_deterministic() {
        assert_eq!(selftest(3).render(), selftest(3).render());
    }
}
