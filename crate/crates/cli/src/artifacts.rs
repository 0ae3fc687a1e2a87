//! Report files written by each stage.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use morse_action::critical::SeedFailure;
use morse_action::lagrangian::GrowthReport;
use morse_action::manifold::PsAdmissibility;
use morse_action::morse_complex::{Coefficients, ConnectionRecord, GeneratorInfo, ReferenceComparison};
use morse_action::pseudograd::FieldSummary;

pub const VERIFY: &str = "verify.json";
pub const CRITICAL_POINTS: &str = "critical_points.json";
pub const INDEX: &str = "index.json";
pub const FLOW: &str = "flow.json";
pub const COMPLEX: &str = "complex.json";
pub const HOMOLOGY: &str = "homology.json";
pub const PROBE: &str = "probe_c2.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub problem: String,
    pub growth: GrowthReport,
    pub ps_admissibility: PsAdmissibility,
    pub failures: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalPointRecord {
    pub id: usize,
    pub action: f64,
    pub morse_index: usize,
    pub nullity: usize,
    pub residual: f64,
    pub spectral_gap: f64,
    pub component: Vec<i64>,
    pub iterations: usize,
    pub path_file: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CriticalPointsReport {
    pub problem: String,
    pub mesh: usize,
    pub seeds: usize,
    pub points: Vec<CriticalPointRecord>,
    pub failures: Vec<SeedFailure>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IndexRecord {
    pub id: usize,
    pub action: f64,
    pub morse_index: usize,
    pub nullity: usize,
    pub spectral_gap: f64,
    pub null_tol: f64,
    pub nondegenerate: bool,
    pub lowest_eigenvalues: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IndexReport {
    pub problem: String,
    pub mesh: usize,
    pub points: Vec<IndexRecord>,
    pub all_nondegenerate: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FlowRecord {
    pub from: usize,
    pub direction: usize,
    pub branch: i64,
    pub status: String,
    pub terminal: Option<usize>,
    pub terminal_distance: Option<f64>,
    pub steps: usize,
    pub rejected: usize,
    pub max_action_increase: f64,
    pub action_start: f64,
    pub action_end: f64,
    pub file: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FlowReport {
    pub problem: String,
    pub mesh: usize,
    pub seed: u64,
    pub field: FieldSummary,
    pub trajectories: Vec<FlowRecord>,
    pub monotone: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ComplexReport {
    pub problem: String,
    pub mesh: usize,
    pub sublevel: f64,
    pub seed: u64,
    pub coefficients: Coefficients,
    pub generators: Vec<Vec<GeneratorInfo>>,
    pub boundary: Vec<Vec<Vec<i64>>>,
    pub connections: Vec<ConnectionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HomologyReport {
    pub problem: String,
    pub mesh: usize,
    pub sublevel: f64,
    pub coefficients: Coefficients,
    pub betti: Vec<usize>,
    pub torsion: Vec<Vec<String>>,
    pub reference: Option<ReferenceComparison>,
    pub passed: bool,
}

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn ensure(&self, sub: Option<&str>) -> std::io::Result<PathBuf> {
        let dir = match sub {
            Some(s) => self.root.join(s),
            None => self.root.clone(),
        };
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> std::io::Result<PathBuf> {
        self.ensure(None)?;
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    pub fn write_text(&self, name: &str, text: &str) -> std::io::Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, text)?;
        Ok(path)
    }

    /// `None` when the file does not exist.
    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Option<Result<T, String>> {
        let path = self.path(name);
        let text = fs::read_to_string(&path).ok()?;
        Some(serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display())))
    }

    pub fn read_text(&self, name: &str) -> Option<String> {
        fs::read_to_string(self.path(name)).ok()
    }
}

pub fn display(path: &Path) -> String {
    path.display().to_string()
}
