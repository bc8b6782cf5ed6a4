use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Scenario, ScenarioConfig};
use crate::error::{Error, Result};
use crate::poissonized::GapRecord;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Norming constants used at one `(t, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormingRecord {
    pub t: f64,
    pub u: f64,
    pub center: f64,
    pub scale: f64,
    pub mu: Option<f64>,
    /// `p / q` when both branches share a tail
    pub c_ratio: Option<f64>,
    pub c_t: Option<f64>,
    pub q_t: Option<f64>,
    pub g_t: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRow {
    pub scenario: Scenario,
    pub t: f64,
    pub u: f64,
    pub replicate: u64,
    pub n: u64,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "L")]
    pub l: u64,
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub scenario: Scenario,
    pub u: f64,
    pub sample_index: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub scenario: Scenario,
    pub test: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub threshold: Option<f64>,
    pub pass: bool,
    /// only gating checks decide the exit status
    pub gating: bool,
    pub note: String,
}

#[derive(Serialize)]
struct TestCsvRow<'a> {
    scenario: Scenario,
    test: &'a str,
    statistic: f64,
    p_value: Option<f64>,
    threshold: Option<f64>,
    pass: bool,
}

/// Facts about the run that do not belong to its result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub workers: usize,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub version: String,
    pub config: ScenarioConfig,
    pub norming: Vec<NormingRecord>,
    pub occupancy: Vec<OccupancyRow>,
    pub limits: Vec<LimitRow>,
    pub poissonized: Vec<GapRecord>,
    pub tests: Vec<TestRecord>,
    pub run: RunInfo,
}

impl ScenarioReport {
    pub fn new(config: ScenarioConfig) -> Self {
        ScenarioReport {
            version: VERSION.to_string(),
            config,
            norming: Vec::new(),
            occupancy: Vec::new(),
            limits: Vec::new(),
            poissonized: Vec::new(),
            tests: Vec::new(),
            run: RunInfo {
                workers: 1,
                wall_clock_seconds: 0.0,
            },
        }
    }

    pub fn passed(&self) -> bool {
        self.tests.iter().all(|t| t.pass || !t.gating)
    }

    pub fn failures(&self) -> impl Iterator<Item = &TestRecord> {
        self.tests.iter().filter(|t| t.gating && !t.pass)
    }

    pub fn test(&self, name: &str) -> Option<&TestRecord> {
        self.tests.iter().find(|t| t.test == name)
    }

    /// The report without anything that depends on how it was run.
    pub fn body(&self) -> ScenarioReport {
        let mut body = self.clone();
        body.config.workers = None;
        body.run = RunInfo {
            workers: 0,
            wall_clock_seconds: 0.0,
        };
        body
    }

    pub fn body_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.body())?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Writes `occupancy.csv`, `limits.csv`, `tests.csv` and `poissonized.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        write_table(&dir.join("occupancy.csv"), OCCUPANCY_HEADER, &self.occupancy)?;
        write_table(&dir.join("limits.csv"), LIMITS_HEADER, &self.limits)?;
        let tests: Vec<TestCsvRow> = self
            .tests
            .iter()
            .map(|t| TestCsvRow {
                scenario: t.scenario,
                test: &t.test,
                statistic: t.statistic,
                p_value: t.p_value,
                threshold: t.threshold,
                pass: t.pass,
            })
            .collect();
        write_table(&dir.join("tests.csv"), TESTS_HEADER, &tests)?;
        write_table(&dir.join("poissonized.csv"), POISSONIZED_HEADER, &self.poissonized)
    }

    /// `report.json` plus the CSV tables, creating `dir` if needed.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        self.write_json(&dir.join("report.json"))?;
        self.write_csv(dir)
    }
}

pub const OCCUPANCY_HEADER: &[&str] = &["scenario", "t", "u", "replicate", "n", "K", "M", "L", "statistic"];
pub const LIMITS_HEADER: &[&str] = &["scenario", "u", "sample_index", "value"];
pub const TESTS_HEADER: &[&str] = &["scenario", "test", "statistic", "p_value", "threshold", "pass"];
pub const POISSONIZED_HEADER: &[&str] = &["t", "N", "L_poisson", "L_fixed", "gap", "rho", "seed"];

fn write_table<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> ScenarioReport {
        let mut r = ScenarioReport::new(ScenarioConfig::defaults(Scenario::Theorem1));
        r.occupancy.push(OccupancyRow {
            scenario: Scenario::Theorem1,
            t: 6.0,
            u: 1.0,
            replicate: 0,
            n: 403,
            k: 7,
            m: 9,
            l: 2,
            statistic: 2.0,
        });
        r.tests.push(TestRecord {
            scenario: Scenario::Theorem1,
            test: "chi2".into(),
            statistic: 0.1,
            p_value: Some(0.3),
            threshold: None,
            pass: true,
            gating: false,
            note: String::new(),
        });
        r.poissonized.push(GapRecord {
            t: 6.0,
            n: 400,
            l_poisson: 1,
            l_fixed: 2,
            gap: -1,
            rho: 2,
            seed: 9,
        });
        r.run.wall_clock_seconds = 1.25;
        r
    }

    #[test]
    fn json_round_trip() {
        let r = sample_report();
        assert_eq!(ScenarioReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        let mut other = r.clone();
        other.run.wall_clock_seconds = 9.0;
        other.config.workers = Some(4);
        assert_eq!(other.body_json().unwrap(), r.body_json().unwrap());
    }

    #[test]
    fn csv_tables() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample_report();
        r.write_all(dir.path()).unwrap();
        let occ = fs::read_to_string(dir.path().join("occupancy.csv")).unwrap();
        assert_eq!(occ, "scenario,t,u,replicate,n,K,M,L,statistic\ntheorem1,6.0,1.0,0,403,7,9,2,2.0\n");
        let tests = fs::read_to_string(dir.path().join("tests.csv")).unwrap();
        assert_eq!(tests, "scenario,test,statistic,p_value,threshold,pass\ntheorem1,chi2,0.1,0.3,,true\n");
        let limits = fs::read_to_string(dir.path().join("limits.csv")).unwrap();
        assert_eq!(limits, "scenario,u,sample_index,value\n");
        let pois = fs::read_to_string(dir.path().join("poissonized.csv")).unwrap();
        assert_eq!(pois, "t,N,L_poisson,L_fixed,gap,rho,seed\n6.0,400,1,2,-1,2,9\n");
        assert_eq!(ScenarioReport::read_json(&dir.path().join("report.json")).unwrap(), r);
    }
}
