//! CSV and JSON report emission.
//!
//! CSV floats use `{:.16e}` (17 significant digits); JSON floats use the
//! shortest representation that round-trips. Both use LF line endings, so
//! identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::example_generator::{DerivedScales, ExampleManifest, ExampleVarifold};
use crate::isoperimetric_lab::IsoLabReport;
use crate::quadrature::Adaptive;
use crate::revolved_profile::DEFAULT_ORDER;
use crate::scaling_analysis::{DichotomyReport, Membership, ProbeScan, ProfileRow, ScalingReport};
use crate::varifold_core::DEFAULT_RESOLUTION;

pub const PROFILE_HEADER: &str = "i,radius,lower,upper,log2_lower,log2_upper";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureOrders {
    pub gauss_legendre: usize,
    pub adaptive_abs_tol: f64,
    pub adaptive_rel_tol: f64,
    pub discretization: usize,
}

impl Default for QuadratureOrders {
    fn default() -> Self {
        let a = Adaptive::default();
        Self {
            gauss_legendre: DEFAULT_ORDER,
            adaptive_abs_tol: a.abs_tol,
            adaptive_rel_tol: a.rel_tol,
            discretization: DEFAULT_RESOLUTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool_version: String,
    pub command: String,
    /// SHA-256 of the canonical JSON of the run configuration.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub derived: Option<DerivedScales>,
    /// `(i, relative truncation bound)` per report level.
    pub tail_bounds: Vec<(u32, f64)>,
    pub quadrature: QuadratureOrders,
}

impl Provenance {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: Option<u64>) -> Result<Self> {
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: config_hash(config)?,
            seed,
            derived: None,
            tail_bounds: Vec::new(),
            quadrature: QuadratureOrders::default(),
        })
    }

    /// Attaches derived scales and tail bounds of a built example.
    pub fn with_example(mut self, ex: &ExampleVarifold) -> Result<Self> {
        self.derived = Some(ex.derived);
        self.tail_bounds = ex.manifest()?.tail_bounds;
        Ok(self)
    }
}

/// Hex SHA-256 of the compact JSON serialization.
pub fn config_hash<C: Serialize>(config: &C) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Excess-set scan on the example and on a flat control window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSummary {
    pub epsilon: f64,
    pub k_max: u32,
    pub i_values: Vec<u32>,
    pub example: Vec<ProbeScan>,
    pub control: Vec<ProbeScan>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum ReportBody {
    Manifest(ExampleManifest),
    Scaling(ScalingReport),
    Dichotomy(DichotomyReport),
    Iso(IsoLabReport),
    Scan(ScanSummary),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub provenance: Provenance,
    pub pass: bool,
    pub body: ReportBody,
}

fn push_profile_row(out: &mut String, i: u32, radius: f64, lower: f64, upper: f64) {
    let _ = writeln!(
        out,
        "{i},{radius:.16e},{lower:.16e},{upper:.16e},{:.16e},{:.16e}",
        lower.log2(),
        upper.log2()
    );
}

/// Profile rows under the fixed header.
pub fn profile_csv(rows: &[ProfileRow]) -> String {
    let mut out = format!("{PROFILE_HEADER}\n");
    for r in rows {
        push_profile_row(&mut out, r.i, r.radius, r.lower, r.upper);
    }
    out
}

fn status(m: &Membership) -> (&'static str, f64) {
    match *m {
        Membership::Member { radius } => ("member", radius),
        Membership::NonMember => ("non_member", f64::NAN),
        Membership::Undetermined => ("undetermined", f64::NAN),
    }
}

fn scan_rows(out: &mut String, set: &str, scans: &[ProbeScan]) {
    for (idx, scan) in scans.iter().enumerate() {
        let coords: Vec<String> = scan.probe.iter().map(|x| format!("{x:.16e}")).collect();
        for (i, m) in &scan.membership {
            let (label, radius) = status(m);
            let _ = writeln!(out, "{set},{idx},{},{i},{label},{radius:.16e}", coords.join(" "));
        }
    }
}

impl Report {
    pub fn to_csv(&self) -> String {
        match &self.body {
            ReportBody::Scaling(r) => profile_csv(&r.rows),
            ReportBody::Dichotomy(d) => {
                let mut out = format!("{PROFILE_HEADER}\n");
                for r in &d.rows {
                    push_profile_row(&mut out, r.i, r.radius, r.ball.lower, r.ball.upper);
                }
                out
            }
            ReportBody::Iso(iso) => iso.sweep.to_csv(),
            ReportBody::Manifest(m) => {
                let mut out = String::from("level,rho,sigma,tau,cells_in_window,level_mass\n");
                for ((s, cells), mass) in m.scales.iter().zip(&m.cells_in_window).zip(&m.level_mass) {
                    let _ = writeln!(
                        out,
                        "{},{:.16e},{:.16e},{:.16e},{cells},{mass:.16e}",
                        s.level, s.rho, s.sigma, s.tau
                    );
                }
                out
            }
            ReportBody::Scan(s) => {
                let mut out = String::from("set,probe,coordinates,i,status,radius\n");
                scan_rows(&mut out, "example", &s.example);
                scan_rows(&mut out, "control", &s.control);
                out
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => Ok(self.to_csv()),
            Format::Json => self.to_json(),
        }
    }
}

/// Writes the rendered report; I/O failures carry the path.
pub fn write_report(report: &Report, format: Format, path: &Path) -> Result<()> {
    let text = report.render(format)?;
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example_generator::{build_example, ExampleConfig};
    use crate::scaling_analysis::{scaling_report, ProfileGeometry, QuantityKind};

    fn scaling() -> Report {
        let cfg = ExampleConfig {
            max_level: 12,
            ..ExampleConfig::default()
        };
        let ex = build_example(&cfg).unwrap();
        let rep = scaling_report(&ex, QuantityKind::MassMinusPlane, 2, 6, ProfileGeometry::Cube, None).unwrap();
        Report {
            provenance: Provenance::new("report-scaling", &cfg, Some(7)).unwrap().with_example(&ex).unwrap(),
            pass: rep.pass,
            body: ReportBody::Scaling(rep),
        }
    }

    #[test]
    fn csv_header_and_format() {
        let csv = scaling().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(PROFILE_HEADER));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 6);
        assert_eq!(first[0], "2");
        assert!(first[1].contains('e'));
        assert!(!csv.contains('\r'));
        assert!(csv.ends_with('\n'));
    }

    #[test]
    fn byte_identical_files() {
        let dir = tempfile::tempdir().unwrap();
        for format in [Format::Csv, Format::Json] {
            let a = dir.path().join("a");
            let b = dir.path().join("b");
            write_report(&scaling(), format, &a).unwrap();
            write_report(&scaling(), format, &b).unwrap();
            assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        }
    }

    #[test]
    fn json_round_trip() {
        let rep = scaling();
        let text = rep.to_json().unwrap();
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rep);
        assert_eq!(back.provenance.config_hash.len(), 64);
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut value: serde_json::Value = serde_json::from_str(&scaling().to_json().unwrap()).unwrap();
        value["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<Report>(value).is_err());
    }

    #[test]
    fn io_error_names_path() {
        let err = write_report(&scaling(), Format::Csv, Path::new("/nonexistent/dir/out.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/out.csv"));
    }

    #[test]
    fn hash_tracks_config() {
        let a = config_hash(&ExampleConfig::default()).unwrap();
        let b = config_hash(&ExampleConfig {
            q1: 4.0,
            ..ExampleConfig::default()
        })
        .unwrap();
        assert_ne!(a, b);
        assert_eq!(a, config_hash(&ExampleConfig::default()).unwrap());
    }
}
