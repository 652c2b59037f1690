//! Combines the grid criterion and the line-scan oracle into one verdict,
//! and owns report persistence and witness replay.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::criteria::{grid_check, CriterionReport, GridSpec, Tolerances};
use crate::energymodel::{EnergyDef, EnergySpec, Regularity};
use crate::error::{Result, RocError};
use crate::linescan::{
    gap_check, scan_random_segments, scan_segment_range, second_difference, LineScanResult, OracleSummary,
    ScanVerdict, SecondDifference,
};
use crate::smallmat::RankOneSegment;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    CriterionPassed,
    Refuted,
    Inconclusive,
}

impl Status {
    /// 0 passed, 1 refuted, 2 inconclusive.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::CriterionPassed => 0,
            Status::Refuted => 1,
            Status::Inconclusive => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    SecondDifference,
    OneSidedGap,
}

/// A located convexity violation, stored at full precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub segment: RankOneSegment,
    pub t: f64,
    pub kind: WitnessKind,
    pub value: f64,
    pub threshold: f64,
    pub samples: usize,
    /// Sample index of `t` for second-difference witnesses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_index: Option<usize>,
    pub tolerances: Tolerances,
}

impl Witness {
    /// The most negative violation of a violated scan.
    pub fn from_scan(scan: &LineScanResult, tol: &Tolerances) -> Option<Self> {
        let (t0, t1) = scan.segment.t_range();
        let dt = (t1 - t0) / scan.samples as f64;
        if let Some(v) = scan
            .violations
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
        {
            return Some(Self {
                segment: scan.segment.clone(),
                t: v.t,
                kind: WitnessKind::SecondDifference,
                value: v.value,
                threshold: v.threshold,
                samples: scan.samples,
                grid_index: Some(((v.t - t0) / dt).round() as usize),
                tolerances: *tol,
            });
        }
        scan.gap_checks
            .iter()
            .filter(|g| g.violated)
            .min_by(|a, b| a.gap.total_cmp(&b.gap))
            .map(|g| Self {
                segment: scan.segment.clone(),
                t: g.t0,
                kind: WitnessKind::OneSidedGap,
                value: g.gap,
                threshold: g.threshold,
                samples: scan.samples,
                grid_index: None,
                tolerances: *tol,
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyInfo {
    pub name: String,
    pub definition: EnergyDef,
    pub regularity: Regularity,
    pub closed_form_derivatives: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub oracle_seed: u64,
    pub grid_seed: u64,
    pub grid: GridSpec,
    pub tolerances: Tolerances,
}

/// Machine-readable result of [`check_rank_one_convexity`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub energy: EnergyInfo,
    pub dimension: usize,
    pub config: RunConfig,
    pub criterion: CriterionReport,
    pub oracle: OracleSummary,
    pub verdict: Status,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub provenance: Provenance,
}

fn hypothesis_met(n: usize, r: Regularity) -> bool {
    n == 2 || r == Regularity::C2Closure
}

fn hypothesis_text(n: usize) -> &'static str {
    if n == 2 {
        "planar case: ĝ in C² on the open cone and C¹ up to its boundary"
    } else {
        "ĝ in C² up to the boundary of the ordered cone"
    }
}

/// Grid criterion plus oracle cross-check.
///
/// `criterion_passed` means the criterion held at every grid point and the
/// asserted regularity meets the hypothesis under which the pointwise
/// criterion implies rank-one convexity; it is sampling evidence, not a
/// proof.
pub fn check_rank_one_convexity(spec: &EnergySpec, cfg: &RunConfig) -> Result<Report> {
    let declared = cfg.validate()?;
    if declared.dim() != spec.dim() {
        return Err(RocError::Input(format!(
            "energy has dimension {}, configuration describes dimension {}",
            spec.dim(),
            declared.dim()
        )));
    }
    let n = spec.dim();
    let tol = cfg.tolerances;
    let criterion = grid_check(spec, &cfg.grid, &tol)?;
    let o = &cfg.oracle;
    let mut oracle = scan_random_segments(spec, o.segments, o.samples, o.seed, &tol, false)?;
    let hard_failure = !criterion.passed && !criterion.failures_noise_scale_only;
    if oracle.first_violation.is_none() && hard_failure && o.search_segments > o.segments {
        let more = scan_segment_range(spec, o.segments..o.search_segments, o.samples, o.seed, &tol, true)?;
        oracle.absorb(more);
    }
    let witness = oracle
        .first_violation
        .as_ref()
        .and_then(|scan| Witness::from_scan(scan, &tol));

    let met = hypothesis_met(n, spec.regularity());
    let (status, reason) = if let Some(w) = &witness {
        (
            Status::Refuted,
            format!(
                "oracle found a convexity violation ({:?}, value {:e}) on segment {} at t = {}",
                w.kind,
                w.value,
                oracle.first_violation_index.unwrap_or(0),
                w.t
            ),
        )
    } else if criterion.passed && met {
        (
            Status::CriterionPassed,
            format!(
                "{} satisfied on grid ({} points); with the asserted regularity {} ({}) this implies rank-one convexity; oracle found no violation in {} segments",
                criterion.criterion,
                criterion.points_evaluated,
                spec.regularity().as_str(),
                hypothesis_text(n),
                oracle.segments_scanned
            ),
        )
    } else if criterion.passed {
        (
            Status::Inconclusive,
            format!(
                "criterion satisfied on grid, but regularity {} does not meet the hypothesis ({})",
                spec.regularity().as_str(),
                hypothesis_text(n)
            ),
        )
    } else if criterion.points_evaluated < criterion.points_total && criterion.worst_failure.is_none() {
        (
            Status::Inconclusive,
            format!(
                "criterion could not be evaluated at {} of {} grid points (first: {})",
                criterion.points_total - criterion.points_evaluated,
                criterion.points_total,
                criterion
                    .errors
                    .first()
                    .map(|e| e.message.as_str())
                    .unwrap_or("unknown")
            ),
        )
    } else {
        let w = criterion.worst_failure.as_ref();
        let location = w
            .map(|m| format!("{} = {:e} at {:?}", m.id, m.value, m.point))
            .unwrap_or_default();
        let kind = if criterion.failures_noise_scale_only {
            "criterion fails only by noise-scale margins"
        } else {
            "criterion fails"
        };
        (
            Status::Inconclusive,
            format!(
                "{kind} ({location}); oracle found no violation in {} segments",
                oracle.segments_scanned
            ),
        )
    };
    Ok(Report {
        energy: EnergyInfo {
            name: spec.name().to_string(),
            definition: spec.def().clone(),
            regularity: spec.regularity(),
            closed_form_derivatives: spec.has_closed_form(),
        },
        dimension: n,
        config: cfg.clone(),
        criterion,
        oracle,
        verdict: status,
        reason,
        witness,
        provenance: Provenance {
            tool: "roc".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            oracle_seed: cfg.oracle.seed,
            grid_seed: cfg.grid.seed,
            grid: cfg.grid.clone(),
            tolerances: tol,
        },
    })
}

/// Builds the energy from the configuration and checks it.
pub fn check_config(cfg: &RunConfig) -> Result<Report> {
    let spec = cfg.validate()?;
    check_rank_one_convexity(&spec, cfg)
}

/// Result of re-checking a stored witness.
#[derive(Clone, Debug, Serialize)]
pub struct ReplayOutcome {
    pub result: LineScanResult,
    pub reproduced: bool,
    pub value: f64,
    pub threshold: f64,
    pub warnings: Vec<String>,
}

/// Re-evaluates the violation recorded in `w` with the witness's own
/// tolerances. A `current` tolerance differing from them only triggers a
/// warning.
pub fn replay(spec: &EnergySpec, w: &Witness, current: Option<&Tolerances>) -> Result<ReplayOutcome> {
    let seg = &w.segment;
    if seg.dim() != spec.dim() {
        return Err(RocError::Input(format!(
            "witness has dimension {}, energy {}",
            seg.dim(),
            spec.dim()
        )));
    }
    let mut warnings = Vec::new();
    if let Some(cur) = current {
        if *cur != w.tolerances {
            warnings.push(format!(
                "tolerance mismatch: witness recorded {:?}, current configuration has {:?}; replaying with the recorded values",
                w.tolerances, cur
            ));
        }
    }
    let tol = w.tolerances;
    let p = |t: f64| spec.eval_w(&seg.at(t));
    let (t0, t1) = seg.t_range();
    let dt = (t1 - t0) / w.samples as f64;
    let mut result = LineScanResult {
        segment: seg.clone(),
        samples: w.samples,
        violations: Vec::new(),
        crossings: Vec::new(),
        coincidences: Vec::new(),
        gap_checks: Vec::new(),
        min_second_difference: f64::INFINITY,
        ambiguous_matching: false,
        verdict: ScanVerdict::ConvexOnSegment,
    };
    let (value, threshold, reproduced) = match w.kind {
        WitnessKind::SecondDifference => {
            let sd = match w.grid_index {
                Some(k) if t0 + k as f64 * dt == w.t => {
                    let (a, b, c) = (
                        p(t0 + (k - 1) as f64 * dt)?,
                        p(t0 + k as f64 * dt)?,
                        p(t0 + (k + 1) as f64 * dt)?,
                    );
                    SecondDifference {
                        t: w.t,
                        value: (a - 2.0 * b + c) / (dt * dt),
                        threshold: tol.threshold(b.abs()),
                    }
                }
                _ => second_difference(&p, w.t, dt, &tol)?,
            };
            result.min_second_difference = sd.value;
            let bad = sd.value < -sd.threshold;
            if bad {
                result.violations.push(sd);
            }
            (sd.value, sd.threshold, bad)
        }
        WitnessKind::OneSidedGap => {
            let g = gap_check(&p, w.t, &tol)?;
            result.gap_checks.push(g);
            (g.gap, g.threshold, g.violated)
        }
    };
    if reproduced {
        result.verdict = ScanVerdict::Violated;
    }
    Ok(ReplayOutcome {
        result,
        reproduced,
        value,
        threshold,
        warnings,
    })
}

#[derive(Deserialize)]
struct ReportWitness {
    config: RunConfig,
    witness: Option<Witness>,
}

/// A witness read either from a full report (with its configuration) or from
/// a bare witness file.
pub fn load_witness(text: &str) -> Result<(Witness, Option<RunConfig>)> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let parse_err = |e: serde_path_to_error::Error<serde_json::Error>| {
        RocError::Input(format!("corrupt record at `{}`: {}", e.path(), e.inner()))
    };
    if value.get("config").is_some() {
        let r: ReportWitness = serde_path_to_error::deserialize(value).map_err(parse_err)?;
        let w = r
            .witness
            .ok_or_else(|| RocError::Input("report carries no witness".into()))?;
        Ok((w, Some(r.config)))
    } else {
        let w: Witness = serde_path_to_error::deserialize(value).map_err(parse_err)?;
        Ok((w, None))
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| RocError::Io(e.error))?;
    Ok(())
}

pub fn write_report(path: &Path, report: &Report) -> Result<()> {
    write_atomic(path, to_json(report)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energymodel::{zoo, ZooParams};
    use crate::linescan::convexity_scan;
    use crate::smallmat::Matrix;

    fn small(def: EnergyDef) -> RunConfig {
        let mut cfg = RunConfig::for_energy(def).unwrap();
        cfg.grid.points_per_axis = 16;
        cfg.oracle.segments = 64;
        cfg.oracle.samples = 128;
        cfg.oracle.search_segments = 2000;
        cfg
    }

    #[test]
    fn zoo_verdicts() {
        let r = check_config(&small(EnergyDef::zoo("opnorm"))).unwrap();
        assert_eq!(r.verdict, Status::CriterionPassed, "{}", r.reason);
        let r = check_config(&small(EnergyDef::zoo("distortion"))).unwrap();
        assert_eq!(r.verdict, Status::CriterionPassed, "{}", r.reason);
        let logk = EnergyDef::Zoo {
            name: "conformal".into(),
            n: None,
            hhat: Some("log(t)".into()),
            f: None,
            regularity: None,
        };
        let r = check_config(&small(logk)).unwrap();
        assert_eq!(r.verdict, Status::Refuted, "{}", r.reason);
        assert!(r.witness.is_some());
    }

    #[test]
    fn regularity_gate_in_higher_dimensions() {
        let def = EnergyDef::Ghat {
            expr: "l1".into(),
            n: 3,
            regularity: Regularity::C2InteriorC1Closure,
        };
        let mut cfg = small(def);
        cfg.grid.points_per_axis = 6;
        cfg.oracle.segments = 16;
        let r = check_config(&cfg).unwrap();
        assert_eq!(r.verdict, Status::Inconclusive, "{}", r.reason);
    }

    #[test]
    fn determinant_expression_is_inconclusive() {
        let def = EnergyDef::Ghat {
            expr: "l1*l2".into(),
            n: 2,
            regularity: Regularity::C2Closure,
        };
        let r = check_config(&small(def)).unwrap();
        assert_eq!(r.verdict, Status::Inconclusive, "{}", r.reason);
        assert!(r.criterion.failures_noise_scale_only || r.criterion.passed);
    }

    #[test]
    fn mismatched_dimension_is_an_input_error() {
        let spec = zoo("opnorm", &ZooParams::n(3)).unwrap();
        let cfg = small(EnergyDef::zoo("distortion"));
        assert!(matches!(
            check_rank_one_convexity(&spec, &cfg),
            Err(RocError::Input(_))
        ));
    }

    fn concave_piece_segment() -> RankOneSegment {
        // F = diag(1/2, 2), H = 3·e₁⊗e₁: the singular values cross at
        // t = 1/2 and log K is convex before, concave after
        RankOneSegment::new(Matrix::from_diag(&[0.5, 2.0]), vec![3.0, 0.0], vec![1.0, 0.0], (0.0, 1.0)).unwrap()
    }

    #[test]
    fn witness_replay_and_perturbation() {
        let logk = zoo("logk", &ZooParams::default()).unwrap();
        let tol = Tolerances::default();
        let scan = convexity_scan(&logk, &concave_piece_segment(), 512, &tol).unwrap();
        assert_eq!(scan.verdict, ScanVerdict::Violated);
        assert_eq!(scan.crossings.len(), 1);
        assert!((scan.crossings[0].t - 0.5).abs() < 1e-9);
        let w = Witness::from_scan(&scan, &tol).unwrap();
        let again = replay(&logk, &w, Some(&tol)).unwrap();
        assert!(again.reproduced);
        assert_eq!(again.value, w.value);
        assert!(again.warnings.is_empty());

        let near = scan
            .violations
            .iter()
            .find(|v| v.t > 0.5 && v.t < 0.6)
            .unwrap();
        let mut moved = w.clone();
        moved.t = near.t - 0.1;
        moved.grid_index = None;
        let r = replay(&logk, &moved, None).unwrap();
        assert!(!r.reproduced);
        assert_eq!(r.result.verdict, ScanVerdict::ConvexOnSegment);

        let other = Tolerances { abs: 1e-9, rel: 1e-8 };
        let warned = replay(&logk, &w, Some(&other)).unwrap();
        assert_eq!(warned.warnings.len(), 1);
        assert!(warned.reproduced);
    }

    #[test]
    fn witness_file_round_trip_and_corruption() {
        let logk = zoo("logk", &ZooParams::default()).unwrap();
        let tol = Tolerances::default();
        let scan = convexity_scan(&logk, &concave_piece_segment(), 256, &tol).unwrap();
        let w = Witness::from_scan(&scan, &tol).unwrap();
        let text = serde_json::to_string(&w).unwrap();
        let (back, cfg) = load_witness(&text).unwrap();
        assert_eq!(back, w);
        assert!(cfg.is_none());
        let corrupt = text.replace("\"xi\":[3.0,0.0]", "\"xi\":[3.0,\"x\"]");
        assert_ne!(corrupt, text);
        let err = load_witness(&corrupt).unwrap_err().to_string();
        assert!(err.contains("segment.xi"), "{err}");
    }

    #[test]
    fn reports_are_deterministic_and_atomic() {
        let cfg = small(EnergyDef::zoo("k2"));
        let a = to_json(&check_config(&cfg).unwrap()).unwrap();
        let b = to_json(&check_config(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_report(&path, &check_config(&cfg).unwrap()).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), a);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn embedded_config_reruns_to_the_same_verdict() {
        let cfg = small(EnergyDef::zoo("distortion"));
        let r = check_config(&cfg).unwrap();
        let json = to_json(&r).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let embedded: RunConfig = serde_json::from_value(v["config"].clone()).unwrap();
        let r2 = check_config(&embedded).unwrap();
        assert_eq!(r2.verdict, r.verdict);
        assert_eq!(to_json(&r2).unwrap(), json);
    }
}
