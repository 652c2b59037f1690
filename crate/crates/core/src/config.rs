//! Run configuration: TOML files with sections mirroring the CLI flags.
//!
//! ```toml
//! [energy]
//! zoo = "voliso"          # or ghat = "..." with n and regularity
//! hhat = "t"
//! f = "d + 1/d"
//!
//! [grid]
//! lo = 0.01
//! hi = 100.0
//! points = 64
//! min_gap = 1e-3
//!
//! [oracle]
//! segments = 1000
//! samples = 512
//! seed = 0
//!
//! [tolerances]
//! abs = 1e-10
//! rel = 1e-8
//!
//! [output]
//! path = "report.json"
//! format = "json"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::criteria::{GridSpec, Tolerances};
use crate::energymodel::{EnergyDef, EnergySpec, Regularity};
use crate::error::{Result, RocError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Random segments always scanned.
    pub segments: usize,
    /// Samples per segment.
    pub samples: usize,
    pub seed: u64,
    /// Upper bound on segments scanned while searching for a witness when
    /// the criterion fails.
    pub search_segments: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            segments: 1000,
            samples: 512,
            seed: 0,
            search_segments: 10_000,
        }
    }
}

/// Fully resolved configuration; embedded verbatim in reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub energy: EnergyDef,
    pub grid: GridSpec,
    pub oracle: OracleConfig,
    pub tolerances: Tolerances,
}

impl RunConfig {
    /// Defaults for everything but the energy.
    pub fn for_energy(energy: EnergyDef) -> Result<Self> {
        let n = EnergySpec::from_def(&energy)?.dim();
        Ok(Self {
            energy,
            grid: GridSpec::default_for(n),
            oracle: OracleConfig::default(),
            tolerances: Tolerances::default(),
        })
    }

    pub fn validate(&self) -> Result<EnergySpec> {
        let spec = EnergySpec::from_def(&self.energy)?;
        self.grid.validate()?;
        self.tolerances.validate()?;
        if self.oracle.samples < 64 {
            return Err(RocError::Input(format!(
                "oracle.samples must be at least 64, got {}",
                self.oracle.samples
            )));
        }
        if self.oracle.segments == 0 {
            return Err(RocError::Input("oracle.segments must be positive".into()));
        }
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(RocError::Input(format!("unknown format `{other}` (json or csv)"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    pub zoo: Option<String>,
    pub ghat: Option<String>,
    pub hhat: Option<String>,
    pub f: Option<String>,
    pub n: Option<usize>,
    pub regularity: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub points: Option<usize>,
    pub min_gap: Option<f64>,
    pub ratio_cap: Option<f64>,
    pub directions: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub segments: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub search_segments: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    pub abs: Option<f64>,
    pub rel: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<String>,
    pub format: Option<OutputFormat>,
}

/// Partial configuration as read from a file or collected from flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub energy: EnergySection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn pick<T>(over: Option<T>, base: Option<T>) -> Option<T> {
    over.or(base)
}

impl ConfigFile {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| RocError::Input(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Values from `over` win.
    pub fn overlay(self, over: ConfigFile) -> ConfigFile {
        let (e, o) = (self.energy, over.energy);
        let (g, og) = (self.grid, over.grid);
        let (r, or) = (self.oracle, over.oracle);
        let (t, ot) = (self.tolerances, over.tolerances);
        let (p, op) = (self.output, over.output);
        ConfigFile {
            energy: EnergySection {
                zoo: pick(o.zoo, e.zoo),
                ghat: pick(o.ghat, e.ghat),
                hhat: pick(o.hhat, e.hhat),
                f: pick(o.f, e.f),
                n: pick(o.n, e.n),
                regularity: pick(o.regularity, e.regularity),
            },
            grid: GridSection {
                lo: pick(og.lo, g.lo),
                hi: pick(og.hi, g.hi),
                points: pick(og.points, g.points),
                min_gap: pick(og.min_gap, g.min_gap),
                ratio_cap: pick(og.ratio_cap, g.ratio_cap),
                directions: pick(og.directions, g.directions),
                seed: pick(og.seed, g.seed),
            },
            oracle: OracleSection {
                segments: pick(or.segments, r.segments),
                samples: pick(or.samples, r.samples),
                seed: pick(or.seed, r.seed),
                search_segments: pick(or.search_segments, r.search_segments),
            },
            tolerances: ToleranceSection {
                abs: pick(ot.abs, t.abs),
                rel: pick(ot.rel, t.rel),
            },
            output: OutputSection {
                path: pick(op.path, p.path),
                format: pick(op.format, p.format),
            },
        }
    }

    pub fn energy_def(&self) -> Result<EnergyDef> {
        let e = &self.energy;
        let regularity = e.regularity.as_deref().map(Regularity::parse).transpose()?;
        match (&e.zoo, &e.ghat, &e.hhat) {
            (Some(name), None, _) => Ok(EnergyDef::Zoo {
                name: name.clone(),
                n: e.n,
                hhat: e.hhat.clone(),
                f: e.f.clone(),
                regularity,
            }),
            (None, Some(expr), None) => {
                let n = e
                    .n
                    .ok_or_else(|| RocError::Input("an energy given by ghat needs n".into()))?;
                Ok(EnergyDef::Ghat {
                    expr: expr.clone(),
                    n,
                    regularity: regularity.unwrap_or(Regularity::C2InteriorC1Closure),
                })
            }
            (None, None, Some(h)) => Ok(EnergyDef::Zoo {
                name: if e.f.is_some() { "voliso" } else { "conformal" }.into(),
                n: e.n,
                hhat: Some(h.clone()),
                f: e.f.clone(),
                regularity,
            }),
            (None, None, None) => Err(RocError::Input(
                "no energy given (use zoo, ghat or hhat)".into(),
            )),
            _ => Err(RocError::Input(
                "give exactly one of zoo, ghat, hhat".into(),
            )),
        }
    }

    /// Applies defaults and validates.
    pub fn resolve(&self) -> Result<RunConfig> {
        let energy = self.energy_def()?;
        let mut cfg = RunConfig::for_energy(energy)?;
        let g = &self.grid;
        let grid = &mut cfg.grid;
        grid.lo = g.lo.unwrap_or(grid.lo);
        grid.hi = g.hi.unwrap_or(grid.hi);
        grid.points_per_axis = g.points.unwrap_or(grid.points_per_axis);
        grid.min_gap = g.min_gap.unwrap_or(grid.min_gap);
        grid.ratio_cap = g.ratio_cap.unwrap_or(grid.ratio_cap);
        grid.lh_directions = g.directions.unwrap_or(grid.lh_directions);
        grid.seed = g.seed.unwrap_or(grid.seed);
        let o = &self.oracle;
        cfg.oracle.segments = o.segments.unwrap_or(cfg.oracle.segments);
        cfg.oracle.samples = o.samples.unwrap_or(cfg.oracle.samples);
        cfg.oracle.seed = o.seed.unwrap_or(cfg.oracle.seed);
        cfg.oracle.search_segments = o.search_segments.unwrap_or(cfg.oracle.search_segments);
        cfg.tolerances.abs = self.tolerances.abs.unwrap_or(cfg.tolerances.abs);
        cfg.tolerances.rel = self.tolerances.rel.unwrap_or(cfg.tolerances.rel);
        cfg.validate()?;
        Ok(cfg)
    }
}
