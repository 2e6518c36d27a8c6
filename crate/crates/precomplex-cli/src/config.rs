//! Config files, flag overrides and the resolved run configuration.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use precomplex::discrete_geometry::{ChartKind, DomainSpec, FieldSpace, MetricKind, OperatorKind};
use precomplex::precomplex_engine::ChainKind;
use precomplex::symbol_check::HessianBoundary;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ChainName {
    #[serde(alias = "deRham")]
    #[value(alias = "derham")]
    DeRham,
    #[serde(alias = "deRhamTwisted")]
    #[value(alias = "twisted")]
    TwistedDeRham,
    Bianchi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SystemName {
    /// `(A_{i-1}^* + A_i, B_{i-1}^*)` on one level of a chain.
    ChainLevel,
    /// `(delta^G + d^G)` on one Bianchi space.
    BianchiDirac,
    /// `(delta + H)` on symmetric forms.
    Hessian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryName {
    Normal,
    Tangential,
    TangentialOnly,
}

impl From<BoundaryName> for HessianBoundary {
    fn from(b: BoundaryName) -> Self {
        match b {
            BoundaryName::Normal => HessianBoundary::Normal,
            BoundaryName::Tangential => HessianBoundary::Tangential,
            BoundaryName::TangentialOnly => HessianBoundary::TangentialOnly,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Restriction {
    Full,
    Bianchi,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub chart: Option<ChartKind>,
    pub n: Option<usize>,
    pub metric: Option<MetricKind>,
    pub phi_expression: Option<String>,
    pub diagonal_metric: Option<Vec<String>>,
    pub twist_strength: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub kind: Option<ChainName>,
    pub m: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    pub name: Option<String>,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub restriction: Option<Restriction>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSection {
    pub system: Option<SystemName>,
    pub boundary: Option<BoundaryName>,
    pub dual: Option<bool>,
    pub metric_points: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BvpSection {
    pub chi: Option<PathBuf>,
    pub xi: Option<PathBuf>,
    pub phi: Option<PathBuf>,
    pub harmonic_seed: Option<PathBuf>,
    pub solution: Option<PathBuf>,
    /// Generate the data from a smooth seeded field and report the recovery error.
    pub manufactured: Option<bool>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub export_ops: Option<PathBuf>,
    pub save_chain: Option<PathBuf>,
    pub timings: Option<bool>,
}

/// Contents of a TOML or JSON config file. Every field is optional; flags win.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub d: Option<usize>,
    pub samples: Option<usize>,
    pub level: Option<usize>,
    pub sweep: Option<Vec<usize>>,
    pub expect_dims: Option<Vec<usize>>,
    #[serde(default)]
    pub domain: DomainSection,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub operator: OperatorSection,
    #[serde(default)]
    pub symbol: SymbolSection,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub bvp: BvpSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if json {
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
                key: e.path().to_string(),
                message: e.inner().to_string(),
            })
        } else {
            let de = toml::Deserializer::new(&text);
            serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
                key: e.path().to_string(),
                message: e.inner().message().to_string(),
            })
        };
        parsed.map_err(|e| match e {
            CliError::Config { key, message } => CliError::Config { key, message: format!("{}: {message}", path.display()) },
            other => other,
        })
    }

    /// Fills every unset field of `self` from `lower`.
    pub fn or(mut self, lower: FileConfig) -> FileConfig {
        macro_rules! take {
            ($($f:ident).+) => {
                if self.$($f).+.is_none() {
                    self.$($f).+ = lower.$($f).+.clone();
                }
            };
        }
        take!(seed);
        take!(d);
        take!(samples);
        take!(level);
        take!(sweep);
        take!(expect_dims);
        take!(domain.chart);
        take!(domain.n);
        take!(domain.metric);
        take!(domain.phi_expression);
        take!(domain.diagonal_metric);
        take!(domain.twist_strength);
        take!(chain.kind);
        take!(chain.m);
        take!(operator.name);
        take!(operator.k);
        take!(operator.m);
        take!(operator.restriction);
        take!(symbol.system);
        take!(symbol.boundary);
        take!(symbol.dual);
        take!(symbol.metric_points);
        take!(bvp.chi);
        take!(bvp.xi);
        take!(bvp.phi);
        take!(bvp.harmonic_seed);
        take!(bvp.solution);
        take!(bvp.manufactured);
        take!(output.report);
        take!(output.csv);
        take!(output.export_ops);
        take!(output.save_chain);
        take!(output.timings);
        for (k, v) in lower.tolerances {
            self.tolerances.entry(k).or_insert(v);
        }
        self
    }
}

/// Named tolerances with their defaults.
pub const TOLERANCES: &[(&str, f64, &str)] = &[
    ("identity", 1e-12, "fiber-algebra relations and duality"),
    ("projector_formula", 1e-10, "closed-form Bianchi projector against the kernel projector"),
    ("symbol_singular", 1e-8, "minimum restricted singular value of an elliptic symbol"),
    ("symbol_nilpotency", 1e-12, "relative size of consecutive symbol products"),
    ("greens_ratio_min", 1.5, "lower bound of the Green residual ratio per halving of h"),
    ("greens_ratio_max", 3.0, "upper bound of the Green residual ratio per halving of h"),
    ("rank_tau", 1e-8, "relative singular-value cutoff of the range projectors"),
    ("harmonic_gap", 1e3, "singular-value gap required for an integer harmonic dimension"),
    ("nilpotency", 1e-8, "relative size of consecutive corrected products"),
    ("integrability", 1e-8, "refusal threshold of the solvability residuals"),
    ("recovery", 1e-6, "relative recovery error of a manufactured solution"),
];

#[derive(Clone, Debug, Serialize)]
pub struct ToleranceEntry {
    pub name: String,
    pub value: f64,
    pub source: &'static str,
}

/// Tolerance table that records which entries a run consulted.
#[derive(Debug)]
pub struct Tolerances {
    overrides: BTreeMap<String, f64>,
    used: RefCell<BTreeSet<&'static str>>,
}

impl Tolerances {
    pub fn new(overrides: BTreeMap<String, f64>) -> Result<Self, CliError> {
        for (name, &value) in &overrides {
            if !TOLERANCES.iter().any(|(n, _, _)| n == name) {
                let known: Vec<&str> = TOLERANCES.iter().map(|t| t.0).collect();
                return Err(CliError::Config {
                    key: format!("tolerances.{name}"),
                    message: format!("unknown tolerance; expected one of {}", known.join(", ")),
                });
            }
            if !(value.is_finite() && value > 0.0) {
                return Err(CliError::Config { key: format!("tolerances.{name}"), message: format!("must be positive, got {value}") });
            }
        }
        Ok(Tolerances { overrides, used: RefCell::new(BTreeSet::new()) })
    }

    pub fn get(&self, name: &'static str) -> f64 {
        let default = TOLERANCES.iter().find(|t| t.0 == name).unwrap_or_else(|| panic!("unregistered tolerance {name}")).1;
        self.used.borrow_mut().insert(name);
        self.overrides.get(name).copied().unwrap_or(default)
    }

    pub fn entries(&self) -> Vec<ToleranceEntry> {
        self.used
            .borrow()
            .iter()
            .map(|&name| {
                let (source, value) = match self.overrides.get(name) {
                    Some(&v) => ("override", v),
                    None => ("default", TOLERANCES.iter().find(|t| t.0 == name).expect("registered").1),
                };
                ToleranceEntry { name: name.to_string(), value, source }
            })
            .collect()
    }
}

pub const DEFAULT_SEED: u64 = 20240611;
pub const DEFAULT_N: usize = 16;

/// Fully resolved configuration shared by every subcommand.
#[derive(Debug)]
pub struct RunConfig {
    pub raw: FileConfig,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn new(raw: FileConfig) -> Result<Self, CliError> {
        let tolerances = Tolerances::new(raw.tolerances.clone())?;
        let seed = raw.seed.unwrap_or(DEFAULT_SEED);
        if let Some(sweep) = &raw.sweep {
            if sweep.is_empty() {
                return Err(CliError::Config { key: "sweep".into(), message: "empty resolution list".into() });
            }
        }
        Ok(RunConfig { raw, seed, tolerances })
    }

    pub fn d(&self) -> usize {
        self.raw.d.unwrap_or(2)
    }

    pub fn domain(&self) -> Result<DomainSpec, CliError> {
        let s = &self.raw.domain;
        let chart = s.chart.unwrap_or(ChartKind::Box);
        let metric = s.metric.unwrap_or(match chart {
            ChartKind::Box => MetricKind::Flat,
            ChartKind::Annulus => MetricKind::Polar,
        });
        Ok(DomainSpec {
            chart,
            d: self.d(),
            n: s.n.unwrap_or(DEFAULT_N),
            metric,
            phi_expression: s.phi_expression.clone(),
            diagonal_metric: s.diagonal_metric.clone(),
            twist_strength: s.twist_strength,
        })
    }

    pub fn chain(&self) -> Result<ChainKind, CliError> {
        let kind = self.raw.chain.kind.ok_or_else(|| CliError::Config { key: "chain.kind".into(), message: "required".into() })?;
        Ok(match kind {
            ChainName::DeRham => ChainKind::DeRham,
            ChainName::TwistedDeRham => {
                if self.raw.domain.twist_strength.is_none() {
                    return Err(CliError::Config {
                        key: "domain.twist_strength".into(),
                        message: "required by the twisted de Rham chain".into(),
                    });
                }
                ChainKind::TwistedDeRham
            }
            ChainName::Bianchi => ChainKind::Bianchi {
                m: self.raw.chain.m.ok_or_else(|| CliError::Config { key: "chain.m".into(), message: "required by the Bianchi chain".into() })?,
            },
        })
    }

    /// Operator kind and source space from the `operator` section.
    pub fn operator(&self) -> Result<Option<(OperatorKind, FieldSpace)>, CliError> {
        let s = &self.raw.operator;
        let Some(name) = &s.name else { return Ok(None) };
        let kind = OperatorKind::parse(name).ok_or_else(|| {
            let known: Vec<&str> = OperatorKind::ALL.iter().map(|k| k.name()).collect();
            CliError::Config { key: "operator.name".into(), message: format!("unknown operator {name:?}; expected one of {}", known.join(", ")) }
        })?;
        let k = s.k.ok_or_else(|| CliError::Config { key: "operator.k".into(), message: "required".into() })?;
        let m = s.m.unwrap_or(0);
        let space = match s.restriction.unwrap_or(Restriction::Full) {
            Restriction::Full => FieldSpace::forms(k, m),
            Restriction::Bianchi => FieldSpace::bianchi(k, m),
        };
        let space = match kind {
            OperatorKind::TwistedD | OperatorKind::TwistedDelta => FieldSpace::twisted(k, precomplex::discrete_geometry::TWIST_RANK),
            _ => space,
        };
        Ok(Some((kind, space)))
    }

    pub fn resolutions(&self) -> Result<Vec<usize>, CliError> {
        Ok(match &self.raw.sweep {
            Some(s) => s.clone(),
            None => vec![self.domain()?.n],
        })
    }

    pub fn timings(&self) -> bool {
        self.raw.output.timings.unwrap_or(true)
    }

    /// Config echo stored in every report: everything except output locations.
    pub fn echo(&self) -> serde_json::Value {
        let mut raw = self.raw.clone();
        raw.output = OutputSection::default();
        raw.seed = Some(self.seed);
        let mut v = serde_json::to_value(&raw).expect("config serializes");
        prune(&mut v);
        v
    }
}

/// Drops nulls and then-empty objects so the echo only lists what was set.
fn prune(v: &mut serde_json::Value) {
    if let serde_json::Value::Object(map) = v {
        for child in map.values_mut() {
            prune(child);
        }
        map.retain(|_, c| !(c.is_null() || c.as_object().is_some_and(|o| o.is_empty())));
    }
}

/// Comma-separated integers given as a single flag value.
#[derive(Clone, Debug)]
pub struct IntList(pub Vec<usize>);

/// Parses `n=8,16,24` (or `8,16,24`) into a resolution list.
pub fn parse_sweep(s: &str) -> Result<IntList, String> {
    parse_list(s.strip_prefix("n=").unwrap_or(s))
}

/// Parses `name=value` for a tolerance override.
pub fn parse_tolerance(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let v: f64 = value.trim().parse().map_err(|e| format!("bad value for {name}: {e}"))?;
    Ok((name.trim().to_string(), v))
}

/// Parses `k,m`.
pub fn parse_bidegree(s: &str) -> Result<(usize, usize), String> {
    let (k, m) = s.split_once(',').ok_or_else(|| format!("expected k,m, got {s:?}"))?;
    Ok((k.trim().parse().map_err(|e| format!("{e}"))?, m.trim().parse().map_err(|e| format!("{e}"))?))
}

/// Parses a comma-separated list of integers.
pub fn parse_list(s: &str) -> Result<IntList, String> {
    s.split(',').map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad entry {t:?}: {e}"))).collect::<Result<_, _>>().map(IntList)
}
