//! JSON run configuration.

use std::path::{Path, PathBuf};

use infowelfare::tolerances::{GRID_EXPR, GRID_VALIDATE};
use infowelfare::{DemandSpec, Family, Market, Tolerances, WelfareWeight};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Schema tag every config must carry.
pub const CONFIG_SCHEMA: &str = "infowelfare.config/1";

/// Default welfare-weight grid for `classify --alpha-scan`.
pub fn default_scan() -> Vec<f64> {
    (1..=20).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Alphas {
    One(f64),
    Many(Vec<f64>),
}

impl Alphas {
    fn to_vec(&self) -> Vec<f64> {
        match self {
            Alphas::One(a) => vec![*a],
            Alphas::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unbounded {
    Inf,
}

/// Upper end of a support: a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Finite(f64),
    Infinite(Unbounded),
}

fn one() -> f64 {
    1.0
}

/// One demand type as written in the config.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpecRecord {
    LinearShift {
        a: f64,
        c: f64,
        #[serde(default)]
        support: Option<[f64; 2]>,
    },
    /// Defaults: `c = 1`, `p_hi` the largest price with concave revenue.
    ConstantElasticity {
        #[serde(default = "one")]
        c: f64,
        theta: f64,
        #[serde(default)]
        p_hi: Option<Bound>,
    },
    PowerUnit {
        theta: f64,
    },
    DensityPower {
        c1: f64,
        c2: f64,
        c3: f64,
        c4: f64,
        p_lo: f64,
        p_hi: f64,
    },
    CubicRamp {
        value: f64,
        width: f64,
    },
    Affine {
        scale: f64,
        shift: f64,
        base: Box<SpecRecord>,
    },
    /// Either inline arrays or a two-column `price,quantity` CSV, resolved
    /// relative to the config file.
    Tabulated {
        #[serde(default)]
        csv: Option<PathBuf>,
        #[serde(default)]
        prices: Option<Vec<f64>>,
        #[serde(default)]
        quantities: Option<Vec<f64>>,
    },
}

/// A labelled family for the bounds table.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    pub family: Vec<SpecRecord>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default)]
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub family: Vec<SpecRecord>,
    #[serde(default)]
    pub sweep: Vec<Variant>,
    #[serde(default)]
    pub alpha: Option<Alphas>,
    #[serde(default)]
    pub alpha_scan: Option<Vec<f64>>,
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub validate_grid: Option<usize>,
    #[serde(default)]
    pub resolution: Option<usize>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub polish: Option<bool>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub search_trials: Option<usize>,
    #[serde(default)]
    pub fallback_grid: bool,
    #[serde(default)]
    pub outputs: Outputs,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alphas: Vec<f64>,
    pub resolution: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub fallback_grid: bool,
}

/// Effective settings after defaults and overrides; echoed into reports.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub alphas: Vec<f64>,
    pub alpha_scan: Vec<f64>,
    pub prior: Option<Vec<f64>>,
    pub grid: usize,
    pub validate_grid: usize,
    pub resolution: usize,
    pub samples: usize,
    pub polish: bool,
    pub seed: u64,
    pub search_trials: usize,
    pub fallback_grid: bool,
    pub tolerances: Tolerances,
    /// Reduced coordinates drop the first declared type; gradients,
    /// Hessians and directions are over types 2..n.
    pub base_type: usize,
    pub types: Vec<String>,
    pub outputs: Outputs,
}

/// A loaded config: raw hash, settings and the built demand curves.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub sha256: String,
    pub settings: Settings,
    pub specs: Vec<DemandSpec>,
    pub sweep: Vec<(String, Vec<DemandSpec>)>,
}

impl Loaded {
    pub fn weights(&self) -> Result<Vec<WelfareWeight>, CliError> {
        self.settings.alphas.iter().map(|&a| WelfareWeight::new(a).map_err(CliError::config)).collect()
    }

    pub fn family(&self) -> Result<Family, CliError> {
        self.family_of(&self.specs)
    }

    pub fn family_of(&self, specs: &[DemandSpec]) -> Result<Family, CliError> {
        let f = Family::with_tolerances(specs.to_vec(), self.settings.tolerances)?;
        Ok(if self.settings.fallback_grid { f.with_fallback_grid() } else { f })
    }

    pub fn prior(&self) -> Result<Option<Market>, CliError> {
        self.settings.prior.clone().map(|p| Market::new(p).map_err(CliError::config)).transpose()
    }
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Parse { path, line: inner.line(), column: inner.column(), message: inner.to_string() }
    })?;
    if cfg.schema != CONFIG_SCHEMA {
        return Err(CliError::Config(format!("schema must be \"{CONFIG_SCHEMA}\", found \"{}\"", cfg.schema)));
    }
    Ok(cfg)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load(path: &Path, over: &Overrides) -> Result<Loaded, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| CliError::Config(format!("config is not UTF-8: {e}")))?;
    let cfg = parse(&text)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let specs = build_family(&cfg.family, dir, "family")?;
    let sweep = cfg
        .sweep
        .iter()
        .enumerate()
        .map(|(k, v)| Ok((v.label.clone(), build_family(&v.family, dir, &format!("sweep[{k}].family"))?)))
        .collect::<Result<Vec<_>, CliError>>()?;

    let alphas = if !over.alphas.is_empty() {
        over.alphas.clone()
    } else {
        cfg.alpha.as_ref().map_or_else(|| vec![0.5], Alphas::to_vec)
    };
    if alphas.is_empty() {
        return Err(CliError::Config("alpha list is empty".into()));
    }
    let alpha_scan = cfg.alpha_scan.clone().unwrap_or_else(default_scan);
    for &a in alphas.iter().chain(&alpha_scan) {
        WelfareWeight::new(a).map_err(CliError::config)?;
    }
    if let Some(p) = &cfg.prior {
        // With a sweep the prior belongs to the sweep families.
        let mut sizes: Vec<usize> = sweep.iter().map(|(_, s)| s.len()).collect();
        if sizes.is_empty() {
            sizes.push(specs.len());
        }
        if let Some(n) = sizes.into_iter().find(|&n| n != p.len()) {
            return Err(CliError::Config(format!("prior has {} weights for {n} types", p.len())));
        }
        Market::new(p.clone()).map_err(CliError::config)?;
    }
    let mut outputs = cfg.outputs.clone();
    if over.out.is_some() {
        outputs.report = over.out.clone();
    }
    let settings = Settings {
        alphas,
        alpha_scan,
        prior: cfg.prior.clone(),
        grid: cfg.grid.unwrap_or(GRID_EXPR),
        validate_grid: cfg.validate_grid.unwrap_or(GRID_VALIDATE),
        resolution: over.resolution.or(cfg.resolution).unwrap_or(200),
        samples: cfg.samples.unwrap_or(4096),
        polish: cfg.polish.unwrap_or(true),
        seed: over.seed.or(cfg.seed).unwrap_or(0),
        search_trials: cfg.search_trials.unwrap_or(500),
        fallback_grid: cfg.fallback_grid || over.fallback_grid,
        tolerances: cfg.tolerances,
        base_type: 1,
        types: specs.iter().map(DemandSpec::label).collect(),
        outputs,
    };
    if settings.resolution == 0 || settings.grid < 2 || settings.validate_grid < 2 {
        return Err(CliError::Config("resolution must be positive and grids at least 2".into()));
    }
    Ok(Loaded { sha256: sha256_hex(&bytes), settings, specs, sweep })
}

fn build_family(records: &[SpecRecord], dir: &Path, at: &str) -> Result<Vec<DemandSpec>, CliError> {
    if records.is_empty() {
        return Err(CliError::Config(format!("{at}: at least one type is required")));
    }
    records.iter().enumerate().map(|(k, r)| build_spec(r, dir).map_err(|e| e.located(&format!("{at}[{k}]")))).collect()
}

pub fn build_spec(rec: &SpecRecord, dir: &Path) -> Result<DemandSpec, CliError> {
    let spec = match rec {
        SpecRecord::LinearShift { a, c, support } => {
            let s = DemandSpec::linear_shift(*a, *c)?;
            match support {
                Some([lo, hi]) => s.with_support(*lo, *hi)?,
                None => s,
            }
        }
        SpecRecord::ConstantElasticity { c, theta, p_hi } => {
            let hi = match p_hi {
                None => DemandSpec::ces_concave_limit(*c, *theta),
                Some(Bound::Finite(h)) => *h,
                Some(Bound::Infinite(_)) => f64::INFINITY,
            };
            DemandSpec::constant_elasticity(*c, *theta, hi)?
        }
        SpecRecord::PowerUnit { theta } => DemandSpec::power_unit(*theta)?,
        SpecRecord::DensityPower { c1, c2, c3, c4, p_lo, p_hi } => {
            DemandSpec::density_power(*c1, *c2, *c3, *c4, *p_lo, *p_hi)?
        }
        SpecRecord::CubicRamp { value, width } => DemandSpec::cubic_ramp(*value, *width)?,
        SpecRecord::Affine { scale, shift, base } => {
            DemandSpec::affine_of_base(*scale, *shift, build_spec(base, dir)?)?
        }
        SpecRecord::Tabulated { csv, prices, quantities } => match (csv, prices, quantities) {
            (Some(file), None, None) => {
                let (p, q) = read_table(&dir.join(file))?;
                DemandSpec::tabulated(p, q)?
            }
            (None, Some(p), Some(q)) => DemandSpec::tabulated(p.clone(), q.clone())?,
            _ => return Err(CliError::Config("tabulated needs either `csv` or both `prices` and `quantities`".into())),
        },
    };
    Ok(spec)
}

/// Two-column `price,quantity` table; a non-numeric first row is a header.
pub fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let (mut prices, mut quantities) = (Vec::new(), Vec::new());
    for (k, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if row.len() != 2 {
            return Err(CliError::Config(format!(
                "{}: row {} has {} columns, expected 2",
                path.display(),
                k + 1,
                row.len()
            )));
        }
        let parsed = (row[0].parse::<f64>(), row[1].parse::<f64>());
        match parsed {
            (Ok(p), Ok(q)) => {
                prices.push(p);
                quantities.push(q);
            }
            _ if k == 0 => continue,
            _ => return Err(CliError::Config(format!("{}: row {} is not numeric", path.display(), k + 1))),
        }
    }
    if prices.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config(format!("{}: prices must increase strictly", path.display())));
    }
    Ok((prices, quantities))
}
