//! One function per subcommand. Each returns a serialisable result and
//! whether the run counts as a domain failure.

use std::io::Write;

use infowelfare::classifier::{alpha_monotone_scan, classify, classify_affine, AffineReport, MonotonicityVerdict};
use infowelfare::curvature::{
    extreme_eigenvalues, global_bounds, search_markets, vector_field, BoundsOptions, BoundsReport, FieldRow,
};
use infowelfare::demand::{validate_assumption1, ValidationReport};
use infowelfare::oracles::{witness_search, OracleConfig, WitnessReport};
use infowelfare::pricing::{check_partial_inclusion, InclusionReport};
use infowelfare::{Error, Market, WelfareWeight};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Loaded;
use crate::error::CliError;

pub struct Outcome<T> {
    pub result: T,
    pub failed: bool,
    /// One line per hard failure, for stderr.
    pub messages: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ValidateResult {
    pub passed: bool,
    pub types: Vec<ValidationReport>,
    pub inclusion: Option<InclusionReport>,
    /// Set when no family could be formed (a type lacks an interior price).
    pub family_error: Option<String>,
}

pub fn validate(cfg: &Loaded) -> Outcome<ValidateResult> {
    let s = &cfg.settings;
    let types: Vec<ValidationReport> =
        cfg.specs.iter().map(|spec| validate_assumption1(spec, s.validate_grid, &s.tolerances)).collect();
    let mut messages: Vec<String> = types
        .iter()
        .enumerate()
        .flat_map(|(k, r)| r.failures.iter().map(move |f| format!("type {} ({}): {f}", k + 1, r.label)))
        .collect();
    let (inclusion, family_error) = match cfg.family() {
        Ok(f) => (Some(check_partial_inclusion(&f)), None),
        Err(e) => (None, Some(e.to_string())),
    };
    if let Some(e) = &family_error {
        messages.push(format!("family: {e}"));
    }
    if let Some(inc) = &inclusion {
        messages.extend(inc.violations.iter().map(|v| {
            format!("partial inclusion: monopoly price of type {} misses type {} ({:?})", v.i + 1, v.j + 1, v.kind)
        }));
    }
    let passed = messages.is_empty();
    Outcome { result: ValidateResult { passed, types, inclusion, family_error }, failed: !passed, messages }
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum ClassifyResult {
    Verdicts { verdicts: Vec<MonotonicityVerdict> },
    Scan { scan: Vec<MonotonicityVerdict> },
    Affine { affine: Vec<AffineRow> },
}

#[derive(Debug, Serialize)]
pub struct AffineRow {
    pub alpha: f64,
    pub report: AffineReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifyMode {
    Verdicts,
    AlphaScan,
    Affine,
}

pub fn classify_cmd(cfg: &Loaded, mode: ClassifyMode) -> Result<Outcome<ClassifyResult>, CliError> {
    let family = cfg.family()?;
    let grid = cfg.settings.grid;
    let result = match mode {
        ClassifyMode::Verdicts => ClassifyResult::Verdicts {
            verdicts: cfg.weights()?.into_iter().map(|w| classify(&family, w, grid)).collect::<Result<_, Error>>()?,
        },
        ClassifyMode::AlphaScan => {
            ClassifyResult::Scan { scan: alpha_monotone_scan(&family, &cfg.settings.alpha_scan, grid)? }
        }
        ClassifyMode::Affine => ClassifyResult::Affine {
            affine: cfg
                .weights()?
                .into_iter()
                .map(|w| Ok(AffineRow { alpha: w.alpha(), report: classify_affine(&family, w, grid)? }))
                .collect::<Result<_, Error>>()?,
        },
    };
    Ok(Outcome { result, failed: false, messages: Vec::new() })
}

#[derive(Debug, Serialize)]
pub struct BoundsRow {
    pub variant: String,
    pub alpha: f64,
    #[serde(flatten)]
    pub report: BoundsReport,
}

#[derive(Debug, Serialize)]
pub struct BoundsResult {
    pub options: BoundsOptions,
    pub rows: Vec<BoundsRow>,
}

/// One starting point of the bounds search; `lambdas` is `(lo, hi)`.
pub struct LambdaRow {
    pub variant: String,
    pub alpha: f64,
    pub market: Market,
    pub lambdas: Option<(f64, f64)>,
}

pub struct LambdaTable {
    pub rows: Vec<LambdaRow>,
}

fn bounds_options(cfg: &Loaded) -> BoundsOptions {
    let s = &cfg.settings;
    BoundsOptions { resolution: s.resolution, samples: s.samples, polish: s.polish, seed: s.seed as u32 }
}

pub fn bounds(cfg: &Loaded) -> Result<(BoundsResult, LambdaTable), CliError> {
    let opts = bounds_options(cfg);
    let prior = cfg.prior()?;
    let variants: Vec<(String, &[infowelfare::DemandSpec])> = if cfg.sweep.is_empty() {
        vec![("family".to_string(), cfg.specs.as_slice())]
    } else {
        cfg.sweep.iter().map(|(l, s)| (l.clone(), s.as_slice())).collect()
    };
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for (label, specs) in variants {
        let family = cfg.family_of(specs)?;
        let prior = prior.as_ref().filter(|p| p.len() == family.len());
        for w in cfg.weights()? {
            let report = global_bounds(&family, w, prior, opts)?;
            rows.push(BoundsRow { variant: label.clone(), alpha: w.alpha(), report });
            let markets = search_markets(family.len(), &opts);
            let lambdas: Vec<Option<(f64, f64)>> =
                markets.par_iter().map(|m| extreme_eigenvalues(&family, m, w).ok()).collect();
            table.extend(markets.into_iter().zip(lambdas).map(|(market, lambdas)| LambdaRow {
                variant: label.clone(),
                alpha: w.alpha(),
                market,
                lambdas,
            }));
        }
    }
    Ok((BoundsResult { options: opts, rows }, LambdaTable { rows: table }))
}

/// Full-precision float for CSV output (17 significant digits).
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_cells(v: &Option<Vec<f64>>, len: usize) -> Vec<String> {
    match v {
        Some(v) => v.iter().map(|&x| fmt(x)).collect(),
        None => vec![String::new(); len],
    }
}

pub fn write_lambda_csv<W: Write>(out: W, table: &LambdaTable) -> Result<(), CliError> {
    let mut wtr = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let n_max = table.rows.iter().map(|r| r.market.len()).max().unwrap_or(0);
    let mut header = vec!["variant".to_string(), "alpha".to_string()];
    header.extend((1..=n_max).map(|i| format!("mu_{i}")));
    header.extend(["lambda_lo".to_string(), "lambda_hi".to_string()]);
    wtr.write_record(&header).map_err(csv_err)?;
    for r in &table.rows {
        let mut rec = vec![r.variant.clone(), fmt(r.alpha)];
        rec.extend(r.market.weights().iter().map(|&x| fmt(x)));
        rec.extend((r.market.len()..n_max).map(|_| String::new()));
        match r.lambdas {
            Some((lo, hi)) => rec.extend([fmt(lo), fmt(hi)]),
            None => rec.extend([String::new(), String::new()]),
        }
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| CliError::Output(e.to_string()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Output(e.to_string())
}

pub fn field(cfg: &Loaded) -> Result<Vec<FieldRow>, CliError> {
    let family = cfg.family()?;
    let w = single_weight(cfg)?;
    Ok(vector_field(&family, w, cfg.settings.resolution)?)
}

fn single_weight(cfg: &Loaded) -> Result<WelfareWeight, CliError> {
    match cfg.weights()?.as_slice() {
        [w] => Ok(*w),
        ws => Err(CliError::Config(format!("this command takes one alpha, got {}", ws.len()))),
    }
}

pub fn write_field_csv<W: Write>(out: W, rows: &[FieldRow]) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(out);
    let n = 3;
    let mut header: Vec<String> = (1..=n).map(|i| format!("mu_{i}")).collect();
    header.extend((2..=n).map(|i| format!("vbest_{i}")));
    header.extend((2..=n).map(|i| format!("vworst_{i}")));
    header.extend(["lambda_hi".to_string(), "lambda_lo".to_string()]);
    wtr.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec: Vec<String> = r.market.iter().map(|&x| fmt(x)).collect();
        rec.extend(opt_cells(&r.v_best, n - 1));
        rec.extend(opt_cells(&r.v_worst, n - 1));
        rec.extend([fmt(r.lambda_hi), fmt(r.lambda_lo)]);
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| CliError::Output(e.to_string()))
}

#[derive(Debug, Serialize)]
pub struct WitnessRow {
    pub alpha: f64,
    #[serde(flatten)]
    pub report: WitnessReport,
}

pub fn witness(cfg: &Loaded) -> Result<Vec<WitnessRow>, CliError> {
    let family = cfg.family()?;
    let prior = cfg.prior()?.ok_or_else(|| CliError::Config("witness search needs a `prior`".into()))?;
    let oc =
        OracleConfig { search_trials: cfg.settings.search_trials, seed: cfg.settings.seed, ..OracleConfig::default() };
    cfg.weights()?
        .into_iter()
        .map(|w| Ok(WitnessRow { alpha: w.alpha(), report: witness_search(&family, &prior, w, &oc)? }))
        .collect()
}
