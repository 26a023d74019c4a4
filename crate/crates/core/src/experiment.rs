//! Experiment orchestration: method × budget × seed sweeps with held-out AUC
//! and per-tree timing.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boost::{train_centralized, TrainParams};
use crate::data::{gen_synthetic, load_csv, Dataset, FeatureMatrix, SyntheticSpec, VerticalSplit};
use crate::error::{Error, Result};
use crate::metrics::auc;
use crate::privacy::{Composition, PpScope, PrivacyConfig};
use crate::protocol::{
    calibrate_for, train_ldp_baseline, train_masked, LdpNoise, MaskedOptions, PayloadMode,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Centralized,
    Masked,
    LdpBaseline,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Centralized => "centralized",
            Method::Masked => "masked",
            Method::LdpBaseline => "ldp-baseline",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centralized" => Ok(Method::Centralized),
            "masked" => Ok(Method::Masked),
            "ldp-baseline" | "ldp" => Ok(Method::LdpBaseline),
            other => Err(Error::arg(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataSource {
    /// Generated per run; `seed: None` reuses the run seed so each seed sees a fresh draw.
    Synthetic {
        n: usize,
        d_ap: usize,
        d_pp: usize,
        balance: f64,
        label_noise: f64,
        seed: Option<u64>,
    },
    Csv {
        path: PathBuf,
        label_column: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    /// `None` gives the active party the first half of the columns (the
    /// generator's own AP/PP layout for synthetic data).
    pub split: Option<VerticalSplit>,
    pub params: TrainParams,
    pub privacy: PrivacyConfig,
    pub methods: Vec<Method>,
    pub eps_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub test_fraction: f64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let params = TrainParams::default();
        Self {
            source: DataSource::Synthetic {
                n: 4000,
                d_ap: 4,
                d_pp: 4,
                balance: 0.5,
                label_noise: 0.05,
                seed: None,
            },
            split: None,
            params,
            privacy: PrivacyConfig {
                rounds: params.rounds,
                depth: params.max_depth,
                ..PrivacyConfig::default()
            },
            methods: vec![Method::Centralized, Method::Masked, Method::LdpBaseline],
            eps_grid: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            seeds: (0..10).collect(),
            test_fraction: 0.2,
            out: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::arg(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl ExperimentConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment and
    /// unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut synth = match cfg.source.clone() {
            DataSource::Synthetic {
                n,
                d_ap,
                d_pp,
                balance,
                label_noise,
                seed,
            } => (n, d_ap, d_pp, balance, label_noise, seed),
            DataSource::Csv { .. } => unreachable!("default source is synthetic"),
        };
        let mut kind = "synthetic".to_string();
        let mut csv_path: Option<PathBuf> = None;
        let mut label_column = "label".to_string();
        let mut ap_columns: Option<Vec<usize>> = None;
        let mut pp_columns: Option<Vec<usize>> = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Row {
                line: lineno + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "source" => kind = value.to_string(),
                "csv_path" => csv_path = Some(PathBuf::from(value)),
                "label_column" => label_column = value.to_string(),
                "n" => synth.0 = parse(key, value)?,
                "d_ap" => synth.1 = parse(key, value)?,
                "d_pp" => synth.2 = parse(key, value)?,
                "balance" => synth.3 = parse(key, value)?,
                "label_noise" => synth.4 = parse(key, value)?,
                "data_seed" => synth.5 = Some(parse(key, value)?),
                "ap_columns" => ap_columns = Some(parse_list(key, value)?),
                "pp_columns" => pp_columns = Some(parse_list(key, value)?),
                "rounds" => cfg.params.rounds = parse(key, value)?,
                "depth" => cfg.params.max_depth = parse(key, value)?,
                "lambda" => cfg.params.lambda = parse(key, value)?,
                "gamma" => cfg.params.gamma = parse(key, value)?,
                "eta" => cfg.params.eta = parse(key, value)?,
                "candidates" => cfg.params.candidates_per_feature = parse(key, value)?,
                "gradient_only" => cfg.params.gradient_only = parse(key, value)?,
                "eps_ap" => cfg.privacy.eps_ap = parse(key, value)?,
                "delta_ap" => cfg.privacy.delta_ap = parse(key, value)?,
                "eps_pp" => cfg.privacy.eps_pp = parse(key, value)?,
                "delta_pp" => cfg.privacy.delta_pp = parse(key, value)?,
                "w" => cfg.privacy.w = parse(key, value)?,
                "sigma1" => cfg.privacy.sigma1 = parse(key, value)?,
                "composition" => cfg.privacy.composition = parse::<Composition>(key, value)?,
                "per_candidate" => cfg.privacy.per_candidate = parse(key, value)?,
                "pp_scope" => cfg.privacy.pp_scope = parse::<PpScope>(key, value)?,
                "mc_samples" => cfg.privacy.mc_samples = parse(key, value)?,
                "methods" => cfg.methods = parse_list(key, value)?,
                "eps_grid" => cfg.eps_grid = parse_list(key, value)?,
                "seeds" => cfg.seeds = parse_list(key, value)?,
                "test_fraction" => cfg.test_fraction = parse(key, value)?,
                "out" => cfg.out = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::arg(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.source = match kind.as_str() {
            "synthetic" => DataSource::Synthetic {
                n: synth.0,
                d_ap: synth.1,
                d_pp: synth.2,
                balance: synth.3,
                label_noise: synth.4,
                seed: synth.5,
            },
            "csv" => DataSource::Csv {
                path: csv_path.ok_or_else(|| Error::arg("source = csv needs csv_path"))?,
                label_column,
            },
            other => return Err(Error::arg(format!("unknown source {other:?}"))),
        };
        cfg.split = match (ap_columns, pp_columns) {
            (Some(ap_columns), Some(pp_columns)) => Some(VerticalSplit {
                ap_columns,
                pp_columns,
            }),
            (None, None) => None,
            _ => {
                return Err(Error::arg(
                    "ap_columns and pp_columns must be given together",
                ))
            }
        };
        cfg.privacy.rounds = cfg.params.rounds;
        cfg.privacy.depth = cfg.params.max_depth;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::arg("at least one seed is required"));
        }
        if self.methods.is_empty() {
            return Err(Error::arg("at least one method is required"));
        }
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::arg("eps_grid must hold positive finite values"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::arg("test_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    fn dataset(&self, seed: u64) -> Result<Dataset> {
        match &self.source {
            DataSource::Synthetic {
                n,
                d_ap,
                d_pp,
                balance,
                label_noise,
                seed: fixed,
            } => gen_synthetic(&SyntheticSpec {
                n: *n,
                d_ap: *d_ap,
                d_pp: *d_pp,
                balance: *balance,
                label_noise: *label_noise,
                seed: fixed.unwrap_or(seed),
            }),
            DataSource::Csv { path, label_column } => load_csv(path, label_column),
        }
    }

    fn vertical_split(&self, d: usize) -> VerticalSplit {
        match (&self.split, &self.source) {
            (Some(s), _) => s.clone(),
            (None, DataSource::Synthetic { d_ap, .. }) => VerticalSplit::leading(*d_ap, d),
            (None, DataSource::Csv { .. }) => VerticalSplit::leading(d / 2, d),
        }
    }
}

/// One (method, eps_AP, seed) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub eps_ap: f64,
    pub delta_ap: f64,
    pub eps_pp: f64,
    pub delta_pp: f64,
    pub seed: u64,
    pub auc: f64,
    pub tree_time_s: f64,
    pub trees: usize,
    pub budget: serde_json::Value,
    pub params: TrainParams,
}

/// Mean ± std over seeds for one (method, eps_AP) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub eps_ap: f64,
    pub seeds: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub tree_time_mean_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Aggregates records by (method, eps_AP); within a cell values are taken in seed order.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(Method, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        // eps values are positive, so their bit patterns sort like the values
        cells
            .entry((r.method, r.eps_ap.to_bits()))
            .or_default()
            .push(r);
    }
    cells
        .into_iter()
        .map(|((method, eps), mut rs)| {
            rs.sort_by_key(|r| r.seed);
            let aucs: Vec<f64> = rs.iter().map(|r| r.auc).collect();
            let times: Vec<f64> = rs.iter().map(|r| r.tree_time_s).collect();
            let (auc_mean, auc_std) = mean_std(&aucs);
            SummaryRow {
                method,
                eps_ap: f64::from_bits(eps),
                seeds: rs.len(),
                auc_mean,
                auc_std,
                tree_time_mean_s: mean_std(&times).0,
            }
        })
        .collect()
}

struct Prepared {
    ap_train: Dataset,
    pp_train: FeatureMatrix,
    ap_test: Dataset,
    pp_test: FeatureMatrix,
}

fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    let data = cfg.dataset(seed)?;
    let split = cfg.vertical_split(data.d());
    let (train_idx, test_idx) =
        data.stratified_split(cfg.test_fraction, rng::child_seed(seed, "holdout", &[]))?;
    let (ap_train, pp_train) = split.apply(&data.select_rows(&train_idx)?)?;
    let (ap_test, pp_test) = split.apply(&data.select_rows(&test_idx)?)?;
    Ok(Prepared {
        ap_train,
        pp_train,
        ap_test,
        pp_test,
    })
}

struct Outcome {
    auc: f64,
    tree_time_s: f64,
    trees: usize,
    budget: serde_json::Value,
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

fn per_tree(total: f64, trees: usize) -> f64 {
    if trees == 0 {
        0.0
    } else {
        total / trees as f64
    }
}

fn run_method(
    cfg: &ExperimentConfig,
    data: &Prepared,
    method: Method,
    eps_ap: f64,
    seed: u64,
) -> Result<Outcome> {
    let params = &cfg.params;
    let privacy = PrivacyConfig {
        eps_ap,
        ..cfg.privacy.clone()
    };
    let labels = data.ap_test.labels();
    match method {
        Method::Centralized => {
            let train = Dataset::new(
                data.ap_train.features().hstack(&data.pp_train)?,
                data.ap_train.labels().to_vec(),
            )?;
            let test = data.ap_test.features().hstack(&data.pp_test)?;
            let (model, t) = timed(|| train_centralized(&train, params))?;
            let scores = model.predict(&test, None)?;
            Ok(Outcome {
                auc: auc(labels, &scores)?,
                tree_time_s: per_tree(t, model.trees.len()),
                trees: model.trees.len(),
                budget: serde_json::Value::Null,
            })
        }
        Method::Masked => {
            let ((run, schedule), t) = timed(|| {
                let schedule = calibrate_for(
                    &data.pp_train,
                    params,
                    &privacy,
                    rng::child_seed(seed, "calibrate", &[]),
                )?;
                let options = MaskedOptions {
                    seed,
                    payloads: PayloadMode::Headers,
                    keep_pp_state: false,
                };
                Ok((
                    train_masked(&data.ap_train, &data.pp_train, params, &schedule, &options)?,
                    schedule,
                ))
            })?;
            let scores = run
                .model
                .predict(data.ap_test.features(), Some((&data.pp_test, &run.handles)))?;
            let cal = schedule.calibrated().expect("calibrated schedule");
            let budget = serde_json::json!({
                "status": run.status,
                "spent_ap": run.spent,
                "calibration": cal.document(),
            });
            let trees = run.model.trees.len();
            Ok(Outcome {
                auc: auc(labels, &scores)?,
                tree_time_s: per_tree(t, trees),
                trees,
                budget,
            })
        }
        Method::LdpBaseline => {
            let noise = LdpNoise::Calibrated {
                eps: eps_ap,
                delta: privacy.delta_ap,
                composition: privacy.composition,
            };
            let (run, t) =
                timed(|| train_ldp_baseline(&data.ap_train, &data.pp_train, params, &noise, seed))?;
            let scores = run
                .model
                .predict(data.ap_test.features(), Some((&data.pp_test, &run.handles)))?;
            let trees = run.model.trees.len();
            Ok(Outcome {
                auc: auc(labels, &scores)?,
                tree_time_s: per_tree(t, trees),
                trees,
                budget: serde_json::json!({ "schedule": run.schedule }),
            })
        }
    }
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<RunRecord>> {
    let data = prepare(cfg, seed)?;
    let mut records = Vec::new();
    for &method in &cfg.methods {
        // the non-private model does not depend on the budget: train once, report at every grid point
        let shared = if method == Method::Centralized {
            Some(run_method(cfg, &data, method, cfg.eps_grid[0], seed)?)
        } else {
            None
        };
        for &eps_ap in &cfg.eps_grid {
            let outcome = match &shared {
                Some(o) => Outcome {
                    auc: o.auc,
                    tree_time_s: o.tree_time_s,
                    trees: o.trees,
                    budget: o.budget.clone(),
                },
                None => run_method(cfg, &data, method, eps_ap, seed).map_err(|e| {
                    Error::arg(format!("{method} at eps_AP = {eps_ap}, seed {seed}: {e}"))
                })?,
            };
            records.push(RunRecord {
                method,
                eps_ap,
                delta_ap: cfg.privacy.delta_ap,
                eps_pp: cfg.privacy.eps_pp,
                delta_pp: cfg.privacy.delta_pp,
                seed,
                auc: outcome.auc,
                tree_time_s: outcome.tree_time_s,
                trees: outcome.trees,
                budget: outcome.budget,
                params: cfg.params,
            });
        }
    }
    Ok(records)
}

/// Runs every (method, eps_AP, seed) cell. Seeds run in parallel, each on its
/// own single-threaded pool so per-tree times are not inflated by sharing cores
/// with inner parallel loops.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let per_seed: Vec<Vec<RunRecord>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .map_err(|e| Error::arg(format!("thread pool: {e}")))?;
            pool.install(|| run_seed(cfg, seed))
        })
        .collect::<Result<_>>()?;
    let records: Vec<RunRecord> = per_seed.into_iter().flatten().collect();
    let summary = summarize(&records);
    Ok(ExperimentResults { records, summary })
}

pub fn write_jsonl<W: Write>(records: &[RunRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            records.push(serde_json::from_str(&line)?);
        }
    }
    Ok(records)
}

/// Plot-ready table: one row per (method, eps_AP).
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "eps_ap",
        "seeds",
        "auc_mean",
        "auc_std",
        "tree_time_mean_s",
    ])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.eps_ap.to_string(),
            r.seeds.to_string(),
            r.auc_mean.to_string(),
            r.auc_std.to_string(),
            r.tree_time_mean_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parser_reads_keys_and_rejects_unknown() {
        let cfg = ExperimentConfig::parse(
            "n = 300 # rows\nrounds=3\ndepth = 2\nmethods = masked, ldp-baseline\nseeds = 1,2\n",
        )
        .unwrap();
        assert_eq!(cfg.params.rounds, 3);
        assert_eq!(cfg.privacy.depth, 2);
        assert_eq!(cfg.methods, vec![Method::Masked, Method::LdpBaseline]);
        assert!(matches!(cfg.source, DataSource::Synthetic { n: 300, .. }));
        assert!(ExperimentConfig::parse("colour = red").is_err());
        assert!(ExperimentConfig::parse("seeds = ").is_err());
        assert!(ExperimentConfig::parse("source = csv").is_err());
        assert!(ExperimentConfig::parse("ap_columns = 0").is_err());
    }

    fn small() -> ExperimentConfig {
        ExperimentConfig::parse(
            "n = 200\nd_ap = 2\nd_pp = 2\nrounds = 2\ndepth = 2\ncandidates = 8\nmc_samples = 100000\neps_grid = 1, 8\nseeds = 0, 1\n",
        )
        .unwrap()
    }

    #[test]
    fn centralized_is_flat_and_summary_round_trips() {
        let res = run_experiment(&small()).unwrap();
        assert_eq!(res.records.len(), 3 * 2 * 2);
        let central: Vec<&SummaryRow> = res
            .summary
            .iter()
            .filter(|r| r.method == Method::Centralized)
            .collect();
        assert_eq!(central[0].auc_mean, central[1].auc_mean);

        let mut jsonl = Vec::new();
        write_jsonl(&res.records, &mut jsonl).unwrap();
        let back = read_jsonl(&jsonl[..]).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_summary_csv(&res.summary, &mut a).unwrap();
        write_summary_csv(&summarize(&back), &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn holdout_is_disjoint_and_seeded() {
        let cfg = small();
        let data = cfg.dataset(3).unwrap();
        let (tr, te) = data.stratified_split(0.2, 9).unwrap();
        assert!(tr.iter().all(|i| !te.contains(i)));
        assert_eq!(tr.len() + te.len(), data.n());
        assert_eq!(data.stratified_split(0.2, 9).unwrap(), (tr, te));
    }
}
