use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use maskboost::attack::{
    attribute_trials, label_trials, AttackReport, AttributeTrialConfig, LabelTrialConfig,
};
use maskboost::experiment::{
    run_experiment, write_jsonl, write_summary_csv, DataSource, ExperimentConfig, Method,
};
use maskboost::privacy::{
    calibrate, calibrate_c, calibrate_sigma2, mu_logistic, utility_bound, PrivacyConfig,
    QuadFormSampler,
};
use maskboost::protocol::{
    calibrate_for, replay, train_ldp_baseline, train_masked, LdpNoise, MaskedOptions,
    NoiseSchedule, PayloadMode, PpPrivateState, Transcript,
};
use maskboost::{
    auc, gen_synthetic, load_csv, train_centralized, write_csv, Error, Result, SyntheticSpec,
    VerticalSplit,
};
use serde_json::{json, Value};

use crate::{AttackAp, AttackPp, Bound, Calibrate, Cli, Command, GenData, Replay, Train};

pub fn dispatch(cli: &Cli) -> Result<()> {
    let (doc, text) = match &cli.command {
        Command::GenData(a) => gen_data(cli, a)?,
        Command::Train(a) => train(cli, a)?,
        Command::Calibrate(a) => calibrate_cmd(cli, a)?,
        Command::Bound(a) => bound(a)?,
        Command::AttackAp(a) => attack_ap(cli, a)?,
        Command::AttackPp(a) => attack_pp(cli, a)?,
        Command::Run => run(cli)?,
        Command::Replay(a) => replay_cmd(a)?,
    };
    if cli.json {
        println!("{}", serde_json::to_string(&doc)?);
    } else {
        print!("{text}");
    }
    Ok(())
}

type Output = (Value, String);

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    match &cli.config {
        Some(path) => ExperimentConfig::parse(&std::fs::read_to_string(path)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn gen_data(cli: &Cli, a: &GenData) -> Result<Output> {
    let spec = SyntheticSpec {
        n: a.n,
        d_ap: a.d_ap,
        d_pp: a.d_pp,
        balance: a.balance,
        label_noise: a.label_noise,
        seed: cli.seed,
    };
    let data = gen_synthetic(&spec)?;
    match &cli.out {
        Some(path) => write_csv(&data, create(path)?)?,
        // without --out the CSV itself is the output
        None if !cli.json => {
            write_csv(&data, std::io::stdout().lock())?;
            return Ok((Value::Null, String::new()));
        }
        None => {}
    }
    let doc = json!({ "n": data.n(), "d_ap": a.d_ap, "d_pp": a.d_pp, "positive_rate": data.positive_rate(), "seed": cli.seed });
    let text = format!(
        "wrote {} rows, {} features, positive rate {:.4}\n",
        data.n(),
        data.d(),
        data.positive_rate()
    );
    Ok((doc, text))
}

fn train(cli: &Cli, a: &Train) -> Result<Output> {
    let cfg = config(cli)?;
    let data = match &a.data {
        Some(path) => load_csv(path, &a.label_column)?,
        None => match &cfg.source {
            DataSource::Synthetic {
                n,
                d_ap,
                d_pp,
                balance,
                label_noise,
                seed,
            } => gen_synthetic(&SyntheticSpec {
                n: *n,
                d_ap: *d_ap,
                d_pp: *d_pp,
                balance: *balance,
                label_noise: *label_noise,
                seed: seed.unwrap_or(cli.seed),
            })?,
            DataSource::Csv { path, label_column } => load_csv(path, label_column)?,
        },
    };
    let split = match (a.d_ap, &cfg.split, &cfg.source) {
        (Some(d_ap), _, _) => VerticalSplit::leading(d_ap, data.d()),
        (None, Some(s), _) => s.clone(),
        (None, None, DataSource::Synthetic { d_ap, .. }) if a.data.is_none() => {
            VerticalSplit::leading(*d_ap, data.d())
        }
        _ => VerticalSplit::leading(data.d() / 2, data.d()),
    };
    let (ap, pp) = split.apply(&data)?;
    let params = cfg.params;
    let privacy = PrivacyConfig {
        eps_ap: a.eps_ap.unwrap_or(cfg.privacy.eps_ap),
        ..cfg.privacy.clone()
    };
    let method: Method = a.method.parse()?;

    let mut doc =
        json!({ "method": method.to_string(), "n": data.n(), "seed": cli.seed, "params": params });
    let (model_json, scores, trees) = match method {
        Method::Centralized => {
            let merged = split.merged(&data)?;
            let model = train_centralized(&merged, &params)?;
            (
                model.to_json()?,
                model.predict(merged.features(), None)?,
                model.trees.len(),
            )
        }
        Method::Masked => {
            let schedule = if a.lossless {
                NoiseSchedule::lossless()
            } else {
                calibrate_for(&pp, &params, &privacy, cli.seed)?
            };
            let payloads = if a.full_payloads {
                PayloadMode::Full
            } else {
                PayloadMode::Digest
            };
            let options = MaskedOptions {
                seed: cli.seed,
                payloads,
                keep_pp_state: a.pp_state.is_some(),
            };
            let run = train_masked(&ap, &pp, &params, &schedule, &options)?;
            if let Some(path) = &a.transcript {
                run.transcript.write_ndjson(create(path)?)?;
            }
            if let Some(path) = &a.pp_state {
                write_json(path, &run.pp_state)?;
            }
            doc["status"] = json!(run.status);
            doc["spent_ap"] = json!(run.spent);
            doc["messages"] = json!(run.transcript.len());
            doc["transcript_digest"] = json!(run.transcript.digest());
            if let Some(p) = schedule.calibrated() {
                doc["calibration"] = p.document();
            }
            let scores = run
                .model
                .predict(ap.features(), Some((&pp, &run.handles)))?;
            (run.model.to_json()?, scores, run.model.trees.len())
        }
        Method::LdpBaseline => {
            let noise = LdpNoise::Calibrated {
                eps: privacy.eps_ap,
                delta: privacy.delta_ap,
                composition: privacy.composition,
            };
            let run = train_ldp_baseline(&ap, &pp, &params, &noise, cli.seed)?;
            doc["schedule"] = json!(run.schedule);
            let scores = run
                .model
                .predict(ap.features(), Some((&pp, &run.handles)))?;
            (run.model.to_json()?, scores, run.model.trees.len())
        }
    };
    if let Some(path) = &cli.out {
        std::fs::write(path, model_json)?;
    }
    let train_auc = auc(data.labels(), &scores)?;
    doc["trees"] = json!(trees);
    doc["train_auc"] = json!(train_auc);
    let text = format!("{method}: {trees} trees, train AUC {train_auc:.4}\n");
    Ok((doc, text))
}

fn calibrate_cmd(cli: &Cli, a: &Calibrate) -> Result<Output> {
    let cfg = config(cli)?;
    let base = cfg.privacy;
    let privacy = PrivacyConfig {
        eps_ap: a.eps_ap.unwrap_or(base.eps_ap),
        delta_ap: a.delta_ap.unwrap_or(base.delta_ap),
        eps_pp: a.eps_pp.unwrap_or(base.eps_pp),
        delta_pp: a.delta_pp.unwrap_or(base.delta_pp),
        w: a.w.unwrap_or(base.w),
        ..base
    };
    let params = calibrate(&privacy, a.n, a.candidates, cli.seed)?;
    let doc = params.document();
    if let Some(path) = &cli.out {
        write_json(path, &doc)?;
    }
    let ap = params.schedule.ap.per_query;
    let text = format!(
        "sigma1 = {}\nsigma2 = {}\nnoise ratio = {}\nper-query AP budget = ({}, {}) over k = {}\nper-query PP budget = ({}, {})\n",
        params.sigma1,
        params.sigma2,
        params.noise_ratio,
        ap.eps,
        ap.delta,
        params.schedule.ap.k,
        params.schedule.pp.per_query.eps,
        params.schedule.pp.per_query.delta,
    );
    Ok((doc, text))
}

fn bound(a: &Bound) -> Result<Output> {
    let b = utility_bound(a.alpha, a.kappa, a.gl, a.hl, a.gr, a.hr, a.lambda)?;
    let text = format!(
        "U = {} (left {}, right {}, clipped {})\n",
        b.value, b.left, b.right, b.clipped
    );
    Ok((serde_json::to_value(b)?, text))
}

fn report_text(r: &AttackReport) -> String {
    format!(
        "{:?}: mean {:.4} ± {:.4} over {} trials (chance {:.4}){}\n",
        r.kind,
        r.mean,
        r.std_error,
        r.trials,
        r.chance,
        if r.unreliable { ", unreliable" } else { "" }
    )
}

fn emit_report(cli: &Cli, r: &AttackReport) -> Result<Output> {
    if let Some(path) = &cli.out {
        write_json(path, r)?;
    }
    Ok((serde_json::to_value(r)?, report_text(r)))
}

fn pp_sigma2(
    cli: &Cli,
    eps_pp: f64,
    delta_pp: f64,
    w: usize,
    n: usize,
    sigma1: f64,
) -> Result<f64> {
    let samples = config(cli)?.privacy.mc_samples;
    let sampler = QuadFormSampler::new(samples, cli.seed);
    Ok(calibrate_sigma2(eps_pp, delta_pp, w, n, sigma1, &sampler)?.sigma2)
}

fn attack_ap(cli: &Cli, a: &AttackAp) -> Result<Output> {
    let sigma2 = match a.sigma2 {
        Some(s) => s,
        None => pp_sigma2(cli, a.eps_pp, a.delta_pp, a.w, a.n, a.sigma1)?,
    };
    let c = match a.c {
        Some(c) => c,
        None => calibrate_c(
            a.eps_ap,
            a.delta_ap,
            a.n_active,
            a.n - a.n_active.min(a.n),
            mu_logistic(),
            a.sigma1,
            sigma2,
        )?,
    };
    let cfg = LabelTrialConfig {
        n: a.n,
        n_active: a.n_active,
        w: a.w,
        candidates: a.candidates,
        sigma1: a.sigma1,
        sigma2,
        c,
        trials: a.trials,
        seed: cli.seed,
        eps_ap: a.c.is_none().then_some(a.eps_ap),
        delta_ap: a.c.is_none().then_some(a.delta_ap),
    };
    emit_report(cli, &label_trials(&cfg)?)
}

fn attack_pp(cli: &Cli, a: &AttackPp) -> Result<Output> {
    let sigma2 = match a.sigma2 {
        Some(s) => s,
        None => pp_sigma2(cli, a.eps_pp, a.delta_pp, a.w, a.n, a.sigma1)?,
    };
    let cfg = AttributeTrialConfig {
        n: a.n,
        n_active: a.n_active,
        w: a.w,
        sigma1: a.sigma1,
        sigma2,
        trials: a.trials,
        seed: cli.seed,
        eps_pp: a.sigma2.is_none().then_some(a.eps_pp),
        delta_pp: a.sigma2.is_none().then_some(a.delta_pp),
    };
    emit_report(cli, &attribute_trials(&cfg)?)
}

fn run(cli: &Cli) -> Result<Output> {
    let cfg = config(cli)?;
    let results = run_experiment(&cfg)?;
    if let Some(path) = cli.out.as_ref().or(cfg.out.as_ref()) {
        write_jsonl(&results.records, create(path)?)?;
        write_summary_csv(
            &results.summary,
            create(&path.with_extension("summary.csv"))?,
        )?;
    }
    let mut text = String::from("method        eps_ap   auc_mean  auc_std   tree_time_s\n");
    for r in &results.summary {
        text.push_str(&format!(
            "{:<13} {:<8} {:<9.4} {:<9.4} {:.4}\n",
            r.method.to_string(),
            r.eps_ap,
            r.auc_mean,
            r.auc_std,
            r.tree_time_mean_s
        ));
    }
    Ok((
        json!({ "records": results.records.len(), "summary": results.summary }),
        text,
    ))
}

fn replay_cmd(a: &Replay) -> Result<Output> {
    let transcript = Transcript::read_ndjson(BufReader::new(File::open(&a.transcript)?))?;
    let state: PpPrivateState = serde_json::from_reader(BufReader::new(File::open(&a.pp_state)?))?;
    let report = replay(&transcript, &state)?;
    if report.verified != report.exchanges {
        return Err(Error::Transcript(format!(
            "verified {} of {} exchanges",
            report.verified, report.exchanges
        )));
    }
    let text = format!(
        "verified {} of {} exchanges\n",
        report.verified, report.exchanges
    );
    Ok((serde_json::to_value(report)?, text))
}
