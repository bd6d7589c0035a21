use std::path::{Path, PathBuf};

use immsbm::analysis::{cluster_report, interaction_report, write_cluster_report};
use immsbm::baselines::{
    mmsbm_select_clusters, mmsbm_train, naive_fit, upper_limit, InputOutputPairs,
};
use immsbm::corpus::{
    expand_messages, expand_windows, load_messages, load_sequences, split, VocabPolicy,
};
use immsbm::dataset::{load_triplets, save_triplets};
use immsbm::em::{default_candidates, select_clusters, AicParams, Selection};
use immsbm::eval::{evaluate, EvalOptions, EvalReport, PatkDenominator};
use immsbm::modelfile::{load_model, save_model, AnyModel};
use immsbm::synthetic::{
    generate, make_noninteracting, GeneratorSpec, NonInteracting, PairDistribution,
};
use immsbm::{train, PairPredictor, TrainConfig, TripletDataset, Vocabulary};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::manifest::{beside, write_json, Recorder};
use crate::{CliResult, Context, Failure};

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot configure thread pool: {e}")))?;
    }
    match cli.command {
        Command::Expand(a) => expand(a),
        Command::Split(a) => split_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Select(a) => select_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Analyze(a) => analyze(a),
        Command::Generate(a) => generate_cmd(a),
    }
}

fn load_data(path: &Path, rec: &mut Recorder) -> CliResult<TripletDataset> {
    let (data, stats) = load_triplets(path).at(path)?;
    if stats.symmetrized > 0 {
        warn!(
            "{}: {} triplets lacked a matching mirror and were symmetrized",
            path.display(),
            stats.symmetrized
        );
    }
    info!(
        "{}: {} unique triplets, total weight {}",
        path.display(),
        data.n_unique(),
        data.total_weight()
    );
    rec.input(path);
    Ok(data)
}

/// Re-expresses `data` over `target`, dropping triplets with unknown labels.
fn align(
    data: TripletDataset,
    target: &Vocabulary,
    path: &Path,
) -> CliResult<(TripletDataset, u64)> {
    if data.vocab() == target {
        return Ok((data, 0));
    }
    let (aligned, stats) = data.remap_to(target).at(path)?;
    let dropped = stats.dropped_unknown_input + stats.dropped_unknown_output;
    if dropped > 0 {
        warn!(
            "{}: dropped weight {} with labels unknown to the model",
            path.display(),
            dropped
        );
    }
    Ok((aligned, dropped))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(immsbm::Error::from)
        .at(dir)
}

fn write_bytes(path: &Path, bytes: &[u8], rec: &mut Recorder) -> CliResult<()> {
    immsbm::io::write_atomic(path, bytes).at(path)?;
    rec.output(path);
    Ok(())
}

fn expand(a: ExpandArgs) -> CliResult<()> {
    let mut rec = Recorder::start("expand");
    let records = match a.window {
        Some(window) => {
            let sequences = load_sequences(&a.messages).at(&a.messages)?;
            let mut records = Vec::new();
            for s in &sequences {
                records.extend(expand_windows(s, window).at(&a.messages)?);
            }
            records
        }
        None => load_messages(&a.messages).at(&a.messages)?,
    };
    rec.input(&a.messages);
    let data = expand_messages(&records, VocabPolicy::Build, a.self_pairs.into()).at(&a.messages)?;
    save_triplets(&data, &a.out).at(&a.out)?;
    rec.output(&a.out);
    println!(
        "{} records -> {} unique triplets (weight {})",
        records.len(),
        data.n_unique(),
        data.total_weight()
    );
    let config = json!({
        "window": a.window,
        "self_pairs": format!("{:?}", a.self_pairs).to_lowercase(),
    });
    rec.finish(&beside(&a.out), config, None)
}

fn split_cmd(a: SplitArgs) -> CliResult<()> {
    let mut rec = Recorder::start("split");
    let records = load_messages(&a.messages).at(&a.messages)?;
    rec.input(&a.messages);
    let (train_set, test_set) =
        split(&records, a.test_fraction, a.seed, a.self_pairs.into()).at(&a.messages)?;
    create_dir(&a.out_dir)?;
    for (name, data) in [("train.tsv", &train_set), ("test.tsv", &test_set)] {
        let path = a.out_dir.join(name);
        save_triplets(data, &path).at(&path)?;
        rec.output(&path);
    }
    println!(
        "train: {} unique triplets, test: {} unique triplets",
        train_set.n_unique(),
        test_set.n_unique()
    );
    let config = json!({
        "test_fraction": a.test_fraction,
        "self_pairs": format!("{:?}", a.self_pairs).to_lowercase(),
    });
    rec.finish(&a.out_dir.join("manifest.json"), config, Some(a.seed))
}

fn fit_config(
    fit: &FitArgs,
    clusters: Option<usize>,
    aic: Option<AicChoice>,
) -> CliResult<TrainConfig> {
    let mut cfg = match &fit.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(immsbm::Error::from)
                .at(path)?;
            toml::from_str::<TrainConfig>(&text)
                .map_err(|e| Failure::usage(format!("{}: {}", path.display(), e.message())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = clusters {
        cfg.clusters = v;
    }
    if let Some(v) = fit.restarts {
        cfg.restarts = v;
    }
    if let Some(v) = fit.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = fit.rel_tol {
        cfg.rel_tol = v;
    }
    if let Some(v) = fit.seed {
        cfg.seed = v;
    }
    if let Some(v) = aic {
        cfg.aic_params = match v {
            AicChoice::Plain => AicParams::Plain,
            AicChoice::Symmetric => AicParams::Symmetric,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn model_name(m: ModelChoice) -> &'static str {
    match m {
        ModelChoice::Immsbm => "immsbm",
        ModelChoice::Mmsbm => "mmsbm",
    }
}

fn train_cmd(a: TrainArgs) -> CliResult<()> {
    let mut rec = Recorder::start("train");
    let cfg = fit_config(&a.fit, a.clusters, None)?;
    let data = load_data(&a.train, &mut rec)?;
    let (model, trace): (AnyModel, _) = match a.fit.model {
        ModelChoice::Immsbm => {
            let (m, t) = train(&data, &cfg).at(&a.train)?;
            (m.into(), t)
        }
        ModelChoice::Mmsbm => {
            let (m, t) = mmsbm_train(&InputOutputPairs::from_triplets(&data), &cfg).at(&a.train)?;
            (m.into(), t)
        }
    };
    save_model(&a.out, &model).at(&a.out)?;
    rec.output(&a.out);
    if let Some(path) = &a.trace {
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).at(path)?;
        write_bytes(path, &buf, &mut rec)?;
    }
    let chosen = trace.chosen();
    println!(
        "model {} T={} loglik {} (restart {} of {}, {} iterations, converged {})",
        model_name(a.fit.model),
        cfg.clusters,
        chosen.final_loglik(),
        chosen.restart,
        trace.restarts.len(),
        chosen.iterations,
        chosen.converged
    );
    let degenerate: usize = trace.restarts.iter().map(|r| r.degenerate).sum();
    if degenerate > 0 {
        warn!("{degenerate} degenerate distribution updates were replaced by uniform ones");
    }
    let config = json!({ "model": model_name(a.fit.model), "train": cfg });
    rec.finish(&beside(&a.out), config, Some(cfg.seed))
}

fn select_cmd(a: SelectArgs) -> CliResult<()> {
    let mut rec = Recorder::start("select");
    let cfg = fit_config(&a.fit, None, a.aic_params)?;
    let candidates = a.candidates.clone().unwrap_or_else(default_candidates);
    if candidates.is_empty() || candidates.contains(&0) {
        return Err(Failure::usage("candidate cluster counts must be positive"));
    }
    let data = load_data(&a.train, &mut rec)?;
    let selection: Selection = match a.fit.model {
        ModelChoice::Immsbm => select_clusters(&data, &candidates, &cfg).at(&a.train)?,
        ModelChoice::Mmsbm => {
            mmsbm_select_clusters(&InputOutputPairs::from_triplets(&data), &candidates, &cfg)
                .at(&a.train)?
        }
    };
    let mut buf = Vec::new();
    selection.write_csv(&mut buf).at(&a.out)?;
    write_bytes(&a.out, &buf, &mut rec)?;
    println!("best T={}", selection.best_clusters);
    let config = json!({
        "model": model_name(a.fit.model),
        "candidates": candidates,
        "train": cfg,
        "best_clusters": selection.best_clusters,
    });
    rec.finish(&beside(&a.out), config, Some(cfg.seed))
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    predictor: String,
    dropped_test_weight: u64,
    #[serde(flatten)]
    report: &'a EvalReport,
}

fn eval_cmd(a: EvalArgs) -> CliResult<()> {
    let mut rec = Recorder::start("eval");
    let test_raw = load_data(&a.test, &mut rec)?;
    let options = EvalOptions {
        k: a.k,
        patk_denominator: match a.patk_denominator {
            PatkChoice::K => PatkDenominator::K,
            PatkChoice::Min => PatkDenominator::Min,
        },
        calibration_bins: a.bins,
    };
    if a.k == 0 {
        return Err(Failure::usage("--k must be at least 1"));
    }
    let model = match &a.model {
        Some(path) => {
            rec.input(path);
            Some(load_model(path).at(path)?)
        }
        None => None,
    };
    let target = match &model {
        Some(m) => m.vocab().clone(),
        None => test_raw.vocab().clone(),
    };
    let (test, dropped) = align(test_raw, &target, &a.test)?;
    let train_set = match &a.train {
        Some(path) => Some(align(load_data(path, &mut rec)?, &target, path)?.0),
        None => None,
    };

    let naive_storage;
    let upper_storage;
    let (predictor, name): (&dyn PairPredictor, String) = match (&model, a.baseline) {
        (Some(m), _) => (m.predictor(), format!("model:{}", m.kind().as_str())),
        (None, Some(Baseline::Upper)) => {
            upper_storage = upper_limit(&test);
            (&upper_storage, "baseline:upper".into())
        }
        (None, Some(Baseline::Naive)) => {
            let source = match a.naive_source {
                NaiveSource::Train => train_set.as_ref().ok_or_else(|| {
                    Failure::usage("the naive baseline needs --train (or --naive-source test)")
                })?,
                NaiveSource::Test => &test,
            };
            naive_storage = naive_fit(source)?;
            let src = match a.naive_source {
                NaiveSource::Train => "train",
                NaiveSource::Test => "test",
            };
            (&naive_storage, format!("baseline:naive({src})"))
        }
        (None, None) => return Err(Failure::usage("either --model or --baseline is required")),
    };

    let report = evaluate(predictor, &test, train_set.as_ref(), &options).at(&a.test)?;
    let output = EvalOutput {
        predictor: name.clone(),
        dropped_test_weight: dropped,
        report: &report,
    };
    write_json(&a.out, &output)?;
    rec.output(&a.out);
    if let Some(path) = &a.curve {
        let mut buf = Vec::new();
        report.write_curve_csv(&mut buf).at(path)?;
        write_bytes(path, &buf, &mut rec)?;
    }
    println!(
        "{name}: max-F1 {:.4} AUC {:.4} P@{} {:.4} calibration gap {:.4} loglik {:.4}",
        report.max_f1,
        report.auc_roc,
        report.k,
        report.precision_at_k,
        report.calibration_mean_abs_gap,
        report.log_likelihood
    );
    let config = json!({ "predictor": name, "options": options });
    rec.finish(&beside(&a.out), config, None)
}

fn analyze(a: AnalyzeArgs) -> CliResult<()> {
    let mut rec = Recorder::start("analyze");
    rec.input(&a.model);
    let model = match load_model(&a.model).at(&a.model)? {
        AnyModel::Immsbm(m) => m,
        AnyModel::Mmsbm(_) => {
            return Err(Failure {
                category: "data",
                message: format!("{}: analysis needs an interacting model", a.model.display()),
            })
        }
    };
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Failure::usage("--threshold must lie in [0, 1]"));
    }
    let (data, _) = align(load_data(&a.data, &mut rec)?, model.vocab(), &a.data)?;
    let report = interaction_report(&model, &data).at(&a.data)?;
    create_dir(&a.out_dir)?;

    let path = a.out_dir.join("interaction.json");
    write_json(&path, &report)?;
    rec.output(&path);
    let path = a.out_dir.join("v_matrix.csv");
    let mut buf = Vec::new();
    report.write_v_matrix_csv(&mut buf).at(&path)?;
    write_bytes(&path, &buf, &mut rec)?;
    let path = a.out_dir.join("clusters.txt");
    let mut buf = Vec::new();
    write_cluster_report(
        &cluster_report(&model, a.threshold, a.top_n),
        a.threshold,
        &mut buf,
    )
    .at(&path)?;
    write_bytes(&path, &buf, &mut rec)?;

    println!(
        "V-bar {:.4} (interaction factor {:.4}), mean membership entropy {:.4}",
        report.v_bar, report.interaction_factor, report.mean_entropy
    );
    let config = json!({ "threshold": a.threshold, "top_n": a.top_n });
    rec.finish(&a.out_dir.join("manifest.json"), config, None)
}

fn generator_spec(a: &GenerateArgs, rec: &mut Recorder) -> CliResult<GeneratorSpec> {
    let mut spec = match &a.spec {
        Some(path) => {
            rec.input(path);
            let text = std::fs::read_to_string(path)
                .map_err(immsbm::Error::from)
                .at(path)?;
            serde_json::from_str::<GeneratorSpec>(&text)
                .map_err(immsbm::Error::from)
                .at(path)?
        }
        None => {
            let need = |v: Option<usize>, flag: &str| {
                v.ok_or_else(|| Failure::usage(format!("{flag} is required without --spec")))
            };
            GeneratorSpec::new(
                need(a.inputs, "--inputs")?,
                need(a.outputs, "--outputs")?,
                need(a.clusters, "--clusters")?,
                a.samples
                    .ok_or_else(|| Failure::usage("--samples is required without --spec"))?,
                0,
            )
        }
    };
    let reshaped = a.inputs.is_some() || a.outputs.is_some() || a.clusters.is_some();
    if a.spec.is_some() && reshaped && (spec.theta.is_some() || spec.p.is_some()) {
        return Err(Failure::usage(
            "cannot change dimensions of a spec that fixes theta or p",
        ));
    }
    spec.n_inputs = a.inputs.unwrap_or(spec.n_inputs);
    spec.n_outputs = a.outputs.unwrap_or(spec.n_outputs);
    spec.clusters = a.clusters.unwrap_or(spec.clusters);
    spec.samples = a.samples.unwrap_or(spec.samples);
    spec.seed = a.seed.unwrap_or(spec.seed);
    if let Some(exponent) = a.power_law {
        spec.pairs = PairDistribution::PowerLaw { exponent };
    }
    if let Some(variant) = a.noninteracting {
        let variant = match variant {
            NonInteractingChoice::Averaged => NonInteracting::Averaged,
            NonInteractingChoice::Constant => NonInteracting::Constant,
        };
        spec = make_noninteracting(&spec, variant)?;
    }
    Ok(spec)
}

fn generate_cmd(a: GenerateArgs) -> CliResult<()> {
    let mut rec = Recorder::start("generate");
    let spec = generator_spec(&a, &mut rec)?;
    let (data, truth) = generate(&spec)?;
    create_dir(&a.out_dir)?;
    let path: PathBuf = a.out_dir.join("triplets.tsv");
    save_triplets(&data, &path).at(&path)?;
    rec.output(&path);
    let path = a.out_dir.join("truth.json");
    save_model(&path, &AnyModel::Immsbm(truth)).at(&path)?;
    rec.output(&path);
    let path = a.out_dir.join("spec.json");
    write_json(&path, &spec)?;
    rec.output(&path);
    println!(
        "{} samples -> {} unique triplets",
        spec.samples,
        data.n_unique()
    );
    let config = serde_json::to_value(&spec).map_err(|e| Failure::usage(e.to_string()))?;
    rec.finish(&a.out_dir.join("manifest.json"), config, Some(spec.seed))
}
