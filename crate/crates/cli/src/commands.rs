use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use covert_decode::config::RunConfig;
use covert_decode::features::{extract_features, FeatureTensor};
use covert_decode::harness::{
    correct_family, evaluate, gather_f32, paired_t_test, run_cv, run_holdout, ConfusionMatrix, ExperimentReport,
    Inputs, ModelResult,
};
use covert_decode::io::{sha256_hex, ArtifactHash, Provenance};
use covert_decode::nn::{load_model, save_model};
use covert_decode::signal::{preprocess, Condition, EegRecording, EpochSet, PreprocessReport};
use covert_decode::synth::{generate_paired, read_manifest, to_recording, write_manifest, SynthSpec};
use covert_decode::transfer::transfer_sweep;
use serde::Serialize;

use crate::{Cli, Command};

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Synth { spec, out, recordings } => synth(spec.as_deref(), &out, recordings, cli.seed),
        Command::Preprocess { input, condition, out } => cmd_preprocess(&cfg, &input, &condition, &out),
        Command::Features { input, out } => features(&cfg, &input, &out),
        Command::Train { features, models, cv, subject, out, checkpoint } => {
            train(cfg, &features, &models, cv, subject, &out, checkpoint.as_deref())
        }
        Command::Evaluate { model, features, out } => cmd_evaluate(&cfg, &model, &features, out.as_deref()),
        Command::Transfer { source, covert, budgets, seeds, out } => transfer(cfg, &source, &covert, budgets, seeds, &out),
        Command::Report { input, out_dir, features } => report(&cfg, &input, &out_dir, &features),
        Command::Validate { inputs } => validate(&inputs),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }
    for pair in &cli.set {
        cfg.set_pair(pair)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

/// Feature files store label ids only; names come from `class_names`.
fn load_features(cfg: &RunConfig, path: &Path) -> Result<FeatureTensor> {
    FeatureTensor::read(path)?
        .with_class_names(cfg.class_names())
        .with_context(|| format!("{} does not match `class_names`", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Appends `suffix` to the full file name (`a.epo` → `a.epo.report.json`).
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    name.into()
}

fn synth(spec_path: Option<&Path>, out: &Path, recordings: bool, seed: Option<u64>) -> Result<()> {
    let mut spec = SynthSpec::default();
    if let Some(path) = spec_path {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        spec.apply_kv(&text, &path.display().to_string())?;
    }
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let data = generate_paired(&spec)?;
    let manifest = write_manifest(std::slice::from_ref(&data), out)?;
    eprintln!(
        "{}: {} trials × {} samples × {} channels per condition",
        spec.subject_id,
        spec.n_trials(),
        spec.n_timesteps(),
        spec.n_channels
    );
    if recordings {
        for set in [&data.0, &data.1] {
            let rec = to_recording(set, 1.0, 50.0, 0.5, spec.seed)?;
            let path = out.join(format!("{}_{}.eegr", spec.subject_id, set.condition().as_str()));
            rec.write(&path)?;
            Provenance::write_for(&path, vec![ArtifactHash::of_file(&manifest)?])?;
            eprintln!("wrote {}", path.display());
        }
    }
    eprintln!("wrote {}", manifest.display());
    Ok(())
}

#[derive(Serialize)]
struct PreprocessOutput<'a> {
    input: ArtifactHash,
    config: BTreeMap<String, String>,
    report: &'a PreprocessReport,
}

fn cmd_preprocess(cfg: &RunConfig, input: &Path, condition: &str, out: &Path) -> Result<()> {
    let condition: Condition = condition.parse()?;
    let pcfg = cfg.preprocess_config()?;
    pcfg.validate()?;
    let rec = EegRecording::read(input)?;
    let (epochs, report) = preprocess(&rec, condition, &pcfg)?;
    epochs.write(out)?;
    let input_hash = ArtifactHash::of_file(input)?;
    Provenance::write_for(out, vec![input_hash.clone()])?;
    write_json(&sibling(out, ".report.json"), &PreprocessOutput { input: input_hash, config: cfg.to_map(), report: &report })?;
    eprintln!(
        "{}: {} epochs of {} samples ({} skipped, {} ICA components removed)",
        out.display(),
        report.epoching.n_epochs,
        report.epoching.n_timesteps,
        report.epoching.skipped.len(),
        report.excluded_components.len()
    );
    Ok(())
}

fn features(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let floor = cfg.env_floor()?;
    let epochs = EpochSet::read(input)?;
    let features = extract_features(&epochs, floor).with_context(|| format!("features of {}", input.display()))?;
    features.write(out)?;
    Provenance::write_for(out, vec![ArtifactHash::of_file(input)?])?;
    eprintln!(
        "{}: {} × {} × {}",
        out.display(),
        features.n_trials(),
        features.n_timesteps(),
        features.n_features()
    );
    Ok(())
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn train(
    mut cfg: RunConfig,
    features_path: &Path,
    models: &[String],
    cv: Option<usize>,
    subject: Option<String>,
    out: &Path,
    checkpoint: Option<&Path>,
) -> Result<()> {
    let models = if models.is_empty() { vec![cfg.get("model.kind").to_string()] } else { models.to_vec() };
    if let Some(k) = cv {
        cfg.set("train.cv_folds", &k.to_string())?;
    }
    cfg.set("model.kind", &models[0])?;
    let folds: usize = cfg.parse("train.cv_folds")?;
    let test_fraction: f64 = cfg.parse("train.test_fraction")?;
    let train_cfg = cfg.train_config()?;
    let seed = cfg.seed()?;
    let mut archs = Vec::new();
    for m in &models {
        let mut c = cfg.clone();
        c.set("model.kind", m)?;
        archs.push(c);
    }

    let features = load_features(&cfg, features_path)?;
    let subject = subject.unwrap_or_else(|| file_stem(features_path));
    let inputs = vec![ArtifactHash::of_file(features_path)?];
    let mut report = ExperimentReport::new("train", cfg.to_map(), vec![seed], inputs.clone());

    for (i, (name, c)) in models.iter().zip(&archs).enumerate() {
        let specs = c.architecture(features.n_features(), features.n_classes())?.layers();
        let cv_result = if folds >= 2 { Some(run_cv(&features, &specs, &train_cfg, folds, seed)?) } else { None };
        let (model, holdout) = run_holdout(&features, &specs, &train_cfg, test_fraction, seed)?;
        if let (0, Some(path)) = (i, checkpoint) {
            save_model(&model, path)?;
            Provenance::write_for(path, inputs.clone())?;
        }
        match &cv_result {
            Some(r) => eprintln!(
                "{subject} {name}: CV {:.2} ± {:.2} %, hold-out {:.2} %",
                100.0 * r.mean_accuracy,
                100.0 * r.stdev_accuracy,
                100.0 * holdout.accuracy
            ),
            None => eprintln!("{subject} {name}: hold-out {:.2} %", 100.0 * holdout.accuracy),
        }
        report.results.push(ModelResult {
            subject: subject.clone(),
            model: name.clone(),
            seed,
            cv: cv_result,
            holdout: Some(holdout),
        });
    }

    let mut tests = Vec::new();
    for (i, a) in report.results.iter().enumerate() {
        for b in &report.results[i + 1..] {
            if let (Some(ca), Some(cb)) = (&a.cv, &b.cv) {
                let t = paired_t_test(&ca.fold_accuracies, &cb.fold_accuracies)?;
                tests.push((a.model.clone(), b.model.clone(), t));
            }
        }
    }
    report.t_tests = correct_family("models", tests);
    report.stamp_now();
    report.write(out)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct Evaluation {
    inputs: Vec<ArtifactHash>,
    n_trials: usize,
    accuracy: f64,
    confusion: ConfusionMatrix,
}

fn cmd_evaluate(cfg: &RunConfig, model_path: &Path, features_path: &Path, out: Option<&Path>) -> Result<()> {
    let model = load_model(model_path)?;
    let features = load_features(cfg, features_path)?;
    let all: Vec<usize> = (0..features.n_trials()).collect();
    let x = gather_f32(features.data(), &all);
    let confusion = evaluate(&model, Inputs::Sequences(x.view()), features.labels())?;
    println!("accuracy {:.4}", confusion.accuracy());
    if let Some(out) = out {
        let eval = Evaluation {
            inputs: vec![ArtifactHash::of_file(model_path)?, ArtifactHash::of_file(features_path)?],
            n_trials: features.n_trials(),
            accuracy: confusion.accuracy(),
            confusion,
        };
        write_json(out, &eval)?;
    }
    Ok(())
}

fn transfer(
    mut cfg: RunConfig,
    source_path: &Path,
    covert_path: &Path,
    budgets: Option<String>,
    seeds: Option<u64>,
    out: &Path,
) -> Result<()> {
    if let Some(b) = budgets {
        cfg.set("transfer.budgets", &b)?;
    }
    if let Some(n) = seeds {
        cfg.set("transfer.seeds", &n.to_string())?;
    }
    let plan = cfg.transfer_plan()?;
    let source = load_model(source_path)?;
    let covert = load_features(&cfg, covert_path)?;
    let sweep = transfer_sweep(&source, &covert, &plan)?;
    for b in &sweep.budgets {
        eprintln!(
            "budget {:.2} ({} trials): transfer {:.2} ± {:.2} %{}",
            b.budget,
            b.n_finetune,
            100.0 * b.transfer_mean,
            100.0 * b.transfer_stdev,
            b.scratch_mean.map_or(String::new(), |m| format!(", from scratch {:.2} %", 100.0 * m))
        );
    }
    let inputs = vec![ArtifactHash::of_file(source_path)?, ArtifactHash::of_file(covert_path)?];
    let mut report = ExperimentReport::new("transfer", cfg.to_map(), plan.seeds.clone(), inputs);
    report.t_tests = sweep.t_tests.clone();
    report.transfer = Some(sweep);
    report.stamp_now();
    report.write(out)?;
    if let Some(csv) = report.budget_csv()? {
        let path = out.with_extension("csv");
        fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn envelope_csv(features: &FeatureTensor) -> String {
    let means = features.mean_envelope_by_class();
    let mut text = String::from("sample");
    for name in features.class_names() {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    for t in 0..features.n_timesteps() {
        text.push_str(&t.to_string());
        for m in &means {
            let row = m.row(t);
            text.push_str(&format!(",{:.6e}", row.sum() / row.len() as f64));
        }
        text.push('\n');
    }
    text
}

fn report(cfg: &RunConfig, input: &Path, out_dir: &Path, features: &[PathBuf]) -> Result<()> {
    let report = ExperimentReport::read(input)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut files = vec![
        ("accuracy.csv".to_string(), report.accuracy_table_csv()?),
        ("t_tests.csv".to_string(), report.t_test_csv()?),
    ];
    if let Some(csv) = report.budget_csv()? {
        files.push(("budgets.csv".to_string(), csv));
    }
    for path in features {
        let f = load_features(cfg, path)?;
        files.push((format!("envelope_{}.csv", file_stem(path)), envelope_csv(&f)));
    }
    for (name, text) in files {
        let path = out_dir.join(&name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn describe(path: &Path, bytes: &[u8]) -> Result<String> {
    let magic = bytes.get(..4).unwrap_or_default();
    Ok(match magic {
        b"EEGR" => {
            let r = EegRecording::from_bytes(bytes, path)?;
            format!("recording, {} channels × {} samples, {} markers", r.n_channels(), r.n_samples(), r.markers().len())
        }
        b"EPOC" => {
            let e = EpochSet::from_bytes(bytes, path)?;
            format!("{} epochs, {} × {} × {}", e.condition().as_str(), e.n_trials(), e.n_timesteps(), e.n_channels())
        }
        b"FTEN" => {
            let f = FeatureTensor::from_bytes(bytes, path)?;
            format!("{} features, {} × {} × {}", f.condition().as_str(), f.n_trials(), f.n_timesteps(), f.n_features())
        }
        b"RMDL" => {
            let m = covert_decode::nn::model_from_bytes(bytes, path)?;
            format!("model, {} features → {} classes, {} parameters", m.n_features(), m.n_classes(), m.parameter_count())
        }
        _ if bytes.first() == Some(&b'{') => {
            let value: serde_json::Value =
                serde_json::from_slice(bytes).with_context(|| format!("{}: invalid JSON", path.display()))?;
            if value.get("subjects").is_some() {
                let manifest = read_manifest(path)?;
                let sets = covert_decode::synth::load_manifest_epochs(path)?;
                format!("manifest, {} subjects, {} files verified", manifest.subjects.len(), sets.len())
            } else if value.get("command").is_some() {
                let r = ExperimentReport::read(path)?;
                format!("{} report, {} results", r.command, r.results.len())
            } else {
                bail!("{}: unrecognized JSON document", path.display());
            }
        }
        _ => bail!("{}: unrecognized file format", path.display()),
    })
}

/// Checks the sidecar's own hash and every listed input found next to it.
fn check_provenance(path: &Path, bytes: &[u8]) -> Result<Option<String>> {
    if !Provenance::sidecar_path(path).exists() {
        return Ok(None);
    }
    let prov = Provenance::read_for(path)?;
    if prov.artifact.sha256 != sha256_hex(bytes) {
        bail!("{}: content differs from its provenance record", path.display());
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut checked = 0;
    for input in &prov.inputs {
        let candidate = dir.join(&input.name);
        if candidate.exists() {
            if ArtifactHash::of_file(&candidate)?.sha256 != input.sha256 {
                bail!("{}: input {} changed since it was used", path.display(), input.name);
            }
            checked += 1;
        }
    }
    Ok(Some(format!("provenance ok ({checked}/{} inputs present and matching)", prov.inputs.len())))
}

fn validate(inputs: &[PathBuf]) -> Result<()> {
    let mut failures = 0;
    for path in inputs {
        let result = fs::read(path)
            .with_context(|| format!("reading {}", path.display()))
            .and_then(|bytes| Ok((describe(path, &bytes)?, check_provenance(path, &bytes)?)));
        match result {
            Ok((summary, prov)) => {
                println!("ok {}: {summary}{}", path.display(), prov.map_or(String::new(), |p| format!("; {p}")));
            }
            Err(e) => {
                println!("FAIL {}: {e:#}", path.display());
                failures += 1;
            }
        }
    }
    if failures > 0 {
        bail!("{failures} of {} artifacts failed validation", inputs.len());
    }
    Ok(())
}
