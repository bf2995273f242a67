use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::ops::ControlFlow;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use gdd::awig::build_awig;
use gdd::checkpoint;
use gdd::conllu::read_conllu;
use gdd::data::{load_dataset, synthetic_dataset};
use gdd::embeddings::PrecomputedVectors;
use gdd::model::{Model, ModelConfig};
use gdd::proposition::{verify_trials, StationarityOptions};
use gdd::train::{evaluate, train as run_training};
use gdd::Span;
use serde_json::json;

use crate::config::ConfigArgs;

/// Bad input (missing or malformed files, invalid settings) maps to 2,
/// anything else to 1.
pub fn exit_code_for(err: &anyhow::Error) -> ExitCode {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<gdd::Error>() {
            return match e {
                gdd::Error::Io(_)
                | gdd::Error::Json(_)
                | gdd::Error::Parse { .. }
                | gdd::Error::InvalidSpan { .. }
                | gdd::Error::InvalidArgument(_)
                | gdd::Error::Config(_)
                | gdd::Error::Checkpoint(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            };
        }
        if cause.is::<io::Error>() || cause.is::<serde_json::Error>() || cause.is::<InputError>() {
            return ExitCode::from(2);
        }
    }
    ExitCode::from(1)
}

#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

/// Writes one line to stdout, failing instead of panicking when the reader
/// has gone away.
fn emit(line: impl std::fmt::Display) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "{line}")?;
    out.flush()?;
    Ok(())
}

pub fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.downcast_ref::<io::Error>()
            .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn load_vectors(path: Option<&Path>) -> Result<Option<PrecomputedVectors>> {
    path.map(|p| {
        PrecomputedVectors::read(open(p)?)
            .with_context(|| format!("reading vectors {}", p.display()))
    })
    .transpose()
}

fn load_examples(path: &Path) -> Result<Vec<gdd::data::Example>> {
    load_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<Model> {
    checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

pub fn train(
    train_path: &Path,
    dev_path: Option<&Path>,
    out: &Path,
    vectors_path: Option<&Path>,
    args: &ConfigArgs,
) -> Result<ExitCode> {
    let cfg = args.resolve(ModelConfig::default())?;
    let train_examples = load_examples(train_path)?;
    if train_examples.is_empty() {
        return Err(input_error(format!(
            "{} holds no examples",
            train_path.display()
        )));
    }
    let dev_examples = dev_path.map(load_examples).transpose()?;
    let vectors = load_vectors(vectors_path)?;

    let mut model = Model::from_training_data(cfg, &train_examples)?;
    let train_set = model.prepare_all(&train_examples, vectors.as_ref())?;
    let dev_set = dev_examples
        .map(|d| model.prepare_all(&d, vectors.as_ref()))
        .transpose()?;

    let stdout = io::stdout();
    let mut write_err = None;
    let summary = run_training(&mut model, &train_set, dev_set.as_deref(), |log| {
        let mut lock = stdout.lock();
        match writeln!(lock, "{}", log.to_json_line()).and_then(|_| lock.flush()) {
            Ok(()) => ControlFlow::Continue(()),
            Err(e) => {
                write_err = Some(e);
                ControlFlow::Break(())
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).context("writing training log");
    }
    checkpoint::save(&model, out)
        .with_context(|| format!("writing checkpoint {}", out.display()))?;
    eprintln!(
        "trained {} epochs{} on {} examples; checkpoint written to {}",
        summary.logs.len(),
        if summary.stopped_early {
            " (stopped early)"
        } else {
            ""
        },
        train_set.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn eval(checkpoint_path: &Path, data: &Path, vectors_path: Option<&Path>) -> Result<ExitCode> {
    let model = load_checkpoint(checkpoint_path)?;
    let examples = load_examples(data)?;
    if examples.is_empty() {
        return Err(input_error(format!("{} holds no examples", data.display())));
    }
    let vectors = load_vectors(vectors_path)?;
    let insts = model.prepare_all(&examples, vectors.as_ref())?;
    let metrics = evaluate(&model, &insts)?;
    emit(metrics.to_json())?;
    Ok(ExitCode::SUCCESS)
}

fn read_spans(path: &Path) -> Result<Vec<Vec<(usize, usize)>>> {
    let mut out = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let spans: Vec<(usize, usize)> = serde_json::from_str(&line).with_context(|| {
            format!(
                "{} line {}: expected [[start, end], ...]",
                path.display(),
                idx + 1
            )
        })?;
        out.push(spans);
    }
    Ok(out)
}

pub fn build_graph(
    conllu: &Path,
    spans_path: &Path,
    kappa_max: usize,
    drop_punct: bool,
) -> Result<ExitCode> {
    let trees =
        read_conllu(open(conllu)?).with_context(|| format!("parsing {}", conllu.display()))?;
    let spans = read_spans(spans_path)?;
    if trees.len() != spans.len() {
        return Err(input_error(format!(
            "{} sentences but {} span lines",
            trees.len(),
            spans.len()
        )));
    }
    let opts = gdd::awig::AwigOptions {
        kappa_max,
        drop_punct,
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (i, (tree, sentence_spans)) in trees.iter().zip(&spans).enumerate() {
        for &(start, end) in sentence_spans {
            let span =
                Span::new(start, end, tree.len()).with_context(|| format!("sentence {i}"))?;
            let graph = build_awig(tree, span, &opts).with_context(|| format!("sentence {i}"))?;
            writeln!(
                out,
                "{}",
                json!({"sentence": i, "span": [start, end], "graph": graph.to_json(tree)})
            )?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn inspect(
    checkpoint_path: &Path,
    data: &Path,
    index: usize,
    vectors_path: Option<&Path>,
) -> Result<ExitCode> {
    let model = load_checkpoint(checkpoint_path)?;
    let examples = load_examples(data)?;
    let Some(example) = examples.get(index) else {
        return Err(input_error(format!(
            "index {index} out of range for {} examples",
            examples.len()
        )));
    };
    let vectors = load_vectors(vectors_path)?;
    let inst = model.prepare(example, vectors.as_ref())?;
    emit(model.trace(&inst)?)?;
    Ok(ExitCode::SUCCESS)
}

pub fn verify_proposition(
    seed: u64,
    n: usize,
    d: usize,
    trials: usize,
    draws: usize,
    tolerance: f64,
    eps: f64,
) -> Result<ExitCode> {
    if n < 2 {
        bail!(input_error(format!("--n must be at least 2, got {n}")));
    }
    let opts = StationarityOptions {
        eps,
        draws,
        tolerance,
        seed,
    };
    let results = verify_trials(seed, n, d, trials, &opts)?;
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for (i, t) in results.iter().enumerate() {
        let r = &t.report;
        passed += usize::from(r.is_stationary);
        worst = worst.max(r.ratio);
        emit(json!({
            "trial": i,
            "seed": t.seed,
            "grad_norm_at_mean": r.grad_norm_at_mean,
            "median_reference_norm": r.median_reference_norm,
            "ratio": r.ratio,
            "pass": r.is_stationary,
        }))?;
    }
    let all = passed == results.len();
    emit(json!({
        "trials": results.len(),
        "passed": passed,
        "max_ratio": worst,
        "tolerance": tolerance,
        "all_pass": all,
    }))?;
    Ok(if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

/// Example used by `gradcheck`: the second synthetic sentence, whose aspect
/// has a non-empty graph.
const GRADCHECK_EXAMPLE: usize = 1;

pub fn gradcheck(tolerance: f64, eps: f64, args: &ConfigArgs) -> Result<ExitCode> {
    let cfg = args.resolve(ModelConfig::toy())?;
    let examples = synthetic_dataset(8, 0);
    let model = Model::from_training_data(cfg, &examples)?;
    let inst = model.prepare(&examples[GRADCHECK_EXAMPLE], None)?;
    let report = model.gradcheck(&inst, eps)?;
    let tensors: Vec<_> = report
        .entries
        .iter()
        .map(|e| {
            json!({
                "name": e.name,
                "max_rel_error": e.max_rel_error,
                "analytic_max_abs": e.analytic_max_abs,
                "numeric_max_abs": e.numeric_max_abs,
                "pass": e.max_rel_error < tolerance,
            })
        })
        .collect();
    let passed = report.passes(tolerance);
    emit(json!({
        "eps": eps,
        "tolerance": tolerance,
        "max_rel_error": report.max_error(),
        "pass": passed,
        "tensors": tensors,
    }))?;
    Ok(if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

pub fn synth(n: usize, seed: u64) -> Result<ExitCode> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for ex in synthetic_dataset(n, seed) {
        writeln!(out, "{}", ex.to_json_line())?;
    }
    Ok(ExitCode::SUCCESS)
}
