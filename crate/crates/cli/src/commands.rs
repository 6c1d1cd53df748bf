use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ncmt::evalkit::{
    frequency_quintiles, mqm_aggregate, permutation_test, read_labels as read_mqm_labels, BleuSmoothing, EvalReport,
    PermutationConfig, SentenceRecord,
};
use ncmt::idiomdata::{
    attach_scores, build_testsets, filter_by_scores, length_match_random, match_idioms, read_corpus_tsv, read_idioms,
    read_labels, read_scores, LowercaseLemmatizer, MatchSet, TextCorpus, DEFAULT_SCAN_CAP,
};
use ncmt::knnstore::{
    build_datastore, default_centroids, grid_search, interpolated_decode, interpolated_decode_batch, Datastore,
    IndexKind, KnnConfig, KnnGrid,
};
use ncmt::sweep::{run_sweep, runs_csv, summarize, summary_chart, summary_csv, Preset, SweepSpec};
use ncmt::synlang::{generate_corpus, is_noncompositional, write_corpus, SynCorpusConfig, SynLangSpec};
use ncmt::trainer::{output_cap, train, StopRule, TrainConfig, UpweightConfig};
use ncmt::transformer::{beam_search, greedy_decode_batch, to_model_ids, to_raw_tokens, ModelParams};

use crate::io::{self, ensure_same_len};
use crate::manifest::Manifest;
use crate::UsageError;

const DECODE_CHUNK: usize = 256;

#[derive(Parser)]
#[command(name = "ncmt", version, about = "Non-compositional translation workbench")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic parallel corpus.
    GenSynth(GenSynth),
    /// Train one model per (cell, seed) and chart pattern accuracy.
    Sweep(Sweep),
    /// Train a model on a corpus file.
    Train(Train),
    /// Record decoder states of a teacher-forced pass as a kNN datastore.
    BuildDatastore(BuildDatastore),
    /// Translate sources, optionally interpolating with a datastore.
    Decode(Decode),
    /// Score hypotheses against references.
    Evaluate(Evaluate),
    /// Paired permutation test of BLEU(A) > BLEU(B).
    PermTest(PermTest),
    /// Tune lambda, temperature and k on validation BLEU.
    GridSearch(GridSearch),
    /// Find idiom occurrences by lemma sequence.
    MatchIdioms(MatchIdioms),
    /// Build idiomatic, literal and length-matched random test sets.
    MakeTestsets(MakeTestsets),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth(a) => gen_synth(a),
        Command::Sweep(a) => sweep(a),
        Command::Train(a) => train_cmd(a),
        Command::BuildDatastore(a) => build_ds(a),
        Command::Decode(a) => decode(a),
        Command::Evaluate(a) => evaluate(a),
        Command::PermTest(a) => perm_test(a),
        Command::GridSearch(a) => grid(a),
        Command::MatchIdioms(a) => match_cmd(a),
        Command::MakeTestsets(a) => testsets(a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&io::read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn lang_spec(path: Option<&Path>) -> Result<SynLangSpec> {
    let spec = match path {
        Some(p) => read_json(p)?,
        None => SynLangSpec::default(),
    };
    spec.validate()?;
    Ok(spec)
}

fn smoothing(eps: Option<f64>) -> BleuSmoothing {
    eps.map_or(BleuSmoothing::None, BleuSmoothing::AddEpsilon)
}

#[derive(Args)]
struct GenSynth {
    /// Language definition (JSON); the built-in language by default.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Corpus config (JSON); overrides the size flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Number of pattern-bearing sentences.
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long)]
    informative: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn gen_synth(a: GenSynth) -> Result<()> {
    let spec = lang_spec(a.spec.as_deref())?;
    let mut cfg = match &a.config {
        Some(p) => read_json(p)?,
        None => SynCorpusConfig::new(a.n, a.k, a.informative, 0),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let corpus = generate_corpus(&cfg, &spec)?;
    write_corpus(&a.out, &corpus)?;
    let n_pattern = corpus.pairs.iter().filter(|p| is_noncompositional(&p.src, &spec)).count();
    println!("{} sentences, {} with the pattern", corpus.len(), n_pattern);
    let mut m = Manifest::new("gen-synth", Some(cfg.seed), (&spec, &cfg))?;
    if let Some(p) = &a.spec {
        m.input("spec", p)?;
    }
    if let Some(p) = &a.config {
        m.input("config", p)?;
    }
    m.output("corpus", &a.out)?.write_beside(&a.out)?;
    Ok(())
}

#[derive(Args)]
struct Sweep {
    /// Sweep spec (JSON); the four-cell desk sweep by default.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long)]
    informative: bool,
    /// First seed; seeds run from here upward.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PresetArg {
    Desk,
    Small,
    Medium,
    Large,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Small => Preset::Small,
            PresetArg::Medium => Preset::Medium,
            PresetArg::Large => Preset::Large,
        }
    }
}

fn sweep(a: Sweep) -> Result<()> {
    let mut spec: SweepSpec = match &a.config {
        Some(p) => read_json(p)?,
        None => SweepSpec::default(),
    };
    if let Some(p) = a.preset {
        spec.preset = p.into();
    }
    spec.informative |= a.informative;
    if a.epochs.is_some() {
        spec.epochs = a.epochs;
    }
    if a.seed.is_some() || a.seeds.is_some() {
        let first = a.seed.unwrap_or(0);
        spec.seeds = (first..first + a.seeds.unwrap_or(spec.seeds.len()) as u64).collect();
    }
    spec.validate()?;
    std::fs::create_dir_all(&a.out)?;
    let outcomes = run_sweep(&spec, a.workers, &|o| match &o.result {
        Ok(r) => eprintln!(
            "cell {}/{} seed {}: comp {:.4} pattern {:.4}",
            o.cell.n_noncomp, o.cell.n_sentences, o.seed, r.comp_acc, r.noncomp_acc
        ),
        Err(e) => eprintln!("cell {}/{} seed {} failed: {e}", o.cell.n_noncomp, o.cell.n_sentences, o.seed),
    })?;
    let summary = summarize(&outcomes);
    let runs = a.out.join("runs.csv");
    let sum = a.out.join("summary.csv");
    let chart = a.out.join("chart.svg");
    io::write(&runs, runs_csv(&outcomes)?)?;
    io::write(&sum, summary_csv(&summary)?)?;
    let title = if spec.informative { "Pattern accuracy, informative context" } else { "Pattern accuracy" };
    io::write(&chart, summary_chart(&summary, title))?;
    for s in &summary {
        println!(
            "{} of {}: pattern {:.4} ± {:.4}, compositional {:.4} ± {:.4}",
            s.cell.n_noncomp, s.cell.n_sentences, s.noncomp_mean, s.noncomp_std, s.comp_mean, s.comp_std
        );
    }
    let mut m = Manifest::new("sweep", spec.seeds.first().copied(), &spec)?;
    if let Some(p) = &a.config {
        m.input("config", p)?;
    }
    m.output("runs", &runs)?.output("summary", &sum)?.output("chart", &chart)?.write_beside(&a.out)?;
    Ok(())
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    data: PathBuf,
    /// Training config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Language definition used for the upweighted set and vocabulary size.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    preset: PresetArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// Loss weight for sentences whose source contains the pattern.
    #[arg(long, default_value_t = 1.0)]
    alpha: f32,
    #[arg(long)]
    val_general_only: bool,
    /// Checkpoint path; the log goes to `<out>.log.csv`.
    #[arg(long)]
    out: PathBuf,
}

fn train_cmd(a: Train) -> Result<()> {
    let spec = lang_spec(a.spec.as_deref())?;
    let corpus = io::read_corpus(&a.data)?;
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    match (a.epochs, a.max_steps) {
        (Some(_), Some(_)) => return Err(usage("--epochs and --max-steps are exclusive")),
        (Some(e), None) => cfg.stop = StopRule::Epochs(e),
        (None, Some(s)) => cfg.stop = StopRule::MaxSteps(s),
        (None, None) => {}
    }
    cfg.val_general_only |= a.val_general_only;
    if !(a.alpha.is_finite() && a.alpha > 0.0) {
        return Err(usage(format!("--alpha must be positive, got {}", a.alpha)));
    }
    let max_data = corpus.pairs.iter().flat_map(|p| p.src.iter().chain(&p.tgt)).copied().max().unwrap_or(0);
    let max = spec.max_token().max(max_data);
    let (sv, tv) = ncmt::transformer::ModelConfig::vocab_for(max, max);
    let model = Preset::from(a.preset).model(sv, tv);
    let lang = spec.clone();
    let upweight = UpweightConfig::new(a.alpha, move |s| is_noncompositional(s, &lang));
    let out = train(&corpus.pairs, &model, &cfg, &upweight)?;
    out.params.save(&a.out)?;
    let log_path = PathBuf::from(format!("{}.log.csv", a.out.display()));
    out.log.write_csv(&log_path)?;
    println!(
        "selected step {} (validation loss {:.4}), {} parameters",
        out.selected_step,
        out.selected_val_loss.unwrap_or(f64::NAN),
        out.params.num_parameters()
    );
    #[derive(Serialize)]
    struct Settings<'a> {
        train: &'a TrainConfig,
        model: &'a ncmt::transformer::ModelConfig,
        alpha: f32,
    }
    let mut m = Manifest::new("train", Some(cfg.seed), Settings { train: &cfg, model: &model, alpha: a.alpha })?;
    m.input("data", &a.data)?;
    if let Some(p) = &a.config {
        m.input("config", p)?;
    }
    if let Some(p) = &a.spec {
        m.input("spec", p)?;
    }
    m.output("checkpoint", &a.out)?.output("log", &log_path)?.write_beside(&a.out)?;
    Ok(())
}

#[derive(Args)]
struct BuildDatastore {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Also build an inverted-file index with this many centroids (0 picks one per 512 keys).
    #[arg(long)]
    ivf_centroids: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn build_ds(a: BuildDatastore) -> Result<()> {
    let params = ModelParams::load(&a.model)?;
    let corpus = io::read_corpus(&a.data)?;
    let mut ds = build_datastore(&params, &corpus.pairs)?;
    if let Some(c) = a.ivf_centroids {
        let c = if c == 0 { default_centroids(ds.len()) } else { c };
        ds.build_ivf(c, a.seed);
    }
    ds.save(&a.out)?;
    println!("{} entries of width {}", ds.len(), ds.d);
    let mut m = Manifest::new("build-datastore", Some(a.seed), ds.header())?;
    m.input("model", &a.model)?.input("data", &a.data)?;
    m.output("datastore", &a.out)?.write_beside(&a.out)?;
    Ok(())
}

#[derive(Args, Clone, Serialize)]
struct KnnArgs {
    /// Interpolation weight of the kNN distribution.
    #[arg(long)]
    lambda: Option<f32>,
    #[arg(long, default_value_t = 10.0)]
    temp: f32,
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// Probe this many inverted lists; exact search when absent.
    #[arg(long)]
    nprobe: Option<usize>,
}

impl KnnArgs {
    fn index(&self, ds: &Datastore) -> Result<IndexKind> {
        match self.nprobe {
            None => Ok(IndexKind::Exact),
            Some(nprobe) => {
                let ivf =
                    ds.ivf.as_ref().ok_or_else(|| usage("--nprobe needs a datastore built with --ivf-centroids"))?;
                Ok(IndexKind::Ivf { n_centroids: ivf.n_centroids(), nprobe })
            }
        }
    }
}

#[derive(Args)]
struct Decode {
    #[arg(long)]
    model: PathBuf,
    /// Corpus file or bare source lines.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    datastore: Option<PathBuf>,
    #[command(flatten)]
    knn: KnnArgs,
    #[arg(long, default_value_t = 1)]
    beam: usize,
    #[arg(long)]
    out: PathBuf,
}

fn decode(a: Decode) -> Result<()> {
    let params = ModelParams::load(&a.model)?;
    let srcs: Vec<Vec<usize>> = io::read_sources(&a.input)?.iter().map(|s| to_model_ids(s)).collect();
    let cap = |s: &[usize]| output_cap(&params, s.len());
    let ds = match (&a.datastore, a.knn.lambda) {
        (Some(p), Some(_)) => Some(Datastore::load(p)?),
        (None, None) => None,
        _ => return Err(usage("--datastore and --lambda go together")),
    };
    let hyps: Vec<Vec<usize>> = match &ds {
        None if a.beam <= 1 => greedy_decode_batch(&params, &srcs, cap, DECODE_CHUNK)?,
        None => srcs.iter().map(|s| Ok(beam_search(&params, s, a.beam, cap(s))?.tokens)).collect::<Result<_>>()?,
        Some(ds) => {
            let cfg = KnnConfig {
                lambda: a.knn.lambda.unwrap_or(0.0),
                temperature: a.knn.temp,
                k: a.knn.k,
                index: a.knn.index(ds)?,
            };
            if a.beam <= 1 {
                interpolated_decode_batch(&params, &srcs, ds, &cfg, cap, DECODE_CHUNK)?
            } else {
                srcs.iter()
                    .map(|s| Ok(interpolated_decode(&params, s, ds, &cfg, a.beam, cap(s))?))
                    .collect::<Result<_>>()?
            }
        }
    };
    let raw: Vec<Vec<u32>> = hyps.iter().map(|h| to_raw_tokens(h)).collect();
    io::write(&a.out, io::token_lines(&raw))?;
    #[derive(Serialize)]
    struct Settings<'a> {
        knn: &'a KnnArgs,
        beam: usize,
    }
    let mut m = Manifest::new("decode", None, Settings { knn: &a.knn, beam: a.beam })?;
    m.input("model", &a.model)?.input("input", &a.input)?;
    if let Some(p) = &a.datastore {
        m.input("datastore", p)?;
    }
    m.output("hypotheses", &a.out)?.write_beside(&a.out)?;
    Ok(())
}

#[derive(Args)]
struct Evaluate {
    #[arg(long)]
    hyp: PathBuf,
    /// Reference lines, or a corpus file whose target side is the reference.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Add-epsilon smoothing of zero n-gram matches (0.1 when given bare).
    #[arg(long, num_args = 0..=1, default_missing_value = "0.1")]
    smooth_bleu: Option<f64>,
    /// Group exact match by whether the source carries the pattern.
    #[arg(long)]
    group_by_pattern: bool,
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Competing system for a paired permutation test.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    /// Severity labels (CSV `id,severity`).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Idiom frequencies (CSV `idiom,count`) for the quintile breakdown.
    #[arg(long)]
    freqs: Option<PathBuf>,
    /// One idiom id per hypothesis line.
    #[arg(long)]
    sentence_idioms: Option<PathBuf>,
    #[arg(long)]
    exclude_bottom_quintile: bool,
    /// Report stem: writes `<out>.json` and `<out>.csv`.
    #[arg(long)]
    out: PathBuf,
}

fn read_freqs(path: &Path) -> Result<Vec<(String, u64)>> {
    let text = io::read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let (id, n) =
            line.split_once(',').ok_or_else(|| anyhow!("{}:{}: expected idiom,count", path.display(), i + 1))?;
        out.push((id.trim().to_owned(), n.trim().parse().with_context(|| format!("{}:{}", path.display(), i + 1))?));
    }
    Ok(out)
}

fn evaluate(a: Evaluate) -> Result<()> {
    let hyps = io::read_lines(&a.hyp)?;
    let refs = io::read_lines(&a.reference)?;
    ensure_same_len("hypotheses vs references", hyps.len(), refs.len())?;
    let spec = lang_spec(a.spec.as_deref())?;
    let mut records = Vec::with_capacity(hyps.len());
    for (i, (h, r)) in hyps.iter().zip(&refs).enumerate() {
        let source = r.source.clone().unwrap_or_default();
        let group = if a.group_by_pattern {
            let src =
                io::numeric(&source).ok_or_else(|| usage("--group-by-pattern needs numeric corpus references"))?;
            Some(if is_noncompositional(&src, &spec) { "pattern" } else { "compositional" }.to_owned())
        } else {
            None
        };
        records.push(SentenceRecord::new(i, &source, &h.tokens, &r.tokens, group));
    }
    let smooth = smoothing(a.smooth_bleu);
    let mut report = EvalReport::from_records(records, smooth);
    let mut m = Manifest::new("evaluate", Some(a.seed), (a.smooth_bleu, a.resamples, a.exclude_bottom_quintile))?;
    m.input("hypotheses", &a.hyp)?.input("references", &a.reference)?;
    if let Some(b) = &a.baseline {
        let base = io::read_lines(b)?;
        ensure_same_len("baseline vs references", base.len(), refs.len())?;
        let cfg = PermutationConfig {
            resamples: a.resamples,
            seed: a.seed,
            smoothing: smooth,
            ..PermutationConfig::default()
        };
        let tok = |v: &[io::Line]| v.iter().map(|l| l.tokens.clone()).collect::<Vec<_>>();
        report.significance = Some(permutation_test(&tok(&hyps), &tok(&base), &tok(&refs), &cfg)?);
        m.input("baseline", b)?;
    }
    if let Some(l) = &a.labels {
        report.mqm = Some(mqm_aggregate(&read_mqm_labels(l)?)?);
        m.input("labels", l)?;
    }
    match (&a.freqs, &a.sentence_idioms) {
        (Some(f), Some(s)) => {
            let ids: Vec<String> = io::read_text(s)?.lines().map(|l| l.trim().to_owned()).collect();
            ensure_same_len("sentence idioms vs hypotheses", ids.len(), hyps.len())?;
            let values: Vec<(String, f64)> = ids
                .into_iter()
                .zip(&report.sentences)
                .map(|(id, r)| (id, f64::from(u8::from(r.exact_match))))
                .collect();
            report.quintiles = Some(frequency_quintiles(&read_freqs(f)?, &values, a.exclude_bottom_quintile)?);
            m.input("freqs", f)?.input("sentence_idioms", s)?;
        }
        (None, None) => {}
        _ => return Err(usage("--freqs and --sentence-idioms go together")),
    }
    report.write(&a.out)?;
    println!("BLEU {:.4}", report.bleu.score);
    if let Some(em) = report.exact_match {
        println!("exact match {em:.4}");
    }
    for (g, v) in &report.group_exact_match {
        println!("exact match [{g}] {v:.4}");
    }
    let json = a.out.with_extension("json");
    m.output("report", &json)?.output("sentences", &a.out.with_extension("csv"))?.write_beside(&json)?;
    Ok(())
}

#[derive(Args)]
struct PermTest {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    /// Report (c + 1) / (R + 1) instead of c / R.
    #[arg(long)]
    conservative: bool,
    #[arg(long, num_args = 0..=1, default_missing_value = "0.1")]
    smooth_bleu: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn perm_test(a: PermTest) -> Result<()> {
    let tok = |p: &Path| -> Result<Vec<Vec<String>>> { Ok(io::read_lines(p)?.into_iter().map(|l| l.tokens).collect()) };
    let cfg = PermutationConfig {
        resamples: a.resamples,
        seed: a.seed,
        conservative: a.conservative,
        smoothing: smoothing(a.smooth_bleu),
    };
    let r = permutation_test(&tok(&a.a)?, &tok(&a.b)?, &tok(&a.reference)?, &cfg)?;
    io::write(&a.out, serde_json::to_string_pretty(&r)? + "\n")?;
    println!("BLEU difference {:.4}, p = {}", r.observed, r.p_value);
    let mut m = Manifest::new("perm-test", Some(a.seed), &cfg)?;
    m.input("a", &a.a)?.input("b", &a.b)?.input("references", &a.reference)?;
    m.output("result", &a.out)?.write_beside(&a.out)?;
    Ok(())
}

#[derive(Args)]
struct GridSearch {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    datastore: PathBuf,
    /// Validation corpus.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f32>>,
    #[arg(long, value_delimiter = ',')]
    temps: Option<Vec<f32>>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long)]
    nprobe: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "0.1")]
    smooth_bleu: Option<f64>,
    /// CSV of every configuration's BLEU.
    #[arg(long)]
    out: PathBuf,
}

fn grid(a: GridSearch) -> Result<()> {
    let params = ModelParams::load(&a.model)?;
    let ds = Datastore::load(&a.datastore)?;
    let val = io::read_corpus(&a.data)?;
    let d = KnnGrid::default();
    let grid = KnnGrid {
        lambdas: a.lambdas.unwrap_or(d.lambdas),
        temperatures: a.temps.unwrap_or(d.temperatures),
        ks: a.ks.unwrap_or(d.ks),
    };
    let knn = KnnArgs { lambda: None, temp: 1.0, k: 1, nprobe: a.nprobe };
    let index = knn.index(&ds)?;
    let r = grid_search(&params, &ds, &val.pairs, &grid, index, smoothing(a.smooth_bleu), |s| {
        output_cap(&params, s.len())
    })?;
    let mut csv = String::from("lambda,temperature,k,bleu\n");
    for row in &r.rows {
        csv.push_str(&format!("{},{},{},{}\n", row.lambda, row.temperature, row.k, row.bleu));
    }
    io::write(&a.out, csv)?;
    println!(
        "best lambda {} temperature {} k {}: BLEU {:.4}",
        r.best.lambda, r.best.temperature, r.best.k, r.best_bleu
    );
    let mut m = Manifest::new("grid-search", None, (&grid, a.smooth_bleu, &r.best))?;
    m.input("model", &a.model)?.input("datastore", &a.datastore)?.input("data", &a.data)?;
    m.output("grid", &a.out)?.write_beside(&a.out)?;
    Ok(())
}

#[derive(Args)]
struct MatchIdioms {
    #[arg(long)]
    idioms: PathBuf,
    /// TSV corpus (`source<TAB>target[<TAB>lemmas]`).
    #[arg(long)]
    corpus: PathBuf,
    /// Quality scores (CSV `pair_index,score`); enables filtering.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    drop_fraction: f64,
    /// Match set (JSON); pair indices refer to the unfiltered corpus.
    #[arg(long)]
    out: PathBuf,
}

fn match_cmd(a: MatchIdioms) -> Result<()> {
    let idioms = read_idioms(&a.idioms)?;
    let mut corpus = read_corpus_tsv(&a.corpus)?;
    let mut m = Manifest::new("match-idioms", None, a.scores.as_ref().map(|_| a.drop_fraction))?;
    m.input("idioms", &a.idioms)?.input("corpus", &a.corpus)?;
    let (kept_corpus, kept) = match &a.scores {
        Some(s) => {
            attach_scores(&mut corpus, &read_scores(s)?)?;
            m.input("scores", s)?;
            filter_by_scores(&corpus, a.drop_fraction)?
        }
        None => {
            let n = corpus.len();
            (corpus, (0..n).collect())
        }
    };
    let local = match_idioms(&kept_corpus, &idioms, &LowercaseLemmatizer);
    let matches = MatchSet {
        by_pair: local.by_pair.into_iter().map(|(i, ids)| (kept[i], ids)).collect(),
        skipped: local.skipped.into_iter().map(|i| kept[i]).collect(),
    };
    io::write(&a.out, serde_json::to_string_pretty(&matches)? + "\n")?;
    println!("{} matched pairs, {} matches", matches.n_pairs(), matches.n_events());
    m.output("matches", &a.out)?.write_beside(&a.out)?;
    Ok(())
}

#[derive(Args)]
struct MakeTestsets {
    #[arg(long)]
    matches: PathBuf,
    /// Annotations (CSV `pair_index,idiom_id,label`).
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SCAN_CAP)]
    scan_cap: usize,
    #[arg(long, default_value_t = 5)]
    take_cap: usize,
    /// Candidate pool for a random set length-matched to the idiomatic set.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn tsv(corpus: &TextCorpus, rows: impl Iterator<Item = usize>) -> String {
    rows.map(|i| format!("{}\t{}\n", corpus.pairs[i].source, corpus.pairs[i].target)).collect()
}

fn testsets(a: MakeTestsets) -> Result<()> {
    let matches: MatchSet = read_json(&a.matches)?;
    let labels = read_labels(&a.labels)?;
    let corpus = read_corpus_tsv(&a.corpus)?;
    if let Some((&i, _)) = matches.by_pair.range(corpus.len()..).next() {
        return Err(anyhow!("match for pair {i} but the corpus has {} pairs", corpus.len()));
    }
    let sets = build_testsets(&matches, &labels, a.scan_cap, a.take_cap);
    std::fs::create_dir_all(&a.out)?;
    let (idi, lit, json) = (a.out.join("idiomatic.tsv"), a.out.join("literal.tsv"), a.out.join("testsets.json"));
    io::write(&idi, tsv(&corpus, sets.idiomatic.iter().map(|t| t.pair_index)))?;
    io::write(&lit, tsv(&corpus, sets.literal.iter().map(|t| t.pair_index)))?;
    io::write(&json, serde_json::to_string_pretty(&sets)? + "\n")?;
    println!("{} idiomatic, {} literal", sets.idiomatic.len(), sets.literal.len());
    let mut m = Manifest::new("make-testsets", None, (a.scan_cap, a.take_cap))?;
    m.input("matches", &a.matches)?.input("labels", &a.labels)?.input("corpus", &a.corpus)?;
    m.output("idiomatic", &idi)?.output("literal", &lit)?.output("testsets", &json)?;
    if let Some(p) = &a.pool {
        let pool = read_corpus_tsv(p)?;
        let reference: Vec<_> = sets.idiomatic.iter().map(|t| corpus.pairs[t.pair_index].clone()).collect();
        let picks = length_match_random(&pool.pairs, &reference)?;
        let rnd = a.out.join("random.tsv");
        io::write(&rnd, tsv(&pool, picks.into_iter()))?;
        m.input("pool", p)?.output("random", &rnd)?;
    }
    m.write_beside(&a.out)?;
    Ok(())
}
