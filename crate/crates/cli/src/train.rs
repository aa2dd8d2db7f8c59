use std::path::{Path, PathBuf};

use clap::Args;
use log::{info, warn};

use dialogrl::affect::{
    affective_embeddings, base_embeddings, load_pretrained_vectors, AffectLexicon, AFFECT_DIM,
};
use dialogrl::corpus::{
    encode_pairs, filter_training_split, load_dialog_corpus, load_review_corpus, CorpusSplit,
    DialogPair, Vocabulary, MAX_SEQ_LEN,
};
use dialogrl::feedback::{build_analyzer, Analyzer, SvmConfig, DEFAULT_MAX_FEATURES};
use dialogrl::model::{load_checkpoint, save_checkpoint, LanguageModel, ModelConfig, Seq2SeqModel};
use dialogrl::rewards::{DullResponseSet, RewardContext, RewardWeights};
use dialogrl::training::{
    finetune_rl, train_language_model, train_mle, train_reverse, RunConfig, TrainReport,
};

use crate::error::{CliError, CliResult};
use crate::manifest::{sibling, write_json, RunManifest};
use crate::{Common, TrainMode};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(value_enum)]
    mode: TrainMode,
    #[command(flatten)]
    common: Common,
    /// Training pairs (defaults to `<data-dir>/train.tsv`).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Validation pairs (defaults to `<data-dir>/valid.tsv` when present).
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Vocabulary (defaults to `<data-dir>/vocab.txt`).
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Checkpoint output (defaults to `<data-dir>/<mode>.ckpt`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training report JSON (defaults to `<out>.report.json`).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Run manifest JSON (defaults to `<out>.manifest.json`).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Overrides the config reward weights, as `ea,sc,ei,hf`.
    #[arg(long)]
    reward_weights: Option<RewardWeights>,
    /// Valence/arousal/dominance CSV (defaults to the bundled demo lexicon).
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Pretrained word vectors in word2vec text format.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Start from this checkpoint instead of a fresh model.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Pretrained forward model (rl).
    #[arg(long)]
    forward: Option<PathBuf>,
    /// Pretrained reverse model (rl).
    #[arg(long)]
    reverse: Option<PathBuf>,
    /// Pretrained language model (rl).
    #[arg(long)]
    lm: Option<PathBuf>,
    /// Usefulness analyzer (rl, required when the human-feedback weight is positive).
    #[arg(long)]
    analyzer: Option<PathBuf>,
    /// Dull responses, one per line (defaults to the built-in list).
    #[arg(long)]
    dull_responses: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzerArgs {
    #[command(flatten)]
    common: Common,
    /// Reviews as `useful_count<TAB>text` (defaults to `<data-dir>/reviews.tsv`).
    #[arg(long)]
    reviews: Option<PathBuf>,
    /// Analyzer output (defaults to `<data-dir>/analyzer.bin`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    heldout_frac: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MAX_FEATURES)]
    max_features: usize,
}

fn load_config(common: &Common) -> CliResult<RunConfig> {
    Ok(match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    })
}

fn load_lexicon(path: Option<&Path>) -> CliResult<AffectLexicon> {
    match path {
        Some(p) => Ok(AffectLexicon::load(p)?),
        None => {
            warn!("no --lexicon given; using the bundled synthetic demo lexicon");
            Ok(AffectLexicon::bundled_demo())
        }
    }
}

fn load_model(path: &Path, vocab: &Vocabulary, conditional: bool) -> CliResult<Seq2SeqModel> {
    let model = load_checkpoint(path, None)?;
    let cfg = model.config();
    if cfg.vocab_size != vocab.len() {
        return Err(dialogrl::Error::ConfigMismatch {
            field: "vocab_size",
            expected: vocab.len().to_string(),
            found: cfg.vocab_size.to_string(),
        }
        .into());
    }
    if cfg.conditional != conditional {
        let kind = if conditional {
            "conditional"
        } else {
            "unconditional"
        };
        return Err(CliError::Invalid(format!(
            "{} is not a {kind} model",
            path.display()
        )));
    }
    Ok(model)
}

fn fresh_model(
    cfg: &RunConfig,
    model_cfg: ModelConfig,
    vocab: &Vocabulary,
    args: &TrainArgs,
) -> CliResult<Seq2SeqModel> {
    let seed = cfg.optimizer.seed;
    let mut model = Seq2SeqModel::new(model_cfg, seed, cfg.init_scale)?;
    let pretrained = args
        .embeddings
        .as_deref()
        .map(load_pretrained_vectors)
        .transpose()?;
    let base = base_embeddings(vocab, cfg.embed_dim - AFFECT_DIM, pretrained.as_ref(), seed)?;
    let lexicon = load_lexicon(args.lexicon.as_deref())?;
    let table = affective_embeddings(vocab, &base, &lexicon, cfg.affect_scaling)?;
    model.set_embeddings(&table)?;
    Ok(model)
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Invalid(format!("rl training requires --{flag}")))
}

pub fn run(data_dir: &Path, args: TrainArgs) -> CliResult<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(seed) = args.seed {
        cfg.optimizer.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.optimizer.epochs = epochs;
    }
    if let Some(w) = args.reward_weights {
        cfg.reward_weights = w;
    }
    cfg.validate()?;
    if args.mode == TrainMode::Rl {
        if cfg.reward_weights.human_feedback > 0.0 && args.analyzer.is_none() {
            return Err(dialogrl::Error::AnalyzerRequired.into());
        }
        require(&args.forward, "forward")?;
        require(&args.reverse, "reverse")?;
        require(&args.lm, "lm")?;
    }

    let mode_name = match args.mode {
        TrainMode::Mle => "mle",
        TrainMode::Reverse => "reverse",
        TrainMode::Lm => "lm",
        TrainMode::Rl => "rl",
    };
    let train_path = args
        .train
        .clone()
        .unwrap_or_else(|| data_dir.join("train.tsv"));
    let vocab_path = args
        .vocab
        .clone()
        .unwrap_or_else(|| data_dir.join("vocab.txt"));
    let valid_path = args.valid.clone().or_else(|| {
        let p = data_dir.join("valid.tsv");
        p.exists().then_some(p)
    });
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| data_dir.join(format!("{mode_name}.ckpt")));
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| sibling(&out, "report.json"));
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| sibling(&out, "manifest.json"));

    let vocab = Vocabulary::load(&vocab_path)?;
    let train_pairs = encode_pairs(&load_dialog_corpus(&train_path)?, &vocab, MAX_SEQ_LEN);
    let valid_pairs = match &valid_path {
        Some(p) => encode_pairs(&load_dialog_corpus(p)?, &vocab, MAX_SEQ_LEN),
        None => Vec::new(),
    };
    let split = filter_training_split(CorpusSplit {
        train: train_pairs,
        validation: valid_pairs,
        test: Vec::new(),
    });
    info!(
        "{} training pairs, {} validation pairs, vocabulary {}",
        split.train.len(),
        split.validation.len(),
        vocab.len()
    );

    let mut manifest = RunManifest::new(
        &format!("train {mode_name}"),
        cfg.to_map(),
        cfg.optimizer.seed,
    );
    let inputs = [
        Some(&train_path),
        valid_path.as_ref(),
        Some(&vocab_path),
        args.common.config.as_ref(),
        args.lexicon.as_ref(),
        args.embeddings.as_ref(),
        args.init.as_ref(),
        args.forward.as_ref(),
        args.reverse.as_ref(),
        args.lm.as_ref(),
        args.analyzer.as_ref(),
        args.dull_responses.as_ref(),
    ];
    for path in inputs.into_iter().flatten() {
        manifest.add_input(path)?;
    }
    for path in [&out, &report_path, &manifest_path] {
        manifest.add_output(path);
    }
    write_json(&manifest_path, &manifest)?;

    let (model, report) = match args.mode {
        TrainMode::Mle | TrainMode::Reverse => {
            let mut model = match &args.init {
                Some(p) => load_model(p, &vocab, true)?,
                None => fresh_model(&cfg, cfg.model_config(vocab.len())?, &vocab, &args)?,
            };
            let report = if args.mode == TrainMode::Mle {
                train_mle(&mut model, &split, &cfg.optimizer)?
            } else {
                train_reverse(&mut model, &split, &cfg.optimizer)?
            };
            (model, report)
        }
        TrainMode::Lm => {
            let model = match &args.init {
                Some(p) => load_model(p, &vocab, false)?,
                None => fresh_model(
                    &cfg,
                    cfg.model_config(vocab.len())?.unconditional(),
                    &vocab,
                    &args,
                )?,
            };
            let mut lm = LanguageModel::from_model(model)?;
            let targets: Vec<Vec<usize>> = split.train.iter().map(|p| p.target.clone()).collect();
            let valid: Vec<Vec<usize>> =
                split.validation.iter().map(|p| p.target.clone()).collect();
            let report = train_language_model(&mut lm, &targets, &valid, &cfg.optimizer)?;
            (lm.into_inner(), report)
        }
        TrainMode::Rl => train_rl(&cfg, &args, &vocab, &split.train)?,
    };

    save_checkpoint(&model, &out)?;
    write_json(&report_path, &report)?;
    if let Some(last) = report.epochs.last() {
        info!(
            "finished {} epochs in {:.1}s",
            report.epochs.len(),
            report.wall_clock_secs
        );
        info!("last epoch: {last:?}");
    }
    println!("{}", out.display());
    Ok(())
}

fn train_rl(
    cfg: &RunConfig,
    args: &TrainArgs,
    vocab: &Vocabulary,
    train: &[DialogPair],
) -> CliResult<(Seq2SeqModel, TrainReport)> {
    let forward = load_model(require(&args.forward, "forward")?, vocab, true)?;
    let backward = load_model(require(&args.reverse, "reverse")?, vocab, true)?;
    load_model(require(&args.lm, "lm")?, vocab, false)?;
    let analyzer = args.analyzer.as_deref().map(Analyzer::load).transpose()?;
    let lexicon = load_lexicon(args.lexicon.as_deref())?;
    let dull = match &args.dull_responses {
        Some(p) => DullResponseSet::load(p, vocab)?,
        None => DullResponseSet::standard(vocab),
    };
    let ctx = RewardContext {
        forward: &forward,
        backward: Some(&backward),
        lexicon: &lexicon,
        vocab,
        dull: &dull,
        analyzer: analyzer.as_ref(),
        feedback_mode: cfg.feedback_mode,
        weights: cfg.reward_weights,
        empty_response_reward: cfg.empty_response_reward,
    };
    ctx.validate()?;
    let prompts: Vec<Vec<usize>> = train.iter().map(|p| p.source.clone()).collect();
    let mut policy = forward.clone();
    let report = finetune_rl(&mut policy, &prompts, &ctx, &cfg.rl_config())?;
    Ok((policy, report))
}

pub fn run_analyzer(data_dir: &Path, args: AnalyzerArgs) -> CliResult<()> {
    let cfg = load_config(&args.common)?;
    let reviews_path = args.reviews.unwrap_or_else(|| data_dir.join("reviews.tsv"));
    let out = args.out.unwrap_or_else(|| data_dir.join("analyzer.bin"));
    let heldout = args.heldout_frac.unwrap_or(cfg.heldout_frac);
    let svm = SvmConfig {
        seed: args.seed.unwrap_or(cfg.optimizer.seed),
        ..SvmConfig::default()
    };
    let reviews = load_review_corpus(&reviews_path)?;
    let (analyzer, report) = build_analyzer(&reviews, heldout, args.max_features, &svm)?;
    analyzer.save(&out)?;
    println!(
        "class balance: {} useful, {} not useful, {} excluded",
        report.useful, report.not_useful, report.excluded
    );
    match report.heldout_accuracy {
        Some(acc) => println!(
            "held-out accuracy: {acc:.4} ({} reviews)",
            report.heldout_size
        ),
        None => println!("held-out accuracy: n/a (no held-out reviews)"),
    }
    info!("analyzer written to {}", out.display());
    Ok(())
}
