use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use log::warn;

use dialogrl::corpus::{encode, preprocess_text, Vocabulary, MAX_SEQ_LEN, UNK};
use dialogrl::model::{
    greedy_decode, load_checkpoint, mmi_rescore, n_best_decode, sample_decode, Candidate,
    LanguageModel, Seq2SeqModel,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Vocabulary (defaults to `<data-dir>/vocab.txt`).
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Language model for MMI reranking.
    #[arg(long)]
    lm: Option<PathBuf>,
    /// One prompt per line; reads standard input when omitted.
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Response file (defaults to standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    n_best: usize,
    /// MMI weight (defaults to the checkpoint's setting).
    #[arg(long)]
    mmi_lambda: Option<f64>,
    /// Sample instead of searching; the seed makes runs repeatable.
    #[arg(long)]
    sample: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also list the n-best candidates with their scores.
    #[arg(long)]
    verbose: bool,
}

struct Generator {
    model: Seq2SeqModel,
    lm: Option<LanguageModel>,
    vocab: Vocabulary,
    n_best: usize,
    lambda: f64,
    sample: bool,
    seed: u64,
}

impl Generator {
    /// The chosen response and, when a beam was run, every ranked candidate.
    fn respond(&self, prompt: &str, index: usize) -> CliResult<(Vec<usize>, Vec<Candidate>)> {
        let mut source = encode(&preprocess_text(prompt), &self.vocab, MAX_SEQ_LEN);
        if source.is_empty() {
            warn!("prompt {} is empty after preprocessing", index + 1);
            source.push(UNK);
        } else if source.iter().all(|&t| t == UNK) {
            warn!("prompt {} has no in-vocabulary words", index + 1);
        }
        if self.sample {
            let s = sample_decode(&self.model, &source, self.seed.wrapping_add(index as u64))?;
            return Ok((s.tokens, Vec::new()));
        }
        if self.n_best == 1 && self.lm.is_none() {
            return Ok((greedy_decode(&self.model, &source)?, Vec::new()));
        }
        let mut cands = n_best_decode(&self.model, &source, self.n_best)?;
        if let Some(lm) = &self.lm {
            cands = mmi_rescore(cands, lm, self.lambda)?;
        }
        Ok((cands[0].tokens.clone(), cands))
    }
}

pub fn run(data_dir: &Path, args: GenerateArgs) -> CliResult<()> {
    if args.n_best == 0 {
        return Err(CliError::Invalid("--n-best must be at least 1".into()));
    }
    let vocab_path = args
        .vocab
        .clone()
        .unwrap_or_else(|| data_dir.join("vocab.txt"));
    let vocab = Vocabulary::load(&vocab_path)?;
    let model = load_checkpoint(&args.checkpoint, None)?;
    if model.config().vocab_size != vocab.len() {
        return Err(CliError::Invalid(format!(
            "checkpoint vocabulary size {} does not match {} ({})",
            model.config().vocab_size,
            vocab_path.display(),
            vocab.len()
        )));
    }
    let lm = match &args.lm {
        Some(p) => Some(LanguageModel::from_model(load_checkpoint(p, None)?)?),
        None => None,
    };
    let lambda = args.mmi_lambda.unwrap_or(model.config().mmi_lambda);
    let generator = Generator {
        model,
        lm,
        vocab,
        n_best: args.n_best,
        lambda,
        sample: args.sample,
        seed: args.seed,
    };

    let input: Box<dyn BufRead> = match &args.prompts {
        Some(p) => Box::new(std::io::BufReader::new(
            std::fs::File::open(p).map_err(|e| CliError::io(p, e))?,
        )),
        None => Box::new(std::io::stdin().lock()),
    };
    let out_label = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("<stdout>"));
    let mut output: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| CliError::io(p, e))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    let in_label = args
        .prompts
        .clone()
        .unwrap_or_else(|| PathBuf::from("<stdin>"));
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(&in_label, e))?;
        let (response, cands) = generator.respond(&line, i)?;
        writeln!(output, "{}", generator.vocab.decode(&response))
            .map_err(|e| CliError::io(&out_label, e))?;
        if args.verbose {
            for (rank, c) in cands.iter().enumerate() {
                let mut detail = format!("#{} log p(T|S) {:.4}", rank + 1, c.cond_logprob);
                if let (Some(lm), Some(score)) = (c.lm_logprob, c.mmi_score) {
                    detail.push_str(&format!(" log p(T) {lm:.4} mmi {score:.4}"));
                }
                eprintln!("  {detail}\t{}", generator.vocab.decode(&c.tokens));
            }
        }
        output.flush().map_err(|e| CliError::io(&out_label, e))?;
    }
    Ok(())
}
