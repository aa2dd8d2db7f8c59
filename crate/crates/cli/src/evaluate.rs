use std::path::{Path, PathBuf};

use clap::Args;

use dialogrl::corpus::{encode, preprocess_text, tokenize, DialogPair, Vocabulary, MAX_SEQ_LEN};
use dialogrl::eval::{
    bleu, paired_bootstrap, perplexity, rouge_l, DEFAULT_BLEU_ORDER, DEFAULT_RESAMPLES,
    DEFAULT_ROUGE_BETA,
};
use dialogrl::model::load_checkpoint;

use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// System outputs as `prompt<TAB>candidate<TAB>reference` lines.
    #[arg(long)]
    outputs: PathBuf,
    /// Baseline outputs in the same format, aligned line by line.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Model for reference perplexity.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Vocabulary for `--checkpoint`.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct Row {
    prompt: String,
    candidate: Vec<String>,
    reference: Vec<String>,
}

fn words(text: &str) -> Vec<String> {
    tokenize(&preprocess_text(text))
        .into_iter()
        .map(String::from)
        .collect()
}

fn read_rows(path: &Path) -> CliResult<Vec<Row>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(dialogrl::Error::Malformed {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                }
                .into());
            }
            Ok(Row {
                prompt: fields[0].to_string(),
                candidate: words(fields[1]),
                reference: words(fields[2]),
            })
        })
        .collect()
}

fn scores(rows: &[Row]) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let mut b = Vec::with_capacity(rows.len());
    let mut r = Vec::with_capacity(rows.len());
    for row in rows {
        b.push(bleu(&row.candidate, &row.reference, DEFAULT_BLEU_ORDER)?);
        r.push(rouge_l(&row.candidate, &row.reference, DEFAULT_ROUGE_BETA)?);
    }
    Ok((b, r))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn run(args: EvaluateArgs) -> CliResult<()> {
    let rows = read_rows(&args.outputs)?;
    if rows.is_empty() {
        return Err(CliError::Invalid(format!(
            "{} contains no outputs",
            args.outputs.display()
        )));
    }
    let (bleu_sys, rouge_sys) = scores(&rows)?;
    let baseline = match &args.baseline {
        Some(path) => {
            let base = read_rows(path)?;
            if base.len() != rows.len() {
                return Err(CliError::Invalid(format!(
                    "misaligned files: {} has {} lines but {} has {}",
                    args.outputs.display(),
                    rows.len(),
                    path.display(),
                    base.len()
                )));
            }
            Some(scores(&base)?)
        }
        None => None,
    };

    println!("metric\tsystem\tbaseline\tp_value");
    for (name, sys, base) in [
        ("BLEU", &bleu_sys, baseline.as_ref().map(|b| &b.0)),
        ("ROUGE-L", &rouge_sys, baseline.as_ref().map(|b| &b.1)),
    ] {
        match base {
            Some(base) => {
                let p = paired_bootstrap(sys, base, args.resamples, args.seed)?;
                println!("{name}\t{:.4}\t{:.4}\t{p:.4}", mean(sys), mean(base));
            }
            None => println!("{name}\t{:.4}\t-\t-", mean(sys)),
        }
    }
    if let Some(ckpt) = &args.checkpoint {
        let vocab_path = args
            .vocab
            .as_ref()
            .ok_or_else(|| CliError::Invalid("--checkpoint requires --vocab".into()))?;
        let vocab = Vocabulary::load(vocab_path)?;
        let model = load_checkpoint(ckpt, None)?;
        let pairs: Vec<DialogPair> = rows
            .iter()
            .filter_map(|row| {
                let source = encode(&preprocess_text(&row.prompt), &vocab, MAX_SEQ_LEN);
                let target = encode(&row.reference.join(" "), &vocab, MAX_SEQ_LEN);
                (!source.is_empty() && !target.is_empty()).then(|| DialogPair {
                    source,
                    target,
                    raw_source: row.prompt.clone(),
                    raw_target: row.reference.join(" "),
                })
            })
            .collect();
        println!("perplexity\t{:.4}\t-\t-", perplexity(&model, &pairs)?);
    }
    println!("examples\t{}", rows.len());
    Ok(())
}
