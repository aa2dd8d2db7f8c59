use std::path::{Path, PathBuf};

use clap::Args;
use log::info;

use dialogrl::corpus::{
    build_vocabulary, load_dialog_corpus, split_corpus, tokenize, write_dialog_corpus, TextPair,
    DEFAULT_MAX_VOCAB, MAX_SEQ_LEN,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw corpus, one `source<TAB>target` exchange per line.
    #[arg(long)]
    input: PathBuf,
    /// Output directory (defaults to the data directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Vocabulary output path (defaults to `<out-dir>/vocab.txt`).
    #[arg(long)]
    vocab_out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_VOCAB)]
    max_vocab: usize,
    /// Tokens kept per utterance.
    #[arg(long, default_value_t = MAX_SEQ_LEN)]
    max_len: usize,
    #[arg(long, default_value_t = 0.1)]
    validation: f64,
    #[arg(long, default_value_t = 0.1)]
    test: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn truncate(text: &str, max_len: usize) -> String {
    tokenize(text)
        .into_iter()
        .take(max_len)
        .collect::<Vec<_>>()
        .join(" ")
}

fn mean_len(pairs: &[TextPair], side: impl Fn(&TextPair) -> &str) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().map(|p| tokenize(side(p)).len()).sum::<usize>() as f64 / pairs.len() as f64
}

pub fn run(data_dir: &Path, args: PreprocessArgs) -> CliResult<()> {
    if args.max_len == 0 {
        return Err(CliError::Invalid("--max-len must be at least 1".into()));
    }
    let pairs: Vec<TextPair> = load_dialog_corpus(&args.input)?
        .into_iter()
        .map(|p| TextPair {
            source: truncate(&p.source, args.max_len),
            target: truncate(&p.target, args.max_len),
        })
        .filter(|p| !p.source.is_empty() && !p.target.is_empty())
        .collect();
    let split = split_corpus(pairs, args.validation, args.test, args.seed)?;
    let train_texts: Vec<&str> = split
        .train
        .iter()
        .flat_map(|p| [p.source.as_str(), p.target.as_str()])
        .collect();
    let vocab = build_vocabulary(&train_texts, args.max_vocab)?;

    let out_dir = args.out_dir.unwrap_or_else(|| data_dir.to_path_buf());
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    for (name, part) in [
        ("train.tsv", &split.train),
        ("valid.tsv", &split.validation),
        ("test.tsv", &split.test),
    ] {
        write_dialog_corpus(out_dir.join(name), part)?;
    }
    let vocab_path = args.vocab_out.unwrap_or_else(|| out_dir.join("vocab.txt"));
    vocab.save(&vocab_path)?;
    info!(
        "wrote splits to {} and vocabulary to {}",
        out_dir.display(),
        vocab_path.display()
    );

    println!("split\tpairs\tavg_source_tokens\tavg_target_tokens");
    for (name, part) in [
        ("train", &split.train),
        ("valid", &split.validation),
        ("test", &split.test),
    ] {
        println!(
            "{name}\t{}\t{:.2}\t{:.2}",
            part.len(),
            mean_len(part, |p| &p.source),
            mean_len(part, |p| &p.target)
        );
    }
    println!("vocabulary\t{}", vocab.len());
    Ok(())
}
