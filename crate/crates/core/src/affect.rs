//! Valence/arousal/dominance lexicon and affect-augmented word embeddings.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// Number of affect dimensions appended to each embedding.
pub const AFFECT_DIM: usize = 3;

/// A (valence, arousal, dominance) triple on the lexicon's 1-9 scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffectVector {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
}

impl AffectVector {
    /// Used for every word missing from the lexicon.
    pub const NEUTRAL: AffectVector = AffectVector {
        valence: 5.0,
        arousal: 1.0,
        dominance: 5.0,
    };

    pub const fn new(valence: f64, arousal: f64, dominance: f64) -> Self {
        AffectVector {
            valence,
            arousal,
            dominance,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.valence, self.arousal, self.dominance]
    }

    pub fn distance(self, other: AffectVector) -> f64 {
        let dv = self.valence - other.valence;
        let da = self.arousal - other.arousal;
        let dd = self.dominance - other.dominance;
        (dv * dv + da * da + dd * dd).sqrt()
    }
}

/// How affect scores are written into model embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AffectScaling {
    /// Raw 1-9 lexicon values.
    #[default]
    Raw,
    /// Linearly mapped to [-1, 1].
    Symmetric,
}

impl AffectScaling {
    pub fn apply(self, v: AffectVector) -> [f64; 3] {
        match self {
            AffectScaling::Raw => v.to_array(),
            AffectScaling::Symmetric => v.to_array().map(|x| (x - 5.0) / 4.0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffectLexicon {
    entries: HashMap<String, AffectVector>,
}

impl AffectLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an entry. Components must be finite and in [1, 9].
    pub fn insert(&mut self, word: &str, affect: AffectVector) -> Result<()> {
        if word.is_empty() {
            return Err(Error::EmptyInput { what: "word" });
        }
        if !affect
            .to_array()
            .iter()
            .all(|x| x.is_finite() && (1.0..=9.0).contains(x))
        {
            return Err(Error::InvalidArgument(format!(
                "affect for `{word}` outside [1,9]: {affect:?}"
            )));
        }
        self.entries.insert(word.to_lowercase(), affect);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `word,valence,arousal,dominance` CSV with a header row.
    pub fn from_csv_reader(reader: impl Read, origin: &Path) -> Result<Self> {
        let mut lexicon = AffectLexicon::new();
        let malformed = |line: usize, message: String| Error::Malformed {
            path: origin.to_path_buf(),
            line,
            message,
        };
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(malformed(
                    i + 1,
                    format!("expected 4 comma-separated fields, found {}", fields.len()),
                ));
            }
            let mut values = [0.0; 3];
            for (slot, field) in values.iter_mut().zip(&fields[1..]) {
                *slot = field
                    .parse()
                    .map_err(|_| malformed(i + 1, format!("invalid number `{field}`")))?;
            }
            lexicon
                .insert(
                    fields[0],
                    AffectVector::new(values[0], values[1], values[2]),
                )
                .map_err(|e| malformed(i + 1, e.to_string()))?;
        }
        Ok(lexicon)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, path)
    }

    /// The small demo lexicon bundled with the crate.
    pub fn bundled_demo() -> Self {
        const DEMO: &str = include_str!("../data/demo_lexicon.csv");
        Self::from_csv_reader(DEMO.as_bytes(), Path::new("demo_lexicon.csv"))
            .expect("bundled lexicon is valid")
    }
}

/// Lexicon entry for `word`, or [`AffectVector::NEUTRAL`] when absent.
pub fn lookup_affect(word: &str, lexicon: &AffectLexicon) -> Result<AffectVector> {
    if word.is_empty() {
        return Err(Error::EmptyInput { what: "word" });
    }
    Ok(lexicon
        .entries
        .get(word)
        .copied()
        .unwrap_or(AffectVector::NEUTRAL))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedEmbedding {
    pub base: Vec<f64>,
    pub affect: AffectVector,
    pub combined: Vec<f64>,
}

/// Appends the word's (V, A, D) to `base`.
pub fn augment_embedding(
    base: &[f64],
    word: &str,
    lexicon: &AffectLexicon,
) -> Result<AugmentedEmbedding> {
    if base.is_empty() {
        return Err(Error::EmptyInput {
            what: "base embedding",
        });
    }
    let affect = lookup_affect(word, lexicon)?;
    let mut combined = Vec::with_capacity(base.len() + AFFECT_DIM);
    combined.extend_from_slice(base);
    combined.extend_from_slice(&affect.to_array());
    Ok(AugmentedEmbedding {
        base: base.to_vec(),
        affect,
        combined,
    })
}

/// Component-wise mean affect of a token sequence.
pub fn w2av_mean<S: AsRef<str>>(tokens: &[S], lexicon: &AffectLexicon) -> Result<AffectVector> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput { what: "tokens" });
    }
    let mut sum = [0.0; 3];
    for token in tokens {
        let a = lookup_affect(token.as_ref(), lexicon)?.to_array();
        for (s, x) in sum.iter_mut().zip(a) {
            *s += x;
        }
    }
    let n = tokens.len() as f64;
    Ok(AffectVector::new(sum[0] / n, sum[1] / n, sum[2] / n))
}

/// Base embeddings, one row per vocabulary id.
///
/// Rows come from `pretrained` when it has the word; the rest are sampled
/// uniformly in [-0.1, 0.1].
pub fn base_embeddings(
    vocab: &Vocabulary,
    dim: usize,
    pretrained: Option<&HashMap<String, Vec<f64>>>,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if dim == 0 {
        return Err(Error::EmptyInput {
            what: "base embedding",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..vocab.len())
        .map(|id| {
            let word = vocab.token(id).unwrap_or_default();
            let random: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.1..=0.1)).collect();
            match pretrained.and_then(|p| p.get(word)) {
                Some(row) if row.len() == dim => Ok(row.clone()),
                Some(row) => Err(Error::ConfigMismatch {
                    field: "embedding dimension",
                    expected: dim.to_string(),
                    found: row.len().to_string(),
                }),
                None => Ok(random),
            }
        })
        .collect()
}

/// Full model embedding table: each base row followed by the word's affect
/// triple under `scaling`. Special tokens get the neutral vector.
pub fn affective_embeddings(
    vocab: &Vocabulary,
    base: &[Vec<f64>],
    lexicon: &AffectLexicon,
    scaling: AffectScaling,
) -> Result<Vec<Vec<f64>>> {
    if base.len() != vocab.len() {
        return Err(Error::LengthMismatch {
            left: base.len(),
            right: vocab.len(),
        });
    }
    base.iter()
        .enumerate()
        .map(|(id, row)| {
            let word = vocab.token(id).unwrap_or_default();
            let aug = augment_embedding(row, word, lexicon)?;
            let mut out = aug.base;
            out.extend_from_slice(&scaling.apply(aug.affect));
            Ok(out)
        })
        .collect()
}

/// Reads word2vec-style text vectors (`word v1 v2 ...`, optional count header).
pub fn load_pretrained_vectors(path: impl AsRef<Path>) -> Result<HashMap<String, Vec<f64>>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values: std::result::Result<Vec<f64>, _> = parts.map(str::parse).collect();
        match values {
            Ok(v) if !v.is_empty() => {
                out.insert(word.to_string(), v);
            }
            _ if i == 0 => {}
            _ => {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected a word followed by numbers".into(),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> AffectLexicon {
        let mut lex = AffectLexicon::new();
        lex.insert("joy", AffectVector::new(8.2, 5.5, 6.4)).unwrap();
        lex.insert("gloom", AffectVector::new(2.0, 3.0, 3.5))
            .unwrap();
        lex
    }

    #[test]
    fn lookup_known_unknown_and_empty() {
        let lex = fixture();
        assert_eq!(
            lookup_affect("joy", &lex).unwrap(),
            AffectVector::new(8.2, 5.5, 6.4)
        );
        assert_eq!(lookup_affect("zqxv", &lex).unwrap(), AffectVector::NEUTRAL);
        assert_eq!(AffectVector::NEUTRAL.to_array(), [5.0, 1.0, 5.0]);
        assert!(lookup_affect("", &lex).is_err());
    }

    #[test]
    fn augment_dimensions() {
        let lex = fixture();
        let base = vec![0.01; 1024];
        assert_eq!(
            augment_embedding(&base, "joy", &lex)
                .unwrap()
                .combined
                .len(),
            1027
        );

        let base = [0.1, -0.2, 0.3, 0.4];
        let aug = augment_embedding(&base, "unseen", &lex).unwrap();
        assert_eq!(aug.combined, vec![0.1, -0.2, 0.3, 0.4, 5.0, 1.0, 5.0]);
        assert!(augment_embedding(&[], "joy", &lex).is_err());
    }

    #[test]
    fn sequence_means() {
        let lex = fixture();
        assert_eq!(
            w2av_mean(&["qq", "rr", "ss"], &lex).unwrap(),
            AffectVector::NEUTRAL
        );
        assert_eq!(
            w2av_mean(&["joy"], &lex).unwrap(),
            AffectVector::new(8.2, 5.5, 6.4)
        );
        let m = w2av_mean(&["joy", "oov"], &lex).unwrap();
        assert!((m.valence - 6.6).abs() < 1e-12);
        assert!((m.arousal - 3.25).abs() < 1e-12);
        assert!((m.dominance - 5.7).abs() < 1e-12);
        let empty: [&str; 0] = [];
        assert!(w2av_mean(&empty, &lex).is_err());
    }

    #[test]
    fn csv_validation() {
        let ok = "word,valence,arousal,dominance\njoy,8.2,5.5,6.4\n";
        let lex = AffectLexicon::from_csv_reader(ok.as_bytes(), Path::new("x")).unwrap();
        assert_eq!(lex.len(), 1);
        let out_of_range = "word,valence,arousal,dominance\nbad,9.5,5,5\n";
        assert!(matches!(
            AffectLexicon::from_csv_reader(out_of_range.as_bytes(), Path::new("x")),
            Err(Error::Malformed { line: 2, .. })
        ));
        let short = "h\nbad,1,2\n";
        assert!(AffectLexicon::from_csv_reader(short.as_bytes(), Path::new("x")).is_err());
        assert!(!AffectLexicon::bundled_demo().is_empty());
    }

    #[test]
    fn symmetric_scaling() {
        assert_eq!(
            AffectScaling::Symmetric.apply(AffectVector::new(9.0, 1.0, 5.0)),
            [1.0, -1.0, 0.0]
        );
    }

    proptest! {
        #[test]
        fn mean_is_permutation_invariant(mut words in prop::collection::vec(
            prop::sample::select(vec!["joy", "gloom", "x", "y"]), 1..12), seed in any::<u64>()
        ) {
            use rand::seq::SliceRandom;
            let lex = fixture();
            let a = w2av_mean(&words, &lex).unwrap();
            words.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let b = w2av_mean(&words, &lex).unwrap();
            prop_assert!(a.distance(b) < 1e-12);
        }

        #[test]
        fn augment_preserves_base_and_lexicon_row(
            base in prop::collection::vec(-1.0f64..1.0, 1..16),
            word in prop::sample::select(vec!["joy", "gloom"]),
        ) {
            let lex = fixture();
            let aug = augment_embedding(&base, word, &lex).unwrap();
            prop_assert_eq!(&aug.combined[..base.len()], &base[..]);
            prop_assert_eq!(
                &aug.combined[base.len()..],
                &lookup_affect(word, &lex).unwrap().to_array()[..]
            );
        }

        #[test]
        fn bundled_lookups_stay_in_range(word in "[a-z]{1,8}") {
            let lex = AffectLexicon::bundled_demo();
            let a = lookup_affect(&word, &lex).unwrap();
            prop_assert!(a.to_array().iter().all(|x| (1.0..=9.0).contains(x)));
        }
    }
}
