//! Text normalization shared by dialog and review corpora.

use std::sync::OnceLock;

use regex::Regex;

/// Fixed contraction table. Possessive/ambiguous `'s` forms are left alone.
const CONTRACTIONS: &[(&str, &str)] = &[
    ("ain't", "is not"),
    ("aren't", "are not"),
    ("can't", "cannot"),
    ("couldn't", "could not"),
    ("didn't", "did not"),
    ("doesn't", "does not"),
    ("don't", "do not"),
    ("hadn't", "had not"),
    ("hasn't", "has not"),
    ("haven't", "have not"),
    ("isn't", "is not"),
    ("mightn't", "might not"),
    ("mustn't", "must not"),
    ("needn't", "need not"),
    ("shan't", "shall not"),
    ("shouldn't", "should not"),
    ("wasn't", "was not"),
    ("weren't", "were not"),
    ("won't", "will not"),
    ("wouldn't", "would not"),
    ("i'm", "i am"),
    ("i've", "i have"),
    ("i'll", "i will"),
    ("i'd", "i would"),
    ("you're", "you are"),
    ("you've", "you have"),
    ("you'll", "you will"),
    ("you'd", "you would"),
    ("he'll", "he will"),
    ("he'd", "he would"),
    ("she'll", "she will"),
    ("she'd", "she would"),
    ("it'll", "it will"),
    ("we're", "we are"),
    ("we've", "we have"),
    ("we'll", "we will"),
    ("we'd", "we would"),
    ("they're", "they are"),
    ("they've", "they have"),
    ("they'll", "they will"),
    ("they'd", "they would"),
    ("that'll", "that will"),
    ("there're", "there are"),
    ("let's", "let us"),
    ("y'all", "you all"),
];

/// Suffix rules applied when a word is not in [`CONTRACTIONS`].
const SUFFIXES: &[(&str, &str)] = &[
    ("n't", " not"),
    ("'re", " are"),
    ("'ll", " will"),
    ("'ve", " have"),
    ("'m", " am"),
    ("'d", " would"),
];

const END_PUNCTUATION: &[char] = &['.', '!', '?'];

/// Characters split off the edges of whitespace tokens.
pub(crate) fn is_edge_punctuation(c: char) -> bool {
    matches!(
        c,
        '.' | ',' | '!' | '?' | ';' | ':' | '"' | '(' | ')' | '[' | ']' | '{' | '}'
    )
}

fn entity_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"&(#?[a-z0-9]+);").expect("valid entity pattern"))
}

fn replace_entities(text: &str) -> String {
    entity_regex()
        .replace_all(text, |caps: &regex::Captures<'_>| match &caps[1] {
            "amp" => " and ",
            "#39" | "#x27" | "apos" | "rsquo" | "lsquo" => "'",
            _ => " ",
        })
        .into_owned()
}

fn expand_word(core: &str) -> Option<String> {
    if let Some((_, full)) = CONTRACTIONS.iter().find(|(short, _)| *short == core) {
        return Some((*full).to_string());
    }
    for (suffix, replacement) in SUFFIXES {
        if let Some(stem) = core.strip_suffix(suffix) {
            if !stem.is_empty() && stem.chars().all(|c| c.is_alphanumeric()) {
                return Some(format!("{stem}{replacement}"));
            }
        }
    }
    None
}

fn expand_contractions(text: &str) -> String {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let start = word
            .find(|c: char| !is_edge_punctuation(c))
            .unwrap_or(word.len());
        let end = word
            .rfind(|c: char| !is_edge_punctuation(c))
            .map(|i| i + word[i..].chars().next().map_or(1, char::len_utf8))
            .unwrap_or(start)
            .max(start);
        let (lead, core, trail) = (&word[..start], &word[start..end], &word[end..]);
        match expand_word(core) {
            Some(expanded) => out.push(format!("{lead}{expanded}{trail}")),
            None => out.push(word.to_string()),
        }
    }
    out.join(" ")
}

fn compress_end_punctuation(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last: Option<char> = None;
    for c in text.chars() {
        if END_PUNCTUATION.contains(&c) && last == Some(c) {
            continue;
        }
        out.push(c);
        last = Some(c);
    }
    out
}

/// Lowercase, strip HTML entities, expand contractions, compress repeated
/// end punctuation and collapse whitespace.
pub fn preprocess_text(raw: &str) -> String {
    let lowered = raw.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'");
    let no_entities = replace_entities(&lowered);
    let expanded = expand_contractions(&no_entities);
    let compressed = compress_end_punctuation(&expanded);
    compressed.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace tokenization with edge punctuation split into separate tokens.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut rest = chunk;
        while let Some(c) = rest.chars().next().filter(|c| is_edge_punctuation(*c)) {
            tokens.push(&rest[..c.len_utf8()]);
            rest = &rest[c.len_utf8()..];
        }
        let mut trailing = Vec::new();
        while let Some(c) = rest.chars().next_back().filter(|c| is_edge_punctuation(*c)) {
            let cut = rest.len() - c.len_utf8();
            trailing.push(&rest[cut..]);
            rest = &rest[..cut];
        }
        if !rest.is_empty() {
            tokens.push(rest);
        }
        tokens.extend(trailing.into_iter().rev());
    }
    tokens
}
