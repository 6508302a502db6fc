//! Corpus ingestion: cleaning raw text into a token stream, vocabularies,
//! CoNLL-U and tag-lexicon readers, sliding-window samples, and the
//! train/test split.

use std::collections::HashMap;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LexError, Result};
use crate::tags::{reconcile, Reconciled, Upos};

/// Sentinel id for out-of-vocabulary tokens. Embedding lookups resolve it
/// to the table's unknown vector.
pub const UNK_ID: u32 = u32::MAX;

/// Character- and word-level replacement rules applied to raw text.
///
/// Applying the rules twice equals applying them once; the validation in
/// [`CleaningRules::validate`] rejects rule sets that would break that.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleaningRules {
    /// Words and phrases removed outright. Entries are matched
    /// case-insensitively against whitespace tokens, both before and after
    /// character stripping; multi-word entries match consecutive tokens.
    #[serde(default)]
    pub remove_words: Vec<String>,
    /// Characters deleted from every token.
    #[serde(default)]
    pub remove_chars: Vec<char>,
    /// Replacement emitted for all-digit tokens.
    #[serde(default = "default_number_replacement")]
    pub number_replacement: String,
    /// Replacement emitted for email-like tokens.
    #[serde(default = "default_email_replacement")]
    pub email_replacement: String,
    /// Lowercase everything first.
    #[serde(default = "default_true")]
    pub lowercase: bool,
}

fn default_number_replacement() -> String {
    "nummer".to_string()
}

fn default_email_replacement() -> String {
    "email".to_string()
}

fn default_true() -> bool {
    true
}

impl Default for CleaningRules {
    fn default() -> Self {
        CleaningRules {
            remove_words: [
                "re:",
                "aw:",
                "eine",
                "zwei",
                "stunden",
                "sekunden",
                "später",
                "am nächsten",
                "kein betreff",
                "betreff",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            remove_chars: ".,'\"?%&!:;()[]{}*-–—_„“”‘’«»…/\\+=<>|~^§€$#@´`"
                .chars()
                .collect(),
            number_replacement: default_number_replacement(),
            email_replacement: default_email_replacement(),
            lowercase: true,
        }
    }
}

impl CleaningRules {
    /// Loads rules from a JSON file; missing keys fall back to defaults.
    pub fn from_file(path: &Path) -> Result<CleaningRules> {
        let text = fs::read_to_string(path).map_err(|e| LexError::io(path, e))?;
        let rules: CleaningRules = serde_json::from_str(&text)
            .map_err(|e| LexError::parse(path, e.line(), e.to_string()))?;
        rules.validate()?;
        Ok(rules)
    }

    /// Rejects rule sets that cannot be idempotent: replacement strings
    /// must survive a second pass unchanged.
    pub fn validate(&self) -> Result<()> {
        for repl in [&self.number_replacement, &self.email_replacement] {
            if repl.is_empty() || repl.chars().any(char::is_whitespace) {
                return Err(LexError::Config(format!(
                    "replacement {repl:?} must be a single non-empty word"
                )));
            }
            if repl.chars().any(|c| self.remove_chars.contains(&c)) {
                return Err(LexError::Config(format!(
                    "replacement {repl:?} contains a removable character"
                )));
            }
            if repl.chars().all(|c| c.is_ascii_digit()) {
                return Err(LexError::Config(format!(
                    "replacement {repl:?} would itself be replaced as a number"
                )));
            }
            let lowered = repl.to_lowercase();
            if self
                .normalized_remove_words()
                .iter()
                .any(|p| p.len() == 1 && p[0] == lowered)
            {
                return Err(LexError::Config(format!(
                    "replacement {repl:?} is also listed in remove_words"
                )));
            }
        }
        Ok(())
    }

    fn is_email_like(&self, token: &str) -> bool {
        let lower = token.to_lowercase();
        lower.contains('@') || lower.contains("e-mail") || lower.contains("email")
    }

    fn strip_chars(&self, token: &str) -> String {
        token
            .chars()
            .filter(|c| !self.remove_chars.contains(c))
            .collect()
    }

    /// The form a whitespace token takes after the per-token rules, or
    /// `None` when nothing survives. Stable under re-application.
    fn candidate(&self, token: &str) -> Option<String> {
        if self.is_email_like(token) {
            return Some(self.email_replacement.clone());
        }
        let stripped = self.strip_chars(token);
        if stripped.is_empty() {
            return None;
        }
        if stripped.chars().all(|c| c.is_ascii_digit()) {
            return Some(self.number_replacement.clone());
        }
        let no_digits: String = stripped.chars().filter(|c| !c.is_ascii_digit()).collect();
        if no_digits.is_empty() {
            None
        } else {
            Some(no_digits)
        }
    }

    /// remove_words entries normalized the same way tokens are, so that
    /// matching sees both sides in the same shape. Multi-word entries give
    /// phrases; entries that normalize away vanish.
    fn normalized_remove_words(&self) -> Vec<Vec<String>> {
        self.remove_words
            .iter()
            .map(|entry| {
                entry
                    .to_lowercase()
                    .split_whitespace()
                    .filter_map(|w| self.candidate(w))
                    .collect::<Vec<String>>()
            })
            .filter(|p| !p.is_empty())
            .collect()
    }
}

/// One token with an optional word-class tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedToken {
    /// Lowercase surface form; non-empty, never contains whitespace.
    pub form: String,
    /// Word-class label, when known. Free-form so that synthetic grammars
    /// can use their own class names alongside the 13-tag set.
    pub tag: Option<String>,
}

impl TaggedToken {
    pub fn untagged(form: impl Into<String>) -> TaggedToken {
        TaggedToken {
            form: form.into(),
            tag: None,
        }
    }

    pub fn tagged(form: impl Into<String>, tag: impl Into<String>) -> TaggedToken {
        TaggedToken {
            form: form.into(),
            tag: Some(tag.into()),
        }
    }
}

/// Applies the cleaning rules to raw text and returns the token stream.
///
/// Per whitespace token: email detection runs first (the `@` and hyphen are
/// signal), then character stripping, then the all-digits number rule, then
/// word removal. Mixed alphanumeric tokens lose their digits so that no
/// emitted token contains one. Whitespace runs collapse by construction.
pub fn clean_text(raw: &str, rules: &CleaningRules) -> Vec<String> {
    let text = if rules.lowercase {
        raw.to_lowercase()
    } else {
        raw.to_string()
    };

    let mut tokens: Vec<String> = text
        .split_whitespace()
        .filter_map(|tok| rules.candidate(tok))
        .collect();

    let entries = rules.normalized_remove_words();
    let phrases: Vec<&Vec<String>> = entries.iter().filter(|p| p.len() > 1).collect();
    let single_words: HashSet<&String> = entries
        .iter()
        .filter(|p| p.len() == 1)
        .map(|p| &p[0])
        .collect();

    // Removing a phrase makes its neighbours adjacent, which can expose a
    // further match, so sweep until nothing changes.
    loop {
        let mut next = Vec::with_capacity(tokens.len());
        let mut i = 0;
        while i < tokens.len() {
            let matched = phrases
                .iter()
                .filter(|p| tokens[i..].starts_with(p.as_slice()))
                .map(|p| p.len())
                .max()
                .unwrap_or(0);
            if matched > 0 {
                i += matched;
            } else {
                if !single_words.contains(&tokens[i]) {
                    next.push(tokens[i].clone());
                }
                i += 1;
            }
        }
        if next.len() == tokens.len() {
            return next;
        }
        tokens = next;
    }
}

/// Reads a UTF-8 text file and cleans it.
pub fn clean_file(path: &Path, rules: &CleaningRules) -> Result<Vec<String>> {
    let bytes = fs::read(path).map_err(|e| LexError::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| LexError::Decode { path: path.into() })?;
    Ok(clean_text(&text, rules))
}

/// Dense type↔id maps with occurrence counts.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    forms: Vec<String>,
    ids: HashMap<String, u32>,
    counts: Vec<u64>,
    token_count: u64,
}

impl Vocabulary {
    /// Assigns dense ids in first-occurrence order.
    pub fn build<I, S>(tokens: I) -> Vocabulary
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Vocabulary::default();
        for tok in tokens {
            vocab.push(tok.as_ref());
        }
        vocab
    }

    pub fn push(&mut self, form: &str) -> u32 {
        self.token_count += 1;
        match self.ids.get(form) {
            Some(&id) => {
                self.counts[id as usize] += 1;
                id
            }
            None => {
                let id = self.forms.len() as u32;
                self.forms.push(form.to_string());
                self.ids.insert(form.to_string(), id);
                self.counts.push(1);
                id
            }
        }
    }

    /// Adds a type with an explicit count, as when rebuilding a saved
    /// vocabulary. Fails on duplicates.
    pub fn insert_with_count(&mut self, form: &str, count: u64) -> Result<u32> {
        if self.ids.contains_key(form) {
            return Err(LexError::Contract(format!("duplicate vocabulary form {form:?}")));
        }
        let id = self.forms.len() as u32;
        self.forms.push(form.to_string());
        self.ids.insert(form.to_string(), id);
        self.counts.push(count);
        self.token_count += count;
        Ok(id)
    }

    pub fn id(&self, form: &str) -> Option<u32> {
        self.ids.get(form).copied()
    }

    /// The id of `form`, or [`UNK_ID`] when out of vocabulary.
    pub fn id_or_unk(&self, form: &str) -> u32 {
        self.id(form).unwrap_or(UNK_ID)
    }

    pub fn form(&self, id: u32) -> Option<&str> {
        self.forms.get(id as usize).map(String::as_str)
    }

    pub fn forms(&self) -> &[String] {
        &self.forms
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn token_count(&self) -> u64 {
        self.token_count
    }

    pub fn type_count(&self) -> usize {
        self.forms.len()
    }

    /// Writes `id<TAB>form<TAB>count` lines.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (id, form) in self.forms.iter().enumerate() {
            out.push_str(&format!("{id}\t{form}\t{}\n", self.counts[id]));
        }
        fs::write(path, out).map_err(|e| LexError::io(path, e))
    }
}

/// Counters for rows that needed attention while reading tagged input.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReadWarnings {
    /// Tags outside the 13-tag set that were mapped to X.
    pub unknown_tags: usize,
    /// Forms that contained whitespace (replaced with `_`).
    pub odd_forms: usize,
}

/// Reads a CoNLL-U file into a tagged token stream.
///
/// Comment lines and multiword/empty-node rows are skipped; forms are
/// lowercased. Tags reconcile onto the 13-tag set, everything unknown
/// mapping to X with a warning count.
pub fn read_conllu(path: &Path) -> Result<(Vec<TaggedToken>, ReadWarnings)> {
    let text = fs::read_to_string(path).map_err(|e| LexError::io(path, e))?;
    let mut tokens = Vec::new();
    let mut warnings = ReadWarnings::default();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(LexError::parse(
                path,
                lineno,
                format!("expected at least 4 tab-separated columns, found {}", cols.len()),
            ));
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            // multiword ranges and empty nodes duplicate surface words
            continue;
        }
        if id.parse::<u64>().is_err() {
            return Err(LexError::parse(path, lineno, format!("bad token id {id:?}")));
        }
        let mut form = cols[1].to_lowercase();
        if form.is_empty() {
            return Err(LexError::parse(path, lineno, "empty FORM column"));
        }
        if form.chars().any(char::is_whitespace) {
            form = form
                .split_whitespace()
                .collect::<Vec<_>>()
                .join("_");
            warnings.odd_forms += 1;
        }
        let tag = match cols[3] {
            "_" => None,
            raw => Some(match reconcile(raw) {
                Reconciled::Exact(t) | Reconciled::Mapped(t) => t.as_str().to_string(),
                Reconciled::Unknown => {
                    warnings.unknown_tags += 1;
                    Upos::X.as_str().to_string()
                }
            }),
        };
        tokens.push(TaggedToken { form, tag });
    }
    Ok((tokens, warnings))
}

/// Reads a `form<TAB>TAG` lexicon file.
pub fn read_lexicon(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| LexError::io(path, e))?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let (form, tag) = match (parts.next(), parts.next()) {
            (Some(f), Some(t)) if !f.is_empty() && !t.is_empty() => (f, t),
            _ => {
                return Err(LexError::parse(
                    path,
                    lineno + 1,
                    "expected form<TAB>TAG",
                ))
            }
        };
        map.insert(form.to_lowercase(), tag.to_string());
    }
    Ok(map)
}

/// Attaches lexicon tags to a plain token stream.
pub fn tag_with_lexicon(tokens: &[String], lexicon: &HashMap<String, String>) -> Vec<TaggedToken> {
    tokens
        .iter()
        .map(|form| TaggedToken {
            form: form.clone(),
            tag: lexicon.get(form).cloned(),
        })
        .collect()
}

/// Writes one token per line.
pub fn save_tokens(tokens: &[TaggedToken], path: &Path) -> Result<()> {
    let mut out = String::new();
    for tok in tokens {
        out.push_str(&tok.form);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| LexError::io(path, e))
}

/// Reads a one-token-per-line file.
pub fn load_tokens(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| LexError::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// One sliding-window training/probe sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceSample {
    /// Exactly `window` input type ids.
    pub input_ids: Vec<u32>,
    /// Exactly `horizon` successor type ids.
    pub target_ids: Vec<u32>,
    /// Successor class: the tag for horizon 1, `a+b` for horizon 2.
    /// `None` when any successor token is untagged.
    pub label: Option<String>,
    /// Index of the document the window came from.
    pub doc: usize,
}

/// Default input window length.
pub const WINDOW: usize = 9;

/// Builds sliding-window samples over one document, stride 1.
///
/// Emits exactly `max(0, n - window - horizon + 1)` samples; a document
/// shorter than `window + horizon` yields none.
pub fn make_sequences(
    tokens: &[TaggedToken],
    vocab: &Vocabulary,
    window: usize,
    horizon: usize,
    doc: usize,
) -> Vec<SequenceSample> {
    assert!(window >= 1 && (1..=2).contains(&horizon), "window/horizon out of range");
    let n = tokens.len();
    if n < window + horizon {
        return Vec::new();
    }
    let mut samples = Vec::with_capacity(n - window - horizon + 1);
    for start in 0..=(n - window - horizon) {
        let input_ids = tokens[start..start + window]
            .iter()
            .map(|t| vocab.id_or_unk(&t.form))
            .collect();
        let successors = &tokens[start + window..start + window + horizon];
        let target_ids = successors.iter().map(|t| vocab.id_or_unk(&t.form)).collect();
        let label = successors
            .iter()
            .map(|t| t.tag.clone())
            .collect::<Option<Vec<String>>>()
            .map(|tags| tags.join("+"));
        samples.push(SequenceSample {
            input_ids,
            target_ids,
            label,
            doc,
        });
    }
    samples
}

/// Builds samples across several documents; windows never span documents.
pub fn make_sequences_multi(
    docs: &[Vec<TaggedToken>],
    vocab: &Vocabulary,
    window: usize,
    horizon: usize,
) -> Vec<SequenceSample> {
    let mut all = Vec::new();
    for (doc, tokens) in docs.iter().enumerate() {
        all.extend(make_sequences(tokens, vocab, window, horizon, doc));
    }
    all
}

/// How to divide samples between training and test.
#[derive(Debug, Clone)]
pub enum SplitSpec {
    /// Train fraction in (0, 1); cut at the nearest sample index.
    Fraction(f64),
    /// Document indices whose samples form the test set.
    TestDocs(Vec<usize>),
}

/// Splits samples into disjoint train and test sets whose union is the
/// input, preserving order.
pub fn split_samples(
    samples: Vec<SequenceSample>,
    spec: &SplitSpec,
) -> Result<(Vec<SequenceSample>, Vec<SequenceSample>)> {
    match spec {
        SplitSpec::Fraction(f) => {
            if !(*f > 0.0 && *f < 1.0) {
                return Err(LexError::Config(format!(
                    "split fraction {f} outside (0, 1)"
                )));
            }
            let cut = (samples.len() as f64 * f).round() as usize;
            let cut = cut.min(samples.len());
            let mut train = samples;
            let test = train.split_off(cut);
            Ok((train, test))
        }
        SplitSpec::TestDocs(docs) => {
            let (test, train) = samples.into_iter().partition(|s| docs.contains(&s.doc));
            Ok((train, test))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rules() -> CleaningRules {
        CleaningRules::default()
    }

    #[test]
    fn email_replacement() {
        assert_eq!(clean_text("E-Mail", &rules()), vec!["email"]);
    }

    #[test]
    fn empty_input_is_empty() {
        assert_eq!(clean_text("", &rules()), Vec::<String>::new());
    }

    #[test]
    fn subject_line_cleans_to_number_and_email() {
        assert_eq!(
            clean_text("Betreff: 18 E-Mail!!", &rules()),
            vec!["nummer", "email"]
        );
    }

    #[test]
    fn phrase_removal_spans_tokens() {
        assert_eq!(
            clean_text("kein betreff heute", &rules()),
            vec!["heute"]
        );
        // "kein" alone is not a rule word, only the phrase is
        assert_eq!(clean_text("kein wort", &rules()), vec!["kein", "wort"]);
    }

    #[test]
    fn cleaning_is_idempotent_on_sample() {
        let text = "Betreff: AW: Liebe Emmi, 1.500 Gründe!  E-Mails?? später";
        let once = clean_text(text, &rules());
        let again = clean_text(&once.join(" "), &rules());
        assert_eq!(once, again);
    }

    #[test]
    fn invalid_rules_rejected() {
        let mut r = rules();
        r.number_replacement = "42".into();
        assert!(r.validate().is_err());
        let mut r = rules();
        r.email_replacement = "e!".into();
        assert!(r.validate().is_err());
        let mut r = rules();
        r.remove_words.push("nummer".into());
        assert!(r.validate().is_err());
        assert!(rules().validate().is_ok());
    }

    #[test]
    fn vocab_counts_and_order() {
        let v = Vocabulary::build(["a", "b", "a"]);
        assert_eq!(v.token_count(), 3);
        assert_eq!(v.type_count(), 2);
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.id("b"), Some(1));
        assert_eq!(v.count(0), 2);
        assert_eq!(v.count(1), 1);
        assert_eq!(v.id_or_unk("zzz"), UNK_ID);

        let empty = Vocabulary::build(Vec::<String>::new());
        assert_eq!(empty.token_count(), 0);
        assert_eq!(empty.type_count(), 0);
    }

    #[test]
    fn conllu_basic_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.conllu");
        std::fs::write(
            &path,
            "# text = Haus\n1\tHaus\thaus\tNOUN\t_\t_\t0\troot\t_\t_\n\
             2-3\tzum\t_\t_\t_\t_\t_\t_\t_\t_\n\
             2\tzu\tzu\tADP\t_\t_\t1\tcase\t_\t_\n\
             3\tdem\tder\tCCONJ\t_\t_\t1\tdet\t_\t_\n\
             4\tfoo\tfoo\tINTJ\t_\t_\t1\t_\t_\t_\n",
        )
        .unwrap();
        let (toks, warn) = read_conllu(&path).unwrap();
        assert_eq!(toks.len(), 4);
        assert_eq!(toks[0], TaggedToken::tagged("haus", "NOUN"));
        assert_eq!(toks[1], TaggedToken::tagged("zu", "ADP"));
        assert_eq!(toks[2], TaggedToken::tagged("dem", "CONJ"));
        assert_eq!(toks[3], TaggedToken::tagged("foo", "X"));
        assert_eq!(warn.unknown_tags, 1);
    }

    #[test]
    fn conllu_malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conllu");
        std::fs::write(&path, "1\tHaus\thaus\tNOUN\n1 Haus\n").unwrap();
        let err = read_conllu(&path).unwrap_err();
        match err {
            LexError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    fn toks(n: usize) -> Vec<TaggedToken> {
        (0..n)
            .map(|i| TaggedToken::tagged(format!("w{i}"), "NOUN"))
            .collect()
    }

    #[test]
    fn sequence_counts() {
        let tokens = toks(11);
        let vocab = Vocabulary::build(tokens.iter().map(|t| t.form.clone()));
        assert_eq!(make_sequences(&tokens, &vocab, 9, 1, 0).len(), 2);
        assert_eq!(make_sequences(&tokens, &vocab, 9, 2, 0).len(), 1);
        assert_eq!(make_sequences(&toks(9), &vocab, 9, 1, 0).len(), 0);
    }

    #[test]
    fn sequence_labels_pair_for_horizon_two() {
        let mut tokens = toks(10);
        tokens.push(TaggedToken::tagged("v", "VERB"));
        let vocab = Vocabulary::build(tokens.iter().map(|t| t.form.clone()));
        let samples = make_sequences(&tokens, &vocab, 9, 2, 0);
        assert_eq!(samples[0].label.as_deref(), Some("NOUN+VERB"));
    }

    #[test]
    fn untagged_successor_gives_no_label() {
        let mut tokens = toks(9);
        tokens.push(TaggedToken::untagged("x"));
        let vocab = Vocabulary::build(tokens.iter().map(|t| t.form.clone()));
        let samples = make_sequences(&tokens, &vocab, 9, 1, 0);
        assert_eq!(samples[0].label, None);
    }

    #[test]
    fn split_by_fraction() {
        let tokens = toks(109);
        let vocab = Vocabulary::build(tokens.iter().map(|t| t.form.clone()));
        let samples = make_sequences(&tokens, &vocab, 9, 1, 0);
        assert_eq!(samples.len(), 100);
        let (train, test) = split_samples(samples, &SplitSpec::Fraction(0.8)).unwrap();
        assert_eq!(train.len(), 80);
        assert_eq!(test.len(), 20);
        assert!(split_samples(Vec::new(), &SplitSpec::Fraction(1.5)).is_err());
    }

    #[test]
    fn split_by_documents() {
        let docs = vec![toks(20), toks(15)];
        let vocab = Vocabulary::build(docs.iter().flatten().map(|t| t.form.clone()));
        let samples = make_sequences_multi(&docs, &vocab, 9, 1);
        let total = samples.len();
        let (train, test) = split_samples(samples, &SplitSpec::TestDocs(vec![1])).unwrap();
        assert!(train.iter().all(|s| s.doc == 0));
        assert!(test.iter().all(|s| s.doc == 1));
        assert_eq!(train.len() + test.len(), total);
    }

    proptest! {
        #[test]
        fn cleaning_idempotent(raw in "[ a-zA-Z0-9äöüß@.,!?:%&'\"-]{0,60}") {
            let once = clean_text(&raw, &rules());
            let again = clean_text(&once.join(" "), &rules());
            prop_assert_eq!(once, again);
        }

        #[test]
        fn no_forbidden_characters_emitted(raw in "[ a-zA-Z0-9äöüß@.,!?:%&'\"-]{0,60}") {
            let r = rules();
            for tok in clean_text(&raw, &r) {
                prop_assert!(!tok.is_empty());
                prop_assert!(!tok.chars().any(|c| c.is_uppercase()));
                prop_assert!(
                    tok == r.number_replacement || !tok.chars().any(|c| c.is_ascii_digit())
                );
                prop_assert!(!tok.chars().any(|c| r.remove_chars.contains(&c)));
            }
        }

        #[test]
        fn sequence_count_formula(n in 0usize..40, h in 1usize..3) {
            let tokens = toks(n);
            let vocab = Vocabulary::build(tokens.iter().map(|t| t.form.clone()));
            let count = make_sequences(&tokens, &vocab, 9, h, 0).len();
            prop_assert_eq!(count, n.saturating_sub(9 + h - 1));
        }

        #[test]
        fn split_partitions_input(n in 20usize..120, f in 0.05f64..0.95) {
            let tokens = toks(n);
            let vocab = Vocabulary::build(tokens.iter().map(|t| t.form.clone()));
            let samples = make_sequences(&tokens, &vocab, 9, 1, 0);
            let total = samples.len();
            let (train, test) = split_samples(samples.clone(), &SplitSpec::Fraction(f)).unwrap();
            prop_assert_eq!(train.len() + test.len(), total);
            let mut rejoined = train;
            rejoined.extend(test);
            prop_assert_eq!(rejoined, samples);
        }
    }
}
