//! Utterance normalisation and word-feature state vectors.
//!
//! System words are hit-or-miss features (1.0 when present); user words carry
//! their recognition confidence and win on overlap. Two input pipelines exist:
//! raw words, and compressed words where slot values are delexicalised to
//! `$slot` ids and unknown words are mapped through a synonym table.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercases, removes apostrophes, turns other punctuation into spaces and
/// splits on whitespace. `$` and `_` are kept so slot ids and venue
/// placeholders survive.
pub fn tokenize(text: &str) -> Vec<String> {
    let kept = |c: char| c.is_alphanumeric() || c == '$' || c == '_';
    let mut cleaned = String::with_capacity(text.len());
    for c in text.chars().filter(|&c| c != '\'' && c != '’') {
        if kept(c) {
            cleaned.extend(c.to_lowercase().filter(|&l| kept(l)));
        } else {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().map(str::to_owned).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compression {
    Raw,
    #[serde(alias = "delexicalised+synonymised", alias = "compressed")]
    DelexSyn,
}

impl std::str::FromStr for Compression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Compression::Raw),
            "delex_syn" | "compressed" | "delexicalised+synonymised" => Ok(Compression::DelexSyn),
            other => Err(Error::Config(format!("unknown compression `{other}`"))),
        }
    }
}

impl std::fmt::Display for Compression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Compression::Raw => "raw",
            Compression::DelexSyn => "delex_syn",
        })
    }
}

/// Sorted, duplicate-free token list; a token's rank is its feature index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from any tokens, ignoring `_`-prefixed placeholders.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = tokens
            .into_iter()
            .map(|t| t.as_ref().to_owned())
            .filter(|t| !t.is_empty() && !t.starts_with('_'))
            .collect();
        let tokens: Vec<String> = set.into_iter().collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    /// Induces the feature vocabulary of `corpus` for the given pipeline.
    ///
    /// With compression, slot values become slot ids and words that have a
    /// synonym already in the vocabulary are folded into it.
    pub fn induce<'a, I>(corpus: I, compression: Compression, lexicon: &SlotLexicon, synonyms: &SynonymMap) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        match compression {
            Compression::Raw => Self::from_tokens(corpus.into_iter().flatten()),
            Compression::DelexSyn => {
                let delex: BTreeSet<String> = corpus
                    .into_iter()
                    .flat_map(|toks| delexicalize(toks, lexicon))
                    .collect();
                let kept = delex
                    .iter()
                    .filter(|t| !synonyms.get(t).is_some_and(|img| delex.contains(img)))
                    .cloned()
                    .collect::<Vec<_>>();
                Self::from_tokens(kept)
            }
        }
    }

    pub fn union(vocabs: &[&Vocabulary]) -> Self {
        Self::from_tokens(vocabs.iter().flat_map(|v| v.tokens.iter()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// One token per line.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Self {
        Self::from_tokens(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }
}

/// Surface value → `$slot` id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SlotLexicon {
    values: BTreeMap<String, String>,
}

impl SlotLexicon {
    /// Parses `value<TAB>$slot` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = Self::default();
        for (n, line) in content_lines(text) {
            let (value, slot) = split_pair(line, n)?;
            if !slot.starts_with('$') {
                return Err(Error::Parse {
                    line: n,
                    msg: format!("slot id `{slot}` must start with `$`"),
                });
            }
            lex.insert(value, slot)?;
        }
        Ok(lex)
    }

    pub fn insert(&mut self, value: &str, slot_id: &str) -> Result<()> {
        let value = value.to_lowercase();
        match self.values.get(&value) {
            Some(existing) if existing != slot_id => Err(Error::Config(format!(
                "value `{value}` maps to both {existing} and {slot_id}"
            ))),
            _ => {
                self.values.insert(value, slot_id.to_owned());
                Ok(())
            }
        }
    }

    /// Slot id for a surface value, e.g. `edinburgh` → `$h_city`.
    pub fn slot_of(&self, value: &str) -> Option<&str> {
        self.values.get(value).map(String::as_str)
    }

    /// Surface values of a slot (given with or without `$`), sorted.
    pub fn values_of(&self, slot: &str) -> Vec<&str> {
        let id = slot_id(slot);
        self.values
            .iter()
            .filter(|(_, s)| **s == id)
            .map(|(v, _)| v.as_str())
            .collect()
    }

    /// Sub-lexicon covering only the listed slots.
    pub fn restricted_to(&self, slots: &[String]) -> Self {
        let ids: BTreeSet<String> = slots.iter().map(|s| slot_id(s)).collect();
        Self {
            values: self
                .values
                .iter()
                .filter(|(_, s)| ids.contains(*s))
                .map(|(v, s)| (v.clone(), s.clone()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(v, s)| (v.as_str(), s.as_str()))
    }
}

/// `h_city` → `$h_city`; ids already prefixed pass through.
pub fn slot_id(slot: &str) -> String {
    if slot.starts_with('$') {
        slot.to_owned()
    } else {
        format!("${slot}")
    }
}

/// Replaces every lexicon value with its slot id.
pub fn delexicalize(tokens: &[String], lexicon: &SlotLexicon) -> Vec<String> {
    tokens
        .iter()
        .map(|t| lexicon.slot_of(t).map_or_else(|| t.clone(), str::to_owned))
        .collect()
}

/// Unknown word → known word.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SynonymMap {
    map: BTreeMap<String, String>,
}

impl SynonymMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in content_lines(text) {
            let (word, syn) = split_pair(line, n)?;
            map.insert(word.to_lowercase(), syn.to_lowercase());
        }
        Ok(Self { map })
    }

    pub fn from_pairs<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        Self {
            map: pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect(),
        }
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.map.get(word).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }
}

/// Keeps known words, maps unknown words with a known synonym, drops the rest.
pub fn synonymize(tokens: &[String], syn: &SynonymMap, vocab: &Vocabulary) -> Vec<String> {
    tokens.iter().filter_map(|t| map_word(t, syn, vocab)).collect()
}

fn map_word(token: &str, syn: &SynonymMap, vocab: &Vocabulary) -> Option<String> {
    if vocab.contains(token) {
        return Some(token.to_owned());
    }
    syn.get(token).filter(|img| vocab.contains(img)).map(str::to_owned)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Absent,
    System,
    User,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub values: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

impl StateVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
            provenance: vec![Provenance::Absent; dim],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Indices with a nonzero value.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.values.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, _)| i)
    }
}

/// Places system words as 1.0 and user words at their confidence; user words
/// override system words. Tokens outside `vocab` are ignored.
pub fn vectorize(system_tokens: &[String], user_tokens: &[(String, f64)], vocab: &Vocabulary) -> StateVector {
    let mut sv = StateVector::zeros(vocab.len());
    for t in system_tokens {
        if let Some(i) = vocab.index_of(t) {
            sv.values[i] = 1.0;
            sv.provenance[i] = Provenance::System;
        }
    }
    let mut user_seen = vec![false; vocab.len()];
    for (t, conf) in user_tokens {
        if let Some(i) = vocab.index_of(t) {
            let conf = conf.clamp(0.0, 1.0);
            // Repeated user words keep the highest confidence.
            sv.values[i] = if user_seen[i] { sv.values[i].max(conf) } else { conf };
            sv.provenance[i] = Provenance::User;
            user_seen[i] = true;
        }
    }
    sv
}

/// Word pipeline of one agent: vocabulary plus the compression tables.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    pub vocab: Vocabulary,
    pub compression: Compression,
    pub lexicon: SlotLexicon,
    pub synonyms: SynonymMap,
}

impl FeatureExtractor {
    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    /// Maps one word to its feature token, if it has one.
    pub fn feature_of(&self, token: &str) -> Option<String> {
        match self.compression {
            Compression::Raw => self.vocab.contains(token).then(|| token.to_owned()),
            Compression::DelexSyn => {
                let t = self.lexicon.slot_of(token).unwrap_or(token);
                map_word(t, &self.synonyms, &self.vocab)
            }
        }
    }

    pub fn system_features(&self, tokens: &[String]) -> Vec<String> {
        tokens.iter().filter_map(|t| self.feature_of(t)).collect()
    }

    pub fn user_features(&self, tokens: &[(String, f64)]) -> Vec<(String, f64)> {
        tokens
            .iter()
            .filter_map(|(t, c)| self.feature_of(t).map(|f| (f, *c)))
            .collect()
    }

    pub fn state(&self, system_tokens: &[String], user_tokens: &[(String, f64)]) -> StateVector {
        vectorize(
            &self.system_features(system_tokens),
            &self.user_features(user_tokens),
            &self.vocab,
        )
    }
}

/// Non-empty, non-comment lines with 1-based line numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
}

pub(crate) fn split_pair(line: &str, n: usize) -> Result<(&str, &str)> {
    let mut parts = line.splitn(2, '\t');
    match (parts.next(), parts.next()) {
        (Some(a), Some(b)) if !a.trim().is_empty() && !b.trim().is_empty() => Ok((a.trim(), b.trim())),
        _ => Err(Error::Parse {
            line: n,
            msg: format!("expected two tab-separated fields, got `{line}`"),
        }),
    }
}
