//! Corpus preparation: character lines, synthetic-language mappings,
//! structural ablations, interleaving, and the train/dev split.
//!
//! Raw text flows through digit stripping and optional script normalization,
//! is split into one line per word with each word exploded into character
//! tokens between boundary markers, optionally rewritten by a
//! [`MappingTable`] into integer-string tokens, interleaved with the other
//! language side line by line, and finally partitioned into train and dev
//! sets with a seeded shuffle.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Literal token marking the start of a word.
pub const START_TOKEN: &str = "<s>";
/// Literal token marking the end of a word.
pub const END_TOKEN: &str = "</s>";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("duplicate character {0:?} in alphabet")]
    DuplicateAlphabetChar(char),
    #[error("dev fraction must lie in (0,1), got {0}")]
    BadFraction(f64),
    #[error("unknown setup id {0:?}")]
    UnknownSetup(String),
}

/// One corpus line: a word (or trigram window) as ordered character tokens.
///
/// Word-mode lines carry [`START_TOKEN`]/[`END_TOKEN`] as their first and
/// last tokens; trigram-mode lines are bare.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharLine {
    pub tokens: Vec<String>,
}

impl CharLine {
    /// Word-mode line: brackets the given character tokens.
    pub fn word<I: IntoIterator<Item = String>>(chars: I) -> Self {
        let mut tokens = vec![START_TOKEN.to_string()];
        tokens.extend(chars);
        tokens.push(END_TOKEN.to_string());
        Self { tokens }
    }

    /// Bare line without boundary tokens (trigram mode).
    pub fn bare<I: IntoIterator<Item = String>>(chars: I) -> Self {
        Self {
            tokens: chars.into_iter().collect(),
        }
    }

    pub fn is_bracketed(&self) -> bool {
        self.tokens.len() >= 2
            && self.tokens.first().map(String::as_str) == Some(START_TOKEN)
            && self.tokens.last().map(String::as_str) == Some(END_TOKEN)
    }

    /// Tokens without boundary markers.
    pub fn inner_tokens(&self) -> &[String] {
        if self.is_bracketed() {
            &self.tokens[1..self.tokens.len() - 1]
        } else {
            &self.tokens
        }
    }

    pub fn parse(line: &str) -> Self {
        Self {
            tokens: line.split_whitespace().map(str::to_string).collect(),
        }
    }
}

impl fmt::Display for CharLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(t)?;
        }
        Ok(())
    }
}

/// Removes ASCII digits; run before any fake mapping so mapped integer
/// tokens are never touched.
pub fn strip_digits(text: &str) -> String {
    text.chars().filter(|c| !c.is_ascii_digit()).collect()
}

/// Rewrites German umlauts and sharp s to their base letters so German text
/// fits the 52-entry Latin mapping. Case is preserved.
pub fn normalize_german(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            'ä' => out.push('a'),
            'ö' => out.push('o'),
            'ü' => out.push('u'),
            'Ä' => out.push('A'),
            'Ö' => out.push('O'),
            'Ü' => out.push('U'),
            'ß' => out.push_str("ss"),
            'ẞ' => out.push_str("SS"),
            _ => out.push(c),
        }
    }
    out
}

/// Lowercases, strips combining marks via canonical decomposition, and folds
/// final sigma to sigma.
pub fn normalize_greek(text: &str) -> String {
    text.to_lowercase()
        .nfd()
        .filter(|c| !unicode_normalization::char::is_combining_mark(*c))
        .map(|c| if c == 'ς' { 'σ' } else { c })
        .collect()
}

/// Splits whitespace-delimited words into bracketed character lines.
/// Non-alphabetic characters are dropped; words left empty are skipped.
pub fn split_to_char_lines(text: &str) -> Vec<CharLine> {
    text.split_whitespace()
        .filter_map(|word| {
            let chars: Vec<String> = word
                .chars()
                .filter(|c| c.is_alphabetic())
                .map(|c| c.to_string())
                .collect();
            if chars.is_empty() {
                None
            } else {
                Some(CharLine::word(chars))
            }
        })
        .collect()
}

/// The 52-character English alphabet in mapping order: a-z then A-Z.
pub fn english_alphabet() -> Vec<char> {
    ('a'..='z').chain('A'..='Z').collect()
}

/// Character-to-token-string substitution used to synthesize fake languages.
///
/// Single-token tables are invertible; one-to-many perturbations (f1/f2,
/// overlap-3) are flagged non-invertible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MappingTable {
    entries: BTreeMap<char, Vec<String>>,
    invertible: bool,
    inverse: HashMap<String, char>,
}

impl MappingTable {
    fn from_entries(entries: BTreeMap<char, Vec<String>>) -> Self {
        let single_only = entries.values().all(|v| v.len() == 1);
        let mut inverse = HashMap::new();
        let mut injective = true;
        for (&ch, image) in &entries {
            if image.len() == 1 && inverse.insert(image[0].clone(), ch).is_some() {
                injective = false;
            }
        }
        let invertible = single_only && injective;
        if !invertible {
            inverse.clear();
        }
        Self {
            entries,
            invertible,
            inverse,
        }
    }

    /// Empty table; `apply` is the identity.
    pub fn empty() -> Self {
        Self::from_entries(BTreeMap::new())
    }

    pub fn is_invertible(&self) -> bool {
        self.invertible
    }

    pub fn image(&self, ch: char) -> Option<&[String]> {
        self.entries.get(&ch).map(Vec::as_slice)
    }

    /// Original character for a token of an invertible table.
    pub fn invert_token(&self, token: &str) -> Option<char> {
        self.inverse.get(token).copied()
    }

    /// Rewrites each mapped character token to its image token list;
    /// boundary tokens and unmapped tokens pass through unchanged.
    pub fn apply(&self, line: &CharLine) -> CharLine {
        let mut tokens = Vec::with_capacity(line.tokens.len());
        for tok in &line.tokens {
            let mapped = tok
                .chars()
                .next()
                .filter(|_| tok.chars().count() == 1)
                .and_then(|c| self.entries.get(&c));
            match mapped {
                Some(image) => tokens.extend(image.iter().cloned()),
                None => tokens.push(tok.clone()),
            }
        }
        CharLine { tokens }
    }

    /// Inverse of `apply` for invertible tables; unmapped tokens pass
    /// through. Returns `None` for non-invertible tables.
    pub fn unapply(&self, line: &CharLine) -> Option<CharLine> {
        if !self.invertible {
            return None;
        }
        let tokens = line
            .tokens
            .iter()
            .map(|tok| match self.inverse.get(tok) {
                Some(&c) => c.to_string(),
                None => tok.clone(),
            })
            .collect();
        Some(CharLine { tokens })
    }
}

/// Maps the i-th alphabet character to the token string `base + i`.
pub fn build_fake_mapping(alphabet: &[char], base: u32) -> Result<MappingTable, CorpusError> {
    let mut entries = BTreeMap::new();
    for (i, &ch) in alphabet.iter().enumerate() {
        if entries
            .insert(ch, vec![(base + i as u32).to_string()])
            .is_some()
        {
            return Err(CorpusError::DuplicateAlphabetChar(ch));
        }
    }
    Ok(MappingTable::from_entries(entries))
}

/// Base-100 English table with 'f' split into two consecutive tokens
/// ("200","201") and 'F' into ("202","203").
pub fn make_f1f2_table(base_table: &MappingTable) -> MappingTable {
    let mut entries = base_table.entries.clone();
    entries.insert('f', vec!["200".into(), "201".into()]);
    entries.insert('F', vec!["202".into(), "203".into()]);
    MappingTable::from_entries(entries)
}

/// Each character maps to the tokens of itself and the next two characters,
/// wrapping within its 26-letter case block.
pub fn make_overlap3_table(base_table: &MappingTable) -> MappingTable {
    let blocks: [Vec<char>; 2] = [('a'..='z').collect(), ('A'..='Z').collect()];
    let mut entries = BTreeMap::new();
    for block in &blocks {
        for (i, &ch) in block.iter().enumerate() {
            let mut image = Vec::with_capacity(3);
            for step in 0..3 {
                let src = block[(i + step) % block.len()];
                let tok = base_table
                    .image(src)
                    .expect("base table covers the alphabet")[0]
                    .clone();
                image.push(tok);
            }
            entries.insert(ch, image);
        }
    }
    MappingTable::from_entries(entries)
}

/// Rewrites a word line into overlapping bare trigram lines: a word of n
/// characters yields max(1, n-2) lines; short words emit one line with all
/// their characters.
pub fn trigramize(line: &CharLine) -> Vec<CharLine> {
    let chars = line.inner_tokens();
    if chars.len() < 3 {
        return vec![CharLine::bare(chars.to_vec())];
    }
    chars
        .windows(3)
        .map(|w| CharLine::bare(w.to_vec()))
        .collect()
}

/// Alternates lines from both sides; when one side runs out, the rest of the
/// other follows.
pub fn interleave(a: Vec<CharLine>, b: Vec<CharLine>) -> Vec<CharLine> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut ia = a.into_iter();
    let mut ib = b.into_iter();
    loop {
        match (ia.next(), ib.next()) {
            (Some(x), Some(y)) => {
                out.push(x);
                out.push(y);
            }
            (Some(x), None) => {
                out.push(x);
                out.extend(ia.by_ref());
                break;
            }
            (None, Some(y)) => {
                out.push(y);
                out.extend(ib.by_ref());
                break;
            }
            (None, None) => break,
        }
    }
    out
}

/// Seeded uniform partition; `round(fraction * n)` lines go to dev. Relative
/// input order is preserved within each part.
pub fn split_dev(
    lines: Vec<CharLine>,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<CharLine>, Vec<CharLine>), CorpusError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::BadFraction(fraction));
    }
    let n = lines.len();
    let n_dev = (fraction * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut is_dev = vec![false; n];
    for &i in order.iter().take(n_dev) {
        is_dev[i] = true;
    }
    let mut train = Vec::with_capacity(n - n_dev);
    let mut dev = Vec::with_capacity(n_dev);
    for (line, dev_flag) in lines.into_iter().zip(is_dev) {
        if dev_flag {
            dev.push(line);
        } else {
            train.push(line);
        }
    }
    Ok((train, dev))
}

/// The seven corpus setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetupId {
    EngFakeBase,
    EngFakeF1F2,
    EngFakeOverlap3,
    EngFakeTrigram,
    EngDeu,
    EngEll,
    DeuEll,
}

impl SetupId {
    pub const ALL: [SetupId; 7] = [
        SetupId::EngFakeBase,
        SetupId::EngFakeF1F2,
        SetupId::EngFakeOverlap3,
        SetupId::EngFakeTrigram,
        SetupId::EngDeu,
        SetupId::EngEll,
        SetupId::DeuEll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SetupId::EngFakeBase => "EngFake_base",
            SetupId::EngFakeF1F2 => "EngFake_f1f2",
            SetupId::EngFakeOverlap3 => "EngFake_overlap3",
            SetupId::EngFakeTrigram => "EngFake_trigram",
            SetupId::EngDeu => "EngDeu",
            SetupId::EngEll => "EngEll",
            SetupId::DeuEll => "DeuEll",
        }
    }

    /// Setups whose two sides share a script and therefore map one side to
    /// integer tokens.
    pub fn uses_mapping(self) -> bool {
        matches!(
            self,
            SetupId::EngFakeBase
                | SetupId::EngFakeF1F2
                | SetupId::EngFakeOverlap3
                | SetupId::EngFakeTrigram
                | SetupId::EngDeu
        )
    }

    /// Setups that synthesize their second side from the one input file.
    pub fn single_input(self) -> bool {
        matches!(
            self,
            SetupId::EngFakeBase
                | SetupId::EngFakeF1F2
                | SetupId::EngFakeOverlap3
                | SetupId::EngFakeTrigram
        )
    }
}

impl FromStr for SetupId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SetupId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| CorpusError::UnknownSetup(s.to_string()))
    }
}

impl fmt::Display for SetupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(s: &str) -> CharLine {
        CharLine::parse(s)
    }

    #[test]
    fn strip_digits_examples() {
        assert_eq!(strip_digits("room 101"), "room ");
        assert_eq!(strip_digits("abc"), "abc");
        assert_eq!(strip_digits("2021 budget"), " budget");
    }

    #[test]
    fn split_words_into_bracketed_char_lines() {
        let lines = split_to_char_lines("the cat");
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].to_string(), "<s> t h e </s>");
        assert_eq!(lines[1].to_string(), "<s> c a t </s>");
        assert!(split_to_char_lines("").is_empty());
        assert_eq!(split_to_char_lines("a")[0].to_string(), "<s> a </s>");
    }

    #[test]
    fn fake_mapping_assigns_consecutive_integers() {
        let table = build_fake_mapping(&english_alphabet(), 100).unwrap();
        assert_eq!(table.image('a').unwrap(), ["100"]);
        assert_eq!(table.image('b').unwrap(), ["101"]);
        assert_eq!(table.image('A').unwrap(), ["126"]);
        assert_eq!(table.image('Z').unwrap(), ["151"]);
        assert!(table.is_invertible());
        assert_eq!(table.invert_token("125"), Some('z'));
    }

    #[test]
    fn duplicate_alphabet_char_is_rejected() {
        let err = build_fake_mapping(&['a', 'a'], 100).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateAlphabetChar('a')));
    }

    #[test]
    fn apply_mapping_preserves_boundaries() {
        let table = build_fake_mapping(&english_alphabet(), 100).unwrap();
        let out = table.apply(&line("<s> a b </s>"));
        assert_eq!(out.to_string(), "<s> 100 101 </s>");
        let id = MappingTable::empty().apply(&line("<s> a b </s>"));
        assert_eq!(id.to_string(), "<s> a b </s>");
    }

    #[test]
    fn f1f2_table_splits_only_f() {
        let base = build_fake_mapping(&english_alphabet(), 100).unwrap();
        let t = make_f1f2_table(&base);
        assert_eq!(t.image('f').unwrap(), ["200", "201"]);
        assert_eq!(t.image('F').unwrap(), ["202", "203"]);
        assert_eq!(t.image('a').unwrap(), ["100"]);
        assert!(!t.is_invertible());
        let out = t.apply(&line("<s> o f </s>"));
        assert_eq!(out.to_string(), "<s> 114 200 201 </s>");
    }

    #[test]
    fn overlap3_wraps_within_case_block() {
        let base = build_fake_mapping(&english_alphabet(), 100).unwrap();
        let t = make_overlap3_table(&base);
        assert_eq!(t.image('a').unwrap(), ["100", "101", "102"]);
        assert_eq!(t.image('z').unwrap(), ["125", "100", "101"]);
        assert_eq!(t.image('b').unwrap(), ["101", "102", "103"]);
        assert_eq!(t.image('Z').unwrap(), ["151", "126", "127"]);
    }

    #[test]
    fn trigramize_windows_and_short_words() {
        let out = trigramize(&line("<s> e x a m p l e </s>"));
        let strs: Vec<String> = out.iter().map(|l| l.to_string()).collect();
        assert_eq!(strs, ["e x a", "x a m", "a m p", "m p l", "p l e"]);
        assert_eq!(trigramize(&line("<s> a t </s>"))[0].to_string(), "a t");
        assert_eq!(trigramize(&line("<s> c a t </s>"))[0].to_string(), "c a t");
        assert_eq!(trigramize(&line("<s> c a t </s>")).len(), 1);
    }

    #[test]
    fn interleave_alternates_then_appends_remainder() {
        let a = vec![line("a1"), line("a2")];
        let b = vec![line("b1"), line("b2")];
        let out: Vec<String> = interleave(a, b).iter().map(|l| l.to_string()).collect();
        assert_eq!(out, ["a1", "b1", "a2", "b2"]);

        let out = interleave(vec![line("a1")], vec![]);
        assert_eq!(out.len(), 1);

        let out: Vec<String> = interleave(vec![line("a1")], vec![line("b1"), line("b2"), line("b3")])
            .iter()
            .map(|l| l.to_string())
            .collect();
        assert_eq!(out, ["a1", "b1", "b2", "b3"]);
    }

    #[test]
    fn split_dev_partitions_deterministically() {
        let lines: Vec<CharLine> = (0..10).map(|i| line(&format!("w{i}"))).collect();
        let (train, dev) = split_dev(lines.clone(), 0.30, 7).unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(dev.len(), 3);
        let (train2, dev2) = split_dev(lines.clone(), 0.30, 7).unwrap();
        assert_eq!(train, train2);
        assert_eq!(dev, dev2);
        let mut all: Vec<String> = train.iter().chain(&dev).map(|l| l.to_string()).collect();
        all.sort();
        let mut want: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
        want.sort();
        assert_eq!(all, want);
    }

    #[test]
    fn greek_normalization_examples() {
        assert_eq!(normalize_greek("Ελλάδα"), "ελλαδα");
        assert_eq!(normalize_greek("ναός"), "ναοσ");
        assert_eq!(normalize_greek("αβγ"), "αβγ");
    }

    #[test]
    fn german_normalization_rewrites_umlauts() {
        assert_eq!(normalize_german("Müller"), "Muller");
        assert_eq!(normalize_german("Straße"), "Strasse");
        assert_eq!(normalize_german("Äöü"), "Aou");
    }

    #[test]
    fn invertible_mapping_round_trips() {
        let table = build_fake_mapping(&english_alphabet(), 100).unwrap();
        let original = line("<s> c a t </s>");
        let mapped = table.apply(&original);
        assert_eq!(table.unapply(&mapped).unwrap(), original);
    }

    #[test]
    fn setup_ids_parse_by_name() {
        for id in SetupId::ALL {
            assert_eq!(id.name().parse::<SetupId>().unwrap(), id);
        }
        assert!("EngKlingon".parse::<SetupId>().is_err());
    }
}
