use std::collections::{BTreeMap, BTreeSet};

use super::KnowledgeBase;

/// Padding value for missing KB cells. Never an entity.
pub const PAD: &str = "-";

const TRAILING_PUNCT: &[char] = &['.', ',', '!', '?', ';', ':'];

/// Lowercases and joins whitespace-separated words with underscores.
/// Idempotent.
pub fn canonicalize(value: &str) -> String {
    value
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

/// Lowercased whitespace tokens with trailing punctuation split off.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let lower = raw.to_lowercase();
        let mut core = lower.as_str();
        let mut tail = Vec::new();
        while core.chars().count() > 1 {
            match core.chars().last() {
                Some(c) if TRAILING_PUNCT.contains(&c) => {
                    tail.push(c.to_string());
                    core = &core[..core.len() - c.len_utf8()];
                }
                _ => break,
            }
        }
        out.push(core.to_string());
        out.extend(tail.into_iter().rev());
    }
    out
}

/// All canonical entity values seen in the KBs of a dataset.
#[derive(Clone, Debug, Default)]
pub struct EntityLexicon {
    all: BTreeSet<String>,
    by_domain: BTreeMap<String, BTreeSet<String>>,
    max_parts: usize,
}

impl EntityLexicon {
    pub fn from_kbs<'a>(kbs: impl IntoIterator<Item = &'a KnowledgeBase>) -> Self {
        let mut lex = EntityLexicon::default();
        for kb in kbs {
            for cell in kb.cells() {
                lex.insert(kb.domain(), cell);
            }
        }
        lex
    }

    pub fn insert(&mut self, domain: &str, value: &str) {
        if value == PAD || value.is_empty() {
            return;
        }
        self.max_parts = self.max_parts.max(value.split('_').count());
        self.all.insert(value.to_string());
        self.by_domain
            .entry(domain.to_string())
            .or_default()
            .insert(value.to_string());
    }

    pub fn contains(&self, token: &str) -> bool {
        self.all.contains(token)
    }

    pub fn len(&self) -> usize {
        self.all.len()
    }

    pub fn is_empty(&self) -> bool {
        self.all.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.all.iter().map(String::as_str)
    }

    pub fn domain(&self, domain: &str) -> Option<&BTreeSet<String>> {
        self.by_domain.get(domain)
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.by_domain.keys().map(String::as_str)
    }

    /// Tokenizes `text` and merges the longest word spans that spell a
    /// lexicon entry into a single canonical token.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let ws = words(text);
        let mut out = Vec::with_capacity(ws.len());
        let mut i = 0;
        while i < ws.len() {
            let longest = (2..=self.max_parts.min(ws.len() - i))
                .rev()
                .map(|n| (n, ws[i..i + n].join("_")))
                .find(|(_, cand)| self.all.contains(cand));
            match longest {
                Some((n, tok)) => {
                    out.push(tok);
                    i += n;
                }
                None => {
                    out.push(ws[i].clone());
                    i += 1;
                }
            }
        }
        out
    }

    /// Entity tokens of `tokens`, as a set.
    pub fn entities_in<'a>(&self, tokens: impl IntoIterator<Item = &'a String>) -> BTreeSet<String> {
        tokens
            .into_iter()
            .filter(|t| self.contains(t))
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_forms() {
        assert_eq!(canonicalize("200 Alester Ave"), "200_alester_ave");
        assert_eq!(canonicalize("valero"), "valero");
        assert_eq!(canonicalize("  Cafe   Venetia "), "cafe_venetia");
    }

    #[test]
    fn canonicalize_is_idempotent() {
        for s in ["200 Alester Ave", "a_b c", "X"] {
            let once = canonicalize(s);
            assert_eq!(canonicalize(&once), once);
        }
    }

    #[test]
    fn words_split_trailing_punctuation() {
        assert_eq!(words("Valero is at 200 Alester Ave."), ["valero", "is", "at", "200", "alester", "ave", "."]);
        assert_eq!(words("ok , thanks!?"), ["ok", ",", "thanks", "!", "?"]);
        assert_eq!(words("10:00am"), ["10:00am"]);
    }

    #[test]
    fn tokenize_merges_longest_entity_span() {
        let kb = KnowledgeBase::new(
            "navigate",
            vec!["poi".into(), "address".into()],
            vec![vec!["Valero".into(), "200 Alester Ave".into()], vec!["Ames".into(), "Ames Ct".into()]],
        )
        .unwrap();
        let lex = EntityLexicon::from_kbs([&kb]);
        assert_eq!(
            lex.tokenize("Valero is at 200 Alester Ave, near Ames Ct."),
            ["valero", "is", "at", "200_alester_ave", ",", "near", "ames_ct", "."]
        );
        // already-canonical text is a fixed point
        assert_eq!(lex.tokenize("valero is at 200_alester_ave"), ["valero", "is", "at", "200_alester_ave"]);
    }

    #[test]
    fn pad_is_never_an_entity() {
        let mut lex = EntityLexicon::default();
        lex.insert("calendar", PAD);
        assert!(lex.is_empty());
    }
}
