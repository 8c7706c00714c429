use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
pub const SOS: &str = "<sos>";
/// Decoder input standing in for a copied KB entity.
pub const ENT: &str = "<ent>";

pub const EOS_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const SOS_ID: usize = 2;
pub const ENT_ID: usize = 3;

/// Word ↔ id bijection. Ids `0..4` are the reserved tokens above.
///
/// In logit space the word ids `0..len()` are followed by the per-dialogue
/// entity block: id `len() + e` addresses flattened KB cell `e`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for w in [EOS, UNK, SOS, ENT] {
            v.insert(w);
        }
        v
    }

    pub fn insert(&mut self, word: &str) -> usize {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), self.words.len() - 1);
        self.words.len() - 1
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Id of `word`, or [`UNK_ID`].
    pub fn id(&self, word: &str) -> usize {
        self.get(word).unwrap_or(UNK_ID)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Logit-space id of flattened entity `e`.
    pub fn entity_id(&self, e: usize) -> usize {
        self.len() + e
    }

    /// Inverse of [`Vocabulary::entity_id`]; `None` for word ids.
    pub fn entity_of(&self, id: usize) -> Option<usize> {
        id.checked_sub(self.len())
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        let mut v = Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for w in &words {
            v.insert(w);
        }
        v
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}
