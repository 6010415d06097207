//! Concept / variant keyword registry and exact phrase lookup.
//!
//! A lexicon is read from a small TSV format:
//!
//! ```text
//! # comment
//! swimming pool<TAB>alberca, pileta, piscina
//! aluminum paper<TAB>foil, papel albal, papel de aluminio
//! ```
//!
//! Keywords are lowercased and NFC-normalized at load time. Every keyword
//! phrase maps to exactly one `(concept, variant)` pair; a phrase that
//! appears under two concepts is rejected, since it would be counted twice.

use std::collections::HashMap;
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text;

/// The concept table that ships with the crate.
pub const SHIPPED_LEXICON: &str = include_str!("../data/lexicon.tsv");

/// Upper bound on the number of tokens in one keyword phrase.
pub const MAX_PHRASE_TOKENS: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("line {line}: expected `concept<TAB>keyword, keyword, ...`")]
    MalformedLine { line: usize },
    #[error("line {line}: empty concept id")]
    EmptyConceptId { line: usize },
    #[error("line {line}: empty keyword in concept `{concept}`")]
    EmptyKeyword { line: usize, concept: String },
    #[error("line {line}: keyword `{keyword}` has {tokens} tokens (max {MAX_PHRASE_TOKENS})")]
    PhraseTooLong {
        line: usize,
        keyword: String,
        tokens: usize,
    },
    #[error(
        "line {line}: keyword `{keyword}` has a token that can never be produced by the tokenizer"
    )]
    UnmatchableToken { line: usize, keyword: String },
    #[error("line {line}: concept `{concept}` defined twice")]
    DuplicateConcept { line: usize, concept: String },
    #[error("concept `{concept}` has {count} variant(s); at least 2 are required")]
    TooFewVariants { concept: String, count: usize },
    #[error("concept `{concept}` lists the phrase `{phrase}` twice")]
    DuplicateVariant { concept: String, phrase: String },
    #[error("phrase `{phrase}` appears in both `{first}` and `{second}`")]
    DuplicatePhrase {
        phrase: String,
        first: String,
        second: String,
    },
    #[error("lexicon defines no concepts")]
    Empty,
}

/// One lexical variant (keyword phrase) of a concept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variant {
    id: String,
    tokens: Vec<String>,
}

impl Variant {
    /// The keyword as listed (lowercased, NFC), e.g. `"papel de aluminio"`.
    pub fn id(&self) -> &str {
        &self.id
    }

    /// The token sequence matched against tokenized text.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Concept {
    id: String,
    variants: Vec<Variant>,
}

impl Concept {
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Variants in lexicon order. This order fixes the component order of
    /// frequency vectors and the majority-map tie-break.
    pub fn variants(&self) -> &[Variant] {
        &self.variants
    }

    pub fn variant_index(&self, variant_id: &str) -> Option<usize> {
        self.variants.iter().position(|v| v.id == variant_id)
    }
}

/// Index pair addressing one variant of one concept inside a [`Lexicon`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VariantRef {
    pub concept: usize,
    pub variant: usize,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    concepts: Vec<Concept>,
    concept_index: HashMap<String, usize>,
    phrase_index: HashMap<Vec<String>, VariantRef>,
    max_phrase_len: usize,
    accent_folding: bool,
    digest: String,
}

impl Lexicon {
    /// Parses lexicon TSV. With `accent_folding`, keyword tokens are stored
    /// without diacritics; variant ids keep the listed spelling.
    pub fn load(source: &str, accent_folding: bool) -> Result<Self, LexiconError> {
        let mut concepts: Vec<Concept> = Vec::new();
        let mut concept_index = HashMap::new();
        let mut phrase_index: HashMap<Vec<String>, VariantRef> = HashMap::new();

        for (lineno, raw) in source.lines().enumerate() {
            let line = lineno + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let (concept_id, keywords) = trimmed
                .split_once('\t')
                .ok_or(LexiconError::MalformedLine { line })?;
            let concept_id = concept_id.trim();
            if concept_id.is_empty() {
                return Err(LexiconError::EmptyConceptId { line });
            }
            if concept_index.contains_key(concept_id) {
                return Err(LexiconError::DuplicateConcept {
                    line,
                    concept: concept_id.to_string(),
                });
            }

            let concept_pos = concepts.len();
            let mut variants: Vec<Variant> = Vec::new();
            for keyword in keywords.split(',') {
                let id = text::normalize(keyword, false)
                    .split_whitespace()
                    .collect::<Vec<_>>()
                    .join(" ");
                if id.is_empty() {
                    return Err(LexiconError::EmptyKeyword {
                        line,
                        concept: concept_id.to_string(),
                    });
                }
                let tokens: Vec<String> = if accent_folding {
                    text::normalize(&id, true)
                        .split_whitespace()
                        .map(str::to_string)
                        .collect()
                } else {
                    id.split_whitespace().map(str::to_string).collect()
                };
                if tokens.len() > MAX_PHRASE_TOKENS {
                    return Err(LexiconError::PhraseTooLong {
                        line,
                        keyword: id,
                        tokens: tokens.len(),
                    });
                }
                if tokens.iter().any(|t| text::trim_edges(t) != t.as_str()) {
                    return Err(LexiconError::UnmatchableToken { line, keyword: id });
                }
                let vref = VariantRef {
                    concept: concept_pos,
                    variant: variants.len(),
                };
                if let Some(prev) = phrase_index.get(&tokens) {
                    if prev.concept == concept_pos {
                        return Err(LexiconError::DuplicateVariant {
                            concept: concept_id.to_string(),
                            phrase: id,
                        });
                    }
                    return Err(LexiconError::DuplicatePhrase {
                        phrase: id,
                        first: concepts[prev.concept].id.clone(),
                        second: concept_id.to_string(),
                    });
                }
                phrase_index.insert(tokens.clone(), vref);
                variants.push(Variant { id, tokens });
            }
            if variants.len() < 2 {
                return Err(LexiconError::TooFewVariants {
                    concept: concept_id.to_string(),
                    count: variants.len(),
                });
            }
            concept_index.insert(concept_id.to_string(), concept_pos);
            concepts.push(Concept {
                id: concept_id.to_string(),
                variants,
            });
        }

        if concepts.is_empty() {
            return Err(LexiconError::Empty);
        }
        let max_phrase_len = phrase_index.keys().map(Vec::len).max().unwrap_or(0);
        let mut lexicon = Lexicon {
            concepts,
            concept_index,
            phrase_index,
            max_phrase_len,
            accent_folding,
            digest: String::new(),
        };
        lexicon.digest = lexicon.compute_digest();
        Ok(lexicon)
    }

    /// Loads [`SHIPPED_LEXICON`].
    pub fn shipped(accent_folding: bool) -> Self {
        Self::load(SHIPPED_LEXICON, accent_folding).expect("shipped lexicon is valid")
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn concept(&self, index: usize) -> &Concept {
        &self.concepts[index]
    }

    pub fn concept_index(&self, concept_id: &str) -> Option<usize> {
        self.concept_index.get(concept_id).copied()
    }

    /// Resolves a `(concept_id, variant_id)` pair to indices.
    pub fn resolve(&self, concept_id: &str, variant_id: &str) -> Option<VariantRef> {
        let concept = self.concept_index(concept_id)?;
        let variant = self.concepts[concept].variant_index(variant_id)?;
        Some(VariantRef { concept, variant })
    }

    /// `(concept_id, variant_id)` for an index pair.
    pub fn names(&self, vref: VariantRef) -> (&str, &str) {
        let concept = &self.concepts[vref.concept];
        (&concept.id, &concept.variants[vref.variant].id)
    }

    pub fn max_phrase_len(&self) -> usize {
        self.max_phrase_len
    }

    pub fn accent_folding(&self) -> bool {
        self.accent_folding
    }

    pub fn phrase_count(&self) -> usize {
        self.phrase_index.len()
    }

    /// Exact token-sequence lookup. No stemming, no fuzzy matching.
    pub fn lookup(&self, tokens: &[String]) -> Option<VariantRef> {
        self.phrase_index.get(tokens).copied()
    }

    /// Like [`Lexicon::lookup`], but returns the string ids.
    pub fn lookup_phrase(&self, tokens: &[String]) -> Option<(&str, &str)> {
        self.lookup(tokens).map(|v| self.names(v))
    }

    /// Hex SHA-256 over the canonical TSV serialization and the folding mode.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Canonical TSV serialization, loadable by [`Lexicon::load`].
    pub fn to_tsv(&self) -> String {
        self.to_string()
    }

    fn compute_digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_tsv().as_bytes());
        hasher.update(if self.accent_folding {
            b"fold=1"
        } else {
            b"fold=0"
        });
        format!("{:x}", hasher.finalize())
    }
}

impl fmt::Display for Lexicon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for concept in &self.concepts {
            let keywords: Vec<&str> = concept.variants.iter().map(|v| v.id.as_str()).collect();
            writeln!(f, "{}\t{}", concept.id, keywords.join(", "))?;
        }
        Ok(())
    }
}
