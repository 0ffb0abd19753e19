//! Annotated-corpus ingestion: the eight-class label taxonomy, document and
//! annotation types, JSON parsing with span validation, and per-label counts.
//!
//! All spans are half-open `[start, end)` intervals counted in Unicode code
//! points. Sources that publish inclusive end offsets can set
//! `"end_inclusive": true` per annotation and are converted on ingest.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Serialize};

/// The closed set of entity classes an annotation can belong to.
///
/// The discriminant doubles as the classifier's class index (0..=7) and must
/// never be reordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum EntityLabel {
    Datetime = 0,
    Org = 1,
    Person = 2,
    Dem = 3,
    Loc = 4,
    Misc = 5,
    Quantity = 6,
    Code = 7,
}

/// Number of entity classes.
pub const NUM_LABELS: usize = 8;

impl EntityLabel {
    /// All labels in class-index order.
    pub const ALL: [EntityLabel; NUM_LABELS] = [
        EntityLabel::Datetime,
        EntityLabel::Org,
        EntityLabel::Person,
        EntityLabel::Dem,
        EntityLabel::Loc,
        EntityLabel::Misc,
        EntityLabel::Quantity,
        EntityLabel::Code,
    ];

    /// Stable class index in 0..=7.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Label for a class index.
    pub fn from_index(index: usize) -> Option<EntityLabel> {
        Self::ALL.get(index).copied()
    }

    /// Canonical short name (the form used in reports and sample files).
    pub fn name(self) -> &'static str {
        match self {
            EntityLabel::Datetime => "DATETIME",
            EntityLabel::Org => "ORG",
            EntityLabel::Person => "PERSON",
            EntityLabel::Dem => "DEM",
            EntityLabel::Loc => "LOC",
            EntityLabel::Misc => "MISC",
            EntityLabel::Quantity => "QUANTITY",
            EntityLabel::Code => "CODE",
        }
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EntityLabel {
    type Err = CorpusError;

    /// Case-insensitive parse of the short names and their long forms.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        let label = match lower.as_str() {
            "datetime" => EntityLabel::Datetime,
            "org" | "organization" | "organisation" => EntityLabel::Org,
            "person" => EntityLabel::Person,
            "dem" | "demographic" => EntityLabel::Dem,
            "loc" | "location" => EntityLabel::Loc,
            "misc" | "miscellaneous" => EntityLabel::Misc,
            "quantity" => EntityLabel::Quantity,
            "code" => EntityLabel::Code,
            _ => return Err(CorpusError::UnknownLabel(s.to_string())),
        };
        Ok(label)
    }
}

impl Serialize for EntityLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for EntityLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Parse a label string (case-insensitive short or long form).
pub fn parse_label(s: &str) -> Result<EntityLabel, CorpusError> {
    s.parse()
}

/// Half-open interval `[start, end)` in code points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Span {
        Span { start, end }
    }

    /// Length in code points.
    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// True when `inner` lies entirely within `self`.
    pub fn contains(&self, inner: &Span) -> bool {
        self.start <= inner.start && inner.end <= self.end
    }

    /// Slice `text` (code-point indexed) by this span.
    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        slice_codepoints(text, self.start, self.end)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Slice a string by code-point offsets (half-open).
pub fn slice_codepoints(text: &str, start: usize, end: usize) -> &str {
    let mut iter = text.char_indices();
    let byte_start = iter
        .by_ref()
        .nth(start)
        .map(|(b, _)| b)
        .unwrap_or(text.len());
    if end <= start {
        return "";
    }
    let byte_end = iter
        .nth(end - start - 1)
        .map(|(b, _)| b)
        .unwrap_or(text.len());
    &text[byte_start..byte_end]
}

/// Whether the annotated value identifies a person on its own or only in
/// combination with other attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentifierClass {
    Direct,
    Quasi,
}

/// One annotated span within a document.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Annotation {
    pub span: Span,
    pub label: EntityLabel,
    pub identifier_class: IdentifierClass,
}

/// A corpus document: raw text plus its entity annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedDocument {
    pub id: String,
    pub text: String,
    pub annotations: Vec<Annotation>,
    pub revised: bool,
    pub anonymization_target: String,
}

impl AnnotatedDocument {
    /// Code-point length of the document text.
    pub fn len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

/// One sentence with exactly one span replaced by asterisks; the unit fed to
/// the embedder and classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedactedSample {
    #[serde(rename = "doc")]
    pub source_doc: String,
    pub sentence: String,
    #[serde(rename = "redacted")]
    pub redacted_sentence: String,
    #[serde(flatten)]
    pub span: StartLen,
    pub label: EntityLabel,
}

/// Sentence-relative redaction location, serialized as `start` + `len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartLen {
    pub start: usize,
    pub len: usize,
}

impl StartLen {
    pub fn to_span(self) -> Span {
        Span::new(self.start, self.start + self.len)
    }

    pub fn from_span(span: Span) -> StartLen {
        StartLen {
            start: span.start,
            len: span.len(),
        }
    }
}

impl RedactedSample {
    /// Validates the defining invariants of a sample.
    pub fn check_invariants(&self) -> Result<(), CorpusError> {
        let n = self.sentence.chars().count();
        let m = self.redacted_sentence.chars().count();
        let span = self.span.to_span();
        if n != m {
            return Err(CorpusError::InvalidSample(format!(
                "sentence length {n} != redacted length {m}"
            )));
        }
        if span.end > n || span.is_empty() {
            return Err(CorpusError::InvalidSample(format!(
                "redaction span {span} out of range for sentence of length {n}"
            )));
        }
        for (i, (a, b)) in self
            .sentence
            .chars()
            .zip(self.redacted_sentence.chars())
            .enumerate()
        {
            let inside = i >= span.start && i < span.end;
            if inside && b != '*' {
                return Err(CorpusError::InvalidSample(format!(
                    "non-asterisk character inside redaction at {i}"
                )));
            }
            if !inside && a != b {
                return Err(CorpusError::InvalidSample(format!(
                    "sentence differs outside the redaction at {i}"
                )));
            }
        }
        Ok(())
    }
}

/// Errors raised while ingesting or validating a corpus.
#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("unknown entity label: {0:?}")]
    UnknownLabel(String),
    #[error("malformed corpus JSON at byte {offset} (line {line}, column {column}): {message}")]
    Json {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("corpus validation failed:\n{}", format_violations(.0))]
    Validation(Vec<SpanViolation>),
    #[error("invalid redacted sample: {0}")]
    InvalidSample(String),
}

/// An annotation whose span does not fit its document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanViolation {
    pub doc_id: String,
    pub annotation_index: usize,
    pub span: Span,
    pub text_len: usize,
}

impl fmt::Display for SpanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "doc {:?} annotation {}: span {} out of range for text of length {}",
            self.doc_id, self.annotation_index, self.span, self.text_len
        )
    }
}

fn format_violations(violations: &[SpanViolation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

// Wire schema -------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct DocRecord {
    id: String,
    text: String,
    revised: bool,
    target: String,
    annotations: Vec<AnnRecord>,
}

#[derive(Serialize, Deserialize)]
struct AnnRecord {
    start: usize,
    end: usize,
    #[serde(default, skip_serializing_if = "is_false")]
    end_inclusive: bool,
    label: EntityLabel,
    identifier: IdentifierClass,
}

fn is_false(b: &bool) -> bool {
    !b
}

/// Hook for ingesting corpora published under a different JSON schema: map
/// the foreign payload to documents, then validate through
/// [`validate_documents`].
pub trait CorpusAdapter {
    fn to_documents(&self, payload: &[u8]) -> Result<Vec<AnnotatedDocument>, CorpusError>;
}

/// The built-in schema: an array of
/// `{"id", "text", "revised", "target", "annotations": [{"start", "end",
/// "end_inclusive"?, "label", "identifier"}]}`.
pub struct DefaultSchema;

impl CorpusAdapter for DefaultSchema {
    fn to_documents(&self, payload: &[u8]) -> Result<Vec<AnnotatedDocument>, CorpusError> {
        let records: Vec<DocRecord> = serde_json::from_slice(payload).map_err(|e| {
            let (line, column) = (e.line(), e.column());
            CorpusError::Json {
                offset: byte_offset(payload, line, column),
                line,
                column,
                message: e.to_string(),
            }
        })?;
        Ok(records
            .into_iter()
            .map(|rec| {
                let annotations = rec
                    .annotations
                    .into_iter()
                    .map(|a| Annotation {
                        span: Span::new(a.start, if a.end_inclusive { a.end + 1 } else { a.end }),
                        label: a.label,
                        identifier_class: a.identifier,
                    })
                    .collect();
                AnnotatedDocument {
                    id: rec.id,
                    text: rec.text,
                    annotations,
                    revised: rec.revised,
                    anonymization_target: rec.target,
                }
            })
            .collect())
    }
}

fn byte_offset(payload: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut seen = 1usize;
    let mut offset = 0usize;
    for (i, &b) in payload.iter().enumerate() {
        if seen == line {
            offset = i;
            break;
        }
        if b == b'\n' {
            seen += 1;
            offset = i + 1;
        }
    }
    offset + column.saturating_sub(1)
}

/// Parse a corpus payload under the default schema and validate every
/// document. Duplicate identical annotations are merged; overlapping but
/// distinct annotations are kept.
pub fn parse_corpus(payload: &[u8]) -> Result<Vec<AnnotatedDocument>, CorpusError> {
    let docs = DefaultSchema.to_documents(payload)?;
    validate_documents(docs)
}

/// Validate spans, merge duplicate annotations, and order annotations by
/// position. All violations are collected so a report names every offender.
pub fn validate_documents(
    docs: Vec<AnnotatedDocument>,
) -> Result<Vec<AnnotatedDocument>, CorpusError> {
    let mut violations = Vec::new();
    let mut out = Vec::with_capacity(docs.len());
    for mut doc in docs {
        let text_len = doc.len();
        for (i, ann) in doc.annotations.iter().enumerate() {
            if ann.span.is_empty() || ann.span.end > text_len {
                violations.push(SpanViolation {
                    doc_id: doc.id.clone(),
                    annotation_index: i,
                    span: ann.span,
                    text_len,
                });
            }
        }
        doc.annotations.sort_by_key(|a| {
            (
                a.span.start,
                a.span.end,
                a.label.index(),
                a.identifier_class,
            )
        });
        doc.annotations.dedup();
        out.push(doc);
    }
    if violations.is_empty() {
        Ok(out)
    } else {
        Err(CorpusError::Validation(violations))
    }
}

/// Serialize documents back to the default corpus schema.
pub fn serialize_corpus(docs: &[AnnotatedDocument]) -> Vec<u8> {
    let records: Vec<DocRecord> = docs
        .iter()
        .map(|doc| DocRecord {
            id: doc.id.clone(),
            text: doc.text.clone(),
            revised: doc.revised,
            target: doc.anonymization_target.clone(),
            annotations: doc
                .annotations
                .iter()
                .map(|a| AnnRecord {
                    start: a.span.start,
                    end: a.span.end,
                    end_inclusive: false,
                    label: a.label,
                    identifier: a.identifier_class,
                })
                .collect(),
        })
        .collect();
    serde_json::to_vec_pretty(&records).expect("corpus records serialize")
}

/// Per-label annotation counts, ordered by class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelCounts(pub [usize; NUM_LABELS]);

impl LabelCounts {
    pub fn get(&self, label: EntityLabel) -> usize {
        self.0[label.index()]
    }

    pub fn add(&mut self, label: EntityLabel, n: usize) {
        self.0[label.index()] += n;
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Count items by label.
    pub fn tally<T>(items: &[T], label_of: impl Fn(&T) -> EntityLabel) -> LabelCounts {
        let mut counts = LabelCounts::default();
        for item in items {
            counts.add(label_of(item), 1);
        }
        counts
    }
}

impl Serialize for LabelCounts {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(NUM_LABELS))?;
        for label in EntityLabel::ALL {
            map.serialize_entry(label.name(), &self.get(label))?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for LabelCounts {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, usize>::deserialize(deserializer)?;
        let mut counts = LabelCounts::default();
        for (key, value) in map {
            let label: EntityLabel = key.parse().map_err(D::Error::custom)?;
            counts.add(label, value);
        }
        Ok(counts)
    }
}

/// Count annotations per label across a corpus.
pub fn corpus_stats(docs: &[AnnotatedDocument]) -> LabelCounts {
    let mut counts = LabelCounts::default();
    for doc in docs {
        for ann in &doc.annotations {
            counts.add(ann.label, 1);
        }
    }
    counts
}
