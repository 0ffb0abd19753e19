//! Length-preserving text normalization, sentence splitting, annotation
//! localization, and redaction materialization.
//!
//! Every transformation here keeps annotation offsets valid: normalization
//! replaces characters one-for-one, and sentences are addressed as spans into
//! the normalized text rather than re-extracted strings.

use crate::corpus::{AnnotatedDocument, Annotation, RedactedSample, Span, StartLen};

/// A sentence located inside a normalized document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSpan {
    pub doc_id: String,
    pub span: Span,
    pub text: String,
}

/// An annotation rebased onto the sentence that contains it.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedAnnotation {
    pub sentence_index: usize,
    pub annotation: Annotation,
}

/// An annotation that does not fit inside any single sentence. These are
/// excluded from the sample set but always surfaced to the caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StraddlingAnnotation {
    pub doc_id: String,
    pub annotation_index: usize,
    pub span: Span,
}

impl std::fmt::Display for StraddlingAnnotation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "doc {:?} annotation {} at {} straddles a sentence boundary",
            self.doc_id, self.annotation_index, self.span
        )
    }
}

/// Result of [`localize`]: rebased annotations plus the ones that had to be
/// excluded.
#[derive(Debug, Clone, Default)]
pub struct Localized {
    pub annotations: Vec<LocalizedAnnotation>,
    pub straddling: Vec<StraddlingAnnotation>,
}

/// Normalize document text without changing its code-point length:
///
/// * a newline run after a section-title line becomes `.` plus
///   `run_length - 1` spaces,
/// * every remaining newline becomes a space,
/// * the dot in the abbreviations `no.` / `nos.` (word-bounded,
///   case-insensitive) becomes `_` so it cannot end a sentence.
pub fn normalize_text(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out: Vec<char> = Vec::with_capacity(chars.len());

    let mut i = 0;
    let mut line_start = 0;
    while i < chars.len() {
        if chars[i] == '\n' {
            let run_start = i;
            while i < chars.len() && chars[i] == '\n' {
                i += 1;
            }
            let run_len = i - run_start;
            if is_section_title(&chars[line_start..run_start]) {
                out.push('.');
                out.extend(std::iter::repeat_n(' ', run_len - 1));
            } else {
                out.extend(std::iter::repeat_n(' ', run_len));
            }
            line_start = i;
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }

    mask_number_abbreviations(&mut out);
    out.into_iter().collect()
}

/// A line is a section title when at least 80% of its alphabetic characters
/// are uppercase (and it has at least one).
fn is_section_title(line: &[char]) -> bool {
    let mut alphabetic = 0usize;
    let mut uppercase = 0usize;
    for &c in line {
        if c.is_alphabetic() {
            alphabetic += 1;
            if c.is_uppercase() {
                uppercase += 1;
            }
        }
    }
    alphabetic > 0 && uppercase * 5 >= alphabetic * 4
}

/// Rewrite `no.` / `nos.` to `no_` / `nos_` when word-bounded.
fn mask_number_abbreviations(chars: &mut [char]) {
    let n = chars.len();
    let mut i = 0;
    while i < n {
        let bounded = i == 0 || !chars[i - 1].is_alphanumeric();
        if bounded && (chars[i] == 'n' || chars[i] == 'N') {
            let mut j = i + 1;
            if j < n && (chars[j] == 'o' || chars[j] == 'O') {
                j += 1;
                if j < n && (chars[j] == 's' || chars[j] == 'S') {
                    j += 1;
                }
                if j < n && chars[j] == '.' {
                    chars[j] = '_';
                    i = j + 1;
                    continue;
                }
            }
        }
        i += 1;
    }
}

/// Tokens before a dot that never end a sentence.
const ABBREVIATIONS: &[&str] = &["no_", "nos_", "v", "art", "para", "e.g", "i.e"];

/// Split normalized text into sentences.
///
/// A sentence ends after `.`, `?` or `!` followed by whitespace and then an
/// uppercase letter, a digit, or an asterisk (redacted sentences may start
/// with their mask); a dot preceded by a blacklisted abbreviation or a
/// single capital initial does not split. Spans are code-point offsets into
/// the input, excluding inter-sentence whitespace.
pub fn split_sentences(doc_id: &str, text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut sentences = Vec::new();

    let mut start = skip_whitespace(&chars, 0);
    let mut i = start;
    while i < n {
        let c = chars[i];
        if (c == '.' || c == '?' || c == '!') && i + 1 < n && chars[i + 1].is_whitespace() {
            let next = skip_whitespace(&chars, i + 1);
            let upper_or_digit = next < n
                && (chars[next].is_uppercase() || chars[next].is_ascii_digit() || chars[next] == '*');
            if upper_or_digit && !(c == '.' && is_guarded(&chars, i)) {
                push_sentence(&mut sentences, doc_id, &chars, start, i + 1);
                start = next;
                i = next;
                continue;
            }
        }
        i += 1;
    }
    if start < n {
        let end = last_non_whitespace(&chars, start);
        if end > start {
            push_sentence(&mut sentences, doc_id, &chars, start, end);
        }
    }
    sentences
}

fn skip_whitespace(chars: &[char], mut i: usize) -> usize {
    while i < chars.len() && chars[i].is_whitespace() {
        i += 1;
    }
    i
}

fn last_non_whitespace(chars: &[char], start: usize) -> usize {
    let mut end = chars.len();
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    end
}

fn push_sentence(
    sentences: &mut Vec<SentenceSpan>,
    doc_id: &str,
    chars: &[char],
    start: usize,
    end: usize,
) {
    sentences.push(SentenceSpan {
        doc_id: doc_id.to_string(),
        span: Span::new(start, end),
        text: chars[start..end].iter().collect(),
    });
}

/// True when the token ending at the dot at `dot` is a known abbreviation or
/// a single capital initial.
fn is_guarded(chars: &[char], dot: usize) -> bool {
    let mut start = dot;
    while start > 0 {
        let c = chars[start - 1];
        if c.is_alphanumeric() || c == '.' || c == '_' {
            start -= 1;
        } else {
            break;
        }
    }
    if start == dot {
        return false;
    }
    let token: String = chars[start..dot].iter().collect();
    if token.chars().count() == 1 {
        let c = token.chars().next().unwrap();
        if c.is_uppercase() {
            return true;
        }
    }
    let lower = token.to_lowercase();
    ABBREVIATIONS.iter().any(|a| *a == lower)
}

/// Rebase document-level annotations onto the sentence containing them.
/// Annotations that do not fall entirely inside one sentence are collected
/// in `straddling` rather than silently dropped.
pub fn localize(doc: &AnnotatedDocument, sentences: &[SentenceSpan]) -> Localized {
    let mut result = Localized::default();
    for (index, ann) in doc.annotations.iter().enumerate() {
        let home = sentences
            .iter()
            .position(|s| s.span.contains(&ann.span));
        match home {
            Some(sentence_index) => {
                let base = sentences[sentence_index].span.start;
                result.annotations.push(LocalizedAnnotation {
                    sentence_index,
                    annotation: Annotation {
                        span: Span::new(ann.span.start - base, ann.span.end - base),
                        label: ann.label,
                        identifier_class: ann.identifier_class,
                    },
                });
            }
            None => result.straddling.push(StraddlingAnnotation {
                doc_id: doc.id.clone(),
                annotation_index: index,
                span: ann.span,
            }),
        }
    }
    result
}

/// Produce one redacted sample per annotation: the sentence is duplicated and
/// only that annotation's span is replaced by asterisks.
pub fn materialize(sentence: &SentenceSpan, anns: &[Annotation]) -> Vec<RedactedSample> {
    let chars: Vec<char> = sentence.text.chars().collect();
    anns.iter()
        .map(|ann| {
            let mut redacted: Vec<char> = chars.clone();
            for c in redacted
                .iter_mut()
                .take(ann.span.end.min(chars.len()))
                .skip(ann.span.start)
            {
                *c = '*';
            }
            RedactedSample {
                source_doc: sentence.doc_id.clone(),
                sentence: sentence.text.clone(),
                redacted_sentence: redacted.into_iter().collect(),
                span: StartLen::from_span(ann.span),
                label: ann.label,
            }
        })
        .collect()
}

/// Full preprocessing of one document: normalize, split, localize,
/// materialize. Sample order follows sentence order, then annotation start.
pub fn process_document(
    doc: &AnnotatedDocument,
) -> (Vec<RedactedSample>, Vec<StraddlingAnnotation>) {
    let normalized = normalize_text(&doc.text);
    let sentences = split_sentences(&doc.id, &normalized);
    let rebased = AnnotatedDocument {
        text: normalized,
        ..doc.clone()
    };
    let localized = localize(&rebased, &sentences);

    let mut per_sentence: Vec<Vec<Annotation>> = vec![Vec::new(); sentences.len()];
    for loc in localized.annotations {
        per_sentence[loc.sentence_index].push(loc.annotation);
    }
    let mut samples = Vec::new();
    for (sentence, mut anns) in sentences.iter().zip(per_sentence) {
        anns.sort_by_key(|a| (a.span.start, a.span.end, a.label.index()));
        samples.extend(materialize(sentence, &anns));
    }
    (samples, localized.straddling)
}
