//! Character evasion: substituting the five most common English letters with
//! visually identical Cyrillic/Armenian code points defeats embedding-based
//! entity-type inference while keeping the text readable. Also provides the
//! audit (`detect`) and sanitizer (`fold`) directions.

use serde::{Deserialize, Serialize};

use crate::balance::LabeledPoint;
use crate::classify::{evaluate, ClassifierModel, ClassifyError, ConfusionMatrix};
use crate::corpus::RedactedSample;
use crate::embed::{embed, Projection};

/// Ordered ASCII-to-confusable substitution table.
///
/// Keys must be ASCII lowercase, values non-ASCII, and the mapping injective.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomoglyphMap {
    pairs: Vec<(char, char)>,
}

/// The default five substitutions: a, e, i, n, o onto their Cyrillic and
/// Armenian look-alikes.
pub const DEFAULT_SUBSTITUTIONS: [(char, char); 5] = [
    ('\u{0061}', '\u{0430}'), // a
    ('\u{0065}', '\u{0435}'), // e
    ('\u{0069}', '\u{0456}'), // i
    ('\u{006E}', '\u{0578}'), // n
    ('\u{006F}', '\u{043E}'), // o
];

#[derive(Debug, thiserror::Error)]
pub enum EvadeError {
    #[error("malformed homoglyph map: {0}")]
    BadMap(String),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

impl Default for HomoglyphMap {
    fn default() -> Self {
        HomoglyphMap {
            pairs: DEFAULT_SUBSTITUTIONS.to_vec(),
        }
    }
}

impl HomoglyphMap {
    /// Empty map: hardening becomes the identity.
    pub fn empty() -> HomoglyphMap {
        HomoglyphMap { pairs: Vec::new() }
    }

    pub fn new(pairs: Vec<(char, char)>) -> Result<HomoglyphMap, EvadeError> {
        for &(from, to) in &pairs {
            if !from.is_ascii_lowercase() {
                return Err(EvadeError::BadMap(format!(
                    "key {from:?} is not ASCII lowercase"
                )));
            }
            if to.is_ascii() {
                return Err(EvadeError::BadMap(format!("value {to:?} is ASCII")));
            }
        }
        for (i, &(from, to)) in pairs.iter().enumerate() {
            for &(from2, to2) in &pairs[..i] {
                if from == from2 {
                    return Err(EvadeError::BadMap(format!("duplicate key {from:?}")));
                }
                if to == to2 {
                    return Err(EvadeError::BadMap(format!("duplicate value {to:?}")));
                }
            }
        }
        Ok(HomoglyphMap { pairs })
    }

    pub fn pairs(&self) -> &[(char, char)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn forward(&self, c: char) -> Option<char> {
        self.pairs.iter().find(|&&(from, _)| from == c).map(|&(_, to)| to)
    }

    fn reverse(&self, c: char) -> Option<char> {
        self.pairs.iter().find(|&&(_, to)| to == c).map(|&(from, _)| from)
    }

    /// Parse the JSON config form: `[{"from": "U+0061", "to": "U+0430"}, …]`.
    pub fn from_json(payload: &[u8]) -> Result<HomoglyphMap, EvadeError> {
        let entries: Vec<MapEntry> =
            serde_json::from_slice(payload).map_err(|e| EvadeError::BadMap(e.to_string()))?;
        let pairs = entries
            .into_iter()
            .map(|e| Ok((parse_codepoint(&e.from)?, parse_codepoint(&e.to)?)))
            .collect::<Result<Vec<_>, EvadeError>>()?;
        HomoglyphMap::new(pairs)
    }

    pub fn to_json(&self) -> String {
        let entries: Vec<MapEntry> = self
            .pairs
            .iter()
            .map(|&(from, to)| MapEntry {
                from: format!("U+{:04X}", from as u32),
                to: format!("U+{:04X}", to as u32),
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("map entries serialize")
    }
}

#[derive(Serialize, Deserialize)]
struct MapEntry {
    from: String,
    to: String,
}

fn parse_codepoint(s: &str) -> Result<char, EvadeError> {
    let hex = s
        .strip_prefix("U+")
        .or_else(|| s.strip_prefix("u+"))
        .ok_or_else(|| EvadeError::BadMap(format!("{s:?} is not of the form U+XXXX")))?;
    let value = u32::from_str_radix(hex, 16)
        .map_err(|_| EvadeError::BadMap(format!("{s:?} is not of the form U+XXXX")))?;
    char::from_u32(value).ok_or_else(|| EvadeError::BadMap(format!("{s:?} is not a code point")))
}

/// Replace every mapped code point by its confusable; everything else is
/// untouched and the code-point length is preserved.
pub fn harden(text: &str, map: &HomoglyphMap) -> String {
    text.chars()
        .map(|c| map.forward(c).unwrap_or(c))
        .collect()
}

/// One detected confusable occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Detection {
    /// Code-point index into the text.
    pub position: usize,
    pub original: char,
    pub confusable: char,
}

/// Report every confusable occurrence with its position and ASCII preimage.
pub fn detect(text: &str, map: &HomoglyphMap) -> Vec<Detection> {
    text.chars()
        .enumerate()
        .filter_map(|(position, c)| {
            map.reverse(c).map(|original| Detection {
                position,
                original,
                confusable: c,
            })
        })
        .collect()
}

/// Invert [`harden`]: map confusables back to their ASCII originals.
pub fn fold(text: &str, map: &HomoglyphMap) -> String {
    text.chars()
        .map(|c| map.reverse(c).unwrap_or(c))
        .collect()
}

/// Evaluate a trained model on sentence samples hardened at test time: each
/// redacted sentence is hardened, embedded through the given projection, and
/// classified. Training data is untouched.
pub fn evaluate_evasion(
    model: &ClassifierModel,
    projection: &Projection,
    test_samples: &[RedactedSample],
    map: &HomoglyphMap,
) -> Result<(f64, ConfusionMatrix), EvadeError> {
    let points: Vec<LabeledPoint> = test_samples
        .iter()
        .enumerate()
        .map(|(i, s)| LabeledPoint {
            embedding: embed(&harden(&s.redacted_sentence, map), projection),
            label: s.label,
            origin: crate::balance::PointOrigin::Real { sample: i },
        })
        .collect();
    Ok(evaluate(model, &points)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_map_holds_the_five_expected_codepoints() {
        let map = HomoglyphMap::default();
        assert_eq!(map.len(), 5);
        assert_eq!(map.pairs()[3], ('n', '\u{0578}'));
    }

    #[test]
    fn hardening_nation_swaps_four_letter_kinds() {
        let hardened = harden("nation", &HomoglyphMap::default());
        assert_eq!(hardened, "ոаtіоո");
        assert_eq!(hardened.chars().count(), 6);
        // t is unmapped.
        assert_eq!(hardened.chars().nth(2), Some('t'));
    }

    #[test]
    fn text_without_mapped_characters_is_unchanged() {
        let map = HomoglyphMap::default();
        assert_eq!(harden("XYZ 123", &map), "XYZ 123");
    }

    #[test]
    fn hardening_is_idempotent() {
        let map = HomoglyphMap::default();
        let once = harden("the quick brown fox, no. 36619/03", &map);
        assert_eq!(harden(&once, &map), once);
    }

    #[test]
    fn detect_reports_positions_and_preimages() {
        let map = HomoglyphMap::default();
        let hardened = harden("nation", &map);
        let hits = detect(&hardened, &map);
        assert_eq!(hits.len(), 5);
        assert_eq!(hits[0], Detection { position: 0, original: 'n', confusable: 'ո' });
        assert_eq!(hits[4], Detection { position: 5, original: 'n', confusable: 'ո' });
        assert!(detect("plain ascii text", &map).is_empty());
    }

    #[test]
    fn detect_only_reports_mapped_positions_in_mixed_text() {
        let map = HomoglyphMap::default();
        let text = format!("Mr {} of X", harden("nation", &map));
        let hits = detect(&text, &map);
        assert_eq!(hits.len(), 5);
        assert!(hits.iter().all(|h| (3..9).contains(&h.position)));
    }

    #[test]
    fn fold_inverts_harden_and_is_idempotent() {
        let map = HomoglyphMap::default();
        let text = "nation shall speak peace unto nation";
        let round = fold(&harden(text, &map), &map);
        assert_eq!(round, text);
        assert_eq!(fold(text, &map), text);
        assert_eq!(fold(&fold(&harden(text, &map), &map), &map), text);
    }

    #[test]
    fn map_json_round_trips() {
        let map = HomoglyphMap::default();
        let json = map.to_json();
        assert!(json.contains("U+0061"));
        assert!(json.contains("U+0430"));
        let parsed = HomoglyphMap::from_json(json.as_bytes()).unwrap();
        assert_eq!(parsed, map);
    }

    #[test]
    fn malformed_maps_are_rejected() {
        assert!(HomoglyphMap::from_json(b"not json").is_err());
        // Uppercase key.
        assert!(HomoglyphMap::from_json(br#"[{"from": "U+0041", "to": "U+0430"}]"#).is_err());
        // ASCII value.
        assert!(HomoglyphMap::from_json(br#"[{"from": "U+0061", "to": "U+0062"}]"#).is_err());
        // Duplicate value breaks injectivity.
        assert!(HomoglyphMap::from_json(
            br#"[{"from": "U+0061", "to": "U+0430"}, {"from": "U+0065", "to": "U+0430"}]"#
        )
        .is_err());
        // Bad code point syntax.
        assert!(HomoglyphMap::from_json(br#"[{"from": "0x61", "to": "U+0430"}]"#).is_err());
    }

    #[test]
    fn hardening_changes_embeddings_of_mapped_sentences() {
        let map = HomoglyphMap::default();
        let sentence = "***** was in Amsterdam.";
        let base = crate::embed::embed_base(sentence);
        let hardened = crate::embed::embed_base(&harden(sentence, &map));
        assert_ne!(base, hardened);
    }

    #[test]
    fn empty_map_evasion_equals_the_undefended_accuracy() {
        use crate::balance::{LabeledPoint, PointOrigin, Seed};
        use crate::classify::{fit_forest, ClassifierModel, RfParams};
        use crate::corpus::{EntityLabel, RedactedSample, StartLen};
        use crate::embed::{embed_base, Projection, EMBED_DIM};

        let sentences = [
            ("the hearing took place on *.", EntityLabel::Datetime),
            ("the applicant was born in *.", EntityLabel::Loc),
            ("counsel for * submitted observations.", EntityLabel::Person),
            ("the fine was set at *.", EntityLabel::Quantity),
        ];
        let samples: Vec<RedactedSample> = EntityLabel::ALL
            .iter()
            .flat_map(|_| sentences.iter())
            .enumerate()
            .map(|(i, (text, label))| RedactedSample {
                source_doc: format!("d{i}"),
                sentence: text.replace('*', "x"),
                redacted_sentence: text.to_string(),
                span: StartLen { start: 0, len: 1 },
                label: *label,
            })
            .collect();
        let points: Vec<LabeledPoint> = samples
            .iter()
            .enumerate()
            .map(|(i, s)| LabeledPoint {
                embedding: embed_base(&s.redacted_sentence),
                label: s.label,
                origin: PointOrigin::Real { sample: i },
            })
            .collect();
        let forest = fit_forest(&points, &RfParams { n_estimators: 7, ..RfParams::default() }, Seed(3)).unwrap();
        let model = ClassifierModel::Forest(forest);
        let projection = Projection::identity(EMBED_DIM);

        let (undefended, _) = crate::classify::evaluate(&model, &points).unwrap();
        let (empty_map_acc, _) =
            evaluate_evasion(&model, &projection, &samples, &HomoglyphMap::empty()).unwrap();
        assert_eq!(empty_map_acc, undefended);
        let (default_map_acc, _) =
            evaluate_evasion(&model, &projection, &samples, &HomoglyphMap::default()).unwrap();
        assert!(default_map_acc <= undefended);
    }
}
