//! Edit distances over canonicalized strings and the average-impact
//! similarity used for biographical fields.
//!
//! Distances work on Unicode scalar values, never on bytes.

use std::fmt;

/// A string after case folding, trimming and whitespace collapsing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalString {
    text: String,
    chars: Vec<char>,
}

impl CanonicalString {
    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Length in characters.
    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Builds from characters that are already canonical (used by the typo
    /// model, which only emits lowercase letters in place of letters).
    pub(crate) fn from_chars_unchecked(chars: Vec<char>) -> Self {
        CanonicalString {
            text: chars.iter().collect(),
            chars,
        }
    }
}

impl fmt::Display for CanonicalString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl From<&str> for CanonicalString {
    fn from(raw: &str) -> Self {
        canonicalize(raw)
    }
}

pub fn canonicalize(raw: &str) -> CanonicalString {
    let mut text = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !text.is_empty() {
            text.push(' ');
        }
        text.extend(word.chars().flat_map(char::to_lowercase));
    }
    let chars = text.chars().collect();
    CanonicalString { text, chars }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DistanceKind {
    Levenshtein,
    DamerauLevenshtein,
    Editor,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 3] = [
        DistanceKind::Levenshtein,
        DistanceKind::DamerauLevenshtein,
        DistanceKind::Editor,
    ];

    pub fn distance(self, a: &[char], b: &[char]) -> usize {
        match self {
            DistanceKind::Levenshtein => levenshtein_chars(a, b),
            DistanceKind::DamerauLevenshtein => osa_chars(a, b),
            DistanceKind::Editor => editor_chars(a, b),
        }
    }

    /// Largest distance attainable between strings of these lengths.
    pub fn max_possible(self, len_a: usize, len_b: usize) -> usize {
        match self {
            DistanceKind::Levenshtein | DistanceKind::DamerauLevenshtein => len_a.max(len_b),
            DistanceKind::Editor => len_a + len_b,
        }
    }
}

/// Similarity in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub fn new(value: f64) -> Option<Self> {
        (0.0..=1.0).contains(&value).then_some(SimilarityScore(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn levenshtein(a: &CanonicalString, b: &CanonicalString) -> usize {
    levenshtein_chars(a.chars(), b.chars())
}

/// Restricted (optimal string alignment) Damerau-Levenshtein distance.
pub fn damerau_levenshtein(a: &CanonicalString, b: &CanonicalString) -> usize {
    osa_chars(a.chars(), b.chars())
}

/// Insert/delete-only distance; a substitution costs two.
pub fn editor_distance(a: &CanonicalString, b: &CanonicalString) -> usize {
    editor_chars(a.chars(), b.chars())
}

pub fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = diag + usize::from(ca != cb);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(row[j + 1] + 1);
        }
    }
    row[b.len()]
}

pub fn osa_chars(a: &[char], b: &[char]) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return n + m;
    }
    // three rolling rows: i-2, i-1, i
    let mut prev2 = vec![0usize; m + 1];
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut d = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                d = d.min(prev2[j - 2] + 1);
            }
            cur[j] = d;
        }
        std::mem::swap(&mut prev2, &mut prev);
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Length of the longest common subsequence.
pub fn lcs_len(a: &[char], b: &[char]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for ca in a {
        let mut diag = 0;
        for (j, cb) in b.iter().enumerate() {
            let next = if ca == cb {
                diag + 1
            } else {
                row[j + 1].max(row[j])
            };
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

pub fn editor_chars(a: &[char], b: &[char]) -> usize {
    a.len() + b.len() - 2 * lcs_len(a, b)
}

/// Edit distance divided by the maximum possible distance for the given
/// lengths. Two empty strings have impact 0.
///
/// Panics if `d` exceeds the maximum possible distance.
pub fn impact(d: usize, len_a: usize, len_b: usize, kind: DistanceKind) -> f64 {
    let max = kind.max_possible(len_a, len_b);
    assert!(
        d <= max,
        "distance {d} exceeds maximum {max} for lengths ({len_a}, {len_b})"
    );
    if max == 0 {
        0.0
    } else {
        d as f64 / max as f64
    }
}

pub fn similarity(a: &CanonicalString, b: &CanonicalString, kind: DistanceKind) -> SimilarityScore {
    let d = kind.distance(a.chars(), b.chars());
    SimilarityScore(1.0 - impact(d, a.len(), b.len(), kind))
}

/// Mean of `1 - impact` over Levenshtein, Damerau-Levenshtein and editor
/// distances.
pub fn biographical_similarity(a: &CanonicalString, b: &CanonicalString) -> SimilarityScore {
    let sum: f64 = DistanceKind::ALL
        .iter()
        .map(|&k| similarity(a, b, k).0)
        .sum();
    SimilarityScore((sum / 3.0).clamp(0.0, 1.0))
}

/// Binary match on nominal fields such as gender.
pub fn nominal_match<S: PartialEq + ?Sized>(a: &S, b: &S) -> SimilarityScore {
    SimilarityScore(if a == b { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> CanonicalString {
        canonicalize(s)
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(c("John").as_str(), "john");
        assert_eq!(c("  MARY  ANN ").as_str(), "mary ann");
        assert_eq!(c("").as_str(), "");
        assert_eq!(c("\tÉLodie\n").as_str(), "élodie");
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein(&c("abc"), &c("abc")), 0);
        assert_eq!(levenshtein(&c(""), &c("abc")), 3);
        assert_eq!(levenshtein(&c("kitten"), &c("sitting")), 3);
    }

    #[test]
    fn damerau_examples() {
        assert_eq!(damerau_levenshtein(&c("ab"), &c("ba")), 1);
        assert_eq!(damerau_levenshtein(&c("abc"), &c("abc")), 0);
        // unrestricted variant would give 2
        assert_eq!(damerau_levenshtein(&c("ca"), &c("abc")), 3);
    }

    #[test]
    fn editor_examples() {
        assert_eq!(editor_distance(&c("a"), &c("b")), 2);
        assert_eq!(editor_distance(&c("abc"), &c("abc")), 0);
        assert_eq!(editor_distance(&c("kitten"), &c("sitting")), 5);
    }

    #[test]
    fn multibyte_is_per_character() {
        assert_eq!(levenshtein(&c("über"), &c("uber")), 1);
        assert_eq!(editor_distance(&c("über"), &c("uber")), 2);
    }

    #[test]
    fn impact_examples() {
        assert!((impact(3, 6, 7, DistanceKind::Levenshtein) - 3.0 / 7.0).abs() < 1e-12);
        for k in DistanceKind::ALL {
            assert_eq!(impact(0, 5, 5, k), 0.0);
            assert_eq!(impact(0, 0, 0, k), 0.0);
        }
        assert_eq!(impact(2, 1, 1, DistanceKind::Editor), 1.0);
    }

    #[test]
    #[should_panic(expected = "exceeds maximum")]
    fn impact_rejects_impossible_distance() {
        impact(4, 2, 3, DistanceKind::Levenshtein);
    }

    #[test]
    fn biographical_examples() {
        let s = biographical_similarity(&c("ab"), &c("ba")).value();
        assert!((s - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(biographical_similarity(&c("smith"), &c("smith")).value(), 1.0);
        assert_eq!(biographical_similarity(&c("a"), &c("z")).value(), 0.0);
        assert_eq!(biographical_similarity(&c("ab"), &c("ab ")).value(), 1.0);
        assert_eq!(biographical_similarity(&c(""), &c("")).value(), 1.0);
    }

    #[test]
    fn nominal_examples() {
        assert_eq!(nominal_match("M", "M").value(), 1.0);
        assert_eq!(nominal_match("M", "F").value(), 0.0);
        assert_eq!(nominal_match(&'F', &'F').value(), 1.0);
    }
}
