//! Contraction specifications and the benchmark line format.
//!
//! A line looks like `abc dca db & a:4;b:8;c:2;d:8;`: the index labels of
//! C, A and B, then the extent of every label. Labels are single ASCII
//! letters and each must appear in exactly two of the three tensors. This
//! induces three index bundles:
//!
//! * `I`: labels shared by C and A, in C's order (rows of C and A),
//! * `J`: labels shared by C and B, in C's order (columns of C and B),
//! * `P`: labels shared by A and B, in A's order (the contracted bundle).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("expected exactly one '&' separating labels from extents")]
    MissingSeparator,
    #[error("expected 3 label strings (C A B), found {0}")]
    WrongTensorCount(usize),
    #[error("invalid label {0:?}: labels are single ASCII letters")]
    InvalidLabel(String),
    #[error("label '{label}' repeated within tensor {tensor}")]
    RepeatedLabel { label: char, tensor: char },
    #[error("label '{label}' appears in {count} tensor(s); it must appear in exactly two")]
    LabelCount { label: char, count: usize },
    #[error("malformed extent entry {0:?}")]
    MalformedExtent(String),
    #[error("extent for '{0}' given more than once")]
    DuplicateExtent(char),
    #[error("extent of '{0}' must be positive")]
    NonPositiveExtent(char),
    #[error("no extent given for label '{0}'")]
    MissingExtent(char),
    #[error("extent given for unknown label '{0}'")]
    UnknownExtent(char),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractionSpec {
    labels_c: Vec<char>,
    labels_a: Vec<char>,
    labels_b: Vec<char>,
    extents: BTreeMap<char, usize>,
    bundle_i: Vec<char>,
    bundle_j: Vec<char>,
    bundle_p: Vec<char>,
}

fn parse_labels(s: &str, tensor: char) -> Result<Vec<char>, ParseError> {
    let mut out = Vec::with_capacity(s.len());
    for ch in s.chars() {
        if !ch.is_ascii_alphabetic() {
            return Err(ParseError::InvalidLabel(ch.to_string()));
        }
        if out.contains(&ch) {
            return Err(ParseError::RepeatedLabel { label: ch, tensor });
        }
        out.push(ch);
    }
    Ok(out)
}

impl ContractionSpec {
    /// Builds and validates a spec from label strings and extents.
    pub fn new(
        c: &str,
        a: &str,
        b: &str,
        extents: impl IntoIterator<Item = (char, usize)>,
    ) -> Result<Self, ParseError> {
        let labels_c = parse_labels(c, 'C')?;
        let labels_a = parse_labels(a, 'A')?;
        let labels_b = parse_labels(b, 'B')?;

        let mut ext = BTreeMap::new();
        for (label, e) in extents {
            if !label.is_ascii_alphabetic() {
                return Err(ParseError::InvalidLabel(label.to_string()));
            }
            if e == 0 {
                return Err(ParseError::NonPositiveExtent(label));
            }
            if ext.insert(label, e).is_some() {
                return Err(ParseError::DuplicateExtent(label));
            }
        }

        for &label in labels_c.iter().chain(&labels_a).chain(&labels_b) {
            let count = [&labels_c, &labels_a, &labels_b]
                .iter()
                .filter(|l| l.contains(&label))
                .count();
            if count != 2 {
                return Err(ParseError::LabelCount { label, count });
            }
            if !ext.contains_key(&label) {
                return Err(ParseError::MissingExtent(label));
            }
        }
        if let Some(&unused) = ext
            .keys()
            .find(|l| !labels_c.contains(l) && !labels_a.contains(l) && !labels_b.contains(l))
        {
            return Err(ParseError::UnknownExtent(unused));
        }

        let bundle_i = labels_c
            .iter()
            .copied()
            .filter(|l| labels_a.contains(l))
            .collect();
        let bundle_j = labels_c
            .iter()
            .copied()
            .filter(|l| labels_b.contains(l))
            .collect();
        let bundle_p = labels_a
            .iter()
            .copied()
            .filter(|l| labels_b.contains(l))
            .collect();

        Ok(ContractionSpec {
            labels_c,
            labels_a,
            labels_b,
            extents: ext,
            bundle_i,
            bundle_j,
            bundle_p,
        })
    }

    pub fn labels_c(&self) -> &[char] {
        &self.labels_c
    }
    pub fn labels_a(&self) -> &[char] {
        &self.labels_a
    }
    pub fn labels_b(&self) -> &[char] {
        &self.labels_b
    }
    pub fn bundle_i(&self) -> &[char] {
        &self.bundle_i
    }
    pub fn bundle_j(&self) -> &[char] {
        &self.bundle_j
    }
    pub fn bundle_p(&self) -> &[char] {
        &self.bundle_p
    }

    pub fn extents(&self) -> &BTreeMap<char, usize> {
        &self.extents
    }

    pub fn extent(&self, label: char) -> Option<usize> {
        self.extents.get(&label).copied()
    }

    fn extents_of(&self, labels: &[char]) -> Vec<usize> {
        labels.iter().map(|l| self.extents[l]).collect()
    }

    pub fn extents_of_a(&self) -> Vec<usize> {
        self.extents_of(&self.labels_a)
    }
    pub fn extents_of_b(&self) -> Vec<usize> {
        self.extents_of(&self.labels_b)
    }
    pub fn extents_of_c(&self) -> Vec<usize> {
        self.extents_of(&self.labels_c)
    }

    /// Product of the extents in bundle I.
    pub fn n_i(&self) -> usize {
        self.extents_of(&self.bundle_i).iter().product()
    }
    pub fn n_j(&self) -> usize {
        self.extents_of(&self.bundle_j).iter().product()
    }
    pub fn n_p(&self) -> usize {
        self.extents_of(&self.bundle_p).iter().product()
    }

    /// `C-A-B` label strings, e.g. `abcd-aebf-dfce`.
    pub fn index_string(&self) -> String {
        let s = |l: &[char]| l.iter().collect::<String>();
        format!(
            "{}-{}-{}",
            s(&self.labels_c),
            s(&self.labels_a),
            s(&self.labels_b)
        )
    }
}

/// Parses one benchmark line. See the module docs for the format.
pub fn parse_benchmark_line(line: &str) -> Result<ContractionSpec, ParseError> {
    let mut halves = line.split('&');
    let (Some(labels), Some(extents), None) = (halves.next(), halves.next(), halves.next()) else {
        return Err(ParseError::MissingSeparator);
    };

    let tensors: Vec<&str> = labels.split_whitespace().collect();
    if tensors.len() != 3 {
        return Err(ParseError::WrongTensorCount(tensors.len()));
    }

    let extents = extents.trim();
    let extents = extents.strip_suffix(';').unwrap_or(extents);
    let mut parsed = Vec::new();
    if !extents.is_empty() {
        for item in extents.split(';') {
            let item = item.trim();
            let (label, value) = item
                .split_once(':')
                .ok_or_else(|| ParseError::MalformedExtent(item.to_string()))?;
            let label = label.trim();
            let mut chars = label.chars();
            let ch = match (chars.next(), chars.next()) {
                (Some(ch), None) if ch.is_ascii_alphabetic() => ch,
                _ => return Err(ParseError::InvalidLabel(label.to_string())),
            };
            let value: i64 = value
                .trim()
                .parse()
                .map_err(|_| ParseError::MalformedExtent(item.to_string()))?;
            if value <= 0 {
                return Err(ParseError::NonPositiveExtent(ch));
            }
            parsed.push((ch, value as usize));
        }
    }

    ContractionSpec::new(tensors[0], tensors[1], tensors[2], parsed)
}

/// Parses a whole benchmark file, skipping blank lines and `#` comments.
/// Errors carry the 1-based line number.
pub fn parse_benchmark_file(text: &str) -> Result<Vec<ContractionSpec>, (usize, ParseError)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(no, l)| parse_benchmark_line(l).map_err(|e| (no + 1, e)))
        .collect()
}

impl FromStr for ContractionSpec {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        parse_benchmark_line(s)
    }
}

impl fmt::Display for ContractionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |l: &[char]| l.iter().collect::<String>();
        write!(
            f,
            "{} {} {} &",
            s(&self.labels_c),
            s(&self.labels_a),
            s(&self.labels_b)
        )?;
        for (i, (l, e)) in self.extents.iter().enumerate() {
            write!(f, "{}{l}:{e};", if i == 0 { " " } else { "" })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_index_line() {
        let s = parse_benchmark_line("abc dca db & a:4;b:8;c:2;d:8;").unwrap();
        assert_eq!(s.labels_c(), &['a', 'b', 'c']);
        assert_eq!(s.labels_a(), &['d', 'c', 'a']);
        assert_eq!(s.labels_b(), &['d', 'b']);
        assert_eq!(s.bundle_i(), &['a', 'c']);
        assert_eq!(s.bundle_j(), &['b']);
        assert_eq!(s.bundle_p(), &['d']);
        assert_eq!((s.n_i(), s.n_j(), s.n_p()), (8, 8, 8));
        assert_eq!(s.to_string(), "abc dca db & a:4;b:8;c:2;d:8;");
    }

    #[test]
    fn matrix_line() {
        let s = parse_benchmark_line("ab ac cb & a:2;b:2;c:2;").unwrap();
        assert_eq!(s.bundle_i(), &['a']);
        assert_eq!(s.bundle_j(), &['b']);
        assert_eq!(s.bundle_p(), &['c']);
    }

    #[test]
    fn four_index_line() {
        let s = parse_benchmark_line("abcd aebf dfce & a:8;b:8;c:8;d:8;e:8;f:8;").unwrap();
        assert_eq!(s.bundle_i(), &['a', 'b']);
        assert_eq!(s.bundle_j(), &['c', 'd']);
        assert_eq!(s.bundle_p(), &['e', 'f']);
        assert_eq!(s.index_string(), "abcd-aebf-dfce");
    }

    #[test]
    fn trailing_semicolon_optional() {
        let with = parse_benchmark_line("ab ac cb & a:2;b:3;c:4;").unwrap();
        let without = parse_benchmark_line("ab ac cb & a:2;b:3;c:4").unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn distinct_errors() {
        use ParseError::*;
        let cases = [
            ("ab ac cb a:2;b:2;c:2;", MissingSeparator),
            ("ab ac cb & a:2 & b:2", MissingSeparator),
            ("ab ac & a:2;b:2;c:2;", WrongTensorCount(2)),
            ("ab ac cb & a:2;b:2;", MissingExtent('c')),
            ("ab ac cb & a:2;b:2;c:2;z:3;", UnknownExtent('z')),
            ("ab ac cb & a:2;b:2;c:0;", NonPositiveExtent('c')),
            ("ab ac cb & a:2;b:2;c:-3;", NonPositiveExtent('c')),
            ("ab ac cb & a:2;b:2;c2;", MalformedExtent("c2".into())),
            ("ab ac cb & a:2;b:2;c:x;", MalformedExtent("c:x".into())),
            ("ab ac cb & a:2;b:2;cc:2;", InvalidLabel("cc".into())),
            ("ab ac cb & a:2;b:2;c:2;a:2;", DuplicateExtent('a')),
            (
                "abd ac cb & a:2;b:2;c:2;d:2;",
                LabelCount { label: 'd', count: 1 },
            ),
            ("abc ac cb & a:2;b:2;c:2;", LabelCount { label: 'c', count: 3 }),
            (
                "aab ac cb & a:2;b:2;c:2;",
                RepeatedLabel {
                    label: 'a',
                    tensor: 'C',
                },
            ),
            ("a1 a1 11 & a:2;", InvalidLabel("1".into())),
        ];
        for (line, want) in cases {
            assert_eq!(parse_benchmark_line(line).unwrap_err(), want, "{line}");
        }
    }

    #[test]
    fn file_skips_comments_and_reports_line() {
        let text = "# header\n\nab ac cb & a:2;b:2;c:2;\nabc dca db & a:4;b:8;c:2;d:8;\n";
        assert_eq!(parse_benchmark_file(text).unwrap().len(), 2);
        let bad = "ab ac cb & a:2;b:2;c:2;\n\nab ac cb & a:2;\n";
        assert_eq!(
            parse_benchmark_file(bad).unwrap_err(),
            (3, ParseError::MissingExtent('b'))
        );
    }

    fn arb_spec() -> impl Strategy<Value = ContractionSpec> {
        // Assign each of up to 8 labels to one of the three bundles, then shuffle.
        (
            proptest::collection::vec((0u8..3, 1usize..30), 3..9),
            any::<u64>(),
        )
            .prop_filter_map("every tensor needs a label", |(assign, seed)| {
                let labels: Vec<char> = ('a'..='z').take(assign.len()).collect();
                let mut i = Vec::new();
                let mut j = Vec::new();
                let mut p = Vec::new();
                for (l, &(b, _)) in labels.iter().zip(&assign) {
                    [&mut i, &mut j, &mut p][b as usize].push(*l);
                }
                let rot = |v: &[char], k: u64| {
                    let mut v = v.to_vec();
                    if !v.is_empty() {
                        let n = v.len();
                        v.rotate_left((k as usize) % n);
                    }
                    v
                };
                let c: String = rot(&[i.clone(), j.clone()].concat(), seed).into_iter().collect();
                let a: String = rot(&[p.clone(), i].concat(), seed >> 8).into_iter().collect();
                let b: String = rot(&[j, p].concat(), seed >> 16).into_iter().collect();
                if c.is_empty() || a.is_empty() || b.is_empty() {
                    return None;
                }
                let ext = labels.iter().copied().zip(assign.iter().map(|&(_, e)| e));
                ContractionSpec::new(&c, &a, &b, ext).ok()
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_roundtrip(spec in arb_spec()) {
            let again = parse_benchmark_line(&spec.to_string()).unwrap();
            prop_assert_eq!(&again, &spec);
        }

        #[test]
        fn bundle_sizes_partition_labels(spec in arb_spec()) {
            prop_assert_eq!(spec.bundle_i().len() + spec.bundle_j().len(), spec.labels_c().len());
            prop_assert_eq!(spec.bundle_i().len() + spec.bundle_p().len(), spec.labels_a().len());
            prop_assert_eq!(spec.bundle_p().len() + spec.bundle_j().len(), spec.labels_b().len());
        }
    }
}
