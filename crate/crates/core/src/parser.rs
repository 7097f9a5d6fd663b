//! Cascading parser for free-form model responses.
//!
//! Stages run in order on the normalized text: a strict nested-list literal,
//! `ROW<k>=[...]` lines, then a flatten fallback that reshapes every integer
//! in the text. The parser is format-only: entries are not range-checked.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

pub type ParsedMatrix = Matrix<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Strict,
    Rowwise,
    Flatten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseFailure {
    NoStructure,
    CountMismatch,
    ShapeMismatch,
    InvalidToken,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ParseOutcome {
    Parsed { stage: Stage, matrix: ParsedMatrix },
    Failed { failure: ParseFailure },
}

impl ParseOutcome {
    fn failed(failure: ParseFailure) -> Self {
        ParseOutcome::Failed { failure }
    }

    pub fn matrix(&self) -> Option<&ParsedMatrix> {
        match self {
            ParseOutcome::Parsed { matrix, .. } => Some(matrix),
            ParseOutcome::Failed { .. } => None,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            ParseOutcome::Parsed { stage, .. } => Some(*stage),
            ParseOutcome::Failed { .. } => None,
        }
    }

    pub fn failure(&self) -> Option<ParseFailure> {
        match self {
            ParseOutcome::Parsed { .. } => None,
            ParseOutcome::Failed { failure } => Some(*failure),
        }
    }

    pub fn is_parsed(&self) -> bool {
        matches!(self, ParseOutcome::Parsed { .. })
    }
}

/// Strips surrounding whitespace and markdown code fences, including a
/// language tag on the opening fence line.
pub fn normalize(text: &str) -> String {
    let trimmed = text.trim();
    if !trimmed.contains("```") {
        return trimmed.to_string();
    }
    let mut kept = Vec::new();
    for line in trimmed.lines() {
        let mut l = line.trim();
        if let Some(rest) = l.strip_prefix("```") {
            let rest = rest.trim();
            let rest = rest.strip_suffix("```").unwrap_or(rest).trim();
            let is_tag = rest.chars().all(|c| c.is_ascii_alphanumeric() || "_-+.".contains(c));
            if is_tag {
                continue;
            }
            l = rest;
            // Single-line fence such as ```python [[0]]```: drop the tag word.
            if let Some((head, tail)) = l.split_once(char::is_whitespace) {
                if head.chars().all(|c| c.is_ascii_alphabetic()) {
                    l = tail.trim();
                }
            }
            kept.push(l);
            continue;
        }
        if let Some(rest) = l.strip_suffix("```") {
            l = rest.trim_end();
            if l.is_empty() {
                continue;
            }
            kept.push(l);
            continue;
        }
        kept.push(line);
    }
    kept.join("\n").trim().to_string()
}

enum Node<'a> {
    List(Vec<Node<'a>>),
    Atom(&'a str),
}

struct LiteralParser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> LiteralParser<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<u8> {
        self.text.as_bytes().get(self.pos).copied()
    }

    fn value(&mut self) -> Option<Node<'a>> {
        self.skip_ws();
        if self.peek()? == b'[' {
            self.pos += 1;
            let mut items = Vec::new();
            self.skip_ws();
            if self.peek()? == b']' {
                self.pos += 1;
                return Some(Node::List(items));
            }
            loop {
                items.push(self.value()?);
                self.skip_ws();
                match self.peek()? {
                    b',' => self.pos += 1,
                    b']' => {
                        self.pos += 1;
                        return Some(Node::List(items));
                    }
                    _ => return None,
                }
            }
        }
        let rest = &self.text[self.pos..];
        let len = rest.find(['[', ']', ',']).unwrap_or(rest.len());
        let atom = rest[..len].trim();
        if atom.is_empty() {
            return None;
        }
        self.pos += len;
        Some(Node::Atom(atom))
    }
}

fn integer_token(token: &str) -> Result<i64, ParseFailure> {
    let digits = token.strip_prefix(['+', '-']).unwrap_or(token);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseFailure::InvalidToken);
    }
    token.parse().map_err(|_| ParseFailure::InvalidToken)
}

/// Accepts exactly one `[[int, ...], ...]` literal spanning the whole text.
pub fn parse_strict(text: &str, h: usize, w: usize) -> ParseOutcome {
    let mut parser = LiteralParser { text, pos: 0 };
    let Some(root) = parser.value() else {
        return ParseOutcome::failed(ParseFailure::NoStructure);
    };
    parser.skip_ws();
    if parser.pos != text.len() {
        return ParseOutcome::failed(ParseFailure::NoStructure);
    }
    let Node::List(rows) = root else {
        return ParseOutcome::failed(ParseFailure::NoStructure);
    };
    if rows.is_empty() {
        return ParseOutcome::failed(ParseFailure::NoStructure);
    }
    let mut parsed = Vec::with_capacity(rows.len());
    for row in &rows {
        let Node::List(cells) = row else {
            return ParseOutcome::failed(ParseFailure::NoStructure);
        };
        if cells.is_empty() {
            return ParseOutcome::failed(ParseFailure::NoStructure);
        }
        let mut values = Vec::with_capacity(cells.len());
        for cell in cells {
            match cell {
                Node::List(_) => return ParseOutcome::failed(ParseFailure::NoStructure),
                Node::Atom(token) => match integer_token(token) {
                    Ok(v) => values.push(v),
                    Err(f) => return ParseOutcome::failed(f),
                },
            }
        }
        parsed.push(values);
    }
    if parsed.len() != h || parsed.iter().any(|r| r.len() != w) {
        return ParseOutcome::failed(ParseFailure::ShapeMismatch);
    }
    ParseOutcome::Parsed {
        stage: Stage::Strict,
        matrix: ParsedMatrix::from_rows(&parsed).expect("rectangular"),
    }
}

fn row_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"(?i)\brow\s*(\d+)\s*=\s*\[([^\[\]]*)\]").expect("valid regex"))
}

fn integer_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"-?\d+").expect("valid regex"))
}

/// Collects `ROW<k>=[...]` rows keyed by label; labels are case-insensitive
/// and may appear in any order.
pub fn parse_rowwise(text: &str, h: usize, w: usize) -> ParseOutcome {
    let mut rows: Vec<Option<Vec<i64>>> = vec![None; h];
    let mut found = false;
    for caps in row_pattern().captures_iter(text) {
        found = true;
        let label = caps[1].parse::<usize>().unwrap_or(0);
        if label == 0 || label > h || rows[label - 1].is_some() {
            return ParseOutcome::failed(ParseFailure::NoStructure);
        }
        let values: Result<Vec<i64>, _> = caps[2]
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(integer_token)
            .collect();
        match values {
            Ok(v) if v.len() == w => rows[label - 1] = Some(v),
            _ => return ParseOutcome::failed(ParseFailure::NoStructure),
        }
    }
    if !found || rows.iter().any(Option::is_none) {
        return ParseOutcome::failed(ParseFailure::NoStructure);
    }
    let rows: Vec<Vec<i64>> = rows.into_iter().flatten().collect();
    ParseOutcome::Parsed {
        stage: Stage::Rowwise,
        matrix: ParsedMatrix::from_rows(&rows).expect("rectangular"),
    }
}

/// Extracts every integer token and reshapes row-major when the count is `h * w`.
pub fn parse_flatten(text: &str, h: usize, w: usize) -> ParseOutcome {
    let tokens: Result<Vec<i64>, _> = integer_pattern()
        .find_iter(text)
        .map(|m| m.as_str().parse::<i64>().map_err(|_| ParseFailure::InvalidToken))
        .collect();
    match tokens {
        Err(f) => ParseOutcome::failed(f),
        Ok(values) if values.len() == h * w && h * w > 0 => ParseOutcome::Parsed {
            stage: Stage::Flatten,
            matrix: ParsedMatrix::from_flat(h, w, values).expect("count checked"),
        },
        Ok(_) => ParseOutcome::failed(ParseFailure::CountMismatch),
    }
}

/// Normalizes, then tries strict, rowwise and flatten in turn. When every
/// stage fails the flatten stage's failure is returned.
pub fn parse_cascade(text: &str, h: usize, w: usize) -> ParseOutcome {
    let text = normalize(text);
    let strict = parse_strict(&text, h, w);
    if strict.is_parsed() {
        return strict;
    }
    let rowwise = parse_rowwise(&text, h, w);
    if rowwise.is_parsed() {
        return rowwise;
    }
    parse_flatten(&text, h, w)
}

/// Serializes a matrix the way the prompt asks for it: `[[0, 1], [2, 0]]`.
pub fn format_matrix<T: Copy + std::fmt::Display>(matrix: &Matrix<T>) -> String {
    let rows: Vec<String> = matrix
        .to_rows()
        .iter()
        .map(|r| {
            let cells: Vec<String> = r.iter().map(ToString::to_string).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[i64]]) -> ParsedMatrix {
        ParsedMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("```\n[[0]]\n```"), "[[0]]");
        assert_eq!(normalize("[[0]]"), "[[0]]");
        assert_eq!(normalize("  [[0]]\n"), "[[0]]");
        assert_eq!(normalize("```python\n[[0, 1],\n [2, 0]]\n```"), "[[0, 1],\n [2, 0]]");
        assert_eq!(normalize("```[[0]]```"), "[[0]]");
    }

    #[test]
    fn strict_examples() {
        let out = parse_strict("[[0, 1], [2, 0]]", 2, 2);
        assert_eq!(out.matrix(), Some(&m(&[&[0, 1], &[2, 0]])));
        assert_eq!(out.stage(), Some(Stage::Strict));
        assert_eq!(parse_strict("[[0,1],[2]]", 2, 2).failure(), Some(ParseFailure::ShapeMismatch));
        assert_eq!(
            parse_strict("The answer is [[0,1],[2,0]]", 2, 2).failure(),
            Some(ParseFailure::NoStructure)
        );
        assert_eq!(parse_strict("[[0, a], [2, 0]]", 2, 2).failure(), Some(ParseFailure::InvalidToken));
        assert_eq!(parse_strict("[[-1, +2]]", 1, 2).matrix(), Some(&m(&[&[-1, 2]])));
    }

    #[test]
    fn rowwise_examples() {
        let out = parse_rowwise("ROW1=[0, 1]\nROW2=[2, 0]", 2, 2);
        assert_eq!(out.stage(), Some(Stage::Rowwise));
        assert_eq!(out.matrix(), Some(&m(&[&[0, 1], &[2, 0]])));
        assert!(!parse_rowwise("ROW1=[0,1]", 2, 2).is_parsed());
        let swapped = parse_rowwise("row2=[2,0]\nrow1=[0,1]", 2, 2);
        assert_eq!(swapped.matrix(), Some(&m(&[&[0, 1], &[2, 0]])));
        assert!(!parse_rowwise("ROW1=[0,1]\nROW1=[0,1]\nROW2=[2,0]", 2, 2).is_parsed());
    }

    #[test]
    fn flatten_examples() {
        assert_eq!(parse_flatten("grid: 0 1 2 0", 2, 2).matrix(), Some(&m(&[&[0, 1], &[2, 0]])));
        assert_eq!(parse_flatten("0 1 2", 2, 2).failure(), Some(ParseFailure::CountMismatch));
        assert_eq!(parse_flatten("0, 1,\n2, 0", 2, 2).matrix(), Some(&m(&[&[0, 1], &[2, 0]])));
        assert_eq!(
            parse_flatten("0 1 2 99999999999999999999", 2, 2).failure(),
            Some(ParseFailure::InvalidToken)
        );
    }

    #[test]
    fn cascade_examples() {
        assert_eq!(parse_cascade("[[0, 1], [2, 0]]", 2, 2).stage(), Some(Stage::Strict));
        let rows = parse_cascade("ROW1=[0,1]\nROW2=[2,0]", 2, 2);
        assert_eq!(rows.stage(), Some(Stage::Rowwise));
        assert_eq!(rows.matrix(), Some(&m(&[&[0, 1], &[2, 0]])));
        assert_eq!(
            parse_cascade("I cannot see the image.", 2, 2).failure(),
            Some(ParseFailure::CountMismatch)
        );
    }

    #[test]
    fn outcome_json_shape() {
        let ok = serde_json::to_string(&parse_cascade("[[1]]", 1, 1)).unwrap();
        assert_eq!(ok, r#"{"status":"parsed","stage":"strict","matrix":[[1]]}"#);
        let bad = serde_json::to_string(&parse_cascade("", 1, 1)).unwrap();
        assert_eq!(bad, r#"{"status":"failed","failure":"count-mismatch"}"#);
    }

    proptest! {
        #[test]
        fn serialized_matrices_parse_strictly(rows in 1usize..8, cols in 1usize..8, seed in any::<u64>()) {
            let mut rng = crate::splitmix::SplitMix64::new(seed);
            let data: Vec<i64> = (0..rows * cols).map(|_| rng.next_below(10) as i64).collect();
            let mat = ParsedMatrix::from_flat(rows, cols, data).unwrap();
            let out = parse_cascade(&format_matrix(&mat), rows, cols);
            prop_assert_eq!(out.stage(), Some(Stage::Strict));
            prop_assert_eq!(out.matrix(), Some(&mat));
        }

        #[test]
        fn cascade_is_total_and_sound(text in ".{0,200}", h in 1usize..5, w in 1usize..5) {
            if let Some(mat) = parse_cascade(&text, h, w).matrix() {
                prop_assert_eq!(mat.shape(), (h, w));
            }
        }
    }
}
