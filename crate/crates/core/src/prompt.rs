//! Evaluation prompt construction and the generation token budget.

use thiserror::Error;

use crate::grid::Palette;

/// Canonical prompt, with `{H}`, `{W}` and `{MAPPING}` slots.
pub const TEMPLATE: &str = include_str!("prompt_template.txt");
pub const TEMPLATE_VERSION: u32 = 1;
pub const MAX_TOKENS_CAP: usize = 2048;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("color mapping is empty")]
    EmptyMapping,
    #[error("color mapping values must be exactly 0..{expected}, found {found:?}")]
    NonContiguous { expected: usize, found: Vec<usize> },
    #[error("duplicate color name {0}")]
    DuplicateName(String),
    #[error("grid dimensions must be positive, got {h} x {w}")]
    ZeroDimension { h: usize, w: usize },
}

/// Color-name to integer dictionary, always held sorted by value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorMapping {
    pairs: Vec<(String, usize)>,
}

impl ColorMapping {
    pub fn new<S: Into<String>>(pairs: impl IntoIterator<Item = (S, usize)>) -> Result<Self, PromptError> {
        let mut pairs: Vec<(String, usize)> = pairs.into_iter().map(|(n, v)| (n.into(), v)).collect();
        if pairs.is_empty() {
            return Err(PromptError::EmptyMapping);
        }
        pairs.sort_by_key(|&(_, v)| v);
        if pairs.iter().enumerate().any(|(i, &(_, v))| i != v) {
            return Err(PromptError::NonContiguous {
                expected: pairs.len(),
                found: pairs.iter().map(|p| p.1).collect(),
            });
        }
        for (i, (name, _)) in pairs.iter().enumerate() {
            if pairs[..i].iter().any(|(other, _)| other == name) {
                return Err(PromptError::DuplicateName(name.clone()));
            }
        }
        Ok(Self { pairs })
    }

    /// The first `c` palette colors.
    pub fn from_palette(palette: &Palette, c: usize) -> Result<Self, PromptError> {
        Self::new(
            palette
                .entries()
                .iter()
                .take(c)
                .enumerate()
                .map(|(i, e)| (e.name.clone(), i)),
        )
    }

    pub fn pairs(&self) -> &[(String, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `{White: 0, Red: 1, Blue: 2}`
    pub fn render(&self) -> String {
        let body: Vec<String> = self.pairs.iter().map(|(n, v)| format!("{n}: {v}")).collect();
        format!("{{{}}}", body.join(", "))
    }

    /// Inverse of [`ColorMapping::render`].
    pub fn parse(text: &str) -> Option<Self> {
        let inner = text.trim().strip_prefix('{')?.strip_suffix('}')?;
        let pairs = inner
            .split(',')
            .map(|item| {
                let (name, value) = item.split_once(':')?;
                Some((name.trim().to_string(), value.trim().parse().ok()?))
            })
            .collect::<Option<Vec<(String, usize)>>>()?;
        Self::new(pairs).ok()
    }
}

pub fn build_prompt(h: usize, w: usize, mapping: &ColorMapping) -> Result<String, PromptError> {
    if h == 0 || w == 0 {
        return Err(PromptError::ZeroDimension { h, w });
    }
    if mapping.is_empty() {
        return Err(PromptError::EmptyMapping);
    }
    Ok(TEMPLATE
        .replace("{H}", &h.to_string())
        .replace("{W}", &w.to_string())
        .replace("{MAPPING}", &mapping.render()))
}

/// Recovers the mapping line from a prompt built by [`build_prompt`].
pub fn mapping_from_prompt(prompt: &str) -> Option<ColorMapping> {
    let line = prompt.lines().find_map(|l| l.strip_prefix("Color Mapping: "))?;
    ColorMapping::parse(line)
}

/// `min(h*w*4 + h*20 + 50, 2048)`
pub fn max_tokens(h: usize, w: usize) -> usize {
    h.saturating_mul(w)
        .saturating_mul(4)
        .saturating_add(h.saturating_mul(20))
        .saturating_add(50)
        .min(MAX_TOKENS_CAP)
}
