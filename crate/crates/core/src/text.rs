//! Text normalization shared by triple identity, node merging and embedding.

/// Trim and collapse internal whitespace runs to a single space.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonical comparison form: trimmed, whitespace-collapsed, case-folded.
pub fn normalize(text: &str) -> String {
    collapse_whitespace(text).to_lowercase()
}
