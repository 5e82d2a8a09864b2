//! Cleanup pipeline applied to raw retrieval passages before merging.
//!
//! Steps, in order: strip markup tags, collapse whitespace runs, trim, drop
//! passages shorter than the relevance floor, deduplicate on the normalized
//! lowercased text, then join survivors with the separator and truncate to
//! the merged-length cap. Cleaning is idempotent.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanupOptions {
    /// Passages shorter than this (in characters, after normalization) are
    /// treated as noise and dropped.
    pub min_passage_chars: usize,
    /// Merged text is cut at this many characters.
    pub max_merged_chars: usize,
    pub separator: String,
}

impl Default for CleanupOptions {
    fn default() -> Self {
        Self {
            min_passage_chars: 40,
            max_merged_chars: 8000,
            separator: "\n---\n".to_string(),
        }
    }
}

impl CleanupOptions {
    /// Keeps everything; used by the mock retriever so its contract does not
    /// depend on relevance thresholds.
    pub fn permissive() -> Self {
        Self {
            min_passage_chars: 0,
            ..Self::default()
        }
    }
}

fn strip_markup(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        out.push_str(&rest[..open]);
        match rest[open..].find('>') {
            Some(close) => rest = &rest[open + close + 1..],
            None => {
                // Unmatched '<' is kept as literal text.
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_run = false;
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !in_run {
                out.push(' ');
            }
            in_run = true;
        } else {
            out.push(ch);
            in_run = false;
        }
    }
    out
}

fn normalize(text: &str) -> String {
    collapse_whitespace(&strip_markup(text)).trim().to_string()
}

/// Normalizes, filters, and deduplicates passages. Idempotent:
/// `clean_passages(clean_passages(p)) == clean_passages(p)`.
pub fn clean_passages(passages: &[String], opts: &CleanupOptions) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut kept = Vec::new();
    for passage in passages {
        let cleaned = normalize(passage);
        if cleaned.chars().count() < opts.min_passage_chars || cleaned.is_empty() {
            continue;
        }
        if seen.insert(cleaned.to_lowercase()) {
            kept.push(cleaned);
        }
    }
    kept
}

/// Joins cleaned passages and truncates to the configured length.
pub fn merge_passages(cleaned: &[String], opts: &CleanupOptions) -> String {
    let merged = cleaned.join(&opts.separator);
    match merged.char_indices().nth(opts.max_merged_chars) {
        Some((byte, _)) => merged[..byte].to_string(),
        None => merged,
    }
}
