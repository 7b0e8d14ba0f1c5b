//! Shared word tokenizer.

/// Lower-cases and splits on every non-alphanumeric character, dropping empty pieces.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::tokenize;

    #[test]
    fn splits_and_folds() {
        assert_eq!(tokenize("Computer Science"), vec!["computer", "science"]);
        assert_eq!(tokenize("  a--B_c.42 "), vec!["a", "b", "c", "42"]);
        assert!(tokenize("...").is_empty());
    }
}
