//! Tokenization and sequence utilities shared by the metric suite and the
//! safety rule.
//!
//! The metric tokenizer is fixed: text is lowercased, maximal runs of
//! alphanumeric characters become tokens, every other non-whitespace character
//! is a token of its own, and whitespace is discarded.

/// Lowercase word-plus-punctuation tokenization.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            tokens.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Whitespace word count, used for dataset statistics and token budgets.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Length of the longest common subsequence of two token slices.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F1 between a candidate and a reference token sequence.
/// Returns 0 when either side is empty.
pub fn lcs_f1<T: PartialEq>(candidate: &[T], reference: &[T]) -> f64 {
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let precision = lcs as f64 / candidate.len() as f64;
    let recall = lcs as f64 / reference.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(
            tokenize("Heat the flask, slowly!"),
            vec!["heat", "the", "flask", ",", "slowly", "!"]
        );
        assert_eq!(tokenize("CuSO4·5H2O"), vec!["cuso4", "·", "5h2o"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn lcs_basics() {
        let a: Vec<char> = "ABCBDAB".chars().collect();
        let b: Vec<char> = "BDCABA".chars().collect();
        assert_eq!(lcs_len(&a, &b), 4);
        assert_eq!(lcs_len::<char>(&[], &b), 0);
    }

    #[test]
    fn f1_identity_is_one() {
        let t = tokenize("wear goggles");
        assert_eq!(lcs_f1(&t, &t), 1.0);
    }
}
