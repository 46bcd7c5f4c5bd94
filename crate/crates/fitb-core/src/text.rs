//! Word normalization shared by goal matching in generation and evaluation.

use std::collections::HashMap;

/// Case-fold a word and strip punctuation. Words that normalize to nothing
/// (pure punctuation) yield `None`.
pub fn normalize_word(word: &str) -> Option<String> {
    let s: String = word
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect();
    (!s.is_empty()).then_some(s)
}

/// Normalize a word sequence, dropping words that normalize to nothing.
pub fn normalize_words(words: &[String]) -> Vec<String> {
    words.iter().filter_map(|w| normalize_word(w)).collect()
}

/// Multiset containment: every normalized goal word occurs in the
/// generation at least as many times as in the goal.
pub fn contains_goal_words(goal: &[String], generation: &[String]) -> bool {
    let mut available: HashMap<String, usize> = HashMap::new();
    for word in normalize_words(generation) {
        *available.entry(word).or_insert(0) += 1;
    }
    for word in normalize_words(goal) {
        match available.get_mut(&word) {
            Some(count) if *count > 0 => *count -= 1,
            _ => return false,
        }
    }
    true
}

/// Contiguous variant: the normalized goal appears as a contiguous
/// subsequence of the normalized generation.
pub fn contains_goal_contiguous(goal: &[String], generation: &[String]) -> bool {
    let goal = normalize_words(goal);
    let generation = normalize_words(generation);
    if goal.is_empty() {
        return true;
    }
    generation.windows(goal.len()).any(|w| w == goal.as_slice())
}
