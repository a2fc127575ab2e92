use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reference to a prior answer through the `[ANSWER_N]` token (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlaceholderRef {
    pub index: usize,
}

impl PlaceholderRef {
    pub fn render(self) -> String {
        format!("[ANSWER_{}]", self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("placeholder [ANSWER_{index}] has no answer")]
pub struct UnresolvedPlaceholder {
    pub index: usize,
}

const PREFIX: &str = "[ANSWER_";

/// Scans for placeholder tokens, yielding (byte range, index).
fn scan(text: &str) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut pos = 0;
    while let Some(rel) = text[pos..].find(PREFIX) {
        let start = pos + rel;
        let digits_start = start + PREFIX.len();
        let digits = bytes[digits_start..]
            .iter()
            .take_while(|b| b.is_ascii_digit())
            .count();
        let end = digits_start + digits;
        if digits > 0 && bytes.get(end) == Some(&b']') {
            if let Ok(index) = text[digits_start..end].parse::<usize>() {
                out.push((start, end + 1, index));
            }
            pos = end + 1;
        } else {
            pos = digits_start;
        }
    }
    out
}

/// Placeholder indices in textual order, duplicates preserved.
pub fn extract_placeholder_refs(subquestion: &str) -> Vec<PlaceholderRef> {
    scan(subquestion)
        .into_iter()
        .map(|(_, _, index)| PlaceholderRef { index })
        .collect()
}

/// Substitutes every `[ANSWER_i]` with `answers[i]`; the rest of the text is untouched.
pub fn fill_placeholders(
    subquestion: &str,
    answers: &[String],
) -> Result<String, UnresolvedPlaceholder> {
    let mut out = String::with_capacity(subquestion.len());
    let mut last = 0;
    for (start, end, index) in scan(subquestion) {
        let answer = answers.get(index).ok_or(UnresolvedPlaceholder { index })?;
        out.push_str(&subquestion[last..start]);
        out.push_str(answer);
        last = end;
    }
    out.push_str(&subquestion[last..]);
    Ok(out)
}

/// Rewrites 1-based placeholders (`[ANSWER_1]` = first answer) into the 0-based convention.
/// `[ANSWER_0]` has no 1-based meaning and is left as is.
pub fn normalize_one_based(subquestion: &str) -> String {
    let mut out = String::with_capacity(subquestion.len());
    let mut last = 0;
    for (start, end, index) in scan(subquestion) {
        out.push_str(&subquestion[last..start]);
        match index.checked_sub(1) {
            Some(i) => out.push_str(&PlaceholderRef { index: i }.render()),
            None => out.push_str(&subquestion[start..end]),
        }
        last = end;
    }
    out.push_str(&subquestion[last..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn owned(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn fills_bridge_answer() {
        assert_eq!(
            fill_placeholders("Who directed [ANSWER_0]?", &owned(&["Parasite (2019)"])).unwrap(),
            "Who directed Parasite (2019)?"
        );
    }

    #[test]
    fn no_placeholders_is_identity() {
        assert_eq!(fill_placeholders("What is X?", &[]).unwrap(), "What is X?");
    }

    #[test]
    fn positional_substitution() {
        assert_eq!(
            fill_placeholders("[ANSWER_1] and [ANSWER_0]", &owned(&["a", "b"])).unwrap(),
            "b and a"
        );
    }

    #[test]
    fn unresolved_index_errors() {
        assert_eq!(
            fill_placeholders("Use [ANSWER_2]", &owned(&["a"])),
            Err(UnresolvedPlaceholder { index: 2 })
        );
    }

    #[test]
    fn extracts_refs_in_order() {
        let idx = |s: &str| -> Vec<usize> {
            extract_placeholder_refs(s).into_iter().map(|r| r.index).collect()
        };
        assert_eq!(idx("Who is [ANSWER_0]'s spouse?"), vec![0]);
        assert_eq!(idx("no refs"), Vec::<usize>::new());
        assert_eq!(idx("[ANSWER_2] vs [ANSWER_0]"), vec![2, 0]);
        assert_eq!(idx("[ANSWER_1] [ANSWER_1] [ANSWER_x] [ANSWER_3"), vec![1, 1]);
    }

    #[test]
    fn one_based_normalization() {
        assert_eq!(
            normalize_one_based("capital of [ANSWER_1] and [ANSWER_2]"),
            "capital of [ANSWER_0] and [ANSWER_1]"
        );
    }

    proptest! {
        #[test]
        fn render_extract_round_trip(index in 0usize..10_000) {
            let r = PlaceholderRef { index };
            prop_assert_eq!(extract_placeholder_refs(&r.render()), vec![r]);
        }

        #[test]
        fn fill_is_idempotent(answers in proptest::collection::vec("[a-z ]{0,10}", 1..4),
                              picks in proptest::collection::vec(0usize..4, 0..5)) {
            let text: String = picks
                .iter()
                .map(|p| format!("x [ANSWER_{}] y", p % answers.len()))
                .collect();
            let once = fill_placeholders(&text, &answers).unwrap();
            prop_assert_eq!(fill_placeholders(&once, &answers).unwrap(), once);
        }
    }
}
