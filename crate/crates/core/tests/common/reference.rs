//! Answer scorer written independently of the library: explicit character filtering
//! and token counting.

use std::collections::HashMap;

pub fn norm(s: &str) -> Vec<String> {
    let lowered: String = s
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .map(str::to_string)
        .collect()
}

pub fn em(pred: &str, golds: &[String]) -> bool {
    golds.iter().any(|g| norm(pred) == norm(g))
}

fn f1_one(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / pred.len() as f64;
    let r = common as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

pub fn f1(pred: &str, golds: &[String]) -> f64 {
    let p = norm(pred);
    golds.iter().map(|g| f1_one(&p, &norm(g))).fold(0.0, f64::max)
}
