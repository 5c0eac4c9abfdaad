//! Fuzzy title comparison.

use alloc::vec::Vec;
use core::fmt;

/// Returned when asked to compare an empty title.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmptyTitle;

impl fmt::Display for EmptyTitle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("cannot score an empty title")
    }
}

impl core::error::Error for EmptyTitle {}

/// Edit distance counted in Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = alloc::vec![0; b.len() + 1];
    for (i, ca) in a.chars().enumerate() {
        curr[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != *cb);
            curr[j + 1] = substitution.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        core::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// `1 - levenshtein(a, b) / max(len(a), len(b))` on already-normalized titles.
pub fn title_similarity(a: &str, b: &str) -> Result<f64, EmptyTitle> {
    if a.is_empty() || b.is_empty() {
        return Err(EmptyTitle);
    }
    let longest = a.chars().count().max(b.chars().count());
    let distance = levenshtein(a, b);
    // (n - d) / n rounds once, so exact tier boundaries like 18/20 land on 0.9.
    Ok((longest - distance) as f64 / longest as f64)
}

/// Points awarded for a title similarity ratio.
pub fn title_points(similarity: f64) -> u32 {
    if similarity >= 1.0 {
        14
    } else if similarity >= 0.95 {
        13
    } else if similarity >= 0.90 {
        13
    } else if similarity >= 0.85 {
        12
    } else if similarity >= 0.80 {
        11
    } else if similarity >= 0.75 {
        10
    } else {
        0
    }
}
