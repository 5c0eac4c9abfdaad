//! String normalization for DOIs, titles and surnames.

use alloc::string::String;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

const RESOLVER_PREFIXES: [&str; 7] = [
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
    "doi.org/",
    "dx.doi.org/",
    "doi:",
];

/// Lowercase Greek letters (and the common symbol variants) spelled out.
/// Uppercase letters are lowercased before lookup.
pub const GREEK_NAMES: [(char, &str); 33] = [
    ('α', "alpha"),
    ('β', "beta"),
    ('γ', "gamma"),
    ('δ', "delta"),
    ('ε', "epsilon"),
    ('ζ', "zeta"),
    ('η', "eta"),
    ('θ', "theta"),
    ('ι', "iota"),
    ('κ', "kappa"),
    ('λ', "lambda"),
    ('μ', "mu"),
    ('ν', "nu"),
    ('ξ', "xi"),
    ('ο', "omicron"),
    ('π', "pi"),
    ('ρ', "rho"),
    ('σ', "sigma"),
    ('ς', "sigma"),
    ('τ', "tau"),
    ('υ', "upsilon"),
    ('φ', "phi"),
    ('χ', "chi"),
    ('ψ', "psi"),
    ('ω', "omega"),
    ('ϐ', "beta"),
    ('ϑ', "theta"),
    ('ϕ', "phi"),
    ('ϖ', "pi"),
    ('ϱ', "rho"),
    ('ϵ', "epsilon"),
    ('ϰ', "kappa"),
    ('µ', "mu"),
];

pub fn greek_name(c: char) -> Option<&'static str> {
    GREEK_NAMES
        .iter()
        .find(|(g, _)| *g == c)
        .map(|(_, name)| *name)
}

/// Empty, or whitespace only.
pub fn is_blank(s: &str) -> bool {
    s.trim().is_empty()
}

/// Canonical DOI form: trimmed, lowercase, `%2F` and `\/` unescaped, resolver
/// prefix removed.
pub fn normalize_doi(raw: &str) -> String {
    let mut current = String::from(raw);
    loop {
        let next = doi_step(&current);
        if next == current {
            return next;
        }
        current = next;
    }
}

fn doi_step(raw: &str) -> String {
    let mut s = raw.trim().to_lowercase();
    while s.contains("%2f") || s.contains("\\/") {
        s = s.replace("%2f", "/").replace("\\/", "/");
    }
    let mut rest = s.as_str();
    while let Some(stripped) = RESOLVER_PREFIXES
        .iter()
        .find_map(|p| rest.strip_prefix(p))
    {
        rest = stripped.trim_start();
    }
    String::from(rest.trim())
}

/// Title form used for retrieval and similarity: compatibility-normalized,
/// lowercase, Greek letters spelled out, punctuation dropped, whitespace
/// collapsed.
pub fn normalize_title(raw: &str) -> String {
    let lowered: String = raw.nfkc().collect::<String>().to_lowercase();
    let mut spelled = String::with_capacity(lowered.len());
    for c in lowered.nfkc() {
        match greek_name(c) {
            Some(name) => spelled.push_str(name),
            None if c.is_alphanumeric() => spelled.push(c),
            None => spelled.push(' '),
        }
    }
    collapse_whitespace(&spelled)
}

/// Removes diacritics from one character; `None` when nothing changes.
pub fn fold_diacritics(c: char) -> Option<String> {
    let folded: String = core::iter::once(c)
        .nfkd()
        .filter(|m| !is_combining_mark(*m))
        .collect();
    if folded.len() == c.len_utf8() && folded.starts_with(c) {
        None
    } else {
        Some(folded)
    }
}

/// Surname comparison form: diacritics folded, lowercase, whitespace
/// collapsed.
pub fn normalize_surname(raw: &str) -> String {
    let folded: String = raw
        .nfkd()
        .filter(|c| !is_combining_mark(*c))
        .collect::<String>()
        .to_lowercase();
    collapse_whitespace(&folded)
}

/// Single-space separated words, no leading or trailing whitespace.
pub fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}
