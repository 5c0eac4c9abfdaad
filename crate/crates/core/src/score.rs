//! Weighted field-agreement scoring and the acceptance rule.

use crate::model::{Candidate, Reference};
use crate::normalize::{normalize_doi, normalize_surname, normalize_title};
use crate::similarity::{title_points, title_similarity};

pub const DOI_POINTS: u32 = 15;
pub const EXACT_TITLE_POINTS: u32 = 14;
pub const AUTHOR_POINTS: u32 = 7;
pub const YEAR_POINTS: u32 = 1;
pub const VOLUME_POINTS: u32 = 3;
pub const PAGE_POINTS: u32 = 8;

/// Best attainable total.
pub const MAX_SCORE: u32 =
    DOI_POINTS + EXACT_TITLE_POINTS + AUTHOR_POINTS + YEAR_POINTS + VOLUME_POINTS + PAGE_POINTS;

/// Per-field breakdown of a (reference, candidate) comparison.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchScore {
    pub doi_points: u32,
    pub title_points: u32,
    pub author_points: u32,
    pub year_points: u32,
    /// Years differ by exactly one. Tracked, worth nothing.
    pub adjacent_year: bool,
    pub volume_points: u32,
    pub page_points: u32,
    pub total: u32,
}

impl MatchScore {
    fn with_total(mut self) -> Self {
        self.total = self.doi_points
            + self.title_points
            + self.author_points
            + self.year_points
            + self.volume_points
            + self.page_points;
        self
    }
}

/// A non-negative rational `numerator / denominator`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub numerator: u32,
    pub denominator: u32,
}

impl Fraction {
    pub const fn new(numerator: u32, denominator: u32) -> Self {
        Fraction {
            numerator,
            denominator,
        }
    }

    /// `floor(self * value)`
    pub fn floor_mul(self, value: u32) -> u32 {
        (u64::from(value) * u64::from(self.numerator) / u64::from(self.denominator)) as u32
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.numerator) / f64::from(self.denominator)
    }

    pub fn is_valid_adaptive(self) -> bool {
        self.denominator > 0 && self.numerator > 0 && self.numerator <= self.denominator
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchConfig {
    pub threshold: u32,
    pub adaptive_fraction: Fraction,
    pub use_doi: bool,
    pub year_floor: i32,
    pub current_year: i32,
    pub candidate_limit: usize,
}

impl MatchConfig {
    pub const DEFAULT_THRESHOLD: u32 = 26;
    pub const DEFAULT_ADAPTIVE: Fraction = Fraction::new(9, 10);
    pub const DEFAULT_YEAR_FLOOR: i32 = 1700;
    pub const DEFAULT_CANDIDATE_LIMIT: usize = 50;

    /// Defaults with the given calendar year as "now".
    pub fn for_year(current_year: i32) -> Self {
        MatchConfig {
            threshold: Self::DEFAULT_THRESHOLD,
            adaptive_fraction: Self::DEFAULT_ADAPTIVE,
            use_doi: true,
            year_floor: Self::DEFAULT_YEAR_FLOOR,
            current_year,
            candidate_limit: Self::DEFAULT_CANDIDATE_LIMIT,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.threshold >= 1 && self.adaptive_fraction.is_valid_adaptive() && self.candidate_limit > 0
    }

    /// Lowest total that [`accepts`] admits. Never below one point.
    pub fn effective_floor(&self) -> u32 {
        let adaptive = self.adaptive_fraction.floor_mul(self.threshold);
        adaptive.min(self.threshold).max(1)
    }

    pub fn year_is_plausible(&self, year: i32) -> bool {
        year >= self.year_floor && year <= self.current_year.saturating_add(1)
    }
}

/// `true` iff `year` lies in `[1700, current_year + 1]`.
pub fn validate_year(year: i32, current_year: i32) -> bool {
    (MatchConfig::DEFAULT_YEAR_FLOOR..=current_year.saturating_add(1)).contains(&year)
}

fn trimmed(s: Option<&str>) -> Option<&str> {
    s.map(str::trim).filter(|s| !s.is_empty())
}

/// Scores one candidate against a reference.
pub fn score_candidate(reference: &Reference, candidate: &Candidate) -> MatchScore {
    let mut score = MatchScore::default();

    if let (Some(a), Some(b)) = (trimmed(reference.doi.as_deref()), trimmed(candidate.doi.as_deref())) {
        if normalize_doi(a) == normalize_doi(b) {
            score.doi_points = DOI_POINTS;
        }
    }

    if let (Some(a), Some(b)) = (
        trimmed(reference.article_title.as_deref()),
        trimmed(candidate.title.as_deref()),
    ) {
        if let Ok(sim) = title_similarity(&normalize_title(a), &normalize_title(b)) {
            score.title_points = title_points(sim);
        }
    }

    if let (Some(a), Some(b)) = (
        trimmed(reference.first_author_surname.as_deref()),
        trimmed(candidate.first_author_surname.as_deref()),
    ) {
        let (a, b) = (normalize_surname(a), normalize_surname(b));
        if !a.is_empty() && a == b {
            score.author_points = AUTHOR_POINTS;
        }
    }

    if let (Some(a), Some(b)) = (reference.year, candidate.year) {
        if a == b {
            score.year_points = YEAR_POINTS;
        } else if (i64::from(a) - i64::from(b)).abs() == 1 {
            score.adjacent_year = true;
        }
    }

    if let (Some(a), Some(b)) = (trimmed(reference.volume.as_deref()), trimmed(candidate.volume.as_deref())) {
        if a == b {
            score.volume_points = VOLUME_POINTS;
        }
    }

    if let (Some(a), Some(b)) = (
        trimmed(reference.first_page.as_deref()),
        trimmed(candidate.first_page.as_deref()),
    ) {
        let last_agrees = match (
            trimmed(reference.last_page.as_deref()),
            trimmed(candidate.last_page.as_deref()),
        ) {
            (Some(x), Some(y)) => x == y,
            _ => true,
        };
        if a == b && last_agrees {
            score.page_points = PAGE_POINTS;
        }
    }

    score.with_total()
}

/// Acceptance rule: the total meets the threshold, or reaches the adaptive
/// floor `floor(adaptive_fraction * threshold)`.
pub fn accepts(score: &MatchScore, config: &MatchConfig) -> bool {
    accepts_total(score.total, config)
}

pub fn accepts_total(total: u32, config: &MatchConfig) -> bool {
    total >= config.threshold || total >= config.effective_floor()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::{String, ToString};
    use proptest::prelude::*;

    fn full_reference() -> Reference {
        Reference {
            key: "ref1".to_string(),
            year: Some(2009),
            volume: Some("11".to_string()),
            first_page: Some("297".to_string()),
            last_page: None,
            first_author_surname: Some("Forkman".to_string()),
            article_title: Some(
                "Assessment of animal welfare measures for dairy cattle, beef bulls and veal calves"
                    .to_string(),
            ),
            doi: Some("10.1234/wq.11".to_string()),
            ..Reference::default()
        }
    }

    fn candidate_from(r: &Reference) -> Candidate {
        Candidate {
            meta_id: "omid:br/1".to_string(),
            doi: r.doi.clone(),
            title: r.article_title.clone(),
            first_author_surname: r.first_author_surname.clone(),
            year: r.year,
            volume: r.volume.clone(),
            first_page: r.first_page.clone(),
            last_page: r.last_page.clone(),
        }
    }

    fn reference_from(c: &Candidate) -> Reference {
        Reference {
            key: "swapped".to_string(),
            year: c.year,
            volume: c.volume.clone(),
            first_page: c.first_page.clone(),
            last_page: c.last_page.clone(),
            first_author_surname: c.first_author_surname.clone(),
            article_title: c.title.clone(),
            doi: c.doi.clone(),
            ..Reference::default()
        }
    }

    #[test]
    fn max_score_is_48() {
        assert_eq!(MAX_SCORE, 48);
        let r = full_reference();
        let s = score_candidate(&r, &candidate_from(&r));
        assert_eq!(s.total, 48);
    }

    #[test]
    fn nothing_shared_scores_zero() {
        let r = full_reference();
        assert_eq!(score_candidate(&r, &Candidate::new("omid:br/2")).total, 0);
        assert_eq!(score_candidate(&Reference::new("k"), &candidate_from(&r)).total, 0);
    }

    #[test]
    fn no_doi_full_agreement_is_33() {
        let mut r = full_reference();
        r.doi = None;
        let s = score_candidate(&r, &candidate_from(&r));
        assert_eq!(s.total, 14 + 7 + 1 + 3 + 8);
        assert_eq!(s.total, 33);
    }

    #[test]
    fn adjacent_year_tracked_not_scored() {
        let r = full_reference();
        let mut c = candidate_from(&r);
        c.year = Some(2010);
        let s = score_candidate(&r, &c);
        assert!(s.adjacent_year);
        assert_eq!(s.year_points, 0);
        assert_eq!(s.total, 47);
        c.year = Some(2011);
        assert!(!score_candidate(&r, &c).adjacent_year);
    }

    #[test]
    fn page_rule_uses_last_page_when_both_present() {
        let mut r = full_reference();
        r.last_page = Some("310".to_string());
        let mut c = candidate_from(&r);
        assert_eq!(score_candidate(&r, &c).page_points, 8);
        c.last_page = Some("311".to_string());
        assert_eq!(score_candidate(&r, &c).page_points, 0);
        c.last_page = None;
        assert_eq!(score_candidate(&r, &c).page_points, 8);
        c.first_page = Some("298".to_string());
        assert_eq!(score_candidate(&r, &c).page_points, 0);
    }

    #[test]
    fn pages_compare_as_strings() {
        let mut r = full_reference();
        r.first_page = Some("e0185".to_string());
        let mut c = candidate_from(&r);
        c.first_page = Some(" e0185 ".to_string());
        assert_eq!(score_candidate(&r, &c).page_points, 8);
        c.first_page = Some("185".to_string());
        assert_eq!(score_candidate(&r, &c).page_points, 0);
    }

    #[test]
    fn surname_with_diacritics_matches() {
        let mut r = full_reference();
        r.first_author_surname = Some("Müller".to_string());
        let mut c = candidate_from(&r);
        c.first_author_surname = Some("MULLER".to_string());
        assert_eq!(score_candidate(&r, &c).author_points, 7);
    }

    #[test]
    fn acceptance_examples() {
        let cfg = MatchConfig::for_year(2025);
        let s = |total| MatchScore { total, ..MatchScore::default() };
        assert!(accepts(&s(26), &cfg));
        assert!(accepts(&s(23), &cfg));
        assert!(!accepts(&s(22), &cfg));
        assert_eq!(cfg.effective_floor(), 23);
    }

    #[test]
    fn default_threshold_is_about_54_5_percent() {
        let cfg = MatchConfig::for_year(2025);
        let share = 0.545 * f64::from(MAX_SCORE);
        // round half away from zero without std
        assert_eq!(cfg.threshold, (share + 0.5) as u32);
    }

    #[test]
    fn year_validation() {
        assert!(!validate_year(1699, 2025));
        assert!(validate_year(1700, 2025));
        assert!(validate_year(2026, 2025));
        assert!(!validate_year(2027, 2025));
        assert!(validate_year(2009, 2025));
    }

    #[test]
    fn tiny_threshold_never_accepts_zero() {
        let mut cfg = MatchConfig::for_year(2025);
        cfg.threshold = 1;
        assert!(!accepts_total(0, &cfg));
        assert!(accepts_total(1, &cfg));
    }

    fn opt_text() -> impl Strategy<Value = Option<String>> {
        prop_oneof![Just(None), "[a-c]{1,3}".prop_map(Some)]
    }

    prop_compose! {
        fn arb_candidate()(
            doi in prop_oneof![Just(None), "10\\.1/[a-c]{1,2}".prop_map(Some)],
            title in opt_text(),
            surname in opt_text(),
            year in prop_oneof![Just(None), (2000i32..2003).prop_map(Some)],
            volume in opt_text(),
            first_page in opt_text(),
            last_page in opt_text(),
        ) -> Candidate {
            Candidate { meta_id: "omid:br/x".to_string(), doi, title, first_author_surname: surname, year, volume, first_page, last_page }
        }
    }

    proptest! {
        #[test]
        fn total_is_sum_and_bounded(a in arb_candidate(), b in arb_candidate()) {
            let s = score_candidate(&reference_from(&a), &b);
            prop_assert_eq!(
                s.total,
                s.doi_points + s.title_points + s.author_points + s.year_points + s.volume_points + s.page_points
            );
            prop_assert!(s.total <= MAX_SCORE);
            prop_assert!(!(s.adjacent_year && s.year_points > 0));
        }

        #[test]
        fn scoring_is_role_symmetric(a in arb_candidate(), b in arb_candidate()) {
            let forward = score_candidate(&reference_from(&a), &b);
            let backward = score_candidate(&reference_from(&b), &a);
            prop_assert_eq!(forward.total, backward.total);
        }

        #[test]
        fn accepts_is_monotone(t in 1u32..60, lo in 0u32..=48, extra in 0u32..=48) {
            let mut cfg = MatchConfig::for_year(2025);
            cfg.threshold = t;
            let hi = lo + extra;
            if accepts_total(lo, &cfg) {
                prop_assert!(accepts_total(hi, &cfg));
            }
        }
    }
}
