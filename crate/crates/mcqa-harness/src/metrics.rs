//! Scoring and statistics: policy-aware accuracy, the majority-class
//! baseline, elimination scoring for single-choice classification, two-sample
//! t-tests, and Cohen's κ with a seeded random baseline.
//!
//! Everything here is a pure function; Monte-Carlo pieces take explicit
//! seeds.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::{Dataset, Letter};
use crate::parse::AnswerStatus;

/// How an invalid output is scored: `Lenient` treats it as a random guess
/// (0.25), `Strict` as incorrect (0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringPolicy {
    Lenient,
    Strict,
}

impl ScoringPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoringPolicy::Lenient => "lenient",
            ScoringPolicy::Strict => "strict",
        }
    }

    /// Score assigned to an invalid output under this policy.
    pub fn invalid_score(self) -> f64 {
        match self {
            ScoringPolicy::Lenient => 0.25,
            ScoringPolicy::Strict => 0.0,
        }
    }
}

impl std::fmt::Display for ScoringPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScoringPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lenient" => Ok(ScoringPolicy::Lenient),
            "strict" => Ok(ScoringPolicy::Strict),
            other => Err(format!("unknown scoring policy `{other}`")),
        }
    }
}

/// Per-item scores plus their mean, tagged with the policy that produced
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub mean: f64,
    pub n: usize,
    pub per_item: Vec<f64>,
    pub policy: ScoringPolicy,
}

impl ScoreSummary {
    /// Build a summary from per-item scores, computing the mean.
    pub fn from_scores(per_item: Vec<f64>, policy: ScoringPolicy) -> Self {
        debug_assert!(per_item.iter().all(|s| (0.0..=1.0).contains(s)));
        let n = per_item.len();
        let mean = if n == 0 {
            0.0
        } else {
            per_item.iter().sum::<f64>() / n as f64
        };
        ScoreSummary {
            mean,
            n,
            per_item,
            policy,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("t-test needs at least 2 observations per sample, got {n_a} and {n_b}")]
    SampleTooSmall { n_a: usize, n_b: usize },
    #[error("vectors must have equal non-zero length, got {n_a} and {n_b}")]
    LengthMismatch { n_a: usize, n_b: usize },
}

/// Score one letter-answer record: 1 for the gold letter, 0 for another
/// letter, and the policy's invalid score for anything that is not a letter.
pub fn item_score(answer: AnswerStatus, gold: Letter, policy: ScoringPolicy) -> f64 {
    match answer {
        AnswerStatus::ValidLetter(letter) if letter == gold => 1.0,
        AnswerStatus::ValidLetter(_) => 0.0,
        // A boolean answer to a letter question is as uninformative as any
        // other invalid output.
        AnswerStatus::ValidBool(_) | AnswerStatus::Invalid => policy.invalid_score(),
    }
}

/// Always answer the most frequent gold letter (ties broken toward the
/// alphabetically earliest); per-item scores are 1 where that guess is
/// right. The mean equals the majority letter's frequency.
pub fn majority_baseline(eval: &Dataset) -> Result<ScoreSummary, MetricsError> {
    if eval.items.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let mut counts = [0usize; 4];
    for item in &eval.items {
        counts[item.gold.index()] += 1;
    }
    // First letter with the maximal count, so ties go to the alphabetically
    // earliest.
    let best = *counts.iter().max().unwrap();
    let majority = Letter::ALL
        .into_iter()
        .find(|l| counts[l.index()] == best)
        .unwrap();
    let per_item: Vec<f64> = eval
        .items
        .iter()
        .map(|item| if item.gold == majority { 1.0 } else { 0.0 })
        .collect();
    // No invalid predictions exist here, so the policy tag is immaterial;
    // Lenient is recorded for consistency with default runs.
    Ok(ScoreSummary::from_scores(per_item, ScoringPolicy::Lenient))
}

/// Chance the model would pick the gold choice given which of the four
/// choices it classified as true: 0.25 when it endorsed none (pure guess),
/// 0 when it rejected the gold choice, 1/k when the gold choice is among
/// the k endorsed ones.
pub fn elimination_score(true_flags: [bool; 4], gold_index: usize) -> f64 {
    let k = true_flags.iter().filter(|f| **f).count();
    if k == 0 {
        0.25
    } else if !true_flags[gold_index] {
        0.0
    } else {
        1.0 / k as f64
    }
}

/// Result of a two-sample t-test.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    2.0 * dist.cdf(-t.abs())
}

fn check_sizes(a: &[f64], b: &[f64]) -> Result<(), MetricsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(MetricsError::SampleTooSmall {
            n_a: a.len(),
            n_b: b.len(),
        });
    }
    Ok(())
}

/// Welch's unequal-variance two-sample t-test, two-sided, with
/// Welch–Satterthwaite degrees of freedom. Two zero-variance samples give
/// (t=0, p=1) when their means are equal and (±inf, 0) otherwise.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest, MetricsError> {
    check_sizes(a, b)?;
    let (n_a, n_b) = (a.len() as f64, b.len() as f64);
    let (m_a, v_a) = mean_and_var(a);
    let (m_b, v_b) = mean_and_var(b);
    let se_a = v_a / n_a;
    let se_b = v_b / n_b;
    let se2 = se_a + se_b;
    if se2 == 0.0 {
        return Ok(degenerate_result(m_a, m_b, n_a + n_b - 2.0));
    }
    let t = (m_a - m_b) / se2.sqrt();
    let df = se2 * se2 / (se_a * se_a / (n_a - 1.0) + se_b * se_b / (n_b - 1.0));
    Ok(TTest {
        t,
        p: two_sided_p(t, df),
        df,
    })
}

/// Student's pooled-variance two-sample t-test, two-sided. Same degenerate
/// handling as [`welch_t_test`]. Exposed because the choice between pooled
/// and unequal-variance tests is a judgment call; Welch is the default
/// everywhere in this crate.
pub fn student_t_test(a: &[f64], b: &[f64]) -> Result<TTest, MetricsError> {
    check_sizes(a, b)?;
    let (n_a, n_b) = (a.len() as f64, b.len() as f64);
    let (m_a, v_a) = mean_and_var(a);
    let (m_b, v_b) = mean_and_var(b);
    let df = n_a + n_b - 2.0;
    let pooled = ((n_a - 1.0) * v_a + (n_b - 1.0) * v_b) / df;
    let se2 = pooled * (1.0 / n_a + 1.0 / n_b);
    if se2 == 0.0 {
        return Ok(degenerate_result(m_a, m_b, df));
    }
    let t = (m_a - m_b) / se2.sqrt();
    Ok(TTest {
        t,
        p: two_sided_p(t, df),
        df,
    })
}

fn degenerate_result(m_a: f64, m_b: f64, df: f64) -> TTest {
    if m_a == m_b {
        TTest { t: 0.0, p: 1.0, df }
    } else {
        TTest {
            t: f64::INFINITY.copysign(m_a - m_b),
            p: 0.0,
            df,
        }
    }
}

/// Cohen's κ between two boolean vectors, computed with integer counts so
/// exact cases (0, ±1) come out exact: with n items, m matches, and
/// marginal true-counts ta/tb,
/// κ = (n·m − (ta·tb + fa·fb)) / (n² − (ta·tb + fa·fb)).
/// When chance agreement is 1 (both vectors constant and equal-leaning),
/// κ is 1 for perfect agreement and 0 otherwise.
pub fn cohens_kappa(a: &[bool], b: &[bool]) -> Result<f64, MetricsError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(MetricsError::LengthMismatch {
            n_a: a.len(),
            n_b: b.len(),
        });
    }
    let n = a.len() as u64;
    let matches = a.iter().zip(b).filter(|(x, y)| x == y).count() as u64;
    let ta = a.iter().filter(|x| **x).count() as u64;
    let tb = b.iter().filter(|x| **x).count() as u64;
    let chance = ta * tb + (n - ta) * (n - tb);
    if chance == n * n {
        return Ok(if matches == n { 1.0 } else { 0.0 });
    }
    // All counts are exact in f64 for any realistic n, so the hand-checkable
    // cases (0, ±1) come out exact.
    let numerator = (n * matches) as f64 - chance as f64;
    let denominator = (n * n) as f64 - chance as f64;
    Ok(numerator / denominator)
}

/// Mean κ between `a` and `trials` seeded uniform-random boolean vectors of
/// the same length. Hovers near zero for any fixed `a`.
pub fn random_kappa_baseline(a: &[bool], trials: usize, seed: u64) -> Result<f64, MetricsError> {
    if a.is_empty() {
        return Err(MetricsError::LengthMismatch { n_a: 0, n_b: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..trials.max(1) {
        let u: Vec<bool> = (0..a.len()).map(|_| rng.gen::<bool>()).collect();
        total += cohens_kappa(a, &u).expect("lengths match by construction");
    }
    Ok(total / trials.max(1) as f64)
}
