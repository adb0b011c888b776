//! Success-rate and failure-decomposition arithmetic.
//!
//! Rates are kept as exact fractions and rounded only for display, half
//! up, in integer arithmetic.

use serde::{Deserialize, Serialize};

use super::TrialOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no trials to aggregate")]
pub struct EmptyTrialSet;

/// `num / den` with `den > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "fraction with zero denominator");
        Self { num, den }
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Hundredths, rounded half up.
    pub fn hundredths(self) -> u64 {
        (200 * self.num + self.den) / (2 * self.den)
    }

    /// Two-decimal rendering, e.g. `0.95`.
    pub fn fixed2(self) -> String {
        let h = self.hundredths();
        format!("{}.{:02}", h / 100, h % 100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessTriplet {
    pub modeling: Fraction,
    pub coding: Fraction,
    pub policy: Fraction,
    /// Coding success under the "ran to completion" reading.
    pub coding_strict: Fraction,
}

impl SuccessTriplet {
    /// `M / C / P` with two decimals each.
    pub fn display(&self) -> String {
        format!(
            "{} / {} / {}",
            self.modeling.fixed2(),
            self.coding.fixed2(),
            self.policy.fixed2()
        )
    }
}

pub fn success_rates(trials: &[TrialOutcome]) -> Result<SuccessTriplet, EmptyTrialSet> {
    if trials.is_empty() {
        return Err(EmptyTrialSet);
    }
    let n = trials.len() as u64;
    let count = |f: fn(&TrialOutcome) -> bool| trials.iter().filter(|t| f(t)).count() as u64;
    Ok(SuccessTriplet {
        modeling: Fraction::new(count(|t| t.m), n),
        coding: Fraction::new(count(|t| t.c), n),
        policy: Fraction::new(count(|t| t.p), n),
        coding_strict: Fraction::new(count(|t| t.c_strict), n),
    })
}

/// Bucket counts of a group plus the normalized shares; `None` shares when
/// the group is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GroupRepr", try_from = "GroupRepr")]
pub struct Group<const N: usize> {
    pub counts: [u64; N],
}

// serde only derives fixed-size arrays for concrete lengths.
#[derive(Serialize, Deserialize)]
struct GroupRepr {
    counts: Vec<u64>,
}

impl<const N: usize> From<Group<N>> for GroupRepr {
    fn from(g: Group<N>) -> Self {
        Self {
            counts: g.counts.to_vec(),
        }
    }
}

impl<const N: usize> TryFrom<GroupRepr> for Group<N> {
    type Error = String;

    fn try_from(r: GroupRepr) -> Result<Self, String> {
        let len = r.counts.len();
        r.counts
            .try_into()
            .map(|counts| Self { counts })
            .map_err(|_| format!("expected {N} counts, found {len}"))
    }
}

impl<const N: usize> Group<N> {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn shares(&self) -> Option<[Fraction; N]> {
        let total = self.total();
        (total > 0).then(|| self.counts.map(|c| Fraction::new(c, total)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureDistribution {
    /// Policy successes by modeling: `[M∘, M×]`.
    pub p_success: Group<2>,
    /// Policy failures by modeling and coding:
    /// `[M∘C∘, M∘C×, M×C∘, M×C×]`.
    pub p_failure: Group<4>,
}

pub fn failure_distribution(trials: &[TrialOutcome]) -> Result<FailureDistribution, EmptyTrialSet> {
    if trials.is_empty() {
        return Err(EmptyTrialSet);
    }
    let mut ok = [0u64; 2];
    let mut fail = [0u64; 4];
    for t in trials {
        if t.p {
            ok[usize::from(!t.m)] += 1;
        } else {
            fail[2 * usize::from(!t.m) + usize::from(!t.c)] += 1;
        }
    }
    Ok(FailureDistribution {
        p_success: Group { counts: ok },
        p_failure: Group { counts: fail },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn outcomes(spec: &[(bool, bool, bool, usize)]) -> Vec<TrialOutcome> {
        spec.iter()
            .flat_map(|&(m, c, p, n)| std::iter::repeat_n(TrialOutcome::new(m, c, p, c), n))
            .collect()
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(Fraction::new(19, 20).fixed2(), "0.95");
        assert_eq!(Fraction::new(8, 15).fixed2(), "0.53");
        assert_eq!(Fraction::new(7, 15).fixed2(), "0.47");
        assert_eq!(Fraction::new(1, 8).fixed2(), "0.13");
        assert_eq!(Fraction::new(1, 200).fixed2(), "0.01");
        assert_eq!(Fraction::new(3, 3).fixed2(), "1.00");
        assert_eq!(Fraction::new(0, 3).fixed2(), "0.00");
    }

    #[test]
    fn all_false_trials() {
        let t = success_rates(&outcomes(&[(false, false, false, 4)])).unwrap();
        assert_eq!(t.display(), "0.00 / 0.00 / 0.00");
    }

    #[test]
    fn empty_sets_are_rejected() {
        assert_eq!(success_rates(&[]), Err(EmptyTrialSet));
        assert_eq!(failure_distribution(&[]), Err(EmptyTrialSet));
    }

    #[test]
    fn single_failure_lands_in_last_bucket() {
        let d = failure_distribution(&outcomes(&[(false, false, false, 1)])).unwrap();
        assert_eq!(d.p_failure.counts, [0, 0, 0, 1]);
        assert!(d.p_success.shares().is_none());
    }

    proptest! {
        #[test]
        fn every_trial_lands_in_one_bucket(
            flags in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..80)
        ) {
            let trials: Vec<TrialOutcome> = flags
                .iter()
                .map(|&(m, c, p)| TrialOutcome::new(m, c, p, c))
                .collect();
            let d = failure_distribution(&trials).unwrap();
            prop_assert_eq!(d.p_success.total() + d.p_failure.total(), trials.len() as u64);
            let p = success_rates(&trials).unwrap().policy;
            prop_assert_eq!(p.num, d.p_success.total());
            for shares in [
                d.p_success.shares().map(|s| s.to_vec()),
                d.p_failure.shares().map(|s| s.to_vec()),
            ]
            .into_iter()
            .flatten()
            {
                let sum: f64 = shares.iter().map(|f| f.value()).sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn fixed2_is_within_half_a_hundredth(num in 0u64..10_000, extra in 0u64..10_000) {
            let f = Fraction::new(num, num + extra + 1);
            let shown: f64 = f.fixed2().parse().unwrap();
            prop_assert!((shown - f.value()).abs() <= 0.005 + 1e-12);
        }
    }
}
