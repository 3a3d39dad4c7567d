//! Domain budget allocation by water-filling.
//!
//! Finds the largest common level `c` with `sum_d min(N_d, c) <= M'` where
//! `M' = min(M, sum_d N_d)`, sets `M_d = min(N_d, c)`, then hands the remainder
//! out one unit at a time to unsaturated domains in ascending domain order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::DomainLabel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainBudget {
    /// N_d: filtered pairs available.
    pub available: usize,
    /// M_d: pairs to retain.
    pub retained: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetAllocation {
    pub domains: BTreeMap<DomainLabel, DomainBudget>,
}

impl BudgetAllocation {
    pub fn retained(&self, d: &DomainLabel) -> usize {
        self.domains.get(d).map_or(0, |b| b.retained)
    }

    pub fn total_retained(&self) -> usize {
        self.domains.values().map(|b| b.retained).sum()
    }

    pub fn total_available(&self) -> usize {
        self.domains.values().map(|b| b.available).sum()
    }

    /// Checks the capacity, total and water-filling invariants.
    pub fn check(&self, target: usize) -> Result<(), String> {
        for (d, b) in &self.domains {
            if b.retained > b.available {
                return Err(format!(
                    "{d}: retained {} > available {}",
                    b.retained, b.available
                ));
            }
        }
        let want = target.min(self.total_available());
        if self.total_retained() != want {
            return Err(format!(
                "total retained {} != {want}",
                self.total_retained()
            ));
        }
        for (d, bd) in &self.domains {
            for (e, be) in &self.domains {
                if be.retained > bd.retained + 1 && bd.retained != bd.available {
                    return Err(format!(
                        "{e} retains {} while unsaturated {d} retains only {}",
                        be.retained, bd.retained
                    ));
                }
            }
        }
        Ok(())
    }
}

fn filled(counts: &BTreeMap<DomainLabel, usize>, level: usize) -> usize {
    counts.values().map(|&n| n.min(level)).sum()
}

pub fn allocate_budget(counts: &BTreeMap<DomainLabel, usize>, target: usize) -> BudgetAllocation {
    let counts: BTreeMap<DomainLabel, usize> = counts
        .iter()
        .filter(|(_, &n)| n > 0)
        .map(|(d, &n)| (d.clone(), n))
        .collect();
    let total: usize = counts.values().sum();
    let budget = target.min(total);
    let max_n = counts.values().copied().max().unwrap_or(0);

    // Largest level with filled(level) <= budget; filled is monotone in level.
    let (mut lo, mut hi) = (0usize, max_n);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if filled(&counts, mid) <= budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let level = lo;
    let mut remainder = budget - filled(&counts, level);

    let mut domains = BTreeMap::new();
    for (d, &n) in &counts {
        let mut retained = n.min(level);
        if n > level && remainder > 0 {
            retained += 1;
            remainder -= 1;
        }
        domains.insert(
            d.clone(),
            DomainBudget {
                available: n,
                retained,
            },
        );
    }
    debug_assert_eq!(remainder, 0);
    BudgetAllocation { domains }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(pairs: &[(&str, usize)]) -> BTreeMap<DomainLabel, usize> {
        pairs
            .iter()
            .map(|(d, n)| (DomainLabel::parse(d).unwrap(), *n))
            .collect()
    }

    fn retained(a: &BudgetAllocation) -> Vec<usize> {
        a.domains.values().map(|b| b.retained).collect()
    }

    /// Smallest max-min spread over every feasible allocation, by enumeration.
    fn brute_force_min_spread(caps: &[usize], total: usize) -> usize {
        fn rec(caps: &[usize], left: usize, cur: &mut Vec<usize>, best: &mut usize) {
            if caps.is_empty() {
                if left == 0 {
                    let spread = cur.iter().max().unwrap() - cur.iter().min().unwrap();
                    *best = (*best).min(spread);
                }
                return;
            }
            for x in 0..=caps[0].min(left) {
                cur.push(x);
                rec(&caps[1..], left - x, cur, best);
                cur.pop();
            }
        }
        let mut best = usize::MAX;
        rec(caps, total, &mut Vec::new(), &mut best);
        best
    }

    fn spread(v: &[usize]) -> usize {
        v.iter().max().unwrap() - v.iter().min().unwrap()
    }

    #[test]
    fn balanced_when_capacity_allows() {
        let a = allocate_budget(&counts(&[("a", 10), ("b", 2), ("c", 10)]), 6);
        assert_eq!(retained(&a), vec![2, 2, 2]);
        assert_eq!(
            brute_force_min_spread(&[10, 2, 10], 6),
            spread(&retained(&a))
        );
    }

    #[test]
    fn saturated_domain_keeps_everything() {
        let a = allocate_budget(&counts(&[("a", 1), ("b", 10), ("c", 10)]), 5);
        assert_eq!(retained(&a), vec![1, 2, 2]);
        assert_eq!(
            brute_force_min_spread(&[1, 10, 10], 5),
            spread(&retained(&a))
        );
    }

    #[test]
    fn total_capped_at_supply() {
        let a = allocate_budget(&counts(&[("a", 3)]), 10);
        assert_eq!(retained(&a), vec![3]);
        a.check(10).unwrap();
    }

    #[test]
    fn remainder_goes_to_earliest_domains() {
        let a = allocate_budget(&counts(&[("a", 5), ("b", 5), ("c", 5)]), 7);
        assert_eq!(retained(&a), vec![3, 2, 2]);
    }

    #[test]
    fn skewed_input_is_rebalanced() {
        let a = allocate_budget(&counts(&[("a", 90), ("b", 10)]), 20);
        assert_eq!(retained(&a), vec![10, 10]);
    }

    #[test]
    fn zero_target_and_empty_domains() {
        let a = allocate_budget(&counts(&[("a", 4), ("b", 0)]), 0);
        assert_eq!(a.domains.len(), 1);
        assert_eq!(a.total_retained(), 0);
        assert_eq!(allocate_budget(&BTreeMap::new(), 5).total_retained(), 0);
    }

    proptest! {
        #[test]
        fn invariants_hold(ns in proptest::collection::vec(0usize..40, 1..8), target in 0usize..200) {
            let c: BTreeMap<DomainLabel, usize> = ns
                .iter()
                .enumerate()
                .map(|(i, &n)| (DomainLabel::parse(&format!("d{i}")).unwrap(), n))
                .collect();
            let a = allocate_budget(&c, target);
            prop_assert!(a.check(target).is_ok(), "{:?}", a.check(target));
        }

        #[test]
        fn matches_exhaustive_minimum_spread(ns in proptest::collection::vec(1usize..9, 1..5), target in 0usize..20) {
            let c: BTreeMap<DomainLabel, usize> = ns
                .iter()
                .enumerate()
                .map(|(i, &n)| (DomainLabel::parse(&format!("d{i}")).unwrap(), n))
                .collect();
            let a = allocate_budget(&c, target);
            let total = target.min(ns.iter().sum());
            prop_assert_eq!(spread(&retained(&a)), brute_force_min_spread(&ns, total));
        }
    }
}
