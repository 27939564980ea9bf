//! The five preset loss plans: which view pairs feed the invariance term
//! and which views feed each redundancy unit.

use alloc::collections::BTreeSet;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{HomeError, Result};
use crate::loss::RedundancyUnit;
use crate::rng::{stream, TAG_UNIT_CHOICE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// T=2; one cross order-2 unit over both views. The order-2 baseline.
    BarlowTwinsCross,
    /// T=3; a cross order-2 unit for every view pair.
    T3O2Cross,
    /// T=3; the three cross order-2 units plus one order-3 unit with one
    /// slot per view.
    T3O3Cross,
    /// T=2; per-view self units with orders {2,3}.
    T2O3SelfAll,
    /// T=2; one orders-{2,3} self unit on a per-iteration random view,
    /// weight 1 (equal to Self-All's per-unit average in expectation).
    T2O3SelfOne,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::BarlowTwinsCross,
        Variant::T3O2Cross,
        Variant::T3O3Cross,
        Variant::T2O3SelfAll,
        Variant::T2O3SelfOne,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::BarlowTwinsCross => "BarlowTwinsCross",
            Variant::T3O2Cross => "T3-O2-Cross",
            Variant::T3O3Cross => "T3-O3-Cross",
            Variant::T2O3SelfAll => "T2-O3-Self-All",
            Variant::T2O3SelfOne => "T2-O3-Self-One",
        }
    }

    /// Accepts the canonical name, optionally prefixed with "HOME-",
    /// case-insensitively.
    pub fn parse(name: &str) -> Result<Variant> {
        let bare = name
            .strip_prefix("HOME-")
            .or_else(|| name.strip_prefix("home-"))
            .unwrap_or(name);
        for v in Variant::ALL {
            if v.name().eq_ignore_ascii_case(bare) {
                return Ok(v);
            }
        }
        Err(HomeError::UnknownVariant {
            name: name.to_string(),
        })
    }

    pub fn view_count(self) -> usize {
        match self {
            Variant::T3O2Cross | Variant::T3O3Cross => 3,
            _ => 2,
        }
    }
}

/// A unit that is fixed at plan build time or chooses its view per
/// iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanUnit {
    Fixed(RedundancyUnit),
    /// Self unit whose view is drawn uniformly per iteration.
    RandomSelfOne { orders: BTreeSet<usize> },
}

/// Declarative loss plan for a variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossPlan {
    pub variant: Variant,
    pub view_count: usize,
    /// All ordered pairs (i, j) with i != j; the invariance term runs over
    /// every pair for every preset.
    pub invariance_pairs: Vec<(usize, usize)>,
    pub units: Vec<PlanUnit>,
    /// Seed for per-iteration choices.
    pub seed: u64,
}

/// Plan with all per-iteration randomness materialized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedPlan {
    pub view_count: usize,
    pub invariance_pairs: Vec<(usize, usize)>,
    pub units: Vec<RedundancyUnit>,
}

fn ordered_pairs(t: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(t * (t - 1));
    for i in 0..t {
        for j in 0..t {
            if i != j {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Builds the preset plan for a variant. `seed` only matters for presets
/// with per-iteration randomness.
pub fn build_plan(variant: Variant, seed: u64) -> LossPlan {
    let t = variant.view_count();
    let orders23: BTreeSet<usize> = [2, 3].into_iter().collect();
    let units = match variant {
        Variant::BarlowTwinsCross => vec![PlanUnit::Fixed(
            RedundancyUnit::cross(vec![0, 1]).expect("two slots"),
        )],
        Variant::T3O2Cross => cross_pairs(t),
        Variant::T3O3Cross => {
            let mut units = cross_pairs(t);
            units.push(PlanUnit::Fixed(
                RedundancyUnit::cross(vec![0, 1, 2]).expect("three slots"),
            ));
            units
        }
        Variant::T2O3SelfAll => (0..t)
            .map(|v| PlanUnit::Fixed(RedundancyUnit::self_view(&orders23, v)))
            .collect(),
        Variant::T2O3SelfOne => vec![PlanUnit::RandomSelfOne { orders: orders23 }],
    };
    LossPlan {
        variant,
        view_count: t,
        invariance_pairs: ordered_pairs(t),
        units,
        seed,
    }
}

fn cross_pairs(t: usize) -> Vec<PlanUnit> {
    let mut units = Vec::new();
    for i in 0..t {
        for j in i + 1..t {
            units.push(PlanUnit::Fixed(
                RedundancyUnit::cross(vec![i, j]).expect("two slots"),
            ));
        }
    }
    units
}

/// Materializes per-iteration view choices. Deterministic in
/// (plan.seed, iteration).
pub fn resolve_iteration(plan: &LossPlan, iteration: u64) -> ResolvedPlan {
    let units = plan
        .units
        .iter()
        .enumerate()
        .map(|(u, unit)| match unit {
            PlanUnit::Fixed(r) => r.clone(),
            PlanUnit::RandomSelfOne { orders } => {
                let mut rng = stream(plan.seed, TAG_UNIT_CHOICE, iteration, u as u64);
                let view = rng.gen_range(0..plan.view_count);
                RedundancyUnit::self_view(orders, view)
            }
        })
        .collect();
    ResolvedPlan {
        view_count: plan.view_count,
        invariance_pairs: plan.invariance_pairs.clone(),
        units,
    }
}

impl LossPlan {
    pub fn resolve(&self, iteration: u64) -> ResolvedPlan {
        resolve_iteration(self, iteration)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_accepts_canonical_and_prefixed_names() {
        assert_eq!(Variant::parse("T2-O3-Self-All").unwrap(), Variant::T2O3SelfAll);
        assert_eq!(
            Variant::parse("HOME-T2-O3-Self-All").unwrap(),
            Variant::T2O3SelfAll
        );
        assert_eq!(Variant::parse("barlowtwinscross").unwrap(), Variant::BarlowTwinsCross);
        assert!(Variant::parse("T9-O9").is_err());
    }

    #[test]
    fn plan_shapes_match_their_descriptions() {
        let bt = build_plan(Variant::BarlowTwinsCross, 0);
        assert_eq!(bt.view_count, 2);
        assert_eq!(bt.units.len(), 1);
        assert_eq!(bt.invariance_pairs, vec![(0, 1), (1, 0)]);

        let t3o2 = build_plan(Variant::T3O2Cross, 0);
        assert_eq!(t3o2.view_count, 3);
        assert_eq!(t3o2.units.len(), 3);
        let order3_units = t3o2
            .units
            .iter()
            .filter(|u| match u {
                PlanUnit::Fixed(r) => r.orders().any(|k| k == 3),
                _ => false,
            })
            .count();
        assert_eq!(order3_units, 0);

        let t3o3 = build_plan(Variant::T3O3Cross, 0);
        assert_eq!(t3o3.units.len(), 4);
        match &t3o3.units[3] {
            PlanUnit::Fixed(r) => {
                assert_eq!(r.slots(3).unwrap(), &[0, 1, 2]);
            }
            _ => panic!("expected a fixed order-3 unit"),
        }

        let self_all = build_plan(Variant::T2O3SelfAll, 0);
        assert_eq!(self_all.units.len(), 2);
        for (v, unit) in self_all.units.iter().enumerate() {
            match unit {
                PlanUnit::Fixed(r) => {
                    assert_eq!(r.slots(2).unwrap(), &[v, v]);
                    assert_eq!(r.slots(3).unwrap(), &[v, v, v]);
                }
                _ => panic!("self units are fixed"),
            }
        }
    }

    #[test]
    fn self_one_resolution_is_deterministic() {
        let plan_a = build_plan(Variant::T2O3SelfOne, 42);
        let plan_b = build_plan(Variant::T2O3SelfOne, 42);
        for it in 0..50 {
            assert_eq!(plan_a.resolve(it), plan_b.resolve(it));
        }
        assert_eq!(plan_a.resolve(7), plan_a.resolve(7));
    }

    #[test]
    fn self_all_resolution_ignores_iteration() {
        let plan = build_plan(Variant::T2O3SelfAll, 5);
        assert_eq!(plan.resolve(0), plan.resolve(123_456));
    }

    #[test]
    fn self_one_view_choice_is_near_balanced() {
        let plan = build_plan(Variant::T2O3SelfOne, 99);
        let mut counts = [0u64; 2];
        for it in 0..10_000u64 {
            let resolved = plan.resolve(it);
            let view = resolved.units[0].slots(2).unwrap()[0];
            counts[view] += 1;
        }
        // Binomial(1e4, 1/2): 5000 +- 150 is three sigma.
        assert!(
            (counts[0] as i64 - 5000).abs() <= 150,
            "view-0 count {} outside 5000 +- 150",
            counts[0]
        );
    }
}
