//! Justified envy-freeness at the identity and principal level.
//!
//! Bundles an order does not rank are unacceptable: they sit below every
//! ranked bundle and tie with each other.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bounds::{CardinalUtility, UNACCEPTABLE_SCORE};
use crate::economy::{Bundle, Economy, Lottery, WeakOrder};
use crate::error::{Error, Result};

pub trait BundlePreference {
    fn weakly_prefers(&self, a: &Bundle, b: &Bundle) -> bool;
}

impl BundlePreference for WeakOrder {
    fn weakly_prefers(&self, a: &Bundle, b: &Bundle) -> bool {
        self.rank(a).unwrap_or(usize::MAX) <= self.rank(b).unwrap_or(usize::MAX)
    }
}

/// A principal's value for an aggregated bundle: the best way to hand parts
/// of it to its identities, summing their rank scores. An identity left
/// without an acceptable part scores [`UNACCEPTABLE_SCORE`].
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalValuation {
    members: Vec<(WeakOrder, CardinalUtility)>,
}

impl PrincipalValuation {
    pub fn new(orders: &[WeakOrder]) -> Self {
        PrincipalValuation { members: orders.iter().map(|o| (o.clone(), CardinalUtility::rank(o))).collect() }
    }

    pub fn value(&self, b: &Bundle) -> f64 {
        fn go(members: &[(WeakOrder, CardinalUtility)], left: &Bundle) -> f64 {
            let Some(((order, u), rest)) = members.split_first() else {
                return 0.0;
            };
            let mut best = UNACCEPTABLE_SCORE + go(rest, left);
            for y in order.bundles() {
                if y.le(left) {
                    let after = Bundle::new(left.quantities().iter().zip(y.quantities()).map(|(a, b)| a - b).collect());
                    best = best.max(u.score(&y) + go(rest, &after));
                }
            }
            best
        }
        go(&self.members, b)
    }
}

impl BundlePreference for PrincipalValuation {
    fn weakly_prefers(&self, a: &Bundle, b: &Bundle) -> bool {
        self.value(a) >= self.value(b) - 1e-12
    }
}

/// When a pair `(i, j)` is entitled to a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trigger {
    /// `e_i ≥ e_j` componentwise.
    SetInclusion,
    /// `p · e_i ≥ p · e_j`.
    PValuation(Vec<f64>),
}

impl Trigger {
    fn fires(&self, ei: &Bundle, ej: &Bundle) -> bool {
        match self {
            Trigger::SetInclusion => ej.le(ei),
            Trigger::PValuation(p) => ei.value(p) >= ej.value(p) - 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub i: usize,
    pub j: usize,
    pub triggered: bool,
    pub pass: bool,
    /// Good whose removal from `x_j` settles the comparison.
    pub witness: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JefReport {
    pub pairs: Vec<PairVerdict>,
    pub pass: bool,
}

impl JefReport {
    pub fn failures(&self) -> impl Iterator<Item = &PairVerdict> {
        self.pairs.iter().filter(|p| !p.pass)
    }
}

fn check_dims(alloc: &[Bundle], endowments: &[Bundle], n_prefs: usize) -> Result<usize> {
    if alloc.len() != endowments.len() || alloc.len() != n_prefs {
        return Err(Error::DimensionMismatch { expected: alloc.len(), actual: endowments.len().min(n_prefs) });
    }
    let m = alloc.first().map_or(0, Bundle::len);
    for b in alloc.iter().chain(endowments) {
        if b.len() != m {
            return Err(Error::DimensionMismatch { expected: m, actual: b.len() });
        }
    }
    Ok(m)
}

/// JEF1: every triggered pair `(i, j)` has a good `k` with
/// `x_i ⪰_i (x_j − e_k)⁺`.
pub fn jef_check<P: BundlePreference>(alloc: &[Bundle], endowments: &[Bundle], prefs: &[P], trigger: &Trigger) -> Result<JefReport> {
    let m = check_dims(alloc, endowments, prefs.len())?;
    if let Trigger::PValuation(p) = trigger {
        if p.len() != m {
            return Err(Error::DimensionMismatch { expected: m, actual: p.len() });
        }
    }
    let n = alloc.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let triggered = trigger.fires(&endowments[i], &endowments[j]);
            let witness = if triggered {
                (0..m).find(|&k| {
                    let reduced = if alloc[j].quantities()[k] > 0 { alloc[j].remove_one(k) } else { alloc[j].clone() };
                    prefs[i].weakly_prefers(&alloc[i], &reduced)
                })
            } else {
                None
            };
            pairs.push(PairVerdict { i, j, triggered, pass: !triggered || witness.is_some(), witness });
        }
    }
    let pass = pairs.iter().all(|p| p.pass);
    Ok(JefReport { pairs, pass })
}

/// Class masses with an extra bottom class for unranked bundles.
fn masses_with_bottom(x: &Lottery, order: &WeakOrder) -> Vec<f64> {
    let mut out = vec![0.0; order.num_classes() + 1];
    for (b, p) in x.entries() {
        out[order.rank(b).unwrap_or(order.num_classes())] += p;
    }
    out
}

/// Envy-freeness of a random allocation: `x̃_i ⪰_i^sd x̃_j` for every
/// triggered pair.
pub fn sd_envy_check(lotteries: &[Lottery], endowments: &[Bundle], orders: &[WeakOrder], trigger: &Trigger) -> Result<JefReport> {
    if lotteries.len() != endowments.len() || lotteries.len() != orders.len() {
        return Err(Error::DimensionMismatch { expected: lotteries.len(), actual: endowments.len().min(orders.len()) });
    }
    let n = lotteries.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        let mi: Vec<f64> = masses_with_bottom(&lotteries[i], &orders[i]);
        for j in 0..n {
            if i == j {
                continue;
            }
            let triggered = trigger.fires(&endowments[i], &endowments[j]);
            let pass = !triggered || {
                let mj = masses_with_bottom(&lotteries[j], &orders[i]);
                let (mut ci, mut cj) = (0.0, 0.0);
                mi.iter().zip(&mj).all(|(a, b)| {
                    ci += a;
                    cj += b;
                    ci >= cj - 1e-12
                })
            };
            pairs.push(PairVerdict { i, j, triggered, pass, witness: None });
        }
    }
    let pass = pairs.iter().all(|p| p.pass);
    Ok(JefReport { pairs, pass })
}

fn deterministic_endowment(l: &Lottery) -> Result<Bundle> {
    match l.entries() {
        [(b, _)] => Ok(b.clone()),
        _ => Err(Error::Precondition("justified envy needs deterministic endowments".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftVerdict {
    pub identity: JefReport,
    pub principal: JefReport,
    /// Principal names in the order used by `principal`.
    pub principals: Vec<String>,
}

fn sum_bundles(m: usize, bs: impl Iterator<Item = Bundle>) -> Bundle {
    bs.fold(Bundle::zeros(m), |acc, b| acc.add(&b))
}

/// JEF1 for identities under their orders, and for principals over summed
/// bundles and endowments under [`PrincipalValuation`].
pub fn jef_lift_check(alloc: &[Bundle], e: &Economy, trigger: &Trigger) -> Result<LiftVerdict> {
    let endowments: Vec<Bundle> =
        e.identities().iter().map(|i| deterministic_endowment(&i.ty.endowment)).collect::<Result<_>>()?;
    let orders: Vec<WeakOrder> = e.identities().iter().map(|i| i.ty.order.clone()).collect();
    let identity = jef_check(alloc, &endowments, &orders, trigger)?;
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (k, i) in e.identities().iter().enumerate() {
        groups.entry(i.principal.clone()).or_default().push(k);
    }
    let m = e.m();
    let principals: Vec<String> = groups.keys().cloned().collect();
    let agg: Vec<Bundle> = groups.values().map(|ks| sum_bundles(m, ks.iter().map(|&k| alloc[k].clone()))).collect();
    let agg_e: Vec<Bundle> = groups.values().map(|ks| sum_bundles(m, ks.iter().map(|&k| endowments[k].clone()))).collect();
    let vals: Vec<PrincipalValuation> = groups
        .values()
        .map(|ks| PrincipalValuation::new(&ks.iter().map(|&k| orders[k].clone()).collect::<Vec<_>>()))
        .collect();
    let principal = jef_check(&agg, &agg_e, &vals, trigger)?;
    Ok(LiftVerdict { identity, principal, principals })
}

/// A small economy with an allocation that is JEF1 for identities but not
/// for principals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftCounterexample {
    pub economy: crate::economy::EconomySpec,
    pub allocation: Vec<Bundle>,
    pub verdict: LiftVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftSearchReport {
    pub max_principals: usize,
    pub max_goods: usize,
    pub max_identities: usize,
    pub individually_rational: bool,
    pub instances_checked: u64,
    pub found: Option<LiftCounterexample>,
}

/// 0/1 bundles with at most two goods.
fn small_bundles(m: usize) -> Vec<Bundle> {
    let mut out = vec![Bundle::zeros(m)];
    for a in 0..m {
        out.push(Bundle::unit(m, a));
    }
    for a in 0..m {
        for b in a + 1..m {
            out.push(Bundle::unit(m, a).add(&Bundle::unit(m, b)));
        }
    }
    out
}

/// Set partitions of `0..n` into between 2 and `max_blocks` blocks, as
/// restricted growth strings.
fn partitions(n: usize, max_blocks: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, max_blocks: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            let blocks = cur.iter().max().map_or(0, |b| b + 1);
            if blocks >= 2 {
                out.push(cur.clone());
            }
            return;
        }
        let next = cur.iter().max().map_or(0, |b| b + 1);
        for b in 0..=next.min(max_blocks - 1) {
            cur.push(b);
            go(n, max_blocks, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n >= 2 && max_blocks >= 2 {
        go(n, max_blocks, &mut Vec::new(), &mut out);
    }
    out
}

/// Calls `f` on every element of the cartesian power `options^n`; stops
/// when `f` returns true.
fn for_each_tuple<T: Clone>(options: &[Vec<T>], f: &mut dyn FnMut(&[T]) -> bool) -> bool {
    fn go<T: Clone>(options: &[Vec<T>], cur: &mut Vec<T>, f: &mut dyn FnMut(&[T]) -> bool) -> bool {
        if cur.len() == options.len() {
            return f(cur);
        }
        for o in &options[cur.len()] {
            cur.push(o.clone());
            if go(options, cur, f) {
                return true;
            }
            cur.pop();
        }
        false
    }
    go(options, &mut Vec::with_capacity(options.len()), f)
}

/// Exhaustive search for a lifting counterexample.
///
/// Instances: `m` goods, identities endowed with nothing or one unit of a
/// good, orders `[target, endowment]` or `[endowment]` with targets among
/// bundles of at most two units, allocations of such bundles within the
/// total endowment, and every split of identities among principals.
/// Smaller instances are searched first. With `individually_rational`
/// only allocations with `x_i ⪰_i e_i` for every identity are considered.
pub fn search_lift_counterexample(
    max_principals: usize,
    max_goods: usize,
    max_identities: usize,
    individually_rational: bool,
) -> Result<LiftSearchReport> {
    let mut checked = 0u64;
    let mut found = None;
    'outer: for m in 1..=max_goods {
        let bundles = small_bundles(m);
        let endow_opts: Vec<Bundle> = bundles.iter().filter(|b| b.quantities().iter().sum::<u32>() <= 1).cloned().collect();
        for n in 2..=max_identities {
            let parts = partitions(n, max_principals);
            let endow_space = vec![endow_opts.clone(); n];
            let hit = for_each_tuple(&endow_space, &mut |endow: &[Bundle]| {
                let supply = sum_bundles(m, endow.iter().cloned());
                let order_space: Vec<Vec<WeakOrder>> = endow
                    .iter()
                    .map(|e| {
                        let mut v = vec![WeakOrder::strict(vec![e.clone()]).expect("single bundle")];
                        v.extend(
                            bundles.iter().filter(|t| *t != e).map(|t| WeakOrder::strict(vec![t.clone(), e.clone()]).expect("distinct")),
                        );
                        v
                    })
                    .collect();
                let alloc_space = vec![bundles.iter().filter(|b| (*b).le(&supply)).cloned().collect::<Vec<_>>(); n];
                for_each_tuple(&order_space, &mut |orders: &[WeakOrder]| {
                    for_each_tuple(&alloc_space, &mut |alloc: &[Bundle]| {
                        if !sum_bundles(m, alloc.iter().cloned()).le(&supply) {
                            return false;
                        }
                        if individually_rational && !alloc.iter().zip(endow).zip(orders).all(|((x, e), o)| o.weakly_prefers(x, e)) {
                            return false;
                        }
                        checked += 1;
                        let Ok(id_rep) = jef_check(alloc, endow, orders, &Trigger::SetInclusion) else { return false };
                        if !id_rep.pass {
                            return false;
                        }
                        for part in &parts {
                            let Ok(e) = lift_instance(m, endow, orders, part) else { continue };
                            let Ok(v) = jef_lift_check(alloc, &e, &Trigger::SetInclusion) else { continue };
                            if v.identity.pass && !v.principal.pass {
                                found = Some(LiftCounterexample {
                                    economy: crate::economy::EconomySpec::from_economy(&e),
                                    allocation: alloc.to_vec(),
                                    verdict: v,
                                });
                                return true;
                            }
                        }
                        false
                    })
                })
            });
            if hit {
                break 'outer;
            }
        }
    }
    Ok(LiftSearchReport { max_principals, max_goods, max_identities, individually_rational, instances_checked: checked, found })
}

fn lift_instance(m: usize, endow: &[Bundle], orders: &[WeakOrder], part: &[usize]) -> Result<Economy> {
    use crate::economy::{EndowmentCheck, Identity, IdentityType};
    let identities = endow
        .iter()
        .zip(orders)
        .zip(part)
        .enumerate()
        .map(|(k, ((e, o), p))| {
            Ok(Identity { id: format!("{}", k + 1), principal: format!("P{}", p + 1), ty: IdentityType::new(Lottery::degenerate(e.clone()), o.clone())? })
        })
        .collect::<Result<Vec<_>>>()?;
    let capacity = sum_bundles(m, endow.iter().cloned()).quantities().iter().map(|&q| q.max(1)).collect();
    let goods = (0..m).map(|j| format!("g{j}")).collect();
    Economy::new(goods, capacity, identities, 0.0, EndowmentCheck::AtMost)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(m: usize, j: usize) -> Bundle {
        Bundle::unit(m, j)
    }

    #[test]
    fn own_endowment_passes() {
        let e = vec![u(2, 0), u(2, 1), u(2, 0)];
        let orders: Vec<WeakOrder> = e.iter().map(|b| WeakOrder::strict(vec![b.clone()]).unwrap()).collect();
        assert!(jef_check(&e, &e, &orders, &Trigger::SetInclusion).unwrap().pass);
    }

    #[test]
    fn single_agent_is_vacuous() {
        let o = vec![WeakOrder::strict(vec![u(1, 0)]).unwrap()];
        let r = jef_check(&[Bundle::zeros(1)], &[u(1, 0)], &o, &Trigger::SetInclusion).unwrap();
        assert!(r.pass);
        assert!(r.pairs.is_empty());
    }

    #[test]
    fn two_unit_envy_fails() {
        let m = 2;
        let ab = u(m, 0).add(&u(m, 1));
        let orders = vec![WeakOrder::strict(vec![ab.clone(), u(m, 0), u(m, 1), Bundle::zeros(m)]).unwrap(); 2];
        let alloc = vec![Bundle::zeros(m), ab];
        let endow = vec![u(m, 0), u(m, 0)];
        let r = jef_check(&alloc, &endow, &orders, &Trigger::SetInclusion).unwrap();
        assert!(!r.pass);
        assert_eq!(r.failures().map(|p| (p.i, p.j)).collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn uniform_prices_agree_on_comparable_endowments() {
        let m = 3;
        let endow = vec![u(m, 0).add(&u(m, 1)), u(m, 0), Bundle::zeros(m)];
        let orders = vec![WeakOrder::strict(vec![u(m, 2), u(m, 0), Bundle::zeros(m)]).unwrap(); 3];
        let alloc = vec![u(m, 0), u(m, 2), u(m, 1)];
        let a = jef_check(&alloc, &endow, &orders, &Trigger::SetInclusion).unwrap();
        let b = jef_check(&alloc, &endow, &orders, &Trigger::PValuation(vec![1.0 / 3.0; 3])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn principal_valuation_splits_bundle() {
        let m = 2;
        let orders = vec![WeakOrder::strict(vec![u(m, 0)]).unwrap(), WeakOrder::strict(vec![u(m, 1)]).unwrap()];
        let v = PrincipalValuation::new(&orders);
        assert_eq!(v.value(&u(m, 0).add(&u(m, 1))), 2.0);
        assert_eq!(v.value(&u(m, 0)), 1.0 + UNACCEPTABLE_SCORE);
    }

    #[test]
    fn one_identity_per_principal_verdicts_coincide() {
        let e = crate::canonical::example_one(0.05);
        let alloc = vec![u(4, 0), Bundle::zeros(4), Bundle::zeros(4)];
        let v = jef_lift_check(&alloc, &e, &Trigger::SetInclusion).unwrap();
        assert_eq!(v.identity.pass, v.principal.pass);
    }

    #[test]
    fn partitions_count() {
        // Bell(4) minus the single-block partition
        assert_eq!(partitions(4, 4).len(), 14);
        assert_eq!(partitions(3, 2).len(), 3);
    }

    #[test]
    fn search_finds_counterexample() {
        let r = search_lift_counterexample(3, 2, 4, false).unwrap();
        let c = r.found.expect("counterexample");
        assert!(c.verdict.identity.pass);
        assert!(!c.verdict.principal.pass);
    }
}
