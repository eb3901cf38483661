//! Stochastic dominance, budget relaxations and the random demand rule.
//!
//! Demand is the sd-lexicographically best affordable lottery: indifference
//! classes are filled best-to-worst, each with its cheapest bundle, always
//! reserving enough budget to put the unassigned mass on the globally cheapest
//! acceptable bundle. The budget is the price value of the endowment plus the
//! identity's relaxation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::economy::{Bundle, Economy, IdentityType, Lottery, WeakOrder, PROB_TOL};
use crate::error::{Error, Result};
use crate::price::PriceVector;

/// Realized budget relaxations, one per identity, summing to δ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetProfile {
    relaxations: Vec<f64>,
    delta: f64,
}

impl BudgetProfile {
    pub fn new(relaxations: Vec<f64>, delta: f64) -> Result<Self> {
        if relaxations.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::Precondition("relaxations must be non-negative".into()));
        }
        let s: f64 = relaxations.iter().sum();
        if (s - delta).abs() > PROB_TOL {
            return Err(Error::Precondition(format!("relaxations sum to {s}, expected {delta}")));
        }
        Ok(BudgetProfile { relaxations, delta })
    }

    pub fn zeros(n: usize) -> Self {
        BudgetProfile { relaxations: vec![0.0; n], delta: 0.0 }
    }

    pub fn relaxations(&self) -> &[f64] {
        &self.relaxations
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.relaxations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relaxations.is_empty()
    }
}

/// Symmetric Dirichlet(1, ..., 1) draw scaled to sum to `delta`.
pub fn sample_budget_relaxations<R: Rng + ?Sized>(n: usize, delta: f64, rng: &mut R) -> Result<BudgetProfile> {
    if n == 0 {
        return Err(Error::Precondition("need at least one identity".into()));
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::Precondition(format!("delta {delta} must be >= 0")));
    }
    if n == 1 {
        return Ok(BudgetProfile { relaxations: vec![delta], delta });
    }
    // normalized unit exponentials are Dirichlet(1, ..., 1)
    let exps: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = exps.iter().sum();
    let relaxations = exps.iter().map(|x| delta * x / total).collect();
    Ok(BudgetProfile { relaxations, delta })
}

/// `E_{x ~ lottery}[p · x]`.
pub fn price_value(p: &PriceVector, x: &Lottery) -> Result<f64> {
    if x.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), actual: x.dim() });
    }
    Ok(x.entries().iter().map(|(b, q)| q * b.value(p.as_slice())).sum())
}

/// Outcome of a first-order stochastic dominance comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dominance {
    XDominates,
    YDominates,
    Equivalent,
    Incomparable,
}

/// Mass each lottery puts on each indifference class of `order`.
pub fn class_masses(x: &Lottery, order: &WeakOrder) -> Result<Vec<f64>> {
    let mut out = vec![0.0; order.num_classes()];
    for (b, p) in x.entries() {
        let k = order
            .rank(b)
            .ok_or_else(|| Error::InvalidOrder(format!("bundle {b} is not ranked by the order")))?;
        out[k] += p;
    }
    Ok(out)
}

/// Compares upper-contour probabilities at every class boundary.
pub fn fosd_compare(x: &Lottery, y: &Lottery, order: &WeakOrder) -> Result<Dominance> {
    const EPS: f64 = 1e-12;
    let mx = class_masses(x, order)?;
    let my = class_masses(y, order)?;
    let (mut cx, mut cy) = (0.0, 0.0);
    let (mut x_above, mut y_above) = (false, false);
    for (a, b) in mx.iter().zip(&my) {
        cx += a;
        cy += b;
        if cx > cy + EPS {
            x_above = true;
        } else if cy > cx + EPS {
            y_above = true;
        }
    }
    Ok(match (x_above, y_above) {
        (false, false) => Dominance::Equivalent,
        (true, false) => Dominance::XDominates,
        (false, true) => Dominance::YDominates,
        (true, true) => Dominance::Incomparable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandResult {
    pub lottery: Lottery,
    /// Price value of the demanded lottery.
    pub expenditure: f64,
    pub budget: f64,
    /// Best indifference class receiving positive probability.
    pub top_class_reached: usize,
}

/// Cheapest bundle among `bundles`, ties broken by lexicographic order.
fn cheapest<'a>(bundles: impl Iterator<Item = &'a Bundle>, p: &[f64]) -> Option<(&'a Bundle, f64)> {
    let mut best: Option<(&Bundle, f64)> = None;
    for b in bundles {
        let c = b.value(p);
        match best {
            Some((bb, bc)) if c > bc || (c == bc && b >= bb) => {}
            _ => best = Some((b, c)),
        }
    }
    best
}

/// An identity's type evaluated at fixed prices: the cheapest member of each
/// class, the cheapest acceptable bundle and the endowment's value. Demand at
/// any relaxation is then a single pass over the classes.
#[derive(Debug, Clone)]
pub struct PricedType<'a> {
    classes: Vec<(&'a Bundle, f64)>,
    floor: (&'a Bundle, f64),
    floor_class: usize,
    endowment_value: f64,
}

impl<'a> PricedType<'a> {
    pub fn new(t: &'a IdentityType, p: &PriceVector) -> Result<Self> {
        if t.acceptable.is_empty() {
            return Err(Error::InvalidType { id: String::new(), reason: "empty acceptable set".into() });
        }
        if t.dim() != p.dim() {
            return Err(Error::DimensionMismatch { expected: p.dim(), actual: t.dim() });
        }
        let prices = p.as_slice();
        let classes: Vec<(&Bundle, f64)> = t
            .order
            .classes()
            .iter()
            .map(|c| cheapest(c.iter(), prices).expect("classes are non-empty"))
            .collect();
        let floor = cheapest(t.acceptable.iter(), prices).expect("non-empty");
        let floor_class = t.order.rank(floor.0).unwrap_or(0);
        Ok(PricedType { classes, floor, floor_class, endowment_value: price_value(p, &t.endowment)? })
    }

    pub fn budget(&self, b: f64) -> f64 {
        self.endowment_value + b.max(0.0)
    }

    /// Calls `visit(bundle, mass)` for each bundle of the demanded lottery and
    /// returns `(expenditure, top class reached)`.
    pub fn fill(&self, b: f64, mut visit: impl FnMut(&'a Bundle, f64)) -> (f64, usize) {
        let budget = self.budget(b);
        let (floor_bundle, q_min) = self.floor;
        let mut remaining = 1.0_f64;
        let mut spent = 0.0_f64;
        let mut top = None;
        for (k, &(bundle, q_k)) in self.classes.iter().enumerate() {
            if remaining <= 0.0 {
                break;
            }
            let mass = if q_k <= q_min {
                remaining
            } else {
                let slack = budget - spent - remaining * q_min;
                (slack / (q_k - q_min)).clamp(0.0, remaining)
            };
            if mass > 0.0 {
                visit(bundle, mass);
                spent += mass * q_k;
                remaining -= mass;
                top.get_or_insert(k);
            }
        }
        if remaining > 0.0 {
            // the class holding the cheapest bundle always absorbs the rest,
            // so this only catches rounding residue
            visit(floor_bundle, remaining);
            spent += remaining * q_min;
            top.get_or_insert(self.floor_class);
        }
        (spent, top.unwrap_or(0))
    }

    /// Adds `weight · E[x]` of the demanded lottery to `out`.
    pub fn add_expected(&self, b: f64, weight: f64, out: &mut [f64]) {
        self.fill(b, |bundle, mass| {
            for (o, &q) in out.iter_mut().zip(bundle.quantities()) {
                *o += weight * mass * q as f64;
            }
        });
    }

    pub fn demand(&self, b: f64) -> Result<DemandResult> {
        let mut parts: Vec<(Bundle, f64)> = Vec::new();
        let (expenditure, top) = self.fill(b, |bundle, mass| parts.push((bundle.clone(), mass)));
        let total: f64 = parts.iter().map(|(_, q)| q).sum();
        parts.iter_mut().for_each(|(_, q)| *q /= total);
        Ok(DemandResult {
            lottery: Lottery::new(parts)?,
            expenditure,
            budget: self.budget(b),
            top_class_reached: top,
        })
    }
}

/// Random demand of one identity with relaxation `b` (already in money units).
pub fn demand(t: &IdentityType, p: &PriceVector, b: f64) -> Result<DemandResult> {
    PricedType::new(t, p)?.demand(b)
}

/// Converts a relaxation share into money: `b · (p · c)`. With unit
/// capacities on the simplex this is `b` itself.
pub fn relaxation_money(p: &PriceVector, capacity: &[u32], b: f64) -> f64 {
    let pc: f64 = p.as_slice().iter().zip(capacity).map(|(x, &c)| x * c as f64).sum();
    b * pc
}

/// Demand of every identity under shared prices.
pub fn demand_profile(e: &Economy, p: &PriceVector, b: &BudgetProfile) -> Result<Vec<DemandResult>> {
    if b.len() != e.n() {
        return Err(Error::DimensionMismatch { expected: e.n(), actual: b.len() });
    }
    if p.dim() != e.m() {
        return Err(Error::DimensionMismatch { expected: e.m(), actual: p.dim() });
    }
    let scale = relaxation_money(p, e.capacity(), 1.0);
    e.identities()
        .iter()
        .zip(b.relaxations())
        .map(|(ident, &bi)| {
            demand(&ident.ty, p, bi * scale).map_err(|err| match err {
                Error::InvalidType { reason, .. } => Error::InvalidType { id: ident.id.clone(), reason },
                other => other,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lot(entries: &[(Vec<u32>, f64)]) -> Lottery {
        Lottery::new(entries.iter().map(|(b, p)| (Bundle(b.clone()), *p)).collect()).unwrap()
    }

    #[test]
    fn price_value_examples() {
        let p = PriceVector::uniform(4);
        let a = lot(&[(vec![1, 0, 0, 0], 1.0)]);
        assert!((price_value(&p, &a).unwrap() - 0.25).abs() < 1e-12);
        let z = lot(&[(vec![0, 0, 0, 0], 1.0)]);
        assert_eq!(price_value(&p, &z).unwrap(), 0.0);
        let ab = lot(&[(vec![1, 0, 0, 0], 0.5), (vec![0, 1, 0, 0], 0.5)]);
        assert!((price_value(&p, &ab).unwrap() - 0.25).abs() < 1e-12);
        assert!(price_value(&PriceVector::uniform(3), &a).is_err());
    }

    fn three_class_order() -> WeakOrder {
        WeakOrder::strict(vec![Bundle(vec![1, 0, 0]), Bundle(vec![0, 1, 0]), Bundle(vec![0, 0, 1])]).unwrap()
    }

    #[test]
    fn fosd_examples() {
        let order = three_class_order();
        let x = lot(&[(vec![1, 0, 0], 0.5), (vec![0, 0, 1], 0.5)]);
        let y = lot(&[(vec![0, 1, 0], 1.0)]);
        assert_eq!(fosd_compare(&x, &x, &order).unwrap(), Dominance::Equivalent);
        assert_eq!(fosd_compare(&x, &y, &order).unwrap(), Dominance::Incomparable);
        let top = lot(&[(vec![1, 0, 0], 1.0)]);
        let bottom = lot(&[(vec![0, 0, 1], 1.0)]);
        assert_eq!(fosd_compare(&top, &bottom, &order).unwrap(), Dominance::XDominates);
        assert_eq!(fosd_compare(&bottom, &top, &order).unwrap(), Dominance::YDominates);
        let stray = lot(&[(vec![1, 1, 0], 1.0)]);
        assert!(fosd_compare(&stray, &top, &order).is_err());
    }

    #[test]
    fn relaxation_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_budget_relaxations(1, 0.1, &mut rng).unwrap().relaxations(), &[0.1]);
        let z = sample_budget_relaxations(5, 0.0, &mut rng).unwrap();
        assert!(z.relaxations().iter().all(|&b| b == 0.0));
        assert!(sample_budget_relaxations(0, 0.1, &mut rng).is_err());
        let b = sample_budget_relaxations(7, 0.3, &mut rng).unwrap();
        assert!((b.relaxations().iter().sum::<f64>() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn relaxation_means_are_symmetric() {
        // Dirichlet(1,1,1)·0.3: each marginal has mean 0.1 and variance
        // 0.09 · (1·2)/(9·4) = 0.005
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 10_000;
        let mut sums = [0.0; 3];
        for _ in 0..draws {
            let b = sample_budget_relaxations(3, 0.3, &mut rng).unwrap();
            for (s, x) in sums.iter_mut().zip(b.relaxations()) {
                *s += x;
            }
        }
        let se = (0.005_f64 / draws as f64).sqrt();
        for s in sums {
            assert!((s / draws as f64 - 0.1).abs() < 3.0 * se, "mean {}", s / draws as f64);
        }
    }

    #[test]
    fn single_bundle_type_demands_it() {
        let e = canonical::example_one(0.05);
        let t2 = &e.identities()[1].ty;
        for p in [PriceVector::uniform(4), PriceVector::new(vec![0.7, 0.1, 0.1, 0.1]).unwrap()] {
            let d = demand(t2, &p, 0.3).unwrap();
            assert_eq!(d.lottery, Lottery::degenerate(Bundle(vec![0, 0, 1, 0])));
        }
    }

    #[test]
    fn affordable_best_class_takes_cheapest_member() {
        let m = 3;
        let order = WeakOrder::new(vec![
            vec![Bundle::unit(m, 0), Bundle::unit(m, 1)],
            vec![Bundle::unit(m, 2)],
        ])
        .unwrap();
        let t = IdentityType::new(Lottery::degenerate(Bundle::unit(m, 2)), order).unwrap();
        let p = PriceVector::new(vec![0.5, 0.2, 0.3]).unwrap();
        let d = demand(&t, &p, 0.0).unwrap();
        assert_eq!(d.lottery, Lottery::degenerate(Bundle::unit(m, 1)));
        assert_eq!(d.top_class_reached, 0);
    }

    #[test]
    fn fractional_mix_matches_budget() {
        // best costs 0.75, fallback 0.25, budget 0.5: half on best
        let best = Bundle(vec![3, 0]);
        let fallback = Bundle(vec![1, 0]);
        let t = IdentityType::new(
            Lottery::degenerate(fallback.clone()),
            WeakOrder::strict(vec![best.clone(), fallback.clone()]).unwrap(),
        )
        .unwrap();
        let p = PriceVector::new(vec![0.25, 0.75]).unwrap();
        let d = demand(&t, &p, 0.25).unwrap();
        assert!((d.lottery.probability_of(&best) - 0.5).abs() < 1e-12);
        assert!((d.lottery.probability_of(&fallback) - 0.5).abs() < 1e-12);
        assert!((d.expenditure - 0.5).abs() < 1e-12);
        assert_eq!(d.top_class_reached, 0);
    }

    #[test]
    fn demand_profile_at_uniform_prices() {
        let e = canonical::example_one(0.05);
        let p = PriceVector::uniform(4);
        let b = BudgetProfile::new(vec![0.02, 0.02, 0.01], 0.05).unwrap();
        let d = demand_profile(&e, &p, &b).unwrap();
        assert_eq!(d[1].lottery, Lottery::degenerate(Bundle(vec![0, 0, 1, 0])));
        assert_eq!(d[2].lottery, Lottery::degenerate(Bundle(vec![0, 0, 0, 1])));
        assert!(demand_profile(&e, &p, &BudgetProfile::zeros(2)).is_err());
    }

    #[test]
    fn split_identities_demand_their_goods_when_affordable() {
        let e = canonical::example_one(0.05);
        let attacked = crate::sybil::apply_attack(&e, &canonical::example_one_split()).unwrap();
        // A and B free: both Sybils get their top bundle outright
        let p = PriceVector::new(vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        let d = demand_profile(&attacked, &p, &BudgetProfile::zeros(attacked.n())).unwrap();
        let ia = attacked.index_of("1a").unwrap();
        let ib = attacked.index_of("1b").unwrap();
        assert_eq!(d[ia].lottery, Lottery::degenerate(Bundle(vec![1, 0, 0, 0])));
        assert_eq!(d[ib].lottery, Lottery::degenerate(Bundle(vec![0, 1, 0, 0])));
    }

    #[test]
    fn endowment_only_economy_demands_endowments() {
        let e = canonical::self_demand(3, 0.0);
        let p = PriceVector::uniform(3);
        let d = demand_profile(&e, &p, &BudgetProfile::zeros(3)).unwrap();
        for (di, ident) in d.iter().zip(e.identities()) {
            assert_eq!(di.lottery, ident.ty.endowment);
        }
    }
}
