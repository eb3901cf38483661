//! Goods, bundles, lotteries, identity types and the economy container.
//!
//! Everything here is an immutable value once built. Probabilities are plain
//! `f64` and every sum check uses [`PROB_TOL`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for probability sums and endowment feasibility.
pub const PROB_TOL: f64 = 1e-9;

/// Integral vector of good quantities. Ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bundle(pub Vec<u32>);

impl Bundle {
    pub fn new(quantities: Vec<u32>) -> Self {
        Bundle(quantities)
    }

    pub fn zeros(m: usize) -> Self {
        Bundle(vec![0; m])
    }

    /// One unit of good `j`.
    pub fn unit(m: usize, j: usize) -> Self {
        let mut q = vec![0; m];
        q[j] = 1;
        Bundle(q)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|&q| q == 0)
    }

    pub fn quantities(&self) -> &[u32] {
        &self.0
    }

    /// `p · x`.
    pub fn value(&self, prices: &[f64]) -> f64 {
        self.0.iter().zip(prices).map(|(&q, &p)| q as f64 * p).sum()
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &Bundle) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn add(&self, other: &Bundle) -> Bundle {
        Bundle(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `(x - e_k)^+`: removes one unit of good `k`, flooring at zero.
    pub fn remove_one(&self, k: usize) -> Bundle {
        let mut q = self.0.clone();
        q[k] = q[k].saturating_sub(1);
        Bundle(q)
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&q| q as f64).collect()
    }
}

impl fmt::Display for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Finite probability distribution over bundles, kept sorted by bundle with
/// duplicate bundles merged and zero-mass entries dropped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lottery {
    entries: Vec<(Bundle, f64)>,
}

impl Lottery {
    pub fn new(entries: Vec<(Bundle, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidLottery("empty support".into()));
        }
        let m = entries[0].0.len();
        let mut merged: BTreeMap<Bundle, f64> = BTreeMap::new();
        for (b, p) in entries {
            if b.len() != m {
                return Err(Error::InvalidLottery(format!(
                    "bundle {b} has length {} but expected {m}",
                    b.len()
                )));
            }
            if !p.is_finite() || p < -PROB_TOL || p > 1.0 + PROB_TOL {
                return Err(Error::InvalidLottery(format!("probability {p} out of [0,1]")));
            }
            *merged.entry(b).or_insert(0.0) += p.max(0.0);
        }
        let total: f64 = merged.values().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidLottery(format!("probabilities sum to {total}")));
        }
        let entries: Vec<_> = merged.into_iter().filter(|(_, p)| *p > 0.0).collect();
        if entries.is_empty() {
            return Err(Error::InvalidLottery("no positive mass".into()));
        }
        Ok(Lottery { entries })
    }

    pub fn degenerate(b: Bundle) -> Self {
        Lottery { entries: vec![(b, 1.0)] }
    }

    /// Convex combination of lotteries. Weights must sum to one.
    pub fn mixture(parts: &[(&Lottery, f64)]) -> Result<Self> {
        let entries = parts
            .iter()
            .flat_map(|(l, w)| l.entries.iter().map(move |(b, p)| (b.clone(), p * w)))
            .collect();
        Lottery::new(entries)
    }

    pub fn entries(&self) -> &[(Bundle, f64)] {
        &self.entries
    }

    pub fn support(&self) -> impl Iterator<Item = &Bundle> {
        self.entries.iter().map(|(b, _)| b)
    }

    pub fn dim(&self) -> usize {
        self.entries[0].0.len()
    }

    pub fn probability_of(&self, b: &Bundle) -> f64 {
        self.entries
            .iter()
            .find(|(x, _)| x == b)
            .map_or(0.0, |(_, p)| *p)
    }

    /// Componentwise expected bundle.
    pub fn expectation(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (b, p) in &self.entries {
            for (o, &q) in out.iter_mut().zip(b.quantities()) {
                *o += p * q as f64;
            }
        }
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    /// Lottery scaled down to `share` of its mass with the remainder on the
    /// zero bundle; how a split hands out a fraction of an endowment.
    pub fn thinned(&self, share: f64) -> Result<Self> {
        let mut entries: Vec<_> = self.entries.iter().map(|(b, p)| (b.clone(), p * share)).collect();
        entries.push((Bundle::zeros(self.dim()), 1.0 - share));
        Lottery::new(entries)
    }
}

impl PartialEq for Lottery {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Lottery {}

impl PartialOrd for Lottery {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Lottery {
    fn cmp(&self, other: &Self) -> Ordering {
        let n = self.entries.len().min(other.entries.len());
        for i in 0..n {
            let (a, pa) = &self.entries[i];
            let (b, pb) = &other.entries[i];
            match a.cmp(b).then_with(|| pa.total_cmp(pb)) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        self.entries.len().cmp(&other.entries.len())
    }
}

/// Weak order over acceptable bundles as indifference classes, best first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeakOrder {
    classes: Vec<Vec<Bundle>>,
}

impl WeakOrder {
    pub fn new(classes: Vec<Vec<Bundle>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(classes.len());
        for mut class in classes {
            if class.is_empty() {
                return Err(Error::InvalidOrder("empty indifference class".into()));
            }
            class.sort();
            for b in &class {
                if !seen.insert(b.clone()) {
                    return Err(Error::InvalidOrder(format!("bundle {b} appears twice")));
                }
            }
            out.push(class);
        }
        if out.is_empty() {
            return Err(Error::InvalidOrder("no classes".into()));
        }
        Ok(WeakOrder { classes: out })
    }

    /// Strict linear order from a best-first list.
    pub fn strict(bundles: Vec<Bundle>) -> Result<Self> {
        WeakOrder::new(bundles.into_iter().map(|b| vec![b]).collect())
    }

    pub fn classes(&self) -> &[Vec<Bundle>] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Class index of `b` (0 = best), or `None` when `b` is not ranked.
    pub fn rank(&self, b: &Bundle) -> Option<usize> {
        self.classes.iter().position(|c| c.binary_search(b).is_ok())
    }

    pub fn bundles(&self) -> BTreeSet<Bundle> {
        self.classes.iter().flatten().cloned().collect()
    }

    /// Appends `extra` as a new bottom class, skipping bundles already ranked.
    pub fn with_bottom_class(&self, extra: &[Bundle]) -> Result<Self> {
        let fresh: Vec<Bundle> = extra
            .iter()
            .filter(|b| self.rank(b).is_none())
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut classes = self.classes.clone();
        if !fresh.is_empty() {
            classes.push(fresh);
        }
        WeakOrder::new(classes)
    }
}

/// Reported type: endowment lottery, acceptable set and weak order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IdentityType {
    pub endowment: Lottery,
    pub acceptable: BTreeSet<Bundle>,
    pub order: WeakOrder,
}

impl IdentityType {
    pub fn new(endowment: Lottery, order: WeakOrder) -> Result<Self> {
        let acceptable = order.bundles();
        Self::with_acceptable(endowment, acceptable, order)
    }

    pub fn with_acceptable(
        endowment: Lottery,
        acceptable: BTreeSet<Bundle>,
        order: WeakOrder,
    ) -> Result<Self> {
        let t = IdentityType { endowment, acceptable, order };
        t.validate().map_err(|reason| Error::InvalidType { id: String::new(), reason })?;
        Ok(t)
    }

    /// Type whose endowment bundles are appended to the order as a bottom
    /// class when they are not already acceptable ("endowment-only" bundles).
    pub fn with_endowment_only(endowment: Lottery, order: WeakOrder) -> Result<Self> {
        let support: Vec<Bundle> = endowment.support().cloned().collect();
        let order = order.with_bottom_class(&support)?;
        IdentityType::new(endowment, order)
    }

    pub fn dim(&self) -> usize {
        self.endowment.dim()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.acceptable.is_empty() {
            return Err("empty acceptable set".into());
        }
        let m = self.endowment.dim();
        if let Some(b) = self.acceptable.iter().find(|b| b.len() != m) {
            return Err(format!("bundle {b} has wrong length"));
        }
        if self.order.bundles() != self.acceptable {
            return Err("order does not cover the acceptable set exactly".into());
        }
        if let Some(b) = self.endowment.support().find(|b| !self.acceptable.contains(*b)) {
            return Err(format!("endowment bundle {b} is not acceptable"));
        }
        Ok(())
    }
}

/// An identity: the unit the mechanism sees, owned by exactly one principal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identity {
    pub id: String,
    pub principal: String,
    pub ty: IdentityType,
}

/// How strictly `Σ E[e_i]` is compared against capacities at build time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndowmentCheck {
    /// `Σ E[e_i] = c` within tolerance.
    Exact,
    /// `Σ E[e_i] <= c`; unowned capacity belongs to the exchange.
    #[default]
    AtMost,
    /// No check; used for economies carrying phantom Sybil endowments.
    Unchecked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Economy {
    goods: Vec<String>,
    capacity: Vec<u32>,
    identities: Vec<Identity>,
    delta: f64,
    endowment_check: EndowmentCheck,
}

impl Economy {
    pub fn new(
        goods: Vec<String>,
        capacity: Vec<u32>,
        identities: Vec<Identity>,
        delta: f64,
        endowment_check: EndowmentCheck,
    ) -> Result<Self> {
        let m = goods.len();
        if m == 0 {
            return Err(Error::InvalidEconomy("no goods".into()));
        }
        if capacity.len() != m {
            return Err(Error::DimensionMismatch { expected: m, actual: capacity.len() });
        }
        if capacity.iter().any(|&c| c == 0) {
            return Err(Error::InvalidEconomy("capacities must be positive".into()));
        }
        if identities.is_empty() {
            return Err(Error::InvalidEconomy("no identities".into()));
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::InvalidEconomy(format!("delta {delta} must be >= 0")));
        }
        let mut ids = BTreeSet::new();
        for ident in &identities {
            if !ids.insert(ident.id.as_str()) {
                return Err(Error::InvalidEconomy(format!("duplicate identity `{}`", ident.id)));
            }
            if ident.ty.dim() != m {
                return Err(Error::DimensionMismatch { expected: m, actual: ident.ty.dim() });
            }
            ident.ty.validate().map_err(|reason| Error::InvalidType {
                id: ident.id.clone(),
                reason,
            })?;
        }
        let e = Economy { goods, capacity, identities, delta, endowment_check };
        e.check_endowments()?;
        Ok(e)
    }

    fn check_endowments(&self) -> Result<()> {
        if self.endowment_check == EndowmentCheck::Unchecked {
            return Ok(());
        }
        for (j, (&total, &cap)) in self.total_endowment().iter().zip(&self.capacity).enumerate() {
            let cap = cap as f64;
            let bad = match self.endowment_check {
                EndowmentCheck::Exact => (total - cap).abs() > PROB_TOL,
                EndowmentCheck::AtMost => total > cap + PROB_TOL,
                EndowmentCheck::Unchecked => false,
            };
            if bad {
                return Err(Error::EndowmentInfeasible { good: j, total, capacity: cap });
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.goods.len()
    }

    pub fn n(&self) -> usize {
        self.identities.len()
    }

    pub fn goods(&self) -> &[String] {
        &self.goods
    }

    pub fn capacity(&self) -> &[u32] {
        &self.capacity
    }

    pub fn capacity_f64(&self) -> Vec<f64> {
        self.capacity.iter().map(|&c| c as f64).collect()
    }

    pub fn identities(&self) -> &[Identity] {
        &self.identities
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn endowment_check(&self) -> EndowmentCheck {
        self.endowment_check
    }

    pub fn with_delta(&self, delta: f64) -> Result<Economy> {
        Economy::new(
            self.goods.clone(),
            self.capacity.clone(),
            self.identities.clone(),
            delta,
            self.endowment_check,
        )
    }

    /// Rebuilds with a different identity list, keeping goods, capacities and δ.
    pub fn with_identities(&self, identities: Vec<Identity>, check: EndowmentCheck) -> Result<Economy> {
        Economy::new(self.goods.clone(), self.capacity.clone(), identities, self.delta, check)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.identities.iter().position(|i| i.id == id)
    }

    pub fn principals(&self) -> BTreeSet<&str> {
        self.identities.iter().map(|i| i.principal.as_str()).collect()
    }

    /// Indices of identities owned by `principal` (`C_p`).
    pub fn owned_by(&self, principal: &str) -> Vec<usize> {
        self.identities
            .iter()
            .enumerate()
            .filter(|(_, i)| i.principal == principal)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn total_endowment(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        for ident in &self.identities {
            for (o, x) in out.iter_mut().zip(ident.ty.endowment.expectation()) {
                *o += x;
            }
        }
        out
    }
}

/// One entry of an endowment lottery in the economy file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndowmentEntry {
    pub bundle: Bundle,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodSpec {
    pub name: String,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentitySpec {
    pub id: String,
    pub principal: String,
    pub endowment: Vec<EndowmentEntry>,
    pub acceptable: Vec<Bundle>,
    pub order: Vec<Vec<Bundle>>,
}

/// Economy file schema; the single ingestion format for the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomySpec {
    pub goods: Vec<GoodSpec>,
    pub identities: Vec<IdentitySpec>,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "is_default_check")]
    pub endowment_check: EndowmentCheck,
    /// Seed the economy was generated from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn is_default_check(c: &EndowmentCheck) -> bool {
    *c == EndowmentCheck::default()
}

impl EconomySpec {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_economy(e: &Economy) -> Self {
        let goods = e
            .goods
            .iter()
            .zip(&e.capacity)
            .map(|(name, &capacity)| GoodSpec { name: name.clone(), capacity })
            .collect();
        let identities = e
            .identities
            .iter()
            .map(|i| IdentitySpec {
                id: i.id.clone(),
                principal: i.principal.clone(),
                endowment: i
                    .ty
                    .endowment
                    .entries()
                    .iter()
                    .map(|(b, p)| EndowmentEntry { bundle: b.clone(), prob: *p })
                    .collect(),
                acceptable: i.ty.acceptable.iter().cloned().collect(),
                order: i.ty.order.classes().to_vec(),
            })
            .collect();
        EconomySpec { goods, identities, delta: e.delta, endowment_check: e.endowment_check, seed: None }
    }
}

/// Validates a spec and builds the economy.
pub fn build_economy(spec: &EconomySpec) -> Result<Economy> {
    let m = spec.goods.len();
    let mut identities = Vec::with_capacity(spec.identities.len());
    for is in &spec.identities {
        let wrap = |e: Error| Error::InvalidType { id: is.id.clone(), reason: e.to_string() };
        for b in is.acceptable.iter().chain(is.order.iter().flatten()) {
            if b.len() != m {
                return Err(Error::InvalidBundle(format!(
                    "identity `{}`: bundle {b} has length {} but there are {m} goods",
                    is.id,
                    b.len()
                )));
            }
        }
        let endowment = Lottery::new(is.endowment.iter().map(|e| (e.bundle.clone(), e.prob)).collect())
            .map_err(wrap)?;
        let order = WeakOrder::new(is.order.clone()).map_err(wrap)?;
        let acceptable: BTreeSet<Bundle> = is.acceptable.iter().cloned().collect();
        let ty = IdentityType::with_acceptable(endowment, acceptable, order).map_err(|e| match e {
            Error::InvalidType { reason, .. } => Error::InvalidType { id: is.id.clone(), reason },
            other => other,
        })?;
        identities.push(Identity { id: is.id.clone(), principal: is.principal.clone(), ty });
    }
    Economy::new(
        spec.goods.iter().map(|g| g.name.clone()).collect(),
        spec.goods.iter().map(|g| g.capacity).collect(),
        identities,
        spec.delta,
        spec.endowment_check,
    )
}

/// Empirical distribution of reported types: each distinct type with its
/// multiplicity out of `n` identities.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    counts: BTreeMap<IdentityType, usize>,
    n: usize,
}

impl EmpiricalDistribution {
    pub fn from_types<'a>(types: impl IntoIterator<Item = &'a IdentityType>) -> Self {
        let mut counts = BTreeMap::new();
        let mut n = 0;
        for t in types {
            *counts.entry(t.clone()).or_insert(0) += 1;
            n += 1;
        }
        EmpiricalDistribution { counts, n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, t: &IdentityType) -> f64 {
        self.counts.get(t).map_or(0.0, |&c| c as f64 / self.n as f64)
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&IdentityType, f64)> {
        self.counts.iter().map(move |(t, &c)| (t, c as f64 / self.n as f64))
    }

    pub fn num_atoms(&self) -> usize {
        self.counts.len()
    }
}

pub fn empirical_distribution(e: &Economy) -> EmpiricalDistribution {
    EmpiricalDistribution::from_types(e.identities.iter().map(|i| &i.ty))
}

/// Wasserstein-1 distance under the discrete metric, i.e. total variation
/// over the merged atom set.
pub fn w1_discrete(mu: &EmpiricalDistribution, nu: &EmpiricalDistribution) -> f64 {
    let atoms: BTreeSet<&IdentityType> = mu.counts.keys().chain(nu.counts.keys()).collect();
    0.5 * atoms
        .into_iter()
        .map(|t| (mu.weight(t) - nu.weight(t)).abs())
        .sum::<f64>()
}

/// `s_{p,n} = |C_p| / n`.
pub fn identity_share(principal: &str, e: &Economy) -> Result<f64> {
    let owned = e.owned_by(principal).len();
    if owned == 0 {
        return Err(Error::UnknownPrincipal(principal.to_string()));
    }
    Ok(owned as f64 / e.n() as f64)
}

/// Per-principal sums of expected bundles.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAggregate {
    pub totals: BTreeMap<String, Vec<f64>>,
    /// Requested principals that own no identity; their total is zero.
    pub empty: Vec<String>,
}

/// Sums expected allocations over each principal's identities.
pub fn aggregate_by_principal(x: &[Lottery], e: &Economy) -> Result<PrincipalAggregate> {
    let principals: Vec<String> = e.principals().into_iter().map(String::from).collect();
    aggregate_for(x, e, &principals)
}

/// Like [`aggregate_by_principal`] but over an explicit principal list, so
/// principals without identities show up as flagged zero vectors.
pub fn aggregate_for(x: &[Lottery], e: &Economy, principals: &[String]) -> Result<PrincipalAggregate> {
    if x.len() != e.n() {
        let missing = e
            .identities
            .get(x.len())
            .map_or_else(|| "<extra allocation entry>".to_string(), |i| i.id.clone());
        return Err(Error::UnknownIdentity(missing));
    }
    let mut totals: BTreeMap<String, Vec<f64>> =
        principals.iter().map(|p| (p.clone(), vec![0.0; e.m()])).collect();
    for (ident, lot) in e.identities.iter().zip(x) {
        if lot.dim() != e.m() {
            return Err(Error::DimensionMismatch { expected: e.m(), actual: lot.dim() });
        }
        let acc = totals.entry(ident.principal.clone()).or_insert_with(|| vec![0.0; e.m()]);
        for (a, v) in acc.iter_mut().zip(lot.expectation()) {
            *a += v;
        }
    }
    let empty = principals
        .iter()
        .filter(|p| e.owned_by(p).is_empty())
        .cloned()
        .collect();
    Ok(PrincipalAggregate { totals, empty })
}

/// What a Sybil attack does to the base economy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Split,
    Misreport,
    MassSequenceStep,
}

/// One identity produced by a split or misreport.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replacement {
    pub id: String,
    /// Fraction of the original endowment carried by this identity.
    pub share: f64,
    pub ty: IdentityType,
}

/// A structured perturbation of an economy attributable to one principal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SybilAttack {
    pub principal: String,
    pub kind: AttackKind,
    /// Original identity id to the identities replacing it.
    pub replacements: BTreeMap<String, Vec<Replacement>>,
    /// Fresh identities appended outright (mass-sequence steps).
    #[serde(default)]
    pub additions: Vec<(String, IdentityType)>,
    pub alpha: f64,
}

impl SybilAttack {
    pub fn empty(principal: &str) -> Self {
        SybilAttack {
            principal: principal.to_string(),
            kind: AttackKind::Misreport,
            replacements: BTreeMap::new(),
            additions: Vec::new(),
            alpha: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.replacements.is_empty() && self.additions.is_empty()
    }
}

/// Infiltration rate, measured against the pre-attack identity count.
///
/// A split of one identity into `r >= 2` identities contributes `r - 1` new
/// identities; a one-for-one replacement with a different type counts as one
/// retyped identity; appended Sybils count one each.
pub fn infiltration_rate(a: &SybilAttack, e: &Economy) -> Result<f64> {
    let mut changed = 0usize;
    for (id, reps) in &a.replacements {
        let k = e.index_of(id).ok_or_else(|| Error::UnknownIdentity(id.clone()))?;
        changed += match reps.len() {
            0 => 0,
            1 => usize::from(reps[0].ty != e.identities[k].ty),
            r => r - 1,
        };
    }
    changed += a.additions.len();
    Ok(changed as f64 / e.n() as f64)
}
