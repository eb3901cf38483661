//! Building and applying Sybil attacks.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::economy::{
    infiltration_rate, AttackKind, Bundle, Economy, EndowmentCheck, Identity, IdentityType, Lottery,
    Replacement, SybilAttack, WeakOrder, PROB_TOL,
};
use crate::error::{Error, Result};
use crate::experiments::{Baseline, EvalConfig, GainMeasure};

/// Applies `a` to `e`, producing the post-attack economy.
///
/// Replaced identities must belong to the attacking principal, replacement
/// shares must sum to one and the replacements' expected endowments must add
/// back up to the original. Appended identities may carry arbitrary reported
/// endowments, so the result then skips the capacity check.
pub fn apply_attack(e: &Economy, a: &SybilAttack) -> Result<Economy> {
    let owned: BTreeSet<usize> = e.owned_by(&a.principal).into_iter().collect();
    if owned.is_empty() && a.additions.is_empty() {
        return Err(Error::UnknownPrincipal(a.principal.clone()));
    }
    for (id, reps) in &a.replacements {
        let k = e.index_of(id).ok_or_else(|| Error::UnknownIdentity(id.clone()))?;
        if !owned.contains(&k) {
            return Err(Error::InvalidAttack(format!(
                "identity `{id}` belongs to `{}`, not `{}`",
                e.identities()[k].principal,
                a.principal
            )));
        }
        check_replacements(&e.identities()[k], reps)?;
    }

    let mut identities = Vec::with_capacity(e.n() + a.additions.len());
    for ident in e.identities() {
        match a.replacements.get(&ident.id) {
            Some(reps) => identities.extend(reps.iter().map(|r| Identity {
                id: r.id.clone(),
                principal: a.principal.clone(),
                ty: r.ty.clone(),
            })),
            None => identities.push(ident.clone()),
        }
    }
    identities.extend(a.additions.iter().map(|(id, ty)| Identity {
        id: id.clone(),
        principal: a.principal.clone(),
        ty: ty.clone(),
    }));
    let check = if a.additions.is_empty() { e.endowment_check() } else { EndowmentCheck::Unchecked };
    e.with_identities(identities, check)
}

fn check_replacements(orig: &Identity, reps: &[Replacement]) -> Result<()> {
    if reps.is_empty() {
        return Err(Error::InvalidAttack(format!("identity `{}` replaced by nothing", orig.id)));
    }
    if reps.iter().any(|r| !(r.share >= 0.0 && r.share <= 1.0)) {
        return Err(Error::InvalidAttack("replacement shares must lie in [0, 1]".into()));
    }
    let share: f64 = reps.iter().map(|r| r.share).sum();
    if (share - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidAttack(format!("shares for `{}` sum to {share}", orig.id)));
    }
    let mut total = vec![0.0; orig.ty.dim()];
    for r in reps {
        if r.ty.dim() != total.len() {
            return Err(Error::DimensionMismatch { expected: total.len(), actual: r.ty.dim() });
        }
        for (t, x) in total.iter_mut().zip(r.ty.endowment.expectation()) {
            *t += x;
        }
    }
    let want = orig.ty.endowment.expectation();
    if total.iter().zip(&want).any(|(a, b)| (a - b).abs() > 1e-9) {
        return Err(Error::InvalidAttack(format!(
            "replacements of `{}` carry endowment {total:?}, original {want:?}",
            orig.id
        )));
    }
    Ok(())
}

/// Splits identity `id` into pieces, each with a share of the original
/// endowment and its own order. Bundles of the thinned endowment missing from
/// a piece's order are appended as its bottom class.
pub fn split_identity(
    e: &Economy,
    id: &str,
    pieces: &[(String, f64, WeakOrder)],
) -> Result<SybilAttack> {
    let k = e.index_of(id).ok_or_else(|| Error::UnknownIdentity(id.to_string()))?;
    let orig = &e.identities()[k];
    let reps = pieces
        .iter()
        .map(|(rid, share, order)| {
            let endow = orig.ty.endowment.thinned(*share)?;
            Ok(Replacement {
                id: rid.clone(),
                share: *share,
                ty: IdentityType::with_endowment_only(endow, order.clone())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut a = SybilAttack {
        principal: orig.principal.clone(),
        kind: AttackKind::Split,
        replacements: BTreeMap::from([(id.to_string(), reps)]),
        additions: Vec::new(),
        alpha: 0.0,
    };
    a.alpha = infiltration_rate(&a, e)?;
    Ok(a)
}

/// Principal retypes identities it owns, one for one. Endowments must stay
/// as they were unless `allow_endowment_misreport` is set.
pub fn misreport_attack(
    e: &Economy,
    principal: &str,
    retypes: &[(String, IdentityType)],
    allow_endowment_misreport: bool,
) -> Result<SybilAttack> {
    let mut replacements = BTreeMap::new();
    for (id, ty) in retypes {
        let k = e.index_of(id).ok_or_else(|| Error::UnknownIdentity(id.clone()))?;
        let orig = &e.identities()[k];
        if orig.principal != principal {
            return Err(Error::InvalidAttack(format!(
                "identity `{id}` belongs to `{}`, not `{principal}`",
                orig.principal
            )));
        }
        if !allow_endowment_misreport && ty.endowment != orig.ty.endowment {
            return Err(Error::InvalidAttack(format!("misreport of `{id}` changes its endowment")));
        }
        replacements.insert(id.clone(), vec![Replacement { id: id.clone(), share: 1.0, ty: ty.clone() }]);
    }
    let mut a = SybilAttack {
        principal: principal.to_string(),
        kind: AttackKind::Misreport,
        replacements,
        additions: Vec::new(),
        alpha: 0.0,
    };
    a.alpha = infiltration_rate(&a, e)?;
    Ok(a)
}

/// The economy after `principal` retypes the given identities.
pub fn coordinated_misreport(
    e: &Economy,
    principal: &str,
    retypes: &[(String, IdentityType)],
) -> Result<Economy> {
    apply_attack(e, &misreport_attack(e, principal, retypes, false)?)
}

/// Type of a mass-sequence Sybil: reports owning one unit of `good` with
/// probability `beta` and wants exactly that unit.
pub fn phantom_type(m: usize, good: usize, beta: f64) -> Result<IdentityType> {
    if good >= m {
        return Err(Error::Precondition(format!("good {good} out of range")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Precondition(format!("beta {beta} must lie in (0, 1]")));
    }
    let unit = Bundle::unit(m, good);
    let zero = Bundle::zeros(m);
    let endow = Lottery::new(vec![(unit.clone(), beta), (zero.clone(), 1.0 - beta)])?;
    let order = if beta < 1.0 {
        WeakOrder::strict(vec![unit, zero])?
    } else {
        WeakOrder::strict(vec![unit])?
    };
    IdentityType::new(endow, order)
}

/// `k` phantom Sybils on `good` appended to `e` under `principal`.
pub fn phantom_attack(e: &Economy, principal: &str, good: usize, beta: f64, k: usize) -> Result<SybilAttack> {
    let ty = phantom_type(e.m(), good, beta)?;
    let additions = (0..k).map(|r| (format!("{principal}-s{r}"), ty.clone())).collect();
    let mut a = SybilAttack {
        principal: principal.to_string(),
        kind: AttackKind::MassSequenceStep,
        replacements: BTreeMap::new(),
        additions,
        alpha: 0.0,
    };
    a.alpha = infiltration_rate(&a, e)?;
    Ok(a)
}

/// One economy of an unbounded Sybil sequence with its Sybil set `S_k`.
#[derive(Debug, Clone)]
pub struct SequenceStep {
    pub economy: Economy,
    pub sybils: BTreeSet<String>,
}

impl SequenceStep {
    /// `|S_k| / |N_k|`.
    pub fn sybil_share(&self) -> f64 {
        self.sybils.len() as f64 / self.economy.n() as f64
    }
}

/// Lazily builds the economies of an unbounded Sybil sequence, one per entry
/// of the strictly increasing `schedule` of Sybil counts.
pub fn unbounded_sybil_sequence<'a>(
    base: &'a Economy,
    principal: &'a str,
    schedule: &'a [usize],
    good: usize,
    beta: f64,
) -> Result<impl Iterator<Item = Result<SequenceStep>> + 'a> {
    if schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("schedule must be strictly increasing".into()));
    }
    phantom_type(base.m(), good, beta)?;
    Ok(schedule.iter().map(move |&k| {
        let a = phantom_attack(base, principal, good, beta, k)?;
        let sybils = a.additions.iter().map(|(id, _)| id.clone()).collect();
        Ok(SequenceStep { economy: apply_attack(base, &a)?, sybils })
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Splits,
    Misreports,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    Exhaustive,
    /// Uniform sampling of distinct candidates.
    Random { draws: usize },
}

/// Candidate deviations of one principal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackFamily {
    pub kind: FamilyKind,
    pub principal: String,
    pub candidates: Vec<SybilAttack>,
    pub search: SearchMode,
}

impl AttackFamily {
    pub fn new(kind: FamilyKind, principal: &str, candidates: Vec<SybilAttack>, search: SearchMode) -> Result<Self> {
        for a in &candidates {
            if a.principal != principal {
                return Err(Error::InvalidAttack(format!("candidate belongs to `{}`, not `{principal}`", a.principal)));
            }
            let ok = a.is_empty()
                || matches!((kind, a.kind), (FamilyKind::Splits, AttackKind::Split) | (FamilyKind::Misreports, AttackKind::Misreport));
            if !ok {
                return Err(Error::InvalidAttack(format!("{:?} candidate in a {kind:?} family", a.kind)));
            }
        }
        Ok(AttackFamily { kind, principal: principal.to_string(), candidates, search })
    }

    /// Checks every candidate applies to `e`.
    pub fn validate(&self, e: &Economy) -> Result<()> {
        self.candidates.iter().try_for_each(|a| apply_attack(e, a).map(|_| ()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: Option<SybilAttack>,
    pub best_index: Option<usize>,
    pub best_gain: f64,
    pub evaluated: usize,
    /// Candidates whose post-attack solve did not converge.
    pub skipped: usize,
    /// `(candidate index, gain)` for every evaluated candidate.
    pub gains: Vec<(usize, Option<f64>)>,
}

/// Searches `fam` for the deviation with the largest gain, evaluating at
/// most `budget` candidates. All candidates share the base solve and its
/// relaxation draws; `seed` only drives random sampling.
pub fn attack_search(
    e: &Economy,
    fam: &AttackFamily,
    measure: GainMeasure,
    budget: usize,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<SearchOutcome> {
    fam.validate(e)?;
    let mut idx: Vec<usize> = (0..fam.candidates.len()).collect();
    let take = match fam.search {
        SearchMode::Exhaustive => budget,
        SearchMode::Random { draws } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            idx.shuffle(&mut rng);
            draws.min(budget)
        }
    };
    idx.truncate(take);
    let base = Baseline::new(e, cfg, false)?;
    if !base.equilibrium.converged {
        return Err(Error::Precondition("base economy did not converge".into()));
    }
    let gains: Vec<(usize, Option<f64>)> = idx
        .par_iter()
        .map(|&k| {
            let a = &fam.candidates[k];
            if a.is_empty() {
                return Ok((k, Some(0.0)));
            }
            let attacked = apply_attack(e, a)?;
            let eq = base.solve_attacked(&attacked, &cfg.solver)?;
            if !eq.converged {
                return Ok((k, None));
            }
            Ok((k, Some(base.gains(&attacked, &fam.principal, &eq.prices, cfg)?.get(measure))))
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(usize, f64)> = None;
    for &(k, g) in &gains {
        if let Some(g) = g {
            if best.map_or(true, |(_, b)| g > b) {
                best = Some((k, g));
            }
        }
    }
    Ok(SearchOutcome {
        best: best.map(|(k, _)| fam.candidates[k].clone()),
        best_index: best.map(|(k, _)| k),
        best_gain: best.map_or(f64::NEG_INFINITY, |(_, g)| g),
        evaluated: gains.len(),
        skipped: gains.iter().filter(|g| g.1.is_none()).count(),
        gains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical;

    #[test]
    fn split_conserves_endowment() {
        let e = canonical::example_one(0.05);
        let attacked = apply_attack(&e, &canonical::example_one_split()).unwrap();
        assert_eq!(attacked.n(), 4);
        assert_eq!(attacked.total_endowment(), e.total_endowment());
        assert_eq!(attacked.owned_by("P").len(), 2);
    }

    #[test]
    fn split_helper_matches_fixture() {
        let e = canonical::example_one(0.05);
        let a = split_identity(
            &e,
            "1",
            &[
                ("1a".into(), 0.5, WeakOrder::strict(vec![Bundle::unit(4, 0)]).unwrap()),
                ("1b".into(), 0.5, WeakOrder::strict(vec![Bundle::unit(4, 1)]).unwrap()),
            ],
        )
        .unwrap();
        assert_eq!(a, canonical::example_one_split());
    }

    #[test]
    fn shares_must_sum_to_one() {
        let e = canonical::example_one(0.05);
        let mut a = canonical::example_one_split();
        a.replacements.get_mut("1").unwrap()[0].share = 0.7;
        assert!(matches!(apply_attack(&e, &a), Err(Error::InvalidAttack(_))));
    }

    #[test]
    fn cannot_retype_foreign_identity() {
        let e = canonical::example_one(0.05);
        let t = e.identities()[1].ty.clone();
        assert!(coordinated_misreport(&e, "P", &[("2".into(), t.clone())]).is_err());
        let a = misreport_attack(&e, "Q2", &[("2".into(), t.clone())], false).unwrap();
        assert_eq!(a.alpha, 0.0);
        assert_eq!(coordinated_misreport(&e, "Q2", &[("2".into(), t)]).unwrap(), e);
        let mut stolen = canonical::example_one_split();
        stolen.principal = "Q2".into();
        assert!(apply_attack(&e, &stolen).is_err());
    }

    #[test]
    fn misreport_counts_changed_identities() {
        let e = canonical::self_demand(4, 0.1);
        let other = e.identities()[0].ty.endowment.clone();
        let wider = WeakOrder::strict(vec![Bundle::unit(4, 1), Bundle::unit(4, 0)]).unwrap();
        let t = IdentityType::new(other, wider).unwrap();
        let a = misreport_attack(&e, "P0", &[("i0".into(), t)], false).unwrap();
        assert!((a.alpha - 0.25).abs() < 1e-12);
        let attacked = apply_attack(&e, &a).unwrap();
        assert_eq!(attacked.n(), 4);
    }

    #[test]
    fn phantom_sequence_appends_identities() {
        let e = canonical::self_demand(3, 0.1);
        let a = phantom_attack(&e, "P0", 0, 0.5, 6).unwrap();
        assert!((a.alpha - 2.0).abs() < 1e-12);
        let attacked = apply_attack(&e, &a).unwrap();
        assert_eq!(attacked.n(), 9);
        assert_eq!(attacked.owned_by("P0").len(), 7);
        assert!((attacked.total_endowment()[0] - 4.0).abs() < 1e-12);
        assert!(phantom_type(3, 5, 0.5).is_err());
        assert!(phantom_type(3, 0, 0.0).is_err());
    }

    #[test]
    fn sequence_shares_increase_to_one() {
        let e = canonical::example_one(0.1);
        let steps: Vec<SequenceStep> = unbounded_sybil_sequence(&e, "P", &[1, 2, 4, 8], 0, 0.5)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        let shares: Vec<f64> = steps.iter().map(SequenceStep::sybil_share).collect();
        let want = [1.0 / 4.0, 2.0 / 5.0, 4.0 / 7.0, 8.0 / 11.0];
        for (s, w) in shares.iter().zip(want) {
            assert!((s - w).abs() < 1e-12);
        }
        assert_eq!(steps[3].sybils.len(), 8);
        assert!(unbounded_sybil_sequence(&e, "P", &[2, 2], 0, 0.5).is_err());
        assert_eq!(unbounded_sybil_sequence(&e, "P", &[5], 0, 0.5).unwrap().count(), 1);
    }

    #[test]
    fn retyping_whole_principal_moves_its_share() {
        let e = canonical::self_demand(10, 0.1);
        let idents: Vec<Identity> = e
            .identities()
            .iter()
            .enumerate()
            .map(|(k, i)| Identity { principal: if k < 3 { "S".into() } else { i.principal.clone() }, ..i.clone() })
            .collect();
        let e = e.with_identities(idents, EndowmentCheck::Exact).unwrap();
        let retypes: Vec<(String, IdentityType)> = (0..3)
            .map(|k| {
                let own = Bundle::unit(10, k);
                let order = WeakOrder::strict(vec![Bundle::unit(10, 9), own.clone()]).unwrap();
                (format!("i{k}"), IdentityType::new(Lottery::degenerate(own), order).unwrap())
            })
            .collect();
        let after = coordinated_misreport(&e, "S", &retypes).unwrap();
        let w = crate::economy::w1_discrete(
            &crate::economy::empirical_distribution(&e),
            &crate::economy::empirical_distribution(&after),
        );
        assert!((w - 0.3).abs() < 1e-12);
        assert!((crate::economy::identity_share("S", &e).unwrap() - 0.3).abs() < 1e-12);
    }

    fn example_one_family(search: SearchMode) -> AttackFamily {
        let mut split = canonical::example_one_split();
        split.kind = AttackKind::Split;
        AttackFamily::new(FamilyKind::Splits, "P", vec![SybilAttack::empty("P"), split], search).unwrap()
    }

    #[test]
    fn search_over_empty_family_member() {
        let e = canonical::example_one(0.05);
        let fam = AttackFamily::new(FamilyKind::Splits, "P", vec![SybilAttack::empty("P")], SearchMode::Exhaustive).unwrap();
        let r = attack_search(&e, &fam, GainMeasure::Realized, 10, &EvalConfig::default(), 0).unwrap();
        assert_eq!(r.best_gain, 0.0);
        assert_eq!(r.evaluated, 1);
    }

    #[test]
    fn example_one_split_is_selected() {
        let e = canonical::example_one(0.05);
        let r = attack_search(&e, &example_one_family(SearchMode::Exhaustive), GainMeasure::Realized, 2, &EvalConfig::default(), 0)
            .unwrap();
        assert_eq!(r.best_index, Some(1));
        assert!(r.best_gain > 0.0);
    }

    #[test]
    fn family_rejects_foreign_candidates() {
        assert!(AttackFamily::new(FamilyKind::Splits, "Q2", vec![canonical::example_one_split()], SearchMode::Exhaustive).is_err());
    }
}
