//! Random type spaces and economies.
//!
//! Generated identities own one unit of a single good and want single units:
//! an ordered list of other goods, then their own. Capacities equal the total
//! endowment, and every good is owned by at least one identity.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::economy::{Bundle, Economy, EndowmentCheck, Identity, IdentityType, Lottery, WeakOrder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub goods: usize,
    /// Size of the type space identities are drawn from.
    pub types: usize,
    /// Longest acceptable list, own good included.
    pub max_list: usize,
    /// Merge everything above the endowment into one indifference class.
    pub two_class: bool,
    pub delta: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { goods: 4, types: 6, max_list: 3, two_class: false, delta: 0.2 }
    }
}

/// Unit-demand type endowed with one unit of `own`.
pub fn random_unit_type<R: Rng + ?Sized>(
    m: usize,
    own: usize,
    max_list: usize,
    two_class: bool,
    rng: &mut R,
) -> Result<IdentityType> {
    if own >= m {
        return Err(Error::Precondition(format!("good {own} out of range")));
    }
    if m < 2 || max_list < 2 {
        return Err(Error::Precondition("need at least two goods and lists of length two".into()));
    }
    let mut others: Vec<usize> = (0..m).filter(|&j| j != own).collect();
    others.shuffle(rng);
    let len = rng.gen_range(1..=(max_list - 1).min(others.len()));
    let above: Vec<Bundle> = others[..len].iter().map(|&j| Bundle::unit(m, j)).collect();
    let mine = Bundle::unit(m, own);
    let order = if two_class {
        WeakOrder::new(vec![above, vec![mine.clone()]])?
    } else {
        let mut list = above;
        list.push(mine.clone());
        WeakOrder::strict(list)?
    };
    IdentityType::new(Lottery::degenerate(mine), order)
}

/// `cfg.types` distinct types; the first `cfg.goods` own goods `0, 1, ...`
/// in turn so every good has an owner type.
pub fn random_type_space<R: Rng + ?Sized>(cfg: &GeneratorConfig, rng: &mut R) -> Result<Vec<IdentityType>> {
    if cfg.types < cfg.goods {
        return Err(Error::Precondition("type space must cover every good".into()));
    }
    let mut out: Vec<IdentityType> = Vec::with_capacity(cfg.types);
    let mut attempts = 0;
    while out.len() < cfg.types {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::Precondition("could not draw enough distinct types".into()));
        }
        let own = if out.len() < cfg.goods { out.len() } else { rng.gen_range(0..cfg.goods) };
        let t = random_unit_type(cfg.goods, own, cfg.max_list, cfg.two_class, rng)?;
        if !out.contains(&t) {
            out.push(t);
        }
    }
    Ok(out)
}

/// Good owned by a generated type.
pub fn owned_good(t: &IdentityType) -> Option<usize> {
    let (b, _) = t.endowment.entries().first()?;
    b.quantities().iter().position(|&q| q > 0)
}

/// `n` identities drawn from `types`, each its own principal. The first
/// identities cycle through the types so every type (and good) appears.
pub fn random_economy<R: Rng + ?Sized>(
    types: &[IdentityType],
    n: usize,
    delta: f64,
    rng: &mut R,
) -> Result<Economy> {
    if types.is_empty() {
        return Err(Error::Precondition("empty type space".into()));
    }
    if n < types.len() {
        return Err(Error::Precondition("n must be at least the number of types".into()));
    }
    let m = types[0].dim();
    let identities: Vec<Identity> = (0..n)
        .map(|k| {
            let ty = if k < types.len() { types[k].clone() } else { types.choose(rng).expect("non-empty").clone() };
            Identity { id: format!("i{k}"), principal: format!("i{k}"), ty }
        })
        .collect();
    let mut capacity = vec![0u32; m];
    for ident in &identities {
        for (c, &q) in capacity.iter_mut().zip(ident.ty.endowment.entries()[0].0.quantities()) {
            *c += q;
        }
    }
    let goods = (0..m).map(|j| format!("g{j}")).collect();
    Economy::new(goods, capacity, identities, delta, EndowmentCheck::Exact)
}

/// Hands `count` randomly chosen identities to `principal`.
pub fn assign_principal<R: Rng + ?Sized>(e: &Economy, principal: &str, count: usize, rng: &mut R) -> Result<Economy> {
    if count > e.n() {
        return Err(Error::Precondition(format!("cannot assign {count} of {} identities", e.n())));
    }
    let mut idx: Vec<usize> = (0..e.n()).collect();
    idx.shuffle(rng);
    let chosen: std::collections::BTreeSet<usize> = idx[..count].iter().copied().collect();
    let identities = e
        .identities()
        .iter()
        .enumerate()
        .map(|(k, i)| {
            let mut i = i.clone();
            if chosen.contains(&k) {
                i.principal = principal.to_string();
            }
            i
        })
        .collect();
    e.with_identities(identities, e.endowment_check())
}

/// A different unit-demand type with the same endowment as `t`.
pub fn random_misreport<R: Rng + ?Sized>(t: &IdentityType, max_list: usize, two_class: bool, rng: &mut R) -> Result<IdentityType> {
    let own = owned_good(t).ok_or_else(|| Error::Precondition("type owns nothing".into()))?;
    let m = t.dim();
    for _ in 0..1000 {
        let cand = random_unit_type(m, own, max_list, two_class, rng)?;
        if &cand != t {
            return Ok(cand);
        }
    }
    Err(Error::Precondition("no distinct misreport available".into()))
}
