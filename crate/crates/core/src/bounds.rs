//! Cardinal utilities, regularity-constant estimators and bound reports.
//!
//! Excess demand enters the estimators per capita, `Z(p, μ) / n`, so that the
//! Lipschitz constant in the type distribution is independent of market size.
//! `L̂_Z / γ̂` is unaffected by the normalization.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::{BudgetProfile, PricedType};
use crate::economy::{empirical_distribution, w1_discrete, Bundle, Economy, WeakOrder};
use crate::error::{Error, Result};
use crate::price::{dot, euclidean, norm, PriceVector};
use crate::solver::{excess_demand_with, relaxation_draws};

/// Score of a bundle outside the identity's acceptable set.
pub const UNACCEPTABLE_SCORE: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityScale {
    Rank,
    Borda,
    Custom,
}

/// vNM scores for one identity's acceptable bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalUtility {
    pub scale: UtilityScale,
    pub scores: BTreeMap<Bundle, f64>,
}

impl CardinalUtility {
    /// Class `j` (0 = best) of `K` scores `(K − 1 − j) / (K − 1)`; a single
    /// class scores 1.
    pub fn rank(order: &WeakOrder) -> Self {
        let k = order.num_classes();
        let per_class: Vec<f64> =
            (0..k).map(|j| if k == 1 { 1.0 } else { (k - 1 - j) as f64 / (k - 1) as f64 }).collect();
        Self::from_classes(order, &per_class, UtilityScale::Rank)
    }

    /// Share of the other bundles ranked strictly below.
    pub fn borda(order: &WeakOrder) -> Self {
        let total: usize = order.classes().iter().map(Vec::len).sum();
        let mut below = total;
        let per_class: Vec<f64> = order
            .classes()
            .iter()
            .map(|c| {
                below -= c.len();
                if total == 1 {
                    1.0
                } else {
                    below as f64 / (total - 1) as f64
                }
            })
            .collect();
        Self::from_classes(order, &per_class, UtilityScale::Borda)
    }

    /// Caller-chosen class scores: strictly decreasing and within `[0, 1]`.
    pub fn custom(order: &WeakOrder, per_class: &[f64]) -> Result<Self> {
        if per_class.len() != order.num_classes() {
            return Err(Error::DimensionMismatch { expected: order.num_classes(), actual: per_class.len() });
        }
        if per_class.iter().any(|s| !(0.0..=1.0).contains(s)) || per_class.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Precondition("class scores must decrease strictly within [0, 1]".into()));
        }
        Ok(Self::from_classes(order, per_class, UtilityScale::Custom))
    }

    fn from_classes(order: &WeakOrder, per_class: &[f64], scale: UtilityScale) -> Self {
        let scores = order
            .classes()
            .iter()
            .zip(per_class)
            .flat_map(|(c, &s)| c.iter().map(move |b| (b.clone(), s)))
            .collect();
        CardinalUtility { scale, scores }
    }

    pub fn score(&self, b: &Bundle) -> f64 {
        self.scores.get(b).copied().unwrap_or(UNACCEPTABLE_SCORE)
    }

    /// Scores agree with the order on every pair of ranked bundles.
    pub fn respects(&self, order: &WeakOrder) -> bool {
        let bundles = order.bundles();
        bundles.iter().all(|x| {
            bundles.iter().all(|y| {
                let (rx, ry) = (order.rank(x), order.rank(y));
                let (sx, sy) = (self.scores.get(x), self.scores.get(y));
                match (rx, ry, sx, sy) {
                    (Some(rx), Some(ry), Some(sx), Some(sy)) => rx.cmp(&ry) == sy.total_cmp(sx),
                    _ => false,
                }
            })
        })
    }
}

/// One utility per identity, built from its own reported order.
pub fn utility_profile(e: &Economy, scale: UtilityScale) -> Vec<CardinalUtility> {
    e.identities()
        .iter()
        .map(|i| match scale {
            UtilityScale::Borda => CardinalUtility::borda(&i.ty.order),
            _ => CardinalUtility::rank(&i.ty.order),
        })
        .collect()
}

/// Expected score of each identity's demand at `p`, averaged over draws.
pub fn identity_utilities_with(
    e: &Economy,
    p: &PriceVector,
    u: &[CardinalUtility],
    draws: &[BudgetProfile],
) -> Result<Vec<f64>> {
    if u.len() != e.n() {
        return Err(Error::DimensionMismatch { expected: e.n(), actual: u.len() });
    }
    if draws.is_empty() {
        return Err(Error::Precondition("mc_draws must be >= 1".into()));
    }
    let scale = dot(p.as_slice(), &e.capacity_f64());
    let w = 1.0 / draws.len() as f64;
    e.identities()
        .iter()
        .enumerate()
        .map(|(i, ident)| {
            let t = PricedType::new(&ident.ty, p)?;
            let mut acc = 0.0;
            for d in draws {
                t.fill(d.relaxations()[i] * scale, |b, q| acc += w * q * u[i].score(b));
            }
            Ok(acc)
        })
        .collect()
}

/// `U_p(p)` with the given draws; zero for a principal owning nothing.
pub fn principal_utility_with(
    e: &Economy,
    principal: &str,
    p: &PriceVector,
    u: &[CardinalUtility],
    draws: &[BudgetProfile],
) -> Result<f64> {
    let owned = e.owned_by(principal);
    if owned.is_empty() {
        return Ok(0.0);
    }
    let all = identity_utilities_with(e, p, u, draws)?;
    Ok(owned.iter().map(|&i| all[i]).sum())
}

/// `U_p(p) = Σ_{i ∈ C_p} E[score_i]`, deterministic given `seed`.
pub fn principal_utility(
    e: &Economy,
    principal: &str,
    p: &PriceVector,
    u: &[CardinalUtility],
    mc_draws: usize,
    seed: u64,
) -> Result<f64> {
    let draws = relaxation_draws(e.n(), e.delta(), mc_draws, seed, 0)?;
    principal_utility_with(e, principal, p, u, &draws)
}

/// Largest absolute utility a principal can reach: `max |score| · |C_p|`.
pub fn utility_range(e: &Economy, principal: &str, u: &[CardinalUtility]) -> f64 {
    let top = u
        .iter()
        .flat_map(|c| c.scores.values())
        .fold(UNACCEPTABLE_SCORE.abs(), |a, s| a.max(s.abs()));
    top * e.owned_by(principal).len() as f64
}

fn per_capita(z: Vec<f64>, n: usize) -> Vec<f64> {
    z.into_iter().map(|x| x / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LzEstimate {
    pub value: f64,
    /// Indices (perturbation, price) attaining the maximum.
    pub witness: (usize, usize),
    pub samples: usize,
}

/// `L̂_Z = max ‖Z(p, μ) − Z(p, ν)‖ / W1(μ, ν)` over perturbations and prices.
pub fn estimate_lz(
    base: &Economy,
    perturbed: &[Economy],
    p_grid: &[PriceVector],
    mc_draws: usize,
    seed: u64,
) -> Result<LzEstimate> {
    let mu = empirical_distribution(base);
    let base_draws = relaxation_draws(base.n(), base.delta(), mc_draws, seed, 0)?;
    let mut best = LzEstimate { value: 0.0, witness: (0, 0), samples: 0 };
    let mut any = false;
    for (a, nu_e) in perturbed.iter().enumerate() {
        let w = w1_discrete(&mu, &empirical_distribution(nu_e));
        if w <= 0.0 {
            continue;
        }
        any = true;
        let draws = relaxation_draws(nu_e.n(), nu_e.delta(), mc_draws, seed, 0)?;
        for (k, p) in p_grid.iter().enumerate() {
            let z0 = per_capita(excess_demand_with(base, p, &base_draws)?, base.n());
            let z1 = per_capita(excess_demand_with(nu_e, p, &draws)?, nu_e.n());
            let ratio = euclidean(&z0, &z1) / w;
            best.samples += 1;
            if ratio > best.value || best.samples == 1 {
                best.value = best.value.max(ratio);
                best.witness = (a, k);
            }
        }
    }
    if !any {
        return Err(Error::Precondition("every perturbation has W1 = 0".into()));
    }
    Ok(best)
}

/// Per-capita strong-monotonicity modulus over the given pairs.
pub fn estimate_gamma(e: &Economy, pairs: &[(PriceVector, PriceVector)], draws: &[BudgetProfile]) -> Result<f64> {
    Ok(crate::solver::estimate_gamma(e, pairs, draws)? / e.n() as f64)
}

/// `max |U_p(p) − U_p(q)| / ‖p − q‖` over random pairs and finite
/// differences along random simplex directions at the grid points.
pub fn estimate_lp(
    e: &Economy,
    principal: &str,
    u: &[CardinalUtility],
    pairs: &[(PriceVector, PriceVector)],
    p_grid: &[PriceVector],
    draws: &[BudgetProfile],
    seed: u64,
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for (p, q) in pairs {
        let d = p.distance(q);
        if d > 0.0 {
            let up = principal_utility_with(e, principal, p, u, draws)?;
            let uq = principal_utility_with(e, principal, q, u, draws)?;
            best = best.max((up - uq).abs() / d);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x1b);
    const H: f64 = 1e-3;
    for p in p_grid {
        let u0 = principal_utility_with(e, principal, p, u, draws)?;
        for _ in 0..4 {
            let mut h: Vec<f64> = (0..p.dim()).map(|_| rng.gen::<f64>() - 0.5).collect();
            let mean = h.iter().sum::<f64>() / h.len() as f64;
            h.iter_mut().for_each(|x| *x -= mean);
            let hn = norm(&h);
            if hn == 0.0 {
                continue;
            }
            let v: Vec<f64> = p.as_slice().iter().zip(&h).map(|(a, b)| a + H * b / hn).collect();
            let q = PriceVector::projected(&v);
            let d = p.distance(&q);
            if d > 0.0 {
                let uq = principal_utility_with(e, principal, &q, u, draws)?;
                best = best.max((uq - u0).abs() / d);
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub lz: usize,
    pub gamma_pairs: usize,
    pub lp_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityEstimates {
    pub l_z_hat: f64,
    /// Clamped at zero; the raw value is kept in `gamma_raw`.
    pub gamma_hat: f64,
    pub gamma_raw: f64,
    pub l_p_hat: BTreeMap<String, f64>,
    pub l_hat: f64,
    pub sample_counts: SampleCounts,
}

impl RegularityEstimates {
    pub fn new(l_z: f64, gamma: f64, l_p: BTreeMap<String, f64>, counts: SampleCounts) -> Self {
        let l_hat = l_p.values().cloned().fold(0.0, f64::max);
        RegularityEstimates {
            l_z_hat: l_z.max(0.0),
            gamma_hat: gamma.max(0.0),
            gamma_raw: gamma,
            l_p_hat: l_p,
            l_hat,
            sample_counts: counts,
        }
    }

    /// `L̂_Z / γ̂`, infinite when γ̂ = 0.
    pub fn price_constant(&self) -> f64 {
        if self.gamma_hat > 0.0 {
            self.l_z_hat / self.gamma_hat
        } else {
            f64::INFINITY
        }
    }

    /// `L̂ · L̂_Z / γ̂`.
    pub fn welfare_constant(&self) -> f64 {
        if self.l_hat == 0.0 {
            0.0
        } else {
            self.l_hat * self.price_constant()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub observed: f64,
    pub bound: f64,
    pub satisfied: bool,
    pub alpha: f64,
    /// Both equilibria converged.
    pub usable: bool,
    pub constants_used: RegularityEstimates,
}

impl BoundReport {
    pub fn new(observed: f64, bound: f64, alpha: f64, usable: bool, constants: RegularityEstimates) -> Self {
        BoundReport { observed, bound, satisfied: observed <= bound + 1e-6, alpha, usable, constants_used: constants }
    }
}

/// Constant times `α`, with `0 · ∞` read as zero.
pub fn scaled_bound(constant: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        0.0
    } else {
        constant * alpha
    }
}

/// `k K n^{−1/2+ε} + (L L_Z / γ)(k / n)`: the system cost that deters a
/// Sybil attack with `k` identities.
pub fn deterrence_threshold(k: usize, n: usize, k_eps: f64, eps: f64, l: f64, l_z: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Precondition(format!("gamma {gamma} must be positive")));
    }
    if n == 0 {
        return Err(Error::Precondition("n must be positive".into()));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Precondition(format!("eps {eps} must lie in (0, 1/2)")));
    }
    let (k, n) = (k as f64, n as f64);
    Ok(k * k_eps * n.powf(-0.5 + eps) + l * l_z / gamma * (k / n))
}

/// `K̂(ε) = max_n gain(n) · n^{1/2 − ε}` from an identity-gain curve.
pub fn fit_k_eps(curve: &[(usize, f64)], eps: f64) -> f64 {
    curve.iter().map(|&(n, g)| g.max(0.0) * (n as f64).powf(0.5 - eps)).fold(0.0, f64::max)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical;
    use crate::economy::{EndowmentCheck, Identity, IdentityType, Lottery};

    #[test]
    fn rank_scores() {
        let o = WeakOrder::new(vec![
            vec![Bundle::unit(3, 0)],
            vec![Bundle::unit(3, 1), Bundle::unit(3, 2)],
            vec![Bundle::zeros(3)],
        ])
        .unwrap();
        let u = CardinalUtility::rank(&o);
        assert_eq!(u.score(&Bundle::unit(3, 0)), 1.0);
        assert_eq!(u.score(&Bundle::unit(3, 2)), 0.5);
        assert_eq!(u.score(&Bundle::zeros(3)), 0.0);
        assert_eq!(u.score(&Bundle(vec![1, 1, 0])), UNACCEPTABLE_SCORE);
        assert!(u.respects(&o));
        let b = CardinalUtility::borda(&o);
        assert!(b.respects(&o));
        assert_eq!(b.score(&Bundle::unit(3, 0)), 1.0);
        assert!(CardinalUtility::custom(&o, &[1.0, 0.6, 0.0]).unwrap().respects(&o));
        assert!(CardinalUtility::custom(&o, &[1.0, 1.0, 0.0]).is_err());
        let single = WeakOrder::strict(vec![Bundle::unit(3, 0)]).unwrap();
        assert_eq!(CardinalUtility::rank(&single).score(&Bundle::unit(3, 0)), 1.0);
    }

    #[test]
    fn principal_utility_cases() {
        let e = canonical::example_one(0.05);
        let u = utility_profile(&e, UtilityScale::Rank);
        assert_eq!(principal_utility(&e, "ghost", &PriceVector::uniform(4), &u, 4, 0).unwrap(), 0.0);
        // identity 2 always gets its only bundle
        assert!((principal_utility(&e, "Q2", &PriceVector::uniform(4), &u, 4, 0).unwrap() - 1.0).abs() < 1e-12);
        // with B free, identity 1 affords A+B outright
        let p = PriceVector::new(vec![1.0 / 3.0, 0.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((principal_utility(&e, "P", &p, &u, 8, 0).unwrap() - 1.0).abs() < 1e-12);
    }

    fn two_identity(retyped: bool) -> Economy {
        let a = Bundle::unit(2, 0);
        let b = Bundle::unit(2, 1);
        let wants_a = IdentityType::new(Lottery::degenerate(a.clone()), WeakOrder::strict(vec![a.clone()]).unwrap()).unwrap();
        let wants_b =
            IdentityType::new(Lottery::degenerate(a.clone()), WeakOrder::strict(vec![b.clone(), a.clone()]).unwrap()).unwrap();
        let other = IdentityType::new(Lottery::degenerate(b.clone()), WeakOrder::strict(vec![b]).unwrap()).unwrap();
        let first = if retyped { wants_b } else { wants_a };
        Economy::new(
            vec!["A".into(), "B".into()],
            vec![1, 1],
            vec![
                Identity { id: "x".into(), principal: "x".into(), ty: first },
                Identity { id: "y".into(), principal: "y".into(), ty: other },
            ],
            0.0,
            EndowmentCheck::Exact,
        )
        .unwrap()
    }

    #[test]
    fn lz_on_two_identities() {
        // at p_B <= p_A the retyped identity swaps A for B: ΔZ/n = (−1, 1)/2,
        // W1 = 1/2, ratio √2
        let base = two_identity(false);
        let alt = two_identity(true);
        let p = PriceVector::new(vec![0.6, 0.4]).unwrap();
        let est = estimate_lz(&base, &[alt], &[p], 4, 1).unwrap();
        assert!((est.value - 2f64.sqrt()).abs() < 1e-12, "{}", est.value);
        assert!(estimate_lz(&base, &[base.clone()], &[PriceVector::uniform(2)], 4, 1).is_err());
    }

    #[test]
    fn deterrence_formula() {
        assert_eq!(deterrence_threshold(0, 100, 1.0, 0.1, 1.0, 1.0, 1.0).unwrap(), 0.0);
        let v = deterrence_threshold(10, 100, 1.0, 0.1, 1.0, 1.0, 1.0).unwrap();
        let want = 10.0 * 100f64.powf(-0.4) + 0.1;
        assert!((v - want).abs() < 1e-12);
        assert!((v - 1.685).abs() < 1e-3);
        assert!(deterrence_threshold(1, 10, 1.0, 0.1, 1.0, 1.0, 0.0).is_err());
        assert!(deterrence_threshold(1, 10, 1.0, 0.5, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]) - 0.8).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), 0.0);
    }

    #[test]
    fn empty_alpha_bound_is_zero() {
        assert_eq!(scaled_bound(f64::INFINITY, 0.0), 0.0);
        let est = RegularityEstimates::new(1.0, 0.0, BTreeMap::new(), SampleCounts::default());
        let r = BoundReport::new(0.0, scaled_bound(est.price_constant(), 0.0), 0.0, true, est);
        assert!(r.satisfied);
    }
}
