//! Excess demand, projected tâtonnement, clearing checks and bad-region
//! detection.
//!
//! Prices follow `p <- Π(p + η (Z(p) − δc))` where `Z` is aggregate expected
//! demand minus capacity. A price is accepted as an equilibrium when `Z − δc`
//! lies within `tol` of the normal cone of the simplex at `p`: every priced
//! good carries the same clearing gap, up to `tol`, and no good exceeds it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::{sample_budget_relaxations, BudgetProfile, PricedType};
use crate::economy::{Economy, Lottery};
use crate::error::{Error, Result};
use crate::price::{dot, euclidean, project_simplex, PriceVector};
use crate::sybil::SequenceStep;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eta0: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Extra random starts tried after the uniform start fails.
    pub restarts: usize,
    pub mc_draws: usize,
    pub seed: u64,
    /// Threshold for treating a price as positive.
    pub tol_p: f64,
    /// Step size below which the iteration is abandoned.
    pub min_eta: f64,
    /// Iterations without a new best residual before giving up.
    pub patience: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eta0: 0.1,
            tol: 1e-4,
            max_iter: 100_000,
            restarts: 3,
            mc_draws: 32,
            seed: 0,
            tol_p: 1e-3,
            min_eta: 1e-12,
            patience: 5_000,
        }
    }
}

/// Fixed budget-relaxation draws shared by every price evaluation of a solve.
pub fn relaxation_draws(n: usize, delta: f64, count: usize, seed: u64, stream: u64) -> Result<Vec<BudgetProfile>> {
    if count == 0 {
        return Err(Error::Precondition("mc_draws must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..count).map(|_| sample_budget_relaxations(n, delta, &mut rng)).collect()
}

fn priced_types<'a>(e: &'a Economy, p: &PriceVector) -> Result<Vec<PricedType<'a>>> {
    if p.dim() != e.m() {
        return Err(Error::DimensionMismatch { expected: e.m(), actual: p.dim() });
    }
    e.identities()
        .iter()
        .map(|i| {
            PricedType::new(&i.ty, p).map_err(|err| match err {
                Error::InvalidType { reason, .. } => Error::InvalidType { id: i.id.clone(), reason },
                other => other,
            })
        })
        .collect()
}

/// Money value of one unit of relaxation share at `p`: `p · c`.
fn money_scale(e: &Economy, p: &PriceVector) -> f64 {
    dot(p.as_slice(), &e.capacity_f64())
}

/// `Z(p) = mean over draws of Σ_i E[x_i] − c` with the given draws.
pub fn excess_demand_with(e: &Economy, p: &PriceVector, draws: &[BudgetProfile]) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(Error::Precondition("mc_draws must be >= 1".into()));
    }
    if let Some(d) = draws.iter().find(|d| d.len() != e.n()) {
        return Err(Error::DimensionMismatch { expected: e.n(), actual: d.len() });
    }
    let types = priced_types(e, p)?;
    let scale = money_scale(e, p);
    let w = 1.0 / draws.len() as f64;
    let mut z = vec![0.0; e.m()];
    for d in draws {
        for (t, &b) in types.iter().zip(d.relaxations()) {
            t.add_expected(b * scale, w, &mut z);
        }
    }
    for (zj, c) in z.iter_mut().zip(e.capacity()) {
        *zj -= *c as f64;
    }
    Ok(z)
}

/// Expected excess demand averaged over `mc_draws` relaxation draws.
pub fn excess_demand(e: &Economy, p: &PriceVector, mc_draws: usize, seed: u64) -> Result<Vec<f64>> {
    let draws = relaxation_draws(e.n(), e.delta(), mc_draws, seed, 0)?;
    excess_demand_with(e, p, &draws)
}

/// Per-identity demand lotteries averaged over the draws.
pub fn allocation_with(e: &Economy, p: &PriceVector, draws: &[BudgetProfile]) -> Result<Vec<Lottery>> {
    let types = priced_types(e, p)?;
    let scale = money_scale(e, p);
    let w = 1.0 / draws.len() as f64;
    types
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut parts = Vec::new();
            for d in draws {
                t.fill(d.relaxations()[i] * scale, |b, q| parts.push((b.clone(), q * w)));
            }
            let total: f64 = parts.iter().map(|(_, q)| q).sum();
            parts.iter_mut().for_each(|(_, q)| *q /= total);
            Lottery::new(parts)
        })
        .collect()
}

fn gap(e: &Economy, z: &[f64]) -> Vec<f64> {
    z.iter().zip(e.capacity()).map(|(zj, &c)| zj - e.delta() * c as f64).collect()
}

/// Clearing gap measured against the common level `λ`.
///
/// Goods with `p_j > tol_p` must sit at `λ`; cheaper goods may fall short of
/// it but not exceed it. `λ` is chosen so the deviations sum to zero, which
/// makes the deviation vector the projection of `g` onto the tangent cone of
/// the simplex at `p`, and zero exactly at fixed points of the update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearingGap {
    /// Largest deviation, in units of goods.
    pub max: f64,
    /// Euclidean norm of the deviations.
    pub norm: f64,
    pub level: f64,
}

pub fn clearing_gap(p: &[f64], g: &[f64], tol_p: f64) -> ClearingGap {
    let free = |j: usize| p[j] > tol_p;
    let dev = |j: usize, lam: f64| if free(j) { g[j] - lam } else { (g[j] - lam).max(0.0) };
    let total = |lam: f64| (0..g.len()).map(|j| dev(j, lam)).sum::<f64>();
    let lo0 = g.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi0 = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (lo0 - 1.0, hi0 + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + hi0.abs().max(lo0.abs())) {
            break;
        }
    }
    let level = 0.5 * (lo + hi);
    let d: Vec<f64> = (0..g.len()).map(|j| dev(j, level)).collect();
    ClearingGap {
        max: d.iter().fold(0.0, |a, x| a.max(x.abs())),
        norm: d.iter().map(|x| x * x).sum::<f64>().sqrt(),
        level,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub prices: PriceVector,
    pub allocation: Vec<Lottery>,
    /// Largest clearing deviation at the final prices (see [`clearing_gap`]).
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
    /// `Z(p)` at the final prices.
    pub excess: Vec<f64>,
    /// Whether `Σ E[x]_j = (1+δ)c_j` holds on every priced good, not just a
    /// common gap.
    pub exact_clearing: bool,
    /// Euclidean clearing deviation after each accepted step, starting with
    /// the initial point.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

struct Run {
    p: Vec<f64>,
    z: Vec<f64>,
    residual: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

const WINDOW: usize = 10;

fn iterate(e: &Economy, start: Vec<f64>, cfg: &SolverConfig, draws: &[BudgetProfile]) -> Result<Run> {
    let eval = |p: &[f64]| -> Result<(Vec<f64>, ClearingGap)> {
        let z = excess_demand_with(e, &PriceVector::projected(p), draws)?;
        let c = clearing_gap(p, &gap(e, &z), cfg.tol_p);
        Ok((z, c))
    };
    let mut p = start;
    let (mut z, mut c) = eval(&p)?;
    let mut trace = vec![c.norm];
    let mut eta = cfg.eta0;
    let mut it = 0;
    let (mut best, mut best_at) = (c.norm, 0);
    while c.max > cfg.tol && it < cfg.max_iter && eta >= cfg.min_eta && it - best_at <= cfg.patience {
        it += 1;
        let g = gap(e, &z);
        let v: Vec<f64> = p.iter().zip(&g).map(|(a, b)| a + eta * b).collect();
        let cand = project_simplex(&v);
        let (zc, cc) = eval(&cand)?;
        // compare against the worst of the recent accepted values, so the
        // iteration can cross kinks of the sampled demand
        let reference = trace[trace.len().saturating_sub(WINDOW)..].iter().cloned().fold(c.norm, f64::max);
        if cc.norm < reference * (1.0 - 1e-9) {
            p = cand;
            z = zc;
            c = cc;
            trace.push(c.norm);
            eta = (eta * 1.25).min(cfg.eta0);
            if c.norm < best {
                best = c.norm;
                best_at = it;
            }
        } else {
            eta *= 0.5;
        }
    }
    Ok(Run { converged: c.max <= cfg.tol, p, z, residual: c.max, iterations: it, trace })
}

fn random_start(m: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_57a7);
    rng.set_stream(stream);
    let x: Vec<f64> = (0..m).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = x.iter().sum();
    x.iter().map(|v| v / s).collect()
}

fn finish(e: &Economy, run: Run, restarts_used: usize, cfg: &SolverConfig, draws: &[BudgetProfile]) -> Result<EquilibriumResult> {
    let prices = PriceVector::projected(&run.p);
    let allocation = allocation_with(e, &prices, draws)?;
    let g = gap(e, &run.z);
    let exact_clearing = g
        .iter()
        .zip(prices.as_slice())
        .all(|(&v, &pj)| v <= cfg.tol && (pj <= cfg.tol_p || v.abs() <= cfg.tol));
    Ok(EquilibriumResult {
        prices,
        allocation,
        residual: run.residual,
        iterations: run.iterations,
        converged: run.converged,
        restarts_used,
        excess: run.z,
        exact_clearing,
        trace: run.trace,
    })
}

/// Tâtonnement from a given start with the draws implied by `cfg.seed`.
pub fn solve_from(e: &Economy, start: &PriceVector, cfg: &SolverConfig) -> Result<EquilibriumResult> {
    check_config(cfg)?;
    if start.dim() != e.m() {
        return Err(Error::DimensionMismatch { expected: e.m(), actual: start.dim() });
    }
    let draws = relaxation_draws(e.n(), e.delta(), cfg.mc_draws, cfg.seed, 0)?;
    let run = iterate(e, start.as_slice().to_vec(), cfg, &draws)?;
    finish(e, run, 0, cfg, &draws)
}

fn check_config(cfg: &SolverConfig) -> Result<()> {
    if !(cfg.eta0 > 0.0 && cfg.tol > 0.0) {
        return Err(Error::Precondition("eta0 and tol must be positive".into()));
    }
    if cfg.mc_draws == 0 {
        return Err(Error::Precondition("mc_draws must be >= 1".into()));
    }
    Ok(())
}

/// Solves from the uniform price, then from up to `cfg.restarts` random
/// starts until one converges. Returns the best run found.
pub fn solve_brace(e: &Economy, cfg: &SolverConfig) -> Result<EquilibriumResult> {
    check_config(cfg)?;
    let draws = relaxation_draws(e.n(), e.delta(), cfg.mc_draws, cfg.seed, 0)?;
    let mut best = iterate(e, PriceVector::uniform(e.m()).as_slice().to_vec(), cfg, &draws)?;
    let mut used = 0;
    while !best.converged && used < cfg.restarts {
        used += 1;
        let run = iterate(e, random_start(e.m(), cfg.seed, used as u64), cfg, &draws)?;
        if run.residual < best.residual {
            best = run;
        }
    }
    finish(e, best, used, cfg, &draws)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodClearing {
    pub demand: f64,
    /// `(1+δ) c_j`.
    pub supply: f64,
    /// `supply − demand`.
    pub slack: f64,
    pub priced: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingReport {
    pub goods: Vec<GoodClearing>,
    pub pass: bool,
    /// `Σ_j p_j (demand_j − supply_j)`: the common gap on priced goods.
    pub common_gap: f64,
    /// Every priced good clears with equality.
    pub exact: bool,
}

/// Checks the expected allocation against `(1+δ)c`: no good may be
/// over-demanded, and every priced good must sit at the common gap.
pub fn verify_clearing(e: &Economy, r: &EquilibriumResult, tol: f64, tol_p: f64) -> Result<ClearingReport> {
    if r.allocation.len() != e.n() {
        return Err(Error::DimensionMismatch { expected: e.n(), actual: r.allocation.len() });
    }
    let mut demand = vec![0.0; e.m()];
    for x in &r.allocation {
        for (d, v) in demand.iter_mut().zip(x.expectation()) {
            *d += v;
        }
    }
    let supply: Vec<f64> = e.capacity().iter().map(|&c| (1.0 + e.delta()) * c as f64).collect();
    let gaps: Vec<f64> = demand.iter().zip(&supply).map(|(d, s)| d - s).collect();
    // the common gap is the level fitted by the solver's own cone test
    let common_gap = clearing_gap(r.prices.as_slice(), &gaps, tol_p).level;
    let goods: Vec<GoodClearing> = (0..e.m())
        .map(|j| {
            let priced = r.prices.as_slice()[j] > tol_p;
            let dev = gaps[j] - common_gap;
            let pass = gaps[j] <= tol && if priced { dev.abs() <= tol } else { dev <= tol };
            GoodClearing { demand: demand[j], supply: supply[j], slack: -gaps[j], priced, pass }
        })
        .collect();
    let exact = goods.iter().all(|g| !g.priced || g.slack.abs() <= tol);
    Ok(ClearingReport { pass: goods.iter().all(|g| g.pass), goods, common_gap, exact })
}

/// Smallest (1-based) `k` with `β |S_k| > (1+δ) c_j`.
pub fn feasibility_audit(seq: &[SequenceStep], beta: f64, good: usize, delta: f64) -> Result<Option<usize>> {
    if seq.is_empty() {
        return Err(Error::Precondition("empty sequence".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::Precondition(format!("beta {beta} must be positive")));
    }
    for (k, step) in seq.iter().enumerate() {
        if good >= step.economy.m() {
            return Err(Error::Precondition(format!("good {good} out of range")));
        }
        if let Some(id) = step.sybils.iter().find(|id| step.economy.index_of(id).is_none()) {
            return Err(Error::UnknownIdentity(id.clone()));
        }
        let cap = step.economy.capacity()[good] as f64;
        if beta * step.sybils.len() as f64 > (1.0 + delta) * cap {
            return Ok(Some(k + 1));
        }
    }
    Ok(None)
}

/// γ̂: minimum over pairs of `−⟨Z(p) − Z(q), p − q⟩ / ‖p − q‖²`.
pub fn estimate_gamma(e: &Economy, pairs: &[(PriceVector, PriceVector)], draws: &[BudgetProfile]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Precondition("no price pairs".into()));
    }
    let mut best = f64::INFINITY;
    for (p, q) in pairs {
        let d2 = p.distance(q).powi(2);
        if d2 == 0.0 {
            return Err(Error::Precondition("price pairs must be distinct".into()));
        }
        let zp = excess_demand_with(e, p, draws)?;
        let zq = excess_demand_with(e, q, draws)?;
        let dz: Vec<f64> = zp.iter().zip(&zq).map(|(a, b)| a - b).collect();
        let dp: Vec<f64> = p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| a - b).collect();
        best = best.min(-dot(&dz, &dp) / d2);
    }
    Ok(best)
}

/// Random pairs of prices within `radius` of `center`.
pub fn local_pairs(center: &PriceVector, radius: f64, count: usize, seed: u64) -> Vec<(PriceVector, PriceVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x9a1);
    let m = center.dim();
    let jitter = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = center.as_slice().iter().map(|x| x + radius * (2.0 * rng.gen::<f64>() - 1.0)).collect();
        PriceVector::projected(&v)
    };
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count && tries < 100 * count.max(1) {
        tries += 1;
        let p = jitter(&mut rng);
        let q = jitter(&mut rng);
        if p.distance(&q) > 1e-9 && m > 1 {
            out.push((p, q));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BadRegionReason {
    NonConvergence,
    GammaDegenerate,
    MultipleEquilibria,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadRegionConfig {
    pub solver: SolverConfig,
    /// Number of random starts, at least 3.
    pub restarts: usize,
    pub gamma_min: f64,
    pub spread_threshold: f64,
    pub gamma_pairs: usize,
    pub gamma_radius: f64,
}

impl Default for BadRegionConfig {
    fn default() -> Self {
        BadRegionConfig {
            solver: SolverConfig::default(),
            restarts: 3,
            gamma_min: 1e-6,
            spread_threshold: 0.05,
            gamma_pairs: 20,
            gamma_radius: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadRegionReport {
    pub in_bad_region: bool,
    pub reasons: Vec<BadRegionReason>,
    pub gamma_estimate: f64,
    /// Largest distance between converged restart prices.
    pub price_spread: f64,
    /// Converged result with the smallest residual, if any.
    #[serde(skip)]
    pub equilibrium: Option<EquilibriumResult>,
}

/// Solves from `restarts` random starts and flags non-convergence, spread
/// between converged prices and a degenerate local monotonicity modulus.
pub fn detect_bad_region(e: &Economy, cfg: &BadRegionConfig) -> Result<BadRegionReport> {
    if cfg.restarts < 3 {
        return Err(Error::Precondition("bad-region detection needs at least 3 restarts".into()));
    }
    let scfg = &cfg.solver;
    check_config(scfg)?;
    let draws = relaxation_draws(e.n(), e.delta(), scfg.mc_draws, scfg.seed, 0)?;
    let runs: Vec<Run> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| iterate(e, random_start(e.m(), scfg.seed, 1000 + r as u64), scfg, &draws))
        .collect::<Result<_>>()?;

    let mut reasons = Vec::new();
    if runs.iter().any(|r| !r.converged) {
        reasons.push(BadRegionReason::NonConvergence);
    }
    let converged: Vec<&Run> = runs.iter().filter(|r| r.converged).collect();
    let mut spread: f64 = 0.0;
    for (a, ra) in converged.iter().enumerate() {
        for rb in &converged[a + 1..] {
            spread = spread.max(euclidean(&ra.p, &rb.p));
        }
    }
    if spread > cfg.spread_threshold {
        reasons.push(BadRegionReason::MultipleEquilibria);
    }
    let best = runs
        .into_iter()
        .filter(|r| r.converged)
        .min_by(|a, b| a.residual.total_cmp(&b.residual));
    let center = best.as_ref().map_or_else(|| PriceVector::uniform(e.m()), |r| PriceVector::projected(&r.p));
    let pairs = local_pairs(&center, cfg.gamma_radius, cfg.gamma_pairs, scfg.seed);
    let gamma = if pairs.is_empty() { 0.0 } else { estimate_gamma(e, &pairs, &draws)? };
    if !(gamma >= cfg.gamma_min) {
        reasons.push(BadRegionReason::GammaDegenerate);
    }
    let equilibrium = best.map(|r| finish(e, r, 0, scfg, &draws)).transpose()?;
    Ok(BadRegionReport {
        in_bad_region: !reasons.is_empty(),
        reasons,
        gamma_estimate: gamma,
        price_spread: spread,
        equilibrium,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical;
    use crate::sybil;

    #[test]
    fn self_demand_has_zero_excess() {
        let e = canonical::self_demand(3, 0.0);
        for p in [PriceVector::uniform(3), PriceVector::new(vec![0.6, 0.3, 0.1]).unwrap()] {
            assert_eq!(excess_demand(&e, &p, 5, 1).unwrap(), vec![0.0; 3]);
        }
        assert!(excess_demand(&e, &PriceVector::uniform(3), 0, 1).is_err());
    }

    #[test]
    fn example_one_fringe_goods_clear() {
        let e = canonical::example_one(1e-9);
        let z = excess_demand(&e, &PriceVector::uniform(4), 20, 3).unwrap();
        for j in [0, 2, 3] {
            assert!(z[j].abs() < 1e-12, "{z:?}");
        }
        assert!(z[1] <= 0.0);
    }

    #[test]
    fn self_demand_start_is_a_fixed_point() {
        let e = canonical::self_demand(3, 0.1);
        let start = PriceVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let r = solve_from(&e, &start, &SolverConfig::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert_eq!(r.iterations, 0);
        assert!(r.prices.distance(&start) < 1e-12);
        assert!(r.residual < 1e-12);
    }

    #[test]
    fn one_iteration_is_not_enough_off_equilibrium() {
        let e = canonical::example_one(0.05);
        let cfg = SolverConfig { max_iter: 1, restarts: 0, ..SolverConfig::default() };
        let r = solve_brace(&e, &cfg).unwrap();
        assert!(!r.converged);
        let bad = detect_bad_region(&e, &BadRegionConfig { solver: cfg, ..BadRegionConfig::default() }).unwrap();
        assert!(bad.reasons.contains(&BadRegionReason::NonConvergence));
    }

    #[test]
    fn trace_never_exceeds_recent_maximum() {
        let e = canonical::example_one(0.05);
        for e in [e.clone(), sybil::apply_attack(&e, &canonical::example_one_split()).unwrap()] {
            let r = solve_brace(&e, &SolverConfig::default()).unwrap();
            assert!(r.converged);
            for k in 1..r.trace.len() {
                let window = &r.trace[k.saturating_sub(WINDOW)..k];
                assert!(r.trace[k] < window.iter().cloned().fold(f64::MIN, f64::max));
            }
        }
    }

    #[test]
    fn endowment_allocation_clears_exactly() {
        let e = canonical::self_demand(4, 0.0);
        let r = EquilibriumResult {
            prices: PriceVector::uniform(4),
            allocation: e.identities().iter().map(|i| i.ty.endowment.clone()).collect(),
            residual: 0.0,
            iterations: 0,
            converged: true,
            restarts_used: 0,
            excess: vec![0.0; 4],
            exact_clearing: true,
            trace: vec![],
        };
        let rep = verify_clearing(&e, &r, 1e-9, 1e-3).unwrap();
        assert!(rep.pass && rep.exact);
        assert!(rep.goods.iter().all(|g| g.slack == 0.0));

        let e = canonical::self_demand(4, 0.1);
        let mut over = r.clone();
        // three units of good 0 against (1 + δ)·1 = 1.1 capacity
        over.allocation[1] = Lottery::degenerate(crate::economy::Bundle(vec![2, 0, 0, 0]));
        let rep = verify_clearing(&e, &over, 1e-6, 1e-3).unwrap();
        assert!(!rep.goods[0].pass);
        assert!(!rep.pass);
    }

    #[test]
    fn audit_finds_first_violation() {
        let e = canonical::example_one(0.1);
        let steps: Vec<SequenceStep> = sybil::unbounded_sybil_sequence(&e, "P", &[1, 2, 3, 4, 5], 1, 0.5)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(feasibility_audit(&steps, 0.5, 1, 0.1).unwrap(), Some(3));
        assert_eq!(feasibility_audit(&steps[..2], 0.5, 1, 0.1).unwrap(), None);
        assert!(feasibility_audit(&steps, 0.0, 1, 0.1).is_err());
        assert!(feasibility_audit(&[], 0.5, 1, 0.1).is_err());
    }

    #[test]
    fn gap_level_and_deviation() {
        // interior point: deviations from the mean gap
        let c = clearing_gap(&[0.5, 0.5], &[1.0, 0.0], 1e-3);
        assert!((c.level - 0.5).abs() < 1e-12);
        assert!((c.max - 0.5).abs() < 1e-12);
        // a free good may sit below the common level
        let c = clearing_gap(&[1.0, 0.0], &[0.0, -3.0], 1e-3);
        assert!(c.max < 1e-12 && c.level.abs() < 1e-12);
        // but not above it
        let c = clearing_gap(&[1.0, 0.0], &[0.0, 2.0], 1e-3);
        assert!((c.max - 1.0).abs() < 1e-9);
        // agrees with the unit-step projection residual away from the boundary
        let p = [0.3, 0.3, 0.4];
        let g = [0.01, -0.02, 0.005];
        let v: Vec<f64> = p.iter().zip(&g).map(|(a, b)| a + b).collect();
        let proj = euclidean(&p, &project_simplex(&v));
        assert!((clearing_gap(&p, &g, 1e-3).norm - proj).abs() < 1e-12);
    }

    #[test]
    fn self_demand_is_flagged_bad() {
        let e = canonical::self_demand(3, 0.1);
        let rep = detect_bad_region(&e, &BadRegionConfig::default()).unwrap();
        assert!(rep.in_bad_region);
        assert!(rep.reasons.contains(&BadRegionReason::MultipleEquilibria));
        assert!(rep.reasons.contains(&BadRegionReason::GammaDegenerate));
        assert_eq!(rep.gamma_estimate, 0.0);
        assert!(detect_bad_region(&e, &BadRegionConfig { restarts: 2, ..BadRegionConfig::default() }).is_err());
    }
}
