//! Combinatorial exchange with budget-relaxed random demand, Sybil attacks
//! and empirical checks of the robustness bounds.

pub mod bounds;
pub mod canonical;
pub mod demand;
pub mod economy;
pub mod error;
pub mod experiments;
pub mod fairness;
pub mod generator;
pub mod harness;
pub mod price;
pub mod solver;
pub mod sybil;

pub use demand::{demand, demand_profile, fosd_compare, price_value, sample_budget_relaxations, BudgetProfile, DemandResult, Dominance};
pub use economy::{
    aggregate_by_principal, build_economy, empirical_distribution, identity_share, infiltration_rate,
    w1_discrete, AttackKind, Bundle, Economy, EconomySpec, EmpiricalDistribution, EndowmentCheck, Identity,
    IdentityType, Lottery, Replacement, SybilAttack, WeakOrder,
};
pub use error::{Error, Result};
pub use price::{project_simplex, PriceVector};
pub use sybil::{apply_attack, coordinated_misreport, misreport_attack, phantom_attack, unbounded_sybil_sequence};
