//! Small hand-built economies used throughout the tests and the CLI.

use std::collections::BTreeMap;

use crate::economy::{
    AttackKind, Bundle, Economy, EndowmentCheck, Identity, IdentityType, Lottery, Replacement, SybilAttack,
    WeakOrder,
};

const M: usize = 4;

fn goods() -> Vec<String> {
    ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect()
}

fn single(j: usize) -> IdentityType {
    let b = Bundle::unit(M, j);
    IdentityType::new(Lottery::degenerate(b.clone()), WeakOrder::strict(vec![b]).unwrap()).unwrap()
}

/// Three identities over goods A-D with unit capacities. Identity 1 (principal
/// P) owns A and prefers A+B to A; identities 2 and 3 own and want only C and
/// D. Good B is unendowed, so endowments are checked as an upper bound.
pub fn example_one(delta: f64) -> Economy {
    let a = Bundle::unit(M, 0);
    let ab = a.add(&Bundle::unit(M, 1));
    let t1 = IdentityType::new(Lottery::degenerate(a.clone()), WeakOrder::strict(vec![ab, a]).unwrap()).unwrap();
    let identities = vec![
        Identity { id: "1".into(), principal: "P".into(), ty: t1 },
        Identity { id: "2".into(), principal: "Q2".into(), ty: single(2) },
        Identity { id: "3".into(), principal: "Q3".into(), ty: single(3) },
    ];
    Economy::new(goods(), vec![1; M], identities, delta, EndowmentCheck::AtMost).expect("valid fixture")
}

/// P splits identity 1 into "1a" (wants A) and "1b" (wants B), each carrying
/// half of the endowment A.
pub fn example_one_split() -> SybilAttack {
    let half_a = Lottery::degenerate(Bundle::unit(M, 0)).thinned(0.5).unwrap();
    let want_a = WeakOrder::strict(vec![Bundle::unit(M, 0)]).unwrap();
    let want_b = WeakOrder::strict(vec![Bundle::unit(M, 1)]).unwrap();
    let reps = vec![
        Replacement {
            id: "1a".into(),
            share: 0.5,
            ty: IdentityType::with_endowment_only(half_a.clone(), want_a).unwrap(),
        },
        Replacement {
            id: "1b".into(),
            share: 0.5,
            ty: IdentityType::with_endowment_only(half_a, want_b).unwrap(),
        },
    ];
    SybilAttack {
        principal: "P".into(),
        kind: AttackKind::Split,
        replacements: BTreeMap::from([("1".to_string(), reps)]),
        additions: Vec::new(),
        alpha: 1.0 / 3.0,
    }
}

/// `n` identities, each owning one unit of its own good and wanting only it.
pub fn self_demand(n: usize, delta: f64) -> Economy {
    let identities = (0..n)
        .map(|j| {
            let b = Bundle::unit(n, j);
            Identity {
                id: format!("i{j}"),
                principal: format!("P{j}"),
                ty: IdentityType::new(Lottery::degenerate(b.clone()), WeakOrder::strict(vec![b]).unwrap()).unwrap(),
            }
        })
        .collect();
    let goods = (0..n).map(|j| format!("g{j}")).collect();
    Economy::new(goods, vec![1; n], identities, delta, EndowmentCheck::Exact).expect("valid fixture")
}
