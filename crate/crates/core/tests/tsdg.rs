//! The tower subalgebra construction on several systems.

use cantor_core::clopen::Clopen;
use cantor_core::crossed::LocFn;
use cantor_core::exact::{q_frac, Q};
use cantor_core::group::FiniteGroupSet;
use cantor_core::system::System;
use cantor_core::towers::{kakutani_rokhlin, urp_towers};
use cantor_core::tsdg::{level_function, random_element, tsdg_construct, tsdg_verify};
use cantor_core::window::OrbitWindow;
use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn sys(j: &str) -> Arc<System> {
    Arc::new(System::from_json(j).unwrap())
}

#[test]
fn level_function_matches_interiors() {
    let nb = FiniteGroupSet::from_z([-1, 0, 1]);
    for k in [10i64, 17, 40] {
        let shape = FiniteGroupSet::interval(0, k - 1);
        let ell = level_function(&shape, &nb, 3);
        for g in 0..k {
            let depth = g.min(k - 1 - g) as usize;
            assert_eq!(ell[&g], depth.min(4), "k={k} γ={g}");
        }
    }
}

#[test]
fn fibonacci_towers_meet_every_property() {
    let s = sys(r#"{"kind":"substitution","rules":{"a":"ab","b":"a"}}"#);
    let nb = FiniteGroupSet::from_z([-1, 0, 1]);
    let td = urp_towers(&s, &nb, 0.1).unwrap();
    assert!(td.towers.len() >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let f = random_element(&s, &nb, 1, &Q::one(), &mut rng).unwrap();
    let h = LocFn::constant(&s, q_frac(1, 2)).unwrap();
    let c = tsdg_construct(&td, &[f], &h, &Clopen::full(&s).unwrap(), 0.5, 2, &nb).unwrap();
    let w = OrbitWindow::generate(&s, 3000, 4).unwrap();
    let rep = tsdg_verify(&c, &w).unwrap();
    assert!(rep.passed, "{}", rep.to_csv());
    assert!(rep.row("5.exact").unwrap().pass);
    assert_eq!(rep.to_csv().lines().next().unwrap(), "property,bound,measured,pass,note");
}

#[test]
fn tsdg_report_is_deterministic() {
    let s = sys(r#"{"kind":"odometer","bases":[2]}"#);
    let (td, _) = kakutani_rokhlin(&s, &Clopen::cylinder(&s, "000000").unwrap()).unwrap();
    let nb = FiniteGroupSet::from_z([-1, 0, 1]);
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_element(&s, &nb, 2, &Q::one(), &mut rng).unwrap();
        let h = LocFn::constant(&s, Q::one()).unwrap();
        let c = tsdg_construct(&td, &[f], &h, &Clopen::full(&s).unwrap(), 0.5, 3, &nb).unwrap();
        tsdg_verify(&c, &OrbitWindow::generate(&s, 1000, 9).unwrap()).unwrap().to_csv()
    };
    assert_eq!(run(), run());
}
