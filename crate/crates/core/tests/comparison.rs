//! Dynamical comparison against brute force, and diagonal Cuntz comparison.

mod oracles;

use cantor_core::clopen::Clopen;
use cantor_core::comparison::{
    build_divisible_element, cuntz_witness_diagonal, dynamical_compare, measure_gap_check, rank_compare_diagonal,
    CompareOutcome, DiagonalElement,
};
use cantor_core::crossed::LocFn;
use cantor_core::exact::{q_frac, Q};
use cantor_core::group::FiniteGroupSet;
use cantor_core::system::{System, Word};
use cantor_core::towers::kakutani_rokhlin;
use proptest::prelude::*;
use std::sync::Arc;

fn sys(j: &str) -> Arc<System> {
    Arc::new(System::from_json(j).unwrap())
}

fn pick(s: &Arc<System>, r: usize, mask: u64) -> Vec<Word> {
    s.as_z()
        .unwrap()
        .words(r)
        .unwrap()
        .iter()
        .enumerate()
        .filter(|(i, _)| mask >> (i % 64) & 1 == 1)
        .map(|(_, w)| w.clone())
        .collect()
}

proptest! {
    #[test]
    fn cycles_agree_with_brute_force(n in 2u32..=24, r in 0usize..=2, ma in any::<u64>(), mb in any::<u64>(), m in 0i64..=3) {
        let s = sys(&format!(r#"{{"kind":"cycle","n":{n}}}"#));
        let (aw, bw) = (pick(&s, r, ma), pick(&s, r, mb));
        let pts = |ws: &[Word]| ws.iter().map(|w| w[r] as u32).collect::<Vec<_>>();
        let oracle = oracles::cycle_subequivalence_exists(n, &pts(&aw), &pts(&bw), &(-m..=m).collect::<Vec<_>>());
        let a = Clopen::from_words(&s, r, aw).unwrap();
        let b = Clopen::from_words(&s, r, bw).unwrap();
        let out = dynamical_compare(&a, &b, &FiniteGroupSet::interval(-m, m)).unwrap();
        prop_assert_eq!(out.witness().is_some(), oracle);
    }

    #[test]
    fn fibonacci_witnesses_are_valid(ra in 0usize..=2, rb in 0usize..=2, ma in any::<u64>(), mb in any::<u64>(), m in 1i64..=4) {
        let s = sys(r#"{"kind":"substitution","rules":{"a":"ab","b":"a"}}"#);
        let a = Clopen::from_words(&s, ra, pick(&s, ra, ma)).unwrap();
        let b = Clopen::from_words(&s, rb, pick(&s, rb, mb)).unwrap();
        if let CompareOutcome::Found(w) = dynamical_compare(&a, &b, &FiniteGroupSet::interval(-m, m)).unwrap() {
            prop_assert!(w.validate(&a, &b).unwrap());
            // uniquely ergodic: a witness forces μ(A) ≤ μ(B)
            prop_assert!(a.measure().unwrap().sub(&b.measure().unwrap()).signum() <= 0);
        }
    }

    #[test]
    fn cut_down_composes(vals in prop::collection::vec(0u8..=8, 8), e1 in 0i64..=4, e2 in 0i64..=4) {
        let s = sys(r#"{"kind":"odometer","bases":[2]}"#);
        let (td, _) = kakutani_rokhlin(&s, &Clopen::cylinder(&s, "0").unwrap()).unwrap();
        let f = LocFn::from_fn(&s, 1, |w| q_frac(vals[(w[0] + 2 * w[1] + 4 * w[2]) as usize] as i64, 8)).unwrap();
        let a = DiagonalElement::on_towers(&td, &f).unwrap();
        let (x, y) = (q_frac(e1, 8), q_frac(e2, 8));
        let lhs = a.cut_down(&x).unwrap().cut_down(&y).unwrap();
        prop_assert_eq!(lhs, a.cut_down(&(x + y)).unwrap());
    }
}

#[test]
fn odometer_window_threshold() {
    let s = sys(r#"{"kind":"odometer","bases":[2]}"#);
    let a = Clopen::cylinder(&s, "01").unwrap();
    let b = Clopen::cylinder(&s, "1").unwrap().union(&Clopen::cylinder(&s, "00").unwrap()).unwrap();
    match dynamical_compare(&a, &b, &FiniteGroupSet::from_z([0])).unwrap() {
        CompareOutcome::NotFound { radius, window, window_limited, .. } => {
            assert_eq!((radius, window), (1, vec![0]));
            assert!(window_limited);
        }
        CompareOutcome::Found(_) => panic!("[01] ⊄ [1] ∪ [00]"),
    }
    assert!(dynamical_compare(&a, &b, &FiniteGroupSet::interval(-1, 1)).unwrap().witness().is_some());
}

#[test]
fn gap_check_is_exact_at_the_boundary() {
    let s = sys(r#"{"kind":"odometer","bases":[2]}"#);
    let e = Clopen::cylinder(&s, "000").unwrap();
    let f = Clopen::cylinder(&s, "0").unwrap();
    assert!(!measure_gap_check(&e, &f, 0.25).unwrap().holds);
    assert!(measure_gap_check(&e, &f, 0.25 + 1e-12).unwrap().holds);
}

#[test]
fn witness_norm_and_error() {
    let s = sys(r#"{"kind":"odometer","bases":[2]}"#);
    let (td, _) = kakutani_rokhlin(&s, &Clopen::cylinder(&s, "000").unwrap()).unwrap();
    let a = LocFn::indicator(&Clopen::cylinder(&s, "000").unwrap()).unwrap().scale(&q_frac(1, 2));
    let b = LocFn::indicator(&Clopen::cylinder(&s, "1").unwrap()).unwrap().scale(&q_frac(1, 4));
    let (a, b) = (DiagonalElement::on_towers(&td, &a).unwrap(), DiagonalElement::on_towers(&td, &b).unwrap());
    let ranks = rank_compare_diagonal(&a, &b).unwrap();
    assert!(ranks.le_pass && !ranks.quarter_pass);
    assert!(ranks.rows.iter().all(|r| (r.rank_a, r.rank_b) == (1, 4)));
    let w = cuntz_witness_diagonal(&a, &b, 0.1).unwrap();
    assert!(w.valid);
    assert!((w.max_norm - (0.4f64 / 0.25).sqrt()).abs() < 1e-12);
    assert_eq!(a.cut_down(&Q::from_integer(1.into())).unwrap().support_trace().unwrap().to_f64(), 0.0);
}

#[test]
fn divisible_elements_match_levels() {
    let s = sys(r#"{"kind":"odometer","bases":[2]}"#);
    let (td, _) = kakutani_rokhlin(&s, &Clopen::cylinder(&s, "000000").unwrap()).unwrap();
    for (r, levels) in [(0.3, 20), (0.01, 1), (1.75, 48)] {
        let d = build_divisible_element(&td, r, 0.05).unwrap();
        assert_eq!(d.report.selected, vec![levels]);
        assert!(d.report.agree_exactly);
        assert_eq!(d.report.mu_f, levels as f64 / 64.0);
    }
    assert!(build_divisible_element(&td, 0.0, 0.05).is_err());
}
