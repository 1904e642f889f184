use almostq::moment::{validate_certificate, Binding, EntryClass, MomentProblem};
use almostq::principles::{ntcc_scenario, pr_scenario};
use almostq::quantum::SeparationWitness;
use almostq::{enumerate_events, Event, ExactBox, Level, ProbBox, Scenario};
use num_rational::Rational64;
use proptest::prelude::*;

fn scenario() -> impl Strategy<Value = Scenario> {
    (1usize..4)
        .prop_flat_map(|n| (prop::collection::vec(1usize..4, n), prop::collection::vec(2usize..4, n)))
        .prop_map(|(i, o)| Scenario::new(i, o).unwrap())
}

/// Integer-weighted mixture of deterministic strategies drawn from `picks`.
fn local_box(s: &Scenario, picks: &[(u32, u8)]) -> ExactBox {
    let total: i64 = picks.iter().map(|p| p.1 as i64 + 1).sum();
    let mut table = vec![Rational64::from_integer(0); s.table_len()];
    for &(code, w) in picks {
        let mut c = code as usize;
        let strategy: Vec<Vec<usize>> = (0..s.num_parties())
            .map(|k| {
                (0..s.inputs()[k])
                    .map(|_| {
                        let o = c % s.outputs()[k];
                        c = c / s.outputs()[k] + 7;
                        o
                    })
                    .collect()
            })
            .collect();
        let d = ProbBox::<Rational64>::deterministic(s.clone(), &strategy).unwrap();
        for (t, p) in table.iter_mut().zip(d.table()) {
            *t += p * Rational64::new(w as i64 + 1, total);
        }
    }
    ProbBox::new(s.clone(), table).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn collins_gisin_roundtrip_is_exact(s in scenario(), picks in prop::collection::vec((any::<u32>(), any::<u8>()), 1..6)) {
        let b = local_box(&s, &picks);
        prop_assert!(b.validate().is_valid());
        let cg = b.to_cg();
        prop_assert_eq!(cg.coefficients().len(), almostq::CgBasis::new(&s).len());
        prop_assert_eq!(cg.to_box().unwrap(), b);
    }

    #[test]
    fn table_index_inverts_table_tuple(s in scenario()) {
        for i in 0..s.table_len() {
            let (x, a) = s.table_tuple(i);
            prop_assert_eq!(s.table_index(&x, &a), i);
        }
    }

    #[test]
    fn event_text_roundtrip(s in scenario()) {
        for e in enumerate_events(&s, Level::AlmostQuantum) {
            let back: Event = e.to_string().parse().unwrap();
            prop_assert_eq!(back, e);
        }
    }
}

#[test]
fn moment_matrix_sizes() {
    let dim = |s: &Scenario, l| MomentProblem::build(s, l, Binding::FreeBox).unwrap().dim();
    assert_eq!(dim(&Scenario::chsh(), Level::AlmostQuantum), 9);
    assert_eq!(dim(&Scenario::chsh(), Level::Q1), 5);
    assert_eq!(dim(&pr_scenario(4).unwrap(), Level::AlmostQuantum), 91);
    assert_eq!(dim(&ntcc_scenario(2, 1).unwrap(), Level::AlmostQuantum), 45);
}

#[test]
fn entry_classes_are_symmetric() {
    for s in [Scenario::chsh(), Scenario::uniform(3, 2, 2).unwrap(), pr_scenario(3).unwrap()] {
        let mp = MomentProblem::build(&s, Level::AlmostQuantum, Binding::FreeBox).unwrap();
        for i in 0..mp.dim() {
            assert_eq!(mp.class(i, i), &EntryClass::Prob(mp.index()[i].clone()));
            for j in 0..mp.dim() {
                assert_eq!(mp.class(i, j), mp.class(j, i));
            }
        }
    }
}

/// With two outputs per party every moment-matrix event uses output 1, so no
/// entry is locally orthogonal; the damage goes into an entry fixed by the box.
#[test]
fn damaged_certificate_is_rejected() {
    let w = SeparationWitness::new();
    let mp = MomentProblem::build(&Scenario::chsh(), Level::AlmostQuantum, Binding::FreeBox).unwrap();
    let (i, j) = (0..9)
        .flat_map(|i| (0..9).map(move |j| (i, j)))
        .find(|&(i, j)| i != j && matches!(mp.class(i, j), EntryClass::Prob(_)))
        .expect("an off-diagonal probability entry");
    let mut g = w.gamma.clone();
    g[(i, j)] += 0.1;
    g[(j, i)] += 0.1;
    let r = validate_certificate(&g, &w.point, Level::AlmostQuantum).unwrap();
    assert!(!r.accepted);
    assert!((r.prob_residual - 0.1).abs() < 1e-12);
    assert!(validate_certificate(&w.gamma, &w.point, Level::AlmostQuantum).unwrap().accepted);
}

#[test]
fn negated_witness_flips_the_value() {
    let w = SeparationWitness::new();
    let v = w.bell.evaluate(&w.point).unwrap();
    assert!((w.bell.negated().evaluate(&w.point).unwrap() + v).abs() < 1e-15);
    assert!(v < -1.0);
}

#[test]
fn damaged_zero_entry_is_rejected() {
    let s = Scenario::uniform(2, 2, 3).unwrap();
    let b = almostq::Box64::uniform(s.clone());
    let mp = MomentProblem::build(&s, Level::AlmostQuantum, Binding::FixedBox(b.clone())).unwrap();
    let m = almostq::psd_margin(&mp).unwrap();
    assert!(validate_certificate(&m.gamma, &b, Level::AlmostQuantum).unwrap().accepted);
    let n = mp.dim();
    let (i, j) = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .find(|&(i, j)| mp.class(i, j) == &EntryClass::Zero)
        .expect("a zero entry");
    let mut g = m.gamma.clone();
    g[(i, j)] += 0.1;
    g[(j, i)] += 0.1;
    let r = validate_certificate(&g, &b, Level::AlmostQuantum).unwrap();
    assert!(!r.accepted);
    assert!((r.zero_residual - 0.1).abs() < 1e-9);
}
