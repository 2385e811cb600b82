mod common;

use alns_mip::bnb::{solve_mip, MipStatus, SolveLimits};
use alns_mip::mps::{parse_mps, write_mps};
use alns_mip::simplex::{solve_lp, LpStatus};
use common::{corpus, enumerate};

#[test]
fn corpus_known_optima() {
    let expected = [
        ("assign3", Some(-22.0)),
        ("cover5", Some(6.0)),
        ("infeasible", None),
        ("intmix", Some(-9.5)),
        ("ks3", Some(-8.0)),
    ];
    let got: Vec<(String, Option<f64>)> = corpus().iter().map(|(n, i)| (n.clone(), enumerate(i))).collect();
    assert_eq!(got.len(), expected.len());
    for ((name, value), (want_name, want)) in got.iter().zip(expected) {
        assert_eq!(name, want_name);
        assert_eq!(*value, want, "{name}");
    }
}

#[test]
fn bnb_matches_enumeration_on_corpus() {
    for (name, inst) in corpus() {
        let r = solve_mip(&inst, &SolveLimits::nodes(100_000));
        match enumerate(&inst) {
            Some(opt) => {
                assert_eq!(r.status, MipStatus::Optimal, "{name}");
                assert!((r.best.unwrap().objective() - opt).abs() < 1e-9, "{name}");
            }
            None => assert_eq!(r.status, MipStatus::Infeasible, "{name}"),
        }
    }
}

#[test]
fn lp_bound_below_optimum() {
    for (name, inst) in corpus() {
        let lp = solve_lp(&inst, 10_000);
        if let Some(opt) = enumerate(&inst) {
            assert_eq!(lp.status, LpStatus::Optimal, "{name}");
            assert!(lp.objective <= opt + 1e-9, "{name}: {} > {opt}", lp.objective);
        }
    }
}

#[test]
fn corpus_round_trips() {
    for (name, inst) in corpus() {
        let again = parse_mps(write_mps(&inst).as_bytes()).unwrap();
        assert_eq!(again, inst, "{name}");
    }
}

#[test]
fn maximization_sense_is_normalized() {
    let (_, inst) = corpus().into_iter().find(|(n, _)| n == "assign3").unwrap();
    assert!(inst.objective_coeffs().iter().all(|&c| c <= 0.0));
}
