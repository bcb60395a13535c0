#[path = "support/toy.rs"]
mod toy;

use gridpulse_core::cfnn::{CascadeMask, Cfnn, HeadKind};
use gridpulse_core::trainer::{
    evaluate_stability, search_mask, split_validation, sweep, train, SearchConfig, SearchMode, TrainConfig,
};
use toy::{quick, toy, toy_topology};

#[test]
fn training_is_deterministic_and_learns() {
    let data = toy(200, 1);
    let t = toy_topology();
    let net = Cfnn::new(t.clone(), CascadeMask::full(2, 6)).unwrap();
    let (p1, r1) = train(&net, &data, HeadKind::Stability, &quick()).unwrap();
    let (p2, r2) = train(&net, &data, HeadKind::Stability, &quick()).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(r1.losses, r2.losses);
    assert!(r1.losses.windows(2).all(|w| w[1] <= w[0]));
    assert!(r1.final_loss < r1.losses[0]);
    let acc = evaluate_stability(&net, &p1, &data).unwrap().accuracy();
    assert!(acc > 0.85, "training accuracy {acc}");
}

#[test]
fn validation_split_is_seeded_and_disjoint() {
    let data = toy(50, 2);
    let (a, b) = split_validation(&data, 0.2, 5).unwrap();
    assert_eq!((a.rows(), b.rows()), (40, 10));
    let (a2, _) = split_validation(&data, 0.2, 5).unwrap();
    assert_eq!(a, a2);
    assert!(split_validation(&data, 0.0, 5).is_err());
}

#[test]
fn branch_and_bound_finds_the_brute_force_argmax() {
    let data = toy(160, 3);
    let t = toy_topology();
    let base = SearchConfig { train: quick(), ..Default::default() };
    let brute = search_mask(&t, &data, &SearchConfig { mode: SearchMode::Exhaustive, ..base.clone() }).unwrap();
    assert_eq!(brute.evaluations.len(), 8);
    let bb = search_mask(&t, &data, &SearchConfig { mode: SearchMode::BranchAndBound, ..base.clone() }).unwrap();
    assert!(!bb.exhaustive);
    assert_eq!(bb.best, brute.best);
    assert_eq!(bb.mask, brute.mask);
    // The chosen mask is the best of everything evaluated.
    assert!(bb.evaluations.iter().all(|e| e.accuracy <= bb.best.accuracy));
    // Without pruning the search visits every mask.
    let open = search_mask(&t, &data, &SearchConfig { mode: SearchMode::BranchAndBound, margin: f64::INFINITY, ..base }).unwrap();
    assert_eq!(open.best, brute.best);
    assert_eq!(open.evaluations.len(), 8);
}

#[test]
fn zero_budget_yields_plain_network() {
    let data = toy(80, 4);
    let cfg = SearchConfig { budget: Some(0), train: quick(), ..Default::default() };
    let r = search_mask(&toy_topology(), &data, &cfg).unwrap();
    assert_eq!(r.mask.count(), 0);
    assert_eq!(r.evaluations.len(), 1);
}

#[test]
fn sweep_rows_follow_counts() {
    let data = toy(80, 5);
    let cfg = SearchConfig { train: TrainConfig { max_iterations: 10, ..Default::default() }, ..Default::default() };
    let rows = sweep(&toy_topology(), &data, &[0, 4, 8, 12], &cfg).unwrap();
    assert_eq!(rows.iter().map(|r| r.connections).collect::<Vec<_>>(), vec![0, 4, 8, 12]);
    assert_eq!(rows, sweep(&toy_topology(), &data, &[0, 4, 8, 12], &cfg).unwrap());
    assert!(sweep(&toy_topology(), &data, &[13], &cfg).is_err());
}
