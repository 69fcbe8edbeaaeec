//! Cross-module consequences of the core results: weighted-variance
//! descent, realization vs expectation agreement, jet-flow divergence,
//! wide-chain residuals, and sampled-exponential diagonal floors.

use chainlab::absolute_probability::{aps_backward, ergodicity_check};
use chainlab::chain_core::{ChainWindow, Extension, Matrix, strong_aperiodicity_gamma};
use chainlab::continuous_time::{transition, CtChain, CtSegment, Generator};
use chainlab::dynamics::{mutual_ergodicity, quadratic_comparison, simulate};
use chainlab::flow_graph::{build_flow_graph, connected_components, jet_interaction, Jet};
use chainlab::random_chains::{expected_chain, generate, CounterRng, Family, GeneratorSpec};

fn chain_of(family: Family, n: usize, seed: u64, count: usize) -> ChainWindow {
    let spec = GeneratorSpec::new(family, n, seed).expect("valid family parameters");
    generate(&spec, count).expect("generation succeeds")
}

#[test]
fn aps_residual_stays_at_machine_scale_for_wide_chains() {
    for family in [
        Family::GossipPairs {
            pair_prob: 0.8,
            mixing: 0.5,
        },
        Family::LazyRandomWalk { self_weight: 0.6 },
    ] {
        let chain = chain_of(family, 16, 3, 1000);
        let uniform = vec![1.0 / 16.0; 16];
        let trace = aps_backward(&chain, 0, 1000, &uniform).unwrap();
        assert!(
            trace.max_residual() <= 1e-12,
            "residual {}",
            trace.max_residual()
        );
    }
}

#[test]
fn connected_flow_graph_implies_row_collapse() {
    let mut connected_seen = 0usize;
    for seed in 0..20u64 {
        let n = 2 + (seed % 4) as usize;
        let family = if seed % 2 == 0 {
            Family::GossipPairs {
                pair_prob: 0.7,
                mixing: 0.5,
            }
        } else {
            Family::StaticPerturbed {
                sparsity: 0.8,
                blend_max: 0.5,
            }
        };
        let chain = chain_of(family, n, seed, 600);
        let graph = build_flow_graph(&chain, 600, 1.0).unwrap();
        if connected_components(&graph).len() != 1 {
            continue;
        }
        connected_seen += 1;
        let report = ergodicity_check(&chain, 0, 600, 1e-4).unwrap();
        assert!(
            report.ergodic_on_horizon,
            "seed={seed}: distance {}",
            report.max_row_distance
        );
    }
    assert!(connected_seen >= 15);
}

/// Truncated jet interaction keeps growing with the horizon when both
/// jets live inside one flow component.
#[test]
fn jet_interaction_diverges_inside_a_component() {
    for seed in 0..10u64 {
        let chain = chain_of(
            Family::GossipPairs {
                pair_prob: 0.8,
                mixing: 0.5,
            },
            4,
            seed,
            400,
        );
        let ju = Jet::constant(4, &[0, 1]).unwrap();
        let jv = Jet::constant(4, &[2, 3]).unwrap();
        let half = jet_interaction(&chain, &ju, &jv, 200).unwrap();
        let full = jet_interaction(&chain, &ju, &jv, 400).unwrap();
        assert!(half > 1.0, "seed={seed}: half {half}");
        assert!(
            full >= half + 1.0 && full >= 1.5 * half,
            "seed={seed}: half {half} full {full}"
        );
    }
}

/// The backward-weighted variance never increases along trajectories:
/// V_w(t+1)(x(t+1)) <= V_w(t)(x(t)) with w the backward weights.
#[test]
fn weighted_variance_descends_along_backward_weights() {
    for family in [
        Family::GossipPairs {
            pair_prob: 0.8,
            mixing: 0.5,
        },
        Family::LazyRandomWalk { self_weight: 0.6 },
    ] {
        for seed in 0..5u64 {
            let chain = chain_of(family.clone(), 3, seed, 100);
            let uniform = vec![1.0 / 3.0; 3];
            let aps = aps_backward(&chain, 0, 100, &uniform).unwrap();
            let mut rng = CounterRng::keyed(seed, &[0x5FE6]);
            for _ in 0..5 {
                let x0: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let traj = simulate(&chain, &x0, 100).unwrap();
                let mut prev = f64::INFINITY;
                for t in 0..=100usize {
                    let v =
                        quadratic_comparison(traj.value_at(t).unwrap(), aps.value_at(t).unwrap())
                            .unwrap();
                    assert!(
                        v <= prev + 1e-12 * (1.0 + prev),
                        "{} seed={seed} t={t}: {v} after {prev}",
                        family.name()
                    );
                    prev = v;
                }
            }
        }
    }
}

/// Sampled realizations and the family's expected chain return the
/// same mutual-ergodicity verdict on at least 99 percent of trials.
#[test]
fn realizations_and_expected_chains_agree_on_mutual_ergodicity() {
    let mut total = 0usize;
    let mut agreed = 0usize;
    let mut verdict = |family: Family, n: usize, seed: u64, i: usize, j: usize| {
        let spec = GeneratorSpec::new(family, n, seed).unwrap();
        let real = generate(&spec, 400).unwrap();
        let expected = expected_chain(&spec, 400).unwrap();
        let vr = mutual_ergodicity(&real, i, j, 5, 400, 1e-3, 77)
            .unwrap()
            .mutually_ergodic;
        let ve = mutual_ergodicity(&expected, i, j, 5, 400, 1e-3, 77)
            .unwrap()
            .mutually_ergodic;
        total += 1;
        if vr == ve {
            agreed += 1;
        } else {
            println!("witness: n={n} seed={seed} pair=({i},{j}) real={vr} expected={ve}");
        }
        vr
    };
    for n in 2..=4usize {
        for seed in 0..12u64 {
            let v = verdict(
                Family::GossipPairs {
                    pair_prob: 0.7,
                    mixing: 0.5,
                },
                n,
                seed,
                0,
                n - 1,
            );
            assert!(v, "gossip chains mix every pair");
            let v = verdict(Family::LazyRandomWalk { self_weight: 0.6 }, n, seed, 0, n - 1);
            assert!(v, "lazy walks mix every pair");
        }
    }
    for seed in 0..28u64 {
        let v = verdict(
            Family::BlockDiagonalMixers {
                blocks: 2,
                pair_prob: 0.9,
                mixing: 0.5,
            },
            4,
            seed,
            0,
            3,
        );
        assert!(!v, "blocks never mix across the split");
    }
    assert!(total >= 100);
    assert!(
        agreed as f64 >= 0.99 * total as f64,
        "only {agreed}/{total} agreed"
    );
}

/// Diagonals of sampled transition operators respect the exponential
/// floor exp(-M dt) set by the largest generator intensity.
#[test]
fn sampled_transition_diagonals_respect_the_exponential_floor() {
    for seed in 0..20u64 {
        let n = 2 + (seed % 3) as usize;
        let mut rng = CounterRng::keyed(seed, &[0xF100]);
        let segs = (0..2usize)
            .map(|_| {
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|i| {
                        let mut row: Vec<f64> =
                            (0..n).map(|_| rng.uniform(0.0, 2.0)).collect();
                        row[i] = 0.0;
                        let total: f64 = row.iter().sum();
                        row[i] = -total;
                        row
                    })
                    .collect();
                CtSegment {
                    duration: rng.uniform(0.5, 1.5),
                    generator: Generator::from_rows(&rows).unwrap(),
                }
            })
            .collect();
        let chain = CtChain::new(0.0, segs).unwrap();
        let m = chain.uniform_bound_m();
        let end = chain.end_time();
        let steps = 16usize;
        for k in 0..steps {
            let a = end * k as f64 / steps as f64;
            let b = end * (k + 1) as f64 / steps as f64;
            let op = transition(&chain, a, b).unwrap();
            let floor = (-m * (b - a)).exp();
            for i in 0..n {
                assert!(
                    op.matrix.get(i, i) >= floor - 1e-12,
                    "seed={seed} step={k}: diag {} floor {floor}",
                    op.matrix.get(i, i)
                );
            }
        }
    }
}

/// Self-weight couples to outgoing influence at least as strongly as
/// the diagonal floor promises: sum a_ii a_ij >= gamma * sum a_ij.
#[test]
fn family_feedback_holds_on_long_windows() {
    let cases = [
        (
            Family::GossipPairs {
                pair_prob: 0.8,
                mixing: 0.5,
            },
            Some(0.5),
        ),
        (Family::LazyRandomWalk { self_weight: 0.6 }, Some(0.6)),
        (
            Family::StaticPerturbed {
                sparsity: 0.8,
                blend_max: 0.5,
            },
            None,
        ),
    ];
    for (family, documented_gamma) in cases {
        let chain = chain_of(family.clone(), 4, 11, 2000);
        let mats: Vec<Matrix> = (0..2000).map(|t| chain.matrix_at(t).unwrap()).collect();
        let window = ChainWindow::new(0, mats.clone(), Extension::RepeatLast).unwrap();
        let gamma = strong_aperiodicity_gamma(&window);
        if let Some(doc) = documented_gamma {
            assert_eq!(gamma, doc, "{}", family.name());
        }
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let coupled: f64 = mats.iter().map(|m| m.get(i, i) * m.get(i, j)).sum();
                let plain: f64 = mats.iter().map(|m| m.get(i, j)).sum();
                assert!(
                    coupled >= gamma * plain - 1e-9,
                    "{} ({i},{j}): {coupled} < {gamma} * {plain}",
                    family.name()
                );
            }
        }
    }
}
