//! Randomised invariants, each run by a deterministic proptest runner and
//! reported as `Err(description)` on the first failing case.

use kmfm::clustering::{kmeans, lloyd_step, KMeansConfig};
use kmfm::embedding::{
    build_affinity, penalty_from_pencil, solve_lpp, Affinity, KernelSpec, Pencil,
};
use kmfm::metrics::{nmi, pair_counts, rand_index};
use kmfm::neuralnet::{softmax_probabilities, EncoderDecoderNet, HeadSpec, LossHead, NetworkSpec};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle;

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * (2.0 * rng.random::<f64>() - 1.0))
}

/// Backprop gradients of `Σ_rows head loss + Σ G ⊙ latent` against central
/// differences, for both heads. Max relative error must stay below 1e-4.
pub fn gradient_check() -> Result<(), String> {
    let strategy = (
        2usize..7,
        1usize..4,
        1usize..4,
        any::<bool>(),
        1usize..5,
        any::<u64>(),
    );
    run(
        40,
        strategy,
        |(input, depth, latent, softmax, batch, seed)| {
            let latent = latent.min(input);
            let (dims, lift) = kmfm::neuralnet::encoder_widths(input, latent, depth);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out_dim = rng.random_range(2..6);
            let head = if softmax {
                let blocks = if out_dim >= 4 {
                    Some(vec![2, out_dim - 2])
                } else {
                    None
                };
                HeadSpec::SoftmaxCategorical {
                    output_dim: out_dim,
                    blocks,
                }
            } else {
                HeadSpec::MseNumerical {
                    output_dim: out_dim,
                }
            };
            let mut spec = NetworkSpec::new(dims, head.clone(), seed);
            spec.input_lift = lift;
            let mut net =
                EncoderDecoderNet::init(&spec).map_err(|e| TestCaseError::fail(e.to_string()))?;
            // Zero biases put pre-activations exactly on the ReLU kink behind a
            // dead unit; jitter every parameter so the point is differentiable.
            let jittered: Vec<f64> = net
                .parameters_flat()
                .iter()
                .map(|p| p + 0.2 * (rng.random::<f64>() - 0.5))
                .collect();
            net.set_parameters_flat(&jittered).expect("set");
            let x = uniform(&mut rng, batch, input, 2.0);
            let target = match &head {
                HeadSpec::SoftmaxCategorical { blocks, .. } => {
                    let blocks = blocks.clone().unwrap_or_else(|| vec![out_dim]);
                    let mut t = Array2::zeros((batch, out_dim));
                    for r in 0..batch {
                        let mut start = 0;
                        for &b in &blocks {
                            t[[r, start + rng.random_range(0..b)]] = 1.0;
                            start += b;
                        }
                    }
                    t
                }
                HeadSpec::MseNumerical { .. } => uniform(&mut rng, batch, out_dim, 1.0),
            };
            let latent_weight = uniform(&mut rng, batch, spec.latent_dim(), 0.5);
            let loss_head = LossHead::from_spec(&head);

            let objective = |net: &EncoderDecoderNet| -> f64 {
                let f = net.forward(x.view()).expect("forward");
                let (losses, _) = loss_head
                    .batch(f.output.view(), target.view())
                    .expect("loss");
                losses.iter().sum::<f64>() + (&f.latent * &latent_weight).sum()
            };
            let f = net.forward(x.view()).expect("forward");
            let (_, out_grad) = loss_head
                .batch(f.output.view(), target.view())
                .expect("loss");
            let analytic = net
                .backward(&f.cache, out_grad.view(), Some(latent_weight.view()))
                .expect("backward")
                .flatten();

            let base = net.parameters_flat();
            let h = 1e-6;
            let mut worst: f64 = 0.0;
            for i in 0..base.len() {
                let mut p = base.clone();
                p[i] = base[i] + h;
                net.set_parameters_flat(&p).expect("set");
                let up = objective(&net);
                p[i] = base[i] - h;
                net.set_parameters_flat(&p).expect("set");
                let down = objective(&net);
                let numeric = (up - down) / (2.0 * h);
                let err =
                    (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-3);
                worst = worst.max(err);
            }
            prop_assert!(worst < 1e-4, "max relative gradient error {worst:e}");
            Ok(())
        },
    )
}

/// Softmax probabilities sum to one within 1e-12, including huge logits.
pub fn softmax_normalisation() -> Result<(), String> {
    let strategy = (prop::collection::vec(-50.0f64..50.0, 1..60), -1e4f64..1e4);
    run(500, strategy, |(logits, shift)| {
        let z = Array1::from_iter(logits.iter().map(|v| v + shift));
        let p = softmax_probabilities(z.view());
        let total: f64 = p.sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "sum {total}");
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        Ok(())
    })
}

/// `Σ_ij s_ij ‖Vᵀw_i − Vᵀw_j‖² = 2 Tr(VᵀW(Λ−S)WᵀV)` within 1e-9 relative.
pub fn bridge_identity() -> Result<(), String> {
    run(
        200,
        (1usize..7, 2usize..16, any::<u64>()),
        |(d, n, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = rng.random_range(1..=d);
            let w = uniform(&mut rng, d, n, 3.0);
            let v = uniform(&mut rng, d, l, 1.0);
            let upper = uniform(&mut rng, n, n, 1.0).mapv(f64::abs);
            let s = Array2::from_shape_fn((n, n), |(i, j)| upper[[i.min(j), i.max(j)]]);
            let pencil = Pencil::build(w.view(), &Affinity::Dense(s.clone())).expect("pencil");
            let fast = penalty_from_pencil(v.view(), &pencil);
            let brute = oracle::penalty_double_sum(v.view(), w.view(), s.view());
            let rel = (fast - brute).abs() / brute.abs().max(1e-300);
            prop_assert!(rel < 1e-9, "trace form {fast} vs double sum {brute}");
            Ok(())
        },
    )
}

/// Generalised eigen-residual, `VᵀWΛWᵀV = I`, and eigenvalues against a
/// Jacobi oracle on the same ridged pencil.
pub fn lpp_spectrum() -> Result<(), String> {
    run(60, (1usize..8, any::<u64>()), |(d, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(d + 2..=20);
        let x = uniform(&mut rng, n, 3, 1.0);
        let w = uniform(&mut rng, d, n, 1.0);
        let affinity = build_affinity(x.view(), &KernelSpec::default()).expect("kernel");
        let pencil = Pencil::build(w.view(), &affinity).expect("pencil");
        let sol = solve_lpp(&pencil, d, None).expect("solve");
        let (a, b) = (&pencil.a, &pencil.b);
        let b_ridged = b + &(Array2::<f64>::eye(d) * sol.ridge);
        let a_norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..d {
            let v = sol.v.column(j);
            let r = a.dot(&v) - b_ridged.dot(&v) * sol.eigenvalues[j];
            let res = r.iter().map(|t| t * t).sum::<f64>().sqrt();
            prop_assert!(res <= 1e-6 * a_norm, "residual {res:e} for eigenpair {j}");
        }
        let gram = sol.v.t().dot(b).dot(&sol.v);
        let off = (&gram - &Array2::<f64>::eye(d))
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(off < 1e-6, "VᵀBV deviates from I by {off:e}");
        prop_assert!(sol.eigenvalues.windows(2).all(|p| p[0] <= p[1]));
        let expected = oracle::generalized_eigenvalues(a.view(), b_ridged.view());
        for (got, want) in sol.eigenvalues.iter().zip(&expected) {
            prop_assert!(
                (got - want).abs() <= 1e-6 * want.abs().max(1.0),
                "eigenvalue {got} vs oracle {want}"
            );
        }
        Ok(())
    })
}

/// Inertia never increases across Lloyd steps, and the reported inertia
/// equals a recomputation from labels and centroids.
pub fn lloyd_monotone() -> Result<(), String> {
    run(
        100,
        (2usize..40, 1usize..5, 1usize..6, any::<u64>()),
        |(n, dim, k, seed)| {
            let k = k.min(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = uniform(&mut rng, n, dim, 5.0);
            let mut centroids = x.slice(ndarray::s![..k, ..]).to_owned();
            let mut previous = f64::INFINITY;
            for _ in 0..20 {
                let step = lloyd_step(x.view(), centroids.view());
                prop_assert!(
                    step.inertia <= previous * (1.0 + 1e-12),
                    "{} after {}",
                    step.inertia,
                    previous
                );
                previous = step.inertia;
                centroids = step.centroids;
            }
            let cfg = KMeansConfig {
                k,
                restarts: 2,
                seed,
                ..KMeansConfig::default()
            };
            let result = kmeans(x.view(), &cfg).expect("kmeans");
            for pair in result.inertia_trace.windows(2) {
                prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
            }
            let recomputed: f64 = x
                .outer_iter()
                .zip(&result.labels)
                .map(|(row, &l)| (&row - &result.centroids.row(l)).mapv(|t| t * t).sum())
                .sum();
            prop_assert!((recomputed - result.inertia).abs() <= 1e-9 * recomputed.max(1e-300));
            Ok(())
        },
    )
}

fn labelings() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2usize..60, 1usize..7, 1usize..5).prop_flat_map(|(n, kp, kt)| {
        (
            prop::collection::vec(0..kp, n),
            prop::collection::vec(0..kt, n),
        )
    })
}

/// Library RI and NMI equal the brute-force pair and contingency oracles.
pub fn metrics_match_oracle() -> Result<(), String> {
    run(1000, labelings(), |(pred, truth)| {
        let c = pair_counts(&pred, &truth).expect("pairs");
        prop_assert_eq!(
            (c.tp, c.tn, c.fp, c.fn_),
            oracle::pair_counts(&pred, &truth)
        );
        prop_assert_eq!(
            rand_index(&pred, &truth).expect("ri"),
            oracle::rand_index(&pred, &truth)
        );
        prop_assert_eq!(nmi(&pred, &truth).expect("nmi"), oracle::nmi(&pred, &truth));
        Ok(())
    })
}

/// Renaming cluster ids in either partition leaves RI and NMI unchanged.
pub fn metrics_permutation_invariant() -> Result<(), String> {
    let strategy = labelings().prop_flat_map(|(p, t)| {
        let perm_p = Just((0..7).collect::<Vec<usize>>()).prop_shuffle();
        let perm_t = Just((0..5).collect::<Vec<usize>>()).prop_shuffle();
        (Just(p), Just(t), perm_p, perm_t)
    });
    run(1000, strategy, |(pred, truth, perm_p, perm_t)| {
        let pred2: Vec<usize> = pred.iter().map(|&l| perm_p[l]).collect();
        let truth2: Vec<usize> = truth.iter().map(|&l| perm_t[l]).collect();
        prop_assert_eq!(
            rand_index(&pred, &truth).unwrap(),
            rand_index(&pred2, &truth2).unwrap()
        );
        prop_assert_eq!(nmi(&pred, &truth).unwrap(), nmi(&pred2, &truth2).unwrap());
        prop_assert_eq!(nmi(&pred, &truth).unwrap(), nmi(&truth, &pred).unwrap());
        Ok(())
    })
}

/// Every property of the suite, by name.
pub type Property = fn() -> Result<(), String>;

pub fn suite() -> Vec<(&'static str, Property)> {
    vec![
        (
            "gradient check",
            gradient_check as fn() -> Result<(), String>,
        ),
        ("softmax normalisation", softmax_normalisation),
        ("bridge identity", bridge_identity),
        ("lpp spectrum", lpp_spectrum),
        ("lloyd monotone", lloyd_monotone),
        ("metrics match oracle", metrics_match_oracle),
        (
            "metrics permutation invariant",
            metrics_permutation_invariant,
        ),
    ]
}
