//! Memory updates against an independent SVD (nalgebra).

use nalgebra::DMatrix;
use rand::Rng;
use sgp_core::gpm::{
    compute_importance, compute_residual, projection_coefficients, surrogate_singular_values, update_layer,
    update_memory_after_task, BasisMemory, RepresentationConfig,
};
use sgp_core::linalg::svd;
use sgp_core::net::{Activation, LayerSpec};
use sgp_core::rng::{normal, stream, SeededRng, Stream};
use sgp_core::{LayerMemory, Matrix, Network, ProjectionMode, ScaleConfig};

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn from_na(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

fn gaussian(rows: usize, cols: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

/// A random `(R, M)` pair. `R` mixes a low-rank part and noise so that `R_M`
/// ranges from nearly all of `R` to a small slice of it.
fn random_pair(rng: &mut SeededRng) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let dim = rng.gen_range(3..12);
    let n = rng.gen_range(2..20);
    let k = rng.gen_range(1..dim);
    let rank = rng.gen_range(1..=dim.min(n));
    let r = gaussian(dim, rank, rng) * gaussian(rank, n, rng) + gaussian(dim, n, rng) * rng.gen_range(0.0..0.3);
    let m = gaussian(dim, k, rng).qr().q().columns(0, k).into_owned();
    let lambda = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
    (r, m, lambda)
}

#[test]
fn norm_transfer_and_coverage_on_random_pairs() {
    let mut rng = stream(2024, Stream::Data);
    for case in 0..100 {
        let (r, m, lambda) = random_pair(&mut rng);
        let k = m.ncols();
        let mem = LayerMemory::from_parts(from_na(&m), lambda).unwrap();

        // oracle: R_M = M Mᵀ R, its SVD, C = Mᵀ U_k, σ′ = sqrt((C⊙C) σ²)
        let r_m = &m * (m.transpose() * &r);
        let dec = r_m.clone().svd(true, false);
        let mut order: Vec<usize> = (0..dec.singular_values.len()).collect();
        order.sort_by(|a, b| dec.singular_values[*b].total_cmp(&dec.singular_values[*a]));
        let keep = k.min(order.len());
        let u_na = DMatrix::from_fn(r.nrows(), keep, |i, j| dec.u.as_ref().unwrap()[(i, order[j])]);
        let s_na: Vec<f64> = order[..keep].iter().map(|&j| dec.singular_values[j]).collect();
        let c_na = m.transpose() * &u_na;
        let oracle: Vec<f64> = (0..k)
            .map(|i| (0..keep).map(|j| (c_na[(i, j)] * s_na[j]).powi(2)).sum::<f64>().sqrt())
            .collect();
        let rm_norm_sq = r_m.norm_squared();
        let oracle_sum: f64 = oracle.iter().map(|s| s * s).sum();
        assert!((oracle_sum - rm_norm_sq).abs() <= 1e-8 * rm_norm_sq.max(1e-300), "oracle case {case}");

        // implementation
        let (_, projected) = compute_residual(&from_na(&r), &mem).unwrap();
        let ours = svd(&projected).unwrap();
        let u = ours.u.leading_columns(keep);
        let c = projection_coefficients(&mem, &u, &ours.sigma[..keep]).unwrap();
        let sigma_prime = surrogate_singular_values(&c, &ours.sigma[..keep]).unwrap();
        let ours_sum: f64 = sigma_prime.iter().map(|s| s * s).sum();
        assert!(
            (ours_sum - rm_norm_sq).abs() <= 1e-8 * rm_norm_sq,
            "case {case}: Σσ′² {ours_sum} vs ‖R_M‖² {rm_norm_sq}"
        );
        // σ′ is basis-invariant within repeated singular values, so compare per entry
        for (a, b) in sigma_prime.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-7 * s_na[0].max(1e-300), "case {case}: σ′ {a} vs {b}");
        }

        for eps in [0.5, 0.9, 0.99] {
            let (next, report) = update_layer(&mem, &from_na(&r), eps, 3.0, ProjectionMode::Sgp).unwrap();
            let spec = report.spectrum.unwrap();
            assert!(spec.captured >= spec.required - 1e-8 * report.energy, "case {case} eps {eps}");
            assert!((report.surrogate_energy - rm_norm_sq).abs() <= 1e-8 * rm_norm_sq);
            // independent recount of the captured energy with the final basis
            let basis = to_na(next.basis());
            let captured = (&basis * (basis.transpose() * &r)).norm_squared();
            assert!(captured >= eps * r.norm_squared() - 1e-8 * r.norm_squared(), "case {case} eps {eps}");
            assert!(next.orthonormality_error() <= 1e-8);
            for (old, new) in mem.lambda().iter().zip(next.lambda()) {
                assert!(new >= old);
            }
        }
    }
}

#[test]
fn importance_matches_closed_form() {
    let sigma = [10.0, 5.0, 1.0];
    for alpha in [0.0, 1.0, 3.0, 10.0] {
        let got = compute_importance(&sigma, alpha).unwrap();
        for (g, s) in got.iter().zip(sigma) {
            let want = (alpha + 1.0) * s / (alpha * s + 10.0);
            assert!((g - want).abs() < 1e-15);
        }
    }
}

#[test]
fn large_alpha_saturates_every_basis() {
    let lambda = compute_importance(&[4.0, 2.0, 0.5, 1e-3], 1e9).unwrap();
    for l in lambda {
        assert!((1.0 - l) < 1e-5, "{l}");
    }
}

fn duplicate_net() -> Network {
    let specs = [
        LayerSpec::Dense {
            input_dim: 10,
            output_dim: 8,
            activation: Activation::Relu,
        },
        LayerSpec::Dense {
            input_dim: 8,
            output_dim: 6,
            activation: Activation::Relu,
        },
    ];
    Network::new(&specs, &mut stream(5, Stream::Init)).unwrap()
}

#[test]
fn identical_second_task_adds_no_bases() {
    let net = duplicate_net();
    let mut rng = stream(5, Stream::Data);
    let inputs: Vec<Vec<f64>> = (0..60)
        .map(|i| {
            let mut x: Vec<f64> = (0..10).map(|_| 0.05 * normal(&mut rng)).collect();
            x[i % 3] += 2.0;
            x[3 + i % 4] += 1.0;
            x
        })
        .collect();
    let scale = ScaleConfig::new(ProjectionMode::Sgp, 2.0, vec![0.97, 0.97], 0.0);
    // n_s covers the whole set, so both tasks see the same representation
    let repr = RepresentationConfig {
        samples: 100,
        max_columns: 1000,
    };
    let mem0 = BasisMemory::for_network(&net);
    let mut sampling = stream(5, Stream::Sampling);
    let (mem1, first) = update_memory_after_task(&net, &inputs, &mem0, &scale, repr, 0, &mut sampling).unwrap();
    let (mem2, second) = update_memory_after_task(&net, &inputs, &mem1, &scale, repr, 1, &mut sampling).unwrap();

    for l in 0..2 {
        assert!(first[l].added > 0);
        assert_eq!(second[l].added, 0, "layer {l}");
        assert_eq!(mem2.layers[l].basis(), mem1.layers[l].basis());
        for (a, b) in mem1.layers[l].lambda().iter().zip(mem2.layers[l].lambda()) {
            assert!(b >= a);
        }
        assert!(mem2.layers[l].saturated_count() > mem1.layers[l].saturated_count() || mem2.layers[l].saturated_count() == mem2.layers[l].len());
    }
}

#[test]
fn full_rank_layer_only_updates_importance() {
    let mut rng = stream(9, Stream::Data);
    let basis = gaussian(4, 4, &mut rng).qr().q();
    let mem = LayerMemory::from_parts(from_na(&basis), vec![0.2, 0.4, 0.6, 0.8]).unwrap();
    let r = from_na(&gaussian(4, 7, &mut rng));
    let (next, report) = update_layer(&mem, &r, 0.99, 1.0, ProjectionMode::Sgp).unwrap();
    assert_eq!(report.added, 0);
    assert_eq!(next.basis(), mem.basis());
    assert!(next.lambda().iter().zip(mem.lambda()).all(|(n, o)| n >= o));
    assert!(next.lambda().iter().any(|l| *l == 1.0));
}
