use nalgebra::DMatrix;
use proptest::prelude::*;
use sgp_core::gpm::project_gradient;
use sgp_core::{LayerMemory, Matrix};

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn from_na(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

/// `k` orthonormal columns in `R^dim` from the QR factorization of `seed`.
fn orthonormal(seed: &[f64], dim: usize, k: usize) -> Matrix {
    let a = DMatrix::from_row_slice(dim, k, &seed[..dim * k]);
    from_na(&a.qr().q().columns(0, k).into_owned())
}

fn case() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..9, 1usize..5).prop_flat_map(|(dim, out)| {
        (1..=dim).prop_flat_map(move |k| {
            (
                Just(dim),
                Just(out),
                Just(k),
                prop::collection::vec(-1.0f64..1.0, dim * k),
                prop::collection::vec(-3.0f64..3.0, out * dim),
                prop::collection::vec(0.0f64..=1.0, k),
            )
        })
    })
}

fn well_conditioned(seed: &[f64], dim: usize, k: usize) -> bool {
    let a = DMatrix::from_row_slice(dim, k, &seed[..dim * k]);
    a.svd(false, false).singular_values.min() > 1e-3
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn full_importance_projector_is_idempotent((dim, out, k, seed, g, _l) in case()) {
        prop_assume!(well_conditioned(&seed, dim, k));
        let mem = LayerMemory::from_parts(orthonormal(&seed, dim, k), vec![1.0; k]).unwrap();
        let g = Matrix::new(out, dim, g).unwrap();
        let once = project_gradient(&g, &mem).unwrap();
        let twice = project_gradient(&once, &mem).unwrap();
        let diff = twice.sub(&once).unwrap().max_abs();
        prop_assert!(diff <= 1e-8, "diff {diff:e}");

        // P = I − MMᵀ as a matrix: P² = P
        let m = to_na(mem.basis());
        let p = DMatrix::<f64>::identity(dim, dim) - &m * m.transpose();
        prop_assert!((&p * &p - &p).amax() <= 1e-8);
    }

    #[test]
    fn per_basis_contraction((dim, out, k, seed, g, lambda) in case()) {
        prop_assume!(well_conditioned(&seed, dim, k));
        let mem = LayerMemory::from_parts(orthonormal(&seed, dim, k), lambda.clone()).unwrap();
        let g = Matrix::new(out, dim, g).unwrap();
        let projected = to_na(&project_gradient(&g, &mem).unwrap());
        let g = to_na(&g);
        let m = to_na(mem.basis());
        for i in 0..k {
            let u = m.column(i);
            let before = (&g * u).norm();
            let after = (&projected * u).norm();
            prop_assert!((after - (1.0 - lambda[i]) * before).abs() <= 1e-8 * before.max(1.0),
                "basis {i}: {after} vs {}", (1.0 - lambda[i]) * before);
        }
    }

    #[test]
    fn complement_is_untouched((dim, out, k, seed, g, lambda) in case(), v in prop::collection::vec(-1.0f64..1.0, 8)) {
        prop_assume!(well_conditioned(&seed, dim, k));
        let mem = LayerMemory::from_parts(orthonormal(&seed, dim, k), lambda).unwrap();
        let g = Matrix::new(out, dim, g).unwrap();
        let projected = to_na(&project_gradient(&g, &mem).unwrap());
        let m = to_na(mem.basis());
        let v = nalgebra::DVector::from_column_slice(&v[..dim]);
        let v_perp = &v - &m * (m.transpose() * &v);
        let g = to_na(&g);
        let diff = (&projected * &v_perp - &g * &v_perp).amax();
        prop_assert!(diff <= 1e-10, "diff {diff:e}");
    }
}

#[test]
fn empty_memory_is_identity() {
    let g = Matrix::from_fn(3, 4, |r, c| (r * 4 + c) as f64 - 5.0);
    assert_eq!(project_gradient(&g, &LayerMemory::empty(4)).unwrap(), g);
}

#[test]
fn zero_importance_is_identity() {
    let seed: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64) - 2.0 + 0.1 * i as f64).collect();
    let mem = LayerMemory::from_parts(orthonormal(&seed, 4, 3), vec![0.0; 3]).unwrap();
    let g = Matrix::from_fn(2, 4, |r, c| (r + 2 * c) as f64);
    let p = project_gradient(&g, &mem).unwrap();
    assert!(p.sub(&g).unwrap().max_abs() < 1e-14);
}

#[test]
fn wrong_width_is_rejected() {
    let g = Matrix::zeros(2, 3);
    assert!(project_gradient(&g, &LayerMemory::empty(4)).is_err());
}
