//! Gradient projection memory with per-basis importance.
//!
//! Every projected layer keeps an orthonormal basis `M` (columns live in the
//! layer's input space) and an importance vector `λ ∈ [0, 1]^k`. During
//! training a weight gradient `G` (`out × in`) is replaced by
//! `G − G·M·diag(λ)·Mᵀ`: components along basis `i` shrink by `1 − λ_i`,
//! everything orthogonal to `M` is left alone. With every `λ_i = 1` this is
//! plain orthogonal projection (GPM).
//!
//! After each task the memory is updated from a representation matrix `R`:
//! the part of `R` outside `span(M)` contributes new bases, and the part
//! inside `span(M)` hands its singular values to the existing bases as
//! surrogate singular values, from which the task's importance is derived and
//! accumulated.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, orthonormalize_against, svd, Matrix, RANK_TOLERANCE};
use crate::net::{batch_from_samples, build_representation_matrix, Network};

/// New basis columns that survive re-orthonormalization need at least this
/// much norm left after removing existing directions.
pub const REORTHO_DROP_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMode {
    /// Every stored basis gets importance 1.
    Gpm,
    /// Importance from singular values, scaled by `alpha`.
    Sgp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleConfig {
    pub alpha: f64,
    /// Base threshold per layer, used for the first task.
    pub epsilon_th: Vec<f64>,
    /// Added to every layer's threshold after each task.
    pub epsilon_increment: f64,
    pub mode: ProjectionMode,
}

impl ScaleConfig {
    pub fn new(mode: ProjectionMode, alpha: f64, epsilon_th: Vec<f64>, epsilon_increment: f64) -> Self {
        Self {
            alpha,
            epsilon_th,
            epsilon_increment,
            mode,
        }
    }

    /// Threshold for `layer` when updating after task `task_index` (0-based).
    pub fn threshold(&self, layer: usize, task_index: usize) -> f64 {
        self.epsilon_th[layer] + task_index as f64 * self.epsilon_increment
    }

    pub fn validate(&self, layers: usize, tasks: usize) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be finite and non-negative, got {}", self.alpha)));
        }
        if self.epsilon_th.len() != layers {
            return Err(Error::Config(format!(
                "{} epsilon_th values for {layers} layers",
                self.epsilon_th.len()
            )));
        }
        if !(self.epsilon_increment >= 0.0) {
            return Err(Error::Config("epsilon_increment must be non-negative".into()));
        }
        for (l, &e) in self.epsilon_th.iter().enumerate() {
            let last = e + tasks as f64 * self.epsilon_increment;
            if !(e > 0.0 && last < 1.0) {
                return Err(Error::Config(format!(
                    "layer {l}: epsilon_th {e} with increment {} leaves (0, 1) within {tasks} tasks",
                    self.epsilon_increment
                )));
            }
        }
        Ok(())
    }
}

/// Basis memory of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMemory {
    basis: Matrix,
    lambda: Vec<f64>,
}

impl LayerMemory {
    pub fn empty(dim: usize) -> Self {
        Self {
            basis: Matrix::zeros(dim, 0),
            lambda: Vec::new(),
        }
    }

    /// Validates orthonormality (1e-8), `λ ∈ [0, 1]` and matching lengths.
    pub fn from_parts(basis: Matrix, lambda: Vec<f64>) -> Result<Self> {
        if lambda.len() != basis.cols() {
            return Err(Error::Dimension {
                op: "importance length",
                lhs: (lambda.len(), 1),
                rhs: (basis.cols(), 1),
            });
        }
        if basis.cols() > basis.rows() {
            return Err(Error::Consistency(format!(
                "{} bases exceed dimension {}",
                basis.cols(),
                basis.rows()
            )));
        }
        if let Some(l) = lambda.iter().find(|l| !(**l >= 0.0 && **l <= 1.0)) {
            return Err(Error::Consistency(format!("importance {l} outside [0, 1]")));
        }
        let mem = Self { basis, lambda };
        let err = mem.orthonormality_error();
        if err > 1e-8 {
            return Err(Error::Consistency(format!("basis not orthonormal (max |MᵀM − I| = {err:e})")));
        }
        Ok(mem)
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Number of stored bases `k`.
    pub fn len(&self) -> usize {
        self.basis.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.cols() == 0
    }

    /// Input dimension of the layer.
    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    /// `max |MᵀM − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let g = self.basis.transpose_matmul(&self.basis).expect("same rows");
        let mut worst: f64 = 0.0;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) - target).abs());
            }
        }
        worst
    }

    /// Bases whose importance is exactly 1 (fully frozen directions).
    pub fn saturated_count(&self) -> usize {
        self.lambda.iter().filter(|l| **l >= 1.0).count()
    }

    /// Share of bases with importance 1; 0 for an empty memory.
    pub fn saturated_fraction(&self) -> f64 {
        if self.lambda.is_empty() {
            0.0
        } else {
            self.saturated_count() as f64 / self.lambda.len() as f64
        }
    }

    /// Counts of `λ` in `bins` equal-width bins over `[0, 1]`; 1.0 lands in
    /// the last bin.
    pub fn importance_histogram(&self, bins: usize) -> Vec<usize> {
        let mut counts = vec![0; bins];
        if bins == 0 {
            return counts;
        }
        for &l in &self.lambda {
            let b = ((l * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        counts
    }
}

/// Memory for every projected layer of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMemory {
    pub layers: Vec<LayerMemory>,
}

impl BasisMemory {
    /// Empty memory shaped for `net` (one entry per hidden layer).
    pub fn for_network(net: &Network) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerMemory::empty(l.spec.weight_shape().1))
                .collect(),
        }
    }

    pub fn total_bases(&self) -> usize {
        self.layers.iter().map(LayerMemory::len).sum()
    }
}

/// Importance of each basis from its singular value:
/// `λ_i = (α+1)σ_i / (ασ_i + max σ)`. The largest value maps to exactly 1.
pub fn compute_importance(sigma: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if sigma.is_empty() {
        return Err(Error::Degenerate("empty singular value vector"));
    }
    if !(alpha >= 0.0) {
        return Err(Error::Config(format!("alpha must be non-negative, got {alpha}")));
    }
    let max = sigma.iter().fold(0.0f64, |m, s| m.max(*s));
    if !(max > 0.0) {
        return Err(Error::Degenerate("all singular values are zero"));
    }
    Ok(sigma
        .iter()
        .map(|&s| {
            if s == max {
                1.0
            } else {
                ((alpha + 1.0) * s / (alpha * s + max)).clamp(0.0, 1.0)
            }
        })
        .collect())
}

/// `G − G·M·diag(λ)·Mᵀ` for an `out × in` gradient.
pub fn project_gradient(grad: &Matrix, mem: &LayerMemory) -> Result<Matrix> {
    if grad.cols() != mem.dim() {
        return Err(Error::Dimension {
            op: "project_gradient",
            lhs: grad.shape(),
            rhs: mem.basis.shape(),
        });
    }
    if mem.is_empty() {
        return Ok(grad.clone());
    }
    let mut coeff = grad.matmul(&mem.basis)?;
    let k = mem.len();
    for (i, v) in coeff.as_mut_slice().iter_mut().enumerate() {
        *v *= mem.lambda[i % k];
    }
    grad.sub(&coeff.matmul_transpose(&mem.basis)?)
}

/// Splits `R` into the part outside `span(M)` and the part inside:
/// returns `(R − MMᵀR, MMᵀR)`.
pub fn compute_residual(r: &Matrix, mem: &LayerMemory) -> Result<(Matrix, Matrix)> {
    if r.rows() != mem.dim() {
        return Err(Error::Dimension {
            op: "compute_residual",
            lhs: r.shape(),
            rhs: mem.basis.shape(),
        });
    }
    if mem.is_empty() {
        return Ok((r.clone(), Matrix::zeros(r.rows(), r.cols())));
    }
    let projected = mem.basis.matmul(&mem.basis.transpose_matmul(r)?)?;
    Ok((r.sub(&projected)?, projected))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewBases {
    /// `in × k_τ` leading left singular vectors of the residual.
    pub basis: Matrix,
    /// The matching `k_τ` singular values.
    pub sigma_hat: Vec<f64>,
}

/// Picks the fewest leading directions of the residual such that, together
/// with what `M` already captures, at least `epsilon_th` of `‖R‖²` is covered.
/// `k_τ = 0` when the memory already suffices.
pub fn select_new_bases(residual: &Matrix, r_projected: &Matrix, r_full: &Matrix, epsilon_th: f64) -> Result<NewBases> {
    if residual.shape() != r_full.shape() || r_projected.shape() != r_full.shape() {
        return Err(Error::Dimension {
            op: "select_new_bases",
            lhs: residual.shape(),
            rhs: r_full.shape(),
        });
    }
    let none = || NewBases {
        basis: Matrix::zeros(r_full.rows(), 0),
        sigma_hat: Vec::new(),
    };
    let total = r_full.frobenius_norm_sq();
    let target = epsilon_th * total;
    let mut captured = r_projected.frobenius_norm_sq();
    if r_full.is_empty() || total == 0.0 || captured >= target {
        return Ok(none());
    }
    let residual_norm = residual.frobenius_norm();
    if residual_norm <= RANK_TOLERANCE * linalg::norm(r_full.as_slice()) {
        return Ok(none());
    }
    let dec = svd(residual)?;
    let floor = RANK_TOLERANCE * linalg::norm(r_full.as_slice());
    let usable = linalg::significant_count(&dec.sigma).min(dec.sigma.iter().filter(|s| **s > floor).count());
    let mut k = 0;
    while k < usable && captured < target {
        captured += dec.sigma[k] * dec.sigma[k];
        k += 1;
    }
    Ok(NewBases {
        basis: dec.u.leading_columns(k),
        sigma_hat: dec.sigma[..k].to_vec(),
    })
}

/// `C = MᵀU` for singular vectors `U` of `MMᵀR`. Columns whose singular value
/// is significant must lie in `span(M)` (residual ≤ 1e-6).
pub fn projection_coefficients(mem: &LayerMemory, u_tau_m: &Matrix, sigma_tau_m: &[f64]) -> Result<Matrix> {
    if u_tau_m.rows() != mem.dim() || sigma_tau_m.len() != u_tau_m.cols() {
        return Err(Error::Dimension {
            op: "projection_coefficients",
            lhs: u_tau_m.shape(),
            rhs: (mem.dim(), sigma_tau_m.len()),
        });
    }
    let c = mem.basis.transpose_matmul(u_tau_m)?;
    let max = sigma_tau_m.iter().fold(0.0f64, |m, s| m.max(*s));
    if max > 0.0 {
        let back = mem.basis.matmul(&c)?;
        for (j, &s) in sigma_tau_m.iter().enumerate() {
            if s <= 1e-8 * max {
                continue;
            }
            let off: f64 = (0..u_tau_m.rows())
                .map(|r| {
                    let d = u_tau_m.get(r, j) - back.get(r, j);
                    d * d
                })
                .sum::<f64>();
            let off = crate::math::sqrt(off);
            if off > 1e-6 {
                return Err(Error::Consistency(format!(
                    "singular vector {j} leaves span(M) by {off:e}"
                )));
            }
        }
    }
    Ok(c)
}

/// Surrogate singular values for the stored bases:
/// `σ′_i = sqrt(Σ_j c_ij² σ_j²)`.
pub fn surrogate_singular_values(c: &Matrix, sigma_tau_m: &[f64]) -> Result<Vec<f64>> {
    if c.cols() != sigma_tau_m.len() {
        return Err(Error::Dimension {
            op: "surrogate_singular_values",
            lhs: c.shape(),
            rhs: (sigma_tau_m.len(), 1),
        });
    }
    Ok((0..c.rows())
        .map(|i| {
            let energy: f64 = sigma_tau_m
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    let cij = c.get(i, j);
                    cij * cij * s * s
                })
                .sum();
            crate::math::sqrt(energy)
        })
        .collect())
}

/// `[σ′; σ̂]` plus both sides of the coverage inequality
/// `Σσ′² + Σσ̂² ≥ ε‖R‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSpectrum {
    pub sigma: Vec<f64>,
    /// `Σσ′² + Σσ̂²`.
    pub captured: f64,
    /// `ε‖R‖²`.
    pub required: f64,
}

impl AssembledSpectrum {
    pub fn slack(&self) -> f64 {
        self.captured - self.required
    }
}

pub fn assemble_singular_vector(
    sigma_prime: &[f64],
    sigma_hat: &[f64],
    r_full_norm_sq: f64,
    epsilon_th: f64,
) -> Result<AssembledSpectrum> {
    let mut sigma = Vec::with_capacity(sigma_prime.len() + sigma_hat.len());
    sigma.extend_from_slice(sigma_prime);
    sigma.extend_from_slice(sigma_hat);
    let captured: f64 = sigma.iter().map(|s| s * s).sum();
    let required = epsilon_th * r_full_norm_sq;
    if captured < required - 1e-8 * r_full_norm_sq {
        return Err(Error::Consistency(format!(
            "captured energy {captured:e} below required {required:e}"
        )));
    }
    Ok(AssembledSpectrum {
        sigma,
        captured,
        required,
    })
}

/// Adds the task importance to the old bases (clamped at 1), appends the new
/// bases with their importance, and re-orthonormalizes the appended columns
/// against the existing ones. `lambda_tau` lists the old `k` entries first.
pub fn accumulate_importance(mem: &LayerMemory, lambda_tau: &[f64], new_basis: &Matrix) -> Result<LayerMemory> {
    let k = mem.len();
    if lambda_tau.len() != k + new_basis.cols() || new_basis.rows() != mem.dim() {
        return Err(Error::Dimension {
            op: "accumulate_importance",
            lhs: (lambda_tau.len(), new_basis.rows()),
            rhs: (k + new_basis.cols(), mem.dim()),
        });
    }
    let mut lambda: Vec<f64> = mem
        .lambda
        .iter()
        .zip(lambda_tau)
        .map(|(old, add)| {
            let sum = old + add;
            if sum >= 1.0 {
                1.0
            } else {
                sum
            }
        })
        .collect();

    let (fresh, kept) = orthonormalize_against(&mem.basis, new_basis, REORTHO_DROP_TOLERANCE)?;
    lambda.extend(kept.iter().map(|&j| lambda_tau[k + j]));
    let basis = mem.basis.hcat(&fresh)?;
    Ok(LayerMemory { basis, lambda })
}

/// What happened to one layer during a memory update.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerUpdate {
    pub layer: usize,
    pub epsilon_th: f64,
    /// Bases before the update.
    pub previous_bases: usize,
    /// Bases appended (after re-orthonormalization).
    pub added: usize,
    /// `‖R‖²`.
    pub energy: f64,
    /// `‖MMᵀR‖²`.
    pub projected_energy: f64,
    /// Sum of squared surrogate singular values.
    pub surrogate_energy: f64,
    /// `None` when the representation was all zeros and nothing changed.
    pub spectrum: Option<AssembledSpectrum>,
    pub lambda_tau: Vec<f64>,
}

/// Updates one layer's memory from its representation matrix.
pub fn update_layer(
    mem: &LayerMemory,
    r: &Matrix,
    epsilon_th: f64,
    alpha: f64,
    mode: ProjectionMode,
) -> Result<(LayerMemory, LayerUpdate)> {
    let energy = r.frobenius_norm_sq();
    let mut report = LayerUpdate {
        layer: 0,
        epsilon_th,
        previous_bases: mem.len(),
        added: 0,
        energy,
        projected_energy: 0.0,
        surrogate_energy: 0.0,
        spectrum: None,
        lambda_tau: Vec::new(),
    };
    if energy == 0.0 {
        return Ok((mem.clone(), report));
    }
    let (residual, projected) = compute_residual(r, mem)?;
    report.projected_energy = projected.frobenius_norm_sq();
    let fresh = select_new_bases(&residual, &projected, r, epsilon_th)?;

    let sigma_prime = if mem.is_empty() {
        Vec::new()
    } else if report.projected_energy == 0.0 {
        vec![0.0; mem.len()]
    } else {
        let dec = svd(&projected)?;
        // rank(MMᵀR) ≤ k: only the first k singular pairs carry energy
        let keep = mem.len().min(dec.sigma.len());
        let u = dec.u.leading_columns(keep);
        let sigma = &dec.sigma[..keep];
        let c = projection_coefficients(mem, &u, sigma)?;
        surrogate_singular_values(&c, sigma)?
    };
    report.surrogate_energy = sigma_prime.iter().map(|s| s * s).sum();

    let spectrum = assemble_singular_vector(&sigma_prime, &fresh.sigma_hat, energy, epsilon_th)?;
    let lambda_tau = match mode {
        ProjectionMode::Gpm => vec![1.0; spectrum.sigma.len()],
        ProjectionMode::Sgp => compute_importance(&spectrum.sigma, alpha)?,
    };
    let updated = accumulate_importance(mem, &lambda_tau, &fresh.basis)?;
    report.added = updated.len() - mem.len();
    report.spectrum = Some(spectrum);
    report.lambda_tau = lambda_tau;
    if updated.orthonormality_error() > 1e-8 {
        return Err(Error::Numerical(format!(
            "basis lost orthonormality ({:e})",
            updated.orthonormality_error()
        )));
    }
    Ok((updated, report))
}

/// Settings for building representation matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepresentationConfig {
    /// Samples drawn from the task's training data (`n_s`).
    pub samples: usize,
    /// Column cap per representation matrix (matters for conv layers).
    pub max_columns: usize,
}

impl Default for RepresentationConfig {
    fn default() -> Self {
        Self {
            samples: 125,
            max_columns: 1000,
        }
    }
}

/// Memory update after training task `task_index` (0-based): draws `n_s`
/// training inputs, captures every layer's input and updates each layer.
pub fn update_memory_after_task<R: Rng + ?Sized>(
    net: &Network,
    train_inputs: &[Vec<f64>],
    mem: &BasisMemory,
    scale: &ScaleConfig,
    repr: RepresentationConfig,
    task_index: usize,
    rng: &mut R,
) -> Result<(BasisMemory, Vec<LayerUpdate>)> {
    if train_inputs.is_empty() {
        return Err(Error::EmptyRepresentation(0));
    }
    if mem.layers.len() != net.layers().len() {
        return Err(Error::Dimension {
            op: "memory layers",
            lhs: (mem.layers.len(), 1),
            rhs: (net.layers().len(), 1),
        });
    }
    let n = repr.samples.min(train_inputs.len());
    let mut picks = index::sample(rng, train_inputs.len(), n).into_vec();
    picks.sort_unstable();
    let samples: Vec<&[f64]> = picks.iter().map(|&i| train_inputs[i].as_slice()).collect();
    let batch = batch_from_samples(&samples)?;
    let acts = net.capture(&batch)?;

    let mut layers = Vec::with_capacity(mem.layers.len());
    let mut reports = Vec::with_capacity(mem.layers.len());
    for (l, layer_mem) in mem.layers.iter().enumerate() {
        let r = build_representation_matrix(&acts, l, repr.max_columns)?;
        let eps = scale.threshold(l, task_index);
        let (updated, mut report) = update_layer(layer_mem, &r, eps, scale.alpha, scale.mode)?;
        report.layer = l;
        layers.push(updated);
        reports.push(report);
    }
    Ok((BasisMemory { layers }, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn e(dim: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    fn mem_from(cols: &[Vec<f64>], lambda: &[f64]) -> LayerMemory {
        let dim = cols[0].len();
        LayerMemory::from_parts(Matrix::from_columns(dim, cols).unwrap(), lambda.to_vec()).unwrap()
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn importance_examples() {
        let l = compute_importance(&[4.0, 2.0], 1.0).unwrap();
        assert_eq!(l[0], 1.0);
        assert!((l[1] - 2.0 / 3.0).abs() < 1e-15);
        for alpha in [0.0, 0.5, 3.0, 1e6] {
            assert_eq!(compute_importance(&[7.0, 3.0, 0.1], alpha).unwrap()[0], 1.0);
        }
        let big = compute_importance(&[4.0, 2.0], 1e9).unwrap();
        assert_eq!(big[0], 1.0);
        assert!((big[1] - 1.0).abs() <= 1e-8);
        // alpha = 0 gives σ / max
        let zero = compute_importance(&[4.0, 1.0], 0.0).unwrap();
        assert_eq!(zero, vec![1.0, 0.25]);
        assert!(matches!(compute_importance(&[0.0, 0.0], 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn projection_examples() {
        let g = Matrix::new(1, 2, vec![2.0, 3.0]).unwrap();
        assert_eq!(project_gradient(&g, &LayerMemory::empty(2)).unwrap(), g);
        let full = mem_from(&[e(2, 0)], &[1.0]);
        assert_eq!(project_gradient(&g, &full).unwrap().as_slice(), &[0.0, 3.0]);
        let half = mem_from(&[e(2, 0)], &[0.5]);
        assert_eq!(project_gradient(&g, &half).unwrap().as_slice(), &[1.0, 3.0]);
        assert!(matches!(
            project_gradient(&Matrix::zeros(1, 3), &full),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn residual_examples() {
        let r = random(3, 4, 1);
        let (res, proj) = compute_residual(&r, &LayerMemory::empty(3)).unwrap();
        assert_eq!(res, r);
        assert_eq!(proj, Matrix::zeros(3, 4));

        let m = mem_from(&[e(3, 0)], &[1.0]);
        let (res, proj) = compute_residual(&r, &m).unwrap();
        assert_eq!(res.row(0), &[0.0; 4]);
        assert_eq!(res.row(1), r.row(1));
        assert_eq!(res.row(2), r.row(2));
        assert_eq!(proj.row(0), r.row(0));

        // columns already inside span(M)
        let m2 = mem_from(&[e(3, 0), e(3, 1)], &[1.0, 1.0]);
        let inside = Matrix::from_fn(3, 4, |row, c| if row < 2 { (row + c) as f64 } else { 0.0 });
        let (res, _) = compute_residual(&inside, &m2).unwrap();
        assert!(res.frobenius_norm() <= 1e-8 * inside.frobenius_norm());
    }

    #[test]
    fn new_bases_saturated_and_first_task() {
        let m = mem_from(&[e(2, 0), e(2, 1)], &[1.0, 1.0]);
        let r = random(2, 5, 3);
        let (res, proj) = compute_residual(&r, &m).unwrap();
        let nb = select_new_bases(&res, &proj, &r, 0.99).unwrap();
        assert_eq!(nb.basis.cols(), 0);
        assert!(nb.sigma_hat.is_empty());

        let r = random(6, 9, 4);
        let (res, proj) = compute_residual(&r, &LayerMemory::empty(6)).unwrap();
        for eps in [0.3, 0.7, 0.9, 0.97] {
            let nb = select_new_bases(&res, &proj, &r, eps).unwrap();
            let k = linalg::select_rank(&svd(&r).unwrap().sigma, eps).unwrap();
            assert_eq!(nb.sigma_hat.len(), k);
            assert_eq!(nb.basis, svd(&r).unwrap().u.leading_columns(k));
        }
    }

    #[test]
    fn new_bases_constructed_example() {
        // ‖R‖² = 1: 0.5 along e1 (in memory), residual σ̂² = [0.3, 0.2]
        let r = Matrix::new(
            3,
            3,
            vec![
                0.5f64.sqrt(), 0.0, 0.0, //
                0.0, 0.3f64.sqrt(), 0.0, //
                0.0, 0.0, 0.2f64.sqrt(),
            ],
        )
        .unwrap();
        let m = mem_from(&[e(3, 0)], &[1.0]);
        let (res, proj) = compute_residual(&r, &m).unwrap();
        let nb = select_new_bases(&res, &proj, &r, 0.79).unwrap();
        assert_eq!(nb.sigma_hat.len(), 1);
        assert!((nb.sigma_hat[0] * nb.sigma_hat[0] - 0.3).abs() < 1e-14);
        assert_eq!(nb.basis.column(0), e(3, 1));
        let nb = select_new_bases(&res, &proj, &r, 0.81).unwrap();
        assert_eq!(nb.sigma_hat.len(), 2);
        let nb = select_new_bases(&res, &proj, &r, 0.5).unwrap();
        assert_eq!(nb.sigma_hat.len(), 0);
    }

    #[test]
    fn coefficient_examples() {
        let m = mem_from(&[e(3, 0), e(3, 1)], &[1.0, 1.0]);
        let c = projection_coefficients(&m, m.basis(), &[1.0, 1.0]).unwrap();
        assert_eq!(c, Matrix::identity(2));

        let h = core::f64::consts::FRAC_1_SQRT_2;
        let u = Matrix::from_columns(3, &[vec![h, h, 0.0]]).unwrap();
        let c = projection_coefficients(&m, &u, &[2.0]).unwrap();
        assert_eq!(c.as_slice(), &[h, h]);

        // a column outside span(M) is only allowed with zero singular value
        let u = Matrix::from_columns(3, &[vec![h, h, 0.0], e(3, 2)]).unwrap();
        assert!(projection_coefficients(&m, &u, &[2.0, 0.0]).is_ok());
        assert!(matches!(
            projection_coefficients(&m, &u, &[2.0, 1.0]),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn surrogate_examples() {
        assert_eq!(surrogate_singular_values(&Matrix::identity(2), &[3.0, 1.0]).unwrap(), vec![3.0, 1.0]);
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let c = Matrix::new(2, 1, vec![h, h]).unwrap();
        let s = surrogate_singular_values(&c, &[2.0]).unwrap();
        for v in &s {
            assert!((v - 2.0f64.sqrt()).abs() < 1e-15);
        }
        assert!((s.iter().map(|x| x * x).sum::<f64>() - 4.0).abs() < 1e-14);
        assert_eq!(surrogate_singular_values(&c, &[0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn assemble_examples() {
        let a = assemble_singular_vector(&[], &[3.0, 1.0], 10.0, 0.9).unwrap();
        assert_eq!(a.sigma, vec![3.0, 1.0]);
        let a = assemble_singular_vector(&[2.0, 1.0], &[0.5], 5.25, 0.9).unwrap();
        assert_eq!(a.sigma, vec![2.0, 1.0, 0.5]);
        assert!(a.slack() >= 0.0);
        assert!(matches!(
            assemble_singular_vector(&[1.0], &[], 10.0, 0.5),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn accumulate_examples() {
        let m = mem_from(&[e(3, 0), e(3, 1), e(3, 2)], &[0.7, 0.3, 1.0]);
        let up = accumulate_importance(&m, &[0.5, 0.4, 0.2], &Matrix::zeros(3, 0)).unwrap();
        assert_eq!(up.lambda()[0], 1.0);
        assert!((up.lambda()[1] - 0.7).abs() < 1e-15);
        assert_eq!(up.lambda()[2], 1.0);
        assert!(matches!(
            accumulate_importance(&m, &[0.5], &Matrix::zeros(3, 0)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn accumulate_appends_and_reorthonormalizes() {
        let m = mem_from(&[e(3, 0)], &[0.4]);
        // slightly non-orthogonal new column gets cleaned, duplicate gets dropped
        let new = Matrix::from_columns(3, &[vec![1e-9, 1.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let up = accumulate_importance(&m, &[0.1, 0.6, 0.9], &new).unwrap();
        assert_eq!(up.len(), 2);
        assert_eq!(up.lambda(), &[0.5, 0.6]);
        assert!(up.orthonormality_error() < 1e-15);
    }

    #[test]
    fn first_task_update_is_rank_selection_plus_importance() {
        let r = random(5, 12, 8);
        let (mem, rep) = update_layer(&LayerMemory::empty(5), &r, 0.9, 2.0, ProjectionMode::Sgp).unwrap();
        let dec = svd(&r).unwrap();
        let k = linalg::select_rank(&dec.sigma, 0.9).unwrap();
        assert_eq!(mem.len(), k);
        assert_eq!(rep.added, k);
        assert_eq!(mem.lambda(), compute_importance(&dec.sigma[..k], 2.0).unwrap().as_slice());
        assert_eq!(mem.saturated_count(), 1);
    }

    #[test]
    fn full_rank_memory_only_updates_importance() {
        let mem = mem_from(&[e(2, 0), e(2, 1)], &[0.2, 0.1]);
        let r = random(2, 6, 9);
        let (up, rep) = update_layer(&mem, &r, 0.95, 1.0, ProjectionMode::Sgp).unwrap();
        assert_eq!(rep.added, 0);
        assert_eq!(up.len(), 2);
        assert!(up.lambda().iter().zip(mem.lambda()).all(|(a, b)| a > b));
        assert_eq!(up.basis(), mem.basis());
    }

    #[test]
    fn gpm_mode_sets_every_importance_to_one() {
        let r = random(6, 10, 2);
        let (mem, _) = update_layer(&LayerMemory::empty(6), &r, 0.9, 0.0, ProjectionMode::Gpm).unwrap();
        assert!(mem.lambda().iter().all(|l| *l == 1.0));
    }

    #[test]
    fn histogram_and_fraction() {
        let m = mem_from(&[e(3, 0), e(3, 1), e(3, 2)], &[1.0, 0.05, 0.55]);
        assert_eq!(m.importance_histogram(10), vec![1, 0, 0, 0, 0, 1, 0, 0, 0, 1]);
        assert!((m.saturated_fraction() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(LayerMemory::empty(3).saturated_fraction(), 0.0);
    }

    #[test]
    fn scale_config_validation() {
        let ok = ScaleConfig::new(ProjectionMode::Sgp, 10.0, vec![0.97; 2], 0.003);
        ok.validate(2, 9).unwrap();
        assert!((ok.threshold(1, 3) - 0.979).abs() < 1e-15);
        assert!(ok.validate(3, 9).is_err());
        assert!(ok.validate(2, 11).is_err());
        assert!(ScaleConfig::new(ProjectionMode::Sgp, -1.0, vec![0.9], 0.0).validate(1, 1).is_err());
    }
}
