//! Brute-force checks of the covariance structure and the KL geometry at
//! tiny sizes.
//!
//! Everything here materializes `(m·n) × (m·n)` matrices and is capped at
//! [`ORACLE_SIZE_CAP`]. Vectorization is column-major: entry `W_ij` sits at
//! index `j·m + i`.
//!
//! The low-rank family's covariance is `σq² · I_n ⊗ U·Uᵀ` where `U` holds the
//! left singular vectors of `B`. In the orthonormal basis `Q = [U, U⊥]` this
//! becomes `σq² · I_n ⊗ diag(I_r, 0)`, which is the form the checks use.

use serde::{Deserialize, Serialize};

use crate::adapter::{bayesianize, BayesianAdapter, LoraAdapter, PosteriorFamily};
use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, cholesky_solve, kron, matmul, orthonormal_completion, symmetric_eigenvalues,
    DenseMatrix, ORACLE_SIZE_CAP,
};
use crate::numeric::linspace;
use crate::rng::Stream;

/// Gaussian over `vec(W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullCovariance {
    pub mu: Vec<f64>,
    pub sigma: DenseMatrix,
}

impl FullCovariance {
    /// Largest `|Σ_ij − Σ_ji|`.
    pub fn asymmetry(&self) -> f64 {
        self.sigma.max_abs_diff(&self.sigma.transpose())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(symmetric_eigenvalues(&self.sigma)?[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlParams {
    pub sigma_q: f64,
    pub sigma_p: f64,
    pub n: usize,
    pub r: usize,
    pub lambda: f64,
}

fn check_cap(m: usize, n: usize) -> Result<()> {
    if m * n > ORACLE_SIZE_CAP {
        return Err(Error::SizeCap {
            rows: m * n,
            cols: m * n,
            cap: ORACLE_SIZE_CAP,
        });
    }
    Ok(())
}

/// `[I_n ⊗ B′] · diag(vec(Ω)²) · [I_n ⊗ B′ᵀ]`, assembled literally.
pub fn covariance_from_omega(b_prime: &DenseMatrix, omega: &DenseMatrix) -> Result<DenseMatrix> {
    let (m, r) = b_prime.shape();
    if omega.rows() != r {
        return Err(Error::Shape(format!(
            "Ω has {} rows, B′ has {r} columns",
            omega.rows()
        )));
    }
    let n = omega.cols();
    check_cap(m, n)?;
    let lift = kron(&DenseMatrix::identity(n), b_prime)?;
    let var: Vec<f64> = omega.vec_col_major().iter().map(|w| w * w).collect();
    let scaled = lift.scale_columns(&var);
    matmul(&scaled, &lift.transpose())
}

/// `I_n ⊗ diag(I_r, 0_{m−r})`.
pub fn projection_matrix(m: usize, n: usize, r: usize) -> Result<DenseMatrix> {
    if r > m {
        return Err(Error::Shape(format!("rank {r} exceeds m = {m}")));
    }
    check_cap(m, n)?;
    let block = DenseMatrix::from_fn(m, m, |i, j| if i == j && i < r { 1.0 } else { 0.0 });
    kron(&DenseMatrix::identity(n), &block)
}

/// Distribution of `vec(W)` implied by a Bayesianized adapter.
pub fn full_covariance(bayes: &BayesianAdapter, family: PosteriorFamily) -> Result<FullCovariance> {
    let (m, n) = (bayes.out_dim(), bayes.in_dim());
    check_cap(m, n)?;
    let sigma = match family {
        PosteriorFamily::FullRankIsotropic => {
            DenseMatrix::identity(m * n).scale(bayes.sigma_q() * bayes.sigma_q())
        }
        _ => covariance_from_omega(bayes.b_prime(), &bayes.omega(family))?,
    };
    Ok(FullCovariance {
        mu: bayes.mean_weight().vec_col_major(),
        sigma,
    })
}

/// Orthonormal left singular vectors `U = B′·diag(d)⁻¹`.
pub fn left_singular_vectors(bayes: &BayesianAdapter) -> DenseMatrix {
    let inv: Vec<f64> = bayes.d().iter().map(|d| 1.0 / d).collect();
    bayes.b_prime().scale_columns(&inv)
}

/// `(I_n ⊗ Q)ᵀ · Σ · (I_n ⊗ Q)` for an `m × m` basis `Q`.
pub fn rotate_covariance(sigma: &DenseMatrix, q: &DenseMatrix, n: usize) -> Result<DenseMatrix> {
    let lift = kron(&DenseMatrix::identity(n), q)?;
    matmul(&matmul(&lift.transpose(), sigma)?, &lift)
}

/// Index set of the rank-`n·r` support in the singular-vector basis.
pub fn support_indices(m: usize, n: usize, r: usize) -> Vec<usize> {
    (0..n)
        .flat_map(|j| (0..r).map(move |i| j * m + i))
        .collect()
}

/// `KL[N(μq, Σq) ‖ N(μp, Σp)]`.
///
/// With `Σp = L·Lᵀ` and `λ_i` the eigenvalues of `L⁻¹·Σq·L⁻ᵀ`, the divergence
/// is `½·[Σ_i (λ_i − 1 − ln λ_i) + δᵀ·Σp⁻¹·δ]`. Summing per eigenvalue keeps
/// full relative accuracy when `Σq` is close to `Σp`.
pub fn gaussian_kl_general(
    mu_q: &[f64],
    sigma_q: &DenseMatrix,
    mu_p: &[f64],
    sigma_p: &DenseMatrix,
) -> Result<f64> {
    let d = mu_q.len();
    if mu_p.len() != d || sigma_q.shape() != (d, d) || sigma_p.shape() != (d, d) {
        return Err(Error::Shape(format!("KL inputs disagree on dimension {d}")));
    }
    let lp = cholesky(sigma_p)?;
    // W = L⁻¹ Σq, then C = L⁻¹ Wᵀ = L⁻¹ Σq L⁻ᵀ.
    let w_cols: Vec<Vec<f64>> = (0..d)
        .map(|j| forward_substitute(&lp, &sigma_q.column(j)))
        .collect();
    let w = DenseMatrix::from_fn(d, d, |i, j| w_cols[j][i]);
    let c_cols: Vec<Vec<f64>> = (0..d).map(|j| forward_substitute(&lp, w.row(j))).collect();
    let c = DenseMatrix::from_fn(d, d, |i, j| 0.5 * (c_cols[j][i] + c_cols[i][j]));
    let eig = symmetric_eigenvalues(&c)?;
    if let Some((pivot, &value)) = eig.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NotPositiveDefinite { pivot, value });
    }
    let spread: f64 = eig
        .iter()
        .map(|&l| {
            let u = l - 1.0;
            u - u.ln_1p()
        })
        .sum();
    let delta: Vec<f64> = mu_p.iter().zip(mu_q).map(|(p, q)| p - q).collect();
    let solved = cholesky_solve(&lp, &delta);
    let quad: f64 = delta.iter().zip(&solved).map(|(a, b)| a * b).sum();
    Ok(0.5 * (spread + quad))
}

/// Solves `L·x = b` for lower-triangular `L`.
fn forward_substitute(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..x.len() {
        let mut s = x[i];
        for k in 0..i {
            s -= l.get(i, k) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// `(n·r/2)·[log σp² − 1 − log σq² + σq²/σp²]`; `+∞` at `σq = 0`.
pub fn kl_lowrank_closed_form(p: &KlParams) -> Result<f64> {
    if !(p.sigma_p > 0.0) || !(p.sigma_q >= 0.0) {
        return Err(Error::Domain(format!(
            "KL needs σp > 0 and σq >= 0, got σp = {}, σq = {}",
            p.sigma_p, p.sigma_q
        )));
    }
    if p.sigma_q == 0.0 {
        return Ok(f64::INFINITY);
    }
    let ratio = p.sigma_q / p.sigma_p;
    let u = ratio * ratio - 1.0;
    Ok(0.5 * (p.n * p.r) as f64 * (u - u.ln_1p()))
}

/// KL between the low-rank posterior and the isotropic prior `N(μq, σp² I)`,
/// both restricted to the posterior's support.
pub fn restricted_kl(bayes: &BayesianAdapter, sigma_p: f64) -> Result<f64> {
    let (m, n, r) = (bayes.out_dim(), bayes.in_dim(), bayes.rank());
    let cov = full_covariance(bayes, PosteriorFamily::LowRankIsotropic)?;
    let q = orthonormal_completion(&left_singular_vectors(bayes));
    let rotated = rotate_covariance(&cov.sigma, &q, n)?;
    let idx = support_indices(m, n, r);
    let sq = rotated.select(&idx, &idx);
    let sp = DenseMatrix::identity(idx.len()).scale(sigma_p * sigma_p);
    let mu = vec![0.0; idx.len()];
    gaussian_kl_general(&mu, &sq, &mu, &sp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub argmin_lagrangian: f64,
    pub epsilon_tilde: f64,
    pub argmax_constrained: f64,
}

/// For each `λ`: the grid minimizer `σ_L` of `loss + λ·KL`, the loss level
/// `ε̃ = loss(σ_L)`, and the largest grid `σ` with `loss(σ) ≤ ε̃`.
pub fn vi_equivalence_sweep<F>(
    loss: F,
    lambdas: &[f64],
    params: &KlParams,
    sigma_grid: &[f64],
) -> Result<Vec<SweepRow>>
where
    F: Fn(f64) -> f64,
{
    if sigma_grid.is_empty() {
        return Err(Error::Empty("sigma grid".into()));
    }
    let losses: Vec<f64> = sigma_grid.iter().map(|&s| loss(s)).collect();
    if let Some(v) = losses.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "loss value {v} on the sigma grid"
        )));
    }
    let kls = sigma_grid
        .iter()
        .map(|&s| {
            kl_lowrank_closed_form(&KlParams {
                sigma_q: s,
                ..*params
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let objective = |k: usize| {
            if lambda == 0.0 {
                losses[k]
            } else {
                losses[k] + lambda * kls[k]
            }
        };
        let mut best = 0;
        for k in 1..sigma_grid.len() {
            if objective(k) < objective(best) {
                best = k;
            }
        }
        let eps = losses[best];
        let constrained = (0..sigma_grid.len())
            .rev()
            .find(|&k| losses[k] <= eps)
            .expect("the minimizer itself satisfies the constraint");
        rows.push(SweepRow {
            lambda,
            argmin_lagrangian: sigma_grid[best],
            epsilon_tilde: eps,
            argmax_constrained: sigma_grid[constrained],
        });
    }
    Ok(rows)
}

/// Seeded adapter with `m ≤ max_m`, `n ≤ max_n`, `r ≤ min(m, n, max_r)`.
pub fn random_adapter(seed: u64, max_m: usize, max_n: usize, max_r: usize) -> LoraAdapter {
    let mut s = Stream::new(seed, &[0x4f52_4143]);
    let m = 1 + s.below(max_m);
    let n = 1 + s.below(max_n);
    let r = 1 + s.below(m.min(n).min(max_r));
    random_adapter_with_shape(&mut s, m, n, r)
}

fn random_adapter_with_shape(s: &mut Stream, m: usize, n: usize, r: usize) -> LoraAdapter {
    let w0 = DenseMatrix::from_fn(m, n, |_, _| s.normal());
    let b = DenseMatrix::from_fn(m, r, |_, _| s.normal());
    let a = DenseMatrix::from_fn(r, n, |_, _| s.normal());
    LoraAdapter::new(w0, b, a).expect("consistent shapes")
}

/// Outcome of one registered check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Worst observed error (or the failing quantity).
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

/// Fault injection for exercising the failure path of the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Doubles one standard-deviation entry of the first adapter's `Ω`.
    PerturbOmega,
}

/// Names of the checks run by [`run_suite`], in order.
pub const CHECK_NAMES: [&str; 9] = [
    "covariance_identity",
    "cstd_covariance",
    "projection",
    "regrouping",
    "kl_agreement",
    "kl_minimum",
    "kl_monotone",
    "vi_sweep",
    "parameterization_independence",
];

fn outcome(name: &str, worst: f64, tolerance: f64, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        passed,
        worst,
        tolerance,
        detail,
    }
}

fn check_covariance_identity(fault: Fault) -> Result<CheckOutcome> {
    let tol = 1e-9;
    let mut worst: f64 = 0.0;
    let mut worst_canonical: f64 = 0.0;
    for seed in 0..100u64 {
        let lora = random_adapter(seed, 6, 4, 3);
        for sigma in [0.1, 1.0, 3.0] {
            let bayes = bayesianize(&lora, sigma)?;
            let (m, n, r) = (bayes.out_dim(), bayes.in_dim(), bayes.rank());
            let mut omega = bayes.omega(PosteriorFamily::LowRankIsotropic);
            if fault == Fault::PerturbOmega && seed == 0 {
                omega.set(0, 0, 2.0 * omega.get(0, 0));
            }
            let sigma_mat = covariance_from_omega(bayes.b_prime(), &omega)?;
            let u = left_singular_vectors(&bayes);
            let q = orthonormal_completion(&u);
            let rotated = rotate_covariance(&sigma_mat, &q, n)?;
            let target = projection_matrix(m, n, r)?.scale(sigma * sigma);
            worst = worst.max(rotated.max_abs_diff(&target));
            let uut = matmul(&u, &u.transpose())?;
            let canonical = kron(&DenseMatrix::identity(n), &uut)?.scale(sigma * sigma);
            worst = worst.max(sigma_mat.max_abs_diff(&canonical));
            worst_canonical = worst_canonical.max(sigma_mat.max_abs_diff(&target));
        }
    }
    Ok(outcome(
        "covariance_identity",
        worst,
        tol,
        worst <= tol,
        format!(
            "300 cases; singular-vector basis error {worst:.3e}; unrotated deviation from the block projector {worst_canonical:.3e}"
        ),
    ))
}

fn check_cstd() -> Result<CheckOutcome> {
    let tol = 1e-9;
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let lora = random_adapter(1000 + seed, 6, 4, 3);
        let bayes = bayesianize(&lora, 0.7)?;
        let sigma =
            covariance_from_omega(bayes.b_prime(), &bayes.omega(PosteriorFamily::ConstantStd))?;
        let bbt = matmul(bayes.b_prime(), &bayes.b_prime().transpose())?;
        let expected = kron(&DenseMatrix::identity(bayes.in_dim()), &bbt)?.scale(0.49);
        worst = worst.max(sigma.max_abs_diff(&expected));
    }
    Ok(outcome(
        "cstd_covariance",
        worst,
        tol,
        worst <= tol,
        "100 adapters".into(),
    ))
}

fn check_projection() -> Result<CheckOutcome> {
    let tol = 1e-12;
    let mut worst: f64 = 0.0;
    for m in 1..=6 {
        for n in 1..=4 {
            for r in 1..=m {
                let p = projection_matrix(m, n, r)?;
                worst = worst.max(matmul(&p, &p)?.max_abs_diff(&p));
                worst = worst.max((p.trace() - (n * r) as f64).abs());
                if r == m {
                    worst = worst.max(p.max_abs_diff(&DenseMatrix::identity(m * n)));
                }
            }
        }
    }
    Ok(outcome(
        "projection",
        worst,
        tol,
        worst <= tol,
        "idempotence, trace and full-rank identity".into(),
    ))
}

/// Relative max-entry error of the regrouped product.
pub fn regrouping_error(lora: &LoraAdapter) -> Result<f64> {
    let bayes = bayesianize(lora, 1.0)?;
    let regrouped = matmul(bayes.b_prime(), bayes.m_mean())?;
    let original = lora.delta();
    Ok(regrouped.max_abs_diff(&original) / original.max_abs())
}

fn check_regrouping() -> Result<CheckOutcome> {
    let tol = 1e-10;
    let mut worst: f64 = 0.0;
    for seed in 0..1000u64 {
        worst = worst.max(regrouping_error(&random_adapter(5000 + seed, 8, 8, 4))?);
    }
    Ok(outcome(
        "regrouping",
        worst,
        tol,
        worst <= tol,
        "1000 adapters".into(),
    ))
}

/// Random `(σq, σp, n, r)` tuple realized as an adapter with those sizes.
pub fn random_kl_case(seed: u64) -> Result<(BayesianAdapter, KlParams)> {
    let mut s = Stream::new(seed, &[0x4b4c]);
    let m = 1 + s.below(6);
    let n = 1 + s.below(4);
    let r = 1 + s.below(m.min(n).min(3));
    let sigma_p = s.uniform_in(0.2, 2.0);
    let sigma_q = sigma_p * s.uniform_in(0.05, 3.0);
    let lora = random_adapter_with_shape(&mut s, m, n, r);
    let bayes = bayesianize(&lora, sigma_q)?;
    Ok((
        bayes,
        KlParams {
            sigma_q,
            sigma_p,
            n,
            r,
            lambda: 1.0,
        },
    ))
}

fn check_kl_agreement() -> Result<CheckOutcome> {
    let tol = 1e-8;
    let mut worst: f64 = 0.0;
    for seed in 0..200u64 {
        let (bayes, params) = random_kl_case(seed)?;
        let general = restricted_kl(&bayes, params.sigma_p)?;
        let closed = kl_lowrank_closed_form(&params)?;
        worst = worst.max((general - closed).abs() / closed.abs().max(f64::MIN_POSITIVE));
    }
    Ok(outcome(
        "kl_agreement",
        worst,
        tol,
        worst <= tol,
        "200 tuples, relative error".into(),
    ))
}

fn check_kl_minimum() -> Result<CheckOutcome> {
    let tol = 1e-12;
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let (bayes, params) = random_kl_case(10_000 + seed)?;
        let at_prior = bayes.with_sigma(params.sigma_p)?;
        worst = worst.max(restricted_kl(&at_prior, params.sigma_p)?);
        worst = worst.max(kl_lowrank_closed_form(&KlParams {
            sigma_q: params.sigma_p,
            ..params
        })?);
    }
    Ok(outcome(
        "kl_minimum",
        worst,
        tol,
        worst <= tol,
        "KL at σq = σp".into(),
    ))
}

fn check_kl_monotone() -> Result<CheckOutcome> {
    let mut violations = 0usize;
    for (n, r) in [(1, 1), (4, 2), (3, 3)] {
        let grid = linspace(0.0, 1.0, 1001);
        let values = grid
            .iter()
            .map(|&s| {
                kl_lowrank_closed_form(&KlParams {
                    sigma_q: s,
                    sigma_p: 1.0,
                    n,
                    r,
                    lambda: 1.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        violations += values
            .windows(2)
            .filter(|w| w[1] >= w[0] && w[1] != 0.0)
            .count();
    }
    Ok(outcome(
        "kl_monotone",
        violations as f64,
        0.0,
        violations == 0,
        "strictly decreasing on [0, σp)".into(),
    ))
}

fn check_vi_sweep() -> Result<CheckOutcome> {
    let grid = linspace(0.0, 1.0, 10_000);
    let step = grid[1] - grid[0];
    let params = KlParams {
        sigma_q: 1.0,
        sigma_p: 1.0,
        n: 4,
        r: 2,
        lambda: 1.0,
    };
    let mut worst: f64 = 0.0;
    for c in [0.5, 2.0] {
        let rows = vi_equivalence_sweep(|s| c * s * s, &[0.1, 1.0, 10.0], &params, &grid)?;
        for row in rows {
            worst = worst.max((row.argmin_lagrangian - row.argmax_constrained).abs());
        }
    }
    Ok(outcome(
        "vi_sweep",
        worst,
        step,
        worst <= step,
        "loss c·σ², c ∈ {0.5, 2}, λ ∈ {0.1, 1, 10}".into(),
    ))
}

/// Covariances of the low-rank and constant-std families for `{B, A}` and
/// `{B·R, R⁻¹·A}` with a generic invertible `R`; returns the max abs
/// differences `(low-rank, constant-std)`.
pub fn reparameterization_gap(seed: u64, sigma: f64) -> Result<(f64, f64)> {
    let lora = random_adapter(seed, 6, 4, 3);
    let r = lora.rank();
    let mut s = Stream::new(seed, &[0x5245]);
    // Upper-triangular with diagonal in [1.5, 2.5]: invertible and not orthogonal.
    let rmat = DenseMatrix::from_fn(r, r, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => s.uniform_in(1.5, 2.5),
        std::cmp::Ordering::Less => s.normal(),
        std::cmp::Ordering::Greater => 0.0,
    });
    let rinv = upper_triangular_inverse(&rmat);
    let other = LoraAdapter::new(
        lora.w0().clone(),
        matmul(lora.b(), &rmat)?,
        matmul(&rinv, lora.a())?,
    )?;
    let mut gaps = [0.0; 2];
    for (slot, family) in [
        PosteriorFamily::LowRankIsotropic,
        PosteriorFamily::ConstantStd,
    ]
    .into_iter()
    .enumerate()
    {
        let a = full_covariance(&bayesianize(&lora, sigma)?, family)?;
        let b = full_covariance(&bayesianize(&other, sigma)?, family)?;
        gaps[slot] = a.sigma.max_abs_diff(&b.sigma);
    }
    Ok((gaps[0], gaps[1]))
}

fn upper_triangular_inverse(u: &DenseMatrix) -> DenseMatrix {
    let n = u.rows();
    let mut inv = DenseMatrix::zeros(n, n);
    for col in 0..n {
        for i in (0..n).rev() {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in (i + 1)..n {
                s -= u.get(i, k) * inv.get(k, col);
            }
            inv.set(i, col, s / u.get(i, i));
        }
    }
    inv
}

fn check_parameterization() -> Result<CheckOutcome> {
    let tol = 1e-8;
    let mut worst_final: f64 = 0.0;
    let mut min_cstd = f64::INFINITY;
    let mut cases = 0;
    for seed in 0..100u64 {
        let (fin, cstd) = reparameterization_gap(20_000 + seed, 1.0)?;
        worst_final = worst_final.max(fin);
        min_cstd = min_cstd.min(cstd);
        cases += 1;
    }
    Ok(outcome(
        "parameterization_independence",
        worst_final,
        tol,
        worst_final <= tol && min_cstd > 1e-3,
        format!("{cases} adapters; smallest constant-std gap {min_cstd:.3e}"),
    ))
}

/// Runs every registered check. Numerical errors inside a check count as a
/// failure of that check.
pub fn run_suite(fault: Fault) -> Vec<CheckOutcome> {
    type Check = Box<dyn Fn() -> Result<CheckOutcome>>;
    let checks: [(&str, Check); 9] = [
        (
            CHECK_NAMES[0],
            Box::new(move || check_covariance_identity(fault)),
        ),
        (CHECK_NAMES[1], Box::new(check_cstd)),
        (CHECK_NAMES[2], Box::new(check_projection)),
        (CHECK_NAMES[3], Box::new(check_regrouping)),
        (CHECK_NAMES[4], Box::new(check_kl_agreement)),
        (CHECK_NAMES[5], Box::new(check_kl_minimum)),
        (CHECK_NAMES[6], Box::new(check_kl_monotone)),
        (CHECK_NAMES[7], Box::new(check_vi_sweep)),
        (CHECK_NAMES[8], Box::new(check_parameterization)),
    ];
    checks
        .iter()
        .map(|(name, run)| {
            run().unwrap_or_else(|e| outcome(name, f64::NAN, 0.0, false, format!("error: {e}")))
        })
        .collect()
}
