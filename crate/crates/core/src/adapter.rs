//! Training-free Bayesianization of a low-rank adapter.
//!
//! A trained adapter `ΔW = B·A` is regrouped through the compact SVD
//! `B = U·diag(d)·Vᵀ` into `B′ = U·diag(d)` and `M = Vᵀ·A`, which leaves the
//! product unchanged. The posterior over the regrouped factor is
//! `A′_ij ~ N(M_ij, (σq / d_i)²)`: one shared scale `σq` and the `r` singular
//! values are the whole standard-deviation state, never an `r × n` table.
//!
//! Two ablation families share the same sampling path: a full-rank isotropic
//! perturbation added straight to the weight, and a constant `σq` on every
//! entry of `A′`.
//!
//! LoRA scale factors (`α / r`) are not modelled separately: fold them into
//! `B` with [`LoraAdapter::with_folded_scale`] before calling [`bayesianize`].
//
// Extension point: VeRA-style adapters `diag(b)·B·diag(d)·A` regroup by
// folding the two scaling vectors into B′ before the SVD; not implemented.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{compact_svd, matmul, DenseMatrix};
use crate::rng::{tag, Stream};

/// A deterministic low-rank adapter attached to one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    w0: DenseMatrix,
    b: DenseMatrix,
    a: DenseMatrix,
}

impl LoraAdapter {
    pub fn new(w0: DenseMatrix, b: DenseMatrix, a: DenseMatrix) -> Result<Self> {
        let (m, n) = w0.shape();
        let r = b.cols();
        if b.rows() != m || a.rows() != r || a.cols() != n {
            return Err(Error::Shape(format!(
                "adapter W0 {m}x{n}, B {}x{}, A {}x{}",
                b.rows(),
                b.cols(),
                a.rows(),
                a.cols()
            )));
        }
        if r == 0 || r > m.min(n) {
            return Err(Error::Shape(format!(
                "rank {r} must lie in 1..=min({m}, {n})"
            )));
        }
        Ok(Self { w0, b, a })
    }

    pub fn w0(&self) -> &DenseMatrix {
        &self.w0
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn rank(&self) -> usize {
        self.b.cols()
    }

    /// `ΔW = B·A`.
    pub fn delta(&self) -> DenseMatrix {
        matmul(&self.b, &self.a).expect("validated shapes")
    }

    /// Returns the adapter with `scale` multiplied into B.
    pub fn with_folded_scale(mut self, scale: f64) -> Self {
        self.b = self.b.scale(scale);
        self
    }
}

/// Variational family used when sampling weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum PosteriorFamily {
    /// `Ω_ij = σq / d_i`: the low-rank isotropic posterior.
    #[default]
    LowRankIsotropic,
    /// `N(0, σq²)` on every entry of the full `m × n` weight.
    FullRankIsotropic,
    /// `Ω_ij = σq` on every entry of `A′`.
    ConstantStd,
}

impl PosteriorFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::LowRankIsotropic => "final",
            Self::FullRankIsotropic => "fr",
            Self::ConstantStd => "cstd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "final" | "lowrank" | "low-rank-isotropic" => Some(Self::LowRankIsotropic),
            "fr" | "full-rank" | "full-rank-isotropic" => Some(Self::FullRankIsotropic),
            "cstd" | "c-std" | "constant-std" => Some(Self::ConstantStd),
            _ => None,
        }
    }
}

/// A regrouped adapter together with the posterior scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesianAdapter {
    w0: DenseMatrix,
    b_prime: DenseMatrix,
    m_mean: DenseMatrix,
    d: Vec<f64>,
    sigma_q: f64,
}

/// Regroups `{B, A}` into `{B′, M}` and attaches the posterior scale `σq`.
pub fn bayesianize(adapter: &LoraAdapter, sigma_q: f64) -> Result<BayesianAdapter> {
    check_sigma(sigma_q)?;
    let svd = compact_svd(&adapter.b)?;
    let b_prime = svd.u.scale_columns(&svd.d);
    let m_mean = matmul(&svd.v.transpose(), &adapter.a)?;
    Ok(BayesianAdapter {
        w0: adapter.w0.clone(),
        b_prime,
        m_mean,
        d: svd.d,
        sigma_q,
    })
}

fn check_sigma(sigma_q: f64) -> Result<()> {
    if !(sigma_q >= 0.0) || !sigma_q.is_finite() {
        return Err(Error::Domain(format!(
            "sigma_q must be finite and >= 0, got {sigma_q}"
        )));
    }
    Ok(())
}

/// Additive weight perturbation for one layer and one Monte-Carlo sample.
#[derive(Debug, Clone)]
pub enum WeightNoise<'a> {
    /// `B′·E` with `E` of shape `r × n`.
    LowRank {
        b_prime: &'a DenseMatrix,
        e: DenseMatrix,
    },
    /// `G` of shape `m × n`.
    Full { g: DenseMatrix },
}

impl WeightNoise<'_> {
    /// Perturbation applied to an input vector: `B′(E h)` or `G h`.
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        match self {
            Self::LowRank { b_prime, e } => b_prime.mul_vec(&e.mul_vec(h)),
            Self::Full { g } => g.mul_vec(h),
        }
    }

    /// The dense `m × n` perturbation.
    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Self::LowRank { b_prime, e } => matmul(b_prime, e).expect("noise shapes"),
            Self::Full { g } => g.clone(),
        }
    }

    pub fn raw(&self) -> &DenseMatrix {
        match self {
            Self::LowRank { e, .. } => e,
            Self::Full { g } => g,
        }
    }
}

impl BayesianAdapter {
    pub fn w0(&self) -> &DenseMatrix {
        &self.w0
    }

    pub fn b_prime(&self) -> &DenseMatrix {
        &self.b_prime
    }

    pub fn m_mean(&self) -> &DenseMatrix {
        &self.m_mean
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn sigma_q(&self) -> f64 {
        self.sigma_q
    }

    pub fn rank(&self) -> usize {
        self.d.len()
    }

    pub fn out_dim(&self) -> usize {
        self.b_prime.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.m_mean.cols()
    }

    pub fn with_sigma(&self, sigma_q: f64) -> Result<Self> {
        check_sigma(sigma_q)?;
        Ok(Self {
            sigma_q,
            ..self.clone()
        })
    }

    /// Per-row standard deviation of `A′` under the low-rank family.
    pub fn row_std(&self) -> Vec<f64> {
        self.d.iter().map(|di| self.sigma_q / di).collect()
    }

    /// The implied `r × n` standard-deviation matrix of a family.
    ///
    /// Materialized for oracle checks only. Panics for the full-rank family,
    /// which has no `A′`-space description.
    pub fn omega(&self, family: PosteriorFamily) -> DenseMatrix {
        let n = self.in_dim();
        match family {
            PosteriorFamily::LowRankIsotropic => {
                let rows = self.row_std();
                DenseMatrix::from_fn(self.rank(), n, |i, _| rows[i])
            }
            PosteriorFamily::ConstantStd => {
                DenseMatrix::from_fn(self.rank(), n, |_, _| self.sigma_q)
            }
            PosteriorFamily::FullRankIsotropic => {
                panic!("the full-rank family has no A′-space standard deviation matrix")
            }
        }
    }

    /// Mean weight `W0 + B′M`.
    pub fn mean_weight(&self) -> DenseMatrix {
        let delta = matmul(&self.b_prime, &self.m_mean).expect("regrouped shapes");
        self.w0.add(&delta).expect("regrouped shapes")
    }

    /// Noise draw with the stream key `(seed, layer, sample)`.
    ///
    /// Standard normals are drawn row-major and then scaled, so for a fixed
    /// key the draw is linear in `σq`.
    pub fn sample_noise_keyed(
        &self,
        family: PosteriorFamily,
        seed: u64,
        layer: u64,
        sample: u64,
    ) -> DenseMatrix {
        let mut stream = Stream::new(seed, &[tag::WEIGHT_NOISE, layer, sample]);
        let (rows, cols) = match family {
            PosteriorFamily::FullRankIsotropic => (self.out_dim(), self.in_dim()),
            _ => (self.rank(), self.in_dim()),
        };
        let std = match family {
            PosteriorFamily::LowRankIsotropic => self.row_std(),
            _ => vec![self.sigma_q; rows],
        };
        DenseMatrix::from_fn(rows, cols, |i, _| std[i] * stream.normal())
    }

    /// Noise draw for a single adapter: `E` (`r × n`) for the low-rank and
    /// constant-std families, `G` (`m × n`) for the full-rank family.
    pub fn sample_noise(&self, family: PosteriorFamily, seed: u64) -> DenseMatrix {
        self.sample_noise_keyed(family, seed, 0, 0)
    }

    pub fn weight_noise(
        &self,
        family: PosteriorFamily,
        seed: u64,
        layer: u64,
        sample: u64,
    ) -> WeightNoise<'_> {
        let raw = self.sample_noise_keyed(family, seed, layer, sample);
        match family {
            PosteriorFamily::FullRankIsotropic => WeightNoise::Full { g: raw },
            _ => WeightNoise::LowRank {
                b_prime: &self.b_prime,
                e: raw,
            },
        }
    }

    /// One weight realization `W0 + B′(M + E)` (or `W0 + B′M + G`).
    pub fn realize_weight(&self, family: PosteriorFamily, seed: u64) -> DenseMatrix {
        self.realize_weight_keyed(family, seed, 0, 0)
    }

    pub fn realize_weight_keyed(
        &self,
        family: PosteriorFamily,
        seed: u64,
        layer: u64,
        sample: u64,
    ) -> DenseMatrix {
        let noise = self.sample_noise_keyed(family, seed, layer, sample);
        let w = match family {
            PosteriorFamily::FullRankIsotropic => {
                let delta = matmul(&self.b_prime, &self.m_mean).expect("regrouped shapes");
                self.w0.add(&delta).and_then(|w| w.add(&noise))
            }
            _ => {
                let a_sample = self.m_mean.add(&noise).expect("noise shape");
                let delta = matmul(&self.b_prime, &a_sample).expect("regrouped shapes");
                self.w0.add(&delta)
            }
        };
        w.expect("finite weight realization")
    }
}

/// Bayesianized adapters of a network, keyed by layer index, sharing one `σq`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterSet {
    layers: Vec<(usize, BayesianAdapter)>,
    sigma_q: f64,
}

impl AdapterSet {
    /// Bayesianizes every `(layer index, adapter)` pair with a shared `σq`.
    pub fn bayesianize(adapters: &[(usize, LoraAdapter)], sigma_q: f64) -> Result<Self> {
        check_sigma(sigma_q)?;
        let mut layers = Vec::with_capacity(adapters.len());
        for (idx, adapter) in adapters {
            layers.push((*idx, bayesianize(adapter, sigma_q)?));
        }
        layers.sort_by_key(|(idx, _)| *idx);
        Ok(Self { layers, sigma_q })
    }

    pub fn sigma_q(&self) -> f64 {
        self.sigma_q
    }

    pub fn layers(&self) -> &[(usize, BayesianAdapter)] {
        &self.layers
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn get(&self, layer: usize) -> Option<&BayesianAdapter> {
        self.layers
            .iter()
            .find(|(idx, _)| *idx == layer)
            .map(|(_, b)| b)
    }

    /// Highest adapted layer index.
    pub fn last_layer(&self) -> Option<usize> {
        self.layers.last().map(|(idx, _)| *idx)
    }

    /// Same regrouped factors under a different shared scale.
    pub fn with_sigma(&self, sigma_q: f64) -> Result<Self> {
        check_sigma(sigma_q)?;
        let layers = self
            .layers
            .iter()
            .map(|(idx, b)| Ok((*idx, b.with_sigma(sigma_q)?)))
            .collect::<Result<_>>()?;
        Ok(Self { layers, sigma_q })
    }

    /// Noise for Monte-Carlo sample `sample`; `only_layer` restricts the draw to
    /// a single layer (the others stay deterministic).
    pub fn noise_plan(
        &self,
        family: PosteriorFamily,
        seed: u64,
        sample: u64,
        only_layer: Option<usize>,
    ) -> NoisePlan<'_> {
        let len = self.layers.last().map_or(0, |(idx, _)| idx + 1);
        let mut per_layer: Vec<Option<WeightNoise<'_>>> = (0..len).map(|_| None).collect();
        for (idx, bayes) in &self.layers {
            if only_layer.is_some_and(|only| only != *idx) {
                continue;
            }
            per_layer[*idx] = Some(bayes.weight_noise(family, seed, *idx as u64, sample));
        }
        NoisePlan { per_layer }
    }
}

/// Per-layer additive weight noise for one forward pass.
#[derive(Debug, Clone, Default)]
pub struct NoisePlan<'a> {
    per_layer: Vec<Option<WeightNoise<'a>>>,
}

impl<'a> NoisePlan<'a> {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_layers(per_layer: Vec<Option<WeightNoise<'a>>>) -> Self {
        Self { per_layer }
    }

    pub fn get(&self, layer: usize) -> Option<&WeightNoise<'a>> {
        self.per_layer.get(layer).and_then(Option::as_ref)
    }

    pub fn is_empty(&self) -> bool {
        self.per_layer.iter().all(Option::is_none)
    }
}
