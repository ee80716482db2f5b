//! Sparsifying compressors for Q-table deltas and the error-feedback memory.
//!
//! All operators act on the flattened `|S||A|` table as one vector.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(index, value)` pairs; indices must be strictly increasing and `< dim`.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut out = Self::empty(dim);
        for (i, v) in pairs {
            if i >= dim || out.indices.last().is_some_and(|&last| last >= i) {
                return Err(Error::InvalidConfig(format!(
                    "sparse index {i} is out of order or exceeds dimension {dim}"
                )));
            }
            out.indices.push(i);
            out.values.push(v);
        }
        Ok(out)
    }

    /// Keeps every nonzero coordinate of `dense`.
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        Self {
            dim: dense.len(),
            indices,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored `(index, value)` pairs.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.add_to(&mut out, 1.0);
        out
    }

    /// `dst += scale * self`.
    pub fn add_to(&self, dst: &mut [f64], scale: f64) {
        for (i, v) in self.iter() {
            dst[i] += scale * v;
        }
    }
}

/// Number of stored pairs in an uploaded payload.
pub fn payload_entries(h: &SparseVector) -> usize {
    h.nnz()
}

/// Selection-probability family for Sparsified-K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbabilityRule {
    /// `p_j = min(1, k |v_j| / ||v||_1)`.
    #[default]
    L1,
    /// `p_j = k / d` on every nonzero coordinate.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressorKind {
    Identity,
    TopK,
    SparsifiedK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompressorSpec {
    pub kind: CompressorKind,
    pub k: usize,
    pub rule: ProbabilityRule,
}

impl CompressorSpec {
    pub fn identity() -> Self {
        Self {
            kind: CompressorKind::Identity,
            k: 0,
            rule: ProbabilityRule::L1,
        }
    }

    pub fn top_k(k: usize) -> Self {
        Self {
            kind: CompressorKind::TopK,
            k,
            rule: ProbabilityRule::L1,
        }
    }

    pub fn sparsified_k(k: usize) -> Self {
        Self {
            kind: CompressorKind::SparsifiedK,
            k,
            rule: ProbabilityRule::L1,
        }
    }

    pub fn with_rule(mut self, rule: ProbabilityRule) -> Self {
        self.rule = rule;
        self
    }

    /// Checks `1 <= k <= d` for budgeted operators.
    pub fn validate(&self, d: usize) -> Result<()> {
        match self.kind {
            CompressorKind::Identity => Ok(()),
            _ => check_budget(self.k, d),
        }
    }

    /// Applies the operator without memory.
    pub fn compress(&self, v: &[f64], rng: &mut RngStream) -> Result<SparseVector> {
        match self.kind {
            CompressorKind::Identity => Ok(SparseVector::from_dense(v)),
            CompressorKind::TopK => top_k(v, self.k),
            CompressorKind::SparsifiedK => sparsified_k_with_rule(v, self.k, self.rule, rng),
        }
    }
}

impl fmt::Display for CompressorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.rule) {
            (CompressorKind::Identity, _) => f.write_str("identity"),
            (CompressorKind::TopK, _) => write!(f, "top:{}", self.k),
            (CompressorKind::SparsifiedK, ProbabilityRule::L1) => {
                write!(f, "sparsified:{}", self.k)
            }
            (CompressorKind::SparsifiedK, ProbabilityRule::Uniform) => {
                write!(f, "sparsified-uniform:{}", self.k)
            }
        }
    }
}

impl FromStr for CompressorSpec {
    type Err = Error;

    /// Accepts `identity`/`none`, `top:K`, `sparsified:K`, `sparsified-uniform:K`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "identity" || s == "none" {
            return Ok(Self::identity());
        }
        let (name, k) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidConfig(format!("unknown compressor {s:?}")))?;
        let k: usize = k
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad compressor budget in {s:?}")))?;
        match name {
            "top" | "topk" => Ok(Self::top_k(k)),
            "sparsified" | "sparsifiedk" => Ok(Self::sparsified_k(k)),
            "sparsified-uniform" => Ok(Self::sparsified_k(k).with_rule(ProbabilityRule::Uniform)),
            _ => Err(Error::InvalidConfig(format!("unknown compressor {s:?}"))),
        }
    }
}

fn check_budget(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::BudgetOutOfRange { k, d });
    }
    Ok(())
}

/// Indices of the `k` largest `|v_j|`, ties to the lower index, in selection order.
fn top_k_indices(v: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    let by_magnitude = |&a: &usize, &b: &usize| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b));
    if k < order.len() {
        order.select_nth_unstable_by(k, by_magnitude);
        order.truncate(k);
    }
    order.sort_unstable_by(by_magnitude);
    order
}

/// Keeps the `k` largest-magnitude coordinates (ties to the lower index).
/// Zero coordinates are never stored, so fewer than `k` pairs come back when
/// `v` has fewer than `k` nonzeros.
pub fn top_k(v: &[f64], k: usize) -> Result<SparseVector> {
    check_budget(k, v.len())?;
    let mut keep: Vec<usize> = top_k_indices(v, k)
        .into_iter()
        .filter(|&i| v[i] != 0.0)
        .collect();
    keep.sort_unstable();
    let values = keep.iter().map(|&i| v[i]).collect();
    Ok(SparseVector {
        dim: v.len(),
        indices: keep,
        values,
    })
}

/// `alpha = 1 - max_{j not in top-k} |v_j| / ||v||_inf`; 1 for `k = d`.
/// A result of 0 means the top-k set does not strictly dominate the rest.
pub fn contraction_alpha(v: &[f64], k: usize) -> Result<f64> {
    check_budget(k, v.len())?;
    let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let mut selected = vec![false; v.len()];
    for i in top_k_indices(v, k) {
        selected[i] = true;
    }
    let excluded = v
        .iter()
        .zip(&selected)
        .filter(|(_, &s)| !s)
        .fold(0.0f64, |m, (x, _)| m.max(x.abs()));
    Ok(1.0 - excluded / norm)
}

/// Per-coordinate selection probabilities used by Sparsified-K.
pub fn selection_probabilities(v: &[f64], k: usize, rule: ProbabilityRule) -> Vec<f64> {
    let d = v.len();
    match rule {
        ProbabilityRule::L1 => {
            let l1: f64 = v.iter().map(|x| x.abs()).sum();
            if l1 == 0.0 {
                return vec![0.0; d];
            }
            v.iter()
                .map(|x| (k as f64 * x.abs() / l1).min(1.0))
                .collect()
        }
        ProbabilityRule::Uniform => {
            let p = (k as f64 / d as f64).min(1.0);
            v.iter().map(|&x| if x != 0.0 { p } else { 0.0 }).collect()
        }
    }
}

/// Unbiased random sparsification with the default `||v||_1` rule.
pub fn sparsified_k(v: &[f64], k: usize, rng: &mut RngStream) -> Result<SparseVector> {
    sparsified_k_with_rule(v, k, ProbabilityRule::L1, rng)
}

/// Keeps coordinate `j` with probability `p_j` and rescales it to `v_j / p_j`.
/// One uniform draw is consumed per nonzero coordinate, in index order.
pub fn sparsified_k_with_rule(
    v: &[f64],
    k: usize,
    rule: ProbabilityRule,
    rng: &mut RngStream,
) -> Result<SparseVector> {
    check_budget(k, v.len())?;
    let probs = selection_probabilities(v, k, rule);
    let mut out = SparseVector::empty(v.len());
    for (j, (&x, &p)) in v.iter().zip(&probs).enumerate() {
        if p == 0.0 {
            continue;
        }
        if rng.uniform() < p {
            out.indices.push(j);
            out.values.push(x / p);
        }
    }
    Ok(out)
}

/// Characterization constants of a compressor on a given input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressorConstants {
    pub q2: f64,
    pub q_inf: f64,
    pub alpha: f64,
}

impl CompressorConstants {
    pub const IDENTITY: Self = Self {
        q2: 0.0,
        q_inf: 0.0,
        alpha: 1.0,
    };

    /// Unbiased-compressor constants from the smallest selection probability
    /// over the support.
    pub fn from_p_min(p_min: f64) -> Self {
        let q2 = 1.0 / p_min - 1.0;
        Self {
            q2,
            q_inf: q2.max(1.0),
            alpha: 1.0,
        }
    }

    /// Constants of `spec` evaluated on the input `v`. `None` when they are
    /// undefined (zero input).
    pub fn for_input(spec: &CompressorSpec, v: &[f64]) -> Option<Self> {
        match spec.kind {
            CompressorKind::Identity => Some(Self::IDENTITY),
            CompressorKind::TopK => contraction_alpha(v, spec.k).ok().map(|alpha| Self {
                q2: 0.0,
                q_inf: 0.0,
                alpha,
            }),
            CompressorKind::SparsifiedK => {
                support_p_min(v, spec.k, spec.rule).map(Self::from_p_min)
            }
        }
    }
}

/// Smallest nonzero selection probability; `None` for the zero vector.
pub fn support_p_min(v: &[f64], k: usize, rule: ProbabilityRule) -> Option<f64> {
    selection_probabilities(v, k, rule)
        .into_iter()
        .filter(|&p| p > 0.0)
        .min_by(f64::total_cmp)
}

/// Per-agent error-feedback memory.
#[derive(Debug, Clone, PartialEq)]
pub struct EfState {
    e: Vec<f64>,
}

impl EfState {
    pub fn new(dim: usize) -> Self {
        Self { e: vec![0.0; dim] }
    }

    pub fn error(&self) -> &[f64] {
        &self.e
    }

    pub fn linf_norm(&self) -> f64 {
        self.e.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Compresses `delta + e`, then sets `e <- delta + e - h`.
pub fn ef_compress(
    state: &mut EfState,
    delta: &[f64],
    spec: &CompressorSpec,
    rng: &mut RngStream,
) -> Result<SparseVector> {
    if delta.len() != state.e.len() {
        return Err(Error::DimensionMismatch {
            expected: state.e.len(),
            found: delta.len(),
        });
    }
    let corrected: Vec<f64> = delta.iter().zip(&state.e).map(|(d, e)| d + e).collect();
    let h = spec.compress(&corrected, rng)?;
    state.e = corrected;
    h.add_to(&mut state.e, -1.0);
    Ok(h)
}

/// Memoryless compression of the agent's progress.
pub fn direct_compress(
    delta: &[f64],
    spec: &CompressorSpec,
    rng: &mut RngStream,
) -> Result<SparseVector> {
    spec.compress(delta, rng)
}
