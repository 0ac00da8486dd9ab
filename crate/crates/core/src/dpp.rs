//! Finite determinantal point processes: subset probabilities, exhaustive
//! enumeration, Palm kernels, kernel scaling, the Laplace functional, and a
//! spectral sampler.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{LEnsemble, MarginalKernel};
use crate::linalg::{det, principal, sym_eigen};
use crate::{NodeId, Subset};

/// A diagonal entry at or below this makes Palm conditioning undefined.
pub const PALM_PIVOT_TOL: f64 = 1e-12;

/// Slack absorbed when clamping determinants into `[0, 1]`.
pub const DET_SLACK: f64 = 1e-12;

/// Default guard for `2^n` enumeration.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 20;

fn positions(ids: &[NodeId], psi: &Subset) -> Result<Vec<usize>> {
    psi.iter()
        .map(|&x| ids.iter().position(|&y| y == x).ok_or(Error::BadSubset(x)))
        .collect()
}

/// `P(Psi ⊇ psi) = det(K_psi)`.
pub fn inclusion_probability(k: &MarginalKernel, psi: &Subset) -> Result<f64> {
    let idx = positions(k.node_ids(), psi)?;
    Ok(det(&principal(k.matrix(), &idx)).clamp(0.0, 1.0))
}

/// `P(Psi = psi) = det(L_psi) / det(L + I)`.
pub fn subset_probability(l: &LEnsemble, psi: &Subset) -> Result<f64> {
    let idx = positions(l.node_ids(), psi)?;
    let n = l.len();
    let norm = det(&(l.matrix() + DMatrix::identity(n, n)));
    Ok((det(&principal(l.matrix(), &idx)) / norm).clamp(0.0, 1.0))
}

/// Full probability mass function over subsets, indexed by bitmask: bit `b`
/// stands for `node_ids[b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    node_ids: Vec<NodeId>,
    probs: Vec<f64>,
}

impl Pmf {
    pub fn node_ids(&self) -> &[NodeId] {
        &self.node_ids
    }

    /// Probabilities by bitmask.
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn mask_of(&self, psi: &Subset) -> Result<usize> {
        Ok(positions(&self.node_ids, psi)?
            .into_iter()
            .fold(0usize, |m, b| m | (1 << b)))
    }

    pub fn subset_of(&self, mask: usize) -> Subset {
        (0..self.node_ids.len())
            .filter(|b| mask & (1 << b) != 0)
            .map(|b| self.node_ids[b])
            .collect()
    }

    pub fn get(&self, psi: &Subset) -> Result<f64> {
        Ok(self.probs[self.mask_of(psi)?])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Subset, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(move |(m, &p)| (self.subset_of(m), p))
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Exhaustive pmf of the DPP with marginal kernel `k`, by Möbius inversion of
/// the inclusion probabilities over the subset lattice:
/// `P(Psi = psi) = sum_{psi' ⊇ psi} (-1)^{|psi'| - |psi|} det(K_psi')`.
///
/// Works for kernels with eigenvalue 1, which have no L-ensemble.
pub fn exact_pmf(k: &MarginalKernel) -> Result<Pmf> {
    exact_pmf_with_limit(k, DEFAULT_ENUMERATION_LIMIT)
}

pub fn exact_pmf_with_limit(k: &MarginalKernel, limit: usize) -> Result<Pmf> {
    let n = k.len();
    if n > limit {
        return Err(Error::EnumerationTooLarge { n, limit });
    }
    let size = 1usize << n;
    let mut g: Vec<f64> = (0..size)
        .map(|mask| {
            let idx: Vec<usize> = (0..n).filter(|b| mask & (1 << b) != 0).collect();
            det(&principal(k.matrix(), &idx))
        })
        .collect();
    for b in 0..n {
        let bit = 1 << b;
        for mask in 0..size {
            if mask & bit == 0 {
                g[mask] -= g[mask | bit];
            }
        }
    }
    Ok(Pmf {
        node_ids: k.node_ids().to_vec(),
        probs: g,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// Conditioned on presence and removed from the index set.
    Reduced,
    /// Conditioned on presence and kept, with an identity row/column.
    Retained,
}

/// Kernel of a Palm distribution together with the conditioning that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PalmKernel {
    pub kernel: MarginalKernel,
    pub conditioned_on: Vec<(NodeId, Conditioning)>,
}

impl PalmKernel {
    pub fn matrix(&self) -> &DMatrix<f64> {
        self.kernel.matrix()
    }

    pub fn node_ids(&self) -> &[NodeId] {
        self.kernel.node_ids()
    }

    /// Further reduce by `x`.
    pub fn reduce(&self, x: NodeId) -> Result<PalmKernel> {
        let mut out = palm_reduced(&self.kernel, x)?;
        let mut cond = self.conditioned_on.clone();
        cond.append(&mut out.conditioned_on);
        out.conditioned_on = cond;
        Ok(out)
    }

    /// Further condition on `x` keeping it in the index set.
    pub fn retain(&self, x: NodeId) -> Result<PalmKernel> {
        let mut out = palm_retained(&self.kernel, x)?;
        let mut cond = self.conditioned_on.clone();
        cond.append(&mut out.conditioned_on);
        out.conditioned_on = cond;
        Ok(out)
    }
}

fn pivot(k: &MarginalKernel, x: NodeId) -> Result<(usize, f64)> {
    let p = k.position(x).ok_or(Error::BadSubset(x))?;
    let kxx = k.matrix()[(p, p)];
    if kxx <= PALM_PIVOT_TOL {
        return Err(Error::NeverScheduled(x));
    }
    Ok((p, kxx))
}

/// Reduced Palm kernel given `x ∈ Psi`, indexed by the remaining nodes:
/// `[K^!_x]_{ab} = K_ab - K_ax K_bx / K_xx`.
pub fn palm_reduced(k: &MarginalKernel, x: NodeId) -> Result<PalmKernel> {
    let (p, kxx) = pivot(k, x)?;
    let keep: Vec<usize> = (0..k.len()).filter(|&i| i != p).collect();
    let m = k.matrix();
    let reduced = DMatrix::from_fn(keep.len(), keep.len(), |a, b| {
        let (ia, ib) = (keep[a], keep[b]);
        m[(ia, ib)] - m[(ia, p)] * m[(ib, p)] / kxx
    });
    let ids = keep.iter().map(|&i| k.node_ids()[i]).collect();
    Ok(PalmKernel {
        kernel: MarginalKernel::from_parts_unchecked(reduced, ids),
        conditioned_on: vec![(x, Conditioning::Reduced)],
    })
}

/// Non-reduced Palm kernel: same index set as `k`, the reduced kernel on the
/// other nodes and an identity row/column for `x`.
pub fn palm_retained(k: &MarginalKernel, x: NodeId) -> Result<PalmKernel> {
    let (p, kxx) = pivot(k, x)?;
    let m = k.matrix();
    let n = k.len();
    let full = DMatrix::from_fn(n, n, |a, b| {
        if a == p || b == p {
            if a == b {
                1.0
            } else {
                0.0
            }
        } else {
            m[(a, b)] - m[(a, p)] * m[(b, p)] / kxx
        }
    });
    Ok(PalmKernel {
        kernel: MarginalKernel::from_parts_unchecked(full, k.node_ids().to_vec()),
        conditioned_on: vec![(x, Conditioning::Retained)],
    })
}

/// Two-fold Palm kernel reduced by `xi` only: reduce by `xi`, then condition on `xj` keeping it.
pub fn palm_semi_reduced(k: &MarginalKernel, xi: NodeId, xj: NodeId) -> Result<PalmKernel> {
    if xi == xj {
        return Err(Error::SameNode(xi));
    }
    palm_reduced(k, xi)?.retain(xj)
}

/// Two-fold reduced Palm kernel (both points removed).
pub fn palm_two_fold_reduced(k: &MarginalKernel, xi: NodeId, xj: NodeId) -> Result<PalmKernel> {
    if xi == xj {
        return Err(Error::SameNode(xi));
    }
    palm_reduced(k, xi)?.reduce(xj)
}

/// Values `f(x)` in `[0, 1]` for the scaled kernel `K{f}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScalingFunction {
    pub values: BTreeMap<NodeId, f64>,
}

impl ScalingFunction {
    pub fn new(values: BTreeMap<NodeId, f64>) -> Self {
        ScalingFunction { values }
    }

    pub fn constant(ids: &[NodeId], v: f64) -> Self {
        ScalingFunction {
            values: ids.iter().map(|&i| (i, v)).collect(),
        }
    }
}

impl FromIterator<(NodeId, f64)> for ScalingFunction {
    fn from_iter<I: IntoIterator<Item = (NodeId, f64)>>(iter: I) -> Self {
        ScalingFunction {
            values: iter.into_iter().collect(),
        }
    }
}

/// `[K{f}]_ab = sqrt(1 - f(a)) K_ab sqrt(1 - f(b))`.
pub fn scale_kernel(k: &MarginalKernel, f: &ScalingFunction) -> Result<MarginalKernel> {
    let mut factors = Vec::with_capacity(k.len());
    for &id in k.node_ids() {
        let v = *f
            .values
            .get(&id)
            .ok_or_else(|| Error::BadArgument(format!("no scaling value for node {id}")))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::BadScaling { node: id, value: v });
        }
        factors.push((1.0 - v).sqrt());
    }
    let m = k.matrix();
    let scaled = DMatrix::from_fn(k.len(), k.len(), |a, b| factors[a] * m[(a, b)] * factors[b]);
    Ok(MarginalKernel::from_parts_unchecked(scaled, k.node_ids().to_vec()))
}

/// `det(I - K{f})`, clamped into `[0, 1]`.
pub fn det_complement_scaled(k: &MarginalKernel, f: &ScalingFunction) -> Result<f64> {
    let scaled = scale_kernel(k, f)?;
    let n = scaled.len();
    Ok(det(&(DMatrix::identity(n, n) - scaled.matrix())).clamp(0.0, 1.0))
}

/// Laplace functional `E[exp(-sum_{x in Psi} f(x))]` for `f >= 0`: the kernel is
/// scaled entrywise by `sqrt(1 - e^-f)`, i.e. `det(I - K{e^-f})` in [`scale_kernel`] terms.
/// Infinite values are allowed and exclude the node.
pub fn laplace_functional(k: &MarginalKernel, f: &BTreeMap<NodeId, f64>) -> Result<f64> {
    let mut g = BTreeMap::new();
    for &id in k.node_ids() {
        let v = *f
            .get(&id)
            .ok_or_else(|| Error::BadArgument(format!("no function value for node {id}")))?;
        if !(v >= 0.0) {
            return Err(Error::BadFunction { node: id, value: v });
        }
        g.insert(id, (-v).exp());
    }
    det_complement_scaled(k, &ScalingFunction::new(g))
}

/// Spectral sampler for an L-ensemble. The eigendecomposition is computed
/// once; each draw then
///
/// 1. keeps eigenvector `v_m` independently with probability `lambda_m / (1 + lambda_m)`;
/// 2. repeatedly picks node `i` with probability `sum_v v_i^2 / |V|`, then
///    projects the kept vectors onto the complement of `e_i` and
///    re-orthonormalizes them (modified Gram-Schmidt).
///
/// Random numbers are consumed in a fixed order (one uniform per eigenvector,
/// then one per selected node), so a given stream yields a given subset.
#[derive(Debug, Clone)]
pub struct SpectralSampler {
    node_ids: Vec<NodeId>,
    keep_prob: Vec<f64>,
    /// Eigenvectors, column-major, `n` entries per column.
    vectors: Vec<f64>,
    n: usize,
}

impl SpectralSampler {
    pub fn new(l: &LEnsemble) -> Self {
        let n = l.len();
        let eig = sym_eigen(l.matrix());
        let keep_prob = eig
            .values
            .iter()
            .map(|&v| {
                let v = v.max(0.0);
                v / (1.0 + v)
            })
            .collect();
        let vectors = eig.vectors.as_slice().to_vec();
        SpectralSampler {
            node_ids: l.node_ids().to_vec(),
            keep_prob,
            vectors,
            n,
        }
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.node_ids
    }

    /// Draws a subset as row positions (ascending) into `out`.
    pub fn sample_positions<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        let n = self.n;
        let mut basis: Vec<f64> = Vec::with_capacity(n * n);
        for (m, &p) in self.keep_prob.iter().enumerate() {
            if rng.random::<f64>() < p {
                basis.extend_from_slice(&self.vectors[m * n..(m + 1) * n]);
            }
        }
        let mut k = basis.len() / n;
        while k > 0 {
            let mut weights = vec![0.0; n];
            for c in 0..k {
                let col = &basis[c * n..(c + 1) * n];
                for (w, v) in weights.iter_mut().zip(col) {
                    *w += v * v;
                }
            }
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in weights.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            // guard against landing on a zero-weight tail after rounding
            if weights[pick] <= 0.0 {
                pick = (0..n).rev().find(|&i| weights[i] > 0.0).unwrap_or(pick);
            }
            out.push(pick);

            // eliminate the pick-th coordinate using the column with the largest entry there
            let pivot_col = (0..k)
                .max_by(|&a, &b| basis[a * n + pick].abs().total_cmp(&basis[b * n + pick].abs()))
                .unwrap();
            let pivot: Vec<f64> = basis[pivot_col * n..(pivot_col + 1) * n].to_vec();
            let pv = pivot[pick];
            let mut next: Vec<f64> = Vec::with_capacity((k - 1) * n);
            for c in (0..k).filter(|&c| c != pivot_col) {
                let col = &basis[c * n..(c + 1) * n];
                let factor = col[pick] / pv;
                next.extend(col.iter().zip(&pivot).map(|(v, p)| v - factor * p));
            }
            k -= 1;
            for c in 0..k {
                for d in 0..c {
                    let dot: f64 = (0..n).map(|i| next[c * n + i] * next[d * n + i]).sum();
                    for i in 0..n {
                        next[c * n + i] -= dot * next[d * n + i];
                    }
                }
                let norm = (0..n).map(|i| next[c * n + i].powi(2)).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for i in 0..n {
                        next[c * n + i] /= norm;
                    }
                }
            }
            basis = next;
        }
        out.sort_unstable();
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Subset {
        let mut pos = Vec::new();
        self.sample_positions(rng, &mut pos);
        pos.into_iter().map(|i| self.node_ids[i]).collect()
    }
}

/// One draw from the DPP with L-ensemble `l`.
pub fn sample<R: Rng + ?Sized>(l: &LEnsemble, rng: &mut R) -> Subset {
    SpectralSampler::new(l).sample(rng)
}
