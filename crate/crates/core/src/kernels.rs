//! Determinantal kernels: the marginal kernel `K` (eigenvalues in `[0, 1]`)
//! and the L-ensemble `L` (positive semi-definite), with conversions
//! `K = L (L + I)^-1` and `L = (I - K)^-1 - I`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{from_eigen, sym_eigen, symmetrize, symmetry_defect};
use crate::propagation::NetworkGeometry;
use crate::NodeId;

/// Tolerance for symmetry and for eigenvalues just outside their admissible range.
pub const EIGEN_TOL: f64 = 1e-9;

fn default_ids(n: usize) -> Vec<NodeId> {
    (0..n).map(NodeId).collect()
}

fn check_shape(matrix: &DMatrix<f64>, node_ids: &[NodeId]) -> Result<()> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::KernelInvalid(format!(
            "matrix is {}x{}, not square",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if node_ids.len() != matrix.nrows() {
        return Err(Error::KernelInvalid(format!(
            "{} node ids for a {}x{} matrix",
            node_ids.len(),
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let mut sorted = node_ids.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::KernelInvalid("duplicate node ids".into()));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::KernelInvalid("matrix has non-finite entries".into()));
    }
    let defect = symmetry_defect(matrix);
    if defect > EIGEN_TOL {
        return Err(Error::KernelInvalid(format!("symmetry defect {defect:e} exceeds {EIGEN_TOL:e}")));
    }
    Ok(())
}

/// Marginal kernel: `P(Psi ⊇ psi) = det(K_psi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalKernel {
    matrix: DMatrix<f64>,
    node_ids: Vec<NodeId>,
}

impl MarginalKernel {
    /// Validates, symmetrizes, and clamps eigenvalues within tolerance into `[0, 1]`.
    pub fn new(matrix: DMatrix<f64>, node_ids: Vec<NodeId>) -> Result<Self> {
        check_shape(&matrix, &node_ids)?;
        let matrix = symmetrize(&matrix);
        let eig = sym_eigen(&matrix);
        if let (Some(&lo), Some(&hi)) = (eig.values.first(), eig.values.last()) {
            if lo < -EIGEN_TOL || hi > 1.0 + EIGEN_TOL {
                return Err(Error::KernelInvalid(format!(
                    "eigenvalues span [{lo}, {hi}], outside [0, 1]"
                )));
            }
            let matrix = if lo < 0.0 || hi > 1.0 {
                let clamped: Vec<f64> = eig.values.iter().map(|v| v.clamp(0.0, 1.0)).collect();
                from_eigen(&clamped, &eig.vectors)
            } else {
                matrix
            };
            let mut matrix = matrix;
            for i in 0..matrix.nrows() {
                matrix[(i, i)] = matrix[(i, i)].clamp(0.0, 1.0);
            }
            return Ok(MarginalKernel { matrix, node_ids });
        }
        Ok(MarginalKernel { matrix, node_ids })
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        Self::new(matrix, default_ids(n))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_matrix(matrix_from_rows(rows)?)
    }

    /// Independent Bernoulli selection with the given probabilities.
    pub fn diagonal(probabilities: &[f64]) -> Result<Self> {
        if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::BadSpec(format!("probability {p} outside [0, 1]")));
        }
        Ok(MarginalKernel {
            matrix: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(probabilities)),
            node_ids: default_ids(probabilities.len()),
        })
    }

    /// For matrices produced by operations that preserve validity (Palm
    /// reduction, scaling, conversion from a valid L).
    pub(crate) fn from_parts_unchecked(matrix: DMatrix<f64>, node_ids: Vec<NodeId>) -> Self {
        debug_assert_eq!(matrix.nrows(), node_ids.len());
        MarginalKernel { matrix, node_ids }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.node_ids
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    /// Row/column position of `id`.
    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.node_ids.iter().position(|&x| x == id)
    }

    /// `[K]_{a,b}` by node id.
    pub fn entry(&self, a: NodeId, b: NodeId) -> Result<f64> {
        let i = self.position(a).ok_or(Error::BadSubset(a))?;
        let j = self.position(b).ok_or(Error::BadSubset(b))?;
        Ok(self.matrix[(i, j)])
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        sym_eigen(&self.matrix).values
    }

    /// Expected number of selected nodes.
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// L-ensemble: `P(Psi = psi) = det(L_psi) / det(L + I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LEnsemble {
    matrix: DMatrix<f64>,
    node_ids: Vec<NodeId>,
}

impl LEnsemble {
    pub fn new(matrix: DMatrix<f64>, node_ids: Vec<NodeId>) -> Result<Self> {
        check_shape(&matrix, &node_ids)?;
        let matrix = symmetrize(&matrix);
        let eig = sym_eigen(&matrix);
        if let Some(&lo) = eig.values.first() {
            if lo < -EIGEN_TOL {
                return Err(Error::KernelInvalid(format!(
                    "L-ensemble has negative eigenvalue {lo}"
                )));
            }
            if lo < 0.0 {
                let clamped: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
                return Ok(LEnsemble {
                    matrix: from_eigen(&clamped, &eig.vectors),
                    node_ids,
                });
            }
        }
        Ok(LEnsemble { matrix, node_ids })
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        Self::new(matrix, default_ids(n))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_matrix(matrix_from_rows(rows)?)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.node_ids
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.node_ids.iter().position(|&x| x == id)
    }
}

/// How a scheduler kernel is specified in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `[L]_ij = scale * exp(-|x_i - x_j|^2 / sigma^2)`.
    Gaussian { sigma: f64, scale: f64 },
    /// `[L]_ij = q_i [S]_ij q_j`.
    QualitySimilarity {
        quality: Vec<f64>,
        similarity: Vec<Vec<f64>>,
    },
    #[serde(rename = "explicit_K", alias = "explicit_k")]
    ExplicitK { matrix: Vec<Vec<f64>> },
    #[serde(rename = "explicit_L", alias = "explicit_l")]
    ExplicitL { matrix: Vec<Vec<f64>> },
    /// Diagonal `K`: independent selection with probability `p_i`.
    AlohaDiagonal { probabilities: Vec<f64> },
}

impl KernelSpec {
    /// Parameter checks that do not need the geometry.
    pub fn check(&self) -> Result<()> {
        match self {
            KernelSpec::Gaussian { sigma, scale } => {
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::BadSpec(format!("gaussian sigma must be > 0, got {sigma}")));
                }
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::BadSpec(format!("gaussian scale must be > 0, got {scale}")));
                }
            }
            KernelSpec::QualitySimilarity {
                quality,
                similarity,
            } => {
                if let Some(q) = quality.iter().find(|q| !(**q > 0.0 && q.is_finite())) {
                    return Err(Error::BadSpec(format!("quality values must be > 0, got {q}")));
                }
                let s = matrix_from_rows(similarity)?;
                if s.nrows() != quality.len() {
                    return Err(Error::BadSpec(format!(
                        "similarity is {}x{} but quality has {} entries",
                        s.nrows(),
                        s.ncols(),
                        quality.len()
                    )));
                }
            }
            KernelSpec::ExplicitK { matrix } | KernelSpec::ExplicitL { matrix } => {
                matrix_from_rows(matrix)?;
            }
            KernelSpec::AlohaDiagonal { probabilities } => {
                if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return Err(Error::BadSpec(format!("aloha probability {p} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    /// True when the kernel is given directly as an L-ensemble.
    pub fn is_l_form(&self) -> bool {
        matches!(
            self,
            KernelSpec::Gaussian { .. } | KernelSpec::QualitySimilarity { .. } | KernelSpec::ExplicitL { .. }
        )
    }

    /// Number of nodes the kernel description fixes, if any.
    pub fn size(&self) -> Option<usize> {
        match self {
            KernelSpec::Gaussian { .. } => None,
            KernelSpec::QualitySimilarity { quality, .. } => Some(quality.len()),
            KernelSpec::ExplicitK { matrix } | KernelSpec::ExplicitL { matrix } => Some(matrix.len()),
            KernelSpec::AlohaDiagonal { probabilities } => Some(probabilities.len()),
        }
    }
}

/// Square matrix from rows; ragged or non-square input is `BadSpec`.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(Error::BadSpec(format!(
            "matrix row {i} has {} entries, expected {n}",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn check_size(spec: &KernelSpec, n: usize) -> Result<()> {
    match spec.size() {
        Some(k) if k != n => Err(Error::BadSpec(format!(
            "kernel describes {k} nodes but the geometry has {n}"
        ))),
        _ => Ok(()),
    }
}

/// Builds the L-ensemble for `spec` over the geometry's scheduled points.
/// Marginal-kernel specs are converted with [`k_to_l`].
pub fn build_l(spec: &KernelSpec, geometry: &NetworkGeometry) -> Result<LEnsemble> {
    spec.check()?;
    let n = geometry.len();
    check_size(spec, n)?;
    match spec {
        KernelSpec::Gaussian { sigma, scale } => {
            let pts = geometry.scheduled_points();
            let m = DMatrix::from_fn(n, n, |i, j| {
                let d = pts[i].distance(&pts[j]);
                scale * (-(d * d) / (sigma * sigma)).exp()
            });
            LEnsemble::from_matrix(m)
        }
        KernelSpec::QualitySimilarity {
            quality,
            similarity,
        } => {
            let s = matrix_from_rows(similarity)?;
            let defect = symmetry_defect(&s);
            if defect > EIGEN_TOL {
                return Err(Error::KernelInvalid(format!("similarity symmetry defect {defect:e}")));
            }
            let lo = sym_eigen(&symmetrize(&s)).values.first().copied().unwrap_or(0.0);
            if lo < -EIGEN_TOL {
                return Err(Error::KernelInvalid(format!(
                    "similarity matrix is not positive semi-definite (min eigenvalue {lo})"
                )));
            }
            let m = DMatrix::from_fn(n, n, |i, j| quality[i] * s[(i, j)] * quality[j]);
            LEnsemble::from_matrix(m)
        }
        KernelSpec::ExplicitL { matrix } => LEnsemble::from_rows(matrix),
        KernelSpec::ExplicitK { .. } | KernelSpec::AlohaDiagonal { .. } => {
            k_to_l(&build_kernel(spec, geometry)?)
        }
    }
}

/// Builds the marginal kernel for `spec`; L-ensemble specs go through [`l_to_k`].
pub fn build_kernel(spec: &KernelSpec, geometry: &NetworkGeometry) -> Result<MarginalKernel> {
    spec.check()?;
    check_size(spec, geometry.len())?;
    match spec {
        KernelSpec::ExplicitK { matrix } => MarginalKernel::from_rows(matrix),
        KernelSpec::AlohaDiagonal { probabilities } => MarginalKernel::diagonal(probabilities),
        _ => Ok(l_to_k(&build_l(spec, geometry)?)),
    }
}

/// `K = L (L + I)^-1`, computed on the eigenbasis of `L` (`lambda -> lambda / (1 + lambda)`).
pub fn l_to_k(l: &LEnsemble) -> MarginalKernel {
    let eig = sym_eigen(l.matrix());
    let mapped: Vec<f64> = eig
        .values
        .iter()
        .map(|&v| {
            let v = v.max(0.0);
            v / (1.0 + v)
        })
        .collect();
    let mut k = from_eigen(&mapped, &eig.vectors);
    for i in 0..k.nrows() {
        k[(i, i)] = k[(i, i)].clamp(0.0, 1.0);
    }
    MarginalKernel::from_parts_unchecked(k, l.node_ids().to_vec())
}

/// `L = (I - K)^-1 - I = K (I - K)^-1` (`mu -> mu / (1 - mu)` on the eigenbasis).
pub fn k_to_l(k: &MarginalKernel) -> Result<LEnsemble> {
    let eig = sym_eigen(k.matrix());
    if let Some(&hi) = eig.values.last() {
        if hi > 1.0 - EIGEN_TOL {
            return Err(Error::NotLRepresentable { max_eigenvalue: hi });
        }
    }
    let mapped: Vec<f64> = eig
        .values
        .iter()
        .map(|&v| {
            let v = v.max(0.0);
            v / (1.0 - v)
        })
        .collect();
    Ok(LEnsemble {
        matrix: from_eigen(&mapped, &eig.vectors),
        node_ids: k.node_ids().to_vec(),
    })
}

/// Diagnostics for a candidate marginal kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    pub symmetry_defect: f64,
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub min_diagonal: f64,
    pub max_diagonal: f64,
    pub valid: bool,
    pub problems: Vec<String>,
}

/// Checks symmetry, eigenvalue range and diagonal range of a candidate `K`.
/// Report only; never fails.
pub fn validate(matrix: &DMatrix<f64>) -> ValidationReport {
    let mut problems = Vec::new();
    if matrix.nrows() != matrix.ncols() {
        problems.push(format!("matrix is {}x{}, not square", matrix.nrows(), matrix.ncols()));
        return ValidationReport {
            n: matrix.nrows(),
            symmetry_defect: f64::NAN,
            eigenvalues: Vec::new(),
            min_eigenvalue: f64::NAN,
            max_eigenvalue: f64::NAN,
            min_diagonal: f64::NAN,
            max_diagonal: f64::NAN,
            valid: false,
            problems,
        };
    }
    let n = matrix.nrows();
    let defect = symmetry_defect(matrix);
    if defect > EIGEN_TOL {
        problems.push(format!("symmetry defect {defect} exceeds {EIGEN_TOL:e}"));
    }
    let values = if matrix.iter().all(|v| v.is_finite()) {
        sym_eigen(&symmetrize(matrix)).values
    } else {
        problems.push("matrix has non-finite entries".into());
        Vec::new()
    };
    let min_eig = values.first().copied().unwrap_or(0.0);
    let max_eig = values.last().copied().unwrap_or(0.0);
    if !values.is_empty() && (min_eig < -EIGEN_TOL || max_eig > 1.0 + EIGEN_TOL) {
        problems.push(format!("eigenvalues span [{min_eig}, {max_eig}], outside [0, 1]"));
    }
    let diag: Vec<f64> = (0..n).map(|i| matrix[(i, i)]).collect();
    let min_diag = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let max_diag = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if n > 0 && (min_diag < -EIGEN_TOL || max_diag > 1.0 + EIGEN_TOL) {
        problems.push(format!("diagonal spans [{min_diag}, {max_diag}], outside [0, 1]"));
    }
    ValidationReport {
        n,
        symmetry_defect: defect,
        eigenvalues: values,
        min_eigenvalue: min_eig,
        max_eigenvalue: max_eig,
        min_diagonal: if n > 0 { min_diag } else { 0.0 },
        max_diagonal: if n > 0 { max_diag } else { 0.0 },
        valid: problems.is_empty(),
        problems,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::Point;
    use proptest::prelude::*;

    fn rows(m: &[&[f64]]) -> Vec<Vec<f64>> {
        m.iter().map(|r| r.to_vec()).collect()
    }

    fn txrx(points: &[(f64, f64)]) -> NetworkGeometry {
        NetworkGeometry::txrx(points.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn gaussian_coincident_points_all_ones() {
        let g = txrx(&[(0.3, 0.3), (0.3, 0.3)]);
        let l = build_l(&KernelSpec::Gaussian { sigma: 1.0, scale: 1.0 }, &g).unwrap();
        assert!((l.matrix() - DMatrix::from_element(2, 2, 1.0)).abs().max() < 1e-15);
    }

    #[test]
    fn gaussian_wide_sigma_tends_to_scaled_ones() {
        let g = txrx(&[(0.0, 0.0), (0.01, 0.0), (0.0, 0.02)]);
        let l = build_l(&KernelSpec::Gaussian { sigma: 1e4, scale: 0.7 }, &g).unwrap();
        assert!((l.matrix() - DMatrix::from_element(3, 3, 0.7)).abs().max() < 1e-9);
    }

    #[test]
    fn gaussian_unit_distance() {
        let g = txrx(&[(0.0, 0.0), (1.0, 0.0)]);
        let l = build_l(&KernelSpec::Gaussian { sigma: 1.0, scale: 1.0 }, &g).unwrap();
        assert!((l.matrix()[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((l.matrix()[(0, 1)] - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn gaussian_bad_sigma() {
        let g = txrx(&[(0.0, 0.0)]);
        assert!(matches!(
            build_l(&KernelSpec::Gaussian { sigma: 0.0, scale: 1.0 }, &g),
            Err(Error::BadSpec(_))
        ));
    }

    #[test]
    fn quality_similarity_product() {
        let g = txrx(&[(0.0, 0.0), (1.0, 0.0)]);
        let spec = KernelSpec::QualitySimilarity {
            quality: vec![2.0, 0.5],
            similarity: rows(&[&[1.0, 0.3], &[0.3, 1.0]]),
        };
        let l = build_l(&spec, &g).unwrap();
        assert!((l.matrix()[(0, 0)] - 4.0).abs() < 1e-15);
        assert!((l.matrix()[(0, 1)] - 0.3).abs() < 1e-15);
        assert!((l.matrix()[(1, 1)] - 0.25).abs() < 1e-15);

        let bad = KernelSpec::QualitySimilarity {
            quality: vec![1.0, 1.0],
            similarity: rows(&[&[1.0, 2.0], &[2.0, 1.0]]),
        };
        assert!(matches!(build_l(&bad, &g), Err(Error::KernelInvalid(_))));
    }

    #[test]
    fn l_to_k_examples() {
        let k = l_to_k(&LEnsemble::from_matrix(DMatrix::zeros(3, 3)).unwrap());
        assert_eq!(k.matrix().abs().max(), 0.0);

        let k = l_to_k(&LEnsemble::from_matrix(DMatrix::identity(2, 2)).unwrap());
        assert!((k.matrix() - DMatrix::identity(2, 2) * 0.5).abs().max() < 1e-15);

        // eigenvalues of [[2,1],[1,2]] are 3 and 1 -> 3/4 and 1/2
        let l = LEnsemble::from_rows(&rows(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        let k = l_to_k(&l);
        let ev = k.eigenvalues();
        assert!((ev[0] - 0.5).abs() < 1e-14 && (ev[1] - 0.75).abs() < 1e-14);
        // same eigenvectors: (1,1)/sqrt2 -> 3/4, (1,-1)/sqrt2 -> 1/2
        let v = nalgebra::DVector::from_vec(vec![1.0, 1.0]);
        assert!((k.matrix() * &v - &v * 0.75).abs().max() < 1e-14);
        let v = nalgebra::DVector::from_vec(vec![1.0, -1.0]);
        assert!((k.matrix() * &v - &v * 0.5).abs().max() < 1e-14);
    }

    #[test]
    fn k_to_l_examples() {
        let l = k_to_l(&MarginalKernel::from_matrix(DMatrix::zeros(2, 2)).unwrap()).unwrap();
        assert_eq!(l.matrix().abs().max(), 0.0);
        let l = k_to_l(&MarginalKernel::diagonal(&[0.5, 0.5]).unwrap()).unwrap();
        assert!((l.matrix() - DMatrix::identity(2, 2)).abs().max() < 1e-14);
        assert!(matches!(
            k_to_l(&MarginalKernel::diagonal(&[1.0, 0.3]).unwrap()),
            Err(Error::NotLRepresentable { .. })
        ));
    }

    #[test]
    fn validate_examples() {
        let r = validate(&DMatrix::identity(2, 2));
        assert!(r.valid);
        assert_eq!(r.eigenvalues, vec![1.0, 1.0]);

        let r = validate(&DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.6, 0.5]));
        assert!(!r.valid);
        assert!((r.min_eigenvalue + 0.1).abs() < 1e-12);
        assert!((r.max_eigenvalue - 1.1).abs() < 1e-12);

        let r = validate(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert!(!r.valid);
        assert_eq!(r.symmetry_defect, 1.0);
    }

    #[test]
    fn marginal_kernel_rejects_and_clamps() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.6, 0.5]);
        assert!(matches!(MarginalKernel::from_matrix(bad), Err(Error::KernelInvalid(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1 + 1e-6, 0.5]);
        assert!(MarginalKernel::from_matrix(asym).is_err());
        let nearly = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1 + 1e-11, 0.5]);
        let k = MarginalKernel::from_matrix(nearly).unwrap();
        assert_eq!(k.matrix()[(0, 1)], k.matrix()[(1, 0)]);
        let over = DMatrix::from_row_slice(1, 1, &[1.0 + 5e-10]);
        assert_eq!(MarginalKernel::from_matrix(over).unwrap().matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn build_kernel_checks_size() {
        let g = txrx(&[(0.0, 0.0), (1.0, 0.0)]);
        let spec = KernelSpec::AlohaDiagonal {
            probabilities: vec![0.5],
        };
        assert!(matches!(build_kernel(&spec, &g), Err(Error::BadSpec(_))));
    }

    #[test]
    fn spec_serde_names() {
        let s: KernelSpec = serde_json::from_str(r#"{"type":"explicit_K","matrix":[[0.5]]}"#).unwrap();
        assert_eq!(s, KernelSpec::ExplicitK { matrix: vec![vec![0.5]] });
        let s: KernelSpec =
            serde_json::from_str(r#"{"type":"aloha_diagonal","probabilities":[0.1,0.2]}"#).unwrap();
        assert!(matches!(s, KernelSpec::AlohaDiagonal { .. }));
    }

    fn psd_matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
            let a = DMatrix::from_vec(n, n, v);
            &a * a.transpose() * 1.5
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn roundtrip_l_k_l(l in (1usize..=20).prop_flat_map(psd_matrix)) {
            let l = LEnsemble::from_matrix(l).unwrap();
            let k = l_to_k(&l);
            let back = k_to_l(&k).unwrap();
            let err = (back.matrix() - l.matrix()).abs().max();
            prop_assert!(err < 1e-8, "round trip error {err}");
        }

        #[test]
        fn k_eigenvalues_are_mapped(l in (1usize..=8).prop_flat_map(psd_matrix)) {
            let l = LEnsemble::from_matrix(l).unwrap();
            let lv = sym_eigen(l.matrix()).values;
            let kv = l_to_k(&l).eigenvalues();
            for (a, b) in lv.iter().zip(&kv) {
                let a = a.max(0.0);
                prop_assert!((a / (1.0 + a) - b).abs() < 1e-12);
                prop_assert!(*b >= 0.0 && *b < 1.0);
            }
        }

        #[test]
        fn diagonal_l_maps_exactly(lams in proptest::collection::vec(0.0f64..50.0, 1..10)) {
            let l = LEnsemble::from_matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lams.clone()))).unwrap();
            let k = l_to_k(&l);
            for (i, lam) in lams.iter().enumerate() {
                prop_assert!((k.matrix()[(i, i)] - lam / (1.0 + lam)).abs() < 1e-12);
            }
        }

        #[test]
        fn gaussian_with_unit_scale_is_accepted(
            pts in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..15),
            sigma in 0.05f64..3.0,
            scale in 0.01f64..=1.0,
        ) {
            let g = txrx(&pts);
            let l = build_l(&KernelSpec::Gaussian { sigma, scale }, &g).unwrap();
            let k = l_to_k(&l);
            prop_assert!(validate(k.matrix()).valid);
        }
    }
}
