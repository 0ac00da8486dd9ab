//! Closed-form coverage probabilities under a determinantal scheduler with
//! Rayleigh fading.
//!
//! Pairs networks: given `x_i` is scheduled, the interferers form the DPP
//! with reduced Palm kernel `K^!_{x_i}`, and the fixed-interferer coverage
//! `w * prod h` is a Laplace functional of that process, so
//!
//! ```text
//! P(SINR_i > tau | x_i ∈ Psi) = det(I - K^!_{x_i}{h_{x_i}}) * w(|x_i - y_i|)
//! P_i(tau)                    = K_ii * det(I - K^!_{x_i}{h_{x_i}}) * w(|x_i - y_i|)
//! ```
//!
//! with `h_{x_i}(z) = h(|z - y_i|, |x_i - y_i|)` and `K{f}` the
//! `sqrt(1 - f)`-scaled kernel.
//!
//! TX/RX networks: node `x_i` transmits to node `x_j` when `x_i ∈ Psi` and
//! `x_j ∉ Psi`. Splitting `P(A | x_i ∈ Psi)` on whether `x_j` transmits gives
//!
//! ```text
//! P(A | x_i ∈ Psi, x_j ∉ Psi) = w / (1 - [K^!]_jj)
//!     * ( det(I - K^!{h}) - [K^!]_jj * det(I - K^!_{x_i,x_j}{h}) )
//! ```
//!
//! where `K^!_{x_i,x_j}` is the semi-reduced two-fold Palm kernel. Under the
//! power law a transmitting receiver jams itself (`h(0, r) = 0`), so the second
//! term vanishes.

use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dpp::{det_complement_scaled, inclusion_probability, palm_reduced, PalmKernel, ScalingFunction, PALM_PIVOT_TOL};
use crate::error::{Error, Result};
use crate::kernels::MarginalKernel;
use crate::linalg::det;
use crate::propagation::{h, w, Link, Mode, NetworkGeometry, Point, PropagationParams};
use crate::{NodeId, Subset};

fn check_inputs(geometry: &NetworkGeometry, k: &MarginalKernel, mode: Mode) -> Result<()> {
    if geometry.mode() != mode {
        return Err(Error::BadArgument(format!(
            "operation needs a {mode:?} geometry, got {:?}",
            geometry.mode()
        )));
    }
    if k.len() != geometry.len() {
        return Err(Error::BadArgument(format!(
            "kernel indexes {} nodes but the geometry has {}",
            k.len(),
            geometry.len()
        )));
    }
    Ok(())
}

fn check_node(geometry: &NetworkGeometry, id: NodeId) -> Result<()> {
    if id.0 >= geometry.len() {
        return Err(Error::BadSubset(id));
    }
    Ok(())
}

/// `h_{x}(z) = h(|z - y|, |x - y|)` for every node indexed by `palm`.
fn interference_factors(
    palm: &PalmKernel,
    geometry: &NetworkGeometry,
    tx: Point,
    rx: Point,
    params: &PropagationParams,
) -> Result<ScalingFunction> {
    let r = tx.distance(&rx);
    palm.node_ids()
        .iter()
        .map(|&z| Ok((z, h(geometry.transmitter(z).distance(&rx), r, params)?)))
        .collect()
}

/// `det(I - K^!_{x_i}{h_{x_i}})` for the link, plus the Palm kernel it used.
fn palm_laplace(
    geometry: &NetworkGeometry,
    k: &MarginalKernel,
    link: Link,
    params: &PropagationParams,
) -> Result<(PalmKernel, ScalingFunction, f64)> {
    let palm = palm_reduced(k, link.tx)?;
    let tx = geometry.transmitter(link.tx);
    let rx = geometry.receiver_location(link.rx);
    let f = interference_factors(&palm, geometry, tx, rx, params)?;
    let d = det_complement_scaled(&palm.kernel, &f)?;
    Ok((palm, f, d))
}

/// Coverage of pair `i` given its transmitter is scheduled:
/// `det(I - K^!_{x_i}{h_{x_i}}) * w(|x_i - y_i|)`.
pub fn conditional_pair_coverage(
    geometry: &NetworkGeometry,
    k: &MarginalKernel,
    i: NodeId,
    params: &PropagationParams,
) -> Result<f64> {
    check_inputs(geometry, k, Mode::Pairs)?;
    check_node(geometry, i)?;
    let link = Link { tx: i, rx: i };
    let (_, _, d) = palm_laplace(geometry, k, link, params)?;
    let r = geometry.transmitter(i).distance(&geometry.receiver_location(i));
    Ok((d * w(r, params)?).clamp(0.0, 1.0))
}

/// `P_i(tau) = [K]_ii * conditional_pair_coverage`; zero when `x_i` is never scheduled.
pub fn pair_coverage(
    geometry: &NetworkGeometry,
    k: &MarginalKernel,
    i: NodeId,
    params: &PropagationParams,
) -> Result<f64> {
    check_inputs(geometry, k, Mode::Pairs)?;
    check_node(geometry, i)?;
    let kii = k.entry(i, i)?;
    if kii <= PALM_PIVOT_TOL {
        return Ok(0.0);
    }
    Ok(kii * conditional_pair_coverage(geometry, k, i, params)?)
}

/// Full-size matrix whose determinant is `P_i(tau)`: the block
/// `I - K^!_{x_i}{h_{x_i}}` on the other nodes, `W_{x_i,y_i} [K]_ii` at `(i, i)`,
/// and zeros elsewhere in row and column `i`.
pub fn coverage_kernel(
    geometry: &NetworkGeometry,
    k: &MarginalKernel,
    i: NodeId,
    params: &PropagationParams,
) -> Result<DMatrix<f64>> {
    check_inputs(geometry, k, Mode::Pairs)?;
    check_node(geometry, i)?;
    let n = k.len();
    let p = k.position(i).ok_or(Error::BadSubset(i))?;
    let kii = k.matrix()[(p, p)];
    let r = geometry.transmitter(i).distance(&geometry.receiver_location(i));
    let wi = w(r, params)?;
    let mut out = DMatrix::identity(n, n);
    if kii <= PALM_PIVOT_TOL {
        out[(p, p)] = 0.0;
        return Ok(out);
    }
    let (palm, f, _) = palm_laplace(geometry, k, Link { tx: i, rx: i }, params)?;
    let scaled = crate::dpp::scale_kernel(&palm.kernel, &f)?;
    let others: Vec<usize> = (0..n).filter(|&a| a != p).collect();
    for (a, &ra) in others.iter().enumerate() {
        for (b, &rb) in others.iter().enumerate() {
            out[(ra, rb)] = if a == b { 1.0 } else { 0.0 } - scaled.matrix()[(a, b)];
        }
    }
    out[(p, p)] = wi * kii;
    Ok(out)
}

/// Number of attempts until the first success; geometric with success probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalDelay {
    pub success_probability: f64,
    /// `1 / p`, or `+inf` when `p = 0`.
    pub mean: f64,
    pub infinite: bool,
}

impl LocalDelay {
    /// `P(L <= k) = 1 - (1 - p)^k`.
    pub fn cdf(&self, k: u64) -> f64 {
        let p = self.success_probability;
        if p >= 1.0 {
            return if k >= 1 { 1.0 } else { 0.0 };
        }
        -((k as f64) * (-p).ln_1p()).exp_m1()
    }
}

pub fn local_delay(coverage_p: f64) -> LocalDelay {
    let p = coverage_p.clamp(0.0, 1.0);
    if p == 0.0 {
        LocalDelay {
            success_probability: 0.0,
            mean: f64::INFINITY,
            infinite: true,
        }
    } else {
        LocalDelay {
            success_probability: p,
            mean: 1.0 / p,
            infinite: false,
        }
    }
}

/// Smallest per-attempt coverage giving at least one success in `k` attempts
/// with probability `epsilon`: `1 - (1 - epsilon)^(1/k)`.
pub fn min_coverage_for_success(epsilon: f64, k: u64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::BadArgument(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if k == 0 {
        return Err(Error::BadArgument("number of attempts must be >= 1".into()));
    }
    Ok(-((-epsilon).ln_1p() / k as f64).exp_m1())
}

/// Intermediate terms of the TX/RX conditional coverage, kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TxRxTerms {
    /// `w(|x_i - x_j|)`.
    pub w: f64,
    /// `[K^!_{x_i}]_{x_j x_j}` = `P(x_j ∈ Psi | x_i ∈ Psi)`.
    pub receiver_palm_probability: f64,
    /// `det(I - K^!_{x_i}{h_{x_i}})`.
    pub reduced_det: f64,
    /// `det(I - K^!_{x_i,x_j}{h_{x_i}})`, absent when dropped (singular path
    /// loss, or `x_j` never scheduled alongside `x_i`).
    pub semi_reduced_det: Option<f64>,
    /// Unclamped conditional coverage.
    pub raw: f64,
}

/// Terms of `P(SINR(x_i -> x_j) > tau | x_i ∈ Psi, x_j ∉ Psi)`.
pub fn txrx_terms(
    geometry: &NetworkGeometry,
    k: &MarginalKernel,
    i: NodeId,
    j: NodeId,
    params: &PropagationParams,
) -> Result<TxRxTerms> {
    check_inputs(geometry, k, Mode::Txrx)?;
    check_node(geometry, i)?;
    check_node(geometry, j)?;
    if i == j {
        return Err(Error::SameNode(i));
    }
    let link = Link { tx: i, rx: j };
    let (palm, f, reduced_det) = palm_laplace(geometry, k, link, params)?;
    let kjj = palm.kernel.entry(j, j)?;
    if kjj >= 1.0 - PALM_PIVOT_TOL {
        return Err(Error::AlwaysScheduledReceiver(j));
    }
    let wij = w(geometry.transmitter(i).distance(&geometry.transmitter(j)), params)?;
    let semi_reduced_det = if params.pathloss.is_singular() || kjj <= PALM_PIVOT_TOL {
        None
    } else {
        let semi = palm.retain(j)?;
        Some(det_complement_scaled(&semi.kernel, &f)?)
    };
    let raw = wij / (1.0 - kjj) * (reduced_det - kjj * semi_reduced_det.unwrap_or(0.0));
    Ok(TxRxTerms {
        w: wij,
        receiver_palm_probability: kjj,
        reduced_det,
        semi_reduced_det,
        raw,
    })
}

/// `P(SINR(x_i -> x_j) > tau | x_i ∈ Psi, x_j ∉ Psi)`, clamped into `[0, 1]`.
pub fn txrx_conditional_coverage(
    geometry: &NetworkGeometry,
    k: &MarginalKernel,
    i: NodeId,
    j: NodeId,
    params: &PropagationParams,
) -> Result<f64> {
    Ok(txrx_terms(geometry, k, i, j, params)?.raw.clamp(0.0, 1.0))
}

/// `P(x_i ∈ Psi, x_j ∉ Psi) = [K]_ii - det(K_{x_i, x_j})`.
pub fn txrx_selection_probability(k: &MarginalKernel, i: NodeId, j: NodeId) -> Result<f64> {
    if i == j {
        return Err(Error::SameNode(i));
    }
    let kii = k.entry(i, i)?;
    let both: Subset = [i, j].into_iter().collect();
    Ok((kii - inclusion_probability(k, &both)?).clamp(0.0, 1.0))
}

/// `P_{i,j}(tau) = P(x_i ∈ Psi, x_j ∉ Psi) * P(SINR > tau | x_i ∈ Psi, x_j ∉ Psi)`;
/// zero when the conditioning event is degenerate.
pub fn txrx_coverage(
    geometry: &NetworkGeometry,
    k: &MarginalKernel,
    i: NodeId,
    j: NodeId,
    params: &PropagationParams,
) -> Result<f64> {
    check_inputs(geometry, k, Mode::Txrx)?;
    check_node(geometry, i)?;
    check_node(geometry, j)?;
    let sel = txrx_selection_probability(k, i, j)?;
    match txrx_conditional_coverage(geometry, k, i, j, params) {
        Ok(c) => Ok(sel * c),
        Err(Error::NeverScheduled(_)) | Err(Error::AlwaysScheduledReceiver(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkReport {
    pub tx: NodeId,
    pub rx: NodeId,
    pub selection_probability: f64,
    /// `None` when the conditioning event has probability zero.
    pub conditional_coverage: Option<f64>,
    /// `None` only when the link could not be evaluated (see `diagnostic`).
    pub coverage: Option<f64>,
    /// Expected attempts `1 / coverage`; `None` when infinite or unavailable.
    pub local_delay_mean: Option<f64>,
    pub delay_infinite: bool,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub mode: Mode,
    pub n: usize,
    pub params: PropagationParams,
    /// SHA-256 of the kernel entries (row-major, little-endian f64).
    pub kernel_fingerprint: String,
    pub links: Vec<LinkReport>,
}

pub fn kernel_fingerprint(k: &MarginalKernel) -> String {
    let m = k.matrix();
    let mut hasher = Sha256::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            hasher.update(m[(i, j)].to_le_bytes());
        }
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn link_report(
    tx: NodeId,
    rx: NodeId,
    selection: Result<f64>,
    conditional: Result<f64>,
    coverage: Result<f64>,
) -> LinkReport {
    let mut diagnostic = None;
    let selection_probability = selection.unwrap_or_else(|e| {
        diagnostic = Some(e.to_string());
        f64::NAN
    });
    let conditional_coverage = match conditional {
        Ok(c) => Some(c),
        Err(e) => {
            diagnostic.get_or_insert(e.to_string());
            None
        }
    };
    let coverage = match coverage {
        Ok(c) => Some(c),
        Err(e) => {
            diagnostic = Some(e.to_string());
            None
        }
    };
    let delay = coverage.map(local_delay);
    LinkReport {
        tx,
        rx,
        selection_probability,
        conditional_coverage,
        coverage,
        local_delay_mean: delay.filter(|d| !d.infinite).map(|d| d.mean),
        delay_infinite: delay.is_some_and(|d| d.infinite),
        diagnostic,
    }
}

/// Every link of the network: each pair in pairs mode, each ordered pair of
/// distinct nodes in TX/RX mode. Per-link failures become diagnostics.
pub fn full_report(
    geometry: &NetworkGeometry,
    k: &MarginalKernel,
    params: &PropagationParams,
) -> Result<CoverageReport> {
    check_inputs(geometry, k, geometry.mode())?;
    let n = geometry.len();
    let mut links = Vec::new();
    match geometry.mode() {
        Mode::Pairs => {
            for i in (0..n).map(NodeId) {
                let kii = k.entry(i, i)?;
                let cond = conditional_pair_coverage(geometry, k, i, params);
                let cov = match &cond {
                    Ok(c) => Ok(kii * c),
                    Err(Error::NeverScheduled(_)) => Ok(0.0),
                    Err(e) => Err(e.clone()),
                };
                links.push(link_report(i, i, Ok(kii), cond, cov));
            }
        }
        Mode::Txrx => {
            for i in (0..n).map(NodeId) {
                for j in (0..n).map(NodeId).filter(|&j| j != i) {
                    let sel = txrx_selection_probability(k, i, j);
                    let cond = txrx_conditional_coverage(geometry, k, i, j, params);
                    let cov = match (&sel, &cond) {
                        (Ok(s), Ok(c)) => Ok(s * c),
                        (Ok(_), Err(Error::NeverScheduled(_)))
                        | (Ok(_), Err(Error::AlwaysScheduledReceiver(_))) => Ok(0.0),
                        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
                    };
                    links.push(link_report(i, j, sel, cond, cov));
                }
            }
        }
    }
    Ok(CoverageReport {
        mode: geometry.mode(),
        n,
        params: params.clone(),
        kernel_fingerprint: kernel_fingerprint(k),
        links,
    })
}

/// Determinant of [`coverage_kernel`]; equals [`pair_coverage`].
pub fn coverage_kernel_det(
    geometry: &NetworkGeometry,
    k: &MarginalKernel,
    i: NodeId,
    params: &PropagationParams,
) -> Result<f64> {
    Ok(det(&coverage_kernel(geometry, k, i, params)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpp::exact_pmf;
    use crate::kernels::{l_to_k, LEnsemble};
    use crate::propagation::{pair_coverage_fixed, PathLossModel, TabulatedPathLoss};
    use crate::rng::substream;
    use rand::Rng;

    fn pl(beta: f64, noise: f64, tau: f64) -> PropagationParams {
        PropagationParams::new(PathLossModel::power_law(1.0, beta), 1.0, noise, tau).unwrap()
    }

    fn random_pairs(n: usize, seed: u64) -> NetworkGeometry {
        let mut rng = substream(seed, 1);
        let mut tx = Vec::new();
        let mut rx = Vec::new();
        for _ in 0..n {
            let x = Point::new(rng.random(), rng.random());
            loop {
                let y = Point::new(rng.random(), rng.random());
                if x.distance(&y) >= 0.05 {
                    tx.push(x);
                    rx.push(y);
                    break;
                }
            }
        }
        NetworkGeometry::pairs(tx, rx).unwrap()
    }

    fn random_nodes(n: usize, seed: u64) -> NetworkGeometry {
        let mut rng = substream(seed, 2);
        NetworkGeometry::txrx((0..n).map(|_| Point::new(rng.random(), rng.random())).collect()).unwrap()
    }

    fn random_k(n: usize, seed: u64) -> MarginalKernel {
        let mut rng = substream(seed, 3);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        l_to_k(&LEnsemble::from_matrix(&a * a.transpose()).unwrap())
    }

    fn pair_oracle(g: &NetworkGeometry, k: &MarginalKernel, i: NodeId, p: &PropagationParams) -> f64 {
        exact_pmf(k)
            .unwrap()
            .iter()
            .filter(|(s, _)| s.contains(&i))
            .map(|(mut s, prob)| {
                s.remove(&i);
                prob * pair_coverage_fixed(Link { tx: i, rx: i }, &s, g, p).unwrap()
            })
            .sum()
    }

    #[test]
    fn single_pair_without_noise_is_certain_when_scheduled() {
        let g = random_pairs(1, 1);
        let k = MarginalKernel::diagonal(&[0.4]).unwrap();
        let p = pl(2.0, 0.0, 3.0);
        assert_eq!(conditional_pair_coverage(&g, &k, NodeId(0), &p).unwrap(), 1.0);
        assert_eq!(pair_coverage(&g, &k, NodeId(0), &p).unwrap(), 0.4);
        let ck = coverage_kernel(&g, &k, NodeId(0), &p).unwrap();
        assert_eq!(ck, DMatrix::from_element(1, 1, 0.4));
    }

    #[test]
    fn aloha_product_formula() {
        let g = random_pairs(5, 2);
        let probs = [0.3, 0.8, 0.5, 0.1, 0.95];
        let k = MarginalKernel::diagonal(&probs).unwrap();
        let p = pl(4.0, 0.1, 1.0);
        for i in 0..5 {
            let xi = g.transmitter(NodeId(i));
            let yi = g.receiver_location(NodeId(i));
            let r = xi.distance(&yi);
            let mut expect = w(r, &p).unwrap();
            for j in (0..5).filter(|&j| j != i) {
                let hj = h(g.transmitter(NodeId(j)).distance(&yi), r, &p).unwrap();
                expect *= 1.0 - probs[j] * (1.0 - hj);
            }
            let got = conditional_pair_coverage(&g, &k, NodeId(i), &p).unwrap();
            assert!((got - expect).abs() < 1e-12);
            let cov = pair_coverage(&g, &k, NodeId(i), &p).unwrap();
            assert!((cov - probs[i] * expect).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_enumeration_oracle() {
        for seed in 0..10 {
            let n = 2 + (seed as usize % 6);
            let g = random_pairs(n, seed);
            let k = random_k(n, seed);
            let p = pl(if seed % 2 == 0 { 2.0 } else { 4.0 }, 0.1, 1.0);
            for i in (0..n).map(NodeId) {
                let cf = pair_coverage(&g, &k, i, &p).unwrap();
                let oracle = pair_oracle(&g, &k, i, &p);
                assert!((cf - oracle).abs() <= 1e-9 * oracle.abs().max(1e-300), "{cf} vs {oracle}");
                let kdet = coverage_kernel_det(&g, &k, i, &p).unwrap();
                assert!((kdet - cf).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_kernel_gives_zero_and_infinite_delay() {
        let g = random_pairs(3, 4);
        let k = MarginalKernel::from_matrix(DMatrix::zeros(3, 3)).unwrap();
        let p = pl(2.0, 0.1, 1.0);
        assert_eq!(pair_coverage(&g, &k, NodeId(1), &p).unwrap(), 0.0);
        assert_eq!(
            conditional_pair_coverage(&g, &k, NodeId(1), &p),
            Err(Error::NeverScheduled(NodeId(1)))
        );
        let report = full_report(&g, &k, &p).unwrap();
        for link in &report.links {
            assert_eq!(link.coverage, Some(0.0));
            assert!(link.delay_infinite);
            assert_eq!(link.local_delay_mean, None);
        }
        assert_eq!(coverage_kernel_det(&g, &k, NodeId(0), &p).unwrap(), 0.0);
    }

    #[test]
    fn zero_threshold_gives_selection_probability() {
        let g = random_pairs(5, 6);
        let k = random_k(5, 6);
        let p = pl(2.0, 0.3, 0.0);
        for i in (0..5).map(NodeId) {
            let cov = pair_coverage(&g, &k, i, &p).unwrap();
            assert!((cov - k.entry(i, i).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn coverage_kernel_structure() {
        let g = random_pairs(4, 7);
        let k = random_k(4, 7);
        let p = pl(4.0, 0.1, 10.0);
        let m = coverage_kernel(&g, &k, NodeId(2), &p).unwrap();
        for a in (0..4).filter(|&a| a != 2) {
            assert_eq!(m[(2, a)], 0.0);
            assert_eq!(m[(a, 2)], 0.0);
        }
    }

    #[test]
    fn two_pair_closed_form() {
        // enumeration: P_1 = w [P(Psi={1}) + P(Psi={1,2}) h] = w k11 [1 - (k22 - k12^2/k11)(1 - h)]
        let g = random_pairs(2, 8);
        let p = pl(2.0, 0.1, 2.0);
        let (k11, k12, k22) = (0.6, 0.25, 0.45);
        let k = MarginalKernel::from_rows(&[vec![k11, k12], vec![k12, k22]]).unwrap();
        let y1 = g.receiver_location(NodeId(0));
        let r = g.transmitter(NodeId(0)).distance(&y1);
        let h12 = h(g.transmitter(NodeId(1)).distance(&y1), r, &p).unwrap();
        let w1 = w(r, &p).unwrap();
        let expect = k11 * (1.0 - (k22 - k12 * k12 / k11) * (1.0 - h12)) * w1;
        assert!((pair_coverage(&g, &k, NodeId(0), &p).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn local_delay_values() {
        let d = local_delay(1.0);
        assert_eq!((d.mean, d.cdf(1)), (1.0, 1.0));
        let d = local_delay(0.5);
        assert_eq!(d.mean, 2.0);
        assert!((d.cdf(2) - 0.75).abs() < 1e-15);
        let d = local_delay(0.0);
        assert!(d.infinite && d.mean.is_infinite());
        assert!((0..10).all(|k| d.cdf(k) == 0.0));
    }

    #[test]
    fn min_coverage_values() {
        assert!((min_coverage_for_success(0.3, 1).unwrap() - 0.3).abs() < 1e-15);
        let v = min_coverage_for_success(0.99, 10).unwrap();
        assert!((v - (1.0 - 0.01f64.powf(0.1))).abs() < 1e-15);
        assert!((v - 0.36904).abs() < 1e-5);
        assert!(min_coverage_for_success(1e-15, 3).unwrap() < 1e-15);
        assert!(min_coverage_for_success(0.0, 3).is_err());
        assert!(min_coverage_for_success(1.0, 3).is_err());
        assert!(min_coverage_for_success(0.5, 0).is_err());
    }

    fn txrx_oracle(
        g: &NetworkGeometry,
        k: &MarginalKernel,
        i: NodeId,
        j: NodeId,
        p: &PropagationParams,
    ) -> (f64, f64) {
        let mut joint = 0.0;
        let mut sel = 0.0;
        for (mut s, prob) in exact_pmf(k).unwrap().iter() {
            if s.contains(&i) && !s.contains(&j) {
                s.remove(&i);
                sel += prob;
                joint += prob * pair_coverage_fixed(Link { tx: i, rx: j }, &s, g, p).unwrap();
            }
        }
        (joint, sel)
    }

    #[test]
    fn txrx_power_law_matches_enumeration() {
        for seed in 0..8 {
            let n = 2 + seed as usize % 5;
            let g = random_nodes(n, seed);
            let k = random_k(n, seed + 100);
            let p = pl(if seed % 2 == 0 { 2.0 } else { 4.0 }, 0.1, 1.0);
            for i in (0..n).map(NodeId) {
                for j in (0..n).map(NodeId).filter(|&j| j != i) {
                    let (joint, sel) = txrx_oracle(&g, &k, i, j, &p);
                    let cond = txrx_conditional_coverage(&g, &k, i, j, &p).unwrap();
                    assert!((cond - joint / sel).abs() <= 1e-9 * (joint / sel), "{cond} vs {}", joint / sel);
                    let cov = txrx_coverage(&g, &k, i, j, &p).unwrap();
                    assert!((cov - joint).abs() <= 1e-9 * joint);
                }
            }
        }
    }

    #[test]
    fn txrx_bounded_pathloss_uses_semi_reduced_term() {
        let r: Vec<f64> = (0..=300).map(|t| t as f64 * 0.01).collect();
        let v: Vec<f64> = r.iter().map(|x| 1.0 / (1.0 + (x / 0.1f64).powi(3))).collect();
        let table = TabulatedPathLoss::new(r, v).unwrap();
        let p = PropagationParams::new(PathLossModel::Tabulated(table), 1.0, 0.05, 0.5).unwrap();
        let g = random_nodes(5, 31);
        let k = random_k(5, 31);
        let terms = txrx_terms(&g, &k, NodeId(0), NodeId(3), &p).unwrap();
        assert!(terms.semi_reduced_det.unwrap() > 0.0);
        let (joint, sel) = txrx_oracle(&g, &k, NodeId(0), NodeId(3), &p);
        assert!((terms.raw - joint / sel).abs() <= 1e-9 * joint / sel);
    }

    #[test]
    fn txrx_diagonal_selection_and_errors() {
        let g = random_nodes(3, 9);
        let k = MarginalKernel::diagonal(&[0.3, 0.6, 1.0]).unwrap();
        let sel = txrx_selection_probability(&k, NodeId(0), NodeId(1)).unwrap();
        assert!((sel - 0.3 * 0.4).abs() < 1e-15);
        let p = pl(2.0, 0.0, 1.0);
        assert_eq!(
            txrx_conditional_coverage(&g, &k, NodeId(0), NodeId(2), &p),
            Err(Error::AlwaysScheduledReceiver(NodeId(2)))
        );
        assert_eq!(txrx_coverage(&g, &k, NodeId(0), NodeId(2), &p).unwrap(), 0.0);
        assert_eq!(
            txrx_coverage(&g, &k, NodeId(1), NodeId(1), &p),
            Err(Error::SameNode(NodeId(1)))
        );
    }

    #[test]
    fn txrx_receiver_always_accompanies_transmitter() {
        // rank-one K = v v^T: det(K_{ij}) = K_ii K_jj - K_ij^2 = 0 and [K^!]_jj = 0,
        // so take a kernel where x_j is certain whenever x_i is: K_ij^2 = K_ii (K_jj - 1) + ... use K_jj = 1
        let k = MarginalKernel::from_rows(&[vec![0.5, 0.0], vec![0.0, 1.0]]).unwrap();
        let g = random_nodes(2, 10);
        let p = pl(2.0, 0.0, 1.0);
        let sel = txrx_selection_probability(&k, NodeId(0), NodeId(1)).unwrap();
        assert_eq!(sel, 0.0);
        assert_eq!(txrx_coverage(&g, &k, NodeId(0), NodeId(1), &p).unwrap(), 0.0);
    }

    #[test]
    fn report_matches_single_link_operations() {
        let g = random_pairs(4, 12);
        let k = random_k(4, 12);
        let p = pl(4.0, 0.1, 1.0);
        let rep = full_report(&g, &k, &p).unwrap();
        assert_eq!(rep.links.len(), 4);
        for link in &rep.links {
            let cov = pair_coverage(&g, &k, link.tx, &p).unwrap();
            assert_eq!(link.coverage, Some(cov));
            let sel = link.selection_probability;
            assert!((sel * link.conditional_coverage.unwrap() - cov).abs() < 1e-12);
            assert_eq!(link.local_delay_mean, Some(1.0 / cov));
        }
        let g = random_nodes(4, 12);
        let rep = full_report(&g, &k, &p).unwrap();
        assert_eq!(rep.links.len(), 12);
        for link in &rep.links {
            assert_ne!(link.tx, link.rx);
            assert_eq!(link.coverage, Some(txrx_coverage(&g, &k, link.tx, link.rx, &p).unwrap()));
        }
    }

    #[test]
    fn symmetric_two_pair_network() {
        let g = NetworkGeometry::pairs(
            vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)],
            vec![Point::new(0.0, 0.3), Point::new(1.0, 0.3)],
        )
        .unwrap();
        let k = MarginalKernel::from_rows(&[vec![0.5, 0.2], vec![0.2, 0.5]]).unwrap();
        let p = pl(3.0, 0.1, 1.0);
        let rep = full_report(&g, &k, &p).unwrap();
        assert!((rep.links[0].coverage.unwrap() - rep.links[1].coverage.unwrap()).abs() < 1e-15);
    }

    #[test]
    fn fingerprint_is_stable() {
        let k = MarginalKernel::diagonal(&[0.5, 0.25]).unwrap();
        let a = kernel_fingerprint(&k);
        assert_eq!(a.len(), 64);
        assert_eq!(a, kernel_fingerprint(&k.clone()));
        assert_ne!(a, kernel_fingerprint(&MarginalKernel::diagonal(&[0.5, 0.26]).unwrap()));
    }
}
