#![allow(dead_code)]

use detcov::dpp::exact_pmf;
use detcov::kernels::{l_to_k, LEnsemble, MarginalKernel};
use detcov::propagation::{
    pair_coverage_fixed, Link, NetworkGeometry, PathLossModel, Point, PropagationParams, TabulatedPathLoss,
};
use detcov::rng::DetRng;
use detcov::NodeId;
use nalgebra::DMatrix;
use rand::Rng;

pub const TAUS: [f64; 3] = [0.1, 1.0, 10.0];
pub const BETAS: [f64; 2] = [2.0, 4.0];
pub const NOISES: [f64; 2] = [0.0, 0.1];

pub fn point<R: Rng>(rng: &mut R) -> Point {
    Point::new(rng.random(), rng.random())
}

/// Pairs in the unit square with link length at least 0.05.
pub fn random_pairs<R: Rng>(rng: &mut R, n: usize) -> NetworkGeometry {
    let mut tx = Vec::with_capacity(n);
    let mut rx = Vec::with_capacity(n);
    while tx.len() < n {
        let x = point(rng);
        let y = point(rng);
        if x.distance(&y) >= 0.05 {
            tx.push(x);
            rx.push(y);
        }
    }
    NetworkGeometry::pairs(tx, rx).unwrap()
}

/// Nodes in the unit square, pairwise at least 0.05 apart.
pub fn random_nodes<R: Rng>(rng: &mut R, n: usize) -> NetworkGeometry {
    let mut pts: Vec<Point> = Vec::with_capacity(n);
    while pts.len() < n {
        let p = point(rng);
        if pts.iter().all(|q| q.distance(&p) >= 0.05) {
            pts.push(p);
        }
    }
    NetworkGeometry::txrx(pts).unwrap()
}

/// `c A A^T` with uniform entries, so the eigenvalues of `K` spread over `[0, 1)`.
pub fn random_l<R: Rng>(rng: &mut R, n: usize) -> LEnsemble {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let c = 0.2 + 1.8 * rng.random::<f64>();
    LEnsemble::from_matrix(&a * a.transpose() * c).unwrap()
}

pub fn random_k<R: Rng>(rng: &mut R, n: usize) -> MarginalKernel {
    l_to_k(&random_l(rng, n))
}

pub fn power_law(beta: f64, noise: f64, tau: f64) -> PropagationParams {
    PropagationParams::new(PathLossModel::power_law(1.0, beta), 1.0, noise, tau).unwrap()
}

/// Bounded path loss `1 / (1 + (r / 0.1)^beta)` sampled on `[0, 1.5]`.
pub fn bounded(beta: f64, noise: f64, tau: f64) -> PropagationParams {
    let r: Vec<f64> = (0..=1500).map(|k| k as f64 * 1e-3).collect();
    let v = r.iter().map(|x| 1.0 / (1.0 + (x / 0.1).powf(beta))).collect();
    let table = TabulatedPathLoss::new(r, v).unwrap();
    PropagationParams::new(PathLossModel::Tabulated(table), 1.0, noise, tau).unwrap()
}

pub fn pick<T: Copy, R: Rng>(rng: &mut R, xs: &[T]) -> T {
    xs[rng.random_range(0..xs.len())]
}

/// `sum over psi containing x_i of P(Psi = psi) * P(SINR_i > tau | interferers psi \ {x_i})`.
pub fn pair_oracle(g: &NetworkGeometry, k: &MarginalKernel, i: NodeId, p: &PropagationParams) -> f64 {
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

/// `(P(x_i in Psi, x_j not in Psi, SINR > tau), P(x_i in Psi, x_j not in Psi))`.
pub fn txrx_oracle(
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

/// `|a - b| <= tol * |b|`, with an absolute floor for values near zero.
pub fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-12)
}

pub fn rng(seed: u64) -> DetRng {
    detcov::rng::substream(seed, 0)
}
