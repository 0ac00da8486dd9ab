//! Path loss, the `h`/`w` functions of Rayleigh-faded SINR, and coverage of a
//! single link against a fixed set of interferers.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{NodeId, Subset};

/// Distances below this are treated as zero by the power-law model.
pub const SINGULAR_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from(p: [f64; 2]) -> Self {
        Point { x: p[0], y: p[1] }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Path loss given as samples `(r_k, l_k)` on an increasing grid, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedPathLoss {
    pub r: Vec<f64>,
    pub values: Vec<f64>,
}

impl TabulatedPathLoss {
    pub fn new(r: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let table = TabulatedPathLoss { r, values };
        table.check()?;
        Ok(table)
    }

    pub fn check(&self) -> Result<()> {
        if self.r.len() < 2 || self.r.len() != self.values.len() {
            return Err(Error::BadArgument(format!(
                "tabulated path loss needs at least two points and equal lengths (got {} radii, {} values)",
                self.r.len(),
                self.values.len()
            )));
        }
        if self.r[0] < 0.0 || self.r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::BadArgument(
                "tabulated radii must be non-negative and strictly increasing".into(),
            ));
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::BadArgument(
                "tabulated path-loss values must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    fn eval(&self, r: f64) -> Result<f64> {
        let (lo, hi) = (self.r[0], *self.r.last().unwrap());
        if !(r >= lo && r <= hi) {
            return Err(Error::OutOfTable { r, min: lo, max: hi });
        }
        let k = self.r.partition_point(|&x| x <= r).clamp(1, self.r.len() - 1);
        let (r0, r1) = (self.r[k - 1], self.r[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        let t = (r - r0) / (r1 - r0);
        Ok(v0 + t * (v1 - v0))
    }
}

/// User-supplied path loss; must be non-negative and finite for `r >= 0`.
#[derive(Clone)]
pub struct CallablePathLoss(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for CallablePathLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CallablePathLoss(..)")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PathLossModel {
    /// `(kappa r)^(-beta)`, singular at `r = 0`.
    PowerLaw { kappa: f64, beta: f64 },
    Tabulated(TabulatedPathLoss),
    #[serde(skip)]
    Callable(CallablePathLoss),
}

impl PathLossModel {
    pub fn power_law(kappa: f64, beta: f64) -> Self {
        PathLossModel::PowerLaw { kappa, beta }
    }

    pub fn callable<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        PathLossModel::Callable(CallablePathLoss(Arc::new(f)))
    }

    /// True when the model blows up at zero distance.
    pub fn is_singular(&self) -> bool {
        matches!(self, PathLossModel::PowerLaw { .. })
    }

    pub fn check(&self) -> Result<()> {
        match self {
            PathLossModel::PowerLaw { kappa, beta } => {
                if !(*kappa > 0.0 && kappa.is_finite() && *beta > 0.0 && beta.is_finite()) {
                    return Err(Error::BadArgument(format!(
                        "power law needs kappa > 0 and beta > 0 (got kappa={kappa}, beta={beta})"
                    )));
                }
                Ok(())
            }
            PathLossModel::Tabulated(t) => t.check(),
            PathLossModel::Callable(_) => Ok(()),
        }
    }
}

impl PartialEq for PathLossModel {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                PathLossModel::PowerLaw { kappa, beta },
                PathLossModel::PowerLaw { kappa: k2, beta: b2 },
            ) => kappa == k2 && beta == b2,
            (PathLossModel::Tabulated(a), PathLossModel::Tabulated(b)) => a == b,
            (PathLossModel::Callable(a), PathLossModel::Callable(b)) => Arc::ptr_eq(&a.0, &b.0),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationParams {
    pub pathloss: PathLossModel,
    /// Mean `mu` of the exponential fading power.
    pub fading_mean: f64,
    /// Noise power `W`.
    pub noise: f64,
    /// SINR threshold `tau`.
    pub threshold: f64,
}

impl PropagationParams {
    pub fn new(pathloss: PathLossModel, fading_mean: f64, noise: f64, threshold: f64) -> Result<Self> {
        let p = PropagationParams {
            pathloss,
            fading_mean,
            noise,
            threshold,
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        self.pathloss.check()?;
        if !(self.fading_mean > 0.0 && self.fading_mean.is_finite()) {
            return Err(Error::BadArgument(format!("fading mean must be > 0, got {}", self.fading_mean)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::BadArgument(format!("noise must be >= 0, got {}", self.noise)));
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(Error::BadArgument(format!("threshold must be >= 0, got {}", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Pairs,
    Txrx,
}

/// Either transmitter/receiver pairs, or one set of nodes each of which may
/// transmit or receive.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkGeometry {
    Pairs {
        transmitters: Vec<Point>,
        receivers: Vec<Point>,
    },
    TxRx {
        nodes: Vec<Point>,
    },
}

impl NetworkGeometry {
    pub fn pairs(transmitters: Vec<Point>, receivers: Vec<Point>) -> Result<Self> {
        if transmitters.is_empty() {
            return Err(Error::BadGeometry("at least one transmitter is required".into()));
        }
        if transmitters.len() != receivers.len() {
            return Err(Error::BadGeometry(format!(
                "transmitters has {} points but receivers has {}",
                transmitters.len(),
                receivers.len()
            )));
        }
        if transmitters.iter().chain(&receivers).any(|p| !p.is_finite()) {
            return Err(Error::BadGeometry("all coordinates must be finite".into()));
        }
        Ok(NetworkGeometry::Pairs {
            transmitters,
            receivers,
        })
    }

    pub fn txrx(nodes: Vec<Point>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::BadGeometry("at least one node is required".into()));
        }
        if nodes.iter().any(|p| !p.is_finite()) {
            return Err(Error::BadGeometry("all coordinates must be finite".into()));
        }
        Ok(NetworkGeometry::TxRx { nodes })
    }

    pub fn mode(&self) -> Mode {
        match self {
            NetworkGeometry::Pairs { .. } => Mode::Pairs,
            NetworkGeometry::TxRx { .. } => Mode::Txrx,
        }
    }

    /// Points the scheduler selects from (transmitters, or all nodes).
    pub fn scheduled_points(&self) -> &[Point] {
        match self {
            NetworkGeometry::Pairs { transmitters, .. } => transmitters,
            NetworkGeometry::TxRx { nodes } => nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.scheduled_points().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn transmitter(&self, id: NodeId) -> Point {
        self.scheduled_points()[id.0]
    }

    /// Receiver location addressed by `id`: the pair's receiver, or node `id` itself.
    pub fn receiver_location(&self, id: NodeId) -> Point {
        match self {
            NetworkGeometry::Pairs { receivers, .. } => receivers[id.0],
            NetworkGeometry::TxRx { nodes } => nodes[id.0],
        }
    }

    /// Checks that depend on the path-loss model: every intended link must
    /// have a non-singular length under the power law.
    pub fn check_links(&self, model: &PathLossModel) -> Result<()> {
        if !model.is_singular() {
            return Ok(());
        }
        match self {
            NetworkGeometry::Pairs {
                transmitters,
                receivers,
            } => {
                for (i, (x, y)) in transmitters.iter().zip(receivers).enumerate() {
                    if x.distance(y) < SINGULAR_DISTANCE {
                        return Err(Error::BadGeometry(format!(
                            "pair {i}: transmitter and receiver coincide under power-law path loss"
                        )));
                    }
                }
            }
            NetworkGeometry::TxRx { nodes } => {
                for i in 0..nodes.len() {
                    for j in (i + 1)..nodes.len() {
                        if nodes[i].distance(&nodes[j]) < SINGULAR_DISTANCE {
                            return Err(Error::BadGeometry(format!(
                                "nodes {i} and {j} coincide under power-law path loss"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// A directed link: transmitter `tx` towards the receiver location addressed by `rx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Link {
    pub tx: NodeId,
    pub rx: NodeId,
}

impl Link {
    pub fn pair(i: usize) -> Self {
        Link {
            tx: NodeId(i),
            rx: NodeId(i),
        }
    }

    pub fn txrx(i: usize, j: usize) -> Self {
        Link {
            tx: NodeId(i),
            rx: NodeId(j),
        }
    }
}

/// Fading powers `F_{x,y}` keyed by (transmitter, receiver location).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FadingDraw {
    values: HashMap<(NodeId, NodeId), f64>,
}

impl FadingDraw {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tx: NodeId, rx: NodeId, value: f64) -> Result<()> {
        if !(value >= 0.0) {
            return Err(Error::BadArgument(format!("fading value must be >= 0, got {value}")));
        }
        self.values.insert((tx, rx), value);
        Ok(())
    }

    pub fn get(&self, tx: NodeId, rx: NodeId) -> Result<f64> {
        self.values
            .get(&(tx, rx))
            .copied()
            .ok_or(Error::IncompleteFading { tx, rx })
    }
}

pub fn path_loss(model: &PathLossModel, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::BadArgument(format!("distance must be >= 0, got {r}")));
    }
    match model {
        PathLossModel::PowerLaw { kappa, beta } => {
            if r < SINGULAR_DISTANCE {
                return Err(Error::SingularDistance(r));
            }
            Ok((kappa * r).powf(-beta))
        }
        PathLossModel::Tabulated(t) => t.eval(r),
        PathLossModel::Callable(f) => {
            let v = (f.0)(r);
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::BadArgument(format!("callable path loss returned {v} at r={r}")));
            }
            Ok(v)
        }
    }
}

/// Path loss of the intended link; must be strictly positive.
fn signal_loss(params: &PropagationParams, r: f64) -> Result<f64> {
    let l = path_loss(&params.pathloss, r)?;
    if !(l > 0.0) {
        return Err(Error::DegenerateSignal(r));
    }
    Ok(l)
}

/// `h(s, r) = 1 / (tau l(s)/l(r) + 1)`: Laplace transform of one interferer at
/// distance `s` from a receiver whose transmitter is at distance `r`.
///
/// Under the power law an interferer at `s = 0` has infinite power and `h = 0`
/// for every threshold.
pub fn h(s: f64, r: f64, params: &PropagationParams) -> Result<f64> {
    let lr = signal_loss(params, r)?;
    if params.pathloss.is_singular() && s < SINGULAR_DISTANCE {
        return Ok(0.0);
    }
    if params.threshold == 0.0 {
        return Ok(1.0);
    }
    let ls = path_loss(&params.pathloss, s)?;
    Ok(1.0 / (params.threshold * ls / lr + 1.0))
}

/// `w(r) = exp(-(tau/mu) W / l(r))`: probability the signal beats noise alone.
pub fn w(r: f64, params: &PropagationParams) -> Result<f64> {
    let lr = signal_loss(params, r)?;
    if params.noise == 0.0 || params.threshold == 0.0 {
        return Ok(1.0);
    }
    Ok((-(params.threshold / params.fading_mean) * params.noise / lr).exp())
}

/// SINR from received signal power and the individual interference powers.
/// Infinite interference gives 0; no noise and no interference gives +inf.
pub fn sinr_from_powers(signal: f64, noise: f64, interference: impl IntoIterator<Item = f64>) -> f64 {
    let total = noise + interference.into_iter().sum::<f64>();
    if total.is_infinite() {
        return 0.0;
    }
    if total == 0.0 {
        return if signal > 0.0 { f64::INFINITY } else { 0.0 };
    }
    signal / total
}

/// Received power `F l(d)` of transmitter `tx` at `rx`; `+inf` for a coincident
/// interferer under the power law.
fn received_power(
    model: &PathLossModel,
    tx: Point,
    rx: Point,
    fading: f64,
) -> Result<f64> {
    let d = tx.distance(&rx);
    if model.is_singular() && d < SINGULAR_DISTANCE {
        return Ok(if fading > 0.0 { f64::INFINITY } else { 0.0 });
    }
    Ok(fading * path_loss(model, d)?)
}

/// SINR of `link` against the active `interferers`, for one fading draw.
pub fn sinr(
    link: Link,
    interferers: &Subset,
    fading: &FadingDraw,
    geometry: &NetworkGeometry,
    params: &PropagationParams,
) -> Result<f64> {
    if interferers.contains(&link.tx) {
        return Err(Error::BadArgument(format!(
            "transmitter {} cannot interfere with itself",
            link.tx
        )));
    }
    let x = geometry.transmitter(link.tx);
    let y = geometry.receiver_location(link.rx);
    let signal = fading.get(link.tx, link.rx)? * signal_loss(params, x.distance(&y))?;
    let mut powers = Vec::with_capacity(interferers.len());
    for &z in interferers {
        let f = fading.get(z, link.rx)?;
        powers.push(received_power(&params.pathloss, geometry.transmitter(z), y, f)?);
    }
    Ok(sinr_from_powers(signal, params.noise, powers))
}

/// `P(SINR > tau)` for `link` against a fixed interferer set:
/// `w(|x-y|) * prod_z h(|z-y|, |x-y|)`.
pub fn pair_coverage_fixed(
    link: Link,
    interferers: &Subset,
    geometry: &NetworkGeometry,
    params: &PropagationParams,
) -> Result<f64> {
    if interferers.contains(&link.tx) {
        return Err(Error::BadArgument(format!(
            "transmitter {} cannot interfere with itself",
            link.tx
        )));
    }
    let x = geometry.transmitter(link.tx);
    let y = geometry.receiver_location(link.rx);
    let r = x.distance(&y);
    let mut p = w(r, params)?;
    for &z in interferers {
        p *= h(geometry.transmitter(z).distance(&y), r, params)?;
    }
    Ok(p)
}
