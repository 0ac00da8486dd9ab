//! End-to-end simulation of scheduler plus Rayleigh fading.
//!
//! Replication `k` draws everything from [`substream`]`(seed, k)` and results
//! are accumulated in integers, so estimates do not depend on how
//! replications are spread over worker threads.
//!
//! Fading gains are drawn fresh for every (replication, target, link) and only
//! for links that matter to the target; each target's indicator therefore has
//! the exact marginal law of the full model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dpp::SpectralSampler;
use crate::error::{Error, Result};
use crate::kernels::LEnsemble;
use crate::propagation::{path_loss, Mode, NetworkGeometry, PropagationParams, SINGULAR_DISTANCE};
use crate::rng::{exponential, substream};
use crate::NodeId;

pub const DEFAULT_DELAY_CAP: u64 = 1_000_000;

/// Local-delay replications use their own family of substreams.
const DELAY_STREAM_OFFSET: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Target {
    PairCoverage { i: NodeId },
    Txrx { i: NodeId, j: NodeId },
    LocalDelay { i: NodeId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub replications: u64,
    pub seed: u64,
    pub targets: Vec<Target>,
    /// Slots after which a local-delay run is censored.
    pub delay_cap: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl SimulationPlan {
    pub fn new(replications: u64, seed: u64, targets: Vec<Target>) -> Result<Self> {
        let plan = SimulationPlan {
            replications,
            seed,
            targets,
            delay_cap: DEFAULT_DELAY_CAP,
            workers: None,
        };
        plan.check()?;
        Ok(plan)
    }

    pub fn with_delay_cap(mut self, cap: u64) -> Self {
        self.delay_cap = cap;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn check(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::BadArgument("replications must be >= 1".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::BadArgument("simulation plan has no targets".into()));
        }
        if self.delay_cap == 0 {
            return Err(Error::BadArgument("delay cap must be >= 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::BadArgument("workers must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(replications)`.
    pub std_error: f64,
    pub replications: u64,
    /// Local-delay runs that hit the cap (their value counts as the cap).
    pub censored: u64,
}

impl Estimate {
    fn from_sums(n: u64, sum: u128, sum_sq: u128, censored: u64) -> Self {
        let nf = n as f64;
        let mean = sum as f64 / nf;
        let std_error = if n < 2 {
            0.0
        } else {
            // exact integer numerator n*sum_sq - sum^2 avoids cancellation
            let num = (n as u128) * sum_sq - sum * sum;
            let var = num as f64 / (nf * (nf - 1.0));
            (var.max(0.0) / nf).sqrt()
        };
        Estimate {
            mean,
            std_error,
            replications: n,
            censored,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEstimate {
    pub target: Target,
    pub estimate: Estimate,
}

/// One link as the simulator sees it: who must (not) be scheduled and the
/// mean received powers at the receiver.
#[derive(Debug, Clone)]
struct Probe {
    tx: usize,
    /// Node that must stay silent (TX/RX receiver).
    silent: Option<usize>,
    signal_loss: f64,
    /// Path loss from every node to the receiver; `+inf` for a coincident
    /// node under the power law.
    gains: Vec<f64>,
}

impl Probe {
    fn new(geometry: &NetworkGeometry, params: &PropagationParams, tx: NodeId, rx: NodeId, silent: bool) -> Result<Self> {
        let x = geometry.transmitter(tx);
        let y = geometry.receiver_location(rx);
        let signal_loss = path_loss(&params.pathloss, x.distance(&y))?;
        if !(signal_loss > 0.0) {
            return Err(Error::DegenerateSignal(x.distance(&y)));
        }
        let gains = geometry
            .scheduled_points()
            .iter()
            .enumerate()
            .map(|(z, p)| {
                let d = p.distance(&y);
                if z == tx.0 {
                    Ok(0.0)
                } else if params.pathloss.is_singular() && d < SINGULAR_DISTANCE {
                    Ok(f64::INFINITY)
                } else {
                    path_loss(&params.pathloss, d)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Probe {
            tx: tx.0,
            silent: silent.then_some(rx.0),
            signal_loss,
            gains,
        })
    }

    /// Scheduling condition plus one fading draw of `SINR > tau`.
    fn success<R: rand::Rng + ?Sized>(&self, active: &[bool], rng: &mut R, params: &PropagationParams) -> bool {
        if !active[self.tx] || self.silent.is_some_and(|j| active[j]) {
            return false;
        }
        let mu = params.fading_mean;
        let tau = params.threshold;
        let signal = exponential(rng, mu) * self.signal_loss;
        let mut total = params.noise;
        for (z, &g) in self.gains.iter().enumerate() {
            if z == self.tx || !active[z] {
                continue;
            }
            if g.is_infinite() {
                return false;
            }
            total += exponential(rng, mu) * g;
            if tau > 0.0 && tau * total >= signal {
                return false;
            }
        }
        signal > tau * total
    }
}

#[derive(Clone)]
struct Acc {
    sum: Vec<u128>,
    sum_sq: Vec<u128>,
    censored: Vec<u64>,
}

impl Acc {
    fn new(m: usize) -> Self {
        Acc {
            sum: vec![0; m],
            sum_sq: vec![0; m],
            censored: vec![0; m],
        }
    }

    fn merge(mut self, other: Acc) -> Acc {
        for t in 0..self.sum.len() {
            self.sum[t] += other.sum[t];
            self.sum_sq[t] += other.sum_sq[t];
            self.censored[t] += other.censored[t];
        }
        self
    }
}

struct Scratch {
    positions: Vec<usize>,
    active: Vec<bool>,
}

impl Scratch {
    fn draw<R: rand::Rng + ?Sized>(&mut self, sampler: &SpectralSampler, rng: &mut R) {
        sampler.sample_positions(rng, &mut self.positions);
        self.active.iter_mut().for_each(|a| *a = false);
        for &p in &self.positions {
            self.active[p] = true;
        }
    }
}

fn check_target(geometry: &NetworkGeometry, t: &Target) -> Result<()> {
    let n = geometry.len();
    let (ids, mode): (Vec<NodeId>, Mode) = match *t {
        Target::PairCoverage { i } | Target::LocalDelay { i } => (vec![i], Mode::Pairs),
        Target::Txrx { i, j } => {
            if i == j {
                return Err(Error::SameNode(i));
            }
            (vec![i, j], Mode::Txrx)
        }
    };
    if geometry.mode() != mode {
        return Err(Error::BadArgument(format!(
            "target {t:?} needs a {mode:?} geometry, got {:?}",
            geometry.mode()
        )));
    }
    match ids.into_iter().find(|id| id.0 >= n) {
        Some(id) => Err(Error::BadSubset(id)),
        None => Ok(()),
    }
}

fn run_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::BadArgument(format!("cannot start worker pool: {e}"))),
    }
}

/// Estimates every target of `plan`, in plan order.
pub fn simulate(
    geometry: &NetworkGeometry,
    l: &LEnsemble,
    params: &PropagationParams,
    plan: &SimulationPlan,
) -> Result<Vec<TargetEstimate>> {
    plan.check()?;
    params.check()?;
    let n = geometry.len();
    if l.len() != n || l.node_ids().iter().enumerate().any(|(p, id)| id.0 != p) {
        return Err(Error::BadArgument(format!(
            "L-ensemble must index the {n} geometry nodes in order"
        )));
    }
    let mut coverage = Vec::new();
    let mut delay = Vec::new();
    for (slot, t) in plan.targets.iter().enumerate() {
        check_target(geometry, t)?;
        match *t {
            Target::PairCoverage { i } => coverage.push((slot, Probe::new(geometry, params, i, i, false)?)),
            Target::Txrx { i, j } => coverage.push((slot, Probe::new(geometry, params, i, j, true)?)),
            Target::LocalDelay { i } => delay.push((slot, Probe::new(geometry, params, i, i, false)?)),
        }
    }
    let sampler = SpectralSampler::new(l);
    let reps = plan.replications;
    let new_scratch = || Scratch {
        positions: Vec::with_capacity(n),
        active: vec![false; n],
    };

    let (cov_acc, delay_acc) = run_pool(plan.workers, || {
        let cov_acc = if coverage.is_empty() {
            Acc::new(0)
        } else {
            (0..reps)
                .into_par_iter()
                .fold(
                    || (Acc::new(coverage.len()), new_scratch()),
                    |(mut acc, mut scratch), k| {
                        let mut rng = substream(plan.seed, k);
                        scratch.draw(&sampler, &mut rng);
                        for (t, (_, probe)) in coverage.iter().enumerate() {
                            if probe.success(&scratch.active, &mut rng, params) {
                                acc.sum[t] += 1;
                                acc.sum_sq[t] += 1;
                            }
                        }
                        (acc, scratch)
                    },
                )
                .map(|(acc, _)| acc)
                .reduce(|| Acc::new(coverage.len()), Acc::merge)
        };
        let delay_acc = if delay.is_empty() {
            Acc::new(0)
        } else {
            (0..reps)
                .into_par_iter()
                .fold(
                    || (Acc::new(delay.len()), new_scratch(), vec![0u64; delay.len()]),
                    |(mut acc, mut scratch, mut first), k| {
                        let mut rng = substream(plan.seed, DELAY_STREAM_OFFSET | k);
                        first.iter_mut().for_each(|f| *f = 0);
                        let mut pending = delay.len();
                        let mut slot = 0;
                        while pending > 0 && slot < plan.delay_cap {
                            slot += 1;
                            scratch.draw(&sampler, &mut rng);
                            for (t, (_, probe)) in delay.iter().enumerate() {
                                if first[t] == 0 && probe.success(&scratch.active, &mut rng, params) {
                                    first[t] = slot;
                                    pending -= 1;
                                }
                            }
                        }
                        for (t, f) in first.iter().enumerate() {
                            let v = if *f == 0 {
                                acc.censored[t] += 1;
                                plan.delay_cap
                            } else {
                                *f
                            } as u128;
                            acc.sum[t] += v;
                            acc.sum_sq[t] += v * v;
                        }
                        (acc, scratch, first)
                    },
                )
                .map(|(acc, _, _)| acc)
                .reduce(|| Acc::new(delay.len()), Acc::merge)
        };
        (cov_acc, delay_acc)
    })?;

    let mut out: Vec<Option<TargetEstimate>> = vec![None; plan.targets.len()];
    for (t, (slot, _)) in coverage.iter().enumerate() {
        out[*slot] = Some(TargetEstimate {
            target: plan.targets[*slot],
            estimate: Estimate::from_sums(reps, cov_acc.sum[t], cov_acc.sum_sq[t], 0),
        });
    }
    for (t, (slot, _)) in delay.iter().enumerate() {
        out[*slot] = Some(TargetEstimate {
            target: plan.targets[*slot],
            estimate: Estimate::from_sums(reps, delay_acc.sum[t], delay_acc.sum_sq[t], delay_acc.censored[t]),
        });
    }
    Ok(out.into_iter().map(|e| e.expect("every target is estimated")).collect())
}

fn with_targets(plan: &SimulationPlan, targets: Vec<Target>) -> SimulationPlan {
    SimulationPlan {
        targets,
        ..plan.clone()
    }
}

/// Coverage estimate for every pair, in pair order. The plan's own targets are ignored.
pub fn simulate_pair_coverage(
    geometry: &NetworkGeometry,
    l: &LEnsemble,
    params: &PropagationParams,
    plan: &SimulationPlan,
) -> Result<Vec<Estimate>> {
    let targets = (0..geometry.len()).map(|i| Target::PairCoverage { i: NodeId(i) }).collect();
    Ok(simulate(geometry, l, params, &with_targets(plan, targets))?
        .into_iter()
        .map(|t| t.estimate)
        .collect())
}

/// Coverage estimate for every ordered pair of distinct nodes, in `(i, j)` order.
pub fn simulate_txrx(
    geometry: &NetworkGeometry,
    l: &LEnsemble,
    params: &PropagationParams,
    plan: &SimulationPlan,
) -> Result<Vec<((NodeId, NodeId), Estimate)>> {
    let n = geometry.len();
    let targets = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| Target::Txrx { i: NodeId(i), j: NodeId(j) }))
        .collect();
    Ok(simulate(geometry, l, params, &with_targets(plan, targets))?
        .into_iter()
        .map(|t| match t.target {
            Target::Txrx { i, j } => ((i, j), t.estimate),
            _ => unreachable!(),
        })
        .collect())
}

/// Mean number of slots until the first success, for every pair.
pub fn simulate_local_delay(
    geometry: &NetworkGeometry,
    l: &LEnsemble,
    params: &PropagationParams,
    plan: &SimulationPlan,
) -> Result<Vec<Estimate>> {
    let targets = (0..geometry.len()).map(|i| Target::LocalDelay { i: NodeId(i) }).collect();
    Ok(simulate(geometry, l, params, &with_targets(plan, targets))?
        .into_iter()
        .map(|t| t.estimate)
        .collect())
}
