//! In-process simulated cluster: shard partitions, workers, a coordinator
//! running the three estimation strategies, and a communication ledger.
//!
//! Communication is counted in scalars crossing the worker/coordinator
//! boundary, not bytes.

use std::fmt::{self, Write as _};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bandwidth::{minimize_cv, oneshot_bandwidth, pilot_bandwidth, CandidateSet, WeightFn};
use crate::error::{check_bandwidth, GpaError, Result};
use crate::gpa::{Geometry, GpaModel, ModelMeta};
use crate::kernels::KernelSpec;
use crate::moments::{local_moments, merge_all, nw_from_stats, oneshot_combine, Estimate, MomentStats, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionStrategy {
    Random,
    SortedByCovariate,
}

/// Assignment of observations to machines.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    strategy: PartitionStrategy,
    shards: Vec<Vec<usize>>,
    assignment: Vec<usize>,
}

impl PartitionPlan {
    fn from_order(order: &[usize], machines: usize, strategy: PartitionStrategy) -> Self {
        let n = order.len();
        let (base, extra) = (n / machines, n % machines);
        let mut shards = Vec::with_capacity(machines);
        let mut assignment = vec![0; n];
        let mut start = 0;
        for m in 0..machines {
            let size = base + usize::from(m < extra);
            let shard = order[start..start + size].to_vec();
            for &i in &shard {
                assignment[i] = m;
            }
            shards.push(shard);
            start += size;
        }
        Self {
            strategy,
            shards,
            assignment,
        }
    }

    pub fn machines(&self) -> usize {
        self.shards.len()
    }

    pub fn strategy(&self) -> PartitionStrategy {
        self.strategy
    }

    /// Machine holding each observation.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Observation indices held by machine `m`.
    pub fn shard(&self, m: usize) -> &[usize] {
        &self.shards[m]
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        self.shards.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

fn check_machines(n: usize, machines: usize) -> Result<()> {
    if machines == 0 {
        return Err(GpaError::InvalidInput("need at least one machine".into()));
    }
    if machines > n {
        return Err(GpaError::InvalidInput(format!("{machines} machines for {n} observations")));
    }
    Ok(())
}

/// Balanced random partition: contiguous blocks of a seeded permutation.
pub fn partition_random(n: usize, machines: usize, seed: u64) -> Result<PartitionPlan> {
    check_machines(n, machines)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(PartitionPlan::from_order(&order, machines, PartitionStrategy::Random))
}

/// Contiguous quantile blocks of the first covariate; ties keep index order.
pub fn partition_sorted(sample: &Sample, machines: usize) -> Result<PartitionPlan> {
    check_machines(sample.len(), machines)?;
    let order = sample.order_by_first_covariate();
    Ok(PartitionPlan::from_order(&order, machines, PartitionStrategy::SortedByCovariate))
}

/// Pilot sizes per machine: `floor(n0 / M)`, remainder handed out one at a
/// time to the first machines.
fn pilot_quota(n0: usize, sizes: &[usize]) -> Result<Vec<usize>> {
    let machines = sizes.len();
    let total: usize = sizes.iter().sum();
    if n0 < machines {
        return Err(GpaError::InvalidInput(format!("pilot size {n0} is smaller than the {machines} machines")));
    }
    if n0 > total {
        return Err(GpaError::InvalidInput(format!("pilot size {n0} exceeds the sample size {total}")));
    }
    let quota: Vec<usize> = (0..machines).map(|m| n0 / machines + usize::from(m < n0 % machines)).collect();
    if let Some(m) = (0..machines).find(|&m| quota[m] > sizes[m]) {
        return Err(GpaError::InvalidInput(format!(
            "machine {m} holds {} observations but its pilot quota is {}",
            sizes[m], quota[m]
        )));
    }
    Ok(quota)
}

/// Local indices drawn without replacement from each shard.
fn pilot_local_indices(sizes: &[usize], n0: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let quota = pilot_quota(n0, sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sizes
        .iter()
        .zip(quota)
        .map(|(&len, q)| rand::seq::index::sample(&mut rng, len, q).into_vec())
        .collect())
}

/// Pilot sample: per-machine simple random samples without replacement,
/// pooled in machine order.
pub fn pilot_draw(plan: &PartitionPlan, sample: &Sample, n0: usize, seed: u64) -> Result<Sample> {
    if plan.len() != sample.len() {
        return Err(GpaError::LayoutMismatch(format!(
            "plan covers {} observations, sample has {}",
            plan.len(),
            sample.len()
        )));
    }
    let local = pilot_local_indices(&plan.shard_sizes(), n0, seed)?;
    let global: Vec<usize> = local
        .iter()
        .enumerate()
        .flat_map(|(m, idx)| idx.iter().map(move |&k| plan.shard(m)[k]))
        .collect();
    sample.subset(&global)
}

/// Counters for one protocol phase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseCost {
    pub values_sent_to_coordinator: u64,
    pub values_broadcast_to_workers: u64,
    pub worker_kernel_evals: u64,
    pub coordinator_ops: u64,
    pub round_trips: u64,
    pub per_worker_sent: Vec<u64>,
    /// Wall-clock time; informational only and never part of reports.
    pub elapsed: Duration,
}

impl PhaseCost {
    pub fn new(machines: usize) -> Self {
        Self {
            per_worker_sent: vec![0; machines],
            ..Self::default()
        }
    }

    fn send(&mut self, worker: usize, values: u64) {
        self.per_worker_sent[worker] += values;
        self.values_sent_to_coordinator += values;
    }

    fn broadcast(&mut self, machines: usize, values_each: u64) {
        self.values_broadcast_to_workers += machines as u64 * values_each;
    }

    /// True when no scalar crossed the worker/coordinator boundary.
    pub fn is_silent(&self) -> bool {
        self.values_sent_to_coordinator == 0 && self.values_broadcast_to_workers == 0 && self.round_trips == 0
    }

    fn write_report(&self, out: &mut String, phase: &str) {
        let _ = writeln!(out, "{phase}.values_sent_to_coordinator={}", self.values_sent_to_coordinator);
        let _ = writeln!(out, "{phase}.values_broadcast_to_workers={}", self.values_broadcast_to_workers);
        let _ = writeln!(out, "{phase}.worker_kernel_evals={}", self.worker_kernel_evals);
        let _ = writeln!(out, "{phase}.coordinator_ops={}", self.coordinator_ops);
        let _ = writeln!(out, "{phase}.round_trips={}", self.round_trips);
    }
}

/// Costs of a run, by phase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostLedger {
    pub train: PhaseCost,
    pub bandwidth: PhaseCost,
    pub predict: PhaseCost,
}

impl CostLedger {
    /// Flat `phase.counter=value` lines.
    pub fn report(&self) -> String {
        let mut out = String::new();
        self.bandwidth.write_report(&mut out, "bandwidth");
        self.train.write_report(&mut out, "train");
        self.predict.write_report(&mut out, "predict");
        out
    }
}

impl fmt::Display for CostLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.report())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Moments assembled at the coordinator for every query.
    GlobalAssembled,
    /// Average of per-machine estimates for every query.
    OneShot,
    /// Grid values assembled once, queries interpolated locally.
    Gpa,
}

/// What training leaves behind at the coordinator.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    GlobalAssembled { kernel: KernelSpec, bandwidth: f64 },
    OneShot { kernel: KernelSpec, bandwidth: f64 },
    Gpa(GpaModel),
}

impl TrainedModel {
    pub fn strategy(&self) -> Strategy {
        match self {
            TrainedModel::GlobalAssembled { .. } => Strategy::GlobalAssembled,
            TrainedModel::OneShot { .. } => Strategy::OneShot,
            TrainedModel::Gpa(_) => Strategy::Gpa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthMethod {
    /// Local CV on every machine, averaged and rescaled by `M^-e`.
    OneShotCv,
    /// CV on a pooled pilot sample of size `n0`, rescaled by `(N/n0)^-e`.
    PilotCv { n0: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthOutcome {
    pub bandwidth: f64,
    /// Per-machine selections (one-shot) or the single pilot selection.
    pub local: Vec<f64>,
}

struct Worker {
    /// Shard in plan order.
    shard: Sample,
    /// Same rows sorted by the first covariate, for windowed evaluation.
    sorted: Sample,
}

/// Workers holding shards of one sample, plus the coordinator logic.
pub struct Cluster {
    workers: Vec<Worker>,
    dim: usize,
    total: usize,
    parallel: bool,
}

impl Cluster {
    pub fn new(sample: &Sample, plan: &PartitionPlan) -> Result<Self> {
        if plan.len() != sample.len() {
            return Err(GpaError::LayoutMismatch(format!(
                "plan covers {} observations, sample has {}",
                plan.len(),
                sample.len()
            )));
        }
        let workers = (0..plan.machines())
            .map(|m| {
                let shard = sample.subset(plan.shard(m))?;
                let sorted = if shard.dim() == 1 { shard.sorted() } else { shard.clone() };
                Ok(Worker { shard, sorted })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            workers,
            dim: sample.dim(),
            total: sample.len(),
            parallel: false,
        })
    }

    /// Runs workers on the rayon pool. Results are gathered in machine
    /// order, so output is identical to sequential execution.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn machines(&self) -> usize {
        self.workers.len()
    }

    pub fn sample_size(&self) -> usize {
        self.total
    }

    pub fn shard(&self, m: usize) -> &Sample {
        &self.workers[m].shard
    }

    fn on_workers<T: Send>(&self, job: impl Fn(&Worker) -> Result<T> + Sync) -> Result<Vec<T>> {
        if self.parallel {
            self.workers.par_iter().map(&job).collect()
        } else {
            self.workers.iter().map(job).collect()
        }
    }

    fn local_stats(&self, points: &[f64], kernel: &KernelSpec, h: f64) -> Result<Vec<MomentStats>> {
        self.on_workers(|w| local_moments(&w.sorted, points, kernel, h))
    }

    /// Training phase. Only GPA does work here; the other strategies just
    /// record their kernel and bandwidth.
    pub fn run_train(
        &self,
        strategy: Strategy,
        kernel: &KernelSpec,
        h: f64,
        grid: Option<(Geometry, usize)>,
    ) -> Result<(TrainedModel, PhaseCost)> {
        check_bandwidth(h)?;
        let mut cost = PhaseCost::new(self.machines());
        let model = match (strategy, grid) {
            (Strategy::Gpa, Some((geometry, order))) => {
                let start = Instant::now();
                let model = self.train_gpa(kernel, h, geometry, order, &mut cost)?;
                cost.elapsed = start.elapsed();
                TrainedModel::Gpa(model)
            }
            (Strategy::Gpa, None) => return Err(GpaError::InvalidInput("GPA training needs a grid".into())),
            (_, Some(_)) => return Err(GpaError::InvalidInput("only GPA training takes a grid".into())),
            (Strategy::GlobalAssembled, None) => TrainedModel::GlobalAssembled {
                kernel: kernel.clone(),
                bandwidth: h,
            },
            (Strategy::OneShot, None) => TrainedModel::OneShot {
                kernel: kernel.clone(),
                bandwidth: h,
            },
        };
        Ok((model, cost))
    }

    fn train_gpa(
        &self,
        kernel: &KernelSpec,
        h: f64,
        geometry: Geometry,
        order: usize,
        cost: &mut PhaseCost,
    ) -> Result<GpaModel> {
        if geometry.dim() != self.dim {
            return Err(GpaError::InvalidDimension {
                expected: self.dim,
                got: geometry.dim(),
            });
        }
        let points = geometry.points();
        let len = geometry.len() as u64;
        // grid descriptor: lo, hi, J, h
        cost.broadcast(self.machines(), 4);
        cost.round_trips = 1;
        let parts = self.local_stats(&points, kernel, h)?;
        for (m, part) in parts.iter().enumerate() {
            cost.send(m, 2 * len);
            cost.worker_kernel_evals += part.kernel_evaluations();
        }
        let merged = merge_all(&parts)?;
        cost.coordinator_ops = 2 * len * (self.machines() as u64 - 1) + len;
        GpaModel::from_values(
            geometry,
            nw_from_stats(&merged),
            h,
            kernel.clone(),
            order,
            ModelMeta {
                sample_size: self.total as u64,
                machines: self.machines(),
                fitted_at: None,
            },
        )
    }

    /// Prediction phase at row-major `queries`.
    pub fn run_predict(&self, model: &TrainedModel, queries: &[f64]) -> Result<(Vec<Estimate>, PhaseCost)> {
        if !queries.len().is_multiple_of(self.dim) {
            return Err(GpaError::InvalidDimension {
                expected: self.dim,
                got: queries.len() % self.dim,
            });
        }
        let n_star = (queries.len() / self.dim) as u64;
        let machines = self.machines() as u64;
        let mut cost = PhaseCost::new(self.machines());
        let start = Instant::now();
        let out = match model {
            TrainedModel::Gpa(m) => {
                let preds = m.predict_batch(queries)?;
                cost.coordinator_ops = n_star * m.stencil_size() as u64;
                preds.into_iter().map(|p| p.value).collect()
            }
            TrainedModel::GlobalAssembled { kernel, bandwidth } => {
                let parts = self.local_stats(queries, kernel, *bandwidth)?;
                for (m, part) in parts.iter().enumerate() {
                    cost.send(m, 2 * n_star);
                    cost.worker_kernel_evals += part.kernel_evaluations();
                }
                cost.broadcast(self.machines(), self.dim as u64 * n_star);
                cost.round_trips = n_star;
                cost.coordinator_ops = n_star * (2 * (machines - 1) + 1);
                nw_from_stats(&merge_all(&parts)?)
            }
            TrainedModel::OneShot { kernel, bandwidth } => {
                let parts = self.local_stats(queries, kernel, *bandwidth)?;
                let local: Vec<Vec<Estimate>> = parts.iter().map(nw_from_stats).collect();
                for (m, part) in parts.iter().enumerate() {
                    cost.send(m, n_star);
                    cost.worker_kernel_evals += part.kernel_evaluations();
                }
                cost.broadcast(self.machines(), self.dim as u64 * n_star);
                cost.round_trips = n_star;
                cost.coordinator_ops = n_star * machines;
                let mut column = Vec::with_capacity(local.len());
                (0..n_star as usize)
                    .map(|q| {
                        column.clear();
                        column.extend(local.iter().map(|l| l[q]));
                        oneshot_combine(&column)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        cost.elapsed = start.elapsed();
        Ok((out, cost))
    }

    /// Bandwidth-selection phase.
    pub fn run_bandwidth(
        &self,
        method: BandwidthMethod,
        kernel: &KernelSpec,
        weight: &WeightFn,
        candidates: &CandidateSet,
    ) -> Result<(BandwidthOutcome, PhaseCost)> {
        let mut cost = PhaseCost::new(self.machines());
        let start = Instant::now();
        let outcome = match method {
            BandwidthMethod::OneShotCv => {
                let choices = self.on_workers(|w| {
                    minimize_cv(&w.sorted, &candidates.with_n_ref(w.sorted.len()), kernel, weight)
                })?;
                let mut local = Vec::with_capacity(choices.len());
                for (m, c) in choices.iter().enumerate() {
                    cost.send(m, 1);
                    cost.worker_kernel_evals += c.scores.iter().map(|s| s.kernel_evaluations).sum::<u64>();
                    local.push(c.bandwidth);
                }
                cost.round_trips = 1;
                cost.coordinator_ops = local.len() as u64 + 1;
                BandwidthOutcome {
                    bandwidth: oneshot_bandwidth(&local, candidates.exponent)?,
                    local,
                }
            }
            BandwidthMethod::PilotCv { n0, seed } => {
                let sizes: Vec<usize> = self.workers.iter().map(|w| w.shard.len()).collect();
                let local = pilot_local_indices(&sizes, n0, seed)?;
                let mut pooled = Vec::with_capacity(n0);
                for (m, idx) in local.iter().enumerate() {
                    let rows = self.workers[m].shard.subset(idx)?;
                    cost.send(m, (rows.len() * (self.dim + 1)) as u64);
                    pooled.push(rows);
                }
                cost.round_trips = 1;
                let pilot = concat(&pooled)?;
                let choice = pilot_bandwidth(&pilot, self.total, kernel, weight, candidates)?;
                cost.coordinator_ops = choice.scores.iter().map(|s| s.kernel_evaluations).sum();
                BandwidthOutcome {
                    bandwidth: choice.bandwidth,
                    local: vec![choice.pilot_bandwidth],
                }
            }
        };
        cost.elapsed = start.elapsed();
        Ok((outcome, cost))
    }
}

fn concat(parts: &[Sample]) -> Result<Sample> {
    let dim = parts.first().map_or(1, Sample::dim);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for p in parts {
        x.extend_from_slice(p.x());
        y.extend_from_slice(p.y());
    }
    Sample::new(x, y, dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpa::Grid;
    use crate::moments::nw_estimate;

    fn data(n: usize) -> Sample {
        let x: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64 / n as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (5.0 * v).sin() + 0.1 * (v * 37.0).cos()).collect();
        Sample::univariate(x, y).unwrap()
    }

    #[test]
    fn random_partition_is_balanced_and_seeded() {
        let p = partition_random(10, 2, 1).unwrap();
        assert_eq!(p.shard_sizes(), vec![5, 5]);
        assert_eq!(p, partition_random(10, 2, 1).unwrap());
        let p = partition_random(103, 10, 4).unwrap();
        let sizes = p.shard_sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<usize> = (0..10).flat_map(|m| p.shard(m).to_vec()).collect();
        all.sort();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert!(partition_random(3, 4, 0).is_err());
        assert!(partition_random(3, 0, 0).is_err());
    }

    #[test]
    fn sorted_partition_blocks() {
        let s = Sample::univariate(vec![3.0, 1.0, 2.0], vec![0.0; 3]).unwrap();
        let p = partition_sorted(&s, 3).unwrap();
        assert_eq!(p.shard(0), &[1]);
        assert_eq!(p.shard(1), &[2]);
        assert_eq!(p.shard(2), &[0]);
        assert_eq!(p.assignment(), &[2, 0, 1]);
    }

    #[test]
    fn pilot_quota_and_determinism() {
        let s = data(1000);
        let plan = partition_random(1000, 50, 2).unwrap();
        let a = pilot_draw(&plan, &s, 120, 8).unwrap();
        assert_eq!(a.len(), 120);
        assert_eq!(a, pilot_draw(&plan, &s, 120, 8).unwrap());
        assert_eq!(pilot_quota(1000, &plan.shard_sizes()).unwrap(), vec![20; 50]);
        assert_eq!(pilot_quota(7, &[3, 3, 3]).unwrap(), vec![3, 2, 2]);
        assert!(pilot_draw(&plan, &s, 49, 8).is_err());
        assert!(pilot_draw(&plan, &s, 1001, 8).is_err());
        let full = pilot_draw(&plan, &s, 1000, 8).unwrap();
        let mut xs = full.x().to_vec();
        xs.sort_by(f64::total_cmp);
        let mut orig = s.x().to_vec();
        orig.sort_by(f64::total_cmp);
        assert_eq!(xs, orig);
    }

    #[test]
    fn gpa_training_ledger_and_exactness() {
        let s = data(600);
        let k = KernelSpec::epanechnikov();
        let g = Grid::compact(0.0, 1.0, 20).unwrap();
        let plan = partition_random(600, 6, 3).unwrap();
        let cluster = Cluster::new(&s, &plan).unwrap();
        let (model, cost) = cluster.run_train(Strategy::Gpa, &k, 0.1, Some((g.into(), 1))).unwrap();
        assert_eq!(cost.values_sent_to_coordinator, 6 * 2 * 21);
        assert_eq!(cost.per_worker_sent.iter().sum::<u64>(), cost.values_sent_to_coordinator);
        let TrainedModel::Gpa(model) = model else { panic!() };
        for (j, v) in model.values().iter().enumerate() {
            let single = nw_estimate(&s, g.point(j), &k, 0.1).unwrap().unwrap();
            assert!((v.unwrap() - single).abs() <= 1e-12 * single.abs().max(1e-300));
        }
        let (_, pc) = cluster.run_predict(&TrainedModel::Gpa(model), &[0.1, 0.5, 0.77]).unwrap();
        assert!(pc.is_silent());
        let (_, oc) = cluster.run_train(Strategy::OneShot, &k, 0.1, None).unwrap();
        assert!(oc.is_silent());
        assert!(cluster.run_train(Strategy::Gpa, &k, 0.1, None).is_err());
    }

    #[test]
    fn predict_ledgers() {
        let s = data(400);
        let k = KernelSpec::epanechnikov();
        let cluster = Cluster::new(&s, &partition_sorted(&s, 4).unwrap()).unwrap();
        let queries = [0.05, 0.4, 0.93];
        let global = TrainedModel::GlobalAssembled { kernel: k.clone(), bandwidth: 0.08 };
        let (g, gc) = cluster.run_predict(&global, &queries).unwrap();
        assert_eq!(gc.round_trips, 3);
        assert_eq!(gc.values_sent_to_coordinator, 4 * 2 * 3);
        for (q, v) in queries.iter().zip(&g) {
            let single = nw_estimate(&s, *q, &k, 0.08).unwrap().unwrap();
            assert!((v.unwrap() - single).abs() <= 1e-12 * single.abs());
        }
        let os = TrainedModel::OneShot { kernel: k, bandwidth: 0.08 };
        let (o, oc) = cluster.run_predict(&os, &queries).unwrap();
        assert_eq!(oc.values_sent_to_coordinator, 4 * 3);
        assert!(o.iter().any(Option::is_none));
    }

    #[test]
    fn bandwidth_ledgers() {
        let s = data(500);
        let k = KernelSpec::epanechnikov();
        let cluster = Cluster::new(&s, &partition_random(500, 5, 0).unwrap()).unwrap();
        let w = WeightFn::default();
        let set = CandidateSet::new(500);
        let (os, c) = cluster.run_bandwidth(BandwidthMethod::OneShotCv, &k, &w, &set).unwrap();
        assert_eq!(c.values_sent_to_coordinator, 5);
        assert_eq!(os.local.len(), 5);
        let (_, c) = cluster
            .run_bandwidth(BandwidthMethod::PilotCv { n0: 100, seed: 1 }, &k, &w, &set)
            .unwrap();
        assert_eq!(c.values_sent_to_coordinator, 200);
    }

    #[test]
    fn parallel_matches_sequential() {
        let s = data(900);
        let k = KernelSpec::epanechnikov();
        let plan = partition_random(900, 9, 5).unwrap();
        let g = Grid::compact(0.0, 1.0, 30).unwrap();
        let seq = Cluster::new(&s, &plan).unwrap();
        let par = Cluster::new(&s, &plan).unwrap().with_parallel(true);
        let (a, _) = seq.run_train(Strategy::Gpa, &k, 0.07, Some((g.into(), 1))).unwrap();
        let (b, _) = par.run_train(Strategy::Gpa, &k, 0.07, Some((g.into(), 1))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ledger_report_is_flat() {
        let mut l = CostLedger::default();
        l.train.values_sent_to_coordinator = 42;
        let r = l.report();
        assert!(r.contains("train.values_sent_to_coordinator=42\n"));
        assert!(r.lines().all(|line| line.split('=').count() == 2));
    }
}
