//! Replicated simulation experiments producing the comparison tables.
//!
//! Replication `b` uses seed `seed + b`; every random stream in a
//! replication is derived from that seed, so tables are reproducible
//! bit-for-bit regardless of the thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::bandwidth::{CandidateSet, WeightFn};
use crate::cluster::{
    partition_random, partition_sorted, BandwidthMethod, Cluster, CostLedger, PartitionPlan, PartitionStrategy,
    Strategy, TrainedModel,
};
use crate::error::{GpaError, Result};
use crate::gpa::{design_grid, Grid, Support};
use crate::kernels::KernelSpec;
use crate::moments::Sample;
use crate::synth::{h_opt, mrae, rmse, SimSetting};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "GPA_THREADS";

/// Thread pool sized by `GPA_THREADS` (all cores when unset or invalid).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| GpaError::InvalidInput(format!("cannot build thread pool: {e}")))
}

/// SplitMix64 step, used to derive independent sub-seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for the held-out test sample.
pub const STREAM_TEST: u64 = 1;
/// Stream for the random partition.
pub const STREAM_PARTITION: u64 = 2;
/// Stream for the pilot draw.
pub const STREAM_PILOT: u64 = 3;

/// Partition plan for replication seed `seed`.
pub fn plan_for(strategy: PartitionStrategy, sample: &Sample, machines: usize, seed: u64) -> Result<PartitionPlan> {
    match strategy {
        PartitionStrategy::Random => partition_random(sample.len(), machines, derive_seed(seed, STREAM_PARTITION)),
        PartitionStrategy::SortedByCovariate => partition_sorted(sample, machines),
    }
}

/// Bandwidth used by the one-shot and GPA estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthChoice {
    /// AMISE-optimal bandwidth of the setting.
    Oracle,
    Fixed(f64),
    /// One-shot CV selector, recomputed every replication.
    OneShot,
    /// Pilot-sample CV selector with pilot size `n0`.
    Pilot(usize),
}

#[derive(Debug, Clone)]
pub struct EstimatorBench {
    pub setting: SimSetting,
    pub n: usize,
    pub n_test: usize,
    pub machines: usize,
    pub reps: usize,
    pub seed: u64,
    pub partition: PartitionStrategy,
    pub kernel: KernelSpec,
    pub weight: WeightFn,
    pub candidates: CandidateSet,
    /// Bandwidth for one-shot and GPA. The global estimator uses the same
    /// value for `Oracle` and `Fixed`, and the oracle bandwidth otherwise.
    pub bandwidth: BandwidthChoice,
    pub grid_multiplier: f64,
    /// Fixed segment count, overriding the design formula.
    pub segments: Option<usize>,
    /// Interpolation order of the GPA estimator.
    pub order: usize,
}

impl EstimatorBench {
    /// Defaults: N* = 5000, M = 50, B = 100, oracle bandwidth, random partition.
    pub fn new(setting: SimSetting, n: usize) -> Self {
        Self {
            setting,
            n,
            n_test: 5000,
            machines: 50,
            reps: 100,
            seed: 0,
            partition: PartitionStrategy::Random,
            kernel: KernelSpec::epanechnikov(),
            weight: WeightFn::default(),
            candidates: CandidateSet::new(n),
            bandwidth: BandwidthChoice::Oracle,
            grid_multiplier: 1.0,
            segments: None,
            order: 1,
        }
    }

    fn oracle_weight(&self) -> WeightFn {
        WeightFn {
            support: Some(self.setting.law.support()),
            ..self.weight
        }
    }

    /// Reference bandwidth of the setting at this sample size.
    pub fn oracle_bandwidth(&self) -> Result<f64> {
        h_opt(&self.setting, &self.kernel, &self.oracle_weight(), self.n as u64)
    }

    fn grid(&self, h: f64) -> Result<Grid> {
        let (lo, hi) = self.setting.law.support();
        match self.segments {
            Some(j) => Grid::compact(lo, hi, j),
            None => design_grid(self.n as u64, h, Support::Compact { lo, hi }, self.grid_multiplier),
        }
    }

    fn replicate(&self, b: usize, h_ref: f64) -> Result<RepOutcome> {
        let seed = self.seed.wrapping_add(b as u64);
        let train = self.setting.generate(self.n, seed)?;
        let test = self.setting.generate(self.n_test, derive_seed(seed, STREAM_TEST))?;
        let plan = plan_for(self.partition, &train.sample, self.machines, seed)?;
        let cluster = Cluster::new(&train.sample, &plan)?;
        let mut bandwidth_cost = Default::default();
        let h = match self.bandwidth {
            BandwidthChoice::Oracle => h_ref,
            BandwidthChoice::Fixed(h) => h,
            BandwidthChoice::OneShot | BandwidthChoice::Pilot(_) => {
                let method = match self.bandwidth {
                    BandwidthChoice::Pilot(n0) => BandwidthMethod::PilotCv {
                        n0,
                        seed: derive_seed(seed, STREAM_PILOT),
                    },
                    _ => BandwidthMethod::OneShotCv,
                };
                let (out, cost) = cluster.run_bandwidth(method, &self.kernel, &self.weight, &self.candidates)?;
                bandwidth_cost = cost;
                out.bandwidth
            }
        };
        let h_global = match self.bandwidth {
            BandwidthChoice::Fixed(h) => h,
            _ => h_ref,
        };
        let grid = self.grid(h)?;
        let queries = test.sample.x();

        let mut ledgers = Vec::with_capacity(3);
        let mut scores = Vec::with_capacity(3);
        for (strategy, bw) in [
            (Strategy::GlobalAssembled, h_global),
            (Strategy::OneShot, h),
            (Strategy::Gpa, h),
        ] {
            let geometry = (strategy == Strategy::Gpa).then(|| (grid.into(), self.order));
            let (model, train_cost) = cluster.run_train(strategy, &self.kernel, bw, geometry)?;
            let (pred, predict_cost) = cluster.run_predict(&model, queries)?;
            let any_undefined = pred.iter().any(Option::is_none);
            let score = if any_undefined { None } else { Some(rmse(&pred, &test.truth)?.value) };
            scores.push(score);
            ledgers.push(CostLedger {
                train: train_cost,
                bandwidth: bandwidth_cost.clone(),
                predict: predict_cost,
            });
        }
        Ok(RepOutcome {
            scores,
            ledgers,
            bandwidth: h,
            segments: grid.segments(),
        })
    }

    pub fn run(&self) -> Result<EstimatorTable> {
        if self.reps == 0 {
            return Err(GpaError::InvalidInput("need at least one replication".into()));
        }
        let h_ref = self.oracle_bandwidth()?;
        let outcomes = (0..self.reps)
            .into_par_iter()
            .map(|b| self.replicate(b, h_ref))
            .collect::<Result<Vec<_>>>()?;
        let names = ["global", "one-shot", "gpa"];
        let columns = names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let values: Vec<Option<f64>> = outcomes.iter().map(|o| o.scores[k]).collect();
                let mut ledger = BTreeMap::new();
                let first = &outcomes[0].ledgers[k];
                for line in first.report().lines() {
                    if let Some((key, v)) = line.split_once('=') {
                        ledger.insert(key.to_string(), v.parse().unwrap_or(0));
                    }
                }
                ColumnSummary::from_runs(name, &values, ledger)
            })
            .collect();
        Ok(EstimatorTable {
            n: self.n,
            n_test: self.n_test,
            machines: self.machines,
            reps: self.reps,
            seed: self.seed,
            partition: match self.partition {
                PartitionStrategy::Random => "random",
                PartitionStrategy::SortedByCovariate => "sorted",
            }
            .into(),
            bandwidth_choice: self.bandwidth,
            h_opt: h_ref,
            mean_bandwidth: outcomes.iter().map(|o| o.bandwidth).sum::<f64>() / self.reps as f64,
            segments: outcomes[0].segments,
            columns,
        })
    }
}

struct RepOutcome {
    scores: Vec<Option<f64>>,
    ledgers: Vec<CostLedger>,
    bandwidth: f64,
    segments: usize,
}

/// Mean and standard error of one estimator's per-run RMSE.
///
/// A run in which any prediction is undefined has no RMSE; such runs are
/// counted in `na_runs` and left out of the mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnSummary {
    pub estimator: String,
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub na_runs: usize,
    pub runs: usize,
    /// Communication counters of the first replication.
    pub ledger: BTreeMap<String, u64>,
}

impl ColumnSummary {
    fn from_runs(name: &str, values: &[Option<f64>], ledger: BTreeMap<String, u64>) -> Self {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        let (mean, se) = mean_se(&defined);
        Self {
            estimator: name.into(),
            mean,
            se,
            na_runs: values.len() - defined.len(),
            runs: values.len(),
            ledger,
        }
    }

    /// True when every run was undefined.
    pub fn is_na(&self) -> bool {
        self.mean.is_none()
    }
}

fn mean_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = crate::numeric::sum(values) / n;
    let se = if values.len() > 1 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        Some((ss / (n - 1.0)).sqrt() / n.sqrt())
    } else {
        None
    };
    (Some(mean), se)
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorTable {
    pub n: usize,
    pub n_test: usize,
    pub machines: usize,
    pub reps: usize,
    pub seed: u64,
    pub partition: String,
    pub bandwidth_choice: BandwidthChoice,
    pub h_opt: f64,
    pub mean_bandwidth: f64,
    pub segments: usize,
    /// Global, one-shot, GPA, in that order.
    pub columns: Vec<ColumnSummary>,
}

impl EstimatorTable {
    pub fn column(&self, name: &str) -> Option<&ColumnSummary> {
        self.columns.iter().find(|c| c.estimator == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "N={} N*={} M={} B={} partition={} h_opt={:.6} h={:.6} J={}",
            self.n, self.n_test, self.machines, self.reps, self.partition, self.h_opt, self.mean_bandwidth, self.segments
        );
        let _ = writeln!(out, "{:<10} {:>10} {:>10} {:>8}", "estimator", "RMSE", "SE", "NA runs");
        for c in &self.columns {
            let _ = writeln!(
                out,
                "{:<10} {:>10} {:>10} {:>8}",
                c.estimator,
                fmt_cell(c.mean),
                fmt_cell(c.se),
                c.na_runs
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BandwidthBench {
    pub setting: SimSetting,
    pub sizes: Vec<usize>,
    /// Pilot size for each entry of `sizes`.
    pub pilot_sizes: Vec<usize>,
    pub machines: usize,
    pub reps: usize,
    pub seed: u64,
    pub kernel: KernelSpec,
    pub weight: WeightFn,
    pub candidates: CandidateSet,
}

impl BandwidthBench {
    /// Defaults: N in {1e4, 2e4, 5e4} with pilot sizes {1000, 1500, 3000}, M = 50, B = 100.
    pub fn new(setting: SimSetting) -> Self {
        Self {
            setting,
            sizes: vec![10_000, 20_000, 50_000],
            pilot_sizes: vec![1000, 1500, 3000],
            machines: 50,
            reps: 100,
            seed: 0,
            kernel: KernelSpec::epanechnikov(),
            weight: WeightFn::default(),
            candidates: CandidateSet::new(1),
        }
    }

    pub fn run(&self) -> Result<BandwidthTable> {
        if self.sizes.len() != self.pilot_sizes.len() {
            return Err(GpaError::InvalidInput("one pilot size is needed per sample size".into()));
        }
        if self.reps == 0 {
            return Err(GpaError::InvalidInput("need at least one replication".into()));
        }
        let oracle_weight = WeightFn {
            support: Some(self.setting.law.support()),
            ..self.weight
        };
        let mut rows = Vec::with_capacity(self.sizes.len());
        for (&n, &n0) in self.sizes.iter().zip(&self.pilot_sizes) {
            let h_ref = h_opt(&self.setting, &self.kernel, &oracle_weight, n as u64)?;
            let picks = (0..self.reps)
                .into_par_iter()
                .map(|b| {
                    let seed = self.seed.wrapping_add(b as u64);
                    let data = self.setting.generate(n, seed)?;
                    let plan = plan_for(PartitionStrategy::Random, &data.sample, self.machines, seed)?;
                    let cluster = Cluster::new(&data.sample, &plan)?;
                    let (os, _) =
                        cluster.run_bandwidth(BandwidthMethod::OneShotCv, &self.kernel, &self.weight, &self.candidates)?;
                    let pilot = BandwidthMethod::PilotCv {
                        n0,
                        seed: derive_seed(seed, STREAM_PILOT),
                    };
                    let (plt, _) = cluster.run_bandwidth(pilot, &self.kernel, &self.weight, &self.candidates)?;
                    Ok((os.bandwidth, plt.bandwidth))
                })
                .collect::<Result<Vec<(f64, f64)>>>()?;
            let (os, plt): (Vec<f64>, Vec<f64>) = picks.into_iter().unzip();
            rows.push(BandwidthRow {
                n,
                pilot_size: n0,
                h_opt: h_ref,
                mrae_oneshot: mrae(&os, h_ref)?,
                mrae_pilot: mrae(&plt, h_ref)?,
                mean_oneshot: os.iter().sum::<f64>() / os.len() as f64,
                mean_pilot: plt.iter().sum::<f64>() / plt.len() as f64,
            });
        }
        Ok(BandwidthTable {
            machines: self.machines,
            reps: self.reps,
            seed: self.seed,
            rows,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthRow {
    pub n: usize,
    pub pilot_size: usize,
    pub h_opt: f64,
    pub mrae_oneshot: f64,
    pub mrae_pilot: f64,
    pub mean_oneshot: f64,
    pub mean_pilot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthTable {
    pub machines: usize,
    pub reps: usize,
    pub seed: u64,
    pub rows: Vec<BandwidthRow>,
}

impl BandwidthTable {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "M={} B={}", self.machines, self.reps);
        let _ = writeln!(
            out,
            "{:>8} {:>6} {:>10} {:>10} {:>10}",
            "N", "n0", "h_opt", "MRAE(OS)", "MRAE(PLT)"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>8} {:>6} {:>10.6} {:>10.4} {:>10.4}",
                r.n, r.pilot_size, r.h_opt, r.mrae_oneshot, r.mrae_pilot
            );
        }
        out
    }
}

/// Ratio of GPA to global RMSE as the grid is refined.
#[derive(Debug, Clone)]
pub struct GridSweep {
    pub setting: SimSetting,
    pub n: usize,
    pub n_test: usize,
    pub reps: usize,
    pub seed: u64,
    pub kernel: KernelSpec,
    pub weight: WeightFn,
    /// Segment counts are `ceil(f / h)` for each factor `f`.
    pub factors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub factor: f64,
    pub segments: usize,
    pub mean_gpa: f64,
    pub mean_global: f64,
    pub ratio: f64,
}

impl GridSweep {
    pub fn run(&self) -> Result<Vec<SweepRow>> {
        let bench = EstimatorBench {
            n_test: self.n_test,
            machines: 1,
            reps: self.reps,
            seed: self.seed,
            kernel: self.kernel.clone(),
            weight: self.weight,
            ..EstimatorBench::new(self.setting.clone(), self.n)
        };
        let h = bench.oracle_bandwidth()?;
        let (lo, hi) = self.setting.law.support();
        let grids = self
            .factors
            .iter()
            .map(|f| Grid::compact(lo, hi, ((f / h).ceil() as usize).max(1)))
            .collect::<Result<Vec<_>>>()?;
        let per_rep = (0..self.reps)
            .into_par_iter()
            .map(|b| {
                let seed = self.seed.wrapping_add(b as u64);
                let train = self.setting.generate(self.n, seed)?;
                let test = self.setting.generate(self.n_test, derive_seed(seed, STREAM_TEST))?;
                let cluster = Cluster::new(&train.sample, &partition_random(self.n, 1, seed)?)?;
                let global = TrainedModel::GlobalAssembled { kernel: self.kernel.clone(), bandwidth: h };
                let (pred, _) = cluster.run_predict(&global, test.sample.x())?;
                let mut out = vec![rmse(&pred, &test.truth)?.value];
                for g in &grids {
                    let (model, _) = cluster.run_train(Strategy::Gpa, &self.kernel, h, Some(((*g).into(), 1)))?;
                    let (pred, _) = cluster.run_predict(&model, test.sample.x())?;
                    out.push(rmse(&pred, &test.truth)?.value);
                }
                Ok(out)
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let mean = |k: usize| per_rep.iter().map(|r| r[k]).sum::<f64>() / per_rep.len() as f64;
        let mean_global = mean(0);
        Ok(self
            .factors
            .iter()
            .zip(&grids)
            .enumerate()
            .map(|(k, (&factor, g))| {
                let mean_gpa = mean(k + 1);
                SweepRow {
                    factor,
                    segments: g.segments(),
                    mean_gpa,
                    mean_global,
                    ratio: mean_gpa / mean_global,
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, STREAM_TEST), derive_seed(1, STREAM_PARTITION));
        assert_ne!(derive_seed(1, STREAM_TEST), derive_seed(2, STREAM_TEST));
    }

    #[test]
    fn mean_se_basics() {
        assert_eq!(mean_se(&[]), (None, None));
        assert_eq!(mean_se(&[2.0]), (Some(2.0), None));
        let (m, se) = mean_se(&[1.0, 3.0]);
        assert_eq!(m, Some(2.0));
        assert!((se.unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn small_bench_is_deterministic() {
        let mut b = EstimatorBench::new(SimSetting::setting1(), 2000);
        b.n_test = 200;
        b.machines = 5;
        b.reps = 2;
        let t1 = b.run().unwrap();
        let t2 = b.run().unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1.to_text(), t2.to_text());
        assert_eq!(t1.columns.len(), 3);
        let gpa = t1.column("gpa").unwrap();
        assert_eq!(gpa.ledger["predict.values_sent_to_coordinator"], 0);
        assert_eq!(
            gpa.ledger["train.values_sent_to_coordinator"],
            5 * 2 * (t1.segments as u64 + 1)
        );
    }

    #[test]
    fn sorted_partition_marks_oneshot_na() {
        let mut b = EstimatorBench::new(SimSetting::setting1(), 2000);
        b.n_test = 300;
        b.machines = 20;
        b.reps = 1;
        b.partition = PartitionStrategy::SortedByCovariate;
        let t = b.run().unwrap();
        assert!(t.column("one-shot").unwrap().is_na());
        assert!(!t.column("gpa").unwrap().is_na());
        assert!(t.to_text().contains("NA"));
    }
}
