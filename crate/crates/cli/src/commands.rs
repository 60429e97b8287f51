use std::fmt::Write as _;
use std::path::Path;

use gpa_core::bandwidth::{CandidateSet, WeightFn};
use gpa_core::bench::{
    derive_seed, plan_for, BandwidthBench, BandwidthChoice, EstimatorBench, GridSweep, SweepRow, STREAM_PILOT,
    STREAM_TEST,
};
use gpa_core::cluster::{BandwidthMethod, Cluster, CostLedger, PartitionStrategy, PhaseCost, Strategy, TrainedModel};
use gpa_core::gpa::{design_grid, io, Geometry, Grid, ModelMeta, MultiGrid, Support, SupportMode};
use gpa_core::synth::{h_opt, rmse, SimSetting};
use gpa_core::{GpaError, KernelSpec, Sample};

use crate::data::{fmt_estimate, read_points, read_sample, write_csv};
use crate::error::CliError;
use crate::{
    BandwidthArgs, BenchArgs, DataArgs, FitArgs, MethodArg, PartitionArg, PredictArgs, SelectorArgs, SimulateArgs,
    StrategyArg, SupportArg, TableArg,
};

/// Undefined grid points listed by name before the warning is shortened.
const LISTED_UNDEFINED: usize = 10;

fn parse_setting(name: &str, sigma: Option<f64>) -> Result<SimSetting, CliError> {
    let setting: SimSetting = name.parse().map_err(|e: GpaError| CliError::Usage(e.to_string()))?;
    match sigma {
        Some(s) => setting.with_sigma(s).map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(setting),
    }
}

fn parse_kernel(name: &str) -> Result<KernelSpec, CliError> {
    name.parse().map_err(|e: GpaError| CliError::Usage(e.to_string()))
}

fn partition(p: PartitionArg) -> PartitionStrategy {
    match p {
        PartitionArg::Random => PartitionStrategy::Random,
        PartitionArg::Sorted => PartitionStrategy::SortedByCovariate,
    }
}

fn load_data(args: &DataArgs) -> Result<(Sample, Option<SimSetting>), CliError> {
    match (&args.input, &args.setting) {
        (Some(path), _) => Ok((read_sample(path)?, None)),
        (None, Some(name)) => {
            let setting = parse_setting(name, args.sigma)?;
            let data = setting.generate(args.n, args.seed)?;
            Ok((data.sample, Some(setting)))
        }
        (None, None) => Err(CliError::Usage("one of --input or --setting is required".into())),
    }
}

fn weight(sel: &SelectorArgs) -> Result<WeightFn, CliError> {
    WeightFn::new(sel.trim, None).map_err(|e| CliError::Usage(e.to_string()))
}

fn candidates(sel: &SelectorArgs, n: usize, dim: usize) -> CandidateSet {
    CandidateSet {
        n_ref: n,
        c_h: sel.ch,
        count: sel.candidates,
        exponent: 1.0 / (dim as f64 + 4.0),
    }
}

fn oracle(setting: Option<&SimSetting>, dim: usize, kernel: &KernelSpec, w: WeightFn, n: usize) -> Result<f64, CliError> {
    let setting =
        setting.ok_or_else(|| CliError::Usage("the oracle bandwidth needs a simulation setting".into()))?;
    if dim != 1 {
        return Err(CliError::Usage("the oracle bandwidth is univariate only".into()));
    }
    let w = WeightFn {
        support: Some(setting.law.support()),
        ..w
    };
    Ok(h_opt(setting, kernel, &w, n as u64)?)
}

struct Selection {
    bandwidth: f64,
    local: Vec<f64>,
    cost: PhaseCost,
}

#[allow(clippy::too_many_arguments)]
fn select(
    cluster: &Cluster,
    method: MethodArg,
    setting: Option<&SimSetting>,
    sample: &Sample,
    kernel: &KernelSpec,
    sel: &SelectorArgs,
    seed: u64,
) -> Result<Selection, CliError> {
    let w = weight(sel)?;
    let method = match method {
        MethodArg::Oracle => {
            return Ok(Selection {
                bandwidth: oracle(setting, sample.dim(), kernel, w, sample.len())?,
                local: Vec::new(),
                cost: PhaseCost::new(cluster.machines()),
            });
        }
        MethodArg::Oneshot => BandwidthMethod::OneShotCv,
        MethodArg::Pilot => BandwidthMethod::PilotCv {
            n0: sel.pilot_size.min(sample.len()),
            seed: derive_seed(seed, STREAM_PILOT),
        },
    };
    let (out, cost) = cluster.run_bandwidth(method, kernel, &w, &candidates(sel, sample.len(), sample.dim()))?;
    Ok(Selection {
        bandwidth: out.bandwidth,
        local: out.local,
        cost,
    })
}

fn build_cluster(sample: &Sample, p: PartitionArg, machines: usize, seed: u64) -> Result<Cluster, CliError> {
    if machines == 0 {
        return Err(CliError::Usage("--machines must be at least 1".into()));
    }
    let plan = plan_for(partition(p), sample, machines, seed)?;
    Ok(Cluster::new(sample, &plan)?.with_parallel(true))
}

/// Writes a report to stdout (or stderr when stdout carries data), and to
/// `ledger` when given.
fn emit(report: &str, ledger: Option<&Path>, stdout_busy: bool) -> Result<(), CliError> {
    if stdout_busy {
        eprint!("{report}");
    } else {
        print!("{report}");
    }
    if let Some(path) = ledger {
        std::fs::write(path, report).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    Ok(())
}

fn fitted_at() -> Option<String> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<u64>().ok())
        .map(|secs| format!("unix:{secs}"))
}

fn range_of(sample: &Sample) -> (f64, f64) {
    (0..sample.dim())
        .map(|s| sample.range(s))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (lo, hi)| (a.min(lo), b.max(hi)))
}

fn fit_geometry(args: &FitArgs, sample: &Sample, setting: Option<&SimSetting>, h: f64) -> Result<Geometry, CliError> {
    let n = sample.len() as u64;
    let axis = match args.support {
        SupportArg::Compact => {
            let (dlo, dhi) = setting.map_or_else(|| range_of(sample), |s| s.law.support());
            let (lo, hi) = (args.lo.unwrap_or(dlo), args.hi.unwrap_or(dhi));
            match args.segments {
                Some(j) => Grid::compact(lo, hi, j)?,
                None => design_grid(n, h, Support::Compact { lo, hi }, args.grid_multiplier)?,
            }
        }
        SupportArg::Diverging => match args.segments {
            Some(j) => {
                let ln = (n as f64).ln();
                Grid::new(-ln, ln, j, SupportMode::Diverging)?
            }
            None => design_grid(n, h, Support::Diverging, args.grid_multiplier)?,
        },
    };
    Ok(if sample.dim() == 1 {
        axis.into()
    } else {
        MultiGrid::new(axis, sample.dim())?.into()
    })
}

pub fn fit(args: FitArgs) -> Result<(), CliError> {
    if args.order == 0 {
        return Err(CliError::Usage("--order must be at least 1".into()));
    }
    let (sample, setting) = load_data(&args.data)?;
    let kernel = match &args.kernel {
        Some(k) => parse_kernel(k)?,
        None => KernelSpec::for_interpolation_order(args.order).map_err(|e| CliError::Usage(e.to_string()))?,
    };
    let cluster = build_cluster(&sample, args.cluster.partition, args.cluster.machines.unwrap_or(1), args.data.seed)?;
    let selection = match args.h {
        Some(h) => Selection {
            bandwidth: h,
            local: Vec::new(),
            cost: PhaseCost::new(cluster.machines()),
        },
        None => {
            let method = args.bandwidth_method.unwrap_or(if setting.is_some() {
                MethodArg::Oracle
            } else {
                MethodArg::Oneshot
            });
            select(&cluster, method, setting.as_ref(), &sample, &kernel, &args.selector, args.data.seed)?
        }
    };
    let h = selection.bandwidth;
    let geometry = fit_geometry(&args, &sample, setting.as_ref(), h)?;
    let segments = geometry.axis().segments();
    let (trained, train_cost) = cluster.run_train(Strategy::Gpa, &kernel, h, Some((geometry, args.order)))?;
    let TrainedModel::Gpa(mut model) = trained else {
        unreachable!("GPA training returns a grid model");
    };
    let undefined = model.undefined_points();
    if undefined.len() == model.values().len() {
        return Err(GpaError::AllUndefined(format!(
            "no grid point has kernel weight at h = {h}; try a larger bandwidth"
        ))
        .into());
    }
    if !undefined.is_empty() {
        let dim = model.dim();
        let points = model.geometry().points();
        let mut msg = format!("warning: {} grid point(s) undefined:", undefined.len());
        for &j in undefined.iter().take(LISTED_UNDEFINED) {
            let _ = write!(msg, " #{j} {:?}", &points[j * dim..(j + 1) * dim]);
        }
        if undefined.len() > LISTED_UNDEFINED {
            msg.push_str(" ...");
        }
        eprintln!("{msg}");
    }
    model.set_meta(ModelMeta {
        fitted_at: fitted_at(),
        ..model.meta().clone()
    });
    io::save(&model, &args.out)?;

    let ledger = CostLedger {
        train: train_cost,
        bandwidth: selection.cost,
        predict: PhaseCost::new(cluster.machines()),
    };
    let mut report = String::new();
    let _ = writeln!(report, "n={}", sample.len());
    let _ = writeln!(report, "dim={}", sample.dim());
    let _ = writeln!(report, "machines={}", cluster.machines());
    let _ = writeln!(report, "bandwidth={h}");
    let _ = writeln!(report, "kernel={}", kernel.id());
    let _ = writeln!(report, "order={}", args.order);
    let _ = writeln!(report, "segments={segments}");
    let _ = writeln!(report, "grid_points={}", model.values().len());
    let _ = writeln!(report, "undefined_points={}", undefined.len());
    report.push_str(&ledger.report());
    emit(&report, args.ledger.as_deref(), false)
}

pub fn predict(args: PredictArgs) -> Result<(), CliError> {
    let mut model = io::load(&args.model)?;
    if let Some(order) = args.order {
        model = model.with_order(order)?;
    }
    let (points, names) = read_points(&args.input)?;
    if names.len() != model.dim() {
        return Err(GpaError::InvalidDimension {
            expected: model.dim(),
            got: names.len(),
        }
        .into());
    }
    let preds = model.predict_batch(&points)?;
    let dim = model.dim();
    let mut header = names;
    header.push("prediction".into());
    header.push("out_of_range".into());
    let rows = preds.iter().enumerate().map(|(i, p)| {
        let mut row: Vec<String> = points[i * dim..(i + 1) * dim].iter().map(f64::to_string).collect();
        row.push(fmt_estimate(p.value));
        row.push(u8::from(p.out_of_range).to_string());
        row
    });
    write_csv(args.out.as_deref(), &header, rows)?;

    // Served from the cached grid: nothing crosses the network.
    let cost = PhaseCost {
        coordinator_ops: (preds.len() * model.stencil_size()) as u64,
        ..PhaseCost::new(model.meta().machines)
    };
    let ledger = CostLedger {
        predict: cost,
        ..CostLedger::default()
    };
    let mut report = String::new();
    let _ = writeln!(report, "predictions={}", preds.len());
    let _ = writeln!(report, "undefined={}", preds.iter().filter(|p| p.value.is_none()).count());
    let _ = writeln!(report, "out_of_range={}", preds.iter().filter(|p| p.out_of_range).count());
    for line in ledger.report().lines().filter(|l| l.starts_with("predict.")) {
        let _ = writeln!(report, "{line}");
    }
    emit(&report, args.ledger.as_deref(), args.out.is_none())
}

pub fn bandwidth(args: BandwidthArgs) -> Result<(), CliError> {
    let (sample, setting) = load_data(&args.data)?;
    let kernel = parse_kernel(&args.kernel)?;
    let cluster = build_cluster(&sample, args.cluster.partition, args.cluster.machines.unwrap_or(50), args.data.seed)?;
    let sel = select(&cluster, args.method, setting.as_ref(), &sample, &kernel, &args.selector, args.data.seed)?;
    let mut report = String::new();
    let method = match args.method {
        MethodArg::Oneshot => "oneshot",
        MethodArg::Pilot => "pilot",
        MethodArg::Oracle => "oracle",
    };
    let _ = writeln!(report, "method={method}");
    let _ = writeln!(report, "n={}", sample.len());
    let _ = writeln!(report, "machines={}", cluster.machines());
    let _ = writeln!(report, "bandwidth={}", sel.bandwidth);
    if !sel.local.is_empty() {
        let local: Vec<String> = sel.local.iter().map(f64::to_string).collect();
        let _ = writeln!(report, "local={}", local.join(","));
    }
    if args.method != MethodArg::Oracle && sample.dim() == 1 {
        if let Some(s) = &setting {
            let w = weight(&args.selector)?;
            let _ = writeln!(report, "h_opt={}", oracle(Some(s), 1, &kernel, w, sample.len())?);
        }
    }
    let ledger = CostLedger {
        bandwidth: sel.cost,
        ..CostLedger::default()
    };
    for line in ledger.report().lines().filter(|l| l.starts_with("bandwidth.")) {
        let _ = writeln!(report, "{line}");
    }
    emit(&report, args.ledger.as_deref(), false)
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let setting = parse_setting(&args.setting, args.sigma)?;
    let data = setting.generate(args.n, args.seed)?;
    let Some(strategy) = args.strategy else {
        let rows = (0..data.sample.len()).map(|i| {
            vec![
                data.sample.x()[i].to_string(),
                data.sample.y()[i].to_string(),
                data.truth[i].to_string(),
            ]
        });
        return write_csv(args.out.as_deref(), &["x".into(), "y".into(), "mu".into()], rows);
    };
    if let Some(out) = &args.out {
        let rows = (0..data.sample.len()).map(|i| {
            vec![
                data.sample.x()[i].to_string(),
                data.sample.y()[i].to_string(),
                data.truth[i].to_string(),
            ]
        });
        write_csv(Some(out), &["x".into(), "y".into(), "mu".into()], rows)?;
    }
    let kernel = parse_kernel(&args.kernel)?;
    let test = setting.generate(args.n_test, derive_seed(args.seed, STREAM_TEST))?;
    let cluster = build_cluster(&data.sample, args.cluster.partition, args.cluster.machines.unwrap_or(50), args.seed)?;
    let h = match args.h {
        Some(h) => h,
        None => oracle(Some(&setting), 1, &kernel, WeightFn::default(), args.n)?,
    };
    let (strategy, geometry) = match strategy {
        StrategyArg::Global => (Strategy::GlobalAssembled, None),
        StrategyArg::Oneshot => (Strategy::OneShot, None),
        StrategyArg::Gpa => {
            let (lo, hi) = setting.law.support();
            let grid = design_grid(args.n as u64, h, Support::Compact { lo, hi }, args.grid_multiplier)?;
            (Strategy::Gpa, Some((Geometry::from(grid), args.order)))
        }
    };
    let (model, train) = cluster.run_train(strategy, &kernel, h, geometry)?;
    let queries = test.sample.x();
    let (pred, predict) = cluster.run_predict(&model, queries)?;
    let score = rmse(&pred, &test.truth);

    if let Some(path) = &args.predictions {
        let rows = pred
            .iter()
            .enumerate()
            .map(|(i, p)| vec![queries[i].to_string(), test.truth[i].to_string(), fmt_estimate(*p)]);
        write_csv(Some(path), &["x".into(), "mu".into(), "prediction".into()], rows)?;
    }
    let mut report = String::new();
    let name = match strategy {
        Strategy::GlobalAssembled => "global",
        Strategy::OneShot => "oneshot",
        Strategy::Gpa => "gpa",
    };
    let _ = writeln!(report, "strategy={name}");
    let _ = writeln!(report, "n={}", args.n);
    let _ = writeln!(report, "n_test={}", args.n_test);
    let _ = writeln!(report, "machines={}", cluster.machines());
    let _ = writeln!(report, "bandwidth={h}");
    let undefined = pred.iter().filter(|p| p.is_none()).count();
    let _ = writeln!(report, "undefined={undefined}");
    let rmse_cell = match (&score, undefined) {
        (Ok(m), 0) => m.value.to_string(),
        _ => crate::data::NA.to_string(),
    };
    let _ = writeln!(report, "rmse={rmse_cell}");
    let ledger = CostLedger {
        train,
        bandwidth: PhaseCost::new(cluster.machines()),
        predict,
    };
    report.push_str(&ledger.report());
    emit(&report, args.ledger.as_deref(), false)
}

fn sweep_text(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>8} {:>8} {:>10} {:>10} {:>8}", "factor", "J", "RMSE(GPA)", "RMSE(glob)", "ratio");
    for r in rows {
        let _ = writeln!(
            out,
            "{:>8} {:>8} {:>10.6} {:>10.6} {:>8.4}",
            r.factor, r.segments, r.mean_gpa, r.mean_global, r.ratio
        );
    }
    out
}

pub fn bench(args: BenchArgs) -> Result<(), CliError> {
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    let setting = parse_setting(&args.setting, None)?;
    let kernel = parse_kernel(&args.kernel)?;
    let w = weight(&args.selector)?;
    let (text, json) = match args.table {
        TableArg::Estimator => {
            let bandwidth = match (args.h, args.bandwidth_method) {
                (Some(h), _) => BandwidthChoice::Fixed(h),
                (None, MethodArg::Oracle) => BandwidthChoice::Oracle,
                (None, MethodArg::Oneshot) => BandwidthChoice::OneShot,
                (None, MethodArg::Pilot) => BandwidthChoice::Pilot(args.selector.pilot_size),
            };
            let bench = EstimatorBench {
                n_test: args.n_test,
                machines: args.machines,
                reps: args.reps,
                seed: args.seed,
                partition: partition(args.partition),
                kernel,
                weight: w,
                candidates: candidates(&args.selector, args.n, 1),
                bandwidth,
                grid_multiplier: args.grid_multiplier,
                segments: args.segments,
                order: args.order,
                ..EstimatorBench::new(setting, args.n)
            };
            let table = bench.run()?;
            (table.to_text(), serde_json::to_string_pretty(&table).map_err(GpaError::from)?)
        }
        TableArg::Bandwidth => {
            let bench = BandwidthBench {
                sizes: args.sizes.clone(),
                pilot_sizes: args.pilot_sizes.clone(),
                machines: args.machines,
                reps: args.reps,
                seed: args.seed,
                kernel,
                weight: w,
                candidates: candidates(&args.selector, args.n, 1),
                ..BandwidthBench::new(setting)
            };
            let table = bench.run()?;
            (table.to_text(), serde_json::to_string_pretty(&table).map_err(GpaError::from)?)
        }
        TableArg::Sweep => {
            let sweep = GridSweep {
                setting,
                n: args.n,
                n_test: args.n_test,
                reps: args.reps,
                seed: args.seed,
                kernel,
                weight: w,
                factors: args.factors.clone(),
            };
            let rows = sweep.run()?;
            (sweep_text(&rows), serde_json::to_string_pretty(&rows).map_err(GpaError::from)?)
        }
    };
    print!("{text}");
    if let Some(dir) = &args.out_dir {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CliError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let json_path = dir.join("table.json");
        std::fs::write(&json_path, json + "\n").map_err(io_err(&json_path))?;
        let text_path = dir.join("table.txt");
        std::fs::write(&text_path, &text).map_err(io_err(&text_path))?;
    }
    Ok(())
}
