use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use fluence_core::grid::fmt_sig9;
use fluence_core::inverse::{synthesize_measurements, write_scan_csv};
use fluence_core::mc::estimate_mc;
use fluence_core::mh::write_trace_csv;
use fluence_core::{
    estimate_mc_some, hybrid_descent, run_chain, sensitivity_scan, FieldTable, Measurements, Purpose, ScanGrid,
    SomeSizes, StreamFamily, Vec3, VoxelIndex, PROBES,
};

use crate::config::Config;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Mc,
    McSome,
    Mh,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::McSome => "mc-some",
            Method::Mh => "mh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Run metadata written as `# key = value` lines above the resolved config,
/// so a summary file is itself a valid config.
struct Summary {
    meta: String,
}

impl Summary {
    fn new(command: &str) -> Self {
        let mut s = Summary { meta: String::new() };
        s.add("command", command);
        s
    }

    fn add(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.meta, "# {key} = {value}");
    }

    fn write(&self, out: &Path, cfg: &Config) -> Result<(), CliError> {
        let path = summary_path(out);
        let mut w = create(&path)?;
        write!(w, "{}{}", self.meta, cfg.render()).and_then(|_| w.flush()).map_err(|e| io_err(&path, e))
    }
}

/// `<out>.summary`
pub fn summary_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".summary");
    PathBuf::from(s)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| io_err(path, e))
}

fn write_core<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> fluence_core::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    finish(w, path)
}

struct Run {
    table: FieldTable<f64>,
    total_samples: u64,
    acceptance_rate: Option<f64>,
    trace: Option<Vec<fluence_core::mh::TraceRow<f64>>>,
}

fn run_method(cfg: &Config, method: Method, family: &StreamFamily, trace_stride: u64) -> Result<Run, CliError> {
    let scn = cfg.scenario()?;
    let (field, acceptance_rate, trace) = match method {
        Method::Mc => (estimate_mc(&scn, cfg.u64("M")?, family)?, None, None),
        Method::McSome => (estimate_mc_some(&scn, cfg.some_sizes()?, family)?, None, None),
        Method::Mh => {
            let run = run_chain(&scn, cfg.mh_params()?, family, trace_stride)?;
            let rate = run.acceptance_rate();
            let trace = (trace_stride > 0).then_some(run.trace);
            (run.field, Some(rate), trace)
        }
    };
    Ok(Run { table: field.to_table(), total_samples: field.total_samples(), acceptance_rate, trace })
}

pub fn simulate(config: &Path, method: Method, seed: u64, out: &Path, trace: Option<&Path>) -> Result<(), CliError> {
    let cfg = Config::load(config)?;
    if trace.is_some() && method != Method::Mh {
        return Err(CliError::Config("--trace needs --method mh".into()));
    }
    let stride = if trace.is_some() { cfg.u64("trace_stride")?.max(1) } else { 0 };
    let start = Instant::now();
    let run = run_method(&cfg, method, &StreamFamily::new(seed), stride)?;
    let wall = start.elapsed().as_secs_f64();

    write_core(out, |w| run.table.write_csv(w))?;
    if let (Some(path), Some(rows)) = (trace, &run.trace) {
        write_core(path, |w| write_trace_csv(w, rows))?;
    }
    let mut s = Summary::new("simulate");
    s.add("method", method.name());
    s.add("seed", seed);
    s.add("wall_time_s", format!("{wall:.3}"));
    s.add("total_samples", run.total_samples);
    if let Some(rate) = run.acceptance_rate {
        s.add("acceptance_rate", rate);
    }
    s.write(out, &cfg)
}

fn parse_point(text: &str) -> Result<Vec3<f64>, CliError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("point `{text}`: {e}")))?;
    match parts[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err(CliError::Config(format!("point `{text}` must be `x,y,z`"))),
    }
}

pub fn extract_line(field: &Path, axis: Axis, through: &str, out: &Path) -> Result<(), CliError> {
    let table = FieldTable::<f64>::read_csv(open(field)?)?;
    let p = parse_point(through)?;
    let grid = table.grid;
    let anchor = grid
        .locate(p)
        .ok_or_else(|| CliError::Config(format!("line through ({}, {}, {}) misses the grid", p.x, p.y, p.z)))?;
    let m = grid.radius() as i32;
    let mut w = create(out)?;
    let mut body = String::from("coord,fluence,stderr\n");
    for t in -m..=m {
        let v = match axis {
            Axis::X => VoxelIndex::new(t, anchor.j, anchor.k),
            Axis::Y => VoxelIndex::new(anchor.i, t, anchor.k),
            Axis::Z => VoxelIndex::new(anchor.i, anchor.j, t),
        };
        let c = grid.center(v);
        let coord = match axis {
            Axis::X => c.x,
            Axis::Y => c.y,
            Axis::Z => c.z,
        };
        let l = grid.linear(v);
        let _ = writeln!(body, "{},{},{}", fmt_sig9(coord), fmt_sig9(table.fluence[l]), fmt_sig9(table.stderr[l]));
    }
    w.write_all(body.as_bytes()).map_err(|e| io_err(out, e))?;
    finish(w, out)
}

pub fn replicate(config: &Path, method: Method, replicates: u32, seed: u64, out: &Path) -> Result<(), CliError> {
    if replicates < 2 {
        return Err(CliError::Config("need at least 2 replicates".into()));
    }
    let cfg = Config::load(config)?;
    let family = StreamFamily::new(seed);
    let start = Instant::now();
    let mut runs = Vec::with_capacity(replicates as usize);
    let mut total = 0u64;
    for r in 0..replicates {
        let run = run_method(&cfg, method, &family.child(Purpose::Replicate, u64::from(r)), 0)?;
        total += run.total_samples;
        runs.push(run.table.fluence);
    }
    let wall = start.elapsed().as_secs_f64();
    let grid = cfg.scenario()?.grid;
    let rf = f64::from(replicates);
    let stats: Vec<(f64, f64)> = (0..grid.voxel_count())
        .map(|l| {
            let mean = runs.iter().map(|x| x[l]).sum::<f64>() / rf;
            let mse = runs.iter().map(|x| (x[l] - mean).powi(2)).sum::<f64>() / rf;
            (mean, mse)
        })
        .collect();

    let mut w = create(out)?;
    let mut body = String::from("ix,iy,iz,x,y,z,mean,mse\n");
    for (l, v) in grid.indices().enumerate() {
        let c = grid.center(v);
        let (mean, mse) = stats[l];
        let _ = writeln!(
            body,
            "{},{},{},{},{},{},{},{}",
            v.i,
            v.j,
            v.k,
            fmt_sig9(c.x),
            fmt_sig9(c.y),
            fmt_sig9(c.z),
            fmt_sig9(mean),
            fmt_sig9(mse)
        );
    }
    w.write_all(body.as_bytes()).map_err(|e| io_err(out, e))?;
    finish(w, out)?;

    let mut s = Summary::new("replicate");
    s.add("method", method.name());
    s.add("seed", seed);
    s.add("replicates", replicates);
    s.add("wall_time_s", format!("{wall:.3}"));
    s.add("total_samples", total);
    for (name, [x, y, z]) in PROBES {
        if let Some(l) = grid.locate_linear(Vec3::new(x, y, z)) {
            s.add(&format!("{name}_mean"), fmt_sig9(stats[l].0));
            s.add(&format!("{name}_mse"), fmt_sig9(stats[l].1));
        }
    }
    s.write(out, &cfg)
}

/// Default measurement positions: probes v2, v4 and v6.
fn measurement_positions() -> Vec<Vec3<f64>> {
    [1, 3, 5].iter().map(|&i| {
        let [x, y, z] = PROBES[i].1;
        Vec3::new(x, y, z)
    }).collect()
}

pub fn measure(config: &Path, seed: u64, out: &Path) -> Result<(), CliError> {
    let cfg = Config::load(config)?;
    let scn = cfg.scenario()?;
    let base = cfg.some_sizes()?;
    let sizes = SomeSizes::new(cfg.u64("measure_M")?, base.points, base.rotations)?;
    let start = Instant::now();
    let meas = synthesize_measurements(&scn, &measurement_positions(), sizes, &StreamFamily::new(seed))?;
    let wall = start.elapsed().as_secs_f64();
    write_core(out, |w| meas.write_csv(w))?;
    let mut s = Summary::new("measure");
    s.add("seed", seed);
    s.add("wall_time_s", format!("{wall:.3}"));
    s.add("total_samples", sizes.total_points());
    s.write(out, &cfg)
}

pub fn fit(config: &Path, measurements: &Path, seed: u64, out: &Path) -> Result<(), CliError> {
    let cfg = Config::load(config)?;
    let meas = Measurements::read_csv(open(measurements)?)?;
    let opts = cfg.descent_opts()?;
    let start = Instant::now();
    let trace = hybrid_descent(&cfg.scenario()?, &meas, cfg.init()?, &opts, &StreamFamily::new(seed))?;
    let wall = start.elapsed().as_secs_f64();
    write_core(out, |w| trace.write_csv(w))?;
    let mut s = Summary::new("fit");
    s.add("seed", seed);
    s.add("wall_time_s", format!("{wall:.3}"));
    s.add("iterations", trace.rows.len());
    s.add("total_samples", trace.rows.len() as u64 * opts.sizes.total_points());
    s.add("converged", trace.converged(opts.eps_score));
    if let Some(last) = trace.last() {
        s.add("final_mu_s", last.mu_s);
        s.add("final_mu_a", last.mu_a);
        s.add("final_J", last.j);
    }
    s.write(out, &cfg)
}

pub fn scan(config: &Path, grid: &str, measurements: &Path, seed: u64, out: &Path) -> Result<(), CliError> {
    let cfg = Config::load(config)?;
    let grid = ScanGrid::parse(grid)?;
    let meas = Measurements::read_csv(open(measurements)?)?;
    let sizes = cfg.some_sizes()?;
    let start = Instant::now();
    let rows = sensitivity_scan(&cfg.scenario()?, &grid, &meas, sizes, &StreamFamily::new(seed))?;
    let wall = start.elapsed().as_secs_f64();
    write_core(out, |w| write_scan_csv(w, &rows))?;
    let mut s = Summary::new("scan");
    s.add("seed", seed);
    s.add("wall_time_s", format!("{wall:.3}"));
    s.add("grid_points", rows.len());
    s.add("total_samples", rows.len() as u64 * sizes.total_points());
    s.write(out, &cfg)
}
