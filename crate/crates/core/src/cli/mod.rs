//! Batch front end: `worldsheet run <scenario> --out <dir> [--set key=value]...`
//! and `worldsheet check <scenario>`.
//!
//! Exit codes: 0 success, 2 numerical or acceptance failure, 1 usage, input
//! or IO error. Reports carry no timestamps, so a fixed scenario reproduces
//! them byte for byte.

mod report;
mod scenario;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use report::{emit_convergence_table, num, ConvergenceTable, StudyRow};
pub use scenario::{
    apply_overrides, CausalSpec, FieldsSpec, GeometryOpts, Kind, MinimizeOpts, PhysConstants, Query, Scenario,
    SheetSpec, SCHEMA_VERSION,
};

use crate::causal::{self, build_graph, CauchyWitness, PathSampling};
use crate::energy::{assemble_jk, full_action, Constants, EnergyBreakdown, Multipliers};
use crate::error::{Error, Result};
use crate::geometry::{
    christoffel, gauss_residual_on, metric, normal_frame, riemann, second_fundamental_form, weingarten_residual_on,
    GeometryCache,
};
use crate::grid::ChartMap;
use crate::optimizer::{penalty_continuation, KRecord, FIT_FLOOR};

/// Thread count for the data-parallel kernels.
pub const THREADS_ENV: &str = "WORLDSHEET_THREADS";

#[derive(Debug, Parser)]
#[command(name = "worldsheet", version, about = "World-sheet energies, penalty runs and causal queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute a scenario and write its reports.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override a scenario value, e.g. `optimizer.max_iters=200`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Parse and validate a scenario without running it.
    Check {
        scenario: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

/// Files written by a run plus its verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub passed: bool,
    pub summary: String,
}

/// 1 for problems with the inputs themselves, 2 for failures of the
/// computation they describe.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Config(_) | Error::Events(_) | Error::InvalidGrid(_) | Error::NotNeighbor { .. } => 1,
        _ => 2,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 1;
    }
    match cli.command {
        Command::Check { scenario, set } => match Scenario::load(&scenario, &set) {
            Ok(sc) => {
                println!("{}: valid {} scenario", scenario.display(), sc.kind.name());
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
        Command::Run { scenario, out, set } => match run(&scenario, &out, &set) {
            Ok(o) => {
                print!("{}", o.summary);
                if o.passed {
                    0
                } else {
                    2
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV}={v:?} is not a positive integer")))?;
    // A pool set up earlier in the process wins.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Loads the scenario, applies `overrides` and executes it into `out`.
pub fn run(scenario: &Path, out: &Path, overrides: &[String]) -> Result<RunOutcome> {
    let sc = Scenario::load(scenario, overrides)?;
    run_scenario(&sc, out)
}

pub fn run_scenario(sc: &Scenario, out: &Path) -> Result<RunOutcome> {
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let mut w = Writer {
        dir: out.to_path_buf(),
        files: Vec::new(),
    };
    let mut summary = format!("kind = {}\n", sc.kind.name());
    let passed = match sc.kind {
        Kind::GeometryCheck => geometry_check(sc, &mut w, &mut summary)?,
        Kind::EnergyEval => energy_eval(sc, &mut w, &mut summary)?,
        Kind::Minimize => minimize(sc, &mut w, &mut summary)?,
        Kind::Causal => causal_run(sc, &mut w, &mut summary)?,
    };
    writeln!(summary, "status = {}", if passed { "pass" } else { "fail" }).unwrap();
    w.write("summary.txt", &summary)?;
    Ok(RunOutcome {
        files: w.files,
        passed,
        summary,
    })
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.dir.join(name);
        std::fs::write(&p, body).map_err(|e| io(&p, e))?;
        self.files.push(p);
        Ok(())
    }
}

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn sheet(sc: &Scenario) -> &SheetSpec {
    sc.sheet.as_ref().expect("sheet scenarios carry a sheet")
}

fn geometry_check(sc: &Scenario, w: &mut Writer, summary: &mut String) -> Result<bool> {
    let spec = sheet(sc);
    let mut grid = spec.grid()?;
    let mut csv = String::from("level,nodes,h,gauss_residual,weingarten_residual,max_tangency,min_abs_det_g\n");
    let mut rows = Vec::new();
    for level in 0..sc.geometry.levels {
        if level > 0 {
            grid = grid.refined();
        }
        let f = spec.build(&grid)?;
        let m = metric(&f, &grid)?;
        let sff = second_fundamental_form(&m, &f.n)?;
        let riem = riemann(&christoffel(&m), &grid)?;
        let frame = normal_frame(&m, &f)?;
        let nodes = grid.nodes_with_margin(sc.geometry.margin);
        let gauss = gauss_residual_on(&riem, &sff, &nodes);
        let wr = weingarten_residual_on(&f, &grid, &m, &sff, &frame, &nodes)?;
        let det = m.det_g.iter().fold(f64::INFINITY, |a, d| a.min(d.abs()));
        let h = grid.spacings().iter().copied().fold(0.0, f64::max);
        writeln!(
            csv,
            "{level},{},{},{},{},{},{}",
            grid.len(),
            num(h),
            num(gauss),
            num(wr.max_residual),
            num(wr.max_tangency),
            num(det)
        )
        .unwrap();
        if level == 0 {
            writeln!(summary, "gauss_residual = {}", num(gauss)).unwrap();
            writeln!(summary, "weingarten_residual = {}", num(wr.max_residual)).unwrap();
        }
        rows.push(StudyRow {
            parameter: h,
            residuals: vec![gauss, wr.max_residual],
        });
    }
    w.write("geometry.csv", &csv)?;
    let mut passed = true;
    if rows.len() >= 2 {
        let table = emit_convergence_table(&["gauss_residual", "weingarten_residual"], &rows)?;
        w.write("convergence.csv", &table.to_csv())?;
        let last = table.observed.last().expect("at least two rows");
        for (name, o) in table.names.iter().zip(last) {
            writeln!(summary, "order_{name} = {}", o.map(num).unwrap_or_else(|| "n/a".into())).unwrap();
        }
        if let Some((lo, hi)) = sc.geometry.order_band {
            // Residuals already at round-off carry no order information.
            let bad = table
                .observed
                .iter()
                .flatten()
                .flatten()
                .any(|o| !(lo..=hi).contains(o));
            passed = !bad;
        }
    }
    Ok(passed)
}

fn energy_eval(sc: &Scenario, w: &mut Writer, summary: &mut String) -> Result<bool> {
    let spec = sheet(sc);
    let grid = spec.grid()?;
    let f = spec.build(&grid)?;
    let geom = GeometryCache::build(&f, &grid)?;
    let b = assemble_jk(&f, &grid, &geom, sc.energy_k)?;
    w.write("energy.csv", &format!("{}\n{}\n", EnergyBreakdown::CSV_HEADER, b.csv_row()))?;
    writeln!(summary, "total_J = {}", num(b.total_j)).unwrap();
    writeln!(summary, "total_JK = {}", num(b.total_jk)).unwrap();
    if let Some(mass) = sc.constants.mass {
        let chart = ChartMap::identity(&grid, sc.constants.c)?;
        let a = full_action(
            &f,
            &grid,
            &geom,
            &chart,
            &Multipliers::zero(&chart),
            Constants { mass, c: sc.constants.c },
        )?;
        writeln!(summary, "full_action = {}", num(a)).unwrap();
    }
    Ok(true)
}

fn minimize(sc: &Scenario, w: &mut Writer, summary: &mut String) -> Result<bool> {
    let spec = sheet(sc);
    let grid = spec.grid()?;
    let f = spec.build(&grid)?;
    let rep = penalty_continuation(&f, &grid, &sc.minimize.config)?;
    let mut csv = format!("{}\n", KRecord::CSV_HEADER);
    for r in &rep.records {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    w.write("records.csv", &csv)?;
    if rep.records.len() >= 2 {
        let rows: Vec<StudyRow> = rep
            .records
            .iter()
            .map(|r| StudyRow {
                parameter: r.k,
                residuals: r.residuals.as_array().to_vec(),
            })
            .collect();
        let table = emit_convergence_table(&["residual_norm", "residual_orth", "residual_unit"], &rows)?;
        w.write("convergence.csv", &table.to_csv())?;
    }
    let fmt = |s: Option<f64>| s.map(num).unwrap_or_else(|| format!("n/a (below {FIT_FLOOR:e})"));
    writeln!(
        summary,
        "slopes norm={} orth={} unit={}",
        fmt(rep.slopes.norm),
        fmt(rep.slopes.orth),
        fmt(rep.slopes.unit)
    )
    .unwrap();
    if let Some(n) = &rep.notice {
        writeln!(summary, "{n}").unwrap();
    }
    let stalled = rep.any_stall();
    writeln!(summary, "stalled = {stalled}").unwrap();
    let in_band = match sc.minimize.slope_band {
        Some((lo, hi)) => {
            let ok = rep.slopes_within(lo, hi);
            writeln!(summary, "slope_band = [{}, {}] {}", num(lo), num(hi), if ok { "ok" } else { "violated" }).unwrap();
            ok
        }
        None => true,
    };
    Ok(!stalled && in_band)
}

fn causal_run(sc: &Scenario, w: &mut Writer, summary: &mut String) -> Result<bool> {
    let spec = sc.causal.as_ref().expect("causal scenarios carry a causal section");
    let g = build_graph(&spec.events, spec.radius)?;
    let s = &spec.set;
    let mut lines = String::new();
    let mut counts = format!("summary events={} edges={}", g.len(), g.edge_count());
    let mut passed = true;
    for q in &spec.queries {
        let name = q.name();
        let list = match q {
            Query::ChronologicalFuture => Some(causal::chronological_future(s, &g)),
            Query::CausalFuture => Some(causal::causal_future(s, &g)),
            Query::ChronologicalPast => Some(causal::chronological_past(s, &g)),
            Query::CausalPast => Some(causal::causal_past(s, &g)),
            Query::FutureBoundary => Some(causal::future_boundary(s, &g)),
            Query::FutureDependence => Some(causal::future_dependence(s, &g)),
            Query::PastDependence => Some(causal::past_dependence(s, &g)),
            _ => None,
        };
        if let Some(list) = list {
            let items: Vec<String> = list.iter().map(usize::to_string).collect();
            writeln!(lines, "{name}: {}", items.join(" ")).unwrap();
            write!(counts, " {name}={}", list.len()).unwrap();
            continue;
        }
        match q {
            Query::Achronal => {
                let a = causal::is_achronal(s, &g);
                writeln!(lines, "{name}: {a}").unwrap();
                write!(counts, " {name}={a}").unwrap();
            }
            Query::Cauchy => {
                let v = causal::is_cauchy_surface(s, &g);
                let witness = match v.witness {
                    None => String::new(),
                    Some(CauchyWitness::Chronology { from, to }) => format!(" chronology {from} {to}"),
                    Some(CauchyWitness::Uncovered(p)) => format!(" uncovered {p}"),
                };
                writeln!(lines, "{name}: {}{witness}", v.is_cauchy).unwrap();
                write!(counts, " {name}={}", v.is_cauchy).unwrap();
            }
            Query::Intercept => {
                let mode = if spec.exhaustive_limit > 0 {
                    PathSampling::Exhaustive {
                        limit: spec.exhaustive_limit,
                    }
                } else {
                    PathSampling::Sampled {
                        count: spec.samples,
                        seed: spec.seed,
                    }
                };
                let r = causal::intercept_check(s, &g, mode)?;
                writeln!(
                    lines,
                    "{name}: paths={} exhaustive={} violations={}",
                    r.paths_checked, r.exhaustive, r.violation_count
                )
                .unwrap();
                for v in &r.violations {
                    let items: Vec<String> = v.iter().map(usize::to_string).collect();
                    writeln!(lines, "{name}_violation: {}", items.join(" ")).unwrap();
                }
                write!(counts, " {name}_violations={}", r.violation_count).unwrap();
                passed &= r.ok();
            }
            Query::NullCheck => {
                let r = causal::null_boundary_check(&spec.path, &g)?;
                let null = r.is_null(spec.null_tol);
                writeln!(
                    lines,
                    "{name}: max_abs_interval={} min_interval={} worst_step={} null={null}",
                    num(r.max_abs_interval),
                    num(r.min_interval),
                    r.worst_step
                )
                .unwrap();
                write!(counts, " {name}={null}").unwrap();
            }
            _ => unreachable!("list queries handled above"),
        }
    }
    lines.push_str(&counts);
    lines.push('\n');
    w.write("queries.txt", &lines)?;
    writeln!(summary, "{counts}").unwrap();
    Ok(passed)
}
