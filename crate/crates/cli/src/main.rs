//! Command-line harness: runs experiment files and presets, writes CSV
//! series with a manifest, and checks the acceptance criteria.
//!
//! Exit codes: 0 ok, 1 assertion failure, 2 configuration error,
//! 3 runtime instability.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hyperlayer::config::{parse_config, ExperimentFile, Method};
use hyperlayer::diagnostics::{demo_cycles, demo_pml_envelope, local_decay_exponent, DECAY_WINDOW};
use hyperlayer::evolve::run;
use hyperlayer::experiments::{
    characteristics, constraint_convergence, default_jobs, exact_convergence, has_exact_solution,
    self_convergence, sweep,
};
use hyperlayer::fd1d::Order;
use hyperlayer::output::{tag, write_run, LinePlot, OutputDir};
use hyperlayer::verification::{run_all, run_criterion, Criterion};
use hyperlayer::{presets, Error};

#[derive(Parser, Debug)]
#[command(name = "hyperlayer", version, about = "Hyperboloidal compactification and layer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment file to use instead of a preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Preset name (alternative to the positional name).
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Output directory (default: out/<command>-<name>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for independent runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve one configuration and write its series.
    Run { name: Option<String> },
    /// Convergence study: three-level factors, exact errors, or spectral
    /// constraint norms, depending on the experiment.
    Converge { name: Option<String> },
    /// Run every combination of orders, cell counts and dissipation values.
    Sweep {
        name: Option<String>,
        #[arg(long, value_delimiter = ',')]
        orders: Vec<u32>,
        #[arg(long, value_delimiter = ',')]
        cells: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        dissipation: Vec<f64>,
        #[arg(long)]
        tau_final: Option<f64>,
    },
    /// Trace characteristic curves of the experiment's map.
    Characteristics { name: Option<String> },
    /// Illustrative demos that need no time evolution.
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
    /// Check the acceptance criteria (all, one, or those using a preset).
    Verify {
        #[arg(long)]
        criterion: Option<u8>,
    },
    /// List presets, or print one preset's text.
    Presets { name: Option<String> },
}

#[derive(Subcommand, Debug)]
enum Demo {
    /// Zero crossings of the compactified plane wave.
    Cycles {
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 1000)]
        resolution: usize,
    },
    /// Envelope of a wave damped in an absorbing layer.
    Pml {
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 3.0)]
        x_max: f64,
        #[arg(long, default_value_t = 301)]
        samples: usize,
    },
}

enum Failure {
    Assertion(String),
    Config(String),
    Unstable(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Unstable(m) => Failure::Unstable(m),
            other => Failure::Config(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(m)) => {
            eprintln!("assertion failed: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Unstable(m)) => {
            eprintln!("instability: {m}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    let jobs = cli.jobs.unwrap_or_else(default_jobs).max(1);
    match &cli.command {
        Command::Run { name } => with_file(cli, name, "run", cmd_run),
        Command::Converge { name } => with_file(cli, name, "converge", |f, d| cmd_converge(f, d, jobs)),
        Command::Sweep {
            name,
            orders,
            cells,
            dissipation,
            tau_final,
        } => with_file(cli, name, "sweep", |f, d| {
            cmd_sweep(f, d, jobs, orders, cells, dissipation, *tau_final)
        }),
        Command::Characteristics { name } => with_file(cli, name, "characteristics", cmd_characteristics),
        Command::Demo { which } => cmd_demo(cli, which),
        Command::Verify { criterion } => cmd_verify(cli, *criterion, jobs),
        Command::Presets { name } => cmd_presets(name.as_deref()),
    }
}

/// Resolves the experiment, creates the output directory and runs `f`.
/// Errors are reported with the experiment name and its configuration.
fn with_file(
    cli: &Cli,
    positional: &Option<String>,
    command: &str,
    f: impl FnOnce(&ExperimentFile, &OutputDir) -> Outcome,
) -> Outcome {
    let file = load(cli, positional)?;
    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(format!("{command}-{}", file.name)));
    let dir = OutputDir::create(&dir)?;
    let result = f(&file, &dir);
    if let Err(Failure::Config(m) | Failure::Unstable(m) | Failure::Assertion(m)) = &result {
        eprintln!("experiment '{}' failed: {m}", file.name);
        eprintln!("configuration:\n{}", file.to_toml());
    }
    if result.is_ok() {
        println!("wrote {}", dir.root().display());
    }
    result
}

fn load(cli: &Cli, positional: &Option<String>) -> Result<ExperimentFile, Failure> {
    let sources = [positional.is_some(), cli.preset.is_some(), cli.config.is_some()];
    if sources.iter().filter(|x| **x).count() != 1 {
        return Err(Failure::Config(
            "give exactly one of a preset name, --preset NAME or --config PATH".into(),
        ));
    }
    if let Some(path) = &cli.config {
        return Ok(parse_config(path)?);
    }
    let name = positional.as_ref().or(cli.preset.as_ref()).expect("one source");
    Ok(presets::load(name)?)
}

fn cmd_run(file: &ExperimentFile, dir: &OutputDir) -> Outcome {
    let cfg = file.evolution_config()?;
    let report = run(&cfg)?;
    write_run(dir, &report)?;
    let mut decay_series = Vec::new();
    for o in &report.observers {
        match local_decay_exponent(o, DECAY_WINDOW) {
            Ok(q) if !q.is_empty() => {
                dir.write_csv(
                    &format!("decay_{}_{}.csv", tag(o.rho), o.field),
                    &["tau", "exponent"],
                    q.iter().map(|(t, e)| vec![*t, *e]),
                )?;
                decay_series.push((format!("{} at ρ = {}", o.field, o.rho), q));
            }
            _ => {}
        }
    }
    if !decay_series.is_empty() {
        dir.write_svg(
            "decay.svg",
            &LinePlot {
                title: "local decay exponent".into(),
                x_label: "τ".into(),
                y_label: "d ln|f| / d ln τ".into(),
                log_y: false,
                series: decay_series,
            },
        )?;
    }
    dir.write_manifest(
        &format!("run {}", file.name),
        &[
            ("status".into(), format!("{:?}", report.status)),
            ("steps".into(), report.steps.to_string()),
            ("dt".into(), report.dt.to_string()),
            ("wall_time_seconds".into(), format!("{:.3}", report.wall_time)),
        ],
        &file.to_toml(),
    )?;
    println!("{}: {:?}, {} steps of {}", file.name, report.status, report.steps, report.dt);
    if report.is_ok() {
        Ok(())
    } else {
        Err(Failure::Unstable(format!("{:?}", report.status)))
    }
}

fn orders(list: &[u32]) -> Result<Vec<Order>, Failure> {
    list.iter()
        .map(|&o| Order::try_from(o).map_err(Failure::Config))
        .collect()
}

fn cmd_converge(file: &ExperimentFile, dir: &OutputDir, jobs: usize) -> Outcome {
    let cfg = file.evolution_config()?;
    let conv = file
        .converge
        .clone()
        .ok_or_else(|| Failure::Config(format!("experiment '{}' has no [converge] table", file.name)))?;
    let scheme = file.scheme.as_ref().expect("validated with the model");
    let mut entries = vec![("jobs".to_string(), jobs.to_string())];

    if scheme.method == Method::Spectral {
        let window = conv.window.unwrap_or([0.0, cfg.scheme.tau_final]);
        let levels = constraint_convergence(&cfg, &conv.n_values, window, jobs)?;
        let mut rows = Vec::new();
        let mut series = Vec::new();
        for l in &levels {
            dir.write_csv(
                &format!("constraint_n{}.csv", l.n),
                &["tau", "constraint_l2"],
                l.series.iter().map(|(t, v)| vec![*t, *v]),
            )?;
            rows.push(vec![l.n as f64, l.window_max, l.final_value, l.completed as u8 as f64]);
            series.push((format!("N = {}", l.n), l.series.clone()));
            println!("N = {:3}: peak constraint {:.3e}, final {:.3e}", l.n, l.window_max, l.final_value);
        }
        dir.write_csv("constraint.csv", &["n", "peak_l2", "final_l2", "completed"], rows)?;
        dir.write_svg(
            "constraint.svg",
            &LinePlot {
                title: "constraint Φ - ∂ρv".into(),
                x_label: "τ".into(),
                y_label: "L2".into(),
                log_y: true,
                series,
            },
        )?;
        entries.push(("window".into(), format!("{:?}", window)));
    } else if has_exact_solution(&cfg) {
        let mut err_rows = Vec::new();
        let mut ratio_rows = Vec::new();
        for order in orders(&conv.orders)? {
            let r = exact_convergence(&cfg, order, &conv.cells, conv.time_step, jobs)?;
            for (n, e) in r.cells.iter().zip(&r.errors) {
                err_rows.push(vec![r.order as f64, *n as f64, *e]);
            }
            for (k, q) in r.ratios.iter().enumerate() {
                ratio_rows.push(vec![r.order as f64, r.cells[k] as f64, *q, q.log2()]);
                println!("order {}: {} -> {} cells, error ratio {q:.2}", r.order, r.cells[k], r.cells[k + 1]);
            }
        }
        dir.write_csv("errors.csv", &["order", "cells", "max_error"], err_rows)?;
        dir.write_csv("ratios.csv", &["order", "coarse_cells", "ratio", "observed_order"], ratio_rows)?;
    } else {
        let window = conv.window.unwrap_or([0.0, cfg.scheme.tau_final]);
        let field = conv
            .field
            .clone()
            .unwrap_or_else(|| cfg.model.family.field_names()[0].to_string());
        let mut rows = Vec::new();
        let mut series = Vec::new();
        for order in orders(&conv.orders)? {
            let s = self_convergence(&cfg, order, &conv.cells, &field, window, conv.time_step, jobs)?;
            let pts: Vec<(f64, f64)> = s.q.iter().filter_map(|(t, q)| q.map(|q| (*t, q))).collect();
            dir.write_csv(
                &format!("q_order{}.csv", s.order),
                &["tau", "q"],
                pts.iter().map(|(t, q)| vec![*t, *q]),
            )?;
            let mean = s.mean_q.unwrap_or(f64::NAN);
            rows.push(vec![s.order as f64, mean, window[0], window[1], s.dt[0], s.dt[1], s.dt[2]]);
            series.push((format!("order {}", s.order), pts));
            println!("order {}: mean Q over [{}, {}] = {mean:.3}", s.order, window[0], window[1]);
        }
        dir.write_csv(
            "convergence.csv",
            &["order", "mean_q", "window_start", "window_end", "dt_low", "dt_med", "dt_high"],
            rows,
        )?;
        dir.write_svg(
            "q.svg",
            &LinePlot {
                title: format!("convergence factor of {field}"),
                x_label: "τ".into(),
                y_label: "Q".into(),
                log_y: false,
                series,
            },
        )?;
        entries.push(("time_step".into(), format!("{:?}", conv.time_step)));
    }
    dir.write_manifest(&format!("converge {}", file.name), &entries, &file.to_toml())?;
    Ok(())
}

fn cmd_sweep(
    file: &ExperimentFile,
    dir: &OutputDir,
    jobs: usize,
    order_list: &[u32],
    cells: &[usize],
    dissipation: &[f64],
    tau_final: Option<f64>,
) -> Outcome {
    let mut cfg = file.evolution_config()?;
    let scheme = file.scheme.as_ref().expect("validated with the model");
    if scheme.method != Method::Fd {
        return Err(Failure::Config("sweep needs a finite-difference scheme".into()));
    }
    if let Some(t) = tau_final {
        if t.is_nan() || t <= 0.0 {
            return Err(Failure::Config(format!("--tau-final must be positive, got {t}")));
        }
        cfg.scheme.tau_final = t;
    }
    let order_list = if order_list.is_empty() { vec![scheme.order.unwrap_or(4)] } else { order_list.to_vec() };
    let cells = if cells.is_empty() { vec![scheme.cells.unwrap_or(100)] } else { cells.to_vec() };
    let dissipation = if dissipation.is_empty() {
        vec![scheme.dissipation.unwrap_or(0.0)]
    } else {
        dissipation.to_vec()
    };
    if let Some(e) = dissipation.iter().find(|e| e.is_nan() || **e < 0.0) {
        return Err(Failure::Config(format!("dissipation must be >= 0, got {e}")));
    }
    let points = sweep(&cfg, &orders(&order_list)?, &cells, &dissipation, jobs)?;
    let names = cfg.model.family.field_names();
    let mut headers = vec!["order", "cells", "dissipation", "dt", "completed"];
    let cols: Vec<String> = names.iter().map(|n| format!("final_l2_{n}")).collect();
    headers.extend(cols.iter().map(String::as_str));
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for p in &points {
        let mut row = vec![p.order as f64, p.cells as f64, p.dissipation, p.dt, p.completed as u8 as f64];
        row.extend(p.final_norms.iter().map(|(_, v)| *v));
        rows.push(row);
        let label = format!("o{}_n{}_e{}", p.order, p.cells, p.dissipation);
        dir.write_csv(
            &format!("norms_{label}.csv"),
            &["tau", "l2"],
            p.norm_series.iter().map(|(t, v)| vec![*t, *v]),
        )?;
        series.push((label, p.norm_series.clone()));
        println!(
            "order {} cells {} ε {}: final L2({}) = {:.3e}{}",
            p.order,
            p.cells,
            p.dissipation,
            names[0],
            p.final_norms[0].1,
            if p.completed { "" } else { " (stopped early)" }
        );
    }
    dir.write_csv("sweep.csv", &headers, rows)?;
    dir.write_svg(
        "norms.svg",
        &LinePlot {
            title: format!("L2 norm of {}", names[0]),
            x_label: "τ".into(),
            y_label: "L2".into(),
            log_y: true,
            series,
        },
    )?;
    dir.write_manifest(
        &format!("sweep {}", file.name),
        &[
            ("orders".into(), format!("{order_list:?}")),
            ("cells".into(), format!("{cells:?}")),
            ("dissipation".into(), format!("{dissipation:?}")),
            ("tau_final".into(), cfg.scheme.tau_final.to_string()),
            ("jobs".into(), jobs.to_string()),
        ],
        &file.to_toml(),
    )?;
    if points.iter().all(|p| p.completed) {
        Ok(())
    } else {
        Err(Failure::Unstable("some sweep runs stopped early".into()))
    }
}

fn cmd_characteristics(file: &ExperimentFile, dir: &OutputDir) -> Outcome {
    let lines = characteristics(file)?;
    let mut series = Vec::new();
    for l in &lines {
        let fam = format!("{:?}", l.family).to_lowercase();
        dir.write_csv(
            &format!("characteristic_{fam}_{}.csv", tag(l.seed)),
            &["tau", "rho"],
            l.points.iter().map(|(t, r)| vec![*t, *r]),
        )?;
        series.push((
            format!("{fam} {}", l.seed),
            l.points.iter().map(|(t, r)| (*r, *t)).collect(),
        ));
    }
    dir.write_svg(
        "characteristics.svg",
        &LinePlot {
            title: format!("characteristics of {}", file.name),
            x_label: "ρ".into(),
            y_label: "τ".into(),
            log_y: false,
            series,
        },
    )?;
    dir.write_manifest(&format!("characteristics {}", file.name), &[], &file.to_toml())?;
    println!("{} curves", lines.len());
    Ok(())
}

fn cmd_demo(cli: &Cli, which: &Demo) -> Outcome {
    let (name, entries): (String, Vec<(String, String)>) = match which {
        Demo::Cycles { k, c, resolution } => (
            "cycles".into(),
            vec![
                ("k".into(), k.to_string()),
                ("c".into(), c.to_string()),
                ("resolution".into(), resolution.to_string()),
            ],
        ),
        Demo::Pml { sigma, r, x_max, samples } => (
            "pml".into(),
            vec![
                ("sigma".into(), sigma.to_string()),
                ("r".into(), r.to_string()),
                ("x_max".into(), x_max.to_string()),
                ("samples".into(), samples.to_string()),
            ],
        ),
    };
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out").join(format!("demo-{name}")));
    let dir = OutputDir::create(dir)?;
    match *which {
        Demo::Cycles { k, c, resolution } => {
            let d = demo_cycles(k, c, resolution)?;
            dir.write_csv(
                "cycles.csv",
                &["rho", "re_u"],
                d.rho.iter().zip(&d.value).map(|(r, v)| vec![*r, *v]),
            )?;
            println!("k = {k}, C = {c}: {} zero crossings", d.zero_crossings);
        }
        Demo::Pml { sigma, r, x_max, samples } => {
            if samples < 2 {
                return Err(Failure::Config("--samples must be at least 2".into()));
            }
            let x: Vec<f64> = (0..samples).map(|i| x_max * i as f64 / (samples - 1) as f64).collect();
            let env = demo_pml_envelope(sigma, r, &x)?;
            dir.write_csv(
                "pml.csv",
                &["x", "envelope"],
                x.iter().zip(&env).map(|(a, b)| vec![*a, *b]),
            )?;
        }
    }
    dir.write_manifest(&format!("demo {name}"), &entries, "")?;
    println!("wrote {}", dir.root().display());
    Ok(())
}

/// Criteria that exercise each preset.
fn criteria_for_preset(name: &str) -> Result<Vec<u8>, Failure> {
    presets::source(name)?;
    Ok(match name {
        "maxwell-hyperboloid" | "maxwell-layer" => vec![1, 4],
        "advection" => vec![3],
        "cubic-decay" => vec![5],
        "linear-l2" => vec![6],
        "layer-1d" => vec![8],
        _ => vec![],
    })
}

fn cmd_verify(cli: &Cli, criterion: Option<u8>, jobs: usize) -> Outcome {
    if cli.config.is_some() {
        return Err(Failure::Config("verify runs the shipped presets; --config is not used".into()));
    }
    let ids: Vec<u8> = match (criterion, &cli.preset) {
        (Some(_), Some(_)) => {
            return Err(Failure::Config("give either --criterion or --preset, not both".into()))
        }
        (Some(id), None) => vec![id],
        (None, Some(p)) => criteria_for_preset(p)?,
        (None, None) => (1..=8).collect(),
    };
    let results: Vec<Criterion> = if ids.len() == 8 {
        run_all(jobs)
    } else {
        ids.iter()
            .map(|&id| run_criterion(id, jobs))
            .collect::<Result<_, _>>()?
    };
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out").join("verify"));
    let dir = OutputDir::create(dir)?;
    let mut summary = String::new();
    let mut rows = Vec::new();
    for c in &results {
        println!("{}", c.line());
        summary.push_str(&c.line());
        summary.push('\n');
        for d in &c.details {
            println!("    {d}");
            summary.push_str(&format!("    {d}\n"));
        }
        rows.push(vec![c.id.to_string(), c.title.to_string(), c.passed.to_string()]);
        let vals: Vec<Vec<String>> = c.values.iter().map(|(k, v)| vec![k.clone(), v.to_string()]).collect();
        dir.write_table(&format!("criterion_{}.csv", c.id), &["quantity", "value"], &vals)?;
    }
    dir.write_table("criteria.csv", &["id", "title", "passed"], &rows)?;
    std::fs::write(dir.path("summary.txt"), summary).map_err(Error::from)?;
    let config: String = presets::PRESETS
        .iter()
        .map(|(n, text)| format!("# preset {n}\n{text}\n"))
        .collect();
    dir.write_manifest(
        "verify",
        &[
            ("criteria".into(), format!("{ids:?}")),
            ("jobs".into(), jobs.to_string()),
        ],
        &config,
    )?;
    let failed: Vec<u8> = results.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertion(format!("criteria {failed:?} failed")))
    }
}

fn cmd_presets(name: Option<&str>) -> Outcome {
    match name {
        Some(n) => print!("{}", presets::source(n)?),
        None => {
            for n in presets::names() {
                let f = presets::load(n)?;
                println!("{n:22} {}", f.description);
            }
        }
    }
    Ok(())
}
