use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tvra::dynamics::{gain_monitor, settling_bounds, BoundsReport, GainReport};
use tvra::scenario::{builtin_scenario, load_scenario, Algorithm, Scenario, BUILTIN_NAMES};
use tvra::sim::{
    absorption_tolerance, dead_zone_mask, detect_settling, feasibility_absorption, integrate,
    max_tracking_after, write_events_csv, write_trace_csv, SettlingReport, SimOptions, SimOutput,
    Tolerances, DEAD_ZONE_SAMPLES,
};

use crate::plot::{render_all, PlotError};
use crate::{Metric, ScenarioArgs, SimulateArgs, SweepArgs, VerifyArgs};

pub const SUMMARY_SCHEMA: u32 = 1;
const DEFAULT_OUT: &str = "tvra-out";

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] tvra::Error),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Plot(#[from] PlotError),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Model(e) if e.is_runtime_failure() => 3,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn load(args: &ScenarioArgs) -> Result<Scenario> {
    let mut scn = if BUILTIN_NAMES.contains(&args.scenario.as_str()) {
        builtin_scenario(&args.scenario)?
    } else {
        load_scenario(&args.scenario).map_err(|e| match e {
            tvra::Error::Io(source) => Failure::File {
                path: PathBuf::from(&args.scenario),
                source,
            },
            e => e.into(),
        })?
    };
    if let Some(a) = args.algorithm {
        scn.algorithm = a.into();
    }
    if let Some(dt) = args.dt {
        scn.dt = dt;
    }
    if let Some(t) = args.t_end {
        scn.t_end = t;
    }
    scn.validate()?;
    Ok(scn)
}

fn out_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| std::env::var_os("TVRA_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&dir).map_err(|source| Failure::File {
        path: dir.clone(),
        source,
    })?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<String> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|source| Failure::File {
        path: path.clone(),
        source,
    })?;
    Ok(path.display().to_string())
}

fn run(scn: &Scenario, decimate: usize, smooth_sign: Option<f64>) -> Result<SimOutput> {
    if decimate == 0 {
        return Err(Failure::Config("--decimate must be at least 1".into()));
    }
    Ok(integrate(
        scn,
        &SimOptions {
            decimate,
            smooth_sign,
            verify: true,
            ..Default::default()
        },
    )?)
}

/// Tracking is judged from the observed settling time, or from the
/// theoretical bound when the run never settled.
fn tracking_start(settling: &SettlingReport, bounds: &BoundsReport) -> f64 {
    settling.t_sol_obs.unwrap_or(bounds.t_sol_max)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    schema: u32,
    scenario: &'a str,
    source: &'a str,
    algorithm: Algorithm,
    agents: usize,
    dt: f64,
    t_end: f64,
    steps: usize,
    decimate: usize,
    smooth_sign: Option<f64>,
    bounds: BoundsReport,
    tolerances: Tolerances,
    settling: SettlingReport,
    switch_count: usize,
    gain_report: GainReport,
    tracking_from: f64,
    max_tracking_err_after_settle: Option<f64>,
    files: Vec<String>,
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let scn = load(&args.scenario)?;
    let bounds = settling_bounds(&scn)?;
    let out = run(&scn, args.decimate, args.smooth_sign)?;
    let dir = out_dir(args.out.clone())?;

    let mut trace_csv = Vec::new();
    write_trace_csv(&out.trace, &mut trace_csv).map_err(tvra::Error::from)?;
    let mut events_csv = Vec::new();
    write_events_csv(&out.events, &mut events_csv).map_err(tvra::Error::from)?;
    let mut files = vec![
        write(&dir, "trace.csv", &trace_csv)?,
        write(&dir, "events.csv", &events_csv)?,
    ];
    let text = String::from_utf8(trace_csv).expect("CSV is ASCII");
    for (name, svg) in render_all(&text)? {
        files.push(write(&dir, name, svg.as_bytes())?);
    }

    let tolerances = Tolerances::default();
    let settling = detect_settling(&out.trace, &tolerances);
    let mask = dead_zone_mask(&out.trace, &out.events, DEAD_ZONE_SAMPLES);
    let tracking_from = tracking_start(&settling, &bounds);
    let summary_path = dir.join("summary.json").display().to_string();
    files.push(summary_path);
    let summary = RunSummary {
        schema: SUMMARY_SCHEMA,
        scenario: &scn.name,
        source: &args.scenario.scenario,
        algorithm: scn.algorithm,
        agents: scn.n(),
        dt: scn.dt,
        t_end: scn.t_end,
        steps: out.steps,
        decimate: args.decimate,
        smooth_sign: args.smooth_sign,
        bounds,
        tolerances,
        settling,
        switch_count: out.events.len(),
        gain_report: gain_monitor(&out.trace, &scn)?,
        tracking_from,
        max_tracking_err_after_settle: max_tracking_after(&out.trace, &mask, tracking_from),
        files,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serialises");
    write(&dir, "summary.json", format!("{json}\n").as_bytes())?;
    println!(
        "{}: {} steps, {} switches, T_sol observed {}, outputs in {}",
        scn.name,
        out.steps,
        out.events.len(),
        settling
            .t_sol_obs
            .map_or("never".into(), |t| format!("{t:.4} s")),
        dir.display()
    );
    Ok(())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn show(t: Option<f64>) -> String {
    t.map_or("not settled".into(), |t| format!("{t:.4} s"))
}

/// Runs the checks and prints one line per check; `Ok(true)` iff all pass.
pub fn verify(args: &VerifyArgs) -> Result<bool> {
    let scn = load(&args.scenario)?;
    let bounds = settling_bounds(&scn)?;
    let out = run(&scn, args.decimate, None)?;
    let tol = Tolerances {
        consensus_tol: args.tol_consensus,
        kkt_tol: args.tol_kkt,
        window: args.window,
    };
    let rep = detect_settling(&out.trace, &tol);
    let mut lines = Vec::new();
    let mut bound_check = |label: &str, obs: Option<f64>, max: f64| {
        let pass = obs.is_some_and(|t| t <= max);
        lines.push((
            pass,
            format!("{label}: observed {} vs bound {max:.4} s", show(obs)),
        ));
    };
    bound_check("(a) T_lambda", rep.t_lambda_obs, bounds.t_lambda_max);
    bound_check("(b) T_y", rep.t_y_obs, bounds.t_y_max);
    bound_check("(c) T_sol", rep.t_sol_obs, bounds.t_sol_max);

    let mask = dead_zone_mask(&out.trace, &out.events, DEAD_ZONE_SAMPLES);
    lines.push(match rep.t_sol_obs {
        Some(ts) => {
            let worst = max_tracking_after(&out.trace, &mask, ts).unwrap_or(0.0);
            (
                worst < args.tol_track,
                format!(
                    "(d) tracking: max error {worst:.3e} after {ts:.4} s vs tolerance {:.1e}",
                    args.tol_track
                ),
            )
        }
        None => (false, "(d) tracking: never settled".into()),
    });

    let mut all = lines.iter().all(|(p, _)| *p);
    for (pass, text) in &lines {
        println!("{} {text}", verdict(*pass));
    }
    match scn.algorithm {
        Algorithm::Ff => println!("SKIP (e) feasibility absorption: no box constraints under ff"),
        Algorithm::ProjFf => {
            let allowed = absorption_tolerance(&scn);
            let report = feasibility_absorption(&scn, &out.trace);
            let pass = report.iter().all(|a| a.worst_after < allowed);
            all &= pass;
            let detail: Vec<String> = report
                .iter()
                .map(|a| {
                    format!(
                        "agent {} enters at {} worst {:.2e}",
                        a.agent,
                        show(a.entry),
                        a.worst_after
                    )
                })
                .collect();
            println!(
                "{} (e) feasibility absorption (allowed {allowed:.2e}): {}",
                verdict(pass),
                if detail.is_empty() {
                    "no bounded agents".into()
                } else {
                    detail.join("; ")
                }
            );
        }
    }
    Ok(all)
}

pub fn bounds(scenario: &str) -> Result<()> {
    let scn = load(&ScenarioArgs {
        scenario: scenario.to_owned(),
        algorithm: None,
        dt: None,
        t_end: None,
    })?;
    let report = settling_bounds(&scn)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("bounds serialise")
    );
    Ok(())
}

enum Param {
    Gain(String),
    Dt,
    TEnd,
}

impl Param {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "dt" => Ok(Param::Dt),
            "t_end" => Ok(Param::TEnd),
            _ => match s.strip_prefix("gains.") {
                Some(name) => Ok(Param::Gain(name.to_owned())),
                None => Err(Failure::Config(format!(
                    "unknown parameter `{s}`; expected gains.<name>, dt or t_end"
                ))),
            },
        }
    }

    fn apply(&self, scn: &mut Scenario, v: f64) -> Result<()> {
        match self {
            Param::Gain(name) => scn.gains.set(name, v)?,
            Param::Dt => scn.dt = v,
            Param::TEnd => scn.t_end = v,
        }
        Ok(scn.validate()?)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let base = load(&args.scenario)?;
    let param = Param::parse(&args.param)?;
    // reject bad values before spending time on any run
    let scenarios = args
        .values
        .iter()
        .map(|&v| {
            let mut scn = base.clone();
            param.apply(&mut scn, v)?;
            Ok((v, scn))
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = out_dir(args.out.clone())?;
    let mut csv = String::from("value,t_sol_obs,max_tracking_err,switch_count\n");
    for (v, scn) in &scenarios {
        let bounds = settling_bounds(scn)?;
        let out = run(scn, args.decimate, None)?;
        let rep = detect_settling(&out.trace, &Tolerances::default());
        let mask = dead_zone_mask(&out.trace, &out.events, DEAD_ZONE_SAMPLES);
        let track = max_tracking_after(&out.trace, &mask, tracking_start(&rep, &bounds));
        csv.push_str(&format!(
            "{v},{},{},{}\n",
            cell(rep.t_sol_obs),
            cell(track),
            out.events.len()
        ));
        let metric = match args.metric {
            Metric::Tsol => cell(rep.t_sol_obs),
            Metric::Track => cell(track),
            Metric::Switches => out.events.len().to_string(),
        };
        println!("{v},{metric}");
    }
    write(&dir, "sweep.csv", csv.as_bytes())?;
    Ok(())
}

pub fn plot(trace: &Path, out: Option<PathBuf>) -> Result<()> {
    let text = fs::read_to_string(trace).map_err(|source| Failure::File {
        path: trace.to_path_buf(),
        source,
    })?;
    let dir = match out {
        Some(d) => out_dir(Some(d))?,
        None => trace
            .parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    for (name, svg) in render_all(&text)? {
        write(&dir, name, svg.as_bytes())?;
    }
    Ok(())
}
