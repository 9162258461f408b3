//! The five subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nemqubit::acceptance::{self, AcceptanceOptions, Outcome, Perturbation};
use nemqubit::dynamics::{integrate, IntegratorConfig, Trajectory};
use nemqubit::junction::{diagonalize, BasisPolicy};
use nemqubit::par;
use nemqubit::protocols::{self, ProtocolKind, ProtocolRun, WindowPlan};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::output::{write_atomic, write_jsonl};
use crate::CliError;

/// Options shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct Context {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    /// Step override in fs.
    pub dt_fs: Option<f64>,
    /// Leave wall-clock times out of written files so reruns are byte-identical.
    pub seedless: bool,
}

impl Context {
    fn scenario(&self) -> Result<ScenarioConfig, CliError> {
        let path = self.config.as_ref().ok_or_else(|| CliError::Usage("--config is required".into()))?;
        Ok(ScenarioConfig::load(path)?)
    }

    fn stem(&self) -> String {
        self.config
            .as_ref()
            .and_then(|p| p.file_stem())
            .map_or_else(|| "nemqubit".to_string(), |s| s.to_string_lossy().into_owned())
    }

    fn csv_path(&self, cfg: &ScenarioConfig) -> PathBuf {
        let name = cfg.output.as_ref().and_then(|o| o.csv.clone()).unwrap_or_else(|| format!("{}.csv", self.stem()));
        self.out.join(name)
    }

    fn summary_path(&self, cfg: &ScenarioConfig) -> PathBuf {
        let name =
            cfg.output.as_ref().and_then(|o| o.summary.clone()).unwrap_or_else(|| format!("{}.jsonl", self.stem()));
        self.out.join(name)
    }

    fn integrator(&self, cfg: &ScenarioConfig) -> Result<IntegratorConfig, CliError> {
        let mut c = cfg.integrator()?;
        if let Some(fs) = self.dt_fs {
            if !(fs > 0.0 && fs.is_finite()) {
                return Err(CliError::Usage(format!("--dt must be a positive number of fs, got {fs}")));
            }
            c.dt = fs * 1e-6;
        }
        Ok(c)
    }

    fn wall(&self, t: f64) -> Option<f64> {
        (!self.seedless).then_some(t)
    }
}

fn write_trajectory(path: &Path, tr: &Trajectory) -> Result<(), CliError> {
    write_atomic(path, |w| tr.write_csv(w))
}

/// Writes the spectrum CSV; returns its path.
pub fn spectrum(ctx: &Context) -> Result<PathBuf, CliError> {
    let cfg = ctx.scenario()?;
    let (grid, levels) = cfg.bias_grid()?;
    let p = cfg.junction_params()?.remove(0);
    let rows = par::try_map(&grid, |&s| -> Result<String, CliError> {
        let sp = diagonalize(&p, s, BasisPolicy::BelowBarrier).map_err(|e| CliError::Usage(format!("s = {s}: {e}")))?;
        if sp.levels() < levels {
            return Err(CliError::Usage(format!("s = {s}: only {} levels available, {levels} requested", sp.levels())));
        }
        let mut row = vec![format!("{s:.6}")];
        let eps = sp.scaled_energies();
        row.extend(eps[..levels].iter().map(|e| format!("{e:.12e}")));
        for m in 0..levels {
            for n in m..levels {
                row.push(format!("{:.12e}", sp.dipole[(m, n)]));
            }
        }
        row.push(format!("{:.12e}", sp.barrier_height / (2.0 * p.ej())));
        row.push(format!("{:.12e}", sp.plasma_frequency / p.zero_bias_plasma_frequency()));
        Ok(row.join(","))
    })?;
    let mut header = vec!["s".to_string()];
    header.extend((0..levels).map(|m| format!("eps_{m}")));
    for m in 0..levels {
        for n in m..levels {
            header.push(format!("x_{m}_{n}"));
        }
    }
    header.push("dU_over_dU0".into());
    header.push("wp_over_wp0".into());
    let path = ctx.csv_path(&cfg);
    write_atomic(&path, |w| {
        writeln!(w, "{}", header.join(","))?;
        for r in &rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })?;
    Ok(path)
}

#[derive(Serialize)]
struct SimulateSummary {
    command: &'static str,
    config: String,
    labels: Vec<String>,
    final_occupations: Vec<f64>,
    norm_drift: f64,
    max_leakage: f64,
    steps: u64,
    samples: usize,
    duration_ns: f64,
    dt_fs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

/// Integrates a raw schedule, or the schedule a `[protocol]` section plans.
pub fn simulate(ctx: &Context) -> Result<Trajectory, CliError> {
    let cfg = ctx.scenario()?;
    let icfg = ctx.integrator(&cfg)?;
    let (system, schedule, c0) = if cfg.schedule.is_some() {
        cfg.schedule_run()?
    } else if cfg.protocol.is_some() {
        let (_, spec) = cfg.protocol_spec()?;
        let plan = protocols::plan(&spec)?;
        (plan.system, plan.schedule, plan.initial)
    } else {
        return Err(CliError::Usage("simulate needs a [schedule] or [protocol] section".into()));
    };
    let clock = Instant::now();
    let tr = integrate(&system, &schedule, &c0, &icfg)?;
    write_trajectory(&ctx.csv_path(&cfg), &tr)?;
    let summary = SimulateSummary {
        command: "simulate",
        config: ctx.stem(),
        labels: tr.labels.clone(),
        final_occupations: tr.final_occupations(),
        norm_drift: tr.max_norm_drift,
        max_leakage: tr.max_leakage,
        steps: tr.steps,
        samples: tr.len(),
        duration_ns: schedule.total_duration(),
        dt_fs: icfg.dt * 1e6,
        wall_time_s: ctx.wall(clock.elapsed().as_secs_f64()),
    };
    write_jsonl(&ctx.summary_path(&cfg), &[summary])?;
    Ok(tr)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProtocolSummary {
    pub command: &'static str,
    pub config: String,
    pub protocol: ProtocolKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_value: Option<f64>,
    pub fidelity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_fidelity: Option<f64>,
    pub passed: bool,
    pub labels: Vec<String>,
    pub occupations: Vec<f64>,
    /// [re, im] per basis state.
    pub final_amplitudes: Vec<[f64; 2]>,
    pub leakage: f64,
    pub max_leakage: f64,
    pub norm_drift: f64,
    pub windows: Vec<WindowPlan>,
    pub duration_ns: f64,
    pub dt_fs: f64,
    pub steps: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl ProtocolSummary {
    fn new(ctx: &Context, kind: ProtocolKind, min_fidelity: Option<f64>, run: &ProtocolRun) -> Self {
        let r = &run.report;
        ProtocolSummary {
            command: "protocol",
            config: ctx.stem(),
            protocol: kind,
            sweep_value: None,
            fidelity: r.fidelity,
            min_fidelity,
            passed: min_fidelity.is_none_or(|m| r.fidelity >= m),
            labels: r.labels.clone(),
            occupations: r.occupations.clone(),
            final_amplitudes: r.final_amplitudes.iter().map(|c| [c.re, c.im]).collect(),
            leakage: r.leakage,
            max_leakage: r.max_leakage,
            norm_drift: r.norm_drift,
            windows: r.windows.clone(),
            duration_ns: r.duration,
            dt_fs: r.dt * 1e6,
            steps: r.steps,
            error: None,
            wall_time_s: ctx.wall(r.wall_time_s),
        }
    }
}

/// Runs the configured protocol, writes its trajectory and summary. A run
/// below `min_fidelity` is flagged in the summary, not treated as an error.
pub fn protocol(ctx: &Context) -> Result<ProtocolSummary, CliError> {
    let cfg = ctx.scenario()?;
    let icfg = ctx.integrator(&cfg)?;
    let (kind, spec) = cfg.protocol_spec()?;
    let run = kind.run(&spec, &icfg)?;
    write_trajectory(&ctx.csv_path(&cfg), &run.trajectory)?;
    let summary = ProtocolSummary::new(ctx, kind, cfg.protocol_section()?.min_fidelity, &run);
    write_jsonl(&ctx.summary_path(&cfg), std::slice::from_ref(&summary))?;
    Ok(summary)
}

/// Runs every sweep point, in parallel, and writes one summary line per
/// point in input order. Integration failures are recorded per point and
/// reported after all points finish.
pub fn sweep(ctx: &Context) -> Result<Vec<ProtocolSummary>, CliError> {
    let cfg = ctx.scenario()?;
    let base = ctx.integrator(&cfg)?;
    let (kind, points) = cfg.sweep_points(&base)?;
    let min_fidelity = cfg.protocol_section()?.min_fidelity;
    // samples are not written for a sweep
    let results = par::map(&points, |(x, spec, icfg)| {
        let icfg = IntegratorConfig { max_samples: 2, ..icfg.clone() };
        (*x, kind.run(spec, &icfg))
    });
    let mut summaries = Vec::with_capacity(results.len());
    let mut first_error = None;
    for ((x, res), (_, _, icfg)) in results.into_iter().zip(&points) {
        let s = match res {
            Ok(run) => ProtocolSummary { sweep_value: Some(x), ..ProtocolSummary::new(ctx, kind, min_fidelity, &run) },
            Err(e) => {
                let msg = e.to_string();
                first_error.get_or_insert_with(|| CliError::from(e));
                ProtocolSummary {
                    command: "protocol",
                    config: ctx.stem(),
                    protocol: kind,
                    sweep_value: Some(x),
                    fidelity: f64::NAN,
                    min_fidelity,
                    passed: false,
                    labels: Vec::new(),
                    occupations: Vec::new(),
                    final_amplitudes: Vec::new(),
                    leakage: f64::NAN,
                    max_leakage: f64::NAN,
                    norm_drift: f64::NAN,
                    windows: Vec::new(),
                    duration_ns: f64::NAN,
                    dt_fs: icfg.dt * 1e6,
                    steps: 0,
                    error: Some(msg),
                    wall_time_s: None,
                }
            }
        };
        summaries.push(ProtocolSummary { command: "sweep", ..s });
    }
    write_jsonl(&ctx.summary_path(&cfg), &summaries)?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(summaries),
    }
}

/// Runs the acceptance suite, printing one line per criterion as it
/// finishes. Any failed criterion is an error.
pub fn accept(
    ctx: &Context,
    only: Option<Vec<u32>>,
    perturbation: Option<Perturbation>,
) -> Result<Vec<Outcome>, CliError> {
    let mut opts = AcceptanceOptions { only, perturbation, ..Default::default() };
    if let Some(fs) = ctx.dt_fs {
        opts.dt = fs * 1e-6;
    }
    let mut outcomes = acceptance::run_with(&opts, |o| println!("{o}"));
    if ctx.seedless {
        outcomes.iter_mut().for_each(|o| o.wall_time_s = 0.0);
    }
    write_jsonl(&ctx.out.join("acceptance.jsonl"), &outcomes)?;
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed()).map(|o| o.id.to_string()).collect();
    if failed.is_empty() {
        Ok(outcomes)
    } else {
        Err(CliError::Acceptance(format!("criteria failed: {}", failed.join(", "))))
    }
}
