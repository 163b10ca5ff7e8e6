//! The `cineplan` command line.
//!
//! Exit codes:
//!
//! | code | meaning                                                    |
//! |------|------------------------------------------------------------|
//! | 0    | success                                                    |
//! | 2    | render incomplete: some shots failed or were not attempted |
//! | 3    | planning failed                                            |
//! | 64   | configuration error                                        |
//! | 65   | bad data: unknown selector, malformed sheet, corrupt job   |
//! | 66   | a referenced input file is missing                         |
//! | 73   | job directory already in use                               |
//! | 74   | I/O error                                                  |

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use cineplan_core::checks::{automated_checks, CheckReport};
use cineplan_core::cot::{Clock, FrozenClock, TemplateSet};
use cineplan_core::eval::{aggregate_ratings, display2, generate_rating_sheet, plan_ref, AggregateReport, MetricKind};
use cineplan_core::media::GenerationMode;
use cineplan_core::model::MoviePlan;
use cineplan_core::ordering::plan_ordering;
use cineplan_core::validate::IssueCode;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{load_config, ConfigError, LoadedConfig, Overrides};
use crate::pipeline::{
    plan_only, render_existing_plan, resume, run_pipeline, scan_statuses, Hooks, JobOutcome, JobStatus, PipelineError,
    Planner, SystemClock, COST_FILE, MANIFEST_FILE, PLAN_FILE, TRACES_DIR,
};
use crate::provider::{build_provider, ProviderKind, SetupError};
use crate::sheet::{read_sheet, write_sheet, SheetParseError};
use crate::templates::load_templates;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RENDER_INCOMPLETE: i32 = 2;
pub const EXIT_PLANNING_FAILED: i32 = 3;
pub const EXIT_CONFIG: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NO_INPUT: i32 = 66;
pub const EXIT_CANT_CREATE: i32 = 73;
pub const EXIT_IO: i32 = 74;

pub const EVAL_FILE: &str = "eval.json";
pub const SHEET_FILE: &str = "ratings.csv";

#[derive(Debug, Parser)]
#[command(name = "cineplan", version, about = "Plan, render and evaluate multi-shot movie jobs")]
pub struct Cli {
    /// Emit machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct OverrideArgs {
    #[arg(long)]
    pub job_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<GenerationMode>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub created_at: Option<String>,
}

fn parse_mode(raw: &str) -> Result<GenerationMode, String> {
    raw.parse().map_err(|e| format!("{e}"))
}

impl OverrideArgs {
    fn to_overrides(&self) -> Overrides {
        Overrides {
            job_dir: self.job_dir.clone(),
            mode: self.mode,
            worker_bound: self.workers,
            seed: self.seed,
            created_at: self.created_at.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the planning cascade only.
    Plan {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Render a plan: the one given with --plan, or the one a previous
    /// `plan` left in the job directory.
    Render {
        config: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Plan and render.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Continue an interrupted or partially failed job.
    Resume { job_dir: PathBuf },
    /// Show part of a job: tree, ids, status, manifest, cost, traces,
    /// trace:<n>, or a sub-script, scene or shot id.
    Inspect {
        job_dir: PathBuf,
        #[arg(default_value = "tree")]
        selector: String,
    },
    /// Write a blank rating sheet and its rubric sidecar.
    Sheet {
        job_dir: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Aggregate filled sheets and run the automated checks.
    Eval {
        job_dir: PathBuf,
        sheets: Vec<PathBuf>,
        /// JSON file of externally computed scores, echoed into the report.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = match &e {
            ConfigError::Read { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_NO_INPUT,
            ConfigError::Read { .. } => EXIT_IO,
            ConfigError::MissingInput(_) => EXIT_NO_INPUT,
            ConfigError::Parse { .. } | ConfigError::SecretInConfig { .. } | ConfigError::Invalid(_) => EXIT_CONFIG,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Config(_) => EXIT_CONFIG,
            PipelineError::InvalidInput(report) => {
                let missing_file = report
                    .errors()
                    .all(|i| matches!(i.code, IssueCode::PortraitUnresolved | IssueCode::VoiceUnresolved));
                if missing_file {
                    EXIT_NO_INPUT
                } else {
                    EXIT_DATA
                }
            }
            PipelineError::JobDirNotEmpty(_) => EXIT_CANT_CREATE,
            PipelineError::PlanningFailed { .. } => EXIT_PLANNING_FAILED,
            PipelineError::CorruptJobDir(_) => EXIT_DATA,
            PipelineError::Io { .. } => EXIT_IO,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<SetupError> for Failure {
    fn from(e: SetupError) -> Self {
        let code = match &e {
            SetupError::Fixtures { .. } => EXIT_NO_INPUT,
            SetupError::SinkNotWritable { .. } => EXIT_CANT_CREATE,
            _ => EXIT_CONFIG,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<SheetParseError> for Failure {
    fn from(e: SheetParseError) -> Self {
        Failure::new(EXIT_DATA, e.to_string())
    }
}

/// Destination for command output.
pub struct Output<'a> {
    pub json: bool,
    pub out: &'a mut dyn Write,
}

impl Output<'_> {
    fn emit(&mut self, value: &impl Serialize, text: impl FnOnce() -> String) -> std::io::Result<()> {
        if self.json {
            let mut s = serde_json::to_string_pretty(value).expect("serializable");
            s.push('\n');
            self.out.write_all(s.as_bytes())
        } else {
            self.out.write_all(text().as_bytes())
        }
    }
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure::new(EXIT_IO, e.to_string())
}

/// Parses `args` and runs the command, writing results to `out` and
/// diagnostics to `err`. Returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let mut output = Output { json: cli.json, out };
    match execute(&cli.command, &mut output) {
        Ok(code) => code,
        Err(f) => {
            if cli.json {
                let _ = writeln!(output.out, "{}", json!({"error": f.message, "exit_code": f.code}));
            }
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub fn execute(command: &Command, out: &mut Output<'_>) -> Result<i32, Failure> {
    match command {
        Command::Plan { config, overrides } => cmd_plan(config, overrides, out),
        Command::Render { config, plan, overrides } => cmd_render(config, plan.as_deref(), overrides, out),
        Command::Run { config, overrides } => cmd_run(config, overrides, out),
        Command::Resume { job_dir } => {
            let started = Instant::now();
            let outcome = resume(job_dir, Hooks::default())?;
            report_outcome(job_dir, &outcome, started, out)
        }
        Command::Inspect { job_dir, selector } => cmd_inspect(job_dir, selector, out),
        Command::Sheet { job_dir, output } => cmd_sheet(job_dir, output.as_deref(), out),
        Command::Eval { job_dir, sheets, scores } => cmd_eval(job_dir, sheets, scores.as_deref(), out),
    }
}

fn templates_for(cfg: &LoadedConfig) -> Result<TemplateSet, Failure> {
    match &cfg.templates_dir {
        Some(dir) => load_templates(dir).map_err(|e| {
            let code = match e.kind() {
                io::ErrorKind::NotFound => EXIT_NO_INPUT,
                io::ErrorKind::InvalidData => EXIT_CONFIG,
                _ => EXIT_IO,
            };
            Failure::new(code, e.to_string())
        }),
        None => Ok(TemplateSet::builtin()),
    }
}

/// Runs `f` with a planner built from the config. Fixture-backed providers
/// get a frozen clock so traces are reproducible.
fn with_planner<R>(cfg: &LoadedConfig, f: impl FnOnce(Planner<'_>) -> R) -> Result<R, Failure> {
    let base = cfg.path.parent().unwrap_or(Path::new("."));
    let provider = build_provider(&cfg.job.provider, base)?;
    let templates = templates_for(cfg)?;
    let system = SystemClock::new();
    let clock: &dyn Clock = match cfg.job.provider.kind {
        ProviderKind::Http => &system,
        ProviderKind::Mock | ProviderKind::Replay => &FrozenClock,
    };
    Ok(f(Planner { provider: provider.as_ref(), templates: &templates, clock }))
}

fn counts(plan: &MoviePlan) -> String {
    format!(
        "{} sub-scripts, {} scenes, {} shots",
        plan.sub_scripts.len(),
        plan.scenes.len(),
        plan.shots.len()
    )
}

fn cmd_plan(config: &Path, overrides: &OverrideArgs, out: &mut Output<'_>) -> Result<i32, Failure> {
    let cfg = load_config(config, &overrides.to_overrides())?;
    let started = Instant::now();
    let (plan, cost) = with_planner(&cfg, |p| plan_only(&cfg.synopsis, &cfg.bank, &cfg.job, p))??;
    let summary = json!({
        "job_dir": cfg.job.job_dir,
        "sub_scripts": plan.sub_scripts.len(),
        "scenes": plan.scenes.len(),
        "shots": plan.shots.len(),
        "provider_calls": cost.provider_calls,
        "wall_ms": started.elapsed().as_millis() as u64,
    });
    out.emit(&summary, || {
        format!(
            "job        {}\nplan       {}\ncalls      {} provider calls\nwall time  {:.3} s\n",
            cfg.job.job_dir.display(),
            counts(&plan),
            cost.provider_calls,
            started.elapsed().as_secs_f64()
        )
    })
    .map_err(io_failure)?;
    Ok(EXIT_OK)
}

fn cmd_render(config: &Path, plan: Option<&Path>, overrides: &OverrideArgs, out: &mut Output<'_>) -> Result<i32, Failure> {
    let cfg = load_config(config, &overrides.to_overrides())?;
    let started = Instant::now();
    let outcome = match plan {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::new(EXIT_NO_INPUT, format!("{}: {e}", path.display())))?;
            let plan = MoviePlan::from_json(&text).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", path.display())))?;
            render_existing_plan(plan, &cfg.job, Hooks::default())?
        }
        None => resume(&cfg.job.job_dir, Hooks::default())?,
    };
    report_outcome(&cfg.job.job_dir, &outcome, started, out)
}

fn cmd_run(config: &Path, overrides: &OverrideArgs, out: &mut Output<'_>) -> Result<i32, Failure> {
    let cfg = load_config(config, &overrides.to_overrides())?;
    let started = Instant::now();
    let outcome =
        with_planner(&cfg, |p| run_pipeline(&cfg.synopsis, &cfg.bank, &cfg.job, p, Hooks::default()))??;
    report_outcome(&cfg.job.job_dir, &outcome, started, out)
}

fn report_outcome(job_dir: &Path, outcome: &JobOutcome, started: Instant, out: &mut Output<'_>) -> Result<i32, Failure> {
    let (status, code) = match outcome.status {
        JobStatus::Complete => ("complete".to_owned(), EXIT_OK),
        JobStatus::RenderIncomplete(n) => (format!("render-incomplete ({n} failed)"), EXIT_RENDER_INCOMPLETE),
        JobStatus::Interrupted(n) => (format!("interrupted ({n} not attempted)"), EXIT_RENDER_INCOMPLETE),
    };
    let c = &outcome.cost;
    let wall = started.elapsed();
    let summary = json!({
        "job_dir": job_dir,
        "status": status,
        "sub_scripts": outcome.plan.sub_scripts.len(),
        "scenes": outcome.plan.scenes.len(),
        "shots_planned": outcome.plan.shots.len(),
        "shots_done": c.shots_done,
        "shots_failed": c.shots_failed,
        "shots_skipped": c.shots_skipped,
        "failures": outcome.failures.iter().map(|(id, e)| json!({"shot_id": id, "error": e})).collect::<Vec<_>>(),
        "checksum_mismatches": outcome.checksum_mismatches,
        "total_duration": outcome.manifest.as_ref().map(|m| m.total_duration),
        "wall_ms": wall.as_millis() as u64,
    });
    out.emit(&summary, || {
        let mut s = format!(
            "job        {}\nplan       {}\nshots      {} planned, {} done, {} failed, {} skipped\n",
            job_dir.display(),
            counts(&outcome.plan),
            outcome.plan.shots.len(),
            c.shots_done,
            c.shots_failed,
            c.shots_skipped
        );
        for (id, e) in &outcome.failures {
            s.push_str(&format!("failed     {id}: {e}\n"));
        }
        if let Some(m) = &outcome.manifest {
            s.push_str(&format!("runtime    {:.2} s of footage\n", m.total_duration));
        }
        s.push_str(&format!("wall time  {:.3} s\nstatus     {status}\n", wall.as_secs_f64()));
        s
    })
    .map_err(io_failure)?;
    Ok(code)
}

fn load_plan(job_dir: &Path) -> Result<MoviePlan, Failure> {
    let path = job_dir.join(PLAN_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", path.display())))?;
    MoviePlan::from_json(&text).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", path.display())))
}

fn read_value(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", path.display())))
}

fn trace_files(job_dir: &Path) -> Result<Vec<String>, Failure> {
    let dir = job_dir.join(TRACES_DIR);
    let mut names: Vec<String> = fs::read_dir(&dir)
        .map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    Ok(names)
}

fn tree(plan: &MoviePlan) -> (Value, String) {
    let mut text = format!("{}\n", counts(plan));
    let mut subs = Vec::new();
    for ss in &plan.sub_scripts {
        text.push_str(&format!("{}  {}\n", ss.id, ss.title));
        let mut scenes = Vec::new();
        for sc in plan.scenes_of(&ss.id) {
            text.push_str(&format!("  {}  {}\n", sc.id, sc.title));
            let mut shots = Vec::new();
            for sh in plan.shots_of(&sc.id) {
                text.push_str(&format!(
                    "    {}  {} / {}  {:.2}s\n",
                    sh.id,
                    sh.shot_type.label(),
                    sh.camera_movement.label(),
                    sh.duration_hint
                ));
                shots.push(json!({
                    "id": sh.id,
                    "shot_type": sh.shot_type.label(),
                    "camera_movement": sh.camera_movement.label(),
                    "duration_hint": sh.duration_hint,
                }));
            }
            scenes.push(json!({"id": sc.id, "title": sc.title, "shots": shots}));
        }
        subs.push(json!({"id": ss.id, "title": ss.title, "scenes": scenes}));
    }
    let value = json!({
        "counts": {"sub_scripts": plan.sub_scripts.len(), "scenes": plan.scenes.len(), "shots": plan.shots.len()},
        "sub_scripts": subs,
    });
    (value, text)
}

fn pretty(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn cmd_inspect(job_dir: &Path, selector: &str, out: &mut Output<'_>) -> Result<i32, Failure> {
    let plan = load_plan(job_dir)?;
    let not_found = || Failure::new(EXIT_DATA, format!("not found: `{selector}`"));
    let (value, text) = match selector {
        "tree" => tree(&plan),
        "ids" => {
            let ids = plan_ordering(&plan).map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
            let text = ids.iter().map(|i| format!("{i}\n")).collect();
            (json!(ids), text)
        }
        "status" => {
            let statuses = scan_statuses(job_dir, &plan)?;
            let text = statuses
                .iter()
                .map(|s| format!("{:<16} {:<10} attempts={}\n", s.shot_id, format!("{:?}", s.state).to_lowercase(), s.attempts))
                .collect();
            (serde_json::to_value(&statuses).expect("serializable"), text)
        }
        "manifest" | "cost" => {
            let file = if selector == "manifest" { MANIFEST_FILE } else { COST_FILE };
            let path = job_dir.join(file);
            if !path.is_file() {
                return Err(not_found());
            }
            let v = read_value(&path)?;
            let text = pretty(&v);
            (v, text)
        }
        "traces" => {
            let names = trace_files(job_dir)?;
            let text = names.iter().map(|n| format!("{n}\n")).collect();
            (json!(names), text)
        }
        s if s.starts_with("trace:") => {
            let key = &s["trace:".len()..];
            let names = trace_files(job_dir)?;
            let found = match key.parse::<usize>() {
                Ok(n) => names.iter().find(|f| f.starts_with(&format!("{n:03}-"))),
                Err(_) => names.iter().find(|f| f.as_str() == key || f.trim_end_matches(".json") == key),
            };
            let v = read_value(&job_dir.join(TRACES_DIR).join(found.ok_or_else(not_found)?))?;
            let text = pretty(&v);
            (v, text)
        }
        id => {
            let v = if let Some(shot) = plan.shot(id) {
                let status = scan_statuses(job_dir, &plan)?.into_iter().find(|s| s.shot_id == id);
                json!({"shot": shot, "status": status})
            } else if let Some(scene) = plan.scene(id) {
                json!({"scene": scene, "shots": plan.shots_of(id).map(|s| &s.id).collect::<Vec<_>>()})
            } else if let Some(ss) = plan.sub_script(id) {
                json!({"sub_script": ss, "scenes": plan.scenes_of(id).map(|s| &s.id).collect::<Vec<_>>()})
            } else {
                return Err(not_found());
            };
            let text = pretty(&v);
            (v, text)
        }
    };
    out.emit(&value, || text).map_err(io_failure)?;
    Ok(EXIT_OK)
}

fn cmd_sheet(job_dir: &Path, output: Option<&Path>, out: &mut Output<'_>) -> Result<i32, Failure> {
    let plan = load_plan(job_dir)?;
    let manifest_path = job_dir.join(MANIFEST_FILE);
    let manifest = if manifest_path.is_file() {
        let text = fs::read_to_string(&manifest_path).map_err(io_failure)?;
        Some(serde_json::from_str(&text).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", manifest_path.display())))?)
    } else {
        None
    };
    let sheet = generate_rating_sheet(&plan, manifest.as_ref());
    let path = output.map(Path::to_path_buf).unwrap_or_else(|| job_dir.join(SHEET_FILE));
    write_sheet(&path, &sheet).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?;
    let v = json!({"sheet": path, "sidecar": crate::sheet::sidecar_path(&path), "rows": sheet.rows.len(), "plan_ref": sheet.plan_ref});
    out.emit(&v, || format!("wrote {} ({} rows)\n", path.display(), sheet.rows.len())).map_err(io_failure)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub plan_ref: String,
    pub aggregate: Option<AggregateReport>,
    pub checks: CheckReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external: Option<Value>,
}

/// Metric means and the overall score in report column order.
pub fn report_table(report: &AggregateReport) -> String {
    let mut header = String::new();
    let mut row = String::new();
    for m in MetricKind::REPORT_ORDER {
        let label = m.short_label();
        header.push_str(&format!("{label:<16}"));
        let cell = report.mean(m).map(display2).unwrap_or_else(|| "-".into());
        row.push_str(&format!("{cell:<16}"));
    }
    header.push_str("Average\n");
    row.push_str(&report.overall_display().unwrap_or_else(|| "-".into()));
    row.push('\n');
    header + &row
}

fn cmd_eval(job_dir: &Path, sheets: &[PathBuf], scores: Option<&Path>, out: &mut Output<'_>) -> Result<i32, Failure> {
    let plan = load_plan(job_dir)?;
    let reference = plan_ref(&plan);
    let mut parsed = Vec::new();
    for path in sheets {
        let sheet = read_sheet(path)?;
        sheet.check_scores().map_err(|e| SheetParseError {
            path: path.clone(),
            row: e.row,
            column: Some(e.column.clone()),
            detail: e.detail.clone(),
        })?;
        for (n, row) in sheet.rows.iter().enumerate() {
            if plan.shot(&row.shot_id).is_none() {
                return Err(SheetParseError {
                    path: path.clone(),
                    row: n + 1,
                    column: Some("shot_id".into()),
                    detail: format!("`{}` is not a shot of this plan", row.shot_id),
                }
                .into());
            }
        }
        if !sheet.plan_ref.is_empty() && sheet.plan_ref != reference {
            log::warn!("{} was generated for a different plan", path.display());
        }
        parsed.push(sheet);
    }
    let aggregate = if parsed.is_empty() {
        None
    } else {
        Some(aggregate_ratings(&parsed).map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?)
    };
    let external = scores.map(read_value).transpose()?;
    let report = EvalReport { plan_ref: reference, aggregate, checks: automated_checks(&plan, &plan.bank), external };
    let path = job_dir.join(EVAL_FILE);
    fs::write(&path, pretty(&report)).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?;
    out.emit(&report, || {
        let c = &report.checks;
        let mut s = match &report.aggregate {
            Some(a) => report_table(a),
            None => "no sheets given; automated checks only\n".to_owned(),
        };
        s.push_str(&format!(
            "character coverage         {:.2}\nsubtitle speaker validity  {:.2}\nshots per scene            {}..{} (mean {:.2})\nother cinematography       {:.2}\nrationale presence         {:.2}\n",
            c.character_coverage,
            c.subtitle_speaker_validity,
            c.min_shots_per_scene,
            c.max_shots_per_scene,
            c.mean_shots_per_scene,
            c.other_cinematography_fraction,
            c.rationale_presence
        ));
        if let Some(ext) = &report.external {
            s.push_str(&format!("external scores\n{}", pretty(ext)));
        }
        s
    })
    .map_err(io_failure)?;
    Ok(EXIT_OK)
}
