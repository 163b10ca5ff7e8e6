//! Acceptance criteria, one line per criterion. Exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use cineplan::backend::{render_shot, BackendDescriptor, CallLog, Invocation, RenderRequest};
use cineplan::pipeline::{plan_only, resume, run_pipeline, Hooks, JobStatus, ShotStatus, MANIFEST_FILE, PLAN_FILE, TRACES_DIR};
use cineplan::provider::{build_provider, record_session, ProviderConfig, ProviderKind};
use cineplan_core::agents::AgentError;
use cineplan_core::cascade::{plan_cascade, CascadeConfig, CascadeError};
use cineplan_core::cot::{CotError, CotStage, CotTrace, FrozenClock, Route, TemplateSet};
use cineplan_core::eval::{display2, AggregateReport};
use cineplan_core::media::{GenerationMode, MediaRole};
use cineplan_core::model::MoviePlan;
use cineplan_core::testkit::{arb_valid_plan, MUTATIONS};
use cineplan_core::validate::validate_plan;
use common::*;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let spent = started.elapsed();
    if spent < limit {
        Ok(())
    } else {
        Err(format!("took {:.2} s, limit {} s", spent.as_secs_f64(), limit.as_secs()))
    }
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

fn c1_hierarchy_invariants() -> Outcome {
    let started = Instant::now();
    let mut runner = TestRunner::deterministic();
    let strategy = arb_valid_plan();
    let mut caught = 0usize;
    for n in 0..1000 {
        let plan = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        let report = validate_plan(&plan);
        ensure!(!report.has_errors(), "plan {n} rejected: {:?}", report.errors().next());
        for m in &MUTATIONS {
            let mut bad = plan.clone();
            (m.apply)(&mut bad);
            ensure!(validate_plan(&bad).has_error(m.expect), "plan {n}: mutation `{}` not reported as {:?}", m.name, m.expect);
            caught += 1;
        }
    }
    within(Duration::from_secs(10), started)?;
    Ok(format!("1000 plans valid, {caught}/{caught} mutations caught across {} kinds", MUTATIONS.len()))
}

fn c2_cascade_oracle() -> Outcome {
    let started = Instant::now();
    let dir = tmp();
    let job = dir.path().join("job");
    let cfg = demo_config(false, &job);
    let parts = PlannerParts::new();
    let (plan, _) = plan_only(&cfg.synopsis, &cfg.bank, &cfg.job, parts.planner()).map_err(|e| e.to_string())?;
    let produced = fs::read(job.join(PLAN_FILE)).map_err(|e| e.to_string())?;
    let golden = fs::read(golden_plan()).map_err(|e| e.to_string())?;
    ensure!(produced == golden, "plan.json differs from the golden plan");
    let counts = (plan.sub_scripts.len(), plan.scenes.len(), plan.shots.len());
    ensure!(counts == (3, 5, 11), "counts {counts:?}");

    let mut files: Vec<String> = fs::read_dir(job.join(TRACES_DIR))
        .map_err(|e| e.to_string())?
        .map(|e| format!("{TRACES_DIR}/{}", e.unwrap().file_name().to_string_lossy()))
        .collect();
    files.sort();
    ensure!(files == plan.traces, "trace files do not match the plan's trace list");
    // within each (agent, unit) the stages appear in configured order
    let agents = [&cfg.job.agents.director, &cfg.job.agents.scene_plan, &cfg.job.agents.shot_plan];
    let mut seen: Vec<(String, String, CotStage)> = Vec::new();
    for f in &files {
        let t: CotTrace = serde_json::from_str(&fs::read_to_string(job.join(f)).unwrap()).unwrap();
        seen.push((t.agent_kind, t.unit, t.stage));
    }
    let units: BTreeSet<(String, String)> = seen.iter().map(|(a, u, _)| (a.clone(), u.clone())).collect();
    for (agent, unit) in &units {
        let stages: Vec<CotStage> = seen.iter().filter(|(a, u, _)| a == agent && u == unit).map(|t| t.2).collect();
        let expected = &agents.iter().find(|c| c.kind.as_str() == agent).unwrap().stages;
        ensure!(&stages == expected, "{agent}/{unit}: stages {stages:?}");
    }
    within(Duration::from_secs(5), started)?;
    Ok(format!("plan.json byte-identical to golden (3/5/11), {} traces in stage order", files.len()))
}

fn retry_cascade(malformed: u32) -> (Result<MoviePlan, CascadeError>, Vec<CotTrace>) {
    let mut provider = fixture_provider();
    for attempt in 1..=malformed {
        let route = Route {
            agent_kind: "director".into(),
            unit: "synopsis".into(),
            stage: CotStage::DefineBoundaries,
            attempt,
        };
        provider.register(&route, true, "I would split it in three, but I forgot the block.");
    }
    let cfg = demo_config(false, Path::new("/nonexistent"));
    let templates = TemplateSet::builtin();
    let env = cineplan_core::agents::AgentEnv { provider: &provider, templates: &templates, clock: &FrozenClock };
    let cascade = CascadeConfig::new("fixture-director", "2025-01-01T00:00:00Z");
    let mut traces = Vec::new();
    let result = plan_cascade(&cfg.synopsis, &cfg.bank, env, &cascade, &mut traces);
    (result, traces)
}

fn c3_retry_contract() -> Outcome {
    let (ok, traces) = retry_cascade(2);
    ensure!(ok.is_ok(), "2 malformed + 1 valid failed: {:?}", ok.err());
    let attempts: Vec<u32> = traces
        .iter()
        .filter(|t| t.agent_kind == "director" && t.stage == CotStage::DefineBoundaries)
        .map(|t| t.attempt)
        .collect();
    ensure!(attempts == [1, 2, 3], "attempts {attempts:?}");
    let (failed, traces) = retry_cascade(3);
    let exhausted = matches!(
        failed,
        Err(CascadeError::Agent { source: AgentError::Cot(CotError::StageParseExhausted { attempts: 3, .. }), .. })
    );
    ensure!(exhausted, "3 malformed gave {:?}", failed.map(|_| ()));
    let tries = traces.iter().filter(|t| t.stage == CotStage::DefineBoundaries).count();
    ensure!(tries == 3, "{tries} traces for the exhausted stage");
    Ok("2 bad + 1 good -> success with 3 attempts; 3 bad -> StageParseExhausted after 3".into())
}

fn full_run(joint: bool, seed: u64, workers: usize, backends: Option<Vec<BackendDescriptor>>) -> Result<(tempfile::TempDir, MoviePlan), String> {
    let dir = tmp();
    let mut cfg = demo_config(joint, &dir.path().join("job"));
    cfg.job.render.seed = seed;
    cfg.job.render.worker_bound = workers;
    if let Some(b) = backends {
        cfg.job.render.backends = b;
    }
    let parts = PlannerParts::new();
    let outcome = run_pipeline(&cfg.synopsis, &cfg.bank, &cfg.job, parts.planner(), Hooks::default()).map_err(|e| e.to_string())?;
    ensure!(outcome.status == JobStatus::Complete, "status {:?}", outcome.status);
    Ok((dir, outcome.plan))
}

fn c4_render_determinism() -> Outcome {
    let started = Instant::now();
    let mut sums = Vec::new();
    for workers in [1, 4] {
        for _ in 0..2 {
            let (dir, plan) = full_run(false, 7, workers, None)?;
            sums.push(artifact_checksums(&dir.path().join("job"), &plan));
        }
    }
    let shots: BTreeSet<&String> = sums[0].iter().map(|s| &s.0).collect();
    ensure!(shots.len() == 11, "{} shots", shots.len());
    ensure!(sums.iter().all(|s| *s == sums[0]), "checksums differ between runs");
    within(Duration::from_secs(30), started)?;
    Ok(format!("4 runs (seed 7, workers 1 and 4) agree on {} artifact checksums over 11 shots", sums[0].len()))
}

fn c5_joint_composition() -> Outcome {
    let dir = tmp();
    let cfg = demo_config(true, &dir.path().join("job"));
    let parts = PlannerParts::new();
    let log = CallLog::default();
    let hooks = Hooks { observer: &log, ..Hooks::default() };
    let outcome = run_pipeline(&cfg.synopsis, &cfg.bank, &cfg.job, parts.planner(), hooks).map_err(|e| e.to_string())?;
    ensure!(outcome.status == JobStatus::Complete, "status {:?}", outcome.status);
    let events = log.events();
    let subtitled: Vec<_> = outcome.plan.shots.iter().filter(|s| !s.subtitles.is_empty()).collect();
    ensure!(!subtitled.is_empty(), "fixture has no subtitled shot");
    for shot in &subtitled {
        let roles: Vec<MediaRole> = events.iter().filter(|e| e.shot_id == shot.id).map(|e| e.role).collect();
        let count = |r| roles.iter().filter(|x| **x == r).count();
        ensure!(count(MediaRole::Image) == 1 && count(MediaRole::Audio) == 1, "{}: calls {roles:?}", shot.id);
        ensure!(count(MediaRole::Talking) == 1, "{}: calls {roles:?}", shot.id);
        let pos = |r| roles.iter().position(|x| *x == r).unwrap();
        ensure!(pos(MediaRole::Talking) > pos(MediaRole::Image) && pos(MediaRole::Talking) > pos(MediaRole::Audio), "{}: order {roles:?}", shot.id);
    }

    let shot = subtitled[0];
    let mut bank = outcome.plan.bank.clone();
    for e in &mut bank.entries {
        e.voice_ref = None;
    }
    let backends = cineplan::backend::BackendSet::from_descriptors(&cfg.job.render.backends).unwrap();
    let silent_log = CallLog::default();
    let req = RenderRequest::new(shot, &bank, GenerationMode::JointAudioVideo, 1, dir.path().join("novoice"));
    let result = render_shot(&req, &backends, &silent_log);
    ensure!(
        matches!(result, Err(cineplan::backend::RenderError::MissingVoiceSample(_))),
        "missing voice gave {:?}",
        result.map(|r| r.shot_id)
    );
    ensure!(silent_log.is_empty(), "{} backend calls before the voice check", silent_log.len());
    Ok(format!("{} subtitled shots: image+audio once each before talking; missing voice -> MissingVoiceSample, 0 calls", subtitled.len()))
}

fn c6_resume_idempotence() -> Outcome {
    let reference = tmp();
    let (ref_dir, _) = {
        let cfg = demo_config(false, &reference.path().join("job"));
        let parts = PlannerParts::new();
        run_pipeline(&cfg.synopsis, &cfg.bank, &cfg.job, parts.planner(), Hooks::default()).map_err(|e| e.to_string())?;
        (reference.path().join("job"), ())
    };

    let dir = tmp();
    let job = dir.path().join("job");
    let mut cfg = demo_config(false, &job);
    cfg.job.render.worker_bound = 1;
    let parts = PlannerParts::new();
    let cancel = AtomicBool::new(false);
    let done = AtomicUsize::new(0);
    let stop_after_six = |_: &ShotStatus| {
        if done.fetch_add(1, Ordering::SeqCst) + 1 == 6 {
            cancel.store(true, Ordering::SeqCst);
        }
    };
    let hooks = Hooks { cancel: Some(&cancel), on_shot: Some(&stop_after_six), ..Hooks::default() };
    let first = run_pipeline(&cfg.synopsis, &cfg.bank, &cfg.job, parts.planner(), hooks).map_err(|e| e.to_string())?;
    ensure!(first.status == JobStatus::Interrupted(5), "first run ended {:?}", first.status);
    ensure!(!job.join(MANIFEST_FILE).exists(), "manifest written by an interrupted run");

    let log = CallLog::default();
    let rendered = AtomicUsize::new(0);
    let count = |_: &ShotStatus| {
        rendered.fetch_add(1, Ordering::SeqCst);
    };
    let second = resume(&job, Hooks { observer: &log, on_shot: Some(&count), ..Hooks::default() }).map_err(|e| e.to_string())?;
    ensure!(second.status == JobStatus::Complete, "resume ended {:?}", second.status);
    let render_calls = rendered.load(Ordering::SeqCst);
    let shots_called: BTreeSet<String> = log.events().into_iter().map(|e| e.shot_id).collect();
    ensure!(render_calls == 5 && shots_called.len() == 5, "resume rendered {render_calls} shots ({} with backend calls)", shots_called.len());
    let a = fs::read(ref_dir.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    let b = fs::read(job.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    ensure!(a == b, "manifest differs from the uninterrupted run");
    Ok("stopped after 6/11; resume issued 5 render calls; manifest byte-identical".into())
}

/// Five metric means in report column order and the printed average.
const REFERENCE_ROWS: [(&str, [f64; 5], f64); 7] = [
    ("Llama3.3-70b, CoT, multi-agent", [3.86, 3.50, 4.00, 2.70, 3.13], 3.44),
    ("Deepseek-V3, CoT, multi-agent", [3.74, 3.66, 3.78, 3.07, 3.45], 3.54),
    ("Deepseek-R1, CoT, multi-agent", [4.02, 3.59, 4.09, 3.38, 3.79], 3.78),
    ("GPT4-o, no CoT, no multi-agent", [3.89, 3.36, 4.08, 3.37, 3.09], 3.55),
    ("GPT4-o, multi-agent only", [4.02, 3.69, 4.13, 3.46, 3.31], 3.72),
    ("GPT4-o, CoT only", [3.92, 3.38, 4.08, 3.37, 3.29], 3.61),
    ("GPT4-o, CoT, multi-agent", [4.04, 3.92, 4.11, 3.49, 3.55], 3.82),
];

fn c7_reference_row_averages() -> Outcome {
    let mut misses = Vec::new();
    for (name, [va, sf, cc, pl, nc], printed) in REFERENCE_ROWS {
        // sheet order: VA, SF, NC, CC, PL
        let report = AggregateReport::from_metric_means([va, sf, nc, cc, pl]);
        let shown: f64 = report.overall_display().unwrap().parse().unwrap();
        if (shown - printed).abs() > 0.005 + 1e-12 {
            misses.push(format!("{name}: {} (raw {:.4}) vs printed {printed:.2}", display2(report.overall.unwrap()), report.overall.unwrap()));
        }
    }
    ensure!(misses.is_empty(), "{}/7 rows off by more than 0.005: {}", misses.len(), misses.join("; "));
    Ok("all 7 rows within 0.005".into())
}

fn echo_backend() -> Vec<BackendDescriptor> {
    vec![BackendDescriptor {
        name: "echo".into(),
        roles: MediaRole::ALL.to_vec(),
        invocation: Invocation::Command { program: echo_renderer(), args: vec![] },
    }]
}

fn c8_backend_protocol() -> Outcome {
    let modes = [GenerationMode::PureTwoStage, GenerationMode::PureOneStage, GenerationMode::JointAudioVideo];
    let mut checked = 0;
    for mode in modes {
        let joint = mode == GenerationMode::JointAudioVideo;
        let mut per_backend = Vec::new();
        for backends in [None, Some(echo_backend())] {
            let label = if backends.is_some() { "echo" } else { "mock" };
            let mut runs = Vec::new();
            for _ in 0..2 {
                let dir = tmp();
                let mut cfg = demo_config(joint, &dir.path().join("job"));
                cfg.job.render.mode = mode;
                if let Some(b) = backends.clone() {
                    cfg.job.render.backends = b;
                }
                let parts = PlannerParts::new();
                let outcome = run_pipeline(&cfg.synopsis, &cfg.bank, &cfg.job, parts.planner(), Hooks::default())
                    .map_err(|e| format!("{label} {mode}: {e}"))?;
                ensure!(outcome.status == JobStatus::Complete, "{label} {mode}: {:?} {:?}", outcome.status, outcome.failures);
                let job = dir.path().join("job");
                for status in cineplan::pipeline::scan_statuses(&job, &outcome.plan).unwrap() {
                    let mut roles = status.result.unwrap().roles();
                    roles.sort();
                    let mut want = mode.result_roles();
                    want.sort();
                    ensure!(roles == want, "{label} {mode} {}: roles {roles:?}", status.shot_id);
                    checked += 1;
                }
                runs.push(artifact_checksums(&job, &outcome.plan));
            }
            ensure!(runs[0] == runs[1], "{label} {mode}: not deterministic");
            per_backend.push(runs.remove(0));
        }
        ensure!(per_backend[0] == per_backend[1], "{mode}: echo renderer artifacts differ from the built-in mock");
    }
    Ok(format!("echo renderer deterministic and role-complete in 3 modes ({checked} shot checks), checksums equal to mock"))
}

fn c9_replay_closure() -> Outcome {
    let dir = tmp();
    let sink = dir.path().join("recorded");
    let server = FakeLlmServer::start(fixture_provider());

    let mut cfg = demo_config(false, &dir.path().join("live"));
    let mut http = ProviderConfig::http(server.url.clone());
    http.model_name = cfg.job.provider.model_name.clone();
    http.auth_env = "CINEPLAN_ACCEPTANCE_UNSET_TOKEN".into();
    cfg.job.provider = record_session(&http, &sink).map_err(|e| e.to_string())?;
    let provider = build_provider(&cfg.job.provider, dir.path()).map_err(|e| e.to_string())?;
    let templates = TemplateSet::builtin();
    let planner = cineplan::pipeline::Planner { provider: provider.as_ref(), templates: &templates, clock: &FrozenClock };
    plan_only(&cfg.synopsis, &cfg.bank, &cfg.job, planner).map_err(|e| format!("recording: {e}"))?;
    let recorded_requests = server.request_count();
    drop(server);

    let mut replay_cfg = demo_config(false, &dir.path().join("replayed"));
    let mut replay = ProviderConfig::replay(&sink);
    replay.model_name = cfg.job.provider.model_name.clone();
    replay_cfg.job.provider = replay;
    ensure!(replay_cfg.job.provider.kind == ProviderKind::Replay, "not a replay provider");
    let provider = build_provider(&replay_cfg.job.provider, dir.path()).map_err(|e| e.to_string())?;
    let planner = cineplan::pipeline::Planner { provider: provider.as_ref(), templates: &templates, clock: &FrozenClock };
    plan_only(&replay_cfg.synopsis, &replay_cfg.bank, &replay_cfg.job, planner).map_err(|e| format!("replay: {e}"))?;

    let live = fs::read(dir.path().join("live").join(PLAN_FILE)).unwrap();
    let replayed = fs::read(dir.path().join("replayed").join(PLAN_FILE)).unwrap();
    ensure!(live == replayed, "replayed plan differs from the recorded run");
    let fixtures = fs::read_dir(&sink).unwrap().count();
    Ok(format!("{recorded_requests} recorded exchanges ({fixtures} fixtures) replayed offline to a byte-identical plan"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("C1 hierarchy invariant suite", c1_hierarchy_invariants),
        ("C2 cascade oracle", c2_cascade_oracle),
        ("C3 retry contract", c3_retry_contract),
        ("C4 render determinism", c4_render_determinism),
        ("C5 joint-mode composition", c5_joint_composition),
        ("C6 resume idempotence", c6_resume_idempotence),
        ("C7 reference row averages", c7_reference_row_averages),
        ("C8 backend protocol conformance", c8_backend_protocol),
        ("C9 replay closure", c9_replay_closure),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<34} {secs:>7.2}s  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<34} {secs:>7.2}s  {why}");
            }
        }
    }
    println!("{} of {} criteria passed", 9 - failed, 9);
    if failed > 0 {
        std::process::exit(1);
    }
}
