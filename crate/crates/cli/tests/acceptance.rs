//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Oracles here are computed independently of the code under test.

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stepwise_core::model::ActionKind;
use stepwise_core::primer::{self, AppBundle};
use stepwise_core::reporting::{self, BugReport, ReportFormat};
use stepwise_core::ripper::{self, RipConfig};
use stepwise_core::suggestion::{
    candidate_screenshots, record_step, suggest_actions, suggest_components, Orientation, StepComponent,
};
use stepwise_core::testkit::{five_screens_path, minidoc_path, random_app, sample_click_trace, TraceStep};
use stepwise_core::{
    analyze, Action, Analysis, GridCell, ReplayOutcome, ReportDraft, ReportHeader, ReproStep,
    SimulatedDevice, StateFingerprint,
};

type Outcome = Result<String, String>;

/// Behavior-state ids reachable from the initial state by clicks alone.
fn click_reachable(behavior: &str) -> BTreeSet<String> {
    let mut initial = None;
    let mut edges: Vec<(String, String)> = Vec::new();
    for line in behavior.lines() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["initial", s] => initial = Some(s.to_string()),
            ["on", from, "click", _, "->", to] if !matches!(*to, "EXTERNAL" | "HOME") => {
                edges.push((from.to_string(), to.to_string()))
            }
            _ => {}
        }
    }
    let initial = initial.expect("behavior has an initial state");
    let mut seen = BTreeSet::from([initial.clone()]);
    let mut queue = VecDeque::from([initial]);
    while let Some(s) = queue.pop_front() {
        for (_, to) in edges.iter().filter(|(f, _)| *f == s) {
            if seen.insert(to.clone()) {
                queue.push_back(to.clone());
            }
        }
    }
    seen
}

struct Generated {
    _dir: tempfile::TempDir,
    analysis: Analysis,
    device: SimulatedDevice,
}

fn generated(seed: u64) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let app = random_app(&mut rng, &format!("gen{seed}"));
    let dir = tempfile::tempdir().unwrap();
    app.write_to(dir.path()).unwrap();
    let analysis = analyze(dir.path(), &RipConfig::default()).unwrap();
    let device = ripper::simulate(&AppBundle::open(dir.path()).unwrap()).unwrap();
    Generated {
        _dir: dir,
        analysis,
        device,
    }
}

fn header(title: &str) -> ReportHeader {
    ReportHeader {
        reporter_name: "Acceptance".into(),
        device: "Tablet".into(),
        orientation: Orientation::Portrait,
        title: title.into(),
        description: "Generated from a ground-truth trace.".into(),
    }
}

fn run_cli(store: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_stepwise"))
        .arg("--store")
        .arg(store)
        .args(args)
        .output()
        .unwrap()
}

fn ripper_oracle() -> Outcome {
    let mut slowest = Duration::ZERO;
    let runs = 25;
    for seed in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let app = random_app(&mut rng, &format!("oracle{seed}"));
        let dir = tempfile::tempdir().unwrap();
        app.write_to(dir.path()).unwrap();
        let bundle = AppBundle::open(dir.path()).unwrap();
        let model = primer::parse_opened(&bundle).unwrap();
        let mut device = ripper::simulate(&bundle).unwrap();
        let start = Instant::now();
        let graph = ripper::rip(&mut device, &model, &RipConfig::default()).map_err(|e| e.to_string())?;
        let took = start.elapsed();
        slowest = slowest.max(took);
        if took >= Duration::from_secs(5) {
            return Err(format!("bundle {seed} took {took:?}"));
        }
        let expected: BTreeSet<StateFingerprint> = click_reachable(&app.behavior)
            .iter()
            .map(|id| device.screen_of(id).unwrap().fingerprint)
            .collect();
        let got: BTreeSet<StateFingerprint> = graph.states.keys().copied().collect();
        if got != expected {
            return Err(format!("bundle {seed}: ripped {} states, oracle {}", got.len(), expected.len()));
        }
    }
    Ok(format!("{runs}/{runs} bundles agree, slowest rip {slowest:?}"))
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let bundle = minidoc_path();
    for store in [a.path(), b.path()] {
        let out = run_cli(store, &["analyze", bundle.to_str().unwrap()]);
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
    }
    for file in ["static.model", "graph.efg"] {
        let x = fs::read(a.path().join("apps/minidoc/1.0").join(file)).unwrap();
        let y = fs::read(b.path().join("apps/minidoc/1.0").join(file)).unwrap();
        if x != y {
            return Err(format!("{file} differs between runs"));
        }
    }
    Ok("static.model and graph.efg byte-identical across two runs".into())
}

/// Enters `trace` through the suggestion engine, picking the true component
/// and the true screen at every step. Fails if either is not offered.
fn enter_trace(g: &Generated, trace: &[TraceStep], draft_id: &str) -> Result<ReportDraft, String> {
    let graph = &g.analysis.graph;
    let mut draft = ReportDraft::new(draft_id, graph, header(draft_id)).map_err(|e| e.to_string())?;
    for (i, t) in trace.iter().enumerate() {
        let truth = g.device.screen_of(&t.state).unwrap().fingerprint;
        if !draft.belief.contains(&truth) {
            return Err(format!("{draft_id} step {}: true state not believed", i + 1));
        }
        if !suggest_actions(graph, &draft.belief).contains(&ActionKind::Click) {
            return Err(format!("{draft_id} step {}: click not suggested", i + 1));
        }
        let offered = suggest_components(graph, &draft.belief, ActionKind::Click);
        let pick = offered
            .iter()
            .find(|c| c.key() == t.component)
            .ok_or_else(|| format!("{draft_id} step {}: {} not suggested", i + 1, t.component))?;
        let shots = candidate_screenshots(graph, &draft.belief, ActionKind::Click, &pick.key())
            .map_err(|e| format!("{draft_id} step {}: {e}", i + 1))?;
        let shot = shots
            .iter()
            .find(|s| s.state == truth)
            .ok_or_else(|| format!("{draft_id} step {}: true screen not offered", i + 1))?;
        let step = ReproStep {
            step_num: i as u32 + 1,
            action: Action::Click,
            component: StepComponent::Resolved {
                key: pick.key(),
                state: shot.state,
                shot: shot.address(),
            },
            activity_name: String::new(),
            notes: String::new(),
        };
        draft = record_step(graph, &draft, step).map_err(|e| e.to_string())?;
    }
    Ok(draft)
}

fn suggestion_soundness() -> Outcome {
    let (mut traces, mut steps) = (0, 0);
    let mut seed = 0;
    while traces < 120 {
        let g = generated(2000 + seed);
        seed += 1;
        if !g.analysis.graph.complete {
            return Err(format!("generated app {seed} was not fully ripped"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..4 {
            let trace = sample_click_trace(&g.device, &mut rng, 8);
            enter_trace(&g, &trace, &format!("t{traces}"))?;
            traces += 1;
            steps += trace.len();
        }
    }
    Ok(format!("true action and component offered at all {steps} steps of {traces} traces"))
}

fn created() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 6, 1, 9, 30, 0).unwrap()
}

fn manual_step(step_num: u32) -> ReproStep {
    ReproStep {
        step_num,
        action: Action::Click,
        component: StepComponent::Manual {
            component_type: "Button".into(),
            text: Some("Unlisted".into()),
            relative_location: GridCell::ALL[2],
        },
        activity_name: String::new(),
        notes: String::new(),
    }
}

fn replay_fidelity() -> Outcome {
    let (mut replayed, mut rejected) = (0, 0);
    let mut seed = 0;
    while replayed < 120 {
        let mut g = generated(3000 + seed);
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..4 {
            let trace = sample_click_trace(&g.device, &mut rng, 8);
            if trace.is_empty() {
                continue;
            }
            let id = format!("r{replayed}");
            let draft = enter_trace(&g, &trace, &id)?;
            let a = &g.analysis;
            let report = reporting::finalize(&draft, &a.graph, &a.static_model, &id, created())
                .map_err(|e| e.to_string())?;
            let script = reporting::to_script(&report, &a.graph).map_err(|e| format!("{id}: {e}"))?;
            match reporting::replay(&script, &mut g.device) {
                ReplayOutcome::Success => replayed += 1,
                other => return Err(format!("{id}: {other:?}")),
            }

            // the same report with one step entered by hand
            let mut manual = draft.clone();
            let at = rng.gen_range(0..=manual.steps.len());
            manual.steps.insert(at, manual_step(0));
            for (i, s) in manual.steps.iter_mut().enumerate() {
                s.step_num = i as u32 + 1;
            }
            let report = reporting::finalize(&manual, &a.graph, &a.static_model, &id, created())
                .map_err(|e| e.to_string())?;
            if reporting::is_replayable(&report, &a.graph) {
                return Err(format!("{id}: report with a manual step judged replayable"));
            }
            rejected += 1;
        }
    }
    Ok(format!("{replayed}/{replayed} resolved reports replayed; {rejected}/{rejected} manual reports rejected"))
}

fn running_example() -> Outcome {
    let a = analyze(minidoc_path(), &RipConfig::default()).map_err(|e| e.to_string())?;
    let draft = ReportDraft::new("ex", &a.graph, header("example")).map_err(|e| e.to_string())?;
    let offered = suggest_components(&a.graph, &draft.belief, ActionKind::Click);
    let got: BTreeSet<(String, String)> = offered
        .iter()
        .map(|c| (c.descriptor.activity_name.clone(), c.descriptor.resource_id.clone()))
        .collect();
    // every click-capable component declared for Main, read from the layouts
    let model = primer::parse_bundle(minidoc_path()).map_err(|e| e.to_string())?;
    let expected: BTreeSet<(String, String)> = model
        .components
        .iter()
        .filter(|c| c.activity_name == "Main" && c.supported_actions.contains(&ActionKind::Click))
        .map(|c| (c.activity_name.clone(), c.resource_id.clone()))
        .collect();
    if got != expected {
        return Err(format!("offered {got:?}, expected {expected:?}"));
    }
    let ok = offered
        .iter()
        .find(|c| c.descriptor.component_type == "Button" && c.descriptor.text.as_deref() == Some("OK"))
        .ok_or("no OK button offered")?;
    if !ok.label.contains("Middle Center") {
        return Err(format!("OK labelled {:?}", ok.label));
    }
    let labels: Vec<&str> = offered.iter().map(|c| c.label.as_str()).collect();
    Ok(format!("step 1 offers {labels:?}"))
}

fn fixture_reports() -> Vec<BugReport> {
    let mut reports = Vec::new();
    let mut seed = 0;
    while reports.len() < 10 {
        let g = generated(4000 + seed);
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trace = sample_click_trace(&g.device, &mut rng, 5);
        if trace.is_empty() {
            continue;
        }
        let id = format!("{}-{:04}", g.analysis.graph.app_id, reports.len() + 1);
        let mut draft = enter_trace(&g, &trace, &id).unwrap();
        if reports.len() % 3 == 2 {
            let n = draft.steps.len() as u32 + 1;
            draft = record_step(&g.analysis.graph, &draft, manual_step(n)).unwrap();
        }
        draft.steps[0].notes = "Tapped <twice> & waited".into();
        let a = &g.analysis;
        reports.push(reporting::finalize(&draft, &a.graph, &a.static_model, id, created()).unwrap());
    }
    reports
}

fn check_page(report: &BugReport) -> Result<(), String> {
    let page = reporting::render(report, ReportFormat::WebPage);
    let opts = roxmltree::ParsingOptions {
        allow_dtd: true,
        ..Default::default()
    };
    let doc = roxmltree::Document::parse_with_options(&page, opts).map_err(|e| e.to_string())?;
    let has_class = |n: &roxmltree::Node, class: &str| {
        n.attribute("class")
            .is_some_and(|c| c.split_whitespace().any(|x| x == class))
    };
    let sections: Vec<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name("section") && has_class(n, "report-section"))
        .filter_map(|n| n.attribute("id"))
        .collect();
    if sections != ["preliminary", "steps", "gallery"] {
        return Err(format!("{}: sections {sections:?}", report.report_id));
    }
    let items: Vec<roxmltree::Node> = doc.descendants().filter(|n| has_class(n, "step")).collect();
    if items.len() != report.steps.len() {
        return Err(format!("{}: {} step items", report.report_id, items.len()));
    }
    for (item, step) in items.iter().zip(&report.steps) {
        for field in ["step-action", "step-type", "step-location", "step-source", "step-image"] {
            if !item.descendants().any(|n| has_class(&n, field)) {
                return Err(format!("{} step {}: missing {field}", report.report_id, step.step_num));
            }
        }
    }
    let gallery = doc.descendants().filter(|n| has_class(n, "gallery-entry")).count();
    if gallery != report.full_shots.len() {
        return Err(format!("{}: {gallery} gallery entries", report.report_id));
    }
    Ok(())
}

fn report_structure() -> Outcome {
    let reports = fixture_reports();
    for r in &reports {
        check_page(r)?;
        let text = reporting::render(r, ReportFormat::Structured);
        let back = reporting::parse_structured(&text).map_err(|e| e.to_string())?;
        if &back != r {
            return Err(format!("{}: structured round-trip changed the report", r.report_id));
        }
    }
    Ok(format!("{} reports: sections ordered, fields i-v present, round-trip exact", reports.len()))
}

fn coverage_statistic() -> Outcome {
    let store = tempfile::tempdir().unwrap();
    let out = run_cli(store.path(), &["analyze", five_screens_path().to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    if !out.status.success() || stdout != "1/5 activities\n" {
        return Err(format!("exit {:?}, stdout {stdout:?}", out.status.code()));
    }
    Ok("five-screens prints \"1/5 activities\"".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("ripper-oracle-equivalence", ripper_oracle),
        ("analyze-determinism", determinism),
        ("suggestion-soundness", suggestion_soundness),
        ("replay-fidelity", replay_fidelity),
        ("running-example-fixture", running_example),
        ("report-structure", report_structure),
        ("coverage-statistic", coverage_statistic),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
