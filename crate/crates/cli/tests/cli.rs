use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use stepwise_core::reporting::finalize;
use stepwise_core::ripper::RipConfig;
use stepwise_core::screenshot::augmented_in;
use stepwise_core::suggestion::{record_step, Orientation, StepComponent};
use stepwise_core::testkit::minidoc_path;
use stepwise_core::{
    analyze, Action, ComponentKey, EventFlowGraph, GridCell, ReportDraft, ReportHeader, ReproStep,
    StateFingerprint, Store,
};

fn stepwise(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stepwise"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("STEPWISE_STORE")
        .env_remove("STEPWISE_PORT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn minidoc_str() -> String {
    minidoc_path().to_string_lossy().into_owned()
}

#[test]
fn analyze_prints_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let out = stepwise(dir.path(), &["analyze", &minidoc_str()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "2/2 activities\n");
    let app = dir.path().join("apps/minidoc/1.0");
    let graph = fs::read(app.join("graph.efg")).unwrap();
    let model = fs::read(app.join("static.model")).unwrap();

    let again = stepwise(dir.path(), &["analyze", &minidoc_str()]);
    assert!(again.status.success());
    assert_eq!(fs::read(app.join("graph.efg")).unwrap(), graph);
    assert_eq!(fs::read(app.join("static.model")).unwrap(), model);
}

#[test]
fn store_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_stepwise"))
        .args(["analyze", &minidoc_str()])
        .env("STEPWISE_STORE", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("apps/minidoc/1.0/graph.efg").is_file());
}

#[test]
fn malformed_bundle_reports_the_location() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bad");
    fs::create_dir_all(bundle.join("layouts")).unwrap();
    fs::write(bundle.join("manifest.toml"), "app_id = \"bad\"\napp_version = \"1\"\nmain_activity = \"Main\"\n").unwrap();
    fs::write(bundle.join("layouts/main.xml"), "<layout activity=\"Main\">\n  <Button id=\"a\"\n</layout>\n").unwrap();
    let out = stepwise(&dir.path().join("store"), &["analyze", bundle.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).is_empty());
    assert!(stderr(&out).contains("layouts/main.xml:"), "{}", stderr(&out));

    let missing = stepwise(&dir.path().join("store"), &["analyze", "/no/such/bundle"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(stepwise(dir.path(), &["analyze"]).status.code(), Some(2));
    assert_eq!(stepwise(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

fn state_where(g: &EventFlowGraph, activity: &str, window: &str) -> StateFingerprint {
    g.states
        .values()
        .find(|s| s.activity_name == activity && s.window_id == window)
        .unwrap()
        .fingerprint
}

fn resolved(g: &EventFlowGraph, n: u32, state: StateFingerprint, id: &str) -> ReproStep {
    let key = ComponentKey::new(&g.states[&state].activity_name, id, 1);
    let shot = augmented_in(g, &state, &key).unwrap().address();
    ReproStep {
        step_num: n,
        action: Action::Click,
        component: StepComponent::Resolved { key, state, shot },
        activity_name: String::new(),
        notes: String::new(),
    }
}

/// Analyzes minidoc into `store` and saves a replayable report and one with
/// a manual step. Returns their ids.
fn seed_reports(store_dir: &Path) -> (String, String) {
    let store = Store::open(store_dir).unwrap();
    let analysis = analyze(minidoc_path(), &RipConfig::default()).unwrap();
    analysis.save(&store).unwrap();
    let g = &analysis.graph;
    let header = ReportHeader {
        reporter_name: "Dana".into(),
        device: "Tablet".into(),
        orientation: Orientation::Portrait,
        title: "Viewer opens".into(),
        description: String::new(),
    };
    let mut draft = ReportDraft::new("d1", g, header).unwrap();
    draft = record_step(g, &draft, resolved(g, 1, state_where(g, "Main", "w1"), "btn_ok")).unwrap();
    draft = record_step(g, &draft, resolved(g, 2, state_where(g, "Main", "w0"), "btn_open")).unwrap();
    let when = Utc.with_ymd_and_hms(2024, 1, 2, 3, 4, 5).unwrap();
    let good = finalize(&draft, g, &analysis.static_model, store.next_report_id("minidoc").unwrap(), when).unwrap();
    store.save_report(&good).unwrap();

    let manual = ReproStep {
        step_num: 3,
        action: Action::Click,
        component: StepComponent::Manual {
            component_type: "Button".into(),
            text: Some("Zoom".into()),
            relative_location: GridCell::ALL[8],
        },
        activity_name: String::new(),
        notes: String::new(),
    };
    draft = record_step(g, &draft, manual).unwrap();
    let bad = finalize(&draft, g, &analysis.static_model, store.next_report_id("minidoc").unwrap(), when).unwrap();
    store.save_report(&bad).unwrap();
    (good.report_id, bad.report_id)
}

#[test]
fn replay_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (good, manual) = seed_reports(dir.path());
    let ok = stepwise(dir.path(), &["report", "replay", &good]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert_eq!(stdout(&ok), "success\n");

    let rejected = stepwise(dir.path(), &["report", "replay", &manual]);
    assert_eq!(rejected.status.code(), Some(4));
    assert!(stderr(&rejected).contains("entered manually"));

    // same report against a build where Open Document goes nowhere
    let mutated = dir.path().join("mutated");
    copy_dir(&minidoc_path(), &mutated);
    let behavior = fs::read_to_string(mutated.join("behavior.model")).unwrap();
    fs::write(
        mutated.join("behavior.model"),
        behavior.replace("on main click btn_open -> viewer\n", ""),
    )
    .unwrap();
    let diverged = stepwise(dir.path(), &["report", "replay", &good, "--bundle", mutated.to_str().unwrap()]);
    assert_eq!(diverged.status.code(), Some(3));
    assert!(stdout(&diverged).starts_with("divergence step=2 "));

    let missing = stepwise(dir.path(), &["report", "replay", "minidoc-0099"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn render_formats() {
    let dir = tempfile::tempdir().unwrap();
    let (good, _) = seed_reports(dir.path());
    let structured = stepwise(dir.path(), &["report", "render", &good, "--format", "structured"]);
    assert!(structured.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&structured)).unwrap();
    assert_eq!(v["report_id"], good.as_str());

    let out = dir.path().join("r.html");
    let page = stepwise(dir.path(), &["report", "render", &good, "--format", "web-page", "--out", out.to_str().unwrap()]);
    assert!(page.status.success());
    assert!(stdout(&page).is_empty());
    assert_eq!(fs::read_to_string(&out).unwrap().matches("class=\"report-section\"").count(), 3);

    let unknown = stepwise(dir.path(), &["report", "render", "minidoc-0099"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(stderr(&unknown).contains("not found"), "{}", stderr(&unknown));
    let bad_format = stepwise(dir.path(), &["report", "render", &good, "--format", "pdf"]);
    assert_eq!(bad_format.status.code(), Some(1));
}

struct Server {
    child: Child,
    addr: String,
}

impl Server {
    fn start(store: &Path, port: u16) -> Server {
        let mut child = Command::new(env!("CARGO_BIN_EXE_stepwise"))
            .args(["serve", "--port", &port.to_string()])
            .arg("--store")
            .arg(store)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("http://").expect("address line").to_string();
        Server { child, addr }
    }

    fn request(&self, method: &str, path: &str, body: &str) -> (u16, String) {
        let mut s = TcpStream::connect(&self.addr).unwrap();
        write!(
            s,
            "{method} {path} HTTP/1.1\r\nHost: {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            self.addr,
            body.len()
        )
        .unwrap();
        let mut resp = String::new();
        s.read_to_string(&mut resp).unwrap();
        let status = resp.split(' ').nth(1).unwrap().parse().unwrap();
        let body = resp.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
        (status, body)
    }

    fn terminate(mut self) -> std::process::ExitStatus {
        Command::new("kill").args(["-TERM", &self.child.id().to_string()]).status().unwrap();
        let deadline = Instant::now() + Duration::from_secs(10);
        loop {
            if let Some(status) = self.child.try_wait().unwrap() {
                return status;
            }
            assert!(Instant::now() < deadline, "server did not stop");
            std::thread::sleep(Duration::from_millis(20));
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[test]
fn serve_answers_and_stops_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    analyze(minidoc_path(), &RipConfig::default()).unwrap().save(&store).unwrap();
    let server = Server::start(dir.path(), 0);
    let (status, body) = server.request("GET", "/api/apps", "");
    assert_eq!(status, 200);
    assert!(body.contains("minidoc"));

    // keep creating drafts from another thread while the server is told to stop
    let addr = server.addr.clone();
    let create = r#"{"app_id":"minidoc","version":"1.0","reporter_name":"a","device":"b","orientation":"portrait","title":"t","description":""}"#;
    let writer = std::thread::spawn(move || {
        let mut created = 0;
        for _ in 0..500 {
            let Ok(mut s) = TcpStream::connect(&addr) else { break };
            let req = format!(
                "POST /api/reports HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{create}",
                create.len()
            );
            if s.write_all(req.as_bytes()).is_err() {
                break;
            }
            let mut resp = String::new();
            if s.read_to_string(&mut resp).is_err() || !resp.starts_with("HTTP/1.1 201") {
                break;
            }
            created += 1;
        }
        created
    });
    std::thread::sleep(Duration::from_millis(100));
    let status = server.terminate();
    assert!(status.success(), "{status:?}");
    let created = writer.join().unwrap();
    assert!(created > 0);

    let reopened = Store::open(dir.path()).unwrap();
    let mut drafts = 0;
    for entry in fs::read_dir(dir.path().join("drafts")).unwrap() {
        let name = entry.unwrap().file_name().to_string_lossy().into_owned();
        assert!(!name.starts_with(".tmp-"), "leftover temporary file {name}");
        if let Some(id) = name.strip_suffix(".json") {
            reopened.load_draft(id).unwrap();
            drafts += 1;
        }
    }
    assert!(drafts >= created);
}

#[test]
fn busy_port_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let holder = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = holder.local_addr().unwrap().port();
    let out = stepwise(dir.path(), &["serve", "--port", &port.to_string()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cannot listen"));
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dest = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &dest);
        } else {
            fs::copy(entry.path(), dest).unwrap();
        }
    }
}
