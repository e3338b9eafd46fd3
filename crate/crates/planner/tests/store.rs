use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use planner::store::{RunKind, RunRequest, RunStatus, RunStore, MANIFEST};
use planner::AppError;
use serde_json::json;

fn request(seed: u64) -> RunRequest {
    RunRequest::new(RunKind::Simulate, json!({ "b": 2, "a": [1, 2] }), seed).input("flows", "abc".into())
}

fn write_two(store: &RunStore, req: RunRequest, calls: &AtomicUsize) -> planner::Result<planner::store::Outcome> {
    store.execute(req, false, |w| {
        calls.fetch_add(1, Ordering::SeqCst);
        w.write("b.txt", b"second")?;
        w.write("nested/a.txt", b"first")?;
        w.write("b.txt", b"second")?;
        Ok(())
    })
}

#[test]
fn run_id_is_a_content_hash() {
    let a = request(1);
    assert_eq!(a.id(), request(1).id());
    assert_eq!(a.id().len(), 64);
    assert_ne!(a.id(), request(2).id());
    assert_ne!(a.id(), request(1).input("flows", "abd".into()).id());
    let reordered = RunRequest::new(RunKind::Simulate, json!({ "a": [1, 2], "b": 2 }), 1).input("flows", "abc".into());
    assert_eq!(a.id(), reordered.id());
    let other_kind = RunRequest { kind: RunKind::Forecast, ..request(1) };
    assert_ne!(a.id(), other_kind.id());
}

#[test]
fn identical_inputs_hit_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let calls = AtomicUsize::new(0);
    let first = write_two(&store, request(1), &calls).unwrap();
    assert!(!first.cached);
    assert_eq!(first.record.status, RunStatus::Done);
    let second = write_two(&store, request(1), &calls).unwrap();
    assert!(second.cached);
    assert_eq!(calls.load(Ordering::SeqCst), 1);
    assert_eq!(first.record, second.record);
    let forced = store.execute(request(1), true, |w| {
        calls.fetch_add(1, Ordering::SeqCst);
        w.write("b.txt", b"second").map(|_| ())
    });
    assert!(!forced.unwrap().cached);
    assert_eq!(calls.load(Ordering::SeqCst), 2);
}

#[test]
fn manifest_lists_each_artifact_once() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let out = write_two(&store, request(3), &AtomicUsize::new(0)).unwrap();
    let names: Vec<&str> = out.record.outputs.iter().map(|a| a.path.as_str()).collect();
    assert_eq!(names, ["b.txt", "nested/a.txt"]);
    assert_eq!(out.record.outputs[1].bytes, 5);
    let on_disk = store.load(&out.record.id).unwrap();
    assert_eq!(on_disk, out.record);
    assert!(store.run_dir(&out.record.id).join(MANIFEST).exists());
}

#[test]
fn tampered_output_is_a_corruption_error() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let out = write_two(&store, request(4), &AtomicUsize::new(0)).unwrap();
    let id = out.record.id.clone();
    std::fs::write(store.run_dir(&id).join("nested/a.txt"), b"First").unwrap();
    assert!(matches!(store.load(&id), Err(AppError::Corrupt { .. })));
    assert!(matches!(store.read_artifact(&out.record, "nested/a.txt"), Err(AppError::Corrupt { .. })));
    let again = write_two(&store, request(4), &AtomicUsize::new(0));
    assert!(matches!(again, Err(AppError::Corrupt { .. })));
    std::fs::remove_file(store.run_dir(&id).join("b.txt")).unwrap();
    let err = store.load(&id).unwrap_err();
    assert_eq!(err.code(), "corrupt_run");
}

#[test]
fn failed_runs_are_recorded_and_retried() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let err = store
        .execute(request(5), false, |_| Err(AppError::invalid("x", "boom")))
        .unwrap_err();
    assert_eq!(err.code(), "validation");
    let rec = store.load(&request(5).id()).unwrap();
    assert_eq!(rec.status, RunStatus::Failed);
    assert!(rec.error.unwrap().contains("boom"));
    let retry = write_two(&store, request(5), &AtomicUsize::new(0)).unwrap();
    assert!(!retry.cached);
    assert_eq!(retry.record.status, RunStatus::Done);
}

#[test]
fn unknown_ids_are_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    assert!(matches!(store.load(&"0".repeat(64)), Err(AppError::NotFound(_))));
    assert!(matches!(store.load("../etc"), Err(AppError::NotFound(_))));
}

#[test]
fn concurrent_writers_compute_once() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(RunStore::open(dir.path()).unwrap());
    let calls = Arc::new(AtomicUsize::new(0));
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let store = store.clone();
            let calls = calls.clone();
            std::thread::spawn(move || write_two(&store, request(6), &calls).unwrap())
        })
        .collect();
    let outs: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(calls.load(Ordering::SeqCst), 1);
    assert_eq!(outs.iter().filter(|o| !o.cached).count(), 1);
    assert!(outs.iter().all(|o| o.record.id == outs[0].record.id));
}

#[test]
fn root_resolution_order() {
    use std::path::{Path, PathBuf};
    let flag = Path::new("/tmp/flag-root");
    assert_eq!(RunStore::resolve_root(Some(flag)), flag);
    // the only test in this binary that touches the variable
    std::env::set_var(planner::store::RUN_DIR_ENV, "/tmp/env-root");
    assert_eq!(RunStore::resolve_root(None), PathBuf::from("/tmp/env-root"));
    assert_eq!(RunStore::resolve_root(Some(flag)), flag);
    std::env::remove_var(planner::store::RUN_DIR_ENV);
    assert_eq!(RunStore::resolve_root(None), PathBuf::from("runs"));
}
