//! Job lifecycle: queueing, artifacts, failures, aborts and restarts.

mod support;

use std::time::Duration;

use dem_core::results::artifacts::{HISTORY_FILE, SUMMARY_FILE, VTK_FILE};
use dem_service::jobs::{JobError, JobManager, JobState, STATE_FILE};
use support::*;

const TIMEOUT: Duration = Duration::from_secs(120);

fn manager(root: &std::path::Path) -> JobManager {
    JobManager::open(root, core_fixtures(), fake_gmsh()).unwrap()
}

#[test]
fn job_runs_to_done_with_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let jobs = manager(tmp.path());
    let id = jobs.submit(small_poisson(200)).unwrap();
    let status = jobs.wait(id, TIMEOUT).unwrap();
    assert_eq!(status.state, JobState::Done, "{status:?}");
    assert_eq!(status.progress.epoch + 1, 200);
    let dir = jobs.dir(id).unwrap();
    for f in [HISTORY_FILE, VTK_FILE, SUMMARY_FILE, STATE_FILE] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    assert_eq!(jobs.history(id).unwrap().len(), 200);
}

#[test]
fn bad_mesh_path_fails_the_job() {
    let tmp = tempfile::tempdir().unwrap();
    let jobs = manager(tmp.path());
    let mut c = small_poisson(10);
    c.geometry.msh = Some("does_not_exist.msh".into());
    let id = jobs.submit(c).unwrap();
    let status = jobs.wait(id, TIMEOUT).unwrap();
    assert_eq!(status.state, JobState::Failed);
    let err = status.error.unwrap();
    assert!(err.starts_with("IoError"), "{err}");
    assert!(err.contains("does_not_exist.msh"), "{err}");
}

#[test]
fn running_job_aborts() {
    let tmp = tempfile::tempdir().unwrap();
    let jobs = manager(tmp.path());
    let id = jobs.submit(small_poisson(10_000_000)).unwrap();
    let start = std::time::Instant::now();
    while jobs.status(id).unwrap().progress.epoch == 0 {
        assert!(start.elapsed() < TIMEOUT);
        std::thread::sleep(Duration::from_millis(10));
    }
    assert_eq!(jobs.abort(id).unwrap(), JobState::Running);
    let status = jobs.wait(id, TIMEOUT).unwrap();
    assert_eq!(status.state, JobState::Aborted);
    // a finished job cannot be aborted again
    assert!(matches!(jobs.abort(id), Err(JobError::InvalidTransition { .. })));
    // partial results are still written
    assert!(jobs.dir(id).unwrap().join(HISTORY_FILE).is_file());
}

#[test]
fn queued_job_aborts_without_running() {
    let tmp = tempfile::tempdir().unwrap();
    let jobs = manager(tmp.path());
    let first = jobs.submit(small_poisson(10_000_000)).unwrap();
    let second = jobs.submit(small_poisson(10)).unwrap();
    assert_eq!(jobs.abort(second).unwrap(), JobState::Aborted);
    jobs.abort(first).unwrap();
    assert_eq!(jobs.wait(first, TIMEOUT).unwrap().state, JobState::Aborted);
    let s = jobs.wait(second, TIMEOUT).unwrap();
    assert_eq!(s.state, JobState::Aborted);
    assert_eq!(s.progress.epoch, 0);
}

#[test]
fn finished_jobs_survive_a_restart() {
    let tmp = tempfile::tempdir().unwrap();
    let id = {
        let jobs = manager(tmp.path());
        let id = jobs.submit(small_poisson(50)).unwrap();
        assert_eq!(jobs.wait(id, TIMEOUT).unwrap().state, JobState::Done);
        id
    };
    let reopened = manager(tmp.path());
    let status = reopened.status(id).unwrap();
    assert_eq!(status.state, JobState::Done);
    assert_eq!(reopened.history(id).unwrap().len(), 50);
    assert!(reopened.dir(id).unwrap().join(VTK_FILE).is_file());
}

#[test]
fn interrupted_jobs_are_marked_failed() {
    let tmp = tempfile::tempdir().unwrap();
    let id = uuid_of_stale_job(tmp.path());
    let jobs = manager(tmp.path());
    let status = jobs.status(id).unwrap();
    assert_eq!(status.state, JobState::Failed);
    assert!(status.error.unwrap().contains("interrupted"));
}

/// Writes a job directory whose state says it was still running.
fn uuid_of_stale_job(root: &std::path::Path) -> uuid::Uuid {
    let id = uuid::Uuid::new_v4();
    let dir = root.join(id.to_string());
    std::fs::create_dir_all(&dir).unwrap();
    let state = serde_json::json!({ "id": id, "state": "running", "progress": { "epoch": 12, "loss": 0.5 } });
    std::fs::write(dir.join(STATE_FILE), state.to_string()).unwrap();
    id
}
