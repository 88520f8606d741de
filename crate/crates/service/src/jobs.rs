//! Background solver jobs. Each job owns a directory under the service
//! root holding `config.toml`, `state.json` and, once finished, the run
//! artifacts. Jobs run one at a time on a worker thread, in submission
//! order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use dem_core::dem::{Progress, TrainControl};
use dem_core::mesh::GmshMesher;
use dem_core::problem::StopReason;
use dem_core::results::artifacts::HISTORY_FILE;
use dem_core::results::{read_history, run_solvers, write_artifacts, RunConfig, RunError};

pub const STATE_FILE: &str = "state.json";
pub const CONFIG_FILE: &str = "config.toml";
/// `state.json` is rewritten at least this often while training.
pub const PERSIST_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
    Aborted,
}

impl JobState {
    pub fn is_finished(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed | JobState::Aborted)
    }

    /// queued -> running -> {done, failed, aborted}; queued -> aborted.
    pub fn can_become(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running)
                | (JobState::Queued, JobState::Aborted)
                | (JobState::Running, JobState::Done | JobState::Failed | JobState::Aborted)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JobProgress {
    pub epoch: usize,
    pub loss: Option<f64>,
}

/// What `state.json` holds and `GET /jobs/{id}` returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: Uuid,
    pub state: JobState,
    pub progress: JobProgress,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_difference: Option<f64>,
}

#[derive(Debug, Error)]
pub enum JobError {
    #[error("unknown job {0}")]
    NotFound(Uuid),
    #[error("job {id} is {state:?}")]
    InvalidTransition { id: Uuid, state: JobState },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

struct Job {
    status: JobStatus,
    dir: PathBuf,
    /// Loss per epoch of the running DEM solve; read from disk afterwards.
    live_history: Vec<f64>,
    abort: Arc<AtomicBool>,
}

struct Inner {
    root: PathBuf,
    base_dir: PathBuf,
    mesher: GmshMesher,
    jobs: Mutex<BTreeMap<Uuid, Job>>,
}

/// Cheap to clone; all clones share the same jobs and worker.
#[derive(Clone)]
pub struct JobManager {
    inner: Arc<Inner>,
    queue: Sender<(Uuid, RunConfig)>,
    _worker: Arc<JoinHandle<()>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> JobError + '_ {
    move |source| JobError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn persist(dir: &Path, status: &JobStatus) {
    let path = dir.join(STATE_FILE);
    let tmp = dir.join(format!("{STATE_FILE}.tmp"));
    let text = serde_json::to_string_pretty(status).expect("job status serializes");
    if let Err(e) = std::fs::write(&tmp, text).and_then(|_| std::fs::rename(&tmp, &path)) {
        log::error!("cannot write {}: {e}", path.display());
    }
}

impl Inner {
    fn update(&self, id: Uuid, f: impl FnOnce(&mut Job)) {
        let mut jobs = self.jobs.lock().unwrap();
        if let Some(job) = jobs.get_mut(&id) {
            f(job);
        }
    }

    /// Moves a job to `next` if the state machine allows it and persists.
    fn transition(&self, id: Uuid, next: JobState, error: Option<String>) -> bool {
        let mut jobs = self.jobs.lock().unwrap();
        let Some(job) = jobs.get_mut(&id) else { return false };
        if !job.status.state.can_become(next) {
            return false;
        }
        job.status.state = next;
        if error.is_some() {
            job.status.error = error;
        }
        persist(&job.dir, &job.status);
        true
    }

    fn run(&self, id: Uuid, config: RunConfig) {
        let (dir, abort) = {
            let jobs = self.jobs.lock().unwrap();
            match jobs.get(&id) {
                Some(j) => (j.dir.clone(), j.abort.clone()),
                None => return,
            }
        };
        if !self.transition(id, JobState::Running, None) {
            return; // aborted while queued
        }
        let progress = |p: Progress| {
            let mut jobs = self.jobs.lock().unwrap();
            if let Some(job) = jobs.get_mut(&id) {
                job.live_history.push(p.loss);
                if p.epoch >= job.status.progress.epoch || job.status.progress.loss.is_none() {
                    job.status.progress = JobProgress {
                        epoch: p.epoch,
                        loss: Some(p.loss),
                    };
                }
                if p.epoch % PERSIST_EVERY == 0 {
                    persist(&job.dir, &job.status);
                }
            }
        };
        let result = (|| -> Result<(bool, Option<f64>), RunError> {
            let problem = config.build_problem(&self.base_dir, &self.mesher)?;
            let control = TrainControl {
                abort: Some(&abort),
                progress: Some(&progress),
                progress_every: 1,
                initial: None,
            };
            let outcome = run_solvers(&problem, config.training.solver, &control)?;
            write_artifacts(&dir, &problem.mesh, &outcome)?;
            let aborted = outcome.dem.as_ref().is_some_and(|d| d.stop_reason == StopReason::UserAbort);
            Ok((aborted, outcome.difference()))
        })();
        match result {
            Ok((aborted, difference)) => {
                self.update(id, |j| {
                    j.status.relative_difference = difference;
                    j.live_history.clear();
                });
                let next = if aborted { JobState::Aborted } else { JobState::Done };
                self.transition(id, next, None);
            }
            Err(e) => {
                let kind = match &e {
                    RunError::Io { .. } => "IoError",
                    RunError::Schema(_) => "SchemaError",
                    RunError::Mesh(_) => "MeshError",
                    RunError::Mesher(_) => "MesherError",
                    RunError::Solve(_) => "SolveError",
                    RunError::Bundle(_) | RunError::History(_) => "OutputError",
                };
                self.transition(id, JobState::Failed, Some(format!("{kind}: {e}")));
            }
        }
    }
}

impl JobManager {
    /// Jobs live under `root`; relative mesh paths in configs resolve
    /// against `base_dir`. Existing job directories are loaded, and jobs
    /// that were queued or running when the previous process stopped are
    /// marked failed.
    pub fn open(root: impl Into<PathBuf>, base_dir: impl Into<PathBuf>, mesher: GmshMesher) -> Result<Self, JobError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(io_err(&root))?;
        let mut jobs = BTreeMap::new();
        for entry in std::fs::read_dir(&root).map_err(io_err(&root))? {
            let dir = entry.map_err(io_err(&root))?.path();
            let Ok(text) = std::fs::read_to_string(dir.join(STATE_FILE)) else { continue };
            let Ok(mut status) = serde_json::from_str::<JobStatus>(&text) else {
                log::warn!("ignoring unreadable {}", dir.join(STATE_FILE).display());
                continue;
            };
            if !status.state.is_finished() {
                status.state = JobState::Failed;
                status.error = Some("interrupted: the service stopped before the job finished".into());
                persist(&dir, &status);
            }
            jobs.insert(
                status.id,
                Job {
                    status,
                    dir,
                    live_history: Vec::new(),
                    abort: Arc::default(),
                },
            );
        }
        let inner = Arc::new(Inner {
            root,
            base_dir: base_dir.into(),
            mesher,
            jobs: Mutex::new(jobs),
        });
        let (queue, rx) = channel::<(Uuid, RunConfig)>();
        let worker_inner = inner.clone();
        let worker = std::thread::Builder::new()
            .name("dem-jobs".into())
            .spawn(move || {
                for (id, config) in rx {
                    worker_inner.run(id, config);
                }
            })
            .expect("spawn job worker");
        Ok(Self {
            inner,
            queue,
            _worker: Arc::new(worker),
        })
    }

    pub fn root(&self) -> &Path {
        &self.inner.root
    }

    /// Validates, writes the job directory and queues the job.
    pub fn submit(&self, config: RunConfig) -> Result<Uuid, JobError> {
        let id = Uuid::new_v4();
        let dir = self.inner.root.join(id.to_string());
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(CONFIG_FILE);
        std::fs::write(&path, config.to_toml_string()).map_err(io_err(&path))?;
        let status = JobStatus {
            id,
            state: JobState::Queued,
            progress: JobProgress::default(),
            error: None,
            relative_difference: None,
        };
        persist(&dir, &status);
        self.inner.jobs.lock().unwrap().insert(
            id,
            Job {
                status,
                dir,
                live_history: Vec::new(),
                abort: Arc::default(),
            },
        );
        self.queue.send((id, config)).expect("job worker alive");
        Ok(id)
    }

    pub fn status(&self, id: Uuid) -> Result<JobStatus, JobError> {
        self.inner
            .jobs
            .lock()
            .unwrap()
            .get(&id)
            .map(|j| j.status.clone())
            .ok_or(JobError::NotFound(id))
    }

    pub fn list(&self) -> Vec<JobStatus> {
        self.inner.jobs.lock().unwrap().values().map(|j| j.status.clone()).collect()
    }

    pub fn dir(&self, id: Uuid) -> Result<PathBuf, JobError> {
        self.inner
            .jobs
            .lock()
            .unwrap()
            .get(&id)
            .map(|j| j.dir.clone())
            .ok_or(JobError::NotFound(id))
    }

    /// Loss per epoch so far: live while running, from disk afterwards.
    pub fn history(&self, id: Uuid) -> Result<Vec<f64>, JobError> {
        let (live, dir) = {
            let jobs = self.inner.jobs.lock().unwrap();
            let job = jobs.get(&id).ok_or(JobError::NotFound(id))?;
            (job.live_history.clone(), job.dir.clone())
        };
        if !live.is_empty() {
            return Ok(live);
        }
        let path = dir.join(HISTORY_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        read_history(&path).map_err(|e| JobError::Io {
            path,
            source: std::io::Error::other(e.to_string()),
        })
    }

    /// Queued jobs abort at once; running ones at the next epoch boundary.
    pub fn abort(&self, id: Uuid) -> Result<JobState, JobError> {
        let state = self.status(id)?.state;
        match state {
            JobState::Queued => {
                if self.inner.transition(id, JobState::Aborted, None) {
                    return Ok(JobState::Aborted);
                }
                // picked up by the worker in the meantime
                self.abort(id)
            }
            JobState::Running => {
                let jobs = self.inner.jobs.lock().unwrap();
                jobs[&id].abort.store(true, Ordering::Relaxed);
                Ok(JobState::Running)
            }
            state => Err(JobError::InvalidTransition { id, state }),
        }
    }

    /// Polls until the job finishes or `timeout` passes.
    pub fn wait(&self, id: Uuid, timeout: std::time::Duration) -> Result<JobStatus, JobError> {
        let start = std::time::Instant::now();
        loop {
            let s = self.status(id)?;
            if s.state.is_finished() || start.elapsed() > timeout {
                return Ok(s);
            }
            std::thread::sleep(std::time::Duration::from_millis(20));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_machine() {
        use JobState::*;
        assert!(Queued.can_become(Running));
        assert!(Queued.can_become(Aborted));
        assert!(!Queued.can_become(Done));
        assert!(Running.can_become(Failed));
        for s in [Done, Failed, Aborted] {
            for t in [Queued, Running, Done, Failed, Aborted] {
                assert!(!s.can_become(t));
            }
        }
        assert!(!Running.can_become(Queued));
    }
}
