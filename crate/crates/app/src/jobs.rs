//! Asynchronous training jobs run by a fixed pool of worker threads.

use std::collections::HashMap;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread;

use novapipe_core::config::{may_train, preflight_check, ConfigError, PreflightIssue, TrainingConfig};
use novapipe_core::train::one_click_train;
use novapipe_core::{Dataset, TrainingProgress};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{Store, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn can_become(self, next: JobState) -> bool {
        use JobState::*;
        matches!((self, next), (Queued, Running) | (Running, Done) | (Running, Failed))
    }

    /// Whether a poller that saw `earlier` may see `self` next: states
    /// can be skipped between polls but never revisited.
    pub fn reachable_from(self, earlier: JobState) -> bool {
        use JobState::*;
        self == earlier || earlier.can_become(self) || (earlier == Queued && matches!(self, Done | Failed))
    }

    pub fn is_finished(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub state: JobState,
    pub progress: TrainingProgress,
    /// Model id once the job is done.
    pub result: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Error)]
pub enum JobError {
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("unknown job {0:?}")]
    UnknownJob(String),
    #[error("pre-flight checks failed")]
    PreflightFailed(Vec<PreflightIssue>),
    #[error(transparent)]
    InvalidConfig(#[from] ConfigError),
    #[error("config names dataset {config:?} but the request names {request:?}")]
    DatasetMismatch { config: String, request: String },
    #[error(transparent)]
    Store(StoreError),
}

/// Work done for one job: trains on the table and returns the stored
/// model id, or a message for the user.
pub type Runner =
    Arc<dyn Fn(&Dataset, &TrainingConfig, &mut dyn FnMut(TrainingProgress)) -> Result<String, String> + Send + Sync>;

/// Runs the full pipeline and saves the model in `store`.
pub fn training_runner(store: Arc<Store>) -> Runner {
    Arc::new(move |d, cfg, progress| {
        let outcome = one_click_train(d, cfg, progress).map_err(|e| e.to_string())?;
        store.put_model(&outcome).map_err(|e| e.to_string())
    })
}

struct Task {
    job_id: String,
    dataset: Arc<Dataset>,
    config: TrainingConfig,
}

struct Shared {
    jobs: Mutex<HashMap<String, Job>>,
    next_id: Mutex<u64>,
}

impl Shared {
    fn update(&self, id: &str, f: impl FnOnce(&mut Job)) {
        let mut jobs = self.jobs.lock().expect("job table");
        if let Some(job) = jobs.get_mut(id) {
            let before = job.state;
            f(job);
            debug_assert!(before == job.state || before.can_become(job.state));
        }
    }
}

/// Job table plus the channel feeding the worker pool. Cloning shares the
/// same queue.
#[derive(Clone)]
pub struct JobQueue {
    shared: Arc<Shared>,
    store: Arc<Store>,
    tx: Sender<Task>,
}

impl JobQueue {
    /// Starts `workers` threads (at least one) that run `runner`.
    pub fn start(store: Arc<Store>, workers: usize, runner: Runner) -> Self {
        let (tx, rx) = mpsc::channel::<Task>();
        let rx = Arc::new(Mutex::new(rx));
        let shared = Arc::new(Shared {
            jobs: Mutex::default(),
            next_id: Mutex::new(0),
        });
        for n in 0..workers.max(1) {
            let (rx, shared, runner) = (rx.clone(), shared.clone(), runner.clone());
            thread::Builder::new()
                .name(format!("trainer-{n}"))
                .spawn(move || worker(&rx, &shared, &runner))
                .expect("spawn training worker");
        }
        JobQueue { shared, store, tx }
    }

    /// Pre-flight runs here, synchronously; only clean configs are queued.
    pub fn submit(&self, dataset_id: &str, mut config: TrainingConfig) -> Result<String, JobError> {
        let dataset = match self.store.dataset(dataset_id) {
            Ok(d) => d,
            Err(StoreError::UnknownDataset(id)) => return Err(JobError::UnknownDataset(id)),
            Err(e) => return Err(JobError::Store(e)),
        };
        if config.dataset_id.is_empty() {
            config.dataset_id = dataset_id.to_string();
        } else if config.dataset_id != dataset_id {
            return Err(JobError::DatasetMismatch {
                config: config.dataset_id,
                request: dataset_id.to_string(),
            });
        }
        let issues = preflight_check(&dataset, &config);
        if !may_train(&issues) {
            return Err(JobError::PreflightFailed(issues));
        }
        config.validate()?;

        let job_id = {
            let mut n = self.shared.next_id.lock().expect("job counter");
            *n += 1;
            format!("job-{:06}", *n)
        };
        let job = Job {
            job_id: job_id.clone(),
            state: JobState::Queued,
            progress: TrainingProgress::queued(),
            result: None,
            error: None,
        };
        self.shared.jobs.lock().expect("job table").insert(job_id.clone(), job);
        self.tx
            .send(Task {
                job_id: job_id.clone(),
                dataset,
                config,
            })
            .expect("training workers are alive");
        Ok(job_id)
    }

    /// Consistent snapshot of one job.
    pub fn poll(&self, job_id: &str) -> Result<Job, JobError> {
        self.shared
            .jobs
            .lock()
            .expect("job table")
            .get(job_id)
            .cloned()
            .ok_or_else(|| JobError::UnknownJob(job_id.to_string()))
    }
}

fn worker(rx: &Mutex<Receiver<Task>>, shared: &Shared, runner: &Runner) {
    loop {
        // hold the receiver lock only while waiting, not while training
        let task = match rx.lock().expect("job channel").recv() {
            Ok(t) => t,
            Err(_) => return,
        };
        shared.update(&task.job_id, |j| j.state = JobState::Running);
        let id = task.job_id.as_str();
        let mut on_progress = |p: TrainingProgress| {
            shared.update(id, |j| {
                if p.fraction_done >= j.progress.fraction_done {
                    j.progress = p;
                }
            })
        };
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            runner(&task.dataset, &task.config, &mut on_progress)
        }))
        .unwrap_or_else(|_| Err("training crashed unexpectedly".to_string()));
        shared.update(id, |j| match result {
            Ok(model_id) => {
                j.state = JobState::Done;
                j.result = Some(model_id);
            }
            Err(msg) => {
                j.state = JobState::Failed;
                j.error = Some(msg);
            }
        });
    }
}
