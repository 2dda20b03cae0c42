//! Paraver object models.
//!
//! Two orthogonal taxonomies describe where a record happened:
//!
//! * the process model (WORKLOAD → APPLICATION → TASK → THREAD), the virtual
//!   resources a programming model exposes (MPI ranks are tasks, OS threads
//!   are threads);
//! * the resource model (SYSTEM → NODE → CPU), the physical machine.
//!
//! Every task is pinned to one node. Threads are not pinned to CPUs: a
//! [`Location`] carries a CPU hint that may change between records of the same
//! thread, with `0` meaning unknown.
//!
//! All identifiers are 1-based and contiguous within their parent.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::ThreadId;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("identity out of range: {what} {id} not in 1..={max}")]
    IdentityRange { what: &'static str, id: u32, max: u32 },
    #[error("identity functions cannot be replaced after the tracer has been initialized")]
    Lifecycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Task {
    pub threads: u32,
    /// 1-based node index in the paired [`ResourceModel`].
    pub node: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Application {
    pub tasks: Vec<Task>,
}

/// The virtual side of the object model. The whole forest is the workload.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProcessModel {
    pub applications: Vec<Application>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node {
    pub cpus: u32,
}

/// The physical side of the object model. The whole is the system.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ResourceModel {
    pub nodes: Vec<Node>,
}

/// Coordinates of a record on both object models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Location {
    /// 0 means not pinned / unknown.
    pub cpu: u32,
    pub appl: u32,
    pub task: u32,
    pub thread: u32,
}

impl Location {
    pub const fn new(cpu: u32, appl: u32, task: u32, thread: u32) -> Self {
        Location {
            cpu,
            appl,
            task,
            thread,
        }
    }

    /// The process-model part of the location, ignoring the CPU hint.
    pub fn key(&self) -> ThreadKey {
        ThreadKey {
            appl: self.appl,
            task: self.task,
            thread: self.thread,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}",
            self.cpu, self.appl, self.task, self.thread
        )
    }
}

/// A thread identified by its process-model path only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ThreadKey {
    pub appl: u32,
    pub task: u32,
    pub thread: u32,
}

impl ThreadKey {
    pub fn at_cpu(self, cpu: u32) -> Location {
        Location::new(cpu, self.appl, self.task, self.thread)
    }
}

impl fmt::Display for ThreadKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.appl, self.task, self.thread)
    }
}

impl ProcessModel {
    /// One application with `n_tasks` tasks of `threads` threads each, all on node 1.
    pub fn single_node(n_tasks: u32, threads: u32) -> Self {
        ProcessModel {
            applications: vec![Application {
                tasks: (0..n_tasks).map(|_| Task { threads, node: 1 }).collect(),
            }],
        }
    }

    pub fn task_count(&self) -> usize {
        self.applications.iter().map(|a| a.tasks.len()).sum()
    }

    pub fn thread_count(&self) -> usize {
        self.applications
            .iter()
            .flat_map(|a| a.tasks.iter())
            .map(|t| t.threads as usize)
            .sum()
    }

    pub fn task(&self, appl: u32, task: u32) -> Option<&Task> {
        let a = self.applications.get(appl.checked_sub(1)? as usize)?;
        a.tasks.get(task.checked_sub(1)? as usize)
    }

    pub fn contains(&self, key: ThreadKey) -> bool {
        self.task(key.appl, key.task)
            .is_some_and(|t| key.thread >= 1 && key.thread <= t.threads)
    }

    /// All threads in Paraver row order (application, task, thread).
    pub fn threads(&self) -> impl Iterator<Item = ThreadKey> + '_ {
        self.applications.iter().enumerate().flat_map(|(ai, a)| {
            a.tasks.iter().enumerate().flat_map(move |(ti, t)| {
                (1..=t.threads).map(move |th| ThreadKey {
                    appl: ai as u32 + 1,
                    task: ti as u32 + 1,
                    thread: th,
                })
            })
        })
    }

    /// All tasks as (appl, task) pairs in row order.
    pub fn tasks(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.applications
            .iter()
            .enumerate()
            .flat_map(|(ai, a)| (1..=a.tasks.len() as u32).map(move |t| (ai as u32 + 1, t)))
    }

    /// Position of a task in row order, 0-based.
    pub fn task_index(&self, appl: u32, task: u32) -> Option<usize> {
        self.task(appl, task)?;
        let before: usize = self.applications[..appl as usize - 1]
            .iter()
            .map(|a| a.tasks.len())
            .sum();
        Some(before + task as usize - 1)
    }

    pub fn validate(&self, resources: &ResourceModel) -> Result<(), ModelError> {
        if self.applications.is_empty() {
            return Err(ModelError::InvalidModel("no applications".into()));
        }
        for (ai, app) in self.applications.iter().enumerate() {
            if app.tasks.is_empty() {
                return Err(ModelError::InvalidModel(format!(
                    "application {} has no tasks",
                    ai + 1
                )));
            }
            for (ti, task) in app.tasks.iter().enumerate() {
                if task.threads == 0 {
                    return Err(ModelError::InvalidModel(format!(
                        "task {}.{} has no threads",
                        ai + 1,
                        ti + 1
                    )));
                }
                if task.node == 0 || task.node as usize > resources.nodes.len() {
                    return Err(ModelError::InvalidModel(format!(
                        "task {}.{} references node {} but the system has {} nodes",
                        ai + 1,
                        ti + 1,
                        task.node,
                        resources.nodes.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

impl ResourceModel {
    pub fn single_node(cpus: u32) -> Self {
        ResourceModel {
            nodes: vec![Node { cpus }],
        }
    }

    pub fn total_cpus(&self) -> u32 {
        self.nodes.iter().map(|n| n.cpus).sum()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.nodes.is_empty() {
            return Err(ModelError::InvalidModel("no nodes".into()));
        }
        if let Some(i) = self.nodes.iter().position(|n| n.cpus == 0) {
            return Err(ModelError::InvalidModel(format!("node {} has no cpus", i + 1)));
        }
        Ok(())
    }
}

/// Builds and validates both models.
///
/// `threads_per_task` and `task_nodes` are indexed by task in row order, that
/// is, the tasks of application 1 followed by those of application 2 and so on.
pub fn build_model(
    tasks_per_application: &[u32],
    threads_per_task: &[u32],
    task_nodes: &[u32],
    cpus_per_node: &[u32],
) -> Result<(ProcessModel, ResourceModel), ModelError> {
    let resources = ResourceModel {
        nodes: cpus_per_node.iter().map(|&cpus| Node { cpus }).collect(),
    };
    resources.validate()?;

    let total: usize = tasks_per_application.iter().map(|&n| n as usize).sum();
    if threads_per_task.len() != total {
        return Err(ModelError::InvalidModel(format!(
            "{} thread counts given for {} tasks",
            threads_per_task.len(),
            total
        )));
    }
    if task_nodes.len() != total {
        return Err(ModelError::InvalidModel(format!(
            "{} node assignments given for {} tasks",
            task_nodes.len(),
            total
        )));
    }

    let mut next = 0;
    let applications = tasks_per_application
        .iter()
        .map(|&n| {
            let tasks = (next..next + n as usize)
                .map(|i| Task {
                    threads: threads_per_task[i],
                    node: task_nodes[i],
                })
                .collect();
            next += n as usize;
            Application { tasks }
        })
        .collect();
    let process = ProcessModel { applications };
    process.validate(&resources)?;
    Ok((process, resources))
}

pub type IdFn = Arc<dyn Fn() -> u32 + Send + Sync>;

/// Callbacks that locate the calling execution context in the process model.
///
/// Callbacks may be replaced only until a tracer is initialized with this
/// provider (or any clone of it).
#[derive(Clone)]
pub struct IdentityProvider {
    appl: u32,
    task_id: IdFn,
    num_tasks: IdFn,
    thread_id: IdFn,
    num_threads: IdFn,
    cpu: IdFn,
    bound: Arc<AtomicBool>,
}

impl fmt::Debug for IdentityProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IdentityProvider")
            .field("appl", &self.appl)
            .field("bound", &self.is_bound())
            .finish_non_exhaustive()
    }
}

impl Default for IdentityProvider {
    /// Task 1 of application 1; OS threads numbered 1, 2, ... in order of
    /// first use.
    fn default() -> Self {
        let seen: Arc<Mutex<HashMap<ThreadId, u32>>> = Arc::default();
        let thread_id: IdFn = Arc::new(move || {
            let mut seen = seen.lock().unwrap();
            let next = seen.len() as u32 + 1;
            *seen.entry(std::thread::current().id()).or_insert(next)
        });
        IdentityProvider {
            appl: 1,
            task_id: Arc::new(|| 1),
            num_tasks: Arc::new(|| 1),
            thread_id,
            num_threads: Arc::new(|| u32::MAX),
            cpu: Arc::new(|| 0),
            bound: Arc::default(),
        }
    }
}

impl IdentityProvider {
    /// Worker `worker` of `workers` maps to task `worker`, the analog of
    /// initializing a distributed worker pool where every worker is a task.
    pub fn distributed(worker: u32, workers: u32) -> Self {
        IdentityProvider::default()
            .set_taskid_function(move || worker)
            .and_then(|p| p.set_numtasks_function(move || workers))
            .expect("fresh provider is unbound")
    }

    fn check_unbound(&self) -> Result<(), ModelError> {
        if self.is_bound() {
            Err(ModelError::Lifecycle)
        } else {
            Ok(())
        }
    }

    pub fn set_taskid_function(
        mut self,
        f: impl Fn() -> u32 + Send + Sync + 'static,
    ) -> Result<Self, ModelError> {
        self.check_unbound()?;
        self.task_id = Arc::new(f);
        Ok(self)
    }

    pub fn set_numtasks_function(
        mut self,
        f: impl Fn() -> u32 + Send + Sync + 'static,
    ) -> Result<Self, ModelError> {
        self.check_unbound()?;
        self.num_tasks = Arc::new(f);
        Ok(self)
    }

    pub fn set_threadid_function(
        mut self,
        f: impl Fn() -> u32 + Send + Sync + 'static,
    ) -> Result<Self, ModelError> {
        self.check_unbound()?;
        self.thread_id = Arc::new(f);
        Ok(self)
    }

    pub fn set_numthreads_function(
        mut self,
        f: impl Fn() -> u32 + Send + Sync + 'static,
    ) -> Result<Self, ModelError> {
        self.check_unbound()?;
        self.num_threads = Arc::new(f);
        Ok(self)
    }

    /// Source of the CPU hint; the default reports 0 (unknown).
    pub fn set_cpu_function(
        mut self,
        f: impl Fn() -> u32 + Send + Sync + 'static,
    ) -> Result<Self, ModelError> {
        self.check_unbound()?;
        self.cpu = Arc::new(f);
        Ok(self)
    }

    pub fn with_application(mut self, appl: u32) -> Result<Self, ModelError> {
        self.check_unbound()?;
        self.appl = appl;
        Ok(self)
    }

    pub fn is_bound(&self) -> bool {
        self.bound.load(Ordering::Acquire)
    }

    /// Marks the provider (and all its clones) as owned by a running tracer.
    pub(crate) fn bind(&self) {
        self.bound.store(true, Ordering::Release);
    }

    /// Resolves the calling context to a location inside `model`.
    pub fn resolve_location(
        &self,
        model: &ProcessModel,
        resources: &ResourceModel,
    ) -> Result<Location, ModelError> {
        let appl = self.appl;
        let napps = model.applications.len() as u32;
        if appl == 0 || appl > napps {
            return Err(ModelError::IdentityRange {
                what: "application",
                id: appl,
                max: napps,
            });
        }
        let app = &model.applications[appl as usize - 1];

        let task = (self.task_id)();
        let max_tasks = (self.num_tasks)().min(app.tasks.len() as u32);
        if task == 0 || task > max_tasks {
            return Err(ModelError::IdentityRange {
                what: "task",
                id: task,
                max: max_tasks,
            });
        }

        let thread = (self.thread_id)();
        let max_threads = (self.num_threads)().min(app.tasks[task as usize - 1].threads);
        if thread == 0 || thread > max_threads {
            return Err(ModelError::IdentityRange {
                what: "thread",
                id: thread,
                max: max_threads,
            });
        }

        let cpu = (self.cpu)();
        let cpus = resources.total_cpus();
        if cpu > cpus {
            return Err(ModelError::IdentityRange {
                what: "cpu",
                id: cpu,
                max: cpus,
            });
        }
        Ok(Location {
            cpu,
            appl,
            task,
            thread,
        })
    }
}
