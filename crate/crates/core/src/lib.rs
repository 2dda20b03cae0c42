//! Recording, reading and analyzing Paraver traces.
//!
//! * [`model`]: process and resource object models, identity callbacks.
//! * [`tracer`]: the in-process recorder (states, events, communications).
//! * [`sampler`]: time- or counter-driven statistical sampling on top of the tracer.
//! * [`prv`]: `.prv`/`.pcf`/`.row` writer, parser and validator.
//! * [`analysis`]: parallelism, call timelines, connectivity, routine time
//!   fractions and node bandwidth, with CSV/SVG export.
//! * [`synth`]: a deterministic MPI-like workload generator.

pub mod analysis;
pub mod config;
pub mod exec;
pub mod model;
pub mod prv;
pub mod record;
pub mod registry;
pub mod sampler;
pub mod synth;
pub mod tracer;

pub use exec::Execution;
pub use model::{build_model, IdentityProvider, Location, ProcessModel, ResourceModel, ThreadKey};
pub use prv::{parse_bundle, validate_bundle, write_bundle, TraceBundle};
pub use record::{CommRecord, EventRecord, StateRecord, TraceRecord};
pub use registry::EventRegistry;
pub use tracer::Tracer;
