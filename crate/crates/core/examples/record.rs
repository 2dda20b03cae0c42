//! Records a tiny trace with the wall clock and writes `trace.{prv,pcf,row}`.

use prvkit_core::tracer::{MonotonicClock, Tracer};
use prvkit_core::{write_bundle, IdentityProvider, ProcessModel, ResourceModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tracer = Tracer::new(
        ProcessModel::single_node(1, 1),
        ResourceModel::single_node(1),
        IdentityProvider::default(),
        Default::default(),
        MonotonicClock::new(),
    )?;
    tracer.init()?;
    tracer.register(84210, "Vector length", &[])?;
    {
        let _scope = tracer.user_function(1);
        tracer.emit(84210, 4096)?;
    }
    let bundle = tracer.finish()?;
    write_bundle(&bundle, "trace")?;
    println!("{} records", bundle.records.len());
    Ok(())
}
