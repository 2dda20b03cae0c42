use std::io::{self, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};

use prvkit_core::config::TracerConfig;
use prvkit_core::prv::{parse_bundle, write_bundle, write_pcf, write_prv, write_row, FormatError};
use prvkit_core::sampler::{SamplerConfig, SamplingMode};
use prvkit_core::synth::{generate_with_config, SyntheticSpec, Topology};
use prvkit_core::validate_bundle;

use crate::{analyze, DemoArgs, DumpArgs, TopologyArg};

fn sampler_config(args: &DemoArgs, file: Option<SamplerConfig>) -> Option<SamplerConfig> {
    let base = file.unwrap_or_default();
    if let Some(period) = args.sample_period {
        return Some(SamplerConfig {
            mode: SamplingMode::Time,
            period_ns: period,
            jitter_fraction: args.sample_jitter.unwrap_or(base.jitter_fraction),
            ..base
        });
    }
    if let Some(threshold) = args.sample_counter_threshold {
        return Some(SamplerConfig {
            mode: SamplingMode::Counter,
            counter_threshold: threshold,
            ..base
        });
    }
    None
}

pub fn demo(args: &DemoArgs) -> Result<ExitCode> {
    let mut config = TracerConfig::from_env()?;
    let file_sampler = config.sampler.take();
    let sampler = sampler_config(args, file_sampler.clone()).or(file_sampler);
    let spec = SyntheticSpec {
        n_tasks: args.tasks,
        n_iterations: args.iterations,
        topology: match args.topology {
            TopologyArg::Ring => Topology::Ring,
            TopologyArg::Torus2d => Topology::Torus2d,
        },
        seed: args.seed,
        sampler,
        ..Default::default()
    };
    let bundle = generate_with_config(&spec, config)?;
    write_bundle(&bundle, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {}.{{prv,pcf,row}}: {} tasks, {} records, {:.6} s",
        args.out.display(),
        spec.n_tasks,
        bundle.records.len(),
        bundle.total_time() as f64 / 1e9
    );
    if args.full_report {
        analyze::full_report(&args.out, args.bin, spec.link_bandwidth)?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn validate(base: &Path) -> Result<ExitCode> {
    let bundle = match parse_bundle(base) {
        Ok(b) => b,
        Err(FormatError::Io { path, source }) => {
            return Err(source).with_context(|| format!("reading {}", path.display()))
        }
        Err(e) => {
            eprintln!("{}: {e}", base.display());
            return Ok(ExitCode::from(1));
        }
    };
    let report = validate_bundle(&bundle);
    if report.is_empty() {
        println!("{}: valid, {} records", base.display(), bundle.records.len());
        Ok(ExitCode::SUCCESS)
    } else {
        eprint!("{report}");
        eprintln!("{}: {} violations", base.display(), report.violations.len());
        Ok(ExitCode::from(1))
    }
}

pub fn dump(args: &DumpArgs) -> Result<ExitCode> {
    let bundle = parse_bundle(&args.base)?;
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    if args.pcf {
        write_pcf(&bundle, &mut out)?;
    } else if args.row {
        write_row(&bundle, &mut out)?;
    } else if args.records {
        write_prv(&bundle, &mut out)?;
    } else {
        let h = &bundle.header;
        let count = |k: u8| bundle.records.iter().filter(|r| r.kind() == k).count();
        writeln!(out, "captured      {}", h.capture)?;
        writeln!(out, "total time    {} ns", h.total_time)?;
        writeln!(out, "nodes         {}", h.resources.nodes.len())?;
        writeln!(out, "applications  {}", h.process.applications.len())?;
        writeln!(out, "tasks         {}", h.process.task_count())?;
        writeln!(out, "threads       {}", h.process.thread_count())?;
        writeln!(out, "states        {}", count(1))?;
        writeln!(out, "events        {}", count(2))?;
        writeln!(out, "comms         {}", count(3))?;
        writeln!(out, "event types   {}", bundle.registry.len())?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}
