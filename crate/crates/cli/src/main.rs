use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use log::info;

use greensched::experiment::{
    oracle_check, run_experiment_with, run_scenario, write_json, CsvSink, ExperimentConfig,
    ExperimentOutput, FlowSpec, SWEEP_SLEEP_SAVINGS,
};
use greensched::scheduler::Variant;
use greensched::topology::build_fat_tree;
use greensched::traffic::{generate_flow_count, TrafficScenario, VolumeUnit};
use greensched::PowerProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GbUnit {
    /// 10^9 bytes
    Decimal,
    /// 2^30 bytes
    Binary,
}

/// Power-aware flow scheduling experiments on simulated FatTree networks.
#[derive(Debug, Parser)]
#[command(name = "greensched", version)]
struct Args {
    /// FatTree port counts (comma separated).
    #[arg(long = "topology-k", value_delimiter = ',', default_values_t = [4, 6, 8])]
    topology_k: Vec<usize>,

    /// Scheduling variants: lpv1, lpv2, lpv3, lpv4, sp, smart-sp or all.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    variant: Vec<String>,

    /// Flow counts: integers, `max` (every host paired) or `sweep` (the default per-size sweep).
    #[arg(long, value_delimiter = ',', default_value = "sweep")]
    flows: Vec<String>,

    /// Sleeping-mode saving fractions; defaults to the power profile's value.
    #[arg(long = "sleep-saving", value_delimiter = ',')]
    sleep_saving: Vec<f64>,

    /// Traffic seeds.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seed: Vec<u64>,

    /// Bytes transferred by every flow, in GB.
    #[arg(long = "volume-gb", default_value_t = 38.0)]
    volume_gb: f64,

    #[arg(long = "gb-unit", value_enum, default_value_t = GbUnit::Decimal)]
    gb_unit: GbUnit,

    /// Power profile (TOML, or JSON by extension); the calibrated default otherwise.
    #[arg(long = "power-profile")]
    power_profile: Option<PathBuf>,

    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Sweep every sleeping-mode saving of the full grid (0.2, 0.4, 0.6, 0.8).
    #[arg(long = "full-grid")]
    full_grid: bool,

    /// Print the topology of each size as JSON and exit.
    #[arg(long = "dump-topology")]
    dump_topology: bool,

    /// Cross-check the pruned scheduler against exhaustive search on small instances.
    #[arg(long = "oracle-check")]
    oracle_check: bool,

    /// Write the generated scenario of the first size, flow count and seed as JSON.
    #[arg(long = "export-scenario")]
    export_scenario: Option<PathBuf>,

    /// Replay a scenario JSON file on the first size instead of generating traffic.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

fn parse_variants(raw: &[String]) -> Result<Vec<Variant>> {
    let mut out = Vec::new();
    for v in raw {
        if v.eq_ignore_ascii_case("all") {
            out.extend(Variant::ALL);
        } else {
            out.push(v.parse::<Variant>()?);
        }
    }
    out.dedup();
    Ok(out)
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn build_config(args: &Args) -> Result<ExperimentConfig> {
    let profile = match &args.power_profile {
        Some(p) => PowerProfile::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PowerProfile::default(),
    };
    let sleep_savings = if args.full_grid {
        SWEEP_SLEEP_SAVINGS.to_vec()
    } else if args.sleep_saving.is_empty() {
        vec![profile.sleep_saving_fraction]
    } else {
        args.sleep_saving.clone()
    };
    let unit = match args.gb_unit {
        GbUnit::Decimal => VolumeUnit::Decimal,
        GbUnit::Binary => VolumeUnit::Binary,
    };
    let config = ExperimentConfig {
        ks: args.topology_k.clone(),
        variants: parse_variants(&args.variant)?,
        flows: args
            .flows
            .iter()
            .map(|f| f.parse::<FlowSpec>())
            .collect::<greensched::Result<_>>()?,
        sleep_savings,
        seeds: args.seed.clone(),
        volume_bytes: unit.to_bytes(args.volume_gb),
        profile,
        ..ExperimentConfig::default()
    };
    config.validate()?;
    Ok(config)
}

fn dump_topologies(args: &Args) -> Result<()> {
    let mut dumps = Vec::new();
    for &k in &args.topology_k {
        dumps.push(build_fat_tree(k, greensched::topology::DEFAULT_LINK_RATE_BPS)?.to_json());
    }
    let mut out = open_out(&args.out)?;
    serde_json::to_writer_pretty(&mut out, &dumps)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn run_oracle(args: &Args, config: &ExperimentConfig) -> Result<()> {
    let k = args.topology_k.iter().copied().min().unwrap_or(4).min(6);
    let reports = oracle_check(k, &config.profile, &config.variants, &config.seeds, 3)?;
    let mut out = open_out(&args.out)?;
    match args.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &reports)?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(out, "variant,seed,flows,pruned,exhaustive,ratio,combinations,consistent")?;
            for r in &reports {
                writeln!(
                    out,
                    "{},{},{},{:.9e},{:.9e},{:.6},{},{}",
                    r.variant,
                    r.seed,
                    r.flows,
                    r.pruned_objective,
                    r.exhaustive_objective,
                    r.optimality_ratio,
                    r.combinations_searched,
                    r.consistent
                )?;
            }
        }
    }
    out.flush()?;
    let bad = reports.iter().filter(|r| !r.consistent).count();
    if bad > 0 {
        bail!("{bad} oracle comparisons were inconsistent");
    }
    info!("oracle check passed on {} comparisons", reports.len());
    Ok(())
}

fn export_scenario(config: &ExperimentConfig, path: &PathBuf) -> Result<()> {
    let point = config
        .grid()
        .into_iter()
        .next()
        .context("empty experiment grid")?;
    let topo = build_fat_tree(point.k, config.link_rate_bps)?;
    let scenario = generate_flow_count(&topo, point.seed, point.flows, config.volume_bytes)?;
    std::fs::write(path, scenario.to_json())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit(args: &Args, output: &ExperimentOutput) -> Result<()> {
    let mut out = open_out(&args.out)?;
    match args.format {
        Format::Json => {
            write_json(output, &mut out)?;
            writeln!(out)?;
        }
        Format::Csv => greensched::experiment::write_csv(&output.rows, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn run() -> Result<()> {
    let args = Args::parse();
    if args.dump_topology {
        return dump_topologies(&args);
    }
    let config = build_config(&args)?;
    if args.oracle_check {
        return run_oracle(&args, &config);
    }
    if let Some(path) = &args.export_scenario {
        export_scenario(&config, path)?;
    }

    let output = if let Some(path) = &args.scenario {
        let k = config.ks[0];
        let topo = build_fat_tree(k, config.link_rate_bps)?;
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let scenario = TrafficScenario::from_json(&topo, &text)?;
        let mut rows = Vec::new();
        for &s in &config.sleep_savings {
            rows.extend(run_scenario(&config, &topo, &scenario, s)?);
        }
        let output = ExperimentOutput {
            rows,
            failures: Vec::new(),
        };
        emit(&args, &output)?;
        output
    } else if args.format == Format::Csv {
        // rows are streamed as grid points finish
        let mut sink = CsvSink::new(open_out(&args.out)?)?;
        let mut write_err = None;
        let output = run_experiment_with(&config, |point, result| {
            info!("finished {point:?}");
            if let Ok(rows) = result {
                if let Err(e) = sink.push(rows) {
                    write_err.get_or_insert(e);
                }
            }
        })?;
        if let Some(e) = write_err {
            return Err(e.into());
        }
        output
    } else {
        let output = run_experiment_with(&config, |point, _| info!("finished {point:?}"))?;
        emit(&args, &output)?;
        output
    };

    if !output.failures.is_empty() {
        for f in &output.failures {
            eprintln!("error: grid point {:?}: {}", f.point, f.error);
        }
        bail!("{} grid point(s) failed", output.failures.len());
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
