use std::path::PathBuf;
use std::process::ExitCode;

use catalpa::HeapConfig;
use catalpa_bench::verify::{verify_config, VERIFY_NURSERY};
use catalpa_bench::{emit, run_workload, sweep, verify_stress, BenchError, CollectorKind, Format, Kind, SweepConfig, Workload};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bench", about = "Benchmarks and checks for the catalpa collector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one workload and emit its statistics.
    Run {
        #[arg(long, value_enum)]
        workload: Kind,
        #[arg(long, value_enum, default_value = "catalpa")]
        collector: CollectorKind,
        #[arg(long, default_value_t = 200)]
        tasks: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2 << 20)]
        nursery_bytes: usize,
        #[arg(long, default_value_t = 4096)]
        page_bytes: usize,
        #[arg(long, default_value_t = 256 << 20)]
        reserve_bytes: usize,
        #[arg(long, default_value_t = 5.0)]
        task_ms: f64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Run the stress workload under the oracle and print its report.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        nodes: u64,
        #[arg(long, default_value_t = VERIFY_NURSERY)]
        nursery_bytes: usize,
    },
    /// Measure collection work and pauses as the live old heap grows.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
        live_heap_mb: Vec<usize>,
        #[arg(long, value_enum, default_value = "raytracer")]
        workload: Kind,
        #[arg(long, default_value_t = 2 << 20)]
        nursery_bytes: usize,
        #[arg(long, default_value_t = 1000)]
        collections: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5.0)]
        task_ms: f64,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("bench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> Result<ExitCode, BenchError> {
    match command {
        Command::Run { workload, collector, tasks, seed, nursery_bytes, page_bytes, reserve_bytes, task_ms, out, format } => {
            let cfg = HeapConfig::default().with_page(page_bytes).with_nursery(nursery_bytes).with_reserve(reserve_bytes);
            let w = Workload::new(workload, tasks, seed).with_task_ms(task_ms);
            let report = run_workload(&w, collector, &cfg)?;
            match out {
                Some(path) => emit(&report, format, &path)?,
                None => match format {
                    Format::Json => println!("{}", catalpa_bench::to_json(&report)?),
                    Format::Csv => print!("{}", catalpa_bench::to_csv(&report)?),
                },
            }
            if let Some(error) = &report.error {
                eprintln!("bench: run stopped early: {error}");
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { seed, nodes, nursery_bytes } => {
            let report = verify_stress(seed, nodes, &verify_config().with_nursery(nursery_bytes))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Sweep { live_heap_mb, workload, nursery_bytes, collections, seed, task_ms } => {
            let cfg = SweepConfig { live_heap_mb, kind: workload, nursery_bytes, collections, seed, task_ms, ..SweepConfig::default() };
            let points = sweep(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&points)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
