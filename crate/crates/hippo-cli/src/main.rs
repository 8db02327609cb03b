//! `hippo`: command-line driver for the sparse index.
//!
//! Subcommands cover the index lifecycle (gen, build, query, insert,
//! vacuum), analytical cost estimation, and a benchmark that validates the
//! cost model against measurements on synthetic data.
//!
//! Exit codes: 0 success, 2 correctness failure (search disagreed with the
//! oracle during bench), 1 any other error.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde_json::json;

use hippo_core::baseline::{oracle_scan, DenseIndex};
use hippo_core::costmodel::{estimate, prob_selected, CostParams};
use hippo_core::index::{HippoIndex, InsertOutcome};
use hippo_core::pagestore::TableFile;
use hippo_core::predicate::Predicate;

const KEY_DOMAIN: i64 = 1_000_000;

#[derive(Parser)]
#[command(name = "hippo", about = "Sparse histogram-based page-range index", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic table file with random keys.
    Gen(GenArgs),
    /// Build an index over an existing table.
    Build(BuildArgs),
    /// Run one predicate against table + index.
    Query(QueryArgs),
    /// Insert one tuple through the table and index.
    Insert(InsertArgs),
    /// Re-summarize entries over pages with pending deletions.
    Vacuum(IoArgs),
    /// Print analytical cost estimates for a configuration.
    Estimate(EstimateArgs),
    /// Build, validate against the oracle, and report measurements vs model.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    table: PathBuf,
    /// Number of tuples.
    #[arg(long, default_value_t = 100_000)]
    count: u64,
    #[arg(long, value_enum, default_value_t = Dist::Uniform)]
    dist: Dist,
    /// Zipf exponent, used with --dist zipf.
    #[arg(long, default_value_t = 1.1)]
    zipf_s: f64,
    /// Tuples per page.
    #[arg(long, default_value_t = 50)]
    pagecard: u32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Payload bytes per tuple.
    #[arg(long, default_value_t = 16)]
    payload: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Dist {
    Uniform,
    Zipf,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// Histogram resolution H.
    #[arg(long, default_value_t = 400)]
    resolution: u32,
    /// Partial histogram density threshold D in (0, 1].
    #[arg(long, default_value_t = 0.2)]
    density: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// Predicate, e.g. "key >= 10 AND key < 55".
    #[arg(long)]
    pred: String,
    /// Print every qualifying tuple, not just the count.
    #[arg(long)]
    dump: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InsertArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    key: i64,
    /// Payload bytes for the new tuple.
    #[arg(long, default_value_t = 16)]
    payload: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct IoArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, default_value_t = 400)]
    resolution: u32,
    #[arg(long, default_value_t = 0.2)]
    density: f64,
    /// Query selectivity SF in (0, 1].
    #[arg(long)]
    selectivity: f64,
    #[arg(long)]
    card: u64,
    #[arg(long, default_value_t = 50)]
    pagecard: u32,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value_t = 400)]
    resolution: u32,
    #[arg(long, default_value_t = 0.2)]
    density: f64,
    /// Comma-separated selectivities to sweep.
    #[arg(long, value_delimiter = ',', default_value = "0.00001,0.0001,0.001,0.01")]
    sf: Vec<f64>,
    /// Randomized range queries per selectivity.
    #[arg(long, default_value_t = 200)]
    queries: usize,
    /// Inserts used to measure maintenance probes (fraction of Card).
    #[arg(long, default_value_t = 0.001)]
    insert_frac: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

/// Correctness failures get their own exit code.
#[derive(Debug)]
struct CorrectnessFailure(String);

impl std::fmt::Display for CorrectnessFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "correctness failure: {}", self.0)
    }
}

impl std::error::Error for CorrectnessFailure {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.is::<CorrectnessFailure>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Build(args) => cmd_build(args),
        Command::Query(args) => cmd_query(args),
        Command::Insert(args) => cmd_insert(args),
        Command::Vacuum(args) => cmd_vacuum(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    if args.count < 1 {
        bail!("--count must be >= 1");
    }
    let mut table = TableFile::create(&args.table, args.pagecard)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let payload = vec![0u8; args.payload];
    match args.dist {
        Dist::Uniform => {
            for _ in 0..args.count {
                table.append_tuple(rng.random_range(0..KEY_DOMAIN), &payload)?;
            }
        }
        Dist::Zipf => {
            if args.zipf_s <= 0.0 || args.zipf_s.is_nan() {
                bail!("--zipf-s must be > 0");
            }
            let zipf = Zipf::new(KEY_DOMAIN as f64, args.zipf_s)
                .map_err(|e| anyhow::anyhow!("zipf: {e}"))?;
            for _ in 0..args.count {
                table.append_tuple(zipf.sample(&mut rng) as i64 - 1, &payload)?;
            }
        }
    }
    table.save()?;
    report(
        args.json,
        json!({
            "table": args.table,
            "tuples": table.cardinality(),
            "pages": table.num_pages(),
        }),
        &format!(
            "generated {} tuples over {} pages at {}",
            table.cardinality(),
            table.num_pages(),
            args.table.display()
        ),
    );
    Ok(())
}

fn cmd_build(args: BuildArgs) -> Result<()> {
    let table = TableFile::open(&args.table)?;
    let index = HippoIndex::build(&table, args.resolution, args.density)?;
    index.save(&args.index)?;
    report(
        args.json,
        json!({
            "index": args.index,
            "entries": index.num_entries(),
            "bytes": index.size_bytes(),
            "resolution": index.resolution(),
            "density": index.density(),
        }),
        &format!(
            "built index with {} entries ({} bytes) at {}",
            index.num_entries(),
            index.size_bytes(),
            args.index.display()
        ),
    );
    Ok(())
}

fn cmd_query(args: QueryArgs) -> Result<()> {
    let table = TableFile::open(&args.table)?;
    let index = HippoIndex::open(&args.index)?;
    let pred = Predicate::parse(&args.pred)?;
    let tuples = index.search(&table, &pred)?;
    if args.json {
        let dump: Option<Vec<_>> = args.dump.then(|| {
            tuples
                .iter()
                .map(|t| json!({"page": t.id.page, "slot": t.id.slot, "key": t.key}))
                .collect()
        });
        println!("{}", json!({"count": tuples.len(), "tuples": dump}));
    } else {
        println!("{} tuples match", tuples.len());
        if args.dump {
            for t in &tuples {
                println!("({}, {})\t{}", t.id.page, t.id.slot, t.key);
            }
        }
    }
    Ok(())
}

fn cmd_insert(args: InsertArgs) -> Result<()> {
    let mut table = TableFile::open(&args.table)?;
    let mut index = HippoIndex::open(&args.index)?;
    let payload = vec![0u8; args.payload];
    let out: InsertOutcome = index.insert(&mut table, args.key, &payload)?;
    table.save()?;
    index.save(&args.index)?;
    report(
        args.json,
        json!({
            "page": out.tuple_id.page,
            "slot": out.tuple_id.slot,
            "probes": out.probes,
            "relocated": out.relocated,
            "created_entry": out.created_entry,
        }),
        &format!(
            "inserted at ({}, {}) with {} probes{}{}",
            out.tuple_id.page,
            out.tuple_id.slot,
            out.probes,
            if out.relocated { ", entry relocated" } else { "" },
            if out.created_entry { ", new entry" } else { "" },
        ),
    );
    Ok(())
}

fn cmd_vacuum(args: IoArgs) -> Result<()> {
    let mut table = TableFile::open(&args.table)?;
    let mut index = HippoIndex::open(&args.index)?;
    index.vacuum(&mut table)?;
    table.save()?;
    index.save(&args.index)?;
    report(
        args.json,
        json!({"entries": index.num_entries(), "bytes": index.size_bytes()}),
        &format!(
            "vacuumed; {} entries, {} bytes",
            index.num_entries(),
            index.size_bytes()
        ),
    );
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let params = CostParams {
        resolution: args.resolution,
        density: args.density,
        selectivity: args.selectivity,
        cardinality: args.card,
        page_card: args.pagecard,
    };
    let est = estimate(&params)?;
    println!(
        "{}",
        json!({
            "prob_selected": est.prob_selected,
            "est_query_tuples": est.est_query_tuples,
            "tuples_per_entry": est.tuples_per_entry,
            "pages_per_entry": est.pages_per_entry,
            "num_entries": est.num_entries,
            "init_cost": est.init_cost,
            "insert_cost": est.insert_cost,
        })
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let started = Instant::now();
    let mut table = TableFile::open(&args.table)?;
    let card = table.cardinality();
    if card == 0 {
        bail!("empty table");
    }
    let index = HippoIndex::build(&table, args.resolution, args.density)?;
    let dense = DenseIndex::build(&table)?;

    let keys = table.all_live_keys();
    let (kmin, kmax) = (
        *keys.iter().min().unwrap(),
        *keys.iter().max().unwrap(),
    );
    let domain = (kmax - kmin).max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let covered = index.covered_pages() as f64;
    let mut per_sf = Vec::new();
    for &sf in &args.sf {
        if !(sf > 0.0 && sf <= 1.0) {
            bail!("selectivity {sf} outside (0, 1]");
        }
        let width = ((sf * domain as f64).round() as i64).max(0);
        let mut pages_fraction_sum = 0.0;
        let mut result_tuples = 0u64;
        for _ in 0..args.queries {
            let lo = rng.random_range(kmin..=kmax - width);
            let pred = Predicate::range(Some(lo), Some(lo + width), true, true)?;
            let bm = pred.to_bitmap(index.histogram())?;
            pages_fraction_sum += index.filter_pages(&bm)?.count_marked() as f64 / covered;
            let got: Vec<_> = index.search(&table, &pred)?.iter().map(|t| t.id).collect();
            let expected = oracle_scan(&table, &pred)?;
            if got != expected {
                return Err(CorrectnessFailure(format!(
                    "search mismatch for [{lo}, {}]: {} vs {} tuples",
                    lo + width,
                    got.len(),
                    expected.len()
                ))
                .into());
            }
            if dense.query(&pred) != expected {
                return Err(
                    CorrectnessFailure(format!("dense mismatch for [{lo}, {}]", lo + width)).into(),
                );
            }
            result_tuples += got.len() as u64;
        }
        let measured_fraction = pages_fraction_sum / args.queries as f64;
        let predicted = prob_selected(sf, args.resolution, args.density);
        per_sf.push(json!({
            "selectivity": sf,
            "measured_pages_selected_fraction": measured_fraction,
            "predicted_prob_selected": predicted,
            "abs_error": (measured_fraction - predicted).abs(),
            "mean_result_tuples": result_tuples as f64 / args.queries as f64,
        }));
    }

    // maintenance: eager inserts on copies, measuring sorted-list probes
    let mut insert_index = index.clone();
    let n_inserts = ((card as f64 * args.insert_frac).round() as u64).max(1);
    let mut max_probes = 0u32;
    let mut probe_sum = 0u64;
    for _ in 0..n_inserts {
        let out = insert_index.insert(&mut table, rng.random_range(kmin..=kmax), &[])?;
        max_probes = max_probes.max(out.probes);
        probe_sum += u64::from(out.probes);
    }
    let probe_bound = (index.num_entries() as f64).log2().ceil() as u32 + 1;
    if max_probes > probe_bound {
        return Err(CorrectnessFailure(format!(
            "insert probes {max_probes} exceed bound {probe_bound}"
        ))
        .into());
    }

    let params = CostParams {
        resolution: args.resolution,
        density: args.density,
        selectivity: args.sf[0],
        cardinality: card,
        page_card: table.page_card(),
    };
    let predicted = estimate(&params)?;
    let measured_tpe = card as f64 / index.num_entries() as f64;

    let report = json!({
        "config": {
            "table": args.table,
            "cardinality": card,
            "page_card": table.page_card(),
            "resolution": args.resolution,
            "density": args.density,
            "selectivities": args.sf,
            "queries_per_selectivity": args.queries,
            "seed": args.seed,
        },
        "measured": {
            "exactness": "pass",
            "index_bytes": index.size_bytes(),
            "dense_bytes": dense.size_bytes(),
            "num_entries": index.num_entries(),
            "mean_tuples_per_entry": measured_tpe,
            "selectivity_sweep": per_sf,
            "insert_probes_max": max_probes,
            "insert_probes_mean": probe_sum as f64 / n_inserts as f64,
            "inserts": n_inserts,
            "elapsed_ms": started.elapsed().as_millis() as u64,
        },
        "predicted": {
            "tuples_per_entry": predicted.tuples_per_entry,
            "pages_per_entry": predicted.pages_per_entry,
            "num_entries": predicted.num_entries,
            "init_cost": predicted.init_cost,
            "insert_cost": predicted.insert_cost,
        },
        "relative_errors": {
            "tuples_per_entry":
                (measured_tpe - predicted.tuples_per_entry).abs() / predicted.tuples_per_entry,
            "num_entries":
                (index.num_entries() as f64 - predicted.num_entries).abs() / predicted.num_entries,
            "storage_ratio": dense.size_bytes() as f64 / index.size_bytes() as f64,
        },
    });
    println!("{report}");
    Ok(())
}

fn report(as_json: bool, value: serde_json::Value, text: &str) {
    if as_json {
        println!("{value}");
    } else {
        println!("{text}");
    }
}
