//! The config-driven pipeline, end to end.
//!
//! Everything the CLI's `run` subcommand does, through the library API: parse
//! and validate a JSON run configuration, train and validate every requested
//! certificate kind, derive reward enclosures and tail bounds, cross-check
//! them by simulation, and emit the report files
//!
//! ```text
//! certificates.json   bounds.csv   tail.csv   timing.json   summary.txt
//! ```
//!
//! The bundled configuration certifies a 1-D zero-reward contraction with an
//! inline environment model, so the whole run — training three certificates
//! from random initialization included — takes a few seconds. Reports are
//! written to a temporary directory here; the CLI writes to the config's
//! `out` directory instead.
//!
//! Run with `cargo run --example full_pipeline`.

use std::path::Path;

use rewcert::certify::fmt_f64;
use rewcert::config::parse_config;
use rewcert::pipeline::{build_summary, emit_report, run_pipeline};

fn main() -> rewcert::Result<()> {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let cfg = parse_config(&manifest.join("assets/run_drain.json"))?;
    println!(
        "run: env '{}', kinds {:?}, seed {}\n",
        cfg.env.name(),
        cfg.kinds,
        cfg.seed
    );

    let artifacts = run_pipeline(&cfg)?;
    print!("{}", build_summary(&artifacts));
    assert!(artifacts.all_validated(), "the bundled run is expected to validate");

    println!("\ncertified enclosures:");
    for b in &artifacts.bounds {
        println!(
            "  s0 = {:?}: [{}, {}]",
            b.s0.coords(),
            fmt_f64(b.lower),
            fmt_f64(b.upper)
        );
    }
    println!("tail bounds:");
    for p in &artifacts.tail {
        println!(
            "  P(R >= {}) <= {:.3e}, empirical {:?}",
            p.c, p.bound, p.empirical
        );
    }

    let out = std::env::temp_dir().join(format!("certified-run-{}", std::process::id()));
    let paths = emit_report(&artifacts, &out)?;
    println!("\nreport files:");
    for p in &paths {
        println!("  {}", p.display());
    }
    Ok(())
}
