//! Write a short simulated run to a tag file and stream it back.
//!
//! cargo run --release --example simulate_tags -- [seconds] [out-file]
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use hybrid_hom::simkit::{read_tags, simulate_run, write_tags, ExperimentConfig, CH_D1, CH_D2, CH_HERALD, CH_SYNC};

fn main() -> hybrid_hom::Result<()> {
    let mut args = std::env::args().skip(1);
    let duration: f64 = args.next().map_or(1.0, |s| s.parse().expect("seconds"));
    let out = args.next().unwrap_or_else(|| std::env::temp_dir().join("example.tags").display().to_string());
    let cfg = ExperimentConfig { duration, ..Default::default() };
    let run = simulate_run(&cfg)?;
    let header = run.header();
    let mut w = BufWriter::new(File::create(&out)?);
    let n = write_tags(run, header, &mut w)?;
    w.flush()?;
    println!("{n} records -> {out}");

    let reader = read_tags(BufReader::new(File::open(&out)?))?;
    println!("header: {}", reader.header().line());
    let mut counts = [0u64; 4];
    for r in reader {
        counts[r?.channel as usize] += 1;
    }
    for (name, ch) in [("herald", CH_HERALD), ("d1", CH_D1), ("d2", CH_D2), ("sync", CH_SYNC)] {
        println!("{name:>7} {:>10}  ({:.0} /s)", counts[ch as usize], counts[ch as usize] as f64 / duration);
    }
    Ok(())
}
