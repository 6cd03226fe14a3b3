//! Batch front end: legalize, check, stats, svg, bench.
//! Exit codes: 0 success, 1 violations found, 2 errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sitefit::io::{parse_placement, write_placement};
use sitefit::legalizer::{legalize, LegalizeConfig, RunReport};
use sitefit::model::{
    average_displacement, check_legal, max_displacement, per_height_displacement, Placement,
    Violation,
};
use sitefit::svg::render_svg;
use sitefit::synth::{generate, SyntheticSpec};

#[derive(Parser)]
#[command(name = "sitefit", version, about = "Mixed-height standard-cell legalizer")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct EngineFlags {
    #[arg(long, default_value_t = 10)]
    window_rows: i64,
    #[arg(long, default_value_t = 100)]
    window_sites: i64,
    /// Sliding-window size for target ordering.
    #[arg(long, default_value_t = 8)]
    ws: usize,
    #[arg(long, default_value_t = 2)]
    expand_factor: i64,
    #[arg(long, default_value_t = 4)]
    max_expand: u32,
    /// Concurrent insertion-point evaluations per target.
    #[arg(long = "parallel-ip", default_value_t = 1)]
    parallel_ip: usize,
    /// Cross-check each winning position against the brute-force oracle.
    #[arg(long)]
    oracle_check: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EngineFlags {
    fn config(&self) -> LegalizeConfig {
        LegalizeConfig {
            window_rows: self.window_rows,
            window_sites: self.window_sites,
            ws: self.ws,
            expand_factor: self.expand_factor,
            max_expand: self.max_expand,
            parallelism: self.parallel_ip,
            oracle_check: self.oracle_check,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Legalize a placement file; write the result with -o.
    Legalize {
        input: PathBuf,
        /// Output placement file.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        flags: EngineFlags,
    },
    /// Audit a placement file and list violations.
    Check { input: PathBuf },
    /// Print placement statistics.
    Stats { input: PathBuf },
    /// Render a placement to SVG.
    Svg {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Generate, legalize and time synthetic instances.
    Bench {
        /// Instance sizes, e.g. 10k,20k,40k or plain cell counts.
        #[arg(long, value_delimiter = ',', default_value = "10k,20k,40k,80k,160k")]
        sizes: Vec<String>,
        #[arg(long, default_value_t = 0.6)]
        density: f64,
        #[arg(long = "parallel-ip", default_value_t = 1)]
        parallel_ip: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.cmd {
        Cmd::Legalize { input, output, flags } => {
            let mut p = load(&input)?;
            let rep = legalize(&mut p, &flags.config()).map_err(|e| e.to_string())?;
            if let Some(out) = output {
                fs::write(&out, write_placement(&p))
                    .map_err(|e| format!("{}: {e}", out.display()))?;
            }
            let viols = check_legal(&p);
            print_report(&rep, viols.len());
            print_violations(&p, &viols);
            Ok(exit_for(viols.len()))
        }
        Cmd::Check { input } => {
            let p = load(&input)?;
            let viols = check_legal(&p);
            print_violations(&p, &viols);
            println!("violations {}", viols.len());
            Ok(exit_for(viols.len()))
        }
        Cmd::Stats { input } => {
            let p = load(&input)?;
            let viols = check_legal(&p);
            println!("cells {}", p.cells.len());
            println!("movable {}", p.movable().count());
            println!("fixed {}", p.cells.len() - p.movable().count());
            println!("rows {}", p.grid.num_rows);
            println!("sites {}", p.grid.num_sites);
            println!("maxHeight {}", p.max_height());
            println!("sam {}", average_displacement(&p).unwrap_or(0.0));
            println!("maxDisp {}", max_displacement(&p).unwrap_or(0.0));
            println!("perHeightSam {}", per_height_line(&p));
            println!("violations {}", viols.len());
            Ok(exit_for(viols.len()))
        }
        Cmd::Svg { input, output } => {
            let p = load(&input)?;
            fs::write(&output, render_svg(&p)).map_err(|e| format!("{}: {e}", output.display()))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Bench { sizes, density, parallel_ip, seed } => {
            println!("size runtimeMs sam fallbacks");
            for s in &sizes {
                let n = parse_size(s)?;
                let spec = SyntheticSpec::sized(n, density, seed);
                let mut p = generate(&spec).map_err(|e| e.to_string())?;
                let cfg = LegalizeConfig { parallelism: parallel_ip, seed, ..Default::default() };
                let rep = legalize(&mut p, &cfg).map_err(|e| e.to_string())?;
                let bad = check_legal(&p).len();
                if bad > 0 {
                    return Err(format!("instance of {n} cells ended with {bad} violations"));
                }
                println!("{n} {} {} {}", rep.runtime_ms, rep.sam, rep.fallbacks_used);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load(path: &PathBuf) -> Result<Placement, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_placement(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn exit_for(violations: usize) -> ExitCode {
    if violations == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn per_height_line(p: &Placement) -> String {
    let per = per_height_displacement(p).unwrap_or_default();
    let parts: Vec<String> = per.iter().map(|(h, s)| format!("{h}:{s}")).collect();
    if parts.is_empty() {
        "-".to_string()
    } else {
        parts.join(" ")
    }
}

fn print_report(rep: &RunReport, violations: usize) {
    println!("sam {}", rep.sam);
    println!("maxDisp {}", rep.max_disp);
    let parts: Vec<String> =
        rep.per_height_sam.iter().map(|(h, s)| format!("{h}:{s}")).collect();
    println!("perHeightSam {}", if parts.is_empty() { "-".into() } else { parts.join(" ") });
    println!("cellsLegalized {}", rep.cells_legalized);
    println!("fallbacksUsed {}", rep.fallbacks_used);
    println!("expansions {}", rep.expansions);
    println!("runtimeMs {}", rep.runtime_ms);
    println!("violations {violations}");
}

fn print_violations(p: &Placement, viols: &[Violation]) {
    for v in viols {
        let name = |id: usize| p.cells[id].name.as_str();
        match v {
            Violation::Overlap(a, b) => println!("overlap {} {}", name(*a), name(*b)),
            Violation::OutOfBounds(c) => println!("outOfBounds {}", name(*c)),
            Violation::OffSite(c) => println!("offSite {}", name(*c)),
            Violation::RailMismatch(c) => println!("railMismatch {}", name(*c)),
            Violation::OnBlockage(c) => println!("onBlockage {}", name(*c)),
        }
    }
}

/// "10k" -> 10000; plain integers pass through.
fn parse_size(s: &str) -> Result<usize, String> {
    let t = s.trim();
    let (digits, mult) = match t.strip_suffix(['k', 'K']) {
        Some(d) => (d, 1000usize),
        None => (t, 1),
    };
    digits
        .parse::<usize>()
        .map(|v| v * mult)
        .map_err(|_| format!("bad size {s:?}"))
}
