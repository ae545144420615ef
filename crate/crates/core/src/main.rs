use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use docstruct::chart::{parse_csv, render_svg};
use docstruct::error::{Error, Result};
use docstruct::pipeline::{
    analyze, read_document, records_bytes, write_analysis, write_atomic, Analysis, ConfigFile,
    RecordFormat, RunConfig,
};
use docstruct::scoring::{compare_lines, variation_table, CharClass, EventKind};
use docstruct::testkit::{figure3, gen_document, StructureSpec};

/// Discover line templates and the repeating-pattern hierarchy of a
/// computer-generated text report, and extract its records.
#[derive(Parser)]
#[command(name = "docstruct", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect templates and structure; write dss.txt, templates.json, series.csv.
    Analyze {
        input: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run the full pipeline and write records.csv or records.jsonl.
    Extract {
        input: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Score two lines and print the map variation table.
    ///
    /// Lines come from LINE_A and LINE_B, or from --file with --line/--with.
    /// With --file and --line alone, the line is scored against the sample and
    /// the scores are written to scores.csv.
    Score {
        line_a: Option<String>,
        line_b: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        /// 1-based line number in --file.
        #[arg(long)]
        line: Option<usize>,
        /// 1-based line number in --file to compare with.
        #[arg(long)]
        with: Option<usize>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Render a series or score CSV as SVG.
    Chart {
        input: PathBuf,
        /// Output file (default: chart.svg in --out-dir).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Generate a synthetic document and its ground truth.
    Gen {
        /// Structure spec JSON file, or the built-in name `figure3`.
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 400)]
        lines: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunOpts {
    /// Config file (TOML) with defaults for these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Lines used for template detection [default: 200].
    #[arg(long)]
    sample_lines: Option<usize>,
    /// Lowest recognition threshold [default: 50].
    #[arg(long)]
    min_similarity: Option<f64>,
    /// Score with the plain map instead of one adapted per template.
    #[arg(long)]
    no_adaptive: bool,
    /// Score map file: 3 rows (alpha, numeric, symbol) of 5 weights.
    #[arg(long)]
    score_map: Option<PathBuf>,
    /// Output directory [default: .].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Record format: csv or jsonl [default: csv].
    #[arg(long)]
    format: Option<RecordFormat>,
    /// Also write dss.txt, templates.json and series.csv (extract).
    #[arg(long)]
    emit_series: bool,
    /// Also write chart.svg.
    #[arg(long)]
    emit_svg: bool,
}

impl RunOpts {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            ConfigFile::load(path)?.apply(&mut cfg);
        }
        if let Some(v) = self.sample_lines {
            cfg.sample_lines = v;
        }
        if let Some(v) = self.min_similarity {
            cfg.min_similarity = v;
        }
        if self.no_adaptive {
            cfg.adaptive = false;
        }
        if let Some(v) = &self.score_map {
            cfg.score_map = Some(v.clone());
        }
        if let Some(v) = &self.out_dir {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = self.format {
            cfg.format = v;
        }
        cfg.emit_series |= self.emit_series;
        cfg.emit_svg |= self.emit_svg;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run_analysis(input: &Path, cfg: &RunConfig) -> Result<Analysis> {
    let lines = read_document(input)?;
    analyze(lines, cfg)
}

fn write_chart(a: &Analysis, cfg: &RunConfig) -> Result<()> {
    let data = parse_csv(&a.series().to_csv())?;
    write_atomic(&cfg.out_dir.join("chart.svg"), render_svg(&data).as_bytes())
}

fn cmd_analyze(input: &Path, opts: &RunOpts) -> Result<()> {
    let cfg = opts.config()?;
    let a = run_analysis(input, &cfg)?;
    write_analysis(&a, &cfg)?;
    if cfg.emit_svg {
        write_chart(&a, &cfg)?;
    }
    println!("{}", a.dss());
    Ok(())
}

fn cmd_extract(input: &Path, opts: &RunOpts) -> Result<()> {
    let cfg = opts.config()?;
    let a = run_analysis(input, &cfg)?;
    let plan = a.plan()?;
    let ex = a.extract(&plan);
    let name = format!("records.{}", cfg.format.extension());
    write_atomic(&cfg.out_dir.join(name), &records_bytes(&plan, &ex, cfg.format)?)?;
    if cfg.emit_series {
        write_analysis(&a, &cfg)?;
    }
    if cfg.emit_svg {
        write_chart(&a, &cfg)?;
    }
    eprintln!(
        "{} records, {} skipped lines, {} incomplete items",
        ex.records.len(),
        ex.skipped,
        ex.incomplete
    );
    println!("{}", a.dss());
    Ok(())
}

fn nth_line(lines: &[String], n: usize) -> Result<&str> {
    n.checked_sub(1)
        .and_then(|i| lines.get(i))
        .map(String::as_str)
        .ok_or_else(|| Error::InvalidConfig(format!("line {n} is out of range")))
}

fn cmd_score(
    line_a: Option<&str>,
    line_b: Option<&str>,
    file: Option<&Path>,
    line: Option<usize>,
    with: Option<usize>,
    opts: &RunOpts,
) -> Result<()> {
    let cfg = opts.config()?;
    let map = cfg.load_map()?;
    let (a, b) = match (file, line_a, line_b) {
        (Some(path), None, None) => {
            let lines = read_document(path)?;
            let n = line.ok_or_else(|| Error::InvalidConfig("--file needs --line".into()))?;
            let a = nth_line(&lines, n)?.to_string();
            match with {
                Some(m) => (a, nth_line(&lines, m)?.to_string()),
                None => return score_against_sample(&lines, n, &cfg),
            }
        }
        (None, Some(a), Some(b)) => (a.to_string(), b.to_string()),
        _ => {
            return Err(Error::InvalidConfig(
                "give two lines, or --file with --line [--with]".into(),
            ))
        }
    };
    println!("score {:.2}", compare_lines(&a, &b, &map)?);
    println!("{:<10} {:<8} {:<20} {:>8} {:>8} {:>8}  influential", "element", "class", "event", "min", "max", "swing");
    for v in variation_table(&a, &b, &map)? {
        let class = CharClass::from_row(v.row).map_or("?".to_string(), |c| format!("{c:?}"));
        println!(
            "({})({})     {:<8} {:<20} {:>8.2} {:>8.2} {:>8.2}  {}",
            v.col + 1,
            v.row + 1,
            class.to_lowercase(),
            EventKind::ALL[v.col].name(),
            v.min(),
            v.max(),
            v.swing(),
            if v.influential() { "yes" } else { "no" }
        );
    }
    Ok(())
}

fn score_against_sample(lines: &[String], n: usize, cfg: &RunConfig) -> Result<()> {
    let map = cfg.load_map()?;
    let reference = nth_line(lines, n)?;
    let mut csv = String::from("line,score\n");
    for (i, l) in lines.iter().enumerate().take(cfg.sample_lines) {
        if l.trim().is_empty() {
            continue;
        }
        csv.push_str(&format!("{},{}\n", i + 1, compare_lines(reference, l, &map)?));
    }
    write_atomic(&cfg.out_dir.join("scores.csv"), csv.as_bytes())?;
    if cfg.emit_svg {
        let svg = render_svg(&parse_csv(&csv)?);
        write_atomic(&cfg.out_dir.join("chart.svg"), svg.as_bytes())?;
    }
    Ok(())
}

fn cmd_chart(input: &Path, out: Option<&Path>, out_dir: &Path) -> Result<()> {
    let text = fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let svg = render_svg(&parse_csv(&text)?);
    let path = out.map_or_else(|| out_dir.join("chart.svg"), Path::to_path_buf);
    write_atomic(&path, svg.as_bytes())
}

fn cmd_gen(spec: &str, lines: usize, seed: Option<u64>, out: &Path, truth: Option<&Path>) -> Result<()> {
    let (doc, gt) = if spec == "figure3" {
        figure3(lines, seed.unwrap_or(1))?
    } else {
        let text = fs::read_to_string(spec).map_err(|e| Error::io(spec, e))?;
        let mut s: StructureSpec =
            serde_json::from_str(&text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        if let Some(seed) = seed {
            s.seed = seed;
        }
        gen_document(&s, lines)?
    };
    let mut text = doc.join("\n");
    text.push('\n');
    write_atomic(out, text.as_bytes())?;
    if let Some(path) = truth {
        let mut json = serde_json::to_vec_pretty(&gt)?;
        json.push(b'\n');
        write_atomic(path, &json)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze { input, opts } => cmd_analyze(input, opts),
        Command::Extract { input, opts } => cmd_extract(input, opts),
        Command::Score {
            line_a,
            line_b,
            file,
            line,
            with,
            opts,
        } => cmd_score(
            line_a.as_deref(),
            line_b.as_deref(),
            file.as_deref(),
            *line,
            *with,
            opts,
        ),
        Command::Chart { input, out, out_dir } => cmd_chart(input, out.as_deref(), out_dir),
        Command::Gen {
            spec,
            lines,
            seed,
            out,
            truth,
        } => cmd_gen(spec, *lines, *seed, out, truth.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("docstruct: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
