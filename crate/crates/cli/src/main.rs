use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use survidx::config::{PipelineConfig, CONFIG_KEYS};
use survidx::ensemble::{load_models, save_models};
use survidx::evalmetrics::{group_detections, parse_event_lines, EvalReport};
use survidx::imgcore::io::{write_pgm, Video};
use survidx::optflow::{horn_schunck_pyramidal, write_flow};
use survidx::pipeline::{self, TruthTable};
use survidx::store::{export_xml, ShotIndex};
use survidx::{synth, Error, ErrorKind};

fn config_help() -> String {
    let mut s = String::from("Config keys (TOML file via --config, or --set key=value):\n");
    let w = CONFIG_KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (key, range) in CONFIG_KEYS {
        let _ = writeln!(s, "  {key:<w$}  {range}");
    }
    s
}

#[derive(Parser)]
#[command(name = "survidx", version, about = "Index surveillance video by moving objects and query it by concept")]
#[command(after_help = config_help())]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set flow.sigma=1.0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic clip corpus with its ground-truth table.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyze every clip of a directory into a shot index.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        index: PathBuf,
    },
    /// Optical flow between frame N and N+1 of a clip, as a binary dump.
    Flow {
        clip: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Moving-object mask of frame N of a clip, as a PGM image.
    Segment {
        clip: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Descriptors of frame N of a clip, one vector per line.
    Extract {
        clip: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Train codebooks on the training shots and store every shot's signature.
    CodebookTrain {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one ensemble per target on the training shots' signatures.
    Train {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every indexed shot with the trained models.
    Classify {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        models: PathBuf,
        /// Recompute signatures with these codebooks first.
        #[arg(long)]
        codebooks: Option<PathBuf>,
    },
    /// Rank indexed shots by a concept or event score.
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// AP per concept and NDCR per event, from an index or from detection files.
    Eval {
        #[arg(long, required_unless_present = "detections")]
        index: Option<PathBuf>,
        #[arg(long, requires = "index")]
        truth: Option<PathBuf>,
        /// Detections as `event start end confidence` lines.
        #[arg(long, requires_all = ["references", "hours"], conflicts_with = "index")]
        detections: Option<PathBuf>,
        /// References as `event start end` lines.
        #[arg(long)]
        references: Option<PathBuf>,
        /// Duration of the evaluated material in hours.
        #[arg(long)]
        hours: Option<f64>,
        /// Also write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write shot records as XML.
    ExportXml {
        #[arg(long)]
        index: PathBuf,
        /// Shot to export; all shots when omitted.
        #[arg(long)]
        shot: Option<String>,
        /// Output file for one shot, or directory for all.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Ingest { .. } => "ingest",
            Command::Flow { .. } => "flow",
            Command::Segment { .. } => "segment",
            Command::Extract { .. } => "extract",
            Command::CodebookTrain { .. } => "codebook-train",
            Command::Train { .. } => "train",
            Command::Classify { .. } => "classify",
            Command::Query { .. } => "query",
            Command::Eval { .. } => "eval",
            Command::ExportXml { .. } => "export-xml",
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let text = match &cli.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    Ok(PipelineConfig::from_toml_with_overrides(&text, &cli.sets)?)
}

/// The clip, checked to have frames `n` and `n + 1`.
fn frame_pair(clip: &Path, n: usize) -> anyhow::Result<Video> {
    let video = pipeline::read_video(clip).with_context(|| format!("reading {}", clip.display()))?;
    if n + 1 >= video.frames.len() {
        return Err(Error::InvalidData(format!(
            "{} has {} frames; frame {n} has no successor",
            clip.display(),
            video.frames.len()
        ))
        .into());
    }
    Ok(video)
}

/// Writes to stdout; a closed pipe on the reading side is not an error.
fn emit(text: &str) -> std::io::Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r,
    }
}

fn load_index(dir: &Path) -> anyhow::Result<ShotIndex> {
    ShotIndex::load(dir).with_context(|| format!("loading index {}", dir.display()))
}

fn read_truth(path: &Path) -> anyhow::Result<TruthTable> {
    TruthTable::read(path).with_context(|| format!("reading truth table {}", path.display()))
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Synth { out } => {
            let shots = synth::generate_corpus(&cfg.synth);
            synth::write_corpus(out, &shots)?;
            println!("wrote {} clips to {}", shots.len(), out.display());
        }
        Command::Ingest { corpus, index } => {
            let idx = pipeline::ingest_corpus(corpus, &cfg)?;
            idx.save(index)?;
            println!("{}", pipeline::describe_index(&idx));
        }
        Command::Flow { clip, frame, out } => {
            let v = frame_pair(clip, *frame)?;
            let (a, b) = (v.frames[*frame].to_grayscale(), v.frames[*frame + 1].to_grayscale());
            let flow = horn_schunck_pyramidal(&a, &b, &cfg.hs_params())?;
            write_flow(BufWriter::new(fs::File::create(out)?), &flow)?;
        }
        Command::Segment { clip, frame, out } => {
            let v = frame_pair(clip, *frame)?;
            let a = pipeline::analyze_pair(&v.frames[*frame], &v.frames[*frame + 1], &cfg)?;
            write_pgm(BufWriter::new(fs::File::create(out)?), &a.segmentation.mask)?;
            println!("{} objects after {} steps", a.objects.len(), a.segmentation.iterations);
            for o in &a.objects {
                let b = o.bbox;
                println!(
                    "  area {} bbox {} {} {} {} mean speed {:.3}",
                    o.area, b.x, b.y, b.width, b.height, o.mean_speed
                );
            }
        }
        Command::Extract { clip, frame, out } => {
            let v = frame_pair(clip, *frame)?;
            let a = pipeline::analyze_pair(&v.frames[*frame], &v.frames[*frame + 1], &cfg)?;
            let mut text = String::new();
            for f in &a.features {
                let _ = write!(text, "{} {}", f.id.name(), f.region.name());
                for x in &f.values {
                    let _ = write!(text, " {x:?}");
                }
                text.push('\n');
            }
            match out {
                Some(p) => fs::write(p, text)?,
                None => emit(&text)?,
            }
        }
        Command::CodebookTrain { index, truth, out } => {
            let mut idx = load_index(index)?;
            let books = pipeline::train_codebooks(&idx, &read_truth(truth)?, &cfg)?;
            pipeline::attach_signatures(&mut idx, &books)?;
            pipeline::save_codebooks(out, &books)?;
            idx.save(index)?;
            println!("{} codebooks, signature length {}", books.books.len(), books.signature_len());
        }
        Command::Train { index, truth, out } => {
            let idx = load_index(index)?;
            let models = pipeline::train_models(&idx, &read_truth(truth)?, &cfg)?;
            save_models(out, &models)?;
            for m in &models {
                println!("{}: {} hypotheses over {} batches", m.target, m.hypotheses.len(), m.batches);
            }
        }
        Command::Classify { index, models, codebooks } => {
            let mut idx = load_index(index)?;
            if let Some(dir) = codebooks {
                pipeline::attach_signatures(&mut idx, &pipeline::load_codebooks(dir)?)?;
            }
            pipeline::classify_index(&mut idx, &load_models(models).with_context(|| format!("loading models from {}", models.display()))?)?;
            idx.save(index)?;
            println!("scored {} shots", idx.len());
        }
        Command::Query { index, target, top } => {
            let list = load_index(index)?.query(target, *top)?;
            for (rank, e) in list.entries.iter().enumerate() {
                println!("{:>4}  {}  {:.4}", rank + 1, e.shot, e.score);
            }
        }
        Command::Eval { index, truth, detections, references, hours, csv } => {
            let report = match (index, detections) {
                (Some(index), _) => {
                    let Some(truth) = truth else {
                        return Err(Error::Config("eval --index needs --truth".into()).into());
                    };
                    pipeline::evaluate(&load_index(index)?, &read_truth(truth)?, &cfg)?
                }
                (None, Some(dets)) => {
                    let (Some(refs), Some(hours)) = (references, hours) else {
                        bail!("eval --detections needs --references and --hours");
                    };
                    let dets = parse_event_lines(&fs::read_to_string(dets)?)?;
                    let refs = parse_event_lines(&fs::read_to_string(refs)?)?;
                    let sets = group_detections(&dets, &refs, *hours)?;
                    EvalReport::compute(&[], &sets, cfg.costs(), cfg.eval.threshold)?
                }
                (None, None) => bail!("eval needs --index or --detections"),
            };
            print!("{}", report.to_text());
            if let Some(p) = csv {
                fs::write(p, report.to_csv())?;
            }
        }
        Command::ExportXml { index, shot, out } => {
            let idx = load_index(index)?;
            match shot {
                Some(id) => {
                    let rec = idx
                        .get(id)
                        .ok_or_else(|| Error::InvalidData(format!("shot `{id}` is not in the index")))?;
                    let xml = export_xml(rec)?;
                    match out {
                        Some(p) => fs::write(p, xml)?,
                        None => emit(&xml)?,
                    }
                }
                None => {
                    let Some(dir) = out else {
                        bail!("exporting every shot needs --out <dir>");
                    };
                    fs::create_dir_all(dir)?;
                    for r in idx.records() {
                        fs::write(dir.join(format!("{}.xml", r.id)), export_xml(r)?)?;
                    }
                    println!("wrote {} records to {}", idx.len(), dir.display());
                }
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()).map(Error::kind) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Numerical) => 4,
        Some(ErrorKind::Data) => 3,
        None if err.chain().any(|e| e.is::<std::io::Error>()) => 3,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("survidx {}: {}", cli.command.name(), msg.join(": "));
            ExitCode::from(exit_code(&e))
        }
    }
}
