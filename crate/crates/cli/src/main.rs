use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use cppn2gan::corpus::{mario_corpus_stats, render_dungeon, render_mario, render_mario_path, zelda_corpus_stats};
use cppn2gan::encodings::{read_level, write_level, Level};
use cppn2gan::grid::TileGrid;
use cppn2gan::mario::{extend_pipes, solve_mario};
use cppn2gan::qd::{
    archive_dump, genomes_jsonl, heatmap_csv, log_csv, parse_archive_dump, run_map_elites_with, Evaluator, RunConfig,
};
use cppn2gan::zelda::{solve_dungeon, SolverOptions};

#[derive(Parser)]
#[command(name = "cppn2gan", version, about = "Evolve and inspect generated game levels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run MAP-Elites from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the number of generated offspring.
        #[arg(long)]
        generated: Option<usize>,
        /// Output directory; the archive dump goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a level file as text.
    Render {
        level: PathBuf,
        /// Overlay the solver's path.
        #[arg(long)]
        solve: bool,
    },
    /// Window counts, unique rooms and tile histograms for a corpus directory.
    CorpusStats {
        #[arg(long, value_enum)]
        game: Game,
        #[arg(long)]
        dir: PathBuf,
    },
    /// Turn an archive dump into CSV fitness grids.
    Heatmap {
        archive: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Game {
    Mario,
    Zelda,
}

enum Failure {
    /// Bad arguments or missing inputs; exit status 2.
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn require(path: &Path, what: &str) -> std::result::Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} not found: {}", path.display())))
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(config: &Path, seed: Option<u64>, generated: Option<usize>, out: Option<&Path>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(g) = generated {
        cfg.generated_count = g;
    }
    let decoder = cfg.build_decoder()?;
    let archive = run_map_elites_with(&cfg, Arc::clone(&decoder))?;
    let dump = archive_dump(&archive, cfg.domain, cfg.encoding);
    let Some(dir) = out else {
        print!("{dump}");
        return Ok(());
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("archive.txt"), &dump)?;
    fs::write(dir.join("genomes.jsonl"), genomes_jsonl(&archive)?)?;
    fs::write(dir.join("log.csv"), log_csv(&archive))?;
    if let Some(best) = archive.best() {
        let level = Evaluator::new(&cfg, decoder)?.phenotype(&best.genome)?;
        write_level(&level, fs::File::create(dir.join("best.level"))?)?;
    }
    println!(
        "evaluations={} filled_bins={} best_fitness={}",
        archive.evaluations(),
        archive.filled_bin_count(),
        archive.best().map_or(0.0, |e| e.fitness)
    );
    Ok(())
}

fn render(path: &Path, solve: bool) -> Result<()> {
    let level = read_level(BufReader::new(fs::File::open(path)?))?;
    match level {
        Level::Mario { segments } => {
            let stitched = TileGrid::stitch_horizontal(&segments)?;
            if !solve {
                print!("{}", render_mario(&stitched));
                return Ok(());
            }
            match solve_mario(&segments)? {
                Some(p) => {
                    print!("{}", render_mario_path(&extend_pipes(&stitched), &p));
                    println!("solution_length={}", p.len());
                }
                None => {
                    print!("{}", render_mario(&stitched));
                    println!("unsolvable");
                }
            }
        }
        Level::Zelda { dungeon } => {
            dungeon.validate()?;
            let path = solve.then(|| solve_dungeon(&dungeon, SolverOptions::default())).flatten();
            print!("{}", render_dungeon(&dungeon, path.as_ref()));
            if solve {
                match path {
                    Some(p) => println!("solution_steps={} rooms={}", p.len(), p.rooms().len()),
                    None => println!("unsolvable"),
                }
            }
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            seed,
            generated,
            out,
        } => {
            require(&config, "config")?;
            run(&config, seed, generated, out.as_deref())?;
        }
        Command::Render { level, solve } => {
            require(&level, "level file")?;
            render(&level, solve)?;
        }
        Command::CorpusStats { game, dir } => {
            if !dir.is_dir() {
                return Err(Failure::Usage(format!("corpus directory not found: {}", dir.display())));
            }
            let report = match game {
                Game::Mario => mario_corpus_stats(&dir).map(|s| s.report()),
                Game::Zelda => zelda_corpus_stats(&dir).map(|s| s.report()),
            }
            .map_err(anyhow::Error::from)?;
            print!("{report}");
        }
        Command::Heatmap { archive, out } => {
            require(&archive, "archive dump")?;
            let text = fs::read_to_string(&archive).map_err(anyhow::Error::from)?;
            let (domain, rows) = parse_archive_dump(&text).map_err(anyhow::Error::from)?;
            emit(out.as_deref(), &heatmap_csv(domain, &rows))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
