//! MAP-Elites over both games and both encodings.
//!
//! Offspring are produced in fixed-size batches on the calling thread, each
//! from its own generator seeded by `derive_seed(run_seed, evaluation_index)`.
//! Only evaluation fans out across threads, and results are inserted in
//! evaluation order, so a run is reproducible for any thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cppn::{self, crossover, minimal_genome, CppnGenome, InnovationCounter, Parent};
use crate::encodings::{
    cppn_to_mario_level, cppn_to_zelda_dungeon, direct_to_mario, direct_to_zelda, direct_variation_traced, DirectGenome,
    DungeonGenomeSpec, Level, MarioGenomeSpec,
};
use crate::error::{Error, Result};
use crate::mario::{self, MarioBinKey, MARIO_TILESET};
use crate::tensor_gen::{load_generator_weights, Decoder, StubDecoder};
use crate::zelda::{self, SolverOptions, ZeldaBinKey, ZELDA_TILESET};

pub const CPPN_CROSSOVER_RATE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Mario,
    Zelda,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingKind {
    Cppn2gan,
    Direct2gan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BinKey {
    Mario(MarioBinKey),
    Zelda(ZeldaBinKey),
}

impl BinKey {
    fn fields(&self) -> [u32; 3] {
        match self {
            BinKey::Mario(k) => [k.decoration as u32, k.space as u32, k.leniency as u32],
            BinKey::Zelda(k) => [k.water as u32, k.wall as u32, k.rooms as u32],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "genome", rename_all = "lowercase")]
pub enum Genome {
    Cppn(CppnGenome),
    Direct(DirectGenome),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Elite {
    pub genome: Genome,
    pub fitness: f64,
    pub bin: BinKey,
    /// Evaluation index at which this individual was produced.
    pub birth_index: u64,
}

/// An accepted insertion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsertEvent {
    pub bin: BinKey,
    pub fitness: f64,
    pub birth_index: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub evaluations: u64,
    pub filled_bins: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QdArchive {
    occupied: BTreeMap<BinKey, Elite>,
    evaluations: u64,
    log: Vec<LogEntry>,
    events: Vec<InsertEvent>,
    keep_unsolvable: bool,
}

impl Default for QdArchive {
    fn default() -> Self {
        QdArchive::new(true)
    }
}

impl QdArchive {
    /// With `keep_unsolvable`, fitness-0 individuals may claim empty bins.
    pub fn new(keep_unsolvable: bool) -> Self {
        QdArchive {
            occupied: BTreeMap::new(),
            evaluations: 0,
            log: Vec::new(),
            events: Vec::new(),
            keep_unsolvable,
        }
    }

    /// Accepts the candidate if its bin is empty or it strictly beats the
    /// incumbent.
    pub fn insert(&mut self, candidate: Elite) -> bool {
        if candidate.fitness.is_nan() || candidate.fitness < 0.0 {
            return false;
        }
        if candidate.fitness == 0.0 && !self.keep_unsolvable {
            return false;
        }
        let accept = match self.occupied.get(&candidate.bin) {
            None => true,
            Some(incumbent) => candidate.fitness > incumbent.fitness,
        };
        if accept {
            self.events.push(InsertEvent {
                bin: candidate.bin,
                fitness: candidate.fitness,
                birth_index: candidate.birth_index,
            });
            self.occupied.insert(candidate.bin, candidate);
        }
        accept
    }

    pub fn filled_bin_count(&self) -> usize {
        self.occupied.len()
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn events(&self) -> &[InsertEvent] {
        &self.events
    }

    pub fn elites(&self) -> impl Iterator<Item = &Elite> {
        self.occupied.values()
    }

    pub fn get(&self, bin: &BinKey) -> Option<&Elite> {
        self.occupied.get(bin)
    }

    pub fn best(&self) -> Option<&Elite> {
        self.occupied
            .values()
            .fold(None, |best: Option<&Elite>, e| match best {
                Some(b) if b.fitness >= e.fitness => Some(b),
                _ => Some(e),
            })
    }

    /// Counts an evaluation and appends a log entry every `interval`.
    fn record_evaluation(&mut self, interval: u64) {
        self.evaluations += 1;
        if interval > 0 && self.evaluations.is_multiple_of(interval) {
            self.log.push(LogEntry {
                evaluations: self.evaluations,
                filled_bins: self.filled_bin_count(),
            });
        }
    }

    /// Uniformly chosen occupied bin's elite.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&Elite> {
        if self.occupied.is_empty() {
            return None;
        }
        self.occupied.values().nth(rng.random_range(0..self.occupied.len()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[derive(Default)]
pub enum DecoderChoice {
    #[default]
    Stub,
    Weights(PathBuf),
}


fn default_init() -> usize {
    100
}
fn default_generated() -> usize {
    50_000
}
fn default_batch() -> usize {
    64
}
fn default_segments() -> usize {
    10
}
fn default_grid() -> usize {
    10
}
fn default_budget() -> usize {
    zelda::DEFAULT_STATE_BUDGET
}
fn default_interval() -> u64 {
    100
}
fn yes() -> bool {
    true
}

/// Run parameters. Read from TOML; every key but `domain` and `encoding`
/// has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: Domain,
    pub encoding: EncodingKind,
    #[serde(default)]
    pub decoder: DecoderChoice,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_init")]
    pub init_count: usize,
    #[serde(default = "default_generated")]
    pub generated_count: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Mario segments per level.
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default = "default_grid")]
    pub grid_rows: usize,
    #[serde(default = "default_grid")]
    pub grid_cols: usize,
    /// Stub decoder latent size; defaults to 30 for Mario and 10 for Zelda.
    /// Ignored when weights are loaded.
    #[serde(default)]
    pub latent_size: Option<usize>,
    #[serde(default = "yes")]
    pub archive_unsolvable: bool,
    #[serde(default = "yes")]
    pub soft_locked_open: bool,
    #[serde(default = "default_budget")]
    pub state_budget: usize,
    #[serde(default = "default_interval")]
    pub log_interval: u64,
    /// Evaluate batches across threads.
    #[serde(default = "yes")]
    pub parallel: bool,
}

impl RunConfig {
    pub fn new(domain: Domain, encoding: EncodingKind) -> Self {
        RunConfig {
            domain,
            encoding,
            decoder: DecoderChoice::Stub,
            seed: 0,
            init_count: default_init(),
            generated_count: default_generated(),
            batch_size: default_batch(),
            segments: default_segments(),
            grid_rows: default_grid(),
            grid_cols: default_grid(),
            latent_size: None,
            archive_unsolvable: true,
            soft_locked_open: true,
            state_budget: default_budget(),
            log_interval: default_interval(),
            parallel: true,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // weight paths are relative to the config file
        if let DecoderChoice::Weights(w) = &cfg.decoder {
            if w.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.decoder = DecoderChoice::Weights(dir.join(w));
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if self.init_count == 0 {
            return fail("init_count must be positive");
        }
        if self.segments == 0 || self.grid_rows == 0 || self.grid_cols == 0 {
            return fail("level dimensions must be positive");
        }
        if self.latent_size == Some(0) {
            return fail("latent_size must be positive");
        }
        if self.state_budget == 0 {
            return fail("state_budget must be positive");
        }
        Ok(())
    }

    pub fn build_decoder(&self) -> Result<Arc<dyn Decoder>> {
        Ok(match &self.decoder {
            DecoderChoice::Stub => Arc::new(StubDecoder {
                latent_size: self.latent_size.unwrap_or(match self.domain {
                    Domain::Mario => 30,
                    Domain::Zelda => 10,
                }),
                tileset_size: match self.domain {
                    Domain::Mario => MARIO_TILESET,
                    Domain::Zelda => ZELDA_TILESET,
                },
            }),
            DecoderChoice::Weights(path) => Arc::new(load_generator_weights(path)?),
        })
    }
}

/// SplitMix64 finaliser over the pair; stable across platforms and releases.
pub fn derive_seed(run_seed: u64, index: u64) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    mix(mix(run_seed) ^ index)
}

/// Genotype-to-score pipeline for one domain and encoding.
pub struct Evaluator {
    domain: Domain,
    encoding: EncodingKind,
    decoder: Arc<dyn Decoder>,
    mario: MarioGenomeSpec,
    dungeon: DungeonGenomeSpec,
    solver: SolverOptions,
}

impl Evaluator {
    pub fn new(config: &RunConfig, decoder: Arc<dyn Decoder>) -> Result<Self> {
        let expected = match config.domain {
            Domain::Mario => MARIO_TILESET,
            Domain::Zelda => ZELDA_TILESET,
        };
        if decoder.tileset_size() != expected {
            return Err(Error::Config(format!(
                "{:?} needs a decoder with {expected} tiles, got {}",
                config.domain,
                decoder.tileset_size()
            )));
        }
        let latent_size = decoder.latent_size();
        Ok(Evaluator {
            domain: config.domain,
            encoding: config.encoding,
            mario: MarioGenomeSpec {
                segments: config.segments,
                latent_size,
            },
            dungeon: DungeonGenomeSpec {
                rows: config.grid_rows,
                cols: config.grid_cols,
                latent_size,
            },
            decoder,
            solver: SolverOptions {
                budget: config.state_budget,
                soft_locked_open: config.soft_locked_open,
            },
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn encoding(&self) -> EncodingKind {
        self.encoding
    }

    /// `(declared inputs, outputs)` of CPPNs for this domain.
    pub fn cppn_signature(&self) -> (usize, usize) {
        match self.domain {
            Domain::Mario => (1, self.mario.latent_size),
            Domain::Zelda => (3, self.dungeon.block_len()),
        }
    }

    pub fn direct_len(&self) -> usize {
        match self.domain {
            Domain::Mario => self.mario.segments * self.mario.latent_size,
            Domain::Zelda => self.dungeon.rows * self.dungeon.cols * self.dungeon.block_len(),
        }
    }

    pub fn phenotype(&self, genome: &Genome) -> Result<Level> {
        let d = self.decoder.as_ref();
        Ok(match (self.domain, genome) {
            (Domain::Mario, Genome::Cppn(g)) => Level::Mario {
                segments: cppn_to_mario_level(g, d, &self.mario)?,
            },
            (Domain::Mario, Genome::Direct(g)) => Level::Mario {
                segments: direct_to_mario(g, d, &self.mario)?,
            },
            (Domain::Zelda, Genome::Cppn(g)) => Level::Zelda {
                dungeon: cppn_to_zelda_dungeon(g, d, &self.dungeon)?,
            },
            (Domain::Zelda, Genome::Direct(g)) => Level::Zelda {
                dungeon: direct_to_zelda(g, d, &self.dungeon)?,
            },
        })
    }

    /// Bin and fitness, or `None` for individuals that cannot be binned
    /// (dungeons without any reachable room).
    pub fn evaluate(&self, genome: &Genome) -> Result<Option<(BinKey, f64)>> {
        match self.phenotype(genome)? {
            Level::Mario { segments } => {
                let scores = mario::level_scores(&segments)?;
                let fitness = mario::mario_fitness(&segments)?;
                Ok(Some((BinKey::Mario(mario::mario_bin(&scores)), fitness)))
            }
            Level::Zelda { dungeon } => {
                let reachable = zelda::reachable_rooms(&dungeon).len();
                let (water, wall) = match zelda::water_wall_percentages(&dungeon) {
                    Ok(p) => p,
                    Err(Error::Evaluation(_)) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let fitness = zelda::zelda_fitness(&dungeon, self.solver);
                Ok(Some((BinKey::Zelda(zelda::zelda_bin(water, wall, reachable)), fitness)))
            }
        }
    }

    pub fn random_genome<R: Rng + ?Sized>(&self, rng: &mut R) -> Genome {
        match self.encoding {
            EncodingKind::Cppn2gan => {
                let (i, o) = self.cppn_signature();
                Genome::Cppn(minimal_genome(i, o, rng))
            }
            EncodingKind::Direct2gan => Genome::Direct(DirectGenome::random(self.direct_len(), rng)),
        }
    }

    /// One offspring from a uniformly sampled elite. CPPNs cross over with a
    /// second sampled elite half the time and are always mutated afterwards.
    pub fn offspring<R: Rng + ?Sized>(
        &self,
        parents: &[&Elite],
        rng: &mut R,
        counter: &mut InnovationCounter,
    ) -> Result<Genome> {
        Ok(self.offspring_traced(parents, rng, counter)?.0)
    }

    /// As [`Evaluator::offspring`], also reporting whether crossover ran.
    pub fn offspring_traced<R: Rng + ?Sized>(
        &self,
        parents: &[&Elite],
        rng: &mut R,
        counter: &mut InnovationCounter,
    ) -> Result<(Genome, bool)> {
        let Some(&first) = parents.choose(rng) else {
            return Ok((self.random_genome(rng), false));
        };
        match &first.genome {
            Genome::Cppn(a) => {
                let crossed = rng.random_bool(CPPN_CROSSOVER_RATE);
                let base = if crossed {
                    let second = *parents.choose(rng).expect("non-empty");
                    let Genome::Cppn(b) = &second.genome else {
                        return Err(Error::Config("archive mixes encodings".into()));
                    };
                    let fitter = if second.fitness > first.fitness {
                        Parent::B
                    } else {
                        Parent::A
                    };
                    crossover(a, b, fitter, rng)?
                } else {
                    a.clone()
                };
                Ok((Genome::Cppn(cppn::mutate(&base, rng, counter)), crossed))
            }
            Genome::Direct(a) => {
                let second = *parents.choose(rng).expect("non-empty");
                let Genome::Direct(b) = &second.genome else {
                    return Err(Error::Config("archive mixes encodings".into()));
                };
                let (child, trace) = direct_variation_traced(a, b, rng)?;
                Ok((Genome::Direct(child), trace.crossed))
            }
        }
    }
}

pub fn run_map_elites(config: &RunConfig) -> Result<QdArchive> {
    config.validate()?;
    let decoder = config.build_decoder()?;
    run_map_elites_with(config, decoder)
}

/// Initial population of `init_count` random genomes, then `generated_count`
/// offspring. Every evaluation counts, including discarded ones.
pub fn run_map_elites_with(config: &RunConfig, decoder: Arc<dyn Decoder>) -> Result<QdArchive> {
    config.validate()?;
    let eval = Evaluator::new(config, decoder)?;
    let (ins, outs) = eval.cppn_signature();
    let mut counter = InnovationCounter::for_signature(ins, outs);
    let mut archive = QdArchive::new(config.archive_unsolvable);
    let total = (config.init_count + config.generated_count) as u64;
    let mut index = 0u64;
    while index < total {
        let end = (index + config.batch_size as u64).min(total);
        let init_end = (config.init_count as u64).min(end);
        let mut batch = Vec::with_capacity((end - index) as usize);
        {
            let parents: Vec<&Elite> = archive.elites().collect();
            for i in index..end {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, i));
                let g = if i < init_end {
                    eval.random_genome(&mut rng)
                } else {
                    eval.offspring(&parents, &mut rng, &mut counter)?
                };
                batch.push((i, g));
            }
        }
        let scored: Vec<Result<Option<(BinKey, f64)>>> = if config.parallel {
            batch.par_iter().map(|(_, g)| eval.evaluate(g)).collect()
        } else {
            batch.iter().map(|(_, g)| eval.evaluate(g)).collect()
        };
        for ((i, genome), result) in batch.into_iter().zip(scored) {
            if let Some((bin, fitness)) = result? {
                archive.insert(Elite {
                    genome,
                    fitness,
                    bin,
                    birth_index: i,
                });
            }
            archive.record_evaluation(config.log_interval);
        }
        index = end;
    }
    Ok(archive)
}

pub const ARCHIVE_HEADER: &str = "# cppn2gan-archive 1";

fn bin_columns(domain: Domain) -> &'static str {
    match domain {
        Domain::Mario => "decoration_bin,space_bin,leniency_bin",
        Domain::Zelda => "water_bin,wall_bin,rooms_bin",
    }
}

/// Header, one `key=value` metadata line, a column line, then one row per
/// occupied bin in bin order.
pub fn archive_dump(archive: &QdArchive, domain: Domain, encoding: EncodingKind) -> String {
    let mut out = String::new();
    let enc = match encoding {
        EncodingKind::Cppn2gan => "cppn2gan",
        EncodingKind::Direct2gan => "direct2gan",
    };
    let dom = match domain {
        Domain::Mario => "mario",
        Domain::Zelda => "zelda",
    };
    writeln!(out, "{ARCHIVE_HEADER}").unwrap();
    writeln!(
        out,
        "domain={dom} encoding={enc} evaluations={} filled_bins={}",
        archive.evaluations(),
        archive.filled_bin_count()
    )
    .unwrap();
    writeln!(out, "{},fitness,birth_index", bin_columns(domain)).unwrap();
    for e in archive.elites() {
        let [a, b, c] = e.bin.fields();
        writeln!(out, "{a},{b},{c},{},{}", e.fitness, e.birth_index).unwrap();
    }
    out
}

/// One JSON object per elite: `{"birth_index": .., "genome": ..}`.
pub fn genomes_jsonl(archive: &QdArchive) -> Result<String> {
    #[derive(Serialize)]
    struct Row<'a> {
        birth_index: u64,
        genome: &'a Genome,
    }
    let mut out = String::new();
    for e in archive.elites() {
        out.push_str(&serde_json::to_string(&Row {
            birth_index: e.birth_index,
            genome: &e.genome,
        })?);
        out.push('\n');
    }
    Ok(out)
}

pub fn log_csv(archive: &QdArchive) -> String {
    let mut out = String::from("evaluations,filled_bins\n");
    for l in archive.log() {
        writeln!(out, "{},{}", l.evaluations, l.filled_bins).unwrap();
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DumpRow {
    pub bin: BinKey,
    pub fitness: f64,
    pub birth_index: u64,
}

pub fn parse_archive_dump(text: &str) -> Result<(Domain, Vec<DumpRow>)> {
    let mut lines = text.lines();
    let fmt = |m: String| Error::Format(m);
    if lines.next() != Some(ARCHIVE_HEADER) {
        return Err(fmt("missing archive header".into()));
    }
    let meta = lines.next().ok_or_else(|| fmt("missing metadata line".into()))?;
    let domain = match meta
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("domain="))
    {
        Some("mario") => Domain::Mario,
        Some("zelda") => Domain::Zelda,
        other => return Err(fmt(format!("unknown domain {other:?}"))),
    };
    lines.next().ok_or_else(|| fmt("missing column line".into()))?;
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let parts: Vec<&str> = line.split(',').collect();
        let bad = || fmt(format!("bad archive row {}: `{line}`", n + 1));
        if parts.len() != 5 {
            return Err(bad());
        }
        let num = |s: &str| s.trim().parse::<u32>().map_err(|_| bad());
        let (a, b, c) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        let bin = match domain {
            Domain::Mario => BinKey::Mario(MarioBinKey {
                decoration: a as u8,
                space: b as u8,
                leniency: c as u8,
            }),
            Domain::Zelda => BinKey::Zelda(ZeldaBinKey {
                water: a as u8,
                wall: b as u8,
                rooms: c as u16,
            }),
        };
        rows.push(DumpRow {
            bin,
            fitness: parts[3].trim().parse().map_err(|_| bad())?,
            birth_index: parts[4].trim().parse().map_err(|_| bad())?,
        });
    }
    Ok((domain, rows))
}

/// Fitness grids per slice. Mario: one decoration x space grid per leniency
/// bin. Zelda: one water x wall grid per occupied reachable-room count.
/// Empty cells are blank.
pub fn heatmap_csv(domain: Domain, rows: &[DumpRow]) -> String {
    let mut slices: BTreeMap<u32, [[Option<f64>; 10]; 10]> = BTreeMap::new();
    for r in rows {
        let [a, b, c] = r.bin.fields();
        if a < 10 && b < 10 {
            slices.entry(c).or_insert([[None; 10]; 10])[a as usize][b as usize] = Some(r.fitness);
        }
    }
    if domain == Domain::Mario {
        for l in 0..10 {
            slices.entry(l).or_insert([[None; 10]; 10]);
        }
    }
    let (slice_name, row_name, col_name) = match domain {
        Domain::Mario => ("leniency_bin", "decoration_bin", "space_bin"),
        Domain::Zelda => ("rooms_bin", "water_bin", "wall_bin"),
    };
    let mut out = String::from("# cppn2gan-heatmap 1\n");
    for (slice, grid) in &slices {
        writeln!(out, "{slice_name}={slice}").unwrap();
        let header: Vec<String> = (0..10).map(|c| format!("{col_name}{c}")).collect();
        writeln!(out, "{row_name},{}", header.join(",")).unwrap();
        for (r, row) in grid.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| v.map(|f| f.to_string()).unwrap_or_default()).collect();
            writeln!(out, "{r},{}", cells.join(",")).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn elite(bin: u16, fitness: f64, birth: u64) -> Elite {
        Elite {
            genome: Genome::Direct(DirectGenome(vec![])),
            fitness,
            bin: BinKey::Zelda(ZeldaBinKey {
                water: 0,
                wall: 0,
                rooms: bin,
            }),
            birth_index: birth,
        }
    }

    #[test]
    fn insert_rules() {
        let mut a = QdArchive::default();
        assert_eq!(a.filled_bin_count(), 0);
        assert!(a.insert(elite(1, 5.0, 0)));
        assert_eq!(a.filled_bin_count(), 1);
        assert!(!a.insert(elite(1, 3.0, 1)));
        assert!(!a.insert(elite(1, 5.0, 2)));
        assert_eq!(a.get(&elite(1, 0.0, 0).bin).unwrap().birth_index, 0);
        assert!(a.insert(elite(1, 6.0, 3)));
        assert_eq!(a.filled_bin_count(), 1);
        assert_eq!(a.events().len(), 2);
    }

    #[test]
    fn unsolvable_switch() {
        let mut keep = QdArchive::new(true);
        assert!(keep.insert(elite(2, 0.0, 0)));
        assert!(keep.insert(elite(2, 0.5, 1)));
        let mut drop = QdArchive::new(false);
        assert!(!drop.insert(elite(2, 0.0, 0)));
    }

    #[test]
    fn config_defaults_and_errors() {
        let cfg = RunConfig::from_toml_str("domain = \"zelda\"\nencoding = \"cppn2gan\"\n").unwrap();
        assert_eq!(cfg, RunConfig::new(Domain::Zelda, EncodingKind::Cppn2gan));
        assert!(RunConfig::from_toml_str("domain = \"zelda\"").is_err());
        assert!(RunConfig::from_toml_str("domain = \"zelda\"\nencoding = \"cppn2gan\"\nbogus = 1").is_err());
        assert!(RunConfig::from_toml_str("domain = \"zelda\"\nencoding = \"cppn2gan\"\nbatch_size = 0").is_err());
        let w = RunConfig::from_toml_str("domain = \"mario\"\nencoding = \"direct2gan\"\ndecoder = { weights = \"m.ganw\" }").unwrap();
        assert_eq!(w.decoder, DecoderChoice::Weights("m.ganw".into()));
    }

    #[test]
    fn zero_generated_keeps_initial_population() {
        let mut cfg = RunConfig::new(Domain::Zelda, EncodingKind::Direct2gan);
        cfg.grid_rows = 3;
        cfg.grid_cols = 3;
        cfg.init_count = 20;
        cfg.generated_count = 0;
        let a = run_map_elites(&cfg).unwrap();
        assert!(a.filled_bin_count() <= 20);
        assert_eq!(a.evaluations(), 20);
    }

    #[test]
    fn dump_round_trip() {
        let mut cfg = RunConfig::new(Domain::Mario, EncodingKind::Cppn2gan);
        cfg.segments = 2;
        cfg.init_count = 10;
        cfg.generated_count = 30;
        let a = run_map_elites(&cfg).unwrap();
        let text = archive_dump(&a, Domain::Mario, EncodingKind::Cppn2gan);
        let (domain, rows) = parse_archive_dump(&text).unwrap();
        assert_eq!(domain, Domain::Mario);
        assert_eq!(rows.len(), a.filled_bin_count());
        for (row, e) in rows.iter().zip(a.elites()) {
            assert_eq!((row.bin, row.fitness, row.birth_index), (e.bin, e.fitness, e.birth_index));
        }
        let heat = heatmap_csv(domain, &rows);
        assert_eq!(heat.lines().filter(|l| l.starts_with("leniency_bin=")).count(), 10);
    }

    #[test]
    fn seeds_differ_by_index() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(7, 99), derive_seed(7, 99));
    }
}
