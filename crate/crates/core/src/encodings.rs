//! Genotype to phenotype mappings.
//!
//! Both encodings end in the same place: Mario levels are a left-to-right list
//! of decoded segments, Zelda dungeons come from one [`RoomDecode`] per grid
//! cell fed through [`assemble_dungeon`]. The CPPN path queries a network per
//! segment position; the direct path slices a flat vector.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cppn::CppnGenome;
use crate::error::{Error, Result};
use crate::grid::TileGrid;
use crate::tensor_gen::{Decoder, LatentVector};

pub const MARIO_SEGMENT_WIDTH: usize = 28;
pub const MARIO_SEGMENT_HEIGHT: usize = 14;
pub const ZELDA_ROOM_WIDTH: usize = 16;
pub const ZELDA_ROOM_HEIGHT: usize = 11;
/// The 12x7 floor region sits inside a two-tile wall border.
pub const ZELDA_INTERIOR_X: std::ops::Range<usize> = 2..14;
pub const ZELDA_INTERIOR_Y: std::ops::Range<usize> = 2..9;
pub const ZELDA_ROOM_CENTER: Cell = Cell { x: 8, y: 5 };

/// Number of auxiliary layout values per room.
pub const ROOM_AUX_OUTPUTS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarioGenomeSpec {
    pub segments: usize,
    pub latent_size: usize,
}

impl Default for MarioGenomeSpec {
    fn default() -> Self {
        MarioGenomeSpec {
            segments: 10,
            latent_size: 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DungeonGenomeSpec {
    pub rows: usize,
    pub cols: usize,
    pub latent_size: usize,
}

impl Default for DungeonGenomeSpec {
    fn default() -> Self {
        DungeonGenomeSpec {
            rows: 10,
            cols: 10,
            latent_size: 10,
        }
    }
}

impl DungeonGenomeSpec {
    pub fn block_len(&self) -> usize {
        self.latent_size + ROOM_AUX_OUTPUTS
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RoomCoord {
    pub row: usize,
    pub col: usize,
}

impl RoomCoord {
    pub fn new(row: usize, col: usize) -> Self {
        RoomCoord { row, col }
    }
}

/// Tile position inside a room.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

/// One grid cell's worth of decoder input and layout controls.
#[derive(Clone, Debug, PartialEq)]
pub struct RoomDecode {
    pub z: LatentVector,
    pub present: f64,
    pub right_door: f64,
    pub down_door: f64,
    pub right_type: f64,
    pub down_type: f64,
    pub start_end_pref: f64,
}

impl RoomDecode {
    /// Latent first, then presence, right door, down door, right type, down
    /// type and start/end preference. Auxiliary values are clamped to
    /// `[-1, 1]`.
    pub fn from_block(block: &[f64], latent_size: usize) -> Result<Self> {
        if block.len() != latent_size + ROOM_AUX_OUTPUTS {
            return Err(Error::input(format!(
                "room block has {} values, expected {}",
                block.len(),
                latent_size + ROOM_AUX_OUTPUTS
            )));
        }
        let aux = |i: usize| {
            let v = block[latent_size + i];
            if v.is_nan() {
                0.0
            } else {
                v.clamp(-1.0, 1.0)
            }
        };
        Ok(RoomDecode {
            z: LatentVector::new(block[..latent_size].iter().copied()),
            present: aux(0),
            right_door: aux(1),
            down_door: aux(2),
            right_type: aux(3),
            down_type: aux(4),
            start_end_pref: aux(5),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoorKind {
    #[default]
    None,
    Plain,
    SoftLocked,
    Bombable,
    Locked,
}

impl DoorKind {
    /// `[-1, 0]` plain, `(0, 0.33]` soft-locked, `(0.33, 0.66]` bombable,
    /// above that locked.
    pub fn from_type_output(t: f64) -> DoorKind {
        if t <= 0.0 || t.is_nan() {
            DoorKind::Plain
        } else if t <= 0.33 {
            DoorKind::SoftLocked
        } else if t <= 0.66 {
            DoorKind::Bombable
        } else {
            DoorKind::Locked
        }
    }

    pub fn is_door(self) -> bool {
        self != DoorKind::None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyPlacement {
    pub room: RoomCoord,
    pub cell: Cell,
}

/// Door between two horizontally or vertically adjacent rooms, named by its
/// upper-left room.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DoorId {
    Right(RoomCoord),
    Down(RoomCoord),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DungeonLayout {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub rooms: Vec<Option<TileGrid>>,
    pub doors_right: Vec<DoorKind>,
    pub doors_down: Vec<DoorKind>,
    pub keys: Vec<KeyPlacement>,
    /// `None` only when no room is present.
    pub start: Option<RoomCoord>,
    pub goal: Option<RoomCoord>,
}

impl DungeonLayout {
    /// Layout with no rooms and no doors.
    pub fn empty(rows: usize, cols: usize) -> Self {
        DungeonLayout {
            rows,
            cols,
            rooms: vec![None; rows * cols],
            doors_right: vec![DoorKind::None; rows * cols],
            doors_down: vec![DoorKind::None; rows * cols],
            keys: Vec::new(),
            start: None,
            goal: None,
        }
    }

    #[inline]
    pub fn index(&self, c: RoomCoord) -> usize {
        c.row * self.cols + c.col
    }

    pub fn coord(&self, index: usize) -> RoomCoord {
        RoomCoord::new(index / self.cols, index % self.cols)
    }

    pub fn room(&self, c: RoomCoord) -> Option<&TileGrid> {
        self.rooms.get(self.index(c)).and_then(|r| r.as_ref())
    }

    pub fn is_present(&self, c: RoomCoord) -> bool {
        c.row < self.rows && c.col < self.cols && self.rooms[self.index(c)].is_some()
    }

    pub fn present_rooms(&self) -> impl Iterator<Item = RoomCoord> + '_ {
        (0..self.rooms.len())
            .filter(|&i| self.rooms[i].is_some())
            .map(|i| self.coord(i))
    }

    pub fn door(&self, id: DoorId) -> DoorKind {
        match id {
            DoorId::Right(c) => self.doors_right[self.index(c)],
            DoorId::Down(c) => self.doors_down[self.index(c)],
        }
    }

    /// Every placed door in row-major room order, right before down.
    pub fn doors(&self) -> impl Iterator<Item = (DoorId, DoorKind)> + '_ {
        (0..self.rooms.len()).flat_map(move |i| {
            let c = self.coord(i);
            [
                (DoorId::Right(c), self.doors_right[i]),
                (DoorId::Down(c), self.doors_down[i]),
            ]
            .into_iter()
            .filter(|(_, k)| k.is_door())
        })
    }

    /// Neighbouring rooms reachable through a door, with the door's id and
    /// kind, in the order up, left, right, down.
    pub fn neighbours(&self, c: RoomCoord) -> Vec<(RoomCoord, DoorId, DoorKind)> {
        let mut out = Vec::with_capacity(4);
        if c.row > 0 {
            let up = RoomCoord::new(c.row - 1, c.col);
            let k = self.doors_down[self.index(up)];
            if k.is_door() {
                out.push((up, DoorId::Down(up), k));
            }
        }
        if c.col > 0 {
            let left = RoomCoord::new(c.row, c.col - 1);
            let k = self.doors_right[self.index(left)];
            if k.is_door() {
                out.push((left, DoorId::Right(left), k));
            }
        }
        let k = self.doors_right[self.index(c)];
        if k.is_door() {
            out.push((RoomCoord::new(c.row, c.col + 1), DoorId::Right(c), k));
        }
        let k = self.doors_down[self.index(c)];
        if k.is_door() {
            out.push((RoomCoord::new(c.row + 1, c.col), DoorId::Down(c), k));
        }
        out
    }

    pub fn locked_door_count(&self) -> usize {
        self.doors().filter(|(_, k)| *k == DoorKind::Locked).count()
    }

    /// Checks door legality, key conservation and start/goal placement.
    pub fn validate(&self) -> Result<()> {
        let n = self.rows * self.cols;
        if self.rooms.len() != n || self.doors_right.len() != n || self.doors_down.len() != n {
            return Err(Error::input("layout arrays disagree with grid size"));
        }
        for room in self.rooms.iter().flatten() {
            if room.width() != ZELDA_ROOM_WIDTH || room.height() != ZELDA_ROOM_HEIGHT || room.tileset_size() != 3 {
                return Err(Error::input(format!(
                    "room is {}x{} over {} tiles, expected 16x11 over 3",
                    room.width(),
                    room.height(),
                    room.tileset_size()
                )));
            }
        }
        for (id, _) in self.doors() {
            let (a, b) = match id {
                DoorId::Right(c) => (c, RoomCoord::new(c.row, c.col + 1)),
                DoorId::Down(c) => (c, RoomCoord::new(c.row + 1, c.col)),
            };
            if !self.is_present(a) || !self.is_present(b) {
                return Err(Error::input(format!("door {id:?} touches an absent room")));
            }
        }
        if self.keys.len() != self.locked_door_count() {
            return Err(Error::input("key count differs from locked door count"));
        }
        for k in &self.keys {
            if !self.is_present(k.room) {
                return Err(Error::input("key placed in an absent room"));
            }
        }
        let present = self.present_rooms().count();
        match (self.start, self.goal) {
            (None, None) if present == 0 => Ok(()),
            (Some(s), Some(g)) if self.is_present(s) && self.is_present(g) => {
                if s == g && present > 1 {
                    Err(Error::input("start equals goal with several rooms present"))
                } else {
                    Ok(())
                }
            }
            _ => Err(Error::input("start/goal inconsistent with present rooms")),
        }
    }
}

/// Scales `index` of `count` evenly onto `[-1, 1]`; a single position maps to 0.
pub fn scaled_coordinate(index: usize, count: usize) -> Result<f64> {
    if index >= count {
        return Err(Error::input(format!("index {index} outside 0..{count}")));
    }
    if count == 1 {
        return Ok(0.0);
    }
    Ok(-1.0 + 2.0 * index as f64 / (count - 1) as f64)
}

pub fn mario_segment_input(index: usize, segments: usize) -> Result<f64> {
    scaled_coordinate(index, segments)
}

fn check_decoder(decoder: &dyn Decoder, latent_size: usize) -> Result<()> {
    if decoder.latent_size() != latent_size {
        return Err(Error::input(format!(
            "decoder takes {} latent values, genome spec says {latent_size}",
            decoder.latent_size()
        )));
    }
    Ok(())
}

pub fn cppn_to_mario_level(genome: &CppnGenome, decoder: &dyn Decoder, spec: &MarioGenomeSpec) -> Result<Vec<TileGrid>> {
    if spec.segments == 0 {
        return Err(Error::input("level needs at least one segment"));
    }
    if genome.declared_inputs() != 1 || genome.output_count != spec.latent_size {
        return Err(Error::input(format!(
            "Mario CPPN needs 1 input and {} outputs, genome has {} and {}",
            spec.latent_size,
            genome.declared_inputs(),
            genome.output_count
        )));
    }
    check_decoder(decoder, spec.latent_size)?;
    let net = genome.compile();
    (0..spec.segments)
        .map(|i| {
            let x = mario_segment_input(i, spec.segments)?;
            let z = LatentVector::new(net.activate(&[x])?);
            decoder.decode(&z, MARIO_SEGMENT_WIDTH, MARIO_SEGMENT_HEIGHT)
        })
        .collect()
}

/// CPPN outputs for every grid cell, queried with `(x, y, r)` where `x`
/// follows the column, `y` the row, and `r` is the distance of the scaled
/// point from the origin.
pub fn cppn_room_blocks(genome: &CppnGenome, spec: &DungeonGenomeSpec) -> Result<Vec<Vec<f64>>> {
    if genome.declared_inputs() != 3 || genome.output_count != spec.block_len() {
        return Err(Error::input(format!(
            "Zelda CPPN needs 3 inputs and {} outputs, genome has {} and {}",
            spec.block_len(),
            genome.declared_inputs(),
            genome.output_count
        )));
    }
    let net = genome.compile();
    let mut blocks = Vec::with_capacity(spec.rows * spec.cols);
    for row in 0..spec.rows {
        let y = scaled_coordinate(row, spec.rows)?;
        for col in 0..spec.cols {
            let x = scaled_coordinate(col, spec.cols)?;
            let r = (x * x + y * y).sqrt();
            blocks.push(net.activate(&[x, y, r])?);
        }
    }
    Ok(blocks)
}

pub fn cppn_to_zelda_dungeon(genome: &CppnGenome, decoder: &dyn Decoder, spec: &DungeonGenomeSpec) -> Result<DungeonLayout> {
    let blocks = cppn_room_blocks(genome, spec)?;
    let cells = blocks
        .iter()
        .map(|b| RoomDecode::from_block(b, spec.latent_size))
        .collect::<Result<Vec<_>>>()?;
    assemble_dungeon(&cells, decoder, spec)
}

/// Shared downstream decoder for both Zelda encodings. `cells` is row-major.
pub fn assemble_dungeon(cells: &[RoomDecode], decoder: &dyn Decoder, spec: &DungeonGenomeSpec) -> Result<DungeonLayout> {
    if spec.rows == 0 || spec.cols == 0 {
        return Err(Error::input("dungeon grid must be non-empty"));
    }
    if cells.len() != spec.rows * spec.cols {
        return Err(Error::input(format!(
            "{} room decodes for a {}x{} grid",
            cells.len(),
            spec.rows,
            spec.cols
        )));
    }
    check_decoder(decoder, spec.latent_size)?;
    let mut layout = DungeonLayout::empty(spec.rows, spec.cols);
    for (i, cell) in cells.iter().enumerate() {
        if cell.present > 0.0 {
            layout.rooms[i] = Some(decoder.decode(&cell.z, ZELDA_ROOM_WIDTH, ZELDA_ROOM_HEIGHT)?);
        }
    }
    let mut locked_types = Vec::new();
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let here = RoomCoord::new(row, col);
            let i = layout.index(here);
            if !layout.is_present(here) {
                continue;
            }
            let cell = &cells[i];
            if col + 1 < spec.cols && cell.right_door > 0.0 && layout.is_present(RoomCoord::new(row, col + 1)) {
                let kind = DoorKind::from_type_output(cell.right_type);
                layout.doors_right[i] = kind;
                if kind == DoorKind::Locked {
                    locked_types.push(cell.right_type);
                }
            }
            if row + 1 < spec.rows && cell.down_door > 0.0 && layout.is_present(RoomCoord::new(row + 1, col)) {
                let kind = DoorKind::from_type_output(cell.down_type);
                layout.doors_down[i] = kind;
                if kind == DoorKind::Locked {
                    locked_types.push(cell.down_type);
                }
            }
        }
    }
    layout.keys = place_keys(&layout, &locked_types);
    let present: Vec<usize> = (0..cells.len()).filter(|&i| layout.rooms[i].is_some()).collect();
    if let Some(&first) = present.first() {
        // strict comparisons keep the earliest row-major room on ties
        let mut start = first;
        for &i in &present {
            if cells[i].start_end_pref < cells[start].start_end_pref {
                start = i;
            }
        }
        let mut goal = None::<usize>;
        for &i in present.iter().filter(|&&i| i != start) {
            if goal.is_none_or(|g| cells[i].start_end_pref > cells[g].start_end_pref) {
                goal = Some(i);
            }
        }
        layout.start = Some(layout.coord(start));
        layout.goal = Some(layout.coord(goal.unwrap_or(start)));
    }
    Ok(layout)
}

/// One key per entry of `locked_door_types`. Each key's position comes from
/// a generator seeded with the IEEE-754 bit pattern of that door's type
/// output: a uniformly chosen present room, then a uniformly chosen floor
/// tile in its 12x7 interior (the interior centre when it has no floor).
pub fn place_keys(layout: &DungeonLayout, locked_door_types: &[f64]) -> Vec<KeyPlacement> {
    let present: Vec<RoomCoord> = layout.present_rooms().collect();
    if present.is_empty() {
        return Vec::new();
    }
    locked_door_types
        .iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(t.to_bits());
            let room = present[rng.random_range(0..present.len())];
            let grid = layout.room(room).expect("present room");
            let floor: Vec<Cell> = ZELDA_INTERIOR_Y
                .flat_map(|y| ZELDA_INTERIOR_X.map(move |x| Cell { x, y }))
                .filter(|c| c.x < grid.width() && c.y < grid.height() && grid.get(c.x, c.y) == 0)
                .collect();
            let cell = if floor.is_empty() {
                ZELDA_ROOM_CENTER
            } else {
                floor[rng.random_range(0..floor.len())]
            };
            KeyPlacement { room, cell }
        })
        .collect()
}

/// Flat real-valued genome, values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectGenome(pub Vec<f64>);

impl DirectGenome {
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        DirectGenome((0..len).map(|_| rng.random_range(-1.0..=1.0)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn direct_to_mario(genome: &DirectGenome, decoder: &dyn Decoder, spec: &MarioGenomeSpec) -> Result<Vec<TileGrid>> {
    if spec.segments == 0 || spec.latent_size == 0 {
        return Err(Error::input("level needs at least one segment and latent value"));
    }
    if genome.len() != spec.segments * spec.latent_size {
        return Err(Error::input(format!(
            "genome has {} values, {} segments of {} need {}",
            genome.len(),
            spec.segments,
            spec.latent_size,
            spec.segments * spec.latent_size
        )));
    }
    check_decoder(decoder, spec.latent_size)?;
    genome
        .values()
        .chunks(spec.latent_size)
        .map(|block| decoder.decode(&LatentVector::new(block.iter().copied()), MARIO_SEGMENT_WIDTH, MARIO_SEGMENT_HEIGHT))
        .collect()
}

pub fn direct_to_zelda(genome: &DirectGenome, decoder: &dyn Decoder, spec: &DungeonGenomeSpec) -> Result<DungeonLayout> {
    let expected = spec.rows * spec.cols * spec.block_len();
    if genome.len() != expected || expected == 0 {
        return Err(Error::input(format!(
            "genome has {} values, a {}x{} grid with latent {} needs {expected}",
            genome.len(),
            spec.rows,
            spec.cols,
            spec.latent_size
        )));
    }
    let cells = genome
        .values()
        .chunks(spec.block_len())
        .map(|b| RoomDecode::from_block(b, spec.latent_size))
        .collect::<Result<Vec<_>>>()?;
    assemble_dungeon(&cells, decoder, spec)
}

/// Distribution index for polynomial mutation.
pub const POLYNOMIAL_ETA: f64 = 20.0;

/// Bounded polynomial mutation of a single value.
pub fn polynomial_mutation<R: Rng + ?Sized>(x: f64, lo: f64, hi: f64, eta: f64, rng: &mut R) -> f64 {
    let range = hi - lo;
    if range <= 0.0 {
        return x;
    }
    let x = x.clamp(lo, hi);
    let d1 = (x - lo) / range;
    let d2 = (hi - x) / range;
    let u: f64 = rng.random();
    let power = 1.0 / (eta + 1.0);
    let dq = if u < 0.5 {
        let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
        v.powf(power) - 1.0
    } else {
        let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
        1.0 - v.powf(power)
    };
    (x + dq * range).clamp(lo, hi)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DirectVariationTrace {
    pub crossed: bool,
    pub mutated_genes: usize,
}

pub fn direct_variation<R: Rng + ?Sized>(a: &DirectGenome, b: &DirectGenome, rng: &mut R) -> Result<DirectGenome> {
    direct_variation_traced(a, b, rng).map(|(g, _)| g)
}

/// Half the time single-point crossover (prefix of `a`, suffix of `b`, cut
/// uniform over interior positions), otherwise a clone of `a`. Then every
/// gene independently undergoes polynomial mutation with probability 0.3.
pub fn direct_variation_traced<R: Rng + ?Sized>(
    a: &DirectGenome,
    b: &DirectGenome,
    rng: &mut R,
) -> Result<(DirectGenome, DirectVariationTrace)> {
    if a.len() != b.len() {
        return Err(Error::input(format!("parents differ in length: {} vs {}", a.len(), b.len())));
    }
    let mut trace = DirectVariationTrace::default();
    let mut child = a.0.clone();
    if rng.random_bool(0.5) {
        trace.crossed = true;
        if child.len() >= 2 {
            let cut = rng.random_range(1..child.len());
            child[cut..].copy_from_slice(&b.0[cut..]);
        }
    }
    for v in child.iter_mut() {
        if rng.random_bool(0.3) {
            *v = polynomial_mutation(*v, -1.0, 1.0, POLYNOMIAL_ETA, rng);
            trace.mutated_genes += 1;
        }
    }
    Ok((DirectGenome(child), trace))
}

/// Decoded phenotype, as stored in level files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "lowercase")]
pub enum Level {
    Mario { segments: Vec<TileGrid> },
    Zelda { dungeon: DungeonLayout },
}

pub const LEVEL_FILE_HEADER: &str = "cppn2gan-level 1";

/// Writes the header line followed by one JSON document.
pub fn write_level<W: Write>(level: &Level, mut out: W) -> Result<()> {
    writeln!(out, "{LEVEL_FILE_HEADER}")?;
    serde_json::to_writer(&mut out, level)?;
    writeln!(out)?;
    Ok(())
}

pub fn read_level<R: BufRead>(mut input: R) -> Result<Level> {
    let mut header = String::new();
    input.read_line(&mut header)?;
    if header.trim_end() != LEVEL_FILE_HEADER {
        return Err(Error::Format(format!(
            "expected `{LEVEL_FILE_HEADER}` header, found `{}`",
            header.trim_end()
        )));
    }
    let level: Level = serde_json::from_reader(input)?;
    match &level {
        Level::Zelda { dungeon } => dungeon.validate()?,
        Level::Mario { segments } => {
            if segments.is_empty() || segments.iter().any(|s| s.height() != segments[0].height()) {
                return Err(Error::input("mario level needs segments of equal height"));
            }
        }
    }
    Ok(level)
}
