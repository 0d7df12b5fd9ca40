//! VGLC text ingestion, training windows, and text renderers.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::encodings::{
    DoorId, DoorKind, DungeonLayout, RoomCoord, MARIO_SEGMENT_HEIGHT, MARIO_SEGMENT_WIDTH, ZELDA_ROOM_HEIGHT,
    ZELDA_ROOM_WIDTH,
};
use crate::error::{Error, Result};
use crate::grid::TileGrid;
use crate::mario::{extend_pipes, MarioPath, MARIO_TILESET};
use crate::tensor_gen::argmax;
use crate::zelda::{reachable_rooms, DungeonPath, ZELDA_TILESET};

/// Symbol for each Mario identity, indexed by identity.
pub const MARIO_SYMBOLS: [char; 13] = ['X', 'x', '-', 'q', 'Q', 'o', 't', 'p', 'b', 'g', 'k', 'r', 's'];

/// Canonical symbol for each Zelda identity.
pub const ZELDA_SYMBOLS: [char; 3] = ['F', 'W', 'P'];

pub fn mario_identity(symbol: char) -> Option<u8> {
    MARIO_SYMBOLS.iter().position(|&s| s == symbol).map(|i| i as u8)
}

pub fn zelda_identity(symbol: char) -> Option<u8> {
    match symbol {
        'F' => Some(0),
        'W' | 'B' | 'D' | 'S' | 'M' => Some(1),
        'P' | 'O' | 'I' => Some(2),
        _ => None,
    }
}

fn text_rows(text: &str) -> Vec<&str> {
    let mut rows: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    while rows.last().is_some_and(|l| l.is_empty()) {
        rows.pop();
    }
    rows
}

/// Parses a 14-row level and extends pipes downward.
pub fn parse_mario(text: &str) -> Result<TileGrid> {
    let rows = text_rows(text);
    if rows.len() != MARIO_SEGMENT_HEIGHT {
        return Err(Error::Parse {
            row: rows.len(),
            col: 0,
            msg: format!("expected {MARIO_SEGMENT_HEIGHT} rows, found {}", rows.len()),
        });
    }
    let width = rows[0].chars().count();
    if width == 0 {
        return Err(Error::Parse {
            row: 0,
            col: 0,
            msg: "empty row".into(),
        });
    }
    let mut tiles = Vec::with_capacity(width * rows.len());
    for (r, line) in rows.iter().enumerate() {
        let mut n = 0;
        for (c, ch) in line.chars().enumerate() {
            let id = mario_identity(ch).ok_or_else(|| Error::Parse {
                row: r,
                col: c,
                msg: format!("unknown symbol {ch:?}"),
            })?;
            tiles.push(id);
            n += 1;
        }
        if n != width {
            return Err(Error::Parse {
                row: r,
                col: n.min(width),
                msg: format!("row has {n} columns, expected {width}"),
            });
        }
    }
    Ok(extend_pipes(&TileGrid::new(width, rows.len(), MARIO_TILESET, tiles)?))
}

pub fn render_mario(level: &TileGrid) -> String {
    render_with(level, &MARIO_SYMBOLS)
}

/// Level text with `*` over every cell the path occupies.
pub fn render_mario_path(level: &TileGrid, path: &MarioPath) -> String {
    let mut canvas: Vec<Vec<char>> = (0..level.height())
        .map(|y| level.row(y).iter().map(|&t| MARIO_SYMBOLS[t as usize]).collect())
        .collect();
    for s in &path.states {
        if s.y < canvas.len() && s.x < level.width() {
            canvas[s.y][s.x] = '*';
        }
    }
    join_canvas(&canvas)
}

fn render_with(grid: &TileGrid, symbols: &[char]) -> String {
    let mut out = String::with_capacity((grid.width() + 1) * grid.height());
    for y in 0..grid.height() {
        out.extend(grid.row(y).iter().map(|&t| symbols[t as usize]));
        out.push('\n');
    }
    out
}

fn join_canvas(canvas: &[Vec<char>]) -> String {
    let mut out = String::new();
    for row in canvas {
        out.extend(row.iter());
        out.push('\n');
    }
    out
}

/// Every `w`-wide window, left to right, one column apart.
pub fn extract_windows(level: &TileGrid, w: usize, h: usize) -> Result<Vec<TileGrid>> {
    if level.height() != h {
        return Err(Error::input(format!("level height {} != window height {h}", level.height())));
    }
    if w == 0 || level.width() < w {
        return Ok(Vec::new());
    }
    (0..=level.width() - w).map(|x| level.columns(x, w)).collect()
}

/// Splits one dungeon file on the 16x11 lattice. Cells made only of `-`
/// are empty; ragged lines are padded with `-`.
pub fn parse_zelda_file(text: &str) -> Result<Vec<TileGrid>> {
    let rows: Vec<Vec<char>> = text_rows(text).iter().map(|l| l.chars().collect()).collect();
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    if !rows.len().is_multiple_of(ZELDA_ROOM_HEIGHT) || width % ZELDA_ROOM_WIDTH != 0 {
        return Err(Error::Parse {
            row: rows.len(),
            col: width,
            msg: format!("dungeon is {width}x{} tiles, not a multiple of 16x11", rows.len()),
        });
    }
    let at = |r: usize, c: usize| rows[r].get(c).copied().unwrap_or('-');
    let mut rooms = Vec::new();
    for ry in 0..rows.len() / ZELDA_ROOM_HEIGHT {
        for rx in 0..width / ZELDA_ROOM_WIDTH {
            let (r0, c0) = (ry * ZELDA_ROOM_HEIGHT, rx * ZELDA_ROOM_WIDTH);
            let cells = (0..ZELDA_ROOM_HEIGHT).flat_map(|y| (0..ZELDA_ROOM_WIDTH).map(move |x| (r0 + y, c0 + x)));
            if cells.clone().all(|(r, c)| at(r, c) == '-') {
                continue;
            }
            let mut tiles = Vec::with_capacity(ZELDA_ROOM_WIDTH * ZELDA_ROOM_HEIGHT);
            for (r, c) in cells {
                let ch = at(r, c);
                tiles.push(zelda_identity(ch).ok_or_else(|| Error::Parse {
                    row: r,
                    col: c,
                    msg: format!("unknown symbol {ch:?}"),
                })?);
            }
            rooms.push(TileGrid::new(ZELDA_ROOM_WIDTH, ZELDA_ROOM_HEIGHT, ZELDA_TILESET, tiles)?);
        }
    }
    Ok(rooms)
}

/// Unique rooms across all files in first-seen order.
pub fn parse_zelda_dungeons<S: AsRef<str>>(files: &[S]) -> Result<Vec<TileGrid>> {
    let mut seen = HashSet::new();
    let mut unique = Vec::new();
    for f in files {
        for room in parse_zelda_file(f.as_ref())? {
            if seen.insert(room.tiles().to_vec()) {
                unique.push(room);
            }
        }
    }
    Ok(unique)
}

pub fn render_zelda_room(room: &TileGrid) -> String {
    render_with(room, &ZELDA_SYMBOLS)
}

/// Per-cell one-hot vectors in row-major order.
pub fn one_hot(grid: &TileGrid, depth: usize) -> Result<Vec<Vec<f32>>> {
    grid.tiles()
        .iter()
        .map(|&t| {
            if t as usize >= depth {
                return Err(Error::input(format!("identity {t} does not fit depth {depth}")));
            }
            let mut v = vec![0.0; depth];
            v[t as usize] = 1.0;
            Ok(v)
        })
        .collect()
}

/// Inverse of [`one_hot`].
pub fn argmax_decode(cells: &[Vec<f32>], width: usize, height: usize, tileset_size: u8) -> Result<TileGrid> {
    if cells.len() != width * height {
        return Err(Error::input("cell count does not match dimensions"));
    }
    TileGrid::new(width, height, tileset_size, cells.iter().map(|v| argmax(v) as u8).collect())
}

// Dungeon canvas glyphs.
const FLOOR_GLYPH: char = '.';
const WALL_GLYPH: char = '#';
const WATER_GLYPH: char = '~';
const VOID_GLYPH: char = ' ';
const KEY_GLYPH: char = 'k';
const START_GLYPH: char = '@';
const GOAL_GLYPH: char = 'T';
const PATH_GLYPH: char = '*';
const UNREACHABLE_GLYPH: char = 'X';

fn door_glyph(kind: DoorKind) -> Option<char> {
    match kind {
        DoorKind::None => None,
        DoorKind::Plain => Some('D'),
        DoorKind::SoftLocked => Some('S'),
        DoorKind::Bombable => Some('B'),
        DoorKind::Locked => Some('L'),
    }
}

/// Rooms tiled into one character canvas. Doors are drawn through both
/// wall layers; unreachable rooms carry an X across their interior.
pub fn render_dungeon(layout: &DungeonLayout, path: Option<&DungeonPath>) -> String {
    let (rw, rh) = (ZELDA_ROOM_WIDTH, ZELDA_ROOM_HEIGHT);
    let mut canvas = vec![vec![VOID_GLYPH; layout.cols * rw]; layout.rows * rh];
    let put = |c: RoomCoord, x: usize, y: usize, g: char, canvas: &mut Vec<Vec<char>>| {
        canvas[c.row * rh + y][c.col * rw + x] = g;
    };
    for c in layout.present_rooms() {
        let room = layout.room(c).expect("present");
        for y in 0..rh {
            for x in 0..rw {
                let g = match room.get(x, y) {
                    0 => FLOOR_GLYPH,
                    2 => WATER_GLYPH,
                    _ => WALL_GLYPH,
                };
                put(c, x, y, g, &mut canvas);
            }
        }
    }
    for (id, kind) in layout.doors() {
        let Some(g) = door_glyph(kind) else { continue };
        match id {
            DoorId::Right(c) => {
                let n = RoomCoord::new(c.row, c.col + 1);
                for x in [rw - 2, rw - 1] {
                    put(c, x, 5, g, &mut canvas);
                }
                for x in [0, 1] {
                    put(n, x, 5, g, &mut canvas);
                }
            }
            DoorId::Down(c) => {
                let n = RoomCoord::new(c.row + 1, c.col);
                for y in [rh - 2, rh - 1] {
                    put(c, 8, y, g, &mut canvas);
                }
                for y in [0, 1] {
                    put(n, 8, y, g, &mut canvas);
                }
            }
        }
    }
    if let Some(p) = path {
        for &(room, cell) in &p.steps {
            put(room, cell.x, cell.y, PATH_GLYPH, &mut canvas);
        }
    }
    for k in &layout.keys {
        put(k.room, k.cell.x, k.cell.y, KEY_GLYPH, &mut canvas);
    }
    if let Some(s) = layout.start {
        put(s, 8, 5, START_GLYPH, &mut canvas);
    }
    if let Some(g) = layout.goal {
        // beside the start marker when both share a room
        let x = if layout.start == Some(g) { 9 } else { 8 };
        put(g, x, 5, GOAL_GLYPH, &mut canvas);
    }
    if path.is_some() {
        let reachable = reachable_rooms(layout);
        for c in layout.present_rooms().filter(|c| !reachable.contains(c)) {
            for i in 0..7 {
                put(c, 2 + i + 2, 2 + i, UNREACHABLE_GLYPH, &mut canvas);
                put(c, 12 - i - 1, 2 + i, UNREACHABLE_GLYPH, &mut canvas);
            }
        }
    }
    join_canvas(&canvas)
}

/// Tile identity histogram, one count per identity.
pub fn tile_histogram<'a>(grids: impl IntoIterator<Item = &'a TileGrid>, tileset_size: u8) -> Vec<usize> {
    let mut hist = vec![0; tileset_size as usize];
    for g in grids {
        for &t in g.tiles() {
            if let Some(h) = hist.get_mut(t as usize) {
                *h += 1;
            }
        }
    }
    hist
}

/// `.txt` files in a directory, sorted by name.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarioCorpusStats {
    /// `(file name, width)` per level.
    pub levels: Vec<(String, usize)>,
    pub windows: usize,
    pub histogram: Vec<usize>,
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn with_file<T>(p: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { row, col, msg } => Error::Parse {
            row,
            col,
            msg: format!("{}: {msg}", p.display()),
        },
        other => other,
    })
}

pub fn mario_corpus_stats(dir: &Path) -> Result<MarioCorpusStats> {
    let mut levels = Vec::new();
    let mut windows = 0;
    let mut grids = Vec::new();
    for p in corpus_files(dir)? {
        let g = with_file(&p, parse_mario(&std::fs::read_to_string(&p)?))?;
        windows += extract_windows(&g, MARIO_SEGMENT_WIDTH, MARIO_SEGMENT_HEIGHT)?.len();
        levels.push((file_name(&p), g.width()));
        grids.push(g);
    }
    Ok(MarioCorpusStats {
        levels,
        windows,
        histogram: tile_histogram(&grids, MARIO_TILESET),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZeldaCorpusStats {
    /// `(file name, room count)` per dungeon file.
    pub files: Vec<(String, usize)>,
    pub unique_rooms: usize,
    pub histogram: Vec<usize>,
}

pub fn zelda_corpus_stats(dir: &Path) -> Result<ZeldaCorpusStats> {
    let mut files = Vec::new();
    let mut texts = Vec::new();
    for p in corpus_files(dir)? {
        let text = std::fs::read_to_string(&p)?;
        files.push((file_name(&p), with_file(&p, parse_zelda_file(&text))?.len()));
        texts.push(text);
    }
    let unique = parse_zelda_dungeons(&texts)?;
    Ok(ZeldaCorpusStats {
        files,
        unique_rooms: unique.len(),
        histogram: tile_histogram(&unique, ZELDA_TILESET),
    })
}

impl MarioCorpusStats {
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (name, w) in &self.levels {
            writeln!(out, "level {name} width={w}").unwrap();
        }
        writeln!(out, "levels={}", self.levels.len()).unwrap();
        writeln!(out, "windows={}", self.windows).unwrap();
        write_histogram(&mut out, &self.histogram, &MARIO_SYMBOLS);
        out
    }
}

impl ZeldaCorpusStats {
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (name, n) in &self.files {
            writeln!(out, "dungeon {name} rooms={n}").unwrap();
        }
        writeln!(out, "files={}", self.files.len()).unwrap();
        writeln!(out, "unique_rooms={}", self.unique_rooms).unwrap();
        write_histogram(&mut out, &self.histogram, &ZELDA_SYMBOLS);
        out
    }
}

fn write_histogram(out: &mut String, hist: &[usize], symbols: &[char]) {
    let parts: BTreeMap<usize, String> = hist
        .iter()
        .enumerate()
        .map(|(i, n)| (i, format!("{}:{n}", symbols[i])))
        .collect();
    writeln!(out, "tiles {}", parts.into_values().collect::<Vec<_>>().join(" ")).unwrap();
}
