//! Mario level evaluation: behaviour measures, binning, and a tile-physics
//! A* solver whose shortest path length is the fitness.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TileGrid;

pub const STONE: u8 = 0;
pub const BREAKABLE: u8 = 1;
pub const EMPTY: u8 = 2;
pub const QUESTION_COIN: u8 = 3;
pub const QUESTION_POWERUP: u8 = 4;
pub const COIN: u8 = 5;
pub const PIPE: u8 = 6;
pub const PIRANHA_PIPE: u8 = 7;
pub const BULLET_BILL: u8 = 8;
pub const GOOMBA: u8 = 9;
pub const GREEN_KOOPA: u8 = 10;
pub const RED_KOOPA: u8 = 11;
pub const SPINY: u8 = 12;
pub const MARIO_TILESET: u8 = 13;

/// Ascent steps granted by one jump.
pub const JUMP_HEIGHT: u8 = 4;

/// Per-tile measure classes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarioTileClass {
    pub standable: bool,
    pub decoration: bool,
    pub leniency: f64,
}

impl MarioTileClass {
    pub fn of(tile: u8) -> MarioTileClass {
        MarioTileClass {
            standable: matches!(tile, 0 | 1 | 3 | 4 | 6 | 7 | 8),
            decoration: matches!(tile, 1 | 3 | 4 | 6..=12),
            leniency: match tile {
                3 | 4 => 1.0,
                6..=8 => -0.5,
                9..=12 => -1.0,
                _ => 0.0,
            },
        }
    }
}

/// Leniency contribution of a column whose bottom tile is empty.
pub const GAP_LENIENCY: f64 = -0.5;

fn check_tiles(grid: &TileGrid) -> Result<()> {
    if let Some(t) = grid.tiles().iter().find(|&&t| t >= MARIO_TILESET) {
        return Err(Error::input(format!("{t} is not a Mario tile")));
    }
    Ok(())
}

/// Extends every pipe indicator downward with pipe body tiles until a
/// standable tile or the bottom of the grid.
pub fn extend_pipes(grid: &TileGrid) -> TileGrid {
    let mut out = grid.clone();
    for x in 0..grid.width() {
        for y in 0..grid.height() {
            if matches!(out.get(x, y), PIPE | PIRANHA_PIPE) {
                let mut below = y + 1;
                while below < grid.height() && !MarioTileClass::of(out.get(x, below)).standable {
                    out.set(x, below, PIPE);
                    below += 1;
                }
            }
        }
    }
    out
}

/// Raw per-segment measures.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarioScores {
    pub decoration: f64,
    pub space: f64,
    pub leniency: f64,
}

impl std::ops::AddAssign for MarioScores {
    fn add_assign(&mut self, rhs: Self) {
        self.decoration += rhs.decoration;
        self.space += rhs.space;
        self.leniency += rhs.leniency;
    }
}

/// Decoration frequency, space coverage and leniency of one segment, measured
/// on the pipe-extended footprint.
pub fn segment_scores(seg: &TileGrid) -> Result<MarioScores> {
    check_tiles(seg)?;
    let seg = extend_pipes(seg);
    let area = (seg.width() * seg.height()) as f64;
    let mut decoration = 0usize;
    let mut space = 0usize;
    let mut leniency = 0f64;
    for &t in seg.tiles() {
        let class = MarioTileClass::of(t);
        decoration += class.decoration as usize;
        space += class.standable as usize;
        leniency += class.leniency;
    }
    let gaps = seg.row(seg.height() - 1).iter().filter(|&&t| t == EMPTY).count();
    leniency += gaps as f64 * GAP_LENIENCY;
    Ok(MarioScores {
        decoration: decoration as f64 / area,
        space: space as f64 / area,
        leniency: leniency / area,
    })
}

/// Per-segment measures summed over the level.
pub fn level_scores(segments: &[TileGrid]) -> Result<MarioScores> {
    let mut total = MarioScores::default();
    for s in segments {
        total += segment_scores(s)?;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MarioBinKey {
    pub decoration: u8,
    pub space: u8,
    pub leniency: u8,
}

fn unit_bin(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (10.0 * v.clamp(0.0, 1.0)).floor().min(9.0) as u8
}

/// Decoration and space are scaled by 3 onto ten bins over `[0, 1]`;
/// leniency is scaled by 5 onto ten bins over `[-0.5, 0.5]`, five on each
/// side of zero. Out-of-range values land in the nearest bin.
pub fn mario_bin(scores: &MarioScores) -> MarioBinKey {
    let lenient = 5.0 * scores.leniency;
    MarioBinKey {
        decoration: unit_bin(3.0 * scores.decoration),
        space: unit_bin(3.0 * scores.space),
        leniency: unit_bin(lenient + 0.5),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarioAction {
    Left,
    Right,
    Jump,
    JumpLeft,
    JumpRight,
    /// Drift with no input; only meaningful while airborne.
    Coast,
}

impl MarioAction {
    pub const ALL: [MarioAction; 6] = [
        MarioAction::Left,
        MarioAction::Right,
        MarioAction::Jump,
        MarioAction::JumpLeft,
        MarioAction::JumpRight,
        MarioAction::Coast,
    ];

    fn dx(self) -> i32 {
        match self {
            MarioAction::Left | MarioAction::JumpLeft => -1,
            MarioAction::Right | MarioAction::JumpRight => 1,
            MarioAction::Jump | MarioAction::Coast => 0,
        }
    }

    fn jumps(self) -> bool {
        matches!(self, MarioAction::Jump | MarioAction::JumpLeft | MarioAction::JumpRight)
    }
}

/// Mario occupies a single tile. `jump` counts remaining ascent steps; 0
/// means grounded or falling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MarioState {
    pub x: usize,
    pub y: usize,
    pub jump: u8,
}

/// Simplified platformer rules over a stitched, pipe-extended level.
///
/// Each action first moves one tile sideways if that tile is free, then
/// applies one vertical step: up while a jump has ascent left (a blocked head
/// ends the ascent), otherwise down one tile unless standing on something.
/// Jumps start only from the ground. Only empty and coin tiles are free;
/// enemies are fixed obstacles. Dropping out of the bottom row is death.
#[derive(Clone, Debug)]
pub struct MarioPhysics {
    level: TileGrid,
}

impl MarioPhysics {
    pub fn new(segments: &[TileGrid]) -> Result<Self> {
        let level = TileGrid::stitch_horizontal(segments)?;
        check_tiles(&level)?;
        Ok(MarioPhysics {
            level: extend_pipes(&level),
        })
    }

    pub fn level(&self) -> &TileGrid {
        &self.level
    }

    pub fn width(&self) -> usize {
        self.level.width()
    }

    pub fn height(&self) -> usize {
        self.level.height()
    }

    #[inline]
    pub fn free(&self, x: usize, y: usize) -> bool {
        matches!(self.level.get(x, y), EMPTY | COIN)
    }

    #[inline]
    pub fn supported(&self, x: usize, y: usize) -> bool {
        y + 1 < self.height() && !self.free(x, y + 1)
    }

    pub fn is_goal(&self, s: &MarioState) -> bool {
        s.x + 1 == self.width()
    }

    /// Lowest free tile resting on a standable tile, scanning columns from
    /// the left.
    pub fn start(&self) -> Option<MarioState> {
        for x in 0..self.width() {
            for y in (0..self.height().saturating_sub(1)).rev() {
                if self.free(x, y) && MarioTileClass::of(self.level.get(x, y + 1)).standable {
                    return Some(MarioState { x, y, jump: 0 });
                }
            }
        }
        None
    }

    /// Result of `action` from `s`: `None` if the action is not available
    /// (jumping in the air, coasting on the ground) or Mario dies.
    pub fn step(&self, s: MarioState, action: MarioAction) -> Option<MarioState> {
        let grounded = s.jump == 0 && self.supported(s.x, s.y);
        if action.jumps() && !grounded {
            return None;
        }
        if action == MarioAction::Coast && grounded {
            return None;
        }
        let mut n = s;
        if action.jumps() {
            n.jump = JUMP_HEIGHT;
        }
        let nx = s.x as i64 + action.dx() as i64;
        if nx >= 0 && (nx as usize) < self.width() && self.free(nx as usize, n.y) {
            n.x = nx as usize;
        }
        if n.jump > 0 {
            if n.y > 0 && self.free(n.x, n.y - 1) {
                n.y -= 1;
                n.jump -= 1;
            } else {
                n.jump = 0;
            }
        } else if !self.supported(n.x, n.y) {
            if n.y + 1 >= self.height() {
                return None;
            }
            n.y += 1;
        }
        Some(n)
    }

    pub fn successors(&self, s: MarioState) -> impl Iterator<Item = (MarioAction, MarioState)> + '_ {
        MarioAction::ALL
            .into_iter()
            .filter_map(move |a| self.step(s, a).map(|n| (a, n)))
    }

    fn index(&self, s: &MarioState) -> usize {
        ((s.y * self.width()) + s.x) * (JUMP_HEIGHT as usize + 1) + s.jump as usize
    }

    fn state_count(&self) -> usize {
        self.width() * self.height() * (JUMP_HEIGHT as usize + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarioPath {
    pub actions: Vec<MarioAction>,
    /// Visited states, start first.
    pub states: Vec<MarioState>,
}

impl MarioPath {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// A* from the start position to the rightmost column. The heuristic is the
/// remaining horizontal distance, which is consistent because every action
/// moves at most one column.
pub fn solve_mario(level: &[TileGrid]) -> Result<Option<MarioPath>> {
    let physics = MarioPhysics::new(level)?;
    Ok(solve_physics(&physics))
}

pub fn solve_physics(physics: &MarioPhysics) -> Option<MarioPath> {
    let start = physics.start()?;
    let goal_x = physics.width() - 1;
    let n = physics.state_count();
    let mut best_g = vec![u32::MAX; n];
    let mut parent: Vec<Option<(usize, MarioAction, MarioState)>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    best_g[physics.index(&start)] = 0;
    open.push(Reverse((goal_x - start.x, 0u32, start)));
    while let Some(Reverse((_, g, s))) = open.pop() {
        let si = physics.index(&s);
        if closed[si] {
            continue;
        }
        closed[si] = true;
        if physics.is_goal(&s) {
            let mut actions = Vec::new();
            let mut states = vec![s];
            let mut cur = si;
            while let Some((prev, action, prev_state)) = parent[cur] {
                actions.push(action);
                states.push(prev_state);
                cur = prev;
            }
            actions.reverse();
            states.reverse();
            return Some(MarioPath { actions, states });
        }
        for (action, next) in physics.successors(s) {
            let ni = physics.index(&next);
            let ng = g + 1;
            if !closed[ni] && ng < best_g[ni] {
                best_g[ni] = ng;
                parent[ni] = Some((si, action, s));
                open.push(Reverse((ng as usize + goal_x - next.x, ng, next)));
            }
        }
    }
    None
}

/// Shortest path length when solvable, 0 otherwise.
pub fn mario_fitness(level: &[TileGrid]) -> Result<f64> {
    Ok(solve_mario(level)?.map_or(0.0, |p| p.len() as f64))
}
