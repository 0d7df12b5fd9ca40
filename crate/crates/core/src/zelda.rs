//! Zelda dungeon evaluation.
//!
//! The solver works at tile level inside each room's 12x7 interior. A door in
//! the right wall joins interior cell `(13, 5)` to `(2, 5)` of the next room;
//! a door in the bottom wall joins `(8, 8)` to `(8, 2)` of the room below.
//! Door cells, the start cell and key cells are always walkable; every other
//! interior cell is walkable only if it is floor.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::encodings::{
    Cell, DoorId, DoorKind, DungeonLayout, RoomCoord, ZELDA_INTERIOR_X, ZELDA_INTERIOR_Y, ZELDA_ROOM_CENTER,
};
use crate::error::{Error, Result};

pub const FLOOR: u8 = 0;
pub const WALL: u8 = 1;
pub const WATER: u8 = 2;
pub const ZELDA_TILESET: u8 = 3;

pub const DEFAULT_STATE_BUDGET: usize = 100_000;

pub const RIGHT_DOOR_CELL: Cell = Cell { x: 13, y: 5 };
pub const LEFT_DOOR_CELL: Cell = Cell { x: 2, y: 5 };
pub const DOWN_DOOR_CELL: Cell = Cell { x: 8, y: 8 };
pub const UP_DOOR_CELL: Cell = Cell { x: 8, y: 2 };

const INTERIOR_W: usize = 12;
const INTERIOR_H: usize = 7;

/// Rooms connected to the start room through any chain of doors, whatever
/// their kind and whatever blocks the room interiors.
pub fn reachable_rooms(layout: &DungeonLayout) -> BTreeSet<RoomCoord> {
    let mut seen = BTreeSet::new();
    let Some(start) = layout.start else {
        return seen;
    };
    seen.insert(start);
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        for (n, _, _) in layout.neighbours(c) {
            if seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen
}

/// Water and wall percentages over the 12x7 interiors of reachable rooms.
pub fn water_wall_percentages(layout: &DungeonLayout) -> Result<(f64, f64)> {
    let reachable = reachable_rooms(layout);
    if reachable.is_empty() {
        return Err(Error::Evaluation("dungeon has no reachable rooms".into()));
    }
    let (mut water, mut wall, mut total) = (0usize, 0usize, 0usize);
    for c in &reachable {
        let room = layout.room(*c).expect("reachable rooms are present");
        for y in ZELDA_INTERIOR_Y {
            for x in ZELDA_INTERIOR_X {
                match room.get(x, y) {
                    WATER => water += 1,
                    WALL => wall += 1,
                    _ => {}
                }
                total += 1;
            }
        }
    }
    let pct = |n: usize| 100.0 * n as f64 / total as f64;
    Ok((pct(water), pct(wall)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ZeldaBinKey {
    pub water: u8,
    pub wall: u8,
    pub rooms: u16,
}

/// Ten 10% bins per percentage (100% joins the top bin); one bin per
/// reachable-room count.
pub fn zelda_bin(water_pct: f64, wall_pct: f64, reachable_count: usize) -> ZeldaBinKey {
    let pct_bin = |p: f64| {
        if p.is_nan() {
            0
        } else {
            (p.clamp(0.0, 100.0) / 10.0).floor().min(9.0) as u8
        }
    };
    ZeldaBinKey {
        water: pct_bin(water_pct),
        wall: pct_bin(wall_pct),
        rooms: reachable_count.min(u16::MAX as usize) as u16,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolverOptions {
    /// Maximum number of expanded states before giving up.
    pub budget: usize,
    /// Whether soft-locked doors can be walked through. Generated rooms hold
    /// no enemies to defeat, so they open by default.
    pub soft_locked_open: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            budget: DEFAULT_STATE_BUDGET,
            soft_locked_open: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DungeonPath {
    /// Every tile visited, start first.
    pub steps: Vec<(RoomCoord, Cell)>,
    /// Locked doors in the order they were opened.
    pub doors_opened: Vec<DoorId>,
    /// Indices into `layout.keys`, in pickup order.
    pub keys_collected: Vec<usize>,
    pub expanded: usize,
}

impl DungeonPath {
    /// Moves taken.
    pub fn len(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distinct rooms on the path, in first-visit order.
    pub fn rooms(&self) -> Vec<RoomCoord> {
        let mut seen = BTreeSet::new();
        self.steps
            .iter()
            .filter(|(r, _)| seen.insert(*r))
            .map(|(r, _)| *r)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Bits(Box<[u64]>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0u64; n.div_ceil(64)].into_boxed_slice())
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn count(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }
}

/// Search state; the dedup key. `keys_held` is derived as collected keys
/// minus opened locked doors.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct StateKey {
    room: usize,
    cell: usize,
    keys: Bits,
    doors: Bits,
}

struct Node {
    key: StateKey,
    g: u32,
    parent: Option<usize>,
    opened: Option<usize>,
    picked: Vec<usize>,
}

struct Search<'a> {
    layout: &'a DungeonLayout,
    opts: SolverOptions,
    walkable: Vec<[bool; INTERIOR_W * INTERIOR_H]>,
    keys_at: HashMap<(usize, usize), Vec<usize>>,
    locked_index: HashMap<DoorId, usize>,
}

fn local(c: Cell) -> usize {
    (c.y - ZELDA_INTERIOR_Y.start) * INTERIOR_W + (c.x - ZELDA_INTERIOR_X.start)
}

fn global(i: usize) -> Cell {
    Cell {
        x: ZELDA_INTERIOR_X.start + i % INTERIOR_W,
        y: ZELDA_INTERIOR_Y.start + i / INTERIOR_W,
    }
}

impl<'a> Search<'a> {
    fn new(layout: &'a DungeonLayout, opts: SolverOptions) -> Self {
        let mut walkable = vec![[false; INTERIOR_W * INTERIOR_H]; layout.rooms.len()];
        for (i, room) in layout.rooms.iter().enumerate() {
            if let Some(grid) = room {
                for y in ZELDA_INTERIOR_Y {
                    for x in ZELDA_INTERIOR_X {
                        if x < grid.width() && y < grid.height() && grid.get(x, y) == FLOOR {
                            walkable[i][local(Cell { x, y })] = true;
                        }
                    }
                }
            }
        }
        for (id, _) in layout.doors() {
            let (a, a_cell, b, b_cell) = match id {
                DoorId::Right(c) => (c, RIGHT_DOOR_CELL, RoomCoord::new(c.row, c.col + 1), LEFT_DOOR_CELL),
                DoorId::Down(c) => (c, DOWN_DOOR_CELL, RoomCoord::new(c.row + 1, c.col), UP_DOOR_CELL),
            };
            walkable[layout.index(a)][local(a_cell)] = true;
            walkable[layout.index(b)][local(b_cell)] = true;
        }
        if let Some(s) = layout.start {
            walkable[layout.index(s)][local(ZELDA_ROOM_CENTER)] = true;
        }
        let mut keys_at: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (k, key) in layout.keys.iter().enumerate() {
            if ZELDA_INTERIOR_X.contains(&key.cell.x) && ZELDA_INTERIOR_Y.contains(&key.cell.y) {
                let room = layout.index(key.room);
                walkable[room][local(key.cell)] = true;
                keys_at.entry((room, local(key.cell))).or_default().push(k);
            }
        }
        let locked_index = layout
            .doors()
            .filter(|(_, k)| *k == DoorKind::Locked)
            .enumerate()
            .map(|(i, (id, _))| (id, i))
            .collect();
        Search {
            layout,
            opts,
            walkable,
            keys_at,
            locked_index,
        }
    }

    fn heuristic(&self, room: usize, goal: RoomCoord) -> u32 {
        let c = self.layout.coord(room);
        (c.row.abs_diff(goal.row) + c.col.abs_diff(goal.col)) as u32
    }

    /// Door leaving `room` from `cell` in direction `(dx, dy)`, if any.
    fn door_exit(&self, room: usize, cell: Cell, dx: i32, dy: i32) -> Option<(DoorId, usize, Cell)> {
        let c = self.layout.coord(room);
        let l = self.layout;
        match (dx, dy) {
            (1, 0) if cell == RIGHT_DOOR_CELL && l.doors_right[room].is_door() => {
                Some((DoorId::Right(c), l.index(RoomCoord::new(c.row, c.col + 1)), LEFT_DOOR_CELL))
            }
            (-1, 0) if cell == LEFT_DOOR_CELL && c.col > 0 => {
                let left = RoomCoord::new(c.row, c.col - 1);
                l.doors_right[l.index(left)]
                    .is_door()
                    .then(|| (DoorId::Right(left), l.index(left), RIGHT_DOOR_CELL))
            }
            (0, 1) if cell == DOWN_DOOR_CELL && l.doors_down[room].is_door() => {
                Some((DoorId::Down(c), l.index(RoomCoord::new(c.row + 1, c.col)), UP_DOOR_CELL))
            }
            (0, -1) if cell == UP_DOOR_CELL && c.row > 0 => {
                let up = RoomCoord::new(c.row - 1, c.col);
                l.doors_down[l.index(up)]
                    .is_door()
                    .then(|| (DoorId::Down(up), l.index(up), DOWN_DOOR_CELL))
            }
            _ => None,
        }
    }

    fn run(&self) -> Option<DungeonPath> {
        let layout = self.layout;
        let (start, goal) = (layout.start?, layout.goal?);
        let key_count = layout.keys.len();
        let door_count = self.locked_index.len();

        let start_room = layout.index(start);
        let start_cell = local(ZELDA_ROOM_CENTER);
        let mut keys = Bits::new(key_count);
        let mut picked = Vec::new();
        for &k in self.keys_at.get(&(start_room, start_cell)).into_iter().flatten() {
            keys.set(k);
            picked.push(k);
        }
        let mut nodes = vec![Node {
            key: StateKey {
                room: start_room,
                cell: start_cell,
                keys,
                doors: Bits::new(door_count),
            },
            g: 0,
            parent: None,
            opened: None,
            picked,
        }];
        // best known node per state, and whether it has been expanded
        let mut best: HashMap<StateKey, (usize, bool)> = HashMap::new();
        best.insert(nodes[0].key.clone(), (0, false));
        let mut open = BinaryHeap::new();
        open.push(Reverse((self.heuristic(start_room, goal), 0u32, start_room, start_cell, 0usize)));
        let mut expanded = 0usize;

        while let Some(Reverse((_, g, _, _, ni))) = open.pop() {
            let key = nodes[ni].key.clone();
            let entry = best.get_mut(&key).expect("queued states are recorded");
            if entry.1 || entry.0 != ni {
                continue;
            }
            if layout.coord(key.room) == goal {
                return Some(self.reconstruct(&nodes, ni, expanded));
            }
            if expanded >= self.opts.budget {
                return None;
            }
            entry.1 = true;
            expanded += 1;

            let here = global(key.cell);
            for (dx, dy) in [(0i32, -1i32), (-1, 0), (1, 0), (0, 1)] {
                let mut next = key.clone();
                let mut opened = None;
                if let Some((door, room, cell)) = self.door_exit(key.room, here, dx, dy) {
                    match layout.door(door) {
                        DoorKind::SoftLocked if !self.opts.soft_locked_open => continue,
                        DoorKind::Locked => {
                            let d = self.locked_index[&door];
                            if !key.doors.get(d) {
                                let held = key.keys.count() - key.doors.count();
                                if held == 0 {
                                    continue;
                                }
                                next.doors.set(d);
                                opened = Some(d);
                            }
                        }
                        _ => {}
                    }
                    next.room = room;
                    next.cell = local(cell);
                } else {
                    let (Some(nx), Some(ny)) = (
                        here.x.checked_add_signed(dx as isize),
                        here.y.checked_add_signed(dy as isize),
                    ) else {
                        continue;
                    };
                    if !ZELDA_INTERIOR_X.contains(&nx) || !ZELDA_INTERIOR_Y.contains(&ny) {
                        continue;
                    }
                    let cell = local(Cell { x: nx, y: ny });
                    if !self.walkable[key.room][cell] {
                        continue;
                    }
                    next.cell = cell;
                }
                let mut picked = Vec::new();
                for &k in self.keys_at.get(&(next.room, next.cell)).into_iter().flatten() {
                    if !next.keys.get(k) {
                        next.keys.set(k);
                        picked.push(k);
                    }
                }
                let ng = g + 1;
                match best.get(&next) {
                    Some(&(idx, closed)) if closed || nodes[idx].g <= ng => continue,
                    _ => {}
                }
                let idx = nodes.len();
                let (room, cell) = (next.room, next.cell);
                nodes.push(Node {
                    key: next.clone(),
                    g: ng,
                    parent: Some(ni),
                    opened,
                    picked,
                });
                best.insert(next, (idx, false));
                open.push(Reverse((ng + self.heuristic(room, goal), ng, room, cell, idx)));
            }
        }
        None
    }

    fn reconstruct(&self, nodes: &[Node], mut i: usize, expanded: usize) -> DungeonPath {
        let doors: HashMap<usize, DoorId> = self.locked_index.iter().map(|(&id, &d)| (d, id)).collect();
        let mut steps = Vec::new();
        let mut doors_opened = Vec::new();
        let mut keys_collected = Vec::new();
        loop {
            let n = &nodes[i];
            steps.push((self.layout.coord(n.key.room), global(n.key.cell)));
            if let Some(d) = n.opened {
                doors_opened.push(doors[&d]);
            }
            keys_collected.extend(n.picked.iter().rev());
            match n.parent {
                Some(p) => i = p,
                None => break,
            }
        }
        steps.reverse();
        doors_opened.reverse();
        keys_collected.reverse();
        DungeonPath {
            steps,
            doors_opened,
            keys_collected,
            expanded,
        }
    }
}

/// Shortest tile path from the start room's centre into the goal room,
/// respecting locked doors and keys, within the expansion budget.
pub fn solve_dungeon(layout: &DungeonLayout, opts: SolverOptions) -> Option<DungeonPath> {
    Search::new(layout, opts).run()
}

/// Share of reachable rooms the solution passes through; 0 if unsolvable.
pub fn zelda_fitness(layout: &DungeonLayout, opts: SolverOptions) -> f64 {
    let reachable = reachable_rooms(layout).len();
    if reachable == 0 {
        return 0.0;
    }
    match solve_dungeon(layout, opts) {
        Some(path) => path.rooms().len() as f64 / reachable as f64,
        None => 0.0,
    }
}
