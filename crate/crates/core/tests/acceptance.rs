//! Acceptance checks. One line per criterion; exits non-zero if any fails.
//!
//! Corpus checks need `VGLC_MARIO_DIR` and/or `VGLC_ZELDA_DIR` pointing at
//! directories of level text files and report SKIP otherwise.

use std::collections::{BTreeSet, VecDeque};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use cppn2gan::corpus::{self, extract_windows, parse_mario};
use cppn2gan::cppn::{minimal_genome, mutate_traced, InnovationCounter, MutationRates};
use cppn2gan::encodings::{
    direct_variation_traced, Cell, DirectGenome, DoorKind, DungeonLayout, KeyPlacement, RoomCoord,
    ZELDA_INTERIOR_X, ZELDA_INTERIOR_Y,
};
use cppn2gan::grid::TileGrid;
use cppn2gan::mario::{self, solve_physics, MarioPhysics, MarioScores};
use cppn2gan::qd::{
    archive_dump, genomes_jsonl, log_csv, run_map_elites, run_map_elites_with, Domain, Elite, EncodingKind, Evaluator,
    RunConfig,
};
use cppn2gan::tensor_gen::StubDecoder;
use cppn2gan::zelda::{self, reachable_rooms, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

/// Two-sided Mann-Whitney U p-value, normal approximation with tie
/// correction. Returns (U of `a`, p).
fn rank_sum(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut all: Vec<(f64, usize)> = a.iter().map(|&v| (v, 0)).chain(b.iter().map(|&v| (v, 1))).collect();
    all.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let n = all.len();
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        for r in ranks.iter_mut().take(j + 1).skip(i) {
            *r = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let r1: f64 = all.iter().zip(&ranks).filter(|(x, _)| x.1 == 0).map(|(_, r)| r).sum();
    let u1 = r1 - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    let nn = n1 + n2;
    let var = n1 * n2 / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
    if var <= 0.0 {
        return (u1, 1.0);
    }
    let z = (u1 - mean).abs() / var.sqrt();
    let p = 2.0 * (1.0 - Normal::standard().cdf(z));
    (u1, p)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn coverage_ordering() -> Outcome {
    let decoder = Arc::new(StubDecoder {
        latent_size: 10,
        tileset_size: zelda::ZELDA_TILESET,
    });
    let filled = |encoding| -> Vec<f64> {
        (0..10u64)
            .map(|seed| {
                let mut cfg = RunConfig::new(Domain::Zelda, encoding);
                cfg.grid_rows = 5;
                cfg.grid_cols = 5;
                cfg.init_count = 100;
                cfg.generated_count = 5000;
                cfg.seed = 1000 + seed;
                run_map_elites_with(&cfg, decoder.clone()).unwrap().filled_bin_count() as f64
            })
            .collect()
    };
    let cppn = filled(EncodingKind::Cppn2gan);
    let direct = filled(EncodingKind::Direct2gan);
    let (mc, md) = (median(&cppn), median(&direct));
    let (u, p) = rank_sum(&cppn, &direct);
    check(
        mc > md && p < 0.05,
        format!("median bins cppn={mc} direct={md}, U={u}, p={p:.2e}; cppn={cppn:?} direct={direct:?}"),
    )
}

fn random_mario_segments(rng: &mut ChaCha8Rng) -> Vec<TileGrid> {
    let segments = rng.random_range(1..=2);
    let width = 28 * segments;
    let mut g = TileGrid::filled(width, 14, mario::MARIO_TILESET, mario::EMPTY).unwrap();
    let gap_p = rng.random_range(0.0..0.25);
    let mut x = 0;
    while x < width {
        if x > 0 && rng.random_bool(gap_p) {
            x += rng.random_range(1..=5);
            continue;
        }
        g.set(x, 13, mario::STONE);
        x += 1;
    }
    for _ in 0..rng.random_range(0..(6 * segments)) {
        let cx = rng.random_range(0..width);
        let h = rng.random_range(1..=6);
        for y in (13 - h)..13 {
            g.set(cx, y, mario::STONE);
        }
    }
    for _ in 0..rng.random_range(0..(20 * segments)) {
        let tile = rng.random_range(0..mario::MARIO_TILESET);
        g.set(rng.random_range(0..width), rng.random_range(0..13), tile);
    }
    (0..segments).map(|s| g.columns(s * 28, 28).unwrap()).collect()
}

/// Breadth-first search over the same transition rules; every action costs 1.
fn bfs_path_length(physics: &MarioPhysics) -> Option<usize> {
    let start = physics.start()?;
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert((start.x, start.y, start.jump));
    queue.push_back((start, 0usize));
    while let Some((s, d)) = queue.pop_front() {
        if physics.is_goal(&s) {
            return Some(d);
        }
        for (_, n) in physics.successors(s) {
            if seen.insert((n.x, n.y, n.jump)) {
                queue.push_back((n, d + 1));
            }
        }
    }
    None
}

fn mario_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut solvable, mut mismatches) = (0, Vec::new());
    for i in 0..100 {
        let level = random_mario_segments(&mut rng);
        let physics = MarioPhysics::new(&level).unwrap();
        let astar = solve_physics(&physics).map(|p| p.len());
        let bfs = bfs_path_length(&physics);
        solvable += astar.is_some() as usize;
        if astar != bfs {
            mismatches.push((i, astar, bfs));
        }
    }
    check(
        mismatches.is_empty() && solvable > 0 && solvable < 100,
        format!("100 levels, {solvable} solvable, mismatches {mismatches:?}"),
    )
}

fn floor_room() -> TileGrid {
    let mut g = TileGrid::filled(16, 11, zelda::ZELDA_TILESET, zelda::WALL).unwrap();
    for y in ZELDA_INTERIOR_Y {
        for x in ZELDA_INTERIOR_X {
            g.set(x, y, zelda::FLOOR);
        }
    }
    g
}

fn random_layout(rng: &mut ChaCha8Rng) -> DungeonLayout {
    let (rows, cols) = (rng.random_range(1..=8), rng.random_range(1..=8));
    let mut l = DungeonLayout::empty(rows, cols);
    let p_room = rng.random_range(0.2..1.0);
    for i in 0..rows * cols {
        if rng.random_bool(p_room) {
            l.rooms[i] = Some(floor_room());
        }
    }
    let kinds = [
        DoorKind::None,
        DoorKind::Plain,
        DoorKind::SoftLocked,
        DoorKind::Bombable,
        DoorKind::Locked,
    ];
    for r in 0..rows {
        for c in 0..cols {
            let here = RoomCoord::new(r, c);
            let i = l.index(here);
            if !l.is_present(here) {
                continue;
            }
            if c + 1 < cols && l.is_present(RoomCoord::new(r, c + 1)) {
                l.doors_right[i] = kinds[rng.random_range(0..kinds.len())];
            }
            if r + 1 < rows && l.is_present(RoomCoord::new(r + 1, c)) {
                l.doors_down[i] = kinds[rng.random_range(0..kinds.len())];
            }
        }
    }
    let present: Vec<RoomCoord> = l.present_rooms().collect();
    for _ in 0..l.locked_door_count() {
        l.keys.push(KeyPlacement {
            room: present[rng.random_range(0..present.len())],
            cell: Cell { x: 5, y: 4 },
        });
    }
    if !present.is_empty() {
        let s = rng.random_range(0..present.len());
        let mut g = rng.random_range(0..present.len());
        if present.len() > 1 {
            while g == s {
                g = rng.random_range(0..present.len());
            }
        }
        l.start = Some(present[s]);
        l.goal = Some(present[g]);
    }
    l.validate().unwrap();
    l
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut c = x;
    while parent[c] != r {
        let n = parent[c];
        parent[c] = r;
        c = n;
    }
    r
}

fn union_find_reachable(l: &DungeonLayout) -> BTreeSet<RoomCoord> {
    let n = l.rows * l.cols;
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        if l.doors_right[i] != DoorKind::None {
            let (a, b) = (find(&mut parent, i), find(&mut parent, i + 1));
            parent[a] = b;
        }
        if l.doors_down[i] != DoorKind::None {
            let (a, b) = (find(&mut parent, i), find(&mut parent, i + l.cols));
            parent[a] = b;
        }
    }
    let Some(start) = l.start else {
        return BTreeSet::new();
    };
    let root = find(&mut parent, l.index(start));
    (0..n)
        .filter(|&i| l.rooms[i].is_some() && find(&mut parent, i) == root)
        .map(|i| l.coord(i))
        .collect()
}

fn zelda_reachability() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let mut bad = Vec::new();
    let mut sizes = 0usize;
    for i in 0..1000 {
        let l = random_layout(&mut rng);
        let got = reachable_rooms(&l);
        sizes += got.len();
        if got != union_find_reachable(&l) {
            bad.push(i);
        }
    }
    check(
        bad.is_empty(),
        format!("1000 layouts, {sizes} reachable rooms total, mismatching layouts {bad:?}"),
    )
}

/// Top row and right column form the only route from (0,0) to (9,9):
/// 19 rooms. 31 more rooms hang below the top row in dead-end columns.
fn fixture_50_19() -> DungeonLayout {
    let mut l = DungeonLayout::empty(10, 10);
    let add = |l: &mut DungeonLayout, r, c| {
        let i = l.index(RoomCoord::new(r, c));
        l.rooms[i] = Some(floor_room());
    };
    for c in 0..10 {
        add(&mut l, 0, c);
    }
    for r in 1..10 {
        add(&mut l, r, 9);
    }
    let mut hanging = 0;
    'outer: for r in 1..10 {
        for c in 0..9 {
            if hanging == 31 {
                break 'outer;
            }
            add(&mut l, r, c);
            hanging += 1;
        }
    }
    for c in 0..9 {
        l.doors_right[c] = DoorKind::Plain;
    }
    for r in 0..9 {
        for c in 0..10 {
            let (a, b) = (RoomCoord::new(r, c), RoomCoord::new(r + 1, c));
            if l.is_present(a) && l.is_present(b) {
                let i = l.index(a);
                l.doors_down[i] = DoorKind::Plain;
            }
        }
    }
    l.start = Some(RoomCoord::new(0, 0));
    l.goal = Some(RoomCoord::new(9, 9));
    l.validate().unwrap();
    l
}

fn fitness_fixture() -> Outcome {
    let l = fixture_50_19();
    let reachable = reachable_rooms(&l).len();
    let path_rooms = zelda::solve_dungeon(&l, SolverOptions::default()).map(|p| p.rooms().len());
    let f = zelda::zelda_fitness(&l, SolverOptions::default());
    check(
        reachable == 50 && path_rooms == Some(19) && (f - 0.38).abs() <= 1e-12,
        format!("reachable={reachable} path_rooms={path_rooms:?} fitness={f}"),
    )
}

fn run_outputs(cfg: &RunConfig) -> String {
    let a = run_map_elites(cfg).unwrap();
    format!(
        "{}{}{}",
        archive_dump(&a, cfg.domain, cfg.encoding),
        log_csv(&a),
        genomes_jsonl(&a).unwrap()
    )
}

fn determinism() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (domain, encoding) in [
        (Domain::Zelda, EncodingKind::Cppn2gan),
        (Domain::Zelda, EncodingKind::Direct2gan),
        (Domain::Mario, EncodingKind::Cppn2gan),
        (Domain::Mario, EncodingKind::Direct2gan),
    ] {
        let mut cfg = RunConfig::new(domain, encoding);
        cfg.grid_rows = 4;
        cfg.grid_cols = 4;
        cfg.segments = 3;
        cfg.init_count = 100;
        cfg.generated_count = 400;
        cfg.batch_size = 16;
        cfg.seed = 7;
        let first = run_outputs(&cfg);
        let second = run_outputs(&cfg);
        cfg.parallel = false;
        let serial = run_outputs(&cfg);
        let same = first == second && first == serial;
        ok &= same;
        notes.push(format!("{domain:?}/{encoding:?}:{}", if same { "identical" } else { "DIFFERS" }));
    }
    check(ok, notes.join(" "))
}

/// |observed - p| within 3 binomial standard deviations.
fn within_3_sigma(hits: usize, trials: usize, p: f64) -> (bool, String) {
    let rate = hits as f64 / trials as f64;
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    let ok = (rate - p).abs() <= 3.0 * sigma;
    (ok, format!("{rate:.4} (target {p}, 3σ={:.4})", 3.0 * sigma))
}

fn operator_rates() -> Outcome {
    const TRIALS: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let base = minimal_genome(3, 16, &mut rng);
    let mut counter = InnovationCounter::for_signature(3, 16);
    let rates = MutationRates::default();
    let (mut splice, mut link, mut swap, mut perturbed, mut links) = (0, 0, 0, 0, 0);
    for _ in 0..TRIALS {
        let (child, t) = mutate_traced(&base, &mut rng, &mut counter, &rates);
        splice += t.splice_drawn as usize;
        link += t.link_drawn as usize;
        swap += t.swap_drawn as usize;
        perturbed += t.perturbed_links;
        links += child.links.len();
    }

    let cfg = RunConfig::new(Domain::Zelda, EncodingKind::Cppn2gan);
    let decoder = Arc::new(StubDecoder {
        latent_size: 10,
        tileset_size: zelda::ZELDA_TILESET,
    });
    let eval = Evaluator::new(&cfg, decoder).unwrap();
    let elites: Vec<Elite> = (0..8)
        .map(|i| Elite {
            genome: eval.random_genome(&mut rng),
            fitness: i as f64 / 10.0,
            bin: cppn2gan::qd::BinKey::Zelda(zelda::zelda_bin(0.0, 0.0, i + 1)),
            birth_index: i as u64,
        })
        .collect();
    let parents: Vec<&Elite> = elites.iter().collect();
    let mut crossed = 0;
    for _ in 0..TRIALS {
        crossed += eval.offspring_traced(&parents, &mut rng, &mut counter).unwrap().1 as usize;
    }

    let a = DirectGenome::random(50, &mut rng);
    let b = DirectGenome::random(50, &mut rng);
    let (mut d_crossed, mut mutated) = (0, 0);
    for _ in 0..TRIALS {
        let (_, t) = direct_variation_traced(&a, &b, &mut rng).unwrap();
        d_crossed += t.crossed as usize;
        mutated += t.mutated_genes;
    }

    let results = [
        ("splice", within_3_sigma(splice, TRIALS, 0.20)),
        ("add-link", within_3_sigma(link, TRIALS, 0.40)),
        ("swap", within_3_sigma(swap, TRIALS, 0.30)),
        ("perturb", within_3_sigma(perturbed, links, 0.05)),
        ("cppn-crossover", within_3_sigma(crossed, TRIALS, 0.50)),
        ("direct-crossover", within_3_sigma(d_crossed, TRIALS, 0.50)),
        ("polynomial", within_3_sigma(mutated, TRIALS * 50, 0.30)),
    ];
    let ok = results.iter().all(|(_, (ok, _))| *ok);
    check(
        ok,
        results
            .iter()
            .map(|(n, (_, s))| format!("{n}={s}"))
            .collect::<Vec<_>>()
            .join(" "),
    )
}

fn binning() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let special = [f64::NAN, f64::INFINITY, f64::NEG_INFINITY, 0.0, -0.0, 1.0, 1.0 / 3.0, 0.1, -0.1];
    let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        if rng.random_bool(0.05) {
            special[rng.random_range(0..special.len())]
        } else {
            rng.random_range(lo..hi)
        }
    };
    let mut bad = 0usize;
    for _ in 0..1_000_000 {
        let s = MarioScores {
            decoration: draw(&mut rng, -0.5, 1.5),
            space: draw(&mut rng, -0.5, 1.5),
            leniency: draw(&mut rng, -2.0, 2.0),
        };
        let k = mario::mario_bin(&s);
        if k.decoration > 9 || k.space > 9 || k.leniency > 9 {
            bad += 1;
        }
        let rooms = rng.random_range(1..=100);
        let z = zelda::zelda_bin(draw(&mut rng, -10.0, 110.0), draw(&mut rng, -10.0, 110.0), rooms);
        if z.water > 9 || z.wall > 9 || z.rooms as usize != rooms {
            bad += 1;
        }
    }
    let doors = [
        (0.0, DoorKind::Plain),
        (0.33, DoorKind::SoftLocked),
        (0.66, DoorKind::Bombable),
        (0.660001, DoorKind::Locked),
        (-1.0, DoorKind::Plain),
        (0.0001, DoorKind::SoftLocked),
        (0.3301, DoorKind::Bombable),
    ];
    let door_bad: Vec<f64> = doors
        .iter()
        .filter(|(t, k)| DoorKind::from_type_output(*t) != *k)
        .map(|(t, _)| *t)
        .collect();
    check(
        bad == 0 && door_bad.is_empty(),
        format!("1e6 tuples, {bad} invalid bins; door boundary mismatches {door_bad:?}"),
    )
}

fn corpus_checks() -> Outcome {
    let mario_dir = std::env::var_os("VGLC_MARIO_DIR").map(PathBuf::from);
    let zelda_dir = std::env::var_os("VGLC_ZELDA_DIR").map(PathBuf::from);
    if mario_dir.is_none() && zelda_dir.is_none() {
        return Outcome::Skip("VGLC_MARIO_DIR / VGLC_ZELDA_DIR not set".into());
    }
    let mut notes = Vec::new();
    let mut ok = true;
    if let Some(dir) = zelda_dir {
        match corpus::zelda_corpus_stats(&dir) {
            Ok(s) => {
                ok &= s.unique_rooms == 38;
                notes.push(format!("unique zelda rooms={} (expect 38)", s.unique_rooms));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("zelda: {e}"));
            }
        }
    }
    if let Some(dir) = mario_dir {
        let oracle = corpus::corpus_files(&dir).and_then(|files| {
            files.iter().try_fold(0usize, |acc, f| {
                let g = parse_mario(&std::fs::read_to_string(f)?)?;
                assert_eq!(extract_windows(&g, 28, 14)?.len(), g.width().saturating_sub(27));
                Ok(acc + g.width().saturating_sub(27))
            })
        });
        match (corpus::mario_corpus_stats(&dir), oracle) {
            (Ok(s), Ok(expected)) => {
                ok &= s.windows == expected;
                notes.push(format!("mario windows={} (expect {expected})", s.windows));
            }
            (Err(e), _) | (_, Err(e)) => {
                ok = false;
                notes.push(format!("mario: {e}"));
            }
        }
    }
    check(ok, notes.join("; "))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("coverage ordering (cppn > direct, rank-sum p < 0.05)", coverage_ordering),
        ("mario A* equals BFS oracle on 100 levels", mario_oracle),
        ("zelda reachability equals union-find on 1000 layouts", zelda_reachability),
        ("fitness fixture 19 of 50 rooms = 0.38 +- 1e-12", fitness_fixture),
        ("determinism across repeats and thread counts", determinism),
        ("operator rates within 3 sigma over 1e5 trials", operator_rates),
        ("binning totality and door boundaries", binning),
        ("corpus counts", corpus_checks),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("PASS  {name} [{secs:.1}s] {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL  {name} [{secs:.1}s] {d}");
            }
            Outcome::Skip(d) => println!("SKIP  {name} [{secs:.1}s] {d}"),
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
