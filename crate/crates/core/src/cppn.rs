//! Compositional pattern networks and their NEAT-style variation operators.
//!
//! A genome is a feedforward graph whose nodes each carry their own
//! activation function. Links carry innovation numbers so crossover can line
//! up genes that descend from the same structural mutation. Node ids and link
//! innovations are drawn from one [`InnovationCounter`] per run.

use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::PI;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationKind {
    Sawtooth,
    LinearPiecewise,
    Identity,
    SquareWave,
    Cosine,
    Sine,
    Sigmoid,
    Gaussian,
    TriangleWave,
    AbsoluteValue,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 10] = [
        ActivationKind::Sawtooth,
        ActivationKind::LinearPiecewise,
        ActivationKind::Identity,
        ActivationKind::SquareWave,
        ActivationKind::Cosine,
        ActivationKind::Sine,
        ActivationKind::Sigmoid,
        ActivationKind::Gaussian,
        ActivationKind::TriangleWave,
        ActivationKind::AbsoluteValue,
    ];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Identity => x,
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            ActivationKind::Gaussian => (-x * x).exp(),
            ActivationKind::Sine => x.sin(),
            ActivationKind::Cosine => x.cos(),
            ActivationKind::AbsoluteValue => x.abs(),
            ActivationKind::LinearPiecewise => x.clamp(-1.0, 1.0),
            ActivationKind::Sawtooth => 2.0 * (x - x.floor()) - 1.0,
            ActivationKind::SquareWave => {
                if (PI * x).sin() >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            ActivationKind::TriangleWave => {
                2.0 * (2.0 * (x / 2.0 - (x / 2.0 + 0.5).floor())).abs() - 1.0
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Input,
    Hidden,
    Output,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeGene {
    pub id: u64,
    pub role: NodeRole,
    pub activation: ActivationKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkGene {
    pub innovation: u64,
    pub src: u64,
    pub dst: u64,
    pub weight: f64,
    pub enabled: bool,
}

/// Hands out node ids and link innovations; never repeats a number.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InnovationCounter {
    next: u64,
}

impl InnovationCounter {
    /// Starts past every id and innovation a minimal genome of this
    /// signature uses. `declared_inputs` excludes the bias.
    pub fn for_signature(declared_inputs: usize, outputs: usize) -> Self {
        let inputs = declared_inputs as u64 + 1;
        let outputs = outputs as u64;
        InnovationCounter {
            next: (inputs + outputs).max(inputs * outputs),
        }
    }

    pub fn next_id(&mut self) -> u64 {
        let n = self.next;
        self.next += 1;
        n
    }

    pub fn peek(&self) -> u64 {
        self.next
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CppnGenome {
    /// Inputs first (bias last among them), then outputs, then hidden nodes
    /// in creation order.
    pub nodes: Vec<NodeGene>,
    pub links: Vec<LinkGene>,
    /// Includes the bias input.
    pub input_count: usize,
    pub output_count: usize,
}

/// Fully connected input-to-output genome with uniform `[-1, 1]` weights and
/// identity outputs. A constant-1 bias input is appended to the declared
/// inputs. Node `i < inputs` has id `i`, output `o` has id `inputs + o`, and
/// the link from input `i` to output `o` has innovation `i * outputs + o`, so
/// every minimal genome of one signature shares its gene history.
pub fn minimal_genome<R: Rng + ?Sized>(declared_inputs: usize, outputs: usize, rng: &mut R) -> CppnGenome {
    assert!(declared_inputs >= 1 && outputs >= 1, "genome needs inputs and outputs");
    let inputs = declared_inputs + 1;
    let mut nodes = Vec::with_capacity(inputs + outputs);
    for i in 0..inputs {
        nodes.push(NodeGene {
            id: i as u64,
            role: NodeRole::Input,
            activation: ActivationKind::Identity,
        });
    }
    for o in 0..outputs {
        nodes.push(NodeGene {
            id: (inputs + o) as u64,
            role: NodeRole::Output,
            activation: ActivationKind::Identity,
        });
    }
    let mut links = Vec::with_capacity(inputs * outputs);
    for i in 0..inputs {
        for o in 0..outputs {
            links.push(LinkGene {
                innovation: (i * outputs + o) as u64,
                src: i as u64,
                dst: (inputs + o) as u64,
                weight: rng.random_range(-1.0..=1.0),
                enabled: true,
            });
        }
    }
    CppnGenome {
        nodes,
        links,
        input_count: inputs,
        output_count: outputs,
    }
}

/// (node slot, activation, incoming (source slot, weight) in innovation order)
type Step = (usize, ActivationKind, Vec<(usize, f64)>);

/// Genome flattened into evaluation order.
#[derive(Clone, Debug)]
pub struct Network {
    input_count: usize,
    steps: Vec<Step>,
    output_slots: Vec<usize>,
    slot_count: usize,
}

impl Network {
    pub fn declared_inputs(&self) -> usize {
        self.input_count - 1
    }

    /// Outputs in output-id order, each clamped to `[-1, 1]`.
    pub fn activate(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        if inputs.len() != self.input_count - 1 {
            return Err(Error::input(format!(
                "network takes {} inputs, got {}",
                self.input_count - 1,
                inputs.len()
            )));
        }
        let mut values = vec![0f64; self.slot_count];
        values[..inputs.len()].copy_from_slice(inputs);
        values[self.input_count - 1] = 1.0;
        for (slot, act, incoming) in &self.steps {
            let mut sum = 0f64;
            for &(src, w) in incoming {
                sum += w * values[src];
            }
            values[*slot] = act.apply(sum);
        }
        Ok(self
            .output_slots
            .iter()
            .map(|&s| {
                let v = values[s];
                if v.is_nan() {
                    0.0
                } else {
                    v.clamp(-1.0, 1.0)
                }
            })
            .collect())
    }
}

impl CppnGenome {
    pub fn declared_inputs(&self) -> usize {
        self.input_count - 1
    }

    fn slot_of(&self) -> HashMap<u64, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect()
    }

    /// Node slots in a topological order over all links (enabled or not),
    /// or `None` if the graph has a cycle. Ties resolve by slot.
    fn topological_order(&self) -> Option<Vec<usize>> {
        let slot = self.slot_of();
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for l in &self.links {
            let (s, d) = (*slot.get(&l.src)?, *slot.get(&l.dst)?);
            out[s].push(d);
            indegree[d] += 1;
        }
        let mut ready: std::collections::BTreeSet<usize> =
            (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &d in &out[i] {
                indegree[d] -= 1;
                if indegree[d] == 0 {
                    ready.insert(d);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn compile(&self) -> Network {
        let slot = self.slot_of();
        let order = self
            .topological_order()
            .expect("genome invariant violated: link graph has a cycle");
        let mut incoming: Vec<Vec<(u64, usize, f64)>> = vec![Vec::new(); self.nodes.len()];
        for l in self.links.iter().filter(|l| l.enabled) {
            incoming[slot[&l.dst]].push((l.innovation, slot[&l.src], l.weight));
        }
        let mut steps = Vec::new();
        for s in order {
            let node = &self.nodes[s];
            if node.role == NodeRole::Input {
                continue;
            }
            let mut inc = std::mem::take(&mut incoming[s]);
            inc.sort_by_key(|&(innov, _, _)| innov);
            steps.push((s, node.activation, inc.into_iter().map(|(_, src, w)| (src, w)).collect()));
        }
        // Input slots must be 0..input_count for the fast copy in activate.
        debug_assert!(self.nodes[..self.input_count].iter().all(|n| n.role == NodeRole::Input));
        let mut outputs: Vec<&NodeGene> = self.nodes.iter().filter(|n| n.role == NodeRole::Output).collect();
        outputs.sort_by_key(|n| n.id);
        Network {
            input_count: self.input_count,
            steps,
            output_slots: outputs.iter().map(|n| slot[&n.id]).collect(),
            slot_count: self.nodes.len(),
        }
    }

    /// `inputs` excludes the bias.
    pub fn activate(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        self.compile().activate(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Input(m));
        let mut ids = HashSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return bad(format!("duplicate node id {}", n.id));
            }
        }
        let inputs = self.nodes.iter().filter(|n| n.role == NodeRole::Input).count();
        let outputs = self.nodes.iter().filter(|n| n.role == NodeRole::Output).count();
        if inputs != self.input_count || outputs != self.output_count || inputs < 2 {
            return bad(format!("signature {inputs}/{outputs} disagrees with declared counts"));
        }
        if self.nodes[..self.input_count].iter().any(|n| n.role != NodeRole::Input) {
            return bad("input nodes must lead the node list".into());
        }
        let roles: HashMap<u64, NodeRole> = self.nodes.iter().map(|n| (n.id, n.role)).collect();
        let mut innovations = HashSet::new();
        let mut pairs = HashSet::new();
        for l in &self.links {
            if !innovations.insert(l.innovation) {
                return bad(format!("duplicate innovation {}", l.innovation));
            }
            if l.src == l.dst {
                return bad(format!("self loop on node {}", l.src));
            }
            match (roles.get(&l.src), roles.get(&l.dst)) {
                (Some(_), Some(NodeRole::Input)) => return bad(format!("link into input node {}", l.dst)),
                (Some(_), Some(_)) => {}
                _ => return bad(format!("link {} has a dangling endpoint", l.innovation)),
            }
            if l.enabled && !pairs.insert((l.src, l.dst)) {
                return bad(format!("duplicate enabled link {}->{}", l.src, l.dst));
            }
        }
        if self.topological_order().is_none() {
            return bad("link graph has a cycle".into());
        }
        Ok(())
    }

    /// True if `to` is reachable from `from` along any link.
    fn reaches(&self, from: u64, to: u64) -> bool {
        let mut adj: HashMap<u64, Vec<u64>> = HashMap::new();
        for l in &self.links {
            adj.entry(l.src).or_default().push(l.dst);
        }
        let mut seen = HashSet::from([from]);
        let mut queue = VecDeque::from([from]);
        while let Some(n) = queue.pop_front() {
            if n == to {
                return true;
            }
            for &m in adj.get(&n).into_iter().flatten() {
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        false
    }
}

/// Per-event probabilities for [`mutate`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MutationRates {
    pub splice: f64,
    pub add_link: f64,
    pub swap_activation: f64,
    pub perturb: f64,
}

impl Default for MutationRates {
    fn default() -> Self {
        MutationRates {
            splice: 0.20,
            add_link: 0.40,
            swap_activation: 0.30,
            perturb: 0.05,
        }
    }
}

/// Which mutation events fired (`*_drawn`) and which of those found a legal
/// target (`*_applied`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MutationTrace {
    pub splice_drawn: bool,
    pub splice_applied: bool,
    pub link_drawn: bool,
    pub link_applied: bool,
    pub swap_drawn: bool,
    pub swap_applied: bool,
    pub perturbed_links: usize,
}

/// Replaces enabled link `link_index` with `src -> new -> dst`, the in-link
/// weighted 1.0 and the out-link carrying the old weight.
pub fn splice_link(
    genome: &CppnGenome,
    link_index: usize,
    activation: ActivationKind,
    counter: &mut InnovationCounter,
) -> Option<CppnGenome> {
    let old = genome.links.get(link_index)?;
    if !old.enabled {
        return None;
    }
    let mut child = genome.clone();
    child.links[link_index].enabled = false;
    let (src, dst, weight) = (old.src, old.dst, old.weight);
    let node = counter.next_id();
    child.nodes.push(NodeGene {
        id: node,
        role: NodeRole::Hidden,
        activation,
    });
    child.links.push(LinkGene {
        innovation: counter.next_id(),
        src,
        dst: node,
        weight: 1.0,
        enabled: true,
    });
    child.links.push(LinkGene {
        innovation: counter.next_id(),
        src: node,
        dst,
        weight,
        enabled: true,
    });
    Some(child)
}

/// Splices a node with a random activation into a random enabled link.
pub fn splice_node<R: Rng + ?Sized>(
    genome: &CppnGenome,
    rng: &mut R,
    counter: &mut InnovationCounter,
) -> Option<CppnGenome> {
    let enabled: Vec<usize> = (0..genome.links.len()).filter(|&i| genome.links[i].enabled).collect();
    let &pick = enabled.choose(rng)?;
    let activation = *ActivationKind::ALL.choose(rng).expect("non-empty");
    splice_link(genome, pick, activation, counter)
}

/// Adds a link between a uniformly chosen legal pair: source not an output,
/// target not an input, no existing link between them, no cycle created.
pub fn add_link<R: Rng + ?Sized>(
    genome: &CppnGenome,
    rng: &mut R,
    counter: &mut InnovationCounter,
) -> Option<CppnGenome> {
    let existing: HashSet<(u64, u64)> = genome.links.iter().map(|l| (l.src, l.dst)).collect();
    let mut candidates = Vec::new();
    for s in genome.nodes.iter().filter(|n| n.role != NodeRole::Output) {
        for d in genome.nodes.iter().filter(|n| n.role != NodeRole::Input) {
            if s.id != d.id && !existing.contains(&(s.id, d.id)) && !genome.reaches(d.id, s.id) {
                candidates.push((s.id, d.id));
            }
        }
    }
    let &(src, dst) = candidates.choose(rng)?;
    let mut child = genome.clone();
    child.links.push(LinkGene {
        innovation: counter.next_id(),
        src,
        dst,
        weight: rng.random_range(-1.0..=1.0),
        enabled: true,
    });
    Some(child)
}

/// Gives one random hidden or output node a different activation.
pub fn swap_activation<R: Rng + ?Sized>(genome: &CppnGenome, rng: &mut R) -> Option<CppnGenome> {
    let targets: Vec<usize> = (0..genome.nodes.len())
        .filter(|&i| genome.nodes[i].role != NodeRole::Input)
        .collect();
    let &pick = targets.choose(rng)?;
    let current = genome.nodes[pick].activation;
    let others: Vec<ActivationKind> = ActivationKind::ALL.into_iter().filter(|&k| k != current).collect();
    let mut child = genome.clone();
    child.nodes[pick].activation = *others.choose(rng).expect("nine alternatives");
    Some(child)
}

pub fn mutate<R: Rng + ?Sized>(genome: &CppnGenome, rng: &mut R, counter: &mut InnovationCounter) -> CppnGenome {
    mutate_traced(genome, rng, counter, &MutationRates::default()).0
}

/// Applies each structural event independently at its rate, in the order
/// splice, add-link, activation swap, then per-link weight perturbation by a
/// standard normal sample. Events with no legal target are skipped.
pub fn mutate_traced<R: Rng + ?Sized>(
    genome: &CppnGenome,
    rng: &mut R,
    counter: &mut InnovationCounter,
    rates: &MutationRates,
) -> (CppnGenome, MutationTrace) {
    let mut trace = MutationTrace::default();
    let mut child = genome.clone();
    if rng.random_bool(rates.splice) {
        trace.splice_drawn = true;
        if let Some(g) = splice_node(&child, rng, counter) {
            child = g;
            trace.splice_applied = true;
        }
    }
    if rng.random_bool(rates.add_link) {
        trace.link_drawn = true;
        if let Some(g) = add_link(&child, rng, counter) {
            child = g;
            trace.link_applied = true;
        }
    }
    if rng.random_bool(rates.swap_activation) {
        trace.swap_drawn = true;
        if let Some(g) = swap_activation(&child, rng) {
            child = g;
            trace.swap_applied = true;
        }
    }
    for link in child.links.iter_mut() {
        if rng.random_bool(rates.perturb) {
            let delta: f64 = StandardNormal.sample(rng);
            link.weight += delta;
            trace.perturbed_links += 1;
        }
    }
    (child, trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parent {
    A,
    B,
}

/// Child takes the fitter parent's structure. Genes present in both parents
/// (same innovation) take their weight from either parent with equal chance;
/// disjoint and excess genes come from the fitter parent only.
pub fn crossover<R: Rng + ?Sized>(a: &CppnGenome, b: &CppnGenome, fitter: Parent, rng: &mut R) -> Result<CppnGenome> {
    if a.input_count != b.input_count || a.output_count != b.output_count {
        return Err(Error::input(format!(
            "parents have signatures {}/{} and {}/{}",
            a.input_count, a.output_count, b.input_count, b.output_count
        )));
    }
    let (best, other) = match fitter {
        Parent::A => (a, b),
        Parent::B => (b, a),
    };
    let other_weights: HashMap<u64, f64> = other.links.iter().map(|l| (l.innovation, l.weight)).collect();
    let links: Vec<LinkGene> = best
        .links
        .iter()
        .map(|l| {
            let mut gene = l.clone();
            if let Some(&w) = other_weights.get(&l.innovation) {
                if rng.random_bool(0.5) {
                    gene.weight = w;
                }
            }
            gene
        })
        .collect();
    let used: HashSet<u64> = links.iter().flat_map(|l| [l.src, l.dst]).collect();
    let nodes = best
        .nodes
        .iter()
        .filter(|n| n.role != NodeRole::Hidden || used.contains(&n.id))
        .cloned()
        .collect();
    Ok(CppnGenome {
        nodes,
        links,
        input_count: best.input_count,
        output_count: best.output_count,
    })
}
