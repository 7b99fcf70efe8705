//! Feedforward networks as directed acyclic graphs.
//!
//! Inputs are named `x1..xn`, the single output unit is `out`, and hidden
//! units carry arbitrary ids. Edges may skip layers. The output unit only
//! forms a weighted sum of its in-edges plus an optional bias.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use num::rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activations::{builtin, Activation};
use crate::error::{arg, Error, Result};

pub const OUTPUT_ID: &str = "out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    /// 0-based input index; named `x{i+1}`.
    Input(usize),
    Hidden(usize),
    Output,
}

#[derive(Clone, Debug)]
pub struct HiddenUnit {
    pub id: String,
    pub bias: f64,
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub from: Node,
    pub to: Node,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct Network {
    n_inputs: usize,
    units: Vec<HiddenUnit>,
    edges: Vec<Edge>,
    output_bias: f64,
    index: HashMap<String, usize>,
    fan_in: Vec<Vec<(Node, f64)>>,
    output_in: Vec<(Node, f64)>,
    order: Option<Vec<usize>>,
}

/// Incremental construction of a [`Network`] by id.
#[derive(Debug, Default)]
pub struct NetworkBuilder {
    n_inputs: usize,
    units: Vec<HiddenUnit>,
    edges: Vec<(String, String, f64)>,
    output_bias: f64,
}

impl NetworkBuilder {
    pub fn new(n_inputs: usize) -> Self {
        Self {
            n_inputs,
            ..Self::default()
        }
    }

    pub fn unit(mut self, id: impl Into<String>, bias: f64, activation: impl Into<Activation>) -> Self {
        self.units.push(HiddenUnit {
            id: id.into(),
            bias,
            activation: activation.into(),
        });
        self
    }

    pub fn edge(mut self, from: impl Into<String>, to: impl Into<String>, weight: f64) -> Self {
        self.edges.push((from.into(), to.into(), weight));
        self
    }

    pub fn output_bias(mut self, bias: f64) -> Self {
        self.output_bias = bias;
        self
    }

    pub fn build(self) -> Result<Network> {
        let mut index = HashMap::with_capacity(self.units.len());
        for (i, u) in self.units.iter().enumerate() {
            if u.id == OUTPUT_ID || parse_input_id(&u.id).is_some() {
                return Err(arg(format!("hidden unit id `{}` is reserved", u.id)));
            }
            if index.insert(u.id.clone(), i).is_some() {
                return Err(arg(format!("duplicate unit id `{}`", u.id)));
            }
        }
        let resolve = |id: &str| -> Result<Node> {
            if id == OUTPUT_ID {
                return Ok(Node::Output);
            }
            if let Some(i) = parse_input_id(id) {
                if i < self.n_inputs {
                    return Ok(Node::Input(i));
                }
                return Err(arg(format!("input `{id}` out of range (n_inputs = {})", self.n_inputs)));
            }
            index
                .get(id)
                .map(|&i| Node::Hidden(i))
                .ok_or_else(|| arg(format!("unknown unit id `{id}`")))
        };
        let edges = self
            .edges
            .iter()
            .map(|(f, t, w)| {
                Ok(Edge {
                    from: resolve(f)?,
                    to: resolve(t)?,
                    weight: *w,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Network::assemble(self.n_inputs, self.units, edges, self.output_bias, index))
    }
}

fn parse_input_id(id: &str) -> Option<usize> {
    let digits = id.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse::<usize>().ok().map(|k| k - 1)
}

/// A structural problem reported by [`Network::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    Cycle,
    ZeroWeight,
    NonFinite,
    EdgeIntoInput,
    EdgeFromOutput,
    DuplicateEdge,
    Unreachable,
    DeadEnd,
    NoHiddenUnits,
    NoInputs,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            ViolationKind::Cycle => "cycle",
            ViolationKind::ZeroWeight => "zero weight",
            ViolationKind::NonFinite => "non-finite value",
            ViolationKind::EdgeIntoInput => "edge into input",
            ViolationKind::EdgeFromOutput => "edge from output",
            ViolationKind::DuplicateEdge => "duplicate edge",
            ViolationKind::Unreachable => "unreachable",
            ViolationKind::DeadEnd => "does not reach output",
            ViolationKind::NoHiddenUnits => "no hidden units",
            ViolationKind::NoInputs => "no inputs",
        };
        write!(f, "{tag}: {}", self.detail)
    }
}

/// Depth bookkeeping: unit depths by longest path, the induced layer
/// partition and the average width `|H| / depth`.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthProfile {
    /// Longest input-to-unit path length, indexed like the network's units.
    pub unit_depth: Vec<usize>,
    pub depth: usize,
    /// `layers[i]` holds the units at depth `i + 1`.
    pub layers: Vec<Vec<usize>>,
    pub widths: Vec<usize>,
    pub omega: Ratio<u64>,
}

impl DepthProfile {
    pub fn hidden_count(&self) -> usize {
        self.unit_depth.len()
    }

    /// Units of depth `1..=i`.
    pub fn prefix(&self, i: usize) -> Vec<usize> {
        self.layers[..i].iter().flatten().copied().collect()
    }

    pub fn omega_f64(&self) -> f64 {
        *self.omega.numer() as f64 / *self.omega.denom() as f64
    }
}

/// Segment `[x, y]` in input space, parametrized as `(1 - a) x + a y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Segment {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() {
            return Err(arg(format!("segment endpoints have dimensions {} and {}", x.len(), y.len())));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(arg("segment endpoints must be finite"));
        }
        Ok(Self { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn point_at(&self, a: f64) -> Vec<f64> {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(x, y)| (1.0 - a) * x + a * y)
            .collect()
    }

    pub fn length(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(x, y)| (y - x) * (y - x))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_degenerate(&self) -> bool {
        self.x == self.y
    }
}

/// Result of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardPass {
    pub output: f64,
    pub pre_activations: Vec<f64>,
    pub unit_outputs: Vec<f64>,
    /// Present when every unit has a piecewise-linear activation.
    pub unit_states: Option<Vec<usize>>,
}

impl Network {
    fn assemble(
        n_inputs: usize,
        units: Vec<HiddenUnit>,
        edges: Vec<Edge>,
        output_bias: f64,
        index: HashMap<String, usize>,
    ) -> Self {
        let mut fan_in = vec![Vec::new(); units.len()];
        let mut output_in = Vec::new();
        for e in &edges {
            match e.to {
                Node::Hidden(v) => fan_in[v].push((e.from, e.weight)),
                Node::Output => output_in.push((e.from, e.weight)),
                Node::Input(_) => {}
            }
        }
        let order = topo_order(units.len(), &fan_in);
        Self {
            n_inputs,
            units,
            edges,
            output_bias,
            index,
            fan_in,
            output_in,
            order,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn units(&self) -> &[HiddenUnit] {
        &self.units
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn output_bias(&self) -> f64 {
        self.output_bias
    }

    pub fn unit_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub(crate) fn resolve_units(&self, ids: &[&str]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                self.unit_index(id)
                    .ok_or_else(|| arg(format!("unknown hidden unit `{id}`")))
            })
            .collect()
    }

    pub fn node_name(&self, node: Node) -> String {
        match node {
            Node::Input(i) => format!("x{}", i + 1),
            Node::Hidden(h) => self.units[h].id.clone(),
            Node::Output => OUTPUT_ID.to_string(),
        }
    }

    /// In-edges of hidden unit `h` as `(source, weight)`.
    pub fn fan_in(&self, h: usize) -> &[(Node, f64)] {
        &self.fan_in[h]
    }

    pub fn output_fan_in(&self) -> &[(Node, f64)] {
        &self.output_in
    }

    /// Hidden units in a topological order, `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<&[usize]> {
        self.order.as_deref()
    }

    /// Largest piece count among piecewise-linear activations, if all units
    /// are piecewise linear.
    pub fn max_pieces(&self) -> Option<usize> {
        self.units
            .iter()
            .map(|u| u.activation.as_pwl().map(|p| p.t()))
            .try_fold(1, |acc, t| t.map(|t| acc.max(t)))
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        let mut push = |kind, detail: String| out.push(Violation { kind, detail });

        if self.n_inputs == 0 {
            push(ViolationKind::NoInputs, "network has no input units".into());
        }
        if self.units.is_empty() {
            push(ViolationKind::NoHiddenUnits, "network has no hidden units".into());
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            let name = format!("{} -> {}", self.node_name(e.from), self.node_name(e.to));
            if !e.weight.is_finite() {
                push(ViolationKind::NonFinite, format!("weight on {name}"));
            } else if e.weight == 0.0 {
                push(ViolationKind::ZeroWeight, name.clone());
            }
            if matches!(e.to, Node::Input(_)) {
                push(ViolationKind::EdgeIntoInput, name.clone());
            }
            if e.from == Node::Output {
                push(ViolationKind::EdgeFromOutput, name.clone());
            }
            if e.from == e.to {
                push(ViolationKind::Cycle, format!("self-loop {name}"));
            }
            if !seen.insert((e.from, e.to)) {
                push(ViolationKind::DuplicateEdge, name);
            }
        }
        for u in &self.units {
            if !u.bias.is_finite() {
                push(ViolationKind::NonFinite, format!("bias of `{}`", u.id));
            }
        }
        if !self.output_bias.is_finite() {
            push(ViolationKind::NonFinite, "output bias".into());
        }
        if self.order.is_none() {
            let cyc = self.cyclic_units();
            push(
                ViolationKind::Cycle,
                format!(
                    "through units {}",
                    cyc.iter().map(|&h| self.units[h].id.as_str()).collect::<Vec<_>>().join(", ")
                ),
            );
        }

        // Forward reachability from inputs.
        let mut succ = vec![Vec::new(); self.units.len()];
        let mut reach = vec![false; self.units.len()];
        let mut queue = VecDeque::new();
        for e in &self.edges {
            match (e.from, e.to) {
                (Node::Hidden(a), Node::Hidden(b)) => succ[a].push(b),
                (Node::Input(_), Node::Hidden(b)) if !reach[b] => {
                    reach[b] = true;
                    queue.push_back(b);
                }
                _ => {}
            }
        }
        while let Some(h) = queue.pop_front() {
            for &s in &succ[h] {
                if !reach[s] {
                    reach[s] = true;
                    queue.push_back(s);
                }
            }
        }
        // Backward reachability from the output.
        let mut alive = vec![false; self.units.len()];
        for &(src, _) in &self.output_in {
            if let Node::Hidden(h) = src {
                if !alive[h] {
                    alive[h] = true;
                    queue.push_back(h);
                }
            }
        }
        while let Some(h) = queue.pop_front() {
            for &(src, _) in &self.fan_in[h] {
                if let Node::Hidden(p) = src {
                    if !alive[p] {
                        alive[p] = true;
                        queue.push_back(p);
                    }
                }
            }
        }
        for (h, u) in self.units.iter().enumerate() {
            if !reach[h] {
                push(ViolationKind::Unreachable, format!("unit `{}` has no path from an input", u.id));
            }
            if !alive[h] {
                push(ViolationKind::DeadEnd, format!("unit `{}` has no path to the output", u.id));
            }
        }

        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    fn ensure_valid(&self) -> Result<()> {
        self.validate()
            .map_err(|v| Error::InvalidNetwork(v.iter().map(ToString::to_string).collect()))
    }

    fn cyclic_units(&self) -> Vec<usize> {
        // Units left over after Kahn's algorithm lie on or behind a cycle.
        let n = self.units.len();
        let mut indeg = vec![0usize; n];
        let mut succ = vec![Vec::new(); n];
        for (v, ins) in self.fan_in.iter().enumerate() {
            for &(src, _) in ins {
                if let Node::Hidden(u) = src {
                    indeg[v] += 1;
                    succ[u].push(v);
                }
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        while let Some(u) = queue.pop_front() {
            for &v in &succ[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    queue.push_back(v);
                }
            }
        }
        (0..n).filter(|&v| indeg[v] > 0).collect()
    }

    pub fn depth_profile(&self) -> Result<DepthProfile> {
        self.ensure_valid()?;
        let order = self.order.as_ref().expect("validated network is acyclic");
        let mut depth = vec![0usize; self.units.len()];
        for &h in order {
            depth[h] = self.fan_in[h]
                .iter()
                .map(|&(src, _)| match src {
                    Node::Hidden(p) => depth[p],
                    _ => 0,
                })
                .max()
                .unwrap_or(0)
                + 1;
        }
        let d = depth.iter().copied().max().unwrap_or(0);
        let mut layers = vec![Vec::new(); d];
        for (h, &k) in depth.iter().enumerate() {
            layers[k - 1].push(h);
        }
        let widths = layers.iter().map(Vec::len).collect();
        Ok(DepthProfile {
            omega: Ratio::new(self.units.len() as u64, d as u64),
            unit_depth: depth,
            depth: d,
            layers,
            widths,
        })
    }

    /// Hidden units outside `set` that lie on some input-to-`set` path.
    pub fn in_set_indices(&self, set: &[usize]) -> BTreeSet<usize> {
        let mut member = vec![false; self.units.len()];
        for &u in set {
            member[u] = true;
        }
        let mut seen = vec![false; self.units.len()];
        let mut stack: Vec<usize> = set.to_vec();
        while let Some(h) = stack.pop() {
            for &(src, _) in &self.fan_in[h] {
                if let Node::Hidden(p) = src {
                    if !seen[p] {
                        seen[p] = true;
                        stack.push(p);
                    }
                }
            }
        }
        (0..self.units.len()).filter(|&h| seen[h] && !member[h]).collect()
    }

    pub fn in_set(&self, ids: &[&str]) -> Result<BTreeSet<String>> {
        let set = self.resolve_units(ids)?;
        Ok(self
            .in_set_indices(&set)
            .into_iter()
            .map(|h| self.units[h].id.clone())
            .collect())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        self.forward_impl(x, None)
    }

    /// Forward pass with every hidden activation replaced by `activation`.
    pub fn forward_with(&self, x: &[f64], activation: &Activation) -> Result<ForwardPass> {
        self.forward_impl(x, Some(activation))
    }

    fn forward_impl(&self, x: &[f64], substitute: Option<&Activation>) -> Result<ForwardPass> {
        if x.len() != self.n_inputs {
            return Err(arg(format!("input has dimension {}, network expects {}", x.len(), self.n_inputs)));
        }
        let order = self
            .order
            .as_ref()
            .ok_or_else(|| Error::InvalidNetwork(vec!["cycle".into()]))?;
        let n = self.units.len();
        let mut pre = vec![0.0; n];
        let mut out = vec![0.0; n];
        let value = |node: Node, out: &[f64]| match node {
            Node::Input(i) => x[i],
            Node::Hidden(h) => out[h],
            Node::Output => 0.0,
        };
        for &h in order {
            let unit = &self.units[h];
            let z = self.fan_in[h]
                .iter()
                .fold(unit.bias, |acc, &(src, w)| acc + w * value(src, &out));
            pre[h] = z;
            out[h] = substitute.unwrap_or(&unit.activation).eval(z);
        }
        let output = self
            .output_in
            .iter()
            .fold(self.output_bias, |acc, &(src, w)| acc + w * value(src, &out));
        let unit_states = match substitute {
            Some(act) => act.as_pwl().map(|p| pre.iter().map(|&z| p.state_of(z)).collect()),
            None => self
                .units
                .iter()
                .zip(&pre)
                .map(|(u, &z)| u.activation.as_pwl().map(|p| p.state_of(z)))
                .collect(),
        };
        Ok(ForwardPass {
            output,
            pre_activations: pre,
            unit_outputs: out,
            unit_states,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_repr())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let repr: NetworkJson = serde_json::from_str(s)?;
        repr.into_network()
    }

    fn to_repr(&self) -> NetworkJson {
        NetworkJson {
            n_inputs: self.n_inputs,
            units: self
                .units
                .iter()
                .map(|u| UnitJson {
                    id: u.id.clone(),
                    bias: u.bias,
                    activation: u.activation.clone(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeJson {
                    from: self.node_name(e.from),
                    to: self.node_name(e.to),
                    weight: e.weight,
                })
                .collect(),
            output_bias: self.output_bias,
        }
    }
}

fn topo_order(n: usize, fan_in: &[Vec<(Node, f64)>]) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; n];
    let mut succ = vec![Vec::new(); n];
    for (v, ins) in fan_in.iter().enumerate() {
        for &(src, _) in ins {
            if let Node::Hidden(u) = src {
                indeg[v] += 1;
                succ[u].push(v);
            }
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &v in &succ[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                queue.push_back(v);
            }
        }
    }
    (order.len() == n).then_some(order)
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    n_inputs: usize,
    units: Vec<UnitJson>,
    edges: Vec<EdgeJson>,
    #[serde(default, skip_serializing_if = "is_zero")]
    output_bias: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Serialize, Deserialize)]
struct UnitJson {
    id: String,
    #[serde(default)]
    bias: f64,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct EdgeJson {
    from: String,
    to: String,
    weight: f64,
}

impl NetworkJson {
    fn into_network(self) -> Result<Network> {
        let mut b = NetworkBuilder::new(self.n_inputs).output_bias(self.output_bias);
        for u in self.units {
            b = b.unit(u.id, u.bias, u.activation);
        }
        for e in self.edges {
            b = b.edge(e.from, e.to, e.weight);
        }
        b.build()
    }
}

/// Parameters for [`random_network`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomNetSpec {
    pub n_inputs: usize,
    pub depth: usize,
    /// Exact layer widths; when absent each width is uniform in `1..=max_width`.
    #[serde(default)]
    pub widths: Option<Vec<usize>>,
    #[serde(default)]
    pub max_width: Option<usize>,
    #[serde(default)]
    pub skip_prob: f64,
    /// Weights and biases are drawn uniformly from `[-A, A]`.
    pub weight_range: f64,
    pub activation: String,
    pub seed: u64,
}

/// Minimum magnitude for a sampled weight; smaller draws are rejected.
pub const MIN_WEIGHT: f64 = 1e-3;

/// Random layered network with dense connections between neighbouring
/// layers and independent skip connections.
pub fn random_network(spec: &RandomNetSpec) -> Result<Network> {
    if spec.n_inputs == 0 {
        return Err(arg("n_inputs must be >= 1"));
    }
    if spec.depth == 0 {
        return Err(arg("depth must be >= 1"));
    }
    if !(spec.weight_range > MIN_WEIGHT) || !spec.weight_range.is_finite() {
        return Err(arg(format!("weight range must exceed {MIN_WEIGHT}")));
    }
    if !(0.0..=1.0).contains(&spec.skip_prob) {
        return Err(arg("skip_prob must lie in [0, 1]"));
    }
    let activation = builtin(&spec.activation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let widths: Vec<usize> = match (&spec.widths, spec.max_width) {
        (Some(w), _) => {
            if w.len() != spec.depth || w.contains(&0) {
                return Err(arg("widths must list depth-many positive entries"));
            }
            w.clone()
        }
        (None, Some(m)) if m >= 1 => (0..spec.depth).map(|_| rng.gen_range(1..=m)).collect(),
        _ => return Err(arg("either widths or a positive max_width is required")),
    };
    let a = spec.weight_range;
    let weight = |rng: &mut ChaCha8Rng| loop {
        let w = rng.gen_range(-a..=a);
        if w.abs() >= MIN_WEIGHT {
            return w;
        }
    };

    let ids: Vec<Vec<String>> = widths
        .iter()
        .enumerate()
        .map(|(l, &w)| (1..=w).map(|k| format!("h{}_{k}", l + 1)).collect())
        .collect();
    let inputs: Vec<String> = (1..=spec.n_inputs).map(|i| format!("x{i}")).collect();

    let mut b = NetworkBuilder::new(spec.n_inputs);
    for layer in &ids {
        for id in layer {
            let bias = rng.gen_range(-a..=a);
            b = b.unit(id.clone(), bias, activation.clone());
        }
    }
    for (l, layer) in ids.iter().enumerate() {
        for id in layer {
            // Dense edges from the previous layer (or the inputs).
            let prev = if l == 0 { &inputs } else { &ids[l - 1] };
            for src in prev {
                b = b.edge(src.clone(), id.clone(), weight(&mut rng));
            }
            // Skip edges from the inputs and from earlier layers.
            if l >= 1 {
                for src in inputs.iter().chain(ids[..l - 1].iter().flatten()) {
                    if rng.gen_bool(spec.skip_prob) {
                        b = b.edge(src.clone(), id.clone(), weight(&mut rng));
                    }
                }
            }
        }
    }
    for (l, layer) in ids.iter().enumerate() {
        for id in layer {
            if l + 1 == ids.len() || rng.gen_bool(spec.skip_prob) {
                b = b.edge(id.clone(), OUTPUT_ID, weight(&mut rng));
            }
        }
    }
    let net = b.build()?;
    net.ensure_valid()?;
    Ok(net)
}
