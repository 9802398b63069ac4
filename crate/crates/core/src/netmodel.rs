//! Case model: radial network, prosumer fleet and market/algorithm parameters.
//!
//! A case is a single JSON document with three sections (`network`,
//! `prosumers`, `market`). Every per-period quantity is an explicit array of
//! length `T`; the horizon is taken from the length of `market.fit` and every
//! other series must match it.
//!
//! Sign convention used across the crate: a positive prosumer injection is an
//! export into the network, fixed loads are withdrawals.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Node identifier as written in the case document. The root is always `0`.
pub type NodeId = usize;

/// Index of a line in [`NetworkCase::lines`].
pub type LineId = usize;

pub const ROOT: NodeId = 0;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("bounds error: {0}")]
    Bounds(String),
    #[error("node {0} hosts more than one prosumer")]
    DuplicateProsumer(NodeId),
    #[error("partner sets are not symmetric: {0} lists {1} but not vice versa")]
    AsymmetricPartners(NodeId, NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("cannot read case file {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: NodeId,
    pub to: NodeId,
    /// Series resistance, pu.
    pub r: f64,
    /// Series reactance, pu.
    pub x: f64,
    /// Apparent-power rating, pu.
    pub s_max: f64,
}

/// A voltage bound given either once for the whole feeder or per node (in
/// the order of `nodes`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VoltageBound {
    Uniform(f64),
    PerNode(Vec<f64>),
}

impl VoltageBound {
    fn at(&self, index: usize) -> f64 {
        match self {
            VoltageBound::Uniform(v) => *v,
            VoltageBound::PerNode(v) => v[index],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodalSeries {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

fn default_delta_t() -> f64 {
    1.0
}

/// Radial distribution feeder.
///
/// The derived topology (orientation of every line away from the root, BFS
/// order, children lists) is rebuilt by [`NetworkCase::validate`] and is not
/// part of the serialized form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub nodes: Vec<NodeId>,
    pub lines: Vec<Line>,
    pub v0: f64,
    pub vmin: VoltageBound,
    pub vmax: VoltageBound,
    #[serde(default)]
    pub fixed_loads: BTreeMap<NodeId, NodalSeries>,
    /// Hours per period.
    #[serde(default = "default_delta_t")]
    pub delta_t: f64,
    #[serde(skip)]
    topo: Topology,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Topology {
    horizon: usize,
    index: HashMap<NodeId, usize>,
    /// Upstream and downstream node index of every line.
    up: Vec<usize>,
    down: Vec<usize>,
    parent_line: Vec<Option<LineId>>,
    children: Vec<Vec<LineId>>,
    /// Node indices in breadth-first order from the root.
    bfs: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub p_min: f64,
    pub p_max: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub e0: f64,
}

impl Battery {
    pub fn none() -> Self {
        Battery { p_min: 0.0, p_max: 0.0, e_min: 0.0, e_max: 0.0, e0: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P2gLimits {
    pub buy_max: f64,
    pub sell_max: f64,
}

/// One prosumer. Its identifier is the node it sits on; partner lists refer
/// to other prosumers by node id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProsumerSpec {
    pub node: NodeId,
    pub battery: Battery,
    pub demand: Vec<f64>,
    pub res: Vec<f64>,
    pub p2g: P2gLimits,
    #[serde(default)]
    pub partners: Vec<NodeId>,
    pub import_limit: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub chi_es: f64,
    pub chi_et: f64,
    pub chi_ds: f64,
    pub chi_dt: f64,
}

impl Thresholds {
    pub fn uniform(chi: f64) -> Self {
        Thresholds { chi_es: chi, chi_et: chi, chi_ds: chi, chi_dt: chi }
    }
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Feed-in tariff (grid buys), money per pu·h.
    pub fit: Vec<f64>,
    /// Time-of-use tariff (grid sells), money per pu·h.
    pub tou: Vec<f64>,
    /// Energy price at the root node, money per pu·h.
    pub pi: Vec<f64>,
    pub rho: f64,
    pub alpha: f64,
    pub m0: f64,
    pub tau_m: f64,
    pub scenarios: usize,
    pub thresholds: Thresholds,
    pub max_iters: usize,
    pub solver_tol: f64,
    /// Require the battery to end the horizon at least as full as it started.
    #[serde(default = "default_true")]
    pub terminal_soc: bool,
    /// DSO negotiation steps per peer-to-peer step.
    #[serde(default = "default_one")]
    pub dso_steps: usize,
}

/// A fully validated case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub network: NetworkCase,
    pub prosumers: Vec<ProsumerSpec>,
    pub market: MarketParams,
}

fn bounds(msg: impl Into<String>) -> CaseError {
    CaseError::Bounds(msg.into())
}

fn check_len(what: &str, len: usize, horizon: usize) -> Result<(), CaseError> {
    if len != horizon {
        return Err(CaseError::Schema(format!(
            "{what} has {len} entries, horizon is {horizon}"
        )));
    }
    Ok(())
}

fn check_finite(what: &str, values: &[f64]) -> Result<(), CaseError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bounds(format!("{what} contains a non-finite value")));
    }
    Ok(())
}

impl NetworkCase {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        nodes: Vec<NodeId>,
        lines: Vec<Line>,
        v0: f64,
        vmin: VoltageBound,
        vmax: VoltageBound,
        fixed_loads: BTreeMap<NodeId, NodalSeries>,
        delta_t: f64,
        horizon: usize,
    ) -> Result<Self, CaseError> {
        let mut net = NetworkCase {
            nodes,
            lines,
            v0,
            vmin,
            vmax,
            fixed_loads,
            delta_t,
            topo: Topology::default(),
        };
        net.validate(horizon)?;
        Ok(net)
    }

    /// Checks every network invariant and rebuilds the derived topology.
    pub fn validate(&mut self, horizon: usize) -> Result<(), CaseError> {
        if horizon == 0 {
            return Err(CaseError::Schema("horizon must be at least one period".into()));
        }
        let mut index = HashMap::with_capacity(self.nodes.len());
        for (k, &id) in self.nodes.iter().enumerate() {
            if index.insert(id, k).is_some() {
                return Err(CaseError::Topology(format!("node {id} listed twice")));
            }
        }
        let root = *index
            .get(&ROOT)
            .ok_or_else(|| CaseError::Topology("root node 0 is missing".into()))?;
        let n = self.nodes.len();
        if self.lines.len() + 1 != n {
            return Err(CaseError::Topology(format!(
                "{} lines for {} nodes; a tree needs {}",
                self.lines.len(),
                n,
                n.saturating_sub(1)
            )));
        }

        let mut adjacency: Vec<Vec<(usize, LineId)>> = vec![Vec::new(); n];
        for (j, line) in self.lines.iter().enumerate() {
            let a = *index
                .get(&line.from)
                .ok_or_else(|| CaseError::Topology(format!("line {j} starts at unknown node {}", line.from)))?;
            let b = *index
                .get(&line.to)
                .ok_or_else(|| CaseError::Topology(format!("line {j} ends at unknown node {}", line.to)))?;
            if a == b {
                return Err(CaseError::Topology(format!("line {j} is a self-loop")));
            }
            if !(line.r >= 0.0 && line.x >= 0.0 && line.r.is_finite() && line.x.is_finite()) {
                return Err(bounds(format!("line {j}: impedance must be finite and nonnegative")));
            }
            if !(line.s_max > 0.0 && line.s_max.is_finite()) {
                return Err(bounds(format!("line {j}: rating must be positive")));
            }
            adjacency[a].push((b, j));
            adjacency[b].push((a, j));
        }

        let mut up = vec![usize::MAX; self.lines.len()];
        let mut down = vec![usize::MAX; self.lines.len()];
        let mut parent_line = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        let mut bfs = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            bfs.push(u);
            for &(v, j) in &adjacency[u] {
                if Some(j) == parent_line[u] {
                    continue;
                }
                if seen[v] {
                    return Err(CaseError::Topology(format!("line {j} closes a cycle")));
                }
                seen[v] = true;
                up[j] = u;
                down[j] = v;
                parent_line[v] = Some(j);
                children[u].push(j);
                queue.push_back(v);
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(CaseError::Topology(format!(
                "node {} is not connected to the root",
                self.nodes[k]
            )));
        }

        for k in 0..n {
            let (lo, hi) = (self.bound_check(&self.vmin, k)?, self.bound_check(&self.vmax, k)?);
            if !(lo > 0.0 && lo < hi) {
                return Err(bounds(format!(
                    "node {}: need 0 < vmin < vmax, got {lo} and {hi}",
                    self.nodes[k]
                )));
            }
        }
        let (lo, hi) = (self.vmin.at(root), self.vmax.at(root));
        if !(self.v0 >= lo && self.v0 <= hi) {
            return Err(bounds(format!("v0 = {} outside [{lo}, {hi}]", self.v0)));
        }
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return Err(bounds("delta_t must be positive"));
        }

        for (node, series) in &self.fixed_loads {
            if *node == ROOT {
                return Err(bounds("fixed loads cannot sit on the root"));
            }
            if !index.contains_key(node) {
                return Err(CaseError::UnknownNode(*node));
            }
            check_len(&format!("fixed_loads[{node}].p"), series.p.len(), horizon)?;
            check_len(&format!("fixed_loads[{node}].q"), series.q.len(), horizon)?;
            check_finite(&format!("fixed_loads[{node}]"), &series.p)?;
            check_finite(&format!("fixed_loads[{node}]"), &series.q)?;
        }

        self.topo = Topology { horizon, index, up, down, parent_line, children, bfs };
        Ok(())
    }

    fn bound_check(&self, bound: &VoltageBound, k: usize) -> Result<f64, CaseError> {
        if let VoltageBound::PerNode(v) = bound {
            if v.len() != self.nodes.len() {
                return Err(CaseError::Schema(format!(
                    "per-node voltage bound has {} entries for {} nodes",
                    v.len(),
                    self.nodes.len()
                )));
            }
        }
        Ok(bound.at(k))
    }

    pub fn horizon(&self) -> usize {
        self.topo.horizon
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn index_of(&self, node: NodeId) -> Result<usize, CaseError> {
        self.topo.index.get(&node).copied().ok_or(CaseError::UnknownNode(node))
    }

    pub fn root_index(&self) -> usize {
        self.topo.bfs[0]
    }

    /// Upstream (root-side) node index of a line.
    pub fn line_up(&self, line: LineId) -> usize {
        self.topo.up[line]
    }

    /// Downstream node index of a line.
    pub fn line_down(&self, line: LineId) -> usize {
        self.topo.down[line]
    }

    /// Line feeding a node from upstream; `None` for the root.
    pub fn parent_line(&self, node_index: usize) -> Option<LineId> {
        self.topo.parent_line[node_index]
    }

    pub fn children_lines(&self, node_index: usize) -> &[LineId] {
        &self.topo.children[node_index]
    }

    /// Node indices in breadth-first order, root first.
    pub fn bfs_order(&self) -> &[usize] {
        &self.topo.bfs
    }

    /// Lines ordered so that every line comes after the line feeding it.
    pub fn lines_root_first(&self) -> impl Iterator<Item = LineId> + '_ {
        self.topo.bfs.iter().filter_map(|&k| self.topo.parent_line[k])
    }

    /// Lines between `node` and the root, starting at the node.
    pub fn path_to_root(&self, node: NodeId) -> Result<Vec<LineId>, CaseError> {
        let mut k = self.index_of(node)?;
        let mut path = Vec::new();
        while let Some(j) = self.topo.parent_line[k] {
            path.push(j);
            k = self.topo.up[j];
        }
        Ok(path)
    }

    pub fn vmin_at(&self, node_index: usize) -> f64 {
        self.vmin.at(node_index)
    }

    pub fn vmax_at(&self, node_index: usize) -> f64 {
        self.vmax.at(node_index)
    }

    /// Fixed active withdrawal at a node, pu.
    pub fn p_load(&self, node_index: usize, t: usize) -> f64 {
        self.fixed_loads.get(&self.nodes[node_index]).map_or(0.0, |s| s.p[t])
    }

    /// Fixed reactive withdrawal at a node, pu.
    pub fn q_load(&self, node_index: usize, t: usize) -> f64 {
        self.fixed_loads.get(&self.nodes[node_index]).map_or(0.0, |s| s.q[t])
    }
}

impl ProsumerSpec {
    fn validate(&self, horizon: usize) -> Result<(), CaseError> {
        let id = self.node;
        let b = &self.battery;
        check_finite(&format!("prosumer {id} battery"), &[b.p_min, b.p_max, b.e_min, b.e_max, b.e0])?;
        if !(b.p_min <= 0.0 && 0.0 <= b.p_max) {
            return Err(bounds(format!("prosumer {id}: need p_min <= 0 <= p_max")));
        }
        if !(b.e_min <= b.e0 && b.e0 <= b.e_max) {
            return Err(bounds(format!("prosumer {id}: need e_min <= e0 <= e_max")));
        }
        for (what, series) in [("demand", &self.demand), ("res", &self.res), ("import_limit", &self.import_limit)] {
            check_len(&format!("prosumer {id} {what}"), series.len(), horizon)?;
            check_finite(&format!("prosumer {id} {what}"), series)?;
            if series.iter().any(|v| *v < 0.0) {
                return Err(bounds(format!("prosumer {id}: {what} must be nonnegative")));
            }
        }
        let lim = &self.p2g;
        if !(lim.buy_max >= 0.0 && lim.sell_max >= 0.0 && lim.buy_max.is_finite() && lim.sell_max.is_finite()) {
            return Err(bounds(format!("prosumer {id}: P2G limits must be finite and nonnegative")));
        }
        Ok(())
    }
}

impl MarketParams {
    pub fn horizon(&self) -> usize {
        self.fit.len()
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        let horizon = self.horizon();
        check_len("market.tou", self.tou.len(), horizon)?;
        check_len("market.pi", self.pi.len(), horizon)?;
        for (what, series) in [("fit", &self.fit), ("tou", &self.tou), ("pi", &self.pi)] {
            check_finite(&format!("market.{what}"), series)?;
        }
        if let Some(t) = (0..horizon).find(|&t| self.fit[t] > self.tou[t]) {
            return Err(bounds(format!("period {t}: feed-in tariff exceeds time-of-use tariff")));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(bounds("rho must be positive"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(bounds("alpha must be nonnegative"));
        }
        if !(self.m0 > 0.0 && self.m0.is_finite()) {
            return Err(bounds("m0 must be positive"));
        }
        if !(self.tau_m > 0.0 && self.tau_m < 1.0) {
            return Err(bounds("tau_m must lie in (0, 1)"));
        }
        if self.scenarios == 0 {
            return Err(bounds("scenario count must be at least one"));
        }
        let th = &self.thresholds;
        if [th.chi_es, th.chi_et, th.chi_ds, th.chi_dt].iter().any(|c| !(*c > 0.0)) {
            return Err(bounds("convergence thresholds must be positive"));
        }
        if self.max_iters == 0 {
            return Err(bounds("max_iters must be at least one"));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) {
            return Err(bounds("solver_tol must lie in (0, 1)"));
        }
        if self.dso_steps == 0 {
            return Err(bounds("dso_steps must be at least one"));
        }
        Ok(())
    }
}

impl Case {
    /// Parses and validates a case document.
    pub fn from_json(text: &str) -> Result<Case, CaseError> {
        let mut case: Case = serde_json::from_str(text).map_err(|e| CaseError::Schema(e.to_string()))?;
        case.validate()?;
        Ok(case)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Case, CaseError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Case::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }

    pub fn validate(&mut self) -> Result<(), CaseError> {
        self.market.validate()?;
        let horizon = self.market.horizon();
        if horizon == 0 {
            return Err(CaseError::Schema("market.fit is empty".into()));
        }
        self.network.validate(horizon)?;

        let mut hosts = BTreeSet::new();
        for p in &self.prosumers {
            self.network.index_of(p.node)?;
            if p.node == ROOT {
                return Err(bounds("a prosumer cannot sit on the root node"));
            }
            if !hosts.insert(p.node) {
                return Err(CaseError::DuplicateProsumer(p.node));
            }
            p.validate(horizon)?;
            if let Some(load) = self.network.fixed_loads.get(&p.node) {
                if load.p.iter().any(|v| *v != 0.0) {
                    return Err(bounds(format!(
                        "node {} hosts a prosumer; its active demand belongs in the prosumer entry",
                        p.node
                    )));
                }
            }
        }
        let partner_sets: HashMap<NodeId, BTreeSet<NodeId>> = self
            .prosumers
            .iter()
            .map(|p| (p.node, p.partners.iter().copied().collect()))
            .collect();
        for p in &self.prosumers {
            if partner_sets[&p.node].len() != p.partners.len() {
                return Err(bounds(format!("prosumer {} lists a partner twice", p.node)));
            }
            for j in &p.partners {
                if *j == p.node {
                    return Err(bounds(format!("prosumer {} lists itself as a partner", p.node)));
                }
                let theirs = partner_sets
                    .get(j)
                    .ok_or_else(|| bounds(format!("prosumer {} lists unknown partner {j}", p.node)))?;
                if !theirs.contains(&p.node) {
                    return Err(CaseError::AsymmetricPartners(p.node, *j));
                }
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.market.horizon()
    }

    /// Position of a prosumer in [`Case::prosumers`] given its node id.
    pub fn prosumer_index(&self, node: NodeId) -> Option<usize> {
        self.prosumers.iter().position(|p| p.node == node)
    }

    /// Total number of directed trading relations, Σ_i |N_i|.
    pub fn num_directed_pairs(&self) -> usize {
        self.prosumers.iter().map(|p| p.partners.len()).sum()
    }

    /// Same case with every partner set emptied (grid-only trading).
    pub fn without_p2p(&self) -> Case {
        let mut case = self.clone();
        for p in &mut case.prosumers {
            p.partners.clear();
        }
        case
    }
}
