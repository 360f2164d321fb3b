//! Directed acyclic graphs of sources, agents, and eavesdroppers, and the
//! conditional-independence checks a behavior must satisfy on them.

use serde::Serialize;

use crate::behavior::{AgentShape, Behavior, TupleIter};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Source,
    Agent {
        inputs: usize,
        outputs: usize,
    },
    /// Adversarial side system; a latent node with measurement arities.
    Eaves {
        inputs: usize,
        outputs: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub label: String,
    pub kind: NodeKind,
}

/// A network scenario: typed nodes plus directed edges.
///
/// Edges run source->agent, source->eaves (side information), or
/// eaves->source / eaves->eaves (adversarial correlation). Agent node order
/// fixes the agent order of every [`Behavior`] built for the topology.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    name: String,
    nodes: Vec<Node>,
    edges: Vec<(usize, usize)>,
}

impl NetworkTopology {
    pub fn new(
        name: impl Into<String>,
        nodes: Vec<Node>,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let topology = Self {
            name: name.into(),
            nodes,
            edges,
        };
        topology.validate()?;
        Ok(topology)
    }

    fn validate(&self) -> Result<()> {
        for node in &self.nodes {
            if let NodeKind::Agent { inputs, outputs } | NodeKind::Eaves { inputs, outputs } =
                node.kind
            {
                if inputs == 0 || outputs == 0 {
                    return Err(Error::InvalidParameter(format!(
                        "node {} must have input/output arities >= 1",
                        node.label
                    )));
                }
            }
        }
        for &(from, to) in &self.edges {
            if from >= self.nodes.len() || to >= self.nodes.len() {
                return Err(Error::InvalidParameter(
                    "edge references missing node".into(),
                ));
            }
            let ok = matches!(
                (&self.nodes[from].kind, &self.nodes[to].kind),
                (NodeKind::Source, NodeKind::Agent { .. })
                    | (NodeKind::Source, NodeKind::Eaves { .. })
                    | (NodeKind::Eaves { .. }, NodeKind::Source)
                    | (NodeKind::Eaves { .. }, NodeKind::Eaves { .. })
            );
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "edge {} -> {} has an unsupported direction",
                    self.nodes[from].label, self.nodes[to].label
                )));
            }
        }
        if !self.is_acyclic() {
            return Err(Error::InvalidParameter("topology has a cycle".into()));
        }
        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.kind, NodeKind::Agent { .. })
                && !self.edges.iter().any(|&(from, to)| {
                    to == idx && matches!(self.nodes[from].kind, NodeKind::Source)
                })
            {
                return Err(Error::InvalidParameter(format!(
                    "agent {} has no incoming source edge",
                    node.label
                )));
            }
        }
        Ok(())
    }

    fn is_acyclic(&self) -> bool {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        for &(_, to) in &self.edges {
            indegree[to] += 1;
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(node) = stack.pop() {
            seen += 1;
            for &(from, to) in &self.edges {
                if from == node {
                    indegree[to] -= 1;
                    if indegree[to] == 0 {
                        stack.push(to);
                    }
                }
            }
        }
        seen == n
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Node indices of agents, in declaration order.
    pub fn agent_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].kind, NodeKind::Agent { .. }))
            .collect()
    }

    pub fn source_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].kind, NodeKind::Source))
            .collect()
    }

    pub fn agent_shapes(&self) -> Vec<AgentShape> {
        self.agent_nodes()
            .iter()
            .map(|&i| match self.nodes[i].kind {
                NodeKind::Agent { inputs, outputs } => AgentShape::new(inputs, outputs),
                _ => unreachable!(),
            })
            .collect()
    }

    /// Source positions (indices into `source_nodes`) feeding the given agent
    /// position, in source order.
    pub fn incident_sources(&self, agent_pos: usize) -> Vec<usize> {
        let agent_node = self.agent_nodes()[agent_pos];
        let sources = self.source_nodes();
        sources
            .iter()
            .enumerate()
            .filter(|(_, &s)| {
                self.edges
                    .iter()
                    .any(|&(from, to)| from == s && to == agent_node)
            })
            .map(|(pos, _)| pos)
            .collect()
    }

    fn ancestors(&self, node: usize) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![node];
        while let Some(cur) = stack.pop() {
            for &(from, to) in &self.edges {
                if to == cur && !seen[from] {
                    seen[from] = true;
                    stack.push(from);
                }
            }
        }
        (0..self.nodes.len()).filter(|&i| seen[i]).collect()
    }

    /// Agent pairs whose ancestries are disjoint; their joint marginal must
    /// factorize for any behavior compatible with the DAG.
    pub fn independent_agent_pairs(&self) -> Vec<(usize, usize)> {
        let agents = self.agent_nodes();
        let ancestries: Vec<Vec<usize>> = agents.iter().map(|&a| self.ancestors(a)).collect();
        let mut pairs = Vec::new();
        for i in 0..agents.len() {
            for j in (i + 1)..agents.len() {
                if ancestries[i].iter().all(|a| !ancestries[j].contains(a)) {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }

    /// Per-source eavesdropper taps: one eaves node correlated with each
    /// source, measured with `inputs`/`outputs` arities.
    pub fn with_source_taps(&self, inputs: usize, outputs: usize) -> Result<Self> {
        let mut nodes = self.nodes.clone();
        let mut edges = self.edges.clone();
        for (pos, s) in self.source_nodes().iter().enumerate() {
            let e = nodes.len();
            nodes.push(Node {
                label: format!("E{}", pos + 1),
                kind: NodeKind::Eaves { inputs, outputs },
            });
            edges.push((*s, e));
        }
        Self::new(format!("{}+taps", self.name), nodes, edges)
    }

    /// A hidden node feeding the listed sources, modelling an eavesdropper
    /// who correlates sources the agents assume independent.
    pub fn with_correlated_sources(&self, source_positions: &[usize]) -> Result<Self> {
        let sources = self.source_nodes();
        let mut nodes = self.nodes.clone();
        let mut edges = self.edges.clone();
        let e = nodes.len();
        nodes.push(Node {
            label: "E".into(),
            kind: NodeKind::Eaves {
                inputs: 1,
                outputs: 2,
            },
        });
        for &pos in source_positions {
            let s = *sources.get(pos).ok_or_else(|| {
                Error::InvalidParameter(format!("source position {pos} out of range"))
            })?;
            edges.push((e, s));
        }
        Self::new(format!("{}+correlated", self.name), nodes, edges)
    }
}

/// Chain of `n` sources linking `n + 1` agents. End agents have two inputs
/// and two outputs; intermediate agents have a single input and four outputs.
pub fn make_repeater_topology(n: usize) -> Result<NetworkTopology> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "repeater needs at least 2 sources, got {n}"
        )));
    }
    let mut nodes = Vec::new();
    for i in 1..=n + 1 {
        let kind = if i == 1 || i == n + 1 {
            NodeKind::Agent {
                inputs: 2,
                outputs: 2,
            }
        } else {
            NodeKind::Agent {
                inputs: 1,
                outputs: 4,
            }
        };
        nodes.push(Node {
            label: format!("A{i}"),
            kind,
        });
    }
    let mut edges = Vec::new();
    for i in 0..n {
        let s = nodes.len();
        nodes.push(Node {
            label: format!("S{}", i + 1),
            kind: NodeKind::Source,
        });
        edges.push((s, i));
        edges.push((s, i + 1));
    }
    NetworkTopology::new(format!("repeater-{n}"), nodes, edges)
}

/// `n` sources each shared between one external agent and the central agent;
/// every agent has `k` inputs and two outputs. Agent order is externals
/// first, central last.
pub fn make_star_topology(n: usize, k: usize) -> Result<NetworkTopology> {
    if n < 1 {
        return Err(Error::InvalidParameter(format!(
            "star needs at least 1 branch, got {n}"
        )));
    }
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "star needs at least 2 settings, got {k}"
        )));
    }
    let mut nodes = Vec::new();
    for i in 1..=n {
        nodes.push(Node {
            label: format!("A{i}"),
            kind: NodeKind::Agent {
                inputs: k,
                outputs: 2,
            },
        });
    }
    nodes.push(Node {
        label: "B".into(),
        kind: NodeKind::Agent {
            inputs: k,
            outputs: 2,
        },
    });
    let central = n;
    let mut edges = Vec::new();
    for i in 0..n {
        let s = nodes.len();
        nodes.push(Node {
            label: format!("S{}", i + 1),
            kind: NodeKind::Source,
        });
        edges.push((s, i));
        edges.push((s, central));
    }
    NetworkTopology::new(format!("star-{n}x{k}"), nodes, edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConstraintKind {
    /// Agent `agents.0`'s marginal must not depend on agent `agents.1`'s input.
    InputNoSignalling,
    /// Agents with disjoint ancestries must have a product joint marginal.
    ProductMarginal,
}

#[derive(Debug, Clone, Serialize)]
pub struct IndependenceViolation {
    pub kind: ConstraintKind,
    pub agents: (usize, usize),
    pub deviation: f64,
}

/// Checks the behavior against the independence constraints generated from
/// the DAG and returns every constraint violated beyond `tolerance`.
///
/// Two families are generated: for each ordered agent pair (i, j), agent i's
/// outcome marginal may not vary with agent j's input; for each agent pair
/// with disjoint ancestries, the joint outcome marginal must be the product
/// of the single-agent marginals at every input tuple.
pub fn check_independences(
    topology: &NetworkTopology,
    behavior: &Behavior,
    tolerance: f64,
) -> Result<Vec<IndependenceViolation>> {
    let shapes = topology.agent_shapes();
    if behavior.agents() != shapes.as_slice() {
        return Err(Error::ShapeMismatch(format!(
            "behavior agents {:?} do not match topology agents {:?}",
            behavior.agents(),
            shapes
        )));
    }
    let n_agents = shapes.len();
    let input_radices = behavior.input_radices();
    let mut violations = Vec::new();

    for i in 0..n_agents {
        for j in 0..n_agents {
            if i == j || shapes[j].inputs < 2 {
                continue;
            }
            let mut deviation = 0.0f64;
            let mut context_radices = input_radices.clone();
            context_radices[j] = 1;
            for mut inputs in TupleIter::new(context_radices) {
                inputs[j] = 0;
                let reference = behavior.marginal(i, &inputs);
                for xj in 1..shapes[j].inputs {
                    inputs[j] = xj;
                    let marginal = behavior.marginal(i, &inputs);
                    for (p, q) in marginal.iter().zip(&reference) {
                        deviation = deviation.max((p - q).abs());
                    }
                }
            }
            if deviation > tolerance {
                violations.push(IndependenceViolation {
                    kind: ConstraintKind::InputNoSignalling,
                    agents: (i, j),
                    deviation,
                });
            }
        }
    }

    for (i, j) in topology.independent_agent_pairs() {
        let mut deviation = 0.0f64;
        for inputs in behavior.input_tuples() {
            let joint = behavior.joint_marginal(i, j, &inputs);
            let mi = behavior.marginal(i, &inputs);
            let mj = behavior.marginal(j, &inputs);
            for (a, &pa) in mi.iter().enumerate() {
                for (b, &pb) in mj.iter().enumerate() {
                    let idx = a * shapes[j].outputs + b;
                    deviation = deviation.max((joint[idx] - pa * pb).abs());
                }
            }
        }
        if deviation > tolerance {
            violations.push(IndependenceViolation {
                kind: ConstraintKind::ProductMarginal,
                agents: (i, j),
                deviation,
            });
        }
    }

    Ok(violations)
}
