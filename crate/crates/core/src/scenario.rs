//! Compiles quantum models of the repeater and star scenarios (with optional
//! source noise) into [`Behavior`] tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::behavior::{Behavior, TupleIter};
use crate::error::{Error, Result};
use crate::quantum::{
    bell_phi_plus, born, qubit_basis, singlet, CMatrix, MeasurementBank, MeasurementSetting,
    StateOperator,
};
use crate::topology::{make_repeater_topology, make_star_topology, NetworkTopology};

/// Sources plus one measurement bank per agent, compiled to a behavior via
/// the Born rule.
///
/// `wiring[slot]` gives, for each agent-side qubit slot (agents concatenated
/// in order), the index of the qubit in source-major order (sources
/// concatenated in order). Compilation permutes the joint state from source
/// order to agent order once, then measures agent by agent.
#[derive(Debug, Clone)]
pub struct QuantumModel {
    topology: NetworkTopology,
    source_states: Vec<StateOperator>,
    agent_banks: Vec<MeasurementBank>,
    wiring: Vec<usize>,
}

fn qubit_count(dim: usize, what: &str) -> Result<usize> {
    if dim.is_power_of_two() {
        Ok(dim.trailing_zeros() as usize)
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} dimension {dim} is not a power of two"
        )))
    }
}

impl QuantumModel {
    pub fn new(
        topology: NetworkTopology,
        source_states: Vec<StateOperator>,
        agent_banks: Vec<MeasurementBank>,
        wiring: Vec<usize>,
    ) -> Result<Self> {
        let shapes = topology.agent_shapes();
        if source_states.len() != topology.source_nodes().len() {
            return Err(Error::ShapeMismatch(format!(
                "{} source states for {} sources",
                source_states.len(),
                topology.source_nodes().len()
            )));
        }
        if agent_banks.len() != shapes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} banks for {} agents",
                agent_banks.len(),
                shapes.len()
            )));
        }
        let mut agent_qubits = 0;
        for (bank, shape) in agent_banks.iter().zip(&shapes) {
            if bank.settings() != shape.inputs {
                return Err(Error::ShapeMismatch(format!(
                    "bank has {} settings, agent expects {}",
                    bank.settings(),
                    shape.inputs
                )));
            }
            if bank.outcomes() != shape.outputs {
                return Err(Error::ShapeMismatch(format!(
                    "bank has {} outcomes, agent expects {}",
                    bank.outcomes(),
                    shape.outputs
                )));
            }
            agent_qubits += qubit_count(bank.dim(), "bank")?;
        }
        let mut source_qubits = 0;
        for s in &source_states {
            source_qubits += qubit_count(s.dim(), "source")?;
        }
        if agent_qubits != source_qubits {
            return Err(Error::DimensionMismatch(format!(
                "agents measure {agent_qubits} qubits but sources emit {source_qubits}"
            )));
        }
        let mut seen = vec![false; source_qubits];
        if wiring.len() != source_qubits
            || wiring
                .iter()
                .any(|&q| q >= source_qubits || std::mem::replace(&mut seen[q], true))
        {
            return Err(Error::ShapeMismatch(
                "wiring must be a permutation of the source qubits".into(),
            ));
        }
        Ok(Self {
            topology,
            source_states,
            agent_banks,
            wiring,
        })
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    /// Joint state in agent-major qubit order.
    fn agent_ordered_state(&self) -> CMatrix {
        let mut full = self.source_states[0].clone();
        for s in &self.source_states[1..] {
            full = full.kron(s);
        }
        permute_qubits(full.matrix(), &self.wiring)
    }

    /// Born-rule compilation over every input and outcome tuple.
    pub fn compile(&self) -> Result<Behavior> {
        let rho = self.agent_ordered_state();
        let state = StateOperator::new(rho)?;
        let shapes = self.topology.agent_shapes();
        let input_radices: Vec<usize> = shapes.iter().map(|s| s.inputs).collect();
        let outcome_space: usize = shapes.iter().map(|s| s.outputs).product();
        let mut table = Vec::with_capacity(input_radices.iter().product::<usize>() * outcome_space);
        for inputs in TupleIter::new(input_radices) {
            let settings: Vec<&MeasurementSetting> = self
                .agent_banks
                .iter()
                .zip(&inputs)
                .map(|(bank, &x)| bank.setting(x))
                .collect();
            if settings.iter().all(|s| s.kets().is_some()) {
                table.extend(rank_one_distribution(state.matrix(), &settings));
            } else {
                for outcomes in TupleIter::new(settings.iter().map(|s| s.outcomes()).collect()) {
                    table.push(born(&state, &settings, &outcomes)?);
                }
            }
        }
        Behavior::new(shapes, table)
    }

    /// Repeater chain: noisy maximally entangled sources,
    /// diagonal-observable end agents, Bell-basis intermediate agents.
    pub fn repeater(n: usize, visibilities: &[f64]) -> Result<Self> {
        let topology = make_repeater_topology(n)?;
        let source_states = noisy_sources(bell_phi_plus(), n, visibilities)?;
        let mut agent_banks = vec![MeasurementBank::diagonal_observables()];
        for _ in 2..=n {
            agent_banks.push(MeasurementBank::bell_basis());
        }
        agent_banks.push(MeasurementBank::diagonal_observables());
        // Agent-major order (A1 | R1 L2 | R2 L3 | ... | Rn) coincides with
        // source-major order (L1 R1 | L2 R2 | ...).
        let wiring = (0..2 * n).collect();
        Self::new(topology, source_states, agent_banks, wiring)
    }

    /// Star: noisy singlet sources, rotated-grid external agents, and a
    /// separable central measurement on the half-step grid reporting the
    /// parity of its per-qubit outcomes.
    pub fn star(n: usize, k: usize, visibilities: &[f64]) -> Result<Self> {
        let topology = make_star_topology(n, k)?;
        let source_states = noisy_sources(singlet(), n, visibilities)?;
        let mut agent_banks = Vec::with_capacity(n + 1);
        for _ in 0..n {
            agent_banks.push(MeasurementBank::rotated(k)?);
        }
        agent_banks.push(parity_bank(n, k)?);
        let mut wiring: Vec<usize> = (0..n).map(|i| 2 * i).collect();
        wiring.extend((0..n).map(|i| 2 * i + 1));
        Self::new(topology, source_states, agent_banks, wiring)
    }

    /// Two agents sharing one noisy singlet; the partner agent's grid is
    /// offset half a step with flipped outcomes so paired correlators are
    /// positive.
    pub fn bell(k: usize, visibility: f64) -> Result<Self> {
        let topology = make_star_topology(1, k)?;
        let source_states = noisy_sources(singlet(), 1, &[visibility])?;
        let agent_banks = vec![
            MeasurementBank::rotated(k)?,
            MeasurementBank::rotated_half_step_flipped(k)?,
        ];
        Self::new(topology, source_states, agent_banks, vec![0, 1])
    }
}

fn noisy_sources(
    state: StateOperator,
    n: usize,
    visibilities: &[f64],
) -> Result<Vec<StateOperator>> {
    if visibilities.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{} visibilities for {n} sources",
            visibilities.len()
        )));
    }
    visibilities
        .iter()
        .map(|&v| state.with_white_noise(v))
        .collect()
}

/// Reindexes a density matrix from source-major to agent-major qubit order.
fn permute_qubits(m: &CMatrix, wiring: &[usize]) -> CMatrix {
    let q = wiring.len();
    let dim = 1usize << q;
    debug_assert_eq!(m.nrows(), dim);
    let map = |idx: usize| -> usize {
        let mut out = 0usize;
        for (slot, &src) in wiring.iter().enumerate() {
            let bit = (idx >> (q - 1 - slot)) & 1;
            out |= bit << (q - 1 - src);
        }
        out
    };
    let row_map: Vec<usize> = (0..dim).map(map).collect();
    CMatrix::from_fn(dim, dim, |i, j| m[(row_map[i], row_map[j])])
}

/// Joint outcome probabilities when every agent's setting is a complete
/// rank-one basis: p(o) = <V_o| rho |V_o> with V_o the tensor basis vector.
fn rank_one_distribution(rho: &CMatrix, settings: &[&MeasurementSetting]) -> Vec<f64> {
    let mut basis = CMatrix::identity(1, 1);
    for s in settings {
        let kets = s.kets().expect("rank-one setting");
        let mut k = CMatrix::zeros(s.dim(), kets.len());
        for (col, ket) in kets.iter().enumerate() {
            k.set_column(col, ket);
        }
        basis = basis.kronecker(&k);
    }
    let image = rho * &basis;
    (0..basis.ncols())
        .map(|o| {
            basis
                .column(o)
                .iter()
                .zip(image.column(o).iter())
                .map(|(v, w)| (v.conj() * w).re)
                .sum()
        })
        .collect()
}

/// Central-agent bank measuring each qubit in the half-step basis for the
/// chosen setting and reporting the parity of the individual outcomes.
pub fn parity_bank(n: usize, k: usize) -> Result<MeasurementBank> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "parity bank needs k >= 2 settings, got {k}"
        )));
    }
    let mut settings = Vec::with_capacity(k);
    for y in 0..k {
        let theta = (2 * y + 1) as f64 * std::f64::consts::PI / (4.0 * k as f64);
        let single = qubit_basis(theta);
        let dim = 1usize << n;
        let mut even = CMatrix::zeros(dim, dim);
        let mut odd = CMatrix::zeros(dim, dim);
        for bits in 0..dim {
            let parts: Vec<&CMatrix> = (0..n)
                .map(|i| single.projector((bits >> (n - 1 - i)) & 1))
                .collect();
            let joint = crate::quantum::kron_all(&parts);
            if (bits.count_ones() & 1) == 0 {
                even += joint;
            } else {
                odd += joint;
            }
        }
        settings.push(MeasurementSetting::new(vec![even, odd])?);
    }
    MeasurementBank::new(settings)
}

/// Behavior of the repeater chain — diagonal end observables and Bell-basis
/// intermediate measurements — computed through the joint Born rule.
pub fn build_repeater_quantum(n: usize, visibilities: &[f64]) -> Result<Behavior> {
    QuantumModel::repeater(n, visibilities)?.compile()
}

/// Behavior of the star network. Exploits the product structure across
/// sources: the joint table is the parity convolution of per-source
/// two-qubit Born tables, which is exact for separable central measurements.
pub fn build_star_quantum(n: usize, k: usize, visibilities: &[f64]) -> Result<Behavior> {
    let topology = make_star_topology(n, k)?;
    if visibilities.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{} visibilities for {n} sources",
            visibilities.len()
        )));
    }
    let external = MeasurementBank::rotated(k)?;
    let central = MeasurementBank::rotated_half_step(k)?;
    // pair_probs[i][x][y][(a << 1) | c]: source i, external outcome a,
    // central per-qubit outcome c.
    let mut pair_probs = vec![vec![vec![[0.0f64; 4]; k]; k]; n];
    for (i, &v) in visibilities.iter().enumerate() {
        let rho = singlet().with_white_noise(v)?;
        for (x, per_x) in pair_probs[i].iter_mut().enumerate() {
            for (y, cell) in per_x.iter_mut().enumerate() {
                for a in 0..2 {
                    for cbit in 0..2 {
                        cell[(a << 1) | cbit] =
                            born(&rho, &[external.setting(x), central.setting(y)], &[a, cbit])?;
                    }
                }
            }
        }
    }
    let shapes = topology.agent_shapes();
    let input_radices: Vec<usize> = shapes.iter().map(|s| s.inputs).collect();
    let mut table = vec![0.0f64; input_radices.iter().product::<usize>() * (1 << (n + 1))];
    for (input_flat, inputs) in TupleIter::new(input_radices).enumerate() {
        let y = inputs[n];
        let block = &mut table[input_flat * (1 << (n + 1))..(input_flat + 1) * (1 << (n + 1))];
        for a_bits in 0..(1usize << n) {
            for c_bits in 0..(1usize << n) {
                let mut p = 1.0;
                for (i, &x) in inputs[..n].iter().enumerate() {
                    let a = (a_bits >> (n - 1 - i)) & 1;
                    let cbit = (c_bits >> (n - 1 - i)) & 1;
                    p *= pair_probs[i][x][y][(a << 1) | cbit];
                }
                let b = (c_bits.count_ones() & 1) as usize;
                block[(a_bits << 1) | b] += p;
            }
        }
    }
    Behavior::new(shapes, table)
}

/// Two-agent behavior with `k` settings per side used for the CHSH-family
/// and chained evaluations.
pub fn build_bell_quantum(k: usize, visibility: f64) -> Result<Behavior> {
    QuantumModel::bell(k, visibility)?.compile()
}

/// Closed-form table of the noiseless repeater correlations: uniform over
/// the two reported end bits and intermediate bit pairs, with the end-to-end
/// parity tied to the intermediate bits and inputs.
pub fn repeater_closed_form(n: usize) -> Result<Behavior> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "repeater needs at least 2 sources, got {n}"
        )));
    }
    let shapes = make_repeater_topology(n)?.agent_shapes();
    let norm = 1.0 / (4.0f64.powi(n as i32));
    Behavior::from_fn(shapes, |inputs, outcomes| {
        let ends = outcomes[0] + outcomes[n];
        let mut sum0 = 0usize;
        let mut sum1 = 0usize;
        for &o in &outcomes[1..n] {
            sum0 += o >> 1;
            sum1 += o & 1;
        }
        let sign_ends = if ends & 1 == 0 { 1.0 } else { -1.0 };
        let term0 = if sum0 & 1 == 0 { 1.0 } else { -1.0 };
        let term1 = if (sum1 + inputs[0] + inputs[n]) & 1 == 0 {
            1.0
        } else {
            -1.0
        };
        norm * (1.0 + sign_ends * (term0 + term1) / 2.0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Repeater,
    Star,
    Bell,
}

/// On-disk description of a scenario build: kind, sizes, visibilities, and
/// where to write the resulting behavior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub visibilities: Option<Vec<f64>>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn build(&self) -> Result<Behavior> {
        match self.scenario {
            ScenarioKind::Repeater => {
                let n = self
                    .n
                    .ok_or_else(|| Error::InvalidParameter("repeater needs n".into()))?;
                let vis = resolve_visibilities(n, self.visibilities.as_deref())?;
                build_repeater_quantum(n, &vis)
            }
            ScenarioKind::Star => {
                let n = self
                    .n
                    .ok_or_else(|| Error::InvalidParameter("star needs n".into()))?;
                let k = self
                    .k
                    .ok_or_else(|| Error::InvalidParameter("star needs k".into()))?;
                let vis = resolve_visibilities(n, self.visibilities.as_deref())?;
                build_star_quantum(n, k, &vis)
            }
            ScenarioKind::Bell => {
                let k = self
                    .k
                    .ok_or_else(|| Error::InvalidParameter("bell needs k".into()))?;
                let vis = resolve_visibilities(1, self.visibilities.as_deref())?;
                build_bell_quantum(k, vis[0])
            }
        }
    }
}

/// Defaults to unit visibility for every source; otherwise requires one
/// value per source, each within [0, 1].
pub fn resolve_visibilities(n: usize, visibilities: Option<&[f64]>) -> Result<Vec<f64>> {
    match visibilities {
        None => Ok(vec![1.0; n]),
        Some(v) => {
            if v.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "expected {n} visibilities, got {}",
                    v.len()
                )));
            }
            for &x in v {
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::InvalidParameter(format!(
                        "visibility {x} outside [0, 1]"
                    )));
                }
            }
            Ok(v.to_vec())
        }
    }
}
