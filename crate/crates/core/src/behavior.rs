//! Conditional probability tables over a network's agents.
//!
//! A [`Behavior`] stores P(outcomes | inputs) densely. The index layout is
//! frozen: input tuples are outer, outcome tuples inner, both flattened
//! mixed-radix in agent order with the first agent most significant.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input and output arity of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentShape {
    pub inputs: usize,
    pub outputs: usize,
}

impl AgentShape {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs }
    }
}

pub(crate) fn encode_tuple(tuple: &[usize], radices: &[usize]) -> usize {
    debug_assert_eq!(tuple.len(), radices.len());
    let mut flat = 0;
    for (&t, &r) in tuple.iter().zip(radices) {
        debug_assert!(t < r);
        flat = flat * r + t;
    }
    flat
}

pub(crate) fn decode_tuple(mut flat: usize, radices: &[usize], out: &mut [usize]) {
    for idx in (0..radices.len()).rev() {
        out[idx] = flat % radices[idx];
        flat /= radices[idx];
    }
}

/// Iterator over all mixed-radix tuples for the given radices.
pub struct TupleIter {
    radices: Vec<usize>,
    next: usize,
    total: usize,
}

impl TupleIter {
    pub fn new(radices: Vec<usize>) -> Self {
        let total = radices.iter().product();
        Self {
            radices,
            next: 0,
            total,
        }
    }
}

impl Iterator for TupleIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.next >= self.total {
            return None;
        }
        let mut tuple = vec![0; self.radices.len()];
        decode_tuple(self.next, &self.radices, &mut tuple);
        self.next += 1;
        Some(tuple)
    }
}

const FORMAT_TAG: &str = "behavior/1";
const LAYOUT_TAG: &str = "inputs-outer-outcomes-inner; agent order; first agent most significant";

#[derive(Serialize, Deserialize)]
struct BehaviorFile {
    format: String,
    layout: String,
    agents: Vec<AgentShape>,
    probabilities: Vec<f64>,
}

/// Dense conditional probability table P(outcomes | inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    agents: Vec<AgentShape>,
    table: Vec<f64>,
}

impl Behavior {
    /// Validates entry positivity and per-input normalization (1e-10).
    pub fn new(agents: Vec<AgentShape>, mut table: Vec<f64>) -> Result<Self> {
        let input_space: usize = agents.iter().map(|a| a.inputs).product();
        let outcome_space: usize = agents.iter().map(|a| a.outputs).product();
        if agents.iter().any(|a| a.inputs == 0 || a.outputs == 0) {
            return Err(Error::ShapeMismatch("agent arities must be >= 1".into()));
        }
        if table.len() != input_space * outcome_space {
            return Err(Error::ShapeMismatch(format!(
                "table has {} entries, shape requires {}",
                table.len(),
                input_space * outcome_space
            )));
        }
        for (index, p) in table.iter_mut().enumerate() {
            if !p.is_finite() || *p < -1e-10 {
                return Err(Error::NegativeProbability { index, value: *p });
            }
            if *p < 0.0 {
                *p = 0.0; // numerical dust from Born-rule round-off
            }
        }
        for input in 0..input_space {
            let sum: f64 = table[input * outcome_space..(input + 1) * outcome_space]
                .iter()
                .sum();
            if (sum - 1.0).abs() > 1e-10 {
                return Err(Error::NotNormalized { input, sum });
            }
        }
        Ok(Self { agents, table })
    }

    /// Builds the table by evaluating `f(inputs, outcomes)` over the full grid.
    pub fn from_fn(
        agents: Vec<AgentShape>,
        mut f: impl FnMut(&[usize], &[usize]) -> f64,
    ) -> Result<Self> {
        let input_radices: Vec<usize> = agents.iter().map(|a| a.inputs).collect();
        let outcome_radices: Vec<usize> = agents.iter().map(|a| a.outputs).collect();
        let input_space: usize = input_radices.iter().product();
        let outcome_space: usize = outcome_radices.iter().product();
        let mut table = Vec::with_capacity(input_space * outcome_space);
        let mut inputs = vec![0; agents.len()];
        let mut outcomes = vec![0; agents.len()];
        for i in 0..input_space {
            decode_tuple(i, &input_radices, &mut inputs);
            for o in 0..outcome_space {
                decode_tuple(o, &outcome_radices, &mut outcomes);
                table.push(f(&inputs, &outcomes));
            }
        }
        Self::new(agents, table)
    }

    pub fn agents(&self) -> &[AgentShape] {
        &self.agents
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn input_space(&self) -> usize {
        self.agents.iter().map(|a| a.inputs).product()
    }

    pub fn outcome_space(&self) -> usize {
        self.agents.iter().map(|a| a.outputs).product()
    }

    pub fn input_radices(&self) -> Vec<usize> {
        self.agents.iter().map(|a| a.inputs).collect()
    }

    pub fn outcome_radices(&self) -> Vec<usize> {
        self.agents.iter().map(|a| a.outputs).collect()
    }

    pub fn input_tuples(&self) -> TupleIter {
        TupleIter::new(self.input_radices())
    }

    pub fn outcome_tuples(&self) -> TupleIter {
        TupleIter::new(self.outcome_radices())
    }

    pub fn prob(&self, inputs: &[usize], outcomes: &[usize]) -> f64 {
        let i = encode_tuple(inputs, &self.input_radices());
        let o = encode_tuple(outcomes, &self.outcome_radices());
        self.table[i * self.outcome_space() + o]
    }

    /// The probability block for one flattened input index.
    pub fn block(&self, input_flat: usize) -> &[f64] {
        let w = self.outcome_space();
        &self.table[input_flat * w..(input_flat + 1) * w]
    }

    /// Marginal distribution of one agent's outcome at a full input tuple.
    pub fn marginal(&self, agent: usize, inputs: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.agents[agent].outputs];
        let radices = self.outcome_radices();
        let input_flat = encode_tuple(inputs, &self.input_radices());
        let block = self.block(input_flat);
        let mut outcomes = vec![0; self.agents.len()];
        for (o, p) in block.iter().enumerate() {
            decode_tuple(o, &radices, &mut outcomes);
            out[outcomes[agent]] += p;
        }
        out
    }

    /// Joint marginal of two agents' outcomes, flattened as
    /// `outcome_i * outputs_j + outcome_j`.
    pub fn joint_marginal(&self, i: usize, j: usize, inputs: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.agents[i].outputs * self.agents[j].outputs];
        let radices = self.outcome_radices();
        let input_flat = encode_tuple(inputs, &self.input_radices());
        let block = self.block(input_flat);
        let mut outcomes = vec![0; self.agents.len()];
        for (o, p) in block.iter().enumerate() {
            decode_tuple(o, &radices, &mut outcomes);
            out[outcomes[i] * self.agents[j].outputs + outcomes[j]] += p;
        }
        out
    }

    /// Expectation of `f(outcomes)` at a full input tuple.
    pub fn expectation(&self, inputs: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> f64 {
        let radices = self.outcome_radices();
        let input_flat = encode_tuple(inputs, &self.input_radices());
        let block = self.block(input_flat);
        let mut outcomes = vec![0; self.agents.len()];
        let mut acc = 0.0;
        for (o, p) in block.iter().enumerate() {
            decode_tuple(o, &radices, &mut outcomes);
            acc += f(&outcomes) * p;
        }
        acc
    }

    /// Largest absolute entrywise difference between two same-shaped tables.
    pub fn max_abs_diff(&self, other: &Behavior) -> Result<f64> {
        if self.agents != other.agents {
            return Err(Error::ShapeMismatch(
                "behaviors have different agent shapes".into(),
            ));
        }
        Ok(self
            .table
            .iter()
            .zip(&other.table)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Behavior with an independent uniform-simplex outcome distribution per
    /// input tuple.
    pub fn random<R: rand::Rng>(agents: Vec<AgentShape>, rng: &mut R) -> Self {
        let input_space: usize = agents.iter().map(|a| a.inputs).product();
        let outcome_space: usize = agents.iter().map(|a| a.outputs).product();
        let mut table = Vec::with_capacity(input_space * outcome_space);
        for _ in 0..input_space {
            let mut block: Vec<f64> = (0..outcome_space)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            let sum: f64 = block.iter().sum();
            for b in &mut block {
                *b /= sum;
            }
            table.extend(block);
        }
        Self::new(agents, table).expect("sampled blocks are normalized")
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let file = BehaviorFile {
            format: FORMAT_TAG.to_string(),
            layout: LAYOUT_TAG.to_string(),
            agents: self.agents.clone(),
            probabilities: self.table.clone(),
        };
        let mut ser = serde_json::Serializer::with_formatter(writer, SigDigitFormatter);
        file.serialize(&mut ser)?;
        Ok(())
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let file: BehaviorFile = serde_json::from_reader(reader)?;
        if file.format != FORMAT_TAG {
            return Err(Error::UnsupportedFormat(file.format));
        }
        if file.layout != LAYOUT_TAG {
            return Err(Error::UnsupportedFormat(format!("layout: {}", file.layout)));
        }
        Self::new(file.agents, file.probabilities)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.to_writer(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(f))
    }
}

/// JSON formatter printing floats with 17 significant decimal digits, which
/// pins down an f64 exactly; parsing uses full-precision round-tripping.
struct SigDigitFormatter;

impl serde_json::ser::Formatter for SigDigitFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + Write,
    {
        write!(writer, "{value:.16e}")
    }
}
