//! Classical source-and-response machinery: exact mixture behaviors,
//! exhaustive enumeration of deterministic strategies, and randomized search
//! over stochastic models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::behavior::{decode_tuple, AgentShape, Behavior, TupleIter};
use crate::error::{Error, Result};
use crate::inequality::{eval_chained, eval_chsh, eval_repeater, eval_star};
use crate::topology::NetworkTopology;

/// Default cap on the number of strategies exhaustive enumeration may visit.
pub const DEFAULT_BUDGET: u128 = 100_000_000;

/// Objective evaluated by the strategy searches. Scenario sizes are read off
/// the behavior shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchObjective {
    /// Repeater score sqrt|I| + sqrt|J|.
    Repeater,
    /// Star score sum_i |I_i|^(1/n).
    Star,
    /// k-setting CHSH family value.
    Chsh,
    /// Chained Bell expression value.
    Chained,
}

impl SearchObjective {
    pub fn evaluate(&self, behavior: &Behavior) -> Result<f64> {
        match self {
            SearchObjective::Repeater => Ok(eval_repeater(behavior)?.score),
            SearchObjective::Star => {
                let n = behavior.agents().len() - 1;
                let k = behavior.agents()[0].inputs;
                Ok(eval_star(behavior, n, k)?.score)
            }
            SearchObjective::Chsh => eval_chsh(behavior, behavior.agents()[0].inputs),
            SearchObjective::Chained => eval_chained(behavior, behavior.agents()[0].inputs),
        }
    }
}

/// Fixed source values plus one deterministic response function per agent.
#[derive(Debug, Clone, Serialize)]
pub struct DeterministicStrategy {
    /// One value in `0..cardinality` per source.
    pub source_values: Vec<usize>,
    /// Per agent: outcome for every (input, incident source values) point;
    /// indexed input-major, then incident values mixed-radix.
    pub responses: Vec<Vec<usize>>,
    pub cardinality: usize,
}

/// Independent distributions over source values plus one stochastic response
/// table per agent; sources are mutually independent by construction.
#[derive(Debug, Clone)]
pub struct ClassicalModel {
    source_distributions: Vec<Vec<f64>>,
    /// Per agent: P(outcome | input, incident values), indexed
    /// `[input][lambda_flat][outcome]` flattened.
    responses: Vec<Vec<f64>>,
}

impl ClassicalModel {
    pub fn new(source_distributions: Vec<Vec<f64>>, responses: Vec<Vec<f64>>) -> Result<Self> {
        for q in &source_distributions {
            let sum: f64 = q.iter().sum();
            if q.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParameter(
                    "source distribution is not normalized".into(),
                ));
            }
        }
        Ok(Self {
            source_distributions,
            responses,
        })
    }

    pub fn cardinality(&self, source: usize) -> usize {
        self.source_distributions[source].len()
    }
}

struct AgentWiring {
    shape: AgentShape,
    incident: Vec<usize>,
    /// Cardinalities of the incident sources, in incident order.
    incident_cards: Vec<usize>,
}

fn wire_agents(topology: &NetworkTopology, cards: &[usize]) -> Vec<AgentWiring> {
    topology
        .agent_shapes()
        .into_iter()
        .enumerate()
        .map(|(pos, shape)| {
            let incident = topology.incident_sources(pos);
            let incident_cards = incident.iter().map(|&s| cards[s]).collect();
            AgentWiring {
                shape,
                incident,
                incident_cards,
            }
        })
        .collect()
}

fn response_index(
    wiring: &AgentWiring,
    input: usize,
    local_lambda: &[usize],
    outcome: usize,
) -> usize {
    let lambda_space: usize = wiring.incident_cards.iter().product();
    let mut lambda_flat = 0;
    for (&v, &card) in local_lambda.iter().zip(&wiring.incident_cards) {
        lambda_flat = lambda_flat * card + v;
    }
    (input * lambda_space + lambda_flat) * wiring.shape.outputs + outcome
}

/// Exact behavior of a classical model on the topology:
/// `P(o|x) = sum_lambda prod_s q_s(lambda_s) prod_a T_a(o_a | x_a, lambda)`.
/// Accumulated with Neumaier-compensated sums per table cell.
pub fn behavior_of(model: &ClassicalModel, topology: &NetworkTopology) -> Result<Behavior> {
    let shapes = topology.agent_shapes();
    let n_sources = topology.source_nodes().len();
    if model.source_distributions.len() != n_sources {
        return Err(Error::ShapeMismatch(format!(
            "{} source distributions for {n_sources} sources",
            model.source_distributions.len()
        )));
    }
    if model.responses.len() != shapes.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} response tables for {} agents",
            model.responses.len(),
            shapes.len()
        )));
    }
    let cards: Vec<usize> = model.source_distributions.iter().map(Vec::len).collect();
    let wirings = wire_agents(topology, &cards);
    for (w, table) in wirings.iter().zip(&model.responses) {
        let lambda_space: usize = w.incident_cards.iter().product();
        let expected = w.shape.inputs * lambda_space * w.shape.outputs;
        if table.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "response table has {} entries, agent needs {expected}",
                table.len()
            )));
        }
        for row in table.chunks(w.shape.outputs) {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParameter(
                    "response row is not a distribution".into(),
                ));
            }
        }
    }

    let input_radices: Vec<usize> = shapes.iter().map(|s| s.inputs).collect();
    let outcome_radices: Vec<usize> = shapes.iter().map(|s| s.outputs).collect();
    let input_space: usize = input_radices.iter().product();
    let outcome_space: usize = outcome_radices.iter().product();
    let mut table = vec![0.0f64; input_space * outcome_space];
    let mut compensation = vec![0.0f64; table.len()];

    let mut inputs = vec![0usize; shapes.len()];
    let mut outcomes = vec![0usize; shapes.len()];
    for lambda in TupleIter::new(cards.clone()) {
        let weight: f64 = lambda
            .iter()
            .zip(&model.source_distributions)
            .map(|(&v, q)| q[v])
            .product();
        if weight == 0.0 {
            continue;
        }
        // Per-agent response rows for this lambda, reused across the grid.
        let local: Vec<Vec<usize>> = wirings
            .iter()
            .map(|w| w.incident.iter().map(|&s| lambda[s]).collect())
            .collect();
        for input_flat in 0..input_space {
            decode_tuple(input_flat, &input_radices, &mut inputs);
            for outcome_flat in 0..outcome_space {
                decode_tuple(outcome_flat, &outcome_radices, &mut outcomes);
                let mut p = weight;
                for (a, w) in wirings.iter().enumerate() {
                    p *= model.responses[a][response_index(w, inputs[a], &local[a], outcomes[a])];
                    if p == 0.0 {
                        break;
                    }
                }
                // Neumaier update.
                let cell = input_flat * outcome_space + outcome_flat;
                let sum = table[cell] + p;
                if table[cell].abs() >= p.abs() {
                    compensation[cell] += (table[cell] - sum) + p;
                } else {
                    compensation[cell] += (p - sum) + table[cell];
                }
                table[cell] = sum;
            }
        }
    }
    for (t, c) in table.iter_mut().zip(&compensation) {
        *t += c;
    }
    Behavior::new(shapes, table)
}

impl DeterministicStrategy {
    /// Point-mass classical model with this strategy's sources and responses.
    pub fn to_model(&self, topology: &NetworkTopology) -> Result<ClassicalModel> {
        let cards = vec![self.cardinality; self.source_values.len()];
        let wirings = wire_agents(topology, &cards);
        let source_distributions = self
            .source_values
            .iter()
            .map(|&v| {
                let mut q = vec![0.0; self.cardinality];
                q[v] = 1.0;
                q
            })
            .collect();
        let responses = wirings
            .iter()
            .zip(&self.responses)
            .map(|(w, resp)| {
                let lambda_space: usize = w.incident_cards.iter().product();
                let mut table = vec![0.0; w.shape.inputs * lambda_space * w.shape.outputs];
                for (point, &outcome) in resp.iter().enumerate() {
                    table[point * w.shape.outputs + outcome] = 1.0;
                }
                table
            })
            .collect();
        ClassicalModel::new(source_distributions, responses)
    }

    pub fn behavior(&self, topology: &NetworkTopology) -> Result<Behavior> {
        behavior_of(&self.to_model(topology)?, topology)
    }
}

/// Result of an exhaustive search: the exact maximum over the enumerated
/// deterministic strategies and one strategy attaining it.
#[derive(Debug, Clone, Serialize)]
pub struct SearchOutcome {
    pub best: f64,
    pub strategy: DeterministicStrategy,
    pub strategies_visited: u128,
}

/// Number of strategies `exhaustive_max` visits: every deterministic source
/// assignment times every realized response table. Response values on source
/// tuples a strategy never realizes cannot change its behavior, so they are
/// not enumerated.
pub fn exhaustive_count(topology: &NetworkTopology, cardinality: usize) -> Option<u128> {
    let n_sources = topology.source_nodes().len() as u32;
    let mut count = (cardinality as u128).checked_pow(n_sources)?;
    for shape in topology.agent_shapes() {
        let per_agent = (shape.outputs as u128).checked_pow(shape.inputs as u32)?;
        count = count.checked_mul(per_agent)?;
    }
    Some(count)
}

/// Exact maximum of the objective over deterministic strategies with
/// deterministic sources of the given cardinality.
pub fn exhaustive_max(
    topology: &NetworkTopology,
    objective: SearchObjective,
    cardinality: usize,
    budget: u128,
) -> Result<SearchOutcome> {
    if cardinality == 0 {
        return Err(Error::InvalidParameter(
            "source cardinality must be >= 1".into(),
        ));
    }
    let count = exhaustive_count(topology, cardinality).ok_or(Error::BudgetExceeded {
        count: u128::MAX,
        budget,
    })?;
    if count > budget {
        return Err(Error::BudgetExceeded { count, budget });
    }
    let shapes = topology.agent_shapes();
    let n_sources = topology.source_nodes().len();
    // Response choice per agent: an outcome for each input value.
    let response_spaces: Vec<usize> = shapes
        .iter()
        .map(|s| s.outputs.pow(s.inputs as u32))
        .collect();

    let mut best: Option<(f64, Vec<usize>, Vec<Vec<usize>>)> = None;
    let mut visited = 0u128;
    for lambda in TupleIter::new(vec![cardinality; n_sources]) {
        for choice in TupleIter::new(response_spaces.clone()) {
            visited += 1;
            // outputs_per_input[a][x] = outcome of agent a on input x.
            let outputs_per_input: Vec<Vec<usize>> = shapes
                .iter()
                .zip(&choice)
                .map(|(s, &c)| {
                    let mut rem = c;
                    let mut outs = vec![0usize; s.inputs];
                    for slot in outs.iter_mut() {
                        *slot = rem % s.outputs;
                        rem /= s.outputs;
                    }
                    outs
                })
                .collect();
            let behavior = Behavior::from_fn(shapes.clone(), |x, o| {
                let matches = o
                    .iter()
                    .enumerate()
                    .all(|(a, &oa)| outputs_per_input[a][x[a]] == oa);
                if matches {
                    1.0
                } else {
                    0.0
                }
            })?;
            let value = objective.evaluate(&behavior)?;
            if best.as_ref().is_none_or(|(b, _, _)| value > *b) {
                best = Some((value, lambda.clone(), outputs_per_input));
            }
        }
    }
    let (value, lambda, outputs_per_input) = best.expect("strategy space is non-empty");

    // Broadcast the realized responses over the full (input, lambda) domain.
    let cards = vec![cardinality; n_sources];
    let wirings = wire_agents(topology, &cards);
    let responses = wirings
        .iter()
        .zip(&outputs_per_input)
        .map(|(w, outs)| {
            let lambda_space: usize = w.incident_cards.iter().product();
            let mut table = Vec::with_capacity(w.shape.inputs * lambda_space);
            for &out in outs.iter().take(w.shape.inputs) {
                table.extend(std::iter::repeat_n(out, lambda_space));
            }
            table
        })
        .collect();
    Ok(SearchOutcome {
        best: value,
        strategy: DeterministicStrategy {
            source_values: lambda,
            responses,
            cardinality,
        },
        strategies_visited: visited,
    })
}

fn sample_simplex<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let sum: f64 = v.iter().sum();
    for x in &mut v {
        *x /= sum;
    }
    v
}

fn random_model<R: Rng>(
    rng: &mut R,
    topology: &NetworkTopology,
    cardinality: usize,
) -> ClassicalModel {
    let n_sources = topology.source_nodes().len();
    let cards = vec![cardinality; n_sources];
    let wirings = wire_agents(topology, &cards);
    let source_distributions = (0..n_sources)
        .map(|_| sample_simplex(rng, cardinality))
        .collect();
    let responses = wirings
        .iter()
        .map(|w| {
            let lambda_space: usize = w.incident_cards.iter().product();
            let mut table = Vec::with_capacity(w.shape.inputs * lambda_space * w.shape.outputs);
            for _ in 0..w.shape.inputs * lambda_space {
                table.extend(sample_simplex(rng, w.shape.outputs));
            }
            table
        })
        .collect();
    ClassicalModel {
        source_distributions,
        responses,
    }
}

fn blend(base: &ClassicalModel, toward: &ClassicalModel, step: f64) -> ClassicalModel {
    let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(x, y)| (1.0 - step) * x + step * y)
            .collect()
    };
    ClassicalModel {
        source_distributions: base
            .source_distributions
            .iter()
            .zip(&toward.source_distributions)
            .map(|(a, b)| mix(a, b))
            .collect(),
        responses: base
            .responses
            .iter()
            .zip(&toward.responses)
            .map(|(a, b)| mix(a, b))
            .collect(),
    }
}

/// Proposals per step size in the hill-climbing refinement.
const REFINE_PROPOSALS: usize = 200;
const REFINE_STEPS: [f64; 6] = [0.5, 0.25, 0.1, 0.05, 0.02, 0.01];

/// Best objective value over `iterations` sampled stochastic models followed
/// by a fixed hill-climbing schedule. Deterministic for a given seed.
pub fn randomized_max(
    topology: &NetworkTopology,
    objective: SearchObjective,
    seed: u64,
    iterations: usize,
    cardinality: usize,
) -> Result<f64> {
    if cardinality == 0 {
        return Err(Error::InvalidParameter(
            "source cardinality must be >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_value = f64::NEG_INFINITY;
    let mut best_model: Option<ClassicalModel> = None;
    for _ in 0..iterations.max(1) {
        let model = random_model(&mut rng, topology, cardinality);
        let value = objective.evaluate(&behavior_of(&model, topology)?)?;
        if value > best_value {
            best_value = value;
            best_model = Some(model);
        }
    }
    let mut current = best_model.expect("at least one iteration");
    for step in REFINE_STEPS {
        for _ in 0..REFINE_PROPOSALS {
            let proposal = blend(
                &current,
                &random_model(&mut rng, topology, cardinality),
                step,
            );
            let value = objective.evaluate(&behavior_of(&proposal, topology)?)?;
            if value > best_value {
                best_value = value;
                current = proposal;
            }
        }
    }
    Ok(best_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{check_independences, make_repeater_topology, make_star_topology};

    fn uniform_parity_model() -> ClassicalModel {
        // Binary uniform sources; end agents echo their source bit, the
        // middle agent reports (xor, 0).
        let det = |outcome: usize, outputs: usize| -> Vec<f64> {
            let mut row = vec![0.0; outputs];
            row[outcome] = 1.0;
            row
        };
        let mut ends = Vec::new();
        for _x in 0..2 {
            for l in 0..2 {
                ends.extend(det(l, 2));
            }
        }
        let mut middle = Vec::new();
        for (l1, l2) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            middle.extend(det((l1 ^ l2) << 1, 4));
        }
        ClassicalModel::new(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![ends.clone(), middle, ends],
        )
        .unwrap()
    }

    #[test]
    fn parity_model_scores_classical_extreme() {
        let topo = make_repeater_topology(2).unwrap();
        let b = behavior_of(&uniform_parity_model(), &topo).unwrap();
        let score = crate::inequality::eval_repeater(&b).unwrap();
        assert_eq!(score.i_term, 1.0);
        assert_eq!(score.j_term, 0.0);
        // Independence holds exactly: the table is dyadic.
        assert!(check_independences(&topo, &b, 0.0).unwrap().is_empty());
    }

    #[test]
    fn deterministic_strategy_is_point_mass() {
        let topo = make_star_topology(1, 2).unwrap();
        // Response domain per agent: 2 inputs x 2 incident source values.
        let strategy = DeterministicStrategy {
            source_values: vec![0],
            responses: vec![vec![0, 0, 0, 0], vec![0, 0, 0, 0]],
            cardinality: 2,
        };
        let b = strategy.behavior(&topo).unwrap();
        for inputs in b.input_tuples() {
            assert_eq!(b.prob(&inputs, &[0, 0]), 1.0);
        }
    }

    #[test]
    fn exhaustive_repeater_maximum_is_one() {
        let topo = make_repeater_topology(2).unwrap();
        for c in [2, 3, 4] {
            let out = exhaustive_max(&topo, SearchObjective::Repeater, c, DEFAULT_BUDGET).unwrap();
            assert_eq!(out.best, 1.0, "cardinality {c}");
            assert_eq!(out.strategies_visited, exhaustive_count(&topo, c).unwrap());
            // The argmax reproduces its score.
            let b = out.strategy.behavior(&topo).unwrap();
            assert_eq!(crate::inequality::eval_repeater(&b).unwrap().score, 1.0);
        }
    }

    #[test]
    fn exhaustive_star_and_chsh_maxima() {
        let star = make_star_topology(2, 2).unwrap();
        let out = exhaustive_max(&star, SearchObjective::Star, 2, DEFAULT_BUDGET).unwrap();
        assert_eq!(out.best, 1.0); // k - 1

        let bell = make_star_topology(1, 2).unwrap();
        let out = exhaustive_max(&bell, SearchObjective::Chsh, 4, DEFAULT_BUDGET).unwrap();
        assert_eq!(out.best, 2.0);
    }

    #[test]
    fn budget_is_enforced() {
        let topo = make_repeater_topology(2).unwrap();
        let err = exhaustive_max(&topo, SearchObjective::Repeater, 4, 100).unwrap_err();
        match err {
            Error::BudgetExceeded { count, budget } => {
                assert_eq!(budget, 100);
                assert!(count > 100);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn randomized_search_is_seed_deterministic_and_bounded() {
        let topo = make_repeater_topology(2).unwrap();
        let a = randomized_max(&topo, SearchObjective::Repeater, 7, 300, 2).unwrap();
        let b = randomized_max(&topo, SearchObjective::Repeater, 7, 300, 2).unwrap();
        assert_eq!(a, b);
        assert!(a <= 1.0 + 1e-9, "found {a}");
        let c = randomized_max(&topo, SearchObjective::Repeater, 8, 300, 2).unwrap();
        assert!(c <= 1.0 + 1e-9, "found {c}");
    }

    #[test]
    fn model_validation() {
        assert!(ClassicalModel::new(vec![vec![0.7, 0.2]], vec![]).is_err());
        let topo = make_star_topology(1, 2).unwrap();
        let model = ClassicalModel::new(vec![vec![0.5, 0.5]], vec![vec![0.5; 8]]).unwrap();
        // Missing one agent's table.
        assert!(behavior_of(&model, &topo).is_err());
    }
}
