//! Evaluation of the network inequalities on behaviors: the repeater chain
//! score, the star score, the k-setting CHSH family, and the chained Bell
//! expression.

use serde::Serialize;

use crate::behavior::{AgentShape, Behavior};
use crate::error::{Error, Result};

/// Repeater-chain score: `score = sqrt|I| + sqrt|J|`, classically at most 1.
///
/// `i_term` averages the end-to-end correlator with intermediate agents
/// reporting their first outcome bit; `j_term` does the same with the second
/// bit and input-dependent signs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RepeaterScore {
    pub i_term: f64,
    pub j_term: f64,
    pub score: f64,
}

/// Star score: `score = sum_i |terms[i]|^(1/branches)`, classically at most
/// `settings - 1`.
#[derive(Debug, Clone, Serialize)]
pub struct StarScore {
    pub terms: Vec<f64>,
    pub score: f64,
    pub branches: usize,
    pub settings: usize,
}

fn parity_sign(bits: usize) -> f64 {
    if bits & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn repeater_sources(behavior: &Behavior) -> Result<usize> {
    let agents = behavior.agents();
    if agents.len() < 3 {
        return Err(Error::ShapeMismatch(
            "repeater behavior needs at least 3 agents".into(),
        ));
    }
    let n = agents.len() - 1;
    let end = AgentShape::new(2, 2);
    let middle = AgentShape::new(1, 4);
    if agents[0] != end || agents[n] != end || agents[1..n].iter().any(|a| *a != middle) {
        return Err(Error::ShapeMismatch(format!(
            "agent arities {agents:?} are not a repeater shape"
        )));
    }
    Ok(n)
}

/// End-to-end correlator of a repeater behavior with every intermediate
/// agent reporting outcome bit `bit` of its four-valued outcome.
fn repeater_correlator(behavior: &Behavior, n: usize, bit: usize, x1: usize, xn: usize) -> f64 {
    let mut inputs = vec![0usize; n + 1];
    inputs[0] = x1;
    inputs[n] = xn;
    behavior.expectation(&inputs, |o| {
        let middles: usize = o[1..n].iter().map(|&m| (m >> (1 - bit)) & 1).sum();
        parity_sign(o[0] + o[n] + middles)
    })
}

/// Evaluates the repeater score on a behavior of repeater shape.
pub fn eval_repeater(behavior: &Behavior) -> Result<RepeaterScore> {
    let n = repeater_sources(behavior)?;
    let mut i_term = 0.0;
    let mut j_term = 0.0;
    for x1 in 0..2 {
        for xn in 0..2 {
            i_term += repeater_correlator(behavior, n, 0, x1, xn) / 4.0;
            j_term += parity_sign(x1 + xn) * repeater_correlator(behavior, n, 1, x1, xn) / 4.0;
        }
    }
    Ok(RepeaterScore {
        i_term,
        j_term,
        score: i_term.abs().sqrt() + j_term.abs().sqrt(),
    })
}

fn star_shape(behavior: &Behavior, n: usize, k: usize) -> Result<()> {
    let agents = behavior.agents();
    if agents.len() != n + 1 || agents.iter().any(|a| *a != AgentShape::new(k, 2)) {
        return Err(Error::ShapeMismatch(format!(
            "agent arities {agents:?} are not a {n}-branch {k}-setting star shape"
        )));
    }
    Ok(())
}

/// Full correlator of a star behavior: expectation of the parity of every
/// outcome at external inputs `xs` and central input `y`.
fn star_correlator(behavior: &Behavior, xs: &[usize], y: usize) -> f64 {
    let mut inputs = xs.to_vec();
    inputs.push(y);
    behavior.expectation(&inputs, |o| parity_sign(o.iter().sum::<usize>()))
}

/// Evaluates the star score. When a term of the defining sum requires
/// external setting `k`, setting 0 is used with a flipped sign.
pub fn eval_star(behavior: &Behavior, n: usize, k: usize) -> Result<StarScore> {
    star_shape(behavior, n, k)?;
    let mut terms = Vec::with_capacity(k);
    let norm = 1.0 / (1u64 << n) as f64;
    for i in 0..k {
        let mut term = 0.0;
        for mask in 0..(1usize << n) {
            let mut sign = 1.0;
            let mut xs = vec![0usize; n];
            for (j, x) in xs.iter_mut().enumerate() {
                let raw = i + ((mask >> j) & 1);
                if raw == k {
                    *x = 0;
                    sign = -sign;
                } else {
                    *x = raw;
                }
            }
            term += sign * star_correlator(behavior, &xs, i);
        }
        terms.push(term * norm);
    }
    let score = terms.iter().map(|t| t.abs().powf(1.0 / n as f64)).sum();
    Ok(StarScore {
        terms,
        score,
        branches: n,
        settings: k,
    })
}

fn two_party_shape(behavior: &Behavior, k: usize) -> Result<()> {
    let agents = behavior.agents();
    if agents.len() != 2 || agents.iter().any(|a| *a != AgentShape::new(k, 2)) {
        return Err(Error::ShapeMismatch(format!(
            "agent arities {agents:?} are not a two-party {k}-setting binary shape"
        )));
    }
    Ok(())
}

fn pair_correlator(behavior: &Behavior, x: usize, y: usize) -> f64 {
    behavior.expectation(&[x, y], |o| parity_sign(o[0] + o[1]))
}

fn prob_equal(behavior: &Behavior, x: usize, y: usize) -> f64 {
    behavior.expectation(&[x, y], |o| if o[0] == o[1] { 1.0 } else { 0.0 })
}

/// k-setting CHSH family:
/// `sum_i <A_i B_i> + sum_i <A_{i+1} B_i> - <A_0 B_{k-1}>`.
pub fn eval_chsh(behavior: &Behavior, k: usize) -> Result<f64> {
    two_party_shape(behavior, k)?;
    let mut value = 0.0;
    for i in 0..k {
        value += pair_correlator(behavior, i, i);
    }
    for i in 0..k - 1 {
        value += pair_correlator(behavior, i + 1, i);
    }
    value -= pair_correlator(behavior, 0, k - 1);
    Ok(value)
}

/// Chained Bell expression on the interleaved setting chain
/// `A_0 B_0 A_1 B_1 ...`:
/// `P(A=B|x=0,y=k-1) + sum_i P(A!=B|i,i) + sum_i P(A!=B|i+1,i)`.
///
/// This is the reading under which `chained = k - chsh/2` holds identically;
/// see [`relation_check`].
pub fn eval_chained(behavior: &Behavior, k: usize) -> Result<f64> {
    two_party_shape(behavior, k)?;
    let mut value = prob_equal(behavior, 0, k - 1);
    for i in 0..k {
        value += 1.0 - prob_equal(behavior, i, i);
    }
    for i in 0..k - 1 {
        value += 1.0 - prob_equal(behavior, i + 1, i);
    }
    Ok(value)
}

/// Evaluates the chained expression and `k - chsh/2` on the same behavior
/// and returns both with their absolute difference. The two are equal for
/// every behavior since `<AB> = 2 P(A=B) - 1` term by term.
pub fn relation_check(behavior: &Behavior, k: usize) -> Result<(f64, f64, f64)> {
    let chained = eval_chained(behavior, k)?;
    let via_chsh = k as f64 - eval_chsh(behavior, k)? / 2.0;
    Ok((chained, via_chsh, (chained - via_chsh).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::Behavior;
    use crate::scenario::{
        build_bell_quantum, build_repeater_quantum, build_star_quantum, repeater_closed_form,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, SQRT_2};

    fn repeater_shape(n: usize) -> Vec<AgentShape> {
        let mut shapes = vec![AgentShape::new(2, 2)];
        shapes.extend(std::iter::repeat_n(AgentShape::new(1, 4), n - 1));
        shapes.push(AgentShape::new(2, 2));
        shapes
    }

    #[test]
    fn quantum_repeater_scores_sqrt_two() {
        let score = eval_repeater(&repeater_closed_form(2).unwrap()).unwrap();
        assert!((score.i_term - 0.5).abs() < 1e-12);
        assert!((score.j_term - 0.5).abs() < 1e-12);
        assert!((score.score - SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn all_zero_strategy_saturates_classical_bound() {
        // Oracle: direct evaluation of the defining sums on the point-mass
        // table where every agent outputs 0.
        let b = Behavior::from_fn(repeater_shape(2), |_x, o| {
            if o.iter().all(|&v| v == 0) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let score = eval_repeater(&b).unwrap();
        assert_eq!(score.i_term, 1.0);
        assert_eq!(score.j_term, 0.0);
        assert_eq!(score.score, 1.0);
    }

    #[test]
    fn uniform_behaviors_score_zero() {
        let b = Behavior::from_fn(repeater_shape(3), |_x, _o| 1.0 / 64.0).unwrap();
        let score = eval_repeater(&b).unwrap();
        assert!(score.score.abs() < 1e-12);

        let star = Behavior::from_fn(vec![AgentShape::new(3, 2); 3], |_x, _o| 1.0 / 8.0).unwrap();
        assert!(eval_star(&star, 2, 3).unwrap().score.abs() < 1e-12);

        let pair = Behavior::from_fn(vec![AgentShape::new(2, 2); 2], |_x, _o| 0.25).unwrap();
        assert_eq!(eval_chsh(&pair, 2).unwrap(), 0.0);
        // Every chained term is 1/2; the expression has 2k of them.
        assert!((eval_chained(&pair, 2).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_repeater_score_follows_visibility_product() {
        for vis in [vec![0.7, 1.0], vec![0.8, 0.75], vec![0.9, 0.6, 1.0]] {
            let b = build_repeater_quantum(vis.len(), &vis).unwrap();
            let v: f64 = vis.iter().product();
            let score = eval_repeater(&b).unwrap().score;
            assert!(
                (score - (2.0 * v).sqrt()).abs() < 1e-9,
                "vis {vis:?}: score {score}"
            );
        }
    }

    #[test]
    fn star_quantum_value_reaches_cosine_bound() {
        for (n, k) in [(1, 2), (1, 5), (2, 2), (2, 4), (3, 3)] {
            let b = build_star_quantum(n, k, &vec![1.0; n]).unwrap();
            let score = eval_star(&b, n, k).unwrap().score;
            let expected = k as f64 * (PI / (2.0 * k as f64)).cos();
            assert!((score - expected).abs() < 1e-9, "n={n} k={k}: {score}");
        }
    }

    #[test]
    fn star_score_equals_half_pair_chsh_for_identical_branches() {
        // Separable central measurements factorize the star correlator into
        // per-branch pair correlators, so at the quantum point the star
        // score is half the pair CHSH value regardless of branch count.
        for (n, k) in [(1, 2), (2, 2), (2, 3), (3, 2)] {
            let star = eval_star(&build_star_quantum(n, k, &vec![1.0; n]).unwrap(), n, k)
                .unwrap()
                .score;
            let chsh = eval_chsh(&build_bell_quantum(k, 1.0).unwrap(), k).unwrap();
            assert!((star - chsh / 2.0).abs() < 1e-9, "n={n} k={k}");
        }
    }

    #[test]
    fn chsh_deterministic_and_quantum_points() {
        let fixed = Behavior::from_fn(vec![AgentShape::new(2, 2); 2], |_x, o| {
            if o[0] == 0 && o[1] == 0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        // 2*1 + 1 - 1 = 2: the deterministic ceiling.
        assert_eq!(eval_chsh(&fixed, 2).unwrap(), 2.0);

        let quantum = build_bell_quantum(2, 1.0).unwrap();
        assert!((eval_chsh(&quantum, 2).unwrap() - 2.0 * SQRT_2).abs() < 1e-9);
        assert!((eval_chained(&quantum, 2).unwrap() - (2.0 - SQRT_2)).abs() < 1e-9);
    }

    #[test]
    fn chained_fixed_points() {
        let correlated = Behavior::from_fn(vec![AgentShape::new(3, 2); 2], |_x, o| {
            if o[0] == o[1] {
                0.5
            } else {
                0.0
            }
        })
        .unwrap();
        assert_eq!(eval_chained(&correlated, 3).unwrap(), 1.0);
    }

    #[test]
    fn chained_chsh_relation_holds_on_random_behaviors() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for k in [2usize, 3, 4] {
            for _ in 0..200 {
                let b = Behavior::random(vec![AgentShape::new(k, 2); 2], &mut rng);
                let (_, _, delta) = relation_check(&b, k).unwrap();
                assert!(delta < 1e-10, "k={k}: delta {delta}");
            }
        }
    }

    #[test]
    fn chained_chsh_relation_exact_on_deterministic_tables() {
        for k in 2..=5usize {
            for assignment in 0..(1usize << (2 * k)) {
                if assignment % 7 != 0 {
                    continue; // sparse sample of the deterministic grid
                }
                let b = Behavior::from_fn(vec![AgentShape::new(k, 2); 2], |x, o| {
                    let a = (assignment >> x[0]) & 1;
                    let bb = (assignment >> (k + x[1])) & 1;
                    if o[0] == a && o[1] == bb {
                        1.0
                    } else {
                        0.0
                    }
                })
                .unwrap();
                let (_, _, delta) = relation_check(&b, k).unwrap();
                assert_eq!(delta, 0.0);
            }
        }
    }

    #[test]
    fn shape_checks_reject_mismatches() {
        let pair = Behavior::from_fn(vec![AgentShape::new(2, 2); 2], |_x, _o| 0.25).unwrap();
        assert!(eval_repeater(&pair).is_err());
        assert!(eval_star(&pair, 2, 2).is_err());
        assert!(eval_chsh(&pair, 3).is_err());
        let star = Behavior::from_fn(vec![AgentShape::new(2, 2); 3], |_x, _o| 0.125).unwrap();
        assert!(eval_repeater(&star).is_err());
    }
}
