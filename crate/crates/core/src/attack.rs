//! The correlated-source eavesdropper: a classical model that reproduces the
//! quantum repeater table exactly by sharing one bit between the first and
//! last sources, letting the supplier read off both end agents' outcomes.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::behavior::{encode_tuple, Behavior};
use crate::error::Result;
use crate::topology::make_repeater_topology;

/// One simulated round: every hidden bit, the agents' inputs and outputs,
/// and the eavesdropper's inference of the end outcomes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackRound {
    pub alpha: u8,
    /// Shared chain bits, one per source.
    pub lambda: Vec<u8>,
    /// Secondary chain bits for interior links (empty for n = 2).
    pub lambda_tilde: Vec<u8>,
    /// Fresh coins for the first and last intermediate agents.
    pub nu: Vec<u8>,
    pub inputs: (usize, usize),
    /// Agent outcomes in agent order; intermediate entries are bit pairs
    /// packed as (a0 << 1) | a1.
    pub outputs: Vec<usize>,
    /// Inferred (first, last) outcomes from (alpha, lambda_1, lambda_n) and
    /// the announced inputs.
    pub guess: (usize, usize),
    pub correct: bool,
}

#[derive(Debug, Clone, Default)]
pub struct AttackTranscript {
    pub rounds: Vec<AttackRound>,
}

impl AttackTranscript {
    /// Fraction of rounds where the eavesdropper inferred both end outcomes;
    /// `None` when no rounds were simulated.
    pub fn guess_success_rate(&self) -> Option<f64> {
        if self.rounds.is_empty() {
            return None;
        }
        let hits = self.rounds.iter().filter(|r| r.correct).count();
        Some(hits as f64 / self.rounds.len() as f64)
    }

    /// Total variation distance between the empirical joint distribution of
    /// (inputs, outcomes) under uniform inputs and the exact table.
    pub fn empirical_tvd(&self, exact: &Behavior) -> f64 {
        let outcome_radices = exact.outcome_radices();
        let outcome_space = exact.outcome_space();
        let mut counts = vec![0u64; 4 * outcome_space];
        for round in &self.rounds {
            let input_flat = round.inputs.0 * 2 + round.inputs.1;
            let outcome_flat = encode_tuple(&round.outputs, &outcome_radices);
            counts[input_flat * outcome_space + outcome_flat] += 1;
        }
        let total = self.rounds.len() as f64;
        let mut tv = 0.0;
        for input_flat in 0..4 {
            for (outcome_flat, &p) in exact.block(input_flat).iter().enumerate() {
                let empirical = counts[input_flat * outcome_space + outcome_flat] as f64 / total;
                tv += (empirical - p / 4.0).abs();
            }
        }
        tv / 2.0
    }

    /// One round per line: round index, alpha, the lambda bits, both inputs,
    /// all outputs (intermediates as two-bit strings), the eavesdropper's
    /// guess, and a correct flag.
    pub fn write_delimited<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# round,alpha,lambda...,x_first,x_last,out_first,out_mid...,out_last,guess_first,guess_last,correct"
        )?;
        for (idx, r) in self.rounds.iter().enumerate() {
            write!(w, "{idx},{}", r.alpha)?;
            for l in &r.lambda {
                write!(w, ",{l}")?;
            }
            write!(w, ",{},{}", r.inputs.0, r.inputs.1)?;
            let last = r.outputs.len() - 1;
            write!(w, ",{}", r.outputs[0])?;
            for &m in &r.outputs[1..last] {
                write!(w, ",{}{}", m >> 1, m & 1)?;
            }
            write!(w, ",{}", r.outputs[last])?;
            writeln!(w, ",{},{},{}", r.guess.0, r.guess.1, u8::from(r.correct))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    /// Exact behavior of the attacked devices, computed by summing the
    /// conditional distributions (not sampled).
    pub behavior: Behavior,
    pub transcript: AttackTranscript,
}

struct HiddenBits {
    alpha: u8,
    lambda: Vec<u8>,
    tilde: Vec<u8>,
    nu: Vec<u8>,
}

fn nu_count(n: usize) -> usize {
    if n == 2 {
        1
    } else {
        2
    }
}

fn tilde_count(n: usize) -> usize {
    n.saturating_sub(2)
}

/// Device rules. Agent positions 0 and n are the end agents
/// (`a = lambda ^ alpha * x`); intermediate agents chain the shared bits:
/// the first reported bit telescopes the lambda chain when alpha = 0, the
/// second telescopes lambda_1 ... tilde ... lambda_n when alpha = 1, with
/// fresh coins in the slot that would otherwise leak alpha.
fn device_outputs(n: usize, bits: &HiddenBits, x_first: usize, x_last: usize) -> Vec<usize> {
    let a = bits.alpha as usize;
    let mut outputs = Vec::with_capacity(n + 1);
    outputs.push(bits.lambda[0] as usize ^ (a & x_first));
    for pos in 1..n {
        let lam = |i: usize| bits.lambda[i] as usize;
        let til = |i: usize| bits.tilde[i] as usize;
        let chain0 = lam(pos - 1) ^ lam(pos);
        let (b0, b1) = if pos > 1 && pos < n - 1 {
            (chain0, til(pos - 2) ^ til(pos - 1))
        } else if n == 2 {
            if a == 0 {
                (chain0, bits.nu[0] as usize)
            } else {
                (bits.nu[0] as usize, chain0)
            }
        } else if pos == 1 {
            if a == 0 {
                (chain0, bits.nu[0] as usize)
            } else {
                (bits.nu[0] as usize, lam(0) ^ til(0))
            }
        } else {
            // pos == n - 1 with n >= 3
            if a == 0 {
                (chain0, bits.nu[1] as usize)
            } else {
                (bits.nu[1] as usize, til(n - 3) ^ lam(n - 1))
            }
        };
        outputs.push((b0 << 1) | b1);
    }
    outputs.push(bits.lambda[n - 1] as usize ^ (a & x_last));
    outputs
}

/// Exact behavior of the attacked devices for an `n`-source chain: the
/// uniform average over every hidden-bit assignment. All weights are dyadic,
/// so the table is exact in floating point.
pub fn exact_attack_behavior(n: usize) -> Result<Behavior> {
    let shapes = make_repeater_topology(n)?.agent_shapes();
    let outcome_radices: Vec<usize> = shapes.iter().map(|s| s.outputs).collect();
    let outcome_space: usize = outcome_radices.iter().product();
    let total_bits = 1 + n + tilde_count(n) + nu_count(n);
    let mut counts = vec![0u64; 4 * outcome_space];
    for combo in 0u64..(1 << total_bits) {
        let mut cursor = 0;
        let mut take = |width: usize| -> Vec<u8> {
            let bits = (0..width)
                .map(|i| ((combo >> (cursor + i)) & 1) as u8)
                .collect();
            cursor += width;
            bits
        };
        let bits = HiddenBits {
            alpha: take(1)[0],
            lambda: take(n),
            tilde: take(tilde_count(n)),
            nu: take(nu_count(n)),
        };
        for x_first in 0..2 {
            for x_last in 0..2 {
                let outputs = device_outputs(n, &bits, x_first, x_last);
                let outcome_flat = encode_tuple(&outputs, &outcome_radices);
                counts[(x_first * 2 + x_last) * outcome_space + outcome_flat] += 1;
            }
        }
    }
    let norm = 1.0 / (1u64 << total_bits) as f64;
    let table = counts.iter().map(|&c| c as f64 * norm).collect();
    Behavior::new(shapes, table)
}

/// Runs the correlated-source attack: returns the exact attacked behavior
/// plus a seeded transcript of `rounds` simulated rounds with the
/// eavesdropper's inference of the end agents' outcomes.
pub fn correlated_source_attack(n: usize, rounds: usize, seed: u64) -> Result<AttackOutcome> {
    let behavior = exact_attack_behavior(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transcript = AttackTranscript::default();
    for _ in 0..rounds {
        let bit = |rng: &mut ChaCha8Rng| -> u8 { rng.random_range(0..2u8) };
        let bits = HiddenBits {
            alpha: bit(&mut rng),
            lambda: (0..n).map(|_| bit(&mut rng)).collect(),
            tilde: (0..tilde_count(n)).map(|_| bit(&mut rng)).collect(),
            nu: (0..nu_count(n)).map(|_| bit(&mut rng)).collect(),
        };
        let x_first = rng.random_range(0..2usize);
        let x_last = rng.random_range(0..2usize);
        let outputs = device_outputs(n, &bits, x_first, x_last);
        // The eavesdropper holds alpha and copies of the first and last
        // chain bits; after inputs are announced it replays the device rule.
        let guess = (
            bits.lambda[0] as usize ^ (bits.alpha as usize & x_first),
            bits.lambda[n - 1] as usize ^ (bits.alpha as usize & x_last),
        );
        let correct = guess == (outputs[0], outputs[n]);
        transcript.rounds.push(AttackRound {
            alpha: bits.alpha,
            lambda: bits.lambda,
            lambda_tilde: bits.tilde,
            nu: bits.nu,
            inputs: (x_first, x_last),
            outputs,
            guess,
            correct,
        });
    }
    Ok(AttackOutcome {
        behavior,
        transcript,
    })
}
