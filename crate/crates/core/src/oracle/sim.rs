use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_prob, domain, Result};
use crate::exact::TestDesign;

/// Law of the `n + 1` binary variables (1 = failure).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Truth {
    /// Exactly `z` failures in uniformly random positions.
    Vertex(u64),
    /// Independent failures with probability `theta`.
    Iid(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Sampler {
    /// Draws the counts `(Y_{n+1}, K, L)` directly from their joint law.
    #[default]
    Sufficient,
    /// Draws every variable and every channel output.
    Explicit,
}

/// One run of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialRecord {
    pub held_out_failed: bool,
    /// Failures among the `n` observed variables.
    pub observed_failures: u64,
    /// Observed failures that survive the channel.
    pub counted_failures: u64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Protocol {
    truth: Truth,
    n: u64,
    l: u64,
    lambda: f64,
    sampler: Sampler,
}

impl Protocol {
    pub fn new(truth: Truth, design: &TestDesign, sampler: Sampler) -> Result<Self> {
        match truth {
            Truth::Vertex(z) if z > design.n() + 1 => {
                return domain(format!("vertex z = {z} exceeds n + 1 = {}", design.n() + 1));
            }
            Truth::Iid(theta) => check_prob("theta", theta)?,
            _ => {}
        }
        Ok(Self {
            truth,
            n: design.n(),
            l: design.l(),
            lambda: design.lambda(),
            sampler,
        })
    }

    fn binomial<R: Rng>(rng: &mut R, trials: u64, p: f64) -> u64 {
        if trials == 0 {
            return 0;
        }
        Binomial::new(trials, p)
            .expect("probability validated at construction")
            .sample(rng)
    }

    pub fn trial<R: Rng>(&self, rng: &mut R) -> TrialRecord {
        let nu = 1.0 - self.lambda;
        let (held_out_failed, observed_failures, counted_failures) = match self.sampler {
            Sampler::Sufficient => {
                let (held, k) = match self.truth {
                    Truth::Vertex(z) => {
                        let held = rng.random_range(0..self.n + 1) < z;
                        (held, z - held as u64)
                    }
                    Truth::Iid(theta) => {
                        (rng.random_bool(theta), Self::binomial(rng, self.n, theta))
                    }
                };
                (held, k, Self::binomial(rng, k, nu))
            }
            Sampler::Explicit => {
                let size = self.n as usize + 1;
                let mut y = vec![false; size];
                match self.truth {
                    Truth::Vertex(z) => {
                        for i in sample(rng, size, z as usize) {
                            y[i] = true;
                        }
                    }
                    Truth::Iid(theta) => y.iter_mut().for_each(|v| *v = rng.random_bool(theta)),
                }
                let mut k = 0;
                let mut counted = 0;
                for &fail in &y[..self.n as usize] {
                    if fail {
                        k += 1;
                        if !rng.random_bool(self.lambda) {
                            counted += 1;
                        }
                    }
                }
                (y[self.n as usize], k, counted)
            }
        };
        TrialRecord {
            held_out_failed,
            observed_failures,
            counted_failures,
            accepted: counted_failures <= self.l,
        }
    }

    fn run(&self, trials: u64, rng: &mut ChaCha8Rng) -> (u64, u64) {
        let mut accept = 0;
        let mut joint = 0;
        for _ in 0..trials {
            let t = self.trial(rng);
            if t.accepted {
                accept += 1;
                joint += t.held_out_failed as u64;
            }
        }
        (accept, joint)
    }
}

/// Empirical acceptance and conditional failure rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimOutcome {
    pub trials: u64,
    pub seed: u64,
    pub accept_count: u64,
    /// Trials that accepted while the held-out variable failed.
    pub joint_fail_count: u64,
    pub p_accept: f64,
    pub p_fail_given_accept: Option<f64>,
    pub std_err_accept: f64,
    pub std_err_cond: Option<f64>,
}

impl SimOutcome {
    fn from_counts(trials: u64, seed: u64, accept: u64, joint: u64) -> Self {
        let p = accept as f64 / trials as f64;
        let cond = (accept > 0).then(|| joint as f64 / accept as f64);
        Self {
            trials,
            seed,
            accept_count: accept,
            joint_fail_count: joint,
            p_accept: p,
            p_fail_given_accept: cond,
            std_err_accept: (p * (1.0 - p) / trials as f64).sqrt(),
            std_err_cond: cond.map(|c| (c * (1.0 - c) / accept as f64).sqrt()),
        }
    }
}

/// Runs `trials` independent protocol executions on one ChaCha stream seeded
/// from `seed`.
pub fn simulate_protocol(
    truth: Truth,
    design: &TestDesign,
    trials: u64,
    seed: u64,
    sampler: Sampler,
) -> Result<SimOutcome> {
    if trials == 0 {
        return domain("trials must be at least 1");
    }
    let protocol = Protocol::new(truth, design, sampler)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (accept, joint) = protocol.run(trials, &mut rng);
    Ok(SimOutcome::from_counts(trials, seed, accept, joint))
}

/// Splits the trials over `workers`; worker `i` uses stream `i + 1` of the
/// ChaCha generator seeded from `seed`. Counts are merged by summation, so the
/// result depends only on `(seed, workers)`.
pub fn simulate_protocol_parallel(
    truth: Truth,
    design: &TestDesign,
    trials: u64,
    seed: u64,
    workers: u64,
) -> Result<SimOutcome> {
    if trials == 0 || workers == 0 {
        return domain("trials and workers must be at least 1");
    }
    let protocol = Protocol::new(truth, design, Sampler::Sufficient)?;
    let (accept, joint) = (0..workers)
        .into_par_iter()
        .map(|i| {
            let share = trials / workers + u64::from(i < trials % workers);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i + 1);
            protocol.run(share, &mut rng)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(SimOutcome::from_counts(trials, seed, accept, joint))
}
