//! Genetic search over DCT coefficient vectors.
//!
//! Generation 0 encodes independently sampled canonical reservoirs, so it is
//! an ensemble of ordinary random ESNs. Each later generation applies
//! tournament selection, two-point crossover on consecutive pairs and
//! Gaussian mutation, re-evaluates changed individuals and updates the hall
//! of fame. All randomness flows from one serializable RNG owned by the
//! state; evaluations use none, so parallel and sequential runs agree.

mod checkpoint;
mod fitness;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use fitness::{evaluate_fitness, FitnessContext, FitnessMetric, FitnessOutcome, FitnessSpec};

use crate::codec::{encode_weights, Chromosome};
use crate::error::{Error, Result};
use crate::esn::sample_reservoir;
use crate::metrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    /// Upper bound on generations.
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_prob: f64,
    /// Probability that an individual is mutated.
    pub mutation_prob: f64,
    /// Gaussian std; `None` means 0.1 x std of generation-0 coefficients.
    pub mutation_sigma: Option<f64>,
    /// Per-coefficient probability once an individual is mutated.
    #[serde(default = "one")]
    pub mutation_gene_prob: f64,
    /// Chromosome length C.
    pub coefficients: usize,
    pub rescale_spectral_radius: Option<f64>,
    pub fitness: FitnessSpec,
    #[serde(default = "default_penalty")]
    pub penalty: f64,
    /// Stop after this many generations without relative improvement above
    /// `stall_tolerance`.
    #[serde(default = "default_stall")]
    pub stall_generations: usize,
    #[serde(default = "default_stall_tol")]
    pub stall_tolerance: f64,
    /// Reinsert the hall of fame in place of the worst offspring.
    #[serde(default)]
    pub elitism: bool,
}

fn one() -> f64 {
    1.0
}
fn default_penalty() -> f64 {
    1e6
}
fn default_stall() -> usize {
    25
}
fn default_stall_tol() -> f64 {
    1e-6
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::config("population size must be at least 2"));
        }
        if self.tournament_size == 0 || self.tournament_size > self.population_size {
            return Err(Error::config("tournament size must be in 1..=population_size"));
        }
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
            ("mutation_gene_prob", self.mutation_gene_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if let Some(s) = self.mutation_sigma {
            if !(s > 0.0) {
                return Err(Error::config("mutation sigma must be positive"));
            }
        }
        if self.coefficients == 0 {
            return Err(Error::config("chromosome needs at least one coefficient"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub chromosome: Chromosome,
    pub fitness: Option<f64>,
    #[serde(default)]
    pub diverged: bool,
}

impl Individual {
    fn new(chromosome: Chromosome) -> Self {
        Self {
            chromosome,
            fitness: None,
            diverged: false,
        }
    }

    fn fit(&self) -> f64 {
        self.fitness.expect("individual not evaluated")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Best fitness in the current population.
    pub best: f64,
    pub mean: f64,
    pub std: f64,
    pub hall_of_fame: f64,
    pub diverged: usize,
    pub evaluations: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaState {
    pub population: Vec<Individual>,
    pub generation: usize,
    pub hall_of_fame: Individual,
    pub rng: ChaCha8Rng,
    pub sigma: f64,
    pub history: Vec<GenerationRecord>,
    pub evaluations: usize,
    stall: usize,
    stall_ref: f64,
}

impl GaState {
    pub fn best_fitness(&self) -> f64 {
        self.hall_of_fame.fit()
    }

    /// Whether the stall criterion has fired.
    pub fn converged(&self, config: &GaConfig) -> bool {
        self.stall >= config.stall_generations
    }
}

fn evaluate_pending(pop: &mut [Individual], ctx: &FitnessContext) -> usize {
    let pending: Vec<&mut Individual> = pop.iter_mut().filter(|i| i.fitness.is_none()).collect();
    let n = pending.len();
    pending.into_par_iter().for_each(|ind| {
        let out = evaluate_fitness(&ind.chromosome, ctx);
        ind.fitness = Some(out.value);
        ind.diverged = out.diverged;
    });
    n
}

fn record(state: &GaState, started: Instant) -> GenerationRecord {
    let fits: Vec<f64> = state.population.iter().map(Individual::fit).collect();
    GenerationRecord {
        generation: state.generation,
        best: fits.iter().cloned().fold(f64::INFINITY, f64::min),
        mean: metrics::mean(&fits),
        std: metrics::variance(&fits, metrics::VarianceConvention::Population).sqrt(),
        hall_of_fame: state.hall_of_fame.fit(),
        diverged: state.population.iter().filter(|i| i.diverged).count(),
        evaluations: state.evaluations,
        wall_time: started.elapsed().as_secs_f64(),
    }
}

fn best_of(pop: &[Individual]) -> &Individual {
    pop.iter()
        .min_by(|a, b| a.fit().total_cmp(&b.fit()))
        .expect("empty population")
}

/// Samples and evaluates generation 0.
pub fn init_population(config: &GaConfig, ctx: &FitnessContext, seed: u64) -> Result<GaState> {
    config.validate()?;
    let started = Instant::now();
    let layout = ctx.base.layout();
    if config.coefficients > layout.len() {
        return Err(Error::config(format!(
            "C = {} exceeds the {} unfrozen weights",
            config.coefficients,
            layout.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..config.population_size).map(|_| rng.random()).collect();
    let range = ctx.base.config.reservoir_range;
    let target = ctx.base.config.spectral_radius;
    let mut population = seeds
        .par_iter()
        .map(|&s| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            let w = sample_reservoir(layout, range, target, &mut r)?;
            Ok(Individual::new(encode_weights(w.values(), config.coefficients)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let sigma = match config.mutation_sigma {
        Some(s) => s,
        None => {
            let all: Vec<f64> = population
                .iter()
                .flat_map(|i| i.chromosome.coeffs().iter().copied())
                .collect();
            let s = 0.1 * metrics::variance(&all, metrics::VarianceConvention::Population).sqrt();
            if s > 0.0 {
                s
            } else {
                0.1
            }
        }
    };

    let evaluations = evaluate_pending(&mut population, ctx);
    let hall_of_fame = best_of(&population).clone();
    let stall_ref = hall_of_fame.fit();
    let mut state = GaState {
        population,
        generation: 0,
        hall_of_fame,
        rng,
        sigma,
        history: Vec::new(),
        evaluations,
        stall: 0,
        stall_ref,
    };
    let rec = record(&state, started);
    state.history.push(rec);
    Ok(state)
}

fn tournament(pop: &[Individual], k: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Individual> {
    (0..k)
        .map(|_| {
            let mut best = &pop[rng.random_range(0..pop.len())];
            for _ in 1..size {
                let cand = &pop[rng.random_range(0..pop.len())];
                if cand.fit() < best.fit() {
                    best = cand;
                }
            }
            best.clone()
        })
        .collect()
}

/// Swaps the slice between two random cut points (both strictly inside).
pub fn two_point_crossover(a: &mut [f64], b: &mut [f64], rng: &mut impl Rng) {
    let size = a.len().min(b.len());
    if size < 2 {
        return;
    }
    let mut p1 = rng.random_range(1..=size);
    let mut p2 = rng.random_range(1..size);
    if p2 >= p1 {
        p2 += 1;
    } else {
        std::mem::swap(&mut p1, &mut p2);
    }
    a[p1..p2].swap_with_slice(&mut b[p1..p2]);
}

/// Adds N(0, sigma) to each coefficient with probability `gene_prob`.
pub fn gaussian_mutation(x: &mut [f64], sigma: f64, gene_prob: f64, rng: &mut impl Rng) {
    let normal = Normal::new(0.0, sigma).expect("sigma must be finite and positive");
    for v in x.iter_mut() {
        if rng.random::<f64>() < gene_prob {
            *v += normal.sample(rng);
        }
    }
}

/// Advances `state` until `until_generation`, the stall criterion, or
/// `config.generations`, whichever is first. `on_generation` runs after each
/// completed generation (used for checkpointing).
pub fn run_ga<F>(
    state: &mut GaState,
    config: &GaConfig,
    ctx: &FitnessContext,
    until_generation: usize,
    mut on_generation: F,
) -> Result<()>
where
    F: FnMut(&GaState) -> Result<()>,
{
    config.validate()?;
    let stop = until_generation.min(config.generations);
    while state.generation < stop && !state.converged(config) {
        let started = Instant::now();
        let n = state.population.len();
        let rng = &mut state.rng;
        let mut offspring = tournament(&state.population, n, config.tournament_size, rng);

        for pair in offspring.chunks_mut(2) {
            if let [a, b] = pair {
                if rng.random::<f64>() < config.crossover_prob {
                    two_point_crossover(a.chromosome.coeffs_mut(), b.chromosome.coeffs_mut(), rng);
                    a.fitness = None;
                    b.fitness = None;
                }
            }
        }
        for ind in offspring.iter_mut() {
            if rng.random::<f64>() < config.mutation_prob {
                gaussian_mutation(ind.chromosome.coeffs_mut(), state.sigma, config.mutation_gene_prob, rng);
                ind.fitness = None;
            }
        }

        state.evaluations += evaluate_pending(&mut offspring, ctx);

        if config.elitism {
            let worst = offspring
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.fit().total_cmp(&b.1.fit()))
                .map(|(i, _)| i)
                .unwrap();
            offspring[worst] = state.hall_of_fame.clone();
        }
        state.population = offspring;
        state.generation += 1;

        let best = best_of(&state.population);
        if best.fit() < state.hall_of_fame.fit() {
            state.hall_of_fame = best.clone();
        }
        let hof = state.hall_of_fame.fit();
        if hof < state.stall_ref - config.stall_tolerance * state.stall_ref.abs() {
            state.stall_ref = hof;
            state.stall = 0;
        } else {
            state.stall += 1;
        }
        let rec = record(state, started);
        state.history.push(rec);
        on_generation(state)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_swaps_a_middle_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let mut a = vec![0.0; 8];
            let mut b = vec![1.0; 8];
            two_point_crossover(&mut a, &mut b, &mut rng);
            // a is 0..0 1..1 0..0 with a nonempty middle block
            let ones: Vec<usize> = (0..8).filter(|&i| a[i] == 1.0).collect();
            assert!(!ones.is_empty());
            assert!(ones.windows(2).all(|w| w[1] == w[0] + 1));
            assert!(a.iter().zip(&b).all(|(x, y)| x + y == 1.0));
        }
    }

    #[test]
    fn crossover_on_length_one_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut a, mut b) = (vec![0.0], vec![1.0]);
        two_point_crossover(&mut a, &mut b, &mut rng);
        assert_eq!((a[0], b[0]), (0.0, 1.0));
    }

    #[test]
    fn mutation_touches_all_genes_when_prob_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = vec![0.0; 50];
        gaussian_mutation(&mut x, 0.5, 1.0, &mut rng);
        assert!(x.iter().all(|&v| v != 0.0));
        let sd = metrics::variance(&x, metrics::VarianceConvention::Population).sqrt();
        assert!(sd > 0.3 && sd < 0.7, "{sd}");
    }

    #[test]
    fn config_validation() {
        let mut c = GaConfig {
            population_size: 20,
            generations: 10,
            tournament_size: 3,
            crossover_prob: 0.5,
            mutation_prob: 0.15,
            mutation_sigma: None,
            mutation_gene_prob: 1.0,
            coefficients: 10,
            rescale_spectral_radius: Some(0.8),
            fitness: FitnessSpec {
                n_tasks: 2,
                horizon: 10,
                metric: FitnessMetric::NrmseOverHorizon,
            },
            penalty: 1e6,
            stall_generations: 25,
            stall_tolerance: 1e-6,
            elitism: false,
        };
        assert!(c.validate().is_ok());
        c.tournament_size = 21;
        assert!(c.validate().is_err());
        c.tournament_size = 3;
        c.population_size = 1;
        assert!(c.validate().is_err());
        c.population_size = 20;
        c.crossover_prob = 1.5;
        assert!(c.validate().is_err());
    }
}
