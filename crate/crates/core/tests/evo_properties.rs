use std::sync::Arc;

use evoesn::codec::{decode, Chromosome};
use evoesn::esn::{sample_reservoir, Activation, EsnConfig, EsnModel};
use evoesn::evo::{
    evaluate_fitness, init_population, load_checkpoint, run_ga, save_checkpoint, Checkpoint, FitnessContext,
    FitnessMetric, FitnessSpec, GaConfig, GaState,
};
use evoesn::layout::ReservoirLayout;
use evoesn::timeseries::{generate_mackey_glass, MgsParams, Splits, TimeSeries};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn series() -> Arc<TimeSeries> {
    let s = generate_mackey_glass(&MgsParams::default(), 1500, 0)
        .unwrap()
        .with_splits(Splits::new(200, 800, 300, 200))
        .unwrap();
    Arc::new(s)
}

fn esn_config() -> EsnConfig {
    EsnConfig {
        units: 40,
        density: 0.2,
        spectral_radius: Some(0.8),
        reservoir_range: 1.0,
        input_scaling: 1.0,
        feedback_scaling: None,
        autoregressive: true,
        input_bias: Some(0.2),
        leak_rate: 1.0,
        noise_scale: 1e-10,
        noise_in_free_run: false,
        activation: Activation::Tanh,
        readout: Activation::Identity,
        ridge: 1e-9,
    }
}

fn context(cfg: &EsnConfig, metric: FitnessMetric, seed: u64) -> FitnessContext {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = Arc::new(ReservoirLayout::random(cfg.units, cfg.density, &mut rng).unwrap());
    let base = EsnModel::init(layout, cfg, 1, seed).unwrap();
    let spec = FitnessSpec {
        n_tasks: 3,
        horizon: 30,
        metric,
    };
    FitnessContext::new(base, series(), spec, cfg.spectral_radius, 1e6, seed).unwrap()
}

fn ga_config(c: usize, generations: usize) -> GaConfig {
    GaConfig {
        population_size: 6,
        generations,
        tournament_size: 3,
        crossover_prob: 0.5,
        mutation_prob: 0.15,
        mutation_sigma: None,
        mutation_gene_prob: 1.0,
        coefficients: c,
        rescale_spectral_radius: Some(0.8),
        fitness: FitnessSpec {
            n_tasks: 3,
            horizon: 30,
            metric: FitnessMetric::NrmseOverHorizon,
        },
        penalty: 1e6,
        stall_generations: 25,
        stall_tolerance: 1e-6,
        elitism: false,
    }
}

fn run(cfg: &GaConfig, ctx: &FitnessContext, seed: u64) -> GaState {
    let mut state = init_population(cfg, ctx, seed).unwrap();
    run_ga(&mut state, cfg, ctx, usize::MAX, |_| Ok(())).unwrap();
    state
}

fn hof_trace(state: &GaState) -> Vec<f64> {
    state.history.iter().map(|r| r.hall_of_fame).collect()
}

#[test]
fn init_builds_full_population() {
    let ctx = context(&esn_config(), FitnessMetric::NrmseOverHorizon, 1);
    let cfg = ga_config(25, 0);
    let s = init_population(&cfg, &ctx, 3).unwrap();
    assert_eq!(s.population.len(), 6);
    assert!(s.population.iter().all(|i| i.chromosome.len() == 25 && i.fitness.is_some()));
    assert_eq!(s.history.len(), 1);
    assert_eq!(s.evaluations, 6);
}

#[test]
fn full_dimension_decodes_to_source_reservoirs() {
    let esn = esn_config();
    let ctx = context(&esn, FitnessMetric::NrmseOverHorizon, 2);
    let layout = ctx.base.layout().clone();
    let cfg = ga_config(layout.len(), 0);
    let s = init_population(&cfg, &ctx, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for ind in &s.population {
        let mut r = ChaCha8Rng::seed_from_u64(rng.random());
        let source = sample_reservoir(&layout, esn.reservoir_range, esn.spectral_radius, &mut r).unwrap();
        let back = decode(&ind.chromosome, &layout).unwrap();
        for (a, b) in back.values().iter().zip(source.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn zero_generations_changes_nothing() {
    let ctx = context(&esn_config(), FitnessMetric::NrmseOverHorizon, 1);
    let cfg = ga_config(20, 0);
    let init = init_population(&cfg, &ctx, 9).unwrap();
    let mut s = init.clone();
    run_ga(&mut s, &cfg, &ctx, usize::MAX, |_| Ok(())).unwrap();
    assert_eq!(s, init);
}

#[test]
fn same_seed_same_history() {
    let ctx = context(&esn_config(), FitnessMetric::NrmseOverHorizon, 1);
    let cfg = ga_config(20, 6);
    let a = run(&cfg, &ctx, 4);
    let b = run(&cfg, &ctx, 4);
    assert_eq!(a.population, b.population);
    assert_eq!(a.hall_of_fame, b.hall_of_fame);
    let strip = |s: &GaState| -> Vec<(f64, f64, f64, f64)> {
        s.history.iter().map(|r| (r.best, r.mean, r.std, r.hall_of_fame)).collect()
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn hall_of_fame_is_monotone_and_bounds_population() {
    let ctx = context(&esn_config(), FitnessMetric::NrmseAtStep, 1);
    let cfg = ga_config(30, 12);
    let s = run(&cfg, &ctx, 6);
    let hof = hof_trace(&s);
    assert!(hof.windows(2).all(|w| w[1] <= w[0]));
    for r in &s.history {
        assert!(r.hall_of_fame <= r.best);
    }
    assert!(s.population.iter().all(|i| i.chromosome.len() == 30));
}

#[test]
fn fitness_is_deterministic_in_context() {
    let ctx = context(&esn_config(), FitnessMetric::NrmseOverHorizon, 1);
    let s = init_population(&ga_config(20, 0), &ctx, 2).unwrap();
    for ind in &s.population {
        assert_eq!(evaluate_fitness(&ind.chromosome, &ctx).value, ind.fitness.unwrap());
    }
}

#[test]
fn zero_chromosome_is_a_constant_predictor() {
    let mut esn = esn_config();
    esn.input_scaling = 0.0;
    esn.autoregressive = false;
    esn.noise_scale = 0.0;
    esn.spectral_radius = None;
    let ctx = context(&esn, FitnessMetric::NrmseOverHorizon, 3);
    let out = evaluate_fitness(&Chromosome::new(vec![0.0; 10]).unwrap(), &ctx);
    assert!(!out.diverged && out.value.is_finite());

    let series = &ctx.series;
    let z = &series.values()[series.splits().train_range()];
    let bias = 0.2;
    let w = bias * z.iter().sum::<f64>() / (bias * bias * z.len() as f64 + esn.ridge);
    let c = bias * w;
    let raw = series.raw_values();
    let per_window: Vec<f64> = ctx
        .windows()
        .iter()
        .map(|&s| {
            let mse = raw[s..s + 30].iter().map(|t| (t - c).powi(2)).sum::<f64>() / 30.0;
            (mse / ctx.variance()).sqrt()
        })
        .collect();
    let want = per_window.iter().sum::<f64>() / per_window.len() as f64;
    assert!((out.value - want).abs() < 1e-9 * want, "{} vs {want}", out.value);
}

#[test]
fn divergent_reservoir_gets_penalty() {
    let mut esn = esn_config();
    esn.spectral_radius = None;
    esn.activation = Activation::Identity;
    let ctx = context(&esn, FitnessMetric::NrmseOverHorizon, 4);
    let out = evaluate_fitness(&Chromosome::new(vec![500.0; 10]).unwrap(), &ctx);
    assert!(out.diverged);
    assert_eq!(out.value, 1e6);
}

#[test]
fn selection_only_never_worsens_best() {
    let ctx = context(&esn_config(), FitnessMetric::NrmseOverHorizon, 1);
    let mut cfg = ga_config(20, 8);
    cfg.crossover_prob = 0.0;
    cfg.mutation_prob = 0.0;
    let s = run(&cfg, &ctx, 8);
    let best: Vec<f64> = s.history.iter().map(|r| r.best).collect();
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(s.history.last().unwrap().evaluations, 6);
}

#[test]
fn split_run_equals_straight_run() {
    let ctx = context(&esn_config(), FitnessMetric::NrmseOverHorizon, 1);
    let cfg = ga_config(20, 8);
    let straight = run(&cfg, &ctx, 10);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ga.ckpt");
    let mut s = init_population(&cfg, &ctx, 10).unwrap();
    run_ga(&mut s, &cfg, &ctx, 4, |_| Ok(())).unwrap();
    assert_eq!(s.generation, 4);
    let ck = Checkpoint {
        config: serde_json::json!({"c": 20}),
        state: s,
    };
    save_checkpoint(&path, &ck).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, ck);
    let mut s = loaded.state;
    run_ga(&mut s, &cfg, &ctx, usize::MAX, |_| Ok(())).unwrap();
    assert_eq!(s.hall_of_fame, straight.hall_of_fame);
    assert_eq!(s.population, straight.population);
    assert_eq!(hof_trace(&s), hof_trace(&straight));
}

#[test]
fn corrupt_or_foreign_checkpoints_fail_to_load() {
    let ctx = context(&esn_config(), FitnessMetric::NrmseOverHorizon, 1);
    let s = init_population(&ga_config(20, 0), &ctx, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ga.ckpt");
    save_checkpoint(
        &path,
        &Checkpoint {
            config: serde_json::Value::Null,
            state: s,
        },
    )
    .unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let mut flipped = bytes.clone();
    let last = flipped.len() - 2;
    flipped[last] ^= 1;
    std::fs::write(&path, &flipped).unwrap();
    assert!(load_checkpoint(&path).is_err());

    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(load_checkpoint(&path).is_err());

    let text = String::from_utf8(bytes).unwrap().replacen("evoesn-checkpoint 1 ", "evoesn-checkpoint 2 ", 1);
    std::fs::write(&path, text).unwrap();
    let err = load_checkpoint(&path).unwrap_err().to_string();
    assert!(err.contains("version"), "{err}");

    std::fs::write(&path, "hello\n{}").unwrap();
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn worker_count_does_not_change_results() {
    let ctx = context(&esn_config(), FitnessMetric::NrmseOverHorizon, 1);
    let cfg = ga_config(20, 4);
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let one = pool(1).install(|| run(&cfg, &ctx, 12));
    let three = pool(3).install(|| run(&cfg, &ctx, 12));
    assert_eq!(one.population, three.population);
    assert_eq!(hof_trace(&one), hof_trace(&three));
}

#[test]
fn invalid_configs_rejected() {
    let ctx = context(&esn_config(), FitnessMetric::NrmseOverHorizon, 1);
    let mut cfg = ga_config(20, 1);
    cfg.population_size = 1;
    assert!(init_population(&cfg, &ctx, 0).is_err());
    let mut cfg = ga_config(20, 1);
    cfg.tournament_size = 7;
    assert!(init_population(&cfg, &ctx, 0).is_err());
    let mut cfg = ga_config(20, 1);
    cfg.mutation_prob = 1.5;
    assert!(init_population(&cfg, &ctx, 0).is_err());
    let cfg = ga_config(ctx.base.layout().len() + 1, 1);
    assert!(init_population(&cfg, &ctx, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn variation_keeps_shape_and_pattern(seed in any::<u64>()) {
        let ctx = context(&esn_config(), FitnessMetric::NrmseOverHorizon, 1);
        let mut cfg = ga_config(15, 3);
        cfg.mutation_prob = 1.0;
        cfg.crossover_prob = 1.0;
        let s = run(&cfg, &ctx, seed);
        prop_assert_eq!(s.population.len(), 6);
        let layout = ctx.base.layout();
        for ind in &s.population {
            prop_assert_eq!(ind.chromosome.len(), 15);
            let w = decode(&ind.chromosome, layout).unwrap().to_dense();
            for i in 0..40 {
                for j in 0..40 {
                    if !layout.contains(i, j) {
                        prop_assert_eq!(w[(i, j)], 0.0);
                    }
                }
            }
        }
        let hof = hof_trace(&s);
        prop_assert!(hof.windows(2).all(|w| w[1] <= w[0]));
    }
}
