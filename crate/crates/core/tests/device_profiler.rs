use proptest::prelude::*;

use vrdlab_core::device::{Grid, HammerRequest, ModifierKey, RdtModel, RowState};
use vrdlab_core::params::{AggOn, AggOnClass, Condition, DataPattern, Temperature};
use vrdlab_core::profiler::{self, Measurement, SweepConfig};

fn normal_model(mean: f64, sd: f64, grid: Grid) -> RdtModel {
    RdtModel::discrete_normal(mean, sd, grid)
}

prop_compose! {
    fn grids()(min in 1u64..500, step in 1u64..60, steps in 1u64..200) -> Grid {
        Grid::new(min, min + step * steps, step).unwrap()
    }
}

prop_compose! {
    fn models()(grid in grids(), frac in 0.0f64..=1.0, rel_sd in 0.0f64..0.5) -> RdtModel {
        let mean = grid.min as f64 + frac * (grid.max - grid.min) as f64;
        normal_model(mean, rel_sd * mean, grid)
    }
}

fn draws(model: &RdtModel, seed: u64, n: usize, cond: &Condition) -> Vec<u64> {
    let mut row = RowState::new(3, model.clone(), seed).unwrap();
    (0..n).map(|_| row.draw_latent_rdt(cond).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn same_seed_same_draws(model in models(), seed: u64) {
        let c = Condition::default();
        prop_assert_eq!(draws(&model, seed, 50, &c), draws(&model, seed, 50, &c));
    }

    #[test]
    fn draws_sit_on_grid(model in models(), seed: u64) {
        let g = model.grid;
        for v in draws(&model, seed, 200, &Condition::default()) {
            prop_assert!(v >= g.min && v <= g.max);
            prop_assert_eq!((v - g.min) % g.step, 0);
        }
    }

    #[test]
    fn sweep_is_monotone(model in models(), seed: u64, h in 1u64..20_000, extra in 0u64..20_000) {
        let c = Condition::default();
        let mut row = RowState::new(3, model, seed).unwrap();
        row.draw_latent_rdt(&c).unwrap();
        let flips = |h| row.hammer(&HammerRequest::new(3, h, &c)).unwrap();
        if flips(h) {
            prop_assert!(flips(h + extra));
        }
    }

    #[test]
    fn hammer_never_mutates(model in models(), seed: u64, hs in prop::collection::vec(1u64..20_000, 1..20)) {
        let c = Condition::default();
        let mut row = RowState::new(3, model, seed).unwrap();
        let latent = row.draw_latent_rdt(&c).unwrap();
        for h in hs {
            prop_assert_eq!(row.hammer(&HammerRequest::new(3, h, &c)).unwrap(), h >= latent);
        }
        prop_assert_eq!(row.latent_rdt(), Some(latent));
        prop_assert_eq!(row.draw_count(), 1);
    }

    #[test]
    fn measured_brackets_latent(model in models(), seed: u64, guess in 20u64..5_000) {
        let c = Condition::default();
        let cfg = SweepConfig::from_guess(guess, 30).unwrap();
        let mut row = RowState::new(3, model, seed).unwrap();
        for _ in 0..30 {
            let m = profiler::measure_rdt_once(&mut row, &cfg, &c).unwrap();
            let latent = row.latent_rdt().unwrap();
            match m {
                Measurement::Rdt(v) => {
                    prop_assert!(cfg.on_grid(v));
                    prop_assert!(v >= latent);
                    if latent >= cfg.rdt_min {
                        prop_assert!(v - latent < cfg.rdt_step);
                    }
                }
                Measurement::NoFlip => {
                    prop_assert!(latent > cfg.grid().last().unwrap());
                }
            }
        }
    }

    #[test]
    fn series_length_is_iterations(model in models(), seed: u64, iterations in 1u64..60) {
        let guess = model.mean.round().max(2.0) as u64;
        let cfg = SweepConfig::from_guess(guess, iterations).unwrap();
        let mut row = RowState::new(3, model, seed).unwrap();
        let s = profiler::test_loop(&mut row, &cfg, &Condition::default()).unwrap();
        prop_assert_eq!(s.values.len() as u64, iterations);
        prop_assert_eq!(row.draw_count(), iterations);
    }

    #[test]
    fn replaying_a_series_is_a_fixed_point(model in models(), seed: u64) {
        let c = Condition::default();
        let guess = model.mean.round().max(2.0) as u64;
        let cfg = SweepConfig::from_guess(guess, 40).unwrap();
        let mut row = RowState::new(3, model, seed).unwrap();
        let first = profiler::test_loop(&mut row, &cfg, &c).unwrap().numeric();
        prop_assume!(!first.is_empty());
        let sweep = SweepConfig { iterations: first.len() as u64, ..cfg.clone() };
        let grid = Grid::new(cfg.rdt_min, cfg.grid().last().unwrap(), cfg.rdt_step).unwrap();
        let mut replay = RowState::new(3, RdtModel::replay_on(first.clone(), grid), 0).unwrap();
        let second = profiler::test_loop(&mut replay, &sweep, &c).unwrap().numeric();
        prop_assert_eq!(first, second);
    }
}

#[test]
fn modifier_scales_the_mean() {
    let grid = Grid::new(1, 100_000, 1).unwrap();
    let hot = ModifierKey { pattern: DataPattern::Checkered0, t_aggon: AggOnClass::Tras, temperature: Temperature::C80 };
    let model = normal_model(4000.0, 200.0, grid).with_modifier(hot, 1.5);
    let cold = Condition::default();
    let warm = Condition::new(DataPattern::Checkered0, AggOn::Tras, Temperature::C80);
    let n = 50_000;
    let m = |c: &Condition| draws(&model, 11, n, c).iter().sum::<u64>() as f64 / n as f64;
    let ratio = m(&warm) / m(&cold);
    assert!((ratio - 1.5).abs() < 0.005, "ratio {ratio}");
}

#[test]
fn discrete_normal_mean_converges() {
    let grid = Grid::new(40, 40 * 400, 40).unwrap();
    let model = normal_model(4000.0, 200.0, grid);
    let n = 1_000_000;
    let mean = draws(&model, 2024, n, &Condition::default()).iter().sum::<u64>() as f64 / n as f64;
    assert!((mean - 4000.0).abs() < 40.0, "mean {mean}");
}

#[test]
fn constant_and_replay_draws() {
    let c = Condition::default();
    let k = RdtModel::constant(5000, Grid::new(50, 10_000, 50).unwrap());
    assert!(draws(&k, 1, 20, &c).iter().all(|&v| v == 5000));
    let r = RdtModel::replay(vec![3242, 11498, 7000]);
    assert_eq!(draws(&r, 9, 3, &c), vec![3242, 11498, 7000]);
    let mut row = RowState::new(3, r, 9).unwrap();
    for _ in 0..3 {
        row.draw_latent_rdt(&c).unwrap();
    }
    assert!(row.draw_latent_rdt(&c).is_err());
}

#[test]
fn hammer_boundaries() {
    let c = Condition::default();
    let mut row = RowState::new(0, RdtModel::replay(vec![2000]), 0).unwrap();
    assert!(row.hammer(&HammerRequest::new(0, 2000, &c)).is_err());
    row.draw_latent_rdt(&c).unwrap();
    assert!(!row.hammer(&HammerRequest::new(0, 1999, &c)).unwrap());
    assert!(row.hammer(&HammerRequest::new(0, 2000, &c)).unwrap());
}

#[test]
fn guess_and_victim_selection() {
    let c = Condition::default();
    let grid = Grid::unit(100_000);
    let mut row = RowState::new(0, RdtModel::constant(5000, grid), 1).unwrap();
    assert_eq!(profiler::guess_rdt(&mut row, &c, 10, None).unwrap(), 5000);

    let values = vec![4000, 4200, 4100, 4000, 4200, 4100, 4000, 4200, 4100, 4100];
    let mut row = RowState::new(0, RdtModel::replay(values), 1).unwrap();
    assert_eq!(profiler::guess_rdt(&mut row, &c, 10, None).unwrap(), 4100);

    let high = Grid::new(6000, 9000, 10).unwrap();
    let mut row = RowState::new(0, RdtModel::constant(7000, high), 1).unwrap();
    assert!(profiler::guess_rdt(&mut row, &c, 10, Some(5000)).is_err());

    let mut rows: Vec<RowState> = [(2, 10_000), (0, 50_000), (1, 39_000)]
        .into_iter()
        .map(|(r, v)| RowState::new(r, RdtModel::constant(v, grid), r).unwrap())
        .collect();
    assert_eq!(profiler::find_victim(&mut rows, &c, 40_000, 10, None).unwrap(), (39_000, 1));
    let mut rows = vec![RowState::new(0, RdtModel::constant(45_000, grid), 0).unwrap()];
    assert!(profiler::find_victim(&mut rows, &c, 40_000, 10, None).is_err());
}
