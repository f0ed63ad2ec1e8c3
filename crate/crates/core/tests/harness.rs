use moma::harness::{
    aggregate, mean_std, write_metrics, write_trajectory, Experiment, Method, NoiseConfig, RunConfig, TrialResult,
};

fn config(scenario: &str, noise: NoiseConfig, vo: bool) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.scenario.name = scenario.into();
    cfg.noise = noise;
    cfg.vo.enabled = vo;
    cfg
}

fn pixel_noise(sigma: f64) -> NoiseConfig {
    NoiseConfig {
        pixel_sigma: sigma,
        ..NoiseConfig::noiseless()
    }
}

fn final_errors(results: &[TrialResult], method: Method) -> Vec<f64> {
    results.iter().map(|r| r.method(method).unwrap().final_error).collect()
}

#[test]
fn noiseless_square_is_exact_for_both_methods() {
    let mut cfg = config("square", NoiseConfig::noiseless(), true);
    cfg.scenario.poor_density = Some(6.0);
    let r = Experiment::new(cfg).unwrap().run_trial(0, 1, false).unwrap();
    let moma = r.method(Method::Moma).unwrap();
    let vo = r.method(Method::Vo).unwrap();
    assert!(moma.final_error <= 1e-6, "{}", moma.final_error);
    assert!(vo.final_error <= 1e-6, "{}", vo.final_error);
    assert_eq!(vo.tracking_lost, 0);
    assert_eq!(moma.tracking_lost, 0);
}

#[test]
fn single_trial_aggregates_equal_the_trial() {
    let mut cfg = config("square", NoiseConfig::default(), true);
    cfg.seed = 9;
    let exp = Experiment::new(cfg).unwrap();
    let results = exp.monte_carlo().unwrap();
    assert_eq!(results.len(), 1);
    for a in aggregate(&results) {
        let m = results[0].method(a.method).unwrap();
        assert_eq!(a.trials, 1);
        assert_eq!(a.mean_error, (m.mean_error, 0.0));
        assert_eq!(a.final_error, (m.final_error, 0.0));
        assert_eq!(a.percent_final_error, (m.percent_final_error, 0.0));
        assert_eq!(a.switches, (m.switches as f64, 0.0));
    }
}

#[test]
fn trials_use_consecutive_seeds_and_fresh_state() {
    let mut cfg = config("caterpillar", NoiseConfig::default(), true);
    cfg.seed = 40;
    cfg.trials = 4;
    cfg.workers = 2;
    let exp = Experiment::new(cfg).unwrap();
    let batch = exp.monte_carlo().unwrap();
    for (i, r) in batch.iter().enumerate() {
        assert_eq!((r.trial, r.seed), (i, 40 + i as u64));
        assert_eq!(*r, exp.run_trial(i, 40 + i as u64, false).unwrap());
    }
    assert_ne!(batch[0].metrics[0].final_error, batch[1].metrics[0].final_error);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let mut cfg = config("square", NoiseConfig::default(), true);
    cfg.trials = 6;
    let csv = |workers: usize| {
        let mut cfg = cfg.clone();
        cfg.workers = workers;
        let results = Experiment::new(cfg).unwrap().monte_carlo().unwrap();
        let mut out = Vec::new();
        write_metrics(&mut out, &results, &aggregate(&results)).unwrap();
        out
    };
    let one = csv(1);
    assert_eq!(one, csv(3));
    assert_eq!(one, csv(1));
}

#[test]
fn noiseless_trials_have_zero_spread() {
    let mut cfg = config("caterpillar", NoiseConfig::noiseless(), false);
    cfg.trials = 500;
    let results = Experiment::new(cfg).unwrap().monte_carlo().unwrap();
    let (mean, std) = mean_std(&final_errors(&results, Method::Moma));
    assert!(mean <= 1e-6, "{mean}");
    assert_eq!(std, 0.0);
}

#[test]
fn final_error_grows_linearly_with_pixel_noise() {
    let me_f = |sigma: f64| {
        let mut cfg = config("caterpillar", pixel_noise(sigma), false);
        cfg.trials = 500;
        cfg.seed = 1000;
        let results = Experiment::new(cfg).unwrap().monte_carlo().unwrap();
        mean_std(&final_errors(&results, Method::Moma)).0
    };
    let ratio = me_f(1.0) / me_f(0.5);
    assert!((1.6..=2.4).contains(&ratio), "{ratio}");
}

#[test]
fn mean_error_matches_the_logged_trajectory() {
    let cfg = config("square", NoiseConfig::default(), true);
    let exp = Experiment::new(cfg).unwrap();
    let r = exp.run_trial(0, 5, true).unwrap();
    let main = &exp.script.agents[exp.script.main_agent].name;
    let vo_agent = &exp.script.agents[exp.script.vo.as_ref().unwrap().agent].name;
    for (method, agent) in [(Method::Moma, main), (Method::Vo, vo_agent)] {
        let errors: Vec<f64> = r
            .records
            .iter()
            .filter(|rec| rec.method == method && &rec.agent == agent && !rec.est_x.is_nan())
            .map(|rec| {
                ((rec.est_x - rec.truth_x).powi(2) + (rec.est_y - rec.truth_y).powi(2) + (rec.est_z - rec.truth_z).powi(2))
                    .sqrt()
            })
            .collect();
        assert_eq!(errors.len() as u64, exp.script.frames);
        let me = errors.iter().sum::<f64>() / errors.len() as f64;
        let m = r.method(method).unwrap();
        assert!((me - m.mean_error).abs() <= 1e-12, "{method:?}: {me} vs {}", m.mean_error);
        assert!((errors.last().unwrap() - m.final_error).abs() <= 1e-12);
        assert!(errors.iter().all(|e| *e >= 0.0));
    }
}

#[test]
fn trajectory_csv_is_reproducible() {
    let cfg = config("square", NoiseConfig::default(), true);
    let exp = Experiment::new(cfg).unwrap();
    let csv = |seed: u64| {
        let mut out = Vec::new();
        write_trajectory(&mut out, &exp.run_trial(0, seed, true).unwrap().records).unwrap();
        out
    };
    let a = csv(3);
    assert_eq!(a, csv(3));
    assert_ne!(a, csv(4));
}

#[test]
fn noiseless_keypoint_errors_vanish() {
    let exp = Experiment::new(config("line", NoiseConfig::noiseless(), false)).unwrap();
    let r = exp.run_trial(0, 0, false).unwrap();
    assert_eq!(r.keypoints.len(), 18);
    for k in &r.keypoints {
        assert!(k.error_x.abs() < 1e-6 && k.relative_error_x.abs() < 1e-6 && k.position_error < 1e-6);
    }
}

#[test]
fn keypoint_errors_telescope() {
    let exp = Experiment::new(config("line", pixel_noise(1.0), false)).unwrap();
    for seed in 0..5 {
        let r = exp.run_trial(0, seed, false).unwrap();
        let mut sum_abs = 0.0;
        let mut sum = 0.0;
        for k in &r.keypoints {
            sum_abs += k.relative_error_x.abs();
            sum += k.relative_error_x;
            assert!(k.error_x.abs() <= sum_abs + 1e-12);
            assert!((k.error_x - sum).abs() < 1e-12);
            assert!((k.error_x - (k.estimate_x - k.truth_x)).abs() < 1e-15);
        }
    }
}

#[test]
fn marker_method_beats_visual_odometry_on_the_square() {
    let mut cfg = config("square", NoiseConfig::default(), true);
    cfg.trials = 10;
    let results = Experiment::new(cfg).unwrap().monte_carlo().unwrap();
    let moma = mean_std(&final_errors(&results, Method::Moma)).0;
    let vo = mean_std(&final_errors(&results, Method::Vo)).0;
    assert!(moma < vo, "{moma} vs {vo}");
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = RunConfig::default();
    cfg.trials = 0;
    assert!(Experiment::new(cfg).is_err());
    let mut cfg = RunConfig::default();
    cfg.noise.pixel_sigma = -1.0;
    assert!(Experiment::new(cfg).is_err());
    assert!(RunConfig::from_toml("seed = 1\n[noise]\npixel_sigma = 0.3\n").is_ok());
    assert!(RunConfig::from_toml("sede = 1\n").is_err());
}
