use std::collections::HashMap;

use urnlab::estimators::{interval, CenterKind, Inference};
use urnlab::oracle::{self, CoverageConfig};
use urnlab::scenarios::{catalog, Case, ReinforcementLaw, SampleSizeLaw, Scenario};
use urnlab::urn::{run, run_thinned, Simulation};

fn small() -> Scenario {
    Scenario::new(
        "small",
        3,
        2,
        SampleSizeLaw::Fixed { size: 2 },
        ReinforcementLaw::FiniteJoint {
            pairs: vec![[1, 2], [2, 1]],
            weights: vec![0.5, 0.5],
        },
        Case::EqualMeans,
    )
    .unwrap()
}

#[test]
fn simulated_composition_matches_exact_law() {
    let s = small();
    let horizon = 3;
    let law = oracle::enumerate(&s, horizon).unwrap();
    let mut exact: HashMap<(u64, u64), f64> = HashMap::new();
    for (st, p) in &law.levels[horizon as usize].states {
        *exact.entry((st.h, st.k)).or_default() += p;
    }
    let reps = 200_000;
    let ends = oracle::replicate(reps, |i| {
        let mut sim = Simulation::new(&s, 31, i);
        let mut last = None;
        for _ in 0..horizon {
            last = Some(sim.advance()?);
        }
        let r = last.unwrap();
        Ok((r.h, r.k))
    })
    .unwrap();
    let mut freq: HashMap<(u64, u64), f64> = HashMap::new();
    for e in ends {
        *freq.entry(e).or_default() += 1.0 / reps as f64;
    }
    let mut tv = 0.0;
    for key in exact.keys().chain(freq.keys().filter(|k| !exact.contains_key(k))) {
        tv += (exact.get(key).copied().unwrap_or(0.0) - freq.get(key).copied().unwrap_or(0.0)).abs();
    }
    tv /= 2.0;
    assert!(freq.keys().all(|k| exact.contains_key(k)), "simulated state outside the exact support");
    assert!(tv < 0.015, "tv {tv}");
}

#[test]
fn recorded_totals_replay_exactly() {
    for name in ["1a", "1d", "1e", "3b"] {
        let s = catalog(name).unwrap();
        let t = run(&s, 2000, 5, 0).unwrap();
        t.verify_replay().unwrap();
        for r in &t.records {
            assert_eq!(r.h + r.k, r.total());
            assert!(r.drawn_a <= r.draws);
        }
        // thinning keeps the same path
        let thin = run_thinned(&s, 2000, 5, 0, 7).unwrap();
        for r in &thin.records {
            assert_eq!(*r, t.records[(r.n - 1) as usize], "{name} at {}", r.n);
        }
        assert_eq!(thin.records.last().unwrap().n, 2000);
    }
}

#[test]
fn interval_width_halves_when_steps_quadruple() {
    for alpha in [0.01, 0.05, 0.32] {
        let a = interval(CenterKind::Z, 0.5, 0.3, 1000, alpha).unwrap();
        let b = interval(CenterKind::Z, 0.5, 0.3, 4000, alpha).unwrap();
        assert!((a.half_width / b.half_width - 2.0).abs() < 1e-12);
    }
}

#[test]
fn coverage_tracks_nominal_level() {
    let s = catalog("1a").unwrap();
    let cfg = CoverageConfig {
        ci_step: 200,
        proxy_horizon: 4000,
        reps: 600,
        master_seed: 77,
        proxy_factor: 20,
    };
    let inf = Inference::for_scenario(&s, 0.5);
    let samples = oracle::coverage_samples(&s, &cfg, &inf).unwrap();
    let half = oracle::coverage_report(&s, &cfg, &samples, 0.5).unwrap();
    // 0.5 +- about four standard errors
    assert!((half.coverage_z - 0.5).abs() < 0.1, "{half}");
    assert!((half.coverage_m - 0.5).abs() < 0.1, "{half}");
    let wide = oracle::coverage_report(&s, &cfg, &samples, 0.05).unwrap();
    let mid = oracle::coverage_report(&s, &cfg, &samples, 0.32).unwrap();
    assert!(wide.coverage_z >= mid.coverage_z && mid.coverage_z >= half.coverage_z);
    assert!(wide.coverage_m >= mid.coverage_m && mid.coverage_m >= half.coverage_m);
}
