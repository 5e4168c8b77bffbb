//! The urn state machine: one draw-and-reinforce step and whole-trajectory
//! execution.
//!
//! All dynamics run on exact integers; the proportion `Z = H / S` is only
//! ever derived on demand.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::randkit::{derive_stream, hypergeometric_unchecked, RngStream};
use crate::scenarios::{Dynamics, Scenario};

pub use crate::pmf::hypergeom_pmf;

/// Composition of the urn after step `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct UrnState {
    pub n: u64,
    /// Balls of color A.
    pub h: u64,
    /// Balls of color B.
    pub k: u64,
}

impl UrnState {
    pub fn new(a: u64, b: u64) -> Result<Self> {
        if a == 0 {
            return Err(Error::contract("a", "the urn needs at least one ball of color A"));
        }
        if b == 0 {
            return Err(Error::contract("b", "the urn needs at least one ball of color B"));
        }
        Ok(UrnState { n: 0, h: a, k: b })
    }

    #[inline]
    pub fn total(&self) -> u64 {
        self.h + self.k
    }

    #[inline]
    pub fn proportion(&self) -> f64 {
        self.h as f64 / self.total() as f64
    }

    /// Applies a fully specified step: `drawn_a` of the `draws` sampled balls
    /// are of color A, each of them brings `reinforce_a` new A balls and each
    /// sampled B ball brings `reinforce_b` new B balls.
    pub fn apply(&self, draws: u64, drawn_a: u64, reinforce_a: u64, reinforce_b: u64) -> Result<UrnState> {
        let n = self.n + 1;
        if draws == 0 || draws > self.total() {
            return Err(Error::contract(
                "draws",
                format!("step {n}: {draws} not in 1..={}", self.total()),
            ));
        }
        let drawn_b = draws - drawn_a.min(draws);
        if drawn_a > draws || drawn_a > self.h || drawn_b > self.k {
            return Err(Error::contract(
                "drawn_a",
                format!("step {n}: {drawn_a} of {draws} is not a feasible sample from (H={}, K={})", self.h, self.k),
            ));
        }
        if reinforce_a == 0 || reinforce_b == 0 {
            return Err(Error::contract("reinforcement", format!("step {n}: factors must be at least 1")));
        }
        let add = |count: u64, factor: u64, base: u64| {
            count
                .checked_mul(factor)
                .and_then(|x| base.checked_add(x))
                .ok_or(Error::Overflow { n })
        };
        let h = add(drawn_a, reinforce_a, self.h)?;
        let k = add(drawn_b, reinforce_b, self.k)?;
        h.checked_add(k).ok_or(Error::Overflow { n })?;
        Ok(UrnState { n, h, k })
    }
}

/// Observables of one step and the composition right after it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub n: u64,
    /// Sample size `N_n`.
    pub draws: u64,
    /// Color-A balls in the sample, `X_n`.
    pub drawn_a: u64,
    /// Reinforcement factor `A_n`.
    pub reinforce_a: u64,
    /// Reinforcement factor `B_n`.
    pub reinforce_b: u64,
    pub h: u64,
    pub k: u64,
}

impl StepRecord {
    pub fn total(&self) -> u64 {
        self.h + self.k
    }

    pub fn proportion(&self) -> f64 {
        self.h as f64 / self.total() as f64
    }

    pub fn state(&self) -> UrnState {
        UrnState {
            n: self.n,
            h: self.h,
            k: self.k,
        }
    }

    /// Fraction of color A in the sample, `X_n / N_n`.
    pub fn sample_fraction(&self) -> f64 {
        self.drawn_a as f64 / self.draws as f64
    }
}

/// One step of the process. Draw order is fixed: `N`, then `X`, then the
/// reinforcement pair, all from the one stream.
pub fn step(state: &UrnState, dynamics: &mut Dynamics<'_>, rng: &mut RngStream) -> Result<(UrnState, StepRecord)> {
    let n = state.n + 1;
    let total = state.total();
    let draws = dynamics.sample_size(n, state, rng)?;
    if draws == 0 || draws > total {
        return Err(Error::SampleSizeOutOfRange {
            n,
            law: dynamics.sample_size_law_name(),
            proposed: draws,
            total,
        });
    }
    let drawn_a = hypergeometric_unchecked(rng, draws, total, state.h);
    let (reinforce_a, reinforce_b) = dynamics.reinforcement(n, rng);
    let next = state.apply(draws, drawn_a, reinforce_a, reinforce_b)?;
    let record = StepRecord {
        n,
        draws,
        drawn_a,
        reinforce_a,
        reinforce_b,
        h: next.h,
        k: next.k,
    };
    Ok((next, record))
}

/// A running simulation of one scenario on one stream.
pub struct Simulation<'a> {
    state: UrnState,
    dynamics: Dynamics<'a>,
    rng: RngStream,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario, master_seed: u64, stream_index: u64) -> Self {
        Simulation {
            state: scenario.initial_state(),
            dynamics: scenario.dynamics(),
            rng: derive_stream(master_seed, stream_index),
        }
    }

    pub fn state(&self) -> &UrnState {
        &self.state
    }

    pub fn advance(&mut self) -> Result<StepRecord> {
        let (next, record) = step(&self.state, &mut self.dynamics, &mut self.rng)?;
        self.state = next;
        Ok(record)
    }

    /// Runs `steps` further steps, handing each record to `observe`.
    pub fn run_for(&mut self, steps: u64, mut observe: impl FnMut(&StepRecord)) -> Result<()> {
        for _ in 0..steps {
            let record = self.advance()?;
            observe(&record);
        }
        Ok(())
    }
}

/// A stored run with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub initial: (u64, u64),
    pub scenario: String,
    pub scenario_hash: String,
    pub master_seed: u64,
    pub stream_index: u64,
    /// Only every `stride`-th record is kept (plus the final one).
    pub stride: u64,
    pub horizon: u64,
    pub records: Vec<StepRecord>,
}

/// Runs `scenario` for `horizon` steps on stream `(master_seed, stream_index)`.
pub fn run(scenario: &Scenario, horizon: u64, master_seed: u64, stream_index: u64) -> Result<Trajectory> {
    run_thinned(scenario, horizon, master_seed, stream_index, 1)
}

pub fn run_thinned(
    scenario: &Scenario,
    horizon: u64,
    master_seed: u64,
    stream_index: u64,
    stride: u64,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::contract("horizon", "must be at least 1"));
    }
    if stride == 0 {
        return Err(Error::contract("stride", "must be at least 1"));
    }
    let mut sim = Simulation::new(scenario, master_seed, stream_index);
    let mut records = Vec::with_capacity((horizon / stride + 1) as usize);
    sim.run_for(horizon, |r| {
        if r.n % stride == 0 || r.n == horizon {
            records.push(*r);
        }
    })?;
    Ok(Trajectory {
        initial: (scenario.urn.a, scenario.urn.b),
        scenario: scenario.name.clone(),
        scenario_hash: scenario.hash(),
        master_seed,
        stream_index,
        stride,
        horizon,
        records,
    })
}

/// Header of the trajectory CSV.
pub const TRAJECTORY_HEADER: &str = "n,N,X,A,B,H,K,S,Z";

/// Formats a float with 17 significant digits.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRAJECTORY_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.n,
                r.draws,
                r.drawn_a,
                r.reinforce_a,
                r.reinforce_b,
                r.h,
                r.k,
                r.total(),
                sig17(r.proportion())
            )?;
        }
        Ok(())
    }

    /// Recomputes every composition from the recorded draws and checks it
    /// against the stored one. Only meaningful for unthinned runs.
    pub fn verify_replay(&self) -> Result<()> {
        if self.stride != 1 {
            return Err(Error::NotApplicable("replay check needs an unthinned trajectory".into()));
        }
        let mut state = UrnState::new(self.initial.0, self.initial.1)?;
        for r in &self.records {
            if r.n != state.n + 1 {
                return Err(Error::contract("records", format!("gap before step {}", r.n)));
            }
            state = state.apply(r.draws, r.drawn_a, r.reinforce_a, r.reinforce_b)?;
            let expected_total = state.total();
            if state.h != r.h || state.k != r.k || expected_total != r.total() {
                return Err(Error::contract(
                    "records",
                    format!("step {}: stored (H={}, K={}) but replay gives (H={}, K={})", r.n, r.h, r.k, state.h, state.k),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{catalog, Case, DiscreteLaw, ReinforcementLaw, SampleSizeLaw, Scenario};
    use proptest::prelude::*;

    fn polya(a: u64, b: u64) -> Scenario {
        Scenario::new(
            "polya",
            a,
            b,
            SampleSizeLaw::Fixed { size: 1 },
            ReinforcementLaw::FiniteJoint {
                pairs: vec![[1, 1]],
                weights: vec![1.0],
            },
            Case::EqualMeans,
        )
        .unwrap()
    }

    #[test]
    fn new_urn_examples() {
        let s = UrnState::new(5, 5).unwrap();
        assert_eq!(s.proportion(), 0.5);
        let s = UrnState::new(1, 1).unwrap();
        assert_eq!((s.total(), s.proportion()), (2, 0.5));
        let s = UrnState::new(6, 6).unwrap();
        assert_eq!((s.total(), s.proportion()), (12, 0.5));
        assert!(matches!(UrnState::new(0, 3), Err(Error::Contract { param: "a", .. })));
        assert!(matches!(UrnState::new(3, 0), Err(Error::Contract { param: "b", .. })));
    }

    #[test]
    fn forced_update() {
        let s = UrnState::new(5, 5).unwrap();
        let next = s.apply(2, 1, 3, 2).unwrap();
        assert_eq!((next.h, next.k, next.total(), next.n), (8, 7, 15, 1));
    }

    #[test]
    fn infeasible_forced_updates_are_rejected() {
        let s = UrnState { n: 0, h: 9, k: 1 };
        assert!(s.apply(3, 1, 1, 1).is_err()); // two B balls from one
        assert!(s.apply(11, 9, 1, 1).is_err());
        assert!(s.apply(2, 2, 0, 1).is_err());
        for x in 1..=3 {
            let next = s.apply(3, x.max(2), 4, 4).unwrap();
            assert!(next.k >= 1);
        }
    }

    #[test]
    fn overflow_is_detected() {
        let s = UrnState { n: 0, h: u64::MAX - 1, k: 1 };
        assert!(matches!(s.apply(1, 1, 5, 1), Err(Error::Overflow { n: 1 })));
    }

    #[test]
    fn polya_first_step_is_fair() {
        let scenario = polya(1, 1);
        let mut up = 0;
        let reps = 100_000;
        for i in 0..reps {
            let t = run(&scenario, 1, 9, i).unwrap();
            let z = t.records[0].proportion();
            assert!(z == 1.0 / 3.0 || z == 2.0 / 3.0);
            if z > 0.5 {
                up += 1;
            }
        }
        // mean of Z_1 = 1/2 within ~3 sd of a fair coin frequency
        assert!((up as f64 / reps as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn oversized_sample_is_a_step_error() {
        let scenario = catalog("1a").unwrap();
        let mut dynamics = scenario.dynamics();
        let tiny = UrnState { n: 0, h: 1, k: 1 };
        let mut rng = derive_stream(0, 0);
        let mut saw_error = false;
        for _ in 0..200 {
            match step(&tiny, &mut dynamics, &mut rng) {
                Err(Error::SampleSizeOutOfRange { n: 1, law, total: 2, .. }) => {
                    assert_eq!(law, "iid-discrete");
                    saw_error = true;
                }
                Ok(_) => {}
                Err(e) => panic!("unexpected {e}"),
            }
        }
        assert!(saw_error);
    }

    #[test]
    fn run_lengths_and_determinism() {
        let scenario = catalog("1a").unwrap();
        let t = run(&scenario, 1500, 42, 0).unwrap();
        assert_eq!(t.records.len(), 1500);
        assert!(t.records.windows(2).all(|w| w[1].n == w[0].n + 1));
        assert_eq!(t, run(&scenario, 1500, 42, 0).unwrap());
        t.verify_replay().unwrap();
        assert_eq!(run(&scenario, 1, 42, 0).unwrap().records.len(), 1);
        assert!(run(&scenario, 0, 42, 0).is_err());
    }

    #[test]
    fn thinning_keeps_stride_and_final_record() {
        let scenario = catalog("1b").unwrap();
        let full = run(&scenario, 1003, 1, 2).unwrap();
        let thin = run_thinned(&scenario, 1003, 1, 2, 10).unwrap();
        assert_eq!(thin.records.len(), 101);
        assert_eq!(thin.records.last(), full.records.last());
        assert_eq!(thin.records[0], full.records[9]);
    }

    #[test]
    fn csv_layout() {
        let scenario = catalog("1a").unwrap();
        let t = run(&scenario, 3, 42, 0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "n,N,X,A,B,H,K,S,Z");
        assert_eq!(lines.len(), 4);
        let fields: Vec<_> = lines[1].split(',').collect();
        assert_eq!(fields.len(), 9);
        let z: f64 = fields[8].parse().unwrap();
        assert_eq!(z, t.records[0].proportion());
        assert_eq!(sig17(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn walker_law_runs_from_catalog() {
        let scenario = catalog("1e").unwrap();
        let t = run(&scenario, 500, 3, 1).unwrap();
        let mut prev = None;
        for r in &t.records {
            assert!((1..=50).contains(&r.draws));
            if let Some(p) = prev {
                let d: i64 = r.draws as i64 - p as i64;
                assert!(d.abs() <= 1);
                if p == 1 || p == 50 {
                    assert_eq!(d, 0);
                }
            }
            prev = Some(r.draws);
        }
    }

    proptest! {
        #[test]
        fn steps_preserve_invariants(a in 1u64..20, b in 1u64..20, seed in any::<u64>()) {
            let scenario = Scenario::new(
                "prop",
                a,
                b,
                SampleSizeLaw::Fixed { size: 1 },
                ReinforcementLaw::Independent {
                    a: crate::scenarios::Marginal::discrete(DiscreteLaw::uniform(1..=4)),
                    b: crate::scenarios::Marginal::discrete(DiscreteLaw::uniform(1..=4)),
                },
                Case::EqualMeans,
            ).unwrap();
            let mut sim = Simulation::new(&scenario, seed, 0);
            let mut prev = *sim.state();
            for _ in 0..50 {
                let r = sim.advance().unwrap();
                prop_assert!(r.draws >= 1 && r.draws <= prev.total());
                prop_assert!(r.drawn_a <= r.draws.min(prev.h));
                prop_assert!(r.draws - r.drawn_a <= prev.k);
                prop_assert!(r.reinforce_a >= 1 && r.reinforce_b >= 1);
                prop_assert_eq!(r.total(), prev.total() + r.reinforce_a * r.drawn_a + r.reinforce_b * (r.draws - r.drawn_a));
                prop_assert!(r.h >= prev.h && r.k >= prev.k);
                prev = r.state();
            }
        }
    }
}
