//! Closed-form contact windows against dense time sampling.

use oecsim_core::engine::SimTime;
use oecsim_core::mobility::{contact_intervals, distance, ContactInterval, Point, RsuPlacement, Trajectory};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

const STEP: f64 = 1e-3;

/// Runs of samples within range, as `[first inside sample, last inside sample]`.
fn sampled(traj: &Trajectory, center: Point, range: f64) -> Vec<(f64, f64)> {
    let n = (traj.duration() / STEP).floor() as u64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    for k in 0..=n {
        let t = k as f64 * STEP;
        let inside = distance(traj.position_clamped(SimTime::from_secs(t)), center) <= range;
        open = match (open, inside) {
            (None, true) => Some((t, t)),
            (Some((s, _)), true) => Some((s, t)),
            (Some(run), false) => {
                out.push(run);
                None
            }
            (None, false) => None,
        };
    }
    out.extend(open);
    out
}

fn check(traj: &Trajectory, rsu: &RsuPlacement, range: f64) -> Result<(), String> {
    let analytic: Vec<ContactInterval> = contact_intervals(traj, rsu, range)
        .into_iter()
        // a window shorter than a sample step can fall between samples
        .filter(|w| w.duration() > 2.0 * STEP)
        .collect();
    let oracle: Vec<(f64, f64)> = sampled(traj, rsu.position, range)
        .into_iter()
        .filter(|(s, e)| e - s > STEP)
        .collect();
    if analytic.len() != oracle.len() {
        return Err(format!("{} windows vs {} sampled: {analytic:?} / {oracle:?}", analytic.len(), oracle.len()));
    }
    let tol = STEP + 1e-9;
    for (w, (s, e)) in analytic.iter().zip(&oracle) {
        // the first inside sample is at most one step after the true entry
        let start_ok = *s >= w.start.secs() - 1e-9 && s - w.start.secs() <= tol;
        let end_ok = *e <= w.end.secs() + 1e-9 && w.end.secs() - e <= tol;
        if !(start_ok && end_ok) {
            return Err(format!("window {w:?} vs sampled ({s}, {e})"));
        }
    }
    Ok(())
}

#[test]
fn hundred_random_geometries_match_sampling() {
    let geometry = (
        (-800.0..800.0f64, -800.0..800.0f64),
        (-800.0..800.0f64, -800.0..800.0f64),
        8.0..40.0f64,
        -0.2..1.2f64,
        0.0..300.0f64,
        10.0..600.0f64,
    );
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 100,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::from_seed(RngAlgorithm::ChaCha, &[7; 32]),
    );
    runner
        .run(&geometry, |((ax, ay), (bx, by), speed, frac, offset, range)| {
            let (a, b) = (Point::new(ax, ay), Point::new(bx, by));
            prop_assume!(distance(a, b) > 20.0);
            let traj = Trajectory::new(a, b, speed, SimTime::ZERO).unwrap();
            let rsu = RsuPlacement::beside_road(a, b, frac * distance(a, b), offset).unwrap();
            check(&traj, &rsu, range).map_err(TestCaseError::fail)
        })
        .unwrap();
}

#[test]
fn symmetric_pass_has_mirrored_windows() {
    let (a, b) = (Point::new(0.0, 0.0), Point::new(1000.0, 0.0));
    let traj = Trajectory::new(a, b, 10.0, SimTime::ZERO).unwrap();
    let rsu = RsuPlacement::beside_road(a, b, 500.0, 10.0).unwrap();
    let w = contact_intervals(&traj, &rsu, 100.0);
    assert_eq!(w.len(), 2);
    let first = (w[0].start.secs(), w[0].end.secs());
    let second = (w[1].start.secs(), w[1].end.secs());
    assert!((first.0 + second.1 - 200.0).abs() < 1e-9);
    assert!((first.1 + second.0 - 200.0).abs() < 1e-9);
    check(&traj, &rsu, 100.0).unwrap();
}

#[test]
fn rsu_at_the_turn_gives_one_window() {
    let (a, b) = (Point::new(0.0, 0.0), Point::new(600.0, 0.0));
    let traj = Trajectory::new(a, b, 12.0, SimTime::ZERO).unwrap();
    let rsu = RsuPlacement::beside_road(a, b, 600.0, 5.0).unwrap();
    let w = contact_intervals(&traj, &rsu, 120.0);
    assert_eq!(w.len(), 1);
    check(&traj, &rsu, 120.0).unwrap();
}
