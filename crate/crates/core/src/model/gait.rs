//! Gaits as periodic, timed sequences of contact modes, plus the per-leg
//! phase variables derived from them.

use crate::model::walker::{Mode, NUM_MODES};
use crate::model::ModelError;

/// Absolute tolerance when comparing times against schedule events. Knot
/// times accumulate floating-point rounding; an instant this close to an
/// event is treated as already past it, so solver grids and simulator grids
/// agree on the active mode at switch knots.
pub const EVENT_TOLERANCE: f64 = 1e-9;

/// Periodic schedule of contact modes over one gait cycle.
///
/// `event_times` are the switch instants inside (0, cycle_duration); interval
/// k (between event k-1 and event k) is active with `modes[k]`. The mode
/// lookup `mode_at` is right-continuous and extends periodically to all
/// t >= 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSchedule {
    event_times: Vec<f64>,
    modes: Vec<Mode>,
    cycle_duration: f64,
    /// Per-foot swing windows (t_lo, t_td] within one cycle. A window may
    /// extend past cycle_duration when the swing wraps around the cycle
    /// boundary.
    swing_windows: [Vec<(f64, f64)>; 2],
}

impl ModeSchedule {
    pub fn new(
        event_times: Vec<f64>,
        modes: Vec<Mode>,
        cycle_duration: f64,
    ) -> Result<Self, ModelError> {
        if !(cycle_duration > 0.0) || !cycle_duration.is_finite() {
            return Err(ModelError::InvalidSchedule("cycle duration must be positive".into()));
        }
        if modes.len() != event_times.len() + 1 {
            return Err(ModelError::InvalidSchedule(format!(
                "need len(modes) = len(event_times) + 1, got {} modes for {} events",
                modes.len(),
                event_times.len()
            )));
        }
        let mut prev = 0.0;
        for &t in &event_times {
            if !(t > prev) || t >= cycle_duration {
                return Err(ModelError::InvalidSchedule(
                    "event times must be strictly increasing inside (0, cycle)".into(),
                ));
            }
            prev = t;
        }
        let swing_windows = Self::collect_swing_windows(&event_times, &modes, cycle_duration)?;
        Ok(Self { event_times, modes, cycle_duration, swing_windows })
    }

    fn collect_swing_windows(
        events: &[f64],
        modes: &[Mode],
        cycle: f64,
    ) -> Result<[Vec<(f64, f64)>; 2], ModelError> {
        let mut windows: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
        let starts: Vec<f64> =
            std::iter::once(0.0).chain(events.iter().copied()).collect();
        let ends: Vec<f64> =
            events.iter().copied().chain(std::iter::once(cycle)).collect();
        for foot in 0..2 {
            let in_swing = |k: usize| !modes[k].contact_flags()[foot];
            let mut k = 0;
            while k < modes.len() {
                if in_swing(k) {
                    let lo = starts[k];
                    let mut end_k = k;
                    while end_k + 1 < modes.len() && in_swing(end_k + 1) {
                        end_k += 1;
                    }
                    let mut td = ends[end_k];
                    // wrap-around: swing continues through the cycle boundary
                    if end_k == modes.len() - 1 && in_swing(0) && k > 0 {
                        let mut wrap = 0;
                        while wrap + 1 < k && in_swing(wrap + 1) {
                            wrap += 1;
                        }
                        td = cycle + ends[wrap];
                    }
                    if !(td - lo < cycle) && modes.iter().all(|m| !m.contact_flags()[foot]) {
                        return Err(ModelError::InvalidSchedule(format!(
                            "foot {} never touches down",
                            foot + 1
                        )));
                    }
                    windows[foot].push((lo, td));
                    k = end_k + 1;
                } else {
                    k += 1;
                }
            }
            // drop windows subsumed by a wrap-around window
            if windows[foot].len() > 1 {
                let last = *windows[foot].last().unwrap();
                if last.1 > cycle {
                    let overhang = last.1 - cycle;
                    windows[foot].retain(|&(lo, td)| !(lo == 0.0 && td <= overhang + 1e-12));
                }
            }
        }
        Ok(windows)
    }

    pub fn cycle_duration(&self) -> f64 {
        self.cycle_duration
    }

    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    fn wrap(&self, t: f64) -> f64 {
        let mut tau = t % self.cycle_duration;
        if tau < 0.0 {
            tau += self.cycle_duration;
        }
        if self.cycle_duration - tau < EVENT_TOLERANCE {
            tau = 0.0;
        }
        tau
    }

    /// Active mode m(t); right-continuous, periodic, total for all t >= 0.
    pub fn mode_at(&self, t: f64) -> Mode {
        let tau = self.wrap(t);
        let idx = self.event_times.partition_point(|&e| e <= tau + EVENT_TOLERANCE);
        self.modes[idx]
    }

    /// The modes that occur somewhere in the cycle.
    pub fn observed_modes(&self) -> Vec<Mode> {
        let mut seen = Vec::new();
        for m in &self.modes {
            if !seen.contains(m) {
                seen.push(*m);
            }
        }
        seen
    }
}

/// Named gait.
#[derive(Clone, Debug, PartialEq)]
pub struct GaitSpec {
    pub name: String,
    pub schedule: ModeSchedule,
}

impl GaitSpec {
    /// Static walk analog: STANCE 0.2 s, SWING1 0.3 s, STANCE 0.2 s,
    /// SWING2 0.3 s; cycle 1.0 s.
    pub fn walk() -> Self {
        Self {
            name: "walk".into(),
            schedule: ModeSchedule::new(
                vec![0.2, 0.5, 0.7],
                vec![Mode::Stance, Mode::Swing1, Mode::Stance, Mode::Swing2],
                1.0,
            )
            .expect("builtin walk schedule is valid"),
        }
    }

    /// Trot analog: SWING1 0.3 s, SWING2 0.3 s; cycle 0.6 s.
    pub fn trot_analog() -> Self {
        Self {
            name: "trot-analog".into(),
            schedule: ModeSchedule::new(vec![0.3], vec![Mode::Swing1, Mode::Swing2], 0.6)
                .expect("builtin trot-analog schedule is valid"),
        }
    }

    /// Both feet planted forever; used by equilibrium tests.
    pub fn stand() -> Self {
        Self {
            name: "stand".into(),
            schedule: ModeSchedule::new(vec![], vec![Mode::Stance], 1.0)
                .expect("builtin stand schedule is valid"),
        }
    }

    pub fn by_name(name: &str) -> Result<Self, ModelError> {
        match name {
            "walk" => Ok(Self::walk()),
            "trot-analog" => Ok(Self::trot_analog()),
            "stand" => Ok(Self::stand()),
            other => Err(ModelError::UnknownGait(other.to_string())),
        }
    }
}

/// Per-leg gait encoding [phi, phi_dot, sin(pi phi)] replacing absolute time
/// as the policy's temporal input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneralizedTime {
    /// Swing phases, one per foot, in [0, 1]; 0 while in contact.
    pub phases: [f64; 2],
    /// Phase rates, 1/s; 0 while in contact.
    pub phase_rates: [f64; 2],
    /// sin(pi * phase) per foot.
    pub bumps: [f64; 2],
}

pub const GENERALIZED_TIME_DIM: usize = 6;

impl GeneralizedTime {
    /// Packs as [phi1, phi2, phidot1, phidot2, bump1, bump2].
    pub fn to_vector(&self) -> [f64; GENERALIZED_TIME_DIM] {
        [
            self.phases[0],
            self.phases[1],
            self.phase_rates[0],
            self.phase_rates[1],
            self.bumps[0],
            self.bumps[1],
        ]
    }
}

/// Swing phase and rate of one foot at time t.
///
/// Inside a swing window (t_lo, t_td]: phase = (t - t_lo)/(t_td - t_lo) and
/// rate = 1/(t_td - t_lo); in contact: (0, 0). Window membership is
/// left-continuous, so the liftoff instant still reports contact and the
/// touchdown instant reports phase 1.
pub fn leg_phase(t: f64, foot: usize, schedule: &ModeSchedule) -> (f64, f64) {
    assert!(foot < 2, "foot index must be 0 or 1");
    let cycle = schedule.cycle_duration();
    let tau = {
        let m = t % cycle;
        if m < 0.0 {
            m + cycle
        } else {
            m
        }
    };
    for &(lo, td) in &schedule.swing_windows[foot] {
        for cand in [tau, tau + cycle] {
            if cand > lo + EVENT_TOLERANCE && cand <= td + EVENT_TOLERANCE {
                let dur = td - lo;
                return (((cand - lo) / dur).min(1.0), 1.0 / dur);
            }
        }
    }
    (0.0, 0.0)
}

/// Assembles the generalized time [phi, phi_dot, sin(pi phi)] for both feet.
pub fn generalized_time(t: f64, schedule: &ModeSchedule) -> GeneralizedTime {
    let mut phases = [0.0; 2];
    let mut rates = [0.0; 2];
    let mut bumps = [0.0; 2];
    for foot in 0..2 {
        let (phase, rate) = leg_phase(t, foot, schedule);
        phases[foot] = phase;
        rates[foot] = rate;
        bumps[foot] = (std::f64::consts::PI * phase).sin();
    }
    GeneralizedTime { phases, phase_rates: rates, bumps }
}

/// Empirical mode probabilities at time t: one-hot over the three admissible
/// modes at the schedule's active mode.
pub fn mode_probabilities(t: f64, schedule: &ModeSchedule) -> [f64; NUM_MODES] {
    let mut p = [0.0; NUM_MODES];
    p[schedule.mode_at(t).index()] = 1.0;
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn schedule_validation() {
        assert!(ModeSchedule::new(vec![], vec![Mode::Stance], 1.0).is_ok());
        assert!(ModeSchedule::new(vec![0.5], vec![Mode::Stance], 1.0).is_err());
        assert!(ModeSchedule::new(vec![0.5, 0.4], vec![Mode::Stance; 3], 1.0).is_err());
        assert!(ModeSchedule::new(vec![1.0], vec![Mode::Stance; 2], 1.0).is_err());
        assert!(ModeSchedule::new(vec![], vec![Mode::Swing1], 1.0).is_err());
    }

    #[test]
    fn walk_mode_lookup_right_continuous_and_periodic() {
        let g = GaitSpec::walk();
        assert_eq!(g.schedule.mode_at(0.0), Mode::Stance);
        assert_eq!(g.schedule.mode_at(0.2), Mode::Swing1);
        assert_eq!(g.schedule.mode_at(0.49), Mode::Swing1);
        assert_eq!(g.schedule.mode_at(0.5), Mode::Stance);
        assert_eq!(g.schedule.mode_at(0.7), Mode::Swing2);
        assert_eq!(g.schedule.mode_at(0.99), Mode::Swing2);
        assert_eq!(g.schedule.mode_at(1.0), Mode::Stance);
        assert_eq!(g.schedule.mode_at(1.25), Mode::Swing1);
        assert_eq!(g.schedule.mode_at(7.35), g.schedule.mode_at(0.35));
    }

    #[test]
    fn leg_phase_midpoint() {
        // swing interval [0, 0.5] for foot 1 of a custom gait
        let s = ModeSchedule::new(vec![0.5], vec![Mode::Swing1, Mode::Stance], 1.0).unwrap();
        let (phase, rate) = leg_phase(0.25, 0, &s);
        assert_relative_eq!(phase, 0.5, epsilon = 1e-12);
        assert_relative_eq!(rate, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn leg_phase_contact_is_zero() {
        let g = GaitSpec::walk();
        let (phase, rate) = leg_phase(0.1, 0, &g.schedule);
        assert_eq!((phase, rate), (0.0, 0.0));
        // foot 2 is in contact during foot 1's swing
        let (phase, rate) = leg_phase(0.3, 1, &g.schedule);
        assert_eq!((phase, rate), (0.0, 0.0));
    }

    #[test]
    fn leg_phase_touchdown_instant() {
        // walk gait, foot 1, swing window [0.2, 0.5]: phase 1 exactly at touchdown
        let g = GaitSpec::walk();
        let (phase, rate) = leg_phase(0.5, 0, &g.schedule);
        assert_relative_eq!(phase, 1.0, epsilon = 1e-12);
        assert_relative_eq!(rate, 1.0 / 0.3, epsilon = 1e-12);
        // liftoff instant evaluates the left limit: still contact
        let (phase, rate) = leg_phase(0.2, 0, &g.schedule);
        assert_eq!((phase, rate), (0.0, 0.0));
    }

    #[test]
    fn generalized_time_examples() {
        let g = GaitSpec::walk();
        // both feet in contact
        let gt = generalized_time(0.1, &g.schedule);
        assert_eq!(gt.to_vector(), [0.0; 6]);
        // foot 1 mid swing: [0.2, 0.5] at t = 0.35
        let gt = generalized_time(0.35, &g.schedule);
        assert_relative_eq!(gt.phases[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(gt.phase_rates[0], 1.0 / 0.3, epsilon = 1e-12);
        assert_relative_eq!(gt.bumps[0], 1.0, epsilon = 1e-12);
        assert_eq!(gt.phases[1], 0.0);
        assert_eq!(gt.phase_rates[1], 0.0);
        assert_eq!(gt.bumps[1], 0.0);
        // phase 1.0 has bump 0 within 1e-12
        let gt = generalized_time(0.5, &g.schedule);
        assert!(gt.bumps[0].abs() < 1e-12);
        assert_relative_eq!(gt.phases[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn generalized_time_vector_layout() {
        // foot 1 at phase 0.5 with rate 2.0, foot 2 contact -> (0.5, 0, 2.0, 0, 1.0, 0)
        let s = ModeSchedule::new(vec![0.5], vec![Mode::Swing1, Mode::Stance], 1.0).unwrap();
        let v = generalized_time(0.25, &s).to_vector();
        assert_relative_eq!(v[0], 0.5, epsilon = 1e-12);
        assert_eq!(v[1], 0.0);
        assert_relative_eq!(v[2], 2.0, epsilon = 1e-12);
        assert_eq!(v[3], 0.0);
        assert_relative_eq!(v[4], 1.0, epsilon = 1e-12);
        assert_eq!(v[5], 0.0);
    }

    #[test]
    fn trot_swing_windows() {
        let g = GaitSpec::trot_analog();
        let (phase, rate) = leg_phase(0.15, 0, &g.schedule);
        assert_relative_eq!(phase, 0.5, epsilon = 1e-12);
        assert_relative_eq!(rate, 1.0 / 0.3, epsilon = 1e-12);
        let (phase, _) = leg_phase(0.45, 1, &g.schedule);
        assert_relative_eq!(phase, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn wrap_around_swing_window() {
        // SWING1 [0, 0.2], STANCE [0.2, 0.8], SWING1 [0.8, 1.0]: foot 1 swings
        // across the cycle boundary, one window (0.8, 1.2]
        let s = ModeSchedule::new(
            vec![0.2, 0.8],
            vec![Mode::Swing1, Mode::Stance, Mode::Swing1],
            1.0,
        )
        .unwrap();
        let (phase, rate) = leg_phase(0.9, 0, &s);
        assert_relative_eq!(phase, 0.25, epsilon = 1e-12);
        assert_relative_eq!(rate, 1.0 / 0.4, epsilon = 1e-12);
        let (phase, _) = leg_phase(1.1, 0, &s);
        assert_relative_eq!(phase, 0.75, epsilon = 1e-12);
        // the same instant expressed inside the first cycle
        let (phase, _) = leg_phase(0.1, 0, &s);
        assert_relative_eq!(phase, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn mode_probability_one_hot() {
        let g = GaitSpec::walk();
        assert_eq!(mode_probabilities(0.1, &g.schedule), [1.0, 0.0, 0.0]);
        assert_eq!(mode_probabilities(0.3, &g.schedule), [0.0, 1.0, 0.0]);
        assert_eq!(mode_probabilities(0.8, &g.schedule), [0.0, 0.0, 1.0]);
        let sum: f64 = mode_probabilities(123.456, &g.schedule).iter().sum();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn observed_modes() {
        assert_eq!(GaitSpec::walk().schedule.observed_modes().len(), 3);
        assert_eq!(GaitSpec::trot_analog().schedule.observed_modes().len(), 2);
        assert_eq!(GaitSpec::stand().schedule.observed_modes(), vec![Mode::Stance]);
    }
}
