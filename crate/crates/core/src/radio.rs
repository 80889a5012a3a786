//! Link models for the two radio technologies: airtime, log-distance path loss
//! with Gaussian shadowing, reception decisions and end-to-end latency.
//!
//! Reception compares the link margin
//!
//! ```text
//! margin = tx_power - (reference_loss + 10·n·log10(d) + X) - rx_sensitivity - fade
//! ```
//!
//! against zero, where `X ~ N(0, shadowing_sigma²)` and `fade` is a mobility
//! term: `decorrelation_db · (speed · airtime / wavelength)²`, i.e. how many
//! wavelengths the vehicle covers while the frame is on air. The quadratic
//! form follows the small-lag expansion of the channel autocorrelation.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use crate::engine::{RngStream, SimTime};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Wize carrier used by the roadside testbed, Hz.
pub const WIZE_CARRIER_HZ: f64 = 169_431_250.0;
pub const WIZE_TX_POWER_DBM: f64 = 27.0;
pub const WIZE_RATES: [f64; 2] = [2400.0, 6400.0];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RadioError {
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("invalid radio profile: {0}")]
    InvalidProfile(&'static str),
    #[error("invalid link model: {0}")]
    InvalidLink(&'static str),
    #[error("invalid latency model: {0}")]
    InvalidLatency(&'static str),
    #[error("latency model is for {model}, frame was sent over {frame}")]
    TechnologyMismatch { model: Technology, frame: Technology },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Technology {
    Ble5,
    Wize,
}

impl Technology {
    pub fn as_str(self) -> &'static str {
        match self {
            Technology::Ble5 => "BLE5",
            Technology::Wize => "WIZE",
        }
    }
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Name that is not one of the accepted spellings.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind}, expected one of {expected}")]
pub struct ParseNameError {
    pub kind: &'static str,
    pub expected: &'static str,
}

impl FromStr for Technology {
    type Err = ParseNameError;
    fn from_str(s: &str) -> Result<Self, ParseNameError> {
        match s.to_ascii_uppercase().as_str() {
            "BLE5" => Ok(Technology::Ble5),
            "WIZE" => Ok(Technology::Wize),
            _ => Err(ParseNameError {
                kind: "technology",
                expected: "BLE5, WIZE",
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modulation {
    Gfsk,
    FourGfsk,
    BleCoded,
}

impl Modulation {
    pub fn as_str(self) -> &'static str {
        match self {
            Modulation::Gfsk => "GFSK",
            Modulation::FourGfsk => "4GFSK",
            Modulation::BleCoded => "BLE-CODED",
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modulation {
    type Err = ParseNameError;
    fn from_str(s: &str) -> Result<Self, ParseNameError> {
        match s.to_ascii_uppercase().as_str() {
            "GFSK" => Ok(Modulation::Gfsk),
            "4GFSK" => Ok(Modulation::FourGfsk),
            "BLE-CODED" => Ok(Modulation::BleCoded),
            _ => Err(ParseNameError {
                kind: "modulation",
                expected: "GFSK, 4GFSK, BLE-CODED",
            }),
        }
    }
}

/// Physical and link-layer parameters of one technology at one data rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioProfile {
    pub technology: Technology,
    pub carrier_frequency_hz: f64,
    pub data_rate_bps: f64,
    pub tx_power_dbm: f64,
    pub rx_sensitivity_dbm: f64,
    pub nominal_range_m: f64,
    pub modulation: Modulation,
    /// Metadata only; energy is not simulated.
    pub tx_current_ma: f64,
    pub preamble_overhead_bits: f64,
}

impl RadioProfile {
    /// nRF52840 on the coded (long range) PHY.
    pub fn ble5() -> Self {
        RadioProfile {
            technology: Technology::Ble5,
            carrier_frequency_hz: 2_440_000_000.0,
            data_rate_bps: 125_000.0,
            tx_power_dbm: 8.0,
            rx_sensitivity_dbm: -103.0,
            nominal_range_m: 400.0,
            modulation: Modulation::BleCoded,
            tx_current_ma: 20.0,
            preamble_overhead_bits: 48.0,
        }
    }

    /// Wize at 2.4 kbps (GFSK) or 6.4 kbps (4GFSK). The 4GFSK receiver is
    /// `fourgfsk_penalty_db` less sensitive.
    pub fn wize(data_rate_bps: f64, fourgfsk_penalty_db: f64) -> Result<Self, RadioError> {
        let (modulation, penalty) = if data_rate_bps == 2400.0 {
            (Modulation::Gfsk, 0.0)
        } else if data_rate_bps == 6400.0 {
            (Modulation::FourGfsk, fourgfsk_penalty_db)
        } else {
            return Err(RadioError::InvalidProfile("Wize data rate must be 2400 or 6400 bit/s"));
        };
        Ok(RadioProfile {
            technology: Technology::Wize,
            carrier_frequency_hz: WIZE_CARRIER_HZ,
            data_rate_bps,
            tx_power_dbm: WIZE_TX_POWER_DBM,
            rx_sensitivity_dbm: WIZE_GFSK_SENSITIVITY_DBM + penalty,
            nominal_range_m: 5000.0,
            modulation,
            tx_current_ma: 400.0,
            preamble_overhead_bits: 48.0,
        })
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    pub fn validate(&self) -> Result<(), RadioError> {
        let finite = [
            self.carrier_frequency_hz,
            self.data_rate_bps,
            self.tx_power_dbm,
            self.rx_sensitivity_dbm,
            self.nominal_range_m,
            self.tx_current_ma,
            self.preamble_overhead_bits,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(RadioError::InvalidProfile("all fields must be finite"));
        }
        if self.data_rate_bps <= 0.0 {
            return Err(RadioError::InvalidProfile("data_rate must be positive"));
        }
        if self.carrier_frequency_hz <= 0.0 {
            return Err(RadioError::InvalidProfile("carrier_frequency must be positive"));
        }
        if self.preamble_overhead_bits < 0.0 {
            return Err(RadioError::InvalidProfile("preamble_overhead must be >= 0"));
        }
        if self.technology == Technology::Wize && !WIZE_RATES.contains(&self.data_rate_bps) {
            return Err(RadioError::InvalidProfile("Wize data rate must be 2400 or 6400 bit/s"));
        }
        Ok(())
    }
}

/// GFSK sensitivity used for the 2.4 kbps Wize profile.
pub const WIZE_GFSK_SENSITIVITY_DBM: f64 = -110.0;
/// Calibrated sensitivity loss of 4GFSK relative to GFSK.
pub const WIZE_FOURGFSK_PENALTY_DB: f64 = 5.5;

/// Closed interval of forced outage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisruptionWindow {
    pub start: f64,
    pub end: f64,
}

impl DisruptionWindow {
    pub fn contains(&self, t: SimTime) -> bool {
        self.start <= t.secs() && t.secs() <= self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkModelParams {
    pub path_loss_exponent: f64,
    /// Loss at 1 m, dB.
    pub reference_loss_db: f64,
    pub shadowing_sigma_db: f64,
    /// Fade per squared wavelength travelled during one frame, dB.
    pub decorrelation_db: f64,
    pub disruption_windows: Vec<DisruptionWindow>,
}

impl LinkModelParams {
    pub fn ble5() -> Self {
        LinkModelParams {
            path_loss_exponent: 2.75,
            reference_loss_db: 40.0,
            shadowing_sigma_db: 1.0,
            decorrelation_db: 0.0,
            disruption_windows: Vec::new(),
        }
    }

    pub fn wize() -> Self {
        LinkModelParams {
            path_loss_exponent: 2.1,
            reference_loss_db: 82.0,
            shadowing_sigma_db: 2.7,
            decorrelation_db: 0.28,
            disruption_windows: Vec::new(),
        }
    }

    pub fn for_technology(technology: Technology) -> Self {
        match technology {
            Technology::Ble5 => Self::ble5(),
            Technology::Wize => Self::wize(),
        }
    }

    pub fn validate(&self) -> Result<(), RadioError> {
        if !(1.6..=5.0).contains(&self.path_loss_exponent) {
            return Err(RadioError::InvalidLink("path_loss_exponent must lie in [1.6, 5]"));
        }
        if !self.reference_loss_db.is_finite() {
            return Err(RadioError::InvalidLink("reference_loss_db must be finite"));
        }
        if !(self.shadowing_sigma_db.is_finite() && self.shadowing_sigma_db >= 0.0) {
            return Err(RadioError::InvalidLink("shadowing_sigma must be >= 0"));
        }
        if !(self.decorrelation_db.is_finite() && self.decorrelation_db >= 0.0) {
            return Err(RadioError::InvalidLink("decorrelation_db must be >= 0"));
        }
        for w in &self.disruption_windows {
            if !(w.start.is_finite() && w.end.is_finite() && w.start <= w.end) {
                return Err(RadioError::InvalidLink("disruption window needs start <= end"));
            }
        }
        Ok(())
    }

    pub fn disrupted(&self, t: SimTime) -> bool {
        self.disruption_windows.iter().any(|w| w.contains(t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyModelParams {
    /// Serial transfer plus stack processing, seconds.
    pub fixed_overhead: f64,
    /// Advertising/scan alignment delay (BLE only), seconds.
    pub rendezvous_mean: f64,
    pub rendezvous_jitter: f64,
    pub applies_to: Technology,
}

impl LatencyModelParams {
    pub fn ble5() -> Self {
        LatencyModelParams {
            fixed_overhead: 0.05,
            rendezvous_mean: 0.703,
            rendezvous_jitter: 0.2,
            applies_to: Technology::Ble5,
        }
    }

    pub fn wize() -> Self {
        LatencyModelParams {
            fixed_overhead: 0.005,
            rendezvous_mean: 0.0,
            rendezvous_jitter: 0.0,
            applies_to: Technology::Wize,
        }
    }

    pub fn for_technology(technology: Technology) -> Self {
        match technology {
            Technology::Ble5 => Self::ble5(),
            Technology::Wize => Self::wize(),
        }
    }

    pub fn validate(&self) -> Result<(), RadioError> {
        let vals = [self.fixed_overhead, self.rendezvous_mean, self.rendezvous_jitter];
        if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(RadioError::InvalidLatency("all terms must be finite and >= 0"));
        }
        if self.rendezvous_jitter > self.rendezvous_mean {
            return Err(RadioError::InvalidLatency("rendezvous_jitter must not exceed rendezvous_mean"));
        }
        if self.applies_to == Technology::Wize && (self.rendezvous_mean > 0.0 || self.rendezvous_jitter > 0.0) {
            return Err(RadioError::InvalidLatency("rendezvous terms apply to BLE5 only"));
        }
        Ok(())
    }
}

/// Seconds on air for a frame of `frame_bytes` payload bytes.
pub fn airtime(profile: &RadioProfile, frame_bytes: usize) -> f64 {
    (profile.preamble_overhead_bits + 8.0 * frame_bytes as f64) / profile.data_rate_bps
}

/// Deterministic part of the path loss.
pub fn mean_path_loss_db(params: &LinkModelParams, d: f64) -> Result<f64, RadioError> {
    if d.is_nan() || d <= 0.0 {
        return Err(RadioError::NonPositiveDistance(d));
    }
    Ok(params.reference_loss_db + 10.0 * params.path_loss_exponent * libm::log10(d))
}

/// Path loss including one shadowing draw. Nothing is drawn when sigma is zero.
pub fn path_loss_db(params: &LinkModelParams, d: f64, rng: &mut RngStream) -> Result<f64, RadioError> {
    let mean = mean_path_loss_db(params, d)?;
    if params.shadowing_sigma_db > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        Ok(mean + params.shadowing_sigma_db * z)
    } else {
        Ok(mean)
    }
}

/// One transmission as seen by the link model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reception {
    pub distance_m: f64,
    pub at: SimTime,
    /// Receiver speed, m/s.
    pub speed_mps: f64,
    pub frame_bytes: usize,
}

impl Reception {
    /// A stationary receiver; the mobility fade vanishes.
    pub fn at_rest(distance_m: f64, at: SimTime) -> Self {
        Reception {
            distance_m,
            at,
            speed_mps: 0.0,
            frame_bytes: 0,
        }
    }
}

pub fn mobility_fade_db(profile: &RadioProfile, params: &LinkModelParams, speed_mps: f64, frame_bytes: usize) -> f64 {
    let wavelengths = speed_mps * airtime(profile, frame_bytes) / profile.wavelength();
    params.decorrelation_db * wavelengths * wavelengths
}

/// Mean margin over sensitivity, before shadowing.
pub fn link_margin_db(profile: &RadioProfile, params: &LinkModelParams, rx: &Reception) -> Result<f64, RadioError> {
    Ok(profile.tx_power_dbm
        - mean_path_loss_db(params, rx.distance_m)?
        - profile.rx_sensitivity_dbm
        - mobility_fade_db(profile, params, rx.speed_mps, rx.frame_bytes))
}

/// Draws the frame's fate. Exactly one shadowing sample is consumed whenever
/// sigma is positive, even inside a disruption window, so runs that differ
/// only in their windows stay aligned draw for draw.
pub fn reception_decision(
    profile: &RadioProfile,
    params: &LinkModelParams,
    rx: &Reception,
    rng: &mut RngStream,
) -> Result<bool, RadioError> {
    let margin = link_margin_db(profile, params, rx)?;
    let shadow = if params.shadowing_sigma_db > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        params.shadowing_sigma_db * z
    } else {
        0.0
    };
    if params.disrupted(rx.at) {
        return Ok(false);
    }
    Ok(margin - shadow >= 0.0)
}

/// Closed-form probability that [`reception_decision`] returns true.
pub fn reception_probability(
    profile: &RadioProfile,
    params: &LinkModelParams,
    rx: &Reception,
) -> Result<f64, RadioError> {
    let margin = link_margin_db(profile, params, rx)?;
    if params.disrupted(rx.at) {
        return Ok(0.0);
    }
    if params.shadowing_sigma_db == 0.0 {
        return Ok(if margin >= 0.0 { 1.0 } else { 0.0 });
    }
    Ok(0.5 * libm::erfc(-margin / (params.shadowing_sigma_db * core::f64::consts::SQRT_2)))
}

/// Distance at which the mean margin is zero.
pub fn effective_range(profile: &RadioProfile, params: &LinkModelParams, speed_mps: f64, frame_bytes: usize) -> f64 {
    let budget = profile.tx_power_dbm
        - profile.rx_sensitivity_dbm
        - mobility_fade_db(profile, params, speed_mps, frame_bytes)
        - params.reference_loss_db;
    libm::pow(10.0, budget / (10.0 * params.path_loss_exponent))
}

/// Transmit-to-delivery delay. Wize: airtime plus fixed overhead. BLE5 adds a
/// rendezvous delay drawn uniformly from `mean ± jitter`.
pub fn end_to_end_latency(
    profile: &RadioProfile,
    latency: &LatencyModelParams,
    frame_bytes: usize,
    rng: &mut RngStream,
) -> Result<f64, RadioError> {
    if latency.applies_to != profile.technology {
        return Err(RadioError::TechnologyMismatch {
            model: latency.applies_to,
            frame: profile.technology,
        });
    }
    let base = airtime(profile, frame_bytes) + latency.fixed_overhead;
    Ok(match profile.technology {
        Technology::Wize => base,
        Technology::Ble5 => {
            let u = rng.uniform();
            base + latency.rendezvous_mean + latency.rendezvous_jitter * (2.0 * u - 1.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wize(rate: f64) -> RadioProfile {
        RadioProfile::wize(rate, WIZE_FOURGFSK_PENALTY_DB).unwrap()
    }

    fn quiet(mut p: LinkModelParams) -> LinkModelParams {
        p.shadowing_sigma_db = 0.0;
        p
    }

    #[test]
    fn airtime_of_empty_frame_is_preamble() {
        let p = wize(2400.0);
        assert_eq!(airtime(&p, 0), 48.0 / 2400.0);
    }

    #[test]
    fn wize_airtimes() {
        assert!((airtime(&wize(2400.0), 108) - 0.380).abs() < 1e-12);
        assert!((airtime(&wize(6400.0), 108) - 0.1425).abs() < 1e-12);
    }

    #[test]
    fn wize_paper_setup() {
        for rate in WIZE_RATES {
            let p = wize(rate);
            p.validate().unwrap();
            assert_eq!(p.carrier_frequency_hz, 169_431_250.0);
            assert_eq!(p.tx_power_dbm, 27.0);
        }
        assert!(RadioProfile::wize(4800.0, 3.0).is_err());
        let mut bad = wize(2400.0);
        bad.data_rate_bps = 9600.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tx_current_ratio_is_twenty() {
        assert_eq!(wize(2400.0).tx_current_ma / RadioProfile::ble5().tx_current_ma, 20.0);
    }

    #[test]
    fn path_loss_reference_and_hand_value() {
        let mut p = quiet(LinkModelParams::ble5());
        let mut rng = RngStream::new(1, "radio-loss");
        assert_eq!(path_loss_db(&p, 1.0, &mut rng).unwrap(), p.reference_loss_db);
        p.path_loss_exponent = 2.7;
        p.reference_loss_db = 40.0;
        assert!((path_loss_db(&p, 100.0, &mut rng).unwrap() - 94.0).abs() < 1e-12);
        assert!(path_loss_db(&p, 0.0, &mut rng).is_err());
        assert!(path_loss_db(&p, -3.0, &mut rng).is_err());
    }

    #[test]
    fn ble_margin_closes_by_400_m() {
        let profile = RadioProfile::ble5();
        let params = quiet(LinkModelParams::ble5());
        for d in [400.0001, 401.0, 450.0, 1000.0] {
            let m = link_margin_db(&profile, &params, &Reception::at_rest(d, SimTime::ZERO)).unwrap();
            assert!(m <= 0.0, "margin {m} at {d} m");
        }
        assert!(effective_range(&profile, &params, 0.0, 108) <= 400.0);
    }

    #[test]
    fn disruption_forces_loss() {
        let profile = RadioProfile::ble5();
        let mut params = quiet(LinkModelParams::ble5());
        params.disruption_windows.push(DisruptionWindow { start: 10.0, end: 20.0 });
        let mut rng = RngStream::new(1, "radio-loss");
        let inside = Reception::at_rest(1.0, SimTime::from_secs(15.0));
        assert!(!reception_decision(&profile, &params, &inside, &mut rng).unwrap());
        assert_eq!(reception_probability(&profile, &params, &inside).unwrap(), 0.0);
        let outside = Reception::at_rest(1.0, SimTime::from_secs(25.0));
        assert!(reception_decision(&profile, &params, &outside, &mut rng).unwrap());
    }

    #[test]
    fn close_range_without_shadowing_is_received() {
        let profile = wize(2400.0);
        let params = quiet(LinkModelParams::wize());
        let mut rng = RngStream::new(3, "radio-loss");
        assert!(reception_decision(&profile, &params, &Reception::at_rest(20.0, SimTime::ZERO), &mut rng).unwrap());
    }

    #[test]
    fn ble_latency_without_jitter_is_constant() {
        let profile = RadioProfile::ble5();
        let mut lat = LatencyModelParams::ble5();
        lat.rendezvous_jitter = 0.0;
        let mut rng = RngStream::new(5, "ble-latency");
        let expected = airtime(&profile, 108) + lat.fixed_overhead + lat.rendezvous_mean;
        for _ in 0..10 {
            let l = end_to_end_latency(&profile, &lat, 108, &mut rng).unwrap();
            assert!((l - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn ble_latency_stays_in_jitter_band() {
        let profile = RadioProfile::ble5();
        let lat = LatencyModelParams::ble5();
        let mut rng = RngStream::new(5, "ble-latency");
        let base = airtime(&profile, 108) + lat.fixed_overhead + lat.rendezvous_mean;
        for _ in 0..1000 {
            let l = end_to_end_latency(&profile, &lat, 108, &mut rng).unwrap();
            assert!((l - base).abs() <= lat.rendezvous_jitter);
        }
    }

    #[test]
    fn wize_latency_is_airtime_plus_overhead() {
        let mut rng = RngStream::new(5, "ble-latency");
        let l = end_to_end_latency(&wize(2400.0), &LatencyModelParams::wize(), 108, &mut rng).unwrap();
        assert!((l - 0.385).abs() < 1e-12);
        let err = end_to_end_latency(&wize(2400.0), &LatencyModelParams::ble5(), 108, &mut rng);
        assert!(matches!(err, Err(RadioError::TechnologyMismatch { .. })));
    }

    #[test]
    fn step_threshold_matches_effective_range() {
        let profile = wize(2400.0);
        let params = quiet(LinkModelParams::wize());
        let r = effective_range(&profile, &params, 0.0, 108);
        let p = |d| reception_probability(&profile, &params, &Reception::at_rest(d, SimTime::ZERO)).unwrap();
        assert_eq!(p(r * 0.999), 1.0);
        assert_eq!(p(r * 1.001), 0.0);
    }

    #[test]
    fn monte_carlo_matches_gaussian_tail() {
        let profile = wize(2400.0);
        let params = LinkModelParams::wize();
        let mut rng = RngStream::new(11, "radio-loss");
        for d in [150.0, 300.0, 420.0, 600.0] {
            let rx = Reception::at_rest(d, SimTime::ZERO);
            let n = 100_000;
            let hits = (0..n)
                .filter(|_| reception_decision(&profile, &params, &rx, &mut rng).unwrap())
                .count();
            let p = reception_probability(&profile, &params, &rx).unwrap();
            assert!(
                (hits as f64 / n as f64 - p).abs() < 0.01,
                "d={d} mc={} closed={p}",
                hits as f64 / n as f64
            );
        }
    }

    proptest! {
        #[test]
        fn airtime_decreases_with_rate(bytes in 0usize..2000, preamble in 0.0f64..512.0) {
            let mut slow = wize(2400.0);
            let mut fast = wize(6400.0);
            slow.preamble_overhead_bits = preamble;
            fast.preamble_overhead_bits = preamble;
            let (a, b) = (airtime(&slow, bytes), airtime(&fast, bytes));
            prop_assume!(a > 0.0);
            prop_assert!(a > b);
            let ratio = a / b;
            prop_assert!(ratio > 2.0 && ratio <= 6400.0 / 2400.0 + 1e-12);
        }

        #[test]
        fn worse_sensitivity_never_extends_range(
            delta in 0.0f64..20.0,
            speed in 0.0f64..40.0,
            n in 1.6f64..5.0,
        ) {
            let mut params = LinkModelParams::wize();
            params.path_loss_exponent = n;
            let base = wize(2400.0);
            let mut deaf = base.clone();
            deaf.rx_sensitivity_dbm += delta;
            prop_assert!(effective_range(&deaf, &params, speed, 108) <= effective_range(&base, &params, speed, 108));
        }
    }
}
