//! Flat `key = value` text files with dotted keys.
//!
//! Blank lines and lines starting with `#` are ignored. Every other line must
//! contain `=`; the key is trimmed and the value is everything after the first
//! `=`, trimmed. Keys may appear once.
//!
//! Scenario keys:
//!
//! | key | value | default |
//! |---|---|---|
//! | `name` | free text | generated from the cell |
//! | `technology` | `BLE5` or `WIZE` | required |
//! | `data_rate` | bit/s; `2400` or `6400` for Wize | required for Wize |
//! | `speed` | km/h | `30` |
//! | `seed` | integer | `1` |
//! | `runs` | repetitions | `1` |
//! | `beacon_period` | seconds | `1` |
//! | `frame_bytes` | bytes | `108` |
//! | `drain` | seconds simulated after the vehicle is back | `5` |
//! | `geometry.point_a`, `geometry.point_b` | `x, y` in meters | `0, 0` and `1000, 0` |
//! | `geometry.rsu_along` | meters from A | half the road |
//! | `geometry.rsu_offset` | meters off the road axis | `10` |
//! | `disruption.windows` | `start..end` seconds, comma separated | none |
//! | `mesh.rsu_group`, `mesh.mobile_group` | BLE mesh group ids | `1` |
//! | `mobile.data_rate` | rate the vehicle listens on (Wize) | the RSU's |
//! | `gateway.positions` | `x, y` points separated by `;` | one gateway 10 m beside A |
//! | `gateway.range` | meters | `50` |
//! | `gateway.sync_period` | seconds | `1` |
//! | `gateway.ttl` | seconds | `300` |
//! | `gateway.replication_factor` | gateways per DHT key | `2` |
//! | `profile` | path to a profile file, relative to the scenario | built-in calibration |
//! | `radio.*`, `link.*`, `latency.*` | override the resolved radio setup | from the profile |
//!
//! Profile files carry `technology` plus the `radio.*`, `link.*` and
//! `latency.*` keys. In a profile, `radio.rx_sensitivity_dbm` is the GFSK
//! figure for Wize and `radio.fourgfsk_penalty_db` is added at 6.4 kbps; in a
//! scenario, `radio.*` keys override the already resolved values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use oecsim_core::beacon::RadioSetup;
use oecsim_core::mobility::Point;
use oecsim_core::radio::{DisruptionWindow, LatencyModelParams, LinkModelParams, Modulation, RadioProfile, Technology};
use oecsim_core::scenario::ScenarioError;
use oecsim_core::Scenario;

pub const BLE5_PROFILE: &str = include_str!("../calibration/ble5.profile");
pub const WIZE_PROFILE: &str = include_str!("../calibration/wize.profile");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    BadValue { line: usize, key: String, message: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error(transparent)]
    Invalid(#[from] ScenarioError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    /// Field or key the error is about, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key, .. }
            | ConfigError::DuplicateKey { key, .. }
            | ConfigError::BadValue { key, .. } => Some(key),
            ConfigError::Missing(key) => Some(key),
            ConfigError::Invalid(e) => Some(e.field),
            _ => None,
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Syntax { line, .. }
            | ConfigError::UnknownKey { line, .. }
            | ConfigError::DuplicateKey { line, .. }
            | ConfigError::BadValue { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub value: String,
    /// 1-based; 0 for entries synthesized by the matrix expander.
    pub line: usize,
}

/// Parsed key-value file, keys in sorted order.
pub type Entries = BTreeMap<String, Entry>;

pub fn parse_entries(text: &str) -> Result<Entries, ConfigError> {
    let mut out = Entries::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, got `{trimmed}`"),
            });
        };
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax {
                line,
                message: format!("bad key `{key}`"),
            });
        }
        if out.contains_key(key) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        out.insert(
            key.to_string(),
            Entry {
                value: value.trim().to_string(),
                line,
            },
        );
    }
    Ok(out)
}

const SCENARIO_KEYS: &[&str] = &[
    "name",
    "technology",
    "data_rate",
    "speed",
    "seed",
    "runs",
    "beacon_period",
    "frame_bytes",
    "drain",
    "geometry.point_a",
    "geometry.point_b",
    "geometry.rsu_along",
    "geometry.rsu_offset",
    "disruption.windows",
    "mesh.rsu_group",
    "mesh.mobile_group",
    "mobile.data_rate",
    "gateway.positions",
    "gateway.range",
    "gateway.sync_period",
    "gateway.ttl",
    "gateway.replication_factor",
    "profile",
];

const RADIO_KEYS: &[&str] = &[
    "radio.carrier_frequency_hz",
    "radio.data_rate_bps",
    "radio.tx_power_dbm",
    "radio.rx_sensitivity_dbm",
    "radio.nominal_range_m",
    "radio.modulation",
    "radio.tx_current_ma",
    "radio.preamble_bits",
    "link.path_loss_exponent",
    "link.reference_loss_db",
    "link.shadowing_sigma_db",
    "link.decorrelation_db",
    "latency.fixed_overhead_s",
    "latency.rendezvous_mean_s",
    "latency.rendezvous_jitter_s",
];

const PROFILE_ONLY_KEYS: &[&str] = &["technology", "radio.fourgfsk_penalty_db"];

/// Typed access to an [`Entries`] map with line-numbered errors.
struct Reader<'a> {
    entries: &'a Entries,
}

impl<'a> Reader<'a> {
    fn raw(&self, key: &str) -> Option<&'a Entry> {
        self.entries.get(key)
    }

    fn bad(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            line: self.raw(key).map_or(0, |e| e.line),
            key: key.to_string(),
            message: message.into(),
        }
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| self.bad(key, err.to_string())),
        }
    }

    fn set<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<(), ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.parse(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn point(&self, key: &str) -> Result<Option<Point>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => parse_point(&e.value).map(Some).map_err(|m| self.bad(key, m)),
        }
    }
}

fn parse_point(s: &str) -> Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected `x, y`, got `{s}`"))?;
    let x: f64 = x.trim().parse().map_err(|e| format!("{e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("{e}"))?;
    Ok(Point::new(x, y))
}

fn parse_windows(s: &str) -> Result<Vec<DisruptionWindow>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .map(|w| {
            let (a, b) = w.split_once("..").ok_or_else(|| format!("expected `start..end`, got `{w}`"))?;
            Ok(DisruptionWindow {
                start: a.trim().parse().map_err(|e| format!("{e}"))?,
                end: b.trim().parse().map_err(|e| format!("{e}"))?,
            })
        })
        .collect()
}

fn parse_points(s: &str) -> Result<Vec<Point>, String> {
    s.split(';').map(str::trim).filter(|p| !p.is_empty()).map(parse_point).collect()
}

/// Rate-independent radio description read from a profile file.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub technology: Technology,
    /// Profile at the technology's base rate (GFSK for Wize).
    pub base: RadioProfile,
    pub fourgfsk_penalty_db: f64,
    pub link: LinkModelParams,
    pub latency: LatencyModelParams,
}

impl Profile {
    pub fn builtin(technology: Technology) -> Profile {
        let text = match technology {
            Technology::Ble5 => BLE5_PROFILE,
            Technology::Wize => WIZE_PROFILE,
        };
        parse_profile(text).expect("built-in profile parses")
    }

    /// Radio setup at `data_rate_bps`. BLE has a single rate.
    pub fn setup(&self, data_rate_bps: Option<f64>) -> Result<RadioSetup, String> {
        let mut profile = self.base.clone();
        match self.technology {
            Technology::Ble5 => {
                if let Some(r) = data_rate_bps {
                    if r != profile.data_rate_bps {
                        return Err(format!("BLE5 runs at {} bit/s", profile.data_rate_bps));
                    }
                }
            }
            Technology::Wize => {
                let rate = data_rate_bps.ok_or("Wize needs a data rate")?;
                if rate == 2400.0 {
                    profile.modulation = Modulation::Gfsk;
                } else if rate == 6400.0 {
                    profile.modulation = Modulation::FourGfsk;
                    profile.rx_sensitivity_dbm += self.fourgfsk_penalty_db;
                } else {
                    return Err(format!("Wize data rate must be 2400 or 6400, got {rate}"));
                }
                profile.data_rate_bps = rate;
            }
        }
        Ok(RadioSetup {
            profile,
            link: self.link.clone(),
            latency: self.latency.clone(),
        })
    }
}

fn apply_radio(r: &Reader, setup: &mut RadioSetup) -> Result<(), ConfigError> {
    let p = &mut setup.profile;
    r.set("radio.carrier_frequency_hz", &mut p.carrier_frequency_hz)?;
    r.set("radio.data_rate_bps", &mut p.data_rate_bps)?;
    r.set("radio.tx_power_dbm", &mut p.tx_power_dbm)?;
    r.set("radio.rx_sensitivity_dbm", &mut p.rx_sensitivity_dbm)?;
    r.set("radio.nominal_range_m", &mut p.nominal_range_m)?;
    r.set("radio.modulation", &mut p.modulation)?;
    r.set("radio.tx_current_ma", &mut p.tx_current_ma)?;
    r.set("radio.preamble_bits", &mut p.preamble_overhead_bits)?;
    let l = &mut setup.link;
    r.set("link.path_loss_exponent", &mut l.path_loss_exponent)?;
    r.set("link.reference_loss_db", &mut l.reference_loss_db)?;
    r.set("link.shadowing_sigma_db", &mut l.shadowing_sigma_db)?;
    r.set("link.decorrelation_db", &mut l.decorrelation_db)?;
    let t = &mut setup.latency;
    r.set("latency.fixed_overhead_s", &mut t.fixed_overhead)?;
    r.set("latency.rendezvous_mean_s", &mut t.rendezvous_mean)?;
    r.set("latency.rendezvous_jitter_s", &mut t.rendezvous_jitter)?;
    Ok(())
}

pub fn parse_profile(text: &str) -> Result<Profile, ConfigError> {
    let entries = parse_entries(text)?;
    for (key, e) in &entries {
        if !(RADIO_KEYS.contains(&key.as_str()) || PROFILE_ONLY_KEYS.contains(&key.as_str())) {
            return Err(ConfigError::UnknownKey {
                line: e.line,
                key: key.clone(),
            });
        }
    }
    let r = Reader { entries: &entries };
    let technology: Technology = r.parse("technology")?.ok_or(ConfigError::Missing("technology"))?;
    let base = match technology {
        Technology::Ble5 => RadioProfile::ble5(),
        Technology::Wize => RadioProfile::wize(2400.0, 0.0).expect("2400 is a Wize rate"),
    };
    let mut setup = RadioSetup {
        profile: base,
        link: LinkModelParams::for_technology(technology),
        latency: LatencyModelParams::for_technology(technology),
    };
    apply_radio(&r, &mut setup)?;
    let mut fourgfsk_penalty_db = 0.0;
    r.set("radio.fourgfsk_penalty_db", &mut fourgfsk_penalty_db)?;
    Ok(Profile {
        technology,
        base: setup.profile,
        fourgfsk_penalty_db,
        link: setup.link,
        latency: setup.latency,
    })
}

pub fn load_profile(path: &Path) -> Result<Profile, ConfigError> {
    parse_profile(&read(path)?)
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Builds and validates a scenario. `base_dir` resolves a relative `profile`
/// path; without it a `profile` key is an error.
pub fn scenario_from_entries(entries: &Entries, base_dir: Option<&Path>) -> Result<Scenario, ConfigError> {
    for (key, e) in entries {
        if !(SCENARIO_KEYS.contains(&key.as_str()) || RADIO_KEYS.contains(&key.as_str())) {
            return Err(ConfigError::UnknownKey {
                line: e.line,
                key: key.clone(),
            });
        }
    }
    let r = Reader { entries };
    let technology: Technology = r.parse("technology")?.ok_or(ConfigError::Missing("technology"))?;
    let profile = match r.raw("profile") {
        None => Profile::builtin(technology),
        Some(e) => {
            let dir = base_dir.ok_or_else(|| r.bad("profile", "no directory to resolve the path against"))?;
            let p = load_profile(&dir.join(&e.value))?;
            if p.technology != technology {
                return Err(r.bad("profile", format!("profile is for {}", p.technology)));
            }
            p
        }
    };
    let data_rate: Option<f64> = r.parse("data_rate")?;
    if technology == Technology::Wize && data_rate.is_none() {
        return Err(ConfigError::Missing("data_rate"));
    }
    let mut radio = profile.setup(data_rate).map_err(|m| r.bad("data_rate", m))?;
    apply_radio(&r, &mut radio)?;

    // start from the core defaults, then overwrite
    let mut s = Scenario::with_defaults(technology, 2400.0).expect("2400 is a Wize rate");
    s.radio = radio;
    r.set("name", &mut s.name)?;
    r.set("speed", &mut s.speed_kmh)?;
    r.set("seed", &mut s.seed)?;
    r.set("runs", &mut s.runs)?;
    r.set("beacon_period", &mut s.beacon_period)?;
    r.set("frame_bytes", &mut s.frame_bytes)?;
    r.set("drain", &mut s.drain)?;

    if let Some(a) = r.point("geometry.point_a")? {
        s.geometry.point_a = a;
    }
    if let Some(b) = r.point("geometry.point_b")? {
        s.geometry.point_b = b;
    }
    s.geometry.rsu_along = s.geometry.road_length() / 2.0;
    r.set("geometry.rsu_along", &mut s.geometry.rsu_along)?;
    r.set("geometry.rsu_offset", &mut s.geometry.rsu_offset)?;
    if let Some(e) = r.raw("disruption.windows") {
        s.radio.link.disruption_windows = parse_windows(&e.value).map_err(|m| r.bad("disruption.windows", m))?;
    }

    r.set("mesh.rsu_group", &mut s.rsu_group)?;
    r.set("mesh.mobile_group", &mut s.mobile_group)?;
    s.mobile_data_rate = r.parse("mobile.data_rate")?;

    let a = s.geometry.point_a;
    s.gateways = vec![Point::new(a.x, a.y - 10.0)];
    if let Some(e) = r.raw("gateway.positions") {
        s.gateways = parse_points(&e.value).map_err(|m| r.bad("gateway.positions", m))?;
    }
    r.set("gateway.range", &mut s.gateway_range)?;
    r.set("gateway.sync_period", &mut s.sync_period)?;
    r.set("gateway.ttl", &mut s.ttl)?;
    r.set("gateway.replication_factor", &mut s.replication_factor)?;

    s.validate()?;
    Ok(s)
}

pub fn parse_scenario(text: &str, base_dir: Option<&Path>) -> Result<Scenario, ConfigError> {
    scenario_from_entries(&parse_entries(text)?, base_dir)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    parse_scenario(&read(path)?, path.parent())
}

fn point(p: Point) -> String {
    format!("{}, {}", p.x, p.y)
}

/// Writes every key so that parsing the text gives back `s` exactly.
pub fn scenario_to_text(s: &Scenario) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("name", s.name.clone());
    kv("technology", s.technology.to_string());
    kv("data_rate", s.data_rate_bps().to_string());
    kv("speed", s.speed_kmh.to_string());
    kv("seed", s.seed.to_string());
    kv("runs", s.runs.to_string());
    kv("beacon_period", s.beacon_period.to_string());
    kv("frame_bytes", s.frame_bytes.to_string());
    kv("drain", s.drain.to_string());
    kv("geometry.point_a", point(s.geometry.point_a));
    kv("geometry.point_b", point(s.geometry.point_b));
    kv("geometry.rsu_along", s.geometry.rsu_along.to_string());
    kv("geometry.rsu_offset", s.geometry.rsu_offset.to_string());
    let windows: Vec<String> = s
        .radio
        .link
        .disruption_windows
        .iter()
        .map(|w| format!("{}..{}", w.start, w.end))
        .collect();
    kv("disruption.windows", windows.join(", "));
    kv("mesh.rsu_group", s.rsu_group.to_string());
    kv("mesh.mobile_group", s.mobile_group.to_string());
    if let Some(r) = s.mobile_data_rate {
        kv("mobile.data_rate", r.to_string());
    }
    let gws: Vec<String> = s.gateways.iter().map(|p| point(*p)).collect();
    kv("gateway.positions", gws.join("; "));
    kv("gateway.range", s.gateway_range.to_string());
    kv("gateway.sync_period", s.sync_period.to_string());
    kv("gateway.ttl", s.ttl.to_string());
    kv("gateway.replication_factor", s.replication_factor.to_string());
    let p = &s.radio.profile;
    kv("radio.carrier_frequency_hz", p.carrier_frequency_hz.to_string());
    kv("radio.tx_power_dbm", p.tx_power_dbm.to_string());
    kv("radio.rx_sensitivity_dbm", p.rx_sensitivity_dbm.to_string());
    kv("radio.nominal_range_m", p.nominal_range_m.to_string());
    kv("radio.modulation", p.modulation.to_string());
    kv("radio.tx_current_ma", p.tx_current_ma.to_string());
    kv("radio.preamble_bits", p.preamble_overhead_bits.to_string());
    let l = &s.radio.link;
    kv("link.path_loss_exponent", l.path_loss_exponent.to_string());
    kv("link.reference_loss_db", l.reference_loss_db.to_string());
    kv("link.shadowing_sigma_db", l.shadowing_sigma_db.to_string());
    kv("link.decorrelation_db", l.decorrelation_db.to_string());
    let t = &s.radio.latency;
    kv("latency.fixed_overhead_s", t.fixed_overhead.to_string());
    kv("latency.rendezvous_mean_s", t.rendezvous_mean.to_string());
    kv("latency.rendezvous_jitter_s", t.rendezvous_jitter.to_string());
    out
}
