//! Scenario files.
//!
//! One `key = value` per line; `#` starts a comment. A value is a scalar or a
//! bracketed list such as `[10, 20, 30]`; lists on the sweep keys expand into
//! a grid. Omitted keys take the defaults printed by `hopper --list-defaults`.
//!
//! ```text
//! protocol = hopper
//! regime = long
//! cells_per_direction = [10, 50, 150]
//! n_applications = [10, 30]
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hopper_core::hopper::SlaveLookup;
use hopper_core::network::build_chain;
use hopper_core::{ConfigError, Fidelity, PhysicalParams, Protocol};
use thiserror::Error;

/// Every key a scenario file may contain.
pub const KEYS: &[&str] = &[
    "protocol",
    "regime",
    "n_repeaters",
    "link_length_m",
    "cells_per_node",
    "cells_per_direction",
    "n_applications",
    "p_le",
    "gamma",
    "f_init",
    "epsg_rate",
    "bsm_success_prob",
    "bsm_duration",
    "xz_duration",
    "signal_speed",
    "composite_decay_factor",
    "duration_s",
    "n_replications",
    "base_seed",
    "hold_time",
    "slave_lookup",
];

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` already set on line {first}")]
    Duplicate { line: usize, key: String, first: usize },
    #[error("line {line}: invalid `{key}`: {reason}")]
    Invalid { line: usize, key: String, reason: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{}{source}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Scenario {
        line: Option<usize>,
        #[source]
        source: ConfigError,
    },
}

/// Distance and decay presets of the two evaluated regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// 5000 km links, 1 Hz dephasing.
    Long,
    /// 5 m links, 0.01 Hz dephasing.
    Short,
}

impl Regime {
    pub fn link_length_m(self) -> f64 {
        match self {
            Regime::Long => 5.0e6,
            Regime::Short => 5.0,
        }
    }

    pub fn gamma(self) -> f64 {
        match self {
            Regime::Long => 1.0,
            Regime::Short => 0.01,
        }
    }
}

/// How the memory-size axis is given.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellSweep {
    /// Cells per node; a repeater splits them between its two links.
    PerNode(Vec<usize>),
    /// Cells per link direction; a repeater gets twice as many.
    PerDirection(Vec<usize>),
}

impl CellSweep {
    pub fn values(&self) -> &[usize] {
        match self {
            CellSweep::PerNode(v) | CellSweep::PerDirection(v) => v,
        }
    }

    /// `cells_per_node` argument of the chain builder for one sweep value.
    pub fn cells_per_node(&self, value: usize, n_repeaters: usize) -> usize {
        match self {
            CellSweep::PerNode(_) => value,
            CellSweep::PerDirection(_) if n_repeaters == 0 => value,
            CellSweep::PerDirection(_) => 2 * value,
        }
    }
}

pub const DEFAULT_N_REPEATERS: usize = 3;
pub const DEFAULT_DURATION_S: f64 = 60.0;
pub const DEFAULT_REPLICATIONS: usize = 10;
pub const DEFAULT_BASE_SEED: u64 = 1;
pub const DEFAULT_CELLS_PER_DIRECTION: usize = 50;

/// Grid used by the slotted protocol when no `p_le` is given: 0.05 to 0.95.
pub fn default_p_le_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub n_repeaters: Vec<usize>,
    pub link_length_m: f64,
    pub cells: CellSweep,
    /// Ignored by the slotted protocol.
    pub n_applications: Vec<usize>,
    /// Empty for HOPPER.
    pub p_le: Vec<f64>,
    pub params: PhysicalParams,
    pub duration_s: f64,
    pub n_replications: usize,
    pub base_seed: u64,
    pub hold_time: f64,
    pub slave_lookup: SlaveLookup,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_config(&text)
}

struct Entry<'a> {
    line: usize,
    value: &'a str,
}

struct Entries<'a>(BTreeMap<&'a str, Entry<'a>>);

impl<'a> Entries<'a> {
    fn line(&self, key: &str) -> Option<usize> {
        self.0.get(key).map(|e| e.line)
    }

    fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    fn invalid(&self, key: &str, reason: impl Into<String>) -> ConfigFileError {
        ConfigFileError::Invalid {
            line: self.line(key).unwrap_or(0),
            key: key.to_owned(),
            reason: reason.into(),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigFileError> {
        let Some(e) = self.0.get(key) else {
            return Ok(None);
        };
        let items: Vec<&str> = match e.value.strip_prefix('[') {
            Some(rest) => {
                let inner = rest
                    .strip_suffix(']')
                    .ok_or_else(|| self.invalid(key, "list is missing its closing `]`"))?;
                inner.split(',').map(str::trim).collect()
            }
            None => vec![e.value],
        };
        if items.iter().any(|s| s.is_empty()) {
            return Err(self.invalid(key, "empty list element"));
        }
        items
            .iter()
            .map(|s| {
                s.parse::<T>()
                    .map_err(|_| self.invalid(key, format!("cannot parse `{s}`")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn scalar<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigFileError> {
        match self.list::<T>(key)? {
            None => Ok(None),
            Some(mut v) if v.len() == 1 => Ok(v.pop()),
            Some(_) => Err(self.invalid(key, "expects a single value, not a list")),
        }
    }

    fn word(&self, key: &str) -> Option<&'a str> {
        self.0.get(key).map(|e| e.value)
    }
}

fn tokenize(text: &str) -> Result<Entries<'_>, ConfigFileError> {
    let mut map: BTreeMap<&str, Entry<'_>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigFileError::Syntax {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigFileError::Syntax {
                line,
                message: "empty key or value".into(),
            });
        }
        let Some(&key) = KEYS.iter().find(|k| **k == key) else {
            return Err(ConfigFileError::UnknownKey {
                line,
                key: key.to_owned(),
            });
        };
        if let Some(first) = map.get(key) {
            return Err(ConfigFileError::Duplicate {
                line,
                key: key.to_owned(),
                first: first.line,
            });
        }
        map.insert(key, Entry { line, value });
    }
    Ok(Entries(map))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigFileError> {
    let e = tokenize(text)?;

    let protocol = match e.word("protocol") {
        None => return Err(ConfigFileError::Missing("protocol")),
        Some("hopper") => Protocol::Hopper,
        Some("sync") => Protocol::Sync,
        Some(other) => return Err(e.invalid("protocol", format!("`{other}` is not hopper or sync"))),
    };
    let regime = match e.word("regime") {
        None | Some("long") => Regime::Long,
        Some("short") => Regime::Short,
        Some(other) => return Err(e.invalid("regime", format!("`{other}` is not long or short"))),
    };

    let defaults = PhysicalParams::default();
    let params = PhysicalParams {
        gamma: e.scalar("gamma")?.unwrap_or(regime.gamma()),
        f_init: match e.scalar::<f64>("f_init")? {
            None => defaults.f_init,
            Some(f) if (0.0..=1.0).contains(&f) => Fidelity::new(f),
            Some(f) => return Err(e.invalid("f_init", format!("{f} is not a fidelity in [0, 1]"))),
        },
        epsg_rate: e.scalar("epsg_rate")?.unwrap_or(defaults.epsg_rate),
        bsm_success_prob: e.scalar("bsm_success_prob")?.unwrap_or(defaults.bsm_success_prob),
        bsm_duration: e.scalar("bsm_duration")?.unwrap_or(defaults.bsm_duration),
        xz_duration: e.scalar("xz_duration")?.unwrap_or(defaults.xz_duration),
        signal_speed: e.scalar("signal_speed")?.unwrap_or(defaults.signal_speed),
        composite_decay_factor: e
            .scalar("composite_decay_factor")?
            .unwrap_or(defaults.composite_decay_factor),
    };
    params.validate().map_err(|source| {
        let line = match &source {
            ConfigError::OutOfRange { name, .. } => e.line(name),
            _ => None,
        };
        ConfigFileError::Scenario { line, source }
    })?;

    let link_length_m = e.scalar("link_length_m")?.unwrap_or(regime.link_length_m());
    if !(link_length_m.is_finite() && link_length_m >= 0.0) {
        return Err(e.invalid("link_length_m", "must be a non-negative length"));
    }

    let n_repeaters = e.list("n_repeaters")?.unwrap_or_else(|| vec![DEFAULT_N_REPEATERS]);
    let cells = match (e.list("cells_per_node")?, e.list("cells_per_direction")?) {
        (Some(v), None) => CellSweep::PerNode(v),
        (None, Some(v)) => CellSweep::PerDirection(v),
        (None, None) => CellSweep::PerDirection(vec![DEFAULT_CELLS_PER_DIRECTION]),
        (Some(_), Some(_)) => {
            return Err(e.invalid(
                "cells_per_direction",
                "set either cells_per_node or cells_per_direction",
            ))
        }
    };
    let cells_key = match cells {
        CellSweep::PerNode(_) => "cells_per_node",
        CellSweep::PerDirection(_) => "cells_per_direction",
    };
    if cells.values().contains(&0) {
        return Err(e.invalid(cells_key, "memory sizes must be positive"));
    }

    let only_for = |key: &str, protocol: &str| -> Result<(), ConfigFileError> {
        if e.has(key) {
            Err(e.invalid(key, format!("only applies to protocol = {protocol}")))
        } else {
            Ok(())
        }
    };
    let (n_applications, p_le) = match protocol {
        Protocol::Hopper => {
            only_for("p_le", "sync")?;
            (e.list("n_applications")?.unwrap_or_else(|| vec![1]), Vec::new())
        }
        Protocol::Sync => {
            only_for("n_applications", "hopper")?;
            only_for("hold_time", "hopper")?;
            only_for("slave_lookup", "hopper")?;
            let grid = e.list::<f64>("p_le")?.unwrap_or_else(default_p_le_grid);
            if let Some(p) = grid.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
                return Err(e.invalid("p_le", format!("{p} is not strictly between 0 and 1")));
            }
            (vec![0], grid)
        }
    };

    let duration_s = e.scalar("duration_s")?.unwrap_or(DEFAULT_DURATION_S);
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(e.invalid("duration_s", "must be positive"));
    }
    let n_replications = e.scalar("n_replications")?.unwrap_or(DEFAULT_REPLICATIONS);
    if n_replications == 0 {
        return Err(e.invalid("n_replications", "at least one replication is needed"));
    }
    let hold_time: f64 = e.scalar("hold_time")?.unwrap_or(0.0);
    if !(hold_time.is_finite() && hold_time >= 0.0) {
        return Err(e.invalid("hold_time", "must be non-negative"));
    }
    let slave_lookup = match e.word("slave_lookup") {
        None | Some("pair-id") => SlaveLookup::PairId,
        Some("cell-index") => SlaveLookup::CellIndex,
        Some(other) => return Err(e.invalid("slave_lookup", format!("`{other}` is not pair-id or cell-index"))),
    };

    for &n in &n_repeaters {
        for &c in cells.values() {
            build_chain(n, link_length_m, cells.cells_per_node(c, n), &params).map_err(|source| {
                ConfigFileError::Scenario {
                    line: e.line(cells_key),
                    source,
                }
            })?;
        }
    }

    Ok(ExperimentConfig {
        protocol,
        n_repeaters,
        link_length_m,
        cells,
        n_applications,
        p_le,
        params,
        duration_s,
        n_replications,
        base_seed: e.scalar("base_seed")?.unwrap_or(DEFAULT_BASE_SEED),
        hold_time,
        slave_lookup,
    })
}

/// Annotated listing of every key with its default, itself a valid file.
pub fn default_config_text() -> String {
    let p = PhysicalParams::default();
    let grid: Vec<String> = default_p_le_grid().iter().map(f64::to_string).collect();
    let mut s = String::new();
    let mut line = |key: &str, value: String, note: &str| {
        let kv = format!("{key} = {value}");
        if note.is_empty() {
            let _ = writeln!(s, "{kv}");
        } else {
            let _ = writeln!(s, "{kv:<31} # {note}");
        }
    };
    line("protocol", "hopper".into(), "required: hopper | sync");
    line("regime", "long".into(), "long: 5e6 m, gamma 1 | short: 5 m, gamma 0.01");
    line("n_repeaters", DEFAULT_N_REPEATERS.to_string(), "list allowed");
    line("link_length_m", Regime::Long.link_length_m().to_string(), "from regime");
    line(
        "cells_per_direction",
        DEFAULT_CELLS_PER_DIRECTION.to_string(),
        "or cells_per_node; list allowed",
    );
    line("n_applications", "1".into(), "hopper only; list allowed");
    line("# p_le", format!("[{}]", grid.join(", ")), "sync only");
    line("gamma", Regime::Long.gamma().to_string(), "Hz, from regime");
    line("f_init", p.f_init.value().to_string(), "");
    line("epsg_rate", p.epsg_rate.to_string(), "pairs/s per link");
    line("bsm_success_prob", p.bsm_success_prob.to_string(), "");
    line("bsm_duration", p.bsm_duration.to_string(), "s");
    line("xz_duration", p.xz_duration.to_string(), "s");
    line("signal_speed", p.signal_speed.to_string(), "m/s; 2e8 for fiber");
    line(
        "composite_decay_factor",
        p.composite_decay_factor.to_string(),
        "decay multiplier after a swap",
    );
    line("duration_s", DEFAULT_DURATION_S.to_string(), "");
    line("n_replications", DEFAULT_REPLICATIONS.to_string(), "");
    line("base_seed", DEFAULT_BASE_SEED.to_string(), "");
    line("hold_time", "0".into(), "s an application keeps each ebit; hopper only");
    line("slave_lookup", "pair-id".into(), "pair-id | cell-index; hopper only");
    s
}
