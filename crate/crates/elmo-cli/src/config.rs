//! Flat, line-oriented scenario configuration: `key = value` lines inside
//! `[section]` blocks, `#` comments. Unknown sections and keys are rejected
//! with the offending line number.

use elmo::experiment::ScenarioSpec;
use elmo::topology::TopologySpec;
use elmo::workload::GroupSizeDist;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, message: message.into() })
}

/// Raw parsed keys: (section, key) -> (line, value).
pub struct RawConfig {
    entries: BTreeMap<(String, String), (usize, String)>,
    consumed: std::cell::RefCell<Vec<(String, String)>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let Some(name) = name.strip_suffix(']') else {
                    return err(line, "unterminated section header");
                };
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return err(line, format!("expected `key = value`, got `{content}`"));
            };
            if section.is_empty() {
                return err(line, "key outside of any [section]");
            }
            let key = key.trim().to_string();
            if entries
                .insert((section.clone(), key.clone()), (line, value.trim().to_string()))
                .is_some()
            {
                return err(line, format!("duplicate key `{key}` in [{section}]"));
            }
        }
        Ok(RawConfig { entries, consumed: Default::default() })
    }

    pub(crate) fn get(&self, section: &str, key: &str) -> Option<(usize, &str)> {
        self.consumed.borrow_mut().push((section.to_string(), key.to_string()));
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .map(|(l, v)| (*l, v.as_str()))
    }

    pub(crate) fn parse_as<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
        default: T,
    ) -> Result<T, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse()
                .map_err(|_| ConfigError { line, message: format!("invalid value for {key}: `{v}`") }),
        }
    }

    /// Every key must have been consumed by a known reader.
    pub(crate) fn reject_unknown(&self) -> Result<(), ConfigError> {
        let consumed = self.consumed.borrow();
        for ((section, key), (line, _)) in &self.entries {
            if !consumed.iter().any(|(s, k)| s == section && k == key) {
                return err(*line, format!("unknown key `{key}` in [{section}]"));
            }
        }
        Ok(())
    }
}

/// Everything a scenario run needs beyond the library-level spec.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub spec: ScenarioSpec,
    pub churn_events: u64,
    pub churn_events_per_second: f64,
    pub churn_seed: u64,
    pub fail_spines: Vec<u16>,
    pub fail_cores: Vec<u16>,
    pub output_dir: String,
}

pub fn load(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError { line: 0, message: format!("cannot read {path:?}: {e}") })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw = RawConfig::parse(text)?;

    let topology = TopologySpec {
        pods: raw.parse_as("topology", "pods", 12u16)?,
        spines_per_pod: raw.parse_as("topology", "spines_per_pod", 4u16)?,
        leaves_per_pod: raw.parse_as("topology", "leaves_per_pod", 48u16)?,
        hosts_per_leaf: raw.parse_as("topology", "hosts_per_leaf", 48u16)?,
        cores: raw.parse_as("topology", "cores", 4u16)?,
    };

    let dist = match raw.get("groups", "distribution") {
        None => GroupSizeDist::Wve,
        Some((_, "wve")) => GroupSizeDist::Wve,
        Some((_, "uniform")) => GroupSizeDist::Uniform,
        Some((line, v)) => return err(line, format!("unknown distribution `{v}`")),
    };

    let r_sweep = match raw.get("encoding", "r") {
        None => vec![0, 6, 12],
        Some((line, v)) => parse_list(line, v)?,
    };
    let payloads = match raw.get("traffic", "payloads") {
        None => vec![1_500],
        Some((line, v)) => parse_list(line, v)?,
    };
    let all_receivers = match raw.get("traffic", "receivers") {
        None => true,
        Some((_, "all")) => true,
        Some((_, "roles")) => false,
        Some((line, v)) => return err(line, format!("receivers must be all|roles, got `{v}`")),
    };
    let srule_capacity = match raw.get("encoding", "f_max") {
        None => u32::MAX,
        Some((_, "unlimited")) => u32::MAX,
        Some((line, v)) => v
            .parse()
            .map_err(|_| ConfigError { line, message: format!("invalid f_max `{v}`") })?,
    };
    let h_override = match raw.get("encoding", "h_max") {
        None => None,
        Some((_, "auto")) => None,
        Some((line, v)) => {
            let parts: Vec<u16> = parse_list(line, v)?;
            if parts.len() != 2 {
                return err(line, "h_max must be `auto` or `<spine>,<leaf>`");
            }
            Some((parts[0], parts[1]))
        }
    };

    let spec = ScenarioSpec {
        topology,
        tenants: raw.parse_as("tenants", "count", 3_000u32)?,
        tenant_seed: raw.parse_as("tenants", "seed", 1u64)?,
        tenant_max_size: raw.parse_as("tenants", "max_size", 5_000u32)?,
        placement_p: raw.parse_as("placement", "p", 12u16)?,
        placement_seed: raw.parse_as("placement", "seed", 2u64)?,
        total_groups: raw.parse_as("groups", "total", 1_000_000u64)?,
        dist,
        group_seed: raw.parse_as("groups", "seed", 3u64)?,
        r_sweep,
        header_budget_bytes: raw.parse_as("encoding", "header_budget_bytes", 325u32)?,
        k_max_spine: raw.parse_as("encoding", "k_max_spine", 1u8)?,
        k_max_leaf: raw.parse_as("encoding", "k_max_leaf", 2u8)?,
        h_override,
        srule_capacity,
        payloads,
        all_receivers,
    };

    let cfg = ScenarioConfig {
        spec,
        churn_events: raw.parse_as("churn", "events", 0u64)?,
        churn_events_per_second: raw.parse_as("churn", "events_per_second", 1_000.0f64)?,
        churn_seed: raw.parse_as("churn", "seed", 4u64)?,
        fail_spines: match raw.get("failures", "spines") {
            None => vec![],
            Some((line, v)) => parse_list(line, v)?,
        },
        fail_cores: match raw.get("failures", "cores") {
            None => vec![],
            Some((line, v)) => parse_list(line, v)?,
        },
        output_dir: raw
            .get("output", "dir")
            .map(|(_, v)| v.to_string())
            .unwrap_or_else(|| "out".to_string()),
    };
    raw.reject_unknown()?;
    Ok(cfg)
}

fn parse_list<T: std::str::FromStr>(line: usize, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| ConfigError { line, message: format!("invalid list item `{s}`") })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse("[groups]\ntotal = 100\n").unwrap();
        assert_eq!(cfg.spec.total_groups, 100);
        assert_eq!(cfg.spec.topology.pods, 12);
        assert_eq!(cfg.spec.r_sweep, vec![0, 6, 12]);
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let e = parse("[groups]\ntotal = 10\nbogus = 1\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.to_string().contains("bogus"));
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(parse("[topology\npods = 2\n").is_err());
        assert!(parse("pods = 2\n").is_err());
        assert!(parse("[a]\nnonsense\n").is_err());
        let e = parse("[groups]\ndistribution = zipf\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn lists_and_specials_parse() {
        let cfg = parse(
            "[encoding]\nr = 0,12\nf_max = unlimited\nh_max = 4,40\n[traffic]\npayloads = 64\nreceivers = roles\n",
        )
        .unwrap();
        assert_eq!(cfg.spec.r_sweep, vec![0, 12]);
        assert_eq!(cfg.spec.srule_capacity, u32::MAX);
        assert_eq!(cfg.spec.h_override, Some((4, 40)));
        assert!(!cfg.spec.all_receivers);
    }
}
