//! Scenario files (TOML).

use std::fmt;
use std::path::Path;

use vrmerge_core::ScenarioConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.origin, line, self.message),
            None => write!(f, "{}: {}", self.origin, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        origin: origin.clone(),
        line: None,
        message: e.to_string(),
    })?;
    parse_scenario_str(&text, &origin)
}

/// Parses and validates a scenario document. Omitted controller fields take
/// the default gains.
pub fn parse_scenario_str(text: &str, origin: &str) -> Result<ScenarioConfig, ConfigError> {
    let scenario: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError {
        origin: origin.to_string(),
        line: e.span().map(|s| line_of_offset(text, s.start)),
        message: e.message().to_string(),
    })?;
    scenario.validate().map_err(|e| {
        let message = match e {
            vrmerge_core::Error::InvalidParameter(m) => m,
            other => other.to_string(),
        };
        ConfigError {
            origin: origin.to_string(),
            line: message
                .split_whitespace()
                .next()
                .and_then(|key| line_of_key(text, key)),
            message,
        }
    })?;
    Ok(scenario)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// First line assigning `key`, if any.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

pub fn to_toml(scenario: &ScenarioConfig) -> String {
    toml::to_string(scenario).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use vrmerge_core::{LeaderProfile, WeightScheme};

    #[test]
    fn minimal_file_takes_defaults() {
        let s = parse_scenario_str("[vehicles]\nmainline = [0.0, -30.0]\nramp = [-20.0]\n", "t").unwrap();
        assert_eq!(s.controller.omega_e, 1.4);
        assert_eq!(s.controller.omega_v, 0.3);
        assert_eq!(s.controller.tau, 1.0);
        assert_eq!(s.controller.standstill, 5.0);
        assert_eq!(s.controller.scheme, WeightScheme::Equal);
        assert_eq!(s.dt, 0.001);
        assert_eq!(s.duration, 80.0);
        assert_eq!(s.vehicles.initial_speed, 20.0);
        assert_eq!(s.leader, LeaderProfile::Sine { amplitude: 3.0, omega: 0.5 });
    }

    #[test]
    fn negative_tau_names_the_line() {
        let text = "[vehicles]\nmainline = [0.0]\n\n[controller]\ntau = -1.0\n";
        let err = parse_scenario_str(text, "s.toml").unwrap_err();
        assert_eq!(err.message, "tau must be > 0");
        assert_eq!(err.line, Some(5));
        assert_eq!(err.to_string(), "s.toml:5: tau must be > 0");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = "[vehicles]\nmainline = [0.0]\n[controller]\nomega_x = 2.0\n";
        let err = parse_scenario_str(text, "s.toml").unwrap_err();
        assert!(err.message.contains("omega_x"), "{}", err.message);
        assert_eq!(err.line, Some(4));
    }

    #[test]
    fn type_mismatch_rejected() {
        let err = parse_scenario_str("[vehicles]\nmainline = \"zero\"\n", "s.toml").unwrap_err();
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn missing_vehicles_table() {
        let err = parse_scenario_str("duration = 10.0\n", "s.toml").unwrap_err();
        assert!(err.message.contains("vehicles"), "{}", err.message);
    }

    #[test]
    fn leader_profiles_parse() {
        let text = "[vehicles]\nmainline = [0.0]\n[leader]\nkind = \"brake_accel\"\nbrake_at = 13.0\ndecel = 2.0\nlow_speed = 10.0\naccel_at = 26.0\naccel = 2.0\n";
        let s = parse_scenario_str(text, "s").unwrap();
        assert_eq!(s.leader, LeaderProfile::brake_accel());
    }

    #[test]
    fn echo_round_trips() {
        let mut s = vrmerge_core::sim::scenarios::curved_ramp();
        s.controller.scheme = WeightScheme::Geometric;
        let back = parse_scenario_str(&to_toml(&s), "echo").unwrap();
        assert_eq!(back, s);
    }
}
