//! Suite files: named collections of simulated application configurations.
//!
//! Three suites ship with the crate: a ten-app pilot suite, a 36-app full
//! suite, and a single-app reference suite for defense experiments.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::victim::{AppRegistry, RegistryError, VictimAppConfig, VictimHandle};

pub const PILOT_SUITE_TOML: &str = include_str!("../../../data/suites/pilot.toml");
pub const FULL_SUITE_TOML: &str = include_str!("../../../data/suites/full.toml");
pub const DEFENSE_SUITE_TOML: &str = include_str!("../../../data/suites/defense_reference.toml");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub name: String,
    pub apps: Vec<VictimAppConfig>,
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("failed to read suite file {path}: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("suite parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("suite contains no applications")]
    Empty,
}

pub fn parse_suite(raw: &str) -> Result<Suite, SuiteError> {
    let suite: Suite = toml::from_str(raw)?;
    if suite.apps.is_empty() {
        return Err(SuiteError::Empty);
    }
    for app in &suite.apps {
        app.validate()?;
    }
    Ok(suite)
}

/// Loads a suite by builtin name (`pilot`, `full`, `defense_reference`) or
/// from a TOML file path.
pub fn load_suite(spec: &str) -> Result<Suite, SuiteError> {
    match spec {
        "pilot" => parse_suite(PILOT_SUITE_TOML),
        "full" => parse_suite(FULL_SUITE_TOML),
        "defense_reference" => parse_suite(DEFENSE_SUITE_TOML),
        path => {
            let raw = fs::read_to_string(Path::new(path)).map_err(|source| {
                SuiteError::Unreadable { path: path.to_string(), source }
            })?;
            parse_suite(&raw)
        }
    }
}

/// Registers every suite app, returning handles in suite order.
pub fn register_suite(
    registry: &AppRegistry,
    suite: &Suite,
) -> Result<Vec<VictimHandle>, SuiteError> {
    suite
        .apps
        .iter()
        .map(|app| registry.register_app(app.clone()).map_err(SuiteError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defense::all_defense_kinds;

    #[test]
    fn builtin_suites_parse_and_register() {
        let pilot = load_suite("pilot").unwrap();
        assert_eq!(pilot.apps.len(), 10);
        let full = load_suite("full").unwrap();
        assert_eq!(full.apps.len(), 36);
        let reference = load_suite("defense_reference").unwrap();
        assert_eq!(reference.apps.len(), 1);

        let registry = AppRegistry::new();
        let handles = register_suite(&registry, &full).unwrap();
        assert_eq!(handles.len(), 36);
        assert_eq!(handles[0].name(), full.apps[0].name);
    }

    #[test]
    fn unknown_suite_path_is_unreadable() {
        assert!(matches!(
            load_suite("/nonexistent/suite.toml"),
            Err(SuiteError::Unreadable { .. })
        ));
    }

    #[test]
    fn parse_rejects_empty_and_invalid_suites() {
        assert!(matches!(
            parse_suite("name = \"empty\"\napps = []"),
            Err(SuiteError::Empty)
        ));
        let bad = r#"
name = "bad"
[[apps]]
name = "NoPlaceholder"
pre_prompt = "no placeholder"
input_role = "question"
app_function = "qa_chat"
"#;
        assert!(matches!(parse_suite(bad), Err(SuiteError::Registry(_))));
    }

    #[test]
    fn every_defended_app_keeps_a_bypass_strategy() {
        // For every shipped app, each deployed defense leaves at least one
        // susceptible strategy un-neutralized, so the defense is bypassable.
        for spec in ["pilot", "full", "defense_reference"] {
            let suite = load_suite(spec).unwrap();
            for app in &suite.apps {
                if app.profile.susceptible_strategies.is_empty() {
                    continue;
                }
                for kind in all_defense_kinds() {
                    let neutralized = app
                        .profile
                        .neutralized_by
                        .get(&kind.name())
                        .cloned()
                        .unwrap_or_default();
                    let survivors = app
                        .profile
                        .susceptible_strategies
                        .iter()
                        .filter(|s| {
                            !neutralized
                                .iter()
                                .any(|signal| signal.as_strategy() == Some(**s))
                        })
                        .count();
                    assert!(
                        survivors > 0,
                        "{} has no bypass for {:?}",
                        app.name,
                        kind.name()
                    );
                }
            }
        }
    }
}
