use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::experiments::Experiment;
use crate::CliError;

pub const SEED_ENV: &str = "QNTL_SEED";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub format: Format,
    pub path: PathBuf,
}

/// Config file contents. Every field may be overridden by flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("malformed config {}: {e}", path.display())))
    }
}

/// Fully resolved scenario, echoed verbatim into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub experiment: String,
    pub seed: u64,
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

impl ResolvedConfig {
    pub fn to_scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            experiment: Some(self.experiment.clone()),
            seed: Some(self.seed),
            params: self.params.clone(),
            output: self.output.clone(),
        }
    }
}

/// Command-line overrides for one run.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    /// `(flag name as typed, raw value)`.
    pub params: Vec<(String, String)>,
}

/// Merges experiment defaults, then the config file, then flags.
pub fn resolve(file: Option<ScenarioConfig>, overrides: Overrides, env_seed: Option<String>) -> Result<ResolvedConfig, CliError> {
    let file = file.unwrap_or_default();
    let name = overrides
        .experiment
        .or(file.experiment)
        .ok_or_else(|| CliError::config("no experiment given"))?;
    let experiment: Experiment = name.parse()?;
    let defaults = experiment.default_params();

    let mut params = defaults.clone();
    for (key, value) in file.params {
        if !defaults.contains_key(&key) {
            return Err(CliError::config(format!("unknown key `{key}` for experiment {name}")));
        }
        params.insert(key, value);
    }
    for (flag, raw) in overrides.params {
        let key = flag.replace('-', "_");
        let Some(default) = defaults.get(&key) else {
            return Err(CliError::config(format!("unknown key `--{flag}` for experiment {name}")));
        };
        let value = coerce(&flag, &raw, default)?;
        params.insert(key, value);
    }
    experiment.validate(&params)?;

    let seed = match (overrides.seed, file.seed, env_seed) {
        (Some(s), _, _) | (None, Some(s), _) => s,
        (None, None, Some(env)) => env
            .trim()
            .parse()
            .map_err(|_| CliError::config(format!("{SEED_ENV} is not an unsigned 64-bit integer: `{env}`")))?,
        (None, None, None) => DEFAULT_SEED,
    };

    let output = match (overrides.output, file.output) {
        (Some(path), file_out) => {
            let format = overrides
                .format
                .or(file_out.map(|o| o.format))
                .unwrap_or_else(|| format_for(&path));
            Some(OutputSpec { format, path })
        }
        (None, Some(mut out)) => {
            if let Some(f) = overrides.format {
                out.format = f;
            }
            Some(out)
        }
        (None, None) => None,
    };

    Ok(ResolvedConfig {
        experiment: experiment.name().to_string(),
        seed,
        params,
        output,
    })
}

fn format_for(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
        _ => Format::Csv,
    }
}

/// Converts a flag string to the JSON type of the parameter's default.
fn coerce(flag: &str, raw: &str, default: &Value) -> Result<Value, CliError> {
    let bad = |what: &str| CliError::config(format!("invalid value `{raw}` for `--{flag}`: expected {what}"));
    match default {
        Value::Array(items) => {
            let numeric = items.first().is_none_or(Value::is_number);
            if numeric && raw.matches(':').count() == 2 {
                return expand_range(raw).map_err(|_| bad("start:stop:step"));
            }
            let element = items.first().cloned().unwrap_or(Value::String(String::new()));
            raw.split(',')
                .map(|part| coerce(flag, part.trim(), &element))
                .collect::<Result<Vec<_>, _>>()
                .map(Value::Array)
        }
        Value::Bool(_) => match raw {
            "true" | "1" | "yes" => Ok(Value::Bool(true)),
            "false" | "0" | "no" => Ok(Value::Bool(false)),
            _ => Err(bad("true or false")),
        },
        Value::Number(n) if n.is_u64() => raw.parse::<u64>().map(Value::from).map_err(|_| bad("a non-negative integer")),
        Value::Number(_) => raw
            .parse::<f64>()
            .ok()
            .and_then(serde_json::Number::from_f64)
            .map(Value::Number)
            .ok_or_else(|| bad("a number")),
        _ => Ok(Value::String(raw.to_string())),
    }
}

/// `start:stop:step`, start inclusive and stop exclusive. Values are rounded
/// to 12 decimals so `0:0.9:0.1` yields `0.3`, not `0.30000000000000004`.
pub fn expand_range(raw: &str) -> Result<Value, ()> {
    let parts: Vec<f64> = raw.split(':').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| ())?;
    let [start, stop, step] = parts[..] else { return Err(()) };
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
        return Err(());
    }
    let mut out = Vec::new();
    for i in 0.. {
        let v = ((start + i as f64 * step) * 1e12).round() / 1e12;
        if v >= stop - step * 1e-9 {
            break;
        }
        out.push(Value::from(v));
    }
    Ok(Value::Array(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn flags(pairs: &[(&str, &str)]) -> Overrides {
        Overrides {
            experiment: Some("pns".into()),
            params: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            ..Overrides::default()
        }
    }

    #[test]
    fn range_is_start_inclusive_stop_exclusive() {
        let v = expand_range("0:0.9:0.1").unwrap();
        assert_eq!(v, json!([0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]));
        assert_eq!(expand_range("0:1:0.5").unwrap(), json!([0.0, 0.5]));
        assert!(expand_range("0:1:0").is_err());
        assert!(expand_range("a:1:0.1").is_err());
    }

    #[test]
    fn flags_override_defaults() {
        let cfg = resolve(None, flags(&[("mu", "3.5"), ("pulses", "20000"), ("max-bin", "12")]), None).unwrap();
        assert_eq!(cfg.params["mu"], json!(3.5));
        assert_eq!(cfg.params["pulses"], json!(20000));
        assert_eq!(cfg.params["max_bin"], json!(12));
        assert_eq!(cfg.seed, DEFAULT_SEED);
    }

    #[test]
    fn unknown_flag_names_the_key() {
        let err = resolve(None, flags(&[("foo", "1")]), None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("--foo"), "{err}");
    }

    #[test]
    fn seed_precedence() {
        let file = ScenarioConfig {
            seed: Some(5),
            ..ScenarioConfig::default()
        };
        let mut o = flags(&[]);
        assert_eq!(resolve(None, o.clone(), Some("9".into())).unwrap().seed, 9);
        assert_eq!(resolve(Some(file.clone()), o.clone(), Some("9".into())).unwrap().seed, 5);
        o.seed = Some(1);
        assert_eq!(resolve(Some(file), o, Some("9".into())).unwrap().seed, 1);
        assert!(resolve(None, flags(&[]), Some("x".into())).is_err());
    }

    #[test]
    fn single_list_value_becomes_list() {
        let mut o = flags(&[("kinds", "grid")]);
        o.experiment = Some("topology-decay".into());
        let cfg = resolve(None, o, None).unwrap();
        assert_eq!(cfg.params["kinds"], json!(["grid"]));
    }

    #[test]
    fn file_keys_are_strict() {
        let file: ScenarioConfig = serde_json::from_value(json!({"experiment": "pns", "params": {"bogus": 1}})).unwrap();
        let err = resolve(Some(file), Overrides::default(), None).unwrap_err();
        assert!(err.to_string().contains("bogus"));
        assert!(serde_json::from_value::<ScenarioConfig>(json!({"experiment": "pns", "extra": 1})).is_err());
    }

    #[test]
    fn output_format_follows_extension() {
        let mut o = flags(&[]);
        o.output = Some("r.json".into());
        assert_eq!(resolve(None, o.clone(), None).unwrap().output.unwrap().format, Format::Json);
        o.output = Some("r.csv".into());
        assert_eq!(resolve(None, o, None).unwrap().output.unwrap().format, Format::Csv);
    }
}
