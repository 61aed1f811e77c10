use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use qntl::catalog::{entries_for, Layer, ThreatCatalogEntry};
use qntl::network::{Topology, TopologySpec};

use crate::config::{self, Format, Overrides, ScenarioConfig};
use crate::experiments::Experiment;
use crate::plot::{self, Figure};
use crate::report::{self, ExperimentReport};
use crate::CliError;

const RUN_USAGE: &str = "usage: qntl run [EXPERIMENT] [--config FILE] [--seed N] [--out PATH] [--format csv|json] [--<param> VALUE]...";

#[derive(Debug, Parser)]
#[command(name = "qntl", version, about = "Layer-wise quantum network attack simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment; parameters are given as `--name value` flags.
    Run {
        #[arg(num_args = 0.., allow_hyphen_values = true, trailing_var_arg = true, value_name = "ARGS")]
        args: Vec<String>,
    },
    /// Print the threat-readiness catalog.
    Catalog {
        #[arg(long)]
        layer: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Turn a saved report into per-series CSV files and an optional SVG.
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        figure: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: bool,
    },
    /// Print a generated topology as an edge list.
    Topology {
        /// e.g. `grid:10x10`, `waxman:100:0.1:0.4`, or a bare family name.
        spec: String,
        #[arg(long, default_value_t = config::DEFAULT_SEED)]
        seed: u64,
    },
    /// List experiments with their default parameters.
    List,
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { args } => run(&args),
        Command::Catalog { layer, json } => catalog(layer.as_deref(), json),
        Command::Plot { report, figure, out, svg } => {
            let figure: Figure = figure.parse()?;
            let report = ExperimentReport::load(&report)?;
            let written = plot::emit_plotdata(&report, figure, &out, svg)?;
            let lines: Vec<String> = written.iter().map(|p| format!("{}\n", p.display())).collect();
            stdout(&lines.concat());
            Ok(())
        }
        Command::Topology { spec, seed } => {
            let spec: TopologySpec = spec.parse().map_err(|e| CliError::Config(format!("{e}")))?;
            let topo = Topology::generate(spec, seed).map_err(CliError::runtime)?;
            stdout(&topo.to_edge_list());
            Ok(())
        }
        Command::List => {
            let lines: Vec<String> = Experiment::ALL
                .iter()
                .map(|e| format!("{} {}\n", e.name(), serde_json::Value::Object(e.default_params())))
                .collect();
            stdout(&lines.concat());
            Ok(())
        }
    }
}

/// Writes to stdout, ignoring a reader that has gone away.
pub(crate) fn stdout(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

/// Splits `run` arguments into overrides. Accepts `--key value` and
/// `--key=value`; a flag followed by another flag (or nothing) reads as `true`.
pub fn parse_run_args(args: &[String]) -> Result<(Option<PathBuf>, Overrides), CliError> {
    let mut config_path = None;
    let mut o = Overrides::default();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        i += 1;
        let Some(flag) = arg.strip_prefix("--") else {
            if o.experiment.is_some() {
                return Err(CliError::config(format!("unexpected argument `{arg}`")));
            }
            o.experiment = Some(arg.clone());
            continue;
        };
        let (name, value) = match flag.split_once('=') {
            Some((n, v)) => (n.to_string(), v.to_string()),
            None if i < args.len() && !args[i].starts_with("--") => {
                i += 1;
                (flag.to_string(), args[i - 1].clone())
            }
            None => (flag.to_string(), "true".to_string()),
        };
        if name.is_empty() {
            return Err(CliError::config(format!("malformed flag `{arg}`")));
        }
        match name.as_str() {
            "config" => config_path = Some(PathBuf::from(value)),
            "seed" => {
                o.seed = Some(value.parse().map_err(|_| CliError::config(format!("invalid seed `{value}`")))?);
            }
            "out" => o.output = Some(PathBuf::from(value)),
            "format" => {
                o.format = Some(match value.as_str() {
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    _ => return Err(CliError::config(format!("invalid format `{value}` (expected csv or json)"))),
                })
            }
            _ => o.params.push((name, value)),
        }
    }
    Ok((config_path, o))
}

fn run(args: &[String]) -> Result<(), CliError> {
    if args.iter().any(|a| a == "--help" || a == "-h") {
        println!("{RUN_USAGE}");
        let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
        println!("experiments: {}", names.join(", "));
        return Ok(());
    }
    let (config_path, overrides) = parse_run_args(args)?;
    let file = config_path.as_deref().map(ScenarioConfig::load).transpose()?;
    let resolved = config::resolve(file, overrides, std::env::var(config::SEED_ENV).ok())?;
    let report = report::run_scenario(&resolved)?;
    for path in report::emit(&report)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

pub fn catalog_table(entries: &[ThreatCatalogEntry]) -> String {
    let header = ["Layer", "Attack", "Readiness", "Requirements"];
    let cells: Vec<[String; 4]> = entries
        .iter()
        .map(|e| [e.layer.to_string(), e.attack.clone(), e.readiness.to_string(), e.requirements.clone()])
        .collect();
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |row: [&str; 4]| {
        let mut s = String::new();
        for (k, (c, w)) in row.iter().zip(widths).enumerate() {
            if k + 1 == row.len() {
                s.push_str(c);
            } else {
                s.push_str(&format!("{c:<w$}  "));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    out.push_str(&line(widths.map(|w| "-".repeat(w)).each_ref().map(String::as_str)));
    for row in &cells {
        out.push_str(&line(row.each_ref().map(String::as_str)));
    }
    out
}

fn catalog(layer: Option<&str>, json: bool) -> Result<(), CliError> {
    let layer = layer
        .map(|l| l.parse::<Layer>().map_err(|e| CliError::Config(e.to_string())))
        .transpose()?;
    let entries = entries_for(layer);
    if json {
        stdout(&(serde_json::to_string_pretty(&entries).map_err(CliError::runtime)? + "\n"));
    } else {
        stdout(&catalog_table(&entries));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn run_args_accept_both_flag_forms() {
        let (cfg, o) = parse_run_args(&strings(&["pns", "--mu=3", "--pulses", "10", "--seed", "7", "--out", "x.csv", "--flag"])).unwrap();
        assert!(cfg.is_none());
        assert_eq!(o.experiment.as_deref(), Some("pns"));
        assert_eq!(o.seed, Some(7));
        assert_eq!(o.output, Some(PathBuf::from("x.csv")));
        assert_eq!(o.params, vec![("mu".into(), "3".into()), ("pulses".into(), "10".into()), ("flag".into(), "true".into())]);
    }

    #[test]
    fn second_positional_is_rejected() {
        assert!(parse_run_args(&strings(&["pns", "trojan"])).is_err());
        assert!(parse_run_args(&strings(&["pns", "--seed", "x"])).is_err());
    }

    #[test]
    fn table_has_header_rule_and_rows() {
        let entries = entries_for(None);
        let t = catalog_table(&entries);
        assert_eq!(t.lines().count(), 2 + entries.len());
        assert!(t.lines().nth(1).unwrap().starts_with("-----"));
    }
}
