//! The `txmonsim` command line: run scenario files, diff traces, run the
//! built-in suites and re-check saved counter-example reports.
//!
//! Exit codes: 0 on success, 1 when a transaction aborted or a check
//! failed, 2 on bad input.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use txmonsim::engine::{MonitorMode, SchedulerKind};
use txmonsim::mechanisms::Mechanism;
use txmonsim::model::{StepRecord, Trace};
use txmonsim::scenarios::equivalence::{run_equivalence_suite, DEFAULT_CASES};
use txmonsim::scenarios::flashloan::run_flashloan_suite;
use txmonsim::scenarios::obs::{check_obs_all, check_obs_equivalence, ObsCheck};
use txmonsim::scenarios::reports::all_reports;
use txmonsim::scenarios::{CounterexampleReport, Scenario, ScenarioSpec};
use txmonsim::value::Address;

/// Directory searched for relative paths that do not exist as given.
pub const SUITE_DIR_ENV: &str = "TXMONSIM_SUITE_DIR";

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "txmonsim", version, about = "Deterministic smart-contract transaction simulator")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every transaction of a scenario file in order.
    Run(RunArgs),
    /// Compare two trace files, optionally only what one contract observed.
    Diff(DiffArgs),
    /// Run a built-in suite.
    Suite(SuiteArgs),
    /// Re-verify a saved counter-example report and summarize it.
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub scenario: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Write the trace, one record per line.
    #[arg(long, value_name = "OUT")]
    pub trace: Option<PathBuf>,
}

/// Engine settings that replace the scenario's own.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub scheduler: Option<SchedulerKind>,
    /// Gas limit for transactions without their own.
    #[arg(long)]
    pub gas: Option<u64>,
    /// Comma-separated mechanism names, or `none`.
    #[arg(long, value_parser = parse_mechanisms)]
    pub mechanisms: Option<Vec<Mechanism>>,
    #[arg(long)]
    pub monitor_mode: Option<MonitorMode>,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    pub trace_a: PathBuf,
    pub trace_b: PathBuf,
    /// Compare only this contract's observations.
    #[arg(long)]
    pub subject: Option<String>,
    /// Last invocation (with --subject) or record index to compare.
    #[arg(long)]
    pub upto: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[arg(value_enum)]
    pub name: SuiteName,
    /// Seed for randomized suites.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random cases per transformer pair.
    #[arg(long, default_value_t = DEFAULT_CASES)]
    pub cases: usize,
    /// Directory to write the report bundle to.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SuiteName {
    Counterexamples,
    Flashloan,
    Equivalence,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    pub report: PathBuf,
}

fn parse_mechanisms(s: &str) -> Result<Vec<Mechanism>, String> {
    if s.trim().eq_ignore_ascii_case("none") || s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|m| m.trim().parse::<Mechanism>()).collect()
}

impl Overrides {
    pub fn apply(&self, spec: &mut ScenarioSpec) {
        let e = &mut spec.engine;
        if let Some(s) = self.scheduler {
            e.scheduler = s;
        }
        if let Some(g) = self.gas {
            e.gas_limit = g;
        }
        if let Some(ms) = &self.mechanisms {
            e.mechanisms = ms.iter().copied().collect();
        }
        if let Some(m) = self.monitor_mode {
            e.monitor_mode = m;
        }
    }
}

/// Input problems; always exit code 2.
#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

/// Finds `path` as given, else under `$TXMONSIM_SUITE_DIR`.
pub fn resolve(path: &Path) -> Option<PathBuf> {
    if path.exists() {
        return Some(path.to_path_buf());
    }
    let dir = std::env::var_os(SUITE_DIR_ENV)?;
    let p = Path::new(&dir).join(path);
    p.exists().then_some(p)
}

fn read(path: &Path) -> Result<String, Failure> {
    let p = resolve(path).ok_or_else(|| Failure(format!("{}: no such file", path.display())))?;
    std::fs::read_to_string(&p).map_err(|e| Failure(format!("{}: {e}", p.display())))
}

fn load_trace(path: &Path) -> Result<Trace, Failure> {
    Trace::from_jsonl(&read(path)?).map_err(|e| Failure(format!("{}: line {}: {e}", path.display(), e.line())))
}

/// Runs one command, writing results to `out` and diagnostics to `err`.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, cli.format),
        Command::Diff(a) => cmd_diff(a, cli.format),
        Command::Suite(a) => cmd_suite(a, cli.format),
        Command::Explain(a) => cmd_explain(a, cli.format),
    };
    match result {
        Ok((code, text)) => {
            let _ = out.write_all(text.as_bytes());
            code
        }
        Err(Failure(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_ERROR
        }
    }
}

fn render<T: Serialize>(format: Format, value: &T, text: impl FnOnce() -> String) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(value).expect("output serializes") + "\n",
        Format::Text => text(),
    }
}

// ---------------------------------------------------------------------------
// run

fn cmd_run(args: &RunArgs, format: Format) -> Result<(u8, String), Failure> {
    let text = read(&args.scenario)?;
    let at = |e: &dyn std::fmt::Display| Failure(format!("{}: {e}", args.scenario.display()));
    let mut spec = ScenarioSpec::from_json(&text).map_err(|e| at(&e))?;
    args.overrides.apply(&mut spec);
    let sc = Scenario::from_spec(spec).map_err(|e| at(&e))?;
    let result = sc.run().map_err(|e| at(&e))?;

    if let Some(path) = &args.trace {
        let all = Trace { records: result.runs.iter().flat_map(|r| r.trace.records.clone()).collect() };
        std::fs::write(path, all.to_jsonl()).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    }

    let txs: Vec<_> = result
        .runs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
            for rec in &r.trace.records {
                *kinds.entry(format!("{:?}", rec.kind)).or_default() += 1;
            }
            json!({
                "index": i,
                "operation": sc.operation(i).to_string(),
                "outcome": r.outcome.summary(),
                "gas_used": r.gas_used,
                "records": kinds,
            })
        })
        .collect();
    let balances: BTreeMap<String, u64> =
        result.final_state.accounts.iter().map(|(a, acc)| (a.to_string(), acc.balance)).collect();
    let committed = result.all_committed();
    let doc = json!({
        "scenario": sc.spec.name,
        "all_committed": committed,
        "transactions": txs,
        "final_balances": balances,
    });
    let rendered = render(format, &doc, || {
        let mut s = String::new();
        if let Some(n) = &sc.spec.name {
            let _ = writeln!(s, "scenario {n}");
        }
        for (i, r) in result.runs.iter().enumerate() {
            let kinds: Vec<String> = doc["transactions"][i]["records"]
                .as_object()
                .map(|m| m.iter().map(|(k, v)| format!("{k} {v}")).collect())
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "tx {i} {}: {} (gas used {}; records: {})",
                sc.operation(i),
                r.outcome.summary(),
                r.gas_used,
                kinds.join(", ")
            );
        }
        let shown: Vec<String> = balances.iter().map(|(a, b)| format!("{a}={b}")).collect();
        let _ = writeln!(s, "final balances: {}", shown.join(" "));
        s
    });
    Ok((if committed { EXIT_OK } else { EXIT_FAILED }, rendered))
}

// ---------------------------------------------------------------------------
// diff

/// First difference between two step records, by field.
fn record_difference(a: &StepRecord, b: &StepRecord) -> Option<(&'static str, String, String)> {
    let j = |v: &dyn erased::Json| v.json();
    macro_rules! cmp {
        ($field:ident) => {
            if a.$field != b.$field {
                return Some((stringify!($field), j(&a.$field), j(&b.$field)));
            }
        };
    }
    cmp!(kind);
    cmp!(subject);
    cmp!(queue_before);
    cmp!(executed);
    cmp!(emitted);
    cmp!(queue_after);
    cmp!(observed);
    cmp!(storage_after);
    cmp!(gas_before);
    cmp!(gas_after);
    cmp!(state_digest);
    None
}

mod erased {
    pub trait Json {
        fn json(&self) -> String;
    }
    impl<T: serde::Serialize> Json for T {
        fn json(&self) -> String {
            serde_json::to_string(self).expect("record field serializes")
        }
    }
}

#[derive(Debug, Serialize)]
struct RecordDiff {
    equal: bool,
    compared: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    record: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    left: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    right: Option<String>,
}

fn diff_records(a: &Trace, b: &Trace, upto: Option<usize>) -> RecordDiff {
    let n = upto.map_or(a.len().max(b.len()), |u| u + 1);
    for i in 0..n {
        let found = match (a.records.get(i), b.records.get(i)) {
            (Some(x), Some(y)) => record_difference(x, y),
            (None, None) => None,
            (x, y) => {
                let side = |r: Option<&StepRecord>| if r.is_some() { "present" } else { "absent" }.to_string();
                Some(("presence", side(x), side(y)))
            }
        };
        if let Some((field, left, right)) = found {
            return RecordDiff {
                equal: false,
                compared: n,
                record: Some(i),
                field: Some(field.into()),
                left: Some(left),
                right: Some(right),
            };
        }
    }
    RecordDiff { equal: true, compared: n, record: None, field: None, left: None, right: None }
}

fn obs_text(c: &ObsCheck) -> String {
    match &c.divergence {
        None => format!("equal: {} invocations of {} match\n", c.len, c.subject),
        Some(d) => {
            let at = |r: Option<u64>| r.map_or("-".to_string(), |i| i.to_string());
            format!(
                "differ: invocation {} of {} (records {} / {}) on {}\n  left:  {}\n  right: {}\n",
                d.position,
                c.subject,
                at(d.record_a),
                at(d.record_b),
                d.field,
                d.left,
                d.right
            )
        }
    }
}

fn cmd_diff(args: &DiffArgs, format: Format) -> Result<(u8, String), Failure> {
    let a = load_trace(&args.trace_a)?;
    let b = load_trace(&args.trace_b)?;
    let (equal, text) = match &args.subject {
        Some(subject) => {
            let subject = Address::new(subject.as_str());
            let check = match args.upto {
                Some(u) => check_obs_equivalence(&a, &b, &subject, u),
                None => check_obs_all(&a, &b, &subject),
            };
            (check.equal, render(format, &check, || obs_text(&check)))
        }
        None => {
            let d = diff_records(&a, &b, args.upto);
            let text = render(format, &d, || match (&d.record, &d.field) {
                (Some(i), Some(f)) => format!(
                    "differ: record {i} on {f}\n  left:  {}\n  right: {}\n",
                    d.left.as_deref().unwrap_or(""),
                    d.right.as_deref().unwrap_or("")
                ),
                _ => format!("equal: {} records match\n", d.compared),
            });
            (d.equal, text)
        }
    };
    Ok((if equal { EXIT_OK } else { EXIT_FAILED }, text))
}

// ---------------------------------------------------------------------------
// suite

fn write_bundle(dir: &Path, files: &[(String, String)]) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure(format!("{}: {e}", dir.display())))?;
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Failure(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn cmd_suite(args: &SuiteArgs, format: Format) -> Result<(u8, String), Failure> {
    let (holds, text, bundle) = match args.name {
        SuiteName::Counterexamples => {
            let reports = all_reports()?;
            let holds = reports.iter().all(CounterexampleReport::verify);
            let summary: Vec<_> = reports
                .iter()
                .map(|r| {
                    json!({
                        "name": r.name,
                        "verified": r.verify(),
                        "traces": r.traces.len(),
                        "obs_claims": r.obs_claims.len(),
                        "expectations": r.expectations,
                        "conclusion": r.conclusion,
                    })
                })
                .collect();
            let text = render(format, &summary, || {
                let mut s: String = reports.iter().map(|r| r.to_text() + "\n").collect();
                let _ = writeln!(s, "{} reports, all verified: {holds}", reports.len());
                s
            });
            let bundle = reports.iter().map(|r| (format!("{}.json", r.name), r.to_json())).collect();
            (holds, text, bundle)
        }
        SuiteName::Flashloan => {
            let suite = run_flashloan_suite()?;
            let body = serde_json::to_string_pretty(&suite).expect("suite serializes");
            (suite.holds(), render(format, &suite, || suite.to_text()), vec![("flashloan.json".to_string(), body)])
        }
        SuiteName::Equivalence => {
            let report = run_equivalence_suite(args.seed, args.cases);
            let body = serde_json::to_string_pretty(&report).expect("report serializes");
            (report.holds(), render(format, &report, || report.to_text()), vec![("equivalence.json".to_string(), body)])
        }
    };
    if let Some(dir) = &args.out {
        write_bundle(dir, &bundle)?;
    }
    Ok((if holds { EXIT_OK } else { EXIT_FAILED }, text))
}

// ---------------------------------------------------------------------------
// explain

fn cmd_explain(args: &ExplainArgs, format: Format) -> Result<(u8, String), Failure> {
    let text = read(&args.report)?;
    let report = CounterexampleReport::from_json(&text)
        .map_err(|e| Failure(format!("{}: line {}, column {}: {e}", args.report.display(), e.line(), e.column())))?;
    let verified = report.verify();
    let doc = json!({
        "name": report.name,
        "verified": verified,
        "outcomes": report.traces.iter().map(|t| (t.name.clone(), t.outcome.to_string())).collect::<BTreeMap<_, _>>(),
        "obs_claims": report.obs_claims,
        "expectations": report.expectations,
        "conclusion": report.conclusion,
    });
    let rendered = render(format, &doc, || report.to_text());
    Ok((if verified { EXIT_OK } else { EXIT_FAILED }, rendered))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mechanism_lists() {
        assert_eq!(parse_mechanisms("first, fail").unwrap(), vec![Mechanism::First, Mechanism::Fail]);
        assert!(parse_mechanisms("none").unwrap().is_empty());
        assert!(parse_mechanisms("first,warp").is_err());
    }

    #[test]
    fn overrides_replace_engine_fields() {
        let mut spec = ScenarioSpec::from_json(r#"{"contracts": [], "transactions": []}"#).unwrap();
        Overrides {
            scheduler: Some(SchedulerKind::Bfs),
            gas: Some(7),
            mechanisms: Some(vec![Mechanism::Queue]),
            monitor_mode: Some(MonitorMode::Transaction),
        }
        .apply(&mut spec);
        assert_eq!(spec.engine.scheduler, SchedulerKind::Bfs);
        assert_eq!(spec.engine.gas_limit, 7);
        assert!(spec.engine.enabled(Mechanism::Queue));
        assert_eq!(spec.engine.monitor_mode, MonitorMode::Transaction);
    }

    #[test]
    fn identical_record_streams_are_equal() {
        let t = Trace::default();
        assert!(diff_records(&t, &t, None).equal);
    }
}
