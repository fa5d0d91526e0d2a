//! `sampling` command line. Each verb parses its flags, calls the owning
//! module and prints the result, either as a table or, with `--porcelain`,
//! as tab-separated lines whose first field names the record kind.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use sampling_core::analysis::{
    feedback_digest, performance, progress, render_performance_table, render_progress_table,
    DateWindow,
};
use sampling_core::domain::{parse_date, PointId, Registry, SamplingTask, Timestamp};
use sampling_core::ingestion::{
    export_worksheet, read_worksheet_file, validate_records, IngestReport, ValidationContext,
};
use sampling_core::ontology::{extend_kb, load_kb, parse_pattern, Bindings, APP_PREFIX};
use sampling_core::sequencer::{plan_routes, RoutePlan};
use sampling_core::store::{ingest_records, Store, StoreError, REGISTRY_FILE};
use sampling_service::ServiceConfig;

pub const CONFIG_ENV: &str = "SAMPLING_CONFIG";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sampling", version, about = "Administer sampling worksheets, the knowledge base and the API service")]
pub struct Cli {
    /// Config file (TOML); defaults to $SAMPLING_CONFIG when set.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Data directory; overrides the config file.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Stable tab-separated output.
    #[arg(long, global = true)]
    pub porcelain: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Import a worksheet export into the data directory.
    Ingest(WorksheetArgs),
    /// Check a worksheet export without importing it.
    Validate(WorksheetArgs),
    /// Add a knowledge-base text file to the stored knowledge base.
    KbLoad {
        file: PathBuf,
        /// Replace the stored knowledge base instead of extending it.
        #[arg(long)]
        replace: bool,
    },
    /// Match a triple pattern such as "?p locatedInZone Z-A".
    KbQuery { pattern: String },
    /// Plan sampling routes for a date.
    Route {
        #[arg(long)]
        date: String,
        /// Only plan tasks of this zone.
        #[arg(long)]
        zone: Option<String>,
        /// Cluster with k-medoids instead of by zone.
        #[arg(long)]
        k: Option<usize>,
        /// Start point of every route.
        #[arg(long)]
        start: Option<String>,
    },
    /// Print progress, performance or feedback reports.
    Report {
        #[command(subcommand)]
        kind: ReportKind,
    },
    /// Run the HTTP API.
    Serve,
    /// Write a date's worksheet with current statuses.
    Export {
        #[arg(long)]
        date: String,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct WorksheetArgs {
    pub file: PathBuf,
    /// Registry JSON. For `ingest` it seeds a data directory that has none;
    /// for `validate` it is used instead of the data directory.
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ReportKind {
    /// Status counts and completion rate per zone for one date
    Progress {
        #[arg(long)]
        date: String,
    },
    /// Check-in attempts, error rate and task durations over a date range
    Performance {
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: Option<String>,
    },
    /// Feedback entries recorded over a date range
    Feedback {
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: Option<String>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Config { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn usage_err(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

/// Parses `args` (program name first) and runs the verb. Returns the exit code.
pub fn run<I, T>(args: I, env: &[(String, String)], out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, env, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn config(cli: &Cli, env: &[(String, String)]) -> Result<ServiceConfig, CliError> {
    let path = cli.config.clone().or_else(|| {
        env.iter().find(|(k, _)| k == CONFIG_ENV).map(|(_, v)| PathBuf::from(v))
    });
    let mut config = ServiceConfig::load(path.as_deref(), env.iter().cloned()).map_err(usage_err)?;
    if let Some(dir) = &cli.data_dir {
        config.data_dir = dir.clone();
    }
    Ok(config)
}

fn date_arg(s: &str) -> Result<NaiveDate, CliError> {
    parse_date(s).map_err(usage_err)
}

fn window(from: &str, to: Option<&str>) -> Result<DateWindow, CliError> {
    let from = date_arg(from)?;
    let to = to.map(date_arg).transpose()?.unwrap_or(from);
    if to < from {
        return Err(CliError::Usage(format!("--to {to} is before --from {from}")));
    }
    Ok(DateWindow::new(from, to))
}

fn read_registry(path: &Path) -> Result<Registry, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Registry::from_json(&bytes).map_err(|e| CliError::Usage(format!("invalid registry {}: {e}", path.display())))
}

fn execute(cli: &Cli, env: &[(String, String)], out: &mut dyn Write) -> Result<i32, CliError> {
    let config = config(cli, env)?;
    let dir = config.data_dir.clone();
    let porcelain = cli.porcelain;
    let text = match &cli.command {
        Command::Ingest(args) => {
            if let Some(path) = &args.registry {
                if !dir.join(REGISTRY_FILE).exists() {
                    Store::init(&dir, &read_registry(path)?)?;
                }
            }
            let records = read_worksheet_file(&args.file).map_err(data_err)?;
            let mut store = Store::open(&dir)?;
            let report = ingest_records(store.engine_mut(), &records, Timestamp::now());
            store.persist()?;
            return finish_report(&report, porcelain, out);
        }
        Command::Validate(args) => {
            let records = read_worksheet_file(&args.file).map_err(data_err)?;
            let report = match &args.registry {
                Some(path) => validate_records(&records, &ValidationContext::new(&read_registry(path)?)).1,
                None => {
                    let store = Store::open(&dir)?;
                    let existing = store.engine().task_ids().cloned().collect();
                    let mut ctx = ValidationContext::new(store.registry());
                    ctx.existing = Some(&existing);
                    validate_records(&records, &ctx).1
                }
            };
            return finish_report(&report, porcelain, out);
        }
        Command::KbLoad { file, replace } => {
            let mut store = Store::open(&dir)?;
            let kb = if *replace {
                load_kb(file).map_err(data_err)?
            } else {
                let text = std::fs::read_to_string(file)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", file.display())))?;
                let mut kb = store.kb().clone();
                extend_kb(&mut kb, &text).map_err(data_err)?;
                kb
            };
            let findings = kb.check_consistency();
            if !findings.is_empty() {
                let mut msg = format!("{} consistency finding(s); nothing stored", findings.len());
                for f in &findings {
                    write!(msg, "\n  {f}").unwrap();
                }
                return Err(CliError::Data(msg));
            }
            store.replace_kb(kb).map_err(data_err)?;
            render_kb_summary(&store, porcelain)
        }
        Command::KbQuery { pattern } => {
            let store = Store::open(&dir)?;
            let pattern = parse_pattern(pattern, Some(APP_PREFIX)).map_err(usage_err)?;
            let rows = store.kb().query(&pattern);
            let vars: Vec<String> = [&pattern.subject, &pattern.predicate, &pattern.object]
                .into_iter()
                .filter_map(|t| match t {
                    sampling_core::ontology::PatternTerm::Var(v) => Some(v.clone()),
                    sampling_core::ontology::PatternTerm::Const(_) => None,
                })
                .fold(Vec::new(), |mut acc, v| {
                    if !acc.contains(&v) {
                        acc.push(v);
                    }
                    acc
                });
            render_bindings(&vars, &rows, porcelain)
        }
        Command::Route { date, zone, k, start } => {
            let date = date_arg(date)?;
            let store = Store::open(&dir)?;
            let model = config.distance_model().map_err(usage_err)?;
            let mut tasks: Vec<SamplingTask> = store
                .engine()
                .state()
                .worksheet(date)
                .map(|s| s.tasks.values().cloned().collect())
                .unwrap_or_default();
            if let Some(zone) = zone {
                if store.registry().zone(zone).is_none() {
                    return Err(CliError::Usage(format!("unknown zone `{zone}`")));
                }
                tasks.retain(|t| t.zone_id.as_str() == zone);
            }
            let start = start.as_deref().map(PointId::from);
            let plans = plan_routes(&tasks, store.registry(), *k, start.as_ref(), &model).map_err(data_err)?;
            render_routes(date, &plans, porcelain)
        }
        Command::Report { kind } => {
            let store = Store::open(&dir)?;
            match kind {
                ReportKind::Progress { date } => {
                    let date = date_arg(date)?;
                    let sheet = store.engine().state().worksheet(date);
                    let p = progress(sheet.into_iter().flat_map(|s| s.tasks.values()), Timestamp::now());
                    if porcelain {
                        let mut s = format!("total\t{}\n", p.total);
                        for (status, n) in &p.by_status {
                            writeln!(s, "status\t{status}\t{n}").unwrap();
                        }
                        writeln!(s, "completion_rate\t{:.6}", p.completion_rate).unwrap();
                        for (zone, r) in &p.by_zone {
                            writeln!(s, "zone\t{zone}\t{r:.6}").unwrap();
                        }
                        s
                    } else {
                        render_progress_table(date, &p)
                    }
                }
                ReportKind::Performance { from, to } => {
                    let s = performance(store.engine().events(), window(from, to.as_deref())?);
                    if porcelain {
                        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |v| format!("{v:.3}"));
                        format!(
                            "window\t{}\t{}\nattempts\t{}\nrejected\t{}\nerror_rate\t{:.6}\ncompleted_tasks\t{}\nmean_duration_secs\t{}\nmedian_duration_secs\t{}\nmax_duration_secs\t{}\n",
                            s.window.from,
                            s.window.to,
                            s.attempts,
                            s.rejected,
                            s.error_rate,
                            s.completed_tasks,
                            opt(s.mean_duration_secs),
                            opt(s.median_duration_secs),
                            s.max_duration_secs.map_or_else(|| "-".to_owned(), |v| v.to_string()),
                        )
                    } else {
                        render_performance_table(&s)
                    }
                }
                ReportKind::Feedback { from, to } => {
                    let digest = feedback_digest(&store.engine().state().feedback, window(from, to.as_deref())?);
                    let mut s = String::new();
                    for (category, entries) in &digest {
                        if !porcelain {
                            writeln!(s, "{} ({})", category.as_str(), entries.len()).unwrap();
                        }
                        for e in entries {
                            if porcelain {
                                writeln!(
                                    s,
                                    "feedback\t{}\t{}\t{}\t{}\t{}\t{}",
                                    category.as_str(),
                                    e.feedback_id,
                                    e.created_at,
                                    e.target,
                                    escape(&e.author),
                                    escape(&e.text)
                                )
                                .unwrap();
                            } else {
                                writeln!(s, "  {} {} {} [{}] {}", e.feedback_id, e.created_at, e.target, e.author, e.text).unwrap();
                            }
                        }
                    }
                    if s.is_empty() && !porcelain {
                        s.push_str("No feedback in window.\n");
                    }
                    s
                }
            }
        }
        Command::Serve => {
            init_tracing();
            let runtime = tokio::runtime::Runtime::new().map_err(usage_err)?;
            return match runtime.block_on(sampling_service::serve(config)) {
                Ok(()) => Ok(EXIT_OK),
                Err(e) => {
                    let code = e.exit_code();
                    let msg = e.to_string();
                    Err(if code == EXIT_DATA { CliError::Data(msg) } else { CliError::Usage(msg) })
                }
            };
        }
        Command::Export { date, out: path } => {
            let date = date_arg(date)?;
            let store = Store::open(&dir)?;
            let sheet = store.engine().state().worksheet(date);
            let bytes = export_worksheet(sheet.into_iter().flat_map(|s| s.tasks.values()));
            match path {
                Some(path) => {
                    std::fs::write(path, &bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
                    String::new()
                }
                None => String::from_utf8(bytes).expect("export is UTF-8"),
            }
        }
    };
    out.write_all(text.as_bytes()).map_err(data_err)?;
    Ok(EXIT_OK)
}

fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).try_init();
}

/// Tabs, newlines and backslashes escaped so one record stays on one line.
fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n").replace('\r', "\\r")
}

/// Rejected rows are a data error: the exit code is 2 even though accepted
/// rows of an `ingest` are kept.
fn finish_report(report: &IngestReport, porcelain: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut s = String::new();
    if porcelain {
        writeln!(s, "accepted\t{}", report.accepted_count).unwrap();
        writeln!(s, "rejected\t{}", report.rejected.len()).unwrap();
        if let Some(date) = report.source_date {
            writeln!(s, "source_date\t{date}").unwrap();
        }
        for r in &report.rejected {
            writeln!(s, "reject\t{}\t{}\t{}", r.row, r.reason.code(), escape(&r.reason.to_string())).unwrap();
        }
    } else {
        writeln!(s, "accepted {}, rejected {}", report.accepted_count, report.rejected.len()).unwrap();
        for r in &report.rejected {
            writeln!(s, "  row {}: {}", r.row, r.reason).unwrap();
        }
    }
    out.write_all(s.as_bytes()).map_err(data_err)?;
    Ok(if report.rejected.is_empty() { EXIT_OK } else { EXIT_DATA })
}

fn render_kb_summary(store: &Store, porcelain: bool) -> String {
    let kb = store.kb();
    let counts = [
        ("classes", kb.classes().count()),
        ("properties", kb.properties().count()),
        ("individuals", kb.individuals().count()),
        ("assertions", kb.assertions().count()),
        ("templates", kb.templates().count()),
    ];
    let mut s = String::new();
    if porcelain {
        for (name, n) in counts {
            writeln!(s, "{name}\t{n}").unwrap();
        }
        writeln!(s, "hash\t{}", kb.content_hash()).unwrap();
    } else {
        let parts: Vec<String> = counts.iter().map(|(name, n)| format!("{n} {name}")).collect();
        writeln!(s, "Knowledge base stored: {}", parts.join(", ")).unwrap();
        writeln!(s, "Content hash: {}", kb.content_hash()).unwrap();
    }
    s
}

fn render_bindings(vars: &[String], rows: &[Bindings], porcelain: bool) -> String {
    let cell = |row: &Bindings, v: &str| row.get(v).map(|t| t.to_string()).unwrap_or_default();
    let mut s = String::new();
    if porcelain {
        let header: Vec<String> = vars.iter().map(|v| format!("?{v}")).collect();
        writeln!(s, "vars\t{}", header.join("\t")).unwrap();
        for row in rows {
            let cells: Vec<String> = vars.iter().map(|v| escape(&cell(row, v))).collect();
            writeln!(s, "row\t{}", cells.join("\t")).unwrap();
        }
        return s;
    }
    let widths: Vec<usize> = vars
        .iter()
        .map(|v| rows.iter().map(|r| cell(r, v).chars().count()).max().unwrap_or(0).max(v.len() + 1))
        .collect();
    let line = |cells: Vec<String>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_owned()
    };
    writeln!(s, "{}", line(vars.iter().map(|v| format!("?{v}")).collect())).unwrap();
    for row in rows {
        writeln!(s, "{}", line(vars.iter().map(|v| cell(row, v)).collect())).unwrap();
    }
    writeln!(s, "{} binding(s)", rows.len()).unwrap();
    s
}

fn render_routes(date: NaiveDate, plans: &[RoutePlan], porcelain: bool) -> String {
    let mut s = String::new();
    for (i, plan) in plans.iter().enumerate() {
        let n = i + 1;
        if porcelain {
            writeln!(s, "plan\t{n}\t{}\t{}\t{:.6}", plan.start_point, plan.stops.len(), plan.total_cost).unwrap();
            for (j, stop) in plan.stops.iter().enumerate() {
                writeln!(s, "stop\t{n}\t{}\t{}\t{}\t{:.6}", j + 1, stop.task_id, stop.point_id, stop.leg_cost).unwrap();
            }
            continue;
        }
        writeln!(s, "Route {n} for {date}, start {}", plan.start_point).unwrap();
        let width = plan.stops.iter().map(|st| st.task_id.as_str().len()).max().unwrap_or(4).max(4);
        writeln!(s, "{:>3}  {:<width$}  {:<8} {:>8}", "#", "Task", "Point", "Leg").unwrap();
        for (j, stop) in plan.stops.iter().enumerate() {
            writeln!(s, "{:>3}  {:<width$}  {:<8} {:>8.3}", j + 1, stop.task_id.as_str(), stop.point_id.as_str(), stop.leg_cost).unwrap();
        }
        writeln!(s, "Total cost: {:.3}", plan.total_cost).unwrap();
        if n < plans.len() {
            s.push('\n');
        }
    }
    s
}
