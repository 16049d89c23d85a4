//! `kbmc`: check knowledge bases, answer queries, project plans and
//! compare against the enumeration oracle.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kbmc::bench::{compare_encodings, to_csv, EncodingPair};
use kbmc::check::check_kb;
use kbmc::combining::RuleRegistry;
use kbmc::infer::{answer_query, QueryAnswer};
use kbmc::lang::{
    parse_atoms, parse_kb, parse_query, validate_session, Atom, AtomKind, Bounds, KnowledgeBase, Name, PredKind, Session,
    SessionInput, Term,
};
use kbmc::netbuild::{build_net, export_dot};
use kbmc::oracle::{forward_sample, oracle_answer};
use kbmc::Error;

use report::{render_answer, Format};

#[derive(Parser)]
#[command(name = "kbmc", version, about = "Context-sensitive probabilistic knowledge bases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a knowledge base and run the acyclicity, allowedness and
    /// quantification checks.
    Check(CheckArgs),
    /// Answer a query under context and evidence.
    Query(QueryArgs),
    /// Answer a time-indexed query at every timestep under a plan.
    Project(ProjectArgs),
    /// Write the supporting network of a query as Graphviz DOT.
    ExportDot(DotArgs),
    /// Compare variable elimination against exhaustive enumeration.
    OracleDiff(DiffArgs),
    /// Compare the context encoding with an actions-as-nodes encoding.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Json,
}

#[derive(Args)]
struct CheckArgs {
    /// Knowledge base file.
    kb: PathBuf,
    /// Context facts file.
    #[arg(long)]
    context: Option<PathBuf>,
    /// Evidence file.
    #[arg(long)]
    evidence: Option<PathBuf>,
    #[arg(long)]
    from: Option<i64>,
    #[arg(long)]
    to: Option<i64>,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
}

#[derive(Args)]
struct SessionArgs {
    /// Knowledge base file.
    kb: PathBuf,
    /// Query atom whose last argument is a variable, e.g. "rhythm(john, 3, V)".
    query_text: Option<String>,
    /// Query atom, as an alternative to the positional form.
    #[arg(long = "query")]
    query_flag: Option<String>,
    /// Context facts file.
    #[arg(long)]
    context: Option<PathBuf>,
    /// Evidence file.
    #[arg(long)]
    evidence: Option<PathBuf>,
    #[arg(long)]
    from: Option<i64>,
    #[arg(long)]
    to: Option<i64>,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    session: SessionArgs,
}

#[derive(Args)]
struct ProjectArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Plan file: timed context atoms naming the actions taken.
    #[arg(long)]
    plan: Option<PathBuf>,
}

#[derive(Args)]
struct DotArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DiffArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Also cross-check with rejection sampling under this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of forward samples drawn when a seed is given.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Enumerate the full relevant atom set instead of the query's ancestors.
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Plan file: timed context atoms naming the actions taken.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Action predicates, comma separated. Defaults to every context
    /// predicate without defining clauses.
    #[arg(long, value_delimiter = ',')]
    actions: Vec<String>,
}

/// A failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure { code: 1, message: message.into() }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Cycle(_) | Error::DepthExceeded { .. } => 2,
        Error::NotAllowed(_) | Error::Floundering { .. } => 3,
        Error::ImpossibleEvidence | Error::NoAcceptedSamples => 4,
        Error::EnumerationGuard { .. } => 5,
        Error::ConflictingSentences { .. }
        | Error::Combining { .. }
        | Error::MissingCpt { .. }
        | Error::Inconsistent { .. }
        | Error::PosteriorMismatch { .. } => 6,
        _ => 1,
    }
}

/// Attaches a file name to located syntax errors.
fn in_file(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| {
        let message = match &e {
            Error::Syntax(diags) => diags.iter().map(|d| d.render(&path.display().to_string())).collect::<Vec<_>>().join("\n"),
            other => format!("{}: {}", path.display(), other),
        };
        Failure { code: exit_code(&e), message }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure { code: exit_code(&e), message: e.to_string() }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {}", path.display(), e)))
}

fn load_kb(path: &Path) -> Result<KnowledgeBase, Failure> {
    parse_kb(&read(path)?).map_err(in_file(path))
}

fn load_atoms(path: Option<&Path>, kb: &KnowledgeBase, kind: AtomKind) -> Result<Vec<Atom>, Failure> {
    match path {
        Some(p) => parse_atoms(&read(p)?, kb, kind).map_err(in_file(p)),
        None => Ok(Vec::new()),
    }
}

fn time_of(kb: &KnowledgeBase, atom: &Atom) -> Option<i64> {
    let pos = kb.predicate(&atom.pred)?.time_position?;
    match atom.args.get(pos)? {
        Term::Int(t) => Some(*t),
        _ => None,
    }
}

/// `--from/--to`, defaulting to zero and the latest timestamp mentioned.
fn bounds(from: Option<i64>, to: Option<i64>, kb: &KnowledgeBase, atoms: &[&Atom]) -> Bounds {
    let latest = atoms.iter().filter_map(|a| time_of(kb, a)).max().unwrap_or(0);
    let from = from.unwrap_or(0);
    Bounds::new(from, to.unwrap_or(latest.max(from)))
}

/// Latest timestamp or offset written in the knowledge base itself.
fn kb_horizon(kb: &KnowledgeBase) -> i64 {
    let sentences = kb.pb.iter().flat_map(|s| s.atoms().cloned().collect::<Vec<_>>());
    let clauses = kb.cb.iter().flat_map(|c| c.atoms().cloned().collect::<Vec<_>>());
    sentences
        .chain(clauses)
        .filter_map(|a| {
            let pos = kb.predicate(&a.pred)?.time_position?;
            match &a.args[pos] {
                Term::Int(t) => Some(*t),
                Term::Offset(_, k) => Some(k.abs()),
                _ => None,
            }
        })
        .max()
        .unwrap_or(0)
        .max(0)
}

/// Parsed inputs shared by the query-style commands.
struct Loaded {
    kb: KnowledgeBase,
    context: Vec<Atom>,
    evidence: Vec<Atom>,
    query: Atom,
    query_text: String,
    format: Format,
}

impl SessionArgs {
    fn load(&self, extra_context: Option<&Path>) -> Result<Loaded, Failure> {
        let kb = load_kb(&self.kb)?;
        let query_text = match (&self.query_text, &self.query_flag) {
            (Some(_), Some(_)) => return Err(Failure::usage("give the query either positionally or with --query")),
            (Some(q), None) | (None, Some(q)) => q.clone(),
            (None, None) => return Err(Failure::usage("a query is required")),
        };
        let query = parse_query(&query_text, &kb).map_err(|e| Failure::from(e).prefixed("query"))?;
        let mut context = load_atoms(self.context.as_deref(), &kb, AtomKind::Context)?;
        context.extend(load_atoms(extra_context, &kb, AtomKind::Context)?);
        let evidence = load_atoms(self.evidence.as_deref(), &kb, AtomKind::Prob)?;
        let format = match self.format {
            FormatArg::Table => Format::Table,
            FormatArg::Json => Format::Json,
        };
        Ok(Loaded { kb, context, evidence, query, query_text, format })
    }
}

impl Failure {
    fn prefixed(self, what: &str) -> Failure {
        Failure { message: format!("{}: {}", what, self.message), ..self }
    }
}

impl Loaded {
    fn default_bounds(&self, args: &SessionArgs) -> Bounds {
        let atoms: Vec<&Atom> = self.context.iter().chain(&self.evidence).chain(std::iter::once(&self.query)).collect();
        bounds(args.from, args.to, &self.kb, &atoms)
    }

    fn session(&self, query: &Atom, b: Bounds) -> Result<Session, Failure> {
        let input =
            SessionInput { context: self.context.clone(), evidence: self.evidence.clone(), bounds: b, query: Some(query.clone()) };
        Ok(validate_session(&self.kb, &input)?)
    }
}

fn cmd_check(args: &CheckArgs) -> Result<(), Failure> {
    let json = matches!(args.format, FormatArg::Json);
    let outcome = (|| -> Result<Bounds, Failure> {
        let kb = load_kb(&args.kb)?;
        let context = load_atoms(args.context.as_deref(), &kb, AtomKind::Context)?;
        let evidence = load_atoms(args.evidence.as_deref(), &kb, AtomKind::Prob)?;
        let latest = context.iter().chain(&evidence).filter_map(|a| time_of(&kb, a)).max().unwrap_or(0);
        let from = args.from.unwrap_or(0);
        let b = Bounds::new(from, args.to.unwrap_or(kb_horizon(&kb).max(latest).max(from)));
        let s = validate_session(&kb, &SessionInput { context, evidence, bounds: b, query: None })?;
        check_kb(&kb, &s, &RuleRegistry::default()).map_err(|e| match e {
            Error::Cycle(w) => Failure { code: 2, message: format!("cycle detected: {}", w.join(" -> ")) },
            other => Failure::from(other),
        })?;
        Ok(b)
    })();
    match (&outcome, json) {
        (Ok(b), false) => println!("ok: {} passes all checks over [{}, {}]", args.kb.display(), b.from, b.to),
        (Ok(b), true) => println!("{}", report::check_json(true, 0, "", Some(*b))),
        (Err(f), true) => println!("{}", report::check_json(false, f.code, &f.message, None)),
        (Err(_), false) => {}
    }
    outcome.map(|_| ())
}

fn answer(loaded: &Loaded, session: &Session) -> Result<QueryAnswer, Failure> {
    Ok(answer_query(&loaded.kb, session, &RuleRegistry::default())?)
}

fn cmd_query(args: &QueryArgs) -> Result<(), Failure> {
    let loaded = args.session.load(None)?;
    let b = loaded.default_bounds(&args.session);
    let s = loaded.session(&loaded.query, b)?;
    let ans = answer(&loaded, &s)?;
    if ans.instances.is_empty() {
        eprintln!("no answer: no query instance has a supporting network within [{}, {}]", b.from, b.to);
    }
    print!("{}", render_answer(&loaded.kb, &loaded.query_text, b, &ans, loaded.format));
    Ok(())
}

/// The query with its time argument bound to `t`.
fn at_time(kb: &KnowledgeBase, query: &Atom, t: i64) -> Result<Atom, Failure> {
    let pos = kb
        .predicate(&query.pred)
        .and_then(|d| d.time_position)
        .ok_or_else(|| Failure::usage(format!("{} is not time-indexed", query.pred)))?;
    let mut q = query.clone();
    match &q.args[pos] {
        Term::Var(_) => q.args[pos] = Term::Int(t),
        _ => return Err(Failure::usage("project needs a query whose time argument is a variable")),
    }
    Ok(q)
}

fn cmd_project(args: &ProjectArgs) -> Result<(), Failure> {
    let loaded = args.session.load(args.plan.as_deref())?;
    let b = loaded.default_bounds(&args.session);
    let mut steps = Vec::new();
    for t in b.from..=b.to {
        let q = at_time(&loaded.kb, &loaded.query, t)?;
        let s = loaded.session(&q, b)?;
        steps.push((t, answer(&loaded, &s)?));
    }
    print!("{}", report::render_projection(&loaded.kb, &loaded.query_text, b, &steps, loaded.format));
    Ok(())
}

fn cmd_export_dot(args: &DotArgs) -> Result<(), Failure> {
    let loaded = args.session.load(None)?;
    let b = loaded.default_bounds(&args.session);
    let s = loaded.session(&loaded.query, b)?;
    let built = build_net(&loaded.kb, &s, &RuleRegistry::default())?;
    let dot = export_dot(&built.net);
    match &args.output {
        Some(p) => fs::write(p, dot).map_err(|e| Failure::usage(format!("{}: {}", p.display(), e)))?,
        None => print!("{}", dot),
    }
    Ok(())
}

fn cmd_oracle_diff(args: &DiffArgs) -> Result<(), Failure> {
    let loaded = args.session.load(None)?;
    let b = loaded.default_bounds(&args.session);
    let s = loaded.session(&loaded.query, b)?;
    let reg = RuleRegistry::default();
    let ve = answer_query(&loaded.kb, &s, &reg)?;
    let or = oracle_answer(&loaded.kb, &s, &reg, !args.full)?;
    let objs = |a: &QueryAnswer| a.instances.iter().map(|i| i.posterior.obj.clone()).collect::<Vec<_>>();
    if objs(&ve) != objs(&or) {
        return Err(Failure {
            code: 6,
            message: format!("instance sets differ: {} answered by elimination, {} by enumeration", ve.instances.len(), or.instances.len()),
        });
    }
    let delta = ve.instances.iter().zip(&or.instances).map(|(a, b)| a.posterior.max_abs_diff(&b.posterior)).fold(0.0, f64::max);
    println!("instances: {}", ve.instances.len());
    println!("max |delta|: {:e}", delta);
    if let Some(seed) = args.seed {
        let built = build_net(&loaded.kb, &s, &reg)?;
        let targets: Vec<_> = built.instances.iter().map(|q| q.obj.clone()).collect();
        // sampling is a side check; it does not decide the exit status
        match forward_sample(&built.net, &s.evidence, &targets, args.samples, seed) {
            Ok(est) => {
                let sd = est.posteriors.iter().zip(&ve.instances).map(|(e, x)| e.max_abs_diff(&x.posterior)).fold(0.0, f64::max);
                println!("sampling max |delta|: {:e} ({} of {} samples accepted, seed {})", sd, est.accepted, args.samples, seed);
            }
            Err(Error::NoAcceptedSamples) => println!("sampling: none of {} samples matched the evidence (seed {})", args.samples, seed),
            Err(e) => return Err(e.into()),
        }
    }
    if delta <= 1e-9 {
        Ok(())
    } else {
        Err(Error::PosteriorMismatch { delta }.into())
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let loaded = args.session.load(None)?;
    let plan = load_atoms(args.plan.as_deref(), &loaded.kb, AtomKind::Context)?;
    let mut atoms: Vec<&Atom> = plan.iter().collect();
    atoms.extend(loaded.context.iter().chain(&loaded.evidence).chain(std::iter::once(&loaded.query)));
    let b = bounds(args.session.from, args.session.to, &loaded.kb, &atoms);
    let actions: Vec<Name> = if args.actions.is_empty() {
        let defined: Vec<&Name> = loaded.kb.cb.iter().map(|c| &c.head.pred).collect();
        loaded
            .kb
            .predicates
            .values()
            .filter(|d| d.kind == PredKind::Context && !defined.contains(&&d.name))
            .map(|d| d.name.clone())
            .collect()
    } else {
        args.actions.iter().map(|a| Name::from(a.as_str())).collect()
    };
    let ground: Vec<_> = plan
        .iter()
        .map(|a| a.to_ground().ok_or_else(|| Failure::usage(format!("plan atom {} is not ground", a))))
        .collect::<Result<_, _>>()?;
    let start = Instant::now();
    let pair = EncodingPair::derive(&loaded.kb, &actions, &ground, b)?;
    let mut with_plan = loaded.context.clone();
    with_plan.extend(plan.iter().cloned());
    let input = SessionInput { context: with_plan, evidence: loaded.evidence.clone(), bounds: b, query: Some(loaded.query.clone()) };
    let s = validate_session(&loaded.kb, &input)?;
    let c = compare_encodings(&pair, &s, &RuleRegistry::default(), 1e-9)?;
    print!("{}", to_csv(&[c.context, c.action_node]));
    eprintln!("compiled in {:.1} ms, max |delta| {:e}", start.elapsed().as_secs_f64() * 1e3, c.max_delta);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Query(a) => cmd_query(a),
        Command::Project(a) => cmd_project(a),
        Command::ExportDot(a) => cmd_export_dot(a),
        Command::OracleDiff(a) => cmd_oracle_diff(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
