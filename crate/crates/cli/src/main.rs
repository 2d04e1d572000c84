use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cpds::bundled;
use cpds::decide::{bfs_oracle, decide_branching, decide_finiteness, decide_unfolding, Answer, Params};
use cpds::export::{contracted_to_dot, graph_to_dot, graph_to_json};
use cpds::machine::{eps_contract, explore, generate_tree, replay, Caps, Config, CpsSpec, GeneratedTree, MachineError, Run};
use cpds::pumping::{iterate_pump, strictly_growing, PumpError};
use cpds::run_classes::{
    build_canonical_family, classify_pumping, derive, is_colreturn, is_nonerasing, is_return, parse_set_id, wf_closure,
    Grammar, SetId, Verdict,
};
use cpds::stack_core::top_position;
use cpds::text::{parse_cps, parse_script};
use cpds::type_engine::{EngineError, Limits, Mode, TypeEngine, TypeRef};

#[derive(Parser)]
#[command(name = "cpds", version, about = "Collapsible pushdown systems: runs, types, pumping and decisions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a script from the initial configuration.
    Run {
        /// system file, or @name for a bundled system
        #[arg(short = 'f', long)]
        file: String,
        #[arg(long)]
        script: String,
        #[arg(long)]
        trace: bool,
    },
    /// Breadth-first exploration of the configuration graph.
    Explore {
        #[arg(short = 'f', long)]
        file: String,
        #[arg(long)]
        depth: usize,
        /// ε-contract; depth then counts letters only
        #[arg(long)]
        eps: bool,
        /// write DOT here ("-" for stdout)
        #[arg(long)]
        dot: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Classify the run of a script.
    Classify {
        #[arg(short = 'f', long)]
        file: String,
        #[arg(long)]
        script: String,
        /// return:k, colreturn:k, nonerasing:k, pumping or set:<id>
        #[arg(long)]
        class: String,
        /// classify the subrun starting at this step
        #[arg(long, default_value_t = 0)]
        from: usize,
        /// also print the canonical grammar
        #[arg(long)]
        grammar: bool,
    },
    /// Stack types.
    Types {
        #[arg(short = 'f', long)]
        file: String,
        /// canonical, or a file with one base set id per line
        #[arg(long, default_value = "canonical")]
        family: String,
        #[arg(long)]
        exhaustive: bool,
        /// script to a configuration whose type is printed
        #[arg(long)]
        query: Option<String>,
    },
    /// Pumping classification and iteration.
    Pump {
        #[arg(short = 'f', long)]
        file: String,
        #[arg(long)]
        script: String,
        #[arg(long, default_value_t = 0)]
        from: usize,
        #[arg(long)]
        iterate: Option<usize>,
    },
    /// Decide a question about the ε-contraction.
    Decide {
        #[arg(short = 'f', long)]
        file: String,
        question: QuestionArg,
        #[arg(long, default_value_t = 2)]
        pump_depth: usize,
        #[arg(long, default_value_t = 4)]
        path_bound: usize,
        /// compare against a breadth-first search of this letter depth
        #[arg(long)]
        oracle_depth: Option<usize>,
    },
    /// Unfold a tree generator.
    Tree {
        #[arg(short = 'f', long)]
        file: String,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 100_000)]
        fuel: usize,
    },
    /// List the bundled systems, or print one.
    Examples { name: Option<String> },
}

#[derive(Clone, Copy, ValueEnum)]
enum QuestionArg {
    Branching,
    Finite,
    Unfolding,
}

enum Fail {
    Usage(String),
    Parse(String),
    Limit(String),
    Undefined(String),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Usage(_) => 1,
            Fail::Parse(_) => 2,
            Fail::Limit(_) => 3,
            Fail::Undefined(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Fail::Usage(m) | Fail::Parse(m) | Fail::Limit(m) | Fail::Undefined(m) => m,
        }
    }
}

impl From<MachineError> for Fail {
    fn from(e: MachineError) -> Fail {
        match e {
            MachineError::UndefinedOp { .. } | MachineError::NotEnabled { .. } => Fail::Undefined(e.to_string()),
            other => Fail::Usage(other.to_string()),
        }
    }
}

impl From<EngineError> for Fail {
    fn from(e: EngineError) -> Fail {
        match e {
            EngineError::LimitExceeded { .. } => Fail::Limit(e.to_string()),
            other => Fail::Usage(other.to_string()),
        }
    }
}

impl From<PumpError> for Fail {
    fn from(e: PumpError) -> Fail {
        match e {
            PumpError::Engine(x) => x.into(),
            PumpError::Machine(x) => Fail::Undefined(x),
            other => Fail::Usage(other.to_string()),
        }
    }
}

/// Output plus an exit status for outcomes that still print something.
struct Done {
    out: String,
    limit: Option<String>,
}

impl From<String> for Done {
    fn from(out: String) -> Done {
        Done { out, limit: None }
    }
}

fn max_nodes() -> usize {
    std::env::var("CPDS_MAX_STACK_NODES").ok().and_then(|v| v.parse().ok()).unwrap_or(200_000)
}

fn load(file: &str) -> Result<CpsSpec, Fail> {
    let text = match file.strip_prefix('@') {
        Some(name) => bundled::find(name)
            .ok_or_else(|| Fail::Usage(format!("no bundled system '{}'", name)))?
            .text
            .to_string(),
        None => std::fs::read_to_string(file).map_err(|e| Fail::Usage(format!("{}: {}", file, e)))?,
    };
    let spec = parse_cps(&text).map_err(|e| Fail::Parse(format!("{}: {}", file, e)))?;
    spec.validate().map_err(|e| Fail::Parse(format!("{}: {}", file, e)))?;
    Ok(spec)
}

fn script_run(spec: &CpsSpec, script: &str, from: usize) -> Result<Run, Fail> {
    let sel = parse_script(spec, script).map_err(|e| Fail::Parse(format!("script: {}", e)))?;
    let run = replay(spec, &spec.initial_config(), &sel)?;
    if from > run.len() {
        return Err(Fail::Usage(format!("--from {} is past the end of a run of length {}", from, run.len())));
    }
    Ok(run.subrun(from, run.len())?)
}

fn show_config(spec: &CpsSpec, c: &Config) -> String {
    format!("{} {}", spec.state_name(c.state), spec.render_stack(&c.stack))
}

fn write_out(path: &PathBuf, text: &str, out: &mut String) -> Result<(), Fail> {
    if path.as_os_str() == "-" {
        out.push_str(text);
        Ok(())
    } else {
        std::fs::write(path, text).map_err(|e| Fail::Usage(format!("{}: {}", path.display(), e)))
    }
}

fn cmd_run(file: &str, script: &str, trace: bool) -> Result<Done, Fail> {
    let spec = load(file)?;
    let run = script_run(&spec, script, 0)?;
    let mut out = String::new();
    if trace {
        writeln!(out, "0: {}", show_config(&spec, run.first())).unwrap();
        for (i, st) in run.steps.iter().enumerate() {
            writeln!(out, "   #{} {}", st.index, spec.describe_transition(st.index)).unwrap();
            writeln!(out, "{}: {}", i + 1, show_config(&spec, run.at(i + 1))).unwrap();
        }
    } else {
        writeln!(out, "{}", show_config(&spec, run.last())).unwrap();
    }
    Ok(out.into())
}

fn cmd_explore(file: &str, depth: usize, eps: bool, dot: Option<PathBuf>, json: Option<PathBuf>) -> Result<Done, Fail> {
    let spec = load(file)?;
    let caps = if eps { Caps::letters(depth) } else { Caps::depth(depth) };
    let g = explore(&spec, Caps { max_nodes: max_nodes(), ..caps });
    let c = eps.then(|| eps_contract(&g, true));
    let mut out = String::new();
    writeln!(out, "configurations: {}", g.nodes.len()).unwrap();
    writeln!(out, "edges: {}", g.edges.len()).unwrap();
    if let Some(c) = &c {
        writeln!(out, "contracted nodes: {}", c.nodes.len()).unwrap();
        writeln!(out, "contracted edges: {}", c.edges.len()).unwrap();
    }
    writeln!(out, "truncated: {}", g.truncated()).unwrap();
    if let Some(p) = dot {
        let text = match &c {
            Some(c) => contracted_to_dot(&spec, &g, c),
            None => graph_to_dot(&spec, &g),
        };
        write_out(&p, &text, &mut out)?;
    }
    if let Some(p) = json {
        write_out(&p, &graph_to_json(&g, c.as_ref()), &mut out)?;
    }
    let limit = g.truncated_nodes.then(|| format!("exploration stopped at {} configurations", g.nodes.len()));
    Ok(Done { out, limit })
}

fn canonical(spec: &CpsSpec) -> Grammar {
    let g = build_canonical_family(spec);
    if g.wf_closed {
        g
    } else {
        wf_closure(&g)
    }
}

fn show_verdict(v: &Verdict, what: &str) -> String {
    match v {
        Verdict::Yes { change_level } => format!("{}, change level {}", what, change_level),
        Verdict::No(why) => format!("not a {}: {}", what, why),
    }
}

fn level_arg(s: &str, spec: &CpsSpec) -> Result<u8, Fail> {
    let k: u8 = s.parse().map_err(|_| Fail::Usage(format!("bad level '{}'", s)))?;
    if k > spec.level {
        return Err(Fail::Usage(format!("level {} exceeds the system level {}", k, spec.level)));
    }
    Ok(k)
}

fn cmd_classify(file: &str, script: &str, class: &str, from: usize, grammar: bool) -> Result<Done, Fail> {
    let spec = load(file)?;
    let run = script_run(&spec, script, from)?;
    let mut out = String::new();
    let (kind, arg) = class.split_once(':').unwrap_or((class, ""));
    match kind {
        "return" | "colreturn" => {
            let k = level_arg(arg, &spec)?;
            if k == 0 {
                return Err(Fail::Usage("returns need a level of at least 1".into()));
            }
            let v = if kind == "return" { is_return(&run, k) } else { is_colreturn(&run, k) };
            writeln!(out, "{}", show_verdict(&v, &format!("{}-{}", k, kind))).unwrap();
        }
        "nonerasing" => {
            let k = level_arg(arg, &spec)?;
            let yes = is_nonerasing(&run, k);
            writeln!(out, "{}TOP{}-non-erasing", if yes { "" } else { "not " }, k).unwrap();
        }
        "pumping" => match classify_pumping(&run) {
            Ok((c, e)) => writeln!(out, "pumping run in {}", SetId::P(c, e)).unwrap(),
            Err(why) => writeln!(out, "not pumping: {}", why).unwrap(),
        },
        "set" => {
            let id = parse_set_id(arg).ok_or_else(|| Fail::Usage(format!("bad set id '{}'", arg)))?;
            let g = canonical(&spec);
            let x = g.id(&id).map_err(|e| Fail::Usage(e.to_string()))?;
            match derive(&g, &run, x) {
                Some(d) => {
                    writeln!(out, "in {}", id).unwrap();
                    out.push_str(&d.render(&g));
                }
                None => writeln!(out, "not in {}", id).unwrap(),
            }
        }
        _ => return Err(Fail::Usage(format!("unknown class '{}'", class))),
    }
    if grammar {
        out.push_str(&canonical(&spec).dump());
    }
    Ok(out.into())
}

fn family(spec: &CpsSpec, arg: &str) -> Result<Grammar, Fail> {
    let full = canonical(spec);
    if arg == "canonical" {
        return Ok(full);
    }
    let text = std::fs::read_to_string(arg).map_err(|e| Fail::Usage(format!("{}: {}", arg, e)))?;
    let mut roots = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let id = parse_set_id(line).ok_or_else(|| Fail::Parse(format!("{}: line {}: bad set id '{}'", arg, i + 1, line)))?;
        roots.push(full.id(&id).map_err(|e| Fail::Parse(format!("{}: line {}: {}", arg, i + 1, e)))?);
    }
    Ok(wf_closure(&full.restrict(&roots)))
}

fn cmd_types(file: &str, fam: &str, exhaustive: bool, query: Option<String>) -> Result<Done, Fail> {
    let spec = load(file)?;
    let g = family(&spec, fam)?;
    let mode = if exhaustive { Mode::Exhaustive } else { Mode::Pool };
    let mut e = TypeEngine::with(&spec, &g, mode, Limits::default())?;
    let c = match &query {
        Some(s) => script_run(&spec, s, 0)?.last().clone(),
        None => spec.initial_config(),
    };
    let ct = e.settle(|e| e.ctype(&c))?;
    let mut out = String::new();
    writeln!(out, "configuration: {}", show_config(&spec, &c)).unwrap();
    let TypeRef::Zero(z) = *ct.comps.last().unwrap() else { unreachable!("the last component has level 0") };
    let psi: Vec<_> = ct.comps[..ct.comps.len() - 1]
        .iter()
        .map(|t| match t {
            TypeRef::Set(s) => *s,
            TypeRef::Zero(_) => unreachable!("upper components are sets"),
        })
        .collect();
    let names: Vec<String> = psi.iter().map(|&s| e.set_name(s)).collect();
    writeln!(out, "components: {}", names.join(" ")).unwrap();
    for x in 0..g.sets.len() {
        let outs = e.zero_outcomes(z, &psi, c.state, x)?;
        let mut shown: Vec<String> = outs
            .iter()
            .map(|(q, om)| {
                let o: Vec<String> = om.iter().map(|&s| e.set_name(s)).collect();
                format!("{}({})", spec.state_name(*q), o.join(" "))
            })
            .collect();
        shown.sort();
        writeln!(out, "{}: {}", g.name(x), if shown.is_empty() { "-".to_string() } else { shown.join(", ") }).unwrap();
    }
    if query.is_none() {
        out.push_str(&serde_json::to_string_pretty(&e.dump_json()).expect("dumps serialize"));
        out.push('\n');
    }
    Ok(out.into())
}

fn cmd_pump(file: &str, script: &str, from: usize, iterate: Option<usize>) -> Result<Done, Fail> {
    let spec = load(file)?;
    let run = script_run(&spec, script, from)?;
    let mut out = String::new();
    match classify_pumping(&run) {
        Ok((c, e)) => writeln!(out, "pumping run in {}", SetId::P(c, e)).unwrap(),
        Err(why) => {
            writeln!(out, "not pumping: {}", why).unwrap();
            return Ok(out.into());
        }
    }
    if let Some(n) = iterate {
        let g = canonical(&spec);
        let mut e = TypeEngine::new(&spec, &g)?;
        let runs = iterate_pump(&mut e, &run, n)?;
        for (i, r) in runs.iter().enumerate() {
            let top = top_position(0, &r.last().stack).expect("configurations have a top");
            writeln!(out, "R{}: length {}, ends {} with TOP0 {}", i, r.len(), show_config(&spec, r.last()), top).unwrap();
        }
        writeln!(out, "strictly growing: {}", strictly_growing(&runs)).unwrap();
    }
    Ok(out.into())
}

fn cmd_decide(file: &str, q: QuestionArg, pump_depth: usize, path_bound: usize, oracle: Option<usize>) -> Result<Done, Fail> {
    let spec = load(file)?;
    let params = Params { pump_depth, path_bound, ..Params::default() };
    let v = match q {
        QuestionArg::Branching => decide_branching(&spec, &params),
        QuestionArg::Finite => decide_finiteness(&spec, &params),
        QuestionArg::Unfolding => decide_unfolding(&spec, &params),
    };
    let mut out = v.to_json();
    out.push('\n');
    if let Some(d) = oracle {
        let rep = bfs_oracle(&spec, d, 64);
        writeln!(out, "{}", serde_json::to_string_pretty(&rep).expect("reports serialize")).unwrap();
        if let QuestionArg::Branching = q {
            let agree = match v.answer {
                Answer::Infinite => rep.looks_infinitely_branching(),
                Answer::Finite | Answer::FiniteUpTo { .. } => !rep.looks_infinitely_branching(),
                Answer::Unknown { .. } => false,
            };
            writeln!(out, "oracle agrees: {}", agree).unwrap();
        }
    }
    let limit = match &v.answer {
        Answer::Unknown { limit } => Some(format!("limit exceeded: {}", limit)),
        _ => None,
    };
    Ok(Done { out, limit })
}

fn show_tree(spec: &CpsSpec, t: &GeneratedTree, depth: usize, out: &mut String) {
    let cut = if t.cut { " ..." } else { "" };
    writeln!(out, "{}{}{}", "  ".repeat(depth), spec.letters[t.label as usize], cut).unwrap();
    for c in &t.children {
        show_tree(spec, c, depth + 1, out);
    }
}

fn cmd_tree(file: &str, depth: usize, fuel: usize) -> Result<Done, Fail> {
    let spec = load(file)?;
    let rep = generate_tree(&spec, depth, fuel)?;
    let mut out = String::new();
    match &rep.tree {
        Some(t) => show_tree(&spec, t, 0, &mut out),
        None => writeln!(out, "(no tree)").unwrap(),
    }
    for u in &rep.unknown {
        writeln!(out, "unknown: {}", u).unwrap();
    }
    let limit = (!rep.unknown.is_empty()).then(|| "ε-phase fuel exhausted".to_string());
    Ok(Done { out, limit })
}

fn cmd_examples(name: Option<String>) -> Result<Done, Fail> {
    let mut out = String::new();
    match name {
        Some(n) => {
            let b = bundled::find(&n).ok_or_else(|| Fail::Usage(format!("no bundled system '{}'", n)))?;
            out.push_str(b.text);
        }
        None => {
            for b in bundled::ALL {
                writeln!(out, "{:<14} {}", b.name, b.summary()).unwrap();
            }
        }
    }
    Ok(out.into())
}

fn dispatch(cmd: Cmd) -> Result<Done, Fail> {
    match cmd {
        Cmd::Run { file, script, trace } => cmd_run(&file, &script, trace),
        Cmd::Explore { file, depth, eps, dot, json } => cmd_explore(&file, depth, eps, dot, json),
        Cmd::Classify { file, script, class, from, grammar } => cmd_classify(&file, &script, &class, from, grammar),
        Cmd::Types { file, family, exhaustive, query } => cmd_types(&file, &family, exhaustive, query),
        Cmd::Pump { file, script, from, iterate } => cmd_pump(&file, &script, from, iterate),
        Cmd::Decide { file, question, pump_depth, path_bound, oracle_depth } => {
            cmd_decide(&file, question, pump_depth, path_bound, oracle_depth)
        }
        Cmd::Tree { file, depth, fuel } => cmd_tree(&file, depth, fuel),
        Cmd::Examples { name } => cmd_examples(name),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.cmd) {
        Ok(d) => {
            // a closed pipe (e.g. `| head`) is not an error worth a panic
            let _ = std::io::Write::write_all(&mut std::io::stdout().lock(), d.out.as_bytes());
            match d.limit {
                Some(m) => {
                    eprintln!("{}", m);
                    ExitCode::from(3)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
