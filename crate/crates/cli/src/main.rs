//! `skyshare`: dataset generation, dealing, serving, querying, verification
//! and benchmark sweeps.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use skyshare::correlated::{budget_for_query, deal_pools, CorrelationPool};
use skyshare::datasets::{generate, write_csv, DatasetKind, DatasetSpec};
use skyshare::gadgets::MultiBaMode;
use skyshare::plaintext::{plaintext_skyline, same_rows, PlainDatabase};
use skyshare::protocol::cost::secext_formula;
use skyshare::protocol::{default_vmax, vmax_from_exp, SharedDatabase};
use skyshare::runtime::client;
use skyshare::runtime::local::{local_query, LocalConfig};
use skyshare::runtime::metrics::{meter_report, SessionMetrics, CSV_HEADER};
use skyshare::runtime::server::{spawn_server, ServerConfig};
use skyshare::store::share_database;
use skyshare::{Error, PartyId, Ring, RingElement};

#[derive(Parser, Debug)]
#[command(name = "skyshare", version, about = "Two-server secret-shared skyline queries")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Ring width in bits.
    #[arg(long = "l", global = true, default_value_t = 64)]
    l: u32,
    /// Sentinel exponent: vMAX = 2^exp (at most l - 2; default l - 2).
    #[arg(long, global = true)]
    vmax_exp: Option<u32>,
    /// One-way latency injected per flight, in milliseconds.
    #[arg(long, global = true, default_value_t = 1)]
    latency_ms: u64,
    /// Seed for data generation, sharing and dealing.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// How secret bits multiply shared values.
    #[arg(long, global = true, value_enum, default_value_t = Mode::Dabit)]
    mode: Mode,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Dabit,
    TwoMessage,
}

impl From<Mode> for MultiBaMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Dabit => MultiBaMode::DaBit,
            Mode::TwoMessage => MultiBaMode::TwoMessage,
        }
    }
}

impl Global {
    fn ring(&self) -> anyhow::Result<Ring> {
        Ok(Ring::new(self.l)?)
    }

    fn vmax(&self) -> anyhow::Result<RingElement> {
        let ring = self.ring()?;
        Ok(match self.vmax_exp {
            Some(e) => vmax_from_exp(ring, e)?,
            None => default_vmax(ring),
        })
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn latency(&self) -> Duration {
        Duration::from_millis(self.latency_ms)
    }

    fn local_config(&self, seed: u64) -> anyhow::Result<LocalConfig> {
        Ok(LocalConfig::new(self.ring()?)
            .with_mode(self.mode.into())
            .with_latency(self.latency())
            .with_seed(seed)
            .with_vmax(self.vmax()?))
    }
}

/// Dataset selection. A config file is read first; flags override it.
#[derive(Args, Debug, Clone, Default)]
struct DatasetArgs {
    /// `key = value` dataset description.
    #[arg(long)]
    config: Option<PathBuf>,
    /// corr, inde, anti or csv.
    #[arg(long)]
    kind: Option<DatasetKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Attribute bound B for synthetic data.
    #[arg(long)]
    bound: Option<u64>,
    /// CSV file to load (implies --kind csv).
    #[arg(long)]
    input: Option<PathBuf>,
    /// CSV columns to use, comma-separated (default: all).
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
    /// Multiplier applied to CSV values before rounding.
    #[arg(long)]
    scale: Option<u32>,
}

impl DatasetArgs {
    fn spec(&self, seed: Option<u64>) -> anyhow::Result<DatasetSpec> {
        let mut spec = match &self.config {
            Some(path) => DatasetSpec::from_config_file(path)
                .with_context(|| format!("reading {}", path.display()))?,
            None => {
                let kind = match (self.kind, &self.input) {
                    (Some(k), _) => k,
                    (None, Some(_)) => DatasetKind::Csv,
                    (None, None) => bail!(Error::InvalidArgument(
                        "no dataset: pass --kind, --input or --config".into()
                    )),
                };
                DatasetSpec::synthetic(kind, 0, 0, 0)
            }
        };
        if let Some(k) = self.kind {
            spec.kind = k;
        }
        if let Some(p) = &self.input {
            spec.path = Some(p.clone());
            if self.kind.is_none() {
                spec.kind = DatasetKind::Csv;
            }
        }
        if let Some(n) = self.n {
            spec.n = n;
        }
        if let Some(m) = self.m {
            spec.m = m;
        }
        if let Some(b) = self.bound {
            spec.bound = b;
        }
        if let Some(s) = self.scale {
            spec.scale = s;
        }
        if !self.columns.is_empty() {
            spec.columns = self.columns.clone();
        }
        if let Some(s) = seed {
            spec.seed = s;
        }
        Ok(spec)
    }

    fn load(&self, seed: Option<u64>) -> anyhow::Result<PlainDatabase> {
        let spec = self.spec(seed)?;
        generate(&spec).with_context(|| match &spec.path {
            Some(p) if spec.kind == DatasetKind::Csv => format!("loading {}", p.display()),
            _ => format!("generating {} data", spec.kind),
        })
    }
}

#[derive(Args, Debug, Clone)]
struct ServerPair {
    /// Address of the first server.
    #[arg(long)]
    server1: Option<String>,
    /// Address of the second server.
    #[arg(long)]
    server2: Option<String>,
}

impl ServerPair {
    fn get(&self) -> Option<[&str; 2]> {
        Some([self.server1.as_deref()?, self.server2.as_deref()?])
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a dataset as CSV.
    Gen {
        #[command(flatten)]
        data: DatasetArgs,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Share a dataset and deal randomness pools for both servers.
    Deal {
        #[command(flatten)]
        data: DatasetArgs,
        /// Directory receiving share-{1,2}.sky and pool-{1,2}.bin.
        #[arg(long)]
        out_dir: PathBuf,
        /// Largest skyline a query may return (default n).
        #[arg(long)]
        k_max: Option<usize>,
        /// Number of queries the pools must cover.
        #[arg(long, default_value_t = 1)]
        queries: u64,
    },
    /// Run one server.
    Serve {
        /// 1 or 2.
        #[arg(long)]
        party: u8,
        #[arg(long, default_value = "127.0.0.1:7001")]
        listen: String,
        /// Second server's address (first server only).
        #[arg(long)]
        peer: Option<String>,
        #[arg(long)]
        shares: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        /// Must equal the value used when dealing (default n).
        #[arg(long)]
        k_max: Option<usize>,
        /// Append one metrics row per finished session.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Exit after this many sessions.
        #[arg(long)]
        max_sessions: Option<usize>,
    },
    /// Share a query, send it to both servers and print the skyline.
    Query {
        #[command(flatten)]
        servers: ServerPair,
        /// Query tuple, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        q: Vec<u64>,
        #[arg(long, default_value_t = 60_000)]
        timeout_ms: u64,
    },
    /// Compare random secure queries against the plaintext engine.
    Verify {
        #[command(flatten)]
        data: DatasetArgs,
        /// Number of random queries.
        #[arg(long)]
        queries: usize,
        /// Run both servers in this process.
        #[arg(long)]
        local: bool,
        #[command(flatten)]
        servers: ServerPair,
    },
    /// Sweep n and m in-process and emit metrics CSV.
    Bench {
        /// Dataset kinds, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "inde")]
        kinds: Vec<DatasetKind>,
        /// Database sizes, comma-separated.
        #[arg(long = "n", value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        /// Dimensions, comma-separated.
        #[arg(long = "m", value_delimiter = ',', required = true)]
        ms: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        bound: u64,
        /// Queries per cell.
        #[arg(long, default_value_t = 1)]
        queries: usize,
        /// Output CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run cells concurrently (timings become unreliable).
        #[arg(long)]
        parallel_cells: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (class, code) = classify(&e);
            let line = one_line(&e);
            let line = line.strip_prefix(&format!("{class}: ")).unwrap_or(&line);
            eprintln!("skyshare: {class}: {line}");
            ExitCode::from(code)
        }
    }
}

/// Secure and plaintext results differ.
#[derive(Debug)]
struct Mismatch(String);

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Mismatch {}

fn one_line(e: &anyhow::Error) -> String {
    e.chain().map(|c| c.to_string()).collect::<Vec<_>>().join(": ")
}

/// Failure class and exit code.
fn classify(e: &anyhow::Error) -> (&'static str, u8) {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Io(_) => ("I/O error", 3),
                Error::Csv { .. } | Error::Format(_) | Error::InvalidSpec(_) => ("parse error", 4),
                Error::Network(_) | Error::ChannelClosed => ("network error", 5),
                Error::Protocol(_) | Error::MalformedFrame(_) | Error::VersionMismatch { .. } => {
                    ("protocol error", 6)
                }
                _ => ("invalid input", 2),
            };
        }
        if cause.downcast_ref::<Mismatch>().is_some() {
            return ("verification failed", 1);
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return ("I/O error", 3);
        }
    }
    ("error", 1)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = cli.global;
    g.vmax()?;
    match cli.command {
        Command::Gen { data, out } => cmd_gen(&g, &data, out.as_deref()),
        Command::Deal {
            data,
            out_dir,
            k_max,
            queries,
        } => cmd_deal(&g, &data, &out_dir, k_max, queries),
        Command::Serve {
            party,
            listen,
            peer,
            shares,
            pool,
            k_max,
            metrics,
            max_sessions,
        } => {
            let party = PartyId::from_u8(party)?;
            let cfg = ServerConfig {
                party,
                listen,
                peer,
                latency: g.latency(),
                mode: g.mode.into(),
                k_max: 0,
            };
            cmd_serve(cfg, &shares, &pool, k_max, metrics.as_deref(), max_sessions)
        }
        Command::Query {
            servers,
            q,
            timeout_ms,
        } => cmd_query(&g, &servers, &q, timeout_ms),
        Command::Verify {
            data,
            queries,
            local,
            servers,
        } => cmd_verify(&g, &data, queries, local, &servers),
        Command::Bench {
            kinds,
            ns,
            ms,
            bound,
            queries,
            out,
            parallel_cells,
        } => {
            let sweep = Sweep {
                kinds,
                ns,
                ms,
                bound,
                queries,
            };
            cmd_bench(&g, &sweep, out.as_deref(), parallel_cells)
        }
    }
}

fn open_out(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(Error::Io).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_gen(g: &Global, data: &DatasetArgs, out: Option<&Path>) -> anyhow::Result<()> {
    let db = data.load(g.seed)?;
    write_csv(&db, open_out(out)?, None)?;
    Ok(())
}

fn cmd_deal(
    g: &Global,
    data: &DatasetArgs,
    out_dir: &Path,
    k_max: Option<usize>,
    queries: u64,
) -> anyhow::Result<()> {
    let ring = g.ring()?;
    let vmax = g.vmax()?;
    if queries == 0 {
        bail!(Error::InvalidArgument("--queries must be at least 1".into()));
    }
    let db = data.load(g.seed)?;
    let k_max = k_max.unwrap_or(db.n);
    let per_query = budget_for_query(ring, db.n, db.m, k_max, g.mode.into())?;
    let mut rng = ChaCha12Rng::seed_from_u64(g.seed());
    let shares = share_database(ring, &db, vmax, &mut rng)?;
    let (p1, p2) = deal_pools(ring, &per_query.times(queries), vmax, &mut rng);

    fs::create_dir_all(out_dir)
        .map_err(Error::Io)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    for (i, (share, pool)) in shares.iter().zip([p1, p2]).enumerate() {
        let sp = out_dir.join(format!("share-{}.sky", i + 1));
        let pp = out_dir.join(format!("pool-{}.bin", i + 1));
        share.save(&sp).with_context(|| format!("writing {}", sp.display()))?;
        pool.save(&pp).with_context(|| format!("writing {}", pp.display()))?;
        println!("{}", sp.display());
        println!("{}", pp.display());
    }
    Ok(())
}

fn cmd_serve(
    mut cfg: ServerConfig,
    shares: &Path,
    pool: &Path,
    k_max: Option<usize>,
    metrics: Option<&Path>,
    max_sessions: Option<usize>,
) -> anyhow::Result<()> {
    let db = SharedDatabase::load(shares).with_context(|| format!("loading {}", shares.display()))?;
    let pool = CorrelationPool::load(pool).with_context(|| format!("loading {}", pool.display()))?;
    cfg.k_max = k_max.unwrap_or(db.n);
    let handle = spawn_server(cfg, db, pool)?;
    eprintln!("listening on {}", handle.addr());
    let mut reported = 0;
    loop {
        thread::sleep(Duration::from_millis(50));
        let done = handle.metrics();
        if done.len() > reported {
            let fresh = &done[reported..];
            for m in fresh {
                log::info!("session finished\n{}", m.to_text());
            }
            if let Some(path) = metrics {
                skyshare::runtime::metrics::append_csv(path, fresh)?;
            }
            reported = done.len();
        }
        if max_sessions.is_some_and(|max| reported >= max) {
            handle.shutdown();
            return Ok(());
        }
    }
}

fn cmd_query(g: &Global, servers: &ServerPair, q: &[u64], timeout_ms: u64) -> anyhow::Result<()> {
    let ring = g.ring()?;
    let vmax = g.vmax()?;
    let Some(addrs) = servers.get() else {
        bail!(Error::InvalidArgument("--server1 and --server2 are required".into()));
    };
    let mut rng = ChaCha12Rng::seed_from_u64(g.seed.unwrap_or_else(rand::random));
    let timeout = Some(Duration::from_millis(timeout_ms));
    let rows = client::query(addrs, ring, vmax, q, timeout, &mut rng)?;
    let mut out = io::stdout().lock();
    for row in rows {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Separates the query stream from the dataset stream of the same seed.
const QUERY_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

fn random_query(rng: &mut impl Rng, m: usize, bound: u64) -> Vec<u64> {
    (0..m).map(|_| rng.gen_range(0..=bound)).collect()
}

fn cmd_verify(
    g: &Global,
    data: &DatasetArgs,
    queries: usize,
    local: bool,
    servers: &ServerPair,
) -> anyhow::Result<()> {
    if queries == 0 {
        bail!(Error::InvalidArgument("--queries must be at least 1".into()));
    }
    let remote = servers.get();
    if local == remote.is_some() {
        bail!(Error::InvalidArgument(
            "choose exactly one of --local or --server1/--server2".into()
        ));
    }
    let db = data.load(g.seed)?;
    let ring = g.ring()?;
    let vmax = g.vmax()?;
    let seed = g.seed();
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ QUERY_STREAM);
    let mut matched = 0;
    for i in 0..queries {
        let q = random_query(&mut rng, db.m, db.bound);
        let got = match remote {
            None => local_query(&g.local_config(seed.wrapping_add(i as u64))?, &db, &q)?.rows,
            Some(addrs) => client::query(addrs, ring, vmax, &q, None, &mut rng)?,
        };
        let expect = plaintext_skyline(&db, &q)?;
        if same_rows(&got, &expect) {
            matched += 1;
        } else {
            log::warn!("query {i} {q:?}: {} rows, expected {}", got.len(), expect.len());
        }
    }
    let rate = 100.0 * matched as f64 / queries as f64;
    println!("matched {matched}/{queries} ({rate:.2}%)");
    if matched != queries {
        bail!(Mismatch(format!("{} of {queries} queries differ", queries - matched)));
    }
    Ok(())
}

struct Sweep {
    kinds: Vec<DatasetKind>,
    ns: Vec<usize>,
    ms: Vec<usize>,
    bound: u64,
    queries: usize,
}

struct Cell {
    index: usize,
    kind: DatasetKind,
    n: usize,
    m: usize,
}

fn bench_cell(g: &Global, sweep: &Sweep, cell: &Cell) -> anyhow::Result<Vec<SessionMetrics>> {
    let seed = g.seed().wrapping_add(cell.index as u64);
    let spec = DatasetSpec::synthetic(cell.kind, cell.n, cell.m, seed).with_bound(sweep.bound);
    let db = generate(&spec)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ QUERY_STREAM);
    let mut rows = Vec::with_capacity(sweep.queries);
    for i in 0..sweep.queries {
        let q = random_query(&mut rng, db.m, db.bound);
        let res = local_query(&g.local_config(seed.wrapping_add(i as u64))?, &db, &q)?;
        let k = res.k();
        let meter = &res.run.meters[0];
        let expect = secext_formula(cell.n, cell.m, k);
        if meter.secext != expect {
            bail!(Error::Protocol(format!(
                "{} n={} m={}: metered {} comparisons, expected {expect}",
                cell.kind, cell.n, cell.m, meter.secext
            )));
        }
        let session = (cell.index * sweep.queries + i) as u32;
        rows.push(meter_report(session, meter, cell.n, cell.m, k, res.wall)?);
    }
    Ok(rows)
}

fn cmd_bench(g: &Global, sweep: &Sweep, out: Option<&Path>, parallel: bool) -> anyhow::Result<()> {
    if sweep.kinds.is_empty() || sweep.ns.is_empty() || sweep.ms.is_empty() || sweep.queries == 0 {
        bail!(Error::InvalidArgument("empty sweep".into()));
    }
    if sweep.ns.contains(&0) || sweep.ms.contains(&0) {
        bail!(Error::InvalidArgument("n and m must be positive".into()));
    }
    if sweep.kinds.contains(&DatasetKind::Csv) {
        bail!(Error::InvalidArgument("bench sweeps synthetic kinds only".into()));
    }
    g.local_config(0)?;
    let mut cells = Vec::new();
    for &kind in &sweep.kinds {
        for &n in &sweep.ns {
            for &m in &sweep.ms {
                let index = cells.len();
                cells.push(Cell { index, kind, n, m });
            }
        }
    }
    let results: Vec<anyhow::Result<Vec<SessionMetrics>>> = if parallel {
        thread::scope(|s| {
            let handles: Vec<_> = cells
                .iter()
                .map(|c| s.spawn(move || bench_cell(g, sweep, c)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("bench cell panicked"))
                .collect()
        })
    } else {
        cells.iter().map(|c| bench_cell(g, sweep, c)).collect()
    };
    let mut w = open_out(out)?;
    writeln!(w, "dataset,{CSV_HEADER}")?;
    for (cell, rows) in cells.iter().zip(results) {
        for r in rows? {
            writeln!(w, "{},{}", cell.kind, r.csv_row())?;
        }
    }
    w.flush()?;
    Ok(())
}
