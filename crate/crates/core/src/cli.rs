//! Command-line front end.
//!
//! Every command reads and writes only the files named by its flags.
//! Sampling commands require `--seed` and echo it on stderr. Usage errors
//! exit with 2, data and provider errors with 1.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::corpus::{load_corpus, Track};
use crate::densevec::wire::PROVIDER_ADDR_ENV;
use crate::densevec::{CachedProvider, MockEmbedder, MockScorer, Scorer, WireClient};
use crate::eval::{
    dataset_stats, evaluate, make_test_samples, make_test_samples_for_requests, test_sets_to_pairs,
    DEFAULT_K, DEFAULT_SAMPLES,
};
use crate::gpl::{
    label_mined, mine_pairs, training_keys, MinedNegatives, Retriever, DEFAULT_PER_RETRIEVER_K,
    DEFAULT_TOTAL_NEGATIVES,
};
use crate::jsonl::{read_jsonl, write_jsonl};
use crate::pairgen::{generate_pairs, RequestPair};
use crate::ranker::{DescriptorIndex, Encoder, Hit};

/// Where vectors or scores come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Mock,
    TfIdf,
    /// Wire provider; `None` defers to `DR_PROVIDER_ADDR`.
    Wire(Option<String>),
}

impl FromStr for ProviderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(ProviderSpec::Mock),
            "tfidf" | "tf-idf" => Ok(ProviderSpec::TfIdf),
            "wire" => Ok(ProviderSpec::Wire(None)),
            _ => {
                let addr = s.strip_prefix("wire:").unwrap_or(s);
                if addr.starts_with("tcp:") || addr.starts_with("stdio:") {
                    Ok(ProviderSpec::Wire(Some(addr.to_owned())))
                } else {
                    Err(format!(
                        "unknown provider {s:?} (expected mock, tfidf, wire, wire:tcp:HOST:PORT or wire:stdio:CMD)"
                    ))
                }
            }
        }
    }
}

impl ProviderSpec {
    fn wire_addr(addr: &Option<String>) -> Result<String> {
        match addr {
            Some(a) => Ok(a.clone()),
            None => std::env::var(PROVIDER_ADDR_ENV)
                .map_err(|_| anyhow!("wire provider selected but {PROVIDER_ADDR_ENV} is not set")),
        }
    }

    pub fn encoder(&self) -> Result<Encoder> {
        Ok(match self {
            ProviderSpec::TfIdf => Encoder::TfIdf,
            ProviderSpec::Mock => Encoder::dense(CachedProvider::new(MockEmbedder::new())),
            ProviderSpec::Wire(addr) => {
                let addr = Self::wire_addr(addr)?;
                let embedder = WireClient::connect(&addr)?.into_embedder()?;
                Encoder::dense(CachedProvider::new(embedder))
            }
        })
    }

    pub fn scorer(&self) -> Result<Box<dyn Scorer>> {
        Ok(match self {
            ProviderSpec::Mock => Box::new(MockScorer),
            ProviderSpec::TfIdf => bail!("tfidf cannot act as a scorer"),
            ProviderSpec::Wire(addr) => Box::new(WireClient::connect(&Self::wire_addr(addr)?)?),
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "descrank", version, about = "Descriptor-set retrieval toolkit")]
pub struct Cli {
    /// Optional key=value file supplying defaults for flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a corpus and optionally write its canonical form.
    Ingest {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate request/descriptor pairs from caption sentences.
    Pairs {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Request, key and shared-word statistics.
    Stats {
        #[command(flatten)]
        input: PairsInput,
        /// Summarize resampled test sets built from --corpus instead of pairs.
        #[arg(long)]
        test_samples: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encode the unique descriptor keys and save the index.
    Index {
        #[command(flatten)]
        input: PairsInput,
        #[arg(long)]
        encoder: Option<ProviderSpec>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank requests against a saved index.
    Rank {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        encoder: Option<ProviderSpec>,
        #[arg(long)]
        request: Vec<String>,
        /// JSONL pairs file whose requests are ranked.
        #[arg(long)]
        requests: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mine hard negatives for every pair.
    Mine {
        #[command(flatten)]
        input: PairsInput,
        #[command(flatten)]
        mining: MiningArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Attach teacher margins to mined negatives.
    Label {
        #[arg(long)]
        negatives: Option<PathBuf>,
        #[arg(long)]
        scorer: Option<ProviderSpec>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mine and label in one pass.
    Triples {
        #[command(flatten)]
        input: PairsInput,
        #[command(flatten)]
        mining: MiningArgs,
        #[arg(long)]
        scorer: Option<ProviderSpec>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recall@k over resampled test sets.
    Eval {
        #[arg(long)]
        encoder: Option<ProviderSpec>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Pairs-schema file of requests (e.g. rephrased captions) to use
        /// instead of caption sentences.
        #[arg(long)]
        requests: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        /// Write the sampled test sets as pairs JSONL.
        #[arg(long)]
        samples_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Pairs come from a file, or are generated from a corpus and seed.
#[derive(Debug, Args)]
struct PairsInput {
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct MiningArgs {
    /// Repeat for several retrievers.
    #[arg(long)]
    retriever: Vec<ProviderSpec>,
    #[arg(long)]
    per_retriever_k: Option<usize>,
    #[arg(long)]
    total: Option<usize>,
}

/// Flag defaults read from a `key = value` file. `#` starts a comment.
#[derive(Debug, Default)]
pub struct Config(HashMap<String, String>);

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key=value", i + 1))?;
            map.insert(k.trim().replace('_', "-"), v.trim().to_owned());
        }
        Ok(Config(map))
    }

    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
        Self::parse(&text).with_context(|| format!("{}", path.display()))
    }

    /// The flag if given, otherwise the config entry.
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key {key:?}: {e}")),
        }
    }

    fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.pick(flag, key)?
            .ok_or_else(|| anyhow!("missing required --{key}"))
    }
}

fn print_seed(seed: u64) {
    eprintln!("seed: {seed}");
}

fn load_tracks(cfg: &Config, corpus: Option<PathBuf>) -> Result<Vec<Track>> {
    let path: PathBuf = cfg.require(corpus, "corpus")?;
    Ok(load_corpus(&path)?)
}

fn load_pairs(cfg: &Config, input: PairsInput) -> Result<Vec<RequestPair>> {
    if let Some(path) = cfg.pick(input.pairs, "pairs")? {
        return Ok(read_jsonl(path)?);
    }
    let tracks = load_tracks(cfg, input.corpus)?;
    let seed = cfg.require(input.seed, "seed")?;
    print_seed(seed);
    Ok(generate_pairs(&tracks, seed))
}

fn write_json<T: Serialize>(out: Option<PathBuf>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(&path, format!("{text}\n")).with_context(|| format!("{}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn retrievers(cfg: &Config, specs: Vec<ProviderSpec>, keys: &[String]) -> Result<Vec<Retriever>> {
    let specs = if specs.is_empty() {
        vec![cfg.require(None::<ProviderSpec>, "retriever")?]
    } else {
        specs
    };
    specs
        .iter()
        .map(|s| Ok(Retriever::build(keys.to_vec(), s.encoder()?)?))
        .collect()
}

#[derive(Serialize)]
struct RankRecord<'a> {
    request: &'a str,
    hits: Vec<HitRecord<'a>>,
}

#[derive(Serialize)]
struct HitRecord<'a> {
    key: &'a str,
    score: f64,
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Ingest { corpus, out } => {
            let tracks = load_tracks(&cfg, corpus)?;
            let keys: std::collections::HashSet<&str> =
                tracks.iter().map(|t| t.descriptor_set().key()).collect();
            eprintln!("{} tracks, {} unique descriptor keys", tracks.len(), keys.len());
            if let Some(out) = cfg.pick(out, "out")? {
                let canonical: Vec<Track> = tracks
                    .iter()
                    .map(|t| Track::new(t.id.clone(), t.caption.clone(), t.descriptor_set().items().to_vec()))
                    .collect::<Result<_, _>>()?;
                write_jsonl(out, &canonical)?;
            }
        }
        Command::Pairs { corpus, seed, out } => {
            let tracks = load_tracks(&cfg, corpus)?;
            let seed = cfg.require(seed, "seed")?;
            print_seed(seed);
            let out: PathBuf = cfg.require(out, "out")?;
            let pairs = generate_pairs(&tracks, seed);
            write_jsonl(&out, &pairs)?;
            eprintln!("{} pairs from {} tracks", pairs.len(), tracks.len());
        }
        Command::Stats {
            input,
            test_samples,
            out,
        } => {
            let pairs = match cfg.pick(test_samples, "test-samples")? {
                Some(n) => {
                    let tracks = load_tracks(&cfg, input.corpus)?;
                    let seed = cfg.require(input.seed, "seed")?;
                    print_seed(seed);
                    test_sets_to_pairs(&make_test_samples(&tracks, n, seed))
                }
                None => load_pairs(&cfg, input)?,
            };
            write_json(cfg.pick(out, "out")?, &dataset_stats(&pairs)?)?;
        }
        Command::Index { input, encoder, out } => {
            let pairs = load_pairs(&cfg, input)?;
            let mut encoder = cfg.require(encoder, "encoder")?.encoder()?;
            let out: PathBuf = cfg.require(out, "out")?;
            let index = DescriptorIndex::from_keys(training_keys(&pairs), &mut encoder)?;
            index.save(&out)?;
            eprintln!("{} unique keys indexed", index.len());
        }
        Command::Rank {
            index,
            encoder,
            request,
            requests,
            k,
            out,
        } => {
            let index = DescriptorIndex::load(cfg.require::<PathBuf>(index, "index")?)?;
            let mut encoder = cfg.require(encoder, "encoder")?.encoder()?;
            let k = cfg.pick(k, "k")?.unwrap_or(DEFAULT_K);
            let mut texts = request;
            if let Some(path) = cfg.pick(requests, "requests")? {
                let pairs: Vec<RequestPair> = read_jsonl(path)?;
                texts.extend(pairs.into_iter().map(|p| p.request));
            }
            if texts.is_empty() {
                bail!("nothing to rank: pass --request or --requests");
            }
            let ranked = index.rank_batch(&texts, k, &mut encoder)?;
            let records: Vec<RankRecord> = texts
                .iter()
                .zip(&ranked)
                .map(|(r, hits)| RankRecord {
                    request: r,
                    hits: hits
                        .iter()
                        .map(|Hit { key, score }| HitRecord { key, score: *score })
                        .collect(),
                })
                .collect();
            match cfg.pick::<PathBuf>(out, "out")? {
                Some(path) => write_jsonl(path, &records)?,
                None => print!("{}", crate::jsonl::to_jsonl_string(&records)),
            }
        }
        Command::Mine { input, mining, out } => {
            let pairs = load_pairs(&cfg, input)?;
            let out: PathBuf = cfg.require(out, "out")?;
            let mut rs = retrievers(&cfg, mining.retriever, &training_keys(&pairs))?;
            let per_k = cfg.pick(mining.per_retriever_k, "per-retriever-k")?.unwrap_or(DEFAULT_PER_RETRIEVER_K);
            let total = cfg.pick(mining.total, "total")?.unwrap_or(DEFAULT_TOTAL_NEGATIVES);
            let mined = mine_pairs(&pairs, &mut rs, per_k, total)?;
            write_jsonl(out, &mined)?;
        }
        Command::Label { negatives, scorer, out } => {
            let mined: Vec<MinedNegatives> = read_jsonl(cfg.require::<PathBuf>(negatives, "negatives")?)?;
            let mut scorer = cfg.require(scorer, "scorer")?.scorer()?;
            let out: PathBuf = cfg.require(out, "out")?;
            let export = label_mined(&mined, scorer.as_mut())?;
            write_jsonl(out, &export.triples)?;
            eprintln!("{} triples, {} pairs skipped", export.triples.len(), export.skipped);
        }
        Command::Triples {
            input,
            mining,
            scorer,
            out,
        } => {
            let pairs = load_pairs(&cfg, input)?;
            let out: PathBuf = cfg.require(out, "out")?;
            let mut scorer = cfg.require(scorer, "scorer")?.scorer()?;
            let mut rs = retrievers(&cfg, mining.retriever, &training_keys(&pairs))?;
            let per_k = cfg.pick(mining.per_retriever_k, "per-retriever-k")?.unwrap_or(DEFAULT_PER_RETRIEVER_K);
            let total = cfg.pick(mining.total, "total")?.unwrap_or(DEFAULT_TOTAL_NEGATIVES);
            let mined = mine_pairs(&pairs, &mut rs, per_k, total)?;
            let export = label_mined(&mined, scorer.as_mut())?;
            write_jsonl(out, &export.triples)?;
            eprintln!("{} triples, {} pairs skipped", export.triples.len(), export.skipped);
        }
        Command::Eval {
            encoder,
            corpus,
            requests,
            seed,
            k,
            samples,
            samples_out,
            out,
        } => {
            let spec = cfg.require(encoder, "encoder")?;
            let tracks = load_tracks(&cfg, corpus)?;
            let seed = cfg.require(seed, "seed")?;
            print_seed(seed);
            let k = cfg.pick(k, "k")?.unwrap_or(DEFAULT_K);
            let n = cfg.pick(samples, "samples")?.unwrap_or(DEFAULT_SAMPLES);
            let sets = match cfg.pick::<PathBuf>(requests, "requests")? {
                Some(path) => {
                    let reqs: Vec<RequestPair> = read_jsonl(path)?;
                    make_test_samples_for_requests(&tracks, &reqs, n, seed)?
                }
                None => make_test_samples(&tracks, n, seed),
            };
            if let Some(path) = cfg.pick::<PathBuf>(samples_out, "samples-out")? {
                write_jsonl(path, &test_sets_to_pairs(&sets))?;
            }
            let report = evaluate(&mut spec.encoder()?, &sets, k)?;
            let label = match &spec {
                ProviderSpec::Mock => "mock".to_owned(),
                ProviderSpec::TfIdf => "tfidf".to_owned(),
                ProviderSpec::Wire(_) => "wire".to_owned(),
            };
            eprint!("{}", report.to_table(&label));
            write_json(cfg.pick(out, "out")?, &report)?;
        }
    }
    Ok(())
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            1
        }
    }
}
