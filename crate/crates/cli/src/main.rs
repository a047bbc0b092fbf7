use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coinai_core::chain::{load_chain, save_chain, validate_chain, Block, Chain, ChainParams, Mempool};
use coinai_core::grammar::{
    bundled_grammar, derive_from_hash, parse_architecture, parse_grammar, validate_grammar, DerivationLimits, Grammar,
};
use coinai_core::mining::{
    mine_attempt, validate_candidate, ArchRules, CandidateBlock, MinerConfig, MiningContext, NoCandidate, NonceMode,
    ThresholdSchedule,
};
use coinai_core::model::{load_problem, stripes_problem, two_spirals_problem, write_problem, xor_problem, Problem};
use coinai_core::sim::{self, MetricsLog};
use coinai_core::storage::{load_keeper_stores, save_keeper_stores};
use coinai_core::Hash512;
use serde_json::json;

#[derive(Parser)]
#[command(name = "coinai", version, about = "Proof-of-useful-work chain simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Derive the architecture sentence for a block hash.
    Derive {
        /// BNF file, or `bundled`.
        #[arg(long, default_value = "bundled")]
        grammar: String,
        /// 128 hex digits.
        #[arg(long, conflicts_with = "int")]
        hash: Option<Hash512>,
        /// Small integer seed instead of a hash.
        #[arg(long)]
        int: Option<u128>,
        /// Print every expansion step.
        #[arg(long)]
        trace: bool,
    },
    /// Run one mining attempt on top of a chain tip.
    Mine {
        #[arg(long, default_value = "bundled")]
        grammar: String,
        /// Problem path prefix, e.g. `problems/two_spirals`.
        #[arg(long)]
        problem: PathBuf,
        /// Expected tip hash; must match the chain's tip.
        #[arg(long)]
        tip: Hash512,
        #[arg(long)]
        seed: u64,
        /// Chain file; an empty chain when omitted.
        #[arg(long)]
        chain: Option<PathBuf>,
        #[arg(long, default_value = "cli")]
        miner: String,
        /// Submission tick; defaults to one past the tip's timestamp.
        #[arg(long)]
        tick: Option<u64>,
        /// Acceptance bar; defaults to the default schedule at `tick`.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        epochs: Option<u32>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        tx_combination: bool,
        /// Where to write the candidate JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a candidate written by `mine`.
    Validate {
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long, default_value = "bundled")]
        grammar: String,
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        chain: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Run a scenario and write its artifacts.
    RunSim {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        ticks: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Re-validate every appended block afterwards.
        #[arg(long)]
        verify: bool,
    },
    /// Check keeper stores written by `run-sim` against their digests.
    Audit {
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Summarize a run directory.
    Report {
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Write the bundled problem CSVs.
    GenProblems {
        #[arg(long, default_value = "problems")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

enum Failure {
    Rejected(String),
    Config(String),
}

type Outcome = Result<(), Failure>;

fn config<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Config(format!("{context}: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Derive {
            grammar,
            hash,
            int,
            trace,
        } => derive_cmd(&grammar, hash, int, trace),
        Cmd::Mine {
            grammar,
            problem,
            tip,
            seed,
            chain,
            miner,
            tick,
            threshold,
            epochs,
            batch_size,
            tx_combination,
            out,
        } => {
            let opts = MineOpts {
                miner,
                tick,
                threshold,
                epochs,
                batch_size,
                tx_combination,
                out,
            };
            mine_cmd(&grammar, &problem, tip, seed, chain.as_deref(), opts)
        }
        Cmd::Validate {
            candidate,
            grammar,
            problem,
            chain,
            threshold,
        } => validate_cmd(&candidate, &grammar, &problem, chain.as_deref(), threshold),
        Cmd::RunSim {
            scenario,
            seed,
            ticks,
            out_dir,
            verify,
        } => run_sim_cmd(&scenario, seed, ticks, &out_dir, verify),
        Cmd::Audit { out_dir } => audit_cmd(&out_dir),
        Cmd::Report { out_dir } => report_cmd(&out_dir),
        Cmd::GenProblems { out_dir, seed } => gen_problems_cmd(&out_dir, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Rejected(msg)) => {
            eprintln!("rejected: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_grammar(arg: &str) -> Result<Grammar, Failure> {
    if arg == "bundled" {
        return Ok(bundled_grammar());
    }
    let text = fs::read_to_string(arg).map_err(config(arg))?;
    let g = parse_grammar(&text).map_err(config(arg))?;
    validate_grammar(&g).map_err(|d| Failure::Config(format!("{arg}: {d:?}")))?;
    Ok(g)
}

fn load_problem_arg(prefix: &Path) -> Result<Problem, Failure> {
    let id = prefix
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Failure::Config(format!("{}: not a problem path", prefix.display())))?;
    let dir = prefix.parent().unwrap_or(Path::new("."));
    load_problem(dir, id).map_err(config(prefix.display()))
}

fn load_chain_arg(path: Option<&Path>) -> Result<Chain, Failure> {
    match path {
        None => Ok(Chain::new(ChainParams::default(), BTreeMap::new())),
        Some(p) => {
            let chain = load_chain(p).map_err(config(p.display()))?;
            validate_chain(&chain).map_err(config(p.display()))?;
            Ok(chain)
        }
    }
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string(v).expect("serializable"));
}

fn derive_cmd(grammar: &str, hash: Option<Hash512>, int: Option<u128>, trace: bool) -> Outcome {
    let g = load_grammar(grammar)?;
    let hash = match (hash, int) {
        (Some(h), _) => h,
        (None, Some(n)) => {
            let mut b = [0u8; 64];
            b[48..].copy_from_slice(&n.to_be_bytes());
            Hash512(b)
        }
        (None, None) => Block::genesis().hash(),
    };
    let d = derive_from_hash(&g, &hash, &DerivationLimits::default()).map_err(|e| Failure::Rejected(e.to_string()))?;
    if trace {
        for (i, s) in d.trace.steps.iter().enumerate() {
            let reset = if s.reset { " reset" } else { "" };
            println!("{i:>4} <{}> alt {} m={}{reset}", s.nonterminal, s.alternative, s.m);
        }
    }
    let spec = parse_architecture(&d.sentence, &g).ok();
    print_json(&json!({
        "hash": hash,
        "sentence": String::from(d.sentence),
        "resets": d.trace.resets,
        "spec": spec,
    }));
    Ok(())
}

struct MineOpts {
    miner: String,
    tick: Option<u64>,
    threshold: Option<f64>,
    epochs: Option<u32>,
    batch_size: Option<usize>,
    tx_combination: bool,
    out: Option<PathBuf>,
}

fn mine_cmd(grammar: &str, problem: &Path, tip: Hash512, seed: u64, chain: Option<&Path>, o: MineOpts) -> Outcome {
    let g = load_grammar(grammar)?;
    let problem = load_problem_arg(problem)?;
    let chain = load_chain_arg(chain)?;
    if chain.tip_hash() != tip {
        return Err(Failure::Config(format!(
            "--tip {} does not match chain tip {}",
            tip.short(),
            chain.tip_hash().short()
        )));
    }
    let tick = o.tick.unwrap_or(chain.tip().timestamp + 1);
    let threshold = o
        .threshold
        .unwrap_or_else(|| ThresholdSchedule::default().current(tick, chain.tip().timestamp));
    let mut cfg = MinerConfig::default();
    if let Some(e) = o.epochs {
        cfg.train_config.epochs = e;
    }
    if let Some(b) = o.batch_size {
        cfg.train_config.batch_size = b;
    }
    if o.tx_combination {
        cfg.nonce_mode = NonceMode::TxCombination;
    }
    let mempool = Mempool::new();
    let rules = ArchRules::default();
    let ctx = MiningContext {
        miner: &o.miner,
        chain: &chain,
        mempool: &mempool,
        grammar: &g,
        problem: &problem,
        rules: &rules,
    };
    let c = mine_attempt(&ctx, &cfg, seed, threshold, tick).map_err(|e| match e {
        NoCandidate::BadTrainConfig(_) => Failure::Config(e.to_string()),
        _ => Failure::Rejected(e.to_string()),
    })?;
    print_json(&json!({
        "hash": c.block.hash(),
        "sentence": String::from(c.derivation_sentence.clone()),
        "score": c.block.reported_score,
        "threshold": threshold,
        "height": c.block.height,
        "nonce": c.block.nonce,
        "model_digest": c.block.model_digest,
    }));
    if let Some(out) = o.out {
        let text = serde_json::to_string_pretty(&c).expect("serializable");
        fs::write(&out, text).map_err(config(out.display()))?;
    }
    Ok(())
}

fn validate_cmd(candidate: &Path, grammar: &str, problem: &Path, chain: Option<&Path>, threshold: Option<f64>) -> Outcome {
    let text = fs::read_to_string(candidate).map_err(config(candidate.display()))?;
    let c: CandidateBlock = serde_json::from_str(&text).map_err(config(candidate.display()))?;
    let g = load_grammar(grammar)?;
    let problem = load_problem_arg(problem)?;
    let chain = load_chain_arg(chain)?;
    // A standalone node has no mempool; the candidate's own transactions
    // stand in for it.
    let mut mempool = Mempool::new();
    for tx in &c.block.transactions {
        let _ = mempool.submit(tx.clone(), |id| chain.contains_tx(id));
    }
    let threshold =
        threshold.unwrap_or_else(|| ThresholdSchedule::default().current(c.submitted_at.max(chain.tip().timestamp), chain.tip().timestamp));
    let report = validate_candidate(&c, &chain, &mempool, &g, &problem, &ArchRules::default(), threshold);
    print_json(&report);
    match report.failed_check() {
        None => Ok(()),
        Some(check) => Err(Failure::Rejected(format!("check {} ({check})", check.number()))),
    }
}

fn run_sim_cmd(scenario: &Path, seed: Option<u64>, ticks: Option<u64>, out_dir: &Path, verify: bool) -> Outcome {
    let mut sc = sim::load_scenario(scenario).map_err(config(scenario.display()))?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    if let Some(t) = ticks {
        sc.ticks = t;
    }
    let out = sim::run(&sc);
    fs::create_dir_all(out_dir).map_err(config(out_dir.display()))?;
    let write = |name: &str, bytes: &[u8]| fs::write(out_dir.join(name), bytes).map_err(config(name));
    write("metrics.csv", out.metrics.to_csv().as_bytes())?;
    save_chain(&out.chain, &out_dir.join("chain.bin")).map_err(config("chain.bin"))?;
    write(
        "blocks.json",
        serde_json::to_string_pretty(&out.records).expect("serializable").as_bytes(),
    )?;
    let events: String = out
        .events
        .iter()
        .map(|(tick, e)| {
            let mut v = serde_json::to_value(e).expect("serializable");
            v["tick"] = json!(tick);
            format!("{v}\n")
        })
        .collect();
    write("events.jsonl", events.as_bytes())?;
    let summary = sim::report(&out.metrics, Some(out.chain.ledger()));
    let text = summary.map(|s| s.to_string()).unwrap_or_else(|| "empty run\n".into());
    write("report.txt", text.as_bytes())?;
    let stores = out_dir.join("keepers");
    if stores.exists() {
        fs::remove_dir_all(&stores).map_err(config(stores.display()))?;
    }
    save_keeper_stores(&stores, &out.storage).map_err(config(stores.display()))?;
    print!("{text}");
    println!("tip {}", out.chain.tip_hash());
    if verify {
        sim::replay_run(&sc, &out).map_err(|e| Failure::Rejected(e.to_string()))?;
        println!("replay ok: {} blocks", out.records.len());
    }
    Ok(())
}

fn audit_cmd(out_dir: &Path) -> Outcome {
    let dir = out_dir.join("keepers");
    let stores = load_keeper_stores(&dir).map_err(config(dir.display()))?;
    let mut failed = 0;
    let mut held: BTreeMap<Hash512, usize> = BTreeMap::new();
    for (keeper, objects) in &stores {
        for (id, bytes) in objects {
            if Hash512::digest(bytes) == *id {
                *held.entry(*id).or_default() += 1;
            } else {
                failed += 1;
                println!("{keeper} {} tampered", id.short());
            }
        }
    }
    let chain_path = out_dir.join("chain.bin");
    if chain_path.exists() {
        let chain = load_chain(&chain_path).map_err(config(chain_path.display()))?;
        if let Err(d) = validate_chain(&chain) {
            failed += 1;
            println!("chain {d}");
        }
        for b in &chain.blocks()[1..] {
            if !held.contains_key(&b.model_digest) {
                failed += 1;
                println!("block {} model {} has no verified copy", b.height, b.model_digest.short());
            }
        }
    }
    println!(
        "{} keepers, {} objects with a verified copy, {failed} failures",
        stores.len(),
        held.len()
    );
    if failed > 0 {
        return Err(Failure::Rejected(format!("{failed} audit failures")));
    }
    Ok(())
}

fn report_cmd(out_dir: &Path) -> Outcome {
    let path = out_dir.join("metrics.csv");
    let text = fs::read_to_string(&path).map_err(config(path.display()))?;
    let metrics = MetricsLog::from_csv(&text).map_err(config(path.display()))?;
    let chain_path = out_dir.join("chain.bin");
    let chain = if chain_path.exists() {
        Some(load_chain(&chain_path).map_err(config(chain_path.display()))?)
    } else {
        None
    };
    let summary = sim::report(&metrics, chain.as_ref().map(|c| c.ledger()))
        .ok_or_else(|| Failure::Config(format!("{}: no rows", path.display())))?;
    print!("{summary}");
    Ok(())
}

fn gen_problems_cmd(out_dir: &Path, seed: u64) -> Outcome {
    fs::create_dir_all(out_dir).map_err(config(out_dir.display()))?;
    for p in [xor_problem(), two_spirals_problem(seed), stripes_problem(seed)] {
        write_problem(out_dir, &p).map_err(config(&p.id))?;
        println!("{} train {} valid {}", p.id, p.train.len(), p.validation.len());
    }
    Ok(())
}
