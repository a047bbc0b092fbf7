use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{block_hash, select_from, Block, Chain, Mempool, SelectionPolicy, Transaction};
use crate::grammar::{derive_from_hash, parse_architecture, Grammar, Sentence};
use crate::model::{evaluate, serialize, Dataset, Network, Problem, TrainError, Trainer};
use crate::Hash512;

use super::{ArchRules, CandidateBlock, MinerConfig, NoCandidate, NonceMode};

/// Everything a miner reads while building a candidate.
#[derive(Clone, Copy)]
pub struct MiningContext<'a> {
    pub miner: &'a str,
    pub chain: &'a Chain,
    pub mempool: &'a Mempool,
    pub grammar: &'a Grammar,
    pub problem: &'a Problem,
    pub rules: &'a ArchRules,
}

/// Keeps transactions in order while their senders can pay, up to `n`.
fn affordable(ordered: Vec<Transaction>, chain: &Chain, n: usize) -> Vec<Transaction> {
    let mut spent: BTreeMap<&str, u64> = BTreeMap::new();
    let mut out = Vec::new();
    for tx in &ordered {
        if out.len() == n {
            break;
        }
        let Some(debit) = tx.debit() else { continue };
        let used = spent.get(tx.sender.as_str()).copied().unwrap_or(0);
        if let Some(total) = used.checked_add(debit) {
            if total <= chain.ledger().balance(&tx.sender) {
                spent.insert(&tx.sender, total);
                out.push(tx.clone());
            }
        }
    }
    out
}

/// A candidate under construction: architecture fixed, model training.
#[derive(Debug, Clone)]
pub struct MiningJob {
    miner: String,
    prev_hash: Hash512,
    height: u64,
    transactions: Vec<Transaction>,
    nonce: u64,
    hash: Hash512,
    sentence: Sentence,
    net: Network,
    trainer: Trainer,
    problem_id: String,
    arch_tries: u32,
}

impl MiningJob {
    /// Selects transactions and a nonce, derives the architecture, and
    /// instantiates the network, retrying on infeasible derivations.
    pub fn prepare(ctx: &MiningContext, cfg: &MinerConfig, seed: u64) -> Result<MiningJob, NoCandidate> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = ctx.chain.params().max_transactions;
        let pending: Vec<&Transaction> = ctx.mempool.iter().collect();
        let ordered = select_from(pending.clone(), cfg.tx_policy, usize::MAX);
        let base = affordable(ordered, ctx.chain, n);
        if cfg.nonce_mode == NonceMode::TxCombination && base.is_empty() {
            return Err(NoCandidate::EmptyMempoolWhenRequired);
        }
        let prev_hash = ctx.chain.tip_hash();
        let tries = cfg.max_arch_retries.max(1);
        for attempt in 0..tries {
            let (transactions, nonce) = match cfg.nonce_mode {
                NonceMode::FreeNonce => (base.clone(), rng.gen::<u64>()),
                NonceMode::TxCombination if attempt == 0 => (base.clone(), 0),
                NonceMode::TxCombination => {
                    let k = rng.gen_range(1..=n.min(base.len()) as u64) as usize;
                    let policy = SelectionPolicy::Random { seed: rng.gen() };
                    let drawn = select_from(pending.clone(), policy, usize::MAX);
                    (affordable(drawn, ctx.chain, k), 0)
                }
            };
            let hash = block_hash(&prev_hash, &transactions, nonce);
            let net_seed: u64 = rng.gen();
            let Ok(derivation) = derive_from_hash(ctx.grammar, &hash, &ctx.rules.derivation) else {
                continue;
            };
            let Ok(spec) = parse_architecture(&derivation.sentence, ctx.grammar) else {
                continue;
            };
            let Ok(net) = Network::instantiate(
                &spec,
                ctx.problem.input_width(),
                ctx.problem.num_classes(),
                net_seed,
                &ctx.rules.resources,
            ) else {
                continue;
            };
            let net = net.with_sentence(derivation.sentence.clone());
            let trainer = Trainer::new(&net, &ctx.problem.train, &cfg.train_config)
                .map_err(|e| NoCandidate::BadTrainConfig(e.to_string()))?;
            return Ok(MiningJob {
                miner: ctx.miner.to_string(),
                prev_hash,
                height: ctx.chain.height() + 1,
                transactions,
                nonce,
                hash,
                sentence: derivation.sentence,
                net,
                trainer,
                problem_id: ctx.problem.id.clone(),
                arch_tries: attempt + 1,
            });
        }
        Err(NoCandidate::InfeasibleExhausted { attempts: tries })
    }

    pub fn hash(&self) -> &Hash512 {
        &self.hash
    }

    pub fn prev_hash(&self) -> &Hash512 {
        &self.prev_hash
    }

    pub fn sentence(&self) -> &Sentence {
        &self.sentence
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn arch_tries(&self) -> u32 {
        self.arch_tries
    }

    pub fn is_trained(&self) -> bool {
        self.trainer.is_done()
    }

    /// Trains for at most `epochs` more epochs.
    pub fn train_epochs(&mut self, data: &Dataset, epochs: u32) -> Result<u32, NoCandidate> {
        self.trainer
            .run_epochs(&mut self.net, data, epochs)
            .map_err(|e| match e {
                TrainError::NumericalDivergence { .. } => NoCandidate::Divergence,
                other => NoCandidate::BadTrainConfig(other.to_string()),
            })
    }

    /// Scores the model and packages a candidate if it clears `threshold`.
    pub fn finish(self, problem: &Problem, threshold: f64, tick: u64) -> Result<CandidateBlock, NoCandidate> {
        let score = evaluate(&self.net, &problem.validation);
        if score < threshold {
            return Err(NoCandidate::BelowThreshold { score, threshold });
        }
        let blob = serialize(&self.net);
        let block = Block {
            height: self.height,
            prev_hash: self.prev_hash,
            transactions: self.transactions,
            nonce: self.nonce,
            miner: self.miner,
            model_digest: blob.digest(),
            reported_score: score,
            problem_id: self.problem_id,
            timestamp: tick,
        };
        Ok(CandidateBlock {
            block,
            blob,
            derivation_sentence: self.sentence,
            submitted_at: tick,
        })
    }
}

/// Runs a whole attempt: prepare, train to completion, score.
pub fn mine_attempt(
    ctx: &MiningContext,
    cfg: &MinerConfig,
    seed: u64,
    threshold: f64,
    tick: u64,
) -> Result<CandidateBlock, NoCandidate> {
    let mut job = MiningJob::prepare(ctx, cfg, seed)?;
    job.train_epochs(&ctx.problem.train, u32::MAX)?;
    job.finish(ctx.problem, threshold, tick)
}
